import csv
import os

import numpy as np
import pytest

from aslearn.cli import main
from aslearn.config import ExperimentConfig, dump_config, load_config, parse_config
from aslearn.envs import Crawler, builtin_scenario
from aslearn.exceptions import ConfigError, EmptyInputError
from aslearn.harness import Trainer, evaluate_policy, run_training
from aslearn.metrics import aggregate, export_metrics, plot_metrics, read_metrics, write_aggregate
from aslearn.nets import GaussianPolicy, load_checkpoint
from aslearn.ppo import PpoConfig
from aslearn.symmetry import EstimatorParams

SMALL = """aslearn-config 1
scenario = builtin:{scenario}
method = {method}
train.total_steps = {steps}
train.eval_episodes = 2
policy.hidden = 8
ppo.batch_steps = 64
ppo.minibatch = 32
ppo.epochs = 2
sym.fitting = {fitting}
fit.min_dataset = 8
"""


def small_config(method="none", scenario="A1.1", iterations=3, fitting=False, **kw):
    text = SMALL.format(scenario=scenario, method=method, steps=64 * iterations,
                        fitting=str(fitting).lower())
    return parse_config(text).replace(**kw)


class TestConfig:
    def test_defaults(self):
        cfg = ExperimentConfig()
        assert cfg.iterations == 976
        assert cfg.iterations // cfg.eval_every == 65
        assert cfg.hidden == (256, 256) and cfg.ppo == PpoConfig()

    def test_desk(self):
        cfg = ExperimentConfig().desk()
        assert cfg.total_steps == 200_000 and cfg.hidden == (64, 64) and cfg.iterations == 48

    def test_round_trip(self):
        text = SMALL.format(scenario="A2.1", method="asl", steps=640, fitting="true")
        text += "sym.w_pi.rot90 = 0.1\nsym.k_d.mirror_xz = 0.2\nsym.k_v = none\n"
        cfg = parse_config(text)
        assert cfg.sym.w_pi["rot90"] == 0.1 and cfg.sym.w_pi["mirror_yz"] == 0.05
        assert cfg.sym.k_v is None and cfg.sym.k_d == {"mirror_xz": 0.2}
        assert dump_config(parse_config(dump_config(cfg))) == dump_config(cfg)

    def test_relative_scenario(self, tmp_path):
        (tmp_path / "sc").mkdir()
        (tmp_path / "sc" / "t.scenario").write_text("aslearn-scenario 1\nenv = triangle\n")
        p = tmp_path / "run.conf"
        p.write_text("aslearn-config 1\nscenario = sc/t.scenario\n")
        cfg = load_config(p)
        assert cfg.scenario.env == "triangle"
        # a dumped copy written elsewhere still finds the scenario
        (tmp_path / "out").mkdir()
        (tmp_path / "out" / "config.txt").write_text(dump_config(cfg))
        assert load_config(tmp_path / "out" / "config.txt").scenario == cfg.scenario

    @pytest.mark.parametrize("extra", ["ppo.learning_rate = 1\n", "sym.w_x = 2\n", "seeds = a\n"])
    def test_rejects(self, extra):
        with pytest.raises((ConfigError, ValueError)):
            parse_config("aslearn-config 1\nscenario = builtin:A1.1\n" + extra)

    def test_requires_scenario(self):
        with pytest.raises(ConfigError):
            parse_config("aslearn-config 1\nmethod = asl\n")

    def test_too_few_steps(self):
        with pytest.raises(ConfigError):
            parse_config("aslearn-config 1\nscenario = builtin:A1.1\ntrain.total_steps = 100\n")

    def test_scenario_ref_follows_scenario(self):
        cfg = ExperimentConfig(scenario=builtin_scenario("A2.2"))
        assert parse_config(dump_config(cfg)).scenario == builtin_scenario("A2.2")
        moved = cfg.replace(scenario=builtin_scenario("A3.1"))
        assert parse_config(dump_config(moved)).scenario == builtin_scenario("A3.1")

    def test_stale_builtin_ref_not_dumped(self):
        cfg = ExperimentConfig(scenario=builtin_scenario("A2.1"), scenario_ref="builtin:A1.1")
        with pytest.raises(ConfigError):
            dump_config(cfg)


class _GoalRecorder:
    def __init__(self, env):
        self.env, self.goals = env, []

    def reset(self, goal=0, seed=None):
        self.goals.append(goal)
        return self.env.reset(goal=goal, seed=seed)

    def step(self, a):
        return self.env.step(a)


class TestEvaluate:
    def test_zero_policy_return(self):
        pol = GaussianPolicy(24, 8, (4,), rng=np.random.default_rng(0), out_scale=0.0)
        # 30 stalled steps at the 0.05 alive bonus each
        assert evaluate_policy(Crawler(reset_noise=0.0), pol, range(8), 16) == pytest.approx(1.5, abs=1e-12)

    def test_round_robin_and_repeatable(self):
        pol = GaussianPolicy(24, 8, (4,), rng=np.random.default_rng(1))
        env = _GoalRecorder(Crawler())
        r1 = evaluate_policy(env, pol, tuple(range(8)), 16, seed=3)
        assert sorted(env.goals) == sorted(list(range(8)) * 2)
        assert evaluate_policy(Crawler(), pol, tuple(range(8)), 16, seed=3) == r1


class TestTraining:
    def test_deterministic(self):
        a = run_training(small_config(), seed=5)
        b = run_training(small_config(), seed=5)
        assert np.array_equal(a.policy.params, b.policy.params)
        assert a.final_return == b.final_return and a.iterations == 3

    def test_seed_matters(self):
        a = run_training(small_config(), seed=1)
        b = run_training(small_config(), seed=2)
        assert not np.array_equal(a.policy.params, b.policy.params)

    def test_asl_without_fitting_keeps_estimator(self):
        t = Trainer(small_config("asl", "A2.1"), seed=0)
        init = EstimatorParams(t.graph)
        t.run()
        nu = t.fit_state.nu
        assert np.array_equal(nu.pair_m, init.pair_m) and np.array_equal(nu.pair_b, init.pair_b)
        assert np.array_equal(nu.single_b, init.single_b)

    def test_asl_fitting_moves_estimator(self):
        t = Trainer(small_config("asl", "A2.1", fitting=True), seed=0)
        t.run()
        assert not np.array_equal(t.fit_state.nu.pair_m, EstimatorParams(t.graph).pair_m)

    @pytest.mark.parametrize("method", ["msl", "psl", "asl"])
    def test_methods_run(self, method):
        res = run_training(small_config(method), seed=0)
        assert np.isfinite(res.final_return) and res.aborted_updates == 0

    def test_schedule(self):
        res = run_training(small_config(iterations=30), seed=0)
        assert [r["iteration"] for r in res.records] == [5, 10, 15, 20, 25, 30]
        evaluated = [r["iteration"] for r in res.records if r["eval_return"] is not None]
        assert evaluated == [15, 30]
        ts = [r["timestep"] for r in res.records]
        assert ts == sorted(ts) and ts[0] == 5 * 64

    def test_value_distance_recomputed(self):
        t = Trainer(small_config(), seed=0)
        batch = t.step()
        row = t.metrics_row(batch)
        per = []
        for spec in t.specs:
            d = [abs(t.value_fn(s) - t.value_fn(fs))
                 for s, fs in zip(batch.states, batch.sym_states[spec.name])]
            per.append(np.mean(d))
            assert row[f"value_distance.{spec.name}"] == pytest.approx(per[-1], rel=1e-12)
        assert row["value_distance"] == pytest.approx(np.mean(per), rel=1e-12)
        assert set(k for k in row if k.startswith("nsrr.")) == {
            f"nsrr.{s.name}" for s in t.specs if s.kind == "reflection"}

    def test_metric_columns(self):
        plain = Trainer(small_config("asl", "A2.1", iterations=5), seed=0)
        plain.run()
        assert not any(k.startswith("nu.") for k in plain.records[0])
        fitted = Trainer(small_config("asl", "A2.1", iterations=5, fitting=True), seed=0)
        fitted.run()
        row = fitted.records[0]
        assert sum(k.startswith("nu.m_") for k in row) == 12 and "target_error" in row
        clean = Trainer(small_config("asl", "A1.1", iterations=5, fitting=True), seed=0)
        clean.run()
        assert "target_error" not in clean.records[0] and "nu.m_0_2" in clean.records[0]

    def test_resume_matches_straight_run(self, tmp_path):
        cfg = small_config(iterations=10)
        straight = run_training(cfg, seed=4)
        first = Trainer(cfg, seed=4)
        first.run(tmp_path, max_iterations=5)
        second = Trainer.resume(cfg, tmp_path)
        assert second.iteration == 5
        res = second.run(tmp_path)
        assert np.array_equal(res.policy.params, straight.policy.params)
        assert res.final_return == straight.final_return
        pol, vf = load_checkpoint(tmp_path / "checkpoint.txt")
        assert np.array_equal(pol.params, straight.policy.params)

    def test_resume_rejects_foreign_state(self, tmp_path):
        import pickle
        with open(tmp_path / "train_state.pkl", "wb") as fh:
            pickle.dump({"x": 1}, fh)
        with pytest.raises(ValueError):
            Trainer.resume(small_config(), tmp_path)


class TestMetricsFiles:
    def test_single_record(self, tmp_path):
        p = tmp_path / "m.csv"
        export_metrics([{"iteration": 5, "timestep": 320, "eval_return": None, "value_distance": 0.25}], p)
        lines = p.read_text().splitlines()
        assert len(lines) == 2
        assert lines[0] == "metrics_version,iteration,timestep,eval_return,value_distance"
        assert lines[1] == "1,5,320,,0.25"

    def test_empty(self, tmp_path):
        with pytest.raises(EmptyInputError):
            export_metrics([], tmp_path / "m.csv")

    def test_read_back(self, tmp_path):
        p = tmp_path / "m.csv"
        export_metrics([{"iteration": 1, "timestep": 2, "eval_return": 1.0 / 3, "value_distance": 0.0}], p)
        cols, data = read_metrics(p)
        assert data[0, cols.index("eval_return")] == 1.0 / 3

    def test_rejects_other_csv(self, tmp_path):
        p = tmp_path / "x.csv"
        p.write_text("a,b\n1,2\n")
        with pytest.raises(ValueError):
            read_metrics(p)

    def _write_run(self, path, scale):
        recs = [{"iteration": i, "timestep": 64 * i, "eval_return": scale * i if i % 2 == 0 else None,
                 "value_distance": scale} for i in (1, 2, 3, 4)]
        export_metrics(recs, path)

    def test_aggregate(self, tmp_path):
        for k, scale in enumerate((1.0, 3.0)):
            (tmp_path / f"s{k}").mkdir()
            self._write_run(tmp_path / f"s{k}" / "metrics.csv", scale)
        cols, mean, std, n = aggregate([tmp_path / "s0" / "metrics.csv", tmp_path / "s1" / "metrics.csv"])
        assert n == 2
        assert mean[:, cols.index("value_distance")].tolist() == [2.0] * 4
        assert std[0, cols.index("value_distance")] == 1.0
        assert np.isnan(mean[0, cols.index("eval_return")]) and mean[1, cols.index("eval_return")] == 4.0
        out = tmp_path / "agg.csv"
        recs = write_aggregate(str(tmp_path / "s*" / "metrics.csv"), out)
        assert recs[1]["eval_return"] == 4.0 and recs[0]["runs"] == 2
        with open(out) as fh:
            assert "eval_return.std" in next(csv.reader(fh))
        with pytest.raises(EmptyInputError):
            write_aggregate(str(tmp_path / "none*.csv"))

    def test_plot(self, tmp_path):
        pytest.importorskip("matplotlib")
        t = Trainer(small_config("asl", "A2.1", iterations=15, fitting=True), seed=0)
        t.run(tmp_path)
        written = plot_metrics(tmp_path / "metrics.csv", tmp_path / "plots")
        names = sorted(os.path.basename(p) for p in written)
        assert names == ["eval_return.png", "nsrr.png", "targets.png", "value_distance.png"]
        assert all(os.path.getsize(p) > 0 for p in written)


class TestCli:
    def _config(self, tmp_path, method="none", iterations=5):
        p = tmp_path / "run.conf"
        p.write_text(SMALL.format(scenario="A1.1", method=method, steps=64 * iterations, fitting="false"))
        return p

    def test_train_eval_aggregate_plot(self, tmp_path, capsys):
        pytest.importorskip("matplotlib")
        conf = self._config(tmp_path)
        for seed in (0, 1):
            assert main(["train", "--config", str(conf), "--seed", str(seed),
                         "--out", str(tmp_path / f"run{seed}")]) == 0
        run0 = tmp_path / "run0"
        for name in ("checkpoint.txt", "metrics.csv", "config.txt", "summary.txt", "train_state.pkl"):
            assert (run0 / name).exists(), name
        assert (run0 / "summary.txt").read_text().startswith("aslearn-summary 1\n")
        assert load_config(run0 / "config.txt").total_steps == 320

        assert main(["eval", "--checkpoint", str(run0 / "checkpoint.txt"),
                     "--scenario", "builtin:A1.1", "--episodes", "2"]) == 0
        assert "mean return over 2 episodes" in capsys.readouterr().out
        assert main(["eval", "--checkpoint", str(run0 / "checkpoint.txt"),
                     "--scenario", "builtin:triangle"]) == 2

        pattern = str(tmp_path / "run*" / "metrics.csv")
        assert main(["aggregate", "--glob", pattern]) == 0
        printed = capsys.readouterr().out.splitlines()
        assert printed[0].startswith("metrics_version,iteration,timestep") and len(printed) == 2
        assert main(["aggregate", "--glob", pattern, "--out", str(tmp_path / "agg.csv")]) == 0
        assert main(["plot", "--csv", str(run0 / "metrics.csv"), "--out", str(tmp_path / "plots")]) == 0
        assert (tmp_path / "plots" / "eval_return.png").exists()

    def test_seed_list_and_resume(self, tmp_path, capsys):
        conf = self._config(tmp_path)
        conf.write_text(conf.read_text() + "seeds = 3 4\n")
        assert main(["train", "--config", str(conf), "--out", str(tmp_path / "out")]) == 0
        assert (tmp_path / "out" / "seed3" / "metrics.csv").exists()
        assert (tmp_path / "out" / "seed4" / "metrics.csv").exists()
        capsys.readouterr()
        assert main(["train", "--config", str(conf), "--seed", "3", "--out",
                     str(tmp_path / "out" / "seed3"), "--resume"]) == 0
        assert "resuming at iteration 5" in capsys.readouterr().out

    def test_bad_config(self, tmp_path):
        p = tmp_path / "bad.conf"
        p.write_text("aslearn-config 1\nscenario = builtin:A1.1\nbogus = 1\n")
        with pytest.raises(ConfigError):
            main(["train", "--config", str(p), "--out", str(tmp_path / "o")])
