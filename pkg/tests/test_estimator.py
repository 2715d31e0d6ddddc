import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from aslearn import SymmetricPolicy, SymmetryFitter
from aslearn.envs import crawler_transforms, triangle_transforms
from aslearn.envs.triangle import RUSTY
from aslearn.exceptions import ShapeError
from aslearn.fitting import ground_truth_multipliers
from synthetic import SymmetricMeans, compensating_batch

TRI = triangle_transforms()


def rusty_batch(n=300, seed=0):
    b = compensating_batch(SymmetricMeans(TRI, 4, 3, seed), TRI, RUSTY, n, seed, 4)
    return b.abar, b.abar_sym


class TestSymmetryFitter:
    def test_params(self):
        f = SymmetryFitter(TRI, form="mx", history_len=5)
        assert f.get_params()["history_len"] == 5
        assert clone(f).get_params()["form"] == "mx"

    def test_not_fitted(self):
        with pytest.raises(NotFittedError):
            SymmetryFitter(TRI).transform(np.zeros((1, 3)), "a")

    def test_recovers_rusty_multipliers(self):
        f = SymmetryFitter(TRI)
        for i in range(30):
            f.partial_fit(*rusty_batch(seed=i))
        truth = ground_truth_multipliers(RUSTY, f.graph_)
        assert f.n_rounds_ == 30
        # consistent fits get the full 0.05 update weight each round
        for k, m in truth.items():
            assert f.nu_.pair(k)[0] == pytest.approx(m - (m - 1) * 0.95 ** 30, rel=1e-9)

    def test_transform_matches_compensation(self):
        f = SymmetryFitter(TRI)
        for i in range(60):
            f.partial_fit(*rusty_batch(seed=i))
        # pushing limb 0 by 0.1 is matched by limb 1 at 0.2 after mirror c
        out = f.transform(np.array([[0.1, 0.0, 0.0]]), "c")
        assert out[0, 1] == pytest.approx(-0.2, rel=0.05)

    def test_fit_resets(self):
        f = SymmetryFitter(TRI)
        f.partial_fit(*rusty_batch())
        f.partial_fit(*rusty_batch(seed=1))
        f.fit(*rusty_batch())
        assert f.n_rounds_ == 1

    def test_function_weights(self):
        f = SymmetryFitter(TRI).fit(*rusty_batch())
        w = f.function_weights()
        assert set(w) == {s.name for s in TRI}
        assert all(v.shape == (3,) and np.all((v > 0) & (v <= 1)) for v in w.values())

    def test_input_validation(self):
        abar, sym = rusty_batch()
        with pytest.raises(ShapeError):
            SymmetryFitter(TRI).fit(abar[:, :2], sym)
        with pytest.raises(KeyError):
            SymmetryFitter(TRI).fit(abar, {"a": sym["a"]})
        bad = dict(sym)
        bad["b"] = sym["b"][:10]
        with pytest.raises(ShapeError):
            SymmetryFitter(TRI).fit(abar, bad)
        with pytest.raises(ValueError):
            SymmetryFitter(()).fit(abar, sym)

    def test_crawler_graph(self):
        f = SymmetryFitter(crawler_transforms())
        means = SymmetricMeans(crawler_transforms(), 24, 8, 0)
        b = compensating_batch(means, crawler_transforms(), np.ones(8), 200, 0, 24)
        f.fit(b.abar, b.abar_sym)
        assert len(f.graph_.pairs) == 12
        assert np.allclose(f.nu_.pair_m, 1.0, atol=1e-9)


class TestSymmetricPolicy:
    def _small(self, **kw):
        kw.setdefault("method", "msl")
        return SymmetricPolicy(total_steps=64 * 3, hidden=(8,), seed=1,
                               ppo_overrides={"batch_steps": 64, "minibatch": 32, "epochs": 2}, **kw)

    def test_fit_predict_score(self):
        est = self._small().fit()
        assert est.result_.iterations == 3
        a = est.predict(np.zeros((5, 24)))
        assert a.shape == (5, 8)
        assert np.isfinite(est.score(episodes=2))

    def test_predict_checks(self):
        est = self._small()
        with pytest.raises(NotFittedError):
            est.predict(np.zeros((1, 24)))
        est.fit(max_iterations=1)
        with pytest.raises(ShapeError):
            est.predict(np.zeros((1, 5)))

    def test_clone_and_config(self):
        est = self._small(method="asl", scenario="builtin:A2.1", fitting=True)
        cfg = clone(est).make_config()
        assert cfg.method == "asl" and cfg.sym.fitting and cfg.ppo.batch_steps == 64
        assert cfg.scenario.name == "A2.1"

    def test_reproducible(self):
        a = self._small().fit().policy_.params
        b = self._small().fit().policy_.params
        assert np.array_equal(a, b)
