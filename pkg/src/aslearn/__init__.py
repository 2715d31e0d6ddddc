"""PPO with learned symmetry losses (MSL, PSL, ASL) and symmetry fitting."""

from .config import ExperimentConfig, load_config, parse_config
from .estimator import SymmetricPolicy, SymmetryFitter
from .fitting import FitConfig, FitState, fit_round
from .harness import Trainer, evaluate_policy, run_training
from .losses import SymLossConfig
from .nets import GaussianPolicy, ValueFunction, load_checkpoint, save_checkpoint
from .ppo import PpoConfig
from .symmetry import TransformSpec, extract_relation_graph, load_transforms

__version__ = "0.1.0"

__all__ = [
    "ExperimentConfig", "FitConfig", "FitState", "GaussianPolicy", "PpoConfig", "SymLossConfig",
    "SymmetricPolicy", "SymmetryFitter", "Trainer", "TransformSpec", "ValueFunction",
    "evaluate_policy", "extract_relation_graph", "fit_round", "load_checkpoint", "load_config",
    "load_transforms", "parse_config", "run_training", "save_checkpoint",
]
