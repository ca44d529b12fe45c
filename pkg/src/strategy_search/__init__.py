"""Reinforcement-learning search over training strategies (hyperparameters and augmentation probabilities)."""

from .augmentation import AugmentationPolicy, apply_policy
from .baselines import HillClimbConfig, HillClimbResult, hill_climb
from .config import ConfigError, RunConfig, RunSettings, load_config, parse_config
from .controller import (
    ControllerConfig, ControllerParams, ControllerState, PolicyStep, checkpoint, init_controller,
    policy_forward, policy_update, restore,
)
from .objectives import EvaluationRequest, EvaluationResult, build_evaluator, dice_score
from .orchestrator import SearchRun, Trial, replay_controller, resume, run_search
from .report import build_report, report
from .search_space import (
    ParamKind, ParamSpec, SearchSpace, StrategyVector, denormalize, normalize, random_strategy,
)

__version__ = "0.1.0"
