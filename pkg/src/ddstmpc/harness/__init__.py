from .config import ConfigError, ExperimentConfig, PlantConfig, load_config, reference_config
from .experiment import ExperimentReport, closed_loop_audit, run_experiment, terminal_seed
from .plant import collect_trajectories, simulate_plant

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "ExperimentReport",
    "PlantConfig",
    "closed_loop_audit",
    "collect_trajectories",
    "load_config",
    "reference_config",
    "run_experiment",
    "simulate_plant",
    "terminal_seed",
]
