from ._core import (
    ConfigError,
    Dataset,
    EmTracker,
    __version__,
    fit_slope,
    gen_gaussian_mixture,
    load_idx,
    memory_profile,
    partition,
    replay_freeze,
    run_simulation,
)

__all__ = [
    "ConfigError",
    "Dataset",
    "EmTracker",
    "__version__",
    "fit_slope",
    "gen_gaussian_mixture",
    "load_idx",
    "memory_profile",
    "partition",
    "replay_freeze",
    "run_simulation",
]
