"""Clock skew and offset estimation for two-way time transfer.

All times and delays are in seconds.
"""

from ._ptpmm import *  # noqa: F401,F403
from ._ptpmm import ExperimentConfig, Scheme, parse_scheme
from ._ptpmm import run_experiment as _run_experiment

__version__ = "0.1.0"


def run_experiment(cfg=None, **kwargs):
    """Runs an experiment from a config, keyword overrides, or both.

    Keyword names match ExperimentConfig attributes; schemes may be given as
    names such as "minimax-k".
    """
    if cfg is None:
        cfg = ExperimentConfig()
    for key, value in kwargs.items():
        if not hasattr(cfg, key):
            raise TypeError(f"unknown experiment option {key!r}")
        if key == "schemes":
            value = [parse_scheme(s) if isinstance(s, str) else s for s in value]
        setattr(cfg, key, value)
    return _run_experiment(cfg)
