"""Unbiased derivatives of Metropolis-Hastings expectations via coupled alternative chains."""

from .core import DualValue, RandomStream, flip_weight, prune
from .samplers import dmh_run, mh_run, score_run

__all__ = ["DualValue", "RandomStream", "flip_weight", "prune", "dmh_run", "mh_run", "score_run"]
