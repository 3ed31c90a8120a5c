"""Undersampled phase retrieval by majorization-minimization.

Solvers for signals sparse in the standard basis (C-PRIME) and for signals
sparse over a jointly learned dictionary (SC-PRIME), with measurement
ensembles, ambiguity-aware error metrics, image utilities and a seeded
experiment harness.
"""

from ._validation import ConfigError
from .ambiguity import AmbiguityClass, is_success, nse
from .cprime import CPrime, CprimeConfig, CprimeState, solve_cprime, solve_cprime_path
from .measurements import (AWGN, IntensitySamples, MeasurementEnsemble, build_complex_gaussian,
                           build_partial_dft, sparse_ground_truth, synthesize)
from .prox import MajorizerParams, soft_threshold
from .scprime import SCPrime, ScprimeConfig, ScprimeState, solve_scprime

__version__ = "0.1.0"
