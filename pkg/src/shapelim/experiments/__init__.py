"""Monte Carlo, perturbation and identity experiments built on the core modules."""

from .identities import identity_suite
from .montecarlo import MCError, MCRun, compare_to_limit, mc_mode, mc_pointwise
from .perturbation import (
    hellinger2,
    hellinger_rate,
    logconcave_perturbation,
    unimodal_perturbation,
)
from .sampling import SamplingError, sample_model
