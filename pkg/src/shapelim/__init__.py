"""Log-concave density MLE with optimality certificates and limit-law tools."""

from .envelope import (
    EnvelopeError,
    EnvelopeFunctionalTable,
    envelope_functionals,
    envelope_table,
    lower_envelope,
    simulate_driving,
)
from .estimators import evaluate_fit, local_diagnostics, local_scalings, mode_of_fit
from .limits import (
    ABSOLUTE_MINIMAX_CONSTANT,
    UNIMODAL_MINIMAX_CONSTANT,
    absolute_minimax_constant,
    canonical_scalings,
    constants_table,
    minimax_mode_bound,
    mode_limit_scale,
    peakedness_poly_root,
    pointwise_constants,
)
from .mle import (
    LogConcaveFit,
    fit_log_concave,
    fitted_processes,
    knot_gaps,
    verify_characterization,
)
from .model import (
    DensityModel,
    ModelError,
    PiecewiseLinearConcave,
    Sample,
    SampleError,
    empirical_processes,
    load_sample,
    make_density_model,
    plc_exp_integral,
)

__version__ = "0.1.0"
