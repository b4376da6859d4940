"""Stochastic Moyal product and Malliavin Sobolev norms on polynomial Wiener functionals."""

from .functionals import (
    DerivativeTensor,
    PolynomialFunctional,
    Variable,
    VariableAtlas,
    derivative_tensor,
    malliavin_derivative,
)
from .kernels import (
    FLAT_METRIC,
    PHASE_METRIC,
    Kernel,
    MetricProfile,
    contract,
    difference_quotient,
    gram_matrix,
    gram_schmidt,
    inner,
    make_kernel,
    primitive,
)
from .moments import covariance_matrix, expectation_exact, gradient_norm_squared, sobolev_norm_exact_p2
from .montecarlo import (
    SampleBatch,
    consistency_report,
    estimate_moment,
    estimate_sobolev_norm,
    realize_samples,
)
from .star import (
    SYMPLECTIC,
    ContractionTerm,
    FormalSeries,
    RDifferentialSpec,
    apply_r_differential,
    c_r,
    check_bracket_axioms,
    check_star_axioms,
    moyal_product,
    pairing,
    poisson_bracket,
    series_combine,
)

__version__ = "0.1.0"
