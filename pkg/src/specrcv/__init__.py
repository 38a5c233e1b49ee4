"""Spectral analysis of realized covariance matrices for high-dimensional diffusions.

The pipeline: simulate class-C diffusion increments (``diffusion``), form
realized covariance estimators (``estimators``), compare their eigenvalue
distributions (``covmodel``, ``spectra``), and connect them to the limiting
laws predicted by random matrix theory (``mpsolve``). ``cli`` wraps it all
into reproducible batch experiments.
"""

from .covmodel import (
    CovMatrix,
    EigenDecomposition,
    SpectralDistribution,
    eig_sym,
    esd,
    sqrt_psd,
)
from .diffusion import (
    ClassCSpec,
    ConstantProfile,
    CosineProfile,
    IncrementMatrix,
    ObservationGrid,
    PiecewiseProfile,
    SampledProfile,
    VolatilityProfile,
    comparator_increments,
    design_one_profile,
    design_two_profile,
    integrate_gamma_sq,
    make_grid,
    simulate_increments,
)
from .errors import (
    BadConfigError,
    BadGridError,
    BadProfileError,
    BadSpecError,
    NoConvergenceError,
    NonFiniteError,
    NotPSDError,
    OutOfDomainError,
    SpecrcvError,
    ZeroIncrementError,
    ZeroTraceError,
)
from .estimators import (
    EstimatorOutput,
    TraceDiagnostic,
    normalized_icv,
    rcv,
    sigma_tilde,
    trace_diagnostic,
    tvarcv,
)
from .mpsolve import (
    MPLawParams,
    PopulationSpectrum,
    RecoveryResult,
    WeightProfile,
    WeightedSolveResult,
    default_bandwidth,
    invert_stieltjes,
    mp_density,
    mp_law_curve,
    mp_mass_at_zero,
    mp_stieltjes,
    mp_support,
    recover_spectrum,
    solve_mp,
    solve_mp_grid,
    solve_weighted_mp,
    solve_weighted_mp_grid,
    weight_profile_from_model,
    weighted_stieltjes,
)
from .spectra import (
    DensityCurve,
    StieltjesGrid,
    empirical_stieltjes,
    histogram,
    kolmogorov_distance,
    levy_distance,
)

__version__ = "0.1.0"

__all__ = [
    "BadConfigError",
    "BadGridError",
    "BadProfileError",
    "BadSpecError",
    "ClassCSpec",
    "ConstantProfile",
    "CosineProfile",
    "CovMatrix",
    "DensityCurve",
    "EigenDecomposition",
    "EstimatorOutput",
    "IncrementMatrix",
    "MPLawParams",
    "NoConvergenceError",
    "NonFiniteError",
    "NotPSDError",
    "ObservationGrid",
    "OutOfDomainError",
    "PiecewiseProfile",
    "PopulationSpectrum",
    "RecoveryResult",
    "SampledProfile",
    "SpecrcvError",
    "SpectralDistribution",
    "StieltjesGrid",
    "TraceDiagnostic",
    "VolatilityProfile",
    "WeightProfile",
    "WeightedSolveResult",
    "ZeroIncrementError",
    "ZeroTraceError",
    "__version__",
    "comparator_increments",
    "default_bandwidth",
    "design_one_profile",
    "design_two_profile",
    "eig_sym",
    "empirical_stieltjes",
    "esd",
    "histogram",
    "integrate_gamma_sq",
    "invert_stieltjes",
    "kolmogorov_distance",
    "levy_distance",
    "make_grid",
    "mp_density",
    "mp_law_curve",
    "mp_mass_at_zero",
    "mp_stieltjes",
    "mp_support",
    "normalized_icv",
    "rcv",
    "recover_spectrum",
    "sigma_tilde",
    "simulate_increments",
    "solve_mp",
    "solve_mp_grid",
    "solve_weighted_mp",
    "solve_weighted_mp_grid",
    "sqrt_psd",
    "trace_diagnostic",
    "tvarcv",
    "weight_profile_from_model",
    "weighted_stieltjes",
]
