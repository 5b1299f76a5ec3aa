"""Non-local traffic flow on a ring road.

Density profiles on a periodic grid move under a speed law that looks ahead
through a downstream kernel and is nudged by traffic behind through an
upstream kernel. The package provides the upwind solver for this model, a
Godunov reference for the local law, exact travelling-wave oracles, and
the exponential-stability certificate with its Lyapunov diagnostics.
"""

from .analysis import (
    BoundCheck,
    DecayFit,
    FundamentalDiagram,
    StabilityReport,
    decay_bound_check,
    feasible_halfwidth,
    fit_decay_rate,
    fundamental_diagram,
    lyapunov_V,
    read_fd_csv,
    stability_condition,
    write_fd_csv,
)
from .grid import (
    DensityProfile,
    ProfileStats,
    interpolate,
    interpolate_many,
    l2_deviation,
    read_snapshot_csv,
    sample,
    stats,
    write_snapshot_csv,
)
from .kernels import (
    DiscreteWeights,
    KernelSpec,
    apply_weights,
    builtin_linear_upstream,
    builtin_uniform_downstream,
    correlate_ring,
    discretize,
    shift_identity_residuals,
    sigma,
)
from .solver import (
    CFLViolation,
    LambdaCheck,
    NormSeries,
    SchemeConfig,
    SimulationResult,
    godunov_flux,
    godunov_step,
    lambda_check,
    read_series_csv,
    run,
    step_nonlocal,
    write_series_csv,
)
from .speedlaws import (
    LawComponent,
    SpeedLaw,
    VelocityField,
    builtin_exp_f,
    builtin_logistic_g,
    builtin_rational_g,
    constant_one_g,
    continuum_velocity_oracle,
    discrete_velocity,
    equilibrium_flow,
    make_speed_law,
    multi_term_velocity,
)
from .wave import (
    TravellingWave,
    WaveComparison,
    compare_to_wave,
    perceived_density_identity,
    read_wave_csv,
    wave_density,
    write_wave_csv,
)

__version__ = "0.1.0"
