"""Wasserstein gradient flows, diffusion samplers and 1-D optimal transport on uniform grids."""
from .energy import (
    EnergyBreakdown,
    dissipation_residual,
    energy_trace,
    free_energy,
    jko_flow,
    jko_objective,
    jko_solve,
    jko_step,
    kl_divergence,
    partition_constant,
    stationary_density,
    tangent_norm_sq,
    wasserstein_gradient_E,
    wasserstein_scalar_product,
)
from .errors import *  # noqa: F401,F403
from .eulerian import (
    EulerianTrajectory,
    FokkerPlanckStepper,
    ShockReport,
    burgers_evolve,
    burgers_field,
    continuity_evolve,
    fp_evolve,
    lagrangian_map,
    pushforward_by_map,
    shock_time,
    solve_optimality_system,
)
from .lagrangian import (
    ScoreField,
    Trajectory,
    ddpm_chain,
    exact_score,
    simulate_probability_flow_ode,
    simulate_sde,
    trace_characteristics,
)
from .measures import (
    DEFAULT_GRID,
    Density1D,
    DiffusionSchedule,
    Grid1D,
    ParticleEnsemble,
    PotentialSpec,
    TangentVector1D,
    TransportMap1D,
    VelocityField1D,
    build_density_from_samples,
    density_moments,
    named_field,
    sample_from_density,
)
from .transport import (
    CostSpec,
    benamou_brenier_action,
    convex_cost_trajectory,
    displacement_interpolation,
    geodesic_trajectory,
    kantorovich_gradient,
    legendre_transform,
    perturbed_trajectory,
    quantile_map,
    straight_line_cost_check,
    w2_distance,
)

__version__ = "0.1.0"
