"""MAP sequence estimation over SVGD particle supports.

Per time step, Stein variational gradient descent evolves a compact
particle set toward the conditional target p(z_t, x_t | x_{t-1});
a Viterbi-style dynamic program then decodes the globally optimal
trajectory over those supports. Includes Kalman-family and particle-filter
baselines plus Monte Carlo benchmark scenarios.
"""

from ._core import backend_name
from .models import (
    ContractViolationError,
    ModelSpec,
    NumericalError,
    Observation,
    finite_difference_grad,
    gaussian_logpdf,
    grad_log_joint_step,
    log_joint_step,
    wrap_angle,
)
from .svgd import (
    KernelSpec,
    ParticleSet,
    SvgdConfig,
    initial_particle_update,
    median_bandwidth,
    rbf_kernel,
    rbf_kernel_grad,
    run_svgd,
    sequential_particle_update,
    svgd_step,
)
from .mapseq_dp import (
    DecodeFailureError,
    DpTables,
    ParticleHistory,
    Trajectory,
    backtrack,
    brute_force_map,
    elbo_epsilon_score,
    forward_step,
    init_scores,
    stein_map_seq,
    trajectory_score,
)
from .baselines import (
    DifferentiableModelSpec,
    GaussianBelief,
    WeightedParticleSet,
    ekf,
    eks,
    iekf,
    ieks,
    particle_filter,
    pf_map,
    pf_map_seq,
    spf_map,
    stein_particle_filter,
    stratified_resample,
)
from .scenarios import (
    AnchorMap,
    ScenarioDataset,
    gen_linear_gaussian,
    gen_scenario_a,
    gen_scenario_b,
    gen_scenario_c,
    rmse,
)

__version__ = "0.1.0"
