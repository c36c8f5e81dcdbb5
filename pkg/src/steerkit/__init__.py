"""Particle steering for diffusion and rectified-flow samplers."""

from .backends import (
    GaussianMixtureModel,
    GmmDiffusionBackend,
    GmmFlowBackend,
    QuantizedInitBackend,
    analytic_tilted_moments,
    gaussian_bin_centers,
    gmm_flow_velocity,
    gmm_posterior_mean,
    gmm_velocity,
)
from .errors import (
    BehindCamera,
    BridgeProtocolError,
    DegenerateWeights,
    EmptySupport,
    FormatError,
    InvalidArgument,
    NumericError,
    RewardUndefined,
    ScheduleInfeasible,
    SteerKitError,
    Unsupported,
)
from .geometry import (
    CameraPose,
    GaussianSet,
    Intrinsics,
    look_at_pose,
    project,
    project_points,
    render_gaussians,
    rotation_from_axis_angle,
    splat_points,
    unproject,
)
from .rewards import (
    FrameSplit,
    GeoRewardConfig,
    LinearReward,
    PerturbedReward,
    QuadraticReward,
    SceneReward,
    cosine_field,
    linear_reward,
    perturbed_reward,
    quadratic_reward,
    render_consistency,
    reprojection_consistency,
    select_frame_indices,
)
from .scene import (
    GroundTruthScene,
    LatentMagnitudes,
    RenderedFrame,
    SceneEstimate3D,
    SceneEstimate4D,
    SceneSpec,
    SceneVideoBackend,
    SceneVideoLatent,
    oracle_reconstruct_3d,
    oracle_reconstruct_4d,
    render_scene,
    scene_latent_decode,
    synth_scene,
)
from .schedule import (
    FlowTimeGrid,
    ResamplingSchedule,
    TimestepSchedule,
    build_alpha_bar_schedule,
    build_flow_grid,
    build_resampling_schedule,
)
from .steering import (
    Particle,
    ParticleEnsemble,
    PotentialConfig,
    RewardFn,
    SteerResult,
    StepTrace,
    baseline_sample,
    best_of_n,
    compute_potential,
    ess,
    log_potential,
    multinomial_resample,
    proposal_step,
    proposal_update,
    steer_rectified_flow,
    steer_v_prediction,
    terminal_correction,
    tweedie_estimate,
)
from .tensorfile import read_tensor, write_tensor

__version__ = "0.1.0"
