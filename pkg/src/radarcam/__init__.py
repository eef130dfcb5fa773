"""Geometry, depth-supervision, view-transformation and fusion math for
4D-radar/camera bird's-eye-view perception, with a synthetic validation
harness and a file-based CLI.
"""

__version__ = "0.1.0"

from .geometry import (
    AngularResolution,
    BehindCameraError,
    CameraIntrinsics,
    RigidTransform,
    SensorCalibration,
    SphericalPoint,
    empirical_projection_error,
    max_pixel_position_error,
    pixel_to_camera,
    project_to_pixel,
    scale_intrinsics,
    spherical_to_cartesian,
    transform_point,
)
from .depth_supervision import (
    DepthBinSpec,
    DepthTarget,
    LossConfig,
    RadarPoint,
    RadiusConfig,
    build_depth_targets,
    expected_depth,
    nearest_bin,
    neighborhood_radius,
    one_to_many_loss,
    one_to_many_loss_grad,
    pixel_depth_loss,
)
from .tensor_ops import (
    Conv2DParams,
    LinearParams,
    MLPParams,
    ShapeError,
    bilinear_sample,
    channel_reduce,
    conv2d,
    global_pool,
    linear,
    mlp,
    sigmoid,
    softmax,
    trilinear_sample,
)
from .view_transform import (
    DepthDistributionMap,
    OccupancyGrid,
    VTParams,
    VoxelGridSpec,
    depth_distribution,
    occupancy_from_bev,
    sample_vt,
    voxel_centers,
)
from .fusion import (
    CSAFusionParams,
    ConcatFusionParams,
    channel_attention,
    concat_fusion,
    csa_fusion,
    spatial_attention,
)
from .sim import (
    ExperimentConfig,
    RadarNoiseModel,
    Scene,
    SceneExtents,
    SceneObject,
    SupervisionMetrics,
    evaluate_supervision,
    generate_scene,
    run_experiment,
    simulate_radar,
)
