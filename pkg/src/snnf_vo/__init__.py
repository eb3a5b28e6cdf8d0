"""Semantic-edge visual odometry on exact nearest-neighbor fields.

Edge pixels carry class labels; data association restricts each warped
edge to the nearest current-frame edge of the same class (one exact
Euclidean distance field per class), which widens the convergence basin
of direct edge alignment over class-blind matching. Registration is
iteratively reweighted Gauss-Newton on SE(3) with an optional
gradient-magnitude photometric term and coarse-to-fine pyramid; a
frame-to-keyframe tracker produces full trajectories.
"""

from .edgemap import (EdgeCloud, EdgePoint, SemanticEdgeMap, classify_edges,
                      detect_edges_builtin, fuse_edge_semantics,
                      sample_edge_cloud, sample_support_pixels)
from .errors import (BehindCameraError, ConfigError, DimensionError,
                     DomainError, EmptyCloudError, EmptySeedsError,
                     FormatError, MetricError, NoMatchError, NumericError,
                     OutOfBoundsError, RankDeficiencyError, SnnfVoError)
from .geometry import (CameraIntrinsics, Pose, back_project, project,
                       project_batch, projection_jacobian, rotation_angle,
                       se3_exp, se3_log, warp, warp_jacobian,
                       warp_jacobian_batch)
from .metrics import (AteReport, BasinCurve, ate, basin_width,
                      convergence_basin, repeatability)
from .nnf import (NearestNeighborField, SemanticFieldSet, backend_name,
                  build_annf, build_snnf, lookup, lookup_batch)
from .registration import (FrameData, LevelDiagnostics, RegistrationConfig,
                           RegistrationResult, edge_residual, evaluate_energy,
                           huber_cost, huber_weight, photo_residual, register,
                           register_pyramid)
from .synthetic import (RenderOutput, SceneModel, build_scene,
                        generate_trajectory, render_view)
from .tracker import (FrameInput, TrackerConfig, Trajectory,
                      keyframe_decision, recover_scale, track_sequence)

__version__ = "0.1.0"
