"""Unsupervised rigid point-cloud registration via salient-point analysis.

Pipeline: learn per-point descriptors with a four-hop statistical feature
extractor, pick geometrically salient points on both clouds, match them in
feature space, and solve the rigid alignment in closed form, iterating as
the source moves. Includes an ICP baseline, a seeded benchmark harness,
synthetic shapes, file formats, and a CLI (`spa`).
"""

from .backend import ACTIVE_BACKEND, worker_count
from .errors import DataFormatError, DegenerateGeometryError, SpaError
from .geometry import (
    EulerAngles,
    NeighborIndex,
    PointCloud,
    RigidTransform,
    apply_transform,
    build_neighbor_index,
    compose,
    euler_to_rotation,
    farthest_point_sample,
    invert,
    knn,
    knn_batch,
    rotation_angle_deg,
    rotation_to_euler,
    wrap_angle_deg,
)
from .saliency import (
    SaliencyField,
    SalientSet,
    local_curvature_energies,
    select_salient_points,
)
from .features import (
    FeatureExtractor,
    FeatureMatrix,
    HopConfig,
    HopModel,
    SaabKernel,
    apply_saab,
    extract_features,
    fit_saab,
    octant_pool,
    train_feature_extractor,
)
from .registration import (
    CorrespondenceSet,
    IterationRecord,
    RegistrationResult,
    estimate_transform_svd,
    match_correspondences,
    register_icp,
    register_spa,
    residual_mse,
)
from .evaluation import (
    Histogram,
    MetricsReport,
    NoiseSpec,
    SweepRow,
    SWEEP_METHODS,
    TransformSpec,
    add_noise,
    compute_metrics,
    histogram,
    run_sweep,
    sample_transform,
)
from .shapes import ASYMMETRIC_KINDS, SHAPE_KINDS, generate_shape, synthetic_suite
from .io import (
    CLOUD_FORMATS,
    CloudFile,
    RunConfig,
    load_cloud,
    load_model,
    load_run_config,
    save_model,
    write_cloud,
)

__version__ = "0.1.0"
