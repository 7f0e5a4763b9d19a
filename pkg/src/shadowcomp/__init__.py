"""Shadow compositing toolkit.

Library surface for illumination-model shadow filling, paired dataset
synthesis, evaluation metrics, the cross-attention kernel with
gradient verification, training losses, and network-shape validation.
See the ``shadowcomp`` CLI for the end-to-end pipeline.
"""

from .arch import LayerSpec, NetworkSpec, builtin_specs, propagate_shapes, validate_all
from .attention import (
    CaiWeights,
    affinity,
    cai_forward,
    cai_jvp,
    conv1x1,
    grad_check_report,
    spectral_normalize,
)
from .dataset import (
    CompositeSample,
    DatasetManifest,
    SceneAnnotation,
    build_test_pairs,
    enumerate_training_samples,
    read_manifest,
    synthesize_composite,
    write_manifest,
)
from .illumination import (
    CompositionGradients,
    ShadowParams,
    compose,
    compose_gradients,
    darken,
    estimate_params,
    fill_shadow,
    invert,
    synthesize_matte,
)
from .imaging import (
    load_image,
    load_mask,
    load_matte,
    mask_area_ratio,
    mask_union,
    resize_bilinear,
    resize_mask,
    save_image,
    save_mask,
    save_matte,
)
from .losses import (
    LossWeights,
    d_hinge_loss,
    g_adv_loss,
    generator_objective,
    image_loss,
    mask_loss,
    param_loss,
)
from .metrics import (
    DEFAULT_RATIO_EDGES,
    MetricReport,
    RatioBins,
    bin_by_shadow_ratio,
    evaluate_pair,
    evaluate_set,
    rmse,
    ssim,
)

__version__ = "0.1.0"
