//! Instance matting evaluation, layered benchmark synthesis and the
//! tri-mask refinement algebra.

pub mod assignment;
pub mod compositing;
pub mod config;
pub mod error;
pub mod matching;
pub mod metrics;
pub mod plane;
pub mod pyramid;
pub mod refinement;
pub mod trimask;

pub use assignment::{assign, ScoreMatrix};
pub use compositing::{
    compose_scene, composite_step, effective_alphas, sparsity_audit, sparsity_audit_planes, EffectiveAlphas,
    FixedPlacement, Layer, LayeredScene, Placement, PlacementPolicy, RandomPlacement, SparsityAudit,
};
pub use config::{parse_error_kinds, Aggregation, ErrorKind, ImqConfig};
pub use error::{Error, Result};
pub use matching::{
    evaluate_dataset, evaluate_image, imq, match_instances, summarize, Counts, DatasetEvaluation, DatasetSummary,
    ImageReport, ImqScore, MatchResult, MatchedPair,
};
pub use metrics::{error_field, pair_error, region_error, similarity, ErrorField, RegionError};
pub use plane::{bounding_box, iou, quantize, union_support, AlphaPlane, BinaryMask, ColorPlane, InstanceMatteSet, Rect};
pub use pyramid::{laplacian_loss, PyramidOptions};
pub use refinement::{
    constraint_losses, cycle_refine, error_map, parallel_refine, refine_patches, scene_trimatte, select_patches,
    tri_reduce, trimatte_with_layers, ConstraintLosses, Domain, LossInputs, LossTerms, Patch, PatchList, Schedule, TriLayers, TriPlanes,
    TriStack,
};
pub use trimask::{
    augment_trimask, morph, partial_band, trimask_from_masks, trimatte_gt, AugmentOptions, MaskSource, MorphOp,
    ReferenceSelection, TriMask, TriMatte,
};
