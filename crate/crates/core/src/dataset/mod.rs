//! Dataset construction: annotations, patch sampling, splits, balanced
//! sampling, augmentation and evaluation-photo selection.

mod annotations;
mod augment;
mod balance;
mod category;
mod sampling;
mod select;
mod splits;

pub use annotations::{
    read_patches, read_records, write_patches, write_records, Annotations, ClickLabel, PatchRecord, PatchSource,
    PhotoInfo, Record, SegmentPolygon, Split, ANNOTATION_VERSION,
};
pub use augment::{augment, AugmentParams, AMPLITUDE_RANGE, ASPECT_RANGE, CROP_PIXELS, SCALE_RANGE};
pub use balance::{balanced_batches, BalancedStream};
pub use category::{Category, NUM_CATEGORIES};
pub use sampling::{
    generate_patches, poisson_disk_sample, PatchGeneration, PatchOptions, DEFAULT_PATCH_SCALE, MIN_SEPARATION,
    REJECTION_BUDGET,
};
pub use select::{annotation_counts, coverage_score, select_eval_photos, PhotoCounts};
pub use splits::{
    assign_splits, cluster_segment_counts, label_patches, CategoryCounts, SplitAssignment, SplitOptions, DEFAULT_RATIOS,
    MIN_TEST_SEGMENTS,
};
