//! Manifests, PNG I/O, splitting, augmentation and the synthetic corpus.

pub mod augment;
pub mod image;
pub mod manifest;
pub mod synth;

pub use augment::{apply_plan, augment, sample_plan, AugmentOp, AugmentPlan, AUGMENT_PROBABILITY};
pub use image::{grayscale, load_image, load_mask, resize_bilinear, save_image, save_mask};
pub use manifest::{load_manifest, parse_manifest, split_dataset, DatasetManifest, Record, Split};
pub use synth::{synth_generate, write_corpus, SyntheticCorpus, SyntheticSpec};
