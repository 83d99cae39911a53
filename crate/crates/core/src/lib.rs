//! Hybrid retinal-image classifier: a U-Net style vessel segmenter, PCA,
//! SMO-trained kernel SVMs and a weighted-vote ensemble of an RGB channel
//! and a vessel channel.

pub mod codec;
pub mod config;
pub mod dataio;
pub mod error;
pub mod hybrid;
pub mod linalg;
pub mod pca;
pub mod pipeline;
pub mod seeds;
pub mod segnet;
pub mod svm;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
