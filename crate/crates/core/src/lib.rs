//! Few-shot personalized saliency prediction.
//!
//! Training persons' saliency maps for an image are stacked into a
//! `P x d1 x d2` tensor and mapped onto a target person's map by a
//! tensor-to-matrix regression whose weight tensor has bounded CP rank.
//! Supporting modules cover common-image selection, ground-truth maps,
//! evaluation metrics, baselines, synthetic data, and the experiment pipeline.

pub mod baselines;
pub mod error;
pub mod formats;
pub mod metrics;
pub mod pipeline;
pub mod regression;
pub mod saliency;
pub mod selection;
pub mod synth;
pub mod tensor;

mod linalg;

pub use error::{Error, Result};
pub use metrics::{cross_correlation, evaluate_suite, kl_divergence, EvalReport};
pub use regression::{fit, predict, FittedModel, RegressionConfig, TrainingSet};
pub use saliency::{DifferenceMap, FixationSet, SaliencyMap};
pub use tensor::{
    contract_leading, cp_reconstruct, khatri_rao, mode_unfold, CpFactors, DenseTensor,
};
