//! Comparison methods: the uniform average of training persons' maps and a
//! gaze-similarity weighted average.
//!
//! The similarity weighting is a stand-in: persons are scored by their mean CC
//! with the target's ground truth over the common images and weighted by a
//! softmax with temperature.

use crate::error::{Error, Result};
use crate::metrics::cross_correlation;
use crate::saliency::{weighted_sum, SaliencyMap};

pub const DEFAULT_TEMPERATURE: f64 = 0.1;

/// Non-negative person weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct PersonWeights {
    weights: Vec<f64>,
}

impl PersonWeights {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidArgument("no person weights".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidArgument(
                "person weights must be finite and >= 0".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "person weights sum to {total}"
            )));
        }
        Ok(Self { weights })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        Self::new(vec![1.0 / n as f64; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Numerically stable softmax of `scores / temperature`.
pub fn softmax(scores: &[f64], temperature: f64) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores
        .iter()
        .map(|s| ((s - max) / temperature).exp())
        .collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Weights from mean CC between the target's GT and each person's map over the common images.
///
/// `training_psms[k][p]` is person `p`'s map on common image `k`; constant maps are skipped.
pub fn similarity_weights(
    target_gt: &[SaliencyMap],
    training_psms: &[Vec<SaliencyMap>],
    temperature: f64,
) -> Result<PersonWeights> {
    if target_gt.is_empty() || target_gt.len() != training_psms.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} target maps vs {} common-image stacks",
            target_gt.len(),
            training_psms.len()
        )));
    }
    if temperature.is_nan() || temperature <= 0.0 {
        return Err(Error::InvalidArgument(
            "temperature must be positive".into(),
        ));
    }
    let persons = training_psms[0].len();
    let mut sums = vec![0.0; persons];
    let mut counts = vec![0usize; persons];
    for (gt, maps) in target_gt.iter().zip(training_psms) {
        if maps.len() != persons {
            return Err(Error::ShapeMismatch(format!(
                "{} persons on one common image, {persons} on another",
                maps.len()
            )));
        }
        for (p, m) in maps.iter().enumerate() {
            match cross_correlation(m, gt) {
                Ok(cc) => {
                    sums[p] += cc;
                    counts[p] += 1;
                }
                Err(Error::ExcludedSample(_)) => {}
                Err(e) => return Err(e),
            }
        }
    }
    if counts.iter().all(|&c| c == 0) {
        return Err(Error::ExcludedSample(
            "every common-image comparison was excluded".into(),
        ));
    }
    // persons never scored fall back to zero similarity
    let scores: Vec<f64> = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| if c == 0 { 0.0 } else { s / c as f64 })
        .collect();
    let mut w = softmax(&scores, temperature);
    // absorb rounding so the sum is exactly representable as one
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    PersonWeights::new(w)
}

/// Pixel-wise `sum_p w_p * map_p`.
pub fn weighted_average_psm(weights: &PersonWeights, maps: &[SaliencyMap]) -> Result<SaliencyMap> {
    if maps.len() != weights.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} weights for {} maps",
            weights.len(),
            maps.len()
        )));
    }
    let refs: Vec<&SaliencyMap> = maps.iter().collect();
    weighted_sum(&refs, weights.as_slice())
}
