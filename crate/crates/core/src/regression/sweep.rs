use serde::{Deserialize, Serialize};

use super::{fit, predict, RegressionConfig, TrainingSet};
use crate::error::{Error, Result};
use crate::metrics::{cross_correlation, kl_divergence, DEFAULT_KL_EPS};
use crate::saliency::SaliencyMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperGrid {
    pub ranks: Vec<usize>,
    pub lambdas: Vec<f64>,
}

impl HyperGrid {
    /// Cells sorted by `(rank, lambda)`.
    pub fn cells(&self) -> Vec<(usize, f64)> {
        let mut ranks = self.ranks.clone();
        ranks.sort_unstable();
        ranks.dedup();
        let mut lambdas = self.lambdas.clone();
        lambdas.sort_by(f64::total_cmp);
        lambdas.dedup();
        ranks
            .iter()
            .flat_map(|&r| lambdas.iter().map(move |&l| (r, l)))
            .collect()
    }

    pub fn is_empty(&self) -> bool {
        self.ranks.is_empty() || self.lambdas.is_empty()
    }
}

/// The standard grid: R in {5, 10, .., 50}, lambda in {0.01, 0.1, .., 10000}.
pub fn standard_grid() -> HyperGrid {
    HyperGrid {
        ranks: (1..=10).map(|k| 5 * k).collect(),
        lambdas: vec![0.01, 0.1, 1.0, 10.0, 100.0, 1000.0, 10000.0],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub rank: usize,
    pub lambda: f64,
    /// Mean over validation samples; `None` if every sample was excluded.
    pub kldiv: Option<f64>,
    pub cc: Option<f64>,
}

fn target_map(data: &TrainingSet, i: usize) -> Result<SaliencyMap> {
    let (d1, d2) = data.map_shape();
    SaliencyMap::from_vec(d1, d2, data.target(i)?.values().to_vec())
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Fits every grid cell on `train` and scores KLdiv / CC on `validation`.
pub fn sweep_hyperparameters(
    data: &TrainingSet,
    grid: &HyperGrid,
    base: &RegressionConfig,
    train: &[usize],
    validation: &[usize],
) -> Result<Vec<SweepRow>> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty hyperparameter grid".into()));
    }
    if train.is_empty() {
        return Err(Error::InvalidArgument(
            "split leaves no training samples".into(),
        ));
    }
    if validation.is_empty() {
        return Err(Error::InvalidArgument(
            "split leaves no validation samples".into(),
        ));
    }
    if let Some(i) = train.iter().find(|i| validation.contains(i)) {
        return Err(Error::InvalidArgument(format!(
            "sample {i} is in both the training and validation split"
        )));
    }
    let train_set = data.subset(train)?;
    let mut rows = Vec::new();
    for (rank, lambda) in grid.cells() {
        let cfg = RegressionConfig {
            rank,
            lambda,
            ..base.clone()
        };
        let model = fit(&train_set, &cfg)?;
        let (mut kls, mut ccs) = (Vec::new(), Vec::new());
        for &i in validation {
            let pred = predict(&model, &data.input(i)?)?;
            let gt = target_map(data, i)?;
            if let Ok(v) = kl_divergence(&pred, &gt, DEFAULT_KL_EPS) {
                kls.push(v);
            }
            if let Ok(v) = cross_correlation(&pred, &gt) {
                ccs.push(v);
            }
        }
        rows.push(SweepRow {
            rank,
            lambda,
            kldiv: mean(&kls),
            cc: mean(&ccs),
        });
    }
    Ok(rows)
}
