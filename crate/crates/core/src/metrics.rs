//! Distribution-level (KL divergence) and pixel-level (Pearson CC) map comparison.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::saliency::{resample, Resample, SaliencyMap};

/// Regularizer inside the KL log ratio (double-precision machine epsilon).
pub const DEFAULT_KL_EPS: f64 = f64::EPSILON;

fn check_dims(a: &SaliencyMap, b: &SaliencyMap) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::ShapeMismatch(format!(
            "metric inputs {:?} vs {:?}",
            a.dims(),
            b.dims()
        )));
    }
    Ok(())
}

/// `sum_x q(x) ln(eps + q(x) / (p(x) + eps))` for sum-normalized `q` (reference) and `p`.
fn kl_normalized(reference: &SaliencyMap, other: &SaliencyMap, eps: f64) -> Result<f64> {
    let q_sum = reference.sum();
    if q_sum <= 0.0 {
        return Err(Error::ExcludedSample("KL reference map is all zero".into()));
    }
    let p_sum = other.sum();
    let p_scale = if p_sum > 0.0 { 1.0 / p_sum } else { 0.0 };
    let kl = reference
        .values()
        .iter()
        .zip(other.values().iter())
        .map(|(&q, &p)| {
            let q = q / q_sum;
            let p = p * p_scale;
            q * (eps + q / (p + eps)).ln()
        })
        .sum();
    Ok(kl)
}

/// KL(gt || pred), the saliency-benchmark direction.
pub fn kl_divergence(pred: &SaliencyMap, gt: &SaliencyMap, eps: f64) -> Result<f64> {
    check_dims(pred, gt)?;
    kl_normalized(gt, pred, eps)
}

/// KL(pred || gt).
pub fn kl_divergence_pred_first(pred: &SaliencyMap, gt: &SaliencyMap, eps: f64) -> Result<f64> {
    check_dims(pred, gt)?;
    kl_normalized(pred, gt, eps)
}

/// Pearson correlation over pixels.
pub fn cross_correlation(pred: &SaliencyMap, gt: &SaliencyMap) -> Result<f64> {
    check_dims(pred, gt)?;
    let n = (pred.d1() * pred.d2()) as f64;
    let mp = pred.sum() / n;
    let mg = gt.sum() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in pred.values().iter().zip(gt.values().iter()) {
        let (da, db) = (a - mp, b - mg);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ExcludedSample("CC of a constant map".into()));
    }
    Ok(sxy / (sxx.sqrt() * syy.sqrt()))
}

/// One predicted map to score.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub method: String,
    pub person: String,
    pub image: String,
    pub map: SaliencyMap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub method: String,
    pub person: String,
    pub image: String,
    pub kldiv: Option<f64>,
    pub cc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub mean_kldiv: Option<f64>,
    pub mean_cc: Option<f64>,
    pub n_kldiv: usize,
    pub n_cc: usize,
    pub excluded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub summary: Vec<MethodSummary>,
}

fn mean(values: impl Iterator<Item = f64>) -> (Option<f64>, usize) {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        (None, 0)
    } else {
        (Some(sum / n as f64), n)
    }
}

fn metric_or_excluded(r: Result<f64>, what: &str, p: &Prediction) -> Result<Option<f64>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::ExcludedSample(msg)) => {
            log::warn!(
                "{what} excluded for {}/{}/{}: {msg}",
                p.method,
                p.person,
                p.image
            );
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

/// Scores every prediction against its GT (keyed by `(person, image)`) and aggregates per method.
///
/// Predictions are upsampled to GT resolution first. Methods are summarized in
/// order of first appearance.
pub fn evaluate_suite(
    predictions: &[Prediction],
    gts: &BTreeMap<(String, String), SaliencyMap>,
) -> Result<EvalReport> {
    let mut rows = Vec::with_capacity(predictions.len());
    for p in predictions {
        let gt = gts
            .get(&(p.person.clone(), p.image.clone()))
            .ok_or_else(|| {
                Error::Missing(format!(
                    "ground truth for person {} image {}",
                    p.person, p.image
                ))
            })?;
        let pred = if p.map.dims() == gt.dims() {
            p.map.clone()
        } else {
            resample(&p.map, gt.d1(), gt.d2(), Resample::Up)?
        };
        let kldiv = metric_or_excluded(kl_divergence(&pred, gt, DEFAULT_KL_EPS), "KLdiv", p)?;
        let cc = metric_or_excluded(cross_correlation(&pred, gt), "CC", p)?;
        rows.push(EvalRow {
            method: p.method.clone(),
            person: p.person.clone(),
            image: p.image.clone(),
            kldiv,
            cc,
        });
    }
    Ok(EvalReport::from_rows(rows))
}

impl EvalReport {
    pub fn from_rows(rows: Vec<EvalRow>) -> Self {
        let mut methods: Vec<&str> = Vec::new();
        for r in &rows {
            if !methods.contains(&r.method.as_str()) {
                methods.push(&r.method);
            }
        }
        let summary = methods
            .iter()
            .map(|&m| {
                let of = || rows.iter().filter(move |r| r.method == m);
                let (mean_kldiv, n_kldiv) = mean(of().filter_map(|r| r.kldiv));
                let (mean_cc, n_cc) = mean(of().filter_map(|r| r.cc));
                let excluded = of().filter(|r| r.kldiv.is_none() || r.cc.is_none()).count();
                MethodSummary {
                    method: m.to_string(),
                    mean_kldiv,
                    mean_cc,
                    n_kldiv,
                    n_cc,
                    excluded,
                }
            })
            .collect();
        EvalReport { rows, summary }
    }

    pub fn method(&self, name: &str) -> Option<&MethodSummary> {
        self.summary.iter().find(|s| s.method == name)
    }

    /// `method,person,image,kldiv,cc`; excluded metrics are left empty.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["method", "person", "image", "kldiv", "cc"])?;
        let fmt = |v: Option<f64>| v.map(|x| format!("{x:.12}")).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                r.method.as_str(),
                r.person.as_str(),
                r.image.as_str(),
                &fmt(r.kldiv),
                &fmt(r.cc),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn summary_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.summary)?)
    }
}
