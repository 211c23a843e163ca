#![allow(dead_code)]

use ndarray::Array2;
use psmtr_core::regression::TrainingSet;
use psmtr_core::{CpFactors, DenseTensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> DenseTensor {
    let n = shape.iter().product();
    DenseTensor::new(
        shape.to_vec(),
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

pub fn random_factors(rng: &mut ChaCha8Rng, shape: &[usize], rank: usize) -> CpFactors {
    CpFactors::new(
        shape
            .iter()
            .map(|&n| Array2::from_shape_simple_fn((n, rank), || rng.random_range(-1.0..1.0)))
            .collect(),
    )
    .unwrap()
}

/// Row-major multi-index of flat position `flat` in `shape`.
pub fn unravel(mut flat: usize, shape: &[usize]) -> Vec<usize> {
    let mut idx = vec![0; shape.len()];
    for k in (0..shape.len()).rev() {
        idx[k] = flat % shape[k];
        flat /= shape[k];
    }
    idx
}

/// Materialized CP tensor entry by entry.
pub fn brute_reconstruct(w: &CpFactors) -> (Vec<usize>, Vec<f64>) {
    let shape = w.shape();
    let n: usize = shape.iter().product();
    let values = (0..n)
        .map(|flat| {
            let idx = unravel(flat, &shape);
            (0..w.rank())
                .map(|r| {
                    idx.iter()
                        .enumerate()
                        .map(|(k, &i)| w.factor(k)[[i, r]])
                        .product::<f64>()
                })
                .sum()
        })
        .collect();
    (shape, values)
}

/// `out[j] = sum_i x[i] W[i, j]` over the materialized weight.
pub fn brute_contract(x: &DenseTensor, w: &CpFactors) -> Vec<f64> {
    let (shape, dense) = brute_reconstruct(w);
    let lead: usize = x.len();
    let trail: usize = shape[x.order()..].iter().product();
    (0..trail)
        .map(|j| {
            (0..lead)
                .map(|i| x.values()[i] * dense[i * trail + j])
                .sum()
        })
        .collect()
}

/// Non-negative inputs and targets, `I x P x d1 x d2` and `I x d1 x d2`.
pub fn random_set(rng: &mut ChaCha8Rng, i: usize, p: usize, d1: usize, d2: usize) -> TrainingSet {
    let inputs = DenseTensor::new(
        vec![i, p, d1, d2],
        (0..i * p * d1 * d2).map(|_| rng.random::<f64>()).collect(),
    )
    .unwrap();
    let targets = DenseTensor::new(
        vec![i, d1, d2],
        (0..i * d1 * d2).map(|_| rng.random::<f64>()).collect(),
    )
    .unwrap();
    TrainingSet::new(inputs, targets).unwrap()
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den.max(1e-300)
}
