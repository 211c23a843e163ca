//! Block updates for the five CP factors of the regression weight tensor.
//!
//! With all but one factor fixed, both the residual and `lambda ||W||_F^2` are
//! quadratic in the free factor, so each update is an exact ridge solve:
//!
//! * input factors (person, input-row, input-col): the unknown is `vec(A)` in
//!   row-major order (`index = n * R + r`); the design column for `(n, r)` on
//!   sample `i` is `z_i[n, r]` times the `r`-th output template, where
//!   `z_i = X_i(k) (khatri-rao of the other input factors)`.
//! * output factors (output-row, output-col): the targets form an
//!   `I x d1 x d2` CP model with factors `(C, B1, B2)`, `C[i, r]` being the
//!   input loadings, so each output row is an independent `R`-dimensional
//!   ridge problem sharing one Gram matrix.
//!
//! The penalty Hessian for factor `k` is `H_k = hadamard(G_m, m != k)` with
//! `G_m = A_m^T A_m`.

use ndarray::{Array1, Array2};

use super::TrainingSet;
use crate::error::{Error, Result};
use crate::linalg::solve_spd;
use crate::tensor::{khatri_rao_chain, leading_loadings, mode_unfold, CpFactors};

pub const PERSON: usize = 0;
pub const INPUT_ROW: usize = 1;
pub const INPUT_COL: usize = 2;
pub const OUTPUT_ROW: usize = 3;
pub const OUTPUT_COL: usize = 4;

/// Update order of one sweep.
pub const UPDATE_ORDER: [usize; 5] = [PERSON, INPUT_ROW, INPUT_COL, OUTPUT_ROW, OUTPUT_COL];

pub const FACTOR_NAMES: [&str; 5] = [
    "person",
    "input-row",
    "input-col",
    "output-row",
    "output-col",
];

/// Diagonal jitter used when `lambda == 0`.
pub const ZERO_LAMBDA_JITTER: f64 = 1e-12;

/// Normal equations `matrix * X = rhs` of one block update.
///
/// For input factors `X` is `vec(A)` as a single column; for output factors
/// `X = A^T` (`R x n`).
#[derive(Debug, Clone)]
pub struct NormalEquations {
    pub mode: usize,
    pub matrix: Array2<f64>,
    pub rhs: Array2<f64>,
}

fn hadamard_except(grams: &[Array2<f64>], skip: &[usize]) -> Array2<f64> {
    let r = grams[0].nrows();
    let mut acc = Array2::<f64>::ones((r, r));
    for (k, g) in grams.iter().enumerate() {
        if !skip.contains(&k) {
            acc *= g;
        }
    }
    acc
}

/// `z_i` for input mode `k`: `n_k x R`.
fn input_design(x: &crate::tensor::DenseTensor, w: &CpFactors, k: usize) -> Result<Array2<f64>> {
    let unfolded = mode_unfold(x, k)?;
    let others = (0..3).rev().filter(|&m| m != k).map(|m| w.factor(m).view());
    let kr = khatri_rao_chain(others)?;
    Ok(unfolded.dot(&kr))
}

/// Input loadings `C[i, r]` (`I x R`).
fn loadings(w: &CpFactors, data: &TrainingSet) -> Result<Array2<f64>> {
    let r = w.rank();
    let mut c = Array2::zeros((data.len(), r));
    for i in 0..data.len() {
        c.row_mut(i)
            .assign(&leading_loadings(&data.input(i)?, &w.factors()[..3]));
    }
    Ok(c)
}

pub fn normal_equations(
    w: &CpFactors,
    data: &TrainingSet,
    lambda: f64,
    mode: usize,
) -> Result<NormalEquations> {
    super::check_model_data(w, data)?;
    let rank = w.rank();
    let grams = w.grams();
    let penalty = hadamard_except(&grams, &[mode]);
    match mode {
        PERSON | INPUT_ROW | INPUT_COL => {
            let n = w.factor(mode).nrows();
            let out_gram = hadamard_except(&grams, &[0, 1, 2]);
            let b = &w.factors()[3..];
            let mut matrix = Array2::<f64>::zeros((n * rank, n * rank));
            let mut rhs = Array2::<f64>::zeros((n * rank, 1));
            for i in 0..data.len() {
                let z = input_design(&data.input(i)?, w, mode)?;
                let t = leading_loadings(&data.target(i)?, b);
                let zf = Array1::from_iter(z.iter().copied());
                for a in 0..n * rank {
                    let za = zf[a];
                    if za == 0.0 {
                        continue;
                    }
                    let ra = a % rank;
                    rhs[[a, 0]] += za * t[ra];
                    let mut row = matrix.row_mut(a);
                    for (bi, (&zb, m)) in zf.iter().zip(row.iter_mut()).enumerate() {
                        *m += za * zb * out_gram[[ra, bi % rank]];
                    }
                }
            }
            for p in 0..n {
                for r1 in 0..rank {
                    for r2 in 0..rank {
                        matrix[[p * rank + r1, p * rank + r2]] += lambda * penalty[[r1, r2]];
                    }
                }
            }
            Ok(NormalEquations { mode, matrix, rhs })
        }
        OUTPUT_ROW | OUTPUT_COL => {
            let c = loadings(w, data)?;
            let other = if mode == OUTPUT_ROW {
                OUTPUT_COL
            } else {
                OUTPUT_ROW
            };
            let targets = data.targets();
            // targets are I x d1 x d2; tensor mode 1 is output-row, 2 is output-col
            let tensor_mode = mode - 2;
            let unfolded = mode_unfold(targets, tensor_mode)?;
            let kr = khatri_rao_chain([w.factor(other).view(), c.view()])?;
            let rhs = unfolded.dot(&kr).reversed_axes();
            let mut matrix = c.t().dot(&c) * &grams[other];
            matrix.scaled_add(lambda, &penalty);
            Ok(NormalEquations {
                mode,
                matrix,
                rhs: rhs.as_standard_layout().into_owned(),
            })
        }
        _ => Err(Error::ModeOutOfRange { mode, order: 5 }),
    }
}

impl NormalEquations {
    fn to_factor(&self, x: Array2<f64>, n: usize, rank: usize) -> Array2<f64> {
        match self.mode {
            OUTPUT_ROW | OUTPUT_COL => x.reversed_axes().as_standard_layout().into_owned(),
            _ => x
                .into_shape_with_order((n, rank))
                .expect("solution length is n * R"),
        }
    }

    fn unknowns_of(&self, a: &Array2<f64>) -> Array2<f64> {
        match self.mode {
            OUTPUT_ROW | OUTPUT_COL => a.t().to_owned(),
            _ => Array2::from_shape_vec((a.len(), 1), a.iter().copied().collect())
                .expect("column vector"),
        }
    }

    /// Solves for the factor that minimizes the objective with the others held fixed.
    pub fn solve(&self, n: usize, rank: usize, lambda: f64) -> Result<Array2<f64>> {
        if self.rhs.iter().all(|&v| v == 0.0) {
            return Ok(Array2::zeros((n, rank)));
        }
        let mut matrix = self.matrix.clone();
        if lambda == 0.0 {
            matrix.diag_mut().mapv_inplace(|d| d + ZERO_LAMBDA_JITTER);
        }
        let x = solve_spd(matrix.view(), self.rhs.view())
            .ok_or_else(|| Error::SingularSystem(FACTOR_NAMES[self.mode].to_string()))?;
        Ok(self.to_factor(x, n, rank))
    }

    /// Gradient of the objective with respect to the factor, shaped like the factor.
    pub fn gradient(&self, factor: &Array2<f64>) -> Array2<f64> {
        let v = self.unknowns_of(factor);
        let g = (self.matrix.dot(&v) - &self.rhs) * 2.0;
        self.to_factor(g, factor.nrows(), factor.ncols())
    }
}

/// Analytic gradient of `RSS + lambda ||W||^2` with respect to factor `mode`.
pub fn gradient(
    w: &CpFactors,
    data: &TrainingSet,
    lambda: f64,
    mode: usize,
) -> Result<Array2<f64>> {
    let ne = normal_equations(w, data, lambda, mode)?;
    Ok(ne.gradient(w.factor(mode)))
}

/// Replaces factor `mode` with its exact block minimizer.
pub fn update_factor(
    w: &mut CpFactors,
    data: &TrainingSet,
    lambda: f64,
    mode: usize,
) -> Result<()> {
    let ne = normal_equations(w, data, lambda, mode)?;
    let (n, rank) = w.factor(mode).dim();
    let solved = ne.solve(n, rank, lambda)?;
    w.factor_mut(mode).assign(&solved);
    Ok(())
}

/// Objectives after each block update of one sweep, in [`UPDATE_ORDER`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepOutcome {
    pub after_update: [f64; 5],
}

impl SweepOutcome {
    pub fn objective(&self) -> f64 {
        self.after_update[4]
    }
}

/// Rescales each rank-one term so its five factor columns share one norm; `W` is unchanged.
fn balance_columns(w: &mut CpFactors) {
    let order = w.order();
    for r in 0..w.rank() {
        let norms: Vec<f64> = (0..order)
            .map(|k| w.factor(k).column(r).dot(&w.factor(k).column(r)).sqrt())
            .collect();
        if norms.iter().any(|&n| n == 0.0 || !n.is_finite()) {
            continue;
        }
        let geo = norms.iter().map(|n| n.ln()).sum::<f64>() / order as f64;
        let target = geo.exp();
        for (k, n) in norms.into_iter().enumerate() {
            w.factor_mut(k)
                .column_mut(r)
                .mapv_inplace(|v| v * target / n);
        }
    }
}

/// One ALS sweep over the five factors in [`UPDATE_ORDER`].
pub fn als_sweep(w: &mut CpFactors, data: &TrainingSet, lambda: f64) -> Result<SweepOutcome> {
    let mut after_update = [0.0; 5];
    for (slot, &mode) in UPDATE_ORDER.iter().enumerate() {
        update_factor(w, data, lambda, mode)?;
        after_update[slot] = super::objective_of(w, data, lambda)?;
    }
    balance_columns(w);
    Ok(SweepOutcome { after_update })
}

/// Per-sample input loadings, exposed for diagnostics.
pub fn input_loadings(w: &CpFactors, data: &TrainingSet) -> Result<Array2<f64>> {
    super::check_model_data(w, data)?;
    loadings(w, data)
}
