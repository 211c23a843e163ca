//! Small symmetric positive (semi)definite solver used by the ALS updates.

use ndarray::{Array2, ArrayView2};

/// Solves `a * x = b` for symmetric PSD `a` by Cholesky.
///
/// Rows whose diagonal entry is exactly zero belong to the null space of a PSD
/// matrix; their solution entries are fixed to zero provided the matching rows
/// of `b` are zero too. Returns `None` if the reduced system is not positive
/// definite or the right-hand side is inconsistent.
pub(crate) fn solve_spd(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Option<Array2<f64>> {
    let n = a.nrows();
    debug_assert_eq!(a.ncols(), n);
    debug_assert_eq!(b.nrows(), n);
    let m = b.ncols();

    let active: Vec<usize> = (0..n).filter(|&i| a[[i, i]] != 0.0).collect();
    for i in (0..n).filter(|i| a[[*i, *i]] == 0.0) {
        if b.row(i).iter().any(|&v| v != 0.0) {
            return None;
        }
    }
    let k = active.len();
    let mut l = Array2::<f64>::zeros((k, k));
    for (ii, &i) in active.iter().enumerate() {
        for (jj, &j) in active.iter().enumerate().take(ii + 1) {
            let mut s = a[[i, j]];
            for p in 0..jj {
                s -= l[[ii, p]] * l[[jj, p]];
            }
            if ii == jj {
                if s <= 0.0 || !s.is_finite() {
                    return None;
                }
                l[[ii, ii]] = s.sqrt();
            } else {
                l[[ii, jj]] = s / l[[jj, jj]];
            }
        }
    }

    let mut x = Array2::<f64>::zeros((n, m));
    let mut y = vec![0.0; k];
    for col in 0..m {
        for ii in 0..k {
            let mut s = b[[active[ii], col]];
            for p in 0..ii {
                s -= l[[ii, p]] * y[p];
            }
            y[ii] = s / l[[ii, ii]];
        }
        for ii in (0..k).rev() {
            let mut s = y[ii];
            for p in ii + 1..k {
                s -= l[[p, ii]] * x[[active[p], col]];
            }
            x[[active[ii], col]] = s / l[[ii, ii]];
        }
    }
    Some(x)
}
