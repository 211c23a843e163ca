//! Dense multi-way arrays and CP (CANDECOMP/PARAFAC) factor algebra.
//!
//! Unfolding convention: the mode-`k` unfolding of a tensor with extents
//! `(n_0, .., n_{Q-1})` is an `n_k x prod(n_m, m != k)` matrix whose column
//! index runs over the remaining modes in increasing order with the
//! first-listed remaining mode varying fastest. With this convention
//! `X_(k) = A_k (A_{Q-1} ⊙ .. ⊙ A_{k+1} ⊙ A_{k-1} ⊙ .. ⊙ A_0)^T` for a CP
//! tensor, where `⊙` is [`khatri_rao`].

use ndarray::{Array1, Array2, ArrayD, ArrayView2, ArrayViewD, Axis, IxDyn};

use crate::error::{Error, Result};

/// Default cap on the number of entries [`cp_reconstruct`] will materialize.
pub const DEFAULT_MATERIALIZE_CAP: usize = 10_000_000;

/// Row-major dense tensor of order >= 1 with positive extents.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    data: ArrayD<f64>,
}

fn check_extents(shape: &[usize]) -> Result<()> {
    if shape.is_empty() {
        return Err(Error::InvalidShape(
            "tensor order must be at least 1".into(),
        ));
    }
    if shape.contains(&0) {
        return Err(Error::InvalidShape(format!("zero extent in {shape:?}")));
    }
    Ok(())
}

impl DenseTensor {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        check_extents(&shape)?;
        let expected: usize = shape.iter().product();
        if expected != values.len() {
            return Err(Error::ShapeMismatch(format!(
                "shape {shape:?} needs {expected} values, got {}",
                values.len()
            )));
        }
        let data = ArrayD::from_shape_vec(IxDyn(&shape), values)
            .map_err(|e| Error::InvalidShape(e.to_string()))?;
        Ok(Self { data })
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        check_extents(shape)?;
        Ok(Self {
            data: ArrayD::zeros(IxDyn(shape)),
        })
    }

    pub fn from_array(data: ArrayD<f64>) -> Result<Self> {
        check_extents(data.shape())?;
        Ok(Self {
            data: data.as_standard_layout().into_owned(),
        })
    }

    pub fn shape(&self) -> &[usize] {
        self.data.shape()
    }

    pub fn order(&self) -> usize {
        self.data.ndim()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Row-major flat values.
    pub fn values(&self) -> &[f64] {
        self.data
            .as_slice()
            .expect("DenseTensor is kept in standard layout")
    }

    pub fn view(&self) -> ArrayViewD<'_, f64> {
        self.data.view()
    }

    pub fn as_array(&self) -> &ArrayD<f64> {
        &self.data
    }

    pub fn into_array(self) -> ArrayD<f64> {
        self.data
    }

    pub fn get(&self, index: &[usize]) -> Option<f64> {
        self.data.get(IxDyn(index)).copied()
    }

    /// Sub-tensor obtained by fixing the leading index.
    pub fn slice_leading(&self, i: usize) -> Result<DenseTensor> {
        if self.order() < 2 {
            return Err(Error::InvalidShape(
                "slicing the leading mode needs order >= 2".into(),
            ));
        }
        if i >= self.shape()[0] {
            return Err(Error::ShapeMismatch(format!(
                "index {i} out of range for leading extent {}",
                self.shape()[0]
            )));
        }
        DenseTensor::from_array(self.data.index_axis(Axis(0), i).to_owned())
    }

    /// Stacks equally shaped tensors along a new leading mode.
    pub fn stack(parts: &[DenseTensor]) -> Result<DenseTensor> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidShape("cannot stack zero tensors".into()))?;
        let mut shape = vec![parts.len()];
        shape.extend_from_slice(first.shape());
        let mut values = Vec::with_capacity(shape.iter().product());
        for p in parts {
            if p.shape() != first.shape() {
                return Err(Error::ShapeMismatch(format!(
                    "cannot stack {:?} with {:?}",
                    p.shape(),
                    first.shape()
                )));
            }
            values.extend_from_slice(p.values());
        }
        DenseTensor::new(shape, values)
    }

    pub fn frobenius_norm_sq(&self) -> f64 {
        self.values().iter().map(|v| v * v).sum()
    }
}

/// Mode-`mode` unfolding (see the module docs for the column order).
pub fn mode_unfold(t: &DenseTensor, mode: usize) -> Result<Array2<f64>> {
    let order = t.order();
    if mode >= order {
        return Err(Error::ModeOutOfRange { mode, order });
    }
    let mut axes = vec![mode];
    axes.extend((0..order).rev().filter(|&m| m != mode));
    let rows = t.shape()[mode];
    let cols = t.len() / rows;
    let permuted = t.data.view().permuted_axes(IxDyn(&axes));
    let flat: Vec<f64> = permuted.iter().copied().collect();
    Ok(Array2::from_shape_vec((rows, cols), flat).expect("unfolding sizes agree"))
}

/// Inverse of [`mode_unfold`].
pub fn mode_refold(m: &Array2<f64>, mode: usize, shape: &[usize]) -> Result<DenseTensor> {
    check_extents(shape)?;
    let order = shape.len();
    if mode >= order {
        return Err(Error::ModeOutOfRange { mode, order });
    }
    let total: usize = shape.iter().product();
    if m.nrows() != shape[mode] || m.len() != total {
        return Err(Error::ShapeMismatch(format!(
            "{}x{} matrix cannot refold into {shape:?} along mode {mode}",
            m.nrows(),
            m.ncols()
        )));
    }
    let mut axes = vec![mode];
    axes.extend((0..order).rev().filter(|&k| k != mode));
    let permuted_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
    let flat: Vec<f64> = m.iter().copied().collect();
    let permuted = ArrayD::from_shape_vec(IxDyn(&permuted_shape), flat)
        .map_err(|e| Error::InvalidShape(e.to_string()))?;
    let mut inverse = vec![0; order];
    for (pos, &a) in axes.iter().enumerate() {
        inverse[a] = pos;
    }
    DenseTensor::from_array(permuted.permuted_axes(IxDyn(&inverse)))
}

/// Column-wise Kronecker product; row `i * b.nrows() + j` of column `r` is `a[i,r] * b[j,r]`.
pub fn khatri_rao(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if a.ncols() != b.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "khatri-rao needs equal column counts, got {} and {}",
            a.ncols(),
            b.ncols()
        )));
    }
    let (n, m, r) = (a.nrows(), b.nrows(), a.ncols());
    let mut out = Array2::zeros((n * m, r));
    for i in 0..n {
        for j in 0..m {
            let row = i * m + j;
            for k in 0..r {
                out[[row, k]] = a[[i, k]] * b[[j, k]];
            }
        }
    }
    Ok(out)
}

/// Khatri-Rao product of a sequence, left to right.
pub fn khatri_rao_chain<'a, I>(mats: I) -> Result<Array2<f64>>
where
    I: IntoIterator<Item = ArrayView2<'a, f64>>,
{
    let mut iter = mats.into_iter();
    let first = iter
        .next()
        .ok_or_else(|| Error::InvalidArgument("empty khatri-rao chain".into()))?;
    let mut acc = first.to_owned();
    for m in iter {
        acc = khatri_rao(acc.view(), m)?;
    }
    Ok(acc)
}

/// CP-factored tensor: `T[i_0..i_{Q-1}] = sum_r prod_k factors[k][i_k, r]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CpFactors {
    rank: usize,
    factors: Vec<Array2<f64>>,
}

impl CpFactors {
    pub fn new(factors: Vec<Array2<f64>>) -> Result<Self> {
        let first = factors
            .first()
            .ok_or_else(|| Error::InvalidShape("CP model needs at least one factor".into()))?;
        let rank = first.ncols();
        if rank == 0 {
            return Err(Error::InvalidShape("CP rank must be positive".into()));
        }
        for (k, f) in factors.iter().enumerate() {
            if f.ncols() != rank {
                return Err(Error::ShapeMismatch(format!(
                    "factor {k} has {} columns, expected {rank}",
                    f.ncols()
                )));
            }
            if f.nrows() == 0 {
                return Err(Error::InvalidShape(format!("factor {k} has zero rows")));
            }
        }
        Ok(Self { rank, factors })
    }

    pub fn zeros(shape: &[usize], rank: usize) -> Result<Self> {
        check_extents(shape)?;
        Self::new(shape.iter().map(|&n| Array2::zeros((n, rank))).collect())
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn order(&self) -> usize {
        self.factors.len()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.factors.iter().map(|f| f.nrows()).collect()
    }

    pub fn factors(&self) -> &[Array2<f64>] {
        &self.factors
    }

    pub fn factor(&self, k: usize) -> &Array2<f64> {
        &self.factors[k]
    }

    pub(crate) fn factor_mut(&mut self, k: usize) -> &mut Array2<f64> {
        &mut self.factors[k]
    }

    pub fn into_factors(self) -> Vec<Array2<f64>> {
        self.factors
    }

    /// Gram matrices `A_k^T A_k` of every factor.
    pub fn grams(&self) -> Vec<Array2<f64>> {
        self.factors.iter().map(|f| f.t().dot(f)).collect()
    }

    /// `||T||_F^2` without materializing: sum of entries of the Hadamard product of all Grams.
    pub fn frobenius_norm_sq(&self) -> f64 {
        let mut acc = Array2::<f64>::ones((self.rank, self.rank));
        for g in self.grams() {
            acc *= &g;
        }
        acc.sum()
    }
}

/// Materializes a CP tensor. Refuses when the result would exceed `cap` entries.
pub fn cp_reconstruct(f: &CpFactors, cap: usize) -> Result<DenseTensor> {
    let shape = f.shape();
    let size = shape
        .iter()
        .try_fold(1usize, |acc, &n| acc.checked_mul(n))
        .unwrap_or(usize::MAX);
    if size > cap {
        return Err(Error::SizeCapExceeded { size, cap });
    }
    let rows = khatri_rao_chain(f.factors.iter().map(|m| m.view()))?;
    let values = rows.sum_axis(Axis(1)).to_vec();
    DenseTensor::new(shape, values)
}

/// Per-rank loadings `c_r = sum_i x[i] * prod_{k<Q} A_k[i_k, r]` over the leading `Q = order(x)` factors.
pub(crate) fn leading_loadings(x: &DenseTensor, factors: &[Array2<f64>]) -> Array1<f64> {
    let rank = factors[0].ncols();
    let q = factors.len();
    // Contract modes from last to first; `acc` has shape (prod of leading extents) x R.
    let last = &factors[q - 1];
    let n_last = last.nrows();
    let lead = x.len() / n_last;
    let x2 = ArrayView2::from_shape((lead, n_last), x.values()).expect("extents agree");
    let mut acc = x2.dot(last);
    for k in (0..q - 1).rev() {
        let f = &factors[k];
        let n = f.nrows();
        let outer = acc.nrows() / n;
        let mut next = Array2::zeros((outer, rank));
        for a in 0..outer {
            for b in 0..n {
                let row = a * n + b;
                for r in 0..rank {
                    next[[a, r]] += acc[[row, r]] * f[[b, r]];
                }
            }
        }
        acc = next;
    }
    debug_assert_eq!(acc.nrows(), 1);
    acc.row(0).to_owned()
}

/// Sum over r of `loadings[r]` times the outer product of the r-th columns of `factors`.
pub(crate) fn expand_loadings(
    loadings: &Array1<f64>,
    factors: &[Array2<f64>],
) -> Result<DenseTensor> {
    let shape: Vec<usize> = factors.iter().map(|f| f.nrows()).collect();
    let mut acc = loadings.clone().insert_axis(Axis(0));
    for f in factors {
        acc = khatri_rao(acc.view(), f.view())?;
    }
    DenseTensor::new(shape, acc.sum_axis(Axis(1)).to_vec())
}

/// Contracted product `<x, W>_q` over the leading `q` modes of a CP-factored `W`.
///
/// Runs entirely on the factors; `W` is never materialized.
pub fn contract_leading(x: &DenseTensor, w: &CpFactors, q: usize) -> Result<DenseTensor> {
    if q > x.order() {
        return Err(Error::ShapeMismatch(format!(
            "cannot contract {q} modes of an order-{} input",
            x.order()
        )));
    }
    if q != x.order() {
        return Err(Error::ShapeMismatch(format!(
            "input order {} must equal the number of contracted modes {q}",
            x.order()
        )));
    }
    if w.order() <= q {
        return Err(Error::ShapeMismatch(format!(
            "weight tensor of order {} leaves no output modes after contracting {q}",
            w.order()
        )));
    }
    let lead: Vec<usize> = w.factors[..q].iter().map(|f| f.nrows()).collect();
    if lead != x.shape() {
        return Err(Error::ShapeMismatch(format!(
            "input shape {:?} does not match leading weight extents {lead:?}",
            x.shape()
        )));
    }
    let c = leading_loadings(x, &w.factors[..q]);
    expand_loadings(&c, &w.factors[q..])
}
