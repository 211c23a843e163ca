//! Saliency-map algebra: ground truth from fixations, universal maps,
//! person-specific difference maps, resampling and cropping.

use ndarray::{Array2, ArrayView2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Non-negative, finite `d1 x d2` raster (rows x columns).
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    values: Array2<f64>,
}

/// `PSM - USM`; sign unrestricted.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferenceMap {
    values: Array2<f64>,
}

fn check_geometry(values: &Array2<f64>) -> Result<()> {
    if values.nrows() == 0 || values.ncols() == 0 {
        return Err(Error::InvalidShape(format!(
            "map geometry {}x{} must be positive",
            values.nrows(),
            values.ncols()
        )));
    }
    Ok(())
}

impl SaliencyMap {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        check_geometry(&values)?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("saliency map".into()));
        }
        if values.iter().any(|&v| v < 0.0) {
            return Err(Error::Negative("saliency map".into()));
        }
        Ok(Self { values })
    }

    pub fn zeros(d1: usize, d2: usize) -> Result<Self> {
        Self::new(Array2::zeros((d1, d2)))
    }

    pub fn from_vec(d1: usize, d2: usize, values: Vec<f64>) -> Result<Self> {
        let values = Array2::from_shape_vec((d1, d2), values)
            .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        Self::new(values)
    }

    /// Clamps negatives (and maps non-finite values to zero) before wrapping.
    pub fn from_clamped(mut values: Array2<f64>) -> Result<Self> {
        values.mapv_inplace(|v| if v.is_finite() && v > 0.0 { v } else { 0.0 });
        Self::new(values)
    }

    pub fn d1(&self) -> usize {
        self.values.nrows()
    }

    pub fn d2(&self) -> usize {
        self.values.ncols()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.values.dim()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[[row, col]]
    }

    pub fn sum(&self) -> f64 {
        self.values.sum()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn is_all_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    /// Scales so the maximum is 1; an all-zero map is returned unchanged.
    pub fn max_normalized(&self) -> SaliencyMap {
        let m = self.max();
        if m == 0.0 {
            return self.clone();
        }
        SaliencyMap {
            values: self.values.mapv(|v| v / m),
        }
    }
}

impl DifferenceMap {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        check_geometry(&values)?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("difference map".into()));
        }
        Ok(Self { values })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.values.dim()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }
}

/// Single gaze point; `x` is the pixel column, `y` the pixel row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fixation {
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixationSet {
    pub image_id: String,
    pub person_id: String,
    pub points: Vec<Fixation>,
}

/// Pixel rectangle: top-left `(row, col)` and extent `h x w`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BBox {
    pub row: usize,
    pub col: usize,
    pub h: usize,
    pub w: usize,
}

impl BBox {
    pub fn fits(&self, d1: usize, d2: usize) -> bool {
        self.h >= 1 && self.w >= 1 && self.row + self.h <= d1 && self.col + self.w <= d2
    }

    pub fn area(&self) -> usize {
        self.h * self.w
    }
}

/// Default Gaussian width for ground-truth maps: image width / 25.
pub fn default_sigma(d2: usize) -> f64 {
    d2 as f64 / 25.0
}

/// Half-sample symmetric reflection of an index into `[0, n)`.
fn reflect(j: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let m = j.rem_euclid(period);
    if m >= n as isize {
        (period - 1 - m) as usize
    } else {
        m as usize
    }
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (4.0 * sigma + 0.5) as isize;
    let raw: Vec<f64> = (-radius..=radius)
        .map(|i| (-0.5 * (i as f64 / sigma).powi(2)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// Separable isotropic Gaussian blur, kernel truncated at 4 sigma, reflect padding.
pub fn gaussian_blur(values: ArrayView2<'_, f64>, sigma: f64) -> Array2<f64> {
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as isize;
    let (d1, d2) = values.dim();
    let mut horizontal = Array2::zeros((d1, d2));
    for r in 0..d1 {
        for c in 0..d2 {
            let mut acc = 0.0;
            for (k, w) in kernel.iter().enumerate() {
                let j = reflect(c as isize + k as isize - radius, d2);
                acc += w * values[[r, j]];
            }
            horizontal[[r, c]] = acc;
        }
    }
    let mut out = Array2::zeros((d1, d2));
    for r in 0..d1 {
        for c in 0..d2 {
            let mut acc = 0.0;
            for (k, w) in kernel.iter().enumerate() {
                let i = reflect(r as isize + k as isize - radius, d1);
                acc += w * horizontal[[i, c]];
            }
            out[[r, c]] = acc;
        }
    }
    out
}

/// Ground-truth map: fixation-count raster blurred by a Gaussian of std `sigma`, max-normalized.
pub fn gt_map_from_fixations(
    fixations: &FixationSet,
    d1: usize,
    d2: usize,
    sigma: f64,
) -> Result<SaliencyMap> {
    if fixations.points.is_empty() {
        return Err(Error::ExcludedSample(format!(
            "no fixations for person {} on image {}",
            fixations.person_id, fixations.image_id
        )));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    let mut raster = Array2::<f64>::zeros((d1, d2));
    for p in &fixations.points {
        if !(p.x >= 0.0 && p.y >= 0.0 && p.x < d2 as f64 && p.y < d1 as f64) {
            return Err(Error::InvalidArgument(format!(
                "fixation ({}, {}) outside {d1}x{d2} image {}",
                p.x, p.y, fixations.image_id
            )));
        }
        raster[[p.y as usize, p.x as usize]] += 1.0;
    }
    SaliencyMap::new(gaussian_blur(raster.view(), sigma)).map(|m| m.max_normalized())
}

fn same_dims(a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a != b {
        return Err(Error::ShapeMismatch(format!(
            "map geometry {}x{} vs {}x{}",
            a.0, a.1, b.0, b.1
        )));
    }
    Ok(())
}

/// Pixel-wise mean of equally sized maps.
pub fn usm_mean(maps: &[SaliencyMap]) -> Result<SaliencyMap> {
    let first = maps
        .first()
        .ok_or_else(|| Error::InvalidArgument("mean of zero maps".into()))?;
    let mut acc = Array2::<f64>::zeros(first.dims());
    for m in maps {
        same_dims(first.dims(), m.dims())?;
        acc += &m.values;
    }
    acc /= maps.len() as f64;
    SaliencyMap::new(acc)
}

pub fn difference_map(psm: &SaliencyMap, usm: &SaliencyMap) -> Result<DifferenceMap> {
    same_dims(psm.dims(), usm.dims())?;
    DifferenceMap::new(&psm.values - &usm.values)
}

/// `M + U`, negatives clamped to zero.
pub fn compose_psm(diff: &DifferenceMap, usm: &SaliencyMap) -> Result<SaliencyMap> {
    same_dims(diff.dims(), usm.dims())?;
    let mut out = &diff.values + &usm.values;
    out.mapv_inplace(|v| v.max(0.0));
    SaliencyMap::new(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resample {
    /// Area average.
    Down,
    /// Bilinear interpolation on pixel centres.
    Up,
}

/// Weights `w[o][i]` of the box filter mapping `n_in` cells onto `n_out`.
fn area_weights(n_in: usize, n_out: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = n_in as f64 / n_out as f64;
    (0..n_out)
        .map(|o| {
            let lo = o as f64 * scale;
            let hi = (o + 1) as f64 * scale;
            let mut w = Vec::new();
            let mut i = lo.floor() as usize;
            while i < n_in && (i as f64) < hi {
                let overlap = (hi.min((i + 1) as f64) - lo.max(i as f64)).max(0.0);
                if overlap > 0.0 {
                    w.push((i, overlap / scale));
                }
                i += 1;
            }
            w
        })
        .collect()
}

fn bilinear_weights(n_in: usize, n_out: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = n_in as f64 / n_out as f64;
    (0..n_out)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (n_in - 1) as f64);
            let i0 = src.floor() as usize;
            let i1 = (i0 + 1).min(n_in - 1);
            let t = src - i0 as f64;
            if i1 == i0 || t == 0.0 {
                vec![(i0, 1.0)]
            } else {
                vec![(i0, 1.0 - t), (i1, t)]
            }
        })
        .collect()
}

pub(crate) fn resample_array(
    values: ArrayView2<'_, f64>,
    d1: usize,
    d2: usize,
    mode: Resample,
) -> Array2<f64> {
    let (n1, n2) = values.dim();
    if (n1, n2) == (d1, d2) {
        return values.to_owned();
    }
    let weights = match mode {
        Resample::Down => area_weights,
        Resample::Up => bilinear_weights,
    };
    let rows = weights(n1, d1);
    let cols = weights(n2, d2);
    let mut tmp = Array2::<f64>::zeros((n1, d2));
    for r in 0..n1 {
        for (c, wc) in cols.iter().enumerate() {
            tmp[[r, c]] = wc.iter().map(|&(j, w)| w * values[[r, j]]).sum();
        }
    }
    let mut out = Array2::<f64>::zeros((d1, d2));
    for (r, wr) in rows.iter().enumerate() {
        for c in 0..d2 {
            out[[r, c]] = wr.iter().map(|&(i, w)| w * tmp[[i, c]]).sum();
        }
    }
    out
}

pub fn resample(map: &SaliencyMap, d1: usize, d2: usize, mode: Resample) -> Result<SaliencyMap> {
    if d1 == 0 || d2 == 0 {
        return Err(Error::InvalidShape(format!("resample target {d1}x{d2}")));
    }
    SaliencyMap::from_clamped(resample_array(map.view(), d1, d2, mode))
}

pub fn crop(map: &SaliencyMap, bbox: BBox) -> Result<SaliencyMap> {
    if !bbox.fits(map.d1(), map.d2()) {
        return Err(Error::InvalidArgument(format!(
            "bbox {bbox:?} outside {}x{} map",
            map.d1(),
            map.d2()
        )));
    }
    let sub = map.values.slice(ndarray::s![
        bbox.row..bbox.row + bbox.h,
        bbox.col..bbox.col + bbox.w
    ]);
    SaliencyMap::new(sub.to_owned())
}

/// Pixel-wise `sum_k w_k * map_k`, clamped at zero.
pub(crate) fn weighted_sum(maps: &[&SaliencyMap], weights: &[f64]) -> Result<SaliencyMap> {
    let first = maps
        .first()
        .ok_or_else(|| Error::InvalidArgument("weighted sum of zero maps".into()))?;
    if maps.len() != weights.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} maps vs {} weights",
            maps.len(),
            weights.len()
        )));
    }
    let mut acc = Array2::<f64>::zeros(first.dims());
    for (m, &w) in maps.iter().zip(weights) {
        same_dims(first.dims(), m.dims())?;
        Zip::from(&mut acc)
            .and(&m.values)
            .for_each(|a, &v| *a += w * v);
    }
    SaliencyMap::from_clamped(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn fixset(points: &[(f64, f64)]) -> FixationSet {
        FixationSet {
            image_id: "img".into(),
            person_id: "p".into(),
            points: points.iter().map(|&(x, y)| Fixation { x, y }).collect(),
        }
    }

    #[test]
    fn single_fixation_peak_and_symmetry() {
        let m = gt_map_from_fixations(&fixset(&[(15.0, 15.0)]), 31, 31, 2.0).unwrap();
        assert_eq!(m.get(15, 15), 1.0);
        for d in 1..6 {
            let v = m.get(15, 15 + d);
            assert!((m.get(15, 15 - d) - v).abs() < 1e-15);
            assert!((m.get(15 + d, 15) - v).abs() < 1e-15);
            assert!((m.get(15 - d, 15) - v).abs() < 1e-15);
        }
    }

    #[test]
    fn value_at_one_sigma_is_exp_minus_half() {
        let m = gt_map_from_fixations(&fixset(&[(20.0, 20.0)]), 41, 41, 2.0).unwrap();
        let expected = (-0.5f64).exp();
        assert!((m.get(20, 22) / m.get(20, 20) - expected).abs() / expected < 0.02);
    }

    #[test]
    fn two_far_fixations_give_two_unit_peaks() {
        let m = gt_map_from_fixations(&fixset(&[(10.0, 10.0), (40.0, 10.0)]), 21, 51, 2.0).unwrap();
        assert!((m.get(10, 10) - 1.0).abs() < 1e-12);
        assert!((m.get(10, 40) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gt_map_errors() {
        assert!(matches!(
            gt_map_from_fixations(&fixset(&[]), 4, 4, 1.0),
            Err(Error::ExcludedSample(_))
        ));
        assert!(gt_map_from_fixations(&fixset(&[(4.0, 0.0)]), 4, 4, 1.0).is_err());
        assert!(gt_map_from_fixations(&fixset(&[(1.0, 1.0)]), 4, 4, 0.0).is_err());
    }

    #[test]
    fn gt_map_is_permutation_invariant() {
        let pts = [(1.0, 2.0), (7.5, 3.2), (3.0, 9.9), (1.0, 2.0)];
        let mut rev = pts;
        rev.reverse();
        let a = gt_map_from_fixations(&fixset(&pts), 12, 10, 1.3).unwrap();
        let b = gt_map_from_fixations(&fixset(&rev), 12, 10, 1.3).unwrap();
        assert_eq!(a, b);
        assert!(a.sum() > 0.0);
    }

    #[test]
    fn reflect_padding_indices() {
        assert_eq!(reflect(-1, 4), 0);
        assert_eq!(reflect(-2, 4), 1);
        assert_eq!(reflect(4, 4), 3);
        assert_eq!(reflect(5, 4), 2);
        assert_eq!(reflect(9, 4), 1);
    }

    #[test]
    fn usm_of_two_maps() {
        let a = SaliencyMap::new(array![[0.0, 1.0]]).unwrap();
        let b = SaliencyMap::new(array![[1.0, 0.0]]).unwrap();
        assert_eq!(
            usm_mean(&[a.clone(), b]).unwrap().values(),
            &array![[0.5, 0.5]]
        );
        assert_eq!(usm_mean(std::slice::from_ref(&a)).unwrap(), a);
        assert_eq!(usm_mean(&[a.clone(), a.clone(), a.clone()]).unwrap(), a);
        assert!(usm_mean(&[]).is_err());
        let c = SaliencyMap::zeros(2, 1).unwrap();
        assert!(usm_mean(&[a, c]).is_err());
    }

    #[test]
    fn difference_and_compose() {
        let s = SaliencyMap::new(array![[0.2, 0.9], [0.0, 0.4]]).unwrap();
        let u = SaliencyMap::new(array![[0.5, 0.5], [0.1, 0.1]]).unwrap();
        let d = difference_map(&s, &u).unwrap();
        assert_eq!(d.values(), &(s.values() - u.values()));
        assert_eq!(compose_psm(&d, &u).unwrap(), s);
        assert!(difference_map(&s, &s)
            .unwrap()
            .values()
            .iter()
            .all(|&v| v == 0.0));
        let zero = DifferenceMap::new(Array2::zeros((2, 2))).unwrap();
        assert_eq!(compose_psm(&zero, &u).unwrap(), u);
        let neg = DifferenceMap::new(-u.values().clone()).unwrap();
        assert!(compose_psm(&neg, &u).unwrap().is_all_zero());
    }

    #[test]
    fn resample_constants_and_identity() {
        let ones = SaliencyMap::new(Array2::ones((4, 4))).unwrap();
        let down = resample(&ones, 2, 2, Resample::Down).unwrap();
        assert_eq!(down.values(), &Array2::<f64>::ones((2, 2)));
        let c = SaliencyMap::new(Array2::from_elem((3, 5), 0.7)).unwrap();
        for (d1, d2) in [(7, 11), (2, 3), (3, 5)] {
            for mode in [Resample::Down, Resample::Up] {
                let r = resample(&c, d1, d2, mode).unwrap();
                assert!(r.values().iter().all(|&v| (v - 0.7).abs() < 1e-14));
            }
        }
        let m = SaliencyMap::new(array![[0.1, 0.2], [0.3, 0.4]]).unwrap();
        assert_eq!(resample(&m, 2, 2, Resample::Up).unwrap(), m);
    }

    #[test]
    fn area_average_preserves_mass_for_integer_ratio() {
        let v = Array2::from_shape_fn((8, 6), |(i, j)| ((i * 7 + j * 3) % 5) as f64);
        let m = SaliencyMap::new(v).unwrap();
        let down = resample(&m, 4, 2, Resample::Down).unwrap();
        let mass = down.sum() * 6.0;
        assert!((mass - m.sum()).abs() / m.sum() < 1e-12);
    }

    #[test]
    fn crop_cases() {
        let m =
            SaliencyMap::new(Array2::from_shape_fn((4, 5), |(i, j)| (i * 5 + j) as f64)).unwrap();
        let full = BBox {
            row: 0,
            col: 0,
            h: 4,
            w: 5,
        };
        assert_eq!(crop(&m, full).unwrap(), m);
        let one = crop(
            &m,
            BBox {
                row: 2,
                col: 3,
                h: 1,
                w: 1,
            },
        )
        .unwrap();
        assert_eq!(one.values(), &array![[13.0]]);
        let sub = crop(
            &m,
            BBox {
                row: 1,
                col: 2,
                h: 2,
                w: 3,
            },
        )
        .unwrap();
        for r in 0..2 {
            for c in 0..3 {
                assert_eq!(sub.get(r, c), ((r + 1) * 5 + c + 2) as f64);
            }
        }
        assert!(crop(
            &m,
            BBox {
                row: 3,
                col: 0,
                h: 2,
                w: 1
            }
        )
        .is_err());
    }

    #[test]
    fn saliency_map_rejects_bad_values() {
        assert!(SaliencyMap::new(array![[-0.1]]).is_err());
        assert!(SaliencyMap::new(array![[f64::NAN]]).is_err());
        assert!(SaliencyMap::new(Array2::zeros((0, 3))).is_err());
        assert!(DifferenceMap::new(array![[-0.1]]).is_ok());
    }
}
