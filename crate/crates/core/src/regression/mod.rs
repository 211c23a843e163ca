//! Tensor-to-matrix regression with a CP-rank-constrained weight tensor.
//!
//! A target person's map for image `i` is modelled as `<X_i, W>_3`, where `X_i`
//! stacks the `P` training persons' maps (`P x d1 x d2`) and `W` has shape
//! `P x d1 x d2 x d1 x d2` with CP rank at most `R`. `W` is fitted by
//! minimizing `sum_i ||Y_i - <X_i, W>_3||_F^2 + lambda ||W||_F^2` with
//! alternating ridge least squares over its five factor matrices.

pub mod als;
mod io;
mod sweep;

use ndarray::{Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::saliency::SaliencyMap;
use crate::tensor::{contract_leading, expand_loadings, leading_loadings, CpFactors, DenseTensor};

pub use io::{read_model, write_model, MODEL_MAGIC, MODEL_VERSION};
pub use sweep::{standard_grid, sweep_hyperparameters, HyperGrid, SweepRow};

/// Default regression resolution `(d1', d2')`.
pub const DEFAULT_WORKING_SHAPE: (usize, usize) = (32, 24);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegressionConfig {
    pub rank: usize,
    pub lambda: f64,
    pub max_sweeps: usize,
    pub rel_tol: f64,
    pub seed: u64,
    pub working_shape: (usize, usize),
    /// Subtract the per-pixel mean target before fitting and add it back on prediction.
    pub center_targets: bool,
}

impl Default for RegressionConfig {
    fn default() -> Self {
        Self {
            rank: 10,
            lambda: 1.0,
            max_sweeps: 200,
            rel_tol: 1e-6,
            seed: 0,
            working_shape: DEFAULT_WORKING_SHAPE,
            center_targets: false,
        }
    }
}

impl RegressionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 {
            return Err(Error::InvalidArgument("rank must be at least 1".into()));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "lambda must be finite and non-negative, got {}",
                self.lambda
            )));
        }
        if self.rel_tol.is_nan() || self.rel_tol <= 0.0 {
            return Err(Error::InvalidArgument("rel_tol must be positive".into()));
        }
        if self.max_sweeps == 0 {
            return Err(Error::InvalidArgument(
                "max_sweeps must be at least 1".into(),
            ));
        }
        if self.working_shape.0 == 0 || self.working_shape.1 == 0 {
            return Err(Error::InvalidArgument(
                "working shape must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Inputs `I x P x d1 x d2` and supervised target maps `I x d1 x d2`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    inputs: DenseTensor,
    targets: DenseTensor,
    persons: Vec<String>,
}

impl TrainingSet {
    pub fn new(inputs: DenseTensor, targets: DenseTensor) -> Result<Self> {
        let p = inputs.shape().get(1).copied().unwrap_or(0);
        let persons = (0..p).map(|i| format!("p{i}")).collect();
        Self::with_persons(inputs, targets, persons)
    }

    pub fn with_persons(
        inputs: DenseTensor,
        targets: DenseTensor,
        persons: Vec<String>,
    ) -> Result<Self> {
        if inputs.order() != 4 || targets.order() != 3 {
            return Err(Error::InvalidShape(format!(
                "inputs must be I x P x d1 x d2 and targets I x d1 x d2, got {:?} and {:?}",
                inputs.shape(),
                targets.shape()
            )));
        }
        if inputs.shape()[0] != targets.shape()[0] {
            return Err(Error::ShapeMismatch(format!(
                "{} inputs vs {} targets",
                inputs.shape()[0],
                targets.shape()[0]
            )));
        }
        if inputs.shape()[2..] != targets.shape()[1..] {
            return Err(Error::ShapeMismatch(format!(
                "input maps {:?} vs target maps {:?}",
                &inputs.shape()[2..],
                &targets.shape()[1..]
            )));
        }
        if persons.len() != inputs.shape()[1] {
            return Err(Error::ShapeMismatch(format!(
                "{} person ids for {} input persons",
                persons.len(),
                inputs.shape()[1]
            )));
        }
        for (name, t) in [("inputs", &inputs), ("targets", &targets)] {
            if t.values().iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("training {name}")));
            }
            if t.values().iter().any(|&v| v < 0.0) {
                return Err(Error::Negative(format!("training {name}")));
            }
        }
        Ok(Self {
            inputs,
            targets,
            persons,
        })
    }

    /// Builds a set from per-image person stacks and target maps.
    pub fn from_maps(
        inputs: &[Vec<SaliencyMap>],
        targets: &[SaliencyMap],
        persons: Vec<String>,
    ) -> Result<Self> {
        let stacks = inputs
            .iter()
            .map(|maps| maps_to_tensor(maps))
            .collect::<Result<Vec<_>>>()?;
        let targets = targets
            .iter()
            .map(map_to_tensor)
            .collect::<Result<Vec<_>>>()?;
        Self::with_persons(
            DenseTensor::stack(&stacks)?,
            DenseTensor::stack(&targets)?,
            persons,
        )
    }

    pub fn inputs(&self) -> &DenseTensor {
        &self.inputs
    }

    pub fn targets(&self) -> &DenseTensor {
        &self.targets
    }

    pub fn persons(&self) -> &[String] {
        &self.persons
    }

    pub fn len(&self) -> usize {
        self.inputs.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_persons(&self) -> usize {
        self.inputs.shape()[1]
    }

    pub fn map_shape(&self) -> (usize, usize) {
        (self.inputs.shape()[2], self.inputs.shape()[3])
    }

    pub fn input(&self, i: usize) -> Result<DenseTensor> {
        self.inputs.slice_leading(i)
    }

    pub fn target(&self, i: usize) -> Result<DenseTensor> {
        self.targets.slice_leading(i)
    }

    /// Sub-set with the given sample indices, in order.
    pub fn subset(&self, indices: &[usize]) -> Result<TrainingSet> {
        if indices.is_empty() {
            return Err(Error::InvalidArgument("empty training subset".into()));
        }
        let inputs = indices
            .iter()
            .map(|&i| self.input(i))
            .collect::<Result<Vec<_>>>()?;
        let targets = indices
            .iter()
            .map(|&i| self.target(i))
            .collect::<Result<Vec<_>>>()?;
        Ok(TrainingSet {
            inputs: DenseTensor::stack(&inputs)?,
            targets: DenseTensor::stack(&targets)?,
            persons: self.persons.clone(),
        })
    }
}

pub(crate) fn map_to_tensor(map: &SaliencyMap) -> Result<DenseTensor> {
    DenseTensor::new(
        vec![map.d1(), map.d2()],
        map.values().iter().copied().collect(),
    )
}

/// Stacks per-person maps into the `P x d1 x d2` input of one image.
pub fn maps_to_tensor(maps: &[SaliencyMap]) -> Result<DenseTensor> {
    let parts = maps.iter().map(map_to_tensor).collect::<Result<Vec<_>>>()?;
    DenseTensor::stack(&parts)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    pub weights: CpFactors,
    pub config: RegressionConfig,
    /// Objective at initialization followed by one value per completed sweep.
    pub objective_trace: Vec<f64>,
    pub persons: Vec<String>,
    /// Per-pixel target mean removed before fitting (`center_targets`).
    pub target_offset: Option<Array2<f64>>,
}

impl FittedModel {
    pub fn input_shape(&self) -> [usize; 3] {
        let s = self.weights.shape();
        [s[0], s[1], s[2]]
    }

    pub fn output_shape(&self) -> (usize, usize) {
        let s = self.weights.shape();
        (s[3], s[4])
    }

    pub fn sweeps(&self) -> usize {
        self.objective_trace.len().saturating_sub(1)
    }
}

/// Seeded initial factors: i.i.d. standard normal entries scaled by `1/sqrt(R)`.
pub fn init_factors(shape: &[usize], rank: usize, seed: u64) -> Result<CpFactors> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / (rank as f64).sqrt();
    let factors = shape
        .iter()
        .map(|&n| {
            Array2::from_shape_simple_fn((n, rank), || {
                let z: f64 = StandardNormal.sample(&mut rng);
                z * scale
            })
        })
        .collect();
    CpFactors::new(factors)
}

fn weight_shape(data: &TrainingSet) -> [usize; 5] {
    let (d1, d2) = data.map_shape();
    [data.n_persons(), d1, d2, d1, d2]
}

fn check_model_data(w: &CpFactors, data: &TrainingSet) -> Result<()> {
    if w.order() != 5 || w.shape() != weight_shape(data) {
        return Err(Error::ShapeMismatch(format!(
            "weights {:?} do not fit data {:?}",
            w.shape(),
            weight_shape(data)
        )));
    }
    Ok(())
}

/// Sum of squared residuals `sum_i ||Y_i - <X_i, W>_3||_F^2`.
pub fn residual_sum_of_squares(w: &CpFactors, data: &TrainingSet) -> Result<f64> {
    check_model_data(w, data)?;
    let f = w.factors();
    let mut total = 0.0;
    for i in 0..data.len() {
        let c = leading_loadings(&data.input(i)?, &f[..3]);
        let pred = expand_loadings(&c, &f[3..])?;
        let target = data.target(i)?;
        total += pred
            .values()
            .iter()
            .zip(target.values())
            .map(|(p, y)| (y - p).powi(2))
            .sum::<f64>();
    }
    Ok(total)
}

/// Penalized objective `RSS + lambda ||W||_F^2` with the penalty taken from factor Grams.
pub fn objective_of(w: &CpFactors, data: &TrainingSet, lambda: f64) -> Result<f64> {
    Ok(residual_sum_of_squares(w, data)? + lambda * w.frobenius_norm_sq())
}

/// Objective of a fitted model; centred models are scored against their centred targets.
pub fn objective(model: &FittedModel, data: &TrainingSet, lambda: f64) -> Result<f64> {
    match &model.target_offset {
        None => objective_of(&model.weights, data, lambda),
        Some(offset) => objective_of(&model.weights, &center(data, offset)?, lambda),
    }
}

fn target_mean(data: &TrainingSet) -> Array2<f64> {
    let (d1, d2) = data.map_shape();
    data.targets
        .as_array()
        .mean_axis(Axis(0))
        .expect("non-empty training set")
        .into_shape_with_order((d1, d2))
        .expect("target maps are 2-d")
}

/// Targets minus a per-pixel offset. Centred targets may be negative, so the
/// non-negativity check is bypassed.
fn center(data: &TrainingSet, offset: &Array2<f64>) -> Result<TrainingSet> {
    let mut targets = data.targets.as_array().clone();
    for mut t in targets.axis_iter_mut(Axis(0)) {
        let mut t2 = t
            .view_mut()
            .into_shape_with_order(offset.dim())
            .expect("target maps are 2-d");
        t2 -= offset;
    }
    Ok(TrainingSet {
        inputs: data.inputs.clone(),
        targets: DenseTensor::from_array(targets)?,
        persons: data.persons.clone(),
    })
}

/// Fits `W` by alternating ridge least squares.
///
/// Stops when the relative objective change falls below `rel_tol` or after `max_sweeps` sweeps.
pub fn fit(data: &TrainingSet, cfg: &RegressionConfig) -> Result<FittedModel> {
    cfg.validate()?;
    if data.map_shape() != cfg.working_shape {
        return Err(Error::ShapeMismatch(format!(
            "training maps are {:?} but the working shape is {:?}",
            data.map_shape(),
            cfg.working_shape
        )));
    }
    let offset = cfg.center_targets.then(|| target_mean(data));
    let centred;
    let data = match &offset {
        Some(o) => {
            centred = center(data, o)?;
            &centred
        }
        None => data,
    };

    let mut w = init_factors(&weight_shape(data), cfg.rank, cfg.seed)?;
    let mut trace = vec![objective_of(&w, data, cfg.lambda)?];
    for sweep in 0..cfg.max_sweeps {
        let outcome = als::als_sweep(&mut w, data, cfg.lambda)?;
        let obj = outcome.objective();
        let prev = *trace.last().expect("trace starts non-empty");
        trace.push(obj);
        if (obj - prev).abs() / prev.max(1e-12) < cfg.rel_tol {
            log::debug!(
                "ALS converged after {} sweeps, objective {obj:.6e}",
                sweep + 1
            );
            break;
        }
    }
    Ok(FittedModel {
        weights: w,
        config: cfg.clone(),
        objective_trace: trace,
        persons: data.persons.clone(),
        target_offset: offset,
    })
}

/// `<x, W>_3` plus any centring offset, before clamping.
pub fn predict_raw(model: &FittedModel, input: &DenseTensor) -> Result<DenseTensor> {
    if input.shape() != model.input_shape() {
        return Err(Error::ShapeMismatch(format!(
            "input {:?} does not match model input {:?}",
            input.shape(),
            model.input_shape()
        )));
    }
    let out = contract_leading(input, &model.weights, 3)?;
    match &model.target_offset {
        None => Ok(out),
        Some(offset) => {
            let values = out
                .values()
                .iter()
                .zip(offset.iter())
                .map(|(a, b)| a + b)
                .collect();
            DenseTensor::new(out.shape().to_vec(), values)
        }
    }
}

/// Predicted map: raw contraction with negatives clamped to zero, then max-normalized.
pub fn predict(model: &FittedModel, input: &DenseTensor) -> Result<SaliencyMap> {
    let raw = predict_raw(model, input)?;
    let (d1, d2) = model.output_shape();
    let values = Array2::from_shape_vec((d1, d2), raw.values().to_vec())
        .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
    Ok(SaliencyMap::from_clamped(values)?.max_normalized())
}
