//! Experiment orchestration.
//!
//! A run splits the images into a training pool and a test set, picks the
//! common images from the training pool, fits one regression per target person
//! on the common images, predicts every test image and scores the regression
//! against the uniform-average and similarity-weighted baselines.
//!
//! Output layout under the run directory:
//!
//! ```text
//! models/<target>.cpwt
//! predictions/<method>/<target>/<image>.{json,f32}
//! selection.json
//! report.csv
//! report.json
//! sweep.csv        (sweep only)
//! FAILED           (only when a run aborts)
//! ```

mod dataset;

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{similarity_weights, weighted_average_psm, DEFAULT_TEMPERATURE};
use crate::error::{Error, Result};
use crate::formats::{read_config, read_map, write_map};
use crate::metrics::{evaluate_suite, EvalReport, MethodSummary, Prediction};
use crate::regression::{
    fit, predict, read_model, sweep_hyperparameters, write_model, FittedModel, HyperGrid,
    RegressionConfig, SweepRow, TrainingSet,
};
use crate::saliency::{resample, Resample, SaliencyMap};
use crate::selection::{image_scores, select_common_images, SelectionResult};

pub use dataset::{
    ingest, Dataset, DatasetManifest, ImageRecord, MapRecord, PersonRecord, Purpose, Role,
    TargetAccess, UsmRecord, UsmSource, MANIFEST_VERSION,
};

/// Training-pool share of the images (1100 of 1600).
pub const DEFAULT_TRAIN_FRACTION: f64 = 1100.0 / 1600.0;

pub const METHOD_PROPOSED: &str = "proposed";
pub const METHOD_UNIFORM: &str = "uniform_average";
pub const METHOD_SIMILARITY: &str = "similarity_weighted";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Number of common images `I`.
    pub common_images: usize,
    pub regression: RegressionConfig,
    /// Grid for `sweep`; defaults to the single `regression` cell.
    pub grid: Option<HyperGrid>,
    pub split_seed: u64,
    pub train_fraction: f64,
    /// Audit target-data reads and fail if any falls outside the common/test images.
    pub strict: bool,
    /// Softmax temperature of the similarity baseline.
    pub temperature: f64,
    /// Gaussian std for GT maps built from fixations; default width / 25.
    pub gt_sigma: Option<f64>,
    pub output_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            common_images: 20,
            regression: RegressionConfig::default(),
            grid: None,
            split_seed: 0,
            train_fraction: DEFAULT_TRAIN_FRACTION,
            strict: true,
            temperature: DEFAULT_TEMPERATURE,
            gt_sigma: None,
            output_dir: None,
        }
    }
}

impl RunConfig {
    /// Reads TOML (`.toml`) or JSON (anything else).
    pub fn from_path(path: &Path) -> Result<Self> {
        let cfg: RunConfig = read_config(path)?;
        cfg.validate().map_err(|e| Error::validation(path, e))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.regression.validate()?;
        if self.common_images == 0 {
            return Err(Error::InvalidArgument(
                "common_images must be at least 1".into(),
            ));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "train_fraction must be in (0, 1], got {}",
                self.train_fraction
            )));
        }
        if self.temperature.is_nan() || self.temperature <= 0.0 {
            return Err(Error::InvalidArgument(
                "temperature must be positive".into(),
            ));
        }
        if let Some(s) = self.gt_sigma {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "gt_sigma must be positive, got {s}"
                )));
            }
        }
        if self.grid.as_ref().is_some_and(HyperGrid::is_empty) {
            return Err(Error::InvalidArgument(
                "grid must have at least one rank and one lambda".into(),
            ));
        }
        Ok(())
    }

    pub fn sweep_grid(&self) -> HyperGrid {
        self.grid.clone().unwrap_or_else(|| HyperGrid {
            ranks: vec![self.regression.rank],
            lambdas: vec![self.regression.lambda],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    /// Training pool, sorted.
    pub train: Vec<String>,
    /// Test images, sorted.
    pub test: Vec<String>,
}

/// Seeded uniform split; the pool gets `round(N * train_fraction)` images (at least one).
pub fn split_images(ids: &[String], train_fraction: f64, seed: u64) -> Split {
    let mut shuffled: Vec<String> = ids.to_vec();
    shuffled.sort();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((ids.len() as f64 * train_fraction).round() as usize).clamp(1, ids.len());
    let mut train = shuffled[..n_train].to_vec();
    let mut test = shuffled[n_train..].to_vec();
    train.sort();
    test.sort();
    Split { train, test }
}

/// `selection.json`: the split and the chosen common images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRecord {
    pub split: Split,
    pub selection: SelectionResult,
}

/// Resamples a map to the regression resolution.
pub fn to_working(map: &SaliencyMap, shape: (usize, usize)) -> Result<SaliencyMap> {
    let mode = if map.d1() * map.d2() >= shape.0 * shape.1 {
        Resample::Down
    } else {
        Resample::Up
    };
    resample(map, shape.0, shape.1, mode)
}

/// One configured experiment over a dataset.
#[derive(Debug)]
pub struct Experiment<'a> {
    data: &'a Dataset,
    cfg: RunConfig,
    split: Split,
}

impl<'a> Experiment<'a> {
    pub fn new(data: &'a Dataset, cfg: RunConfig) -> Result<Self> {
        cfg.validate()?;
        if data.training_persons().len() < 2 {
            return Err(Error::InvalidArgument(
                "need at least two training persons".into(),
            ));
        }
        if data.target_persons().is_empty() {
            return Err(Error::InvalidArgument(
                "need at least one target person".into(),
            ));
        }
        let split = split_images(&data.image_ids(), cfg.train_fraction, cfg.split_seed);
        if cfg.common_images > split.train.len() {
            return Err(Error::InvalidArgument(format!(
                "{} common images requested but the training pool has {}",
                cfg.common_images,
                split.train.len()
            )));
        }
        Ok(Self { data, cfg, split })
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn split(&self) -> &Split {
        &self.split
    }

    /// Scores the training pool and picks the common images.
    pub fn select(&self) -> Result<SelectionResult> {
        let mut psms = BTreeMap::new();
        for image in &self.split.train {
            psms.insert(image.clone(), self.data.training_psms(image)?);
        }
        let scores = image_scores(self.data.annotations(), &psms)?;
        select_common_images(&scores, self.data.annotations(), self.cfg.common_images)
    }

    fn working_inputs(&self, image: &str) -> Result<Vec<SaliencyMap>> {
        let shape = self.cfg.regression.working_shape;
        self.data
            .training_psms(image)?
            .iter()
            .map(|m| to_working(m, shape))
            .collect()
    }

    /// Supervised pairs of one target on the common images, at working resolution.
    pub fn training_set(&self, target: &str, common: &[String]) -> Result<TrainingSet> {
        let shape = self.cfg.regression.working_shape;
        let mut inputs = Vec::with_capacity(common.len());
        let mut targets = Vec::with_capacity(common.len());
        for image in common {
            inputs.push(self.working_inputs(image)?);
            let gt = self
                .data
                .target_gt(target, image, Purpose::Training, self.cfg.gt_sigma)?;
            targets.push(to_working(&gt, shape)?);
        }
        TrainingSet::from_maps(&inputs, &targets, self.data.training_persons())
    }

    pub fn fit_target(&self, target: &str, selection: &SelectionResult) -> Result<FittedModel> {
        let set = self.training_set(target, &selection.chosen)?;
        let model = fit(&set, &self.cfg.regression)?;
        log::info!(
            "fitted {target}: {} sweeps, objective {:.6e}",
            model.sweeps(),
            model.objective_trace.last().copied().unwrap_or(f64::NAN)
        );
        Ok(model)
    }

    /// Predictions of all three methods for one target on every test image, at native resolution.
    pub fn predict_target(
        &self,
        model: &FittedModel,
        target: &str,
        selection: &SelectionResult,
    ) -> Result<Vec<Prediction>> {
        let mut gts = Vec::with_capacity(selection.chosen.len());
        let mut common_psms = Vec::with_capacity(selection.chosen.len());
        for image in &selection.chosen {
            gts.push(
                self.data
                    .target_gt(target, image, Purpose::Training, self.cfg.gt_sigma)?,
            );
            common_psms.push(self.data.training_psms(image)?);
        }
        let weights = similarity_weights(&gts, &common_psms, self.cfg.temperature)?;
        log::info!("similarity weights of {target}: {:?}", weights.as_slice());

        let mut out = Vec::with_capacity(3 * self.split.test.len());
        for image in &self.split.test {
            let (d1, d2) = self.data.image_dims(image)?;
            let input = crate::regression::maps_to_tensor(&self.working_inputs(image)?)?;
            let proposed = resample(&predict(model, &input)?, d1, d2, Resample::Up)?;
            let psms = self.data.training_psms(image)?;
            let similarity = weighted_average_psm(&weights, &psms)?;
            let uniform = self.data.usm(image)?;
            for (method, map) in [
                (METHOD_PROPOSED, proposed),
                (METHOD_UNIFORM, uniform),
                (METHOD_SIMILARITY, similarity),
            ] {
                out.push(Prediction {
                    method: method.into(),
                    person: target.into(),
                    image: image.clone(),
                    map,
                });
            }
        }
        Ok(out)
    }

    /// Scores predictions against target GT on the test images.
    pub fn evaluate(&self, predictions: &[Prediction]) -> Result<EvalReport> {
        let mut gts = BTreeMap::new();
        for p in predictions {
            let key = (p.person.clone(), p.image.clone());
            if let Entry::Vacant(slot) = gts.entry(key) {
                slot.insert(self.data.target_gt(
                    &p.person,
                    &p.image,
                    Purpose::Evaluation,
                    self.cfg.gt_sigma,
                )?);
            }
        }
        let mut ordered = predictions.to_vec();
        ordered.sort_by_key(|p| (method_rank(&p.method), p.person.clone(), p.image.clone()));
        evaluate_suite(&ordered, &gts)
    }

    /// Checks that target data was read only on common images (training) and test images (evaluation).
    pub fn audit(&self, selection: &SelectionResult) -> Result<()> {
        for a in self.data.access_log() {
            let allowed = match a.purpose {
                Purpose::Training => selection.chosen.contains(&a.image),
                Purpose::Evaluation => self.split.test.contains(&a.image),
            };
            if !allowed {
                return Err(Error::InvalidArgument(format!(
                    "strict mode: target {} data read on image {} for {:?}",
                    a.person, a.image, a.purpose
                )));
            }
        }
        Ok(())
    }
}

fn method_rank(method: &str) -> usize {
    match method {
        METHOD_PROPOSED => 0,
        METHOD_UNIFORM => 1,
        METHOD_SIMILARITY => 2,
        _ => 3,
    }
}

/// `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub summary: Vec<MethodSummary>,
    pub common_images: usize,
    pub training_pool: usize,
    pub test_images: usize,
    /// Training-pool images left out of the common set.
    pub held_out_pool: usize,
    /// Set when every training-pool image is common.
    pub pool_exhausted: bool,
    pub psm_kind: String,
    pub strict: bool,
    /// Target-data reads for training and for evaluation.
    pub target_reads_training: usize,
    pub target_reads_evaluation: usize,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: EvalReport,
    pub run: RunReport,
    pub selection: SelectionRecord,
    pub models: BTreeMap<String, FittedModel>,
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_selection(out: &Path, record: &SelectionRecord) -> Result<()> {
    write_json(&out.join("selection.json"), record)
}

pub fn read_selection(out: &Path) -> Result<SelectionRecord> {
    let path = out.join("selection.json");
    let text = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_slice(&text).map_err(|e| Error::parse(&path, e))
}

pub fn model_path(out: &Path, target: &str) -> PathBuf {
    out.join("models").join(format!("{target}.cpwt"))
}

pub fn save_model(out: &Path, target: &str, model: &FittedModel) -> Result<()> {
    create_dir(&out.join("models"))?;
    write_model(model, &model_path(out, target))
}

pub fn load_model(out: &Path, target: &str) -> Result<FittedModel> {
    read_model(&model_path(out, target))
}

pub fn write_predictions(out: &Path, predictions: &[Prediction]) -> Result<()> {
    for p in predictions {
        let dir = out.join("predictions").join(&p.method).join(&p.person);
        create_dir(&dir)?;
        write_map(&dir, &p.image, p.map.values(), "max")?;
    }
    Ok(())
}

/// Reads every `predictions/<method>/<target>/<image>.json` for the given images.
pub fn read_predictions(
    out: &Path,
    targets: &[String],
    images: &[String],
) -> Result<Vec<Prediction>> {
    let mut preds = Vec::new();
    for method in [METHOD_PROPOSED, METHOD_UNIFORM, METHOD_SIMILARITY] {
        for target in targets {
            for image in images {
                let path = out
                    .join("predictions")
                    .join(method)
                    .join(target)
                    .join(format!("{image}.json"));
                if !path.exists() {
                    return Err(Error::validation(&path, "prediction missing"));
                }
                preds.push(Prediction {
                    method: method.into(),
                    person: target.clone(),
                    image: image.clone(),
                    map: SaliencyMap::new(read_map(&path)?)?,
                });
            }
        }
    }
    Ok(preds)
}

/// Writes `report.csv` and `report.json`.
pub fn write_reports(out: &Path, report: &EvalReport, run: &RunReport) -> Result<()> {
    report.save_csv(&out.join("report.csv"))?;
    write_json(&out.join("report.json"), run)
}

pub fn run_report(
    exp: &Experiment<'_>,
    data: &Dataset,
    report: &EvalReport,
    selection: &SelectionResult,
) -> RunReport {
    let pool = exp.split.train.len();
    let held_out = pool - selection.chosen.len();
    let log = data.access_log();
    let mut notes =
        vec!["similarity_weighted uses softmax(mean CC over common images / temperature)".into()];
    if held_out == 0 {
        notes.push("every training-pool image is a common image; no held-out pool remains".into());
    }
    RunReport {
        summary: report.summary.clone(),
        common_images: selection.chosen.len(),
        training_pool: pool,
        test_images: exp.split.test.len(),
        held_out_pool: held_out,
        pool_exhausted: held_out == 0,
        psm_kind: data.manifest().psm_kind.clone(),
        strict: exp.cfg.strict,
        target_reads_training: log
            .iter()
            .filter(|a| a.purpose == Purpose::Training)
            .count(),
        target_reads_evaluation: log
            .iter()
            .filter(|a| a.purpose == Purpose::Evaluation)
            .count(),
        notes,
    }
}

/// Marks `out` as failed (leaving partial artifacts in place) and passes the error on.
pub fn with_failure_marker<T>(out: &Path, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let marker = out.join("FAILED");
    if marker.exists() {
        fs::remove_file(&marker).map_err(|e| Error::io(&marker, e))?;
    }
    f().inspect_err(|e| {
        if let Err(w) = fs::write(&marker, format!("{e}\n")) {
            log::error!("could not write failure marker {}: {w}", marker.display());
        }
    })
}

/// Full run: split, selection, per-target fits, predictions, evaluation; artifacts under `out`.
pub fn run_experiment(data: &Dataset, cfg: &RunConfig, out: &Path) -> Result<RunOutcome> {
    create_dir(out)?;
    with_failure_marker(out, || {
        let exp = Experiment::new(data, cfg.clone())?;
        let selection = exp.select()?;
        let record = SelectionRecord {
            split: exp.split.clone(),
            selection: selection.clone(),
        };
        write_selection(out, &record)?;

        let targets = data.target_persons();
        let models = std::thread::scope(|s| {
            let handles: Vec<_> = targets
                .iter()
                .map(|t| s.spawn(|| exp.fit_target(t, &selection)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("fit thread panicked"))
                .collect::<Result<Vec<_>>>()
        })?;
        let mut predictions = Vec::new();
        let mut model_map = BTreeMap::new();
        for (target, model) in targets.iter().zip(models) {
            save_model(out, target, &model)?;
            predictions.extend(exp.predict_target(&model, target, &selection)?);
            model_map.insert(target.clone(), model);
        }
        write_predictions(out, &predictions)?;
        // score the stored (f32) maps so `evaluate` on the artifacts reproduces the report
        let stored = read_predictions(out, &targets, &exp.split.test)?;
        let report = exp.evaluate(&stored)?;
        if cfg.strict {
            exp.audit(&selection)?;
        }
        let run = run_report(&exp, data, &report, &selection);
        write_reports(out, &report, &run)?;
        Ok(RunOutcome {
            report,
            run,
            selection: record,
            models: model_map,
        })
    })
}

/// Fits every grid cell on the common images and scores it on the test images,
/// averaging over targets; writes `sweep.csv` (`rank,lambda,kldiv,cc`).
pub fn run_sweep(
    data: &Dataset,
    cfg: &RunConfig,
    grid: &HyperGrid,
    out: &Path,
) -> Result<Vec<SweepRow>> {
    create_dir(out)?;
    with_failure_marker(out, || {
        if grid.is_empty() {
            return Err(Error::InvalidArgument("empty hyperparameter grid".into()));
        }
        let exp = Experiment::new(data, cfg.clone())?;
        if exp.split.test.is_empty() {
            return Err(Error::InvalidArgument(
                "the split leaves no test images to score".into(),
            ));
        }
        let selection = exp.select()?;
        write_selection(
            out,
            &SelectionRecord {
                split: exp.split.clone(),
                selection: selection.clone(),
            },
        )?;
        let shape = cfg.regression.working_shape;
        let n_common = selection.chosen.len();
        let train_idx: Vec<usize> = (0..n_common).collect();
        let val_idx: Vec<usize> = (n_common..n_common + exp.split.test.len()).collect();

        let mut per_target = Vec::new();
        for target in data.target_persons() {
            let mut inputs = Vec::new();
            let mut targets = Vec::new();
            for image in &selection.chosen {
                inputs.push(exp.working_inputs(image)?);
                let gt = data.target_gt(&target, image, Purpose::Training, cfg.gt_sigma)?;
                targets.push(to_working(&gt, shape)?);
            }
            for image in &exp.split.test {
                inputs.push(exp.working_inputs(image)?);
                let gt = data.target_gt(&target, image, Purpose::Evaluation, cfg.gt_sigma)?;
                targets.push(to_working(&gt, shape)?);
            }
            let set = TrainingSet::from_maps(&inputs, &targets, data.training_persons())?;
            per_target.push(sweep_hyperparameters(
                &set,
                grid,
                &cfg.regression,
                &train_idx,
                &val_idx,
            )?);
        }
        if cfg.strict {
            exp.audit(&selection)?;
        }
        let rows = average_rows(&per_target);
        write_sweep_csv(&out.join("sweep.csv"), &rows)?;
        Ok(rows)
    })
}

fn average_rows(per_target: &[Vec<SweepRow>]) -> Vec<SweepRow> {
    let avg = |vals: Vec<Option<f64>>| {
        let v: Vec<f64> = vals.into_iter().flatten().collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    };
    (0..per_target[0].len())
        .map(|c| SweepRow {
            rank: per_target[0][c].rank,
            lambda: per_target[0][c].lambda,
            kldiv: avg(per_target.iter().map(|rows| rows[c].kldiv).collect()),
            cc: avg(per_target.iter().map(|rows| rows[c].cc).collect()),
        })
        .collect()
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(f));
    w.write_record(["rank", "lambda", "kldiv", "cc"])?;
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:.12}")).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.rank.to_string(),
            r.lambda.to_string(),
            fmt(r.kldiv),
            fmt(r.cc),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
