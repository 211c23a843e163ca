//! `psmtr`: experiment driver for personalized saliency prediction.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use psmtr_core::pipeline::{
    ingest, load_model, read_predictions, read_selection, run_experiment, run_report, run_sweep,
    save_model, with_failure_marker, write_predictions, write_reports, write_selection, Dataset,
    Experiment, RunConfig, SelectionRecord,
};
use psmtr_core::regression::standard_grid;
use psmtr_core::synth::{write_dataset, SynthConfig, SynthKind};

#[derive(Parser)]
#[command(
    name = "psmtr",
    version,
    about = "Few-shot personalized saliency prediction experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a dataset manifest and print a summary.
    IngestCheck {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Split the images and choose the common images; writes `selection.json`.
    Select(Job),
    /// Fit one model per target on the common images; writes `models/`.
    Fit(TargetJob),
    /// Predict test images with all methods; writes `predictions/`.
    Predict(TargetJob),
    /// Score stored predictions; writes `report.csv` and `report.json`.
    Evaluate(Job),
    /// Select, fit, predict and evaluate in one go.
    Run(Job),
    /// Score a hyperparameter grid; writes `sweep.csv`.
    Sweep {
        #[command(flatten)]
        job: Job,
        /// Use R in {5, 10, .., 50} and lambda in {0.01, 0.1, .., 10000}.
        #[arg(long, alias = "paper-grid")]
        standard_grid: bool,
    },
    /// Write a synthetic dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// Generator settings (TOML or JSON).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        kind: Option<Kind>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Heterogeneous,
    Planted,
}

#[derive(Args)]
struct Job {
    #[arg(long)]
    manifest: PathBuf,
    /// Run settings (TOML or JSON); flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; defaults to `output_dir` of the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Split seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    rank: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    common_images: Option<usize>,
    /// Audit target-data reads (`--strict false` to disable).
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    strict: Option<bool>,
}

#[derive(Args)]
struct TargetJob {
    #[command(flatten)]
    job: Job,
    /// Restrict to one target person.
    #[arg(long)]
    target: Option<String>,
}

impl Job {
    fn config(&self) -> anyhow::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_path(path)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.split_seed = s;
        }
        if let Some(r) = self.rank {
            cfg.regression.rank = r;
        }
        if let Some(l) = self.lambda {
            cfg.regression.lambda = l;
        }
        if let Some(i) = self.common_images {
            cfg.common_images = i;
        }
        if let Some(s) = self.strict {
            cfg.strict = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn out(&self, cfg: &RunConfig) -> anyhow::Result<PathBuf> {
        let out = self.out.clone().or_else(|| cfg.output_dir.clone());
        let out = out.context("no output directory: pass --out or set output_dir")?;
        std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
        Ok(out)
    }

    fn load(&self) -> anyhow::Result<(Dataset, RunConfig, PathBuf)> {
        let data = ingest(&self.manifest)?;
        let cfg = self.config()?;
        let out = self.out(&cfg)?;
        Ok((data, cfg, out))
    }
}

fn targets(data: &Dataset, only: &Option<String>) -> anyhow::Result<Vec<String>> {
    let all = data.target_persons();
    match only {
        Some(t) if !all.contains(t) => bail!(psmtr_core::Error::InvalidArgument(format!(
            "unknown target person {t}"
        ))),
        Some(t) => Ok(vec![t.clone()]),
        None => Ok(all),
    }
}

/// The stored selection, checked against the split the current config produces.
fn stored_selection(exp: &Experiment<'_>, out: &Path) -> psmtr_core::Result<SelectionRecord> {
    let record = read_selection(out)?;
    if &record.split != exp.split() {
        return Err(psmtr_core::Error::validation(
            out.join("selection.json"),
            "split differs from the current config; rerun `select`",
        ));
    }
    Ok(record)
}

/// Writes one line to stdout; a closed pipe (e.g. `| head`) is not an error.
fn print_line(text: &str) -> anyhow::Result<()> {
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{text}").and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> anyhow::Result<()> {
    print_line(&serde_json::to_string_pretty(value)?)
}

fn execute(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::IngestCheck { manifest } => {
            let data = ingest(&manifest)?;
            print_json(&serde_json::json!({
                "manifest": manifest,
                "images": data.image_ids().len(),
                "training_persons": data.training_persons(),
                "target_persons": data.target_persons(),
                "annotations": data.annotations().len(),
                "psm_kind": data.manifest().psm_kind,
            }))
        }
        Command::Select(job) => {
            let (data, cfg, out) = job.load()?;
            let record = with_failure_marker(&out, || {
                let exp = Experiment::new(&data, cfg)?;
                let record = SelectionRecord {
                    split: exp.split().clone(),
                    selection: exp.select()?,
                };
                write_selection(&out, &record)?;
                Ok(record)
            })?;
            print_json(&record.selection.chosen)
        }
        Command::Fit(TargetJob { job, target }) => {
            let (data, cfg, out) = job.load()?;
            let targets = targets(&data, &target)?;
            with_failure_marker(&out, || {
                let exp = Experiment::new(&data, cfg.clone())?;
                let record = stored_selection(&exp, &out)?;
                for t in &targets {
                    let model = exp.fit_target(t, &record.selection)?;
                    save_model(&out, t, &model)?;
                    log::info!("{t}: {} sweeps", model.sweeps());
                }
                if cfg.strict {
                    exp.audit(&record.selection)?;
                }
                Ok(())
            })?;
            Ok(())
        }
        Command::Predict(TargetJob { job, target }) => {
            let (data, cfg, out) = job.load()?;
            let targets = targets(&data, &target)?;
            with_failure_marker(&out, || {
                let exp = Experiment::new(&data, cfg.clone())?;
                let record = stored_selection(&exp, &out)?;
                for t in &targets {
                    let model = load_model(&out, t)?;
                    write_predictions(&out, &exp.predict_target(&model, t, &record.selection)?)?;
                }
                if cfg.strict {
                    exp.audit(&record.selection)?;
                }
                Ok(())
            })?;
            Ok(())
        }
        Command::Evaluate(job) => {
            let (data, cfg, out) = job.load()?;
            let run = with_failure_marker(&out, || {
                let exp = Experiment::new(&data, cfg.clone())?;
                let record = stored_selection(&exp, &out)?;
                let preds = read_predictions(&out, &data.target_persons(), &exp.split().test)?;
                let report = exp.evaluate(&preds)?;
                if cfg.strict {
                    exp.audit(&record.selection)?;
                }
                let run = run_report(&exp, &data, &report, &record.selection);
                write_reports(&out, &report, &run)?;
                Ok(run)
            })?;
            print_json(&run.summary)
        }
        Command::Run(job) => {
            let (data, cfg, out) = job.load()?;
            let outcome = run_experiment(&data, &cfg, &out)?;
            print_json(&outcome.run.summary)
        }
        Command::Sweep {
            job,
            standard_grid: full,
        } => {
            let (data, cfg, out) = job.load()?;
            let grid = if full {
                standard_grid()
            } else {
                cfg.sweep_grid()
            };
            let rows = run_sweep(&data, &cfg, &grid, &out)?;
            log::info!(
                "{} grid cells written to {}",
                rows.len(),
                out.join("sweep.csv").display()
            );
            print_json(&rows)
        }
        Command::Synth {
            out,
            config,
            seed,
            kind,
        } => {
            let mut cfg = match &config {
                Some(path) => SynthConfig::from_path(path)?,
                None => SynthConfig::default(),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(k) = kind {
                cfg.kind = match k {
                    Kind::Heterogeneous => SynthKind::Heterogeneous,
                    Kind::Planted => SynthKind::Planted,
                };
            }
            let manifest = write_dataset(&cfg, &out)?;
            print_line(&manifest.display().to_string())
        }
    }
}

/// 3 for numerical failures, 2 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    let numerical = err
        .chain()
        .filter_map(|e| e.downcast_ref::<psmtr_core::Error>())
        .any(psmtr_core::Error::is_numerical);
    if numerical {
        3
    } else {
        2
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numerical_failures_exit_with_three() {
        let e = anyhow::Error::new(psmtr_core::Error::SingularSystem("person".into()))
            .context("fitting t00");
        assert_eq!(exit_code(&e), 3);
        let e = anyhow::Error::new(psmtr_core::Error::InvalidArgument("bad".into()));
        assert_eq!(exit_code(&e), 2);
        assert_eq!(exit_code(&anyhow::anyhow!("no output directory")), 2);
    }

    #[test]
    fn flags_override_config() {
        let cli = Cli::try_parse_from([
            "psmtr",
            "run",
            "--manifest",
            "m.json",
            "--out",
            "o",
            "--rank",
            "3",
            "--lambda",
            "0.5",
            "--common-images",
            "7",
            "--seed",
            "9",
            "--strict",
            "false",
        ])
        .unwrap();
        let Command::Run(job) = cli.command else {
            panic!("expected run")
        };
        let cfg = job.config().unwrap();
        assert_eq!((cfg.regression.rank, cfg.regression.lambda), (3, 0.5));
        assert_eq!(
            (cfg.common_images, cfg.split_seed, cfg.strict),
            (7, 9, false)
        );
    }

    #[test]
    fn bare_strict_flag_enables_audit() {
        let cli =
            Cli::try_parse_from(["psmtr", "select", "--manifest", "m.json", "--strict"]).unwrap();
        let Command::Select(job) = cli.command else {
            panic!("expected select")
        };
        assert_eq!(job.strict, Some(true));
    }
}
