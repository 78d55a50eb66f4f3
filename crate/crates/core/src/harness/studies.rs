//! Full experiments, sweeps, benchmarks and gradient grids, with their files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::train::{evaluate, train, PreparedData, TrainOutcome};
use super::{ExperimentConfig, Regime};
use crate::data::{encode_grid, GridImage, LabeledDataset, MetricsWriter, DEFAULT_GRID_COLUMNS};
use crate::error::{Error, Result};
use crate::interpretability::{gradient_image, input_gradients, vii, ViiReport};
use crate::models::{Architecture, Checkpoint};
use crate::rng::NoiseKind;
use crate::tensor::Tensor;

pub const BETA_SWEEP: [f64; 7] = [0.0, 0.2, 0.4, 0.5, 0.6, 0.8, 1.0];

/// Contents of `summary.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub id: String,
    pub config_hash: String,
    pub regime: Regime,
    pub arch: Architecture,
    pub noise: NoiseKind,
    pub beta: f64,
    pub seed: u64,
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
    pub test_accuracy: f64,
    pub test_loss: f64,
    pub mean_vii: f64,
    pub vii_count: usize,
    pub steps: u64,
    pub backward_passes: u64,
    pub train_seconds: f64,
}

#[derive(Clone, Debug)]
pub struct ExperimentReport {
    pub dir: PathBuf,
    pub summary: RunSummary,
    pub vii: ViiReport,
    pub outcome: TrainOutcome,
}

impl ExperimentReport {
    pub fn best(&self) -> &Checkpoint {
        &self.outcome.best
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

/// Train one configuration and write everything under `<outdir>/<experiment-id>/`:
/// `config.echo`, `metrics.csv`, `checkpoint.nmck` (best validation epoch),
/// `vii.csv` and `summary.json`. Test accuracy and VII are measured on the
/// best-validation checkpoint.
pub fn run_experiment(cfg: &ExperimentConfig, data: &PreparedData) -> Result<ExperimentReport> {
    let dir = cfg.run_dir();
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("config.echo"), cfg.to_toml()?)?;
    let mut metrics = MetricsWriter::create(dir.join("metrics.csv"))?;
    let outcome = train(cfg, data, Some(&dir.join("checkpoint.nmck")), &mut |row| {
        metrics.append(row)
    })?;
    let best = &outcome.best;
    let test = evaluate(best, &data.test)?;
    let report = vii(best, &data.test)?;
    report.write_csv(dir.join("vii.csv"))?;
    let summary = RunSummary {
        id: cfg.experiment_id(),
        config_hash: cfg.hash(),
        regime: cfg.train.regime,
        arch: cfg.model.arch,
        noise: cfg.modulation.noise,
        beta: cfg.modulation.beta,
        seed: cfg.train.seed,
        best_epoch: best.epoch,
        best_val_accuracy: best.best_val_accuracy,
        test_accuracy: test.accuracy,
        test_loss: test.loss,
        mean_vii: report.mean,
        vii_count: report.count,
        steps: outcome.steps,
        backward_passes: outcome.backward_passes,
        train_seconds: outcome.epoch_seconds.iter().sum(),
    };
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(ExperimentReport {
        dir,
        summary,
        vii: report,
        outcome,
    })
}

/// One row of a sweep's `summary.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub regime: Regime,
    pub noise: NoiseKind,
    pub beta: f64,
    pub test_accuracy: f64,
    pub mean_vii: f64,
    pub experiment: String,
}

impl SweepRow {
    fn from_summary(s: &RunSummary) -> Self {
        Self {
            regime: s.regime,
            noise: s.noise,
            beta: s.beta,
            test_accuracy: s.test_accuracy,
            mean_vii: s.mean_vii,
            experiment: s.id.clone(),
        }
    }
}

fn write_sweep(cfg: &ExperimentConfig, kind: &str, rows: &[SweepRow]) -> Result<PathBuf> {
    let dir = cfg
        .output
        .outdir
        .join(format!("sweep-{kind}-{}-s{}-{}", cfg.model.arch, cfg.train.seed, &cfg.hash()[..8]));
    fs::create_dir_all(&dir)?;
    let path = dir.join("summary.csv");
    let mut w = csv::Writer::from_path(&path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(path)
}

/// Noise modulation at each `beta`, everything else fixed.
pub fn sweep_beta(
    cfg: &ExperimentConfig,
    data: &PreparedData,
    betas: &[f64],
    on_run: &mut dyn FnMut(&ExperimentReport),
) -> Result<(Vec<SweepRow>, PathBuf)> {
    let mut rows = Vec::with_capacity(betas.len());
    for &beta in betas {
        let mut c = cfg.clone();
        c.train.regime = Regime::NoiseMod;
        c.modulation.beta = beta;
        let report = run_experiment(&c, data)?;
        on_run(&report);
        rows.push(SweepRow::from_summary(&report.summary));
    }
    let path = write_sweep(cfg, "beta", &rows)?;
    Ok((rows, path))
}

/// A standard-training baseline row, then noise modulation with each kind.
pub fn sweep_noise(
    cfg: &ExperimentConfig,
    data: &PreparedData,
    kinds: &[NoiseKind],
    on_run: &mut dyn FnMut(&ExperimentReport),
) -> Result<(Vec<SweepRow>, PathBuf)> {
    let mut rows = Vec::with_capacity(kinds.len() + 1);
    let mut baseline = cfg.clone();
    baseline.train.regime = Regime::Standard;
    let report = run_experiment(&baseline, data)?;
    on_run(&report);
    rows.push(SweepRow::from_summary(&report.summary));
    for &kind in kinds {
        let mut c = cfg.clone();
        c.train.regime = Regime::NoiseMod;
        c.modulation.noise = kind;
        let report = run_experiment(&c, data)?;
        on_run(&report);
        rows.push(SweepRow::from_summary(&report.summary));
    }
    let path = write_sweep(cfg, "noise", &rows)?;
    Ok((rows, path))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub regime: Regime,
    /// Fastest optimization time over the repeats for one epoch.
    pub epoch_seconds: f64,
    pub steps: u64,
    pub backward_passes: u64,
    pub backward_per_step: f64,
    /// `epoch_seconds` relative to standard training.
    pub relative_time: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub attack_steps: usize,
    pub train_examples: usize,
}

impl BenchReport {
    pub fn row(&self, regime: Regime) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.regime == regime)
    }
}

/// Time one training epoch under standard, noise-modulation and adversarial
/// training from the same initialization, keeping the fastest of `repeats`.
pub fn bench(cfg: &ExperimentConfig, data: &PreparedData, repeats: usize) -> Result<(BenchReport, PathBuf)> {
    let mut rows: Vec<BenchRow> = Vec::new();
    for regime in [Regime::Standard, Regime::NoiseMod, Regime::AdvTrain] {
        let mut c = cfg.clone();
        c.train.regime = regime;
        c.train.epochs = 1;
        c.train.vii_every_epoch = false;
        let mut fastest = f64::INFINITY;
        let mut last = None;
        for _ in 0..repeats.max(1) {
            let out = train(&c, data, None, &mut |_| Ok(()))?;
            fastest = fastest.min(out.epoch_seconds[0]);
            last = Some(out);
        }
        let out = last.unwrap();
        rows.push(BenchRow {
            regime,
            epoch_seconds: fastest,
            steps: out.steps,
            backward_passes: out.backward_passes,
            backward_per_step: out.backward_passes_per_step(),
            relative_time: f64::NAN,
        });
    }
    let standard = rows[0].epoch_seconds;
    rows.iter_mut()
        .for_each(|r| r.relative_time = r.epoch_seconds / standard);
    let report = BenchReport {
        rows,
        attack_steps: cfg.attack.steps,
        train_examples: data.train.len(),
    };
    let dir = cfg
        .output
        .outdir
        .join(format!("bench-{}-s{}-{}", cfg.model.arch, cfg.train.seed, &cfg.hash()[..8]));
    fs::create_dir_all(&dir)?;
    let mut w = csv::Writer::from_path(dir.join("bench.csv"))?;
    for row in &report.rows {
        w.serialize(row)?;
    }
    w.flush()?;
    write_json(&dir.join("bench.json"), &report)?;
    Ok((report, dir))
}

#[derive(Clone, Debug)]
pub struct VisualizeReport {
    /// `(path, image)` for every grid written.
    pub grids: Vec<(PathBuf, GridImage)>,
}

fn tiles(images: &Tensor) -> Result<Vec<Tensor>> {
    (0..images.shape()[0]).map(|i| images.index_leading(i)).collect()
}

/// Gradient grids for the first `count` examples of `dataset` into `dir/grids/`:
/// `inputs.png`, one `<label>.png` per model (min-max scaled input-gradients),
/// and `figure.png`, whose rows are the first ten inputs followed by each
/// model's gradients for them.
pub fn visualize(
    models: &[(String, Checkpoint)],
    dataset: &LabeledDataset,
    count: usize,
    dir: &Path,
) -> Result<VisualizeReport> {
    if count == 0 {
        return Err(Error::InvalidArgument("nothing to visualize".into()));
    }
    let subset = dataset.take(count)?;
    let grids_dir = dir.join("grids");
    fs::create_dir_all(&grids_dir)?;
    let inputs = tiles(&subset.images)?;
    let mut grids = Vec::new();
    let mut save = |name: &str, images: &[Tensor], columns: usize| -> Result<()> {
        let grid = encode_grid(images, columns)?;
        let path = grids_dir.join(format!("{name}.png"));
        grid.save(&path)?;
        grids.push((path, grid));
        Ok(())
    };
    save("inputs", &inputs, DEFAULT_GRID_COLUMNS)?;
    let head = DEFAULT_GRID_COLUMNS.min(inputs.len());
    let mut figure: Vec<Tensor> = inputs[..head].to_vec();
    for (label, model) in models {
        let grads = input_gradients(model, &subset.images, &subset.labels)?;
        let scaled = tiles(&grads)?
            .iter()
            .map(gradient_image)
            .collect::<Result<Vec<_>>>()?;
        save(label, &scaled, DEFAULT_GRID_COLUMNS)?;
        figure.extend_from_slice(&scaled[..head]);
    }
    save("figure", &figure, head)?;
    Ok(VisualizeReport { grids })
}
