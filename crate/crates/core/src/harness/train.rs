use std::path::{Path, PathBuf};
use std::time::Instant;

use super::{DatasetKind, ExperimentConfig, ModulationSpace, Regime, MNIST_DIR_ENV};
use crate::adversarial::{adversarial_train_step, standard_train_step, StepReport};
use crate::autodiff::{softmax_cross_entropy, LossReduction};
use crate::data::{
    load_cifar10_binary, load_mnist, synthetic_dataset, LabeledDataset, MetricsRow, Split,
};
use crate::error::{Error, Result};
use crate::interpretability;
use crate::models::{AdamConfig, AdamState, Checkpoint, Normalization};
use crate::modulation::{make_carrier, multiplicative_approx};
use crate::rng::RngStream;
use crate::tensor::{argmax, Tensor};

// Stream keys: every consumer of randomness draws from its own derived stream,
// so switching regimes never shifts another consumer's samples.
const INIT: u64 = 1;
const SHUFFLE: u64 = 2;
const CARRIER: u64 = 3;
const MULTIPLICATIVE: u64 = 4;
const ATTACK: u64 = 5;
const SYNTHETIC_TRAIN: u64 = 6;
const SYNTHETIC_TEST: u64 = 7;

/// Examples per forward pass during evaluation.
const EVAL_BATCH: usize = 256;

/// Train / validation / test splits plus the normalization every model uses.
#[derive(Clone, Debug)]
pub struct PreparedData {
    pub train: LabeledDataset,
    pub val: LabeledDataset,
    pub test: LabeledDataset,
    /// Per-channel statistics of the clean training split.
    pub normalization: Normalization,
}

fn mnist_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.data
        .path
        .clone()
        .or_else(|| std::env::var_os(MNIST_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("data/mnist"))
}

pub fn prepare_data(cfg: &ExperimentConfig) -> Result<PreparedData> {
    let (train, test) = match cfg.data.dataset {
        DatasetKind::Mnist => {
            let dir = mnist_dir(cfg);
            (load_mnist(&dir, true)?, load_mnist(&dir, false)?)
        }
        DatasetKind::Cifar10 => {
            let dir = cfg.data.path.clone().unwrap_or_else(|| PathBuf::from("data/cifar-10-batches-bin"));
            let batches: Vec<PathBuf> = (1..=5).map(|i| dir.join(format!("data_batch_{i}.bin"))).collect();
            let mut test = load_cifar10_binary(&[dir.join("test_batch.bin")])?;
            test.split = Split::Test;
            (load_cifar10_binary(&batches)?, test)
        }
        DatasetKind::Synthetic => {
            let seed = cfg.train.seed;
            let train = synthetic_dataset(&cfg.data.synthetic, &mut RngStream::derive(seed, &[SYNTHETIC_TRAIN]))?;
            let spec = crate::data::SyntheticSpec {
                count: cfg.data.synthetic_test_count,
                ..cfg.data.synthetic.clone()
            };
            let mut test = synthetic_dataset(&spec, &mut RngStream::derive(seed, &[SYNTHETIC_TEST]))?;
            test.split = Split::Test;
            (train, test)
        }
    };
    let train = match cfg.data.train_limit {
        Some(n) => train.take(n)?,
        None => train,
    };
    let test = match cfg.data.test_limit {
        Some(n) => test.take(n)?,
        None => test,
    };
    let (train, val) = train.split_validation(cfg.data.val_fraction)?;
    let normalization = train.channel_stats();
    Ok(PreparedData {
        train,
        val,
        test,
        normalization,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalResult {
    pub accuracy: f64,
    /// Mean cross-entropy.
    pub loss: f64,
}

/// Clean accuracy and loss of `model` over a dataset.
pub fn evaluate(model: &Checkpoint, dataset: &LabeledDataset) -> Result<EvalResult> {
    if dataset.is_empty() {
        return Err(Error::EmptyTensor { op: "evaluate" });
    }
    let mut correct = 0usize;
    let mut total_loss = 0.0;
    for start in (0..dataset.len()).step_by(EVAL_BATCH) {
        let count = EVAL_BATCH.min(dataset.len() - start);
        let x = dataset.images.narrow_leading(start, count)?;
        let labels = &dataset.labels[start..start + count];
        let logits = model.predict_batch(&x)?;
        let (loss, _) = softmax_cross_entropy(&logits, labels, LossReduction::Sum)?;
        total_loss += loss;
        let k = logits.shape()[1];
        correct += logits
            .data()
            .chunks_exact(k)
            .zip(labels)
            .filter(|(row, &y)| argmax(row) == Some(y))
            .count();
    }
    Ok(EvalResult {
        accuracy: correct as f64 / dataset.len() as f64,
        loss: total_loss / dataset.len() as f64,
    })
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters at the epoch with the highest validation accuracy.
    pub best: Checkpoint,
    pub last: Checkpoint,
    pub history: Vec<MetricsRow>,
    pub steps: u64,
    pub backward_passes: u64,
    /// Optimization time per epoch, evaluation excluded.
    pub epoch_seconds: Vec<f64>,
}

impl TrainOutcome {
    pub fn backward_passes_per_step(&self) -> f64 {
        self.backward_passes as f64 / self.steps.max(1) as f64
    }
}

/// Multiplies training inputs for the modulation regimes.
enum InputTransform {
    Identity,
    Carriers { fixed: Option<Vec<Tensor>> },
    Multiplicative,
}

impl InputTransform {
    fn new(cfg: &ExperimentConfig, data: &PreparedData) -> Result<Self> {
        Ok(match cfg.train.regime {
            Regime::Standard | Regime::AdvTrain => InputTransform::Identity,
            Regime::MultApprox => InputTransform::Multiplicative,
            Regime::NoiseMod if cfg.modulation.fixed_carriers => {
                let fixed = (0..data.train.len())
                    .map(|i| carrier_multiplier(cfg, data, 0, i))
                    .collect::<Result<Vec<_>>>()?;
                InputTransform::Carriers { fixed: Some(fixed) }
            }
            Regime::NoiseMod => InputTransform::Carriers { fixed: None },
        })
    }

    fn apply(
        &self,
        cfg: &ExperimentConfig,
        data: &PreparedData,
        epoch: usize,
        indices: &[usize],
        x: &mut Tensor,
    ) -> Result<()> {
        if let InputTransform::Identity = self {
            return Ok(());
        }
        let per = x.len() / indices.len();
        let shape = data.train.image_shape();
        let plane = per / shape[0];
        let centre: Vec<f64> = match cfg.modulation.space {
            ModulationSpace::Pixel => vec![0.0; per],
            ModulationSpace::Normalized => (0..per).map(|p| data.normalization.mean[p / plane]).collect(),
        };
        for (row, &i) in x.data_mut().chunks_exact_mut(per).zip(indices) {
            let m = match self {
                InputTransform::Carriers { fixed: Some(m) } => m[i].clone(),
                InputTransform::Carriers { fixed: None } => carrier_multiplier(cfg, data, epoch, i)?,
                InputTransform::Multiplicative => {
                    let mut rng = RngStream::derive(cfg.train.seed, &[MULTIPLICATIVE, epoch as u64, i as u64]);
                    let ones = Tensor::ones(&shape);
                    multiplicative_approx(&ones, cfg.modulation.mult_alpha, &cfg.modulation.noise.standard(), &mut rng)?
                }
                InputTransform::Identity => unreachable!(),
            };
            // (x - c) * m + c, arranged so that m == 1 returns x bit for bit.
            for ((v, &m), &c) in row.iter_mut().zip(m.data()).zip(&centre) {
                *v = *v * m + c * (1.0 - m);
            }
        }
        Ok(())
    }
}

fn carrier_multiplier(cfg: &ExperimentConfig, data: &PreparedData, epoch: usize, index: usize) -> Result<Tensor> {
    let mut rng = RngStream::derive(cfg.train.seed, &[CARRIER, epoch as u64, index as u64]);
    let carrier = make_carrier(
        cfg.modulation.beta,
        &cfg.modulation.noise.standard(),
        &data.train.image_shape(),
        &mut rng,
    )?;
    Ok(carrier.multiplier().clone())
}

/// Train under `cfg.train.regime`, evaluating validation and test accuracy after
/// every epoch. The best-validation checkpoint is written to `best_path` each
/// time it improves; `on_row` sees each metrics row as it is produced.
pub fn train(
    cfg: &ExperimentConfig,
    data: &PreparedData,
    best_path: Option<&Path>,
    on_row: &mut dyn FnMut(&MetricsRow) -> Result<()>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let seed = cfg.train.seed;
    let spec = cfg.model_spec(data.train.image_shape(), data.train.classes);
    let mut model = Checkpoint::build(spec, &mut RngStream::derive(seed, &[INIT]))?
        .with_normalization(data.normalization.clone())?;
    model.adam = AdamState::new(
        AdamConfig {
            lr: cfg.train.lr,
            ..AdamConfig::default()
        },
        &model.params,
    );
    let transform = InputTransform::new(cfg, data)?;
    let test_mean = if cfg.train.vii_every_epoch {
        Some(interpretability::mean_image(&data.test.images)?)
    } else {
        None
    };

    let started = Instant::now();
    let mut best: Option<Checkpoint> = None;
    let mut history = Vec::new();
    let mut epoch_seconds = Vec::with_capacity(cfg.train.epochs);
    let mut steps = 0u64;
    let mut backward_passes = 0u64;
    for epoch in 1..=cfg.train.epochs {
        let epoch_start = Instant::now();
        let mut order: Vec<usize> = (0..data.train.len()).collect();
        RngStream::derive(seed, &[SHUFFLE, epoch as u64]).shuffle(&mut order);
        for (b, indices) in order.chunks(cfg.train.batch_size).enumerate() {
            let (mut x, labels) = data.train.batch(indices)?;
            transform.apply(cfg, data, epoch, indices, &mut x)?;
            let report: Result<StepReport> = match cfg.train.regime {
                Regime::AdvTrain => {
                    let mut rng = RngStream::derive(seed, &[ATTACK, epoch as u64, b as u64]);
                    adversarial_train_step(&mut model, &x, &labels, &cfg.attack, &mut rng)
                }
                _ => standard_train_step(&mut model, &x, &labels),
            };
            let report = report.map_err(|e| match e {
                Error::Numerical(m) => Error::Numerical(format!("epoch {epoch}, batch {b}: {m}")),
                e => e,
            })?;
            steps += 1;
            backward_passes += report.backward_passes;
        }
        epoch_seconds.push(epoch_start.elapsed().as_secs_f64());

        let val = evaluate(&model, &data.val)?;
        let test = evaluate(&model, &data.test)?;
        let vii = match &test_mean {
            Some(mean) => Some(
                interpretability::vii_with_mean(&model, &data.test.images, &data.test.labels, mean)?.mean,
            ),
            None => None,
        };
        let wallclock_s = started.elapsed().as_secs_f64();
        for (split, r, vii) in [(Split::Val, val, None), (Split::Test, test, vii)] {
            let row = MetricsRow {
                epoch,
                split,
                accuracy: r.accuracy,
                loss: r.loss,
                vii,
                wallclock_s,
            };
            on_row(&row)?;
            history.push(row);
        }
        model.epoch = epoch;
        if best.as_ref().is_none_or(|b| val.accuracy > b.best_val_accuracy) {
            model.best_val_accuracy = val.accuracy;
            if let Some(path) = best_path {
                model.save(path)?;
            }
            best = Some(model.clone());
        }
    }
    Ok(TrainOutcome {
        best: best.expect("at least one epoch"),
        last: model,
        history,
        steps,
        backward_passes,
        epoch_seconds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SyntheticSpec;
    use crate::models::Architecture;

    fn tiny_cfg() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.data.dataset = DatasetKind::Synthetic;
        cfg.data.synthetic = SyntheticSpec {
            classes: 3,
            count: 60,
            shape: [1, 6, 6],
            noise: 0.05,
        };
        cfg.data.synthetic_test_count = 30;
        cfg.model.arch = Architecture::Mlp3;
        cfg.model.widths = Some(vec![8, 8]);
        cfg.train.epochs = 2;
        cfg.train.batch_size = 16;
        cfg
    }

    #[test]
    fn rows_and_counts() {
        let cfg = tiny_cfg();
        let data = prepare_data(&cfg).unwrap();
        assert_eq!((data.train.len(), data.val.len(), data.test.len()), (54, 6, 30));
        let mut seen = 0;
        let out = train(&cfg, &data, None, &mut |_| {
            seen += 1;
            Ok(())
        })
        .unwrap();
        assert_eq!(seen, 4);
        assert_eq!(out.steps, 8);
        assert_eq!(out.backward_passes, 8);
        assert_eq!(out.last.epoch, 2);
    }

    #[test]
    fn fixed_carriers_are_reused() {
        let mut cfg = tiny_cfg();
        cfg.train.regime = Regime::NoiseMod;
        cfg.modulation.fixed_carriers = true;
        let data = prepare_data(&cfg).unwrap();
        let t = InputTransform::new(&cfg, &data).unwrap();
        let (x0, _) = data.train.batch(&[3]).unwrap();
        let mut a = x0.clone();
        let mut b = x0.clone();
        t.apply(&cfg, &data, 1, &[3], &mut a).unwrap();
        t.apply(&cfg, &data, 2, &[3], &mut b).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, x0);
    }
}
