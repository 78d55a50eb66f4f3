//! Desk-scale MNIST run (10k/2k subset, 10 epochs) for one regime.
//!
//!     cargo run --release --example train_mnist -- noise_mod
//!
//! Reads MNIST from `NOISEMOD_MNIST_DIR` or `data/mnist`; see
//! `scripts/fetch_mnist.sh`.

use noisemod::harness::{prepare_data, run_experiment, ExperimentConfig, Profile, Regime};

fn main() -> noisemod::Result<()> {
    let regime = std::env::args()
        .nth(1)
        .map_or(Regime::NoiseMod, |s| clap::ValueEnum::from_str(&s, true).expect("regime"));
    let mut cfg = ExperimentConfig::for_profile(Profile::Desk);
    cfg.train.regime = regime;
    cfg.output.outdir = "runs".into();
    let data = prepare_data(&cfg)?;
    println!("{} train / {} val / {} test", data.train.len(), data.val.len(), data.test.len());

    let report = run_experiment(&cfg, &data)?;
    for row in &report.outcome.history {
        println!("epoch {:>2} {:<5} acc {:.4} loss {:.4}", row.epoch, row.split, row.accuracy, row.loss);
    }
    let s = &report.summary;
    println!(
        "best epoch {}: test accuracy {:.4}, VII {:.4} -> {}",
        s.best_epoch,
        s.test_accuracy,
        s.mean_vii,
        report.dir.display()
    );
    Ok(())
}
