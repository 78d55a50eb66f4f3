//! VII of a saved checkpoint on the MNIST test subset, or of a quickly trained
//! synthetic model when no checkpoint is given.
//!
//!     cargo run --release --example vii_report -- runs/<id>/checkpoint.nmck

use noisemod::harness::{prepare_data, run_experiment, DatasetKind, ExperimentConfig, Profile};
use noisemod::interpretability::vii;
use noisemod::models::Checkpoint;

fn main() -> noisemod::Result<()> {
    let (model, test) = match std::env::args().nth(1) {
        Some(path) => {
            let cfg = ExperimentConfig::for_profile(Profile::Desk);
            (Checkpoint::load(path)?, prepare_data(&cfg)?.test)
        }
        None => {
            let mut cfg = ExperimentConfig::default();
            cfg.data.dataset = DatasetKind::Synthetic;
            cfg.train.epochs = 2;
            cfg.output.outdir = std::env::temp_dir().join("noisemod-vii-report");
            let data = prepare_data(&cfg)?;
            (run_experiment(&cfg, &data)?.outcome.best, data.test)
        }
    };
    let report = vii(&model, &test)?;
    report.write_csv("vii.csv")?;
    let lo = report.per_example.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = report.per_example.iter().copied().fold(0.0, f64::max);
    println!("{} examples: mean VII {:.4} (min {lo:.4}, max {hi:.4}); rows in vii.csv", report.count, report.mean);
    Ok(())
}
