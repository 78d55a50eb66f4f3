//! Epoch time and backward passes per optimizer step for standard, noise
//! modulation and PGD-7 adversarial training.
//!
//!     cargo run --release --example efficiency_bench -- [mnist]

use noisemod::harness::{bench, prepare_data, DatasetKind, ExperimentConfig, Profile};

fn main() -> noisemod::Result<()> {
    let mut cfg = ExperimentConfig::for_profile(Profile::Desk);
    if std::env::args().nth(1).as_deref() == Some("mnist") {
        cfg.data.train_limit = Some(3200);
    } else {
        cfg.data.dataset = DatasetKind::Synthetic;
    }
    cfg.output.outdir = "runs".into();
    let data = prepare_data(&cfg)?;
    let (report, dir) = bench(&cfg, &data, 2)?;
    println!("{:<10} {:>9} {:>8} {:>10}", "regime", "epoch_s", "relative", "bwd/step");
    for r in &report.rows {
        println!("{:<10} {:>9.2} {:>8.2} {:>10.2}", r.regime, r.epoch_seconds, r.relative_time, r.backward_per_step);
    }
    println!("{}", dir.display());
    Ok(())
}
