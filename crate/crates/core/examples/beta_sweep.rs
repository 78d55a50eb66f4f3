//! Accuracy and VII across carrier constant ratios.
//!
//!     cargo run --release --example beta_sweep            # synthetic, fast
//!     cargo run --release --example beta_sweep -- mnist   # desk MNIST

use noisemod::harness::{prepare_data, sweep_beta, DatasetKind, ExperimentConfig, Profile, BETA_SWEEP};

fn main() -> noisemod::Result<()> {
    let mut cfg = ExperimentConfig::for_profile(Profile::Desk);
    if std::env::args().nth(1).as_deref() != Some("mnist") {
        cfg.data.dataset = DatasetKind::Synthetic;
        cfg.train.epochs = 3;
    }
    cfg.output.outdir = "runs".into();
    let data = prepare_data(&cfg)?;
    let (rows, path) = sweep_beta(&cfg, &data, &BETA_SWEEP, &mut |r| {
        eprintln!("beta {}: done in {:.0}s", r.summary.beta, r.summary.train_seconds)
    })?;
    println!("beta   accuracy  vii");
    for r in &rows {
        println!("{:<5}  {:.4}    {:.4}", r.beta, r.test_accuracy, r.mean_vii);
    }
    println!("{}", path.display());
    Ok(())
}
