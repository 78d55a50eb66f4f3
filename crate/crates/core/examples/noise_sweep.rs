//! Standard training against noise modulation with each noise family.
//!
//!     cargo run --release --example noise_sweep -- [mnist]

use noisemod::harness::{prepare_data, sweep_noise, DatasetKind, ExperimentConfig, Profile};
use noisemod::NoiseKind;

fn main() -> noisemod::Result<()> {
    let mut cfg = ExperimentConfig::for_profile(Profile::Desk);
    if std::env::args().nth(1).as_deref() != Some("mnist") {
        cfg.data.dataset = DatasetKind::Synthetic;
        cfg.train.epochs = 3;
    }
    cfg.output.outdir = "runs".into();
    let data = prepare_data(&cfg)?;
    let (rows, path) = sweep_noise(&cfg, &data, &NoiseKind::ALL, &mut |_| {})?;
    println!("{:<12} {:<12} accuracy  vii", "regime", "noise");
    for r in &rows {
        let noise = if r.regime == noisemod::harness::Regime::Standard { "-".to_string() } else { r.noise.to_string() };
        println!("{:<12} {:<12} {:.4}    {:.4}", r.regime, noise, r.test_accuracy, r.mean_vii);
    }
    println!("{}", path.display());
    Ok(())
}
