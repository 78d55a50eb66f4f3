//! Input-gradient grids for a standard and a noise-modulated model, laid out
//! as inputs / standard / noise_mod rows in `runs/visualize/grids/figure.png`.
//!
//!     cargo run --release --example visualize_gradients -- [mnist]

use noisemod::harness::{prepare_data, train, visualize, DatasetKind, ExperimentConfig, Profile, Regime};

fn main() -> noisemod::Result<()> {
    let mut cfg = ExperimentConfig::for_profile(Profile::Desk);
    if std::env::args().nth(1).as_deref() != Some("mnist") {
        cfg.data.dataset = DatasetKind::Synthetic;
        cfg.train.epochs = 3;
    }
    let data = prepare_data(&cfg)?;
    let mut models = Vec::new();
    for regime in [Regime::Standard, Regime::NoiseMod] {
        cfg.train.regime = regime;
        let out = train(&cfg, &data, None, &mut |_| Ok(()))?;
        models.push((regime.to_string(), out.best));
    }
    let report = visualize(&models, &data.test, 80, "runs/visualize".as_ref())?;
    for (path, grid) in &report.grids {
        println!("{} ({}x{})", path.display(), grid.width, grid.height);
    }
    Ok(())
}
