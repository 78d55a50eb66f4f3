//! Train a small classifier on synthetic blobs, then attack it with FGSM and
//! PGD and report how far the loss moves inside the eps-ball.

use noisemod::adversarial::{fgsm_model, pgd_model, standard_train_step, AttackConfig};
use noisemod::data::{synthetic_dataset, SyntheticSpec};
use noisemod::harness::evaluate;
use noisemod::models::{Architecture, Checkpoint, ModelSpec};
use noisemod::RngStream;

fn main() -> noisemod::Result<()> {
    let spec = SyntheticSpec { count: 600, shape: [1, 12, 12], noise: 0.1, ..SyntheticSpec::default() };
    let ds = synthetic_dataset(&spec, &mut RngStream::new(0))?;
    let mut model = Checkpoint::build(
        ModelSpec::new(Architecture::Lenet, [1, 12, 12], 10).with_widths(vec![4, 8, 32, 16]),
        &mut RngStream::new(1),
    )?;
    let order: Vec<usize> = (0..ds.len()).collect();
    for _ in 0..5 {
        for idx in order.chunks(32) {
            let (x, y) = ds.batch(idx)?;
            standard_train_step(&mut model, &x, &y)?;
        }
    }
    println!("clean accuracy {:.3}", evaluate(&model, &ds)?.accuracy);

    let (x, y) = ds.batch(&order[..200])?;
    let clean = evaluate(&model, &ds.slice(0, 200, ds.split)?)?;
    for (name, cfg) in [
        ("fgsm", AttackConfig::fgsm(0.1, 0.1)),
        ("pgd-7", AttackConfig { epsilon: 0.1, alpha: 0.025, ..AttackConfig::default() }),
    ] {
        let mut rng = RngStream::new(2);
        let adv = if cfg.steps == 1 {
            fgsm_model(&model, &x, &y, &cfg, &mut rng)?
        } else {
            pgd_model(&model, &x, &y, &cfg, &mut rng)?
        };
        let mut attacked = ds.slice(0, 200, ds.split)?;
        attacked.images = adv.clone();
        let r = evaluate(&model, &attacked)?;
        println!(
            "{name}: |delta|_inf {:.4}, loss {:.3} -> {:.3}, accuracy {:.3} -> {:.3}",
            adv.sub(&x)?.max_abs(),
            clean.loss,
            r.loss,
            clean.accuracy,
            r.accuracy
        );
    }
    Ok(())
}
