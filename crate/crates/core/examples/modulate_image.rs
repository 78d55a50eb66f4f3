//! Sample a carrier, modulate one synthetic digit-sized image and write the
//! intermediate stages side by side to `modulate_image.png`.
//!
//!     cargo run --example modulate_image -- [beta] [noise]

use noisemod::data::{encode_grid, synthetic_dataset, SyntheticSpec};
use noisemod::modulation::{make_carrier, modulate_stages};
use noisemod::{NoiseKind, RngStream};

fn main() -> noisemod::Result<()> {
    let mut args = std::env::args().skip(1);
    let beta: f64 = args.next().map_or(0.5, |s| s.parse().expect("beta"));
    let kind = args
        .next()
        .map_or(NoiseKind::Gaussian, |s| clap::ValueEnum::from_str(&s, true).expect("noise kind"));

    let spec = SyntheticSpec { count: 1, ..SyntheticSpec::default() };
    let ds = synthetic_dataset(&spec, &mut RngStream::new(0))?;
    let x = ds.images.index_leading(0)?;

    let carrier = make_carrier(beta, &kind.standard(), x.shape(), &mut RngStream::new(1))?;
    let stages = modulate_stages(&x, &carrier)?;
    println!("beta {beta}, {kind} noise, N = {}", x.len());
    println!("C0 = {:.4}  lambda = {:.4}", carrier.constant_component(), carrier.lambda());
    println!("mean multiplier = {:.12}", carrier.multiplier().mean()?);
    println!("residual sum = {:.3e}", carrier.residual().sum());

    // The multiplier is unbounded, so stages are shown divided by their own max.
    let show = |t: &noisemod::Tensor| t.map(|v| v / t.max_abs().max(1e-12));
    let tiles = [x.clone(), show(&stages.modulated), show(&stages.demodulated), show(&stages.rescaled)];
    encode_grid(&tiles, 4)?.save("modulate_image.png")?;
    println!("wrote modulate_image.png (input, x*c, x*c^2, rescaled)");
    Ok(())
}
