//! Compare reverse-mode gradients of a small conv net against central
//! finite differences.

use noisemod::autodiff::{Graph, LossReduction};
use noisemod::{RngStream, Tensor};

fn random(shape: &[usize], rng: &mut RngStream) -> Tensor {
    let mut t = Tensor::zeros(shape);
    t.data_mut().iter_mut().for_each(|v| *v = rng.uniform_in(-1.0, 1.0));
    t
}

fn main() -> noisemod::Result<()> {
    let mut rng = RngStream::new(3);
    let mut g = Graph::new();
    let x = g.leaf();
    let k = g.leaf();
    let w = g.leaf();
    let b = g.leaf();
    let h = g.conv2d(x, k, None, 1, 1);
    let h = g.relu(h);
    let h = g.reshape(h, &[2, 3 * 5 * 5]);
    let logits = g.dense(h, w, b);
    let loss = g.softmax_cross_entropy(logits, &[1, 3], LossReduction::Mean);

    let leaves = [
        (x, random(&[2, 2, 5, 5], &mut rng)),
        (k, random(&[3, 2, 3, 3], &mut rng)),
        (w, random(&[75, 4], &mut rng)),
        (b, random(&[4], &mut rng)),
    ];
    for (v, t) in &leaves {
        g.bind(*v, t.clone())?;
    }
    g.forward()?;
    let vars: Vec<_> = leaves.iter().map(|(v, _)| *v).collect();
    let grads = g.backward(loss, &vars)?;

    let mut worst: f64 = 0.0;
    for (v, t) in &leaves {
        let analytic = grads.get(*v).unwrap();
        for i in 0..t.len() {
            let h = 1e-5 * t.data()[i].abs().max(1.0);
            let mut eval = |delta: f64| -> noisemod::Result<f64> {
                let mut p = t.clone();
                p.data_mut()[i] += delta;
                g.bind(*v, p)?;
                g.forward_scalar(loss)
            };
            let fd = (eval(h)? - eval(-h)?) / (2.0 * h);
            let a = analytic.data()[i];
            worst = worst.max((a - fd).abs() / a.abs().max(fd.abs()).max(1e-3));
        }
        g.bind(*v, t.clone())?;
    }
    println!("checked {} coordinates, worst error relative to max(|a|, |fd|, 1e-3): {worst:.2e}", leaves.iter().map(|(_, t)| t.len()).sum::<usize>());
    Ok(())
}
