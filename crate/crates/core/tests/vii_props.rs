mod common;

use common::{brute_cosine, sign};
use noisemod::data::{synthetic_dataset, SyntheticSpec};
use noisemod::interpretability::{gradient_image, input_gradient, input_gradients, mean_image, sign_cosine, vii, vii_example};
use noisemod::models::{Architecture, Checkpoint, ModelSpec};
use noisemod::{RngStream, Tensor};
use proptest::prelude::*;

fn sign_vec(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop::sample::select(vec![-1.0, 0.0, 1.0]), len)
}

fn pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1usize..300).prop_flat_map(|n| (sign_vec(n), sign_vec(n)))
}

proptest! {
    #[test]
    fn matches_brute_force_and_stays_in_unit_interval((d, g) in pair()) {
        let v = sign_cosine(&d, &g).unwrap();
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert!((v - brute_cosine(&d, &g)).abs() <= 1e-12);
    }

    #[test]
    fn positive_gradient_scaling_changes_nothing(
        centred in prop::collection::vec(-1.0f64..1.0, 1..100),
        seed in any::<u64>(),
        s in 1e-3f64..1e3,
    ) {
        let mut rng = RngStream::new(seed);
        let grad: Vec<f64> = centred.iter().map(|_| rng.uniform_in(-1.0, 1.0)).collect();
        let scaled: Vec<f64> = grad.iter().map(|g| g * s).collect();
        prop_assert_eq!(vii_example(&centred, &grad).unwrap(), vii_example(&centred, &scaled).unwrap());
    }

    #[test]
    fn dataset_scaling_keeps_the_sign_pattern(
        images in prop::collection::vec(0.0f64..1.0, 12),
        s in 0.01f64..100.0,
    ) {
        let t = Tensor::new(vec![3, 4], images).unwrap();
        let scaled = t.scale(s);
        let (m, ms) = (mean_image(&t).unwrap(), mean_image(&scaled).unwrap());
        for i in 0..3 {
            let row = t.index_leading(i).unwrap().sub(&m).unwrap().sign();
            let row_s = scaled.index_leading(i).unwrap().sub(&ms).unwrap().sign();
            // Identical values stay identical after scaling, so only the
            // rounding of the mean can differ.
            for (a, b) in row.data().iter().zip(row_s.data()) {
                prop_assert!(a == b || *a == 0.0 || *b == 0.0);
            }
        }
    }

    #[test]
    fn shared_permutation_is_invisible((d, g) in pair(), seed in any::<u64>()) {
        let mut order: Vec<usize> = (0..d.len()).collect();
        RngStream::new(seed).shuffle(&mut order);
        let pd: Vec<f64> = order.iter().map(|&i| d[i]).collect();
        let pg: Vec<f64> = order.iter().map(|&i| g[i]).collect();
        prop_assert!((sign_cosine(&d, &g).unwrap() - sign_cosine(&pd, &pg).unwrap()).abs() <= 1e-15);
    }
}

#[test]
fn worked_examples() {
    let d = [1.0, 1.0, -1.0, -1.0];
    assert_eq!(sign_cosine(&d, &d).unwrap(), 1.0);
    assert_eq!(sign_cosine(&d, &[1.0, -1.0, 1.0, -1.0]).unwrap(), 0.0);
    assert_eq!(sign_cosine(&d, &[0.0; 4]).unwrap(), 0.0);
    assert_eq!(sign(-0.5) + sign(0.0) + sign(3.0), 0.0);
}

fn model_and_data() -> (Checkpoint, noisemod::data::LabeledDataset) {
    let spec = SyntheticSpec { classes: 4, count: 20, shape: [1, 8, 8], noise: 0.1 };
    let ds = synthetic_dataset(&spec, &mut RngStream::new(3)).unwrap();
    let m = Checkpoint::build(
        ModelSpec::new(Architecture::Fcnn6, [1, 8, 8], 4).with_widths(vec![3, 4, 4, 5, 5]),
        &mut RngStream::new(4),
    )
    .unwrap();
    (m, ds)
}

fn example_loss(model: &Checkpoint, x: &Tensor, label: usize) -> f64 {
    let batched = x.clone().reshape(&[&[1], x.shape()].concat()).unwrap();
    let logits = model.predict_batch(&batched).unwrap();
    let z = logits.data();
    let m = z.iter().cloned().fold(f64::MIN, f64::max);
    z.iter().map(|v| (v - m).exp()).sum::<f64>().ln() + m - z[label]
}

#[test]
fn input_gradient_matches_finite_differences() {
    let (model, ds) = model_and_data();
    // Zero backgrounds with zero-initialised biases sit exactly on ReLU
    // kinks, so the inputs are lifted off zero and jittered.
    let mut rng = RngStream::new(6);
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        let mut x = ds.images.index_leading(i).unwrap();
        x.data_mut().iter_mut().for_each(|v| *v = 0.05 + 0.9 * *v + 0.01 * rng.uniform());
        let g = input_gradient(&model, &x, ds.labels[i]).unwrap();
        for p in [0, 9, 27, 36, 63] {
            let h = 1e-6;
            let at = |d: f64| {
                let mut xp = x.clone();
                xp.data_mut()[p] += d;
                example_loss(&model, &xp, ds.labels[i])
            };
            let fd = (at(h) - at(-h)) / (2.0 * h);
            worst = worst.max((fd - g.data()[p]).abs());
        }
    }
    assert!(worst < 1e-5, "worst {worst:e}");
}

#[test]
fn batched_gradients_are_per_example() {
    let (model, ds) = model_and_data();
    let all = input_gradients(&model, &ds.images, &ds.labels).unwrap();
    for i in [0, 7, 19] {
        let one = input_gradient(&model, &ds.images.index_leading(i).unwrap(), ds.labels[i]).unwrap();
        for (a, b) in all.index_leading(i).unwrap().data().iter().zip(one.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn zero_final_layer_gives_zero_gradient_and_zero_vii() {
    let (mut model, ds) = model_and_data();
    let n = model.params.len();
    model.params[n - 2] = Tensor::zeros(model.params[n - 2].shape());
    let g = input_gradients(&model, &ds.images, &ds.labels).unwrap();
    assert!(g.data().iter().all(|&v| v == 0.0));
    let r = vii(&model, &ds).unwrap();
    assert_eq!(r.mean, 0.0);
    assert_eq!(r.count, 20);
}

#[test]
fn vii_report_values_are_bounded() {
    let (model, ds) = model_and_data();
    let r = vii(&model, &ds).unwrap();
    assert!(r.per_example.iter().all(|v| (0.0..=1.0).contains(v)));
    let mean = r.per_example.iter().sum::<f64>() / 20.0;
    assert!((r.mean - mean).abs() < 1e-15);
}

#[test]
fn gradient_images_are_min_max_scaled() {
    let g = Tensor::from_vec(vec![-2.0, 0.0, 6.0, 2.0]);
    assert_eq!(gradient_image(&g).unwrap().data(), &[0.0, 0.25, 1.0, 0.5]);
    assert_eq!(gradient_image(&Tensor::full(&[3], 4.0)).unwrap().data(), &[0.5; 3]);
}
