use noisemod::modulation::{
    make_carrier, modulate, modulate_stages, multiplicative_approx, multiplicative_approx_with, Carrier,
};
use noisemod::rng::sample;
use noisemod::{NoiseKind, RngStream, Tensor};
use proptest::prelude::*;

fn kind_strategy() -> impl Strategy<Value = NoiseKind> {
    prop::sample::select(NoiseKind::ALL.to_vec())
}

fn image(values: Vec<f64>) -> Tensor {
    Tensor::from_vec(values)
}

proptest! {
    #[test]
    fn multiplier_has_unit_mean_and_is_nonnegative(
        kind in kind_strategy(),
        beta in 0.0f64..=1.0,
        n in 1usize..200,
        seed in any::<u64>(),
    ) {
        let c = make_carrier(beta, &kind.standard(), &[n], &mut RngStream::new(seed)).unwrap();
        let m = c.multiplier();
        prop_assert!(m.data().iter().all(|&v| v >= 0.0));
        prop_assert!((m.mean().unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn residual_form_equals_rescaled_square(
        kind in kind_strategy(),
        beta in 0.0f64..=1.0,
        x in prop::collection::vec(0.0f64..=1.0, 1..100),
        seed in any::<u64>(),
    ) {
        let n = x.len();
        let c = make_carrier(beta, &kind.standard(), &[n], &mut RngStream::new(seed)).unwrap();
        let x = image(x);
        let direct = modulate(&x, &c).unwrap();
        let scale = n as f64 / c.constant_component();
        for (i, (&xi, &r)) in x.data().iter().zip(c.residual().data()).enumerate() {
            let via_residual = xi * (1.0 + r * scale);
            prop_assert!((via_residual - direct.data()[i]).abs() <= 1e-9 * (1.0 + direct.data()[i].abs()));
        }
        prop_assert!(c.residual().sum().abs() <= 1e-9 * c.constant_component().max(1.0));
    }

    #[test]
    fn beta_one_is_exact_identity(
        kind in kind_strategy(),
        x in prop::collection::vec(-3.0f64..3.0, 1..100),
        seed in any::<u64>(),
    ) {
        let c = make_carrier(1.0, &kind.standard(), &[x.len()], &mut RngStream::new(seed)).unwrap();
        let x = image(x);
        prop_assert_eq!(modulate(&x, &c).unwrap(), x);
    }

    #[test]
    fn modulation_commutes_with_power_of_two_scaling(
        x in prop::collection::vec(0.0f64..=1.0, 1..64),
        exp in -4i32..4,
        seed in any::<u64>(),
    ) {
        let s = 2f64.powi(exp);
        let c = make_carrier(0.5, &NoiseKind::Gaussian.standard(), &[x.len()], &mut RngStream::new(seed)).unwrap();
        let x = image(x);
        prop_assert_eq!(modulate(&x.scale(s), &c).unwrap(), modulate(&x, &c).unwrap().scale(s));
    }

    #[test]
    fn modulation_is_homogeneous(
        x in prop::collection::vec(0.0f64..=1.0, 1..64),
        s in 0.01f64..100.0,
        seed in any::<u64>(),
    ) {
        let c = make_carrier(0.3, &NoiseKind::Laplace.standard(), &[x.len()], &mut RngStream::new(seed)).unwrap();
        let x = image(x);
        let a = modulate(&x.scale(s), &c).unwrap();
        let b = modulate(&x, &c).unwrap().scale(s);
        for (p, q) in a.data().iter().zip(b.data()) {
            prop_assert!((p - q).abs() <= 1e-15 * p.abs().max(q.abs()) * 4.0);
        }
    }

    #[test]
    fn carrier_scale_does_not_change_multiplier(
        values in prop::collection::vec(0.1f64..3.0, 1..64),
        s in 0.1f64..10.0,
    ) {
        let a = Carrier::from_values(image(values.clone())).unwrap();
        let b = Carrier::from_values(image(values).scale(s)).unwrap();
        for (p, q) in a.multiplier().data().iter().zip(b.multiplier().data()) {
            prop_assert!((p - q).abs() < 1e-12 * (1.0 + p.abs()));
        }
    }

    #[test]
    fn multiplicative_zero_alpha_is_identity(
        x in prop::collection::vec(0.0f64..=1.0, 1..64),
        seed in any::<u64>(),
    ) {
        let x = image(x);
        let y = multiplicative_approx(&x, 0.0, &NoiseKind::Gaussian.standard(), &mut RngStream::new(seed)).unwrap();
        prop_assert_eq!(y, x);
    }
}

#[test]
fn constant_component_is_dft_bin_zero() {
    let mut rng = RngStream::new(9);
    for _ in 0..50 {
        let c = make_carrier(0.4, &NoiseKind::Gaussian.standard(), &[37], &mut rng).unwrap();
        let sq: Vec<f64> = c.values().data().iter().map(|v| v * v).collect();
        let n = sq.len();
        // Naive DFT, k = 0 and k = 1; the k = 0 bin has no imaginary part.
        let bin = |k: usize| {
            sq.iter().enumerate().fold((0.0, 0.0), |(re, im), (t, &v)| {
                let ang = -2.0 * std::f64::consts::PI * (k * t) as f64 / n as f64;
                (re + v * ang.cos(), im + v * ang.sin())
            })
        };
        let (re0, im0) = bin(0);
        assert!((re0 - c.constant_component()).abs() < 1e-12 * re0);
        assert_eq!(im0, 0.0);
        assert!((c.lambda() - re0 / n as f64).abs() < 1e-12);
        let (re1, im1) = bin(1);
        assert!(re1.hypot(im1) < re0);
    }
}

#[test]
fn stages_follow_the_carrier() {
    let x = image(vec![0.2, 0.4, 0.6, 0.8]);
    let c = Carrier::from_values(image(vec![1.0, 2.0, -1.0, 0.5])).unwrap();
    let s = modulate_stages(&x, &c).unwrap();
    assert_eq!(s.modulated.data(), &[0.2, 0.8, -0.6, 0.4]);
    assert_eq!(s.demodulated.data(), &[0.2, 1.6, 0.6, 0.2]);
    let c0 = 1.0 + 4.0 + 1.0 + 0.25;
    let want: Vec<f64> = [0.2, 1.6, 0.6, 0.2].iter().map(|v| v * 4.0 / c0).collect();
    for (a, b) in s.rescaled.data().iter().zip(&want) {
        assert!((a - b).abs() < 1e-15);
    }
}

#[test]
fn zero_carrier_is_rejected() {
    assert!(Carrier::from_values(Tensor::zeros(&[5])).is_err());
    assert!(make_carrier(1.5, &NoiseKind::Gaussian.standard(), &[5], &mut RngStream::new(0)).is_err());
}

#[test]
fn sample_moments_follow_the_law_of_large_numbers() {
    let n = 1_000_000;
    for kind in NoiseKind::ALL {
        let d = kind.standard();
        let s = sample(&d, &[n], &mut RngStream::new(21)).unwrap();
        let mean = s.mean().unwrap();
        let var = s.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        let se = (d.variance() / n as f64).sqrt();
        assert!((mean - d.mean()).abs() < 5.0 * se, "{kind}: mean {mean} vs {}", d.mean());
        assert!((var / d.variance() - 1.0).abs() < 0.02, "{kind}: var {var} vs {}", d.variance());
    }
}

#[test]
fn multiplicative_noise_keeps_the_input_on_average() {
    let x = image(vec![0.25, 0.5, 1.0]);
    let n = 100_000;
    let mut rng = RngStream::new(3);
    let mut acc = [0.0; 3];
    for _ in 0..n {
        let y = multiplicative_approx(&x, 1.0, &NoiseKind::Gaussian.standard(), &mut rng).unwrap();
        acc.iter_mut().zip(y.data()).for_each(|(a, v)| *a += v);
    }
    for (a, xv) in acc.iter().zip(x.data()) {
        let se = xv / (n as f64).sqrt();
        assert!((a / n as f64 - xv).abs() < 5.0 * se);
    }
    let fixed = multiplicative_approx_with(&x, 0.5, &image(vec![2.0, -2.0, 0.0])).unwrap();
    assert_eq!(fixed.data(), &[0.5, 0.0, 1.0]);
}
