use monosim_core::gauss::GaussOracle;
use monosim_core::linalg::angle;
use monosim_core::partition::{BandPartition, DEFAULT_BAND_CAP};
use monosim_core::synth::*;
use monosim_core::{Activation, RegularityParams};

fn e(d: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; d];
    v[i] = 1.0;
    v
}

#[test]
fn clean_linear_and_determinism() {
    let truth = GroundTruth::new(&[3.0, 4.0], Activation::Identity, NoiseModel::None, 100.0).unwrap();
    assert!((truth.w_star[0] - 0.6).abs() < 1e-15);
    let data = generate(&truth, 10_000, 2, 1).unwrap();
    let opt = estimate_opt(&truth, &data).unwrap();
    assert!(opt <= 3.0 / (data.len() as f64).sqrt());
    assert!(opt < 1e-12);
    let t1 = GroundTruth::new(&[1.0], Activation::relu(), NoiseModel::None, 5.0).unwrap();
    let a = generate(&t1, 3, 1, 77).unwrap();
    let b = generate(&t1, 3, 1, 77).unwrap();
    assert_eq!(
        a.xs().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        b.xs().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    );
    assert_eq!(a, b);
    assert_ne!(a, generate(&t1, 3, 1, 78).unwrap());
}

#[test]
fn covariate_moments() {
    let n = 200_000;
    let d = 6;
    let x = gaussian_rows(n, d, 3);
    for k in 0..d {
        let mean = (0..n).map(|i| x[i * d + k]).sum::<f64>() / n as f64;
        let var = (0..n).map(|i| (x[i * d + k] - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() <= 4.0 / (n as f64).sqrt());
        assert!((var - 1.0).abs() <= 4.0 * (2.0 / n as f64).sqrt());
    }
}

#[test]
fn oblivious_noise_rate_and_opt() {
    let n = 100_000;
    let truth = GroundTruth::new(
        &e(3, 0),
        Activation::clamped_identity(1.0),
        NoiseModel::ObliviousBounded { rate: 0.1, magnitude: 1.0 },
        1.0,
    )
    .unwrap();
    let g = generate_detailed(&truth, n, 3, 4).unwrap();
    let frac = g.corrupted.len() as f64 / n as f64;
    assert!((frac - 0.1).abs() <= 2.0 * (0.1f64 * 0.9 / n as f64).sqrt());
    assert!(estimate_opt(&truth, &g.data).unwrap() <= 0.1 * 4.0 * 1.2);

    // ReLU with room to spare above the labels: OPT = rate · magnitude²
    let n = 1_000_000;
    let truth = GroundTruth::new(
        &e(2, 1),
        Activation::relu(),
        NoiseModel::ObliviousBounded { rate: 0.05, magnitude: 1.0 },
        20.0,
    )
    .unwrap();
    let data = generate(&truth, n, 2, 5).unwrap();
    let se = (0.05f64 * 0.95 / n as f64).sqrt();
    assert!((estimate_opt(&truth, &data).unwrap() - 0.05).abs() <= 3.0 * se);
}

#[test]
fn adversarial_models_hit_exact_budget() {
    let n = 50_001;
    let w = e(4, 2);
    for noise in [
        NoiseModel::AdversarialBand { rate: 0.05, target: BandTarget::Truth, center: 0.2, half_width: 0.5 },
        NoiseModel::AdversarialBand { rate: 0.3, target: BandTarget::Direction(e(4, 0)), center: 0.0, half_width: 0.1 },
        NoiseModel::SignFlipTail { rate: 0.02 },
    ] {
        let rate = match &noise {
            NoiseModel::AdversarialBand { rate, .. } | NoiseModel::SignFlipTail { rate } => *rate,
            _ => unreachable!(),
        };
        let truth = GroundTruth::new(&w, Activation::GeneralRelu { bias: 0.5 }, noise, 2.0).unwrap();
        let g = generate_detailed(&truth, n, 4, 6).unwrap();
        assert_eq!(g.corrupted.len(), (rate * n as f64).floor() as usize);
        assert_eq!(g, generate_detailed(&truth, n, 4, 6).unwrap());
    }
    let bad = GroundTruth::new(&w, Activation::relu(), NoiseModel::SignFlipTail { rate: 1.5 }, 1.0);
    assert!(bad.is_err());
}

#[test]
fn truncation_leaves_clean_labels_alone() {
    let truth = GroundTruth::new(&e(2, 0), Activation::clamped_identity(1.5), NoiseModel::None, 2.0).unwrap();
    let data = generate(&truth, 5_000, 2, 9).unwrap();
    assert_eq!(estimate_opt(&truth, &data).unwrap(), 0.0);
}

#[test]
fn halfspace_generator_flips_exact_count() {
    let w = e(3, 1);
    let clean = generate_halfspace(&w, 0.5, 0.0, 20_000, 2).unwrap();
    let noisy = generate_halfspace(&w, 0.5, 0.05, 20_000, 2).unwrap();
    let flips = clean.data.ys().iter().zip(noisy.data.ys()).filter(|(a, b)| a != b).count();
    assert_eq!(flips, 1000);
    assert_eq!(clean.data.xs(), noisy.data.xs());
}

#[test]
fn direction_at_angle_is_exact() {
    let w = e(5, 3);
    for &t in &[0.0, 1e-6, 0.3, 1.5, std::f64::consts::FRAC_PI_2] {
        let v = direction_at_angle(&w, t, 8);
        assert!((angle(&v, &w).unwrap() - t).abs() < 1e-12);
    }
}

#[test]
fn probe_linear_orthogonal_start() {
    let part = BandPartition::from_params(&RegularityParams::new(1.0, 1.0, 0.2).unwrap(), DEFAULT_BAND_CAP).unwrap();
    let covered = part.band_probs.iter().sum::<f64>();
    let truth = GroundTruth::new(&e(3, 1), Activation::Identity, NoiseModel::None, 50.0).unwrap();
    let oracle = GaussOracle::default();
    let r = population_probe(&truth, &e(3, 0), &part, 200_000, 8, 3, &oracle).unwrap();
    assert!((r.theta - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
    assert!((r.v_star_quadratic.value - covered).abs() <= 3.0 * r.v_star_quadratic.se, "{:?}", r.v_star_quadratic);
    for u in &r.orthogonal_quadratic {
        assert!(u.value.abs() <= 3.0 * u.se + 1e-12, "{u:?}");
    }
}

#[test]
fn probe_gradient_correlation_relu() {
    // ReLU at 30° with 1% oblivious noise.
    let d = 5;
    let part = BandPartition::uniform(0.1, 60).unwrap();
    let truth = GroundTruth::new(
        &e(d, 0),
        Activation::relu(),
        NoiseModel::ObliviousBounded { rate: 0.01, magnitude: 1.0 },
        20.0,
    )
    .unwrap();
    let w = direction_at_angle(&e(d, 0), std::f64::consts::PI / 6.0, 1);
    let oracle = GaussOracle::default();
    let r = population_probe(&truth, &w, &part, 200_000, 8, 2, &oracle).unwrap();
    let s = r.theta.sin();
    let bound = 2.0 / 3.0 * r.smoothed_derivative_norm.powi(2) * s * s;
    assert!(r.gradient_correlation.value >= bound - 3.0 * r.gradient_correlation.se);
}
