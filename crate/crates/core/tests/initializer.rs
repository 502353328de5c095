use monosim_core::initializer::*;
use monosim_core::linalg::{angle, norm};
use monosim_core::synth::{direction_at_angle, generate, generate_halfspace, random_unit, GroundTruth, NoiseModel};
use monosim_core::{Activation, Dataset, Error, RegularityParams};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

fn grid(b: f64, eps: f64) -> Vec<f64> {
    build_threshold_grid(&RegularityParams::new(b, 1.0, eps).unwrap()).thresholds
}

#[test]
fn threshold_grid_examples() {
    let g = grid(1.0, 0.04);
    let want = [0.2, 0.4, 0.6, 0.8, 1.0, 1.2];
    assert_eq!(g.len(), want.len());
    for (a, b) in g.iter().zip(want) {
        assert!((a - b).abs() < 1e-15);
    }
    assert_eq!(grid(1.0, 1.0), vec![1.0, 2.0]);
    assert!(RegularityParams::new(1.0, 1.0, 0.0).is_err());
}

#[test]
fn label_transform() {
    let d = Dataset::new(1, vec![0.1, -0.7, 3.0], vec![0.5, 0.4, 0.6]).unwrap();
    let h = transform_labels(&d, 0.5).unwrap();
    assert_eq!(h.data.ys(), &[1.0, 0.0, 1.0]);
    assert_eq!(h.data.xs(), d.xs());
    assert!((h.positive_rate - 2.0 / 3.0).abs() < 1e-15);
    assert_eq!(transform_labels(&d, 5.0).unwrap().positive_rate, 0.0);
}

#[test]
fn learner_recovers_clean_halfspace() {
    let w_star = direction_at_angle(&[1.0, 0.0, 0.0, 0.0, 0.0], 1.1, 4);
    let inst = generate_halfspace(&w_star, 0.0, 0.0, 100_000, 9).unwrap();
    let w = ChowRefine::default().learn(&inst, 0.05, 1).unwrap();
    assert!(angle(&w, &w_star).unwrap() <= 0.05);
    assert!((norm(&w) - 1.0).abs() < 1e-12);
}

#[test]
fn constant_labels_are_uninformative() {
    let inst = generate_halfspace(&[1.0, 0.0], -40.0, 0.0, 1000, 1).unwrap();
    assert_eq!(inst.positive_rate, 1.0);
    assert!(matches!(ChowRefine::default().learn(&inst, 0.1, 0), Err(Error::UninformativeThreshold { .. })));
}

#[test]
fn boundary_flips_stay_within_sixteenth_turn() {
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w_star = random_unit(5, &mut rng);
        let inst = generate_halfspace(&w_star, 0.0, 0.05, 100_000, seed).unwrap();
        let w = ChowRefine::default().learn(&inst, 0.05, seed).unwrap();
        assert!(angle(&w, &w_star).unwrap() <= PI / 16.0, "seed {seed}");
    }
}

#[test]
fn chow_stage_on_biased_halfspaces() {
    let mut good = 0;
    for trial in 0..100u64 {
        let d = 5 + (trial as usize % 16);
        let m = [0.0, 0.5, 1.0][trial as usize % 3];
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + trial);
        let w_star = random_unit(d, &mut rng);
        let inst = generate_halfspace(&w_star, m, 0.0, 100_000, trial).unwrap();
        let w = chow_direction(&inst).unwrap();
        good += usize::from(angle(&w, &w_star).unwrap() <= 0.1);
    }
    assert!(good >= 95, "{good}/100");
}

#[test]
fn initialize_linear_model() {
    let params = RegularityParams::new(1.0, 1.0, 0.04).unwrap();
    let w_star = direction_at_angle(&[0.0, 1.0, 0.0, 0.0], 0.7, 1);
    let truth = GroundTruth::new(&w_star, Activation::Identity, NoiseModel::None, 1.0).unwrap();
    let data = generate(&truth, 60_000, 4, 2).unwrap();
    let out = initialize(&data, &params, &ChowRefine::default(), 3).unwrap();
    assert!(out.vectors.len() <= 6);
    assert!(out.vectors.iter().any(|w| angle(w, &w_star).unwrap() <= 0.05));
    // the threshold above B has no positives
    assert!(out.skipped.iter().any(|&(t, rate)| t > 1.0 && rate == 0.0));
    for w in &out.vectors {
        assert!((norm(w) - 1.0).abs() < 1e-12);
    }
}

#[test]
fn initialize_zero_labels() {
    let params = RegularityParams::new(1.0, 1.0, 0.04).unwrap();
    let data = Dataset::new(2, vec![0.5; 200], vec![0.0; 100]).unwrap();
    let out = initialize(&data, &params, &ChowRefine::default(), 0).unwrap();
    assert!(out.vectors.is_empty());
    assert_eq!(out.skipped.len(), 6);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn initializer_output_contract(b in 0.2f64..3.0, eps in 0.02f64..1.0, seed in 0u64..1000) {
        let params = RegularityParams::new(b, 1.0, eps).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w_star = random_unit(3, &mut rng);
        let truth = GroundTruth::new(&w_star, Activation::GeneralRelu { bias: 0.3 }, NoiseModel::None, b).unwrap();
        let data = generate(&truth, 2_000, 3, seed).unwrap();
        let learner = ChowRefine { passes: 5, batch: 256, ..ChowRefine::default() };
        let out = initialize(&data, &params, &learner, seed).unwrap();
        let cap = (b / eps.sqrt()).ceil() as usize + 1;
        prop_assert!(out.vectors.len() <= cap);
        prop_assert_eq!(out.vectors.len() + out.skipped.len(), build_threshold_grid(&params).thresholds.len());
        for w in &out.vectors {
            prop_assert!((norm(w) - 1.0).abs() < 1e-12);
        }
    }
}
