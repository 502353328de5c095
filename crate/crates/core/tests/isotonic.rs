use monosim_core::isotonic::{fit_direction, interpolate_hypothesis, solve_iso, solve_iso_dense, IsoInstance};
use monosim_core::model::Dataset;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Plain pool-adjacent-violators, written independently of the library.
fn pav(y: &[f64]) -> Vec<f64> {
    let mut blocks: Vec<(f64, usize)> = Vec::new();
    for &v in y {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (m2, n2) = blocks[blocks.len() - 1];
            let (m1, n1) = blocks[blocks.len() - 2];
            if m1 <= m2 {
                break;
            }
            blocks.pop();
            blocks.pop();
            let n = n1 + n2;
            blocks.push(((m1 * n1 as f64 + m2 * n2 as f64) / n as f64, n));
        }
    }
    blocks.iter().flat_map(|&(m, n)| std::iter::repeat_n(m, n)).collect()
}

// Optimality certificate: with d_k = v_{k+1} - v_k, the partial derivative
// of the objective in d_k (level re-optimized) is 2 Σ_{i>k} (v_i - y_i).
fn kkt_residual(z: &[f64], y: &[f64], beta: f64, v: &[f64]) -> f64 {
    let n = v.len();
    let mut worst: f64 = 0.0;
    let total: f64 = (0..n).map(|i| 2.0 * (v[i] - y[i])).sum();
    worst = worst.max(total.abs());
    let mut tail = 0.0;
    for k in (0..n - 1).rev() {
        tail += 2.0 * (v[k + 1] - y[k + 1]);
        let cap = beta * (z[k + 1] - z[k]);
        let d = v[k + 1] - v[k];
        if cap == 0.0 {
            continue;
        }
        let at_lo = d <= 1e-9;
        let at_hi = d >= cap - 1e-9;
        let r = if at_lo && at_hi {
            0.0
        } else if at_lo {
            (-tail).max(0.0)
        } else if at_hi {
            tail.max(0.0)
        } else {
            tail.abs()
        };
        worst = worst.max(r);
    }
    worst
}

fn random_instance(rng: &mut ChaCha8Rng, n: usize, beta: f64) -> IsoInstance {
    let mut z: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    if n > 3 {
        z[1] = z[0];
    }
    let mut z_sorted = z.clone();
    z_sorted.sort_by(f64::total_cmp);
    let y = z_sorted.iter().map(|t| t.max(0.0) * 2.0 + rng.random_range(-1.0..1.0)).collect();
    IsoInstance::new(z_sorted, y, beta).unwrap()
}

#[test]
fn worked_examples() {
    let inst = IsoInstance::new(vec![0.0, 1.0, 2.0], vec![1.0, 0.0, 2.0], 10.0).unwrap();
    let sol = solve_iso(&inst);
    for (a, b) in sol.v.iter().zip([0.5, 0.5, 2.0]) {
        assert!((a - b).abs() < 1e-12);
    }
    assert!((sol.objective - 0.5).abs() < 1e-12);

    let inst = IsoInstance::new(vec![0.0, 1.0], vec![0.0, 5.0], 1.0).unwrap();
    let sol = solve_iso(&inst);
    assert!((sol.v[0] - 2.0).abs() < 1e-12 && (sol.v[1] - 3.0).abs() < 1e-12);
    assert!((sol.objective - 8.0).abs() < 1e-12);
}

#[test]
fn feasible_input_is_returned_unchanged() {
    let z = vec![0.0, 0.5, 1.0, 3.0];
    let y = vec![0.0, 0.1, 0.1, 1.0];
    let sol = solve_iso(&IsoInstance::new(z, y.clone(), 1.0).unwrap());
    for (a, b) in sol.v.iter().zip(&y) {
        assert!((a - b).abs() < 1e-12);
    }
    assert!(sol.objective < 1e-24);
}

#[test]
fn ties_force_equal_values() {
    let inst = IsoInstance::new(vec![0.0, 1.0, 1.0, 2.0], vec![0.0, 3.0, -1.0, 2.0], 100.0).unwrap();
    let sol = solve_iso(&inst);
    assert_eq!(sol.v[1], sol.v[2]);
}

#[test]
fn fast_matches_dense_and_certificate() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..200 {
        let beta = [0.1, 1.0, 10.0][trial % 3];
        let n = rng.random_range(1..=40);
        let inst = random_instance(&mut rng, n, beta);
        let fast = solve_iso(&inst);
        let dense = solve_iso_dense(&inst).unwrap();
        assert!(
            (fast.objective - dense.objective).abs() <= 1e-6,
            "trial {trial}: {} vs {}",
            fast.objective,
            dense.objective
        );
        assert!(inst.violation(&fast.v) <= 1e-9);
        assert!(kkt_residual(&inst.z, &inst.y, beta, &fast.v) <= 1e-7, "trial {trial}");
    }
}

#[test]
fn infinite_beta_is_pav() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let n = rng.random_range(1..=60);
        let z: Vec<f64> = (0..n).map(|i| i as f64 * 0.1).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let inst = IsoInstance::new(z, y.clone(), f64::INFINITY).unwrap();
        let fast = solve_iso(&inst);
        for (a, b) in fast.v.iter().zip(pav(&y)) {
            assert!((a - b).abs() <= 1e-9);
        }
    }
}

#[test]
fn large_instance_is_feasible_and_certified() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let inst = random_instance(&mut rng, 20_000, 3.0);
    let sol = solve_iso(&inst);
    assert!(inst.violation(&sol.v) <= 1e-9);
    assert!(kkt_residual(&inst.z, &inst.y, 3.0, &sol.v) <= 1e-6);
}

#[test]
fn interpolation_is_flat_outside_and_linear_inside() {
    let inst = IsoInstance::new(vec![0.0, 1.0], vec![0.0, 1.0], 5.0).unwrap();
    let sol = solve_iso(&inst);
    let (h, clamped) = interpolate_hypothesis(&inst, &sol, &[1.0], 10.0);
    assert!(!clamped);
    assert!((h.link(0.5) - 0.5).abs() < 1e-12);
    assert_eq!(h.link(-4.0), 0.0);
    assert_eq!(h.link(9.0), 1.0);
}

#[test]
fn values_beyond_bound_are_clamped_and_flagged() {
    let inst = IsoInstance::new(vec![0.0, 1.0], vec![-5.0, 5.0], 100.0).unwrap();
    let sol = solve_iso(&inst);
    let (h, clamped) = interpolate_hypothesis(&inst, &sol, &[1.0], 2.0);
    assert!(clamped);
    assert!(h.values.iter().all(|v| v.abs() <= 2.0));
}

#[test]
fn fit_direction_recovers_clean_link() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 5000;
    let x: Vec<f64> = (0..2 * n).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
    let y: Vec<f64> = x.chunks(2).map(|r| r[0].clamp(-1.0, 1.0)).collect();
    let data = Dataset::new(2, x, y).unwrap();
    let fit = fit_direction(&data, &[1.0, 0.0], 4.0, 1.0).unwrap();
    assert!(fit.objective < 1e-20);
}

proptest! {
    #[test]
    fn solution_is_feasible_monotone_and_locally_optimal(
        ys in proptest::collection::vec(-5.0f64..5.0, 1..30),
        gaps in proptest::collection::vec(0.0f64..1.0, 30),
        beta in 0.05f64..20.0,
    ) {
        let n = ys.len();
        let mut z = vec![0.0; n];
        for i in 1..n {
            z[i] = z[i - 1] + if gaps[i] < 0.1 { 0.0 } else { gaps[i] };
        }
        let inst = IsoInstance::new(z, ys.clone(), beta).unwrap();
        let sol = solve_iso(&inst);
        prop_assert!(inst.violation(&sol.v) <= 1e-9);
        // Feasible single-coordinate perturbations never improve the objective.
        for i in 0..n {
            for delta in [1e-3, -1e-3] {
                let mut v = sol.v.clone();
                v[i] += delta;
                if inst.violation(&v) <= 0.0 {
                    prop_assert!(inst.objective(&v) >= sol.objective - 1e-12);
                }
            }
        }
        prop_assert!(kkt_residual(&inst.z, &inst.y, beta, &sol.v) <= 1e-7);
    }
}
