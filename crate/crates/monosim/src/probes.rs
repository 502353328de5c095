//! Numerical checks of the learner's structural guarantees. Each suite
//! returns a list of [`Check`]s; a suite passes when all of its checks do.
//! The command line `probe-invariants` subcommand and the acceptance test
//! both run these.

use std::f64::consts::PI;
use std::time::Instant;

use anyhow::Result;
use monosim_core::gauss::{GaussOracle, Poly, Univariate};
use monosim_core::initializer::{ChowRefine, HalfspaceLearner};
use monosim_core::isotonic::{solve_iso, solve_iso_dense, IsoInstance};
use monosim_core::linalg::{angle, dot, sym_op_norm};
use monosim_core::model::{squared_loss, SmoothKind};
use monosim_core::partition::{BandPartition, DEFAULT_BAND_CAP};
use monosim_core::pipeline::{run_pipeline_with, PipelineConfig};
use monosim_core::rng::{child_seed, stream, Purpose};
use monosim_core::spectral::{
    build_spectral_matrix, compute_band_statistics, spectral_optimization, Schedule, SignRule, SpectralEngine,
    SpectralMatrix,
};
use monosim_core::synth::{
    direction_at_angle, estimate_opt, gaussian_rows, generate, generate_halfspace, population_probe, random_unit,
    GroundTruth, NoiseModel,
};
use monosim_core::{Activation, Dataset, RegularityParams};
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub suite: &'static str,
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub pass: bool,
}

impl Check {
    fn at_most(suite: &'static str, name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self { suite, name: name.into(), value, bound, pass: value <= bound }
    }

    fn at_least(suite: &'static str, name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self { suite, name: name.into(), value, bound, pass: value >= bound }
    }

    /// Diagnostic value with no bound attached; serialized with `bound: null`.
    fn info(suite: &'static str, name: impl Into<String>, value: f64) -> Self {
        Self { suite, name: name.into(), value, bound: f64::NAN, pass: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Semigroup,
    Spectral,
    Wedin,
    Contraction,
    Initializer,
    Isotonic,
    /// End-to-end runs; slow, so not part of `all`.
    Recovery,
    Robustness,
}

impl Suite {
    pub const FAST: [Suite; 6] =
        [Suite::Semigroup, Suite::Spectral, Suite::Wedin, Suite::Contraction, Suite::Initializer, Suite::Isotonic];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Semigroup => "semigroup",
            Suite::Spectral => "spectral",
            Suite::Wedin => "wedin",
            Suite::Contraction => "contraction",
            Suite::Initializer => "initializer",
            Suite::Isotonic => "isotonic",
            Suite::Recovery => "recovery",
            Suite::Robustness => "robustness",
        }
    }

    pub fn parse(s: &str) -> Option<Vec<Suite>> {
        if s == "all" {
            return Some(Self::FAST.to_vec());
        }
        [Self::FAST.as_slice(), &[Suite::Recovery, Suite::Robustness]]
            .concat()
            .into_iter()
            .find(|x| x.name() == s)
            .map(|x| vec![x])
    }

    pub fn run(self) -> Result<Vec<Check>> {
        match self {
            Suite::Semigroup => semigroup_suite(),
            Suite::Spectral => spectral_suite(1_000_000, 1),
            Suite::Wedin => wedin_suite(10),
            Suite::Contraction => contraction_suite(10),
            Suite::Initializer => initializer_suite(10),
            Suite::Isotonic => isotonic_suite(),
            Suite::Recovery => recovery_suite(10),
            Suite::Robustness => robustness_suite(10),
        }
    }
}

fn e(d: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; d];
    v[i] = 1.0;
    v
}

pub fn catalog() -> Vec<Activation> {
    vec![
        Activation::Identity,
        Activation::relu(),
        Activation::GeneralRelu { bias: 0.5 },
        Activation::BiasedThreshold { bias: 0.2 },
        Activation::BoundedSmooth { kind: SmoothKind::Logistic, amplitude: 1.0, slope: 2.0, shift: 0.0 },
        Activation::BoundedSmooth { kind: SmoothKind::Tanh, amplitude: 1.5, slope: 1.0, shift: 0.3 },
        Activation::BoundedSmooth { kind: SmoothKind::Erf, amplitude: 1.0, slope: 4.0, shift: -0.5 },
        Activation::clamped_identity(1.0),
        Activation::piecewise_linear(vec![-2.0, -0.5, 1.0], vec![0.0, 0.2, 2.0]).expect("monotone knots"),
        Activation::Scaled { factor: 16.0, inner: Box::new(Activation::relu()) },
    ]
}

fn label(a: &Activation) -> String {
    format!("{a:?}").split_whitespace().collect::<Vec<_>>().join("")
}

/// OU semigroup: composition, nonexpansiveness, monotonicity in ρ, self
/// adjointness and the smoothing error bound.
pub fn semigroup_suite() -> Result<Vec<Check>> {
    const S: &str = "semigroup";
    let o = GaussOracle::default();
    let mut out = Vec::new();
    // Monomials and a mixed polynomial up to degree 6.
    let mut polys: Vec<Poly> =
        (0..=6).map(|k| Poly((0..=k).map(|j| if j == k { 1.0 } else { 0.0 }).collect())).collect();
    polys.push(Poly(vec![0.3, -1.0, 0.5, 0.2, -0.1, 0.05, 0.01]));
    for (k, p) in polys.iter().enumerate() {
        let r = o.check_semigroup_identities(p, 0.6, 0.5)?;
        out.push(Check::at_most(S, format!("composition poly{k}"), r.composition_residual, 1e-8));
    }
    let cat = catalog();
    let mut fns: Vec<&dyn Univariate> = cat.iter().map(|a| a as &dyn Univariate).collect();
    fns.extend(polys.iter().map(|p| p as &dyn Univariate));
    let mut worst_ratio: f64 = 0.0;
    let mut worst_drop: f64 = 0.0;
    for f in &fns {
        let norm = o.l2_norm(*f);
        let mut prev = 0.0;
        for k in 1..=9 {
            let rho = k as f64 / 10.0;
            let n = o.smoothed_norm(*f, rho)?;
            if norm > 0.0 {
                worst_ratio = worst_ratio.max(n / norm);
            }
            if prev > 0.0 {
                worst_drop = worst_drop.max((prev - n) / prev);
            }
            prev = n;
        }
    }
    out.push(Check::at_most(S, "nonexpansive max ratio", worst_ratio, 1.0 + 1e-6));
    out.push(Check::at_most(S, "norm monotone in rho, max relative drop", worst_drop, 1e-6));
    let mut worst_sym: f64 = 0.0;
    for (i, f) in cat.iter().enumerate() {
        let g = &cat[(i + 3) % cat.len()];
        let (a, b) = o.symmetry_pair(f, g, 0.7)?;
        worst_sym = worst_sym.max((a - b).abs() / a.abs().max(b.abs()).max(1.0));
    }
    out.push(Check::at_most(S, "self-adjoint max residual", worst_sym, 1e-8));
    for a in &cat {
        for rho in [0.5, 0.9, 0.99] {
            let b = o.check_smoothing_error(a, rho)?;
            out.push(Check::at_most(S, format!("smoothing bound {} rho={rho}", label(a)), b.lhs, b.rhs));
        }
    }
    Ok(out)
}

/// Population spectral matrix at 30° from the truth for a scaled ReLU with
/// 1% oblivious noise, scaled so that `sin θ ‖T_{cos θ}σ'‖ >= 40 √OPT`.
pub fn spectral_suite(mc_budget: usize, seed: u64) -> Result<Vec<Check>> {
    const S: &str = "spectral";
    let d = 5;
    let opt = 0.01;
    let w_star = e(d, 0);
    let sigma = Activation::Scaled { factor: 16.0, inner: Box::new(Activation::relu()) };
    let truth = GroundTruth::new(&w_star, sigma, NoiseModel::ObliviousBounded { rate: opt, magnitude: 1.0 }, 1e3)?;
    let w = direction_at_angle(&w_star, PI / 6.0, seed);
    // Coarse bands keep the per-band estimates well populated at this budget.
    let partition = BandPartition::uniform(0.05, 160)?;
    let oracle = GaussOracle::default();
    let r = population_probe(&truth, &w, &partition, mc_budget, 10, seed, &oracle)?;
    let s2 = r.theta.sin().powi(2);
    let n2 = r.smoothed_derivative_norm.powi(2);
    let tol = 5.0;
    // Bounds are relaxed by five standard errors of the estimate they bound.
    let mut out = vec![
        Check::at_least(
            S,
            "sin(theta) ||T sigma'|| >= 40 sqrt(OPT)",
            r.theta.sin() * r.smoothed_derivative_norm,
            40.0 * opt.sqrt(),
        ),
        Check::at_least(
            S,
            "v*' M v* >= sin^2 ||T sigma'||^2 / 16",
            r.v_star_quadratic.value,
            s2 * n2 / 16.0 - tol * r.v_star_quadratic.se,
        ),
    ];
    for (k, q) in r.orthogonal_quadratic.iter().enumerate() {
        out.push(Check::at_most(
            S,
            format!("u{k}' M u{k} <= 2 OPT, u orthogonal to w and v*"),
            q.value,
            2.0 * opt + tol * q.se,
        ));
    }
    out.push(Check::at_least(
        S,
        "|top eigvec . v*| >= sqrt(3)/2",
        r.top_correlation.value,
        3f64.sqrt() / 2.0 - tol * r.top_correlation.se,
    ));
    out.push(Check::at_least(
        S,
        "eigengap >= sin^2 ||T sigma'||^2 / 24",
        r.eigengap.value,
        s2 * n2 / 24.0 - tol * r.eigengap.se,
    ));
    out.push(Check::at_least(
        S,
        "gradient correlation >= 2/3 sin^2 ||T sigma'||^2",
        r.gradient_correlation.value,
        2.0 / 3.0 * s2 * n2 - tol * r.gradient_correlation.se,
    ));
    Ok(out)
}

fn matrix_of(data: &Dataset, w: &[f64], partition: &BandPartition, seed: u64) -> Result<SpectralMatrix> {
    let stats = compute_band_statistics(data, w, partition)?;
    Ok(build_spectral_matrix(&stats, partition, seed)?)
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn concat(a: &Dataset, b: &Dataset) -> Result<Dataset> {
    let x = [a.xs(), b.xs()].concat();
    let y = [a.ys(), b.ys()].concat();
    Ok(Dataset::new(a.dim(), x, y)?)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Eigenvector perturbation between independent draws against the
/// `‖E‖ / (gap - ‖E‖)` bound, and the `1/√N` shrinkage of the draw-to-draw
/// distance when the sample quadruples.
pub fn wedin_suite(seeds: u64) -> Result<Vec<Check>> {
    const S: &str = "wedin";
    let d = 5;
    let n = 25_000;
    let w_star = e(d, 0);
    let truth = GroundTruth::new(
        &w_star,
        Activation::relu(),
        NoiseModel::ObliviousBounded { rate: 0.05, magnitude: 1.0 },
        20.0,
    )?;
    let partition = BandPartition::uniform(0.1, 60)?;
    let mut out = Vec::new();
    let mut ratios = Vec::new();
    let mut worst_slack = f64::NEG_INFINITY;
    let mut applied = 0;
    for seed in 0..seeds {
        let w = direction_at_angle(&w_star, PI / 3.0, seed);
        let base = child_seed(seed, Purpose::Probe, 7);
        let draw = |size: usize, k: u64| generate(&truth, size, d, child_seed(base, Purpose::Probe, k));
        let (d1, d2) = (draw(n, 1)?, draw(n, 2)?);
        let pooled = concat(&d1, &d2)?;
        let m1 = matrix_of(&d1, &w, &partition, seed)?;
        let m2 = matrix_of(&d2, &w, &partition, seed)?;
        let mp = matrix_of(&pooled, &w, &partition, seed)?;
        for (a, b) in [(&m1, &m2), (&m1, &mp), (&m2, &mp)] {
            let pert = sym_op_norm(&sub(&a.m, &b.m), d);
            let gap = a.top_eigval - a.second_eigval;
            if gap > pert {
                applied += 1;
                let c = dot(&a.top_eigvec, &b.top_eigvec).clamp(-1.0, 1.0);
                let sin = (1.0 - c * c).max(0.0).sqrt();
                worst_slack = worst_slack.max(sin - (pert / (gap - pert) + 1e-6));
            }
        }
        let far = sym_op_norm(&sub(&m1.m, &m2.m), d);
        let (b1, b2) = (draw(4 * n, 3)?, draw(4 * n, 4)?);
        let near =
            sym_op_norm(&sub(&matrix_of(&b1, &w, &partition, seed)?.m, &matrix_of(&b2, &w, &partition, seed)?.m), d);
        ratios.push(far / near);
    }
    out.push(Check::at_least(S, "pairs where gap exceeds perturbation", applied as f64, 1.0));
    out.push(Check::at_most(S, "max sin(angle) minus perturbation bound", worst_slack, 0.0));
    let med = median(ratios);
    out.push(Check::at_least(S, "median error ratio N vs 4N (lower)", med, 1.2));
    out.push(Check::at_most(S, "median error ratio N vs 4N (upper)", med, 2.5));
    Ok(out)
}

/// Oracle signs on a noiseless ReLU: the angle to the truth stays under the
/// step schedule for as long as the top eigenvector stays aligned.
pub fn contraction_suite(seeds: u64) -> Result<Vec<Check>> {
    const S: &str = "contraction";
    let d = 10;
    let params = RegularityParams::new(1.0, 1.0, 0.2)?;
    let partition = BandPartition::from_params(&params, DEFAULT_BAND_CAP)?;
    let mut schedule = Schedule::from_params(&params, 1);
    schedule.restarts = 1;
    let theta_bar = 0.6;
    let mut good = 0;
    let mut worst_excess = f64::NEG_INFINITY;
    let mut fewest_steps = usize::MAX;
    for seed in 0..seeds {
        let w_star = random_unit(d, &mut stream(seed, Purpose::Probe, 11));
        let truth = GroundTruth::new(&w_star, Activation::relu(), NoiseModel::None, 10.0)?;
        let data = generate(&truth, 100_000, d, child_seed(seed, Purpose::Probe, 12))?;
        let w0 = direction_at_angle(&w_star, theta_bar, seed);
        let run = spectral_optimization(
            &data,
            &partition,
            theta_bar,
            &w0,
            &schedule,
            seed,
            &SignRule::Oracle(w_star.clone()),
            false,
        )?;
        let mut engine = SpectralEngine::new(&data, &partition, seed)?;
        let mut ok = true;
        let mut steps = 0;
        for (t, w) in run.iterates.iter().enumerate() {
            steps = t;
            let excess = angle(w, &w_star)? - (schedule.phi(theta_bar, t) + 0.01);
            worst_excess = worst_excess.max(excess);
            ok &= excess <= 0.0;
            let mut v_star = w_star.clone();
            monosim_core::linalg::project_out(&mut v_star, w);
            if monosim_core::linalg::normalize(&mut v_star).is_err() {
                break;
            }
            // Past this point the analysis no longer promises contraction.
            if dot(&engine.eigen(w)?.vector, &v_star).abs() < 3f64.sqrt() / 2.0 {
                break;
            }
        }
        good += usize::from(ok);
        fewest_steps = fewest_steps.min(steps);
    }
    Ok(vec![
        Check::at_least(S, "seeds within schedule + 0.01", good as f64, (seeds as f64 * 0.9).ceil()),
        Check::info(S, "max angle minus (schedule + 0.01)", worst_excess),
        Check::info(S, "fewest aligned steps checked in a seed", fewest_steps as f64),
    ])
}

/// Chow plus refinement on biased halfspaces with 5% flips near the boundary.
pub fn initializer_suite(seeds: u64) -> Result<Vec<Check>> {
    const S: &str = "initializer";
    let d = 10;
    let learner = ChowRefine::default();
    let mut out = Vec::new();
    for m in [0.0, 0.5, 1.0] {
        let bound = if m > 0.0 { (PI / 16.0).min(1.0 / m) } else { PI / 16.0 };
        let mut good = 0;
        let mut worst: f64 = 0.0;
        for seed in 0..seeds {
            let w_star = random_unit(d, &mut stream(seed, Purpose::Probe, 21));
            let inst = generate_halfspace(&w_star, m, 0.05, 100_000, child_seed(seed, Purpose::Probe, 22))?;
            let w = learner.learn(&inst, 0.05, seed)?;
            let a = angle(&w, &w_star)?;
            worst = worst.max(a);
            good += usize::from(a <= bound);
        }
        out.push(Check::at_least(
            S,
            format!("M={m}: seeds with angle <= {bound:.4}"),
            good as f64,
            (seeds as f64 * 0.8).ceil(),
        ));
        out.push(Check::info(S, format!("M={m}: worst angle"), worst));
    }
    Ok(out)
}

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
            blocks.truncate(blocks.len() - 2);
            blocks.push(((m1 * n1 as f64 + m2 * n2 as f64) / (n1 + n2) as f64, n1 + n2));
        }
    }
    blocks.iter().flat_map(|&(m, n)| std::iter::repeat_n(m, n)).collect()
}

/// Fast solver against the dense QP and, without the Lipschitz cap, against
/// plain pool adjacent violators.
pub fn isotonic_suite() -> Result<Vec<Check>> {
    const S: &str = "isotonic";
    let mut worst_gap: f64 = 0.0;
    let mut worst_infeasible: f64 = 0.0;
    for k in 0..200u64 {
        let n = 1 + (k as usize * 7) % 40;
        let beta = [0.1, 1.0, 10.0][k as usize % 3];
        let draws = gaussian_rows(2 * n, 1, child_seed(k, Purpose::Probe, 31));
        let mut z: Vec<f64> = draws[..n].to_vec();
        if n > 4 {
            z[2] = z[1];
        }
        z.sort_by(f64::total_cmp);
        let y: Vec<f64> = draws[n..].iter().zip(&z).map(|(e, t)| 2.0 * t.max(0.0) + e).collect();
        let inst = IsoInstance::new(z, y, beta)?;
        let fast = solve_iso(&inst);
        let dense = solve_iso_dense(&inst)?;
        worst_gap = worst_gap.max((fast.objective - dense.objective).abs());
        worst_infeasible = worst_infeasible.max(inst.violation(&fast.v));
    }
    let mut worst_pav: f64 = 0.0;
    for k in 0..100u64 {
        let n = 2 + (k as usize * 13) % 39;
        let y: Vec<f64> = gaussian_rows(n, 1, child_seed(k, Purpose::Probe, 32)).iter().map(|v| 1.5 * v).collect();
        let z: Vec<f64> = (0..n).map(|i| 0.1 * i as f64).collect();
        let inst = IsoInstance::new(z, y.clone(), f64::INFINITY)?;
        let fast = solve_iso(&inst);
        for (a, b) in fast.v.iter().zip(pav(&y)) {
            worst_pav = worst_pav.max((a - b).abs());
        }
    }
    Ok(vec![
        Check::at_most(S, "max |fast - dense| objective, 200 instances", worst_gap, 1e-6),
        Check::at_most(S, "max constraint violation", worst_infeasible, 1e-9),
        Check::at_most(S, "max |fast - PAV| without Lipschitz cap, 100 instances", worst_pav, 1e-9),
    ])
}

/// Outcome of one end-to-end run against a fresh holdout.
#[derive(Debug, Clone, Serialize)]
pub struct EndToEnd {
    pub seed: u64,
    pub loss: f64,
    pub opt: f64,
    pub sin_angle: f64,
    pub seconds: f64,
}

fn end_to_end(truth: &GroundTruth, n: usize, params: RegularityParams, seed: u64) -> Result<EndToEnd> {
    let d = truth.dim();
    let data = generate(truth, n, d, child_seed(seed, Purpose::Probe, 41))?;
    let holdout = generate(truth, 100_000, d, child_seed(seed, Purpose::Probe, 42))?;
    let cfg = PipelineConfig::new(params, seed);
    let start = Instant::now();
    let out = run_pipeline_with(&data, &cfg, Some(&truth.w_star), &mut ())?;
    let seconds = start.elapsed().as_secs_f64();
    let sin_angle = if out.hypothesis.is_constant() { 1.0 } else { angle(&out.hypothesis.w, &truth.w_star)?.sin() };
    Ok(EndToEnd {
        seed,
        loss: squared_loss(&holdout, &out.hypothesis)?,
        opt: estimate_opt(truth, &holdout)?,
        sin_angle,
        seconds,
    })
}

fn random_truth(seed: u64, sigma: Activation, noise: NoiseModel, b: f64) -> Result<GroundTruth> {
    let w = random_unit(10, &mut stream(seed, Purpose::Probe, 40));
    Ok(GroundTruth::new(&w, sigma, noise, b)?)
}

/// Noiseless clamped identity: small loss, small angle, bounded wall time.
pub fn recovery_runs(seeds: u64) -> Result<Vec<EndToEnd>> {
    let params = RegularityParams::new(3.0, 1.0, 0.05)?;
    (0..seeds)
        .map(|seed| {
            let truth = random_truth(seed, Activation::clamped_identity(3.0), NoiseModel::None, 3.0)?;
            end_to_end(&truth, 200_000, params, seed)
        })
        .collect()
}

pub fn recovery_suite(seeds: u64) -> Result<Vec<Check>> {
    let runs = recovery_runs(seeds)?;
    let good = runs.iter().filter(|r| r.loss <= 0.01 && r.sin_angle <= 0.05 && r.seconds <= 120.0).count();
    let mut out = vec![Check::at_least(
        "recovery",
        "seeds with loss <= 0.01, sin <= 0.05, time <= 120s",
        good as f64,
        (seeds as f64 * 0.8).ceil(),
    )];
    out.push(Check::at_most("recovery", "median holdout loss", median(runs.iter().map(|r| r.loss).collect()), 0.01));
    out.push(Check::at_most(
        "recovery",
        "slowest run seconds",
        runs.iter().map(|r| r.seconds).fold(0.0, f64::max),
        120.0,
    ));
    Ok(out)
}

/// ReLU with bias 0.5 under oblivious noise tuned to a target OPT.
pub fn robustness_runs(opt: f64, seeds: u64) -> Result<Vec<EndToEnd>> {
    let params = RegularityParams::new(4.0, 1.0, 0.02)?;
    (0..seeds)
        .map(|seed| {
            let noise = NoiseModel::ObliviousBounded { rate: opt, magnitude: 1.0 };
            let truth = random_truth(seed, Activation::GeneralRelu { bias: 0.5 }, noise, 4.0)?;
            end_to_end(&truth, 500_000, params, seed)
        })
        .collect()
}

pub fn robustness_suite(seeds: u64) -> Result<Vec<Check>> {
    let eps = 0.02;
    let mut out = Vec::new();
    for opt in [0.01, 0.05] {
        let runs = robustness_runs(opt, seeds)?;
        let med_opt = median(runs.iter().map(|r| r.opt).collect());
        let med_loss = median(runs.iter().map(|r| r.loss).collect());
        out.push(Check::at_most(
            "robustness",
            format!("OPT={opt}: median loss vs 16 OPT + eps"),
            med_loss,
            16.0 * med_opt + eps,
        ));
    }
    Ok(out)
}
