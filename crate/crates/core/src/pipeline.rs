//! End-to-end learner: thresholded starting directions, spectral descent runs
//! over a grid of target angles, and selection of the best fitted candidate.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};
use crate::initializer::{initialize, ChowRefine};
use crate::isotonic::fit_direction;
use crate::linalg::angle;
use crate::model::{squared_loss, truncate_labels, Dataset, Hypothesis, RegularityParams};
use crate::partition::{BandPartition, DEFAULT_BAND_CAP};
use crate::rng::{child_seed, stream, Purpose};
use crate::spectral::{Schedule, SignRule, SpectralEngine, TraceRecord, DEFAULT_RESTART_CAP};

/// Grid of target angles for the spectral runs.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum ThetaGrid {
    /// `kε/L` for `k = 1 ..= ⌈(π/2) L/ε⌉`, the last entry capped at π/2.
    Full,
    /// Subset of the full grid whose consecutive multipliers grow by at most
    /// `ratio`, with at most `cap` entries.
    Geometric {
        ratio: f64,
        cap: usize,
    },
    Explicit(Vec<f64>),
}

impl ThetaGrid {
    pub fn values(&self, params: &RegularityParams) -> Vec<f64> {
        let unit = params.eps / params.l;
        let k_max = (libm::ceil(FRAC_PI_2 / unit * (1.0 - 1e-12)) as usize).max(1);
        let at = |k: usize| (k as f64 * unit).min(FRAC_PI_2);
        match self {
            ThetaGrid::Full => (1..=k_max).map(at).collect(),
            ThetaGrid::Geometric { ratio, cap } => {
                let cap = (*cap).max(2);
                let needed = libm::pow(k_max as f64, 1.0 / (cap - 1) as f64);
                // k_i >= r^i, so k_max is reached within `cap` entries.
                let r = ratio.max(needed * (1.0 + 1e-12)).max(1.0 + 1e-9);
                let mut ks = vec![1usize];
                while *ks.last().unwrap() < k_max {
                    let last = *ks.last().unwrap();
                    let next = (libm::ceil(last as f64 * r) as usize).max(last + 1).min(k_max);
                    ks.push(next);
                }
                ks.into_iter().map(at).collect()
            }
            ThetaGrid::Explicit(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PipelineConfig {
    pub params: RegularityParams,
    pub theta_grid: ThetaGrid,
    pub schedule: Schedule,
    /// Number of starting directions (best first) that get spectral runs;
    /// `None` runs all of them.
    pub spectral_starts: Option<usize>,
    /// Lipschitz bound for fitted links; defaults to `B L / √ε`.
    pub beta: Option<f64>,
    pub band_cap: usize,
    pub halfspace: ChowRefine,
    pub seed: u64,
    /// Disjoint samples for initialization, spectral runs and testing.
    pub fresh_split: bool,
    /// Fit and select on the same testing sample.
    pub single_sample_test: bool,
    pub trace: bool,
}

impl PipelineConfig {
    /// Desk-scale defaults: geometric angle grid, a few restarts, spectral
    /// runs from the best starting direction.
    pub fn new(params: RegularityParams, seed: u64) -> Self {
        let mut schedule = Schedule::from_params(&params, DEFAULT_RESTART_CAP);
        schedule.restarts = schedule.restarts.min(2);
        Self {
            params,
            theta_grid: ThetaGrid::Geometric { ratio: 2.0, cap: 64 },
            schedule,
            spectral_starts: Some(1),
            beta: None,
            band_cap: DEFAULT_BAND_CAP,
            halfspace: ChowRefine::default(),
            seed,
            fresh_split: true,
            single_sample_test: false,
            trace: false,
        }
    }

    /// Full angle grid, the full restart budget, every starting direction and
    /// a single testing sample.
    pub fn paper_faithful(params: RegularityParams, seed: u64) -> Self {
        Self {
            theta_grid: ThetaGrid::Full,
            schedule: Schedule::from_params(&params, DEFAULT_RESTART_CAP),
            spectral_starts: None,
            single_sample_test: true,
            ..Self::new(params, seed)
        }
    }

    pub fn beta(&self) -> f64 {
        self.beta.unwrap_or_else(|| self.params.beta())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Stage {
    Split,
    Initialize,
    Spectral,
    Test,
}

/// Callbacks around each stage, e.g. for timing in a host environment.
pub trait StageObserver {
    fn begin(&mut self, _stage: Stage) {}
    fn end(&mut self, _stage: Stage) {}
}

impl StageObserver for () {}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Warning {
    SkippedThreshold { threshold: f64, positive_rate: f64 },
    NoInformativeThreshold,
    SmallSample { n: usize, recommended: usize },
    ClampedFits { count: usize },
    SpectralRunFailed { start: usize, theta_bar: f64, message: alloc::string::String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum CandidateKind {
    Constant,
    Initial,
    Spectral,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CandidateReport {
    pub index: usize,
    pub kind: CandidateKind,
    pub fit_objective: f64,
    pub holdout_loss: f64,
    pub angle_to_truth: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub w: Option<Vec<f64>>,
    pub kind: CandidateKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub hypothesis: Hypothesis,
    pub index: usize,
    pub reports: Vec<CandidateReport>,
    pub clamped: usize,
}

/// Fit a link along every candidate direction on `fit`, keep the one with the
/// smallest squared loss on `holdout`. `w: None` is the constant predictor.
pub fn test_and_select(
    candidates: &[Candidate],
    fit: &Dataset,
    holdout: &Dataset,
    beta: f64,
    b: f64,
    truth: Option<&[f64]>,
) -> Result<Selection> {
    if candidates.is_empty() {
        return Err(Error::InvalidParam("no candidates to test".into()));
    }
    if fit.is_empty() || holdout.is_empty() {
        return Err(Error::EmptyData);
    }
    let evaluate = |c: &Candidate| -> Result<(Hypothesis, f64, f64, bool)> {
        let (hyp, obj, clamped) = match &c.w {
            Some(w) => {
                let f = fit_direction(fit, w, beta, b)?;
                (f.hypothesis, f.objective, f.clamped)
            }
            None => {
                let mean = crate::linalg::pairwise_sum(fit.ys()) / fit.len() as f64;
                let obj = fit.ys().iter().map(|y| crate::linalg::sq(y - mean)).sum::<f64>() / fit.len() as f64;
                (Hypothesis::constant(fit.dim(), mean.clamp(-b, b), beta, b), obj, mean.abs() > b)
            }
        };
        let loss = squared_loss(holdout, &hyp)?;
        Ok((hyp, obj, loss, clamped))
    };
    #[cfg(feature = "parallel")]
    let results: Vec<Result<(Hypothesis, f64, f64, bool)>> = {
        use rayon::prelude::*;
        candidates.par_iter().map(evaluate).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Result<(Hypothesis, f64, f64, bool)>> = candidates.iter().map(evaluate).collect();

    let mut best: Option<(usize, Hypothesis, f64)> = None;
    let mut reports = Vec::with_capacity(candidates.len());
    let mut clamped = 0;
    for (index, (c, r)) in candidates.iter().zip(results).enumerate() {
        let (hyp, fit_objective, holdout_loss, was_clamped) = r?;
        clamped += usize::from(was_clamped);
        reports.push(CandidateReport {
            index,
            kind: c.kind,
            fit_objective,
            holdout_loss,
            angle_to_truth: match (&c.w, truth) {
                (Some(w), Some(t)) => angle(w, t).ok(),
                _ => None,
            },
        });
        if best.as_ref().is_none_or(|(_, _, l)| holdout_loss < *l) {
            best = Some((index, hyp, holdout_loss));
        }
    }
    let (index, hypothesis, _) = best.expect("nonempty candidates");
    Ok(Selection { hypothesis, index, reports, clamped })
}

/// Drop directions within `tol` (Euclidean) of an earlier one. Directions are
/// bucketed on a grid of that width, so near-duplicates straddling a bucket
/// edge may both survive; that only costs an extra fit.
pub fn dedup_directions(ws: Vec<Vec<f64>>, tol: f64) -> Vec<Vec<f64>> {
    let mut seen = BTreeSet::new();
    ws.into_iter()
        .filter(|w| seen.insert(w.iter().map(|x| libm::round(x / tol) as i64).collect::<Vec<i64>>()))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PipelineReport {
    pub n: usize,
    pub dim: usize,
    pub split_sizes: [usize; 4],
    pub bands: usize,
    pub band_width: f64,
    pub m_prime: f64,
    pub beta: f64,
    pub theta_grid: Vec<f64>,
    pub schedule: Schedule,
    pub thresholds_used: Vec<f64>,
    pub initial_count: usize,
    pub spectral_starts: usize,
    pub candidate_count: usize,
    pub selected_index: usize,
    pub selected_kind: CandidateKind,
    pub selected_holdout_loss: f64,
    pub candidates: Vec<CandidateReport>,
    pub degenerate_steps: usize,
    pub warnings: Vec<Warning>,
    /// `d² B¹² L⁸ / ε¹⁰ · ln(dBL/ε)`, the order of the sample size in the
    /// analysis, for reference only.
    pub theoretical_n: f64,
    pub trace: Vec<TraceRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub hypothesis: Hypothesis,
    pub report: PipelineReport,
}

struct Splits {
    init: Dataset,
    spectral: Dataset,
    fit: Dataset,
    holdout: Dataset,
}

fn split(data: &Dataset, config: &PipelineConfig) -> Splits {
    let n = data.len();
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = stream(config.seed, Purpose::Split, 0);
    // Fisher–Yates shuffle so user files in any row order split evenly.
    for i in (1..n).rev() {
        let j = rand::Rng::random_range(&mut rng, 0..=i);
        idx.swap(i, j);
    }
    let shuffled = data.select(&idx);
    let third = n / 3;
    let (learn_end, test_start) = (n - third, n - third);
    let (init, spectral) = if config.fresh_split {
        (shuffled.slice(0, third), shuffled.slice(third, learn_end))
    } else {
        let shared = shuffled.slice(0, learn_end);
        (shared.clone(), shared)
    };
    let test = shuffled.slice(test_start, n);
    let (fit, holdout) = if config.single_sample_test {
        (test.clone(), test)
    } else {
        let half = test.len() / 2;
        (test.slice(0, half), test.slice(half, test.len()))
    };
    Splits { init, spectral, fit, holdout }
}

/// Run the full learner. `truth`, when known, only feeds angle diagnostics.
pub fn run_pipeline(data: &Dataset, config: &PipelineConfig) -> Result<PipelineOutput> {
    run_pipeline_with(data, config, None, &mut ())
}

pub fn run_pipeline_with(
    data: &Dataset,
    config: &PipelineConfig,
    truth: Option<&[f64]>,
    observer: &mut dyn StageObserver,
) -> Result<PipelineOutput> {
    let params = &config.params;
    let d = data.dim();
    if data.len() < 6 || data.len() < d + 1 {
        return Err(Error::InvalidParam(alloc::format!("need at least max(6, d+1) samples, got {}", data.len())));
    }
    let beta = config.beta();
    let partition = BandPartition::from_params(params, config.band_cap)?;
    let theta_grid = config.theta_grid.values(params);
    if theta_grid.iter().any(|t| !(*t > 0.0 && *t <= FRAC_PI_2)) {
        return Err(Error::InvalidParam("theta grid values must lie in (0, π/2]".into()));
    }
    let mut warnings = Vec::new();

    observer.begin(Stage::Split);
    let data = truncate_labels(data, params.b);
    let parts = split(&data, config);
    observer.end(Stage::Split);
    let recommended = 100 * d * partition.len();
    if parts.spectral.len() < recommended {
        warnings.push(Warning::SmallSample { n: parts.spectral.len(), recommended });
    }

    observer.begin(Stage::Initialize);
    let init = initialize(&parts.init, params, &config.halfspace, child_seed(config.seed, Purpose::Halfspace, 0))?;
    for &(threshold, positive_rate) in &init.skipped {
        warnings.push(Warning::SkippedThreshold { threshold, positive_rate });
    }
    if init.vectors.is_empty() {
        warnings.push(Warning::NoInformativeThreshold);
    }
    observer.end(Stage::Initialize);

    observer.begin(Stage::Spectral);
    // Rank starting directions by their own fitted holdout loss.
    let starts: Vec<Vec<f64>> = match config.spectral_starts {
        Some(k) if k < init.vectors.len() => {
            let cands: Vec<Candidate> =
                init.vectors.iter().map(|w| Candidate { w: Some(w.clone()), kind: CandidateKind::Initial }).collect();
            let sel = test_and_select(&cands, &parts.fit, &parts.holdout, beta, params.b, None)?;
            let mut order: Vec<usize> = (0..cands.len()).collect();
            order.sort_by(|&a, &b| sel.reports[a].holdout_loss.total_cmp(&sel.reports[b].holdout_loss));
            order.iter().take(k).map(|&i| init.vectors[i].clone()).collect()
        }
        _ => init.vectors.clone(),
    };
    let run_start = |si: usize, w0: &Vec<f64>| -> (Vec<Vec<f64>>, Vec<TraceRecord>, usize, Vec<Warning>) {
        let mut iterates = Vec::new();
        let mut trace = Vec::new();
        let mut degenerate = 0;
        let mut warns = Vec::new();
        let seed = child_seed(config.seed, Purpose::Signs, si as u64);
        let mut engine = match SpectralEngine::new(&parts.spectral, &partition, seed) {
            Ok(e) => e,
            Err(e) => {
                warns.push(Warning::SpectralRunFailed { start: si, theta_bar: 0.0, message: alloc::format!("{e}") });
                return (iterates, trace, degenerate, warns);
            }
        };
        for (ti, &theta_bar) in theta_grid.iter().enumerate() {
            match engine.optimize_run(ti as u64, theta_bar, w0, &config.schedule, &SignRule::Random, config.trace) {
                Ok(out) => {
                    iterates.extend(out.iterates);
                    trace.extend(out.trace);
                    degenerate += out.degenerate_steps;
                }
                Err(e) => {
                    warns.push(Warning::SpectralRunFailed { start: si, theta_bar, message: alloc::format!("{e}") })
                }
            }
        }
        (iterates, trace, degenerate, warns)
    };
    #[cfg(feature = "parallel")]
    let runs: Vec<_> = {
        use rayon::prelude::*;
        starts.par_iter().enumerate().map(|(si, w0)| run_start(si, w0)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let runs: Vec<_> = starts.iter().enumerate().map(|(si, w0)| run_start(si, w0)).collect();
    let mut spectral_iterates = Vec::new();
    let mut trace = Vec::new();
    let mut degenerate_steps = 0;
    for (it, tr, dg, wr) in runs {
        spectral_iterates.extend(it);
        trace.extend(tr);
        degenerate_steps += dg;
        warnings.extend(wr);
    }
    observer.end(Stage::Spectral);

    observer.begin(Stage::Test);
    let initial_count = init.vectors.len();
    let mut candidates = vec![Candidate { w: None, kind: CandidateKind::Constant }];
    let pooled = dedup_directions(init.vectors.iter().cloned().chain(spectral_iterates).collect(), 1e-9);
    for (i, w) in pooled.into_iter().enumerate() {
        // Initial vectors come first in the pool and survive deduplication.
        let kind = if i < initial_count { CandidateKind::Initial } else { CandidateKind::Spectral };
        candidates.push(Candidate { w: Some(w), kind });
    }
    let sel = test_and_select(&candidates, &parts.fit, &parts.holdout, beta, params.b, truth)?;
    if sel.clamped > 0 {
        warnings.push(Warning::ClampedFits { count: sel.clamped });
    }
    observer.end(Stage::Test);

    let (b, l, e) = (params.b, params.l, params.eps);
    let theoretical_n = (d * d) as f64 * libm::pow(b, 12.0) * libm::pow(l, 8.0) / libm::pow(e, 10.0)
        * libm::log((d as f64 * b * l / e).max(core::f64::consts::E));
    let report = PipelineReport {
        n: data.len(),
        dim: d,
        split_sizes: [parts.init.len(), parts.spectral.len(), parts.fit.len(), parts.holdout.len()],
        bands: partition.len(),
        band_width: partition.delta,
        m_prime: partition.m_prime,
        beta,
        theta_grid,
        schedule: config.schedule,
        thresholds_used: init.thresholds,
        initial_count,
        spectral_starts: starts.len(),
        candidate_count: candidates.len(),
        selected_index: sel.index,
        selected_kind: candidates[sel.index].kind,
        selected_holdout_loss: sel.reports[sel.index].holdout_loss,
        candidates: sel.reports,
        degenerate_steps,
        warnings,
        theoretical_n,
        trace,
    };
    Ok(PipelineOutput { hypothesis: sel.hypothesis, report })
}

/// Rerun with `repeats` derived seeds and keep the run with the smallest
/// holdout loss.
pub fn run_pipeline_repeated(
    data: &Dataset,
    config: &PipelineConfig,
    repeats: usize,
    truth: Option<&[f64]>,
    observer: &mut dyn StageObserver,
) -> Result<PipelineOutput> {
    let mut best: Option<PipelineOutput> = None;
    for r in 0..repeats.max(1) {
        let mut cfg = config.clone();
        if r > 0 {
            cfg.seed = child_seed(config.seed, Purpose::Repeat, r as u64);
        }
        let out = run_pipeline_with(data, &cfg, truth, observer)?;
        if best.as_ref().is_none_or(|b| out.report.selected_holdout_loss < b.report.selected_holdout_loss) {
            best = Some(out);
        }
    }
    Ok(best.expect("at least one repeat"))
}
