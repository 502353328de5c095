use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{ArgAction, Parser, Subcommand};
use monosim::config::{LearnSettings, SEED_ENV};
use monosim::io::{self, JsonLines, TruthFile};
use monosim::probes::Suite;
use monosim::timing::StageTimer;
use monosim_core::model::{squared_loss, truncate_labels, SmoothKind};
use monosim_core::partition::BandPartition;
use monosim_core::pipeline::{run_pipeline_repeated, run_pipeline_with, PipelineConfig, Stage};
use monosim_core::rng::{stream, Purpose};
use monosim_core::synth::{estimate_opt, generate, random_unit, BandTarget, GroundTruth, NoiseModel};
use monosim_core::{Activation, RegularityParams};
use serde_json::json;

#[derive(Parser)]
#[command(name = "monosim", version, about = "Robust learning of monotone single-index models under Gaussian inputs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a synthetic dataset plus a `<out>.truth.json` sidecar.
    Generate {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        d: usize,
        /// identity | relu[:bias] | threshold[:bias] | clamped:<b> | scaled-relu:<factor>
        /// | logistic|tanh|erf[:amplitude[:slope[:shift]]] | pwl:<k1,k2,..>:<v1,v2,..>
        #[arg(long, default_value = "relu")]
        activation: String,
        /// none | oblivious:<rate>:<magnitude> | band:<rate>:<center>:<half_width> | signflip:<rate>
        #[arg(long, default_value = "none")]
        noise: String,
        #[arg(long = "B")]
        b: f64,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a hypothesis to a dataset file.
    Learn {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long = "B")]
        b: Option<f64>,
        #[arg(long = "L")]
        l: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Disjoint samples per stage (default on).
        #[arg(long, num_args = 0..=1, default_missing_value = "true", action = ArgAction::Set)]
        fresh_split: Option<bool>,
        /// Full angle grid, full restart budget, single testing sample.
        #[arg(long)]
        paper_faithful: bool,
        /// Include per-iteration spectral records in the report.
        #[arg(long)]
        trace: bool,
        #[arg(long)]
        repeats: Option<usize>,
        /// `key = value` settings file; flags take precedence.
        #[arg(long)]
        config: Option<PathBuf>,
        /// JSON lines report: summary, stage timings, candidates, trace.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Ground-truth sidecar, for angle diagnostics.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Squared loss of a stored hypothesis, as JSON on stdout.
    Evaluate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        hyp: PathBuf,
    },
    /// Timing sweep over dimension, sample size and band count; JSON lines on stdout.
    Bench {
        #[arg(long, value_delimiter = ',', default_value = "5,10")]
        d: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "20000,80000")]
        n: Vec<usize>,
        /// Band-width targets, expressed through eps with B = L = 1.
        #[arg(long, value_delimiter = ',', default_value = "0.2,0.1")]
        eps: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run numerical invariant suites; JSON lines on stdout, nonzero exit on failure.
    ProbeInvariants {
        /// semigroup | spectral | wedin | contraction | initializer | isotonic | recovery | robustness | all
        #[arg(long, default_value = "all")]
        suite: String,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cmd: Command) -> Result<ExitCode> {
    match cmd {
        Command::Generate { n, d, activation, noise, b, seed, out } => {
            let seed =
                LearnSettings { seed, ..Default::default() }.resolve_seed(std::env::var(SEED_ENV).ok().as_deref())?;
            generate_cmd(n, d, &activation, &noise, b, seed, &out)?;
        }
        Command::Learn {
            data,
            eps,
            b,
            l,
            seed,
            out,
            fresh_split,
            paper_faithful,
            trace,
            repeats,
            config,
            report,
            truth,
        } => {
            let file = match &config {
                Some(p) => LearnSettings::parse(
                    &std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
                )?,
                None => LearnSettings::default(),
            };
            let flags = LearnSettings {
                eps,
                b,
                l,
                seed,
                fresh_split,
                paper_faithful: paper_faithful.then_some(true),
                trace: trace.then_some(true),
                repeats,
                ..Default::default()
            };
            let settings = file.overlay(flags);
            learn_cmd(&settings, &data, &out, report.as_deref(), truth.as_deref())?;
        }
        Command::Evaluate { data, hyp } => {
            let data = io::read_dataset(&data)?;
            let h = io::read_hypothesis(&hyp)?;
            let raw = squared_loss(&data, &h)?;
            let truncated = squared_loss(&truncate_labels(&data, h.b), &h)?;
            println!("{}", json!({ "loss": truncated, "loss_untruncated": raw, "n": data.len() }));
        }
        Command::Bench { d, n, eps, seed } => bench_cmd(&d, &n, &eps, seed)?,
        Command::ProbeInvariants { suite } => {
            let Some(suites) = Suite::parse(&suite) else {
                bail!("unknown suite {suite:?}");
            };
            let mut sink = JsonLines::new(std::io::stdout().lock());
            let mut ok = true;
            for s in suites {
                let start = Instant::now();
                let checks = s.run()?;
                let pass = checks.iter().all(|c| c.pass);
                for c in &checks {
                    sink.emit(c)?;
                }
                sink.emit(&json!({ "suite": s.name(), "pass": pass, "seconds": start.elapsed().as_secs_f64() }))?;
                ok &= pass;
            }
            sink.finish()?;
            if !ok {
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn num(s: &str) -> Result<f64> {
    s.parse().with_context(|| format!("bad number {s:?}"))
}

fn parse_activation(spec: &str) -> Result<Activation> {
    let parts: Vec<&str> = spec.split(':').collect();
    let arg = |i: usize, default: f64| parts.get(i).map_or(Ok(default), |s| num(s));
    let smooth = |kind| -> Result<Activation> {
        Ok(Activation::BoundedSmooth { kind, amplitude: arg(1, 1.0)?, slope: arg(2, 1.0)?, shift: arg(3, 0.0)? })
    };
    Ok(match parts[0] {
        "identity" => Activation::Identity,
        "relu" => Activation::GeneralRelu { bias: arg(1, 0.0)? },
        "threshold" => Activation::BiasedThreshold { bias: arg(1, 0.0)? },
        "clamped" => Activation::clamped_identity(arg(1, 1.0)?),
        "scaled-relu" => Activation::Scaled { factor: arg(1, 1.0)?, inner: Box::new(Activation::relu()) },
        "logistic" => smooth(SmoothKind::Logistic)?,
        "tanh" => smooth(SmoothKind::Tanh)?,
        "erf" => smooth(SmoothKind::Erf)?,
        "pwl" if parts.len() == 3 => {
            let list = |s: &str| s.split(',').map(num).collect::<Result<Vec<_>>>();
            Activation::piecewise_linear(list(parts[1])?, list(parts[2])?)?
        }
        _ => bail!("unknown activation {spec:?}"),
    })
}

fn parse_noise(spec: &str) -> Result<NoiseModel> {
    let parts: Vec<&str> = spec.split(':').collect();
    let arg = |i: usize| parts.get(i).map_or_else(|| bail!("noise {spec:?} is missing a parameter"), |s| num(s));
    Ok(match parts[0] {
        "none" => NoiseModel::None,
        "oblivious" => NoiseModel::ObliviousBounded { rate: arg(1)?, magnitude: arg(2)? },
        "band" => NoiseModel::AdversarialBand {
            rate: arg(1)?,
            target: BandTarget::Truth,
            center: arg(2)?,
            half_width: arg(3)?,
        },
        "signflip" => NoiseModel::SignFlipTail { rate: arg(1)? },
        _ => bail!("unknown noise model {spec:?}"),
    })
}

fn generate_cmd(n: usize, d: usize, activation: &str, noise: &str, b: f64, seed: u64, out: &Path) -> Result<()> {
    let w_star = random_unit(d, &mut stream(seed, Purpose::Probe, 0));
    let truth = GroundTruth::new(&w_star, parse_activation(activation)?, parse_noise(noise)?, b)?;
    let data = generate(&truth, n, d, seed)?;
    io::write_dataset(out, &data)?;
    let opt_estimate = estimate_opt(&truth, &data)?;
    io::write_truth(&io::sidecar_path(out), &TruthFile { truth, n, seed, opt_estimate })?;
    Ok(())
}

fn stage_name(s: Stage) -> &'static str {
    match s {
        Stage::Split => "split",
        Stage::Initialize => "initialize",
        Stage::Spectral => "spectral",
        Stage::Test => "test",
    }
}

fn learn_cmd(
    settings: &LearnSettings,
    data: &Path,
    out: &Path,
    report: Option<&Path>,
    truth: Option<&Path>,
) -> Result<()> {
    let seed = settings.resolve_seed(std::env::var(SEED_ENV).ok().as_deref())?;
    let cfg = settings.pipeline_config(seed)?;
    let data = io::read_dataset(data)?;
    let truth = truth.map(io::read_truth).transpose()?;
    let w_star = truth.as_ref().map(|t| t.truth.w_star.as_slice());
    let mut timer = StageTimer::default();
    let start = Instant::now();
    let result = run_pipeline_repeated(&data, &cfg, settings.repeats(), w_star, &mut timer)?;
    let seconds = start.elapsed().as_secs_f64();
    io::write_hypothesis(out, &result.hypothesis)?;
    let r = &result.report;
    for w in &r.warnings {
        eprintln!("warning: {w:?}");
    }
    if let Some(path) = report {
        let file = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
        let mut sink = JsonLines::new(file);
        let mut summary = serde_json::to_value(r)?;
        if let Some(obj) = summary.as_object_mut() {
            obj.remove("candidates");
            obj.remove("trace");
            obj.insert("record".into(), json!("summary"));
            obj.insert("seed".into(), json!(seed));
            obj.insert("seconds".into(), json!(seconds));
            if let Some(t) = &truth {
                obj.insert("opt_estimate".into(), json!(t.opt_estimate));
            }
        }
        sink.emit(&summary)?;
        for stage in [Stage::Split, Stage::Initialize, Stage::Spectral, Stage::Test] {
            sink.emit(
                &json!({ "record": "stage", "stage": stage_name(stage), "seconds": timer.total(stage).as_secs_f64() }),
            )?;
        }
        for c in &r.candidates {
            let mut v = serde_json::to_value(c)?;
            v.as_object_mut().map(|o| o.insert("record".into(), json!("candidate")));
            sink.emit(&v)?;
        }
        for t in &r.trace {
            let mut v = serde_json::to_value(t)?;
            v.as_object_mut().map(|o| o.insert("record".into(), json!("trace")));
            sink.emit(&v)?;
        }
        sink.finish()?;
    }
    Ok(())
}

fn bench_cmd(dims: &[usize], sizes: &[usize], eps: &[f64], seed: u64) -> Result<()> {
    let mut sink = JsonLines::new(std::io::stdout().lock());
    for &d in dims {
        for &n in sizes {
            let w_star = random_unit(d, &mut stream(seed, Purpose::Probe, 0));
            let truth = GroundTruth::new(
                &w_star,
                Activation::relu(),
                NoiseModel::ObliviousBounded { rate: 0.05, magnitude: 1.0 },
                8.0,
            )?;
            let data = generate(&truth, n, d, seed)?;
            for &e in eps {
                let params = RegularityParams::new(1.0, 1.0, e)?;
                let bands = BandPartition::from_params(&params, usize::MAX)?.len();
                let mut cfg = PipelineConfig::new(params, seed);
                cfg.band_cap = usize::MAX;
                let mut timer = StageTimer::default();
                let start = Instant::now();
                let out = run_pipeline_with(&data, &cfg, Some(&w_star), &mut timer)?;
                sink.emit(&json!({
                    "d": d,
                    "n": n,
                    "eps": e,
                    "bands": bands,
                    "candidates": out.report.candidate_count,
                    "seconds": start.elapsed().as_secs_f64(),
                    "initialize_s": timer.total(Stage::Initialize).as_secs_f64(),
                    "spectral_s": timer.total(Stage::Spectral).as_secs_f64(),
                    "test_s": timer.total(Stage::Test).as_secs_f64(),
                }))?;
            }
        }
    }
    sink.finish()
}
