//! Learner settings gathered from a `key = value` file, command-line flags
//! and the `SIM_SEED` environment variable, in increasing order of priority
//! (flags beat the file, the environment only fills in a missing seed).

use anyhow::{anyhow, bail, Context, Result};
use monosim_core::pipeline::{PipelineConfig, ThetaGrid};
use monosim_core::RegularityParams;

pub const SEED_ENV: &str = "SIM_SEED";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LearnSettings {
    pub eps: Option<f64>,
    pub b: Option<f64>,
    pub l: Option<f64>,
    pub seed: Option<u64>,
    pub fresh_split: Option<bool>,
    pub paper_faithful: Option<bool>,
    pub trace: Option<bool>,
    pub repeats: Option<usize>,
    pub restarts: Option<usize>,
    pub iterations: Option<usize>,
    pub decay: Option<f64>,
    pub step_fraction: Option<f64>,
    pub beta: Option<f64>,
    /// `Some(None)` means every starting direction.
    pub spectral_starts: Option<Option<usize>>,
    pub theta_grid: Option<ThetaGrid>,
    pub band_cap: Option<usize>,
}

fn parse_bool(v: &str) -> Result<bool> {
    match v.to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => bail!("expected a boolean, got {v:?}"),
    }
}

/// `full`, `geometric`, `geometric:<cap>` or a comma-separated list of angles.
pub fn parse_theta_grid(v: &str) -> Result<ThetaGrid> {
    let v = v.trim();
    if v.eq_ignore_ascii_case("full") {
        return Ok(ThetaGrid::Full);
    }
    if let Some(rest) = v.strip_prefix("geometric") {
        let cap = match rest.strip_prefix(':') {
            Some(c) => c.parse().context("geometric grid cap")?,
            None if rest.is_empty() => 64,
            None => bail!("unknown theta grid {v:?}"),
        };
        return Ok(ThetaGrid::Geometric { ratio: 2.0, cap });
    }
    let values = v
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .with_context(|| format!("unknown theta grid {v:?}"))?;
    Ok(ThetaGrid::Explicit(values))
}

impl LearnSettings {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let num = || v.parse::<f64>().with_context(|| format!("{key}: expected a number, got {v:?}"));
        let int = || v.parse::<usize>().with_context(|| format!("{key}: expected an integer, got {v:?}"));
        match key.trim() {
            "eps" => self.eps = Some(num()?),
            "B" | "b" => self.b = Some(num()?),
            "L" | "l" => self.l = Some(num()?),
            "seed" => self.seed = Some(v.parse().with_context(|| format!("seed: {v:?}"))?),
            "fresh_split" | "fresh-split" => self.fresh_split = Some(parse_bool(v)?),
            "paper_faithful" | "paper-faithful" => self.paper_faithful = Some(parse_bool(v)?),
            "trace" => self.trace = Some(parse_bool(v)?),
            "repeats" => self.repeats = Some(int()?),
            "restarts" => self.restarts = Some(int()?),
            "iterations" => self.iterations = Some(int()?),
            "decay" => self.decay = Some(num()?),
            "step_fraction" | "step-fraction" => self.step_fraction = Some(num()?),
            "beta" => self.beta = Some(num()?),
            "spectral_starts" | "spectral-starts" => {
                self.spectral_starts = Some(if v.eq_ignore_ascii_case("all") { None } else { Some(int()?) })
            }
            "theta_grid" | "theta-grid" => self.theta_grid = Some(parse_theta_grid(v)?),
            "band_cap" | "band-cap" => self.band_cap = Some(int()?),
            other => bail!("unknown setting {other:?}"),
        }
        Ok(())
    }

    /// Lines of `key = value`; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut s = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| anyhow!("config line {}: expected key = value", i + 1))?;
            s.set(k, v).with_context(|| format!("config line {}", i + 1))?;
        }
        Ok(s)
    }

    /// Fields set in `over` replace ours.
    pub fn overlay(self, over: LearnSettings) -> Self {
        macro_rules! pick {
            ($($f:ident),*) => { Self { $($f: over.$f.or(self.$f)),* } };
        }
        pick!(
            eps,
            b,
            l,
            seed,
            fresh_split,
            paper_faithful,
            trace,
            repeats,
            restarts,
            iterations,
            decay,
            step_fraction,
            beta,
            spectral_starts,
            theta_grid,
            band_cap
        )
    }

    /// Explicit seed, else `SIM_SEED`, else 0.
    pub fn resolve_seed(&self, env: Option<&str>) -> Result<u64> {
        match (self.seed, env) {
            (Some(s), _) => Ok(s),
            (None, Some(e)) => e.trim().parse().with_context(|| format!("{SEED_ENV}={e:?} is not a u64")),
            (None, None) => Ok(0),
        }
    }

    pub fn repeats(&self) -> usize {
        self.repeats.unwrap_or(1)
    }

    pub fn pipeline_config(&self, seed: u64) -> Result<PipelineConfig> {
        let need = |v: Option<f64>, name: &str| v.ok_or_else(|| anyhow!("missing required setting {name}"));
        let params = RegularityParams::new(need(self.b, "B")?, need(self.l, "L")?, need(self.eps, "eps")?)?;
        let mut cfg = if self.paper_faithful.unwrap_or(false) {
            PipelineConfig::paper_faithful(params, seed)
        } else {
            PipelineConfig::new(params, seed)
        };
        if let Some(f) = self.fresh_split {
            cfg.fresh_split = f;
        }
        if let Some(t) = self.trace {
            cfg.trace = t;
        }
        if let Some(r) = self.restarts {
            cfg.schedule.restarts = r;
        }
        if let Some(t) = self.iterations {
            cfg.schedule.iterations = t;
        }
        if let Some(d) = self.decay {
            cfg.schedule.decay = d;
        }
        if let Some(s) = self.step_fraction {
            cfg.schedule.step_fraction = s;
        }
        if self.beta.is_some() {
            cfg.beta = self.beta;
        }
        if let Some(s) = self.spectral_starts {
            cfg.spectral_starts = s;
        }
        if let Some(g) = &self.theta_grid {
            cfg.theta_grid = g.clone();
        }
        if let Some(c) = self.band_cap {
            cfg.band_cap = c;
        }
        Ok(cfg)
    }
}
