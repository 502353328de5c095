//! Dataset, hypothesis and ground-truth files.
//!
//! Datasets come in two forms. The text form is a `d=<int> n=<int>` header
//! followed by `n` lines of `d+1` space-separated reals (covariates, then
//! label). The binary form is two little-endian `u64` values `d`, `n`
//! followed by `n(d+1)` little-endian `f64` values in the same row order.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use monosim_core::synth::GroundTruth;
use monosim_core::{Dataset, Hypothesis};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Text,
    Binary,
}

impl Format {
    /// `.bin` selects the binary form, anything else the text form.
    pub fn for_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("bin") => Format::Binary,
            _ => Format::Text,
        }
    }
}

pub fn encode_text(data: &Dataset) -> String {
    let d = data.dim();
    let mut out = String::with_capacity(data.len() * (d + 1) * 24 + 32);
    out.push_str(&format!("d={} n={}\n", d, data.len()));
    for i in 0..data.len() {
        for v in data.x(i) {
            // `{}` on f64 prints the shortest string that round-trips.
            out.push_str(&format!("{v} "));
        }
        out.push_str(&format!("{}\n", data.y(i)));
    }
    out
}

pub fn decode_text(text: &str) -> Result<Dataset> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| anyhow!("empty dataset file"))?;
    let (d, n) = parse_header(header)?;
    let mut x = Vec::with_capacity(n * d);
    let mut y = Vec::with_capacity(n);
    for (lineno, line) in lines {
        let row: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().with_context(|| format!("line {}: bad number {t:?}", lineno + 1)))
            .collect::<Result<_>>()?;
        if row.len() != d + 1 {
            bail!("line {}: expected {} values, found {}", lineno + 1, d + 1, row.len());
        }
        if let Some(bad) = row.iter().find(|v| !v.is_finite()) {
            bail!("line {}: non-finite value {bad}", lineno + 1);
        }
        x.extend_from_slice(&row[..d]);
        y.push(row[d]);
    }
    if y.len() != n {
        bail!("header promises {n} samples, file has {}", y.len());
    }
    Ok(Dataset::new(d, x, y)?)
}

fn parse_header(line: &str) -> Result<(usize, usize)> {
    let mut d = None;
    let mut n = None;
    for tok in line.split_whitespace() {
        match tok.split_once('=') {
            Some(("d", v)) => d = Some(v.parse::<usize>().context("header d")?),
            Some(("n", v)) => n = Some(v.parse::<usize>().context("header n")?),
            _ => bail!("unexpected header token {tok:?}"),
        }
    }
    match (d, n) {
        (Some(d), Some(n)) if d > 0 => Ok((d, n)),
        _ => bail!("header must read `d=<int> n=<int>` with d > 0, got {line:?}"),
    }
}

pub fn encode_binary(data: &Dataset) -> Vec<u8> {
    let d = data.dim();
    let mut out = Vec::with_capacity(16 + data.len() * (d + 1) * 8);
    out.extend_from_slice(&(d as u64).to_le_bytes());
    out.extend_from_slice(&(data.len() as u64).to_le_bytes());
    for i in 0..data.len() {
        for v in data.x(i) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&data.y(i).to_le_bytes());
    }
    out
}

pub fn decode_binary(bytes: &[u8]) -> Result<Dataset> {
    if bytes.len() < 16 {
        bail!("binary dataset shorter than its header");
    }
    let word = |k: usize| u64::from_le_bytes(bytes[8 * k..8 * k + 8].try_into().unwrap());
    let (d, n) = (word(0) as usize, word(1) as usize);
    let expected = n.checked_mul(d + 1).and_then(|c| c.checked_mul(8)).and_then(|c| c.checked_add(16));
    if d == 0 || expected != Some(bytes.len()) {
        bail!("binary header d={d} n={n} does not match file size {}", bytes.len());
    }
    let mut x = Vec::with_capacity(n * d);
    let mut y = Vec::with_capacity(n);
    for (k, chunk) in bytes[16..].chunks_exact(8).enumerate() {
        let v = f64::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            bail!("non-finite value in row {}", k / (d + 1));
        }
        if k % (d + 1) == d {
            y.push(v);
        } else {
            x.push(v);
        }
    }
    Ok(Dataset::new(d, x, y)?)
}

/// Reads either form; text files start with the `d=` header.
pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let start = bytes.iter().position(|b| !b.is_ascii_whitespace()).unwrap_or(bytes.len());
    let parsed = if bytes[start..].starts_with(b"d=") {
        let text = std::str::from_utf8(&bytes).context("dataset is not UTF-8")?;
        decode_text(text)
    } else {
        decode_binary(&bytes)
    };
    parsed.with_context(|| format!("parsing {}", path.display()))
}

pub fn write_dataset(path: &Path, data: &Dataset) -> Result<()> {
    let bytes = match Format::for_path(path) {
        Format::Text => encode_text(data).into_bytes(),
        Format::Binary => encode_binary(data),
    };
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

/// On-disk hypothesis: `{dim, w, knots, values, beta, B}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisFile {
    pub dim: usize,
    #[serde(flatten)]
    pub hypothesis: Hypothesis,
}

pub fn write_hypothesis(path: &Path, hyp: &Hypothesis) -> Result<()> {
    let file = HypothesisFile { dim: hyp.dim(), hypothesis: hyp.clone() };
    let text = serde_json::to_string_pretty(&file)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

pub fn read_hypothesis(path: &Path) -> Result<Hypothesis> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let file: HypothesisFile = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let h = file.hypothesis;
    if h.w.len() != file.dim {
        bail!("hypothesis dim {} but w has {} entries", file.dim, h.w.len());
    }
    if h.knots.is_empty() || h.knots.len() != h.values.len() {
        bail!("hypothesis needs matching, nonempty knots and values");
    }
    if h.knots.windows(2).any(|k| k[1] < k[0]) || h.values.windows(2).any(|v| v[1] < v[0]) {
        bail!("hypothesis link is not monotone");
    }
    Ok(h)
}

/// Ground truth sidecar written next to generated data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthFile {
    pub truth: GroundTruth,
    pub n: usize,
    pub seed: u64,
    /// Empirical loss of the true model on the generated labels.
    pub opt_estimate: f64,
}

pub fn sidecar_path(data_path: &Path) -> std::path::PathBuf {
    let mut name = data_path.file_name().map(|s| s.to_os_string()).unwrap_or_default();
    name.push(".truth.json");
    data_path.with_file_name(name)
}

pub fn write_truth(path: &Path, truth: &TruthFile) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(truth)? + "\n").with_context(|| format!("writing {}", path.display()))
}

pub fn read_truth(path: &Path) -> Result<TruthFile> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Buffered sink of one JSON object per line.
pub struct JsonLines<W: Write> {
    out: BufWriter<W>,
}

impl<W: Write> JsonLines<W> {
    pub fn new(out: W) -> Self {
        Self { out: BufWriter::new(out) }
    }

    pub fn emit<T: Serialize>(&mut self, record: &T) -> Result<()> {
        serde_json::to_writer(&mut self.out, record)?;
        self.out.write_all(b"\n")?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}
