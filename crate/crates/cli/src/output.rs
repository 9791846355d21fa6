use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{HistogramConfig, MethodConfig, ModelConfig, RunConfig, TimeConfig};
use crate::run::{Histogram, RunOutput, RunStats};

/// Git-style content hash: SHA-256 over `"blob <len>\0"` followed by the bytes.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn with_suffix(stem: &Path, suffix: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn timeseries_csv(out: &RunOutput) -> String {
    let mut s = String::from("time");
    for name in &out.observable_names {
        write!(s, ",{name}_mean,{name}_stderr").unwrap();
    }
    s.push_str(",trace_mean,trace_stderr\n");
    for (g, t) in out.times.iter().enumerate() {
        write!(s, "{t}").unwrap();
        for v in &out.values[g] {
            write!(s, ",{},{}", v.mean, v.stderr).unwrap();
        }
        writeln!(s, ",{},{}", out.trace[g].mean, out.trace[g].stderr).unwrap();
    }
    s
}

/// Row-major `re,im` pairs of the density matrix at each output time.
pub fn rho_csv(out: &RunOutput) -> Option<String> {
    let rho = out.rho.as_ref()?;
    let dim = rho.first().map(|m| m.dim()).unwrap_or(0);
    let mut s = String::from("time");
    for i in 0..dim {
        for j in 0..dim {
            write!(s, ",rho_{i}_{j}_re,rho_{i}_{j}_im").unwrap();
        }
    }
    s.push('\n');
    for (t, m) in out.times.iter().zip(rho) {
        write!(s, "{t}").unwrap();
        for z in m.as_slice() {
            write!(s, ",{},{}", z.re, z.im).unwrap();
        }
        s.push('\n');
    }
    Some(s)
}

pub fn histogram_csv(h: &Histogram) -> String {
    let mut s = String::from("bin_center,count\n");
    for (x, n) in h.bin_centers.iter().zip(&h.counts) {
        writeln!(s, "{x},{n}").unwrap();
    }
    s
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: Tool,
    config: ConfigDigest,
    model: &'a ModelConfig,
    method: &'a MethodConfig,
    time: &'a TimeConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    histogram: Option<&'a HistogramConfig>,
    resolved: Resolved,
    summary: Summary,
    #[serde(skip_serializing_if = "Option::is_none")]
    histogram_summary: Option<HistogramSummary>,
    files: Vec<FileDigest>,
}

#[derive(Serialize)]
struct Tool {
    name: &'static str,
    version: &'static str,
    subcommand: String,
}

#[derive(Serialize)]
struct ConfigDigest {
    sha256: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    spec_file_sha256: Option<String>,
}

#[derive(Serialize)]
struct Resolved {
    dt: f64,
    output_times: usize,
}

#[derive(Serialize)]
struct Summary {
    n_traj: u64,
    negative_weight_trajectories: u64,
    total_jumps: u64,
    restarts: u64,
    warnings: u64,
    max_norm_drift: f64,
    max_hermiticity_defect: f64,
}

impl From<&RunStats> for Summary {
    fn from(s: &RunStats) -> Self {
        Self {
            n_traj: s.n_traj,
            negative_weight_trajectories: s.negative_weight_count,
            total_jumps: s.total_jumps,
            restarts: s.restarts,
            warnings: s.warnings,
            max_norm_drift: s.max_norm_drift,
            max_hermiticity_defect: s.max_hermiticity_defect,
        }
    }
}

#[derive(Serialize)]
struct HistogramSummary {
    sample_time: f64,
    below_zero: u64,
    above_one: u64,
    outside_range: u64,
}

#[derive(Serialize)]
struct FileDigest {
    name: String,
    sha256: String,
}

pub struct ManifestInput<'a> {
    pub subcommand: &'a str,
    pub config: &'a RunConfig,
    pub config_bytes: &'a [u8],
    pub spec_file_hash: Option<String>,
    pub dt: f64,
    pub output_times: usize,
    pub stats: &'a RunStats,
    pub histogram: Option<&'a Histogram>,
    /// `(file name, contents)` of every file the run wrote.
    pub files: &'a [(String, &'a str)],
}

/// Everything needed to reproduce the outputs; worker count and paths are left out
/// because they do not change any number.
pub fn manifest(input: &ManifestInput<'_>) -> Result<String> {
    let cfg = input.config;
    let m = Manifest {
        tool: Tool { name: "pairjump", version: env!("CARGO_PKG_VERSION"), subcommand: input.subcommand.to_string() },
        config: ConfigDigest { sha256: content_hash(input.config_bytes), spec_file_sha256: input.spec_file_hash.clone() },
        model: &cfg.model,
        method: &cfg.method,
        time: &cfg.time,
        histogram: cfg.histogram.as_ref(),
        resolved: Resolved { dt: input.dt, output_times: input.output_times },
        summary: input.stats.into(),
        histogram_summary: input.histogram.map(|h| HistogramSummary {
            sample_time: h.sample_time,
            below_zero: h.below_zero,
            above_one: h.above_one,
            outside_range: h.outside_range,
        }),
        files: input
            .files
            .iter()
            .map(|(name, body)| FileDigest { name: name.clone(), sha256: content_hash(body.as_bytes()) })
            .collect(),
    };
    let mut model = m.model.clone();
    // the operator file is identified by its hash; its location is irrelevant
    model.spec_file = model.spec_file.as_ref().and_then(|p| p.file_name()).map(PathBuf::from);
    let m = Manifest { model: &model, ..m };
    toml::to_string(&m).context("serializing manifest")
}

pub fn write_file(path: &Path, body: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
    }
    std::fs::write(path, body).with_context(|| format!("writing {}", path.display()))
}

pub fn file_name(path: &Path) -> String {
    path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_matches_git_blob_sha256() {
        // `printf 'hello\n' | git hash-object --object-format=sha256 --stdin`
        assert_eq!(
            content_hash(b"hello\n"),
            "2cf8d83d9ee29543b34a87727421fdecb7e3f3a183d337639025de576db9ebb4"
        );
    }

    #[test]
    fn suffix_appends() {
        assert_eq!(with_suffix(Path::new("out/run"), ".csv"), PathBuf::from("out/run.csv"));
    }
}
