//! Run configuration, read from TOML.
//!
//! ```toml
//! [model]
//! kind = "redfield_et"            # qbm | redfield_et | lindblad_dd | spec_file
//! observables = ["donor"]         # donor, acceptor (ET models) or level:N
//!
//! [model.redfield_et]             # any field may be omitted
//! gamma = 0.1
//!
//! [method]
//! kind = "pairjump"               # pairjump | mcwf | oracle
//! n_traj = 500
//! dt = 0.01
//! master_seed = 1
//! workers = 4
//!
//! [time]
//! t_end = 18.85
//! output_grid_points = 41
//!
//! [output]
//! path = "out/redfield_donor"
//! ```

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use pairjump::models::{QbmParams, RedfieldEtParams};

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub method: MethodConfig,
    pub time: TimeConfig,
    pub output: OutputConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub histogram: Option<HistogramConfig>,
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Qbm,
    RedfieldEt,
    LindbladDd,
    SpecFile,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub observables: Vec<String>,
    #[serde(default)]
    pub qbm: QbmSection,
    #[serde(default)]
    pub redfield_et: EtSection,
    /// Path of a plain-text operator file, relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec_file: Option<PathBuf>,
    /// Basis state the run starts in (`qbm` and `spec_file`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_level: Option<usize>,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct QbmSection {
    pub mass: f64,
    pub omega: f64,
    pub gamma: f64,
    pub kt: f64,
    pub hbar: f64,
    pub n_levels: usize,
}

impl Default for QbmSection {
    fn default() -> Self {
        let p = QbmParams::default();
        Self { mass: p.mass, omega: p.omega, gamma: p.gamma, kt: p.kt, hbar: p.hbar, n_levels: p.n_levels }
    }
}

impl QbmSection {
    pub fn params(&self) -> QbmParams {
        QbmParams {
            mass: self.mass,
            omega: self.omega,
            gamma: self.gamma,
            kt: self.kt,
            hbar: self.hbar,
            n_levels: self.n_levels,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct EtSection {
    pub omega: f64,
    pub delta_e: f64,
    pub lambda_reorg: f64,
    pub v12: f64,
    pub omega_c: f64,
    pub kt: f64,
    pub gamma: f64,
    pub n_vib: usize,
    pub packet_offset: f64,
}

impl Default for EtSection {
    fn default() -> Self {
        let p = RedfieldEtParams::default();
        Self {
            omega: p.omega,
            delta_e: p.delta_e,
            lambda_reorg: p.lambda_reorg,
            v12: p.v12,
            omega_c: p.omega_c,
            kt: p.kt,
            gamma: p.gamma,
            n_vib: p.n_vib,
            packet_offset: p.packet_offset,
        }
    }
}

impl EtSection {
    pub fn params(&self) -> RedfieldEtParams {
        RedfieldEtParams {
            omega: self.omega,
            delta_e: self.delta_e,
            lambda_reorg: self.lambda_reorg,
            v12: self.v12,
            omega_c: self.omega_c,
            kt: self.kt,
            gamma: self.gamma,
            n_vib: self.n_vib,
            packet_offset: self.packet_offset,
        }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    Pairjump,
    Mcwf,
    Oracle,
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    Clamped,
    Trace,
    Norm,
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Drift {
    Absolute,
    Signed,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MethodConfig {
    pub kind: MethodKind,
    #[serde(default = "one")]
    pub n_traj: u64,
    /// Defaults to 1/200 of the fastest period of the system Hamiltonian.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "one_usize", skip_serializing)]
    pub workers: usize,
    #[serde(default = "default_normalization")]
    pub normalization: Normalization,
    #[serde(default = "default_clamp_floor")]
    pub clamp_floor: f64,
    #[serde(default = "default_drift")]
    pub drift: Drift,
    #[serde(default = "default_guard")]
    pub max_total_rate_dt: f64,
    /// Write the reconstructed density matrix beside the time series.
    #[serde(default)]
    pub dump_rho: bool,
}

fn one() -> u64 {
    1
}

fn one_usize() -> usize {
    1
}

fn default_normalization() -> Normalization {
    Normalization::Trace
}

fn default_clamp_floor() -> f64 {
    pairjump::engine::DEFAULT_CLAMP_FLOOR
}

fn default_drift() -> Drift {
    Drift::Absolute
}

fn default_guard() -> f64 {
    0.1
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub t_end: f64,
    pub output_grid_points: usize,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Output stem: `<path>.csv`, `<path>.manifest.toml`, ...
    pub path: PathBuf,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct HistogramConfig {
    pub observable: String,
    /// In units of the model period `2 pi / omega`.
    pub sample_time: f64,
    pub bin_width: f64,
    #[serde(default = "default_range")]
    pub range: [f64; 2],
}

fn default_range() -> [f64; 2] {
    [-0.1, 1.1]
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| anyhow::anyhow!("config: {e}"))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative `spec_file` and `output.path` entries are
    /// resolved against the file's directory.
    pub fn load(path: &Path) -> Result<(Self, Vec<u8>)> {
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        let text = std::str::from_utf8(&bytes).with_context(|| format!("{} is not UTF-8", path.display()))?;
        let mut cfg = Self::parse(text).with_context(|| format!("in {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(spec) = cfg.model.spec_file.as_mut() {
            if spec.is_relative() {
                *spec = base.join(&*spec);
            }
        }
        if cfg.output.path.is_relative() {
            cfg.output.path = base.join(&cfg.output.path);
        }
        Ok((cfg, bytes))
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.method;
        if m.kind != MethodKind::Oracle && m.n_traj < 1 {
            bail!("method.n_traj: must be at least 1");
        }
        if let Some(dt) = m.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                bail!("method.dt: must be positive, got {dt}");
            }
        }
        if m.workers < 1 {
            bail!("method.workers: must be at least 1");
        }
        if !(m.clamp_floor > 0.0 && m.clamp_floor <= 1.0) {
            bail!("method.clamp_floor: must lie in (0, 1], got {}", m.clamp_floor);
        }
        if !(m.max_total_rate_dt > 0.0) {
            bail!("method.max_total_rate_dt: must be positive");
        }
        if !(self.time.t_end > 0.0 && self.time.t_end.is_finite()) {
            bail!("time.t_end: must be positive, got {}", self.time.t_end);
        }
        if self.time.output_grid_points < 2 {
            bail!("time.output_grid_points: need at least 2");
        }
        if self.model.observables.is_empty() {
            bail!("model.observables: list at least one observable");
        }
        match self.model.kind {
            ModelKind::SpecFile if self.model.spec_file.is_none() => bail!("model.spec_file: required for kind = \"spec_file\""),
            ModelKind::RedfieldEt | ModelKind::LindbladDd if self.model.initial_level.is_some() => {
                bail!("model.initial_level: the electron-transfer models start from the donor wave packet")
            }
            _ => {}
        }
        if m.kind == MethodKind::Mcwf && self.model.kind != ModelKind::LindbladDd {
            bail!("method.kind: mcwf needs a Lindblad model (lindblad_dd)");
        }
        if let Some(h) = &self.histogram {
            if !(h.bin_width > 0.0) {
                bail!("histogram.bin_width: must be positive");
            }
            if !(h.range[0] < h.range[1]) {
                bail!("histogram.range: empty");
            }
            if !(h.sample_time >= 0.0) {
                bail!("histogram.sample_time: must be non-negative");
            }
        }
        Ok(())
    }

    /// Period `2 pi / omega` of the model, the unit of histogram sample times.
    pub fn period(&self) -> f64 {
        let omega = match self.model.kind {
            ModelKind::Qbm => self.model.qbm.omega,
            ModelKind::RedfieldEt | ModelKind::LindbladDd => self.model.redfield_et.omega,
            ModelKind::SpecFile => 1.0,
        };
        std::f64::consts::TAU / omega
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[model]
kind = "qbm"
observables = ["level:3"]
initial_level = 3

[method]
kind = "pairjump"
n_traj = 10

[time]
t_end = 1.0
output_grid_points = 3

[output]
path = "out/x"
"#;

    #[test]
    fn defaults_fill_in() {
        let cfg = RunConfig::parse(MINIMAL).unwrap();
        assert_eq!(cfg.model.qbm.params(), QbmParams::default());
        assert_eq!(cfg.method.normalization, Normalization::Trace);
        assert_eq!(cfg.method.workers, 1);
        assert!(cfg.histogram.is_none());
    }

    #[test]
    fn unknown_field_reports_line() {
        let text = MINIMAL.replace("n_traj = 10", "n_trajectories = 10");
        let err = format!("{:#}", RunConfig::parse(&text).unwrap_err());
        assert!(err.contains("n_trajectories"), "{err}");
        assert!(err.contains("line"), "{err}");
    }

    #[test]
    fn invalid_values_rejected() {
        for (from, to) in [
            ("n_traj = 10", "n_traj = 0"),
            ("t_end = 1.0", "t_end = -1.0"),
            ("output_grid_points = 3", "output_grid_points = 1"),
            ("kind = \"pairjump\"", "kind = \"mcwf\""),
        ] {
            assert!(RunConfig::parse(&MINIMAL.replace(from, to)).is_err(), "{to}");
        }
    }
}
