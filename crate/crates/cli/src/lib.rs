//! Command-line harness for the pair-jump engine: configured runs, histograms of
//! single-trajectory values, and comparisons against the direct integration.

pub mod compare;
pub mod config;
pub mod output;
pub mod run;

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use config::RunConfig;
use output::{file_name, manifest, with_suffix, write_file, ManifestInput};

/// Command-line overrides applied on top of the config file.
#[derive(Clone, Copy, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub n_traj: Option<u64>,
    pub workers: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) -> Result<()> {
        if let Some(s) = self.seed {
            cfg.method.master_seed = s;
        }
        if let Some(n) = self.n_traj {
            cfg.method.n_traj = n;
        }
        if let Some(w) = self.workers {
            cfg.method.workers = w;
        }
        cfg.validate()
    }
}

pub fn load_config(path: &Path, overrides: &Overrides) -> Result<(RunConfig, Vec<u8>)> {
    let (mut cfg, bytes) = RunConfig::load(path)?;
    overrides.apply(&mut cfg)?;
    Ok((cfg, bytes))
}

/// Files written by a subcommand.
#[derive(Clone, Debug)]
pub struct Written {
    pub paths: Vec<PathBuf>,
    pub manifest: PathBuf,
}

pub fn cmd_run(config_path: &Path, overrides: &Overrides) -> Result<(run::RunOutput, Written)> {
    let (cfg, bytes) = load_config(config_path, overrides)?;
    let model = run::Model::build(&cfg)?;
    let out = run::run_model(&cfg, &model)?;
    let stem = &cfg.output.path;
    let mut files = vec![(with_suffix(stem, ".csv"), output::timeseries_csv(&out))];
    if let Some(rho) = output::rho_csv(&out) {
        files.push((with_suffix(stem, ".rho.csv"), rho));
    }
    let written = write_with_manifest(&cfg, &bytes, "run", &model, out.dt, out.times.len(), &out.stats, None, &files)?;
    Ok((out, written))
}

pub fn cmd_histogram(config_path: &Path, overrides: &Overrides) -> Result<(run::Histogram, Written)> {
    let (cfg, bytes) = load_config(config_path, overrides)?;
    let model = run::Model::build(&cfg)?;
    let hist = run::histogram(&cfg)?;
    let files = vec![(with_suffix(&cfg.output.path, ".hist.csv"), output::histogram_csv(&hist))];
    let dt = model.dt(&cfg)?;
    let written = write_with_manifest(&cfg, &bytes, "histogram", &model, dt, 1, &hist.stats, Some(&hist), &files)?;
    Ok((hist, written))
}

/// Compares the run of `config_path` against `reference`, or against the direct
/// integration of the same model when no reference config is given.
pub fn cmd_compare(config_path: &Path, reference: Option<&Path>, overrides: &Overrides) -> Result<(compare::CompareReport, Written)> {
    let (cfg, bytes) = load_config(config_path, overrides)?;
    let model = run::Model::build(&cfg)?;
    let out = run::run_model(&cfg, &model)?;
    let ref_out = match reference {
        Some(p) => {
            let (rcfg, _) = RunConfig::load(p)?;
            run::run(&rcfg).with_context(|| format!("reference run {}", p.display()))?
        }
        None => run::run_model(&run::oracle_config(&cfg), &model)?,
    };
    let report = compare::compare(&out, &ref_out)?;
    let stem = with_suffix(&cfg.output.path, ".compare");
    let files = vec![
        (with_suffix(&stem, ".csv"), compare::report_csv(&report)),
        (with_suffix(&stem, ".toml"), compare::report_summary(&report)?),
    ];
    let written = write_with_manifest(&cfg, &bytes, "compare", &model, out.dt, out.times.len(), &out.stats, None, &files)?;
    Ok((report, written))
}

pub fn cmd_validate_spec(path: &Path, tol: f64) -> Result<pairjump::qme::NormCheck> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let spec = pairjump::qme::parse_spec(&text).with_context(|| format!("in {}", path.display()))?;
    Ok(spec.validate_norm_constraint(tol)?)
}

#[allow(clippy::too_many_arguments)]
fn write_with_manifest(
    cfg: &RunConfig,
    config_bytes: &[u8],
    subcommand: &str,
    model: &run::Model,
    dt: f64,
    output_times: usize,
    stats: &run::RunStats,
    histogram: Option<&run::Histogram>,
    files: &[(PathBuf, String)],
) -> Result<Written> {
    let named: Vec<(String, &str)> = files.iter().map(|(p, body)| (file_name(p), body.as_str())).collect();
    let text = manifest(&ManifestInput {
        subcommand,
        config: cfg,
        config_bytes,
        spec_file_hash: model.spec_file_hash.clone(),
        dt,
        output_times,
        stats,
        histogram,
        files: &named,
    })?;
    for (p, body) in files {
        write_file(p, body)?;
    }
    let manifest_path = with_suffix(&cfg.output.path, &format!(".{subcommand}.manifest.toml"));
    write_file(&manifest_path, &text)?;
    Ok(Written { paths: files.iter().map(|(p, _)| p.clone()).collect(), manifest: manifest_path })
}
