use anyhow::{anyhow, bail, Context, Result};

use pairjump::engine::{
    mcwf_ensemble, pair_ensemble, DriftRates, EnsembleOutput, InitialState, McwfSystem, MeanStderr, PropagationConfig,
    RateNormalization,
};
use pairjump::linalg::{c, ComplexMat, ComplexVec};
use pairjump::models::{
    basis_projector, build_lindblad_dd, build_qbm, build_redfield_et, donor_wavepacket, fock_state,
};
use pairjump::oracle::{default_dt, integrate, DensityMatrix, IntegrateOptions};
use pairjump::qme::{lindblad_embed, parse_spec, QmeSpec};
use pairjump::time_grid::uniform_grid;

use crate::config::{Drift, MethodKind, ModelKind, Normalization, RunConfig};

/// A model instantiated from the config, ready for any of the three methods.
pub struct Model {
    pub spec: QmeSpec,
    /// Lindblad form, when the model has one.
    pub lindblad: Option<(ComplexMat, Vec<ComplexMat>)>,
    pub hamiltonian: ComplexMat,
    pub initial: ComplexVec,
    pub observable_names: Vec<String>,
    pub observables: Vec<ComplexMat>,
    /// SHA-256 of the operator file, for `spec_file` models.
    pub spec_file_hash: Option<String>,
}

impl Model {
    pub fn build(cfg: &RunConfig) -> Result<Self> {
        let m = &cfg.model;
        let mut donor_acceptor = None;
        let mut lindblad = None;
        let mut spec_file_hash = None;
        let (spec, hamiltonian, initial) = match m.kind {
            ModelKind::Qbm => {
                let p = m.qbm.params();
                let spec = build_qbm(&p).context("building qbm model")?;
                let initial = fock_state(p.n_levels, m.initial_level.unwrap_or(3))?;
                (spec, p.hamiltonian(), initial)
            }
            ModelKind::RedfieldEt | ModelKind::LindbladDd => {
                let p = m.redfield_et.params();
                let sys = p.system().context("building electron-transfer system")?;
                donor_acceptor = Some((sys.donor_projector.clone(), sys.acceptor_projector.clone()));
                let initial = donor_wavepacket(&p)?;
                let spec = if m.kind == ModelKind::RedfieldEt {
                    build_redfield_et(&p).context("building Redfield model")?
                } else {
                    let (h, ops) = build_lindblad_dd(&p).context("building diabatic-damping model")?;
                    let spec = lindblad_embed(&h, &ops, 1.0)?;
                    lindblad = Some((h, ops));
                    spec
                };
                (spec, sys.hamiltonian, initial)
            }
            ModelKind::SpecFile => {
                let path = m.spec_file.as_ref().ok_or_else(|| anyhow!("model.spec_file missing"))?;
                let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
                spec_file_hash = Some(crate::output::content_hash(&bytes));
                let text = String::from_utf8(bytes).with_context(|| format!("{} is not UTF-8", path.display()))?;
                let spec = parse_spec(&text).with_context(|| format!("in {}", path.display()))?;
                let check = spec.validate_norm_constraint(1e-10)?;
                if !check.passed {
                    bail!("{}: trace constraint violated, residual {:e}", path.display(), check.residual);
                }
                // A = -iH + (Hermitian damping part), so H is the Hermitian part of iA.
                let h = spec.a().scale(c(0.0, 1.0)).hermitian_part();
                let initial = ComplexVec::basis(spec.dim(), m.initial_level.unwrap_or(0))?;
                (spec, h, initial)
            }
        };
        let dim = spec.dim();
        let mut observables = Vec::new();
        for name in &m.observables {
            let op = match (name.as_str(), &donor_acceptor) {
                ("donor", Some((d, _))) => d.clone(),
                ("acceptor", Some((_, a))) => a.clone(),
                (other, _) => {
                    let level = other
                        .strip_prefix("level:")
                        .and_then(|n| n.parse::<usize>().ok())
                        .ok_or_else(|| anyhow!("model.observables: unknown observable {other:?} for this model"))?;
                    if level >= dim {
                        bail!("model.observables: level {level} outside the {dim}-dimensional basis");
                    }
                    basis_projector(dim, level)?
                }
            };
            observables.push(op);
        }
        Ok(Self {
            spec,
            lindblad,
            hamiltonian,
            initial,
            observable_names: m.observables.clone(),
            observables,
            spec_file_hash,
        })
    }

    pub fn dt(&self, cfg: &RunConfig) -> Result<f64> {
        match cfg.method.dt {
            Some(dt) => Ok(dt),
            None => Ok(default_dt(&self.hamiltonian, 1.0)?),
        }
    }

    pub fn observable_index(&self, name: &str) -> Result<usize> {
        self.observable_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| anyhow!("observable {name:?} is not among model.observables"))
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunStats {
    pub n_traj: u64,
    pub negative_weight_count: u64,
    pub total_jumps: u64,
    pub restarts: u64,
    pub warnings: u64,
    pub max_norm_drift: f64,
    pub max_hermiticity_defect: f64,
}

/// Ensemble means at every output time.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub times: Vec<f64>,
    pub observable_names: Vec<String>,
    /// `values[g][o]`.
    pub values: Vec<Vec<MeanStderr>>,
    pub trace: Vec<MeanStderr>,
    pub rho: Option<Vec<ComplexMat>>,
    pub dt: f64,
    pub stats: RunStats,
}

pub fn propagation_config(cfg: &RunConfig, dt: f64, grid: Vec<f64>) -> PropagationConfig {
    let mut pc = PropagationConfig::new(dt, grid);
    pc.max_total_rate_dt = cfg.method.max_total_rate_dt;
    pc.normalization = match cfg.method.normalization {
        Normalization::Clamped => RateNormalization::ClampedTrace { floor: cfg.method.clamp_floor },
        Normalization::Trace => RateNormalization::PairTrace,
        Normalization::Norm => RateNormalization::PairNorm,
    };
    pc.drift_rates = match cfg.method.drift {
        Drift::Absolute => DriftRates::Absolute,
        Drift::Signed => DriftRates::Signed,
    };
    pc
}

/// Runs the stochastic method of `cfg` on `grid`.
pub fn run_stochastic(cfg: &RunConfig, model: &Model, grid: Vec<f64>, keep_records: bool, with_rho: bool) -> Result<EnsembleOutput> {
    let dt = model.dt(cfg)?;
    let mut pc = propagation_config(cfg, dt, grid);
    pc.record_rho = with_rho;
    let m = &cfg.method;
    let out = match m.kind {
        MethodKind::Pairjump => pair_ensemble(
            &model.spec,
            &InitialState::Pure(model.initial.clone()),
            &pc,
            &model.observables,
            m.n_traj,
            m.master_seed,
            m.workers,
            keep_records,
        )?,
        MethodKind::Mcwf => {
            let (h, ops) = model.lindblad.as_ref().ok_or_else(|| anyhow!("mcwf needs a Lindblad model"))?;
            let system = McwfSystem::new(h, ops)?;
            mcwf_ensemble(&system, &model.initial, &pc, &model.observables, m.n_traj, m.master_seed, m.workers, keep_records)?
        }
        MethodKind::Oracle => bail!("the oracle is not a stochastic method"),
    };
    Ok(out)
}

pub fn output_grid(cfg: &RunConfig) -> Vec<f64> {
    uniform_grid(cfg.time.t_end, cfg.time.output_grid_points)
}

pub fn run(cfg: &RunConfig) -> Result<RunOutput> {
    let model = Model::build(cfg)?;
    run_model(cfg, &model)
}

pub fn run_model(cfg: &RunConfig, model: &Model) -> Result<RunOutput> {
    let grid = output_grid(cfg);
    let dt = model.dt(cfg)?;
    let with_rho = cfg.method.dump_rho;
    if cfg.method.kind == MethodKind::Oracle {
        let run = integrate(&model.spec, &DensityMatrix::pure(&model.initial), &grid, IntegrateOptions::new(dt))?;
        let exact = |x: f64| MeanStderr { mean: x, stderr: 0.0 };
        let values = run
            .states
            .iter()
            .map(|s| model.observables.iter().map(|o| exact(s.expectation(o))).collect())
            .collect();
        let trace = run.states.iter().map(|s| exact(s.trace())).collect();
        let rho = with_rho.then(|| run.states.iter().map(|s| s.matrix().clone()).collect());
        return Ok(RunOutput {
            times: grid,
            observable_names: model.observable_names.clone(),
            values,
            trace,
            rho,
            dt,
            stats: RunStats::default(),
        });
    }

    let out = run_stochastic(cfg, model, grid.clone(), false, with_rho)?;
    let acc = &out.accumulator;
    let mut values = Vec::with_capacity(grid.len());
    let mut trace = Vec::with_capacity(grid.len());
    for g in 0..grid.len() {
        values.push((0..model.observables.len()).map(|o| acc.observable(g, o)).collect::<pairjump::Result<Vec<_>>>()?);
        trace.push(acc.trace(g)?);
    }
    let rho = if with_rho {
        Some((0..grid.len()).map(|g| pairjump::engine::reconstruct_rdm(acc, g).map(|e| e.rho)).collect::<pairjump::Result<Vec<_>>>()?)
    } else {
        None
    };
    Ok(RunOutput {
        times: grid,
        observable_names: model.observable_names.clone(),
        values,
        trace,
        rho,
        dt,
        stats: RunStats {
            n_traj: acc.n_traj(),
            negative_weight_count: acc.negative_weight_count,
            total_jumps: acc.total_jumps,
            restarts: acc.restarts,
            warnings: acc.warnings,
            max_norm_drift: acc.max_norm_drift,
            max_hermiticity_defect: acc.max_hermiticity_defect,
        },
    })
}

/// Per-trajectory values of one observable at the histogram sample time.
#[derive(Clone, Debug)]
pub struct Histogram {
    pub sample_time: f64,
    pub bin_centers: Vec<f64>,
    pub counts: Vec<u64>,
    pub below_zero: u64,
    pub above_one: u64,
    /// Samples outside the binned range.
    pub outside_range: u64,
    pub samples: Vec<f64>,
    pub stats: RunStats,
}

pub fn histogram(cfg: &RunConfig) -> Result<Histogram> {
    let spec = cfg.histogram.as_ref().ok_or_else(|| anyhow!("config has no [histogram] section"))?;
    if cfg.method.kind == MethodKind::Oracle {
        bail!("histogram: needs a stochastic method");
    }
    let model = Model::build(cfg)?;
    let obs = model.observable_index(&spec.observable)?;
    let t_sample = spec.sample_time * cfg.period();
    if t_sample > cfg.time.t_end * (1.0 + 1e-12) {
        bail!("histogram.sample_time: {t_sample} lies beyond time.t_end = {}", cfg.time.t_end);
    }
    let grid = if t_sample > 0.0 { vec![0.0, t_sample] } else { vec![0.0] };
    let last = grid.len() - 1;
    let out = run_stochastic(cfg, &model, grid, true, false)?;
    let records = out.records.ok_or_else(|| anyhow!("ensemble returned no records"))?;
    let samples: Vec<f64> = records.iter().map(|r| r.observables[last][obs]).collect();

    let [lo, hi] = spec.range;
    // tolerate rounding in (hi - lo) / width, e.g. 1.2 / 0.1
    let n_bins = ((hi - lo) / spec.bin_width - 1e-9).ceil().max(1.0) as usize;
    let bin_centers = (0..n_bins).map(|i| lo + (i as f64 + 0.5) * spec.bin_width).collect();
    let mut counts = vec![0u64; n_bins];
    let mut outside_range = 0;
    for &x in &samples {
        let k = ((x - lo) / spec.bin_width).floor();
        if x >= lo && x < hi && (k as usize) < n_bins {
            counts[k as usize] += 1;
        } else {
            outside_range += 1;
        }
    }
    let acc = &out.accumulator;
    Ok(Histogram {
        sample_time: t_sample,
        bin_centers,
        counts,
        below_zero: samples.iter().filter(|&&x| x < 0.0).count() as u64,
        above_one: samples.iter().filter(|&&x| x > 1.0).count() as u64,
        outside_range,
        samples,
        stats: RunStats {
            n_traj: acc.n_traj(),
            negative_weight_count: acc.negative_weight_count,
            total_jumps: acc.total_jumps,
            restarts: acc.restarts,
            warnings: acc.warnings,
            max_norm_drift: acc.max_norm_drift,
            max_hermiticity_defect: acc.max_hermiticity_defect,
        },
    })
}

/// The oracle counterpart of a stochastic config: same model, grid and step.
pub fn oracle_config(cfg: &RunConfig) -> RunConfig {
    let mut o = cfg.clone();
    o.method.kind = MethodKind::Oracle;
    o
}
