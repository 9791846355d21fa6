use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::pair::{pair_trace, PreparedSource, RateNormalization, TrajectoryPair, DEFAULT_TAU_FLOOR};
use super::step::{apply_jump, drift_rk4, pair_balance, split_pair, DriftRates, DriftWorkspace, StepParams};
use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigen, Complex64, ComplexMat, ComplexVec, ZERO};
use crate::oracle::DensityMatrix;
use crate::qme::SpecSource;
use crate::time_grid::segment_steps;

#[derive(Clone, Debug, PartialEq)]
pub struct PropagationConfig {
    pub dt: f64,
    /// Ascending output times, starting at or after 0.
    pub t_grid: Vec<f64>,
    pub renormalize_each_jump: bool,
    pub rng_seed: u64,
    pub max_total_rate_dt: f64,
    pub drift_rates: DriftRates,
    pub tau_floor: f64,
    /// `|tau / tau_0 - 1|` above this is reported as a warning.
    pub norm_drift_budget: f64,
    /// Keep `w (|psi><phi| + |phi><psi|)` at every output time.
    pub record_rho: bool,
    pub max_restarts: u32,
    /// Split a lattice step locally when `dt * sum |p|` would exceed the guard,
    /// instead of failing with a step-size error.
    pub refine_steps: bool,
    pub normalization: RateNormalization,
    /// Split the pair into a pure piece (see [`TrajectoryRecord::splits`]) once
    /// `tau / (<psi|psi> + <phi|phi>)` drops below this value. `None` never splits.
    pub split_threshold: Option<f64>,
}

impl PropagationConfig {
    pub fn new(dt: f64, t_grid: Vec<f64>) -> Self {
        Self {
            dt,
            t_grid,
            renormalize_each_jump: false,
            rng_seed: 0,
            max_total_rate_dt: 0.1,
            drift_rates: DriftRates::Absolute,
            tau_floor: DEFAULT_TAU_FLOOR,
            norm_drift_budget: 0.05,
            record_rho: false,
            max_restarts: 16,
            refine_steps: true,
            normalization: RateNormalization::default(),
            split_threshold: None,
        }
    }

    pub(crate) fn step_params(&self) -> StepParams {
        StepParams {
            tau_floor: self.tau_floor,
            max_total_rate_dt: self.max_total_rate_dt,
            drift_rates: self.drift_rates,
            renormalize_each_jump: self.renormalize_each_jump,
            normalization: self.normalization,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {}", self.dt)));
        }
        if self.t_grid.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidParameter("t_grid must be ascending".into()));
        }
        if !(self.max_total_rate_dt > 0.0) {
            return Err(Error::InvalidParameter("max_total_rate_dt must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum InitialState {
    Pure(ComplexVec),
    /// Sampled from its spectral decomposition with `|lambda|` weights.
    Mixed(DensityMatrix),
}

impl InitialState {
    pub fn dim(&self) -> usize {
        match self {
            InitialState::Pure(v) => v.dim(),
            InitialState::Mixed(m) => m.dim(),
        }
    }

    pub fn density_matrix(&self) -> DensityMatrix {
        match self {
            InitialState::Pure(v) => DensityMatrix::pure(v),
            InitialState::Mixed(m) => m.clone(),
        }
    }
}

/// Everything one realization reports.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    /// `observables[g][o]`: `w (<phi|O_o|psi> + <psi|O_o|phi>)` at `times[g]`.
    pub observables: Vec<Vec<f64>>,
    /// `w * tau` at each output time.
    pub traces: Vec<f64>,
    pub weights: Vec<f64>,
    /// Per-time contributions when `record_rho` is set.
    pub rho: Option<Vec<ComplexMat>>,
    pub jumps: Vec<[u32; 2]>,
    pub final_weight: f64,
    pub weight_flips: u32,
    pub restarts: u32,
    pub max_norm_drift: f64,
    pub max_hermiticity_defect: f64,
    /// Lattice steps that had to be split to respect the rate guard.
    pub refined_steps: u64,
    /// Pairs replaced by a pure piece because `tau` became small against their norm.
    pub splits: u32,
    pub warnings: Vec<String>,
}

impl TrajectoryRecord {
    pub fn ever_negative(&self) -> bool {
        self.weights.iter().any(|&w| w < 0.0) || self.final_weight < 0.0
    }

    pub fn total_jumps(&self) -> u64 {
        self.jumps.iter().map(|[a, b]| u64::from(*a) + u64::from(*b)).sum()
    }

    /// Drops the per-time matrices, keeping the scalar series.
    pub fn without_rho(mut self) -> Self {
        self.rho = None;
        self
    }
}

pub(crate) fn check_observables(dim: usize, observables: &[ComplexMat]) -> Result<()> {
    for op in observables {
        if op.dim() != dim {
            return Err(Error::InvalidDimension(format!(
                "observable of dimension {} for a {dim}-dimensional system",
                op.dim()
            )));
        }
        let residual = op.hermiticity_residual();
        let tol = 1e-10 * op.max_abs().max(1.0);
        if residual > tol {
            return Err(Error::HermiticityViolation { residual, tol });
        }
    }
    Ok(())
}

/// Independent stream per `(seed, attempt)`.
pub(crate) fn trajectory_rng(seed: u64, attempt: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::from(attempt));
    rng
}

/// Propagates one realization from the pure state `chi`.
pub fn propagate<S: SpecSource + ?Sized>(
    source: &S,
    chi: &ComplexVec,
    config: &PropagationConfig,
    observables: &[ComplexMat],
) -> Result<TrajectoryRecord> {
    let norm = chi.norm_sqr();
    if (norm - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidParameter(format!("initial state has norm^2 {norm}, expected 1")));
    }
    propagate_from(source, &InitialState::Pure(chi.clone()), config, observables)
}

/// Like [`propagate`], also accepting mixed initial states. Degenerate pairs and
/// vanished trajectories are restarted on a fresh random stream.
pub fn propagate_from<S: SpecSource + ?Sized>(
    source: &S,
    initial: &InitialState,
    config: &PropagationConfig,
    observables: &[ComplexMat],
) -> Result<TrajectoryRecord> {
    config.validate()?;
    let dim = source.dim();
    if initial.dim() != dim {
        return Err(Error::InvalidDimension(format!(
            "initial state of dimension {} for a {dim}-dimensional spec",
            initial.dim()
        )));
    }
    check_observables(dim, observables)?;
    let prepared = PreparedSource::new(source)?;
    let mixture = match initial {
        InitialState::Pure(_) => None,
        InitialState::Mixed(rho) => Some(hermitian_eigen(rho.matrix(), 1e-10)?),
    };
    for attempt in 0..=config.max_restarts {
        let mut rng = trajectory_rng(config.rng_seed, attempt);
        let (pair, reference_trace) = match (&mixture, initial) {
            (None, InitialState::Pure(chi)) => (TrajectoryPair::from_pure(chi, source.n_channels()), 1.0),
            (Some(eig), _) => sample_mixed(eig, source.n_channels(), &mut rng),
            _ => unreachable!(),
        };
        match run_pair(&prepared, pair, reference_trace, config, observables, &mut rng) {
            Ok(mut rec) => {
                rec.restarts = attempt;
                return Ok(rec);
            }
            Err(Error::DegeneratePair { .. } | Error::TrajectoryDeath) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::RestartLimit(config.max_restarts))
}

fn sample_mixed(eig: &crate::linalg::EigenSystem, n_channels: usize, rng: &mut ChaCha8Rng) -> (TrajectoryPair, f64) {
    let abs_total: f64 = eig.values.iter().map(|v| v.abs()).sum();
    let target = rng.gen::<f64>() * abs_total;
    let mut cum = 0.0;
    let mut pick = eig.values.len() - 1;
    for (k, v) in eig.values.iter().enumerate() {
        cum += v.abs();
        if cum > target {
            pick = k;
            break;
        }
    }
    let mut chi = eig.eigenvector(pick);
    chi.scale_re(abs_total.sqrt());
    let mut pair = TrajectoryPair::from_pure(&chi, n_channels);
    if eig.values[pick] < 0.0 {
        pair.weight = -1.0;
    }
    (pair, abs_total)
}

fn run_pair<S: SpecSource + ?Sized>(
    source: &PreparedSource<'_, S>,
    pair: TrajectoryPair,
    reference_trace: f64,
    config: &PropagationConfig,
    observables: &[ComplexMat],
    rng: &mut ChaCha8Rng,
) -> Result<TrajectoryRecord> {
    let dim = pair.dim();
    let n_channels = pair.n_jumps.len();
    let params = config.step_params();
    let segments = segment_steps(&config.t_grid, config.dt)?;

    let mut y: Vec<Complex64> = pair.psi.iter().chain(pair.phi.iter()).copied().collect();
    let mut weight = pair.weight;
    let mut n_jumps = pair.n_jumps;
    let mut ws = DriftWorkspace::new(dim, n_channels);
    let mut tmp = vec![ZERO; dim];
    let mut tmp2 = vec![ZERO; dim];

    let n_grid = config.t_grid.len();
    let mut rec = TrajectoryRecord {
        times: config.t_grid.clone(),
        observables: Vec::with_capacity(n_grid),
        traces: Vec::with_capacity(n_grid),
        weights: Vec::with_capacity(n_grid),
        rho: config.record_rho.then(|| Vec::with_capacity(n_grid)),
        jumps: Vec::new(),
        final_weight: weight,
        weight_flips: 0,
        restarts: 0,
        max_norm_drift: 0.0,
        max_hermiticity_defect: 0.0,
        refined_steps: 0,
        splits: 0,
        warnings: Vec::new(),
    };
    let limit = params.max_total_rate_dt;
    let mut y_saved = y.clone();

    let mut t = 0.0;
    for (seg, &t_out) in segments.iter().zip(&config.t_grid) {
        for _ in 0..seg.n_steps {
            let t_next = t + seg.h;
            let mut h = seg.h;
            let mut refined = false;
            while t < t_next {
                let remaining = t_next - t;
                if config.refine_steps {
                    if !ws.cached {
                        ws.refresh(source.at(t)?.as_ref(), &y, &params)?;
                    }
                    let rate = ws.rates.abs_sum();
                    if h * rate > 0.5 * limit {
                        h = 0.5 * limit / rate;
                    }
                    if h >= remaining * (1.0 - 1e-12) {
                        h = remaining;
                    } else {
                        refined = true;
                    }
                }
                y_saved.copy_from_slice(&y);
                drift_rk4(source, &mut y, t, h, &params, &mut ws)?;
                let total = ws.rates.abs_sum();
                if h * total > limit {
                    if !config.refine_steps || h < 1e-12 * seg.h {
                        return Err(Error::StepSize { value: h * total, limit });
                    }
                    y.copy_from_slice(&y_saved);
                    ws.cached = false;
                    h *= 0.5;
                    refined = true;
                    continue;
                }
                let t_new = if h == remaining { t_next } else { t + h };
                let u1: f64 = rng.gen();
                if total > 0.0 && u1 < h * total {
                    let u2: f64 = rng.gen();
                    let prep = source.at(t_new)?;
                    let before = weight;
                    apply_jump(
                        &prep,
                        &mut y,
                        &mut weight,
                        &mut n_jumps,
                        &ws.rates,
                        u1,
                        u2,
                        h,
                        &params,
                        reference_trace,
                        &mut tmp,
                    )?;
                    if weight != before {
                        rec.weight_flips += 1;
                    }
                    ws.cached = false;
                }
                if let Some(threshold) = config.split_threshold {
                    if pair_balance(&y) < threshold {
                        let before = weight;
                        split_pair(&mut y, &mut weight, rng.gen());
                        rec.splits += 1;
                        if weight != before {
                            rec.weight_flips += 1;
                        }
                        ws.cached = false;
                    }
                }
                t = t_new;
                h = seg.h;
                let (psi, phi) = y.split_at(dim);
                let drift = (pair_trace(psi, phi) / reference_trace - 1.0).abs();
                rec.max_norm_drift = rec.max_norm_drift.max(drift);
            }
            if refined {
                rec.refined_steps += 1;
            }
        }
        t = t_out;

        let (psi, phi) = y.split_at(dim);
        let tau = pair_trace(psi, phi);
        rec.traces.push(weight * tau);
        rec.weights.push(weight);
        let mut values = Vec::with_capacity(observables.len());
        for op in observables {
            op.mul_vec_into(psi, &mut tmp);
            op.mul_vec_into(phi, &mut tmp2);
            let v = crate::linalg::inner(phi, &tmp) + crate::linalg::inner(psi, &tmp2);
            debug_assert!(v.im.abs() <= 1e-8 * v.norm().max(1.0));
            values.push(weight * v.re);
        }
        rec.observables.push(values);
        if let Some(snapshots) = rec.rho.as_mut() {
            let contribution = ComplexMat::from_fn(dim, |i, j| {
                (psi[i] * phi[j].conj() + phi[i] * psi[j].conj()) * weight
            });
            rec.max_hermiticity_defect = rec.max_hermiticity_defect.max(contribution.hermiticity_residual());
            snapshots.push(contribution);
        }
    }

    if rec.max_norm_drift > config.norm_drift_budget {
        rec.warnings.push(format!(
            "pair trace drifted by {:.3e} (budget {:.3e})",
            rec.max_norm_drift, config.norm_drift_budget
        ));
    }
    rec.jumps = n_jumps;
    rec.final_weight = weight;
    Ok(rec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, ladder_ops};
    use crate::qme::{lindblad_embed, spec_from_hamiltonian_and_channels, Channel, QmeSpec};
    use crate::time_grid::uniform_grid;
    use approx::assert_abs_diff_eq;

    fn amplitude_damping() -> QmeSpec {
        let (sm, _) = ladder_ops(2).unwrap();
        lindblad_embed(&ComplexMat::zeros(2), &[sm], 1.0).unwrap()
    }

    fn excited_projector() -> ComplexMat {
        ComplexMat::from_real_diag(&[0.0, 1.0])
    }

    #[test]
    fn same_seed_same_record() {
        let spec = amplitude_damping();
        let chi = ComplexVec::basis(2, 1).unwrap();
        let mut cfg = PropagationConfig::new(0.01, uniform_grid(2.0, 5));
        cfg.rng_seed = 42;
        let a = propagate(&spec, &chi, &cfg, &[excited_projector()]).unwrap();
        let b = propagate(&spec, &chi, &cfg, &[excited_projector()]).unwrap();
        assert_eq!(a, b);
        cfg.rng_seed = 43;
        let mut differs = false;
        for seed in 43..60 {
            cfg.rng_seed = seed;
            differs |= propagate(&spec, &chi, &cfg, &[excited_projector()]).unwrap() != a;
        }
        assert!(differs);
    }

    #[test]
    fn lindblad_trajectory_stays_physical() {
        let spec = amplitude_damping();
        let chi = ComplexVec::from_vec(vec![c(0.6, 0.0), c(0.0, 0.8)]).unwrap();
        let mut cfg = PropagationConfig::new(0.01, uniform_grid(3.0, 7));
        cfg.record_rho = true;
        for seed in 0..20 {
            cfg.rng_seed = seed;
            let rec = propagate(&spec, &chi, &cfg, &[excited_projector()]).unwrap();
            assert!(!rec.ever_negative());
            assert_eq!(rec.weight_flips, 0);
            for (g, tr) in rec.traces.iter().enumerate() {
                assert_abs_diff_eq!(*tr, 1.0, epsilon = 1e-8);
                let p = rec.observables[g][0];
                assert!((-1e-12..=1.0 + 1e-12).contains(&p));
            }
            assert!(rec.max_hermiticity_defect < 1e-14);
            assert!(rec.total_jumps() <= 1);
        }
    }

    #[test]
    fn first_output_is_initial_state() {
        let spec = amplitude_damping();
        let chi = ComplexVec::from_vec(vec![c(0.6, 0.0), c(0.0, 0.8)]).unwrap();
        let mut cfg = PropagationConfig::new(0.01, vec![0.0, 1.0]);
        cfg.record_rho = true;
        let rec = propagate(&spec, &chi, &cfg, &[]).unwrap();
        assert!((&rec.rho.unwrap()[0] - &chi.outer(&chi)).max_abs() < 1e-15);
    }

    #[test]
    fn input_validation() {
        let spec = amplitude_damping();
        let cfg = PropagationConfig::new(0.01, vec![0.0, 1.0]);
        let unnormalized = ComplexVec::from_vec(vec![c(1.0, 0.0), c(1.0, 0.0)]).unwrap();
        assert!(propagate(&spec, &unnormalized, &cfg, &[]).is_err());
        let chi = ComplexVec::basis(2, 1).unwrap();
        let non_hermitian = ComplexMat::from_fn(2, |i, j| if i == 0 && j == 1 { c(1.0, 0.0) } else { c(0.0, 0.0) });
        assert!(matches!(
            propagate(&spec, &chi, &cfg, &[non_hermitian]),
            Err(Error::HermiticityViolation { .. })
        ));
        assert!(propagate(&spec, &ComplexVec::basis(3, 0).unwrap(), &cfg, &[]).is_err());
        let bad = PropagationConfig::new(0.0, vec![0.0, 1.0]);
        assert!(propagate(&spec, &chi, &bad, &[]).is_err());
        let descending = PropagationConfig::new(0.01, vec![1.0, 0.0]);
        assert!(propagate(&spec, &chi, &descending, &[]).is_err());
    }

    #[test]
    fn rate_spikes_are_refined_or_reported() {
        // a strong channel with dt far above the guard
        let (sm, _) = ladder_ops(2).unwrap();
        let spec = lindblad_embed(&ComplexMat::zeros(2), &[sm.scale_re(10.0)], 1.0).unwrap();
        let chi = ComplexVec::basis(2, 1).unwrap();
        let mut cfg = PropagationConfig::new(0.05, vec![0.0, 0.5]);
        let rec = propagate(&spec, &chi, &cfg, &[]).unwrap();
        assert!(rec.refined_steps > 0);
        cfg.refine_steps = false;
        assert!(matches!(propagate(&spec, &chi, &cfg, &[]), Err(Error::StepSize { .. })));
    }

    #[test]
    fn mixed_initial_state_sampling() {
        let spec = amplitude_damping();
        let rho = DensityMatrix::new(ComplexMat::from_real_diag(&[0.25, 0.75]));
        let cfg = PropagationConfig::new(0.01, vec![0.0]);
        let mut excited = 0;
        for seed in 0..400 {
            let rec = propagate_from(&spec, &InitialState::Mixed(rho.clone()), &PropagationConfig { rng_seed: seed, ..cfg.clone() }, &[excited_projector()])
                .unwrap();
            assert_abs_diff_eq!(rec.traces[0], 1.0, epsilon = 1e-12);
            if rec.observables[0][0] > 0.5 {
                excited += 1;
            }
        }
        assert!((250..350).contains(&excited), "{excited}");
    }

    #[test]
    fn negative_eigenvalue_mixture_carries_sign() {
        // Hermitian, unit trace, one negative eigenvalue
        let rho = DensityMatrix::new(ComplexMat::from_real_diag(&[1.2, -0.2]));
        let spec = spec_from_hamiltonian_and_channels(&ComplexMat::zeros(2), vec![Channel::new(ComplexMat::zeros(2), ComplexMat::zeros(2)).unwrap()]).unwrap();
        let cfg = PropagationConfig::new(0.1, vec![0.0]);
        let mut negative = 0;
        for seed in 0..200 {
            let rec = propagate_from(&spec, &InitialState::Mixed(rho.clone()), &PropagationConfig { rng_seed: seed, ..cfg.clone() }, &[])
                .unwrap();
            if rec.ever_negative() {
                negative += 1;
                assert_abs_diff_eq!(rec.traces[0], -1.4, epsilon = 1e-12);
            } else {
                assert_abs_diff_eq!(rec.traces[0], 1.4, epsilon = 1e-12);
            }
        }
        assert!((10..50).contains(&negative), "{negative}");
    }
}
