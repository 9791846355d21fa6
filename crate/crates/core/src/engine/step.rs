//! Single-step building blocks: the deterministic drift and the jump decision.

use super::pair::{evaluate_rates, rate_denominator, JumpRates, RateNormalization, PreparedSource, PreparedSpec, RateScratch, TrajectoryPair};
use crate::error::{Error, Result};
use crate::linalg::{Complex64, ZERO};
use crate::qme::{QmeSpec, SpecSource};

/// Which rates feed the norm-compensating drift term.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DriftRates {
    /// `sum_k (|p_k^1| + |p_k^2|) / 2`, consistent with sampling jumps at `|p|`.
    #[default]
    Absolute,
    /// `sum_k (p_k^1 + p_k^2) / 2`. Biased once rates turn negative; kept for regression runs.
    Signed,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepParams {
    pub tau_floor: f64,
    /// Upper bound on `dt * sum |p|`.
    pub max_total_rate_dt: f64,
    pub drift_rates: DriftRates,
    pub renormalize_each_jump: bool,
    pub normalization: RateNormalization,
}

impl Default for StepParams {
    fn default() -> Self {
        Self {
            tau_floor: super::pair::DEFAULT_TAU_FLOOR,
            max_total_rate_dt: 0.1,
            drift_rates: DriftRates::Absolute,
            renormalize_each_jump: false,
            normalization: RateNormalization::default(),
        }
    }
}

/// Which term of which channel fired.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct JumpTerm {
    pub channel: usize,
    /// 1: `psi <- E psi`, `phi <- C phi`; 2: `psi <- C psi`, `phi <- E phi`.
    pub term: u8,
}

#[derive(Clone, Debug, PartialEq)]
pub struct JumpOutcome {
    pub pair: TrajectoryPair,
    pub jumped: bool,
    pub channel: Option<JumpTerm>,
}

fn drift_rate(rates: &JumpRates, mode: DriftRates) -> f64 {
    match mode {
        DriftRates::Absolute => rates.abs_sum(),
        DriftRates::Signed => rates.signed_sum(),
    }
}

fn check_guard(rates: &JumpRates, dt: f64, limit: f64) -> Result<()> {
    let value = dt * rates.abs_sum();
    if value > limit {
        return Err(Error::StepSize { value, limit });
    }
    Ok(())
}

/// Buffers for RK4 on the stacked state `[psi; phi]`.
#[derive(Clone, Debug)]
pub(crate) struct DriftWorkspace {
    dim: usize,
    y0: Vec<Complex64>,
    stage: Vec<Complex64>,
    k: Vec<Complex64>,
    acc: Vec<Complex64>,
    pub scratch: RateScratch,
    pub rates: JumpRates,
    /// True when `scratch`/`rates` describe the current state.
    pub cached: bool,
}

impl DriftWorkspace {
    pub fn new(dim: usize, n_channels: usize) -> Self {
        Self {
            dim,
            y0: vec![ZERO; 2 * dim],
            stage: vec![ZERO; 2 * dim],
            k: vec![ZERO; 2 * dim],
            acc: vec![ZERO; 2 * dim],
            scratch: RateScratch::new(dim),
            rates: JumpRates::zeros(n_channels),
            cached: false,
        }
    }

    /// Rates of the pair stored in `y`, refreshed if stale.
    pub fn refresh(&mut self, prep: &PreparedSpec, y: &[Complex64], params: &StepParams) -> Result<()> {
        if !self.cached {
            let (psi, phi) = y.split_at(self.dim);
            evaluate_rates(prep, psi, phi, params.tau_floor, params.normalization, &mut self.scratch, &mut self.rates)?;
            self.cached = true;
        }
        Ok(())
    }

    /// `k = (A + s/2) y` from the scratch buffers of the last evaluation at `y`.
    fn derivative_into(&mut self, y: &[Complex64], mode: DriftRates, out_is_k: bool) {
        let half_s = 0.5 * drift_rate(&self.rates, mode);
        let dim = self.dim;
        let out = if out_is_k { &mut self.k } else { &mut self.acc };
        for i in 0..dim {
            out[i] = self.scratch.a_psi[i] + y[i] * half_s;
            out[dim + i] = self.scratch.a_phi[i] + y[dim + i] * half_s;
        }
    }
}

/// One classical RK4 step of the nonlinear drift, rates re-evaluated at every stage.
/// On success the workspace holds the rates at the new state.
pub(crate) fn drift_rk4<S: SpecSource + ?Sized>(
    source: &PreparedSource<'_, S>,
    y: &mut [Complex64],
    t: f64,
    h: f64,
    params: &StepParams,
    ws: &mut DriftWorkspace,
) -> Result<()> {
    let dim = ws.dim;
    let mode = params.drift_rates;
    {
        let prep0 = source.at(t)?;
        ws.refresh(&prep0, y, params)?;
    }
    check_guard(&ws.rates, h, params.max_total_rate_dt)?;
    ws.y0.copy_from_slice(y);
    // acc = k1
    ws.derivative_into(y, mode, false);

    let prep_mid = source.at(t + 0.5 * h)?;
    for (stage_no, coef) in [(2, 0.5 * h), (3, 0.5 * h), (4, h)] {
        let prev_k: &[Complex64] = if stage_no == 2 { &ws.acc } else { &ws.k };
        for i in 0..2 * dim {
            ws.stage[i] = ws.y0[i] + prev_k[i] * coef;
        }
        let stage = std::mem::take(&mut ws.stage);
        let result = if stage_no == 4 {
            let prep_end = source.at(t + h)?;
            let (psi, phi) = stage.split_at(dim);
            evaluate_rates(&prep_end, psi, phi, params.tau_floor, params.normalization, &mut ws.scratch, &mut ws.rates)
        } else {
            let (psi, phi) = stage.split_at(dim);
            evaluate_rates(&prep_mid, psi, phi, params.tau_floor, params.normalization, &mut ws.scratch, &mut ws.rates)
        };
        if let Err(e) = result {
            ws.stage = stage;
            ws.cached = false;
            return Err(e);
        }
        ws.derivative_into(&stage, mode, true);
        ws.stage = stage;
        let w = if stage_no == 4 { 1.0 } else { 2.0 };
        for i in 0..2 * dim {
            ws.acc[i] += ws.k[i] * w;
        }
    }
    let sixth = h / 6.0;
    for i in 0..2 * dim {
        y[i] = ws.y0[i] + ws.acc[i] * sixth;
    }
    ws.cached = false;
    let prep_end = source.at(t + h)?;
    ws.refresh(&prep_end, y, params)?;
    Ok(())
}

/// Advances both vectors by the drift generator `A + s/2` over `dt`.
pub fn drift_step(spec: &QmeSpec, pair: &TrajectoryPair, dt: f64, params: &StepParams) -> Result<TrajectoryPair> {
    check_pair(spec, pair)?;
    if dt == 0.0 {
        return Ok(pair.clone());
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!("dt must be non-negative, got {dt}")));
    }
    let source = PreparedSource::new(spec)?;
    let dim = spec.dim();
    let mut ws = DriftWorkspace::new(dim, spec.n_channels());
    let mut y: Vec<Complex64> = pair.psi.iter().chain(pair.phi.iter()).copied().collect();
    drift_rk4(&source, &mut y, pair.t, dt, params, &mut ws)?;
    let mut out = pair.clone();
    out.psi.copy_from_slice(&y[..dim]);
    out.phi.copy_from_slice(&y[dim..]);
    out.t += dt;
    Ok(out)
}

fn check_pair(spec: &QmeSpec, pair: &TrajectoryPair) -> Result<()> {
    if pair.psi.dim() != spec.dim() || pair.phi.dim() != spec.dim() || pair.n_jumps.len() != spec.n_channels() {
        return Err(Error::InvalidDimension(format!(
            "pair ({} / {}, {} channels) does not match spec ({}, {} channels)",
            pair.psi.dim(),
            pair.phi.dim(),
            pair.n_jumps.len(),
            spec.dim(),
            spec.n_channels()
        )));
    }
    Ok(())
}

/// Picks the `(channel, term)` whose cumulative `|p|` first exceeds `u2 * sum |p|`.
fn select_term(rates: &JumpRates, u2: f64) -> (JumpTerm, f64) {
    let total = rates.abs_sum();
    let target = u2 * total;
    let mut cum = 0.0;
    let mut last = None;
    for (k, &(p1, p2)) in rates.partial.iter().enumerate() {
        for (term, p) in [(1u8, p1), (2u8, p2)] {
            if p == 0.0 {
                continue;
            }
            cum += p.abs();
            last = Some((JumpTerm { channel: k, term }, p));
            if cum > target {
                return (JumpTerm { channel: k, term }, p);
            }
        }
    }
    // u2 * total rounded up to the full sum.
    last.expect("select_term called with all-zero rates")
}

/// Jump decision and application on the stacked state `[psi; phi]`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn apply_jump(
    prep: &PreparedSpec,
    y: &mut [Complex64],
    weight: &mut f64,
    n_jumps: &mut [[u32; 2]],
    rates: &JumpRates,
    u1: f64,
    u2: f64,
    dt: f64,
    params: &StepParams,
    reference_trace: f64,
    tmp: &mut [Complex64],
) -> Result<Option<JumpTerm>> {
    let total = rates.abs_sum();
    check_guard(rates, dt, params.max_total_rate_dt)?;
    if total == 0.0 || !(u1 < dt * total) {
        return Ok(None);
    }
    let (sel, p) = select_term(rates, u2);
    let dim = prep.dim();
    let (on_psi, on_phi) = match sel.term {
        1 => (&prep.e[sel.channel], &prep.c[sel.channel]),
        _ => (&prep.c[sel.channel], &prep.e[sel.channel]),
    };
    let scale = 1.0 / p.abs().sqrt();
    // A negative rate flips the sign of the pair trace; negating psi restores it
    // and the weight flip keeps w (|psi><phi| + |phi><psi|) unchanged.
    let psi_scale = if p < 0.0 { -scale } else { scale };
    {
        let (psi, phi) = y.split_at_mut(dim);
        on_psi.mul_vec_into(psi, tmp);
        for (dst, src) in psi.iter_mut().zip(tmp.iter()) {
            *dst = src * psi_scale;
        }
        on_phi.mul_vec_into(phi, tmp);
        for (dst, src) in phi.iter_mut().zip(tmp.iter()) {
            *dst = src * scale;
        }
    }
    if p < 0.0 {
        *weight = -*weight;
    }
    n_jumps[sel.channel][usize::from(sel.term - 1)] += 1;

    let (psi, phi) = y.split_at(dim);
    let norm_psi: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
    let norm_phi: f64 = phi.iter().map(|z| z.norm_sqr()).sum();
    if norm_psi < 1e-28 && norm_phi < 1e-28 {
        return Err(Error::TrajectoryDeath);
    }
    if params.renormalize_each_jump {
        let tau = rate_denominator(psi, phi, params.normalization);
        if !(tau.abs() >= params.tau_floor) {
            return Err(Error::DegeneratePair { trace: tau });
        }
        let s = (reference_trace / tau).sqrt();
        for z in y.iter_mut() {
            *z *= s;
        }
    }
    Ok(Some(sel))
}

/// Balance `tau / (<psi|psi> + <phi|phi>)` of the stacked pair, in `[-1, 1]`.
pub(crate) fn pair_balance(y: &[Complex64]) -> f64 {
    let dim = y.len() / 2;
    let (psi, phi) = y.split_at(dim);
    let norm = rate_denominator(psi, phi, RateNormalization::PairNorm);
    if norm == 0.0 {
        return 0.0;
    }
    rate_denominator(psi, phi, RateNormalization::PairTrace) / norm
}

/// Replaces the pair by one of the pure pieces of
/// `|psi><phi| + |phi><psi| = (|u><u| - |v><v|) / 2`, `u, v = psi +- phi`,
/// chosen with probability proportional to its norm and reweighted so the
/// contribution is unchanged on average. Afterwards `psi = phi`.
pub(crate) fn split_pair(y: &mut [Complex64], weight: &mut f64, u: f64) {
    let dim = y.len() / 2;
    let (psi, phi) = y.split_at_mut(dim);
    let mut nu = 0.0;
    let mut nv = 0.0;
    for (a, b) in psi.iter().zip(phi.iter()) {
        nu += (a + b).norm_sqr();
        nv += (a - b).norm_sqr();
    }
    let total = nu + nv;
    let take_u = u * total < nu;
    // |chi><chi| carries (nu + nv) / 2; psi = phi = chi / sqrt(2)
    let (norm, sign) = if take_u { (nu, 1.0) } else { (nv, -1.0) };
    let scale = (total / 4.0 / norm).sqrt();
    for (a, b) in psi.iter_mut().zip(phi.iter_mut()) {
        let v = (*a + *b * sign) * scale;
        *a = v;
        *b = v;
    }
    if !take_u {
        *weight = -*weight;
    }
}

/// Fires at most one jump with probability `dt * sum |p|` (decided by `u1`);
/// `u2` selects the term with probability proportional to `|p_k^i|`.
#[allow(clippy::too_many_arguments)]
pub fn maybe_jump(
    spec: &QmeSpec,
    pair: &TrajectoryPair,
    rates: &JumpRates,
    u1: f64,
    u2: f64,
    dt: f64,
    params: &StepParams,
) -> Result<JumpOutcome> {
    check_pair(spec, pair)?;
    if rates.partial.len() != spec.n_channels() {
        return Err(Error::InvalidDimension("rates do not match the channel count".into()));
    }
    let prep = PreparedSpec::new(spec);
    let dim = spec.dim();
    let mut y: Vec<Complex64> = pair.psi.iter().chain(pair.phi.iter()).copied().collect();
    let mut out = pair.clone();
    let mut tmp = vec![ZERO; dim];
    let channel =
        apply_jump(&prep, &mut y, &mut out.weight, &mut out.n_jumps, rates, u1, u2, dt, params, 1.0, &mut tmp)?;
    out.psi.copy_from_slice(&y[..dim]);
    out.phi.copy_from_slice(&y[dim..]);
    Ok(JumpOutcome { pair: out, jumped: channel.is_some(), channel })
}
