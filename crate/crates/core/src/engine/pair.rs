use std::borrow::Cow;

use crate::error::{Error, Result};
use crate::linalg::{inner_re, Complex64, ComplexMat, ComplexVec, ZERO};
use crate::qme::{QmeSpec, SpecSource};

pub const DEFAULT_TAU_FLOOR: f64 = 1e-12;

/// Denominator of the jump rates.
///
/// The rates are free parameters of the unraveling; only their use in both the
/// drift and the jump statistics has to agree.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RateNormalization {
    /// `tau = <phi|psi> + <psi|phi>`, which keeps `tau` fixed while all rates are
    /// non-negative. When rates turn negative the drift can drive the pair
    /// towards `tau -> 0` of the underlying linear flow, where the rates diverge.
    PairTrace,
    /// `<psi|psi> + <phi|phi>`, never smaller than `|tau|`. Identical to
    /// `PairTrace` while `psi = phi`, and free of the divergence.
    PairNorm,
    /// `tau`, with its magnitude held at or above `floor * (<psi|psi> + <phi|phi>)`.
    /// Keeps the trace-conserving rates wherever the pair is well balanced and
    /// bounds them where the linear flow would take `tau` through zero.
    ClampedTrace { floor: f64 },
}

pub const DEFAULT_CLAMP_FLOOR: f64 = 0.05;

impl Default for RateNormalization {
    fn default() -> Self {
        RateNormalization::PairTrace
    }
}

#[inline]
fn pair_norm(psi: &[Complex64], phi: &[Complex64]) -> f64 {
    psi.iter().map(|z| z.norm_sqr()).sum::<f64>() + phi.iter().map(|z| z.norm_sqr()).sum::<f64>()
}

#[inline]
pub(crate) fn rate_denominator(psi: &[Complex64], phi: &[Complex64], normalization: RateNormalization) -> f64 {
    match normalization {
        RateNormalization::PairTrace => pair_trace(psi, phi),
        RateNormalization::PairNorm => pair_norm(psi, phi),
        RateNormalization::ClampedTrace { floor } => {
            let tau = pair_trace(psi, phi);
            let bound = floor * pair_norm(psi, phi);
            if tau.abs() >= bound {
                tau
            } else {
                bound.copysign(tau)
            }
        }
    }
}

/// The stochastic state `(|psi>, |phi>)` of one realization.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryPair {
    pub psi: ComplexVec,
    pub phi: ComplexVec,
    /// Always `+1.0` or `-1.0`.
    pub weight: f64,
    pub t: f64,
    /// `(n_k^1, n_k^2)` per channel.
    pub n_jumps: Vec<[u32; 2]>,
}

impl TrajectoryPair {
    /// `psi = phi = chi / sqrt(2)`, so that `|psi><phi| + |phi><psi| = |chi><chi|`.
    pub fn from_pure(chi: &ComplexVec, n_channels: usize) -> Self {
        let mut psi = chi.clone();
        psi.scale_re(std::f64::consts::FRAC_1_SQRT_2);
        Self { phi: psi.clone(), psi, weight: 1.0, t: 0.0, n_jumps: vec![[0, 0]; n_channels] }
    }

    pub fn dim(&self) -> usize {
        self.psi.dim()
    }

    /// Pair trace `<phi|psi> + <psi|phi>`.
    pub fn trace(&self) -> f64 {
        pair_trace(&self.psi, &self.phi)
    }

    /// `w (|psi><phi| + |phi><psi|)`
    pub fn contribution(&self) -> ComplexMat {
        let n = self.dim();
        let w = self.weight;
        ComplexMat::from_fn(n, |i, j| {
            (self.psi[i] * self.phi[j].conj() + self.phi[i] * self.psi[j].conj()) * w
        })
    }

    /// `w (<phi|O|psi> + <psi|O|phi>)`
    pub fn observable(&self, op: &ComplexMat) -> Complex64 {
        (op.expectation(&self.phi, &self.psi) + op.expectation(&self.psi, &self.phi)) * self.weight
    }

    pub fn total_jumps(&self) -> u64 {
        self.n_jumps.iter().map(|[a, b]| u64::from(*a) + u64::from(*b)).sum()
    }
}

#[inline]
pub(crate) fn pair_trace(psi: &[Complex64], phi: &[Complex64]) -> f64 {
    2.0 * inner_re(phi, psi)
}

/// Signed partial rates `(p_k^1, p_k^2)` and the total rate derived from `A + A^dagger`.
#[derive(Clone, Debug, PartialEq)]
pub struct JumpRates {
    pub partial: Vec<(f64, f64)>,
    pub total: f64,
}

impl JumpRates {
    pub fn zeros(n_channels: usize) -> Self {
        Self { partial: vec![(0.0, 0.0); n_channels], total: 0.0 }
    }

    /// `sum_k (|p_k^1| + |p_k^2|)`
    pub fn abs_sum(&self) -> f64 {
        self.partial.iter().map(|(a, b)| a.abs() + b.abs()).sum()
    }

    /// `sum_k (p_k^1 + p_k^2)`
    pub fn signed_sum(&self) -> f64 {
        self.partial.iter().map(|(a, b)| a + b).sum()
    }

    pub fn has_negative(&self) -> bool {
        self.partial.iter().any(|(a, b)| *a < 0.0 || *b < 0.0)
    }
}

/// A spec with the products the rate formulas need precomputed.
#[derive(Clone, Debug)]
pub struct PreparedSpec {
    pub(crate) a: ComplexMat,
    pub(crate) c: Vec<ComplexMat>,
    pub(crate) e: Vec<ComplexMat>,
    /// `C_k^dagger E_k`
    pub(crate) cd_e: Vec<ComplexMat>,
}

impl PreparedSpec {
    pub fn new(spec: &QmeSpec) -> Self {
        let channels = spec.channels();
        Self {
            a: spec.a().clone(),
            c: channels.iter().map(|ch| ch.c.clone()).collect(),
            e: channels.iter().map(|ch| ch.e.clone()).collect(),
            cd_e: channels.iter().map(|ch| ch.c.adjoint().matmul(&ch.e)).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.a.dim()
    }

    pub fn n_channels(&self) -> usize {
        self.c.len()
    }
}

/// Serves prepared specs, caching the static case.
pub(crate) struct PreparedSource<'a, S: SpecSource + ?Sized> {
    source: &'a S,
    fixed: Option<PreparedSpec>,
}

impl<'a, S: SpecSource + ?Sized> PreparedSource<'a, S> {
    pub fn new(source: &'a S) -> Result<Self> {
        let fixed = if source.is_static() { Some(PreparedSpec::new(source.spec_at(0.0)?.as_ref())) } else { None };
        Ok(Self { source, fixed })
    }

    pub fn at(&self, t: f64) -> Result<Cow<'_, PreparedSpec>> {
        match &self.fixed {
            Some(p) => Ok(Cow::Borrowed(p)),
            None => Ok(Cow::Owned(PreparedSpec::new(self.source.spec_at(t)?.as_ref()))),
        }
    }
}

/// Scratch buffers for one rate evaluation; `a_psi`/`a_phi` are reused by the drift.
#[derive(Clone, Debug)]
pub(crate) struct RateScratch {
    pub a_psi: Vec<Complex64>,
    pub a_phi: Vec<Complex64>,
    g_psi: Vec<Complex64>,
    g_phi: Vec<Complex64>,
}

impl RateScratch {
    pub fn new(dim: usize) -> Self {
        Self { a_psi: vec![ZERO; dim], a_phi: vec![ZERO; dim], g_psi: vec![ZERO; dim], g_phi: vec![ZERO; dim] }
    }
}

/// Fills `rates` for the pair `(psi, phi)` and leaves `A psi`, `A phi` in the scratch.
pub(crate) fn evaluate_rates(
    prep: &PreparedSpec,
    psi: &[Complex64],
    phi: &[Complex64],
    tau_floor: f64,
    normalization: RateNormalization,
    scratch: &mut RateScratch,
    rates: &mut JumpRates,
) -> Result<()> {
    let tau = rate_denominator(psi, phi, normalization);
    if !(tau.abs() >= tau_floor) {
        return Err(Error::DegeneratePair { trace: tau });
    }
    prep.a.mul_vec_into(psi, &mut scratch.a_psi);
    prep.a.mul_vec_into(phi, &mut scratch.a_phi);
    // -(<phi|A + A^dagger|psi> + c.c.) = -2 Re(<phi|A psi> + <A phi|psi>)
    let total = -2.0 * (inner_re(phi, &scratch.a_psi) + inner_re(&scratch.a_phi, psi)) / tau;
    for (k, g) in prep.cd_e.iter().enumerate() {
        g.mul_vec_into(psi, &mut scratch.g_psi);
        g.mul_vec_into(phi, &mut scratch.g_phi);
        // <phi|C^dag E|psi> + <psi|E^dag C|phi> = 2 Re <phi|G psi>
        // <phi|E^dag C|psi> + <psi|C^dag E|phi> = 2 Re <psi|G phi>
        let p1 = 2.0 * inner_re(phi, &scratch.g_psi) / tau;
        let p2 = 2.0 * inner_re(psi, &scratch.g_phi) / tau;
        rates.partial[k] = (p1, p2);
    }
    rates.total = total;
    Ok(())
}

/// Signed partial and total jump rates for the current pair.
pub fn jump_rates(spec: &QmeSpec, pair: &TrajectoryPair) -> Result<JumpRates> {
    jump_rates_with(spec, pair, DEFAULT_TAU_FLOOR, RateNormalization::PairTrace)
}

pub fn jump_rates_with(
    spec: &QmeSpec,
    pair: &TrajectoryPair,
    tau_floor: f64,
    normalization: RateNormalization,
) -> Result<JumpRates> {
    if pair.dim() != spec.dim() || pair.phi.dim() != spec.dim() {
        return Err(Error::InvalidDimension(format!(
            "pair of dimension {} for a {}-dimensional spec",
            pair.dim(),
            spec.dim()
        )));
    }
    let prep = PreparedSpec::new(spec);
    let mut scratch = RateScratch::new(spec.dim());
    let mut rates = JumpRates::zeros(spec.n_channels());
    evaluate_rates(&prep, &pair.psi, &pair.phi, tau_floor, normalization, &mut scratch, &mut rates)?;
    Ok(rates)
}
