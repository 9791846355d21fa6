//! Generalized time-local master equations
//!
//! `d rho/dt = A rho + rho A^dagger + sum_k (C_k rho E_k^dagger + E_k rho C_k^dagger)`
//!
//! The trace of `rho` is conserved iff `A + A^dagger = -sum_k (E_k^dagger C_k + C_k^dagger E_k)`.

mod text;

use std::borrow::Cow;
use std::ops::Range;

pub use text::{parse_spec, write_spec};

use crate::error::{Error, Result};
use crate::linalg::{c, ComplexMat};

pub const DEFAULT_VALIDATION_TOL: f64 = 1e-9;

/// One dissipative channel: the pair `(C_k, E_k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Channel {
    pub c: ComplexMat,
    pub e: ComplexMat,
}

impl Channel {
    pub fn new(c: ComplexMat, e: ComplexMat) -> Result<Self> {
        if c.dim() != e.dim() {
            return Err(Error::InvalidSpec(format!(
                "channel operators differ in dimension ({} vs {})",
                c.dim(),
                e.dim()
            )));
        }
        Ok(Self { c, e })
    }

    /// `E^dagger C + C^dagger E`
    pub fn symmetric_product(&self) -> ComplexMat {
        let ed_c = self.e.adjoint().matmul(&self.c);
        &ed_c + &ed_c.adjoint()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QmeSpec {
    dim: usize,
    a: ComplexMat,
    channels: Vec<Channel>,
    constraint_mask: Option<Range<usize>>,
}

impl QmeSpec {
    pub fn new(a: ComplexMat, channels: Vec<Channel>) -> Result<Self> {
        let dim = a.dim();
        if dim == 0 {
            return Err(Error::InvalidSpec("zero-dimensional spec".into()));
        }
        for (k, ch) in channels.iter().enumerate() {
            if ch.c.dim() != dim || ch.e.dim() != dim {
                return Err(Error::InvalidSpec(format!(
                    "channel {k} has dimension {}/{}, expected {dim}",
                    ch.c.dim(),
                    ch.e.dim()
                )));
            }
        }
        if !a.is_finite() || channels.iter().any(|ch| !ch.c.is_finite() || !ch.e.is_finite()) {
            return Err(Error::InvalidSpec("non-finite operator entry".into()));
        }
        Ok(Self { dim, a, channels, constraint_mask: None })
    }

    /// Restricts the norm-constraint check to the basis states in `mask`.
    pub fn with_constraint_mask(mut self, mask: Range<usize>) -> Result<Self> {
        if mask.start >= mask.end || mask.end > self.dim {
            return Err(Error::InvalidSpec(format!(
                "constraint mask {mask:?} invalid for dimension {}",
                self.dim
            )));
        }
        self.constraint_mask = Some(mask);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn a(&self) -> &ComplexMat {
        &self.a
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn constraint_mask(&self) -> Option<Range<usize>> {
        self.constraint_mask.clone()
    }

    /// `A + A^dagger + sum_k (E_k^dagger C_k + C_k^dagger E_k)`; zero iff the trace is conserved.
    pub fn constraint_matrix(&self) -> ComplexMat {
        let mut m = &self.a + &self.a.adjoint();
        for ch in &self.channels {
            m += &ch.symmetric_product();
        }
        m
    }

    pub fn validate_norm_constraint(&self, tol: f64) -> Result<NormCheck> {
        validate_norm_constraint(self, tol)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormCheck {
    pub residual: f64,
    pub tol: f64,
    pub passed: bool,
}

/// Max-norm of the trace-conservation defect on the spec's constraint mask.
pub fn validate_norm_constraint(spec: &QmeSpec, tol: f64) -> Result<NormCheck> {
    let dim = spec.dim;
    if spec.a.dim() != dim || spec.channels.iter().any(|ch| ch.c.dim() != dim || ch.e.dim() != dim) {
        return Err(Error::InvalidSpec("operator dimensions disagree".into()));
    }
    let m = spec.constraint_matrix();
    let residual = m.max_abs_in(spec.constraint_mask.clone().unwrap_or(0..dim));
    Ok(NormCheck { residual, tol, passed: residual < tol })
}

/// Rewrites a Lindblad equation with Hamiltonian `h` and jump operators `lindblad_ops`
/// in the generalized form, with `C_k = E_k = L_k / sqrt(2)`.
pub fn lindblad_embed(h: &ComplexMat, lindblad_ops: &[ComplexMat], hbar: f64) -> Result<QmeSpec> {
    if !(hbar > 0.0) {
        return Err(Error::InvalidParameter(format!("hbar must be positive, got {hbar}")));
    }
    let residual = h.hermiticity_residual();
    let tol = 1e-10 * h.max_abs().max(1.0);
    if residual > tol {
        return Err(Error::HermiticityViolation { residual, tol });
    }
    let dim = h.dim();
    let mut a = h.scale(c(0.0, -1.0 / hbar));
    let mut channels = Vec::with_capacity(lindblad_ops.len());
    for l in lindblad_ops {
        if l.dim() != dim {
            return Err(Error::InvalidSpec(format!(
                "Lindblad operator of dimension {} for a {dim}-dimensional Hamiltonian",
                l.dim()
            )));
        }
        let ld_l = l.adjoint().matmul(l);
        a.axpy(c(-0.5, 0.0), &ld_l);
        let half = l.scale_re(std::f64::consts::FRAC_1_SQRT_2);
        channels.push(Channel::new(half.clone(), half)?);
    }
    QmeSpec::new(a, channels)
}

/// Anything the engines can query for the generator at time `t`.
pub trait SpecSource: Sync {
    fn dim(&self) -> usize;
    fn n_channels(&self) -> usize;
    fn spec_at(&self, t: f64) -> Result<Cow<'_, QmeSpec>>;
    /// True when `spec_at` returns the same operators at every time.
    fn is_static(&self) -> bool {
        false
    }
}

impl SpecSource for QmeSpec {
    fn dim(&self) -> usize {
        self.dim
    }

    fn n_channels(&self) -> usize {
        self.channels.len()
    }

    fn spec_at(&self, _t: f64) -> Result<Cow<'_, QmeSpec>> {
        Ok(Cow::Borrowed(self))
    }

    fn is_static(&self) -> bool {
        true
    }
}

type SpecFn = dyn Fn(f64) -> QmeSpec + Send + Sync;

/// Operators that depend explicitly on time, valid on a closed horizon.
pub struct TimeDependentSpec {
    dim: usize,
    n_channels: usize,
    horizon: (f64, f64),
    evaluate: Box<SpecFn>,
}

impl std::fmt::Debug for TimeDependentSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TimeDependentSpec")
            .field("dim", &self.dim)
            .field("n_channels", &self.n_channels)
            .field("horizon", &self.horizon)
            .finish_non_exhaustive()
    }
}

impl TimeDependentSpec {
    pub fn new(
        horizon: (f64, f64),
        evaluate: impl Fn(f64) -> QmeSpec + Send + Sync + 'static,
    ) -> Result<Self> {
        if !(horizon.0 < horizon.1) {
            return Err(Error::InvalidParameter(format!("empty horizon {horizon:?}")));
        }
        let probe = evaluate(horizon.0);
        Ok(Self { dim: probe.dim(), n_channels: probe.n_channels(), horizon, evaluate: Box::new(evaluate) })
    }

    pub fn horizon(&self) -> (f64, f64) {
        self.horizon
    }
}

impl SpecSource for TimeDependentSpec {
    fn dim(&self) -> usize {
        self.dim
    }

    fn n_channels(&self) -> usize {
        self.n_channels
    }

    fn spec_at(&self, t: f64) -> Result<Cow<'_, QmeSpec>> {
        let (start, end) = self.horizon;
        // Lattice times like n*dt may overshoot the end by a rounding error.
        let slack = 1e-12 * end.abs().max(start.abs()).max(1.0);
        if !(t >= start - slack && t <= end + slack) {
            return Err(Error::OutOfRange { t, start, end });
        }
        let spec = (self.evaluate)(t);
        if spec.dim() != self.dim || spec.n_channels() != self.n_channels {
            return Err(Error::InvalidSpec(format!(
                "time-dependent spec changed shape at t = {t}: dim {} channels {}",
                spec.dim(),
                spec.n_channels()
            )));
        }
        Ok(Cow::Owned(spec))
    }
}

/// Free-form spec convenience: `A = -i H - 1/2 sum_k (E_k^dagger C_k + C_k^dagger E_k)`,
/// which satisfies the trace constraint identically for any `C_k`, `E_k`.
pub fn spec_from_hamiltonian_and_channels(h: &ComplexMat, channels: Vec<Channel>) -> Result<QmeSpec> {
    let mut a = h.scale(c(0.0, -1.0));
    for ch in &channels {
        a.axpy(c(-0.5, 0.0), &ch.symmetric_product());
    }
    QmeSpec::new(a, channels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{ladder_ops, ZERO};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_mat(rng: &mut impl Rng, n: usize) -> ComplexMat {
        ComplexMat::from_fn(n, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
    }

    #[test]
    fn amplitude_damping_embedding() {
        let (sm, _) = ladder_ops(2).unwrap();
        let spec = lindblad_embed(&ComplexMat::zeros(2), &[sm.clone()], 1.0).unwrap();
        assert_eq!(spec.a()[(0, 0)], ZERO);
        assert_abs_diff_eq!(spec.a()[(1, 1)].re, -0.5, epsilon = 1e-15);
        assert_eq!(spec.a()[(0, 1)], ZERO);
        let half = sm.scale_re(std::f64::consts::FRAC_1_SQRT_2);
        assert_eq!(spec.channels()[0].c, half);
        assert_eq!(spec.channels()[0].e, half);
        let check = spec.validate_norm_constraint(DEFAULT_VALIDATION_TOL).unwrap();
        assert!(check.residual < 1e-15);
        assert!(check.passed);
    }

    #[test]
    fn no_dissipation_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = random_mat(&mut rng, 3).hermitian_part();
        let spec = lindblad_embed(&h, &[], 2.0).unwrap();
        assert_eq!(spec.n_channels(), 0);
        assert!((&spec.a().scale(c(0.0, 2.0)) - &h).max_abs() < 1e-15);
        assert!(spec.validate_norm_constraint(1e-12).unwrap().residual < 1e-15);
    }

    #[test]
    fn embed_rejects_non_hermitian_hamiltonian() {
        let (sm, _) = ladder_ops(2).unwrap();
        assert!(matches!(lindblad_embed(&sm, &[], 1.0), Err(Error::HermiticityViolation { .. })));
    }

    #[test]
    fn mismatched_channel_rejected() {
        let r = QmeSpec::new(
            ComplexMat::zeros(3),
            vec![Channel { c: ComplexMat::zeros(2), e: ComplexMat::zeros(2) }],
        );
        assert!(matches!(r, Err(Error::InvalidSpec(_))));
        assert!(Channel::new(ComplexMat::zeros(2), ComplexMat::zeros(3)).is_err());
    }

    #[test]
    fn mask_bounds_checked() {
        let spec = QmeSpec::new(ComplexMat::zeros(3), vec![]).unwrap();
        assert!(spec.clone().with_constraint_mask(0..4).is_err());
        assert!(spec.clone().with_constraint_mask(2..2).is_err());
        assert!(spec.with_constraint_mask(0..2).is_ok());
    }

    #[test]
    fn mask_restricts_check() {
        // Defect only in the last basis state.
        let a = ComplexMat::from_real_diag(&[0.0, 0.0, -1.0]);
        let spec = QmeSpec::new(a, vec![]).unwrap();
        assert!(!spec.validate_norm_constraint(1e-9).unwrap().passed);
        let masked = spec.with_constraint_mask(0..2).unwrap();
        assert!(masked.validate_norm_constraint(1e-9).unwrap().passed);
    }

    #[test]
    fn static_spec_is_time_independent() {
        let spec = QmeSpec::new(ComplexMat::identity(2), vec![]).unwrap();
        let a = spec.spec_at(0.0).unwrap();
        let b = spec.spec_at(17.3).unwrap();
        assert_eq!(*a, *b);
        assert!(std::ptr::eq(a.as_ref(), &spec));
    }

    #[test]
    fn linear_ramp() {
        let a1 = ComplexMat::from_real_diag(&[1.0, -2.0]);
        let a1c = a1.clone();
        let tds = TimeDependentSpec::new((0.0, 1.0), move |t| {
            QmeSpec::new(a1c.scale_re(t), vec![]).unwrap()
        })
        .unwrap();
        let s = tds.spec_at(0.5).unwrap();
        assert_eq!(*s.a(), a1.scale_re(0.5));
        assert!(matches!(tds.spec_at(1.0 + 1e-6), Err(Error::OutOfRange { .. })));
        assert!(matches!(tds.spec_at(-0.1), Err(Error::OutOfRange { .. })));
        assert!(tds.spec_at(1.0).is_ok());
    }

    #[test]
    fn shape_change_detected() {
        let tds = TimeDependentSpec::new((0.0, 1.0), |t| {
            let n = if t < 0.5 { 2 } else { 3 };
            QmeSpec::new(ComplexMat::zeros(n), vec![]).unwrap()
        })
        .unwrap();
        assert!(tds.spec_at(0.2).is_ok());
        assert!(matches!(tds.spec_at(0.7), Err(Error::InvalidSpec(_))));
    }

    proptest! {
        #[test]
        fn embedding_always_satisfies_constraint(seed in any::<u64>(), n in 1usize..6, m in 0usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let h = random_mat(&mut rng, n).hermitian_part();
            let ops: Vec<_> = (0..m).map(|_| random_mat(&mut rng, n)).collect();
            let spec = lindblad_embed(&h, &ops, 1.0).unwrap();
            prop_assert!(spec.validate_norm_constraint(1e-12).unwrap().residual < 1e-12);
        }

        #[test]
        fn residual_invariant_under_channel_reordering(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_mat(&mut rng, 4);
            let chans: Vec<Channel> = (0..3)
                .map(|_| Channel::new(random_mat(&mut rng, 4), random_mat(&mut rng, 4)).unwrap())
                .collect();
            let mut reversed = chans.clone();
            reversed.reverse();
            let r1 = QmeSpec::new(a.clone(), chans).unwrap().validate_norm_constraint(1e-9).unwrap().residual;
            let r2 = QmeSpec::new(a, reversed).unwrap().validate_norm_constraint(1e-9).unwrap().residual;
            prop_assert!((r1 - r2).abs() <= 1e-12 * r1.max(1.0));
        }
    }
}
