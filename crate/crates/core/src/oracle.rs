//! Deterministic density-matrix integration of the master equation.
//!
//! This is the reference every stochastic result is checked against: a
//! fixed-step classical RK4 on `rho`, with an optional step-halving run to
//! estimate the discretization error.

use crate::error::{Error, Result};
use crate::linalg::{c, hermitian_eigen, ComplexMat, ComplexVec};
use crate::qme::{QmeSpec, SpecSource};
use crate::time_grid::segment_steps;

const BLOWUP_MAGNITUDE: f64 = 1e6;

#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix(ComplexMat);

impl DensityMatrix {
    pub fn new(m: ComplexMat) -> Self {
        Self(m)
    }

    /// `|chi><chi|`
    pub fn pure(chi: &ComplexVec) -> Self {
        Self(chi.outer(chi))
    }

    pub fn matrix(&self) -> &ComplexMat {
        &self.0
    }

    pub fn into_matrix(self) -> ComplexMat {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn trace(&self) -> f64 {
        self.0.trace().re
    }

    pub fn population(&self, i: usize) -> f64 {
        self.0[(i, i)].re
    }

    /// `Tr(O rho)`, real part.
    pub fn expectation(&self, op: &ComplexMat) -> f64 {
        op.matmul(&self.0).trace().re
    }
}

/// `A rho + rho A^dagger + sum_k (C_k rho E_k^dagger + E_k rho C_k^dagger)`
pub fn generator_apply(spec: &QmeSpec, rho: &ComplexMat) -> Result<ComplexMat> {
    if rho.dim() != spec.dim() {
        return Err(Error::InvalidDimension(format!(
            "density matrix of dimension {} for a {}-dimensional spec",
            rho.dim(),
            spec.dim()
        )));
    }
    let a_rho = spec.a().matmul(rho);
    let mut out = &a_rho + &a_rho.adjoint();
    for ch in spec.channels() {
        let term = ch.c.matmul(rho).matmul(&ch.e.adjoint());
        let swapped = ch.e.matmul(rho).matmul(&ch.c.adjoint());
        out += &term;
        out += &swapped;
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct OracleRun {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
    /// Max entrywise difference to a run at half the step, when requested.
    pub step_error: Option<f64>,
}

#[derive(Clone, Copy, Debug)]
pub struct IntegrateOptions {
    pub dt: f64,
    pub estimate_error: bool,
}

impl IntegrateOptions {
    pub fn new(dt: f64) -> Self {
        Self { dt, estimate_error: false }
    }
}

pub fn integrate<S: SpecSource + ?Sized>(
    source: &S,
    rho0: &DensityMatrix,
    t_grid: &[f64],
    options: IntegrateOptions,
) -> Result<OracleRun> {
    let residual = rho0.matrix().hermiticity_residual();
    if residual > 1e-10 {
        return Err(Error::HermiticityViolation { residual, tol: 1e-10 });
    }
    if (rho0.trace() - 1.0).abs() > 1e-8 {
        return Err(Error::InvalidParameter(format!("initial trace {} is not 1", rho0.trace())));
    }
    let states = integrate_raw(source, rho0.matrix(), t_grid, options.dt)?;
    let step_error = if options.estimate_error {
        let fine = integrate_raw(source, rho0.matrix(), t_grid, options.dt / 2.0)?;
        Some(
            states
                .iter()
                .zip(&fine)
                .map(|(a, b)| (a - b).max_abs())
                .fold(0.0, f64::max),
        )
    } else {
        None
    };
    Ok(OracleRun {
        times: t_grid.to_vec(),
        states: states.into_iter().map(DensityMatrix).collect(),
        step_error,
    })
}

fn integrate_raw<S: SpecSource + ?Sized>(
    source: &S,
    rho0: &ComplexMat,
    t_grid: &[f64],
    dt: f64,
) -> Result<Vec<ComplexMat>> {
    if rho0.dim() != source.dim() {
        return Err(Error::InvalidDimension(format!(
            "initial state of dimension {} for a {}-dimensional spec",
            rho0.dim(),
            source.dim()
        )));
    }
    let segments = segment_steps(t_grid, dt)?;
    let mut rho = rho0.clone();
    let mut t = 0.0;
    let mut out = Vec::with_capacity(t_grid.len());
    for (seg, &t_target) in segments.iter().zip(t_grid) {
        for _ in 0..seg.n_steps {
            rho = rk4_step(source, &rho, t, seg.h)?;
            t += seg.h;
            let magnitude = rho.max_abs();
            if !(magnitude < BLOWUP_MAGNITUDE) {
                return Err(Error::Blowup { t, magnitude });
            }
        }
        t = t_target;
        out.push(rho.clone());
    }
    Ok(out)
}

fn rk4_step<S: SpecSource + ?Sized>(source: &S, rho: &ComplexMat, t: f64, h: f64) -> Result<ComplexMat> {
    let half = c(h / 2.0, 0.0);
    let spec0 = source.spec_at(t)?;
    let k1 = generator_apply(&spec0, rho)?;
    let (k2, k3) = {
        let spec_mid = if source.is_static() { spec0.clone() } else { source.spec_at(t + h / 2.0)? };
        let mut y = rho.clone();
        y.axpy(half, &k1);
        let k2 = generator_apply(&spec_mid, &y)?;
        let mut y = rho.clone();
        y.axpy(half, &k2);
        let k3 = generator_apply(&spec_mid, &y)?;
        (k2, k3)
    };
    let spec1 = if source.is_static() { spec0 } else { source.spec_at(t + h)? };
    let mut y = rho.clone();
    y.axpy(c(h, 0.0), &k3);
    let k4 = generator_apply(&spec1, &y)?;
    let mut next = rho.clone();
    next.axpy(c(h / 6.0, 0.0), &k1);
    next.axpy(c(h / 3.0, 0.0), &k2);
    next.axpy(c(h / 3.0, 0.0), &k3);
    next.axpy(c(h / 6.0, 0.0), &k4);
    // rounding would otherwise let an anti-Hermitian part build up over long runs
    Ok(next.hermitian_part())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PositivityEntry {
    pub min_eigenvalue: f64,
    pub trace_deviation: f64,
}

/// Smallest eigenvalue and `Tr rho - 1` of each state.
pub fn positivity_report(rhos: &[DensityMatrix]) -> Result<Vec<PositivityEntry>> {
    rhos.iter()
        .map(|rho| {
            let eig = hermitian_eigen(rho.matrix(), 1e-8)?;
            Ok(PositivityEntry { min_eigenvalue: eig.values[0], trace_deviation: rho.trace() - 1.0 })
        })
        .collect()
}

/// `(1/200) * 2 pi / omega_max`, with `omega_max` the largest level spacing of `h`.
pub fn default_dt(h: &ComplexMat, hbar: f64) -> Result<f64> {
    let eig = hermitian_eigen(h, 1e-8 * h.max_abs().max(1.0))?;
    let spread = eig.values[eig.values.len() - 1] - eig.values[0];
    if spread <= 0.0 {
        return Err(Error::InvalidParameter("Hamiltonian has no level spacing to set dt".into()));
    }
    Ok(std::f64::consts::TAU / (spread / hbar) / 200.0)
}
