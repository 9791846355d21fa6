//! Physical models compiled into master-equation specs.
//!
//! Units: `hbar = m = 1` for the electron-transfer models, energies in units of
//! the vibrational quantum. The Brownian oscillator keeps explicit constants.

use crate::error::{Error, Result};
use crate::linalg::{c, hermitian_eigen, position_momentum, ComplexMat, ComplexVec, EigenSystem, ZERO};
use crate::qme::{Channel, QmeSpec};

fn require_positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
    }
    Ok(())
}

/// Bose occupation `1 / (exp(hbar w / kT) - 1)`.
pub fn bose_occupation(omega: f64, kt: f64, hbar: f64) -> f64 {
    if kt <= 0.0 {
        return 0.0;
    }
    1.0 / (hbar * omega / kt).exp_m1()
}

/// Unit vector on Fock level `n`.
pub fn fock_state(n_levels: usize, n: usize) -> Result<ComplexVec> {
    ComplexVec::basis(n_levels, n)
}

/// Projector onto basis state `n`.
pub fn basis_projector(dim: usize, n: usize) -> Result<ComplexMat> {
    if n >= dim {
        return Err(Error::InvalidDimension(format!("basis index {n} out of range for dimension {dim}")));
    }
    Ok(ComplexMat::from_fn(dim, |i, j| if i == n && j == n { c(1.0, 0.0) } else { ZERO }))
}

// ---------------------------------------------------------------------------
// Quantum Brownian motion
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub struct QbmParams {
    pub mass: f64,
    pub omega: f64,
    pub gamma: f64,
    pub kt: f64,
    pub hbar: f64,
    pub n_levels: usize,
}

impl Default for QbmParams {
    fn default() -> Self {
        Self { mass: 1.0, omega: 1.0, gamma: 1e-3, kt: 4.5, hbar: 1.0, n_levels: 12 }
    }
}

impl QbmParams {
    pub fn validate(&self) -> Result<()> {
        require_positive("mass", self.mass)?;
        require_positive("omega", self.omega)?;
        require_positive("kT", self.kt)?;
        require_positive("hbar", self.hbar)?;
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(Error::InvalidParameter(format!("gamma must be non-negative, got {}", self.gamma)));
        }
        if self.n_levels < 3 {
            return Err(Error::InvalidDimension(format!("need at least 3 Fock levels, got {}", self.n_levels)));
        }
        Ok(())
    }

    /// Non-fatal concerns about the parameter regime.
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.kt < 2.0 * self.hbar * self.omega {
            w.push(format!(
                "kT = {} is not large against hbar*omega/2 = {}; the high-temperature equation is questionable",
                self.kt,
                0.5 * self.hbar * self.omega
            ));
        }
        w
    }

    /// `H_S = hbar omega (n + 1/2)` in the Fock basis.
    pub fn hamiltonian(&self) -> ComplexMat {
        let diag: Vec<f64> =
            (0..self.n_levels).map(|n| self.hbar * self.omega * (n as f64 + 0.5)).collect();
        ComplexMat::from_real_diag(&diag)
    }

    pub fn position_momentum(&self) -> Result<(ComplexMat, ComplexMat)> {
        position_momentum(self.n_levels, self.mass, self.omega, self.hbar)
    }
}

/// Two channels: friction `(C_1, E_1) ~ (i p, q)` and diffusion `C_2 = E_2 ~ q`,
/// reproducing `-i/hbar [H, rho] - i gamma/(2 hbar) [q, {p, rho}] - m gamma kT/hbar^2 [q, [q, rho]]`.
/// Truncation breaks `[q, p] = i hbar` on the top level, which spoils the state
/// independence of the friction rates there; the top two Fock levels are left
/// out of the norm-constraint check.
pub fn build_qbm(params: &QbmParams) -> Result<QmeSpec> {
    params.validate()?;
    let QbmParams { mass, gamma, kt, hbar, n_levels, .. } = *params;
    let (q, p) = params.position_momentum()?;
    let friction = (gamma / (2.0 * hbar)).sqrt();
    let diffusion = mass * gamma * kt / (hbar * hbar);

    let e1 = q.scale_re(friction);
    let c1 = p.scale(c(0.0, friction));
    let e2 = q.scale_re(diffusion.sqrt());
    let qp = q.matmul(&p);
    let qq = q.matmul(&q);

    let mut a = params.hamiltonian().scale(c(0.0, -1.0 / hbar));
    a.axpy(c(0.0, -gamma / (2.0 * hbar)), &qp);
    a.axpy(c(-diffusion, 0.0), &qq);

    QmeSpec::new(a, vec![Channel::new(c1, e1)?, Channel::new(e2.clone(), e2)?])?
        .with_constraint_mask(0..n_levels - 2)
}

// ---------------------------------------------------------------------------
// Electron transfer
// ---------------------------------------------------------------------------

/// Ohmic bath with exponential cutoff, `J(w) = eta w exp(-w / w_c)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BathSpectralDensity {
    pub eta: f64,
    pub omega_c: f64,
}

impl BathSpectralDensity {
    /// Fixes `eta` so that the one-phonon decay `|1> -> |0>` of an oscillator of
    /// frequency `omega` coupled through `q` (unit mass, `hbar = 1`) proceeds at
    /// `gamma (n(omega) + 1)`.
    pub fn from_damping_rate(gamma: f64, omega: f64, omega_c: f64) -> Self {
        // rate = 2 |q_01|^2 J(omega) (n + 1) with 2 |q_01|^2 = 1 / omega
        Self { eta: gamma * (omega / omega_c).exp(), omega_c }
    }

    pub fn j(&self, omega: f64) -> f64 {
        if omega <= 0.0 {
            return 0.0;
        }
        self.eta * omega * (-omega / self.omega_c).exp()
    }

    /// One-sided correlation spectrum: `J(w)(n(w) + 1)` for `w > 0`,
    /// `J(|w|) n(|w|)` for `w < 0`, and `eta kT / hbar` at `w = 0`.
    /// Positive frequencies release energy into the bath.
    pub fn correlation_spectrum(&self, omega: f64, kt: f64, hbar: f64) -> f64 {
        if omega == 0.0 {
            return self.eta * kt / hbar;
        }
        let w = omega.abs();
        let n = bose_occupation(w, kt, hbar);
        if omega > 0.0 {
            self.j(w) * (n + 1.0)
        } else {
            self.j(w) * n
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RedfieldEtParams {
    pub omega: f64,
    /// Acceptor minimum lies `delta_e` below the donor minimum.
    pub delta_e: f64,
    pub lambda_reorg: f64,
    pub v12: f64,
    pub omega_c: f64,
    pub kt: f64,
    /// Damping rate of the one-phonon transition.
    pub gamma: f64,
    pub n_vib: usize,
    /// Initial packet energy above the diabatic crossing, in units of `omega`.
    pub packet_offset: f64,
}

impl Default for RedfieldEtParams {
    fn default() -> Self {
        Self {
            omega: 1.0,
            delta_e: 2.0,
            lambda_reorg: 3.0,
            v12: 1.0,
            omega_c: 1.0,
            kt: 0.25,
            gamma: 0.1,
            n_vib: 10,
            packet_offset: 0.5,
        }
    }
}

/// Pieces of the electron-transfer system shared by the Redfield and Lindblad variants.
#[derive(Clone, Debug)]
pub struct EtSystem {
    pub hamiltonian: ComplexMat,
    /// Reaction coordinate `q`, identical on both electronic states.
    pub coupling: ComplexMat,
    /// Projector on the donor state `|1>`.
    pub donor_projector: ComplexMat,
    pub acceptor_projector: ComplexMat,
    pub eigen: EigenSystem,
}

impl RedfieldEtParams {
    pub fn validate(&self) -> Result<()> {
        require_positive("omega", self.omega)?;
        require_positive("lambda", self.lambda_reorg)?;
        require_positive("omega_c", self.omega_c)?;
        require_positive("kT", self.kt)?;
        for (name, v) in [("delta_E", self.delta_e), ("v12", self.v12), ("Gamma", self.gamma), ("packet_offset", self.packet_offset)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be non-negative, got {v}")));
            }
        }
        if self.n_vib < 2 {
            return Err(Error::InvalidDimension(format!("need at least 2 vibrational levels, got {}", self.n_vib)));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        2 * self.n_vib
    }

    /// Horizontal displacement of the acceptor parabola.
    pub fn displacement(&self) -> f64 {
        (2.0 * self.lambda_reorg / (self.omega * self.omega)).sqrt()
    }

    /// Energy at which the two diabatic parabolas intersect, relative to the donor minimum.
    pub fn crossing_energy(&self) -> f64 {
        let dq = self.displacement();
        let w2 = self.omega * self.omega;
        let q_cross = (self.lambda_reorg - self.delta_e) / (w2 * dq);
        0.5 * w2 * q_cross * q_cross
    }

    /// Position of the crossing.
    pub fn crossing_position(&self) -> f64 {
        (self.lambda_reorg - self.delta_e) / (self.omega * self.omega * self.displacement())
    }

    /// Electronic index 0 (donor) or 1 (acceptor), vibrational level `n`.
    pub fn index(&self, electronic: usize, n: usize) -> usize {
        electronic * self.n_vib + n
    }

    pub fn system(&self) -> Result<EtSystem> {
        self.validate()?;
        let nv = self.n_vib;
        let dim = self.dim();
        let (q, _) = position_momentum(nv, 1.0, self.omega, 1.0)?;
        let w2 = self.omega * self.omega;
        let dq = self.displacement();
        let h1: Vec<f64> = (0..nv).map(|n| self.omega * (n as f64 + 0.5)).collect();
        // H_2 = H_1 - w^2 dq q + lambda - delta_E, expanded in the donor Fock basis
        let shift = self.lambda_reorg - self.delta_e;
        let h = ComplexMat::from_fn(dim, |i, j| {
            let (ei, ni) = (i / nv, i % nv);
            let (ej, nj) = (j / nv, j % nv);
            match (ei, ej) {
                (0, 0) => if ni == nj { c(h1[ni], 0.0) } else { ZERO },
                (1, 1) => {
                    let diag = if ni == nj { h1[ni] + shift } else { 0.0 };
                    c(diag, 0.0) - q[(ni, nj)] * (w2 * dq)
                }
                _ => if ni == nj { c(self.v12, 0.0) } else { ZERO },
            }
        });
        let coupling = ComplexMat::from_fn(dim, |i, j| if i / nv == j / nv { q[(i % nv, j % nv)] } else { ZERO });
        let donor_projector = ComplexMat::from_fn(dim, |i, j| if i == j && i < nv { c(1.0, 0.0) } else { ZERO });
        let acceptor_projector = ComplexMat::from_fn(dim, |i, j| if i == j && i >= nv { c(1.0, 0.0) } else { ZERO });
        let eigen = hermitian_eigen(&h, 1e-10)?;
        Ok(EtSystem { hamiltonian: h, coupling, donor_projector, acceptor_projector, eigen })
    }

    pub fn bath(&self) -> BathSpectralDensity {
        BathSpectralDensity::from_damping_rate(self.gamma, self.omega, self.omega_c)
    }
}

/// Relaxation operator `Lambda_{mu nu} = K_{mu nu} C(omega_{nu mu})` in the eigenbasis of `H_S`,
/// where `omega_{nu mu} = e_nu - e_mu`; the entry driving `nu -> mu` carries the
/// emission side of the spectrum when that transition goes downhill.
pub fn relaxation_operator(params: &RedfieldEtParams, sys: &EtSystem) -> ComplexMat {
    let bath = params.bath();
    let k_eig = sys.eigen.to_eigenbasis(&sys.coupling);
    let e = &sys.eigen.values;
    let lambda_eig = ComplexMat::from_fn(k_eig.dim(), |mu, nu| {
        k_eig[(mu, nu)] * bath.correlation_spectrum(e[nu] - e[mu], params.kt, 1.0)
    });
    sys.eigen.from_eigenbasis(&lambda_eig)
}

/// One channel with `C_1 = K`, `E_1 = Lambda` and `A = -i H_S - K Lambda`.
pub fn build_redfield_et(params: &RedfieldEtParams) -> Result<QmeSpec> {
    let sys = params.system()?;
    let lambda = relaxation_operator(params, &sys);
    let mut a = sys.hamiltonian.scale(c(0.0, -1.0));
    a -= &sys.coupling.matmul(&lambda);
    QmeSpec::new(a, vec![Channel::new(sys.coupling, lambda)?])
}

/// Thermal damped-oscillator rates `(Gamma (n + 1), Gamma n)` of the diabatic-damping model.
pub fn diabatic_damping_rates(params: &RedfieldEtParams) -> (f64, f64) {
    let n = bose_occupation(params.omega, params.kt, 1.0);
    (params.gamma * (n + 1.0), params.gamma * n)
}

/// Hamiltonian and Lindblad operators of the diabatic-damping model: each
/// diabatic surface relaxes as a thermal damped oscillator around its own minimum.
pub fn build_lindblad_dd(params: &RedfieldEtParams) -> Result<(ComplexMat, Vec<ComplexMat>)> {
    let sys = params.system()?;
    let nv = params.n_vib;
    let dim = params.dim();
    let (a, _) = crate::linalg::ladder_ops(nv)?;
    // acceptor oscillator centred at dq: b = a - dq sqrt(omega / 2)
    let alpha = params.displacement() * (params.omega / 2.0).sqrt();
    let (down, up) = diabatic_damping_rates(params);
    let mut ops = Vec::new();
    for surface in 0..2 {
        let offset = if surface == 0 { 0.0 } else { alpha };
        let lower = ComplexMat::from_fn(dim, |i, j| {
            if i / nv != surface || j / nv != surface {
                return ZERO;
            }
            let (ni, nj) = (i % nv, j % nv);
            a[(ni, nj)] - if ni == nj { c(offset, 0.0) } else { ZERO }
        });
        if down > 0.0 {
            ops.push(lower.scale_re(down.sqrt()));
        }
        if up > 0.0 {
            ops.push(lower.adjoint().scale_re(up.sqrt()));
        }
    }
    Ok((sys.hamiltonian, ops))
}

/// Coherent state of the donor oscillator whose mean energy sits
/// `packet_offset * omega` above the diabatic crossing, on electronic state `|1>`.
pub fn donor_wavepacket(params: &RedfieldEtParams) -> Result<ComplexVec> {
    params.validate()?;
    let target = params.crossing_energy() + params.packet_offset * params.omega;
    let alpha_sq = target / params.omega - 0.5;
    if alpha_sq < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "packet energy {target} lies below the donor zero-point energy"
        )));
    }
    let alpha = alpha_sq.sqrt() * params.crossing_position().signum();
    let nv = params.n_vib;
    let mut amps = vec![ZERO; params.dim()];
    let mut coef = (-0.5 * alpha_sq).exp();
    let mut kept = 0.0;
    for (n, amp) in amps.iter_mut().enumerate().take(nv) {
        if n > 0 {
            coef *= alpha / (n as f64).sqrt();
        }
        *amp = c(coef, 0.0);
        kept += coef * coef;
    }
    if 1.0 - kept > 1e-3 {
        return Err(Error::Truncation(format!(
            "{:.2e} of the wave packet lies beyond {nv} vibrational levels; enlarge n_vib",
            1.0 - kept
        )));
    }
    ComplexVec::from_vec(amps)?.normalized()
}
