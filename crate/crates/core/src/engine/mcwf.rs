//! Standard normalized quantum jump method for Lindblad equations (hbar = 1).

use rand::Rng;

use super::propagate::{check_observables, trajectory_rng, PropagationConfig, TrajectoryRecord};
use crate::error::{Error, Result};
use crate::linalg::{c, inner, Complex64, ComplexMat, ComplexVec, ZERO};
use crate::time_grid::segment_steps;

/// Effective non-Hermitian Hamiltonian and jump operators, prepared once.
#[derive(Clone, Debug)]
pub struct McwfSystem {
    /// `-i H - 1/2 sum_k L_k^dagger L_k`
    generator: ComplexMat,
    ops: Vec<ComplexMat>,
}

impl McwfSystem {
    pub fn new(h: &ComplexMat, lindblad_ops: &[ComplexMat]) -> Result<Self> {
        let residual = h.hermiticity_residual();
        let tol = 1e-10 * h.max_abs().max(1.0);
        if residual > tol {
            return Err(Error::HermiticityViolation { residual, tol });
        }
        let mut generator = h.scale(c(0.0, -1.0));
        for l in lindblad_ops {
            if l.dim() != h.dim() {
                return Err(Error::InvalidDimension("Lindblad operator dimension mismatch".into()));
            }
            generator.axpy(c(-0.5, 0.0), &l.adjoint().matmul(l));
        }
        Ok(Self { generator, ops: lindblad_ops.to_vec() })
    }

    pub fn dim(&self) -> usize {
        self.generator.dim()
    }

    pub fn run(&self, chi: &ComplexVec, config: &PropagationConfig, observables: &[ComplexMat]) -> Result<TrajectoryRecord> {
        let dim = self.dim();
        if chi.dim() != dim {
            return Err(Error::InvalidDimension(format!("initial state of dimension {} for {dim}", chi.dim())));
        }
        let norm = chi.norm_sqr();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!("initial state has norm^2 {norm}, expected 1")));
        }
        check_observables(dim, observables)?;
        let segments = segment_steps(&config.t_grid, config.dt)?;
        let mut rng = trajectory_rng(config.rng_seed, 0);

        let mut psi: Vec<Complex64> = chi.to_vec();
        let mut ws = Rk4Linear::new(dim);
        let mut tmp = vec![ZERO; dim];
        let mut jumps = vec![[0u32, 0u32]; self.ops.len()];
        let mut weights_k = vec![0.0; self.ops.len()];

        let n_grid = config.t_grid.len();
        let mut rec = TrajectoryRecord {
            times: config.t_grid.clone(),
            observables: Vec::with_capacity(n_grid),
            traces: Vec::with_capacity(n_grid),
            weights: Vec::with_capacity(n_grid),
            rho: config.record_rho.then(|| Vec::with_capacity(n_grid)),
            jumps: Vec::new(),
            final_weight: 1.0,
            weight_flips: 0,
            restarts: 0,
            max_norm_drift: 0.0,
            max_hermiticity_defect: 0.0,
            refined_steps: 0,
            splits: 0,
            warnings: Vec::new(),
        };

        for (seg, _) in segments.iter().zip(&config.t_grid) {
            for _ in 0..seg.n_steps {
                ws.step(&self.generator, &mut psi, seg.h);
                let n2: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
                let dp = 1.0 - n2;
                if dp > config.max_total_rate_dt {
                    return Err(Error::StepSize { value: dp, limit: config.max_total_rate_dt });
                }
                let u1: f64 = rng.gen();
                let mut jumped = false;
                if u1 < dp {
                    for (k, l) in self.ops.iter().enumerate() {
                        l.mul_vec_into(&psi, &mut tmp);
                        weights_k[k] = tmp.iter().map(|z| z.norm_sqr()).sum();
                    }
                    let total: f64 = weights_k.iter().sum();
                    if total > 0.0 {
                        let target = rng.gen::<f64>() * total;
                        let mut cum = 0.0;
                        let mut pick = weights_k.iter().rposition(|&w| w > 0.0).unwrap_or(0);
                        for (k, w) in weights_k.iter().enumerate() {
                            cum += w;
                            if cum > target && *w > 0.0 {
                                pick = k;
                                break;
                            }
                        }
                        self.ops[pick].mul_vec_into(&psi, &mut tmp);
                        let s = 1.0 / weights_k[pick].sqrt();
                        for (p, t) in psi.iter_mut().zip(&tmp) {
                            *p = t * s;
                        }
                        jumps[pick][0] += 1;
                        jumped = true;
                    }
                }
                if !jumped {
                    let s = 1.0 / n2.sqrt();
                    psi.iter_mut().for_each(|z| *z *= s);
                }
            }
            rec.traces.push(psi.iter().map(|z| z.norm_sqr()).sum());
            rec.weights.push(1.0);
            let mut values = Vec::with_capacity(observables.len());
            for op in observables {
                op.mul_vec_into(&psi, &mut tmp);
                values.push(inner(&psi, &tmp).re);
            }
            rec.observables.push(values);
            if let Some(snaps) = rec.rho.as_mut() {
                let m = ComplexMat::from_fn(dim, |i, j| psi[i] * psi[j].conj());
                rec.max_hermiticity_defect = rec.max_hermiticity_defect.max(m.hermiticity_residual());
                snaps.push(m);
            }
        }
        rec.jumps = jumps;
        Ok(rec)
    }
}

struct Rk4Linear {
    y0: Vec<Complex64>,
    stage: Vec<Complex64>,
    k: Vec<Complex64>,
    acc: Vec<Complex64>,
}

impl Rk4Linear {
    fn new(dim: usize) -> Self {
        Self { y0: vec![ZERO; dim], stage: vec![ZERO; dim], k: vec![ZERO; dim], acc: vec![ZERO; dim] }
    }

    fn step(&mut self, g: &ComplexMat, y: &mut [Complex64], h: f64) {
        self.y0.copy_from_slice(y);
        g.mul_vec_into(&self.y0, &mut self.acc);
        let mut prev_is_acc = true;
        for (coef, w) in [(0.5 * h, 2.0), (0.5 * h, 2.0), (h, 1.0)] {
            let prev = if prev_is_acc { &self.acc } else { &self.k };
            for i in 0..y.len() {
                self.stage[i] = self.y0[i] + prev[i] * coef;
            }
            g.mul_vec_into(&self.stage, &mut self.k);
            for i in 0..y.len() {
                self.acc[i] += self.k[i] * w;
            }
            prev_is_acc = false;
        }
        let sixth = h / 6.0;
        for i in 0..y.len() {
            y[i] = self.y0[i] + self.acc[i] * sixth;
        }
    }
}

/// One normalized quantum-jump trajectory of the Lindblad equation with
/// Hamiltonian `h` and jump operators `lindblad_ops`.
pub fn mcwf_standard(
    h: &ComplexMat,
    lindblad_ops: &[ComplexMat],
    chi: &ComplexVec,
    config: &PropagationConfig,
    observables: &[ComplexMat],
) -> Result<TrajectoryRecord> {
    McwfSystem::new(h, lindblad_ops)?.run(chi, config, observables)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::ladder_ops;
    use crate::time_grid::uniform_grid;

    #[test]
    fn trajectories_are_normalized_and_bounded() {
        let (sm, _) = ladder_ops(2).unwrap();
        let h = ComplexMat::from_real_diag(&[0.0, 1.0]);
        let chi = ComplexVec::from_vec(vec![c(0.6, 0.0), c(0.0, 0.8)]).unwrap();
        let mut cfg = PropagationConfig::new(0.01, uniform_grid(2.0, 5));
        cfg.record_rho = true;
        let obs = ComplexMat::from_real_diag(&[0.0, 1.0]);
        let system = McwfSystem::new(&h, &[sm]).unwrap();
        for seed in 0..20 {
            cfg.rng_seed = seed;
            let rec = system.run(&chi, &cfg, &[obs.clone()]).unwrap();
            for (g, tr) in rec.traces.iter().enumerate() {
                assert!((tr - 1.0).abs() < 1e-12);
                assert!((0.0..=1.0).contains(&rec.observables[g][0]));
            }
            assert_eq!(rec, system.run(&chi, &cfg, &[obs.clone()]).unwrap());
        }
    }

    #[test]
    fn excited_state_decays_by_jump() {
        let (sm, _) = ladder_ops(2).unwrap();
        let chi = ComplexVec::basis(2, 1).unwrap();
        let cfg = PropagationConfig { rng_seed: 3, ..PropagationConfig::new(0.01, vec![0.0, 20.0]) };
        let obs = ComplexMat::from_real_diag(&[0.0, 1.0]);
        let rec = mcwf_standard(&ComplexMat::zeros(2), &[sm], &chi, &cfg, &[obs]).unwrap();
        assert_eq!(rec.observables[0][0], 1.0);
        assert!(rec.observables[1][0] < 1e-12);
        assert_eq!(rec.total_jumps(), 1);
    }

    #[test]
    fn rejects_bad_input() {
        let (sm, _) = ladder_ops(2).unwrap();
        let non_hermitian = sm.clone();
        assert!(McwfSystem::new(&non_hermitian, &[sm.clone()]).is_err());
        assert!(McwfSystem::new(&ComplexMat::zeros(3), &[sm.clone()]).is_err());
        let system = McwfSystem::new(&ComplexMat::zeros(2), &[sm]).unwrap();
        let cfg = PropagationConfig::new(0.01, vec![0.0, 1.0]);
        assert!(system.run(&ComplexVec::basis(3, 0).unwrap(), &cfg, &[]).is_err());
        let unnormalized = ComplexVec::from_vec(vec![c(1.0, 0.0), c(1.0, 0.0)]).unwrap();
        assert!(system.run(&unnormalized, &cfg, &[]).is_err());
    }
}
