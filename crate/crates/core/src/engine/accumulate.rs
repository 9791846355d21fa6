use super::propagate::TrajectoryRecord;
use crate::error::{Error, Result};
use crate::linalg::{c, ComplexMat};

/// Running sums over trajectories, per output time.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleAccumulator {
    dim: usize,
    times: Vec<f64>,
    n_obs: usize,
    n_traj: u64,
    sum_obs: Vec<Vec<f64>>,
    sum_obs_sq: Vec<Vec<f64>>,
    sum_trace: Vec<f64>,
    sum_trace_sq: Vec<f64>,
    sum_rho: Option<Vec<ComplexMat>>,
    /// Entrywise sums of `(Re rho_ij)^2` and `(Im rho_ij)^2`, row-major.
    sum_rho_sq: Option<Vec<(Vec<f64>, Vec<f64>)>>,
    pub negative_weight_count: u64,
    pub total_jumps: u64,
    pub restarts: u64,
    pub warnings: u64,
    pub max_norm_drift: f64,
    pub max_hermiticity_defect: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeanStderr {
    pub mean: f64,
    /// NaN for a single trajectory.
    pub stderr: f64,
}

#[derive(Clone, Debug)]
pub struct RdmEstimate {
    pub rho: ComplexMat,
    /// Row-major standard errors of the real and imaginary parts.
    pub stderr_re: Vec<f64>,
    pub stderr_im: Vec<f64>,
    pub trace: f64,
    pub trace_deviation: f64,
}

fn mean_stderr(sum: f64, sum_sq: f64, n: u64) -> MeanStderr {
    let nf = n as f64;
    let mean = sum / nf;
    let stderr = if n < 2 {
        f64::NAN
    } else {
        let var = ((sum_sq - nf * mean * mean) / (nf - 1.0)).max(0.0);
        (var / nf).sqrt()
    };
    MeanStderr { mean, stderr }
}

impl EnsembleAccumulator {
    pub fn new(dim: usize, times: Vec<f64>, n_obs: usize, with_rho: bool) -> Self {
        let n_grid = times.len();
        Self {
            dim,
            n_obs,
            n_traj: 0,
            sum_obs: vec![vec![0.0; n_obs]; n_grid],
            sum_obs_sq: vec![vec![0.0; n_obs]; n_grid],
            sum_trace: vec![0.0; n_grid],
            sum_trace_sq: vec![0.0; n_grid],
            sum_rho: with_rho.then(|| vec![ComplexMat::zeros(dim); n_grid]),
            sum_rho_sq: with_rho.then(|| vec![(vec![0.0; dim * dim], vec![0.0; dim * dim]); n_grid]),
            times,
            negative_weight_count: 0,
            total_jumps: 0,
            restarts: 0,
            warnings: 0,
            max_norm_drift: 0.0,
            max_hermiticity_defect: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn n_traj(&self) -> u64 {
        self.n_traj
    }

    pub fn n_obs(&self) -> usize {
        self.n_obs
    }

    pub fn tracks_rho(&self) -> bool {
        self.sum_rho.is_some()
    }

    pub fn accumulate(&mut self, rec: &TrajectoryRecord) -> Result<()> {
        let n_grid = self.times.len();
        if rec.observables.len() != n_grid
            || rec.traces.len() != n_grid
            || rec.observables.iter().any(|o| o.len() != self.n_obs)
        {
            return Err(Error::InvalidDimension(format!(
                "record with {} times / {} observables does not fit accumulator ({n_grid} / {})",
                rec.observables.len(),
                rec.observables.first().map_or(0, Vec::len),
                self.n_obs
            )));
        }
        if let Some(sum_rho) = self.sum_rho.as_mut() {
            let snaps = rec
                .rho
                .as_ref()
                .ok_or_else(|| Error::InvalidDimension("record carries no density snapshots".into()))?;
            if snaps.len() != n_grid || snaps.iter().any(|m| m.dim() != self.dim) {
                return Err(Error::InvalidDimension("density snapshots do not fit accumulator".into()));
            }
            let sum_sq = self.sum_rho_sq.as_mut().expect("paired with sum_rho");
            for ((acc, (sq_re, sq_im)), m) in sum_rho.iter_mut().zip(sum_sq.iter_mut()).zip(snaps) {
                *acc += m;
                for (k, z) in m.as_slice().iter().enumerate() {
                    sq_re[k] += z.re * z.re;
                    sq_im[k] += z.im * z.im;
                }
            }
        }
        for g in 0..n_grid {
            for (o, v) in rec.observables[g].iter().enumerate() {
                self.sum_obs[g][o] += v;
                self.sum_obs_sq[g][o] += v * v;
            }
            self.sum_trace[g] += rec.traces[g];
            self.sum_trace_sq[g] += rec.traces[g] * rec.traces[g];
        }
        self.n_traj += 1;
        if rec.ever_negative() {
            self.negative_weight_count += 1;
        }
        self.total_jumps += rec.total_jumps();
        self.restarts += u64::from(rec.restarts);
        self.warnings += rec.warnings.len() as u64;
        self.max_norm_drift = self.max_norm_drift.max(rec.max_norm_drift);
        self.max_hermiticity_defect = self.max_hermiticity_defect.max(rec.max_hermiticity_defect);
        Ok(())
    }

    /// Adds another accumulator's sums; order of merging only affects rounding.
    pub fn merge(&mut self, other: &EnsembleAccumulator) -> Result<()> {
        if self.dim != other.dim
            || self.times != other.times
            || self.n_obs != other.n_obs
            || self.tracks_rho() != other.tracks_rho()
        {
            return Err(Error::InvalidDimension("cannot merge accumulators of different shape".into()));
        }
        let add = |a: &mut Vec<f64>, b: &Vec<f64>| a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        for (a, b) in self.sum_obs.iter_mut().zip(&other.sum_obs) {
            add(a, b);
        }
        for (a, b) in self.sum_obs_sq.iter_mut().zip(&other.sum_obs_sq) {
            add(a, b);
        }
        add(&mut self.sum_trace, &other.sum_trace);
        add(&mut self.sum_trace_sq, &other.sum_trace_sq);
        if let (Some(a), Some(b)) = (self.sum_rho.as_mut(), other.sum_rho.as_ref()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        if let (Some(a), Some(b)) = (self.sum_rho_sq.as_mut(), other.sum_rho_sq.as_ref()) {
            for ((ar, ai), (br, bi)) in a.iter_mut().zip(b) {
                add(ar, br);
                add(ai, bi);
            }
        }
        self.n_traj += other.n_traj;
        self.negative_weight_count += other.negative_weight_count;
        self.total_jumps += other.total_jumps;
        self.restarts += other.restarts;
        self.warnings += other.warnings;
        self.max_norm_drift = self.max_norm_drift.max(other.max_norm_drift);
        self.max_hermiticity_defect = self.max_hermiticity_defect.max(other.max_hermiticity_defect);
        Ok(())
    }

    pub fn observable(&self, grid_index: usize, obs_index: usize) -> Result<MeanStderr> {
        if self.n_traj == 0 {
            return Err(Error::EmptyEnsemble);
        }
        Ok(mean_stderr(
            self.sum_obs[grid_index][obs_index],
            self.sum_obs_sq[grid_index][obs_index],
            self.n_traj,
        ))
    }

    /// Ensemble mean of `w * tau`, the trace of the reconstructed density matrix.
    pub fn trace(&self, grid_index: usize) -> Result<MeanStderr> {
        if self.n_traj == 0 {
            return Err(Error::EmptyEnsemble);
        }
        Ok(mean_stderr(self.sum_trace[grid_index], self.sum_trace_sq[grid_index], self.n_traj))
    }
}

/// `rho = (1/N) sum_n w_n (|psi_n><phi_n| + |phi_n><psi_n|)` at output time `grid_index`.
pub fn reconstruct_rdm(acc: &EnsembleAccumulator, grid_index: usize) -> Result<RdmEstimate> {
    if acc.n_traj == 0 {
        return Err(Error::EmptyEnsemble);
    }
    let (sums, sums_sq) = match (acc.sum_rho.as_ref(), acc.sum_rho_sq.as_ref()) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::InvalidParameter("accumulator does not track density matrices".into())),
    };
    let sum = sums
        .get(grid_index)
        .ok_or_else(|| Error::InvalidParameter(format!("grid index {grid_index} out of range")))?;
    let (sq_re, sq_im) = &sums_sq[grid_index];
    let n = acc.n_traj;
    let rho = sum.scale(c(1.0 / n as f64, 0.0));
    let stderr_re = sum
        .as_slice()
        .iter()
        .zip(sq_re)
        .map(|(z, s)| mean_stderr(z.re, *s, n).stderr)
        .collect();
    let stderr_im = sum
        .as_slice()
        .iter()
        .zip(sq_im)
        .map(|(z, s)| mean_stderr(z.im, *s, n).stderr)
        .collect();
    let trace = rho.trace().re;
    Ok(RdmEstimate { rho, stderr_re, stderr_im, trace, trace_deviation: trace - 1.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::ComplexVec;

    fn record(values: &[f64], rho: Option<ComplexMat>) -> TrajectoryRecord {
        TrajectoryRecord {
            times: vec![0.0],
            observables: vec![values.to_vec()],
            traces: vec![1.0],
            weights: vec![1.0],
            rho: rho.map(|m| vec![m]),
            jumps: vec![[1, 0]],
            final_weight: 1.0,
            weight_flips: 0,
            restarts: 0,
            max_norm_drift: 0.0,
            max_hermiticity_defect: 0.0,
            refined_steps: 0,
            splits: 0,
            warnings: Vec::new(),
        }
    }

    #[test]
    fn single_trajectory_reproduces_initial_state() {
        let chi = ComplexVec::from_vec(vec![c(0.6, 0.0), c(0.0, 0.8)]).unwrap();
        let mut acc = EnsembleAccumulator::new(2, vec![0.0], 1, true);
        acc.accumulate(&record(&[0.36], Some(chi.outer(&chi)))).unwrap();
        let est = reconstruct_rdm(&acc, 0).unwrap();
        assert!((&est.rho - &chi.outer(&chi)).max_abs() < 1e-15);
        assert!(est.trace_deviation.abs() < 1e-15);
        assert!(acc.observable(0, 0).unwrap().stderr.is_nan());
        assert_eq!(acc.total_jumps, 1);
    }

    #[test]
    fn merge_matches_sequential() {
        let values: Vec<f64> = (0..50).map(|i| ((i * 37) % 11) as f64 / 7.0 - 0.5).collect();
        let mut seq = EnsembleAccumulator::new(1, vec![0.0], 1, false);
        let mut left = seq.clone();
        let mut right = seq.clone();
        for (i, v) in values.iter().enumerate() {
            seq.accumulate(&record(&[*v], None)).unwrap();
            if i < 20 { left.accumulate(&record(&[*v], None)) } else { right.accumulate(&record(&[*v], None)) }.unwrap();
        }
        left.merge(&right).unwrap();
        let a = seq.observable(0, 0).unwrap();
        let b = left.observable(0, 0).unwrap();
        assert!((a.mean - b.mean).abs() < 1e-14);
        assert!((a.stderr - b.stderr).abs() < 1e-14);
        assert_eq!(left.n_traj(), 50);
    }

    #[test]
    fn stderr_scales_as_inverse_root_n() {
        let run = |n: usize| {
            let mut acc = EnsembleAccumulator::new(1, vec![0.0], 1, false);
            for i in 0..n {
                acc.accumulate(&record(&[if i % 2 == 0 { 1.0 } else { -1.0 }], None)).unwrap();
            }
            acc.observable(0, 0).unwrap().stderr
        };
        let ratio = run(100) / run(400);
        assert!((ratio - 2.0).abs() < 0.02, "{ratio}");
    }

    #[test]
    fn shape_errors() {
        let empty = EnsembleAccumulator::new(2, vec![0.0], 1, true);
        assert!(matches!(reconstruct_rdm(&empty, 0), Err(Error::EmptyEnsemble)));
        assert!(matches!(empty.observable(0, 0), Err(Error::EmptyEnsemble)));
        let mut acc = empty.clone();
        assert!(acc.accumulate(&record(&[0.0], None)).is_err());
        assert!(acc.accumulate(&record(&[0.0, 1.0], Some(ComplexMat::zeros(2)))).is_err());
        let other = EnsembleAccumulator::new(3, vec![0.0], 1, true);
        assert!(acc.merge(&other).is_err());
        let plain = EnsembleAccumulator::new(2, vec![0.0], 1, false);
        let mut plain_filled = plain.clone();
        plain_filled.accumulate(&record(&[0.0], None)).unwrap();
        assert!(reconstruct_rdm(&plain_filled, 0).is_err());
    }
}
