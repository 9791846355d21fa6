//! Seeded, worker-count independent ensembles.
//!
//! Trajectories are grouped into fixed-size chunks by index. Each chunk is
//! accumulated sequentially and chunks are merged in index order, so the
//! floating-point sums do not depend on how rayon schedules the chunks.

use rayon::prelude::*;

use super::accumulate::EnsembleAccumulator;
use super::mcwf::McwfSystem;
use super::propagate::{propagate_from, InitialState, PropagationConfig, TrajectoryRecord};
use crate::error::{Error, Result};
use crate::linalg::{ComplexMat, ComplexVec};
use crate::qme::SpecSource;

pub const CHUNK_SIZE: u64 = 32;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of trajectory `index` under `master`.
pub fn trajectory_seed(master: u64, index: u64) -> u64 {
    splitmix64(master ^ splitmix64(index))
}

#[derive(Clone, Debug)]
pub struct EnsembleOutput {
    pub accumulator: EnsembleAccumulator,
    /// Per-trajectory scalar series (density snapshots dropped), if requested.
    pub records: Option<Vec<TrajectoryRecord>>,
}

/// Runs `n_traj` independent trajectories on `workers` threads.
pub fn run_ensemble<F>(
    n_traj: u64,
    master_seed: u64,
    workers: usize,
    template: &EnsembleAccumulator,
    keep_records: bool,
    trajectory: F,
) -> Result<EnsembleOutput>
where
    F: Fn(u64, u64) -> Result<TrajectoryRecord> + Sync,
{
    if n_traj == 0 {
        return Err(Error::EmptyEnsemble);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    let n_chunks = n_traj.div_ceil(CHUNK_SIZE);
    let chunks: Vec<(EnsembleAccumulator, Vec<TrajectoryRecord>)> = pool.install(|| {
        (0..n_chunks)
            .into_par_iter()
            .map(|chunk| {
                let mut acc = template.clone();
                let mut kept = Vec::new();
                let end = ((chunk + 1) * CHUNK_SIZE).min(n_traj);
                for index in chunk * CHUNK_SIZE..end {
                    let rec = trajectory(index, trajectory_seed(master_seed, index))?;
                    acc.accumulate(&rec)?;
                    if keep_records {
                        kept.push(rec.without_rho());
                    }
                }
                Ok((acc, kept))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let mut accumulator = template.clone();
    let mut records = keep_records.then(Vec::new);
    for (acc, kept) in chunks {
        accumulator.merge(&acc)?;
        if let Some(r) = records.as_mut() {
            r.extend(kept);
        }
    }
    Ok(EnsembleOutput { accumulator, records })
}

/// Pair-jump ensemble; `config.rng_seed` is replaced per trajectory.
#[allow(clippy::too_many_arguments)]
pub fn pair_ensemble<S: SpecSource + ?Sized>(
    source: &S,
    initial: &InitialState,
    config: &PropagationConfig,
    observables: &[ComplexMat],
    n_traj: u64,
    master_seed: u64,
    workers: usize,
    keep_records: bool,
) -> Result<EnsembleOutput> {
    let template = EnsembleAccumulator::new(source.dim(), config.t_grid.clone(), observables.len(), config.record_rho);
    run_ensemble(n_traj, master_seed, workers, &template, keep_records, |_, seed| {
        let cfg = PropagationConfig { rng_seed: seed, ..config.clone() };
        propagate_from(source, initial, &cfg, observables)
    })
}

/// Standard quantum-jump ensemble for a Lindblad model.
#[allow(clippy::too_many_arguments)]
pub fn mcwf_ensemble(
    system: &McwfSystem,
    chi: &ComplexVec,
    config: &PropagationConfig,
    observables: &[ComplexMat],
    n_traj: u64,
    master_seed: u64,
    workers: usize,
    keep_records: bool,
) -> Result<EnsembleOutput> {
    let template = EnsembleAccumulator::new(system.dim(), config.t_grid.clone(), observables.len(), config.record_rho);
    run_ensemble(n_traj, master_seed, workers, &template, keep_records, |_, seed| {
        let cfg = PropagationConfig { rng_seed: seed, ..config.clone() };
        system.run(chi, &cfg, observables)
    })
}
