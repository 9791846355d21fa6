//! Quantum jump unraveling with wave-function pairs.
//!
//! A realization is a pair `(|psi>, |phi>)` with a sign `w`; the density matrix
//! is the ensemble mean of `w (|psi><phi| + |phi><psi|)`. Between jumps both
//! vectors follow `d/dt = A + sum_k (|p_k^1| + |p_k^2|) / 2`. A jump of term 1 in
//! channel `k` maps `(psi, phi) -> (E_k psi, C_k phi) / sqrt|p_k^1|`, term 2 maps
//! `(psi, phi) -> (C_k psi, E_k phi) / sqrt|p_k^2|`. The rates
//!
//! ```text
//! p_k^1 = (<phi|C_k^dag E_k|psi> + <psi|E_k^dag C_k|phi>) / tau
//! p_k^2 = (<phi|E_k^dag C_k|psi> + <psi|C_k^dag E_k|phi>) / tau
//! tau   = <phi|psi> + <psi|phi>
//! ```
//!
//! keep `tau` constant whenever they are all non-negative. Jumps are sampled at
//! `|p|`; firing a negative-rate term flips `w`.

mod accumulate;
mod ensemble;
mod mcwf;
mod pair;
mod propagate;
mod step;

pub use accumulate::{reconstruct_rdm, EnsembleAccumulator, MeanStderr, RdmEstimate};
pub use ensemble::{mcwf_ensemble, pair_ensemble, run_ensemble, trajectory_seed, EnsembleOutput, CHUNK_SIZE};
pub use mcwf::{mcwf_standard, McwfSystem};
pub use pair::{jump_rates, jump_rates_with, JumpRates, PreparedSpec, RateNormalization, TrajectoryPair, DEFAULT_CLAMP_FLOOR, DEFAULT_TAU_FLOOR};
pub use propagate::{propagate, propagate_from, InitialState, PropagationConfig, TrajectoryRecord};
pub use step::{drift_step, maybe_jump, DriftRates, JumpOutcome, JumpTerm, StepParams};
