//! Output grids and the step lattice between them.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    pub n_steps: usize,
    pub h: f64,
}

/// Splits `[0, t_grid[0]]`, `[t_grid[0], t_grid[1]]`, ... into equal steps no
/// longer than `dt`, so every output time is hit exactly.
pub fn segment_steps(t_grid: &[f64], dt: f64) -> Result<Vec<Segment>> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    let mut prev = 0.0;
    let mut out = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        if !t.is_finite() || t < prev {
            return Err(Error::InvalidParameter(format!(
                "output grid must be non-negative and ascending (got {t} after {prev})"
            )));
        }
        let span = t - prev;
        let n_steps = (span / dt - 1e-9).ceil().max(0.0) as usize;
        let h = if n_steps == 0 { 0.0 } else { span / n_steps as f64 };
        out.push(Segment { n_steps, h });
        prev = t;
    }
    Ok(out)
}

/// `n_points` equally spaced times on `[0, t_end]`.
pub fn uniform_grid(t_end: f64, n_points: usize) -> Vec<f64> {
    match n_points {
        0 => vec![],
        1 => vec![t_end],
        n => (0..n).map(|i| t_end * i as f64 / (n - 1) as f64).collect(),
    }
}
