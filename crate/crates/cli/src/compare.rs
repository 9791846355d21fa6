use std::fmt::Write as _;

use anyhow::{bail, Result};
use serde::Serialize;

use crate::run::RunOutput;

#[derive(Clone, Debug, Serialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum CompareMode {
    /// At least one side carries statistical errors; points are judged by z-scores.
    Statistical,
    /// Both sides are deterministic; only the largest difference is reported.
    ExactMatch,
}

#[derive(Clone, Debug, Serialize)]
pub struct ComparePoint {
    pub time: f64,
    pub observable: String,
    pub mean: f64,
    pub stderr: f64,
    pub reference: f64,
    /// `|mean - reference| / stderr`; NaN without an error estimate.
    pub z: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CompareReport {
    pub mode: CompareMode,
    pub n_points: usize,
    pub max_abs_z: f64,
    pub fraction_within_3: f64,
    pub max_abs_diff: f64,
    #[serde(skip)]
    pub points: Vec<ComparePoint>,
}

/// Points whose mean and reference agree to this absolute level count as exact
/// even where the ensemble has no spread (the initial time, for instance).
const EXACT_AGREEMENT: f64 = 1e-12;

pub fn compare(run: &RunOutput, reference: &RunOutput) -> Result<CompareReport> {
    if run.times.len() != reference.times.len()
        || run.times.iter().zip(&reference.times).any(|(a, b)| (a - b).abs() > 1e-12 * a.abs().max(1.0))
    {
        bail!("compare: output grids differ");
    }
    if run.observable_names != reference.observable_names {
        bail!("compare: observables differ ({:?} vs {:?})", run.observable_names, reference.observable_names);
    }
    let mut points = Vec::new();
    let mut max_abs_diff: f64 = 0.0;
    let mut deterministic = true;
    for (g, &time) in run.times.iter().enumerate() {
        for (o, name) in run.observable_names.iter().enumerate() {
            let v = run.values[g][o];
            let r = reference.values[g][o];
            let stderr = v.stderr.hypot(r.stderr);
            let diff = (v.mean - r.mean).abs();
            max_abs_diff = max_abs_diff.max(diff);
            if stderr != 0.0 {
                deterministic = false;
            }
            let z = if diff <= EXACT_AGREEMENT {
                0.0
            } else {
                diff / stderr
            };
            points.push(ComparePoint { time, observable: name.clone(), mean: v.mean, stderr, reference: r.mean, z });
        }
    }
    let n_points = points.len();
    let within = points.iter().filter(|p| p.z < 3.0).count();
    let max_abs_z = points.iter().map(|p| p.z).fold(0.0, |m: f64, z| if z.is_nan() { f64::NAN } else { m.max(z) });
    if deterministic {
        return Ok(CompareReport {
            mode: CompareMode::ExactMatch,
            n_points,
            max_abs_z: f64::NAN,
            fraction_within_3: f64::NAN,
            max_abs_diff,
            points,
        });
    }
    Ok(CompareReport {
        mode: CompareMode::Statistical,
        n_points,
        max_abs_z,
        fraction_within_3: within as f64 / n_points as f64,
        max_abs_diff,
        points,
    })
}

pub fn report_csv(report: &CompareReport) -> String {
    let mut s = String::from("time,observable,mean,stderr,reference,z\n");
    for p in &report.points {
        writeln!(s, "{},{},{},{},{},{}", p.time, p.observable, p.mean, p.stderr, p.reference, p.z).unwrap();
    }
    s
}

pub fn report_summary(report: &CompareReport) -> Result<String> {
    Ok(toml::to_string(report)?)
}
