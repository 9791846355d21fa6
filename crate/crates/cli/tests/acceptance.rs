//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.
//!
//! Run with `cargo test -p pairjump-cli --test acceptance`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use pairjump::engine::*;
use pairjump::linalg::*;
use pairjump::models::*;
use pairjump::oracle::*;
use pairjump::qme::*;
use pairjump_cli::compare::compare;
use pairjump_cli::config::RunConfig;
use pairjump_cli::run::{run_model, Model, RunOutput};
use pairjump_cli::{cmd_histogram, cmd_run, Overrides};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const PERIOD: f64 = std::f64::consts::TAU;
/// Fraction of checked points that must lie within 3 standard errors.
const MIN_FRACTION: f64 = 0.95;
const WORKERS: usize = 4;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn fraction_within(out: &RunOutput, reference: &RunOutput) -> (f64, f64) {
    let r = compare(out, reference).unwrap();
    (r.fraction_within_3, r.max_abs_z)
}

fn max_trace_deviation(out: &RunOutput) -> f64 {
    out.trace.iter().map(|t| (t.mean - 1.0).abs()).fold(0.0, f64::max)
}

/// Two-level decay at unit rate against the closed form.
fn criterion_1() -> Verdict {
    let start = Instant::now();
    let (sm, _) = ladder_ops(2).unwrap();
    let spec = lindblad_embed(&ComplexMat::from_real_diag(&[0.0, 1.0]), &[sm], 1.0).unwrap();
    let grid = vec![0.0, 0.5, 1.0, 2.0];
    let cfg = PropagationConfig::new(0.01, grid.clone());
    let excited = basis_projector(2, 1).unwrap();
    let out = pair_ensemble(&spec, &InitialState::Pure(ComplexVec::basis(2, 1).unwrap()), &cfg, &[excited], 10_000, 101, WORKERS, false)
        .unwrap();
    let mut within = 0;
    let mut zs = Vec::new();
    for (g, &t) in grid.iter().enumerate().skip(1) {
        let p = out.accumulator.observable(g, 0).unwrap();
        let z = (p.mean - (-t).exp()).abs() / p.stderr;
        zs.push(format!("{z:.2}"));
        if z < 3.0 {
            within += 1;
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let fraction = within as f64 / 3.0;
    verdict(
        fraction >= MIN_FRACTION && elapsed < 60.0,
        format!("|z| at t = 0.5, 1, 2: [{}], within 3 stderr {within}/3, runtime {elapsed:.1} s", zs.join(", ")),
    )
}

fn random_matrix(rng: &mut impl Rng, n: usize, scale: f64) -> ComplexMat {
    ComplexMat::from_fn(n, |_, _| c(rng.gen_range(-scale..scale), rng.gen_range(-scale..scale)))
}

fn random_case(seed: u64) -> (QmeSpec, ComplexVec) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = random_matrix(&mut rng, 4, 1.0).hermitian_part();
    let channels = (0..2)
        .map(|_| Channel::new(random_matrix(&mut rng, 4, 0.4), random_matrix(&mut rng, 4, 0.4)).unwrap())
        .collect();
    let spec = spec_from_hamiltonian_and_channels(&h, channels).unwrap();
    let chi = ComplexVec::from_vec((0..4).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect())
        .unwrap()
        .normalized()
        .unwrap();
    (spec, chi)
}

/// Entries of the reconstructed RDM within 3 stderr of the oracle, and the total checked.
fn rdm_agreement(spec: &QmeSpec, chi: &ComplexVec, normalization: RateNormalization, seed: u64) -> (usize, usize, u64) {
    let grid = vec![0.0, 1.0];
    let exact = integrate(spec, &DensityMatrix::pure(chi), &grid, IntegrateOptions::new(1e-3)).unwrap();
    let mut cfg = PropagationConfig::new(0.005, grid);
    cfg.record_rho = true;
    cfg.normalization = normalization;
    let out = pair_ensemble(spec, &InitialState::Pure(chi.clone()), &cfg, &[], 10_000, seed, WORKERS, false).unwrap();
    let est = reconstruct_rdm(&out.accumulator, 1).unwrap();
    let (mut ok, mut total) = (0, 0);
    for i in 0..16 {
        let d = est.rho.as_slice()[i] - exact.states[1].matrix().as_slice()[i];
        for (diff, se) in [(d.re, est.stderr_re[i]), (d.im, est.stderr_im[i])] {
            if se < 1e-12 {
                continue;
            }
            total += 1;
            if diff.abs() < 3.0 * se {
                ok += 1;
            }
        }
    }
    (ok, total, out.accumulator.negative_weight_count)
}

/// Random non-Lindblad specs against the direct integration.
fn criterion_2() -> Verdict {
    let (mut ok, mut total, mut negative) = (0, 0, 0);
    let (mut ok_clamped, mut total_clamped) = (0, 0);
    for s in 0..20 {
        let (spec, chi) = random_case(1000 + s);
        let (o, t, n) = rdm_agreement(&spec, &chi, RateNormalization::default(), s);
        ok += o;
        total += t;
        negative += n;
        let (o, t, _) = rdm_agreement(&spec, &chi, RateNormalization::ClampedTrace { floor: DEFAULT_CLAMP_FLOOR }, s);
        ok_clamped += o;
        total_clamped += t;
    }
    let fraction = ok as f64 / total as f64;
    verdict(
        fraction >= MIN_FRACTION,
        format!(
            "entries within 3 stderr {ok}/{total} = {fraction:.3} ({negative} negative-weight trajectories); \
             clamped variant (floor {DEFAULT_CLAMP_FLOOR}) for reference: {ok_clamped}/{total_clamped} = {:.3}",
            ok_clamped as f64 / total_clamped as f64
        ),
    )
}

struct ComparedRun {
    out: RunOutput,
    reference: RunOutput,
    elapsed: f64,
}

fn compared_run(dir: &Path, name: &str, body: &str) -> ComparedRun {
    let path = write_config(dir, name, body);
    let (cfg, _) = RunConfig::load(&path).unwrap();
    let model = Model::build(&cfg).unwrap();
    let start = Instant::now();
    let (out, _) = cmd_run(&path, &Overrides::default()).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let reference = run_model(&pairjump_cli::run::oracle_config(&cfg), &model).unwrap();
    ComparedRun { out, reference, elapsed }
}

fn oscillator_config() -> String {
    format!(
        r#"
[model]
kind = "qbm"
observables = ["level:3"]
initial_level = 3
[model.qbm]
gamma = 0.001
kt = 4.5
n_levels = 12
[method]
kind = "pairjump"
n_traj = 1000
dt = 0.02
master_seed = 11
workers = {WORKERS}
[time]
t_end = 100.0
output_grid_points = 41
[output]
path = "oscillator"
"#
    )
}

fn redfield_config(n_traj: u64, t_end: f64, points: usize, seed: u64, stem: &str) -> String {
    format!(
        r#"
[model]
kind = "redfield_et"
observables = ["donor", "acceptor"]
[method]
kind = "pairjump"
n_traj = {n_traj}
dt = 0.01
master_seed = {seed}
workers = {WORKERS}
[time]
t_end = {t_end}
output_grid_points = {points}
[output]
path = "{stem}"
"#
    )
}

/// Damped oscillator, third level, against the direct integration.
fn criterion_3(oscillator: &ComparedRun) -> Verdict {
    let (fraction, max_z) = fraction_within(&oscillator.out, &oscillator.reference);
    let exact: Vec<f64> = oscillator.reference.values.iter().map(|v| v[0].mean).collect();
    let monotone = exact.windows(2).all(|w| w[1] <= w[0] + 1e-12);
    let first = oscillator.out.values[0][0].mean;
    let last = oscillator.out.values.last().unwrap()[0].mean;
    verdict(
        fraction >= MIN_FRACTION && monotone && last < first && oscillator.elapsed < 600.0,
        format!(
            "points within 3 stderr {fraction:.3}, max |z| {max_z:.2}, P3 {first:.3} -> {last:.3} (oracle {:.3}), \
             oracle monotone {monotone}, runtime {:.1} s",
            exact.last().unwrap(),
            oscillator.elapsed
        ),
    )
}

/// Redfield electron transfer, donor and acceptor populations over three periods, plus one raw trajectory.
fn criterion_4(redfield: &ComparedRun, dir: &Path) -> Verdict {
    let (fraction, max_z) = fraction_within(&redfield.out, &redfield.reference);
    let single = write_config(dir, "single.toml", &redfield_config(1, 3.0 * PERIOD, 41, 5, "single"));
    let (one, _) = cmd_run(&single, &Overrides::default()).unwrap();
    let csv = std::fs::read_to_string(dir.join("single.csv")).unwrap();
    let rows = csv.lines().count();
    let jagged = one.stats.total_jumps > 0;
    verdict(
        fraction >= MIN_FRACTION && jagged && rows == 42,
        format!(
            "points within 3 stderr {fraction:.3}, max |z| {max_z:.2}, runtime {:.1} s; single trajectory: {} jumps, {rows} csv rows",
            redfield.elapsed, one.stats.total_jumps
        ),
    )
}

fn histogram_config(kind: &str, method: &str, stem: &str) -> String {
    format!(
        r#"
[model]
kind = "{kind}"
observables = ["donor"]
[method]
kind = "{method}"
n_traj = 5000
dt = 0.01
master_seed = 31
workers = {WORKERS}
[time]
t_end = {}
output_grid_points = 2
[histogram]
observable = "donor"
sample_time = 3.0
bin_width = 0.02
range = [-0.5, 1.5]
[output]
path = "{stem}"
"#,
        3.0 * PERIOD
    )
}

/// Negative single-trajectory populations exist for Redfield and not for the Lindblad model.
fn criterion_5(dir: &Path) -> Verdict {
    let red = write_config(dir, "hist_redfield.toml", &histogram_config("redfield_et", "pairjump", "hist_redfield"));
    let dd = write_config(dir, "hist_dd.toml", &histogram_config("lindblad_dd", "mcwf", "hist_dd"));
    let (h_red, _) = cmd_histogram(&red, &Overrides::default()).unwrap();
    let (h_dd, _) = cmd_histogram(&dd, &Overrides::default()).unwrap();
    verdict(
        h_red.below_zero >= 1 && h_dd.below_zero + h_dd.above_one == 0,
        format!(
            "pair jump (Redfield): {} below 0, {} above 1 of {}; standard jumps (diabatic damping): {} below 0, {} above 1 of {}",
            h_red.below_zero,
            h_red.above_one,
            h_red.samples.len(),
            h_dd.below_zero,
            h_dd.above_one,
            h_dd.samples.len()
        ),
    )
}

fn worst_trace_point(out: &RunOutput) -> String {
    out.trace
        .iter()
        .zip(&out.times)
        .max_by(|a, b| (a.0.mean - 1.0).abs().total_cmp(&(b.0.mean - 1.0).abs()))
        .map(|(t, time)| format!("{:.4} +- {:.4} at t = {time:.2}", t.mean, t.stderr))
        .unwrap()
}

fn criterion_6(oscillator: &ComparedRun, redfield: &ComparedRun) -> Verdict {
    let d1 = max_trace_deviation(&oscillator.out);
    let d2 = max_trace_deviation(&redfield.out);
    verdict(
        d1 < 0.01 && d2 < 0.01,
        format!(
            "max |trace - 1|: oscillator {d1:.4} (worst {}), Redfield {d2:.4} (worst {})",
            worst_trace_point(&oscillator.out),
            worst_trace_point(&redfield.out)
        ),
    )
}

fn criterion_7(oscillator: &ComparedRun, redfield: &ComparedRun) -> Verdict {
    let d = oscillator.out.stats.max_hermiticity_defect.max(redfield.out.stats.max_hermiticity_defect);
    verdict(d < 1e-12, format!("max |X - X^dagger| over all trajectories and output times: {d:e}"))
}

fn criterion_8(dir: &Path) -> Verdict {
    let stderr_at = |n: u64| {
        let path = write_config(dir, &format!("scaling_{n}.toml"), &redfield_config(n, PERIOD, 2, 41, &format!("scaling_{n}")));
        let (out, _) = cmd_run(&path, &Overrides::default()).unwrap();
        out.values[1][0].stderr
    };
    let small = stderr_at(1250);
    let large = stderr_at(5000);
    let ratio = small / large;
    verdict(
        (ratio - 2.0).abs() <= 0.4,
        format!("stderr of P1 at t = 2 pi: N = 1250 {small:.5}, N = 5000 {large:.5}, ratio {ratio:.3} (2 +- 20%)"),
    )
}

fn criterion_9() -> Verdict {
    let qbm = build_qbm(&QbmParams::default()).unwrap();
    let et = RedfieldEtParams::default();
    let redfield = build_redfield_et(&et).unwrap();
    let (h, ops) = build_lindblad_dd(&et).unwrap();
    let dd = lindblad_embed(&h, &ops, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for spec in [&qbm, &redfield, &dd] {
        let n = spec.dim();
        let mut done = 0;
        while done < 100 {
            let v = |rng: &mut ChaCha8Rng| {
                ComplexVec::from_vec((0..n).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect()).unwrap()
            };
            let pair = TrajectoryPair { psi: v(&mut rng), phi: v(&mut rng), weight: 1.0, t: 0.0, n_jumps: vec![[0, 0]; spec.n_channels()] };
            let Ok(r) = jump_rates(spec, &pair) else { continue };
            let sum: f64 = r.partial.iter().map(|(a, b)| a + b).sum();
            let scale = r.total.abs().max(r.abs_sum()).max(f64::MIN_POSITIVE);
            worst = worst.max((r.total - sum).abs() / scale);
            done += 1;
            checked += 1;
        }
    }
    verdict(worst < 1e-9, format!("{checked} random pairs over 3 models, max relative |total - sum of partials| {worst:.2e}"))
}

fn criterion_10(dir: &Path) -> Verdict {
    let path = write_config(dir, "determinism.toml", &redfield_config(300, 5.0, 11, 77, "determinism"));
    let mut outputs = Vec::new();
    for (round, workers) in [(0, 1), (1, 1), (2, 4), (3, 8)] {
        cmd_run(&path, &Overrides { workers: Some(workers), ..Overrides::default() }).unwrap();
        let csv = std::fs::read(dir.join("determinism.csv")).unwrap();
        let manifest = std::fs::read(dir.join("determinism.run.manifest.toml")).unwrap();
        outputs.push((round, workers, csv, manifest));
    }
    let identical = outputs.iter().all(|o| o.2 == outputs[0].2 && o.3 == outputs[0].3);
    verdict(
        identical,
        format!("csv and manifest bytes across 2 repeats with 1 worker and runs with 4 and 8 workers identical: {identical}"),
    )
}

fn main() -> ExitCode {
    let dir = tempfile::tempdir().unwrap();
    let dir = dir.path();
    let report = |n: usize, name: &str, v: Verdict| {
        println!("criterion {n:>2} [{}] {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        v.pass
    };
    let mut all = true;
    all &= report(1, "Lindblad sanity", criterion_1());
    all &= report(2, "beyond-Lindblad unbiasedness", criterion_2());
    let oscillator = compared_run(dir, "oscillator.toml", &oscillator_config());
    all &= report(3, "damped oscillator vs oracle", criterion_3(&oscillator));
    let redfield = compared_run(dir, "redfield.toml", &redfield_config(500, 3.0 * PERIOD, 41, 21, "redfield"));
    all &= report(4, "Redfield electron transfer vs oracle", criterion_4(&redfield, dir));
    all &= report(5, "negative single-trajectory populations", criterion_5(dir));
    all &= report(6, "norm discipline", criterion_6(&oscillator, &redfield));
    all &= report(7, "per-trajectory Hermiticity", criterion_7(&oscillator, &redfield));
    all &= report(8, "Monte Carlo scaling", criterion_8(dir));
    all &= report(9, "rate identity", criterion_9());
    all &= report(10, "determinism", criterion_10(dir));
    if all {
        println!("acceptance: all criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: some criteria fail");
        ExitCode::FAILURE
    }
}
