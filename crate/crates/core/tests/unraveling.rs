use pairjump::engine::*;
use pairjump::linalg::*;
use pairjump::models::*;
use pairjump::oracle::*;
use pairjump::qme::*;
use pairjump::time_grid::uniform_grid;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

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

/// Fraction of the real and imaginary RDM entries at `grid_index` within 3 stderr.
fn within_three(out: &EnsembleOutput, exact: &ComplexMat, grid_index: usize) -> (usize, usize) {
    let est = reconstruct_rdm(&out.accumulator, grid_index).unwrap();
    let (mut ok, mut total) = (0, 0);
    for i in 0..exact.as_slice().len() {
        let d = est.rho.as_slice()[i] - exact.as_slice()[i];
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
    (ok, total)
}

#[test]
fn amplitude_damping_follows_exponential() {
    let (sm, _) = ladder_ops(2).unwrap();
    let spec = lindblad_embed(&ComplexMat::from_real_diag(&[0.0, 1.0]), &[sm], 1.0).unwrap();
    let grid = vec![0.0, 0.5, 1.0, 2.0];
    let cfg = PropagationConfig::new(0.01, grid.clone());
    let excited = basis_projector(2, 1).unwrap();
    let out = pair_ensemble(&spec, &InitialState::Pure(ComplexVec::basis(2, 1).unwrap()), &cfg, &[excited], 4000, 3, 2, false)
        .unwrap();
    for (g, &t) in grid.iter().enumerate().skip(1) {
        let p = out.accumulator.observable(g, 0).unwrap();
        assert!((p.mean - (-t).exp()).abs() < 3.5 * p.stderr, "t = {t}: {p:?}");
    }
    assert_eq!(out.accumulator.negative_weight_count, 0);
}

#[test]
fn random_non_lindblad_specs_match_oracle() {
    let (mut ok, mut total) = (0, 0);
    for seed in [1000, 1001, 1002] {
        let (spec, chi) = random_case(seed);
        let grid = vec![0.0, 1.0];
        let exact = integrate(&spec, &DensityMatrix::pure(&chi), &grid, IntegrateOptions::new(1e-3)).unwrap();
        let mut cfg = PropagationConfig::new(0.005, grid);
        cfg.record_rho = true;
        let out = pair_ensemble(&spec, &InitialState::Pure(chi), &cfg, &[], 3000, seed, 2, false).unwrap();
        assert!(out.accumulator.negative_weight_count > 0, "spec {seed} never exercised a negative rate");
        let (o, t) = within_three(&out, exact.states[1].matrix(), 1);
        ok += o;
        total += t;
    }
    assert!(ok as f64 >= 0.9 * total as f64, "{ok}/{total}");
}

#[test]
fn signed_drift_is_detectably_biased() {
    let (spec, chi) = random_case(1003);
    let grid = vec![0.0, 1.0];
    let exact = integrate(&spec, &DensityMatrix::pure(&chi), &grid, IntegrateOptions::new(1e-3)).unwrap();
    let mut cfg = PropagationConfig::new(0.005, grid);
    cfg.record_rho = true;
    let absolute = pair_ensemble(&spec, &InitialState::Pure(chi.clone()), &cfg, &[], 4000, 5, 2, false).unwrap();
    cfg.drift_rates = DriftRates::Signed;
    let signed = pair_ensemble(&spec, &InitialState::Pure(chi), &cfg, &[], 4000, 5, 2, false).unwrap();
    let (ok_abs, total) = within_three(&absolute, exact.states[1].matrix(), 1);
    let (ok_signed, _) = within_three(&signed, exact.states[1].matrix(), 1);
    assert!(ok_signed + 4 < ok_abs, "absolute {ok_abs}/{total}, signed {ok_signed}/{total}");
}

#[test]
fn brownian_oscillator_short_run_matches_oracle() {
    let params = QbmParams { gamma: 0.02, ..QbmParams::default() };
    let spec = build_qbm(&params).unwrap();
    let chi = fock_state(params.n_levels, 3).unwrap();
    let proj = basis_projector(params.n_levels, 3).unwrap();
    let grid = uniform_grid(5.0, 6);
    let exact = integrate(&spec, &DensityMatrix::pure(&chi), &grid, IntegrateOptions::new(0.01)).unwrap();
    let cfg = PropagationConfig::new(0.02, grid.clone());
    let out = pair_ensemble(&spec, &InitialState::Pure(chi), &cfg, &[proj.clone()], 1000, 17, 2, false).unwrap();
    for g in 1..grid.len() {
        let p = out.accumulator.observable(g, 0).unwrap();
        let e = exact.states[g].expectation(&proj);
        assert!((p.mean - e).abs() < 4.0 * p.stderr, "t = {}: {p:?} vs {e}", grid[g]);
    }
    assert!(exact.states[5].expectation(&proj) < 0.8);
}

#[test]
fn time_dependent_drive_matches_oracle() {
    let (sm, sp) = ladder_ops(2).unwrap();
    let spec = TimeDependentSpec::new((0.0, 2.0), move |t| {
        let h = &ComplexMat::from_real_diag(&[0.0, 1.0]) + &(&sm + &sp).scale_re(0.8 * (3.0 * t).cos());
        lindblad_embed(&h, &[sm.scale_re(0.7)], 1.0).unwrap()
    })
    .unwrap();
    let chi = ComplexVec::basis(2, 0).unwrap();
    let grid = uniform_grid(2.0, 5);
    let exact = integrate(&spec, &DensityMatrix::pure(&chi), &grid, IntegrateOptions::new(1e-3)).unwrap();
    let mut cfg = PropagationConfig::new(0.01, grid.clone());
    cfg.record_rho = true;
    let out = pair_ensemble(&spec, &InitialState::Pure(chi), &cfg, &[], 3000, 21, 2, false).unwrap();
    let (mut ok, mut total) = (0, 0);
    for g in 1..grid.len() {
        let (o, t) = within_three(&out, exact.states[g].matrix(), g);
        ok += o;
        total += t;
    }
    assert!(ok as f64 >= 0.9 * total as f64, "{ok}/{total}");
}

#[test]
fn redfield_trajectories_reach_negative_populations() {
    let params = RedfieldEtParams::default();
    let spec = build_redfield_et(&params).unwrap();
    let sys = params.system().unwrap();
    let chi = donor_wavepacket(&params).unwrap();
    let cfg = PropagationConfig::new(0.01, uniform_grid(6.0, 13));
    let out = pair_ensemble(&spec, &InitialState::Pure(chi), &cfg, &[sys.donor_projector.clone()], 200, 4, 2, true).unwrap();
    let records = out.records.unwrap();
    assert!(records.iter().any(|r| r.observables.iter().any(|o| o[0] < 0.0)));
    let p = out.accumulator.observable(12, 0).unwrap();
    assert!(p.mean > 0.0 && p.mean < 1.0);
}
