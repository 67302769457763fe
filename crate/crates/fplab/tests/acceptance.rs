//! Acceptance suite: eleven end-to-end checks, one per headline guarantee
//! of the laboratory. Each test prints a single
//! `ACCEPTANCE C<n> <name>: PASS|FAIL` line (visible with
//! `cargo test --test acceptance -- --nocapture`) and then asserts, so the
//! suite fails loudly when a guarantee breaks. Every tolerance is pinned
//! here, next to the check it guards.

use std::path::PathBuf;

use fplab::drift::{
    convolution_reference, DriftModel, LinearGrowthDrift, LinearGrowthKind, NavierStokesDrift,
};
use fplab::experiment::{
    run_experiment, ExampleKind, ExperimentConfig, InitialConfig, LambdaPolicy, LiftConfig,
    LinearDriftConfig,
};
use fplab::galerkin::{
    energy_inequality_monitor, gronwall_envelope, integrate_ensemble, moment_scan,
    truncated_initial, BlowUpPolicy, SolverConfig,
};
use fplab::measure::{
    fpe_residual, fpe_residual_lifted, fpe_residual_split, pure_ou_expected_residual,
    shift_identity_check, tightness_functional, EmpiricalProductMeasure,
};
use fplab::ou::{
    calibrate_lambda, chebyshev_exceedance_bound, exceedance_probe, fernique_estimate,
    fernique_moment_cap, fernique_radius, holder_constant_bound, holder_pair_closed_form,
    holder_pair_mc, mode_variance, ou_shift_identity_residual, sample_ensemble, CalibrationEvent,
    OuParams,
};
use fplab::rng::{stream, Key};
use fplab::spectrum::{GammaWeights, Spectrum};
use fplab::space::Space;
use fplab::stats::{mean_var, ols_line};
use fplab::testfn::{suite, CylindricalTestFn, SpatialFamily, Structure, TimeFactor};
use fplab::torus::build_torus_basis;

/// Prints the acceptance line for criterion `n` and returns `pass` so the
/// caller can assert on it with full diagnostics.
fn verdict(n: usize, name: &str, pass: bool) -> bool {
    println!(
        "ACCEPTANCE C{n} {name}: {}",
        if pass { "PASS" } else { "FAIL" }
    );
    pass
}

/// Deterministic standard-normal field for structure audits.
fn random_field(seed: u64, tag: u64, len: usize, amp: f64) -> Vec<f64> {
    (0..len)
        .map(|i| {
            amp * Key::new(seed)
                .with(stream::AUDIT_POINT)
                .with(tag)
                .with(i as u64)
                .standard_normal()
        })
        .collect()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir()
        .join(format!("fplab-acceptance-{}", std::process::id()))
        .join(name);
    if dir.exists() {
        std::fs::remove_dir_all(&dir).unwrap();
    }
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

/// C1. The expanded product-space generator agrees with the plain generator
/// at `x = v + z` to 1e-12 relative tolerance: the damping terms a solver
/// sees must cancel exactly in the generator identity, for both drift
/// families and shifts across three orders of magnitude.
#[test]
fn c01_generator_shift_cancellation() {
    let lambdas = [0.0, 7.0, 100.0];
    let tol = 1e-12;
    let mut pass = true;
    let mut worst = 0.0f64;
    let mut tuples = 0usize;

    let n = 8;
    let drift = LinearGrowthDrift::new(LinearGrowthKind::Tanh { amplitude: 1.1 }, n).unwrap();
    let fns = suite(1.0, Structure::OnX { n: 6 }, 11).unwrap();
    for &lambda in &lambdas {
        let spec = Spectrum::<f64>::quadratic_growth(n, lambda, n, n).unwrap();
        let space = Space::abstract_space(spec);
        for (j, u) in fns.iter().enumerate() {
            let rep =
                shift_identity_check(u, &space, &drift, 1_000, 1.5, tol, 9_100 + j as u64)
                    .unwrap();
            pass &= rep.holds;
            worst = worst.max(rep.max_rel_excess);
            tuples += rep.tuples;
        }
    }

    let basis = build_torus_basis::<f64>(2, 2.0, 1.0).unwrap();
    let n_z = basis.len();
    let drift = NavierStokesDrift::new(basis.clone()).unwrap();
    let fns = suite(0.8, Structure::OnX { n: 5 }, 12).unwrap();
    for &lambda in &lambdas {
        let spec = basis.ns_spectrum(0.5, lambda, 4, n_z).unwrap();
        let space = Space::torus(basis.clone(), spec, None).unwrap();
        for (j, u) in fns.iter().enumerate() {
            let rep =
                shift_identity_check(u, &space, &drift, 1_000, 0.9, tol, 9_200 + j as u64)
                    .unwrap();
            pass &= rep.holds;
            worst = worst.max(rep.max_rel_excess);
            tuples += rep.tuples;
        }
    }

    pass &= tuples == 36_000;
    assert!(
        verdict(1, "generator shift cancellation", pass),
        "worst tolerance ratio {worst:.3e} over {tuples} tuples (must stay <= 1)"
    );
}

/// C2. Sampled regularized-noise marginals match the closed-form
/// Ornstein-Uhlenbeck law: per mode and node, the empirical mean and
/// variance sit within five standard errors of `0` and `q_i(t)`.
#[test]
fn c02_ou_marginals_match_closed_form() {
    let n_z = 16;
    let m = 10_000;
    let spec = Spectrum::<f64>::quadratic_growth(n_z, 3.0, 4, n_z).unwrap();
    let space = Space::abstract_space(spec);
    let params = OuParams::new(1.0, 50, m, 220_821).unwrap();
    let ens = sample_ensemble(&space, &params);

    let mut pass = true;
    let mut worst = 0.0f64;
    for &node in &[10usize, 20, 30, 40, 50] {
        let t = ens.node_time(node);
        for i in 0..n_z {
            let xs: Vec<f64> = (0..m).map(|s| ens.state(s, node)[i]).collect();
            let (mean, var) = mean_var(&xs);
            let q = mode_variance(space.spectrum(), i, t);
            // Gaussian sample mean has sd sqrt(q/m); the sample variance has
            // sd q sqrt(2/(m-1)).
            let mean_dev = mean.abs() / (q / m as f64).sqrt();
            let var_dev = (var - q).abs() / (q * (2.0 / (m as f64 - 1.0)).sqrt());
            worst = worst.max(mean_dev).max(var_dev);
            pass &= mean_dev <= 5.0 && var_dev <= 5.0;
        }
    }
    assert!(
        verdict(2, "ou marginal laws", pass),
        "worst standardized deviation {worst:.2} (limit 5)"
    );
}

/// C3. Structure of the projected advection term: the trilinear form is
/// antisymmetric in its last two arguments, the energy defect vanishes, and
/// the drift evaluation matches an independent complex-arithmetic
/// convolution oracle coefficient by coefficient.
#[test]
fn c03_advection_structure_and_convolution_oracle() {
    let mut worst_anti = 0.0f64;
    let mut worst_defect = 0.0f64;
    for &(d, kmax) in &[(2usize, 4.0f64), (3, 2.0)] {
        let basis = build_torus_basis::<f64>(d, kmax, 1.0).unwrap();
        let drift = NavierStokesDrift::new(basis.clone()).unwrap();
        let len = basis.len();
        for trial in 0..50u64 {
            let tag = d as u64 * 1_000 + trial;
            let x = random_field(31, tag * 8 + 1, len, 0.7);
            let y = random_field(31, tag * 8 + 2, len, 0.7);
            let z = random_field(31, tag * 8 + 3, len, 0.7);
            let byz = drift.trilinear(&x, &y, &z).unwrap();
            let bzy = drift.trilinear(&x, &z, &y).unwrap();
            let scale = byz.abs().max(bzy.abs()).max(1.0);
            worst_anti = worst_anti.max((byz + bzy).abs() / scale);
            let defect = drift.energy_defect(&x).unwrap();
            let xn: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            worst_defect = worst_defect.max(defect.abs() / xn.powi(3).max(1.0));
        }
    }

    let mut worst_conv = 0.0f64;
    for &(d, kmax, trials) in &[(2usize, 3.0f64, 20u64), (3, 2.0, 10)] {
        let basis = build_torus_basis::<f64>(d, kmax, 1.0).unwrap();
        let drift = NavierStokesDrift::new(basis.clone()).unwrap();
        let len = basis.len();
        for trial in 0..trials {
            let x = random_field(32, d as u64 * 100 + trial, len, 0.6);
            let mut out = vec![0.0; len];
            drift.eval_into(&x, 0.0, &mut out).unwrap();
            let oracle = convolution_reference(&basis, &x).unwrap();
            for i in 0..len {
                worst_conv = worst_conv.max((out[i] - oracle[i]).abs());
            }
        }
    }

    let pass = worst_anti <= 1e-10 && worst_defect <= 1e-10 && worst_conv <= 1e-10;
    assert!(
        verdict(3, "advective structure oracles", pass),
        "antisymmetry {worst_anti:.3e}, energy defect {worst_defect:.3e}, \
         convolution gap {worst_conv:.3e} (limits 1e-10)"
    );
}

/// C4. The weak-form residual decays like `M^{-1/2}` over ensembles of
/// 10^2..10^4 samples on the calibrated advective example, and a pure-noise
/// control run (zero drift, zero shift, zero start) reproduces the
/// closed-form trapezoid expectation within four standard errors.
#[test]
fn c04_residual_monte_carlo_scaling() {
    let basis = build_torus_basis::<f64>(2, 2.0, 1.0).unwrap();
    let n_z = basis.len();
    let n_v = 4;
    let horizon = 0.5;
    // The weak-form quadrature couples the state to the noise once per
    // noise node, so the residual carries a deterministic first-order-in-dt
    // floor. 400 nodes push that floor well under the Monte Carlo error at
    // M = 10^4; substep refinement cannot (measured: the floor is invariant
    // under substeps 2 -> 8 but scales linearly in the node spacing).
    let steps = 400;

    let spec0 = basis.ns_spectrum(0.5, 0.0, n_v, n_z).unwrap();
    let space0 = Space::torus(basis.clone(), spec0, None).unwrap();
    let grid = [0.0, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0, 256.0, 512.0];
    let cal_params = OuParams::new(horizon, 25, 1_000, 44_100).unwrap();
    let cal = calibrate_lambda(
        &space0,
        &cal_params,
        &grid,
        1.0,
        CalibrationEvent::SquaredRadius,
    )
    .unwrap();
    let space = space0.with_lambda(cal.lambda0);

    let drift = NavierStokesDrift::new(basis.clone()).unwrap();
    let u = CylindricalTestFn::new(
        SpatialFamily::ProductGaussian {
            centers: vec![0.1, -0.2],
            widths: vec![0.9, 1.1],
        },
        TimeFactor::CosineRamp,
        Structure::OnX { n: 2 },
        horizon,
    )
    .unwrap();
    let v0 = truncated_initial(0.3, n_v);
    let solver = SolverConfig::new().with_substeps(1);

    // Averaging |residual| over replicate ensembles tightens the slope
    // estimate enough for the +-0.15 window (a single draw of |R| has
    // log-sd ~ 0.7, far too wide). With three equally spaced abscissas the
    // middle point carries no slope weight, so replicates concentrate on
    // the end tiers.
    let tiers = [(100usize, 16usize), (1_000, 8), (10_000, 6)];
    let mut log_m = Vec::new();
    let mut log_r = Vec::new();
    let mut means = Vec::new();
    for (mi, &(m, reps)) in tiers.iter().enumerate() {
        let mut acc = 0.0;
        for rep in 0..reps {
            let seed = 52_000 + (mi * 64 + rep) as u64;
            let params = OuParams::new(horizon, steps, m, seed).unwrap();
            let ens = sample_ensemble(&space, &params);
            let trajs =
                integrate_ensemble(&space, &drift, &ens, &v0, &solver, BlowUpPolicy::Abort)
                    .unwrap();
            let meas = EmpiricalProductMeasure::from_run(&space, &ens, &trajs).unwrap();
            acc += fpe_residual(&meas, &space, &drift, &u).unwrap().residual.abs();
        }
        let mean = acc / reps as f64;
        means.push(mean);
        log_m.push((m as f64).ln());
        log_r.push(mean.ln());
    }
    let fit = ols_line(&log_m, &log_r);
    let slope_ok = (-0.65..=-0.35).contains(&fit.slope);

    let zero = LinearGrowthDrift::new(LinearGrowthKind::Zero, n_v).unwrap();
    let m = 4_000;
    let steps = 200;
    let params = OuParams::new(horizon, steps, m, 52_777).unwrap();
    let ens = sample_ensemble(&space0, &params);
    let trajs = integrate_ensemble(
        &space0,
        &zero,
        &ens,
        &vec![0.0; n_v],
        &solver,
        BlowUpPolicy::Abort,
    )
    .unwrap();
    let meas = EmpiricalProductMeasure::from_run(&space0, &ens, &trajs).unwrap();
    let rep = fpe_residual(&meas, &space0, &zero, &u).unwrap();
    let oracle = pure_ou_expected_residual(&u, space0.spectrum(), steps).unwrap();
    let control_gap = (rep.residual - oracle).abs();
    let control_ok = control_gap <= 4.0 * rep.se;

    let pass = slope_ok && control_ok;
    assert!(
        verdict(4, "residual Monte Carlo scaling", pass),
        "slope {:.3} over |R| = {:?} (want [-0.65, -0.35]); control gap {:.3e} vs 4 se = {:.3e}",
        fit.slope,
        means,
        control_gap,
        4.0 * rep.se
    );
}

/// C5. Pushforward equivalence: the lifted residual route that rests on the
/// generator identity reproduces the plain route bit for bit, expectations
/// included, while the independently expanded split route agrees to 1e-10.
#[test]
fn c05_pushforward_equivalence() {
    let n = 6;
    let horizon = 0.5;
    let spec = Spectrum::<f64>::quadratic_growth(n, 2.5, n, n).unwrap();
    let space = Space::abstract_space(spec);
    let drift = LinearGrowthDrift::new(LinearGrowthKind::Tanh { amplitude: 0.8 }, n).unwrap();
    let params = OuParams::new(horizon, 25, 200, 55_001).unwrap();
    let ens = sample_ensemble(&space, &params);
    let v0 = truncated_initial(0.4, n);
    let trajs = integrate_ensemble(
        &space,
        &drift,
        &ens,
        &v0,
        &SolverConfig::new(),
        BlowUpPolicy::Abort,
    )
    .unwrap();
    let meas = EmpiricalProductMeasure::from_run(&space, &ens, &trajs).unwrap();

    let u = CylindricalTestFn::new(
        SpatialFamily::ProductGaussian {
            centers: vec![0.3, -0.1, 0.2, 0.0],
            widths: vec![0.8, 0.9, 1.0, 1.1],
        },
        TimeFactor::CosineRamp,
        Structure::OnX { n: 4 },
        horizon,
    )
    .unwrap();
    let lifted = u.restructured(Structure::Lifted { n: 4 }).unwrap();

    let direct = fpe_residual(&meas, &space, &drift, &u).unwrap();
    let via_lift = fpe_residual_lifted(&meas, &space, &drift, &lifted).unwrap();
    let split = fpe_residual_split(&meas, &space, &drift, &lifted).unwrap();

    let bit_ok = direct.residual.to_bits() == via_lift.residual.to_bits()
        && direct.se.to_bits() == via_lift.se.to_bits()
        && direct.guard_max_ratio.to_bits() == via_lift.guard_max_ratio.to_bits();

    let mut exp_ok = true;
    for &node in &[0usize, 12, 25] {
        exp_ok &= meas.expect_u(&u, node).unwrap().to_bits()
            == meas.expect_u(&lifted, node).unwrap().to_bits();
    }

    let gap = (split.residual - direct.residual).abs();
    let tol = 1e-10 * (1.0 + direct.residual.abs());
    let pass = bit_ok && exp_ok && gap <= tol;
    assert!(
        verdict(5, "pushforward equivalence", pass),
        "bitwise {bit_ok}, expectations {exp_ok}, split gap {gap:.3e} (tol {tol:.3e})"
    );
}

/// C6. The damping calibration terminates at a finite shift whose
/// certificate (Wilson lower bound above the threshold probability) implies
/// the exponential-moment cap; a fresh ensemble at that shift confirms the
/// cap, and the exceedance rate decays with the shift under the Markov
/// envelope.
#[test]
fn c06_damping_calibration_certificate() {
    let basis = build_torus_basis::<f64>(2, 2.0, 1.0).unwrap();
    let n_z = basis.len();
    let horizon = 0.5;
    let steps = 40;
    let m = 1_500;
    let spec0 = basis.ns_spectrum(1.0, 0.0, 4, n_z).unwrap();
    let space0 = Space::torus(basis.clone(), spec0, None).unwrap();
    let grid = [0.0, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0, 256.0, 512.0];
    let params = OuParams::new(horizon, steps, m, 66_001).unwrap();
    let cal = calibrate_lambda(&space0, &params, &grid, 1.0, CalibrationEvent::SquaredRadius)
        .unwrap();

    let mut pass = cal.lambda0.is_finite() && cal.wilson_low >= cal.threshold;

    let space1 = space0.with_lambda(cal.lambda0);
    let fresh = OuParams::new(horizon, steps, m, 66_002).unwrap();
    let ens1 = sample_ensemble(&space1, &fresh);
    let fern = fernique_estimate(&space1, &ens1, 1.0).unwrap();
    let cap = fernique_moment_cap::<f64>();
    pass &= fern.value <= cap;

    let r = fernique_radius(1.0).unwrap();
    let probe = OuParams::new(horizon, steps, m, 66_003).unwrap();
    let lams = [cal.lambda0, 2.0 * cal.lambda0 + 1.0, 4.0 * cal.lambda0 + 4.0];
    let mut prev_exceed = usize::MAX;
    for &lam in &lams {
        let sp = space0.with_lambda(lam);
        let ens = sample_ensemble(&sp, &probe);
        let rep = exceedance_probe(&sp, &ens, r, CalibrationEvent::SquaredRadius).unwrap();
        // One seed couples the three ensembles through the same normals, so
        // the exceedance count itself must be monotone in the shift.
        pass &= rep.exceed <= prev_exceed;
        prev_exceed = rep.exceed;
        let markov = chebyshev_exceedance_bound(&sp, horizon, r, CalibrationEvent::SquaredRadius);
        pass &= rep.wilson_low <= markov + 1e-12;
    }

    assert!(
        verdict(6, "damping calibration certificate", pass),
        "lambda0 {}, wilson low {:.4} vs threshold {:.4}, moment {:.4} vs cap {:.4}",
        cal.lambda0,
        cal.wilson_low,
        cal.threshold,
        fern.value,
        cap
    );
}

/// C7. Moment stability across state ranks: the p-th sup-norm moment of the
/// solved trajectories keeps overlapping 95% confidence intervals as the
/// rank grows 4 -> 16 -> 64 with no blow-ups, and the energy and Gronwall
/// monitors hold at the largest rank.
#[test]
fn c07_rank_stable_moments() {
    let basis = build_torus_basis::<f64>(2, 5.0, 4.0).unwrap();
    let n_z = basis.len();
    assert!(n_z >= 64, "cutoff 5 on the 2d lattice yields {n_z} modes");
    // Zero shift: a positive shift feeds lambda z into every state mode and
    // makes the sup moment genuinely rank-dependent. With the shift off and
    // the initial mass confined to the first four modes, only the quadratic
    // transfer differentiates the ranks, and viscosity 4 keeps it below
    // Monte Carlo resolution.
    let spec = basis.ns_spectrum(1.0, 0.0, 4, n_z).unwrap();
    let space = Space::torus(basis.clone(), spec, None).unwrap();
    let drift = NavierStokesDrift::new(basis.clone()).unwrap();
    let params = OuParams::new(0.3, 30, 500, 77_001).unwrap();
    let ens = sample_ensemble(&space, &params);
    let mut v0 = vec![0.0f64; 64];
    v0[..4].copy_from_slice(&truncated_initial(0.25, 4));
    let cfg = SolverConfig::new().with_substeps(2);
    let dims = [4usize, 16, 64];
    let points = moment_scan(&space, &drift, &ens, &v0, &dims, 2.5, &cfg).unwrap();

    let mut pass = points.iter().all(|p| p.blowups == 0 && p.samples == 500);
    for a in 0..points.len() {
        for b in a + 1..points.len() {
            let (x, y) = (&points[a], &points[b]);
            pass &= (x.mean - y.mean).abs() <= 1.96 * (x.se + y.se);
        }
    }

    let space64 = space.with_ranks(64, n_z).unwrap();
    let trajs = integrate_ensemble(&space64, &drift, &ens, &v0, &cfg, BlowUpPolicy::Abort)
        .unwrap();
    let energy = energy_inequality_monitor(&space64, &drift, &ens, &trajs, None).unwrap();
    let gron = gronwall_envelope(&space64, &drift, &ens, &trajs, energy.c).unwrap();
    pass &= energy.holds && gron.dominated;

    let summary: Vec<(usize, f64, f64)> =
        points.iter().map(|p| (p.n_v, p.mean, p.se)).collect();
    assert!(
        verdict(7, "rank-stable moments", pass),
        "moments {summary:?}, energy holds {}, gronwall dominated {}",
        energy.holds,
        gron.dominated
    );
}

/// C8. The tightness functional depends only on the noise marginal: its
/// mean, standard error, and certified bound are bit-identical across state
/// ranks, and the bound holds.
#[test]
fn c08_rank_invariant_tightness() {
    let basis = build_torus_basis::<f64>(2, 3.0, 1.0).unwrap();
    let n_z = basis.len();
    let eps = 1.0;
    let spec = basis.ns_spectrum(eps, 4.0, 2, n_z).unwrap();
    let space = Space::torus(basis.clone(), spec, None).unwrap();
    let drift = NavierStokesDrift::new(basis.clone()).unwrap();
    let params = OuParams::new(0.4, 20, 300, 88_001).unwrap();
    let gammas = GammaWeights::from_exponent(space.spectrum(), eps / 4.0).unwrap();
    let cfg = SolverConfig::new();

    let mut reports = Vec::new();
    for &nv in &[2usize, 6] {
        let sp = space.with_ranks(nv, n_z).unwrap();
        let ens = sample_ensemble(&sp, &params);
        let trajs = integrate_ensemble(
            &sp,
            &drift,
            &ens,
            &truncated_initial(0.3, nv),
            &cfg,
            BlowUpPolicy::Abort,
        )
        .unwrap();
        let meas = EmpiricalProductMeasure::from_run(&sp, &ens, &trajs).unwrap();
        reports.push(tightness_functional(&meas, sp.spectrum(), &gammas).unwrap());
    }

    let pass = reports.iter().all(|r| r.holds)
        && reports[0].mean.to_bits() == reports[1].mean.to_bits()
        && reports[0].se.to_bits() == reports[1].se.to_bits()
        && reports[0].bound.to_bits() == reports[1].bound.to_bits();
    assert!(
        verdict(8, "rank-invariant tightness", pass),
        "means {:?}, bounds {:?}",
        (reports[0].mean, reports[1].mean),
        (reports[0].bound, reports[1].bound)
    );
}

/// C9. The sampled shifted noise satisfies the variation-of-constants
/// identity against the unshifted path up to a first-order-in-dt residual,
/// and the residual is exactly zero (every bit) at zero shift.
#[test]
fn c09_shift_correction_order() {
    let n = 8;
    let lambda = 6.0;
    let m = 256;
    let horizon = 1.0;
    let spec0 = Spectrum::<f64>::quadratic_growth(n, 0.0, 2, n).unwrap();
    let spec1 = Spectrum::<f64>::quadratic_growth(n, lambda, 2, n).unwrap();
    let space0 = Space::abstract_space(spec0);
    let space1 = Space::abstract_space(spec1);

    let rms = |steps: usize| {
        let params = OuParams::new(horizon, steps, m, 99_001).unwrap();
        let base = sample_ensemble(&space0, &params);
        let shifted = sample_ensemble(&space1, &params);
        let res = ou_shift_identity_residual(&base, &shifted, space1.spectrum()).unwrap();
        (res.iter().map(|v| v * v).sum::<f64>() / res.len() as f64).sqrt()
    };
    let r32 = rms(32);
    let r64 = rms(64);
    let r128 = rms(128);
    // Trapezoid error and per-step coupling deficit are both at least first
    // order, so each halving shrinks the residual by a factor in [1.8, 4.6].
    let q1 = r32 / r64;
    let q2 = r64 / r128;
    let order_ok = (1.8..=4.6).contains(&q1) && (1.8..=4.6).contains(&q2);

    let params = OuParams::new(horizon, 32, 64, 99_002).unwrap();
    let base = sample_ensemble(&space0, &params);
    let twin = sample_ensemble(&space0, &params);
    let res0 = ou_shift_identity_residual(&base, &twin, space0.spectrum()).unwrap();
    let zero_ok = res0.iter().all(|v| *v == 0.0);

    let pass = order_ok && zero_ok;
    assert!(
        verdict(9, "shift correction order", pass),
        "halving ratios {q1:.2}, {q2:.2} (want [1.8, 4.6]); zero-shift exact {zero_ok}"
    );
}

/// C10. Spatial regularity of the noise field: the closed-form squared
/// increment obeys the certified Holder envelope `C1 |dxi|^{eps/4}`, the
/// certified constant decreases with the damping shift, the fitted
/// increment exponent is no smaller than the certified one, and Monte Carlo
/// increments reproduce the closed form within four standard errors.
#[test]
fn c10_noise_spatial_regularity() {
    let basis = build_torus_basis::<f64>(2, 3.0, 1.0).unwrap();
    let n_z = basis.len();
    let eps = 1.0;

    let mut c1s = Vec::new();
    for &lam in &[0.0, 10.0, 50.0] {
        let spec = basis.ns_spectrum(eps, lam, 2, n_z).unwrap();
        let space = Space::torus(basis.clone(), spec, None).unwrap();
        c1s.push(holder_constant_bound(&space, eps).unwrap());
    }
    let dec_ok = c1s[0] > c1s[1] && c1s[1] > c1s[2];

    let spec = basis.ns_spectrum(eps, 10.0, 2, n_z).unwrap();
    let space = Space::torus(basis.clone(), spec, None).unwrap();
    let c1 = holder_constant_bound(&space, eps).unwrap();
    let params = OuParams::new(0.5, 25, 2_000, 10_103).unwrap();
    let ens = sample_ensemble(&space, &params);
    let node = 13;
    let t = ens.node_time(node);

    let xi = [0.6, 1.1];
    let seps = [0.4, 0.2, 0.1, 0.05, 0.025];
    let mut env_ok = true;
    let mut mc_ok = true;
    let mut lx = Vec::new();
    let mut ly = Vec::new();
    for &h in &seps {
        let xi2 = [xi[0] + h, xi[1]];
        let cf = holder_pair_closed_form(&space, t, &xi, &xi2).unwrap();
        env_ok &= cf <= c1 * h.powf(eps / 4.0) * (1.0 + 1e-12);
        lx.push(h.ln());
        ly.push(cf.ln());
        let (mc, se) = holder_pair_mc(&space, &ens, node, &xi, &xi2).unwrap();
        mc_ok &= (mc - cf).abs() <= 4.0 * se;
    }
    let fit = ols_line(&lx, &ly);
    let slope_ok = fit.slope >= eps / 4.0 - 1e-9;

    let pass = dec_ok && env_ok && mc_ok && slope_ok;
    assert!(
        verdict(10, "noise spatial regularity", pass),
        "constants {c1s:?} decreasing {dec_ok}, envelope {env_ok}, \
         Monte Carlo {mc_ok}, increment exponent {:.2}",
        fit.slope
    );
}

fn small_linear_config(out_dir: &std::path::Path) -> ExperimentConfig {
    ExperimentConfig {
        example: ExampleKind::LinearGrowth,
        d: None,
        kmax: None,
        eps: None,
        nu: None,
        drift: Some(LinearDriftConfig::Tanh { amplitude: 0.6 }),
        horizon: 0.4,
        dt_noise: 0.05,
        dt_solver: 0.0125,
        n_v: 3,
        n_z: 6,
        samples: 60,
        seed: 11_042,
        lambda: LambdaPolicy::Fixed { value: 2.0 },
        initial: InitialConfig::Point {
            v0: vec![0.4, 0.2, 0.1],
        },
        lift: LiftConfig::default(),
        suite_modes: 2,
        gamma_theta: None,
        out_dir: out_dir.to_string_lossy().into_owned(),
    }
}

/// C11. Bitwise reproducibility: the same configuration produces
/// byte-identical artifacts and manifests under thread pools of different
/// sizes, in different directories, and when rerun in place.
#[test]
fn c11_bitwise_reproducibility() {
    let dir_a = scratch("c11-a");
    let dir_b = scratch("c11-b");
    let cfg_a = small_linear_config(&dir_a);
    let cfg_b = ExperimentConfig {
        out_dir: dir_b.to_string_lossy().into_owned(),
        ..cfg_a.clone()
    };

    let pool1 = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let pool3 = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();

    let man_a = pool1.install(|| run_experiment(&cfg_a)).unwrap();
    let man_b = pool3.install(|| run_experiment(&cfg_b)).unwrap();

    let mut pass = !man_a.artifacts.is_empty() && man_a.artifacts == man_b.artifacts;
    for name in man_a.artifacts.keys() {
        let a = std::fs::read(dir_a.join(name)).unwrap();
        let b = std::fs::read(dir_b.join(name)).unwrap();
        pass &= a == b;
    }
    let manifest_a = std::fs::read(dir_a.join("manifest.json")).unwrap();
    pass &= manifest_a == std::fs::read(dir_b.join("manifest.json")).unwrap();

    let man_c = pool3.install(|| run_experiment(&cfg_a)).unwrap();
    pass &= man_c == man_a;
    pass &= std::fs::read(dir_a.join("manifest.json")).unwrap() == manifest_a;

    assert!(
        verdict(11, "bitwise reproducibility", pass),
        "artifact sets must match hash for hash and byte for byte"
    );
}
