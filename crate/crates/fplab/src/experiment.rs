//! End-to-end experiment runner: a validated configuration drives noise
//! sampling, ensemble integration, the inequality monitors, and the
//! weak-form residual reports, and leaves a manifest pinning every artifact
//! checksum so a run can be reproduced and audited byte for byte.
//!
//! The pipeline is deliberately concrete over `f64`: reproducibility claims
//! are about bit patterns, and the manifest records them as such.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::drift::{DriftModel, LinearGrowthDrift, LinearGrowthKind, NavierStokesDrift};
use crate::error::{Error, Result};
use crate::galerkin::{
    energy_inequality_monitor, gronwall_envelope, integrate_ensemble, vnorm_budget_check,
    BlowUpPolicy, SolverConfig,
};
use crate::io::{self, ArrayHeader, CsvTable};
use crate::measure::{
    fpe_residual, fpe_residual_lifted, fpe_residual_split, lift_initial, marginal_gaussian_check,
    pure_ou_expected_residual, shift_identity_check, tightness_functional,
    EmpiricalProductMeasure, InitialLaw, LiftMode,
};
use crate::ou::{
    calibrate_lambda, fernique_estimate, fernique_moment_cap, mode_variance, sample_ensemble,
    CalibrationEvent, OuParams,
};
use crate::rng::{fnv1a64, stream, Key};
use crate::space::Space;
use crate::spectrum::{GammaWeights, Spectrum};
use crate::stats::mean_var;
use crate::testfn::{suite, SpatialFamily, Structure, TimeFactor};
use crate::torus::build_torus_basis;

/// Which model family the run exercises.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExampleKind {
    /// Abstract diagonal spectrum with a linear-growth drift.
    LinearGrowth,
    /// Divergence-free torus modes with the advective nonlinearity.
    NavierStokes,
}

/// Drift choice for the linear-growth example.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LinearDriftConfig {
    Zero,
    Tanh { amplitude: f64 },
    Rotation { rate: f64 },
}

/// How the regularizing shift `lambda` is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case", deny_unknown_fields)]
pub enum LambdaPolicy {
    /// Use the given value directly.
    Fixed { value: f64 },
    /// Sweep the shift grid until the small-noise event certifies under the
    /// exponential-moment constant `k`, then run at the certified value.
    Calibrate { k: f64 },
}

/// Initial law for the drift component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialConfig {
    /// Point mass at `v0` (padded with zeros up to `n_v`).
    Point { v0: Vec<f64> },
    /// Independent Gaussian coordinates; `p1_moment` declares the moment
    /// order the law is certified to carry.
    Gaussian {
        mean: Vec<f64>,
        sd: Vec<f64>,
        p1_moment: f64,
    },
    /// States read from a binary array file, one row per state.
    Empirical { path: String, p1_moment: f64 },
}

/// How the initial law is lifted to the product space.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum LiftConfig {
    /// Mass on the drift component, `Z(0) = 0`: the only mode consistent
    /// with the sampled noise ensemble.
    #[default]
    ProductFirst,
    /// Mass on the noise component (analysis-only).
    DiracSecond,
    /// Convex mixture of the two placements (analysis-only).
    Convex { first_weight: f64 },
}

fn default_suite_modes() -> usize {
    2
}

/// A fully explicit run description; unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub example: ExampleKind,
    /// Torus dimension (advective example only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    /// Frequency cutoff radius (advective example only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kmax: Option<f64>,
    /// Noise decay exponent (advective example only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    /// Viscosity (advective example only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
    /// Drift choice (linear-growth example only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<LinearDriftConfig>,
    pub horizon: f64,
    /// Noise node spacing; must divide the horizon evenly.
    pub dt_noise: f64,
    /// Solver substep; must divide `dt_noise` evenly.
    pub dt_solver: f64,
    pub n_v: usize,
    pub n_z: usize,
    pub samples: usize,
    pub seed: u64,
    pub lambda: LambdaPolicy,
    pub initial: InitialConfig,
    #[serde(default)]
    pub lift: LiftConfig,
    /// Coordinates bound by the cylindrical test-function suite.
    #[serde(default = "default_suite_modes")]
    pub suite_modes: usize,
    /// Weight exponent for the tightness functional; defaults to `eps / 4`
    /// on the torus and `1/4` for the abstract spectrum.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_theta: Option<f64>,
    /// Output directory; blanked inside stored manifests so a bundle hashes
    /// the same wherever it lives.
    #[serde(default)]
    pub out_dir: String,
}

/// Parses a JSON configuration, mapping schema violations to the
/// configuration error class.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    serde_json::from_str(text)
        .map_err(|e| Error::ConfigInvalid(vec![format!("config schema: {e}")]))
}

/// Divides `total` by `step`, accepting only near-exact integer quotients.
fn exact_divisor(total: f64, step: f64) -> Option<usize> {
    if !(step > 0.0) || !total.is_finite() || !(total > 0.0) {
        return None;
    }
    let q = total / step;
    let r = q.round();
    if r >= 1.0 && r <= 1e9 && (q - r).abs() <= 1e-9 * r.max(1.0) {
        Some(r as usize)
    } else {
        None
    }
}

fn drift_growth_exponent(cfg: &ExperimentConfig) -> f64 {
    match cfg.example {
        ExampleKind::NavierStokes => 2.0,
        ExampleKind::LinearGrowth => match cfg.drift {
            Some(LinearDriftConfig::Rotation { .. }) => 1.0,
            _ => 0.0,
        },
    }
}

/// Checks every hypothesis the run depends on and reports all violations at
/// once, each naming the condition it encodes.
pub fn validate_config(cfg: &ExperimentConfig) -> Result<()> {
    let mut bad: Vec<String> = Vec::new();

    if !cfg.horizon.is_finite() || !(cfg.horizon > 0.0) {
        bad.push("the horizon T must be finite and strictly positive".into());
    }
    if !cfg.dt_noise.is_finite() || !(cfg.dt_noise > 0.0) {
        bad.push("the noise step dt_noise must be strictly positive".into());
    }
    if !cfg.dt_solver.is_finite() || !(cfg.dt_solver > 0.0) {
        bad.push("the solver step dt_solver must be strictly positive".into());
    }
    if cfg.horizon > 0.0 && cfg.dt_noise > 0.0 && exact_divisor(cfg.horizon, cfg.dt_noise).is_none()
    {
        bad.push("dt_noise must divide the horizon into a whole number of steps".into());
    }
    if cfg.dt_noise > 0.0
        && cfg.dt_solver > 0.0
        && exact_divisor(cfg.dt_noise, cfg.dt_solver).is_none()
    {
        bad.push("dt_solver must divide dt_noise into a whole number of substeps".into());
    }
    if cfg.n_v == 0 {
        bad.push("the drift truncation n_v must be at least 1".into());
    }
    if cfg.n_z < cfg.n_v {
        bad.push(
            "the noise truncation must dominate the drift truncation (n_z >= n_v): \
             the split construction projects the drift component onto the first n_v \
             modes of the n_z-mode noise"
                .into(),
        );
    }
    if cfg.samples < 2 {
        bad.push("at least two samples are needed for standard errors".into());
    }
    if cfg.suite_modes == 0 || cfg.suite_modes > cfg.n_v {
        bad.push(
            "test functions bind the first suite_modes coordinates and the drift \
             block resolves only n_v of them (1 <= suite_modes <= n_v)"
                .into(),
        );
    }

    match cfg.example {
        ExampleKind::NavierStokes => {
            if cfg.drift.is_some() {
                bad.push("the drift block applies only to the linear-growth example".into());
            }
            let d_ok = match cfg.d {
                Some(2) | Some(3) => true,
                _ => {
                    bad.push("the torus dimension d must be 2 or 3".into());
                    false
                }
            };
            let kmax_ok = match cfg.kmax {
                Some(k) if k.is_finite() && k >= 1.0 => true,
                _ => {
                    bad.push("the frequency cutoff kmax must be at least 1".into());
                    false
                }
            };
            match cfg.nu {
                Some(nu) if nu.is_finite() && nu > 0.0 => {}
                _ => bad.push("the viscosity nu must be strictly positive".into()),
            }
            match (cfg.d, cfg.eps) {
                (_, None) => bad.push("the noise decay exponent eps is required".into()),
                (Some(2), Some(e)) if !(e > 0.0) || !e.is_finite() => bad.push(
                    "in dimension 2 the noise decay exponent must satisfy eps > 0 \
                     so the mode variances stay summable on the sup-norm scale"
                        .into(),
                ),
                (Some(3), Some(e)) if !(e > 1.0) || !e.is_finite() => bad.push(
                    "in dimension 3 the noise decay exponent must satisfy eps > 1 \
                     so the mode variances stay summable on the sup-norm scale"
                        .into(),
                ),
                _ => {}
            }
            if d_ok && kmax_ok {
                // The divergence-free basis is finite at this cutoff; the
                // noise rank cannot exceed it.
                match build_torus_basis::<f64>(cfg.d.unwrap(), cfg.kmax.unwrap(), 1.0) {
                    Ok(basis) if cfg.n_z > basis.len() => bad.push(format!(
                        "the torus basis at kmax = {} in dimension {} has only {} \
                         divergence-free modes; n_z = {} exceeds it",
                        cfg.kmax.unwrap(),
                        cfg.d.unwrap(),
                        basis.len(),
                        cfg.n_z
                    )),
                    Ok(_) => {}
                    Err(e) => bad.push(format!("torus basis construction failed: {e}")),
                }
            }
        }
        ExampleKind::LinearGrowth => {
            for (name, present) in [
                ("d", cfg.d.is_some()),
                ("kmax", cfg.kmax.is_some()),
                ("eps", cfg.eps.is_some()),
                ("nu", cfg.nu.is_some()),
            ] {
                if present {
                    bad.push(format!(
                        "the torus parameter {name} applies only to the navier-stokes example"
                    ));
                }
            }
            match cfg.drift {
                None => bad.push(
                    "the linear-growth example needs a drift block (zero, tanh, or rotation)"
                        .into(),
                ),
                Some(LinearDriftConfig::Tanh { amplitude }) if !amplitude.is_finite() => {
                    bad.push("the tanh drift amplitude must be finite".into())
                }
                Some(LinearDriftConfig::Rotation { rate }) if !rate.is_finite() => {
                    bad.push("the rotation drift rate must be finite".into())
                }
                Some(LinearDriftConfig::Rotation { .. }) if cfg.n_v % 2 != 0 => bad.push(
                    "the rotation drift pairs adjacent coordinates; n_v must be even".into(),
                ),
                _ => {}
            }
        }
    }

    match &cfg.lambda {
        LambdaPolicy::Fixed { value } => {
            if !value.is_finite() || *value < 0.0 {
                bad.push("a fixed shift lambda must be finite and nonnegative".into());
            }
        }
        LambdaPolicy::Calibrate { k } => {
            if !k.is_finite() || !(*k > 0.0) {
                bad.push("the exponential moment constant k must be strictly positive".into());
            }
        }
    }

    let p0 = drift_growth_exponent(cfg);
    let check_p1 = |p1: f64, bad: &mut Vec<String>| {
        if !p1.is_finite() || p1 <= p0 {
            bad.push(format!(
                "the declared initial moment order p1 = {p1} must exceed the drift \
                 growth exponent p0 = {p0} so the moment bounds close"
            ));
        }
    };
    match &cfg.initial {
        InitialConfig::Point { v0 } => {
            if v0.len() > cfg.n_v {
                bad.push(format!(
                    "the initial state binds {} coordinates but only n_v = {} are resolved",
                    v0.len(),
                    cfg.n_v
                ));
            }
            if v0.iter().any(|x| !x.is_finite()) {
                bad.push("the initial state must be finite".into());
            }
        }
        InitialConfig::Gaussian { mean, sd, p1_moment } => {
            if mean.len() != sd.len() {
                bad.push("the Gaussian initial law needs matching mean and sd lengths".into());
            }
            if mean.len() > cfg.n_v {
                bad.push(format!(
                    "the initial law binds {} coordinates but only n_v = {} are resolved",
                    mean.len(),
                    cfg.n_v
                ));
            }
            if mean.iter().any(|x| !x.is_finite())
                || sd.iter().any(|s| !s.is_finite() || *s < 0.0)
            {
                bad.push("Gaussian means must be finite and sds finite and nonnegative".into());
            }
            check_p1(*p1_moment, &mut bad);
        }
        InitialConfig::Empirical { path, p1_moment } => {
            if path.is_empty() {
                bad.push("the empirical initial law needs a file path".into());
            }
            check_p1(*p1_moment, &mut bad);
        }
    }

    match cfg.lift {
        LiftConfig::ProductFirst => {}
        LiftConfig::DiracSecond => bad.push(
            "the sampled noise ensemble pins Z(0) = 0, so initial mass must enter \
             through the drift component (lift mode product_first)"
                .into(),
        ),
        LiftConfig::Convex { first_weight } => {
            if !(0.0..=1.0).contains(&first_weight) || !first_weight.is_finite() {
                bad.push("the convex lift weight must lie in [0, 1]".into());
            }
            bad.push(
                "the sampled noise ensemble pins Z(0) = 0, so initial mass must enter \
                 through the drift component (lift mode product_first)"
                    .into(),
            );
        }
    }

    if let Some(theta) = cfg.gamma_theta {
        if !theta.is_finite() || theta < 0.0 {
            bad.push("the tightness weight exponent gamma_theta must be nonnegative".into());
        }
    }
    if cfg.out_dir.is_empty() {
        bad.push("an output directory is required".into());
    }

    if bad.is_empty() {
        Ok(())
    } else {
        Err(Error::ConfigInvalid(bad))
    }
}

/// Prefixes recoverable errors with the pipeline stage that raised them,
/// preserving the error class (and with it the process exit code).
fn stage_error(stage: &str, e: Error) -> Error {
    match e {
        Error::ConfigInvalid(v) => Error::ConfigInvalid(v),
        Error::InvalidParameter(s) => Error::InvalidParameter(format!("{stage}: {s}")),
        Error::BlowUp { time, what } => Error::BlowUp {
            time,
            what: format!("{stage}: {what}"),
        },
        Error::CalibrationFailed(s) => Error::CalibrationFailed(format!("{stage}: {s}")),
        Error::ExponentialMomentDivergent(s) => {
            Error::ExponentialMomentDivergent(format!("{stage}: {s}"))
        }
        Error::Integrity(s) => Error::Integrity(format!("{stage}: {s}")),
        other => Error::InvalidParameter(format!("{stage}: {other}")),
    }
}

fn in_stage<V>(stage: &str, r: Result<V>) -> Result<V> {
    r.map_err(|e| stage_error(stage, e))
}

/// Outcome of a shift calibration sweep, as stored in the manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationDto {
    pub k: f64,
    pub lambda0: f64,
    pub radius: f64,
    pub threshold: f64,
    pub successes: usize,
    pub samples: usize,
    pub wilson_low: f64,
    pub wilson_high: f64,
    pub grid_index: usize,
    /// Exponential-moment estimate at the certified shift, with the
    /// theoretical cap it is checked against.
    pub moment_estimate: f64,
    pub moment_cap: f64,
}

/// Everything needed to reproduce and audit a run: the resolved parameters,
/// the configuration (with the output directory blanked), and the SHA-256 of
/// every artifact written.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub seed: u64,
    pub lambda: f64,
    pub steps: usize,
    pub substeps: usize,
    /// Modes carried by the underlying basis or spectrum.
    pub basis_modes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationDto>,
    pub config: ExperimentConfig,
    pub artifacts: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
struct TrajectorySidecar {
    samples: usize,
    sample_ids: Vec<usize>,
    blown: Vec<BlownSample>,
    complete: bool,
    sup_h_norms: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct BlownSample {
    sample: usize,
    time: f64,
}

#[derive(Serialize, Deserialize)]
struct MonitorDto {
    energy_c: f64,
    energy_max_ratio: f64,
    energy_fitted: bool,
    energy_holds: bool,
    energy_nodes: usize,
    gronwall_c: f64,
    gronwall_max_ratio: f64,
    gronwall_dominated: bool,
    gronwall_worst_sample: usize,
    budget_c: f64,
    budget_max_ratio: f64,
    budget_holds: bool,
}

#[derive(Serialize, Deserialize)]
struct ResidualEntryDto {
    test_fn_id: String,
    family: String,
    time: String,
    modes: usize,
    #[serde(rename = "M")]
    samples: usize,
    dt: f64,
    residual: f64,
    std_error: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bias_estimate: Option<f64>,
    split_residual: f64,
    split_std_error: f64,
    /// `|residual - split_residual|`: the two operator routes on one data set.
    route_gap: f64,
    /// The lifted identity route reproduced the pushforward bits exactly.
    identity_bitwise: bool,
    guard_constant: f64,
    guard_max_ratio: f64,
    guard_holds: bool,
}

#[derive(Serialize, Deserialize)]
struct ResidualBundleDto {
    shift_tuples: usize,
    shift_max_abs: f64,
    shift_max_rel_excess: f64,
    shift_holds: bool,
    entries: Vec<ResidualEntryDto>,
}

#[derive(Serialize, Deserialize)]
struct MarginalDto {
    node: usize,
    time: f64,
    modes_checked: usize,
    max_mean_dev: f64,
    max_var_dev: f64,
    max_cross_corr: f64,
}

#[derive(Serialize, Deserialize)]
struct TightnessDto {
    theta: f64,
    c_gamma: f64,
    mean: f64,
    se: f64,
    bound: f64,
    holds: bool,
}

fn family_name(f: &SpatialFamily<f64>) -> &'static str {
    match f {
        SpatialFamily::ProductGaussian { .. } => "gauss",
        SpatialFamily::TrigProduct { .. } => "trig",
    }
}

fn time_name(t: TimeFactor) -> &'static str {
    match t {
        TimeFactor::One => "one",
        TimeFactor::CosineRamp => "cos",
        TimeFactor::QuadraticDecay => "quad",
    }
}

/// Ascending shift grid swept by the calibrate policy.
const LAMBDA_GRID: [f64; 11] = [
    0.0, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0, 256.0, 512.0,
];

/// Calibration ensembles are sized independently of the main run: enough for
/// a meaningful Wilson bound, capped so the sweep stays cheap.
fn calibration_samples(m: usize) -> usize {
    m.clamp(200, 2000)
}

fn resolve_lambda(
    cfg: &ExperimentConfig,
    space0: &Space<f64>,
    steps: usize,
) -> Result<(f64, Option<CalibrationDto>)> {
    match cfg.lambda {
        LambdaPolicy::Fixed { value } => Ok((value, None)),
        LambdaPolicy::Calibrate { k } => {
            let seed = fnv1a64("lambda-calibration", [cfg.seed]);
            let m_cal = calibration_samples(cfg.samples);
            let params = OuParams::new(cfg.horizon, steps, m_cal, seed)?;
            let out = calibrate_lambda(
                space0,
                &params,
                &LAMBDA_GRID,
                k,
                CalibrationEvent::SquaredRadius,
            )?;
            // Audit the exponential moment at the certified shift on a fresh
            // ensemble before committing the main run to it.
            let space = space0.with_lambda(out.lambda0);
            let ens = sample_ensemble(&space, &params);
            let fern = fernique_estimate(&space, &ens, k)?;
            Ok((
                out.lambda0,
                Some(CalibrationDto {
                    k,
                    lambda0: out.lambda0,
                    radius: out.radius,
                    threshold: out.threshold,
                    successes: out.successes,
                    samples: out.samples,
                    wilson_low: out.wilson_low,
                    wilson_high: out.wilson_high,
                    grid_index: out.grid_index,
                    moment_estimate: fern.value,
                    moment_cap: fernique_moment_cap::<f64>(),
                }),
            ))
        }
    }
}

/// Flattened `M x n_v` initial states for the drift component.
fn initial_states(cfg: &ExperimentConfig, n_v: usize, n_z: usize) -> Result<Vec<f64>> {
    let m = cfg.samples;
    match &cfg.initial {
        InitialConfig::Point { v0 } => {
            let law = InitialLaw::Point { v0: v0.clone() };
            let lift = lift_initial(&law, LiftMode::ProductFirst, n_v, n_z, m, cfg.seed)?;
            Ok(lift.v0)
        }
        InitialConfig::Gaussian { mean, sd, .. } => {
            let law = InitialLaw::DiagonalGaussian {
                mean: mean.clone(),
                sd: sd.clone(),
            };
            let lift = lift_initial(&law, LiftMode::ProductFirst, n_v, n_z, m, cfg.seed)?;
            Ok(lift.v0)
        }
        InitialConfig::Empirical { path, .. } => {
            let (header, data) = io::read_array(Path::new(path))?;
            if header.nodes != 1 {
                return Err(Error::InvalidParameter(
                    "the empirical initial file must hold one state per row (nodes = 1)".into(),
                ));
            }
            if header.width == 0 || header.width > n_v {
                return Err(Error::InvalidParameter(format!(
                    "the empirical initial file binds {} coordinates but only n_v = {} \
                     are resolved",
                    header.width, n_v
                )));
            }
            if header.samples == 0 {
                return Err(Error::InvalidParameter(
                    "the empirical initial file is empty".into(),
                ));
            }
            if data.iter().any(|x| !x.is_finite()) {
                return Err(Error::Integrity(
                    "the empirical initial file contains non-finite values".into(),
                ));
            }
            let mut v0 = vec![0.0f64; m * n_v];
            for s in 0..m {
                // With a matching row count the file is used verbatim;
                // otherwise rows are drawn with the initial-field stream.
                let row = if header.samples == m {
                    s
                } else {
                    let u = Key::new(cfg.seed)
                        .with(stream::INITIAL_FIELD)
                        .with(s as u64)
                        .with(9)
                        .uniform();
                    ((u * header.samples as f64) as usize).min(header.samples - 1)
                };
                v0[s * n_v..s * n_v + header.width]
                    .copy_from_slice(&data[row * header.width..(row + 1) * header.width]);
            }
            Ok(v0)
        }
    }
}

/// Runs the full pipeline described by `cfg`, writing every artifact under
/// `cfg.out_dir` and returning the manifest that pins them.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunManifest> {
    in_stage("validate", validate_config(cfg))?;
    let steps = exact_divisor(cfg.horizon, cfg.dt_noise).unwrap();
    let substeps = exact_divisor(cfg.dt_noise, cfg.dt_solver).unwrap();

    match cfg.example {
        ExampleKind::LinearGrowth => {
            let spec = in_stage(
                "setup",
                Spectrum::quadratic_growth(cfg.n_z, 0.0, cfg.n_v, cfg.n_z),
            )?;
            let space0 = Space::abstract_space(spec);
            let kind = match cfg.drift.unwrap() {
                LinearDriftConfig::Zero => LinearGrowthKind::Zero,
                LinearDriftConfig::Tanh { amplitude } => LinearGrowthKind::Tanh { amplitude },
                LinearDriftConfig::Rotation { rate } => LinearGrowthKind::Rotation { rate },
            };
            let drift = in_stage("setup", LinearGrowthDrift::new(kind, cfg.n_v))?;
            let pure_ou = matches!(kind, LinearGrowthKind::Zero);
            run_pipeline(cfg, space0, drift, steps, substeps, cfg.n_z, pure_ou, 0.25)
        }
        ExampleKind::NavierStokes => {
            let basis = in_stage(
                "setup",
                build_torus_basis::<f64>(cfg.d.unwrap(), cfg.kmax.unwrap(), cfg.nu.unwrap()),
            )?;
            let modes = basis.len();
            let spec = in_stage(
                "setup",
                basis.ns_spectrum(cfg.eps.unwrap(), 0.0, cfg.n_v, cfg.n_z),
            )?;
            let space0 = in_stage("setup", Space::torus(basis.clone(), spec, None))?;
            let drift = in_stage("setup", NavierStokesDrift::new(basis))?;
            let theta = cfg.eps.unwrap() / 4.0;
            run_pipeline(cfg, space0, drift, steps, substeps, modes, false, theta)
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn run_pipeline<D: DriftModel<f64>>(
    cfg: &ExperimentConfig,
    space0: Space<f64>,
    drift: D,
    steps: usize,
    substeps: usize,
    basis_modes: usize,
    pure_ou_control: bool,
    default_theta: f64,
) -> Result<RunManifest> {
    let out = PathBuf::from(&cfg.out_dir);
    let mut artifacts: BTreeMap<String, String> = BTreeMap::new();
    let track = |artifacts: &mut BTreeMap<String, String>, name: &str, sha: String| {
        artifacts.insert(name.to_string(), sha);
    };

    // Shift resolution.
    let (lambda, calibration) = in_stage("calibrate", resolve_lambda(cfg, &space0, steps))?;
    let space = space0.with_lambda(lambda);
    let spec = space.spectrum();
    let n_v = spec.n_v();
    let n_z = spec.n_z();

    // Noise ensemble, exported with per-mode moment diagnostics.
    let params = in_stage(
        "noise",
        OuParams::new(cfg.horizon, steps, cfg.samples, cfg.seed),
    )?;
    let ens = sample_ensemble(&space, &params);
    let header = ArrayHeader {
        kind: "ou_paths".into(),
        samples: cfg.samples,
        nodes: steps + 1,
        width: n_z,
        dt: ens.dt(),
        horizon: cfg.horizon,
        lambda,
        basis_tag: spec.basis_tag().0,
        seed: cfg.seed,
        sample_ids: Vec::new(),
    };
    let sha = in_stage("noise", io::write_array(&out.join("ou_paths.bin"), &header, ens.data()))?;
    track(&mut artifacts, "ou_paths.bin", sha);

    let mut moments = CsvTable::new(&["mode", "mean", "variance", "expected_variance"]);
    for i in 0..n_z {
        let vals: Vec<f64> = (0..cfg.samples).map(|s| ens.state(s, steps)[i]).collect();
        let (mean, var) = mean_var(&vals);
        let expected = mode_variance(spec, i, cfg.horizon);
        moments.push_row(vec![
            i.to_string(),
            io::num(mean),
            io::num(var),
            io::num(expected),
        ])?;
    }
    let sha = in_stage("noise", io::write_csv(&out.join("ou_moments.csv"), &moments))?;
    track(&mut artifacts, "ou_moments.csv", sha);

    // Initial states and ensemble integration.
    let v0 = in_stage("initial", initial_states(cfg, n_v, n_z))?;
    let solver = SolverConfig::new().with_substeps(substeps);
    let trajs = in_stage(
        "integrate",
        integrate_ensemble(&space, &drift, &ens, &v0, &solver, BlowUpPolicy::Skip),
    )?;
    let mut traj_data = Vec::with_capacity(trajs.len() * (steps + 1) * n_v);
    let mut sample_ids = Vec::with_capacity(trajs.len());
    let mut sup_h_norms = Vec::with_capacity(trajs.len());
    for (sample, traj) in trajs.iter() {
        sample_ids.push(sample);
        sup_h_norms.push(traj.sup_h_norm());
        traj_data.extend_from_slice(traj.data());
    }
    let header = ArrayHeader {
        kind: "trajectories".into(),
        samples: trajs.len(),
        nodes: steps + 1,
        width: n_v,
        dt: ens.dt(),
        horizon: cfg.horizon,
        lambda,
        basis_tag: spec.basis_tag().0,
        seed: cfg.seed,
        sample_ids: sample_ids.clone(),
    };
    let sha = in_stage(
        "integrate",
        io::write_array(&out.join("trajectories.bin"), &header, &traj_data),
    )?;
    track(&mut artifacts, "trajectories.bin", sha);
    let sidecar = TrajectorySidecar {
        samples: trajs.len(),
        sample_ids,
        blown: trajs
            .blown()
            .iter()
            .map(|&(sample, time)| BlownSample { sample, time })
            .collect(),
        complete: trajs.is_complete(),
        sup_h_norms,
    };
    let sha = in_stage(
        "integrate",
        io::write_json(&out.join("trajectories.json"), &sidecar),
    )?;
    track(&mut artifacts, "trajectories.json", sha);

    // Pathwise inequality monitors.
    let energy = in_stage(
        "monitor",
        energy_inequality_monitor(&space, &drift, &ens, &trajs, None),
    )?;
    let gronwall = in_stage(
        "monitor",
        gronwall_envelope(&space, &drift, &ens, &trajs, energy.c),
    )?;
    let budget = in_stage(
        "monitor",
        vnorm_budget_check(&space, &drift, &ens, &trajs, None),
    )?;
    let monitor = MonitorDto {
        energy_c: energy.c,
        energy_max_ratio: energy.max_ratio,
        energy_fitted: energy.fitted,
        energy_holds: energy.holds,
        energy_nodes: energy.nodes,
        gronwall_c: gronwall.c,
        gronwall_max_ratio: gronwall.max_ratio,
        gronwall_dominated: gronwall.dominated,
        gronwall_worst_sample: gronwall.worst_sample,
        budget_c: budget.c,
        budget_max_ratio: budget.max_ratio,
        budget_holds: budget.holds,
    };
    let sha = in_stage("monitor", io::write_json(&out.join("monitor.json"), &monitor))?;
    track(&mut artifacts, "monitor.json", sha);

    // Empirical product measure and the weak-form residual suite.
    let meas = in_stage(
        "measure",
        EmpiricalProductMeasure::from_run(&space, &ens, &trajs),
    )?;
    let fns = in_stage(
        "residuals",
        suite(
            cfg.horizon,
            Structure::OnX {
                n: cfg.suite_modes,
            },
            cfg.seed,
        ),
    )?;
    let shift = in_stage(
        "residuals",
        shift_identity_check(&fns[0], &space, &drift, 200, 1.0, 1e-12, cfg.seed),
    )?;
    let mut entries = Vec::with_capacity(fns.len());
    let mut series = CsvTable::new(&["test_fn_id", "t", "value"]);
    for (j, u) in fns.iter().enumerate() {
        let id = format!("u{j}-{}-{}", family_name(u.family()), time_name(u.time()));
        let rx = in_stage("residuals", fpe_residual(&meas, &space, &drift, u))?;
        let lifted = in_stage(
            "residuals",
            u.restructured(Structure::Lifted {
                n: cfg.suite_modes,
            }),
        )?;
        let rs = in_stage("residuals", fpe_residual_split(&meas, &space, &drift, &lifted))?;
        let ri = in_stage(
            "residuals",
            fpe_residual_lifted(&meas, &space, &drift, &lifted),
        )?;
        let bias = if pure_ou_control
            && lambda == 0.0
            && matches!(u.family(), SpatialFamily::ProductGaussian { .. })
        {
            Some(in_stage(
                "residuals",
                pure_ou_expected_residual(u, spec, steps),
            )?)
        } else {
            None
        };
        for node in 0..=steps {
            let val = in_stage("residuals", meas.expect_u(u, node))?;
            series.push_row(vec![
                id.clone(),
                io::num(meas.node_time(node)),
                io::num(val),
            ])?;
        }
        entries.push(ResidualEntryDto {
            test_fn_id: id,
            family: family_name(u.family()).into(),
            time: time_name(u.time()).into(),
            modes: cfg.suite_modes,
            samples: rx.samples,
            dt: meas.dt(),
            residual: rx.residual,
            std_error: rx.se,
            bias_estimate: bias,
            split_residual: rs.residual,
            split_std_error: rs.se,
            route_gap: (rx.residual - rs.residual).abs(),
            identity_bitwise: rx.residual.to_bits() == ri.residual.to_bits()
                && rx.se.to_bits() == ri.se.to_bits(),
            guard_constant: rx.guard_constant,
            guard_max_ratio: rx.guard_max_ratio,
            guard_holds: rx.guard_holds && rs.guard_holds,
        });
    }
    let bundle = ResidualBundleDto {
        shift_tuples: shift.tuples,
        shift_max_abs: shift.max_abs,
        shift_max_rel_excess: shift.max_rel_excess,
        shift_holds: shift.holds,
        entries,
    };
    let sha = in_stage("residuals", io::write_json(&out.join("residuals.json"), &bundle))?;
    track(&mut artifacts, "residuals.json", sha);
    let sha = in_stage("residuals", io::write_csv(&out.join("expectations.csv"), &series))?;
    track(&mut artifacts, "expectations.csv", sha);

    // Gaussian marginal diagnostics for the noise component; below the
    // checker's sample floor the report is an empty list, not a failure.
    let mut nodes: Vec<usize> = if cfg.samples >= 8 {
        [steps / 4, steps / 2, steps]
            .into_iter()
            .filter(|&j| j > 0)
            .collect()
    } else {
        Vec::new()
    };
    nodes.dedup();
    let mut marginals = Vec::with_capacity(nodes.len());
    for node in nodes {
        let rep = in_stage(
            "marginals",
            marginal_gaussian_check(&meas, spec, node, n_z.min(8)),
        )?;
        marginals.push(MarginalDto {
            node,
            time: meas.node_time(node),
            modes_checked: rep.modes_checked,
            max_mean_dev: rep.max_mean_dev,
            max_var_dev: rep.max_var_dev,
            max_cross_corr: rep.max_cross_corr,
        });
    }
    let sha = in_stage("marginals", io::write_json(&out.join("marginals.json"), &marginals))?;
    track(&mut artifacts, "marginals.json", sha);

    // Weighted tightness functional for the noise component.
    let theta = cfg.gamma_theta.unwrap_or(default_theta);
    let gammas = in_stage("tightness", GammaWeights::from_exponent(spec, theta))?;
    let tight = in_stage("tightness", tightness_functional(&meas, spec, &gammas))?;
    let tight_dto = TightnessDto {
        theta,
        c_gamma: gammas.c_gamma(spec),
        mean: tight.mean,
        se: tight.se,
        bound: tight.bound,
        holds: tight.holds,
    };
    let sha = in_stage("tightness", io::write_json(&out.join("tightness.json"), &tight_dto))?;
    track(&mut artifacts, "tightness.json", sha);

    // Configuration snapshot and the manifest itself.
    let mut stored = cfg.clone();
    stored.out_dir = String::new();
    let sha = in_stage("manifest", io::write_json(&out.join("config.json"), &stored))?;
    track(&mut artifacts, "config.json", sha);
    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").into(),
        seed: cfg.seed,
        lambda,
        steps,
        substeps,
        basis_modes,
        calibration,
        config: stored,
        artifacts,
    };
    in_stage("manifest", io::write_json(&out.join("manifest.json"), &manifest))?;
    Ok(manifest)
}

/// Reads a manifest back, verifies every artifact checksum, and distills the
/// JSON reports into one plot-ready long-format CSV. Returns the artifacts
/// written here, as `(name, sha256)` pairs.
pub fn emit_reports(out_dir: &Path) -> Result<Vec<(String, String)>> {
    let manifest: RunManifest = in_stage("report", io::read_json(&out_dir.join("manifest.json")))?;
    for (name, sha) in &manifest.artifacts {
        in_stage("report", io::verify_checksum(&out_dir.join(name), sha))?;
    }

    let mut table = CsvTable::new(&["group", "metric", "value"]);
    let push = |table: &mut CsvTable, group: &str, metric: &str, value: String| {
        table
            .push_row(vec![group.to_string(), metric.to_string(), value])
            .expect("summary rows are always three columns");
    };
    push(&mut table, "run", "lambda", io::num(manifest.lambda));
    push(&mut table, "run", "steps", manifest.steps.to_string());
    push(&mut table, "run", "substeps", manifest.substeps.to_string());
    push(
        &mut table,
        "run",
        "samples",
        manifest.config.samples.to_string(),
    );
    if let Some(cal) = &manifest.calibration {
        push(&mut table, "calibration", "lambda0", io::num(cal.lambda0));
        push(&mut table, "calibration", "radius", io::num(cal.radius));
        push(
            &mut table,
            "calibration",
            "wilson_low",
            io::num(cal.wilson_low),
        );
        push(
            &mut table,
            "calibration",
            "moment_estimate",
            io::num(cal.moment_estimate),
        );
    }

    let monitor: MonitorDto = in_stage("report", io::read_json(&out_dir.join("monitor.json")))?;
    push(&mut table, "monitor", "energy_c", io::num(monitor.energy_c));
    push(
        &mut table,
        "monitor",
        "energy_max_ratio",
        io::num(monitor.energy_max_ratio),
    );
    push(
        &mut table,
        "monitor",
        "energy_holds",
        (monitor.energy_holds as u8).to_string(),
    );
    push(
        &mut table,
        "monitor",
        "gronwall_max_ratio",
        io::num(monitor.gronwall_max_ratio),
    );
    push(
        &mut table,
        "monitor",
        "gronwall_dominated",
        (monitor.gronwall_dominated as u8).to_string(),
    );
    push(
        &mut table,
        "monitor",
        "budget_max_ratio",
        io::num(monitor.budget_max_ratio),
    );

    let bundle: ResidualBundleDto =
        in_stage("report", io::read_json(&out_dir.join("residuals.json")))?;
    push(
        &mut table,
        "shift_identity",
        "max_abs",
        io::num(bundle.shift_max_abs),
    );
    push(
        &mut table,
        "shift_identity",
        "holds",
        (bundle.shift_holds as u8).to_string(),
    );
    for entry in &bundle.entries {
        let id = &entry.test_fn_id;
        push(
            &mut table,
            id,
            "residual",
            io::num(entry.residual),
        );
        push(&mut table, id, "std_error", io::num(entry.std_error));
        push(&mut table, id, "route_gap", io::num(entry.route_gap));
        if let Some(bias) = entry.bias_estimate {
            push(&mut table, id, "bias_estimate", io::num(bias));
        }
        push(
            &mut table,
            id,
            "guard_holds",
            (entry.guard_holds as u8).to_string(),
        );
    }

    let marginals: Vec<MarginalDto> =
        in_stage("report", io::read_json(&out_dir.join("marginals.json")))?;
    for m in &marginals {
        let group = format!("marginal_node_{}", m.node);
        push(&mut table, &group, "max_mean_dev", io::num(m.max_mean_dev));
        push(&mut table, &group, "max_var_dev", io::num(m.max_var_dev));
        push(
            &mut table,
            &group,
            "max_cross_corr",
            io::num(m.max_cross_corr),
        );
    }

    let tight: TightnessDto = in_stage("report", io::read_json(&out_dir.join("tightness.json")))?;
    push(&mut table, "tightness", "mean", io::num(tight.mean));
    push(&mut table, "tightness", "bound", io::num(tight.bound));
    push(
        &mut table,
        "tightness",
        "holds",
        (tight.holds as u8).to_string(),
    );

    let sha = in_stage("report", io::write_csv(&out_dir.join("summary.csv"), &table))?;
    Ok(vec![("summary.csv".to_string(), sha)])
}
