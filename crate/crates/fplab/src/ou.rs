//! Ornstein-Uhlenbeck noise ensembles with exact per-mode transitions.
//!
//! Mode `i` follows `dZ_i = -(alpha_i^2 + lambda) Z_i dt + sqrt(a_i) dW_i`
//! from `Z_i(0) = 0`, simulated exactly on the time grid:
//! `Z(t+dt) = exp(-c dt) Z(t) + sigma xi` with `c = alpha^2 + lambda` and
//! `sigma^2 = a (1 - exp(-2 c dt)) / (2 c)`. Draws are counter-based, keyed
//! by `(seed, stream, sample, step, mode)` and deliberately independent of
//! `lambda`, so ensembles at different shifts are couplings of the same
//! underlying normals.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::{stream, Key};
use crate::scalar::Real;
use crate::space::Space;
use crate::spectrum::{h_norm_slice, BasisTag, Spectrum};
use crate::stats::{log_sum_exp, wilson_interval, Compensated};

/// Two-sided 95% normal quantile, pinned for reproducible intervals.
pub const Z95: f64 = 1.959963984540054;

#[derive(Clone, Copy, Debug)]
pub struct OuParams<T> {
    pub horizon: T,
    pub steps: usize,
    pub samples: usize,
    pub seed: u64,
}

impl<T: Real> OuParams<T> {
    pub fn new(horizon: T, steps: usize, samples: usize, seed: u64) -> Result<Self> {
        if !(horizon > T::zero()) {
            return Err(Error::InvalidParameter(
                "time horizon must be strictly positive".into(),
            ));
        }
        if steps == 0 || samples == 0 {
            return Err(Error::InvalidParameter(
                "need at least one step and one sample".into(),
            ));
        }
        Ok(OuParams {
            horizon,
            steps,
            samples,
            seed,
        })
    }

    pub fn dt(&self) -> T {
        self.horizon / T::of_usize(self.steps)
    }
}

/// Exact one-step decay factor `exp(-c dt)`.
#[inline]
pub fn step_decay<T: Real>(c: T, dt: T) -> T {
    (-c * dt).exp()
}

/// Exact one-step noise scale: `sigma^2 = a (1 - exp(-2 c dt)) / (2 c)`,
/// with the `c -> 0` limit `a dt`.
#[inline]
pub fn step_sigma<T: Real>(a: T, c: T, dt: T) -> T {
    let var_factor = if c == T::zero() {
        dt
    } else {
        -(-T::two() * c * dt).exp_m1() / (T::two() * c)
    };
    (a * var_factor).sqrt()
}

/// Marginal variance `q_i(t) = a_i (1 - exp(-2 t (alpha_i^2 + lambda)))
/// / (2 (alpha_i^2 + lambda))` of mode `i` started from zero.
pub fn mode_variance<T: Real>(spectrum: &Spectrum<T>, i: usize, t: T) -> T {
    let c = spectrum.alphas_sq()[i] + spectrum.lambda();
    let a = spectrum.noise()[i];
    if c == T::zero() {
        return a * t;
    }
    -a * (-T::two() * c * t).exp_m1() / (T::two() * c)
}

/// Flat ensemble of exact OU paths: `samples x (steps + 1) x n_z`, with the
/// initial node pinned to zero.
#[derive(Clone, Debug)]
pub struct OuEnsemble<T> {
    samples: usize,
    steps: usize,
    n_z: usize,
    dt: T,
    horizon: T,
    lambda: T,
    seed: u64,
    basis_tag: BasisTag,
    data: Vec<T>,
}

impl<T: Real> OuEnsemble<T> {
    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn n_z(&self) -> usize {
        self.n_z
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn horizon(&self) -> T {
        self.horizon
    }

    pub fn lambda(&self) -> T {
        self.lambda
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn basis_tag(&self) -> BasisTag {
        self.basis_tag
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    /// Full path of one sample: `(steps + 1) * n_z` values, node-major.
    pub fn path(&self, sample: usize) -> &[T] {
        let stride = (self.steps + 1) * self.n_z;
        &self.data[sample * stride..(sample + 1) * stride]
    }

    /// State of one sample at grid node `j`.
    pub fn state(&self, sample: usize, node: usize) -> &[T] {
        let stride = (self.steps + 1) * self.n_z;
        let base = sample * stride + node * self.n_z;
        &self.data[base..base + self.n_z]
    }

    pub fn node_time(&self, node: usize) -> T {
        self.dt * T::of_usize(node)
    }
}

/// Samples an ensemble of exact OU paths for the first `n_z` modes of the
/// space's spectrum. Output bits depend only on `(spectrum, params)`, never
/// on the rayon thread count.
pub fn sample_ensemble<T: Real>(space: &Space<T>, params: &OuParams<T>) -> OuEnsemble<T> {
    let spectrum = space.spectrum();
    let n_z = spectrum.n_z();
    let steps = params.steps;
    let dt = params.dt();
    let lambda = spectrum.lambda();
    let decay: Vec<T> = (0..n_z)
        .map(|i| step_decay(spectrum.alphas_sq()[i] + lambda, dt))
        .collect();
    let sigma: Vec<T> = (0..n_z)
        .map(|i| step_sigma(spectrum.noise()[i], spectrum.alphas_sq()[i] + lambda, dt))
        .collect();
    let stride = (steps + 1) * n_z;
    let mut data = vec![T::zero(); params.samples * stride];
    let root = Key::new(params.seed).with(stream::OU_STEP);
    data.par_chunks_mut(stride)
        .enumerate()
        .for_each(|(m, chunk)| {
            let key_m = root.with(m as u64);
            for j in 0..steps {
                let key_j = key_m.with(j as u64);
                let (prev, next) = chunk.split_at_mut((j + 1) * n_z);
                let prev = &prev[j * n_z..];
                for i in 0..n_z {
                    let xi = T::of(key_j.with(i as u64).standard_normal());
                    next[i] = decay[i] * prev[i] + sigma[i] * xi;
                }
            }
        });
    OuEnsemble {
        samples: params.samples,
        steps,
        n_z,
        dt,
        horizon: params.horizon,
        lambda,
        seed: params.seed,
        basis_tag: spectrum.basis_tag(),
        data,
    }
}

/// Sup-type norm of one path at every grid node.
pub fn path_e_norms<T: Real>(
    space: &Space<T>,
    ens: &OuEnsemble<T>,
    sample: usize,
) -> Result<Vec<T>> {
    (0..=ens.steps)
        .map(|j| space.e_norm(ens.state(sample, j)))
        .collect()
}

/// Trapezoid quadrature of `vals^power` over the uniform grid.
pub fn trapz_pow<T: Real>(vals: &[T], dt: T, power: T) -> T {
    if vals.len() < 2 {
        return T::zero();
    }
    let mut acc = Compensated::new();
    for (j, v) in vals.iter().enumerate() {
        let w = if j == 0 || j == vals.len() - 1 {
            T::half()
        } else {
            T::one()
        };
        acc.add(w * v.powf(power));
    }
    acc.value() * dt
}

/// Trapezoid quadrature of `vals` itself.
pub fn trapz<T: Real>(vals: &[T], dt: T) -> T {
    trapz_pow(vals, dt, T::one())
}

/// `integral_0^T ||Z(t)||_E^2 dt` for one sample, by trapezoid.
pub fn path_energy_integral<T: Real>(
    space: &Space<T>,
    ens: &OuEnsemble<T>,
    sample: usize,
) -> Result<T> {
    let norms = path_e_norms(space, ens, sample)?;
    Ok(trapz_pow(&norms, ens.dt, T::two()))
}

/// Which functional of the path enters the small-noise event.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CalibrationEvent {
    /// `integral ||Z||_E^2 dt <= r^2` (default).
    SquaredRadius,
    /// `integral ||Z||_E^2 dt <= r` (variant).
    Radius,
}

impl CalibrationEvent {
    fn cutoff<T: Real>(self, r: T) -> T {
        match self {
            CalibrationEvent::SquaredRadius => r * r,
            CalibrationEvent::Radius => r,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ExceedanceReport<T> {
    pub exceed: usize,
    pub samples: usize,
    /// Wilson interval for the exceedance probability.
    pub wilson_low: f64,
    pub wilson_high: f64,
    pub cutoff: T,
}

/// Empirical exceedance `P(integral ||Z||_E^2 dt > cutoff)` with a Wilson
/// interval.
pub fn exceedance_probe<T: Real>(
    space: &Space<T>,
    ens: &OuEnsemble<T>,
    r: T,
    event: CalibrationEvent,
) -> Result<ExceedanceReport<T>> {
    let cutoff = event.cutoff(r);
    let ints = all_energy_integrals(space, ens)?;
    let exceed = ints.iter().filter(|v| **v > cutoff).count();
    let (wilson_low, wilson_high) = wilson_interval(exceed as u64, ens.samples as u64, Z95);
    Ok(ExceedanceReport {
        exceed,
        samples: ens.samples,
        wilson_low,
        wilson_high,
        cutoff,
    })
}

fn all_energy_integrals<T: Real>(space: &Space<T>, ens: &OuEnsemble<T>) -> Result<Vec<T>> {
    (0..ens.samples)
        .into_par_iter()
        .map(|m| path_energy_integral(space, ens, m))
        .collect()
}

/// Mean bound for `integral_0^T ||Z||_E^2 dt`: the exact mode-variance sum
/// in the abstract model, a triangle-inequality envelope on the torus.
pub fn energy_integral_mean_bound<T: Real>(space: &Space<T>, horizon: T) -> T {
    let s = space.spectrum();
    let lambda = s.lambda();
    match space.basis() {
        None => {
            let mut acc = Compensated::new();
            for i in 0..s.n_z() {
                acc.add(s.noise()[i] / (T::two() * (s.alphas_sq()[i] + lambda)));
            }
            horizon * acc.value()
        }
        Some(basis) => {
            let nrm = basis.norm_const();
            let mut acc = Compensated::new();
            for i in 0..s.n_z() {
                acc.add((s.noise()[i] / (T::two() * (s.alphas_sq()[i] + lambda))).sqrt());
            }
            let sum = acc.value();
            horizon * nrm * nrm * sum * sum
        }
    }
}

/// Markov/Chebyshev bound for the exceedance probability of the event.
pub fn chebyshev_exceedance_bound<T: Real>(
    space: &Space<T>,
    horizon: T,
    r: T,
    event: CalibrationEvent,
) -> T {
    energy_integral_mean_bound(space, horizon) / event.cutoff(r)
}

/// Probability threshold `1 / (exp(-3/2) + 1)` that certifies the
/// exponential moment cap.
pub fn fernique_threshold_probability<T: Real>() -> T {
    T::of(1.0 / ((-1.5f64).exp() + 1.0))
}

/// Cap `exp(1/4) + e^2 / (e^2 - 1)` on `E exp(K integral ||Z||_E^2 dt)`
/// once the small-noise event at `r = 1 / (8 sqrt(K))` clears the
/// threshold probability.
pub fn fernique_moment_cap<T: Real>() -> T {
    let e2 = std::f64::consts::E * std::f64::consts::E;
    T::of(0.25f64.exp() + e2 / (e2 - 1.0))
}

/// Radius `r = 1 / (8 sqrt(K))` associated with the exponent `K`.
pub fn fernique_radius<T: Real>(k_const: T) -> Result<T> {
    if !(k_const > T::zero()) {
        return Err(Error::InvalidParameter(
            "exponential moment constant K must be strictly positive".into(),
        ));
    }
    Ok((T::of(8.0) * k_const.sqrt()).recip())
}

#[derive(Clone, Copy, Debug)]
pub struct FerniqueEstimate<T> {
    /// Empirical `E exp(K integral ||Z||_E^2 dt)`.
    pub value: T,
    /// Weight of the single heaviest path inside the estimate.
    pub max_share: f64,
    pub k_const: T,
}

/// Monte Carlo estimate of the exponential moment, via log-sum-exp. Errors
/// out when one path carries most of the estimate: the empirical mean of a
/// heavy-tailed exponential is then meaningless.
pub fn fernique_estimate<T: Real>(
    space: &Space<T>,
    ens: &OuEnsemble<T>,
    k_const: T,
) -> Result<FerniqueEstimate<T>> {
    if k_const < T::zero() {
        return Err(Error::InvalidParameter(
            "exponential moment constant K must be nonnegative".into(),
        ));
    }
    let ints = all_energy_integrals(space, ens)?;
    let logs: Vec<f64> = ints
        .iter()
        .map(|v| (k_const * *v).as_f64())
        .collect();
    let (lse, max_share) = log_sum_exp(&logs);
    let value = T::of((lse - (ens.samples as f64).ln()).exp());
    if max_share > 0.5 {
        return Err(Error::ExponentialMomentDivergent(format!(
            "a single path carries {:.1}% of the exponential moment estimate \
             ({} samples); the empirical mean is unreliable",
            max_share * 100.0,
            ens.samples
        )));
    }
    Ok(FerniqueEstimate {
        value,
        max_share,
        k_const,
    })
}

#[derive(Clone, Debug)]
pub struct CalibrationOutcome<T> {
    pub lambda0: T,
    pub radius: T,
    pub threshold: T,
    pub successes: usize,
    pub samples: usize,
    /// Wilson interval for the success probability at `lambda0`.
    pub wilson_low: f64,
    pub wilson_high: f64,
    pub grid_index: usize,
    pub event: CalibrationEvent,
}

/// Walks the ascending `lambda` grid until the small-noise event
/// `integral ||Z||_E^2 dt <= cutoff(r)`, `r = 1 / (8 sqrt(K))`, holds with
/// Wilson lower confidence at least the certification threshold. All grid
/// points reuse the same underlying normal draws, so the success count is
/// monotone in everything but the shift itself.
pub fn calibrate_lambda<T: Real>(
    space: &Space<T>,
    params: &OuParams<T>,
    grid: &[T],
    k_const: T,
    event: CalibrationEvent,
) -> Result<CalibrationOutcome<T>> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("empty calibration grid".into()));
    }
    for w in grid.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::InvalidParameter(
                "calibration grid must be strictly increasing".into(),
            ));
        }
    }
    let r = fernique_radius(k_const)?;
    let threshold = fernique_threshold_probability::<T>();
    let cutoff = event.cutoff(r);
    let mut best: Option<(usize, f64)> = None;
    for (gi, &lambda) in grid.iter().enumerate() {
        if lambda < T::zero() {
            return Err(Error::InvalidParameter(
                "calibration grid entries must be nonnegative".into(),
            ));
        }
        let shifted = space.with_lambda(lambda);
        let ens = sample_ensemble(&shifted, params);
        let ints = all_energy_integrals(&shifted, &ens)?;
        let successes = ints.iter().filter(|v| **v <= cutoff).count();
        let (lo, hi) = wilson_interval(successes as u64, params.samples as u64, Z95);
        if best.map(|(_, b)| lo > b).unwrap_or(true) {
            best = Some((gi, lo));
        }
        if T::of(lo) >= threshold {
            return Ok(CalibrationOutcome {
                lambda0: lambda,
                radius: r,
                threshold,
                successes,
                samples: params.samples,
                wilson_low: lo,
                wilson_high: hi,
                grid_index: gi,
                event,
            });
        }
    }
    let (bi, blo) = best.unwrap();
    Err(Error::CalibrationFailed(format!(
        "best Wilson lower bound {:.4} at lambda = {} \
         (grid index {bi}) is below the required threshold {:.6} for {} samples",
        blo,
        grid[bi].as_f64(),
        threshold.as_f64(),
        params.samples
    )))
}

/// Trapezoid approximation of the shift-correction integral
/// `I(t_j) = integral_0^{t_j} exp(-(t_j - s) c) z0(s) ds` along one mode's
/// node values.
pub fn shift_correction_path<T: Real>(z0: &[T], c: T, dt: T) -> Vec<T> {
    let mut out = Vec::with_capacity(z0.len());
    let decay = step_decay(c, dt);
    let mut acc = T::zero();
    out.push(T::zero());
    for w in z0.windows(2) {
        acc = decay * acc + dt * T::half() * (decay * w[0] + w[1]);
        out.push(acc);
    }
    out
}

/// Per-sample sup-node residual of the shift identity
/// `Z^lambda(t) = Z^0(t) - lambda integral_0^t exp(-(t-s)(alpha^2+lambda))
/// Z^0(s) ds`, with the integral discretized by trapezoid. Both ensembles
/// must share the grid, the seed (coupled draws), and the basis; `base`
/// must be the unshifted one.
pub fn ou_shift_identity_residual<T: Real>(
    base: &OuEnsemble<T>,
    shifted: &OuEnsemble<T>,
    spectrum: &Spectrum<T>,
) -> Result<Vec<T>> {
    if base.lambda != T::zero() {
        return Err(Error::InvalidParameter(
            "shift identity needs an unshifted base ensemble (lambda = 0)".into(),
        ));
    }
    if base.samples != shifted.samples
        || base.steps != shifted.steps
        || base.n_z != shifted.n_z
        || base.seed != shifted.seed
        || base.basis_tag != shifted.basis_tag
        || base.dt.bits() != shifted.dt.bits()
    {
        return Err(Error::Integrity(
            "shift identity needs two ensembles from the same grid, seed, and basis".into(),
        ));
    }
    if shifted.lambda.bits() != spectrum.lambda().bits() {
        return Err(Error::LambdaMismatch {
            solver: spectrum.lambda().as_f64(),
            noise: shifted.lambda.as_f64(),
        });
    }
    let lambda = shifted.lambda;
    let n_z = base.n_z;
    let nodes = base.steps + 1;
    let out: Vec<T> = (0..base.samples)
        .into_par_iter()
        .map(|m| {
            let mut residual = vec![T::zero(); nodes * n_z];
            let mut z0_mode = vec![T::zero(); nodes];
            for i in 0..n_z {
                let c = spectrum.alphas_sq()[i] + lambda;
                for j in 0..nodes {
                    z0_mode[j] = base.state(m, j)[i];
                }
                let corr = shift_correction_path(&z0_mode, c, base.dt);
                for j in 0..nodes {
                    let predicted = z0_mode[j] - lambda * corr[j];
                    residual[j * n_z + i] = shifted.state(m, j)[i] - predicted;
                }
            }
            (0..nodes)
                .map(|j| h_norm_slice(&residual[j * n_z..(j + 1) * n_z]))
                .fold(T::zero(), |a, b| if b > a { b } else { a })
        })
        .collect();
    Ok(out)
}

/// Closed-form second moment of the pointwise increment
/// `E |Z_t(xi) - Z_t(xi')|^2 = sum_i q_i(t) (g_i(xi) - g_i(xi'))^2`
/// on a torus space (the polarization vectors are unit).
pub fn holder_pair_closed_form<T: Real>(
    space: &Space<T>,
    t: T,
    xi: &[f64],
    xi2: &[f64],
) -> Result<T> {
    let basis = space.basis().ok_or_else(|| {
        Error::InvalidParameter("pointwise increments need torus geometry".into())
    })?;
    let s = space.spectrum();
    let g1 = basis.mode_values_at(xi);
    let g2 = basis.mode_values_at(xi2);
    let mut acc = Compensated::new();
    for i in 0..s.n_z() {
        let dg = g1[i] - g2[i];
        acc.add(mode_variance(s, i, t) * dg * dg);
    }
    Ok(acc.value())
}

/// Monte Carlo mean and standard error of `|Z_t(xi) - Z_t(xi')|^2` from an
/// ensemble marginal.
pub fn holder_pair_mc<T: Real>(
    space: &Space<T>,
    ens: &OuEnsemble<T>,
    node: usize,
    xi: &[f64],
    xi2: &[f64],
) -> Result<(T, T)> {
    let basis = space.basis().ok_or_else(|| {
        Error::InvalidParameter("pointwise increments need torus geometry".into())
    })?;
    if node > ens.steps {
        return Err(Error::InvalidParameter(format!(
            "node {node} outside the grid (0..={})",
            ens.steps
        )));
    }
    let vals: Vec<f64> = (0..ens.samples)
        .map(|m| {
            let z = ens.state(m, node);
            let u1 = basis.eval_field_at(z, xi);
            let u2 = basis.eval_field_at(z, xi2);
            let mut s = T::zero();
            for (a, b) in u1.iter().zip(&u2) {
                let d = *a - *b;
                s = s + d * d;
            }
            s.as_f64()
        })
        .collect();
    let (m, se) = crate::stats::mean_se(&vals);
    Ok((T::of(m), T::of(se)))
}

/// Spatial regularity envelope: for noise `a_i = alpha_i^(-eps)`,
/// `E |Z_t(xi) - Z_t(xi')|^2 <= C1(lambda) |xi - xi'|^(eps/4)` uniformly in
/// `t`, with
/// `C1 = 4 nrm^2 (2 sqrt(nu))^(-eps/4) sum_i a_i alpha_i^(eps/4) / (2 (alpha_i^2 + lambda))`.
pub fn holder_constant_bound<T: Real>(space: &Space<T>, eps: f64) -> Result<T> {
    let basis = space.basis().ok_or_else(|| {
        Error::InvalidParameter("the spatial regularity bound needs torus geometry".into())
    })?;
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(
            "noise decay exponent eps must be positive".into(),
        ));
    }
    let s = space.spectrum();
    let nrm = basis.norm_const().as_f64();
    let nu = basis.nu().as_f64();
    let mut acc = Compensated::<f64>::new();
    for i in 0..s.n_z() {
        let alpha_sq = s.alphas_sq()[i].as_f64();
        let a = s.noise()[i].as_f64();
        let c = alpha_sq + s.lambda().as_f64();
        acc.add(a * alpha_sq.powf(eps / 8.0) / (2.0 * c));
    }
    let c1 = 4.0 * nrm * nrm * (2.0 * nu.sqrt()).powf(-eps / 4.0) * acc.value();
    Ok(T::of(c1))
}
