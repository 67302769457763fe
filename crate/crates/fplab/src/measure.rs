//! Empirical measures on the product space and the weak-form residuals.
//!
//! The verification core: given sampled `(V, Z)` paths, the module evaluates
//! both Kolmogorov operators on cylindrical test functions, checks the shift
//! identity `(L u)(v + z, t) = (L~ u~)(v, z, t)` that ties them together,
//! and forms the weak Fokker-Planck residual
//! `integral_0^T E[L u] dt + E[u(., 0)]`, which must vanish up to Monte
//! Carlo error and time-quadrature bias. For the pure
//! Ornstein-Uhlenbeck control, that bias has a closed form that pins the
//! expected residual to machine precision.

use rayon::prelude::*;

use crate::drift::DriftModel;
use crate::error::{Error, Result};
use crate::galerkin::EnsembleTrajectories;
use crate::ou::{mode_variance, OuEnsemble};
use crate::rng::{stream, Key};
use crate::scalar::Real;
use crate::space::Space;
use crate::spectrum::{gamma_apply_norm_sq_slice, BasisTag, GammaWeights, Spectrum};
use crate::stats::{central_moments, mean_se, Compensated};
use crate::testfn::{CylindricalTestFn, SpatialFamily, Structure, TimeFactor};

/// Builds `x = v + z` over the joint support, padding the shorter vector.
fn sum_state<T: Real>(v: &[T], z: &[T], out: &mut [T]) {
    for (i, xi) in out.iter_mut().enumerate() {
        let vi = if i < v.len() { v[i] } else { T::zero() };
        let zi = if i < z.len() { z[i] } else { T::zero() };
        *xi = vi + zi;
    }
}

/// `(L u)(x, t)` for a test function bound directly to `x`:
/// `L u = phi' g + phi sum_i [(a_i / 2) d2_i g + (-alpha_i^2 x_i + f^i(x, t)) d_i g]`.
/// The noise weight `a_i` is the covariance rate of the driving noise (the
/// one-mode variance solves `qdot = a_i - 2 c q`), so the generator carries
/// half of it on the second derivatives. The damping shift `lambda` does not
/// appear: this is the generator of the original equation.
pub fn apply_l<T: Real, D: DriftModel<T>>(
    u: &CylindricalTestFn<T>,
    spec: &Spectrum<T>,
    drift: &D,
    x: &[T],
    t: T,
) -> Result<T> {
    let Structure::OnX { n } = u.structure() else {
        return Err(Error::InvalidParameter(
            "the plain generator applies to functions bound to x".into(),
        ));
    };
    if n > spec.len() {
        return Err(Error::LengthMismatch {
            got: n,
            available: spec.len(),
        });
    }
    let coords: Vec<T> = (0..n)
        .map(|i| if i < x.len() { x[i] } else { T::zero() })
        .collect();
    let jet = u.g_jet(&coords);
    let (phi, dphi) = u.time_factor(t);
    let mut f = vec![T::zero(); n];
    drift.eval_into(x, t, &mut f)?;
    let mut acc = Compensated::new();
    for i in 0..n {
        let xi = coords[i];
        acc.add(T::half() * spec.a(i) * jet.hess_diag[i]);
        acc.add((-spec.alpha_sq(i) * xi + f[i]) * jet.grad[i]);
    }
    Ok(dphi * jet.value + phi * acc.value())
}

/// `(L~ u~)(v, z, t)` for a test function on the product space:
/// `L~ u~ = phi' g + phi [ sum_i ((a_i / 2) d2_{z_i} g - (alpha_i^2 + lambda) z_i d_{z_i} g)
///   + sum_i (-alpha_i^2 v_i + f^i(v + z, t) + lambda z_i) d_{v_i} g ]`.
/// For a `Lifted` function the `v` and `z` derivatives coincide with the
/// derivatives of the underlying function at `v + z`; the formula is still
/// expanded term by term, so nothing cancels ahead of the arithmetic.
pub fn apply_l_split<T: Real, D: DriftModel<T>>(
    u: &CylindricalTestFn<T>,
    spec: &Spectrum<T>,
    drift: &D,
    v: &[T],
    z: &[T],
    t: T,
) -> Result<T> {
    let lambda = spec.lambda();
    let n_x = v.len().max(z.len());
    let mut x = vec![T::zero(); n_x];
    sum_state(v, z, &mut x);
    let vc = |i: usize| if i < v.len() { v[i] } else { T::zero() };
    let zc = |i: usize| if i < z.len() { z[i] } else { T::zero() };
    let (phi, dphi) = u.time_factor(t);
    match u.structure() {
        Structure::OnX { .. } => Err(Error::InvalidParameter(
            "the product-space generator applies to split or lifted functions".into(),
        )),
        Structure::Split { n_v, n_z } => {
            let m = n_v.max(n_z);
            if m > spec.len() {
                return Err(Error::LengthMismatch {
                    got: m,
                    available: spec.len(),
                });
            }
            let mut coords = Vec::with_capacity(n_v + n_z);
            for i in 0..n_v {
                coords.push(vc(i));
            }
            for i in 0..n_z {
                coords.push(zc(i));
            }
            let jet = u.g_jet(&coords);
            let mut f = vec![T::zero(); n_v];
            drift.eval_into(&x, t, &mut f)?;
            let mut acc = Compensated::new();
            for i in 0..n_z {
                acc.add(T::half() * spec.a(i) * jet.hess_diag[n_v + i]);
                acc.add(-(spec.alpha_sq(i) + lambda) * zc(i) * jet.grad[n_v + i]);
            }
            for i in 0..n_v {
                acc.add((-spec.alpha_sq(i) * vc(i) + f[i] + lambda * zc(i)) * jet.grad[i]);
            }
            Ok(dphi * jet.value + phi * acc.value())
        }
        Structure::Lifted { n } => {
            if n > spec.len() {
                return Err(Error::LengthMismatch {
                    got: n,
                    available: spec.len(),
                });
            }
            let mut coords = vec![T::zero(); n];
            let take = n.min(n_x);
            coords[..take].copy_from_slice(&x[..take]);
            let jet = u.g_jet(&coords);
            let mut f = vec![T::zero(); n];
            drift.eval_into(&x, t, &mut f)?;
            let mut acc = Compensated::new();
            for i in 0..n {
                acc.add(T::half() * spec.a(i) * jet.hess_diag[i]);
                acc.add(-(spec.alpha_sq(i) + lambda) * zc(i) * jet.grad[i]);
                acc.add((-spec.alpha_sq(i) * vc(i) + f[i] + lambda * zc(i)) * jet.grad[i]);
            }
            Ok(dphi * jet.value + phi * acc.value())
        }
    }
}

/// Outcome of the pointwise operator-identity audit.
#[derive(Clone, Copy, Debug)]
pub struct ShiftIdentityReport<T> {
    pub tuples: usize,
    /// Largest absolute difference seen.
    pub max_abs: T,
    /// Largest value of `|diff| / (tol (1 + |L u|))`; at most 1 when the
    /// identity holds within tolerance everywhere.
    pub max_rel_excess: T,
    pub holds: bool,
}

/// Samples random `(v, z, t)` tuples and compares the plain generator at
/// `v + z` with the expanded product-space generator. The damping shift
/// enters only the second route, so agreement is a genuine cancellation.
pub fn shift_identity_check<T: Real, D: DriftModel<T>>(
    u: &CylindricalTestFn<T>,
    space: &Space<T>,
    drift: &D,
    tuples: usize,
    amplitude: T,
    tol: T,
    seed: u64,
) -> Result<ShiftIdentityReport<T>> {
    let Structure::OnX { n } = u.structure() else {
        return Err(Error::InvalidParameter(
            "shift identity audit starts from a function bound to x".into(),
        ));
    };
    if tuples == 0 || !(amplitude > T::zero()) || !(tol > T::zero()) {
        return Err(Error::InvalidParameter(
            "shift identity audit needs tuples >= 1 and positive amplitude and tolerance".into(),
        ));
    }
    let lifted = u.restructured(Structure::Lifted { n })?;
    let spec = space.spectrum();
    let n_v = spec.n_v();
    let n_z = spec.n_z();
    let horizon = u.horizon();
    let results: Vec<(f64, f64)> = (0..tuples)
        .into_par_iter()
        .map(|m| {
            let base = Key::new(seed).with(stream::AUDIT_POINT).with(m as u64);
            let v: Vec<T> = (0..n_v as u64)
                .map(|i| amplitude * T::of(base.with(1).with(i).standard_normal()))
                .collect();
            let z: Vec<T> = (0..n_z as u64)
                .map(|i| amplitude * T::of(base.with(2).with(i).standard_normal()))
                .collect();
            let t = horizon * T::of(0.99 * base.with(3).uniform());
            let mut x = vec![T::zero(); n_v.max(n_z)];
            sum_state(&v, &z, &mut x);
            let lu = apply_l(u, spec, drift, &x, t)?;
            let ltu = apply_l_split(&lifted, spec, drift, &v, &z, t)?;
            let diff = (lu - ltu).abs();
            let allowed = tol * (T::one() + lu.abs());
            Ok((diff.as_f64(), (diff / allowed).as_f64()))
        })
        .collect::<Result<_>>()?;
    let mut max_abs = 0.0f64;
    let mut max_rel = 0.0f64;
    for (d, r) in results {
        max_abs = max_abs.max(d);
        max_rel = max_rel.max(r);
    }
    Ok(ShiftIdentityReport {
        tuples,
        max_abs: T::of(max_abs),
        max_rel_excess: T::of(max_rel),
        holds: max_rel <= 1.0,
    })
}

/// Empirical law of `(V, Z)` at every noise node: the Monte Carlo stand-in
/// for the solution candidate measure and its lift.
#[derive(Clone, Debug)]
pub struct EmpiricalProductMeasure<T> {
    n_v: usize,
    n_z: usize,
    steps: usize,
    dt: T,
    horizon: T,
    lambda: T,
    basis_tag: BasisTag,
    /// `samples x (steps + 1) x n_v`.
    v_data: Vec<T>,
    /// `samples x (steps + 1) x n_z`.
    z_data: Vec<T>,
    /// E-norms per sample and node, for the growth guard.
    v_e_norms: Vec<T>,
    z_e_norms: Vec<T>,
}

impl<T: Real> EmpiricalProductMeasure<T> {
    /// Pairs retained trajectories with their noise paths. The ensemble must
    /// be the one the trajectories were integrated against; the constructor
    /// enforces every identity it can observe (`lambda`, `dt`, step count,
    /// basis) bit for bit.
    pub fn from_run(
        space: &Space<T>,
        ens: &OuEnsemble<T>,
        trajs: &EnsembleTrajectories<T>,
    ) -> Result<Self> {
        if trajs.is_empty() {
            return Err(Error::InvalidParameter(
                "cannot form an empirical measure out of zero trajectories".into(),
            ));
        }
        let spec = space.spectrum();
        if spec.lambda().bits() != ens.lambda().bits() {
            return Err(Error::LambdaMismatch {
                solver: spec.lambda().as_f64(),
                noise: ens.lambda().as_f64(),
            });
        }
        if spec.basis_tag() != ens.basis_tag() {
            return Err(Error::BasisMismatch {
                coeffs: ens.basis_tag().0,
                basis: spec.basis_tag().0,
            });
        }
        let n_v = spec.n_v();
        let n_z = ens.n_z();
        let steps = ens.steps();
        let m = trajs.len();
        let mut v_data = vec![T::zero(); m * (steps + 1) * n_v];
        let mut z_data = vec![T::zero(); m * (steps + 1) * n_z];
        for (slot, (sample, traj)) in trajs.iter().enumerate() {
            if sample >= ens.samples() {
                return Err(Error::LengthMismatch {
                    got: sample,
                    available: ens.samples(),
                });
            }
            if traj.steps() != steps {
                return Err(Error::LengthMismatch {
                    got: traj.steps(),
                    available: steps,
                });
            }
            if traj.n_v() != n_v {
                return Err(Error::LengthMismatch {
                    got: traj.n_v(),
                    available: n_v,
                });
            }
            if traj.dt().bits() != ens.dt().bits() {
                return Err(Error::Integrity(
                    "trajectory and ensemble disagree on the node spacing".into(),
                ));
            }
            let vs = (steps + 1) * n_v;
            v_data[slot * vs..(slot + 1) * vs].copy_from_slice(traj.data());
            let zs = (steps + 1) * n_z;
            z_data[slot * zs..(slot + 1) * zs].copy_from_slice(ens.path(sample));
        }
        let mut out = EmpiricalProductMeasure {
            n_v,
            n_z,
            steps,
            dt: ens.dt(),
            horizon: ens.horizon(),
            lambda: spec.lambda(),
            basis_tag: spec.basis_tag(),
            v_data,
            z_data,
            v_e_norms: Vec::new(),
            z_e_norms: Vec::new(),
        };
        let norms = |data: &[T], width: usize| -> Result<Vec<T>> {
            let nodes = m * (steps + 1);
            let mut res = vec![T::zero(); nodes];
            res.par_iter_mut()
                .enumerate()
                .try_for_each(|(idx, slot)| -> Result<()> {
                    *slot = space.e_norm(&data[idx * width..(idx + 1) * width])?;
                    Ok(())
                })?;
            Ok(res)
        };
        out.v_e_norms = norms(&out.v_data, n_v)?;
        out.z_e_norms = norms(&out.z_data, n_z)?;
        Ok(out)
    }

    pub fn samples(&self) -> usize {
        self.v_data.len() / ((self.steps + 1) * self.n_v)
    }

    pub fn steps(&self) -> usize {
        self.steps
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

    pub fn n_v(&self) -> usize {
        self.n_v
    }

    pub fn n_z(&self) -> usize {
        self.n_z
    }

    pub fn basis_tag(&self) -> BasisTag {
        self.basis_tag
    }

    pub fn v_state(&self, sample: usize, node: usize) -> &[T] {
        let base = (sample * (self.steps + 1) + node) * self.n_v;
        &self.v_data[base..base + self.n_v]
    }

    pub fn z_state(&self, sample: usize, node: usize) -> &[T] {
        let base = (sample * (self.steps + 1) + node) * self.n_z;
        &self.z_data[base..base + self.n_z]
    }

    fn e_norms_at(&self, sample: usize, node: usize) -> (T, T) {
        let idx = sample * (self.steps + 1) + node;
        (self.v_e_norms[idx], self.z_e_norms[idx])
    }

    pub fn node_time(&self, node: usize) -> T {
        self.dt * T::of_usize(node)
    }

    /// Evaluates `u` on a sample at a node, dispatching on the structure.
    /// A `Lifted` function is evaluated by forming `v + z` and reading the
    /// underlying function there, so it agrees bit for bit with the `OnX`
    /// pushforward evaluation of the same spatial factor.
    fn eval_u(&self, u: &CylindricalTestFn<T>, sample: usize, node: usize) -> T {
        let t = self.node_time(node);
        let v = self.v_state(sample, node);
        let z = self.z_state(sample, node);
        match u.structure() {
            Structure::OnX { n } | Structure::Lifted { n } => {
                let mut x = vec![T::zero(); n];
                sum_state(v, z, &mut x);
                u.eval(&x, t)
            }
            Structure::Split { n_v, n_z } => {
                let mut coords = Vec::with_capacity(n_v + n_z);
                for i in 0..n_v {
                    coords.push(if i < v.len() { v[i] } else { T::zero() });
                }
                for i in 0..n_z {
                    coords.push(if i < z.len() { z[i] } else { T::zero() });
                }
                u.eval(&coords, t)
            }
        }
    }

    /// `E[u]` at a node, summed in fixed sample order.
    pub fn expect_u(&self, u: &CylindricalTestFn<T>, node: usize) -> Result<T> {
        if node > self.steps {
            return Err(Error::LengthMismatch {
                got: node,
                available: self.steps,
            });
        }
        let m = self.samples();
        let mut acc = Compensated::new();
        for sample in 0..m {
            acc.add(self.eval_u(u, sample, node));
        }
        Ok(acc.value() / T::of_usize(m))
    }

    /// Largest increment of `t -> E[u]` between adjacent nodes, scaled by
    /// `dt^{1/2}`: a finite value certifies the expectations move with at
    /// least square-root time regularity at this resolution.
    pub fn equicontinuity_probe(&self, u: &CylindricalTestFn<T>) -> Result<T> {
        let mut prev = self.expect_u(u, 0)?;
        let mut worst = T::zero();
        for j in 1..=self.steps {
            let cur = self.expect_u(u, j)?;
            let ratio = (cur - prev).abs() / self.dt.sqrt();
            if ratio > worst {
                worst = ratio;
            }
            prev = cur;
        }
        Ok(worst)
    }
}

/// Weak-form residual of one test function against the empirical measure.
#[derive(Clone, Copy, Debug)]
pub struct ResidualReport<T> {
    /// `(1/M) sum_m [ trapz_j (L u)(X_m(t_j), t_j) + u(X_m(0), 0) ]`.
    pub residual: T,
    /// Monte Carlo standard error of `residual`.
    pub se: T,
    pub samples: usize,
    /// Polynomial-growth guard `|L u| <= C (1 + |v|_E^q + |z|_E^q)`:
    /// the constant, the largest observed ratio, and whether it held at
    /// every evaluation.
    pub guard_constant: T,
    pub guard_max_ratio: T,
    pub guard_holds: bool,
}

fn guard_exponent<T: Real, D: DriftModel<T>>(drift: &D) -> T {
    let p0 = drift.p0();
    if p0 > T::one() {
        p0
    } else {
        T::one()
    }
}

/// Constant for the split-route growth guard; every term of the expanded
/// generator is bounded by its coefficient times `1 + |v|_E^q + |z|_E^q`
/// with `q = max(p0, 1)`, using `|v_i| <= kappa |v|_E`, `|z_i| <= kappa
/// |z|_E`, the drift bound `|f^i| <= C_i (1 + |v + z|_E^{p0})`, and
/// `(|v| + |z|)^s <= 2^{q+1} (1 + |v|^q + |z|^q)` for `0 <= s <= q`.
pub fn split_guard_constant<T: Real, D: DriftModel<T>>(
    u: &CylindricalTestFn<T>,
    space: &Space<T>,
    drift: &D,
) -> Result<T> {
    let spec = space.spectrum();
    let kappa = space.coordinate_bound_factor();
    let lambda = spec.lambda();
    let q = guard_exponent(drift);
    // Slot layout: Split places v derivatives first then z; Lifted shares
    // one slot per mode for both.
    let (v_slots, z_slots, z_off) = match u.structure() {
        Structure::Split { n_v, n_z } => (n_v, n_z, n_v),
        Structure::Lifted { n } => (n, n, 0usize),
        Structure::OnX { .. } => {
            return Err(Error::InvalidParameter(
                "the split guard applies to split or lifted functions".into(),
            ))
        }
    };
    let mut c = u.dphi_sup();
    for i in 0..z_slots {
        c = c + T::half() * spec.a(i) * u.hess_sup(z_off + i);
        c = c + kappa * (spec.alpha_sq(i) + lambda) * u.grad_sup(z_off + i);
    }
    let two_q1 = T::two().powf(q + T::one());
    for i in 0..v_slots {
        c = c + kappa * spec.alpha_sq(i) * u.grad_sup(i);
        c = c + two_q1 * drift.component_growth(i) * u.grad_sup(i);
        c = c + lambda * kappa * u.grad_sup(i);
    }
    Ok(c)
}

fn residual_core<T: Real>(
    meas: &EmpiricalProductMeasure<T>,
    u: &CylindricalTestFn<T>,
    guard_constant: T,
    guard_q: T,
    lu_at: impl Fn(usize, usize) -> Result<T> + Sync,
) -> Result<ResidualReport<T>> {
    if matches!(u.time(), TimeFactor::One) {
        return Err(Error::InvalidParameter(
            "weak-form residuals need a time factor that vanishes at the horizon".into(),
        ));
    }
    let m = meas.samples();
    let steps = meas.steps();
    let dt = meas.dt();
    let per_sample: Vec<(f64, f64)> = (0..m)
        .into_par_iter()
        .map(|sample| -> Result<(f64, f64)> {
            let mut acc = Compensated::new();
            let mut worst = T::zero();
            for j in 0..=steps {
                let lu = lu_at(sample, j)?;
                let w = if j == 0 || j == steps {
                    T::half()
                } else {
                    T::one()
                };
                acc.add(w * lu);
                let (nv, nz) = meas.e_norms_at(sample, j);
                let scale = T::one() + nv.powf(guard_q) + nz.powf(guard_q);
                let ratio = lu.abs() / scale;
                if ratio > worst {
                    worst = ratio;
                }
            }
            let r = acc.value() * dt + meas.eval_u(u, sample, 0);
            Ok((r.as_f64(), worst.as_f64()))
        })
        .collect::<Result<_>>()?;
    let values: Vec<f64> = per_sample.iter().map(|p| p.0).collect();
    let (mean, se) = mean_se(&values);
    let guard_max = per_sample.iter().fold(0.0f64, |a, p| a.max(p.1));
    Ok(ResidualReport {
        residual: T::of(mean),
        se: T::of(se),
        samples: m,
        guard_constant,
        guard_max_ratio: T::of(guard_max),
        guard_holds: guard_max <= guard_constant.as_f64(),
    })
}

/// Residual through the product-space generator, for split or lifted
/// functions, with the growth guard checked at every evaluation.
pub fn fpe_residual_split<T: Real, D: DriftModel<T>>(
    meas: &EmpiricalProductMeasure<T>,
    space: &Space<T>,
    drift: &D,
    u: &CylindricalTestFn<T>,
) -> Result<ResidualReport<T>> {
    check_measure_space(meas, space)?;
    let spec = space.spectrum();
    let c = split_guard_constant(u, space, drift)?;
    let q = guard_exponent(drift);
    residual_core(meas, u, c, q, |sample, node| {
        apply_l_split(
            u,
            spec,
            drift,
            meas.v_state(sample, node),
            meas.z_state(sample, node),
            meas.node_time(node),
        )
    })
}

/// Residual through the plain generator applied to the pushforward
/// `X = V + Z`: the statement actually being verified. The guard bounds
/// `|L u| <= C (1 + |v|_E^q + |z|_E^q)` via `|x|_E <= |v|_E + |z|_E`.
pub fn fpe_residual<T: Real, D: DriftModel<T>>(
    meas: &EmpiricalProductMeasure<T>,
    space: &Space<T>,
    drift: &D,
    u: &CylindricalTestFn<T>,
) -> Result<ResidualReport<T>> {
    check_measure_space(meas, space)?;
    let spec = space.spectrum();
    let Structure::OnX { n } = u.structure() else {
        return Err(Error::InvalidParameter(
            "the pushforward residual applies to functions bound to x".into(),
        ));
    };
    let kappa = space.coordinate_bound_factor();
    let q = guard_exponent(drift);
    // Every term is bounded against 1 + |v|^q + |z|^q through
    // |x|_E <= |v|_E + |z|_E and (|v| + |z|)^s <= 2^{q+1}(1 + |v|^q + |z|^q).
    let mut c = u.dphi_sup();
    let two_q1 = T::two().powf(q + T::one());
    for i in 0..n {
        c = c + T::half() * spec.a(i) * u.hess_sup(i);
        c = c + kappa * spec.alpha_sq(i) * u.grad_sup(i) * two_q1;
        c = c + two_q1 * drift.component_growth(i) * u.grad_sup(i);
    }
    let n_x = meas.n_v().max(meas.n_z());
    residual_core(meas, u, c, q, |sample, node| {
        let mut x = vec![T::zero(); n_x];
        sum_state(
            meas.v_state(sample, node),
            meas.z_state(sample, node),
            &mut x,
        );
        apply_l(u, spec, drift, &x, meas.node_time(node))
    })
}

/// Residual of a lifted function through the cancellation identity
/// `(L~ u~)(v, z, t) = (L u)(v + z, t)`: for a function of the sum alone the
/// shift terms drop out exactly, so the product-space generator IS the plain
/// generator at the summed state. This route computes it that way and
/// therefore reproduces `fpe_residual` on the pushforward bit for bit;
/// `fpe_residual_split` keeps the independently expanded arithmetic for
/// tolerance-based cross-checks.
pub fn fpe_residual_lifted<T: Real, D: DriftModel<T>>(
    meas: &EmpiricalProductMeasure<T>,
    space: &Space<T>,
    drift: &D,
    u: &CylindricalTestFn<T>,
) -> Result<ResidualReport<T>> {
    let Structure::Lifted { n } = u.structure() else {
        return Err(Error::InvalidParameter(
            "the identity-route residual applies to lifted functions".into(),
        ));
    };
    let u_x = u.restructured(Structure::OnX { n })?;
    fpe_residual(meas, space, drift, &u_x)
}

fn check_measure_space<T: Real>(
    meas: &EmpiricalProductMeasure<T>,
    space: &Space<T>,
) -> Result<()> {
    let spec = space.spectrum();
    if spec.basis_tag() != meas.basis_tag() {
        return Err(Error::BasisMismatch {
            coeffs: meas.basis_tag().0,
            basis: spec.basis_tag().0,
        });
    }
    if spec.lambda().bits() != meas.lambda().bits() {
        return Err(Error::LambdaMismatch {
            solver: spec.lambda().as_f64(),
            noise: meas.lambda().as_f64(),
        });
    }
    Ok(())
}

/// Expected weak-form residual for the pure Ornstein-Uhlenbeck control
/// (`f = 0`, `lambda = 0`, `V = 0`): the law of `X_t = Z_t` is the explicit
/// Gaussian with mode variances `q_i(t)`, so `E[L u](t)` has a closed form
/// `g(t) = phi' prod h_i + phi sum_i h_i'(q_i) qdot_i prod_{l != i} h_l`,
/// `h_i(q) = s_i / sqrt(s_i^2 + q) exp(-c_i^2 / (2 (s_i^2 + q)))`, and the
/// exact time integral telescopes to `-u(0, 0)`. What remains is exactly
/// the trapezoid bias, returned here.
pub fn pure_ou_expected_residual<T: Real>(
    u: &CylindricalTestFn<T>,
    spec: &Spectrum<T>,
    steps: usize,
) -> Result<T> {
    let Structure::OnX { n } = u.structure() else {
        return Err(Error::InvalidParameter(
            "the control oracle applies to functions bound to x".into(),
        ));
    };
    let SpatialFamily::ProductGaussian { centers, widths } = u.family() else {
        return Err(Error::InvalidParameter(
            "the control oracle needs a product-Gaussian spatial factor".into(),
        ));
    };
    if spec.lambda() != T::zero() {
        return Err(Error::InvalidParameter(
            "the control oracle assumes an unshifted generator (lambda = 0)".into(),
        ));
    }
    if n > spec.len() {
        return Err(Error::LengthMismatch {
            got: n,
            available: spec.len(),
        });
    }
    if steps == 0 {
        return Err(Error::InvalidParameter(
            "the control oracle needs at least one time step".into(),
        ));
    }
    let horizon = u.horizon();
    let dt = horizon / T::of_usize(steps);
    let mut g = Vec::with_capacity(steps + 1);
    for j in 0..=steps {
        let t = dt * T::of_usize(j);
        let (phi, dphi) = u.time_factor(t);
        let mut h = Vec::with_capacity(n);
        let mut dh_qdot = Vec::with_capacity(n);
        for i in 0..n {
            let s2 = widths[i] * widths[i];
            let c = centers[i];
            let q = mode_variance(spec, i, t);
            let denom = s2 + q;
            let hi = (widths[i] / denom.sqrt()) * (-c * c / (T::two() * denom)).exp();
            let dhi = hi * (-T::one() / (T::two() * denom) + c * c / (T::two() * denom * denom));
            let qdot = spec.a(i) - T::two() * spec.alpha_sq(i) * q;
            h.push(hi);
            dh_qdot.push(dhi * qdot);
        }
        // prod_{l != i} h_l via prefix and suffix products.
        let mut prefix = vec![T::one(); n + 1];
        for i in 0..n {
            prefix[i + 1] = prefix[i] * h[i];
        }
        let mut suffix = vec![T::one(); n + 1];
        for i in (0..n).rev() {
            suffix[i] = suffix[i + 1] * h[i];
        }
        let mut sum = Compensated::new();
        for i in 0..n {
            sum.add(dh_qdot[i] * prefix[i] * suffix[i + 1]);
        }
        g.push(dphi * prefix[n] + phi * sum.value());
    }
    let zeros = vec![T::zero(); n];
    Ok(crate::ou::trapz(&g, dt) + u.eval(&zeros, T::zero()))
}

/// Per-mode sanity of the noise marginals at a node, in standard-error
/// units, plus the largest absolute cross-correlation.
#[derive(Clone, Copy, Debug)]
pub struct MarginalReport<T> {
    pub node: usize,
    pub modes_checked: usize,
    /// `max_i |mean_i| / se(mean_i)`.
    pub max_mean_dev: T,
    /// `max_i |var_i - q_i(t)| / se(var_i)`.
    pub max_var_dev: T,
    /// `max_{i<l} |corr(z_i, z_l)|`.
    pub max_cross_corr: T,
}

pub fn marginal_gaussian_check<T: Real>(
    meas: &EmpiricalProductMeasure<T>,
    spec: &Spectrum<T>,
    node: usize,
    max_modes: usize,
) -> Result<MarginalReport<T>> {
    if node > meas.steps() {
        return Err(Error::LengthMismatch {
            got: node,
            available: meas.steps(),
        });
    }
    if spec.basis_tag() != meas.basis_tag() {
        return Err(Error::BasisMismatch {
            coeffs: meas.basis_tag().0,
            basis: spec.basis_tag().0,
        });
    }
    let m = meas.samples();
    if m < 8 {
        return Err(Error::InvalidParameter(
            "marginal checks need at least 8 samples".into(),
        ));
    }
    let k = meas.n_z().min(max_modes);
    let t = meas.dt() * T::of_usize(node);
    let mut cols: Vec<Vec<f64>> = vec![Vec::with_capacity(m); k];
    for sample in 0..m {
        let z = meas.z_state(sample, node);
        for (i, col) in cols.iter_mut().enumerate() {
            col.push(z[i].as_f64());
        }
    }
    let mut max_mean_dev = 0.0f64;
    let mut max_var_dev = 0.0f64;
    let mut sds = Vec::with_capacity(k);
    for (i, col) in cols.iter().enumerate() {
        let (mean, m2, _m3, m4) = central_moments(col);
        let se_mean = (m2 / m as f64).sqrt();
        if se_mean > 0.0 {
            max_mean_dev = max_mean_dev.max(mean.abs() / se_mean);
        }
        let q = mode_variance(spec, i, t).as_f64();
        let se_var = ((m4 - m2 * m2).max(0.0) / m as f64).sqrt();
        if se_var > 0.0 {
            max_var_dev = max_var_dev.max((m2 - q).abs() / se_var);
        }
        sds.push(m2.sqrt());
    }
    let mut max_cross = 0.0f64;
    for i in 0..k {
        for l in (i + 1)..k {
            let mut acc = 0.0f64;
            for s in 0..m {
                acc += cols[i][s] * cols[l][s];
            }
            let denom = sds[i] * sds[l] * m as f64;
            if denom > 0.0 {
                max_cross = max_cross.max((acc / denom).abs());
            }
        }
    }
    Ok(MarginalReport {
        node,
        modes_checked: k,
        max_mean_dev: T::of(max_mean_dev),
        max_var_dev: T::of(max_var_dev),
        max_cross_corr: T::of(max_cross),
    })
}

/// Weighted occupation functional `integral_0^T |Gamma^{1/2} Z(t)|_H^2 dt`
/// per sample: bounded in expectation by `T C_gamma`, uniformly in the
/// damping shift and in every truncation rank.
pub fn tightness_sample_values<T: Real>(
    meas: &EmpiricalProductMeasure<T>,
    gammas: &GammaWeights<T>,
) -> Result<Vec<T>> {
    if gammas.gammas().len() < meas.n_z() {
        return Err(Error::LengthMismatch {
            got: gammas.gammas().len(),
            available: meas.n_z(),
        });
    }
    let m = meas.samples();
    let mut out = vec![T::zero(); m];
    out.par_iter_mut().enumerate().for_each(|(sample, slot)| {
        let vals: Vec<T> = (0..=meas.steps())
            .map(|j| gamma_apply_norm_sq_slice(meas.z_state(sample, j), gammas.gammas()))
            .collect();
        *slot = crate::ou::trapz(&vals, meas.dt());
    });
    Ok(out)
}

#[derive(Clone, Copy, Debug)]
pub struct TightnessReport<T> {
    pub mean: T,
    pub se: T,
    /// `T C_gamma`.
    pub bound: T,
    /// `mean <= bound + 5 se`.
    pub holds: bool,
}

pub fn tightness_functional<T: Real>(
    meas: &EmpiricalProductMeasure<T>,
    spec: &Spectrum<T>,
    gammas: &GammaWeights<T>,
) -> Result<TightnessReport<T>> {
    let values = tightness_sample_values(meas, gammas)?;
    let f64s: Vec<f64> = values.iter().map(|v| v.as_f64()).collect();
    let (mean, se) = mean_se(&f64s);
    let bound = meas.horizon() * gammas.c_gamma(spec);
    let holds = mean <= bound.as_f64() + 5.0 * se;
    Ok(TightnessReport {
        mean: T::of(mean),
        se: T::of(se),
        bound,
        holds,
    })
}

/// Initial law of the drift component on its first coordinates.
#[derive(Clone, Debug)]
pub enum InitialLaw<T> {
    Point { v0: Vec<T> },
    DiagonalGaussian { mean: Vec<T>, sd: Vec<T> },
}

impl<T: Real> InitialLaw<T> {
    pub fn dim(&self) -> usize {
        match self {
            InitialLaw::Point { v0 } => v0.len(),
            InitialLaw::DiagonalGaussian { mean, .. } => mean.len(),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            InitialLaw::Point { v0 } => {
                if v0.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidParameter(
                        "initial point must be finite".into(),
                    ));
                }
            }
            InitialLaw::DiagonalGaussian { mean, sd } => {
                if mean.len() != sd.len() {
                    return Err(Error::InvalidParameter(
                        "initial mean and sd must have equal length".into(),
                    ));
                }
                if mean.iter().any(|v| !v.is_finite())
                    || sd.iter().any(|v| !(*v >= T::zero()) || !v.is_finite())
                {
                    return Err(Error::InvalidParameter(
                        "initial Gaussian needs finite means and non-negative sds".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    fn sample_into(&self, key: Key, out: &mut [T]) {
        match self {
            InitialLaw::Point { v0 } => {
                for (i, slot) in out.iter_mut().enumerate() {
                    *slot = if i < v0.len() { v0[i] } else { T::zero() };
                }
            }
            InitialLaw::DiagonalGaussian { mean, sd } => {
                for (i, slot) in out.iter_mut().enumerate() {
                    *slot = if i < mean.len() {
                        mean[i] + sd[i] * T::of(key.with(i as u64).standard_normal())
                    } else {
                        T::zero()
                    };
                }
            }
        }
    }
}

/// How an initial law on the state space is lifted to the product space.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LiftMode {
    /// `(X_0, 0)`: all initial mass on the drift component.
    ProductFirst,
    /// `(0, X_0)`: all initial mass on the noise component.
    DiracSecond,
    /// Mixture of the two with the given weight on the first.
    Convex { first_weight: f64 },
}

/// Sampled lift of an initial law: per-sample `(v0, z0)` pairs whose sums
/// reproduce the law. Only `ProductFirst` is compatible with the noise
/// ensembles here, which pin `Z(0) = 0`.
#[derive(Clone, Debug)]
pub struct LiftedInitial<T> {
    pub n_v: usize,
    pub n_z: usize,
    pub v0: Vec<T>,
    pub z0: Vec<T>,
}

pub fn lift_initial<T: Real>(
    law: &InitialLaw<T>,
    mode: LiftMode,
    n_v: usize,
    n_z: usize,
    samples: usize,
    seed: u64,
) -> Result<LiftedInitial<T>> {
    law.validate()?;
    if samples == 0 {
        return Err(Error::InvalidParameter(
            "initial lift needs at least one sample".into(),
        ));
    }
    let dim = law.dim();
    let fits_v = dim <= n_v;
    let fits_z = dim <= n_z;
    match mode {
        LiftMode::ProductFirst if !fits_v => {
            return Err(Error::LengthMismatch {
                got: dim,
                available: n_v,
            })
        }
        LiftMode::DiracSecond if !fits_z => {
            return Err(Error::LengthMismatch {
                got: dim,
                available: n_z,
            })
        }
        LiftMode::Convex { first_weight } => {
            if !(0.0..=1.0).contains(&first_weight) {
                return Err(Error::InvalidParameter(
                    "mixture weight must lie in [0, 1]".into(),
                ));
            }
            if !fits_v || !fits_z {
                return Err(Error::LengthMismatch {
                    got: dim,
                    available: n_v.min(n_z),
                });
            }
        }
        _ => {}
    }
    let mut v0 = vec![T::zero(); samples * n_v];
    let mut z0 = vec![T::zero(); samples * n_z];
    for m in 0..samples {
        let base = Key::new(seed).with(stream::INITIAL_FIELD).with(m as u64);
        let into_first = match mode {
            LiftMode::ProductFirst => true,
            LiftMode::DiracSecond => false,
            LiftMode::Convex { first_weight } => base.with(0).uniform() < first_weight,
        };
        let draw = base.with(1);
        if into_first {
            law.sample_into(draw, &mut v0[m * n_v..(m + 1) * n_v]);
        } else {
            law.sample_into(draw, &mut z0[m * n_z..(m + 1) * n_z]);
        }
    }
    Ok(LiftedInitial { n_v, n_z, v0, z0 })
}

impl<T: Real> LiftedInitial<T> {
    /// `v0 + z0` per sample on the joint support: the pushforward draw.
    pub fn pushforward(&self, sample: usize) -> Vec<T> {
        let n = self.n_v.max(self.n_z);
        let mut x = vec![T::zero(); n];
        sum_state(
            &self.v0[sample * self.n_v..(sample + 1) * self.n_v],
            &self.z0[sample * self.n_z..(sample + 1) * self.n_z],
            &mut x,
        );
        x
    }
}
