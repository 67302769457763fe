//! Cylindrical test functions `u(x, t) = phi(t) g(x_1, ..., x_m)`.
//!
//! The spatial factor `g` is a finite product of smooth one-dimensional
//! factors (Gaussian bells or cosines), so every first and second partial
//! derivative has a closed form, and so do global sup bounds on `g`, its
//! gradient, and its diagonal Hessian. The time factor vanishes at the
//! horizon exactly (a hard branch, not just to rounding), which is what the
//! weak-solution identity requires of admissible test functions.
//!
//! A test function also carries a [`Structure`] describing how its spatial
//! coordinates bind to the state: directly to `x`, to separate `(v, z)`
//! blocks of the product space, or to the sum `v + z` (the lift of a
//! function of `x`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, Key};
use crate::scalar::Real;

/// One-dimensional factor family of the spatial product.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum SpatialFamily<T> {
    /// `g(y) = prod_i exp(-(y_i - c_i)^2 / (2 s_i^2))`.
    ProductGaussian { centers: Vec<T>, widths: Vec<T> },
    /// `g(y) = prod_i cos(w_i y_i + p_i)`.
    TrigProduct { freqs: Vec<T>, phases: Vec<T> },
}

/// Scalar time factor; all choices have `|phi| <= 1` and `phi(0) = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TimeFactor {
    /// `phi = 1` (not admissible for the terminal-zero identity).
    One,
    /// `phi(t) = cos(pi t / (2 T))`, pinned to exactly zero at `t >= T`.
    CosineRamp,
    /// `phi(t) = (1 - t/T)^2`, exactly zero at `t >= T`.
    QuadraticDecay,
}

/// How the spatial coordinates bind to the state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Structure {
    /// `u(x) = g(x_1..x_n)`.
    OnX { n: usize },
    /// `u(v, z) = g(v_1..v_{nv}, z_1..z_{nz})`.
    Split { n_v: usize, n_z: usize },
    /// `u(v, z) = g((v+z)_1..(v+z)_n)`: the lift of an `OnX` function.
    Lifted { n: usize },
}

impl Structure {
    /// Number of coordinates the spatial factor consumes.
    pub fn arity(&self) -> usize {
        match *self {
            Structure::OnX { n } | Structure::Lifted { n } => n,
            Structure::Split { n_v, n_z } => n_v + n_z,
        }
    }
}

/// Value, gradient, and diagonal Hessian of the spatial factor at a point.
#[derive(Clone, Debug)]
pub struct SpatialJet<T> {
    pub value: T,
    pub grad: Vec<T>,
    pub hess_diag: Vec<T>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CylindricalTestFn<T> {
    family: SpatialFamily<T>,
    time: TimeFactor,
    structure: Structure,
    horizon: T,
}

impl<T: Real> CylindricalTestFn<T> {
    pub fn new(
        family: SpatialFamily<T>,
        time: TimeFactor,
        structure: Structure,
        horizon: T,
    ) -> Result<Self> {
        if !(horizon > T::zero()) {
            return Err(Error::InvalidParameter(
                "test function horizon must be positive".into(),
            ));
        }
        let arity = structure.arity();
        if arity == 0 {
            return Err(Error::InvalidParameter(
                "cylindrical test function needs at least one coordinate".into(),
            ));
        }
        let family_arity = match &family {
            SpatialFamily::ProductGaussian { centers, widths } => {
                if centers.len() != widths.len() {
                    return Err(Error::InvalidParameter(
                        "centers and widths must have equal length".into(),
                    ));
                }
                if widths.iter().any(|w| !(*w > T::zero() && w.is_finite())) {
                    return Err(Error::InvalidParameter(
                        "Gaussian widths must be positive and finite".into(),
                    ));
                }
                if centers.iter().any(|c| !c.is_finite()) {
                    return Err(Error::InvalidParameter(
                        "Gaussian centers must be finite".into(),
                    ));
                }
                centers.len()
            }
            SpatialFamily::TrigProduct { freqs, phases } => {
                if freqs.len() != phases.len() {
                    return Err(Error::InvalidParameter(
                        "frequencies and phases must have equal length".into(),
                    ));
                }
                if freqs.iter().chain(phases).any(|v| !v.is_finite()) {
                    return Err(Error::InvalidParameter(
                        "frequencies and phases must be finite".into(),
                    ));
                }
                freqs.len()
            }
        };
        if family_arity != arity {
            return Err(Error::InvalidParameter(format!(
                "spatial factor has {family_arity} coordinates but the structure binds {arity}"
            )));
        }
        Ok(CylindricalTestFn {
            family,
            time,
            structure,
            horizon,
        })
    }

    pub fn structure(&self) -> Structure {
        self.structure
    }

    pub fn family(&self) -> &SpatialFamily<T> {
        &self.family
    }

    /// Same spatial and time factors bound to a different structure of
    /// equal arity: e.g. the lift of an `OnX` function to the product space.
    pub fn restructured(&self, structure: Structure) -> Result<Self> {
        CylindricalTestFn::new(
            self.family.clone(),
            self.time,
            structure,
            self.horizon,
        )
    }

    pub fn time(&self) -> TimeFactor {
        self.time
    }

    pub fn horizon(&self) -> T {
        self.horizon
    }

    pub fn arity(&self) -> usize {
        self.structure.arity()
    }

    /// Per-coordinate factor `(f, f', f'')`.
    #[inline]
    fn factor(&self, i: usize, y: T) -> (T, T, T) {
        match &self.family {
            SpatialFamily::ProductGaussian { centers, widths } => {
                let s2 = widths[i] * widths[i];
                let u = (y - centers[i]) / s2;
                let f = (-(y - centers[i]) * (y - centers[i]) / (T::two() * s2)).exp();
                (f, -u * f, (u * u - s2.recip()) * f)
            }
            SpatialFamily::TrigProduct { freqs, phases } => {
                let w = freqs[i];
                let arg = w * y + phases[i];
                let (s, c) = (arg.sin(), arg.cos());
                (c, -w * s, -w * w * c)
            }
        }
    }

    /// Value, gradient, and diagonal Hessian of `g` at `y`
    /// (`y.len() == arity`). Prefix/suffix products keep the jet exact even
    /// when individual factors vanish.
    pub fn g_jet(&self, y: &[T]) -> SpatialJet<T> {
        let m = self.arity();
        assert_eq!(y.len(), m, "spatial jet needs exactly arity coordinates");
        let mut f = Vec::with_capacity(m);
        let mut fp = Vec::with_capacity(m);
        let mut fpp = Vec::with_capacity(m);
        for (i, &yi) in y.iter().enumerate() {
            let (a, b, c) = self.factor(i, yi);
            f.push(a);
            fp.push(b);
            fpp.push(c);
        }
        // prefix[i] = prod_{l<i} f_l, suffix[i] = prod_{l>i} f_l.
        let mut prefix = vec![T::one(); m + 1];
        for i in 0..m {
            prefix[i + 1] = prefix[i] * f[i];
        }
        let mut suffix = vec![T::one(); m + 1];
        for i in (0..m).rev() {
            suffix[i] = suffix[i + 1] * f[i];
        }
        let mut grad = Vec::with_capacity(m);
        let mut hess = Vec::with_capacity(m);
        for i in 0..m {
            let rest = prefix[i] * suffix[i + 1];
            grad.push(fp[i] * rest);
            hess.push(fpp[i] * rest);
        }
        SpatialJet {
            value: prefix[m],
            grad,
            hess_diag: hess,
        }
    }

    /// `(phi(t), phi'(t))`. The value is exactly zero at and beyond the
    /// horizon for the terminal-zero families.
    pub fn time_factor(&self, t: T) -> (T, T) {
        let big_t = self.horizon;
        match self.time {
            TimeFactor::One => (T::one(), T::zero()),
            TimeFactor::CosineRamp => {
                let w = T::of(std::f64::consts::FRAC_PI_2) / big_t;
                if t >= big_t {
                    return (T::zero(), -w * (w * t).sin());
                }
                ((w * t).cos(), -w * (w * t).sin())
            }
            TimeFactor::QuadraticDecay => {
                if t >= big_t {
                    return (T::zero(), T::zero());
                }
                let r = T::one() - t / big_t;
                (r * r, -T::two() * r / big_t)
            }
        }
    }

    /// Global bound `sup |g| <= 1` (all factors are bounded by one).
    pub fn value_sup(&self) -> T {
        T::one()
    }

    /// Global bound on `|d g / d y_i|`.
    pub fn grad_sup(&self, i: usize) -> T {
        match &self.family {
            // sup |u| e^{-u^2/2} / s = e^{-1/2} / s, attained at u = 1.
            SpatialFamily::ProductGaussian { widths, .. } => {
                T::of((-0.5f64).exp()) / widths[i]
            }
            SpatialFamily::TrigProduct { freqs, .. } => freqs[i].abs(),
        }
    }

    /// Global bound on `|d^2 g / d y_i^2|`.
    pub fn hess_sup(&self, i: usize) -> T {
        match &self.family {
            // sup |u^2 - 1| e^{-u^2/2} = 1, attained at u = 0.
            SpatialFamily::ProductGaussian { widths, .. } => (widths[i] * widths[i]).recip(),
            SpatialFamily::TrigProduct { freqs, .. } => freqs[i] * freqs[i],
        }
    }

    /// Global bound on `|phi'|`.
    pub fn dphi_sup(&self) -> T {
        match self.time {
            TimeFactor::One => T::zero(),
            TimeFactor::CosineRamp => T::of(std::f64::consts::FRAC_PI_2) / self.horizon,
            TimeFactor::QuadraticDecay => T::two() / self.horizon,
        }
    }

    /// Full value `phi(t) g(y)`; `y` must already be the bound coordinates.
    pub fn eval(&self, y: &[T], t: T) -> T {
        let (phi, _) = self.time_factor(t);
        if phi == T::zero() {
            return T::zero();
        }
        phi * self.g_jet(y).value
    }
}

/// Deterministic six-function suite over mixed families, time factors, and
/// parameter draws; used by the residual experiments. The structure is the
/// caller's choice, applied to all six.
pub fn suite<T: Real>(
    horizon: T,
    structure: Structure,
    seed: u64,
) -> Result<Vec<CylindricalTestFn<T>>> {
    let m = structure.arity();
    let key = Key::new(seed).with(stream::AUDIT_POINT);
    let mut out = Vec::with_capacity(6);
    for j in 0..6u64 {
        let kj = key.with(j);
        let time = if j % 2 == 0 {
            TimeFactor::CosineRamp
        } else {
            TimeFactor::QuadraticDecay
        };
        let family = if j % 3 == 2 {
            let freqs = (0..m)
                .map(|i| T::of(0.5 + 1.1 * kj.with(1).with(i as u64).uniform()))
                .collect();
            let phases = (0..m)
                .map(|i| T::of(std::f64::consts::TAU * kj.with(2).with(i as u64).uniform()))
                .collect();
            SpatialFamily::TrigProduct { freqs, phases }
        } else {
            let centers = (0..m)
                .map(|i| T::of(1.5 * (kj.with(3).with(i as u64).uniform() - 0.5)))
                .collect();
            let widths = (0..m)
                .map(|i| T::of(0.6 + 0.9 * kj.with(4).with(i as u64).uniform()))
                .collect();
            SpatialFamily::ProductGaussian { centers, widths }
        };
        out.push(CylindricalTestFn::new(family, time, structure, horizon)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian(m: usize) -> CylindricalTestFn<f64> {
        let centers: Vec<f64> = (0..m).map(|i| 0.3 * i as f64 - 0.2).collect();
        let widths: Vec<f64> = (0..m).map(|i| 0.7 + 0.2 * i as f64).collect();
        CylindricalTestFn::new(
            SpatialFamily::ProductGaussian { centers, widths },
            TimeFactor::CosineRamp,
            Structure::OnX { n: m },
            1.0,
        )
        .unwrap()
    }

    fn trig(m: usize) -> CylindricalTestFn<f64> {
        let freqs: Vec<f64> = (0..m).map(|i| 0.8 + 0.3 * i as f64).collect();
        let phases: Vec<f64> = (0..m).map(|i| 0.1 + 0.5 * i as f64).collect();
        CylindricalTestFn::new(
            SpatialFamily::TrigProduct { freqs, phases },
            TimeFactor::QuadraticDecay,
            Structure::OnX { n: m },
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn jets_match_central_finite_differences() {
        // Independent oracle: 5-point central differences in each coordinate.
        let h = 1e-5f64;
        for f in [gaussian(3), trig(3)] {
            for p in 0..10u64 {
                let key = Key::new(5).with(stream::AUDIT_POINT).with(p);
                let y: Vec<f64> = (0..3u64)
                    .map(|i| 3.0 * (key.with(i).uniform() - 0.5))
                    .collect();
                let jet = f.g_jet(&y);
                let g0 = f.g_jet(&y).value;
                assert_eq!(jet.value, g0);
                for i in 0..3 {
                    let eval_at = |d: f64| {
                        let mut yy = y.clone();
                        yy[i] += d;
                        f.g_jet(&yy).value
                    };
                    let (m2, m1, p1, p2) =
                        (eval_at(-2.0 * h), eval_at(-h), eval_at(h), eval_at(2.0 * h));
                    let fd1 = (m2 - 8.0 * m1 + 8.0 * p1 - p2) / (12.0 * h);
                    let fd2 = (-m2 + 16.0 * m1 - 30.0 * g0 + 16.0 * p1 - p2)
                        / (12.0 * h * h);
                    assert!(
                        (jet.grad[i] - fd1).abs() < 1e-8 * (1.0 + fd1.abs()),
                        "grad[{i}] {} vs {fd1}",
                        jet.grad[i]
                    );
                    assert!(
                        (jet.hess_diag[i] - fd2).abs() < 1e-5 * (1.0 + fd2.abs()),
                        "hess[{i}] {} vs {fd2}",
                        jet.hess_diag[i]
                    );
                }
            }
        }
    }

    #[test]
    fn gradient_survives_exact_factor_zeros() {
        // cos(pi/2) zero at y_0 = (pi/2 - phase)/freq: value and the other
        // gradients vanish, the own-coordinate gradient does not.
        let f = CylindricalTestFn::new(
            SpatialFamily::TrigProduct {
                freqs: vec![1.0, 1.0],
                phases: vec![0.0, 0.0],
            },
            TimeFactor::One,
            Structure::OnX { n: 2 },
            1.0,
        )
        .unwrap();
        let y = [std::f64::consts::FRAC_PI_2, 0.3];
        let jet = f.g_jet(&y);
        assert!(jet.value.abs() < 1e-15);
        assert!(jet.grad[1].abs() < 1e-15);
        assert!((jet.grad[0] + 0.3f64.cos()).abs() < 1e-12);
        assert!(jet.grad.iter().chain(&jet.hess_diag).all(|v| v.is_finite()));
    }

    #[test]
    fn time_factor_is_exactly_zero_at_the_horizon() {
        for time in [TimeFactor::CosineRamp, TimeFactor::QuadraticDecay] {
            let f = CylindricalTestFn::new(
                SpatialFamily::ProductGaussian {
                    centers: vec![0.0],
                    widths: vec![1.0],
                },
                time,
                Structure::OnX { n: 1 },
                0.7,
            )
            .unwrap();
            let (phi0, _) = f.time_factor(0.0);
            assert_eq!(phi0, 1.0);
            let (phi_t, _) = f.time_factor(0.7);
            assert_eq!(phi_t, 0.0, "{time:?}");
            assert_eq!(f.time_factor(0.9).0, 0.0);
            assert_eq!(f.eval(&[0.0], 0.7), 0.0);
        }
    }

    #[test]
    fn time_derivative_matches_finite_differences() {
        let f = gaussian(1);
        let h = 1e-6;
        for &t in &[0.1, 0.5, 0.93] {
            let (_, dphi) = f.time_factor(t);
            let fd = (f.time_factor(t + h).0 - f.time_factor(t - h).0) / (2.0 * h);
            assert!((dphi - fd).abs() < 1e-8, "t={t}: {dphi} vs {fd}");
        }
    }

    #[test]
    fn sup_bounds_hold_and_are_attained_up_to_slack() {
        for f in [gaussian(2), trig(2)] {
            let mut best_g: f64 = 0.0;
            let mut best_d = [0.0f64; 2];
            let mut best_h = [0.0f64; 2];
            for p in 0..4000u64 {
                let key = Key::new(8).with(stream::AUDIT_POINT).with(p);
                let y: Vec<f64> = (0..2u64)
                    .map(|i| 8.0 * (key.with(i).uniform() - 0.5))
                    .collect();
                let jet = f.g_jet(&y);
                best_g = best_g.max(jet.value.abs());
                for i in 0..2 {
                    assert!(jet.grad[i].abs() <= f.grad_sup(i) * (1.0 + 1e-12));
                    assert!(jet.hess_diag[i].abs() <= f.hess_sup(i) * (1.0 + 1e-12));
                    best_d[i] = best_d[i].max(jet.grad[i].abs());
                    best_h[i] = best_h[i].max(jet.hess_diag[i].abs());
                }
                assert!(jet.value.abs() <= f.value_sup());
            }
            // The bounds are within a small constant of attainable values.
            assert!(best_g > 0.5);
            for i in 0..2 {
                assert!(best_d[i] > 0.3 * f.grad_sup(i));
                assert!(best_h[i] > 0.3 * f.hess_sup(i));
            }
        }
    }

    #[test]
    fn construction_rejects_inconsistent_data() {
        assert!(CylindricalTestFn::<f64>::new(
            SpatialFamily::ProductGaussian {
                centers: vec![0.0],
                widths: vec![1.0]
            },
            TimeFactor::One,
            Structure::OnX { n: 2 },
            1.0
        )
        .is_err());
        assert!(CylindricalTestFn::<f64>::new(
            SpatialFamily::ProductGaussian {
                centers: vec![0.0],
                widths: vec![0.0]
            },
            TimeFactor::One,
            Structure::OnX { n: 1 },
            1.0
        )
        .is_err());
        assert!(CylindricalTestFn::<f64>::new(
            SpatialFamily::TrigProduct {
                freqs: vec![],
                phases: vec![]
            },
            TimeFactor::One,
            Structure::Split { n_v: 0, n_z: 0 },
            1.0
        )
        .is_err());
    }

    #[test]
    fn suite_is_deterministic_and_mixed() {
        let a = suite::<f64>(1.0, Structure::Lifted { n: 3 }, 11).unwrap();
        let b = suite::<f64>(1.0, Structure::Lifted { n: 3 }, 11).unwrap();
        assert_eq!(a.len(), 6);
        for (f, g) in a.iter().zip(&b) {
            let y = [0.2, -0.4, 0.9];
            assert_eq!(f.eval(&y, 0.3).to_bits(), g.eval(&y, 0.3).to_bits());
        }
        let n_trig = a
            .iter()
            .filter(|f| matches!(f.family, SpatialFamily::TrigProduct { .. }))
            .count();
        assert_eq!(n_trig, 2);
        assert!(a.iter().any(|f| f.time() == TimeFactor::CosineRamp));
        assert!(a.iter().any(|f| f.time() == TimeFactor::QuadraticDecay));
        assert!(a.iter().all(|f| f.structure() == Structure::Lifted { n: 3 }));
    }
}
