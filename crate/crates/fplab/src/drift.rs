//! Drift models `f(x, t)` for the projected dynamics.
//!
//! Two families are implemented. [`LinearGrowthDrift`] covers bounded and
//! linearly growing abstract drifts (zero, componentwise tanh coupling, and
//! an energy-neutral rotation). [`NavierStokesDrift`] is the spectral
//! projection of the advection nonlinearity on the torus,
//! `f^i(x) = integral (x . grad) e_i . x dxi`, evaluated by exact grid
//! quadrature: all integrands are trigonometric polynomials of per-axis
//! bandwidth at most `3 F`, so a grid with `3 F + 1` points per axis
//! integrates them without quadrature error. An independent slow reference
//! route through complex Fourier convolution lives in
//! [`convolution_reference`].

use std::collections::HashMap;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::spectrum::BasisTag;
use crate::stats::Compensated;
use crate::torus::{GridTable, Parity, TorusBasis};

/// Common contract of drift models: componentwise evaluation plus the
/// growth data used by the integrability guard and energy monitors.
pub trait DriftModel<T: Real>: Send + Sync {
    fn name(&self) -> &str;

    /// Largest number of output components this model can produce.
    fn dim_out_max(&self) -> usize;

    /// Growth degree: `|f^i(x, t)| <= component_growth(i) (1 + |x|_E^p0)`.
    fn p0(&self) -> T;

    /// Noise exponent `k0` of the energy-inequality right-hand side.
    fn k0(&self) -> T;

    fn component_growth(&self, i: usize) -> T;

    /// Basis the model is bound to, if any.
    fn basis_tag(&self) -> Option<BasisTag>;

    /// Writes `f^i(x, t)` for `i < out.len()`.
    fn eval_into(&self, x: &[T], t: T, out: &mut [T]) -> Result<()>;
}

#[derive(Clone, Copy, Debug)]
pub enum LinearGrowthKind<T> {
    /// `f = 0`: the pure OU control model.
    Zero,
    /// `f^i(x, t) = amplitude (1 + sin(t)/2) tanh(x_{i+1 mod dim})`:
    /// bounded, non-Lipschitz-free, genuinely time dependent.
    Tanh { amplitude: T },
    /// Pairwise rotation `f^{2j} = -rate x_{2j+1}`, `f^{2j+1} = rate x_{2j}`:
    /// linear growth with exact energy neutrality.
    Rotation { rate: T },
}

#[derive(Clone, Debug)]
pub struct LinearGrowthDrift<T> {
    kind: LinearGrowthKind<T>,
    dim: usize,
}

impl<T: Real> LinearGrowthDrift<T> {
    pub fn new(kind: LinearGrowthKind<T>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter(
                "drift output dimension must be at least 1".into(),
            ));
        }
        match kind {
            LinearGrowthKind::Tanh { amplitude } if !amplitude.is_finite() => {
                return Err(Error::InvalidParameter(
                    "tanh drift amplitude must be finite".into(),
                ))
            }
            LinearGrowthKind::Rotation { rate } if !rate.is_finite() => {
                return Err(Error::InvalidParameter(
                    "rotation drift rate must be finite".into(),
                ))
            }
            _ => {}
        }
        Ok(LinearGrowthDrift { kind, dim })
    }

    pub fn kind(&self) -> LinearGrowthKind<T> {
        self.kind
    }
}

impl<T: Real> DriftModel<T> for LinearGrowthDrift<T> {
    fn name(&self) -> &str {
        match self.kind {
            LinearGrowthKind::Zero => "zero",
            LinearGrowthKind::Tanh { .. } => "tanh",
            LinearGrowthKind::Rotation { .. } => "rotation",
        }
    }

    fn dim_out_max(&self) -> usize {
        self.dim
    }

    fn p0(&self) -> T {
        match self.kind {
            LinearGrowthKind::Zero | LinearGrowthKind::Tanh { .. } => T::zero(),
            LinearGrowthKind::Rotation { .. } => T::one(),
        }
    }

    fn k0(&self) -> T {
        T::two()
    }

    fn component_growth(&self, _i: usize) -> T {
        match self.kind {
            LinearGrowthKind::Zero => T::zero(),
            // sup_t (1 + sin(t)/2) = 3/2 and |tanh| <= 1.
            LinearGrowthKind::Tanh { amplitude } => T::of(1.5) * amplitude.abs(),
            LinearGrowthKind::Rotation { rate } => rate.abs(),
        }
    }

    fn basis_tag(&self) -> Option<BasisTag> {
        None
    }

    fn eval_into(&self, x: &[T], t: T, out: &mut [T]) -> Result<()> {
        if out.len() > self.dim {
            return Err(Error::LengthMismatch {
                got: out.len(),
                available: self.dim,
            });
        }
        let coord = |j: usize| if j < x.len() { x[j] } else { T::zero() };
        match self.kind {
            LinearGrowthKind::Zero => out.iter_mut().for_each(|o| *o = T::zero()),
            LinearGrowthKind::Tanh { amplitude } => {
                let scale = amplitude * (T::one() + t.sin() * T::half());
                for (i, o) in out.iter_mut().enumerate() {
                    *o = scale * coord((i + 1) % self.dim).tanh();
                }
            }
            LinearGrowthKind::Rotation { rate } => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = if i % 2 == 0 {
                        -rate * coord(i + 1)
                    } else {
                        rate * coord(i - 1)
                    };
                }
            }
        }
        Ok(())
    }
}

/// Spectral projection of the torus advection nonlinearity.
#[derive(Clone, Debug)]
pub struct NavierStokesDrift<T> {
    basis: TorusBasis<T>,
    table: GridTable<T>,
    /// Wavevectors as scalars, mode-major (`modes x d`).
    kf: Vec<T>,
}

impl<T: Real> NavierStokesDrift<T> {
    pub fn new(basis: TorusBasis<T>) -> Result<Self> {
        // 3F + 1 points per axis integrate triple products exactly.
        let n = (3 * basis.max_freq() + 1) as usize;
        let table = GridTable::build(&basis, n)?;
        let d = basis.d();
        let mut kf = Vec::with_capacity(basis.len() * d);
        for m in basis.modes() {
            for j in 0..d {
                kf.push(T::of(m.k[j] as f64));
            }
        }
        Ok(NavierStokesDrift { basis, table, kf })
    }

    pub fn basis(&self) -> &TorusBasis<T> {
        &self.basis
    }

    fn check_input(&self, x: &[T]) -> Result<()> {
        if x.len() > self.basis.len() {
            return Err(Error::LengthMismatch {
                got: x.len(),
                available: self.basis.len(),
            });
        }
        Ok(())
    }

    /// `out[i] = integral (U . grad) e_i . W dxi` for the grid samples of
    /// two fields; the advection kernel shared by the drift and the
    /// trilinear form.
    fn directional_forms(&self, u_vals: &[T], w_vals: &[T], out: &mut [T]) {
        let d = self.table.d;
        let pts = self.table.n_points;
        let w = self.table.quad_weight();
        for (i, o) in out.iter_mut().enumerate() {
            let gp = self.table.gp_row(i);
            let ki = &self.kf[i * d..(i + 1) * d];
            let ci = &self.basis.modes()[i].c;
            let mut acc = Compensated::new();
            for p in 0..pts {
                let u = &u_vals[p * d..(p + 1) * d];
                let wv = &w_vals[p * d..(p + 1) * d];
                let mut u_dot_k = T::zero();
                let mut c_dot_w = T::zero();
                for j in 0..d {
                    u_dot_k = u_dot_k + u[j] * ki[j];
                    c_dot_w = c_dot_w + ci[j] * wv[j];
                }
                acc.add(gp[p] * u_dot_k * c_dot_w);
            }
            *o = acc.value() * w;
        }
    }

    /// Trilinear advection form `b(x, y, z) = integral (X . grad) Y . Z dxi`
    /// on coefficient vectors, via `b = sum_j y_j integral (X . grad) e_j . Z`.
    pub fn trilinear(&self, x: &[T], y: &[T], z: &[T]) -> Result<T> {
        self.check_input(x)?;
        self.check_input(y)?;
        self.check_input(z)?;
        let d = self.table.d;
        let mut u_vals = vec![T::zero(); self.table.n_points * d];
        let mut w_vals = vec![T::zero(); self.table.n_points * d];
        self.table.eval_field(&self.basis, x, &mut u_vals);
        self.table.eval_field(&self.basis, z, &mut w_vals);
        let mut forms = vec![T::zero(); y.len()];
        self.directional_forms(&u_vals, &w_vals, &mut forms);
        let mut acc = Compensated::new();
        for (yj, fj) in y.iter().zip(&forms) {
            acc.add(*yj * *fj);
        }
        Ok(acc.value())
    }

    /// `sum_i f^i(x) x_i` over the support of `x`; zero for the true
    /// advection term because the field is divergence free.
    pub fn energy_defect(&self, x: &[T]) -> Result<T> {
        self.trilinear(x, x, x)
    }
}

impl<T: Real> DriftModel<T> for NavierStokesDrift<T> {
    fn name(&self) -> &str {
        "navier-stokes"
    }

    fn dim_out_max(&self) -> usize {
        self.basis.len()
    }

    fn p0(&self) -> T {
        T::two()
    }

    fn k0(&self) -> T {
        T::of(4.0)
    }

    /// `|f^i(x)| <= nrm |k_i| (2 pi)^d (2/pi) |x|_E^2`: bound the rank-one
    /// gradient `grad e_i = c_i k_i^T nrm trig'` by `nrm |k_i| |trig'|` and
    /// use that `|trig'| = |sin|-type factors average to `2/pi` over full
    /// periods of any nonzero integer frequency.
    fn component_growth(&self, i: usize) -> T {
        let d = self.basis.d();
        let k2: i64 = self.basis.modes()[i].k.iter().map(|x| x * x).sum();
        let vol = (2.0 * std::f64::consts::PI).powi(d as i32);
        T::of(
            self.basis.norm_const().as_f64()
                * (k2 as f64).sqrt()
                * vol
                * (2.0 / std::f64::consts::PI),
        )
    }

    fn basis_tag(&self) -> Option<BasisTag> {
        Some(self.basis.tag())
    }

    fn eval_into(&self, x: &[T], _t: T, out: &mut [T]) -> Result<()> {
        self.check_input(x)?;
        if out.len() > self.basis.len() {
            return Err(Error::LengthMismatch {
                got: out.len(),
                available: self.basis.len(),
            });
        }
        let d = self.table.d;
        let mut u_vals = vec![T::zero(); self.table.n_points * d];
        self.table.eval_field(&self.basis, x, &mut u_vals);
        self.directional_forms(&u_vals, &u_vals, out);
        Ok(())
    }
}

/// Reference evaluation of the advection projection through complex Fourier
/// convolution: `f_i = (2 pi)^d Re sum_{q, p} (uhat(q) . i p)
/// (ehat_i(p) . uhat(-q-p))`, with the mode transforms
/// `cos: ehat(+-k) = nrm c / 2` and `sin: ehat(+-k) = -+ i nrm c / 2`.
/// Arithmetic is plain complex `f64` over a frequency hash map; nothing is
/// shared with the quadrature route.
pub fn convolution_reference<T: Real>(basis: &TorusBasis<T>, x: &[T]) -> Result<Vec<f64>> {
    if x.len() > basis.len() {
        return Err(Error::LengthMismatch {
            got: x.len(),
            available: basis.len(),
        });
    }
    let d = basis.d();
    let nrm = basis.norm_const().as_f64();
    let mut uhat: HashMap<[i64; 3], [Complex64; 3]> = HashMap::new();
    let mut add = |freq: [i64; 3], contrib: [Complex64; 3]| {
        let entry = uhat.entry(freq).or_insert([Complex64::new(0.0, 0.0); 3]);
        for j in 0..3 {
            entry[j] += contrib[j];
        }
    };
    let key_of = |k: &[i64], sign: i64| {
        let mut out = [0i64; 3];
        for (j, kj) in k.iter().enumerate() {
            out[j] = sign * kj;
        }
        out
    };
    let halves = |mode: &crate::torus::TorusMode<T>, coeff: f64| {
        let mut plus = [Complex64::new(0.0, 0.0); 3];
        let mut minus = [Complex64::new(0.0, 0.0); 3];
        for j in 0..mode.c.len() {
            let cj = coeff * nrm * mode.c[j].as_f64() / 2.0;
            match mode.parity {
                Parity::Cos => {
                    plus[j] = Complex64::new(cj, 0.0);
                    minus[j] = Complex64::new(cj, 0.0);
                }
                Parity::Sin => {
                    plus[j] = Complex64::new(0.0, -cj);
                    minus[j] = Complex64::new(0.0, cj);
                }
            }
        }
        (plus, minus)
    };
    for (i, &ci) in x.iter().enumerate() {
        if ci == T::zero() {
            continue;
        }
        let mode = &basis.modes()[i];
        let (plus, minus) = halves(mode, ci.as_f64());
        add(key_of(&mode.k, 1), plus);
        add(key_of(&mode.k, -1), minus);
    }
    let vol = (2.0 * std::f64::consts::PI).powi(d as i32);
    let mut out = Vec::with_capacity(basis.len());
    for mode in basis.modes() {
        let (eplus, eminus) = halves(mode, 1.0);
        let mut total = Complex64::new(0.0, 0.0);
        for (p_key, ehat) in [
            (key_of(&mode.k, 1), eplus),
            (key_of(&mode.k, -1), eminus),
        ] {
            for (q_key, uq) in &uhat {
                let mut r_key = [0i64; 3];
                for j in 0..3 {
                    r_key[j] = -q_key[j] - p_key[j];
                }
                let Some(ur) = uhat.get(&r_key) else {
                    continue;
                };
                // (uhat(q) . i p) and (ehat(p) . uhat(r)): bilinear dots,
                // no conjugation.
                let mut u_dot_ip = Complex64::new(0.0, 0.0);
                let mut e_dot_ur = Complex64::new(0.0, 0.0);
                for j in 0..3 {
                    u_dot_ip += uq[j] * Complex64::new(0.0, p_key[j] as f64);
                    e_dot_ur += ehat[j] * ur[j];
                }
                total += u_dot_ip * e_dot_ur;
            }
        }
        out.push(vol * total.re);
    }
    Ok(out)
}
