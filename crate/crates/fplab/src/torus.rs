//! Divergence-free trigonometric basis on the torus `[0, 2pi]^d`, `d = 2, 3`.
//!
//! Wavevector pairs `{k, -k}` are folded into real cosine/sine modes. A mode
//! is `e(xi) = c * nrm * cos(k . xi)` or `c * nrm * sin(k . xi)` with a unit
//! polarization vector `c` orthogonal to `k` (hence divergence-free) and
//! `nrm = sqrt(2 / (2 pi)^d)`, which makes every mode unit length in
//! `L^2([0, 2pi]^d; R^d)`. Eigenvalue of the dissipative part: `nu |k|^2`.
//!
//! Mode ordering is a pure function of `(d, kmax)`: ascending `|k|^2`, ties
//! broken lexicographically on `(k, parity, polarization index)`, so two
//! constructions of the same basis are bit-identical.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::spectrum::{BasisTag, FieldCoefficients, Spectrum};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Parity {
    Cos,
    Sin,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TorusMode<T> {
    /// Half-lattice representative: the first nonzero component is positive.
    pub k: Vec<i64>,
    pub parity: Parity,
    /// Polarization index within the plane orthogonal to `k`.
    pub pol: usize,
    /// Unit polarization vector, `c . k = 0`.
    pub c: Vec<T>,
    /// `nu * |k|^2`.
    pub eigenvalue: T,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TorusBasis<T> {
    d: usize,
    kmax: f64,
    nu: T,
    modes: Vec<TorusMode<T>>,
    tag: BasisTag,
}

/// Builds the basis for dimension `d`, frequency cutoff `|k| <= kmax`, and
/// viscosity `nu`.
pub fn build_torus_basis<T: Real>(d: usize, kmax: f64, nu: T) -> Result<TorusBasis<T>> {
    if d != 2 && d != 3 {
        return Err(Error::InvalidParameter(format!(
            "torus basis supports d in {{2, 3}}, got {d}"
        )));
    }
    if !(kmax.is_finite() && kmax >= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "frequency cutoff kmax = {kmax} leaves the basis empty (need kmax >= 1)"
        )));
    }
    if !(nu > T::zero()) {
        return Err(Error::InvalidParameter(
            "viscosity nu must be strictly positive".into(),
        ));
    }
    let kcap = kmax.floor() as i64;
    let kmax_sq = kmax * kmax;

    let mut reps: Vec<Vec<i64>> = Vec::new();
    let mut idx = vec![-kcap; d];
    'outer: loop {
        let k = idx.clone();
        let norm2: i64 = k.iter().map(|x| x * x).sum();
        let first_nonzero_positive = k.iter().find(|x| **x != 0).map(|x| *x > 0);
        if norm2 > 0 && (norm2 as f64) <= kmax_sq && first_nonzero_positive == Some(true) {
            reps.push(k);
        }
        for j in (0..d).rev() {
            if idx[j] < kcap {
                idx[j] += 1;
                continue 'outer;
            }
            idx[j] = -kcap;
        }
        break;
    }

    let mut modes = Vec::new();
    for k in &reps {
        let norm2: i64 = k.iter().map(|x| x * x).sum();
        let pols = polarizations::<T>(k);
        let eigenvalue = nu * T::of(norm2 as f64);
        for parity in [Parity::Cos, Parity::Sin] {
            for (pol, c) in pols.iter().enumerate() {
                modes.push(TorusMode {
                    k: k.clone(),
                    parity,
                    pol,
                    c: c.clone(),
                    eigenvalue,
                });
            }
        }
    }
    modes.sort_by(|a, b| {
        let na: i64 = a.k.iter().map(|x| x * x).sum();
        let nb: i64 = b.k.iter().map(|x| x * x).sum();
        na.cmp(&nb)
            .then_with(|| a.k.cmp(&b.k))
            .then_with(|| a.parity.cmp(&b.parity))
            .then_with(|| a.pol.cmp(&b.pol))
    });

    let tag = BasisTag::from_content(
        "torus",
        [
            d as u64,
            kmax.to_bits(),
            nu.as_f64().to_bits(),
            modes.len() as u64,
        ],
    );
    Ok(TorusBasis {
        d,
        kmax,
        nu,
        modes,
        tag,
    })
}

fn polarizations<T: Real>(k: &[i64]) -> Vec<Vec<T>> {
    let d = k.len();
    let norm = (k.iter().map(|x| (*x * *x) as f64).sum::<f64>()).sqrt();
    if d == 2 {
        return vec![vec![T::of(-k[1] as f64 / norm), T::of(k[0] as f64 / norm)]];
    }
    let khat: Vec<f64> = k.iter().map(|x| *x as f64 / norm).collect();
    // First admissible coordinate axis, projected off k and normalized.
    let mut c1 = [0.0f64; 3];
    for j in 0..3 {
        let mut w = [0.0f64; 3];
        for (i, wi) in w.iter_mut().enumerate() {
            *wi = -khat[j] * khat[i];
        }
        w[j] += 1.0;
        let n2: f64 = w.iter().map(|x| x * x).sum();
        if n2 > 1e-9 {
            let n = n2.sqrt();
            for i in 0..3 {
                c1[i] = w[i] / n;
            }
            break;
        }
    }
    let c2 = [
        khat[1] * c1[2] - khat[2] * c1[1],
        khat[2] * c1[0] - khat[0] * c1[2],
        khat[0] * c1[1] - khat[1] * c1[0],
    ];
    let n2: f64 = c2.iter().map(|x| x * x).sum();
    let n = n2.sqrt();
    vec![
        c1.iter().map(|x| T::of(*x)).collect(),
        c2.iter().map(|x| T::of(*x / n)).collect(),
    ]
}

impl<T: Real> TorusBasis<T> {
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn kmax(&self) -> f64 {
        self.kmax
    }

    pub fn nu(&self) -> T {
        self.nu
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn modes(&self) -> &[TorusMode<T>] {
        &self.modes
    }

    pub fn mode(&self, i: usize) -> &TorusMode<T> {
        &self.modes[i]
    }

    pub fn tag(&self) -> BasisTag {
        self.tag
    }

    /// `sqrt(2 / (2 pi)^d)`: the amplitude that makes modes unit L^2 norm.
    pub fn norm_const(&self) -> T {
        T::of((2.0 / (2.0 * std::f64::consts::PI).powi(self.d as i32)).sqrt())
    }

    /// Largest per-axis frequency in the basis.
    pub fn max_freq(&self) -> i64 {
        self.modes
            .iter()
            .flat_map(|m| m.k.iter().map(|x| x.abs()))
            .max()
            .unwrap_or(0)
    }

    /// Largest per-axis frequency among modes with a nonzero coefficient.
    pub fn max_active_freq(&self, x: &[T]) -> i64 {
        self.modes
            .iter()
            .zip(x)
            .filter(|(_, c)| **c != T::zero())
            .flat_map(|(m, _)| m.k.iter().map(|x| x.abs()))
            .max()
            .unwrap_or(0)
    }

    pub fn field(&self, coeffs: Vec<T>) -> Result<FieldCoefficients<T>> {
        if coeffs.len() > self.len() {
            return Err(Error::LengthMismatch {
                got: coeffs.len(),
                available: self.len(),
            });
        }
        Ok(FieldCoefficients::new(coeffs, self.tag))
    }

    pub fn check_tag(&self, x: &FieldCoefficients<T>) -> Result<()> {
        if x.basis_tag() != self.tag {
            return Err(Error::BasisMismatch {
                coeffs: x.basis_tag().0,
                basis: self.tag.0,
            });
        }
        Ok(())
    }

    /// Spectrum of the basis under noise intensities `a_i = alpha_i^(-eps)`.
    /// In two dimensions any `eps > 0` keeps `sum a_i / alpha_i^2` summable
    /// along the lattice; in three dimensions the lattice is denser and the
    /// sum requires `eps > 1`.
    pub fn ns_spectrum(&self, eps: f64, lambda: T, n_v: usize, n_z: usize) -> Result<Spectrum<T>> {
        let min_eps_ok = match self.d {
            2 => eps > 0.0,
            _ => eps > 1.0,
        };
        if !min_eps_ok {
            return Err(Error::InvalidParameter(format!(
                "noise decay eps = {eps} violates the summability of sum a_i / alpha_i^2 \
                 over the d = {} lattice (need eps > {})",
                self.d,
                if self.d == 2 { 0.0 } else { 1.0 }
            )));
        }
        let alphas_sq: Vec<T> = self.modes.iter().map(|m| m.eigenvalue).collect();
        let noise: Vec<T> = alphas_sq
            .iter()
            .map(|a| T::of(a.as_f64().powf(-eps / 2.0)))
            .collect();
        Ok(Spectrum::new(alphas_sq, noise, lambda, n_v, n_z)?.with_tag(self.tag))
    }

    /// Scalar factor `nrm * trig(k . xi)` of every mode at one point.
    pub fn mode_values_at(&self, xi: &[f64]) -> Vec<T> {
        let nrm = self.norm_const().as_f64();
        self.modes
            .iter()
            .map(|m| {
                let phase: f64 = m
                    .k
                    .iter()
                    .zip(xi)
                    .map(|(kj, xij)| *kj as f64 * *xij)
                    .sum();
                T::of(match m.parity {
                    Parity::Cos => nrm * phase.cos(),
                    Parity::Sin => nrm * phase.sin(),
                })
            })
            .collect()
    }

    /// Field value (a `d`-vector) at one point.
    pub fn eval_field_at(&self, x: &[T], xi: &[f64]) -> Vec<T> {
        let vals = self.mode_values_at(xi);
        let mut out = vec![T::zero(); self.d];
        for (i, &ci) in x.iter().enumerate() {
            if ci == T::zero() {
                continue;
            }
            let w = ci * vals[i];
            for (j, outj) in out.iter_mut().enumerate() {
                *outj = *outj + w * self.modes[i].c[j];
            }
        }
        out
    }
}

/// Precomputed mode factors on a uniform tensor grid with `n` points per
/// axis (points `2 pi m / n`, `m = 0..n-1`). `g` holds the normalized scalar
/// factor of each mode, `gp` its derivative factor, so
/// `e_i(xi) = c_i g[i, p]` and `grad e_i(xi) = c_i k_i^T gp[i, p]`.
#[derive(Clone, Debug)]
pub struct GridTable<T> {
    pub n_per_axis: usize,
    pub n_points: usize,
    pub d: usize,
    n_modes: usize,
    g: Vec<T>,
    gp: Vec<T>,
}

impl<T: Real> GridTable<T> {
    pub fn build(basis: &TorusBasis<T>, n_per_axis: usize) -> Result<Self> {
        if n_per_axis == 0 {
            return Err(Error::InvalidParameter(
                "grid needs at least one point per axis".into(),
            ));
        }
        let d = basis.d();
        let n_points = n_per_axis.pow(d as u32);
        let n_modes = basis.len();
        let nrm = basis.norm_const().as_f64();
        let step = 2.0 * std::f64::consts::PI / n_per_axis as f64;
        let mut g = vec![T::zero(); n_modes * n_points];
        let mut gp = vec![T::zero(); n_modes * n_points];
        let mut coords = vec![0usize; d];
        for p in 0..n_points {
            let mut rem = p;
            for j in (0..d).rev() {
                coords[j] = rem % n_per_axis;
                rem /= n_per_axis;
            }
            for (i, m) in basis.modes().iter().enumerate() {
                let phase: f64 = m
                    .k
                    .iter()
                    .zip(&coords)
                    .map(|(kj, mj)| *kj as f64 * (*mj as f64 * step))
                    .sum();
                let (s, c) = phase.sin_cos();
                let (val, der) = match m.parity {
                    Parity::Cos => (c, -s),
                    Parity::Sin => (s, c),
                };
                g[i * n_points + p] = T::of(nrm * val);
                gp[i * n_points + p] = T::of(nrm * der);
            }
        }
        Ok(GridTable {
            n_per_axis,
            n_points,
            d,
            n_modes,
            g,
            gp,
        })
    }

    #[inline]
    pub fn g_row(&self, mode: usize) -> &[T] {
        &self.g[mode * self.n_points..(mode + 1) * self.n_points]
    }

    #[inline]
    pub fn gp_row(&self, mode: usize) -> &[T] {
        &self.gp[mode * self.n_points..(mode + 1) * self.n_points]
    }

    /// Quadrature weight of one grid point for integrals over the torus.
    pub fn quad_weight(&self) -> T {
        let vol = (2.0 * std::f64::consts::PI).powi(self.d as i32);
        T::of(vol / self.n_points as f64)
    }

    /// Writes the field values into `out` (layout `[point * d + component]`).
    pub fn eval_field(&self, basis: &TorusBasis<T>, x: &[T], out: &mut [T]) {
        assert!(x.len() <= self.n_modes);
        assert_eq!(out.len(), self.n_points * self.d);
        for o in out.iter_mut() {
            *o = T::zero();
        }
        for (i, &ci) in x.iter().enumerate() {
            if ci == T::zero() {
                continue;
            }
            let row = self.g_row(i);
            let c = &basis.modes()[i].c;
            for p in 0..self.n_points {
                let w = ci * row[p];
                for (j, cj) in c.iter().enumerate() {
                    out[p * self.d + j] = out[p * self.d + j] + w * *cj;
                }
            }
        }
    }
}

/// Sup norm over the uniform grid of the field's pointwise Euclidean norm.
/// The grid must resolve the active frequencies: at least
/// `2 * max_active_freq + 1` points per axis.
pub fn e_norm<T: Real>(
    x: &FieldCoefficients<T>,
    basis: &TorusBasis<T>,
    grid: usize,
) -> Result<T> {
    basis.check_tag(x)?;
    if x.len() > basis.len() {
        return Err(Error::LengthMismatch {
            got: x.len(),
            available: basis.len(),
        });
    }
    let table = GridTable::build(basis, grid)?;
    e_norm_with_table(x.coeffs(), basis, &table)
}

/// Same with a caller-cached table.
pub fn e_norm_with_table<T: Real>(
    x: &[T],
    basis: &TorusBasis<T>,
    table: &GridTable<T>,
) -> Result<T> {
    let freq = basis.max_active_freq(x);
    let need = (2 * freq + 1) as usize;
    if table.n_per_axis < need {
        return Err(Error::GridTooCoarse {
            got: table.n_per_axis,
            need,
            freq,
        });
    }
    let mut vals = vec![T::zero(); table.n_points * table.d];
    table.eval_field(basis, x, &mut vals);
    let mut best = T::zero();
    for p in 0..table.n_points {
        let mut s = T::zero();
        for j in 0..table.d {
            let v = vals[p * table.d + j];
            s = s + v * v;
        }
        if s > best {
            best = s;
        }
    }
    Ok(best.sqrt())
}
