//! Diagonal spectra, coefficient fields, and the H/V norms.
//!
//! A [`Spectrum`] fixes the diagonal data of the problem: eigenvalues
//! `alpha_i^2` of the dissipative linear part (positive, non-decreasing,
//! growing without bound), per-mode noise intensities `a_i >= 0`, the
//! damping shift `lambda >= 0`, and truncation ranks `n_v <= n_z` for the
//! state and noise blocks. The standing summability condition is
//! `sum_i a_i / alpha_i^2 < infinity`; the plain trace `sum_i a_i` is allowed
//! to diverge, which is the regime this laboratory exists to exercise.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::fnv1a64;
use crate::scalar::Real;
use crate::stats::Compensated;

/// Identifies the basis a coefficient vector belongs to. Mixing coefficients
/// across bases is rejected everywhere.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BasisTag(pub u64);

impl BasisTag {
    pub fn from_content(label: &str, words: impl IntoIterator<Item = u64>) -> Self {
        BasisTag(fnv1a64(label, words))
    }
}

/// Coefficients of a field in a fixed orthonormal eigenbasis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldCoefficients<T> {
    coeffs: Vec<T>,
    basis_tag: BasisTag,
}

impl<T: Real> FieldCoefficients<T> {
    pub fn new(coeffs: Vec<T>, basis_tag: BasisTag) -> Self {
        FieldCoefficients { coeffs, basis_tag }
    }

    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    pub fn basis_tag(&self) -> BasisTag {
        self.basis_tag
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }
}

/// Diagonal spectrum with noise intensities and damping shift.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Spectrum<T> {
    alphas_sq: Vec<T>,
    #[serde(rename = "as")]
    noise: Vec<T>,
    lambda: T,
    n_v: usize,
    n_z: usize,
    basis_tag: BasisTag,
}

impl<T: Real> Spectrum<T> {
    /// Validates and assembles a spectrum. The basis tag is derived from the
    /// eigenvalues and noise intensities only, so spectra that differ in
    /// `lambda` or in the truncation ranks still describe the same space.
    pub fn new(
        alphas_sq: Vec<T>,
        noise: Vec<T>,
        lambda: T,
        n_v: usize,
        n_z: usize,
    ) -> Result<Self> {
        if alphas_sq.is_empty() {
            return Err(Error::InvalidParameter(
                "spectrum needs at least one mode".into(),
            ));
        }
        if alphas_sq.len() != noise.len() {
            return Err(Error::InvalidParameter(format!(
                "eigenvalue list ({}) and noise list ({}) must have equal length",
                alphas_sq.len(),
                noise.len()
            )));
        }
        if !(alphas_sq[0] > T::zero()) {
            return Err(Error::InvalidParameter(
                "eigenvalues alpha_i^2 must be strictly positive".into(),
            ));
        }
        for w in alphas_sq.windows(2) {
            if !(w[1] >= w[0]) {
                return Err(Error::InvalidParameter(
                    "eigenvalues alpha_i^2 must be non-decreasing".into(),
                ));
            }
        }
        for (i, a) in noise.iter().enumerate() {
            if !(a.is_finite() && *a >= T::zero()) {
                return Err(Error::InvalidParameter(format!(
                    "noise intensity a_{i} must be finite and non-negative"
                )));
            }
        }
        if !(lambda.is_finite() && lambda >= T::zero()) {
            return Err(Error::InvalidParameter(
                "damping shift lambda must be finite and non-negative".into(),
            ));
        }
        if n_v == 0 {
            return Err(Error::InvalidParameter(
                "state truncation n_v must be at least 1".into(),
            ));
        }
        if n_z < n_v {
            return Err(Error::InvalidParameter(format!(
                "noise truncation must dominate the state truncation: n_z = {n_z} < n_v = {n_v}"
            )));
        }
        if n_z > alphas_sq.len() {
            return Err(Error::InvalidParameter(format!(
                "noise truncation n_z = {} exceeds the {} available modes",
                n_z,
                alphas_sq.len()
            )));
        }
        let basis_tag = BasisTag::from_content(
            "spectrum",
            alphas_sq
                .iter()
                .map(|x| x.as_f64().to_bits())
                .chain(noise.iter().map(|x| x.as_f64().to_bits())),
        );
        Ok(Spectrum {
            alphas_sq,
            noise,
            lambda,
            n_v,
            n_z,
            basis_tag,
        })
    }

    /// Spectrum with an externally supplied tag (used by torus bases so that
    /// their fields and spectra share one identity).
    pub fn with_tag(mut self, tag: BasisTag) -> Self {
        self.basis_tag = tag;
        self
    }

    /// `alpha_i^2 = (i+1)^2` with unit noise intensities: the standard
    /// abstract example. `sum a_i` diverges while `sum a_i/alpha_i^2` does
    /// not, so this is genuinely non-trace-class noise.
    pub fn quadratic_growth(len: usize, lambda: T, n_v: usize, n_z: usize) -> Result<Self> {
        let alphas_sq = (1..=len)
            .map(|i| T::of_usize(i) * T::of_usize(i))
            .collect();
        Spectrum::new(alphas_sq, vec![T::one(); len], lambda, n_v, n_z)
    }

    pub fn len(&self) -> usize {
        self.alphas_sq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas_sq.is_empty()
    }

    pub fn alphas_sq(&self) -> &[T] {
        &self.alphas_sq
    }

    pub fn noise(&self) -> &[T] {
        &self.noise
    }

    pub fn alpha_sq(&self, i: usize) -> T {
        self.alphas_sq[i]
    }

    pub fn a(&self, i: usize) -> T {
        self.noise[i]
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

    /// Same space with a different damping shift.
    #[must_use]
    pub fn with_lambda(&self, lambda: T) -> Self {
        let mut s = self.clone();
        s.lambda = lambda;
        s
    }

    /// Same space with different truncation ranks.
    pub fn with_ranks(&self, n_v: usize, n_z: usize) -> Result<Self> {
        let mut s = self.clone();
        if n_v == 0 || n_z < n_v || n_z > s.alphas_sq.len() {
            return Err(Error::InvalidParameter(format!(
                "invalid truncation ranks n_v = {n_v}, n_z = {n_z} for {} modes",
                s.alphas_sq.len()
            )));
        }
        s.n_v = n_v;
        s.n_z = n_z;
        Ok(s)
    }

    /// Attaches this spectrum's tag to raw coefficients.
    pub fn field(&self, coeffs: Vec<T>) -> Result<FieldCoefficients<T>> {
        if coeffs.len() > self.len() {
            return Err(Error::LengthMismatch {
                got: coeffs.len(),
                available: self.len(),
            });
        }
        Ok(FieldCoefficients::new(coeffs, self.basis_tag))
    }

    pub fn check_tag(&self, x: &FieldCoefficients<T>) -> Result<()> {
        if x.basis_tag() != self.basis_tag {
            return Err(Error::BasisMismatch {
                coeffs: x.basis_tag().0,
                basis: self.basis_tag.0,
            });
        }
        Ok(())
    }

    /// Partial sum `sum_{i<n} a_i / alpha_i^2` (compensated).
    pub fn trace_ratio(&self, n: usize) -> Result<T> {
        if n > self.len() {
            return Err(Error::LengthMismatch {
                got: n,
                available: self.len(),
            });
        }
        let mut acc = Compensated::new();
        for i in 0..n {
            acc.add(self.noise[i] / self.alphas_sq[i]);
        }
        Ok(acc.value())
    }

    /// Increment of the trace-ratio partial sums contributed by the last
    /// `window` available modes. A small value is the finite-truncation
    /// witness of `sum a_i / alpha_i^2 < infinity`.
    pub fn trace_tail_increment(&self, window: usize) -> T {
        let n = self.len();
        let start = n.saturating_sub(window);
        let mut acc = Compensated::new();
        for i in start..n {
            acc.add(self.noise[i] / self.alphas_sq[i]);
        }
        acc.value()
    }

    /// Truncation error of the noise block kept only up to `n_z`, evaluated
    /// at the stationary per-mode variance `a_i / (2 (alpha_i^2 + lambda))`:
    /// the reported tail is the full-space H-variance dropped by truncation,
    /// summed over the available modes beyond `n_z`.
    pub fn z_truncation_tail(&self) -> T {
        let mut acc = Compensated::new();
        for i in self.n_z..self.len() {
            let c = self.alphas_sq[i] + self.lambda;
            acc.add(self.noise[i] / (T::two() * c));
        }
        acc.value()
    }
}

/// H norm (Euclidean norm of coefficients). The empty field has norm zero.
pub fn h_norm_slice<T: Real>(x: &[T]) -> T {
    let mut acc = Compensated::new();
    for &v in x {
        acc.add(v * v);
    }
    acc.value().sqrt()
}

pub fn h_norm<T: Real>(x: &FieldCoefficients<T>) -> T {
    h_norm_slice(x.coeffs())
}

pub fn h_inner_slice<T: Real>(x: &[T], y: &[T]) -> T {
    debug_assert_eq!(x.len(), y.len());
    let mut acc = Compensated::new();
    for i in 0..x.len().min(y.len()) {
        acc.add(x[i] * y[i]);
    }
    acc.value()
}

/// Squared V norm `sum alpha_i^2 x_i^2` over the coefficients of `x`.
pub fn v_norm_sq_slice<T: Real>(x: &[T], s: &Spectrum<T>) -> Result<T> {
    if x.len() > s.len() {
        return Err(Error::LengthMismatch {
            got: x.len(),
            available: s.len(),
        });
    }
    let mut acc = Compensated::new();
    for (i, &v) in x.iter().enumerate() {
        acc.add(s.alpha_sq(i) * v * v);
    }
    Ok(acc.value())
}

pub fn v_norm_sq<T: Real>(x: &FieldCoefficients<T>, s: &Spectrum<T>) -> Result<T> {
    s.check_tag(x)?;
    v_norm_sq_slice(x.coeffs(), s)
}

/// Orthogonal projection onto the first `n` modes. Rank zero is not a
/// projection in this family and is rejected.
pub fn project_pi_n<T: Real>(x: &FieldCoefficients<T>, n: usize) -> Result<FieldCoefficients<T>> {
    if n == 0 || n > x.len() {
        return Err(Error::InvalidProjection { n, len: x.len() });
    }
    Ok(FieldCoefficients::new(
        x.coeffs()[..n].to_vec(),
        x.basis_tag(),
    ))
}

/// Componentwise sum with zero padding: the shorter argument is extended by
/// zeros. Used to form `x = v + z` when the state block is shorter than the
/// noise block.
pub fn add_padded<T: Real>(v: &[T], z: &[T]) -> Vec<T> {
    let n = v.len().max(z.len());
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let a = if i < v.len() { v[i] } else { T::zero() };
        let b = if i < z.len() { z[i] } else { T::zero() };
        out.push(a + b);
    }
    out
}

/// Diagonal weights `gamma_i >= 1`, non-decreasing, with
/// `sum gamma_i a_i / alpha_i^2` still summable: the compactness weights of
/// the tightness functional.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GammaWeights<T> {
    gammas: Vec<T>,
    basis_tag: BasisTag,
}

impl<T: Real> GammaWeights<T> {
    pub fn new(gammas: Vec<T>, s: &Spectrum<T>) -> Result<Self> {
        if gammas.len() != s.len() {
            return Err(Error::LengthMismatch {
                got: gammas.len(),
                available: s.len(),
            });
        }
        if gammas.iter().any(|g| !(*g >= T::one())) {
            return Err(Error::InvalidParameter(
                "tightness weights must satisfy gamma_i >= 1".into(),
            ));
        }
        for w in gammas.windows(2) {
            if !(w[1] >= w[0]) {
                return Err(Error::InvalidParameter(
                    "tightness weights must be non-decreasing".into(),
                ));
            }
        }
        Ok(GammaWeights {
            gammas,
            basis_tag: s.basis_tag(),
        })
    }

    /// `gamma_i = (alpha_i^2 / alpha_0^2)^theta`: at least 1, non-decreasing,
    /// unbounded along any divergent spectrum, and weight-summable whenever
    /// `theta` is small enough that `sum a_i alpha_i^(2 theta - 2)` converges.
    pub fn from_exponent(s: &Spectrum<T>, theta: T) -> Result<Self> {
        if !(theta >= T::zero()) {
            return Err(Error::InvalidParameter(
                "weight exponent must be non-negative".into(),
            ));
        }
        let a0 = s.alpha_sq(0);
        let gammas = s
            .alphas_sq()
            .iter()
            .map(|a| (*a / a0).powf(theta))
            .collect();
        GammaWeights::new(gammas, s)
    }

    pub fn gammas(&self) -> &[T] {
        &self.gammas
    }

    /// `C_gamma = 1/2 sum_{i<n_z} gamma_i a_i / alpha_i^2`, the closed-form
    /// bound on `E |Gamma Z_t|_H^2` uniform in time and damping shift.
    pub fn c_gamma(&self, s: &Spectrum<T>) -> T {
        let mut acc = Compensated::new();
        for i in 0..s.n_z() {
            acc.add(self.gammas[i] * s.a(i) / s.alpha_sq(i));
        }
        acc.value() * T::half()
    }

    /// Weighted trace-ratio increment over the last `window` modes.
    pub fn weighted_tail_increment(&self, s: &Spectrum<T>, window: usize) -> T {
        let n = s.len();
        let start = n.saturating_sub(window);
        let mut acc = Compensated::new();
        for i in start..n {
            acc.add(self.gammas[i] * s.a(i) / s.alpha_sq(i));
        }
        acc.value()
    }
}

/// `Gamma^(1/2) x`: multiplies each coefficient by `sqrt(gamma_i)`.
pub fn gamma_apply<T: Real>(
    x: &FieldCoefficients<T>,
    g: &GammaWeights<T>,
) -> Result<FieldCoefficients<T>> {
    if x.basis_tag() != g.basis_tag {
        return Err(Error::BasisMismatch {
            coeffs: x.basis_tag().0,
            basis: g.basis_tag.0,
        });
    }
    if x.len() > g.gammas.len() {
        return Err(Error::LengthMismatch {
            got: x.len(),
            available: g.gammas.len(),
        });
    }
    let coeffs = x
        .coeffs()
        .iter()
        .zip(&g.gammas)
        .map(|(&v, &gm)| v * gm.sqrt())
        .collect();
    Ok(FieldCoefficients::new(coeffs, x.basis_tag()))
}

/// Same map on raw slices (hot paths; tags checked by the caller).
pub fn gamma_apply_norm_sq_slice<T: Real>(x: &[T], gammas: &[T]) -> T {
    let mut acc = Compensated::new();
    for (i, &v) in x.iter().enumerate() {
        acc.add(gammas[i] * v * v);
    }
    acc.value()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Key};

    fn spectrum_14() -> Spectrum<f64> {
        Spectrum::new(vec![1.0, 4.0], vec![1.0, 1.0], 0.0, 1, 2).unwrap()
    }

    #[test]
    fn trace_ratio_matches_hand_sum() {
        let s = spectrum_14();
        assert_eq!(s.trace_ratio(0).unwrap(), 0.0);
        assert_eq!(s.trace_ratio(1).unwrap(), 1.0);
        assert_eq!(s.trace_ratio(2).unwrap(), 1.25);
        assert!(s.trace_ratio(3).is_err());
    }

    #[test]
    fn construction_rejects_bad_data() {
        assert!(Spectrum::<f64>::new(vec![], vec![], 0.0, 1, 1).is_err());
        assert!(Spectrum::new(vec![0.0, 1.0], vec![1.0, 1.0], 0.0, 1, 2).is_err());
        assert!(Spectrum::new(vec![2.0, 1.0], vec![1.0, 1.0], 0.0, 1, 2).is_err());
        assert!(Spectrum::new(vec![1.0, 2.0], vec![1.0, -1.0], 0.0, 1, 2).is_err());
        assert!(Spectrum::new(vec![1.0, 2.0], vec![1.0, 1.0], -1.0, 1, 2).is_err());
        assert!(Spectrum::new(vec![1.0, 2.0], vec![1.0, 1.0], 0.0, 0, 2).is_err());
        assert!(Spectrum::new(vec![1.0, 2.0], vec![1.0, 1.0], 0.0, 2, 1).is_err());
        assert!(Spectrum::new(vec![1.0, 2.0], vec![1.0, 1.0], 0.0, 2, 3).is_err());
    }

    #[test]
    fn h_norm_matches_two_pass_oracle_on_random_input() {
        // Independent oracle: sort by magnitude and sum squares upward in
        // extended precision emulation (two-pass compensated on sorted data).
        for trial in 0..50u64 {
            let xs: Vec<f64> = (0..4u64)
                .map(|i| {
                    Key::new(100)
                        .with(stream::AUDIT_POINT)
                        .with(trial)
                        .with(i)
                        .standard_normal()
                        * 3.0
                })
                .collect();
            let mut sq: Vec<f64> = xs.iter().map(|x| x * x).collect();
            sq.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let oracle: f64 = sq.iter().sum::<f64>().sqrt();
            assert!((h_norm_slice(&xs) - oracle).abs() <= 1e-14 * (1.0 + oracle));
        }
    }

    #[test]
    fn h_norm_of_empty_field_is_zero() {
        let x: Vec<f64> = vec![];
        assert_eq!(h_norm_slice(&x), 0.0);
    }

    #[test]
    fn v_norm_penalizes_high_modes() {
        let s = Spectrum::quadratic_growth(4usize, 0.0, 2, 4).unwrap();
        let low = s.field(vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let high = s.field(vec![0.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(h_norm(&low), h_norm(&high));
        let vl = v_norm_sq(&low, &s).unwrap();
        let vh = v_norm_sq(&high, &s).unwrap();
        assert!(vh > vl);
        assert_eq!(vl, 1.0);
        assert_eq!(vh, 16.0);
    }

    #[test]
    fn v_norm_rejects_foreign_or_oversized_fields() {
        let s = spectrum_14();
        // Content-identical spectra share a tag, so the foreign spectrum
        // must genuinely differ.
        let other = Spectrum::new(vec![1.0, 9.0], vec![1.0, 1.0], 0.0, 1, 2).unwrap();
        let x = other.field(vec![1.0, 1.0]).unwrap();
        assert!(matches!(
            v_norm_sq(&x, &s),
            Err(Error::BasisMismatch { .. })
        ));
        assert!(v_norm_sq_slice(&[1.0, 1.0, 1.0], &s).is_err());
    }

    #[test]
    fn projection_is_idempotent_and_rejects_rank_zero() {
        let s = Spectrum::quadratic_growth(5usize, 0.0, 2, 5).unwrap();
        let x = s.field(vec![1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let p3 = project_pi_n(&x, 3).unwrap();
        let p2_of_p3 = project_pi_n(&p3, 2).unwrap();
        let p2 = project_pi_n(&x, 2).unwrap();
        assert_eq!(p2_of_p3, p2);
        assert!(matches!(
            project_pi_n(&x, 0),
            Err(Error::InvalidProjection { .. })
        ));
        assert!(project_pi_n(&x, 6).is_err());
    }

    #[test]
    fn gamma_weights_validate_and_bound_the_weighted_norm() {
        let s = Spectrum::<f64>::quadratic_growth(6usize, 0.0, 3, 6).unwrap();
        let g = GammaWeights::from_exponent(&s, 0.25).unwrap();
        assert!(g.gammas().windows(2).all(|w| w[1] >= w[0]));
        assert!(g.gammas().iter().all(|&x| x >= 1.0));
        let x = s.field(vec![1.0, -2.0, 0.5, 0.0, 0.0, 1.0]).unwrap();
        let gx = gamma_apply(&x, &g).unwrap();
        // gamma_i >= 1 makes the weighted norm dominate the plain norm.
        assert!(h_norm(&gx) >= h_norm(&x));
        // Identity weights leave fields untouched.
        let id = GammaWeights::new(vec![1.0; 6], &s).unwrap();
        assert_eq!(gamma_apply(&x, &id).unwrap(), x);
        // Weighted trace ratio stays summable for theta = 1/4 on i^2 growth.
        assert!(g.c_gamma(&s).is_finite());
        assert!(GammaWeights::new(vec![0.5; 6], &s).is_err());
        assert!(GammaWeights::new(vec![2.0, 1.5, 1.5, 1.5, 1.5, 1.5], &s).is_err());
    }

    #[test]
    fn add_padded_embeds_the_short_block() {
        let v = [1.0, 2.0];
        let z = [10.0, 20.0, 30.0, 40.0];
        assert_eq!(add_padded(&v, &z), vec![11.0, 22.0, 30.0, 40.0]);
        assert_eq!(add_padded(&z, &v), vec![11.0, 22.0, 30.0, 40.0]);
    }

    #[test]
    fn trace_tail_witnesses_summability() {
        let s = Spectrum::quadratic_growth(4000usize, 0.0, 4, 64).unwrap();
        // Tail of sum 1/i^2 beyond 3000 is below 1/3000 + margin.
        assert!(s.trace_tail_increment(1000) < 1.2e-3);
        // Truncation tail of the noise variance beyond n_z is finite and small.
        assert!(s.z_truncation_tail() < 0.5 * (1.0 / 63.0));
    }

    #[test]
    fn lambda_and_rank_updates_preserve_identity() {
        let s = spectrum_14();
        let s2 = s.with_lambda(7.5);
        assert_eq!(s2.lambda(), 7.5);
        assert_eq!(s.basis_tag(), s2.basis_tag());
        let s3 = s.with_ranks(1, 1).unwrap();
        assert_eq!(s3.n_z(), 1);
        assert_eq!(s.basis_tag(), s3.basis_tag());
        assert!(s.with_ranks(0, 1).is_err());
    }
}
