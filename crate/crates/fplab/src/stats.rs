//! Small statistics toolbox: compensated summation, moment estimators,
//! binomial intervals, log-sum-exp, and least-squares slopes.
//!
//! Reductions over ensembles always run in a fixed sample order with
//! compensated accumulation, so results do not depend on how work was
//! partitioned across threads.

use crate::scalar::Real;

/// Neumaier-compensated accumulator.
#[derive(Clone, Copy, Debug)]
pub struct Compensated<T: Real> {
    sum: T,
    carry: T,
}

impl<T: Real> Default for Compensated<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Compensated<T> {
    pub fn new() -> Self {
        Compensated {
            sum: T::zero(),
            carry: T::zero(),
        }
    }

    #[inline]
    pub fn add(&mut self, x: T) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry = self.carry + ((self.sum - t) + x);
        } else {
            self.carry = self.carry + ((x - t) + self.sum);
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> T {
        self.sum + self.carry
    }
}

/// Compensated sum of a slice.
pub fn csum<T: Real>(xs: &[T]) -> T {
    let mut acc = Compensated::new();
    for &x in xs {
        acc.add(x);
    }
    acc.value()
}

/// Sample mean and unbiased variance (two-pass, compensated).
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    assert!(n >= 1, "mean_var needs at least one sample");
    let mean = csum(xs) / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let mut acc = Compensated::new();
    for &x in xs {
        let d = x - mean;
        acc.add(d * d);
    }
    (mean, acc.value() / (n - 1) as f64)
}

/// Sample mean and its standard error.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let (m, v) = mean_var(xs);
    (m, (v / xs.len() as f64).sqrt())
}

/// Central moments 2..4 (population normalization) around the sample mean.
pub fn central_moments(xs: &[f64]) -> (f64, f64, f64, f64) {
    let n = xs.len() as f64;
    let mean = csum(xs) / n;
    let (mut m2, mut m3, mut m4) = (
        Compensated::new(),
        Compensated::new(),
        Compensated::new(),
    );
    for &x in xs {
        let d = x - mean;
        let d2 = d * d;
        m2.add(d2);
        m3.add(d2 * d);
        m4.add(d2 * d2);
    }
    (mean, m2.value() / n, m3.value() / n, m4.value() / n)
}

/// Skewness and excess kurtosis.
pub fn skew_exkurt(xs: &[f64]) -> (f64, f64) {
    let (_, m2, m3, m4) = central_moments(xs);
    if m2 <= 0.0 {
        return (0.0, 0.0);
    }
    (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    assert!(trials > 0, "wilson interval needs at least one trial");
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * ((p * (1.0 - p) + z2 / (4.0 * n)) / n).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// log(sum(exp(x))) with the dominance share of the largest summand.
/// The share close to 1 means a single sample carries the whole sum, i.e.
/// the Monte Carlo average of exp(x) has not converged.
pub fn log_sum_exp(xs: &[f64]) -> (f64, f64) {
    assert!(!xs.is_empty(), "log_sum_exp needs at least one term");
    let xmax = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if xmax == f64::NEG_INFINITY {
        return (f64::NEG_INFINITY, 0.0);
    }
    let mut acc = Compensated::new();
    for &x in xs {
        acc.add((x - xmax).exp());
    }
    let total = acc.value();
    (xmax + total.ln(), 1.0 / total)
}

/// Ordinary least-squares line fit with the standard error of the slope.
#[derive(Clone, Copy, Debug)]
pub struct OlsFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
}

pub fn ols_line(xs: &[f64], ys: &[f64]) -> OlsFit {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    assert!(n >= 2, "line fit needs at least two points");
    let xbar = csum(xs) / n as f64;
    let ybar = csum(ys) / n as f64;
    let (mut sxx, mut sxy) = (Compensated::new(), Compensated::new());
    for i in 0..n {
        let dx = xs[i] - xbar;
        sxx.add(dx * dx);
        sxy.add(dx * (ys[i] - ybar));
    }
    let sxx = sxx.value();
    assert!(sxx > 0.0, "line fit needs non-degenerate abscissae");
    let slope = sxy.value() / sxx;
    let intercept = ybar - slope * xbar;
    let slope_se = if n > 2 {
        let mut rss = Compensated::new();
        for i in 0..n {
            let r = ys[i] - intercept - slope * xs[i];
            rss.add(r * r);
        }
        (rss.value() / (n - 2) as f64 / sxx).sqrt()
    } else {
        0.0
    };
    OlsFit {
        slope,
        intercept,
        slope_se,
    }
}
