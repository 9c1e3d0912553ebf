//! Monte Carlo estimates and the two-sample Kolmogorov–Smirnov test.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// A complex Monte Carlo estimate with its standard error (0 for exact
/// values).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: Complex64,
    pub stderr: f64,
}

impl Estimate {
    pub fn exact(value: Complex64) -> Self {
        Self { value, stderr: 0.0 }
    }

    /// Sample mean and standard error of the mean. Sums run in index order
    /// so the result does not depend on how the values were produced.
    pub fn from_samples(values: &[Complex64]) -> Self {
        let n = values.len();
        assert!(n > 0, "estimate from an empty sample");
        let mean = values.iter().sum::<Complex64>() / n as f64;
        if n == 1 {
            return Self::exact(mean);
        }
        let var = values.iter().map(|z| (z - mean).norm_sqr()).sum::<f64>() / (n - 1) as f64;
        Self {
            value: mean,
            stderr: (var / n as f64).sqrt(),
        }
    }

    pub fn from_real_samples(values: &[f64]) -> Self {
        let z: Vec<Complex64> = values.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        Self::from_samples(&z)
    }

    /// `a·self + b`; the error scales with `|a|`.
    pub fn affine(self, a: Complex64, b: Complex64) -> Self {
        Self {
            value: a * self.value + b,
            stderr: a.norm() * self.stderr,
        }
    }

    /// Standard error of `self − other` for independent estimates.
    pub fn combined_stderr(&self, other: &Estimate) -> f64 {
        self.stderr.hypot(other.stderr)
    }

    /// `|self − other| ≤ k · combined stderr`, with `floor` as an absolute
    /// lower bound on the allowance.
    pub fn agrees_with(&self, other: &Estimate, k: f64, floor: f64) -> bool {
        (self.value - other.value).norm() <= (k * self.combined_stderr(other)).max(floor)
    }
}

/// Mean and standard error of a real sample.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let e = Estimate::from_real_samples(values);
    (e.value.re, e.stderr)
}

/// Result of a two-sample Kolmogorov–Smirnov test.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Kolmogorov survival function `Q(λ) = 2 Σ_{k≥1} (−1)^{k−1} e^{−2k²λ²}`.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=200 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Two-sample KS test with the asymptotic p-value under Stephens' small
/// sample correction `λ = (√n_e + 0.12 + 0.11/√n_e)·D`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsResult {
    assert!(!a.is_empty() && !b.is_empty(), "KS test needs two nonempty samples");
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len(), y.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let v = x[i].min(y[j]);
        while i < n && x[i] <= v {
            i += 1;
        }
        while j < m && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n * m) as f64 / (n + m) as f64;
    let sq = ne.sqrt();
    KsResult {
        statistic: d,
        p_value: kolmogorov_q((sq + 0.12 + 0.11 / sq) * d),
    }
}
