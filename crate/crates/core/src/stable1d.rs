//! Univariate α-stable laws: the kernel ν_α, characteristic functions and
//! exact samplers.

use std::f64::consts::{FRAC_2_PI, FRAC_PI_2, PI};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Exp1, Open01, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters of a univariate stable law with characteristic function
/// `exp(−scale·[w₊ν_α(k) + w₋ν_α(−k)] + i·shift·k)`, `w± = (1 ± beta)/2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StableParams1D {
    pub alpha: f64,
    pub beta: f64,
    pub scale: f64,
    pub shift: f64,
}

impl StableParams1D {
    pub fn new(alpha: f64, beta: f64, scale: f64, shift: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if !(beta.abs() <= 1.0) {
            return Err(Error::param("beta", format!("{beta} is outside [-1, 1]")));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::param("scale", format!("{scale} must be positive")));
        }
        if !shift.is_finite() {
            return Err(Error::param("shift", "must be finite"));
        }
        Ok(Self {
            alpha,
            beta,
            scale,
            shift,
        })
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 2.0 {
        Ok(())
    } else {
        Err(Error::param("alpha", format!("{alpha} is outside (0, 2]")))
    }
}

/// `ν_α(u)` without the domain check; callers have validated `alpha`.
#[inline]
pub fn nu(alpha: f64, u: f64) -> Complex64 {
    if u == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    let a = u.abs();
    if alpha == 1.0 {
        Complex64::new(a, FRAC_2_PI * u * a.ln())
    } else {
        let m = a.powf(alpha);
        Complex64::new(m, -u.signum() * m * (FRAC_PI_2 * alpha).tan())
    }
}

/// `ν_α(u) = |u|^α (1 − i sgn(u) tan(πα/2))` for α ≠ 1 and
/// `|u| + (2i/π) u log|u|` for α = 1, with `ν_α(0) = 0`.
pub fn nu_alpha(alpha: f64, u: f64) -> Result<Complex64> {
    check_alpha(alpha)?;
    Ok(nu(alpha, u))
}

/// Characteristic function of [`StableParams1D`] at `k`.
pub fn stable_cf_1d(p: &StableParams1D, k: f64) -> Complex64 {
    let wp = 0.5 * (1.0 + p.beta);
    let wm = 0.5 * (1.0 - p.beta);
    let expo = -(nu(p.alpha, k) * wp + nu(p.alpha, -k) * wm) * p.scale + Complex64::new(0.0, p.shift * k);
    expo.exp()
}

/// Stable law whose CF is `exp(−γ[p ν_α(k) + (1−p) ν_α(−k)])`.
pub fn dirac_weight_to_params(p: f64, alpha: f64, gamma: f64) -> Result<StableParams1D> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::param("p", format!("{p} is outside [0, 1]")));
    }
    StableParams1D::new(alpha, 2.0 * p - 1.0, gamma, 0.0)
}

/// Draws from the law of [`StableParams1D`] by the Chambers–Mallows–Stuck
/// transformation of a uniform angle and an exponential variate.
///
/// In the Samorodnitsky–Taqqu parametrization the law is
/// `S_α(σ, β, μ)` with `σ^α = scale` for α ≠ 1 and `σ = scale` for α = 1.
pub fn sample_stable_1d<R: Rng + ?Sized>(p: &StableParams1D, rng: &mut R) -> f64 {
    let alpha = p.alpha;
    if alpha == 2.0 {
        let z: f64 = rng.sample(StandardNormal);
        return (2.0 * p.scale).sqrt() * z + p.shift;
    }
    let u: f64 = rng.sample(Open01);
    let v = PI * (u - 0.5);
    let w: f64 = rng.sample(Exp1);
    let beta = p.beta;
    if alpha == 1.0 {
        let sigma = p.scale;
        let h = FRAC_PI_2 + beta * v;
        let x = FRAC_2_PI * (h * v.tan() - beta * ((FRAC_PI_2 * w * v.cos()) / h).ln());
        sigma * x + FRAC_2_PI * beta * sigma * sigma.ln() + p.shift
    } else {
        let sigma = p.scale.powf(1.0 / alpha);
        let t = beta * (FRAC_PI_2 * alpha).tan();
        let b = t.atan() / alpha;
        let s = (1.0 + t * t).powf(1.0 / (2.0 * alpha));
        let x = s * (alpha * (v + b)).sin() / v.cos().powf(1.0 / alpha)
            * ((v - alpha * (v + b)).cos() / w).powf((1.0 - alpha) / alpha);
        sigma * x + p.shift
    }
}

/// Positive stable variate with Laplace transform `E e^{−kT} = exp(−k^a)`,
/// `a ∈ (0, 1)`, by Kanter's representation.
pub fn sample_positive_stable<R: Rng + ?Sized>(alpha_half: f64, rng: &mut R) -> Result<f64> {
    if !(alpha_half > 0.0 && alpha_half < 1.0) {
        return Err(Error::param("alpha_half", format!("{alpha_half} is outside (0, 1)")));
    }
    Ok(positive_stable_unchecked(alpha_half, rng))
}

pub(crate) fn positive_stable_unchecked<R: Rng + ?Sized>(a: f64, rng: &mut R) -> f64 {
    let u: f64 = PI * rng.sample::<f64, _>(Open01);
    let w: f64 = rng.sample(Exp1);
    let zolotarev = ((a * u).sin().powf(a) * ((1.0 - a) * u).sin().powf(1.0 - a) / u.sin()).powf(1.0 / (1.0 - a));
    (zolotarev / w).powf((1.0 - a) / a)
}
