//! Characteristic functions: the HCIZ kernel, the matrix / diagonal /
//! eigenvalue forms of stable invariant log-CFs, empirical estimators and
//! the derivative-principle residual.

use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::ensembles::{EnsembleSpec, SampleBatch};
use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigvals, CMatrix, HermitianMatrix};
use crate::quad::integrate;
use crate::rng::par_draws;
use crate::spectral::{alpha1_shift, sample_directions, SpectralMeasure};
use crate::stable1d::{check_alpha, nu};
use crate::stats::Estimate;

const I: Complex64 = Complex64::new(0.0, 1.0);

fn zero() -> Complex64 {
    Complex64::new(0.0, 0.0)
}

fn ln_superfactorial(n: usize) -> f64 {
    (0..n).map(|j| ln_gamma(j as f64 + 1.0)).sum()
}

/// `i^{−k}`.
fn i_pow_neg(k: usize) -> Complex64 {
    match k % 4 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, -1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, 1.0),
    }
}

fn min_gap(v: &[f64]) -> f64 {
    let mut sorted = v.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// HCIZ kernel `K(x, s) = ∫ dU exp(i Tr U diag(x) U† diag(s))` over the
/// Haar measure, in closed form
/// `∏_{j<N} j! · det[e^{i x_j s_k}] / (i^{N(N−1)/2} Δ(x) Δ(s))`.
///
/// Common shifts are split off first (`K(x + a1, s) = e^{ia 1ᵀs} K(x, s)`)
/// and the two arguments are balanced in magnitude. When eigenvalue gaps
/// fall below `1e-6` of the argument scale, the determinant ratio is
/// evaluated as a determinant of bivariate divided differences, read off
/// the exponential of a Kronecker product of bidiagonal node matrices.
pub fn hciz_kernel(x: &[f64], s: &[f64]) -> Result<Complex64> {
    let n = x.len();
    if s.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: s.len(),
        });
    }
    if n == 0 {
        return Err(Error::InputDomain("HCIZ kernel needs N >= 1".into()));
    }
    if x.iter().chain(s).any(|v| !v.is_finite()) {
        return Err(Error::InputDomain("HCIZ arguments must be finite".into()));
    }
    let nf = n as f64;
    let (sx, ss): (f64, f64) = (x.iter().sum(), s.iter().sum());
    let phase = Complex64::from_polar(1.0, sx * ss / nf);
    let mut xc: Vec<f64> = x.iter().map(|v| v - sx / nf).collect();
    let mut sc: Vec<f64> = s.iter().map(|v| v - ss / nf).collect();
    let (mx, ms) = (max_abs(&xc), max_abs(&sc));
    if mx == 0.0 || ms == 0.0 {
        return Ok(phase);
    }
    let c = (ms / mx).sqrt();
    xc.iter_mut().for_each(|v| *v *= c);
    sc.iter_mut().for_each(|v| *v /= c);
    let scale = (mx * ms).sqrt();
    let confluent = min_gap(&xc) < 1e-6 * scale || min_gap(&sc) < 1e-6 * scale;
    let m = n * (n - 1) / 2;
    let pref = ln_superfactorial(n).exp() * i_pow_neg(m);
    let ratio = if confluent {
        divided_difference_det(&xc, &sc)
    } else {
        let e = CMatrix::from_fn(n, |j, k| Complex64::from_polar(1.0, xc[j] * sc[k]));
        e.det() / (crate::linalg::vandermonde(&xc) * crate::linalg::vandermonde(&sc))
    };
    Ok(phase * pref * ratio)
}

/// `det[e^{ixs}[x_1..x_j; s_1..s_k]]_{j,k}`, which equals
/// `det[e^{i x_j s_k}]/(Δ(x)Δ(s))` and stays finite at repeated nodes.
fn divided_difference_det(x: &[f64], s: &[f64]) -> Complex64 {
    let n = x.len();
    let bidiag = |v: &[f64]| {
        CMatrix::from_fn(n, |i, j| {
            if i == j {
                Complex64::new(v[i], 0.0)
            } else if i == j + 1 {
                Complex64::new(1.0, 0.0)
            } else {
                zero()
            }
        })
    };
    let (zx, zs) = (bidiag(x), bidiag(s));
    let big = CMatrix::from_fn(n * n, |r, c| {
        let (j, k) = (r / n, r % n);
        let (jj, kk) = (c / n, c % n);
        zx[(j, jj)] * zs[(k, kk)] * I
    });
    let e = big.expm();
    CMatrix::from_fn(n, |j, k| e[(j * n + k, 0)]).det()
}

/// `c_N = Γ(α+1) ∏_{j=0}^{N−1} j! / Γ(α+1+N(N−1)/2)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CNConstant {
    pub alpha: f64,
    pub n: usize,
    pub value: f64,
}

/// Normalization of the eigenvalue form of the stable log-CF. At N = 2 it
/// reduces to `1/(α+1)`, the Haar average of `ν_α` over a segment.
pub fn c_n_constant(alpha: f64, n: usize) -> Result<CNConstant> {
    check_alpha(alpha)?;
    if n == 0 {
        return Err(Error::param("N", "dimension must be positive"));
    }
    let m = (n * (n - 1) / 2) as f64;
    let ln = ln_gamma(alpha + 1.0) + ln_superfactorial(n) - ln_gamma(alpha + 1.0 + m);
    Ok(CNConstant {
        alpha,
        n,
        value: ln.exp(),
    })
}

fn permutations(n: usize) -> Vec<(Vec<usize>, f64)> {
    // Heap's algorithm; sign tracked per swap.
    let mut out = Vec::new();
    let mut p: Vec<usize> = (0..n).collect();
    let mut c = vec![0usize; n];
    let mut sign = 1.0;
    out.push((p.clone(), sign));
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                p.swap(0, i);
            } else {
                p.swap(c[i], i);
            }
            sign = -sign;
            out.push((p.clone(), sign));
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    out
}

const EIG_MAX_N: usize = 8;

fn eig_sum_direct(alpha: f64, s: &[f64], r: &[f64], perms: &[(Vec<usize>, f64)]) -> Complex64 {
    let m = (s.len() * (s.len() - 1) / 2) as i32;
    let ds = crate::linalg::vandermonde(s);
    let dr = crate::linalg::vandermonde(r);
    let mut acc = zero();
    for (p, sign) in perms {
        // Δ(r_ρ) = sgn(ρ) Δ(r)
        let u: f64 = p.iter().enumerate().map(|(j, &k)| s[j] * r[k]).sum();
        acc += nu(alpha, u) * (u.powi(m) * sign);
    }
    acc / (ds * dr)
}

fn degenerate(v: &[f64]) -> bool {
    v.len() > 1 && min_gap(v) < 1e-3 * max_abs(v).max(f64::MIN_POSITIVE)
}

/// `Σ_ρ ν_α(sᵀr_ρ)(sᵀr_ρ)^{N(N−1)/2} / (Δ(s) Δ(r_ρ))`, with tied or nearly
/// tied arguments handled by symmetric perturbation and two levels of
/// Richardson extrapolation.
fn eig_sum(alpha: f64, s: &[f64], r: &[f64], perms: &[(Vec<usize>, f64)]) -> Result<Complex64> {
    let (ds, dr) = (degenerate(s), degenerate(r));
    if !ds && !dr {
        return Ok(eig_sum_direct(alpha, s, r, perms));
    }
    let n = s.len();
    let spread: Vec<f64> = (0..n).map(|j| j as f64 - 0.5 * (n as f64 - 1.0)).collect();
    let hs = 1e-2 * max_abs(s).max(1e-300);
    let hr = 1e-2 * max_abs(r).max(1e-300);
    let sym = |h: f64| {
        let at = |sign: f64| {
            let sp: Vec<f64> = if ds {
                s.iter().zip(&spread).map(|(v, d)| v + sign * h * hs * d).collect()
            } else {
                s.to_vec()
            };
            let rp: Vec<f64> = if dr {
                r.iter().zip(&spread).map(|(v, d)| v + sign * h * hr * d).collect()
            } else {
                r.to_vec()
            };
            eig_sum_direct(alpha, &sp, &rp, perms)
        };
        (at(1.0) + at(-1.0)) * 0.5
    };
    let (a1, a2, a4) = (sym(1.0), sym(0.5), sym(0.25));
    let r1 = (a2 * 4.0 - a1) / 3.0;
    let r2 = (a4 * 4.0 - a2) / 3.0;
    let best = (r2 * 16.0 - r1) / 15.0;
    if (best - r2).norm() > 1e-6 * (1.0 + best.norm()) || !best.re.is_finite() {
        return Err(Error::Conditioning(format!(
            "eigenvalue form did not converge near degenerate arguments s={s:?}, r={r:?}"
        )));
    }
    Ok(best)
}

/// `c_N Σ_ρ ν_α(sᵀr_ρ)(sᵀr_ρ)^{N(N−1)/2}/(Δ(s)Δ(r_ρ))`: the Haar average of
/// `ν_α(Tr U diag(s) U† diag(r))` written as a sum over permutations.
pub fn eig_kernel(alpha: f64, s: &[f64], r: &[f64]) -> Result<Complex64> {
    let n = s.len();
    if r.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: r.len(),
        });
    }
    if n > EIG_MAX_N {
        return Err(Error::Capability(format!(
            "eigenvalue form sums N! permutations; N = {n} exceeds {EIG_MAX_N}"
        )));
    }
    let c = c_n_constant(alpha, n)?.value;
    Ok(eig_sum(alpha, s, r, &permutations(n))? * c)
}

fn shift_term(y0: f64, tr: f64) -> Complex64 {
    Complex64::new(0.0, y0 * tr)
}

/// `log E exp(i Tr YS) = −γ ∫H(dR) ν_α(Tr SR) + i y₀ Tr S`, Monte Carlo over
/// `H` (exact for the Dirac measure).
pub fn log_cf_matrix(spec: &EnsembleSpec, s: &HermitianMatrix, n_mc: usize, seed: u64) -> Result<Estimate> {
    spec.validate()?;
    if s.dim() != spec.dim {
        return Err(Error::DimensionMismatch {
            expected: spec.dim,
            got: s.dim(),
        });
    }
    if s.frobenius_norm() == 0.0 {
        return Ok(Estimate::exact(zero()));
    }
    let shift = shift_term(spec.y0, s.trace());
    let g = Complex64::new(-spec.gamma, 0.0);
    if let SpectralMeasure::DiracIdentity { p } = spec.measure {
        let u = s.trace() / (spec.dim as f64).sqrt();
        let v = nu(spec.alpha, u) * p + nu(spec.alpha, -u) * (1.0 - p);
        return Ok(Estimate::exact(g * v + shift));
    }
    check_n_mc(n_mc)?;
    let dirs = sample_directions(&spec.measure, spec.dim, spec.alpha, n_mc, seed)?;
    let vals: Vec<Complex64> = dirs.iter().map(|r| nu(spec.alpha, s.trace_product(r))).collect();
    Ok(Estimate::from_samples(&vals).affine(g, shift))
}

/// `E|θ₁|^α` for `θ` uniform on the unit sphere of `ℝ^d`.
pub fn sphere_abs_moment(alpha: f64, d: usize) -> f64 {
    let d = d as f64;
    (ln_gamma(d / 2.0) + ln_gamma((alpha + 1.0) / 2.0) - 0.5 * std::f64::consts::PI.ln() - ln_gamma((d + alpha) / 2.0))
        .exp()
}

/// Closed-form log-CF of `S(α, γ H, y₀ I)` with `H` uniform on the unit
/// Frobenius sphere: `−γ ‖S‖_F^α E|θ₁|^α + i y₀ Tr S` with `θ` uniform on
/// the sphere of `ℝ^{N²}`. The skew part of `ν_α` averages out by symmetry.
pub fn isotropic_log_cf(alpha: f64, gamma: f64, y0: f64, s: &HermitianMatrix) -> Result<Complex64> {
    check_alpha(alpha)?;
    let n = s.dim();
    let r = s.frobenius_norm();
    Ok(Complex64::new(
        -gamma * r.powf(alpha) * sphere_abs_moment(alpha, n * n),
        y0 * s.trace(),
    ))
}

fn check_n_mc(n_mc: usize) -> Result<()> {
    if n_mc == 0 {
        return Err(Error::param("n_mc", "must be positive"));
    }
    Ok(())
}

fn check_vector(spec: &EnsembleSpec, s: &[f64]) -> Result<()> {
    spec.validate()?;
    if s.len() != spec.dim {
        return Err(Error::DimensionMismatch {
            expected: spec.dim,
            got: s.len(),
        });
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::InputDomain("evaluation point must be finite".into()));
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Diagonal form `−γ ∫h_diag(dt) ν_α(sᵀt) + i y₀ 1ᵀs`, with `t` the diagonal
/// of a direction drawn from `H`.
pub fn log_cf_diag_form(spec: &EnsembleSpec, s: &[f64], n_mc: usize, seed: u64) -> Result<Estimate> {
    check_vector(spec, s)?;
    if s.iter().all(|&v| v == 0.0) {
        return Ok(Estimate::exact(zero()));
    }
    let shift = shift_term(spec.y0, s.iter().sum());
    let g = Complex64::new(-spec.gamma, 0.0);
    if let SpectralMeasure::DiracIdentity { p } = spec.measure {
        let u = s.iter().sum::<f64>() / (spec.dim as f64).sqrt();
        let v = nu(spec.alpha, u) * p + nu(spec.alpha, -u) * (1.0 - p);
        return Ok(Estimate::exact(g * v + shift));
    }
    check_n_mc(n_mc)?;
    let dirs = sample_directions(&spec.measure, spec.dim, spec.alpha, n_mc, seed)?;
    let vals: Vec<Complex64> = dirs.iter().map(|r| nu(spec.alpha, dot(s, &r.diagonal()))).collect();
    Ok(Estimate::from_samples(&vals).affine(g, shift))
}

/// Diagonal form written against the pushforward `g_α`: directions
/// `θ = t/‖t‖` weighted by `‖t‖^α`, plus the α = 1 drift
/// `−i y₁ 1ᵀs` from [`alpha1_shift`]. Equal to [`log_cf_diag_form`] on the
/// same draws.
pub fn log_cf_g_alpha_form(spec: &EnsembleSpec, s: &[f64], n_mc: usize, seed: u64) -> Result<Estimate> {
    check_vector(spec, s)?;
    if s.iter().all(|&v| v == 0.0) {
        return Ok(Estimate::exact(zero()));
    }
    let alpha = spec.alpha;
    let tr_s: f64 = s.iter().sum();
    check_n_mc(n_mc)?;
    let dirs = sample_directions(&spec.measure, spec.dim, alpha, n_mc, seed)?;
    let vals: Vec<Complex64> = dirs
        .iter()
        .map(|r| {
            let t = r.diagonal();
            match crate::spectral::g_alpha_weight(&t, alpha) {
                Ok((theta, w)) => nu(alpha, dot(s, &theta)) * w,
                Err(_) => zero(),
            }
        })
        .collect();
    let mut shift = shift_term(spec.y0, tr_s);
    if alpha == 1.0 {
        let y1 = alpha1_shift(&spec.measure, spec.dim, spec.gamma, n_mc, seed)?;
        shift -= I * (y1.value.re * tr_s);
    }
    Ok(Estimate::from_samples(&vals).affine(Complex64::new(-spec.gamma, 0.0), shift))
}

/// Eigenvalue form
/// `−γ c_N ∫h_eig(dr) Σ_ρ ν_α(sᵀr_ρ)(sᵀr_ρ)^{N(N−1)/2}/(Δ(s)Δ(r_ρ)) + i y₀ 1ᵀs`.
///
/// The formula is evaluated as written for every α. At α = 1 and N = 2 it
/// differs from the matrix form by `−iγ(1ᵀs) E_H[Tr R]/(2π)`, which vanishes
/// when `H` has barycentric trace zero.
pub fn log_cf_eig_form(spec: &EnsembleSpec, s: &[f64], n_mc: usize, seed: u64) -> Result<Estimate> {
    check_vector(spec, s)?;
    let n = spec.dim;
    if n > EIG_MAX_N {
        return Err(Error::Capability(format!(
            "eigenvalue form sums N! permutations; N = {n} exceeds {EIG_MAX_N}"
        )));
    }
    if s.iter().all(|&v| v == 0.0) {
        return Ok(Estimate::exact(zero()));
    }
    let c = c_n_constant(spec.alpha, n)?.value;
    let perms = permutations(n);
    check_n_mc(n_mc)?;
    let dirs = sample_directions(&spec.measure, n, spec.alpha, n_mc, seed)?;
    let vals = dirs
        .par_iter()
        .map(|r| {
            let ev = hermitian_eigvals(r)?;
            eig_sum(spec.alpha, s, &ev, &perms)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Estimate::from_samples(&vals).affine(
        Complex64::new(-spec.gamma * c, 0.0),
        shift_term(spec.y0, s.iter().sum()),
    ))
}

/// `∫₀¹ ν_α(a + u(b − a)) du`, in closed form via the antiderivative
/// `Φ_α(u) = uν_α(u)/(α+1)` (α ≠ 1) or `(u/2)ν₁(u) − (i/2π)u²` (α = 1).
pub fn segment_mean_nu(alpha: f64, a: f64, b: f64) -> Complex64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        return zero();
    }
    if (b - a).abs() <= 1e-3 * scale {
        return integrate(|u| nu(alpha, a + u * (b - a)), 0.0, 1.0, 1, 16);
    }
    let phi = |u: f64| {
        if alpha == 1.0 {
            nu(1.0, u) * (0.5 * u) - I * (u * u / (2.0 * std::f64::consts::PI))
        } else {
            nu(alpha, u) * (u / (alpha + 1.0))
        }
    };
    (phi(b) - phi(a)) / (b - a)
}

/// Deterministic N = 2 diagonal-form log-CF of the single-orbit ensemble
/// `S(α, γ H_X, y₀ I)` with `X = diag(x)`. The diagonal of `U X U†` is
/// `(u x₁ + (1−u) x₂, (1−u) x₁ + u x₂)` with `u = |U₁₁|²` uniform.
pub fn orbital_log_cf_n2(x: [f64; 2], s: [f64; 2], alpha: f64, gamma: f64, y0: f64) -> Result<Complex64> {
    check_alpha(alpha)?;
    let norm = x[0].hypot(x[1]);
    if norm == 0.0 {
        return Err(Error::param("orbit", "orbit representative has zero norm"));
    }
    let (x1, x2) = (x[0] / norm, x[1] / norm);
    let a = s[0] * x2 + s[1] * x1;
    let b = s[0] * x1 + s[1] * x2;
    Ok(segment_mean_nu(alpha, a, b) * (-gamma) + shift_term(y0, s[0] + s[1]))
}

/// Log-CF of the rank-one orbital ensemble, `−γ ∫_simplex ν_α(sᵀt) dt`:
/// Monte Carlo over the uniform simplex, or the closed-form segment integral
/// at N = 2 (stderr 0).
pub fn rank_one_orbital_logcf(s: &[f64], alpha: f64, gamma: f64, n_mc: usize, seed: u64) -> Result<Estimate> {
    check_alpha(alpha)?;
    let n = s.len();
    if n == 0 {
        return Err(Error::param("s", "evaluation point must be nonempty"));
    }
    if n == 1 {
        return Ok(Estimate::exact(nu(alpha, s[0]) * (-gamma)));
    }
    if n == 2 {
        return Ok(Estimate::exact(segment_mean_nu(alpha, s[1], s[0]) * (-gamma)));
    }
    if n_mc == 0 {
        return Err(Error::param("n_mc", "must be positive"));
    }
    let vals = par_draws(seed, "simplex", n_mc, |rng, _| {
        use rand::Rng;
        let e: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(rand_distr::Exp1)).collect();
        let tot: f64 = e.iter().sum();
        nu(alpha, e.iter().zip(s).map(|(t, v)| t * v).sum::<f64>() / tot)
    });
    Ok(Estimate::from_samples(&vals).affine(Complex64::new(-gamma, 0.0), zero()))
}

fn nonempty(batch: &SampleBatch) -> Result<()> {
    if batch.is_empty() {
        Err(Error::InputDomain("empirical CF of an empty batch".into()))
    } else {
        Ok(())
    }
}

/// Sample mean of `exp(i Tr X_j S)`.
pub fn empirical_cf_matrix(batch: &SampleBatch, s: &HermitianMatrix) -> Result<Estimate> {
    nonempty(batch)?;
    if s.dim() != batch.dim() {
        return Err(Error::DimensionMismatch {
            expected: batch.dim(),
            got: s.dim(),
        });
    }
    if s.frobenius_norm() == 0.0 {
        return Ok(Estimate::exact(Complex64::new(1.0, 0.0)));
    }
    let vals: Vec<Complex64> = batch
        .matrices()
        .par_iter()
        .map(|x| Complex64::from_polar(1.0, x.trace_product(s)))
        .collect();
    Ok(Estimate::from_samples(&vals))
}

/// Sample mean of `exp(i diag(X_j)ᵀ s)`.
pub fn empirical_cf_diag(batch: &SampleBatch, s: &[f64]) -> Result<Estimate> {
    nonempty(batch)?;
    if s.len() != batch.dim() {
        return Err(Error::DimensionMismatch {
            expected: batch.dim(),
            got: s.len(),
        });
    }
    if s.iter().all(|&v| v == 0.0) {
        return Ok(Estimate::exact(Complex64::new(1.0, 0.0)));
    }
    let vals: Vec<Complex64> = batch
        .diagonals()
        .par_iter()
        .map(|d| Complex64::from_polar(1.0, dot(d, s)))
        .collect();
    Ok(Estimate::from_samples(&vals))
}

/// Sample mean of the HCIZ kernel `K(eig(X_j), s)`.
pub fn empirical_spherical_cf(batch: &SampleBatch, s: &[f64]) -> Result<Estimate> {
    nonempty(batch)?;
    if s.len() != batch.dim() {
        return Err(Error::DimensionMismatch {
            expected: batch.dim(),
            got: s.len(),
        });
    }
    if s.iter().all(|&v| v == 0.0) {
        return Ok(Estimate::exact(Complex64::new(1.0, 0.0)));
    }
    let vals = batch
        .eigenvalues()
        .par_iter()
        .map(|ev| hciz_kernel(ev, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(Estimate::from_samples(&vals))
}

/// One grid point of the derivative-principle check.
#[derive(Clone, Debug, Serialize)]
pub struct DpPoint {
    pub s: Vec<f64>,
    pub spherical: Estimate,
    pub diagonal: Estimate,
    pub residual: f64,
    /// Standard error of the mean of the per-draw difference
    /// `K(eig(X_j), s) − exp(i diag(X_j)ᵀs)`.
    pub combined_stderr: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DpResidual {
    pub max_residual: f64,
    pub points: Vec<DpPoint>,
}

/// Compares the spherical transform of the eigenvalue sample with the
/// Fourier transform of the diagonal sample on `s_grid`.
pub fn derivative_principle_residual(batch: &SampleBatch, s_grid: &[Vec<f64>]) -> Result<DpResidual> {
    nonempty(batch)?;
    let mut points = Vec::with_capacity(s_grid.len());
    for s in s_grid {
        if s.len() != batch.dim() {
            return Err(Error::DimensionMismatch {
                expected: batch.dim(),
                got: s.len(),
            });
        }
        let pairs = batch
            .eigenvalues()
            .par_iter()
            .zip(batch.diagonals().par_iter())
            .map(|(ev, d)| Ok((hciz_kernel(ev, s)?, Complex64::from_polar(1.0, dot(d, s)))))
            .collect::<Result<Vec<_>>>()?;
        let sph: Vec<Complex64> = pairs.iter().map(|p| p.0).collect();
        let dia: Vec<Complex64> = pairs.iter().map(|p| p.1).collect();
        let diff: Vec<Complex64> = pairs.iter().map(|p| p.0 - p.1).collect();
        let spherical = Estimate::from_samples(&sph);
        let diagonal = Estimate::from_samples(&dia);
        let d = Estimate::from_samples(&diff);
        points.push(DpPoint {
            s: s.clone(),
            spherical,
            diagonal,
            residual: (spherical.value - diagonal.value).norm(),
            combined_stderr: d.stderr,
        });
    }
    let max_residual = points.iter().map(|p| p.residual).fold(0.0, f64::max);
    Ok(DpResidual { max_residual, points })
}

/// One row of a CF export.
#[derive(Clone, Debug, Serialize)]
pub struct CfRow {
    pub point_id: usize,
    pub form: String,
    pub estimate: Estimate,
}

/// Writes `point_id,form,re,im,stderr` with 17 significant digits.
pub fn write_cf_csv(w: &mut impl Write, rows: &[CfRow]) -> Result<()> {
    writeln!(w, "point_id,form,re,im,stderr")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{:.16e},{:.16e},{:.16e}",
            r.point_id, r.form, r.estimate.value.re, r.estimate.value.im, r.estimate.stderr
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::{sample_dirac_stable, sample_gaussian_invariant};
    use crate::linalg::sample_haar_unitary;
    use crate::rng::substream;
    use rand::Rng;

    fn haar_mc(x: &[f64], s: &[f64], n: usize, seed: u64) -> Estimate {
        let dx = HermitianMatrix::from_diagonal(x);
        let ds = HermitianMatrix::from_diagonal(s);
        let vals = par_draws(seed, "haar-mc", n, |rng, _| {
            let u = sample_haar_unitary(x.len(), rng);
            Complex64::from_polar(1.0, dx.conjugate_by(&u).trace_product(&ds))
        });
        Estimate::from_samples(&vals)
    }

    #[test]
    fn hciz_trivial_cases() {
        assert_eq!(
            hciz_kernel(&[1.0, 2.0, -0.5], &[0.0; 3]).unwrap(),
            Complex64::new(1.0, 0.0)
        );
        assert_eq!(hciz_kernel(&[0.0; 2], &[1.0, 3.0]).unwrap(), Complex64::new(1.0, 0.0));
        let k = hciz_kernel(&[0.7], &[-2.0]).unwrap();
        assert!((k - Complex64::from_polar(1.0, -1.4)).norm() < 1e-15);
        assert!(hciz_kernel(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn hciz_two_by_two_example() {
        let k = hciz_kernel(&[0.0, std::f64::consts::PI], &[0.0, 1.0]).unwrap();
        assert!((k - Complex64::new(0.0, 2.0 / std::f64::consts::PI)).norm() < 1e-14);
        let mc = haar_mc(&[0.0, std::f64::consts::PI], &[0.0, 1.0], 200_000, 1);
        assert!((mc.value - k).norm() <= 4.0 * mc.stderr);
    }

    #[test]
    fn hciz_matches_haar_monte_carlo() {
        let mut rng = substream(4, "hciz-pairs", 0);
        for n in [2usize, 3] {
            for t in 0..3u64 {
                let x: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
                let s: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
                let k = hciz_kernel(&x, &s).unwrap();
                let mc = haar_mc(&x, &s, 50_000, 10 + t);
                assert!(
                    (mc.value - k).norm() <= 4.0 * mc.stderr,
                    "n={n} x={x:?} s={s:?}: {k} vs {}",
                    mc.value
                );
            }
        }
    }

    #[test]
    fn hciz_confluent_path_is_continuous() {
        for (x, s) in [
            (vec![0.3, 0.3, -1.0], vec![1.0, 0.2, -0.4]),
            (vec![0.5, -0.2, 1.1], vec![0.7, 0.7, 0.7 + 1e-9]),
            (vec![1.0, 1.0, 1.0 + 1e-8], vec![0.0, 0.0, 2.0]),
        ] {
            let k = hciz_kernel(&x, &s).unwrap();
            // nudge well outside the confluent threshold and compare
            let xe: Vec<f64> = x.iter().enumerate().map(|(i, v)| v + 1e-4 * i as f64).collect();
            let se: Vec<f64> = s.iter().enumerate().map(|(i, v)| v + 1e-4 * i as f64).collect();
            let ke = hciz_kernel(&xe, &se).unwrap();
            assert!((k - ke).norm() < 1e-3, "{k} vs {ke}");
            assert!(k.norm() <= 1.0 + 1e-12);
        }
        // fully confluent x: K(c1, s) = e^{ic 1ᵀs}
        let k = hciz_kernel(&[0.4, 0.4], &[1.0, 2.0]).unwrap();
        assert!((k - Complex64::from_polar(1.0, 1.2)).norm() < 1e-14);
        // repeated s against Monte Carlo
        let mc = haar_mc(&[0.2, -0.9, 1.3], &[1.0, 1.0, -0.5], 100_000, 2);
        let k = hciz_kernel(&[0.2, -0.9, 1.3], &[1.0, 1.0, -0.5]).unwrap();
        assert!((mc.value - k).norm() <= 4.0 * mc.stderr);
    }

    #[test]
    fn hciz_bounded_and_symmetric() {
        let mut rng = substream(6, "hciz-bound", 0);
        for _ in 0..1000 {
            let n = rng.random_range(1..5);
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let s: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let k = hciz_kernel(&x, &s).unwrap();
            assert!(k.norm() <= 1.0 + 1e-9, "|K|={}", k.norm());
            let mut xr = x.clone();
            xr.reverse();
            assert!((hciz_kernel(&xr, &s).unwrap() - k).norm() < 1e-9);
            assert!((hciz_kernel(&s, &x).unwrap() - k).norm() < 1e-9);
        }
    }

    #[test]
    fn c_n_values() {
        assert!((c_n_constant(1.3, 1).unwrap().value - 1.0).abs() < 1e-14);
        assert!((c_n_constant(1.0, 2).unwrap().value - 0.5).abs() < 1e-14);
        assert!((c_n_constant(2.0, 2).unwrap().value - 1.0 / 3.0).abs() < 1e-14);
        // N = 3: Γ(α+1)·2/Γ(α+4) = 2/((α+1)(α+2)(α+3))
        assert!((c_n_constant(0.5, 3).unwrap().value - 2.0 / (1.5 * 2.5 * 3.5)).abs() < 1e-14);
    }

    #[test]
    fn eig_kernel_equals_haar_average() {
        // N = 2: Tr U diag(s) U† diag(r) is uniform on the segment [a, b]
        for alpha in [0.5, 1.0, 1.5] {
            let (s, r) = ([0.8, -0.3], [1.2, 0.4]);
            let a = s[0] * r[1] + s[1] * r[0];
            let b = s[0] * r[0] + s[1] * r[1];
            let exact = segment_mean_nu(alpha, a, b);
            let k = eig_kernel(alpha, &s, &r).unwrap();
            // at α = 1 the formula as written carries an extra linear term
            let extra = if alpha == 1.0 {
                I * ((s[0] + s[1]) * (r[0] + r[1]) / (2.0 * std::f64::consts::PI))
            } else {
                zero()
            };
            assert!((k - exact - extra).norm() < 1e-12, "alpha={alpha}: {k} vs {exact}");
        }
        // N = 3 against Haar Monte Carlo
        let (s, r) = ([1.0, -0.5, 0.2], [0.6, 0.1, -0.9]);
        let ds = HermitianMatrix::from_diagonal(&s);
        let dr = HermitianMatrix::from_diagonal(&r);
        for alpha in [0.7, 1.5] {
            let vals = par_draws(9, "cn3", 100_000, |rng, _| {
                let u = sample_haar_unitary(3, rng);
                nu(alpha, ds.conjugate_by(&u).trace_product(&dr))
            });
            let mc = Estimate::from_samples(&vals);
            let k = eig_kernel(alpha, &s, &r).unwrap();
            assert!(
                (mc.value - k).norm() <= 4.0 * mc.stderr,
                "alpha={alpha}: {k} vs {}",
                mc.value
            );
        }
    }

    #[test]
    fn eig_kernel_degenerate_arguments() {
        let s = [0.5, 0.5, -1.0];
        let r = [0.9, -0.1, -0.4];
        let k = eig_kernel(1.3, &s, &r).unwrap();
        let ds = HermitianMatrix::from_diagonal(&s);
        let dr = HermitianMatrix::from_diagonal(&r);
        let vals = par_draws(3, "degen", 100_000, |rng, _| {
            let u = sample_haar_unitary(3, rng);
            nu(1.3, ds.conjugate_by(&u).trace_product(&dr))
        });
        let mc = Estimate::from_samples(&vals);
        assert!((mc.value - k).norm() <= 4.0 * mc.stderr);
        assert!(matches!(
            eig_kernel(1.0, &[1.0; 9], &[1.0; 9]),
            Err(Error::Capability(_))
        ));
    }

    fn iso(alpha: f64) -> EnsembleSpec {
        EnsembleSpec::new(alpha, 1.0, 0.0, 2, SpectralMeasure::IsotropicUniform).unwrap()
    }

    #[test]
    fn isotropic_closed_form_matches_monte_carlo() {
        // E|θ₁|² = 1/d
        assert!((sphere_abs_moment(2.0, 4) - 0.25).abs() < 1e-14);
        for alpha in [0.7, 1.0, 1.6] {
            let spec = EnsembleSpec::new(alpha, 1.3, 0.4, 2, SpectralMeasure::IsotropicUniform).unwrap();
            let s = HermitianMatrix::from_rows(
                &[
                    vec![Complex64::new(0.8, 0.0), Complex64::new(0.2, -0.5)],
                    vec![Complex64::new(0.2, 0.5), Complex64::new(-0.3, 0.0)],
                ],
                0.0,
            )
            .unwrap();
            let mc = log_cf_matrix(&spec, &s, 100_000, 3).unwrap();
            let exact = isotropic_log_cf(alpha, 1.3, 0.4, &s).unwrap();
            assert!(
                (mc.value - exact).norm() <= 4.0 * mc.stderr,
                "alpha={alpha}: {} vs {exact}",
                mc.value
            );
        }
    }

    #[test]
    fn log_cf_zero_points() {
        let spec = iso(1.5);
        assert_eq!(
            log_cf_matrix(&spec, &HermitianMatrix::zeros(2), 10, 0).unwrap().value,
            zero()
        );
        assert_eq!(log_cf_diag_form(&spec, &[0.0, 0.0], 10, 0).unwrap().value, zero());
        assert_eq!(log_cf_eig_form(&spec, &[0.0, 0.0], 10, 0).unwrap().value, zero());
    }

    #[test]
    fn dirac_log_cf_closed_form() {
        let spec = EnsembleSpec::new(1.2, 0.7, 0.3, 2, SpectralMeasure::dirac(0.8).unwrap()).unwrap();
        let s = HermitianMatrix::from_diagonal(&[1.0, 0.5]);
        let u = 1.5 / 2f64.sqrt();
        let expect = -(nu(1.2, u) * 0.8 + nu(1.2, -u) * 0.2) * 0.7 + I * (0.3 * 1.5);
        let m = log_cf_matrix(&spec, &s, 10, 0).unwrap();
        assert_eq!(m.stderr, 0.0);
        assert!((m.value - expect).norm() < 1e-14);
        let d = log_cf_diag_form(&spec, &[1.0, 0.5], 10, 0).unwrap();
        assert!((d.value - expect).norm() < 1e-14);
    }

    #[test]
    fn dirac_diag_form_matches_univariate_cf() {
        let (alpha, gamma, p) = (1.4, 0.9, 0.3);
        let spec = EnsembleSpec::new(alpha, gamma, 0.0, 3, SpectralMeasure::dirac(p).unwrap()).unwrap();
        let par = crate::stable1d::dirac_weight_to_params(p, alpha, gamma).unwrap();
        for k in [-2.0, -0.3, 0.5, 1.7] {
            let s = [k, 0.0, 0.0];
            let d = log_cf_diag_form(&spec, &s, 1, 0).unwrap().value.exp();
            let u = crate::stable1d::stable_cf_1d(&par, k / 3f64.sqrt());
            assert!((d - u).norm() < 1e-14);
        }
    }

    #[test]
    fn elliptical_matrix_form_matches_closed_form() {
        let (sigma, alpha) = (1.0, 1.5);
        let spec = EnsembleSpec::elliptical(sigma, 0.0, alpha, 0.0, 2).unwrap();
        for s in [
            HermitianMatrix::from_diagonal(&[1.0, 0.0]),
            HermitianMatrix::from_diagonal(&[0.6, -1.1]),
        ] {
            let e = log_cf_matrix(&spec, &s, 100_000, 5).unwrap();
            let t = crate::ensembles::elliptical_log_cf(sigma, 0.0, alpha, 0.0, &s);
            assert!((e.value - t).norm() <= 4.0 * e.stderr);
        }
    }

    #[test]
    fn three_forms_agree_at_alpha_two() {
        let spec = EnsembleSpec::new(2.0, 1.0, 0.0, 2, SpectralMeasure::single_orbit(&[1.0, -1.0]).unwrap()).unwrap();
        let m = log_cf_matrix(&spec, &HermitianMatrix::from_diagonal(&[-1.0, 1.0]), 50_000, 1).unwrap();
        let e = log_cf_eig_form(&spec, &[-1.0, 1.0], 50_000, 2).unwrap();
        let d = log_cf_diag_form(&spec, &[-1.0, 1.0], 50_000, 3).unwrap();
        assert!(m.agrees_with(&e, 4.0, 1e-12));
        assert!(m.agrees_with(&d, 4.0, 1e-12));
        // isotropic, s = (1, 0)
        let spec = iso(2.0);
        let m = log_cf_matrix(&spec, &HermitianMatrix::from_diagonal(&[1.0, 0.0]), 50_000, 4).unwrap();
        let d = log_cf_diag_form(&spec, &[1.0, 0.0], 50_000, 5).unwrap();
        assert!(m.agrees_with(&d, 4.0, 0.0));
    }

    #[test]
    fn forms_are_permutation_symmetric() {
        let spec = iso(1.3);
        let a = log_cf_diag_form(&spec, &[0.4, -1.2], 2000, 7).unwrap();
        let b = log_cf_diag_form(&spec, &[-1.2, 0.4], 2000, 7).unwrap();
        assert!(a.agrees_with(&b, 4.0, 0.0));
        let a = log_cf_eig_form(&spec, &[0.4, -1.2], 2000, 7).unwrap();
        let b = log_cf_eig_form(&spec, &[-1.2, 0.4], 2000, 7).unwrap();
        assert!((a.value - b.value).norm() < 1e-12);
    }

    #[test]
    fn g_alpha_form_equals_diag_form_on_same_draws() {
        for alpha in [0.6, 1.0, 1.7] {
            let spec =
                EnsembleSpec::new(alpha, 1.3, 0.2, 2, SpectralMeasure::single_orbit(&[1.0, 0.3]).unwrap()).unwrap();
            let s = [0.9, -0.4];
            let d = log_cf_diag_form(&spec, &s, 5000, 11).unwrap();
            let g = log_cf_g_alpha_form(&spec, &s, 5000, 11).unwrap();
            if alpha == 1.0 {
                // the drift is an average over draws, so agreement is statistical
                assert!(
                    d.agrees_with(&g, 4.0, 1e-12),
                    "alpha={alpha}: {} vs {}",
                    d.value,
                    g.value
                );
            } else {
                assert!(
                    (d.value - g.value).norm() < 1e-12,
                    "alpha={alpha}: {} vs {}",
                    d.value,
                    g.value
                );
            }
        }
    }

    #[test]
    fn rank_one_examples() {
        let e = rank_one_orbital_logcf(&[0.7; 3], 1.4, 2.0, 100, 0).unwrap();
        assert!((e.value + nu(1.4, 0.7) * 2.0).norm() < 1e-12);
        let e = rank_one_orbital_logcf(&[1.0, 0.0], 2.0, 1.5, 0, 0).unwrap();
        assert!((e.value + Complex64::new(0.5, 0.0)).norm() < 1e-14);
        let e = rank_one_orbital_logcf(&[1.0, -1.0], 1.0, 1.0, 0, 0).unwrap();
        assert!((e.value.re + 0.5).abs() < 1e-14);
        // quadrature cross-check of the closed form, including α = 1
        for alpha in [0.5, 1.0, 1.8] {
            let (a, b) = (-0.7, 1.3);
            let q: Complex64 = integrate(|u| nu(alpha, a + u * (b - a)), 0.0, 1.0, 400, 16);
            assert!((q - segment_mean_nu(alpha, a, b)).norm() < 1e-8, "alpha={alpha}");
        }
        // N = 3 Monte Carlo versus the orbital diagonal form of diag(1,0,0)
        let mc = rank_one_orbital_logcf(&[1.0, -0.5, 0.3], 1.2, 1.0, 50_000, 1).unwrap();
        let spec = EnsembleSpec::new(
            1.2,
            1.0,
            0.0,
            3,
            SpectralMeasure::single_orbit(&[1.0, 0.0, 0.0]).unwrap(),
        )
        .unwrap();
        let d = log_cf_diag_form(&spec, &[1.0, -0.5, 0.3], 50_000, 2).unwrap();
        assert!(mc.agrees_with(&d, 4.0, 0.0));
    }

    #[test]
    fn empirical_cf_examples() {
        let b = sample_gaussian_invariant(1.0, 0.0, 2, 100_000, 21).unwrap();
        let one = Complex64::new(1.0, 0.0);
        assert_eq!(
            empirical_cf_matrix(&b, &HermitianMatrix::zeros(2)).unwrap(),
            Estimate::exact(one)
        );
        assert_eq!(empirical_cf_diag(&b, &[0.0, 0.0]).unwrap(), Estimate::exact(one));
        let t = Complex64::new((-1.0f64).exp(), 0.0);
        let d = empirical_cf_diag(&b, &[1.0, 1.0]).unwrap();
        assert!((d.value - t).norm() <= 3.0 * d.stderr);
        let s = empirical_spherical_cf(&b, &[1.0, 1.0]).unwrap();
        assert!((s.value - t).norm() <= 3.0 * s.stderr);
    }

    #[test]
    fn dirac_batch_has_zero_dp_residual() {
        let b = sample_dirac_stable(1.5, 1.0, 0.7, 0.0, 3, 2000, 22).unwrap();
        let r = derivative_principle_residual(&b, &[vec![1.0, 0.5, -0.2], vec![0.3, 0.3, 0.3]]).unwrap();
        assert!(r.max_residual < 1e-12, "{}", r.max_residual);
    }

    #[test]
    fn csv_export_format() {
        let rows = vec![CfRow {
            point_id: 0,
            form: "matrix".into(),
            estimate: Estimate {
                value: Complex64::new(0.1, -2.0),
                stderr: 1e-3,
            },
        }];
        let mut buf = Vec::new();
        write_cf_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "point_id,form,re,im,stderr\n0,matrix,1.0000000000000001e-1,-2.0000000000000000e0,1.0000000000000000e-3\n"
        );
    }
}
