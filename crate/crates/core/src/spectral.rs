//! Unitarily invariant spectral measures on the unit sphere of Herm(N).

use std::f64::consts::FRAC_2_PI;

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigvals, sample_gue, sample_haar_unitary, HermitianMatrix};
use crate::rng::{par_draws, StreamRng};
use crate::stable1d::check_alpha;
use crate::stats::Estimate;

/// One unitary orbit `{U X U†}` of an orbital measure, with its weight.
#[derive(Clone, Debug, PartialEq)]
pub struct Orbit {
    representative: HermitianMatrix,
    eigenvalues: Vec<f64>,
    pub weight: f64,
}

impl Orbit {
    /// Orbit of `diag(eigenvalues)`, rescaled to unit Frobenius norm.
    pub fn from_eigenvalues(eigenvalues: &[f64], weight: f64) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::param("eigenvalues", "orbit needs at least one eigenvalue"));
        }
        if eigenvalues.iter().any(|x| !x.is_finite()) {
            return Err(Error::param("eigenvalues", "eigenvalues must be finite"));
        }
        let norm = eigenvalues.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::param("eigenvalues", "orbit representative has zero norm"));
        }
        let mut ev: Vec<f64> = eigenvalues.iter().map(|x| x / norm).collect();
        let representative = HermitianMatrix::from_diagonal(&ev);
        ev.sort_by(f64::total_cmp);
        Self::with_weight(representative, ev, weight)
    }

    /// Orbit of an arbitrary Hermitian representative, rescaled to unit
    /// Frobenius norm.
    pub fn from_matrix(x: &HermitianMatrix, weight: f64) -> Result<Self> {
        let norm = x.frobenius_norm();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::param(
                "orbit",
                "orbit representative has zero or non-finite norm",
            ));
        }
        let representative = x.scale(1.0 / norm);
        let ev = hermitian_eigvals(&representative)?;
        Self::with_weight(representative, ev, weight)
    }

    fn with_weight(representative: HermitianMatrix, eigenvalues: Vec<f64>, weight: f64) -> Result<Self> {
        if !(weight >= 0.0 && weight.is_finite()) {
            return Err(Error::param("weight", format!("{weight} must be nonnegative")));
        }
        Ok(Self {
            representative,
            eigenvalues,
            weight,
        })
    }

    pub fn representative(&self) -> &HermitianMatrix {
        &self.representative
    }

    /// Ascending spectrum of the normalized representative.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn trace(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }
}

/// A probability measure `H` on the unit Frobenius sphere of Herm(N) that is
/// invariant under unitary conjugation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MeasureRepr", into = "MeasureRepr")]
pub enum SpectralMeasure {
    /// Uniform measure on the sphere.
    IsotropicUniform,
    /// Density `c₃ [c₁ + c₂ (Tr R)²]^{−(α+N²)/2}` against the uniform measure.
    Elliptical { sigma: f64, kappa: f64 },
    /// Masses `p` at `I/√N` and `1 − p` at `−I/√N`.
    DiracIdentity { p: f64 },
    /// Mixture of orbital measures.
    Orbital { orbits: Vec<Orbit> },
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
enum MeasureRepr {
    Isotropic {},
    Elliptical { sigma: f64, kappa: f64 },
    Dirac { p: f64 },
    Orbital { orbits: Vec<OrbitRepr> },
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OrbitRepr {
    eigenvalues: Vec<f64>,
    weight: f64,
}

impl TryFrom<MeasureRepr> for SpectralMeasure {
    type Error = Error;

    fn try_from(r: MeasureRepr) -> Result<Self> {
        let m = match r {
            MeasureRepr::Isotropic {} => SpectralMeasure::IsotropicUniform,
            MeasureRepr::Elliptical { sigma, kappa } => SpectralMeasure::elliptical(sigma, kappa)?,
            MeasureRepr::Dirac { p } => SpectralMeasure::dirac(p)?,
            MeasureRepr::Orbital { orbits } => SpectralMeasure::orbital(
                orbits
                    .iter()
                    .map(|o| Orbit::from_eigenvalues(&o.eigenvalues, o.weight))
                    .collect::<Result<Vec<_>>>()?,
            )?,
        };
        Ok(m)
    }
}

impl From<SpectralMeasure> for MeasureRepr {
    fn from(m: SpectralMeasure) -> Self {
        match m {
            SpectralMeasure::IsotropicUniform => MeasureRepr::Isotropic {},
            SpectralMeasure::Elliptical { sigma, kappa } => MeasureRepr::Elliptical { sigma, kappa },
            SpectralMeasure::DiracIdentity { p } => MeasureRepr::Dirac { p },
            SpectralMeasure::Orbital { orbits } => MeasureRepr::Orbital {
                orbits: orbits
                    .into_iter()
                    .map(|o| OrbitRepr {
                        eigenvalues: if o.representative.is_diagonal() {
                            o.representative.diagonal()
                        } else {
                            o.eigenvalues
                        },
                        weight: o.weight,
                    })
                    .collect(),
            },
        }
    }
}

impl SpectralMeasure {
    /// Elliptical measure; the dimension-dependent bound on `kappa` is
    /// checked by [`SpectralMeasure::validate`].
    pub fn elliptical(sigma: f64, kappa: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::param("sigma", format!("{sigma} must be positive")));
        }
        if !kappa.is_finite() {
            return Err(Error::param("kappa", "must be finite"));
        }
        Ok(SpectralMeasure::Elliptical { sigma, kappa })
    }

    pub fn dirac(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::param("p", format!("{p} is outside [0, 1]")));
        }
        Ok(SpectralMeasure::DiracIdentity { p })
    }

    /// Orbital mixture; weights must sum to one within `1e-12` and all
    /// orbits must share one dimension.
    pub fn orbital(orbits: Vec<Orbit>) -> Result<Self> {
        if orbits.is_empty() {
            return Err(Error::param("orbits", "at least one orbit is required"));
        }
        let n = orbits[0].eigenvalues.len();
        if let Some(o) = orbits.iter().find(|o| o.eigenvalues.len() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: o.eigenvalues.len(),
            });
        }
        let total: f64 = orbits.iter().map(|o| o.weight).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::param("weight", format!("orbit weights sum to {total}, not 1")));
        }
        Ok(SpectralMeasure::Orbital { orbits })
    }

    /// Single orbit of `diag(eigenvalues)` (normalized).
    pub fn single_orbit(eigenvalues: &[f64]) -> Result<Self> {
        Self::orbital(vec![Orbit::from_eigenvalues(eigenvalues, 1.0)?])
    }

    /// Checks compatibility with dimension `n`.
    pub fn validate(&self, n: usize) -> Result<()> {
        if n == 0 {
            return Err(Error::param("N", "dimension must be positive"));
        }
        match self {
            SpectralMeasure::Elliptical { sigma, kappa } => {
                let bound = -sigma * sigma / n as f64;
                if !(*kappa > bound) {
                    return Err(Error::param(
                        "kappa",
                        format!("{kappa} must exceed -sigma^2/N = {bound}"),
                    ));
                }
            }
            SpectralMeasure::Orbital { orbits } => {
                let got = orbits[0].eigenvalues.len();
                if got != n {
                    return Err(Error::DimensionMismatch { expected: n, got });
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// True when every direction in the support has the same diagonal norm
    /// as its Frobenius norm (only the Dirac measure).
    pub fn is_dirac(&self) -> bool {
        matches!(self, SpectralMeasure::DiracIdentity { .. })
    }
}

/// Closed-form constants of the elliptical spectral measure.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EllipticalConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub gamma_scale: f64,
}

/// Gauss hypergeometric function `₂F₁(a, b; c; z)` for real `z < 1`.
///
/// Sums the power series directly for `0 ≤ z < 1`; negative arguments go
/// through the Pfaff transformation
/// `₂F₁(a,b;c;z) = (1−z)^{−a} ₂F₁(a, c−b; c; z/(z−1))`.
pub fn gauss_2f1(a: f64, b: f64, c: f64, z: f64) -> Result<f64> {
    if c <= 0.0 && c.fract() == 0.0 {
        return Err(Error::param("c", "must not be a nonpositive integer"));
    }
    if !(z < 1.0) {
        return Err(Error::InputDomain(format!("2F1 series diverges at z = {z}")));
    }
    if z < 0.0 {
        return Ok((1.0 - z).powf(-a) * series_2f1(a, c - b, c, z / (z - 1.0))?);
    }
    series_2f1(a, b, c, z)
}

fn series_2f1(a: f64, b: f64, c: f64, z: f64) -> Result<f64> {
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 0..1_000_000u32 {
        let kf = f64::from(k);
        let ratio = (a + kf) * (b + kf) / ((c + kf) * (kf + 1.0)) * z;
        term *= ratio;
        sum += term;
        if term == 0.0 {
            return Ok(sum);
        }
        let r = ratio.abs();
        // Past the peak, the remainder is dominated by a geometric tail.
        if r < 1.0 && kf > (a.abs() + b.abs() + c.abs()) && term.abs() * r / (1.0 - r) <= 1e-14 * sum.abs() {
            return Ok(sum);
        }
    }
    Err(Error::Conditioning(format!("2F1 series did not converge at z = {z}")))
}

/// Constants `c₁, c₂, c₃, γ` of the elliptical spectral measure for the
/// canonical quadratic form `q(S) = σ² Tr S²/α + κ (Tr S)²/α`.
///
/// `γ` is fixed so that `γ ∫H(dR) ν_α(Tr SR) = q(S)^{α/2}`, i.e. the stable
/// ensemble `S(α, γH, 0)` has characteristic function `exp(−q(S)^{α/2})`.
pub fn elliptical_constants(sigma: f64, kappa: f64, alpha: f64, n: usize) -> Result<EllipticalConstants> {
    SpectralMeasure::elliptical(sigma, kappa)?.validate(n)?;
    if !(alpha > 0.0 && alpha < 2.0) {
        return Err(Error::param("alpha", format!("{alpha} is outside (0, 2)")));
    }
    let nf = n as f64;
    let d = nf * nf;
    let s2 = sigma * sigma;
    let c1 = alpha / (4.0 * s2);
    let c2 = -alpha * kappa / (4.0 * s2 * (s2 + nf * kappa));
    let e = 0.5 * (alpha + d);
    // (Tr R)² = N r₁² for the component r₁ of R along I/√N.
    let f = gauss_2f1(0.5, e, 0.5 * d, -c2 * nf / c1)?;
    let c3 = c1.powf(e) / f;
    let ln_k = ln_gamma(0.5 * d) + ln_gamma(alpha + 1.0)
        - 0.5 * (d - 1.0) * c1.ln()
        - 0.5 * (c1 + nf * c2).ln()
        - ln_gamma(e)
        - ln_gamma(0.5 * alpha + 1.0);
    let gamma_scale = 1.0 / (c3 * ln_k.exp());
    Ok(EllipticalConstants {
        c1,
        c2,
        c3,
        gamma_scale,
    })
}

enum Kind {
    Isotropic,
    Elliptical {
        c1: f64,
        c2: f64,
        exponent: f64,
        t_peak: f64,
        acceptance: f64,
    },
    Dirac {
        p: f64,
    },
    Orbital {
        spectra: Vec<Vec<f64>>,
        cumulative: Vec<f64>,
    },
}

/// A spectral measure prepared for repeated sampling at fixed `N` and `α`.
pub struct DirectionSampler {
    n: usize,
    kind: Kind,
}

const MIN_ACCEPTANCE: f64 = 1e-6;

impl DirectionSampler {
    pub fn new(h: &SpectralMeasure, n: usize, alpha: f64) -> Result<Self> {
        h.validate(n)?;
        let kind = match h {
            SpectralMeasure::IsotropicUniform => Kind::Isotropic,
            SpectralMeasure::Elliptical { sigma, kappa } => {
                let k = elliptical_constants(*sigma, *kappa, alpha, n)?;
                let nf = n as f64;
                let exponent = 0.5 * (alpha + nf * nf);
                // The density is monotone in (Tr R)² ∈ [0, N].
                let t_peak = if k.c2 >= 0.0 { 0.0 } else { nf };
                let f_peak = (k.c1 + k.c2 * t_peak).powf(-exponent);
                let acceptance = 1.0 / (k.c3 * f_peak);
                if acceptance < MIN_ACCEPTANCE {
                    return Err(Error::Capability(format!(
                        "elliptical rejection sampler acceptance {acceptance:e} is too small"
                    )));
                }
                Kind::Elliptical {
                    c1: k.c1,
                    c2: k.c2,
                    exponent,
                    t_peak,
                    acceptance,
                }
            }
            SpectralMeasure::DiracIdentity { p } => Kind::Dirac { p: *p },
            SpectralMeasure::Orbital { orbits } => {
                let mut acc = 0.0;
                let cumulative = orbits
                    .iter()
                    .map(|o| {
                        acc += o.weight;
                        acc
                    })
                    .collect();
                Kind::Orbital {
                    spectra: orbits.iter().map(|o| o.eigenvalues.clone()).collect(),
                    cumulative,
                }
            }
        };
        Ok(Self { n, kind })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Probability that one isotropic proposal is accepted (1 for
    /// rejection-free variants).
    pub fn acceptance_rate(&self) -> f64 {
        match self.kind {
            Kind::Elliptical { acceptance, .. } => acceptance,
            _ => 1.0,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> HermitianMatrix {
        let n = self.n;
        match &self.kind {
            Kind::Isotropic => isotropic(n, rng),
            Kind::Elliptical {
                c1,
                c2,
                exponent,
                t_peak,
                ..
            } => loop {
                let r = isotropic(n, rng);
                let t = r.trace().powi(2);
                let ratio = ((c1 + c2 * t_peak) / (c1 + c2 * t)).powf(*exponent);
                if rng.random::<f64>() < ratio {
                    break r;
                }
            },
            Kind::Dirac { p } => {
                let sign = if rng.random::<f64>() < *p { 1.0 } else { -1.0 };
                HermitianMatrix::scaled_identity(n, sign / (n as f64).sqrt())
            }
            Kind::Orbital { spectra, cumulative } => {
                let j = pick(cumulative, rng.random::<f64>());
                let u = sample_haar_unitary(n, rng);
                HermitianMatrix::from_diagonal(&spectra[j]).conjugate_by(&u)
            }
        }
    }
}

fn pick(cumulative: &[f64], u: f64) -> usize {
    let total = *cumulative.last().expect("nonempty");
    cumulative
        .iter()
        .position(|&c| u * total < c)
        .unwrap_or(cumulative.len() - 1)
}

fn isotropic<R: Rng + ?Sized>(n: usize, rng: &mut R) -> HermitianMatrix {
    loop {
        let g = sample_gue(n, rng);
        let norm = g.frobenius_norm();
        if norm > 0.0 {
            return g.scale(1.0 / norm);
        }
    }
}

/// One draw from `H` (convenience wrapper around [`DirectionSampler`]).
pub fn sample_direction<R: Rng + ?Sized>(
    h: &SpectralMeasure,
    n: usize,
    alpha: f64,
    rng: &mut R,
) -> Result<HermitianMatrix> {
    Ok(DirectionSampler::new(h, n, alpha)?.sample(rng))
}

/// `n_mc` directions, draw `i` from substream `(seed, "direction", i)`.
pub fn sample_directions(
    h: &SpectralMeasure,
    n: usize,
    alpha: f64,
    n_mc: usize,
    seed: u64,
) -> Result<Vec<HermitianMatrix>> {
    let sampler = DirectionSampler::new(h, n, alpha)?;
    Ok(par_draws(seed, "direction", n_mc, |rng: &mut StreamRng, _| {
        sampler.sample(rng)
    }))
}

/// Barycenter `∫H(dR) R` with a standard error for its Frobenius norm.
#[derive(Clone, Debug)]
pub struct MeanDirection {
    pub mean: HermitianMatrix,
    pub stderr: f64,
}

/// Barycenter of `H`: exact for the Dirac measure, Monte Carlo otherwise.
pub fn mean_direction(h: &SpectralMeasure, n: usize, alpha: f64, n_mc: usize, seed: u64) -> Result<MeanDirection> {
    if let SpectralMeasure::DiracIdentity { p } = h {
        h.validate(n)?;
        return Ok(MeanDirection {
            mean: HermitianMatrix::scaled_identity(n, (2.0 * p - 1.0) / (n as f64).sqrt()),
            stderr: 0.0,
        });
    }
    if n_mc < 2 {
        return Err(Error::param("n_mc", "at least two draws are needed"));
    }
    let draws = sample_directions(h, n, alpha, n_mc, seed)?;
    let mut mean = HermitianMatrix::zeros(n);
    for r in &draws {
        mean = mean.add(r);
    }
    let mean = mean.scale(1.0 / n_mc as f64);
    // Sum of entrywise variances gives the variance of the Frobenius error.
    let mut var = 0.0;
    for r in &draws {
        var += r.sub(&mean).frobenius_norm().powi(2);
    }
    var /= (n_mc - 1) as f64;
    Ok(MeanDirection {
        mean,
        stderr: (var / n_mc as f64).sqrt(),
    })
}

/// Strict-stability test at α = 1: the barycenter of `H` must vanish.
/// Returns `(is_strict, residual)` with `residual` the Frobenius norm of the
/// estimated barycenter.
pub fn check_strict_alpha1(h: &SpectralMeasure, n: usize, tol: f64, n_mc: usize, seed: u64) -> Result<(bool, f64)> {
    let m = mean_direction(h, n, 1.0, n_mc, seed)?;
    let residual = m.mean.frobenius_norm();
    Ok((residual <= tol.max(4.0 * m.stderr), residual))
}

/// Splits a nonzero diagonal sample `t` into its direction `t/‖t‖` and the
/// weight `‖t‖^α` it carries under the pushforward measure `g_α`.
pub fn g_alpha_weight(t: &[f64], alpha: f64) -> Result<(Vec<f64>, f64)> {
    check_alpha(alpha)?;
    let norm = t.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(norm > 0.0) {
        return Err(Error::InputDomain(
            "zero diagonal sample carries no direction; redraw".into(),
        ));
    }
    Ok((t.iter().map(|x| x / norm).collect(), norm.powf(alpha)))
}

/// `y₁ = γ (2/π) ∫h_diag(dt) t_j log‖t‖` at α = 1, averaged over `j`.
///
/// The diagonal-form log-CF at α = 1 splits as
/// `−γ∫g₁(dθ) ν₁(sᵀθ) − i y₁ 1ᵀs`, which is how this shift is used.
pub fn alpha1_shift(h: &SpectralMeasure, n: usize, gamma: f64, n_mc: usize, seed: u64) -> Result<Estimate> {
    if h.is_dirac() {
        h.validate(n)?;
        return Ok(Estimate::exact(0.0.into()));
    }
    let draws = sample_directions(h, n, 1.0, n_mc, seed)?;
    let nf = n as f64;
    let vals: Vec<f64> = draws
        .iter()
        .map(|r| {
            let t = r.diagonal();
            let norm = t.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                0.0
            } else {
                gamma * FRAC_2_PI * (r.trace() / nf) * norm.ln()
            }
        })
        .collect();
    Ok(Estimate::from_real_samples(&vals))
}
