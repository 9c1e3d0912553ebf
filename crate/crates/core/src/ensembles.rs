//! Samplers for stable invariant ensembles, domain-of-attraction sources,
//! scaled sums and batch persistence.

use std::f64::consts::FRAC_2_PI;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Open01, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigvals, sample_gue, sample_haar_unitary, HermitianMatrix};
use crate::rng::{par_draws, StreamRng};
use crate::spectral::{DirectionSampler, SpectralMeasure};
use crate::stable1d::{check_alpha, dirac_weight_to_params, positive_stable_unchecked, sample_stable_1d};

/// A stable invariant ensemble `S(α, γH, y₀ I_N)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub alpha: f64,
    pub gamma: f64,
    pub y0: f64,
    pub dim: usize,
    pub measure: SpectralMeasure,
}

impl EnsembleSpec {
    pub fn new(alpha: f64, gamma: f64, y0: f64, dim: usize, measure: SpectralMeasure) -> Result<Self> {
        let spec = Self {
            alpha,
            gamma,
            y0,
            dim,
            measure,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::param("gamma", format!("{} must be positive", self.gamma)));
        }
        if !self.y0.is_finite() {
            return Err(Error::param("y0", "must be finite"));
        }
        self.measure.validate(self.dim)
    }

    /// The elliptical ensemble with CF `exp(−q(S)^{α/2} + i y₀ Tr S)` as a
    /// stable spec (its `γ` comes from the closed-form constants).
    pub fn elliptical(sigma: f64, kappa: f64, alpha: f64, y0: f64, dim: usize) -> Result<Self> {
        let k = crate::spectral::elliptical_constants(sigma, kappa, alpha, dim)?;
        Self::new(
            alpha,
            k.gamma_scale,
            y0,
            dim,
            SpectralMeasure::elliptical(sigma, kappa)?,
        )
    }
}

/// Canonical quadratic form `q(S) = σ² Tr S²/α + κ (Tr S)²/α`.
pub fn elliptical_quadratic_form(sigma: f64, kappa: f64, alpha: f64, s: &HermitianMatrix) -> f64 {
    let tr = s.trace();
    (sigma * sigma * s.trace_product(s) + kappa * tr * tr) / alpha
}

/// Log-CF `−q(S)^{α/2} + i y₀ Tr S` of the elliptical ensemble (for α = 2
/// this is `−q(S) + i y₀ Tr S`, the Gaussian with covariance form `2q`).
pub fn elliptical_log_cf(sigma: f64, kappa: f64, alpha: f64, y0: f64, s: &HermitianMatrix) -> Complex64 {
    let q = elliptical_quadratic_form(sigma, kappa, alpha, s);
    Complex64::new(-q.powf(alpha / 2.0), y0 * s.trace())
}

/// `σ` of the canonical parametrization that reproduces the isotropic form
/// `exp(−(σ_iso²/2 · Tr S²)^{α/2})`: `σ² = α σ_iso² / 2`, `κ = 0`.
pub fn canonical_sigma_from_isotropic(sigma_iso: f64, alpha: f64) -> f64 {
    (alpha * sigma_iso * sigma_iso / 2.0).sqrt()
}

/// Draws plus cached spectra and diagonals.
#[derive(Clone, Debug)]
pub struct SampleBatch {
    dim: usize,
    seed: u64,
    exact: bool,
    provenance: Value,
    matrices: Vec<HermitianMatrix>,
    eigenvalues: Vec<Vec<f64>>,
    diagonals: Vec<Vec<f64>>,
}

impl SampleBatch {
    /// Wraps `matrices` and computes the caches.
    pub fn new(dim: usize, seed: u64, exact: bool, provenance: Value, matrices: Vec<HermitianMatrix>) -> Result<Self> {
        if let Some(m) = matrices.iter().find(|m| m.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: m.dim(),
            });
        }
        let eigenvalues = matrices.par_iter().map(hermitian_eigvals).collect::<Result<Vec<_>>>()?;
        let diagonals = matrices.iter().map(HermitianMatrix::diagonal).collect();
        Ok(Self {
            dim,
            seed,
            exact,
            provenance,
            matrices,
            eigenvalues,
            diagonals,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// True when the draws follow the stable law exactly; false for
    /// domain-of-attraction sources.
    pub fn exact(&self) -> bool {
        self.exact
    }

    pub fn provenance(&self) -> &Value {
        &self.provenance
    }

    pub fn matrices(&self) -> &[HermitianMatrix] {
        &self.matrices
    }

    /// Ascending eigenvalues of each draw.
    pub fn eigenvalues(&self) -> &[Vec<f64>] {
        &self.eigenvalues
    }

    pub fn diagonals(&self) -> &[Vec<f64>] {
        &self.diagonals
    }

    pub fn traces(&self) -> Vec<f64> {
        self.matrices.iter().map(HermitianMatrix::trace).collect()
    }

    pub fn max_eigenvalues(&self) -> Vec<f64> {
        self.eigenvalues.iter().map(|e| *e.last().expect("N >= 1")).collect()
    }

    pub fn frobenius_norms(&self) -> Vec<f64> {
        self.matrices.iter().map(HermitianMatrix::frobenius_norm).collect()
    }

    /// Largest deviation between cached and recomputed spectra/diagonals.
    pub fn cache_error(&self) -> Result<f64> {
        let mut err: f64 = 0.0;
        for ((m, ev), d) in self.matrices.iter().zip(&self.eigenvalues).zip(&self.diagonals) {
            for (a, b) in hermitian_eigvals(m)?.iter().zip(ev) {
                err = err.max((a - b).abs());
            }
            for (a, b) in m.diagonal().iter().zip(d) {
                err = err.max((a - b).abs());
            }
        }
        Ok(err)
    }

    /// Batch file: one JSON header line, then `N²` little-endian `(re, im)`
    /// `f64` pairs per draw, row-major.
    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        let header = BatchHeader {
            format: BATCH_FORMAT.into(),
            dim: self.dim,
            count: self.len(),
            seed: self.seed,
            exact: self.exact,
            provenance: self.provenance.clone(),
        };
        serde_json::to_writer(&mut *w, &header)?;
        w.write_all(b"\n")?;
        for m in &self.matrices {
            for z in m.entries() {
                w.write_all(&z.re.to_le_bytes())?;
                w.write_all(&z.im.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl BufRead) -> Result<Self> {
        let mut line = String::new();
        r.read_line(&mut line)?;
        let header: BatchHeader =
            serde_json::from_str(line.trim_end()).map_err(|e| Error::Format(format!("bad header: {e}")))?;
        if header.format != BATCH_FORMAT {
            return Err(Error::Format(format!("unknown format tag {:?}", header.format)));
        }
        let n = header.dim;
        if n == 0 {
            return Err(Error::Format("dimension must be positive".into()));
        }
        let mut buf = vec![0u8; 16 * n * n];
        let mut matrices = Vec::with_capacity(header.count);
        for k in 0..header.count {
            r.read_exact(&mut buf)
                .map_err(|_| Error::Format(format!("truncated payload at draw {k}")))?;
            let entry = |i: usize, j: usize| {
                let o = 16 * (i * n + j);
                let re = f64::from_le_bytes(buf[o..o + 8].try_into().expect("8 bytes"));
                let im = f64::from_le_bytes(buf[o + 8..o + 16].try_into().expect("8 bytes"));
                Complex64::new(re, im)
            };
            for i in 0..n {
                if entry(i, i).im != 0.0 {
                    return Err(Error::Format(format!("draw {k} has a complex diagonal")));
                }
                for j in i + 1..n {
                    if entry(j, i) != entry(i, j).conj() {
                        return Err(Error::Format(format!("draw {k} is not Hermitian")));
                    }
                }
            }
            matrices.push(HermitianMatrix::from_upper(n, entry));
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(Error::Format("trailing bytes after the last draw".into()));
        }
        Self::new(n, header.seed, header.exact, header.provenance, matrices)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }
}

const BATCH_FORMAT: &str = "hermstable-batch-v1";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BatchHeader {
    format: String,
    dim: usize,
    count: usize,
    seed: u64,
    exact: bool,
    provenance: Value,
}

fn check_count(n: usize) -> Result<()> {
    if n == 0 {
        Err(Error::param("n", "batch size must be positive"))
    } else {
        Ok(())
    }
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 0 {
        Err(Error::param("N", "dimension must be positive"))
    } else {
        Ok(())
    }
}

/// Invariant Gaussian with `Var(Tr GS) = a² Tr S² + (b² − a²)(Tr S)²/N`,
/// built from the traceless part of a GUE draw and an independent trace
/// component.
fn split_gaussian<R: Rng + ?Sized>(n: usize, a: f64, b: f64, rng: &mut R) -> HermitianMatrix {
    let h = sample_gue(n, rng);
    let nf = n as f64;
    let zeta = h.trace() / nf.sqrt();
    let traceless = h.shift_identity(-h.trace() / nf);
    traceless.scale(a).shift_identity(b * zeta / nf.sqrt())
}

/// Single-draw form of [`sample_elliptical_stable`].
pub fn elliptical_draw_fn(
    sigma: f64,
    kappa: f64,
    alpha: f64,
    y0: f64,
    dim: usize,
) -> Result<impl Fn(&mut StreamRng) -> HermitianMatrix + Sync> {
    check_alpha(alpha)?;
    check_dim(dim)?;
    SpectralMeasure::elliptical(sigma, kappa)?.validate(dim)?;
    if !y0.is_finite() {
        return Err(Error::param("y0", "must be finite"));
    }
    let a = (2.0 * sigma * sigma / alpha).sqrt();
    let b = (2.0 * (sigma * sigma + dim as f64 * kappa) / alpha).sqrt();
    Ok(move |rng: &mut StreamRng| {
        let g = split_gaussian(dim, a, b, rng);
        let t = if alpha == 2.0 {
            1.0
        } else {
            positive_stable_unchecked(alpha / 2.0, rng)
        };
        g.scale(t.sqrt()).shift_identity(y0)
    })
}

/// Elliptical stable ensemble with CF
/// `exp(−(σ² Tr S²/α + κ (Tr S)²/α)^{α/2} + i y₀ Tr S)`, drawn as
/// `y₀ I + √T · G` with `T` positive (α/2)-stable (`T = 1` at α = 2) and
/// `G` the invariant Gaussian with `Var(Tr GS) = 2 q(S)`.
pub fn sample_elliptical_stable(
    sigma: f64,
    kappa: f64,
    alpha: f64,
    y0: f64,
    dim: usize,
    n: usize,
    seed: u64,
) -> Result<SampleBatch> {
    check_count(n)?;
    let draw = elliptical_draw_fn(sigma, kappa, alpha, y0, dim)?;
    let matrices = par_draws(seed, "elliptical", n, |rng, _| draw(rng));
    let prov = json!({"sampler": "elliptical", "sigma": sigma, "kappa": kappa, "alpha": alpha, "y0": y0});
    SampleBatch::new(dim, seed, true, prov, matrices)
}

/// Single-draw form of [`sample_gaussian_invariant`].
pub fn gaussian_draw_fn(
    sigma: f64,
    kappa: f64,
    dim: usize,
) -> Result<impl Fn(&mut StreamRng) -> HermitianMatrix + Sync> {
    check_dim(dim)?;
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::param("sigma", format!("{sigma} must be positive")));
    }
    if kappa < 0.0 {
        return Err(Error::Unsupported(
            "kappa < 0 has no sum representation; use sample_elliptical_stable with alpha = 2".into(),
        ));
    }
    let sk = kappa.sqrt();
    Ok(move |rng: &mut StreamRng| {
        let h = sample_gue(dim, rng);
        let xi: f64 = rng.sample(StandardNormal);
        h.scale(sigma).shift_identity(sk * xi)
    })
}

/// `σ · GUE + √κ ξ I` with `ξ` standard normal; diagonal covariance
/// `σ² I + κ 11ᵀ`.
pub fn sample_gaussian_invariant(sigma: f64, kappa: f64, dim: usize, n: usize, seed: u64) -> Result<SampleBatch> {
    check_count(n)?;
    let draw = gaussian_draw_fn(sigma, kappa, dim)?;
    let matrices = par_draws(seed, "gaussian", n, |rng, _| draw(rng));
    let prov = json!({"sampler": "gaussian", "sigma": sigma, "kappa": kappa});
    SampleBatch::new(dim, seed, true, prov, matrices)
}

/// Single-draw form of [`sample_dirac_stable`].
pub fn dirac_draw_fn(
    alpha: f64,
    gamma: f64,
    p: f64,
    y0: f64,
    dim: usize,
) -> Result<impl Fn(&mut StreamRng) -> HermitianMatrix + Sync> {
    check_dim(dim)?;
    if !y0.is_finite() {
        return Err(Error::param("y0", "must be finite"));
    }
    let params = dirac_weight_to_params(p, alpha, gamma)?;
    let sq = (dim as f64).sqrt();
    Ok(move |rng: &mut StreamRng| {
        let y = sample_stable_1d(&params, rng);
        HermitianMatrix::scaled_identity(dim, y / sq + y0)
    })
}

/// `Y = y I/√N + y₀ I` with `y` univariate stable of CF
/// `exp(−γ[p ν_α(k) + (1−p) ν_α(−k)])`.
pub fn sample_dirac_stable(
    alpha: f64,
    gamma: f64,
    p: f64,
    y0: f64,
    dim: usize,
    n: usize,
    seed: u64,
) -> Result<SampleBatch> {
    check_count(n)?;
    let draw = dirac_draw_fn(alpha, gamma, p, y0, dim)?;
    let matrices = par_draws(seed, "dirac", n, |rng, _| draw(rng));
    let prov = json!({"sampler": "dirac", "alpha": alpha, "gamma": gamma, "p": p, "y0": y0});
    SampleBatch::new(dim, seed, true, prov, matrices)
}

/// Single-draw form of [`sample_doa_pareto`].
pub fn doa_pareto_draw_fn(
    h: &SpectralMeasure,
    alpha: f64,
    dim: usize,
) -> Result<impl Fn(&mut StreamRng) -> HermitianMatrix + Sync> {
    if !(alpha > 0.0 && alpha < 2.0) {
        return Err(Error::param("alpha", format!("{alpha} is outside (0, 2)")));
    }
    let dirs = DirectionSampler::new(h, dim, alpha)?;
    Ok(move |rng: &mut StreamRng| {
        let u: f64 = rng.sample(Open01);
        let r = u.powf(-1.0 / alpha);
        dirs.sample(rng).scale(r)
    })
}

/// `R·Θ` with `Θ ~ H` and an independent Pareto radius `P(R > r) = r^{−α}`,
/// `r ≥ 1`. Lies in the domain of attraction of `S(α, ·H, ·)`; flagged
/// inexact.
pub fn sample_doa_pareto(h: &SpectralMeasure, alpha: f64, dim: usize, n: usize, seed: u64) -> Result<SampleBatch> {
    check_count(n)?;
    let draw = doa_pareto_draw_fn(h, alpha, dim)?;
    let matrices = par_draws(seed, "pareto", n, |rng, _| draw(rng));
    let prov = json!({"sampler": "doa_pareto", "alpha": alpha, "measure": h});
    SampleBatch::new(dim, seed, false, prov, matrices)
}

/// One draw of [`sample_bounded_invariant`].
pub fn bounded_invariant_draw<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> HermitianMatrix {
    let lam: Vec<f64> = (0..dim).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
    let u = sample_haar_unitary(dim, rng);
    HermitianMatrix::from_diagonal(&lam).conjugate_by(&u)
}

/// Centered bounded invariant matrices `U diag(λ) U†` with `λ_j` iid
/// uniform on `[−1, 1]` and `U` Haar. A source for the Gaussian domain of
/// attraction.
pub fn sample_bounded_invariant(dim: usize, n: usize, seed: u64) -> Result<SampleBatch> {
    check_dim(dim)?;
    check_count(n)?;
    let matrices = par_draws(seed, "bounded", n, |rng, _| bounded_invariant_draw(dim, rng));
    SampleBatch::new(dim, seed, false, json!({"sampler": "bounded_uniform"}), matrices)
}

/// Draw-wise `(Σ_j X_j)/B − A·I` over `m` equally shaped batches.
pub fn sum_scaled(batches: &[&SampleBatch], b: f64, a: f64) -> Result<SampleBatch> {
    let first = batches
        .first()
        .ok_or_else(|| Error::param("batches", "at least one batch is required"))?;
    if !(b > 0.0 && b.is_finite()) || !a.is_finite() {
        return Err(Error::param("B_m", "scale must be positive and shift finite"));
    }
    for bt in batches {
        if bt.dim() != first.dim() {
            return Err(Error::DimensionMismatch {
                expected: first.dim(),
                got: bt.dim(),
            });
        }
        if bt.len() != first.len() {
            return Err(Error::DimensionMismatch {
                expected: first.len(),
                got: bt.len(),
            });
        }
    }
    let matrices = (0..first.len())
        .into_par_iter()
        .map(|i| {
            let mut acc = batches[0].matrices[i].clone();
            for bt in &batches[1..] {
                acc = acc.add(&bt.matrices[i]);
            }
            acc.scale(1.0 / b).shift_identity(-a)
        })
        .collect();
    let prov = json!({"op": "sum_scaled", "m": batches.len(), "B": b, "A": a, "source": first.provenance});
    SampleBatch::new(
        first.dim(),
        first.seed,
        batches.iter().all(|bt| bt.exact),
        prov,
        matrices,
    )
}

/// One component of an orbit mixture: draws of the single-orbit ensemble
/// `S(α, γ H_X, 0)`, its mixture weight and `Tr X` of the (unit-norm)
/// orbit representative.
pub struct MixtureComponent<'a> {
    pub batch: &'a SampleBatch,
    pub weight: f64,
    pub orbit_trace: f64,
}

/// Identity coefficient added to `p Y` at α = 1 so that the component
/// contributes `p·H_X` to the mixed spectral measure:
/// `p (2γ Tr X/(πN)) log p`.
pub fn alpha1_mixture_shift(weight: f64, orbit_trace: f64, gamma: f64, dim: usize) -> f64 {
    if weight == 0.0 {
        return 0.0;
    }
    weight * FRAC_2_PI * gamma * orbit_trace / dim as f64 * weight.ln()
}

/// Draws of `S(α, γ Σ p_j H_j, 0)` from draws of the single-orbit ensembles:
/// `Σ p_j^{1/α} Y_j` for α ≠ 1 and `Σ p_j (Y_j + (2γ Tr X_j/(πN)) log p_j I)`
/// for α = 1.
pub fn sample_orbit_mixture(components: &[MixtureComponent<'_>], alpha: f64, gamma: f64) -> Result<SampleBatch> {
    check_alpha(alpha)?;
    let first = components
        .first()
        .ok_or_else(|| Error::param("components", "at least one component is required"))?;
    let total: f64 = components.iter().map(|c| c.weight).sum();
    if components.iter().any(|c| !(c.weight >= 0.0)) || (total - 1.0).abs() > 1e-12 {
        return Err(Error::param(
            "weight",
            format!("weights must be nonnegative and sum to 1 (got {total})"),
        ));
    }
    let (dim, len) = (first.batch.dim(), first.batch.len());
    for c in components {
        if c.batch.dim() != dim || c.batch.len() != len {
            return Err(Error::DimensionMismatch {
                expected: dim * len,
                got: c.batch.dim() * c.batch.len(),
            });
        }
    }
    let coeffs: Vec<(f64, f64)> = components
        .iter()
        .map(|c| {
            if alpha == 1.0 {
                (c.weight, alpha1_mixture_shift(c.weight, c.orbit_trace, gamma, dim))
            } else {
                (c.weight.powf(1.0 / alpha), 0.0)
            }
        })
        .collect();
    let matrices = (0..len)
        .into_par_iter()
        .map(|i| {
            let mut acc = HermitianMatrix::zeros(dim);
            for (c, &(scale, shift)) in components.iter().zip(&coeffs) {
                acc = acc.add(&c.batch.matrices[i].scale(scale).shift_identity(shift));
            }
            acc
        })
        .collect();
    let prov = json!({"op": "orbit_mixture", "alpha": alpha, "gamma": gamma,
        "weights": components.iter().map(|c| c.weight).collect::<Vec<_>>()});
    SampleBatch::new(
        dim,
        first.batch.seed,
        components.iter().all(|c| c.batch.exact),
        prov,
        matrices,
    )
}
