//! Limit-theorem experiments and tail diagnostics: scaled-sum convergence,
//! tail ratios, the Hill index, strict- and Gaussian-domain conditions,
//! moment scans and the dyadic counterexample.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::Geometric;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensembles::SampleBatch;
use crate::error::{Error, Result};
use crate::linalg::HermitianMatrix;
use crate::rng::{child_seed, par_draws, StreamRng};
use crate::stable1d::check_alpha;
use crate::stats::{mean_stderr, Estimate};

/// Minimum number of exceedances of `R` for a tail-ratio point to be
/// reported.
pub const MIN_EXCEEDANCES: usize = 50;

const Z99: f64 = 2.5758293035489004;

fn check_grid(r_grid: &[f64]) -> Result<()> {
    if r_grid.is_empty() {
        return Err(Error::param("R_grid", "must be nonempty"));
    }
    if r_grid.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
        return Err(Error::param("R_grid", "entries must be positive and finite"));
    }
    if r_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::param("R_grid", "must be strictly ascending"));
    }
    Ok(())
}

fn check_norms(norms: &[f64]) -> Result<()> {
    if norms.is_empty() {
        return Err(Error::param("norms", "sample is empty"));
    }
    if norms.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::InputDomain("norms must be finite and nonnegative".into()));
    }
    Ok(())
}

/// `P̂(‖x‖ > kR)/P̂(‖x‖ > R)` on a grid of `R`.
#[derive(Clone, Debug, Serialize)]
pub struct TailRatioEstimate {
    pub k: f64,
    pub r_grid: Vec<f64>,
    /// `None` where fewer than [`MIN_EXCEEDANCES`] points exceed `R`.
    pub ratios: Vec<Option<f64>>,
    /// `#{‖x‖ > R}`.
    pub counts: Vec<usize>,
    /// Binomial 99% half-width of each reported ratio.
    pub ci_halfwidth: Vec<Option<f64>>,
}

impl TailRatioEstimate {
    /// `(R, ratio, ci_halfwidth)` at the largest unmasked `R`.
    pub fn largest_unmasked(&self) -> Option<(f64, f64, f64)> {
        (0..self.r_grid.len())
            .rev()
            .find_map(|i| Some((self.r_grid[i], self.ratios[i]?, self.ci_halfwidth[i]?)))
    }
}

fn count_above(sorted: &[f64], t: f64) -> usize {
    sorted.len() - sorted.partition_point(|&x| x <= t)
}

pub fn tail_ratio(norms: &[f64], k: f64, r_grid: &[f64]) -> Result<TailRatioEstimate> {
    check_norms(norms)?;
    check_grid(r_grid)?;
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::param("k", "must be positive"));
    }
    let mut sorted = norms.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut est = TailRatioEstimate {
        k,
        r_grid: r_grid.to_vec(),
        ratios: Vec::with_capacity(r_grid.len()),
        counts: Vec::with_capacity(r_grid.len()),
        ci_halfwidth: Vec::with_capacity(r_grid.len()),
    };
    for &r in r_grid {
        let c = count_above(&sorted, r);
        est.counts.push(c);
        if c < MIN_EXCEEDANCES {
            est.ratios.push(None);
            est.ci_halfwidth.push(None);
            continue;
        }
        let p = count_above(&sorted, k * r) as f64 / c as f64;
        est.ratios.push(Some(p));
        est.ci_halfwidth.push(Some(Z99 * (p * (1.0 - p) / c as f64).sqrt()));
    }
    if est.ratios.iter().all(Option::is_none) {
        return Err(Error::Estimation(format!(
            "no R in the grid has {MIN_EXCEEDANCES} exceedances"
        )));
    }
    Ok(est)
}

/// `Σ_{‖x‖>kR} φ(x/‖x‖) / #{‖x‖ > R}` on a grid of `R`.
#[derive(Clone, Debug, Serialize)]
pub struct AngularTail {
    pub k: f64,
    pub r_grid: Vec<f64>,
    pub ratios: Vec<Option<f64>>,
    pub counts: Vec<usize>,
}

/// `phi` must satisfy `|φ| ≤ bound` on the unit sphere; a violation is
/// reported as an input-domain error.
pub fn angular_tail_functional(
    batch: &SampleBatch,
    phi: impl Fn(&HermitianMatrix) -> f64 + Sync,
    bound: f64,
    k: f64,
    r_grid: &[f64],
) -> Result<AngularTail> {
    check_grid(r_grid)?;
    if batch.is_empty() {
        return Err(Error::InputDomain("empty batch".into()));
    }
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::param("k", "must be positive"));
    }
    let norms = batch.frobenius_norms();
    let kr_min = k * r_grid[0];
    let values = batch
        .matrices()
        .par_iter()
        .zip(norms.par_iter())
        .map(|(x, &nx)| {
            if nx <= kr_min {
                return Ok(0.0);
            }
            let v = phi(&x.scale(1.0 / nx));
            if !(v.abs() <= bound) {
                return Err(Error::InputDomain(format!(
                    "|phi| = {} exceeds the bound {bound}",
                    v.abs()
                )));
            }
            Ok(v)
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut out = AngularTail {
        k,
        r_grid: r_grid.to_vec(),
        ratios: Vec::new(),
        counts: Vec::new(),
    };
    for &r in r_grid {
        let c = norms.iter().filter(|&&x| x > r).count();
        out.counts.push(c);
        if c < MIN_EXCEEDANCES {
            out.ratios.push(None);
            continue;
        }
        let s: f64 = norms
            .iter()
            .zip(&values)
            .filter(|(x, _)| **x > k * r)
            .map(|(_, v)| v)
            .sum();
        out.ratios.push(Some(s / c as f64));
    }
    if out.ratios.iter().all(Option::is_none) {
        return Err(Error::Estimation(format!(
            "no R in the grid has {MIN_EXCEEDANCES} exceedances"
        )));
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct HillEstimate {
    pub k_order: usize,
    pub alpha_hat: f64,
    pub ci_halfwidth: f64,
}

/// Hill estimator on the `k_order` largest values,
/// `α̂ = k / Σ_{i≤k} log(X_(n−i+1)/X_(n−k))`, with 95% half-width
/// `1.96 α̂/√k`.
pub fn hill_estimator(norms: &[f64], k_order: usize) -> Result<HillEstimate> {
    if norms.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
        return Err(Error::InputDomain("Hill estimator needs positive finite values".into()));
    }
    let n = norms.len();
    if k_order < 10 || 2 * k_order > n {
        return Err(Error::param(
            "k_order",
            format!("{k_order} is outside [10, n/2] for n = {n}"),
        ));
    }
    let mut sorted = norms.to_vec();
    sorted.sort_by(f64::total_cmp);
    let threshold = sorted[n - k_order - 1];
    let s: f64 = sorted[n - k_order..].iter().map(|x| (x / threshold).ln()).sum();
    if !(s > 0.0) {
        return Err(Error::Estimation(
            "all log-spacings above the threshold are zero".into(),
        ));
    }
    let alpha_hat = k_order as f64 / s;
    Ok(HillEstimate {
        k_order,
        alpha_hat,
        ci_halfwidth: 1.96 * alpha_hat / (k_order as f64).sqrt(),
    })
}

/// Centering of the scaled sums.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftRule {
    /// `A_m = 0`.
    Zero,
    /// `A_m = m^{1−1/α} μ/(N b)` with `μ` the trace mean of one copy,
    /// estimated from a pilot sample of size `n`. Needs α > 1.
    MeanBased,
}

/// How empirical and target CFs are compared.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CfComparison {
    /// `|φ_emp(s) − φ_target(s)|`; the scale `b` must be the right one.
    Absolute,
    /// `|φ_emp(s) − exp(log φ_emp(s₀) · log φ_t(s)/log φ_t(s₀))|`, which does
    /// not depend on the overall scale of the target.
    ScaleCancelling { s0: Vec<f64> },
}

#[derive(Clone, Debug)]
pub struct CltSetup {
    pub dim: usize,
    pub alpha: f64,
    /// `B_m = m^{1/α} b`.
    pub b: f64,
    pub shift: ShiftRule,
    pub m_schedule: Vec<usize>,
    /// Diagonal-form evaluation points.
    pub s_grid: Vec<Vec<f64>>,
    /// Number of scaled sums per `m`.
    pub n: usize,
    pub seed: u64,
    pub comparison: CfComparison,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceCurve {
    pub m_schedule: Vec<usize>,
    pub b_m: Vec<f64>,
    pub a_m: Vec<f64>,
    /// Supremum over the grid of the CF discrepancy.
    pub distances: Vec<f64>,
    /// Standard error of the discrepancy at the maximizing grid point.
    pub stderrs: Vec<f64>,
}

impl ConvergenceCurve {
    /// Each distance exceeds its predecessor by at most `k` combined
    /// standard errors.
    pub fn is_nonincreasing_within(&self, k: f64) -> bool {
        self.distances
            .windows(2)
            .zip(self.stderrs.windows(2))
            .all(|(d, s)| d[1] <= d[0] + k * s[0].hypot(s[1]))
    }
}

fn cf_at(diags: &[Vec<f64>], s: &[f64]) -> Estimate {
    let vals: Vec<Complex64> = diags
        .iter()
        .map(|d| Complex64::from_polar(1.0, d.iter().zip(s).map(|(x, y)| x * y).sum()))
        .collect();
    Estimate::from_samples(&vals)
}

/// Sums `m` independent draws of `source` per replicate, rescales to
/// `(X₁+…+X_m)/B_m − A_m I`, and compares the diagonal-form empirical CF
/// with `exp(target_log_cf(s))` over `s_grid`. Replicates for each `m` come
/// from the substream family `child_seed(seed, "clt", m)`.
pub fn clt_experiment<F, T>(source: F, target_log_cf: T, setup: &CltSetup) -> Result<ConvergenceCurve>
where
    F: Fn(&mut StreamRng) -> HermitianMatrix + Sync,
    T: Fn(&[f64]) -> Complex64,
{
    let alpha = setup.alpha;
    check_alpha(alpha)?;
    let dim = setup.dim;
    if !(setup.b > 0.0 && setup.b.is_finite()) {
        return Err(Error::param("b", "must be positive"));
    }
    if setup.n < 2 {
        return Err(Error::param("n", "at least two sums are needed"));
    }
    if setup.m_schedule.is_empty() || setup.m_schedule.contains(&0) {
        return Err(Error::param("m_schedule", "must be nonempty with positive entries"));
    }
    if setup.s_grid.is_empty() {
        return Err(Error::param("s_grid", "must be nonempty"));
    }
    for s in &setup.s_grid {
        if s.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: s.len(),
            });
        }
    }
    if setup.shift == ShiftRule::MeanBased && alpha <= 1.0 {
        return Err(Error::param(
            "A_rule",
            format!("mean-based centering needs alpha > 1, got {alpha}"),
        ));
    }
    let reference = match &setup.comparison {
        CfComparison::Absolute => None,
        CfComparison::ScaleCancelling { s0 } => {
            if s0.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: s0.len(),
                });
            }
            let t0 = target_log_cf(s0);
            if t0.norm() == 0.0 {
                return Err(Error::param("s0", "target log-CF vanishes at the reference point"));
            }
            Some((s0.clone(), t0))
        }
    };
    let trace_mean = match setup.shift {
        ShiftRule::Zero => 0.0,
        ShiftRule::MeanBased => {
            let tr = par_draws(
                child_seed(setup.seed, "clt-pilot", 0),
                "clt-pilot",
                setup.n,
                |rng, _| source(rng).trace(),
            );
            mean_stderr(&tr).0
        }
    };
    let mut curve = ConvergenceCurve {
        m_schedule: setup.m_schedule.clone(),
        b_m: Vec::new(),
        a_m: Vec::new(),
        distances: Vec::new(),
        stderrs: Vec::new(),
    };
    for &m in &setup.m_schedule {
        let mf = m as f64;
        let b_m = mf.powf(1.0 / alpha) * setup.b;
        let a_m = match setup.shift {
            ShiftRule::Zero => 0.0,
            ShiftRule::MeanBased => mf.powf(1.0 - 1.0 / alpha) * trace_mean / (dim as f64 * setup.b),
        };
        let diags = par_draws(child_seed(setup.seed, "clt", m as u64), "clt-sum", setup.n, |rng, _| {
            let mut acc = source(rng);
            for _ in 1..m {
                acc = acc.add(&source(rng));
            }
            acc.diagonal().iter().map(|x| x / b_m - a_m).collect::<Vec<f64>>()
        });
        let mut worst = (0.0f64, 0.0f64);
        let base = reference.as_ref().map(|(s0, t0)| (cf_at(&diags, s0), *t0));
        for s in &setup.s_grid {
            let emp = cf_at(&diags, s);
            let (d, se) = match &base {
                None => ((emp.value - target_log_cf(s).exp()).norm(), emp.stderr),
                Some((e0, t0)) => {
                    let rho = target_log_cf(s) / t0;
                    let pred = (e0.value.ln() * rho).exp();
                    // delta method for the reference-point error
                    let se0 = rho.norm() * pred.norm() * e0.stderr / e0.value.norm();
                    ((emp.value - pred).norm(), emp.stderr.hypot(se0))
                }
            };
            if d >= worst.0 {
                worst = (d, se);
            }
        }
        curve.b_m.push(b_m);
        curve.a_m.push(a_m);
        curve.distances.push(worst.0);
        curve.stderrs.push(worst.1);
    }
    Ok(curve)
}

/// Truncated-mean residuals of the α = 1 strict-domain condition.
#[derive(Clone, Debug, Serialize)]
pub struct StrictDoaResiduals {
    pub r_grid: Vec<f64>,
    /// `‖Ê[X 1{‖X‖<R}]‖_F / (R P̂(‖X‖>R))`; `None` with no exceedances.
    pub residuals: Vec<Option<f64>>,
    /// Same statistic for the identity component only:
    /// `|Ê[Tr X 1{‖X‖<R}]| / (√N R P̂(‖X‖>R))`.
    pub trace_residuals: Vec<Option<f64>>,
    /// Standard error of each residual.
    pub stderrs: Vec<Option<f64>>,
    pub exceedance_fractions: Vec<f64>,
}

fn strict_core(
    norms: &[f64],
    r_grid: &[f64],
    dim: usize,
    traces: &[f64],
    full: impl Fn(f64) -> (f64, f64),
) -> StrictDoaResiduals {
    let n = norms.len() as f64;
    let mut out = StrictDoaResiduals {
        r_grid: r_grid.to_vec(),
        residuals: Vec::new(),
        trace_residuals: Vec::new(),
        stderrs: Vec::new(),
        exceedance_fractions: Vec::new(),
    };
    for &r in r_grid {
        let frac = norms.iter().filter(|&&x| x > r).count() as f64 / n;
        out.exceedance_fractions.push(frac);
        if frac == 0.0 {
            out.residuals.push(None);
            out.trace_residuals.push(None);
            out.stderrs.push(None);
            continue;
        }
        let den = r * frac;
        let tr_sum: f64 = norms.iter().zip(traces).filter(|(x, _)| **x < r).map(|(_, t)| t).sum();
        out.trace_residuals
            .push(Some((tr_sum / n).abs() / ((dim as f64).sqrt() * den)));
        let (num, se) = full(r);
        out.residuals.push(Some(num / den));
        out.stderrs.push(Some(se / den));
    }
    out
}

/// Strict-domain residuals on the matrices of a batch.
pub fn strict_doa_check_alpha1(batch: &SampleBatch, r_grid: &[f64]) -> Result<StrictDoaResiduals> {
    if batch.is_empty() {
        return Err(Error::InputDomain("empty batch".into()));
    }
    check_grid(r_grid)?;
    let norms = batch.frobenius_norms();
    let traces = batch.traces();
    let n = batch.len();
    let dim = batch.dim();
    Ok(strict_core(&norms, r_grid, dim, &traces, |r| {
        let mut mean = HermitianMatrix::zeros(dim);
        for (x, &nx) in batch.matrices().iter().zip(&norms) {
            if nx < r {
                mean = mean.add(x);
            }
        }
        let mean = mean.scale(1.0 / n as f64);
        let mut var = 0.0;
        for (x, &nx) in batch.matrices().iter().zip(&norms) {
            let d = if nx < r { x.sub(&mean) } else { mean.scale(-1.0) };
            var += d.frobenius_norm().powi(2);
        }
        let se = if n > 1 {
            (var / ((n - 1) * n) as f64).sqrt()
        } else {
            0.0
        };
        (mean.frobenius_norm(), se)
    }))
}

/// Strict-domain residuals from eigenvalue vectors alone. The truncation
/// uses `‖λ‖₂ = ‖X‖_F`, so `trace_residuals` coincide with those of
/// [`strict_doa_check_alpha1`] on the same batch; `residuals` here use the
/// norm of the truncated mean eigenvalue vector projected on `1/√N`.
pub fn strict_doa_check_alpha1_eig(eigenvalues: &[Vec<f64>], r_grid: &[f64]) -> Result<StrictDoaResiduals> {
    let first = eigenvalues
        .first()
        .ok_or_else(|| Error::InputDomain("empty eigenvalue sample".into()))?;
    check_grid(r_grid)?;
    let dim = first.len();
    let norms: Vec<f64> = eigenvalues
        .iter()
        .map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    let traces: Vec<f64> = eigenvalues.iter().map(|v| v.iter().sum()).collect();
    let n = norms.len();
    Ok(strict_core(&norms, r_grid, dim, &traces, |r| {
        let kept: Vec<f64> = norms
            .iter()
            .zip(&traces)
            .map(|(x, t)| if *x < r { *t } else { 0.0 })
            .collect();
        let (m, se) = mean_stderr(&kept);
        let sq = (dim as f64).sqrt();
        (m.abs() / sq, if n > 1 { se / sq } else { 0.0 })
    }))
}

/// Gaussian-domain diagnostics along an increasing grid of `R`.
#[derive(Clone, Debug, Serialize)]
pub struct GaussianDoaCheck {
    pub r_grid: Vec<f64>,
    /// `R² P̂(‖X‖>R) / Ê[‖X‖² 1{‖X‖<R}]`.
    pub cond1: Vec<Option<f64>>,
    /// `Ê[(Tr TX)² 1{‖X‖<R}] / Ê[(Tr SX)² 1{‖X‖<R}]`.
    pub cond2: Vec<Option<f64>>,
}

pub fn gaussian_doa_check(
    batch: &SampleBatch,
    s: &HermitianMatrix,
    t: &HermitianMatrix,
    r_grid: &[f64],
) -> Result<GaussianDoaCheck> {
    if batch.is_empty() {
        return Err(Error::InputDomain("empty batch".into()));
    }
    check_grid(r_grid)?;
    for m in [s, t] {
        if m.dim() != batch.dim() {
            return Err(Error::DimensionMismatch {
                expected: batch.dim(),
                got: m.dim(),
            });
        }
        if m.frobenius_norm() == 0.0 {
            return Err(Error::param("S/T", "test matrices must be nonzero"));
        }
    }
    let norms = batch.frobenius_norms();
    let ps: Vec<f64> = batch.matrices().iter().map(|x| x.trace_product(s).powi(2)).collect();
    let pt: Vec<f64> = batch.matrices().iter().map(|x| x.trace_product(t).powi(2)).collect();
    let n = norms.len() as f64;
    let mut out = GaussianDoaCheck {
        r_grid: r_grid.to_vec(),
        cond1: Vec::new(),
        cond2: Vec::new(),
    };
    for &r in r_grid {
        let mut above = 0usize;
        let (mut sq, mut es, mut et) = (0.0, 0.0, 0.0);
        for i in 0..norms.len() {
            if norms[i] > r {
                above += 1;
            } else if norms[i] < r {
                sq += norms[i] * norms[i];
                es += ps[i];
                et += pt[i];
            }
        }
        out.cond1.push((sq > 0.0).then(|| r * r * above as f64 / n / (sq / n)));
        out.cond2.push((es > 0.0).then(|| et / es));
    }
    Ok(out)
}

/// Invariant Gaussian parameters with `Var(Tr XS) = σ² Tr S² + κ (Tr S)²`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct GaussianParams {
    pub sigma2: f64,
    pub kappa: f64,
}

impl GaussianParams {
    /// `−σ² Tr S²/2 − κ (Tr S)²/2` at `S = diag(s)`.
    pub fn log_cf_diag(&self, s: &[f64]) -> Complex64 {
        let tr: f64 = s.iter().sum();
        let tr2: f64 = s.iter().map(|x| x * x).sum();
        Complex64::new(-0.5 * (self.sigma2 * tr2 + self.kappa * tr * tr), 0.0)
    }
}

/// Estimates `(σ², κ)` from the diagonal-entry and trace variances of a
/// batch of single copies: `Var X_jj = σ² + κ`, `Var Tr X = Nσ² + N²κ`.
pub fn gaussian_params_from_covariance(batch: &SampleBatch) -> Result<GaussianParams> {
    if batch.len() < 2 {
        return Err(Error::InputDomain("at least two matrices are needed".into()));
    }
    let dim = batch.dim();
    let nf = dim as f64;
    let var = |v: &[f64]| {
        let se = mean_stderr(v).1;
        se * se * v.len() as f64
    };
    let mut v_diag = 0.0;
    for j in 0..dim {
        let col: Vec<f64> = batch.diagonals().iter().map(|d| d[j]).collect();
        v_diag += var(&col);
    }
    v_diag /= nf;
    if dim == 1 {
        return Ok(GaussianParams {
            sigma2: v_diag,
            kappa: 0.0,
        });
    }
    let v_tr = var(&batch.traces());
    let kappa = (v_tr / nf - v_diag) / (nf - 1.0);
    Ok(GaussianParams {
        sigma2: v_diag - kappa,
        kappa,
    })
}

/// Moment diagnostics for one exponent.
#[derive(Clone, Debug, Serialize)]
pub struct MomentScanEntry {
    pub exponent: f64,
    pub prefix_sizes: Vec<usize>,
    /// Mean of `‖X‖^m` over each prefix.
    pub partial_means: Vec<f64>,
    pub stderr: f64,
    /// `|mean(full) − mean(first half)|`.
    pub drift: f64,
    pub finite_looking: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct MomentScan {
    /// Hill index of the sample at `k = max(n/100, 10)`; infinite when the
    /// upper tail has no spread.
    pub hill_alpha: f64,
    pub entries: Vec<MomentScanEntry>,
}

/// Flags `E‖X‖^m` as finite-looking when `m` is below the Hill index of the
/// sample and doubling the sample moves the running mean by at most four
/// standard errors.
pub fn moment_scan(norms: &[f64], exponents: &[f64]) -> Result<MomentScan> {
    check_norms(norms)?;
    if exponents.iter().any(|m| !(*m > 0.0 && m.is_finite())) {
        return Err(Error::param("exponents", "must be positive"));
    }
    let n = norms.len();
    if n < 20 {
        return Err(Error::param("norms", "moment scan needs at least 20 values"));
    }
    let positive: Vec<f64> = norms.iter().copied().filter(|&x| x > 0.0).collect();
    let k = (positive.len() / 100).max(10);
    let hill_alpha = match hill_estimator(&positive, k) {
        Ok(h) => h.alpha_hat,
        Err(Error::Estimation(_)) => f64::INFINITY,
        Err(e) => return Err(e),
    };
    let mut prefix_sizes = Vec::new();
    let mut p = n;
    while p >= 10 && prefix_sizes.len() < 8 {
        prefix_sizes.push(p);
        p /= 2;
    }
    prefix_sizes.reverse();
    let entries = exponents
        .iter()
        .map(|&m| {
            let vals: Vec<f64> = norms.iter().map(|x| x.powf(m)).collect();
            let partial_means: Vec<f64> = prefix_sizes
                .iter()
                .map(|&p| vals[..p].iter().sum::<f64>() / p as f64)
                .collect();
            let (full, stderr) = mean_stderr(&vals);
            let half = vals[..n / 2].iter().sum::<f64>() / (n / 2) as f64;
            let drift = (full - half).abs();
            MomentScanEntry {
                exponent: m,
                prefix_sizes: prefix_sizes.clone(),
                partial_means,
                stderr,
                drift,
                finite_looking: m < hill_alpha && drift <= 4.0 * stderr,
            }
        })
        .collect();
    Ok(MomentScan { hill_alpha, entries })
}

/// Exact tail ratios of the dyadic law `P(X = 2^j) = 2^{−j}`, `j ≥ 1`.
#[derive(Clone, Debug, Serialize)]
pub struct DyadicRatio {
    pub k: f64,
    /// `P(X ≥ k 2^j)/P(X ≥ 2^j)` for `j = 1..=j_max`.
    pub ratios: Vec<f64>,
    /// Value of the sequence at `j_max` (it is constant in `j`).
    pub empirical_limit: f64,
    /// `k^{−α}` at α = 1.
    pub stable_target: f64,
    pub differs: bool,
}

/// `P(X ≥ t) = 2^{1−i}` with `i` the least index with `2^i ≥ t`.
fn dyadic_tail(t: f64) -> f64 {
    let mut i = 1i32;
    while 2f64.powi(i) < t {
        i += 1;
    }
    2f64.powi(1 - i)
}

/// With `P(X = 2^j) = 2^{−j}` every dyadic level carries the same relative
/// mass, so `P(X ≥ k2^j)/P(X ≥ 2^j) = 2^{−⌈log₂ k⌉}` for all `j`. This
/// matches the regularly varying target `1/k` only when `k` is a power of
/// two.
pub fn dyadic_counterexample_ratio(k: f64, j_max: u32) -> Result<DyadicRatio> {
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::param("k", "must be positive"));
    }
    if j_max < 10 {
        return Err(Error::param("j_max", "must be at least 10"));
    }
    let ratios: Vec<f64> = (1..=j_max as i32)
        .map(|j| {
            let r = 2f64.powi(j);
            dyadic_tail(k * r) / dyadic_tail(r)
        })
        .collect();
    let empirical_limit = *ratios.last().expect("j_max >= 10");
    let stable_target = 1.0 / k;
    Ok(DyadicRatio {
        k,
        differs: (empirical_limit - stable_target).abs() > 1e-12,
        ratios,
        empirical_limit,
        stable_target,
    })
}

/// One draw of the dyadic law `P(X = 2^j) = 2^{−j}`, `j ≥ 1`.
pub fn dyadic_draw<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let geo = Geometric::new(0.5).expect("valid probability");
    2f64.powi(rng.sample(geo) as i32 + 1)
}

/// `n` draws of the dyadic law, draw `i` from substream `(seed, "dyadic", i)`.
pub fn sample_dyadic(n: usize, seed: u64) -> Vec<f64> {
    par_draws(seed, "dyadic", n, |rng, _| dyadic_draw(rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::{
        doa_pareto_draw_fn, elliptical_draw_fn, sample_bounded_invariant, sample_doa_pareto, sample_elliptical_stable,
        sample_gaussian_invariant, sum_scaled,
    };
    use crate::rng::substream;
    use crate::spectral::SpectralMeasure;

    fn pareto(alpha: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = substream(seed, "pareto-test", 0);
        (0..n)
            .map(|_| rng.random::<f64>().max(1e-300).powf(-1.0 / alpha))
            .collect()
    }

    #[test]
    fn tail_ratio_trivial_and_pareto() {
        let x = pareto(1.5, 100_000, 1);
        let t = tail_ratio(&x, 1.0, &[1.5, 3.0, 10.0]).unwrap();
        assert!(t.ratios.iter().all(|r| *r == Some(1.0)));
        let t = tail_ratio(&x, 2.0, &[2.0, 5.0, 20.0, 1e4]).unwrap();
        assert!(t.counts.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(t.ratios[3], None);
        let target = 2f64.powf(-1.5);
        for (r, ci) in t.ratios.iter().zip(&t.ci_halfwidth).take(3) {
            assert!((r.unwrap() - target).abs() <= ci.unwrap());
        }
        assert!(tail_ratio(&x, 2.0, &[1e6]).is_err());
    }

    #[test]
    fn tail_ratio_light_tail_vanishes() {
        let mut rng = substream(2, "exp", 0);
        let x: Vec<f64> = (0..100_000).map(|_| rng.sample::<f64, _>(rand_distr::Exp1)).collect();
        let t = tail_ratio(&x, 2.0, &[1.0, 3.0, 5.0]).unwrap();
        let r: Vec<f64> = t.ratios.iter().map(|r| r.unwrap()).collect();
        assert!(r[0] > r[1] && r[1] > r[2]);
        assert!(r[2] < 0.02);
    }

    #[test]
    fn tail_ratio_monotone_in_k() {
        let x = pareto(0.8, 50_000, 3);
        let a = tail_ratio(&x, 1.5, &[3.0]).unwrap();
        let b = tail_ratio(&x, 3.0, &[3.0]).unwrap();
        assert!(b.ratios[0].unwrap() <= a.ratios[0].unwrap());
    }

    #[test]
    fn angular_functional_examples() {
        let iso = sample_doa_pareto(&SpectralMeasure::IsotropicUniform, 1.2, 2, 50_000, 4).unwrap();
        let one = angular_tail_functional(&iso, |_| 1.0, 1.0, 2.0, &[2.0, 5.0]).unwrap();
        let plain = tail_ratio(&iso.frobenius_norms(), 2.0, &[2.0, 5.0]).unwrap();
        for (a, b) in one.ratios.iter().zip(&plain.ratios) {
            assert!((a.unwrap() - b.unwrap()).abs() < 1e-12);
        }
        let tr = angular_tail_functional(&iso, |r| r.trace(), 2f64.sqrt(), 2.0, &[2.0]).unwrap();
        assert!(tr.ratios[0].unwrap().abs() < 0.03);
        let p = 0.8;
        let dirac = sample_doa_pareto(&SpectralMeasure::dirac(p).unwrap(), 1.2, 2, 50_000, 5).unwrap();
        let f = angular_tail_functional(&dirac, |r| r.trace() / 2f64.sqrt(), 1.0 + 1e-12, 2.0, &[2.0]).unwrap();
        let expect = 2f64.powf(-1.2) * (2.0 * p - 1.0);
        assert!((f.ratios[0].unwrap() - expect).abs() < 0.02);
        assert!(angular_tail_functional(&dirac, |_| 5.0, 1.0, 2.0, &[2.0]).is_err());
    }

    #[test]
    fn hill_examples() {
        for alpha in [1.2, 0.8] {
            let x = pareto(alpha, 100_000, 6);
            let h = hill_estimator(&x, 1000).unwrap();
            assert!((h.alpha_hat - alpha).abs() <= 3.0 * h.ci_halfwidth, "{h:?}");
            let scaled: Vec<f64> = x.iter().map(|v| v * 7.5).collect();
            let hs = hill_estimator(&scaled, 1000).unwrap();
            assert!((hs.alpha_hat - h.alpha_hat).abs() < 1e-9 * h.alpha_hat);
        }
        assert!(matches!(hill_estimator(&[2.0; 100], 20), Err(Error::Estimation(_))));
        assert!(hill_estimator(&[1.0, -1.0], 1).is_err());
        assert!(hill_estimator(&pareto(1.0, 100, 1), 60).is_err());
    }

    fn s_grid() -> Vec<Vec<f64>> {
        vec![
            vec![0.5, 0.0],
            vec![0.0, -0.8],
            vec![0.6, 0.6],
            vec![1.0, -0.5],
            vec![-0.3, 0.9],
        ]
    }

    #[test]
    fn clt_stable_source_is_fixed_point() {
        let alpha = 1.5;
        let src = elliptical_draw_fn(1.0, 0.0, alpha, 0.0, 2).unwrap();
        let target = |s: &[f64]| {
            let q: f64 = s.iter().map(|x| x * x).sum::<f64>() / alpha;
            Complex64::new(-q.powf(alpha / 2.0), 0.0)
        };
        let setup = CltSetup {
            dim: 2,
            alpha,
            b: 1.0,
            shift: ShiftRule::Zero,
            m_schedule: vec![1, 3],
            s_grid: s_grid(),
            n: 20_000,
            seed: 7,
            comparison: CfComparison::Absolute,
        };
        let c = clt_experiment(&src, target, &setup).unwrap();
        for (d, se) in c.distances.iter().zip(&c.stderrs) {
            assert!(*d <= 4.0 * se + 0.005, "{d} vs {se}");
        }
        let setup = CltSetup {
            comparison: CfComparison::ScaleCancelling { s0: vec![1.0, 0.0] },
            ..setup
        };
        let c = clt_experiment(&src, target, &setup).unwrap();
        assert!(c.distances.iter().all(|d| *d < 0.03));
    }

    #[test]
    fn clt_rejects_mean_shift_below_one() {
        let src = doa_pareto_draw_fn(&SpectralMeasure::IsotropicUniform, 0.9, 2).unwrap();
        let setup = CltSetup {
            dim: 2,
            alpha: 0.9,
            b: 1.0,
            shift: ShiftRule::MeanBased,
            m_schedule: vec![1],
            s_grid: s_grid(),
            n: 10,
            seed: 0,
            comparison: CfComparison::Absolute,
        };
        assert!(clt_experiment(&src, |_| Complex64::new(0.0, 0.0), &setup).is_err());
    }

    #[test]
    fn clt_mean_based_shift_centres_sums() {
        // α = 2 with a shifted bounded source: the mean-based rule must remove the shift
        let src = |rng: &mut StreamRng| crate::ensembles::bounded_invariant_draw(2, rng).shift_identity(0.5);
        let gp = GaussianParams {
            sigma2: 1.0 / 9.0,
            kappa: 1.0 / 9.0,
        };
        let setup = CltSetup {
            dim: 2,
            alpha: 2.0,
            b: 1.0,
            shift: ShiftRule::MeanBased,
            m_schedule: vec![16],
            s_grid: s_grid(),
            n: 20_000,
            seed: 8,
            comparison: CfComparison::Absolute,
        };
        let c = clt_experiment(src, |s| gp.log_cf_diag(s), &setup).unwrap();
        // A_16 = 4 · 1/2; pilot error is √16 · sd(Tr X)/(N √n) with sd(Tr X) = √(2/3)
        let se = 4.0 * (2.0f64 / 3.0).sqrt() / (2.0 * (20_000f64).sqrt());
        assert!((c.a_m[0] - 2.0).abs() < 4.0 * se, "{:?}", c.a_m);
        assert!(c.distances[0] < 0.03, "{:?}", c.distances);
    }

    #[test]
    fn trace_of_scaled_sums_agrees_across_levels() {
        let a = sample_doa_pareto(&SpectralMeasure::single_orbit(&[1.0, 0.2]).unwrap(), 1.5, 2, 500, 1).unwrap();
        let b = sample_doa_pareto(&SpectralMeasure::single_orbit(&[1.0, 0.2]).unwrap(), 1.5, 2, 500, 2).unwrap();
        let s = sum_scaled(&[&a, &b], 2f64.powf(1.0 / 1.5), 0.3).unwrap();
        for i in 0..s.len() {
            let tr = s.matrices()[i].trace();
            let diag: f64 = s.diagonals()[i].iter().sum();
            let eig: f64 = (a.eigenvalues()[i].iter().sum::<f64>() + b.eigenvalues()[i].iter().sum::<f64>())
                / 2f64.powf(1.0 / 1.5)
                - 0.6;
            assert!((tr - diag).abs() < 1e-12 * (1.0 + tr.abs()));
            assert!((tr - eig).abs() < 1e-12 * (1.0 + tr.abs()));
        }
    }

    #[test]
    fn strict_doa_examples() {
        let r_grid = [5.0, 20.0, 100.0];
        let sym = sample_doa_pareto(
            &SpectralMeasure::single_orbit(&[1.0, -1.0]).unwrap(),
            1.0,
            2,
            100_000,
            9,
        )
        .unwrap();
        let res = strict_doa_check_alpha1(&sym, &r_grid).unwrap();
        for (r, se) in res.residuals.iter().zip(&res.stderrs) {
            assert!(r.unwrap() <= 4.0 * se.unwrap(), "{r:?} {se:?}");
        }
        let dirac = sample_doa_pareto(&SpectralMeasure::dirac(0.9).unwrap(), 1.0, 2, 100_000, 10).unwrap();
        let res_d = strict_doa_check_alpha1(&dirac, &r_grid).unwrap();
        for (d, s) in res_d.residuals.iter().zip(&res.residuals) {
            assert!(d.unwrap() > 5.0 * s.unwrap());
        }
        let eig = strict_doa_check_alpha1_eig(dirac.eigenvalues(), &r_grid).unwrap();
        for (a, b) in eig.trace_residuals.iter().zip(&res_d.trace_residuals) {
            assert!((a.unwrap() - b.unwrap()).abs() <= 1e-12 * b.unwrap());
        }
        // mean ∝ I for the Dirac source, so the trace part carries everything
        for (a, b) in res_d.trace_residuals.iter().zip(&res_d.residuals) {
            assert!((a.unwrap() - b.unwrap()).abs() <= 1e-12 * b.unwrap());
        }
        let masked = strict_doa_check_alpha1(&dirac, &[1e300]).unwrap();
        assert_eq!(masked.residuals, vec![None]);
    }

    #[test]
    fn gaussian_doa_examples() {
        let b = sample_bounded_invariant(2, 20_000, 11).unwrap();
        let s = HermitianMatrix::from_diagonal(&[1.0, 0.0]);
        let t = HermitianMatrix::from_diagonal(&[0.0, 1.0]);
        let c = gaussian_doa_check(&b, &s, &t, &[0.5, 1.0, 2.0]).unwrap();
        assert_eq!(c.cond1[2], Some(0.0));
        let g = sample_gaussian_invariant(1.0, 0.0, 2, 100_000, 12).unwrap();
        let c = gaussian_doa_check(&g, &s, &t, &[1e3]).unwrap();
        assert!((c.cond2[0].unwrap() - 1.0).abs() < 0.02);
        let c = gaussian_doa_check(
            &g,
            &HermitianMatrix::identity(2),
            &HermitianMatrix::from_diagonal(&[1.0, -1.0]),
            &[1e3],
        )
        .unwrap();
        assert!((c.cond2[0].unwrap() - 1.0).abs() < 0.02);
    }

    #[test]
    fn gaussian_params_recover_bounded_covariance() {
        // Var(Tr X) = 2/3 and Var(X₁₁) = 2/9 for N = 2, so σ² = κ = 1/9
        let b = sample_bounded_invariant(2, 200_000, 13).unwrap();
        let p = gaussian_params_from_covariance(&b).unwrap();
        assert!((p.sigma2 - 1.0 / 9.0).abs() < 0.004, "{p:?}");
        assert!((p.kappa - 1.0 / 9.0).abs() < 0.004, "{p:?}");
        let g = sample_gaussian_invariant(1.5, 0.4, 3, 100_000, 14).unwrap();
        let p = gaussian_params_from_covariance(&g).unwrap();
        assert!((p.sigma2 - 2.25).abs() < 0.05 && (p.kappa - 0.4).abs() < 0.05, "{p:?}");
    }

    #[test]
    fn moment_scan_examples() {
        let g = sample_gaussian_invariant(1.0, 0.0, 2, 100_000, 15).unwrap();
        let scan = moment_scan(&g.frobenius_norms(), &[1.0, 2.0, 4.0, 8.0]).unwrap();
        assert!(scan.entries.iter().all(|e| e.finite_looking), "{}", scan.hill_alpha);
        let p = sample_doa_pareto(&SpectralMeasure::IsotropicUniform, 1.5, 2, 100_000, 16).unwrap();
        let scan = moment_scan(&p.frobenius_norms(), &[1.0, 2.0]).unwrap();
        assert!(scan.entries[0].finite_looking && !scan.entries[1].finite_looking);
        let c = sample_elliptical_stable(1.0, 0.0, 1.0, 0.0, 2, 100_000, 17).unwrap();
        let scan = moment_scan(&c.frobenius_norms(), &[0.5, 1.5]).unwrap();
        assert!(scan.entries[0].finite_looking && !scan.entries[1].finite_looking);
        assert!(moment_scan(&[1.0; 50], &[-1.0]).is_err());
    }

    #[test]
    fn dyadic_examples() {
        let r = dyadic_counterexample_ratio(2.0, 20).unwrap();
        assert_eq!((r.empirical_limit, r.stable_target, r.differs), (0.5, 0.5, false));
        let r = dyadic_counterexample_ratio(1.5, 20).unwrap();
        assert_eq!(r.empirical_limit, 0.5);
        assert!(r.differs && (r.stable_target - 2.0 / 3.0).abs() < 1e-15);
        assert!(r.ratios.iter().all(|&x| x == 0.5));
        let r = dyadic_counterexample_ratio(1.0, 10).unwrap();
        assert_eq!(r.empirical_limit, 1.0);
        assert!(dyadic_counterexample_ratio(1.5, 5).is_err());
        // the sampler has the exact tail
        let x = sample_dyadic(100_000, 18);
        let p = x.iter().filter(|&&v| v >= 16.0).count() as f64 / x.len() as f64;
        assert!((p - 0.125).abs() < 4.0 * (0.125f64 * 0.875 / 1e5).sqrt());
        let scan = moment_scan(&x, &[0.5, 1.5]).unwrap();
        assert!(
            scan.entries[0].finite_looking && !scan.entries[1].finite_looking,
            "{}",
            scan.hill_alpha
        );
    }
}
