//! The `sample`, `cf`, `dp-check`, `clt`, `tail` and `report` commands.

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use hermstable::charfn::{
    derivative_principle_residual, empirical_cf_diag, empirical_cf_matrix, empirical_spherical_cf, isotropic_log_cf,
    log_cf_diag_form, log_cf_eig_form, log_cf_g_alpha_form, log_cf_matrix,
};
use hermstable::ensembles::{
    bounded_invariant_draw, dirac_draw_fn, doa_pareto_draw_fn, elliptical_draw_fn, elliptical_quadratic_form,
    gaussian_draw_fn, sample_bounded_invariant, sample_dirac_stable, sample_doa_pareto, sample_elliptical_stable,
    sample_gaussian_invariant, EnsembleSpec, SampleBatch,
};
use hermstable::limits::{
    clt_experiment, dyadic_counterexample_ratio, dyadic_draw, gaussian_doa_check, gaussian_params_from_covariance,
    hill_estimator, moment_scan, sample_dyadic, strict_doa_check_alpha1, tail_ratio, CltSetup, GaussianParams,
};
use hermstable::linalg::HermitianMatrix;
use hermstable::rng::{child_seed, StreamRng};
use hermstable::spectral::{elliptical_constants, SpectralMeasure};
use hermstable::stats::{mean_stderr, Estimate};
use num_complex::Complex64;
use serde_json::{json, Value};

use crate::config::{CfForm, Command, ConfigError, RunConfig, SourceSpec, TargetSpec};
use crate::output::{f, opt, write_csv, write_json_with_meta, Check, Report};

#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    Core(hermstable::Error),
    Io(std::io::Error),
}

impl CliError {
    /// 2 for configuration problems, 3 for numerical or I/O failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(
                hermstable::Error::Parameter { .. }
                | hermstable::Error::DimensionMismatch { .. }
                | hermstable::Error::Unsupported(_),
            ) => 2,
            CliError::Core(_) | CliError::Io(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, fm: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(e) => write!(fm, "{e}"),
            CliError::Core(e) => write!(fm, "{e}"),
            CliError::Io(e) => write!(fm, "i/o error: {e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<hermstable::Error> for CliError {
    fn from(e: hermstable::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(e.into())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Settings shared by all commands.
pub struct RunContext {
    pub out_dir: PathBuf,
    pub verbose: bool,
}

impl RunContext {
    fn log(&self, msg: impl AsRef<str>) {
        if self.verbose {
            eprintln!("[hermstable] {}", msg.as_ref());
        }
    }
}

/// Batch of `n` draws of `src`, seeded exactly as the library samplers.
pub fn sample_source(src: &SourceSpec, dim: usize, n: usize, seed: u64) -> hermstable::Result<SampleBatch> {
    match src {
        SourceSpec::Elliptical {
            sigma,
            kappa,
            alpha,
            y0,
        } => sample_elliptical_stable(*sigma, *kappa, *alpha, *y0, dim, n, seed),
        SourceSpec::Gaussian { sigma, kappa } => sample_gaussian_invariant(*sigma, *kappa, dim, n, seed),
        SourceSpec::Gue {} => sample_gaussian_invariant(1.0, 0.0, dim, n, seed),
        SourceSpec::Dirac { alpha, gamma, p, y0 } => sample_dirac_stable(*alpha, *gamma, *p, *y0, dim, n, seed),
        SourceSpec::DoaPareto { alpha, measure } => sample_doa_pareto(measure, *alpha, dim, n, seed),
        SourceSpec::Bounded {} => sample_bounded_invariant(dim, n, seed),
        SourceSpec::Dyadic {} => {
            let m = sample_dyadic(n, seed)
                .into_iter()
                .map(|x| HermitianMatrix::from_diagonal(&[x]))
                .collect();
            SampleBatch::new(1, seed, true, json!({"sampler": "dyadic"}), m)
        }
    }
}

type DrawFn = Box<dyn Fn(&mut StreamRng) -> HermitianMatrix + Sync>;

/// Single-draw sampler for `src`, used where sums are streamed.
pub fn source_draw_fn(src: &SourceSpec, dim: usize) -> hermstable::Result<DrawFn> {
    Ok(match src {
        SourceSpec::Elliptical {
            sigma,
            kappa,
            alpha,
            y0,
        } => Box::new(elliptical_draw_fn(*sigma, *kappa, *alpha, *y0, dim)?),
        SourceSpec::Gaussian { sigma, kappa } => Box::new(gaussian_draw_fn(*sigma, *kappa, dim)?),
        SourceSpec::Gue {} => Box::new(gaussian_draw_fn(1.0, 0.0, dim)?),
        SourceSpec::Dirac { alpha, gamma, p, y0 } => Box::new(dirac_draw_fn(*alpha, *gamma, *p, *y0, dim)?),
        SourceSpec::DoaPareto { alpha, measure } => Box::new(doa_pareto_draw_fn(measure, *alpha, dim)?),
        SourceSpec::Bounded {} => Box::new(move |rng: &mut StreamRng| bounded_invariant_draw(dim, rng)),
        SourceSpec::Dyadic {} => Box::new(|rng: &mut StreamRng| HermitianMatrix::from_diagonal(&[dyadic_draw(rng)])),
    })
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

fn finish(ctx: &RunContext, name: &str, mut report: Report, start: Instant) -> CliResult<bool> {
    let file = format!("{name}_report.json");
    report.artifacts.push(file.clone());
    write_json_with_meta(&ctx.out_dir.join(&file), &report, start.elapsed())?;
    for c in &report.checks {
        ctx.log(format!(
            "{}: {} (statistic {} vs threshold {})",
            c.name,
            if c.passed { "pass" } else { "FAIL" },
            c.statistic,
            c.threshold
        ));
    }
    Ok(report.passed)
}

/// Runs `cmd`; returns whether every check passed.
pub fn run(cmd: Command, cfg: &RunConfig, raw: &Value, ctx: &RunContext) -> CliResult<bool> {
    cfg.validate(cmd)?;
    std::fs::create_dir_all(&ctx.out_dir)?;
    let start = Instant::now();
    let mut echo = raw.clone();
    echo["seed"] = json!(cfg.seed);
    let report = Report::new(cmd.name(), echo);
    match cmd {
        Command::Sample => cmd_sample(cfg, ctx, report, start),
        Command::Cf => cmd_cf(cfg, ctx, report, start),
        Command::DpCheck => cmd_dp_check(cfg, ctx, report, start),
        Command::Clt => cmd_clt(cfg, ctx, report, start),
        Command::Tail => cmd_tail(cfg, ctx, report, start),
    }
}

fn source_batch(cfg: &RunConfig, ctx: &RunContext) -> CliResult<SampleBatch> {
    let src = cfg.source.as_ref().expect("validated");
    let n = cfg.n.expect("validated");
    ctx.log(format!("sampling {n} draws (dim {})", cfg.dim));
    Ok(sample_source(src, cfg.dim, n, cfg.seed)?)
}

fn cmd_sample(cfg: &RunConfig, ctx: &RunContext, mut report: Report, start: Instant) -> CliResult<bool> {
    let batch = source_batch(cfg, ctx)?;
    batch.save(&ctx.out_dir.join("batch.hsb"))?;
    report.artifacts.push("batch.hsb".into());
    let mut norms = batch.frobenius_norms();
    norms.sort_by(f64::total_cmp);
    let qs = [0.05, 0.5, 0.95, 0.99];
    let quantiles: Vec<Value> = qs
        .iter()
        .map(|&q| json!({"q": q, "value": quantile(&norms, q)}))
        .collect();
    report.result("n", batch.len())?;
    report.result("dim", batch.dim())?;
    report.result("exact", batch.exact())?;
    report.result("norm_quantiles", quantiles)?;
    let traces = batch.traces();
    let abs_tr: Vec<f64> = traces.iter().map(|t| t.abs()).collect();
    let trace_moments = if batch.len() >= 20 {
        let scan = moment_scan(&abs_tr, &[1.0, 2.0])?;
        let (m, se) = mean_stderr(&traces);
        let mean = scan.entries[0]
            .finite_looking
            .then(|| json!({"value": m, "stderr": se}));
        let var = scan.entries[1].finite_looking.then(|| {
            let v = se * se * traces.len() as f64;
            json!({"value": v})
        });
        json!({"hill_alpha_abs_trace": scan.hill_alpha, "mean": mean, "variance": var})
    } else {
        json!({"note": "fewer than 20 draws; moments not assessed"})
    };
    report.result("trace_moments", trace_moments)?;
    let lmax = mean_stderr(&batch.max_eigenvalues());
    let lmin: Vec<f64> = batch.eigenvalues().iter().map(|e| e[0]).collect();
    let lmin = mean_stderr(&lmin);
    let mut spectral = json!({
        "mean_max_eigenvalue": {"value": lmax.0, "stderr": lmax.1},
        "mean_min_eigenvalue": {"value": lmin.0, "stderr": lmin.1},
    });
    if batch.dim() >= 2 {
        let gaps: Vec<f64> = batch
            .eigenvalues()
            .iter()
            .map(|e| e.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min))
            .collect();
        let g = mean_stderr(&gaps);
        spectral["mean_min_spacing"] = json!({"value": g.0, "stderr": g.1});
    }
    report.result("spectral", spectral)?;
    finish(ctx, "sample", report, start)
}

fn exp_estimate(l: Estimate) -> Estimate {
    let v = l.value.exp();
    Estimate {
        value: v,
        stderr: v.norm() * l.stderr,
    }
}

fn cmd_cf(cfg: &RunConfig, ctx: &RunContext, mut report: Report, start: Instant) -> CliResult<bool> {
    let cf = cfg.cf.as_ref().expect("validated");
    let spec = cf.ensemble.spec(cfg.dim)?;
    let batch = if cf.forms.iter().any(|f| f.is_empirical()) {
        Some(source_batch(cfg, ctx)?)
    } else {
        None
    };
    let mut rows = Vec::new();
    let mut agree_rows = Vec::new();
    let mut worst = 0.0f64;
    for (pid, s) in cf.points.iter().enumerate() {
        let sm = HermitianMatrix::from_diagonal(s);
        let mut ests = Vec::new();
        for form in &cf.forms {
            let seed = child_seed(cfg.seed, form.name(), pid as u64);
            let e = match form {
                CfForm::Matrix => exp_estimate(log_cf_matrix(&spec, &sm, cf.n_mc, seed)?),
                CfForm::Diag => exp_estimate(log_cf_diag_form(&spec, s, cf.n_mc, seed)?),
                CfForm::Eig => exp_estimate(log_cf_eig_form(&spec, s, cf.n_mc, seed)?),
                CfForm::GAlpha => exp_estimate(log_cf_g_alpha_form(&spec, s, cf.n_mc, seed)?),
                CfForm::EmpiricalMatrix => empirical_cf_matrix(batch.as_ref().expect("sampled"), &sm)?,
                CfForm::EmpiricalDiag => empirical_cf_diag(batch.as_ref().expect("sampled"), s)?,
                CfForm::Spherical => empirical_spherical_cf(batch.as_ref().expect("sampled"), s)?,
            };
            rows.push(format!(
                "{pid},{},{},{},{}",
                form.name(),
                f(e.value.re),
                f(e.value.im),
                f(e.stderr)
            ));
            ests.push((*form, e));
        }
        let (ref_form, ref_e) = ests[0];
        for (form, e) in &ests[1..] {
            let diff = (e.value - ref_e.value).norm();
            let se = e.combined_stderr(&ref_e);
            let allowed = (cf.agreement_sigmas * se).max(1e-12);
            let ok = diff <= allowed;
            worst = worst.max(diff / allowed);
            agree_rows.push(format!(
                "{pid},{},{},{},{},{}",
                form.name(),
                ref_form.name(),
                f(diff),
                f(se),
                ok
            ));
        }
    }
    write_csv(&ctx.out_dir.join("cf.csv"), "point_id,form,re,im,stderr", &rows)?;
    write_csv(
        &ctx.out_dir.join("cf_agreement.csv"),
        "point_id,form,reference_form,abs_diff,combined_stderr,agrees",
        &agree_rows,
    )?;
    report
        .artifacts
        .extend(["cf.csv".to_string(), "cf_agreement.csv".to_string()]);
    if cf.forms.len() > 1 {
        report.check(Check::at_most("max_scaled_discrepancy", worst, 1.0));
    }
    finish(ctx, "cf", report, start)
}

fn cmd_dp_check(cfg: &RunConfig, ctx: &RunContext, mut report: Report, start: Instant) -> CliResult<bool> {
    let dp = cfg.dp_check.as_ref().expect("validated");
    let batch = source_batch(cfg, ctx)?;
    let res = derivative_principle_residual(&batch, &dp.grid)?;
    let mut rows = Vec::new();
    let mut worst = 0.0f64;
    for (i, p) in res.points.iter().enumerate() {
        let allowed = dp.tolerance.max(4.0 * p.combined_stderr);
        worst = worst.max(p.residual / allowed);
        let s: Vec<String> = p.s.iter().map(|x| f(*x)).collect();
        rows.push(format!(
            "{i},\"{}\",{},{},{},{},{},{}",
            s.join(" "),
            f(p.spherical.value.re),
            f(p.spherical.value.im),
            f(p.diagonal.value.re),
            f(p.diagonal.value.im),
            f(p.residual),
            f(p.combined_stderr)
        ));
    }
    write_csv(
        &ctx.out_dir.join("dp_check.csv"),
        "point_id,s,spherical_re,spherical_im,diagonal_re,diagonal_im,residual,combined_stderr",
        &rows,
    )?;
    report.artifacts.push("dp_check.csv".into());
    report.result("max_residual", res.max_residual)?;
    report.check(Check::at_most("max_residual_over_allowance", worst, 1.0));
    finish(ctx, "dp_check", report, start)
}

fn stable_target(spec: &EnsembleSpec, n_mc: usize, points: &[Vec<f64>], seed: u64) -> CliResult<Vec<Complex64>> {
    let (alpha, gamma, y0, dim) = (spec.alpha, spec.gamma, spec.y0, spec.dim);
    points
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let sm = HermitianMatrix::from_diagonal(s);
            let tr: f64 = s.iter().sum();
            Ok(match &spec.measure {
                SpectralMeasure::IsotropicUniform => isotropic_log_cf(alpha, gamma, y0, &sm)?,
                SpectralMeasure::Elliptical { sigma, kappa } if alpha < 2.0 => {
                    let c = elliptical_constants(*sigma, *kappa, alpha, dim)?;
                    let q = elliptical_quadratic_form(*sigma, *kappa, alpha, &sm);
                    Complex64::new(-(gamma / c.gamma_scale) * q.powf(alpha / 2.0), y0 * tr)
                }
                _ => log_cf_diag_form(spec, s, n_mc, child_seed(seed, "clt-target", i as u64))?.value,
            })
        })
        .collect()
}

fn cmd_clt(cfg: &RunConfig, ctx: &RunContext, mut report: Report, start: Instant) -> CliResult<bool> {
    let c = cfg.clt.as_ref().expect("validated");
    let src = cfg.source.as_ref().expect("validated");
    let draw = source_draw_fn(src, cfg.dim)?;
    let mut pts = c.s_grid.clone();
    if let hermstable::limits::CfComparison::ScaleCancelling { s0 } = &c.comparison {
        pts.push(s0.clone());
    }
    let values: Vec<Complex64> = match &c.target {
        TargetSpec::Stable {
            alpha,
            gamma,
            y0,
            measure,
            n_mc,
        } => {
            let spec = EnsembleSpec::new(*alpha, *gamma, *y0, cfg.dim, measure.clone())?;
            stable_target(&spec, *n_mc, &pts, cfg.seed)?
        }
        TargetSpec::Gaussian { sigma2, kappa } => {
            let g = GaussianParams {
                sigma2: *sigma2,
                kappa: *kappa,
            };
            pts.iter().map(|s| g.log_cf_diag(s)).collect()
        }
        TargetSpec::GaussianFromSource { n_pilot } => {
            let pilot = sample_source(src, cfg.dim, *n_pilot, child_seed(cfg.seed, "clt-covariance", 0))?;
            let g = gaussian_params_from_covariance(&pilot)?;
            report.result("gaussian_params", g)?;
            pts.iter().map(|s| g.log_cf_diag(s)).collect()
        }
    };
    let target = |s: &[f64]| {
        pts.iter()
            .position(|p| p.as_slice() == s)
            .map(|i| values[i])
            .expect("target evaluated on the configured grid only")
    };
    let setup = CltSetup {
        dim: cfg.dim,
        alpha: c.alpha,
        b: c.b,
        shift: c.shift,
        m_schedule: c.m_schedule.clone(),
        s_grid: c.s_grid.clone(),
        n: cfg.n.expect("validated"),
        seed: cfg.seed,
        comparison: c.comparison.clone(),
    };
    ctx.log(format!("running m-schedule {:?}", setup.m_schedule));
    let curve = clt_experiment(draw, target, &setup)?;
    let rows: Vec<String> = (0..curve.m_schedule.len())
        .map(|i| {
            format!(
                "{},{},{},{},{}",
                curve.m_schedule[i],
                f(curve.b_m[i]),
                f(curve.a_m[i]),
                f(curve.distances[i]),
                f(curve.stderrs[i])
            )
        })
        .collect();
    write_csv(&ctx.out_dir.join("clt.csv"), "m,B_m,A_m,distance,stderr", &rows)?;
    report.artifacts.push("clt.csv".into());
    report.result("curve", &curve)?;
    let last = curve.distances.len() - 1;
    if let Some(d) = c.max_final_distance {
        report.check(Check::at_most("final_distance", curve.distances[last], d));
    }
    if c.require_nonincreasing {
        let worst = curve
            .distances
            .windows(2)
            .zip(curve.stderrs.windows(2))
            .map(|(d, s)| (d[1] - d[0]) / s[0].hypot(s[1]).max(f64::MIN_POSITIVE))
            .fold(f64::NEG_INFINITY, f64::max);
        report.check(Check::at_most("max_increase_in_stderrs", worst, 2.0));
    }
    finish(ctx, "clt", report, start)
}

fn cmd_tail(cfg: &RunConfig, ctx: &RunContext, mut report: Report, start: Instant) -> CliResult<bool> {
    let t = cfg.tail.as_ref().expect("validated");
    let needs_batch = t.tail_ratio.is_some()
        || t.hill.is_some()
        || t.moments.is_some()
        || t.strict_alpha1.is_some()
        || t.gaussian_doa.is_some();
    let batch = if needs_batch {
        Some(source_batch(cfg, ctx)?)
    } else {
        None
    };
    let norms = batch.as_ref().map(|b| b.frobenius_norms());
    if let (Some(tr), Some(norms)) = (&t.tail_ratio, &norms) {
        let est = tail_ratio(norms, tr.k, &tr.r_grid)?;
        let rows: Vec<String> = (0..est.r_grid.len())
            .map(|i| {
                format!(
                    "{},{},{},{},{}",
                    f(est.r_grid[i]),
                    est.counts[i],
                    opt(est.ratios[i]),
                    opt(est.ci_halfwidth[i]),
                    est.ratios[i].is_none()
                )
            })
            .collect();
        write_csv(
            &ctx.out_dir.join("tail_ratio.csv"),
            "R,exceedances,ratio,ci99_halfwidth,masked",
            &rows,
        )?;
        report.artifacts.push("tail_ratio.csv".into());
        if let (Some(expect), Some((_, r, ci))) = (tr.expect, est.largest_unmasked()) {
            report.check(Check::at_most("tail_ratio_deviation", (r - expect).abs(), ci));
        }
        report.result("tail_ratio", &est)?;
    }
    if let (Some(h), Some(norms)) = (&t.hill, &norms) {
        let est = hill_estimator(norms, h.k_order)?;
        if let Some([lo, hi]) = h.expect_range {
            report.check(Check::at_least("hill_alpha_lower", est.alpha_hat, lo));
            report.check(Check::at_most("hill_alpha_upper", est.alpha_hat, hi));
        }
        report.result("hill", est)?;
    }
    if let (Some(m), Some(norms)) = (&t.moments, &norms) {
        report.result("moments", moment_scan(norms, &m.exponents)?)?;
    }
    if let (Some(g), Some(batch)) = (&t.strict_alpha1, &batch) {
        let res = strict_doa_check_alpha1(batch, &g.r_grid)?;
        let rows: Vec<String> = (0..res.r_grid.len())
            .map(|i| {
                format!(
                    "{},{},{},{},{}",
                    f(res.r_grid[i]),
                    opt(res.residuals[i]),
                    opt(res.stderrs[i]),
                    opt(res.trace_residuals[i]),
                    f(res.exceedance_fractions[i])
                )
            })
            .collect();
        write_csv(
            &ctx.out_dir.join("strict_alpha1.csv"),
            "R,residual,stderr,trace_residual,exceedance_fraction",
            &rows,
        )?;
        report.artifacts.push("strict_alpha1.csv".into());
        report.result("strict_alpha1", &res)?;
    }
    if let (Some(g), Some(batch)) = (&t.gaussian_doa, &batch) {
        let res = gaussian_doa_check(
            batch,
            &HermitianMatrix::from_diagonal(&g.s),
            &HermitianMatrix::from_diagonal(&g.t),
            &g.r_grid,
        )?;
        let rows: Vec<String> = (0..res.r_grid.len())
            .map(|i| format!("{},{},{}", f(res.r_grid[i]), opt(res.cond1[i]), opt(res.cond2[i])))
            .collect();
        write_csv(&ctx.out_dir.join("gaussian_doa.csv"), "R,cond1,cond2", &rows)?;
        report.artifacts.push("gaussian_doa.csv".into());
        report.result("gaussian_doa", &res)?;
    }
    if let Some(d) = &t.dyadic {
        report.result("dyadic", dyadic_counterexample_ratio(d.k, d.j_max)?)?;
    }
    finish(ctx, "tail", report, start)
}

/// Aggregates report files into `summary.json` and `summary.md`.
pub fn cmd_report(paths: &[PathBuf], ctx: &RunContext) -> CliResult<bool> {
    if paths.is_empty() {
        return Err(ConfigError::new("paths", "no report files given").into());
    }
    std::fs::create_dir_all(&ctx.out_dir)?;
    let start = Instant::now();
    let mut runs = Vec::new();
    let mut all = true;
    for p in paths {
        let text = std::fs::read_to_string(p)
            .map_err(|e| ConfigError::new("paths", format!("cannot read {}: {e}", p.display())))?;
        let v: Value = serde_json::from_str(&text)
            .map_err(|e| ConfigError::new("paths", format!("{} is not a report: {e}", p.display())))?;
        let passed = v["passed"].as_bool().unwrap_or(false);
        all &= passed;
        runs.push(json!({
            "file": display_name(p),
            "command": v["command"],
            "seed": v["config"]["seed"],
            "passed": passed,
            "checks": v["checks"],
        }));
    }
    let summary = json!({"runs": runs, "passed": all});
    write_json_with_meta(&ctx.out_dir.join("summary.json"), &summary, start.elapsed())?;
    let mut md = String::from("# Run summary\n\n| file | command | seed | check | statistic | threshold | result |\n|---|---|---|---|---|---|---|\n");
    for r in &runs {
        let checks = r["checks"].as_array().cloned().unwrap_or_default();
        if checks.is_empty() {
            md.push_str(&format!(
                "| {} | {} | {} | - | - | - | {} |\n",
                r["file"].as_str().unwrap_or(""),
                r["command"].as_str().unwrap_or(""),
                r["seed"],
                verdict(r["passed"].as_bool())
            ));
        }
        for c in checks {
            md.push_str(&format!(
                "| {} | {} | {} | {} | {} | {} | {} |\n",
                r["file"].as_str().unwrap_or(""),
                r["command"].as_str().unwrap_or(""),
                r["seed"],
                c["name"].as_str().unwrap_or(""),
                c["statistic"],
                c["threshold"],
                verdict(c["passed"].as_bool())
            ));
        }
    }
    md.push_str(&format!("\nOverall: {}\n", verdict(Some(all))));
    std::fs::write(ctx.out_dir.join("summary.md"), md)?;
    Ok(all)
}

fn verdict(b: Option<bool>) -> &'static str {
    if b == Some(true) {
        "pass"
    } else {
        "FAIL"
    }
}

fn display_name(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}
