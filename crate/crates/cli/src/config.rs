//! Run configuration: JSON schema version "1".
//!
//! Parsing goes through `serde_path_to_error` so that type errors name the
//! offending field; [`RunConfig::validate`] then checks value domains and
//! cross-field constraints for the command being run.

use std::fmt;
use std::path::Path;

use hermstable::ensembles::EnsembleSpec;
use hermstable::limits::{CfComparison, ShiftRule};
use hermstable::spectral::SpectralMeasure;
use serde::de::{DeserializeOwned, Error as _};
use serde::{Deserialize, Deserializer};
use serde_json::{Map, Value};

pub const SCHEMA_VERSION: &str = "1";

/// A configuration problem, located by a dotted field path.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() || self.path == "." {
            write!(f, "config: {}", self.message)
        } else {
            write!(f, "config field `{}`: {}", self.path, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Sample,
    Cf,
    DpCheck,
    Clt,
    Tail,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Sample => "sample",
            Command::Cf => "cf",
            Command::DpCheck => "dp-check",
            Command::Clt => "clt",
            Command::Tail => "tail",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: String,
    pub seed: u64,
    pub dim: usize,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default, deserialize_with = "optional_kind_tagged")]
    pub source: Option<SourceSpec>,
    #[serde(default)]
    pub cf: Option<CfSection>,
    #[serde(default)]
    pub dp_check: Option<DpSection>,
    #[serde(default)]
    pub clt: Option<CltSection>,
    #[serde(default)]
    pub tail: Option<TailSection>,
}

/// Random-matrix source to sample from.
#[derive(Debug, Clone, Deserialize)]
///
/// Written as `{"kind": "<variant>", ...fields}`.
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceSpec {
    Elliptical {
        sigma: f64,
        kappa: f64,
        alpha: f64,
        #[serde(default)]
        y0: f64,
    },
    Gaussian {
        sigma: f64,
        kappa: f64,
    },
    Gue {},
    Dirac {
        alpha: f64,
        gamma: f64,
        p: f64,
        #[serde(default)]
        y0: f64,
    },
    DoaPareto {
        alpha: f64,
        measure: SpectralMeasure,
    },
    Bounded {},
    /// `P(X = 2^j) = 2^{−j}` as 1×1 matrices.
    Dyadic {},
}

/// Theoretical stable ensemble `S(α, γH, y₀ I)`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub alpha: f64,
    pub gamma: f64,
    #[serde(default)]
    pub y0: f64,
    pub measure: SpectralMeasure,
}

impl EnsembleConfig {
    pub fn spec(&self, dim: usize) -> hermstable::Result<EnsembleSpec> {
        EnsembleSpec::new(self.alpha, self.gamma, self.y0, dim, self.measure.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CfForm {
    Matrix,
    Diag,
    Eig,
    GAlpha,
    EmpiricalMatrix,
    EmpiricalDiag,
    Spherical,
}

impl CfForm {
    pub fn name(self) -> &'static str {
        match self {
            CfForm::Matrix => "matrix",
            CfForm::Diag => "diag",
            CfForm::Eig => "eig",
            CfForm::GAlpha => "g_alpha",
            CfForm::EmpiricalMatrix => "empirical_matrix",
            CfForm::EmpiricalDiag => "empirical_diag",
            CfForm::Spherical => "spherical",
        }
    }

    pub fn is_empirical(self) -> bool {
        matches!(
            self,
            CfForm::EmpiricalMatrix | CfForm::EmpiricalDiag | CfForm::Spherical
        )
    }
}

fn default_sigmas() -> f64 {
    4.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CfSection {
    pub ensemble: EnsembleConfig,
    /// Evaluation points `s` (diagonal of `S`).
    pub points: Vec<Vec<f64>>,
    pub forms: Vec<CfForm>,
    pub n_mc: usize,
    /// Agreement threshold in combined standard errors.
    #[serde(default = "default_sigmas")]
    pub agreement_sigmas: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DpSection {
    pub grid: Vec<Vec<f64>>,
    pub tolerance: f64,
}

fn default_target_n_mc() -> usize {
    20_000
}

/// Target law of a CLT experiment.
#[derive(Debug, Clone, Deserialize)]
///
/// Written as `{"type": "<variant>", ...fields}`.
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetSpec {
    Stable {
        alpha: f64,
        gamma: f64,
        #[serde(default)]
        y0: f64,
        measure: SpectralMeasure,
        /// Monte Carlo size for measures without a closed form.
        #[serde(default = "default_target_n_mc")]
        n_mc: usize,
    },
    Gaussian {
        sigma2: f64,
        kappa: f64,
    },
    /// Gaussian whose `(σ², κ)` are estimated from `n_pilot` single copies of
    /// the source.
    GaussianFromSource {
        n_pilot: usize,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CltSection {
    pub alpha: f64,
    pub b: f64,
    pub shift: ShiftRule,
    pub m_schedule: Vec<usize>,
    pub s_grid: Vec<Vec<f64>>,
    pub comparison: CfComparison,
    #[serde(deserialize_with = "type_tagged")]
    pub target: TargetSpec,
    #[serde(default)]
    pub max_final_distance: Option<f64>,
    #[serde(default)]
    pub require_nonincreasing: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailRatioSection {
    pub k: f64,
    pub r_grid: Vec<f64>,
    /// Expected limit; checked against the 99% interval at the largest
    /// unmasked `R`.
    #[serde(default)]
    pub expect: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HillSection {
    pub k_order: usize,
    #[serde(default)]
    pub expect_range: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentSection {
    pub exponents: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub r_grid: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianDoaSection {
    pub s: Vec<f64>,
    pub t: Vec<f64>,
    pub r_grid: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DyadicSection {
    pub k: f64,
    pub j_max: u32,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailSection {
    #[serde(default)]
    pub tail_ratio: Option<TailRatioSection>,
    #[serde(default)]
    pub hill: Option<HillSection>,
    #[serde(default)]
    pub moments: Option<MomentSection>,
    #[serde(default)]
    pub strict_alpha1: Option<GridSection>,
    #[serde(default)]
    pub gaussian_doa: Option<GaussianDoaSection>,
    #[serde(default)]
    pub dyadic: Option<DyadicSection>,
}

/// Separates a nested field path from the message in errors raised inside
/// [`tagged`], so [`parse_config`] can report the full path.
const SUBPATH: char = '\u{1f}';

fn nested(path: &str, msg: &str) -> String {
    match msg.strip_prefix(SUBPATH).and_then(|m| m.split_once(SUBPATH)) {
        Some((inner, rest)) => format!("{SUBPATH}{path}.{inner}{SUBPATH}{rest}"),
        None => format!("{SUBPATH}{path}{SUBPATH}{msg}"),
    }
}

/// Reads `{"<tag>": "variant", ...fields}` by rewriting it to the externally
/// tagged `{"variant": {...fields}}`, which keeps field paths in errors.
fn tagged<T: DeserializeOwned>(v: Value, tag: &str) -> Result<T, String> {
    let Value::Object(mut m) = v else {
        return Err(format!("expected an object with a `{tag}` field"));
    };
    let kind = match m.remove(tag) {
        Some(Value::String(k)) => k,
        Some(_) => return Err(nested(tag, "must be a string")),
        None => return Err(format!("missing field `{tag}`")),
    };
    let mut outer = Map::new();
    outer.insert(kind, Value::Object(m));
    serde_path_to_error::deserialize(Value::Object(outer)).map_err(|e| {
        let path = e.path().to_string();
        let msg = e.into_inner().to_string();
        match path.split_once('.') {
            Some((_, rest)) if !rest.is_empty() => nested(rest, &msg),
            _ => nested(tag, &msg),
        }
    })
}

fn optional_kind_tagged<'de, D: Deserializer<'de>, T: DeserializeOwned>(d: D) -> Result<Option<T>, D::Error> {
    Option::<Value>::deserialize(d)?
        .map(|v| tagged(v, "kind").map_err(D::Error::custom))
        .transpose()
}

fn type_tagged<'de, D: Deserializer<'de>, T: DeserializeOwned>(d: D) -> Result<T, D::Error> {
    tagged(Value::deserialize(d)?, "type").map_err(D::Error::custom)
}

/// Parses a config from JSON text, returning the typed config and the raw
/// JSON value (echoed into reports).
pub fn parse_config(text: &str) -> Result<(RunConfig, Value), ConfigError> {
    let raw: Value = serde_json::from_str(text).map_err(|e| ConfigError::new(".", format!("invalid JSON: {e}")))?;
    let cfg: RunConfig = serde_path_to_error::deserialize(&raw).map_err(|e| {
        let path = e.path().to_string();
        let msg = e.into_inner().to_string();
        match msg.strip_prefix(SUBPATH).and_then(|m| m.split_once(SUBPATH)) {
            Some((inner, rest)) => ConfigError::new(format!("{path}.{inner}"), rest),
            None => ConfigError::new(path, msg),
        }
    })?;
    Ok((cfg, raw))
}

pub fn load_config(path: &Path) -> Result<(RunConfig, Value), ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::new(".", format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}

fn finite(path: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::new(path, "must be finite"))
    }
}

fn positive(path: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::new(path, format!("must be positive, got {v}")))
    }
}

fn points(path: &str, pts: &[Vec<f64>], dim: usize) -> Result<(), ConfigError> {
    if pts.is_empty() {
        return Err(ConfigError::new(path, "must contain at least one point"));
    }
    for (i, p) in pts.iter().enumerate() {
        if p.len() != dim {
            return Err(ConfigError::new(
                format!("{path}[{i}]"),
                format!("has length {}, expected dim = {dim}", p.len()),
            ));
        }
        if p.iter().any(|x| !x.is_finite()) {
            return Err(ConfigError::new(format!("{path}[{i}]"), "entries must be finite"));
        }
    }
    Ok(())
}

fn ascending(path: &str, grid: &[f64]) -> Result<(), ConfigError> {
    if grid.is_empty() {
        return Err(ConfigError::new(path, "must be nonempty"));
    }
    for (i, r) in grid.iter().enumerate() {
        positive(&format!("{path}[{i}]"), *r)?;
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(ConfigError::new(path, "must be strictly ascending"));
    }
    Ok(())
}

/// Maps a core parameter error to a config path under `prefix`.
pub fn core_to_config(prefix: &str, e: hermstable::Error) -> ConfigError {
    match e {
        hermstable::Error::Parameter { name, reason } => ConfigError::new(format!("{prefix}.{name}"), reason),
        other => ConfigError::new(prefix, other.to_string()),
    }
}

fn check_measure(path: &str, m: &SpectralMeasure, dim: usize) -> Result<(), ConfigError> {
    m.validate(dim).map_err(|e| core_to_config(path, e))
}

impl SourceSpec {
    fn validate(&self, dim: usize) -> Result<(), ConfigError> {
        let p = "source";
        match self {
            SourceSpec::Elliptical {
                sigma,
                kappa,
                alpha,
                y0,
            } => hermstable::ensembles::elliptical_draw_fn(*sigma, *kappa, *alpha, *y0, dim)
                .map(|_| ())
                .map_err(|e| core_to_config(p, e)),
            SourceSpec::Gaussian { sigma, kappa } => hermstable::ensembles::gaussian_draw_fn(*sigma, *kappa, dim)
                .map(|_| ())
                .map_err(|e| core_to_config(p, e)),
            SourceSpec::Gue {} | SourceSpec::Bounded {} => Ok(()),
            SourceSpec::Dirac { alpha, gamma, p: w, y0 } => {
                hermstable::ensembles::dirac_draw_fn(*alpha, *gamma, *w, *y0, dim)
                    .map(|_| ())
                    .map_err(|e| core_to_config(p, e))
            }
            SourceSpec::DoaPareto { alpha, measure } => {
                check_measure("source.measure", measure, dim)?;
                hermstable::ensembles::doa_pareto_draw_fn(measure, *alpha, dim)
                    .map(|_| ())
                    .map_err(|e| core_to_config(p, e))
            }
            SourceSpec::Dyadic {} => {
                if dim != 1 {
                    Err(ConfigError::new("dim", "the dyadic source is scalar; dim must be 1"))
                } else {
                    Ok(())
                }
            }
        }
    }
}

impl RunConfig {
    fn require_source(&self) -> Result<(&SourceSpec, usize), ConfigError> {
        let src = self
            .source
            .as_ref()
            .ok_or_else(|| ConfigError::new("source", "required for this command"))?;
        let n = self
            .n
            .ok_or_else(|| ConfigError::new("n", "required for this command"))?;
        if n == 0 {
            return Err(ConfigError::new("n", "must be positive"));
        }
        src.validate(self.dim)?;
        Ok((src, n))
    }

    /// Semantic checks for `cmd`, run before any computation.
    pub fn validate(&self, cmd: Command) -> Result<(), ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ConfigError::new(
                "schema_version",
                format!(
                    "unsupported version {:?}, expected \"{SCHEMA_VERSION}\"",
                    self.schema_version
                ),
            ));
        }
        if self.dim == 0 {
            return Err(ConfigError::new("dim", "must be at least 1"));
        }
        match cmd {
            Command::Sample => {
                self.require_source()?;
            }
            Command::Cf => {
                let cf = self
                    .cf
                    .as_ref()
                    .ok_or_else(|| ConfigError::new("cf", "section required"))?;
                cf.ensemble
                    .spec(self.dim)
                    .map_err(|e| core_to_config("cf.ensemble", e))?;
                points("cf.points", &cf.points, self.dim)?;
                if cf.forms.is_empty() {
                    return Err(ConfigError::new("cf.forms", "must list at least one form"));
                }
                if cf.n_mc == 0 {
                    return Err(ConfigError::new("cf.n_mc", "must be positive"));
                }
                positive("cf.agreement_sigmas", cf.agreement_sigmas)?;
                if cf.forms.iter().any(|f| f.is_empirical()) {
                    self.require_source()?;
                }
                if cf.forms.contains(&CfForm::Eig) && self.dim > 8 {
                    return Err(ConfigError::new("cf.forms", "the eig form supports dim <= 8"));
                }
            }
            Command::DpCheck => {
                let dp = self
                    .dp_check
                    .as_ref()
                    .ok_or_else(|| ConfigError::new("dp_check", "section required"))?;
                points("dp_check.grid", &dp.grid, self.dim)?;
                if !(dp.tolerance >= 0.0 && dp.tolerance.is_finite()) {
                    return Err(ConfigError::new("dp_check.tolerance", "must be a nonnegative number"));
                }
                self.require_source()?;
            }
            Command::Clt => {
                let c = self
                    .clt
                    .as_ref()
                    .ok_or_else(|| ConfigError::new("clt", "section required"))?;
                hermstable::stable1d::StableParams1D::new(c.alpha, 0.0, 1.0, 0.0)
                    .map_err(|e| core_to_config("clt", e))?;
                positive("clt.b", c.b)?;
                if c.m_schedule.is_empty() {
                    return Err(ConfigError::new("clt.m_schedule", "must be nonempty"));
                }
                if let Some(i) = c.m_schedule.iter().position(|&m| m == 0) {
                    return Err(ConfigError::new(format!("clt.m_schedule[{i}]"), "must be positive"));
                }
                points("clt.s_grid", &c.s_grid, self.dim)?;
                if c.shift == ShiftRule::MeanBased && c.alpha <= 1.0 {
                    return Err(ConfigError::new("clt.shift", "mean_based centering needs alpha > 1"));
                }
                if let CfComparison::ScaleCancelling { s0 } = &c.comparison {
                    points("clt.comparison.scale_cancelling.s0", std::slice::from_ref(s0), self.dim)?;
                }
                if let Some(d) = c.max_final_distance {
                    positive("clt.max_final_distance", d)?;
                }
                match &c.target {
                    TargetSpec::Stable {
                        alpha,
                        gamma,
                        y0,
                        measure,
                        n_mc,
                    } => {
                        EnsembleSpec::new(*alpha, *gamma, *y0, self.dim, measure.clone())
                            .map_err(|e| core_to_config("clt.target", e))?;
                        if *n_mc == 0 {
                            return Err(ConfigError::new("clt.target.n_mc", "must be positive"));
                        }
                    }
                    TargetSpec::Gaussian { sigma2, kappa } => {
                        positive("clt.target.sigma2", *sigma2)?;
                        finite("clt.target.kappa", *kappa)?;
                        if sigma2 + self.dim as f64 * kappa <= 0.0 {
                            return Err(ConfigError::new(
                                "clt.target.kappa",
                                "sigma2 + dim * kappa must be positive",
                            ));
                        }
                    }
                    TargetSpec::GaussianFromSource { n_pilot } => {
                        if *n_pilot < 2 {
                            return Err(ConfigError::new("clt.target.n_pilot", "must be at least 2"));
                        }
                    }
                }
                let (_, n) = self.require_source()?;
                if n < 2 {
                    return Err(ConfigError::new("n", "at least two sums are needed"));
                }
            }
            Command::Tail => {
                let t = self
                    .tail
                    .as_ref()
                    .ok_or_else(|| ConfigError::new("tail", "section required"))?;
                if let Some(tr) = &t.tail_ratio {
                    positive("tail.tail_ratio.k", tr.k)?;
                    ascending("tail.tail_ratio.r_grid", &tr.r_grid)?;
                    if let Some(e) = tr.expect {
                        finite("tail.tail_ratio.expect", e)?;
                    }
                }
                if let Some(h) = &t.hill {
                    if h.k_order < 10 {
                        return Err(ConfigError::new("tail.hill.k_order", "must be at least 10"));
                    }
                    if let Some([lo, hi]) = h.expect_range {
                        if !(lo <= hi) {
                            return Err(ConfigError::new(
                                "tail.hill.expect_range",
                                "lower bound exceeds upper bound",
                            ));
                        }
                    }
                }
                if let Some(m) = &t.moments {
                    if m.exponents.is_empty() {
                        return Err(ConfigError::new("tail.moments.exponents", "must be nonempty"));
                    }
                    for (i, e) in m.exponents.iter().enumerate() {
                        positive(&format!("tail.moments.exponents[{i}]"), *e)?;
                    }
                }
                if let Some(g) = &t.strict_alpha1 {
                    ascending("tail.strict_alpha1.r_grid", &g.r_grid)?;
                }
                if let Some(g) = &t.gaussian_doa {
                    points("tail.gaussian_doa.s", std::slice::from_ref(&g.s), self.dim)?;
                    points("tail.gaussian_doa.t", std::slice::from_ref(&g.t), self.dim)?;
                    ascending("tail.gaussian_doa.r_grid", &g.r_grid)?;
                }
                if let Some(d) = &t.dyadic {
                    positive("tail.dyadic.k", d.k)?;
                    if d.j_max < 10 {
                        return Err(ConfigError::new("tail.dyadic.j_max", "must be at least 10"));
                    }
                }
                let needs_batch = t.tail_ratio.is_some()
                    || t.hill.is_some()
                    || t.moments.is_some()
                    || t.strict_alpha1.is_some()
                    || t.gaussian_doa.is_some();
                if needs_batch {
                    let (_, n) = self.require_source()?;
                    if let Some(h) = &t.hill {
                        if 2 * h.k_order > n {
                            return Err(ConfigError::new(
                                "tail.hill.k_order",
                                format!("must be at most n/2 = {}", n / 2),
                            ));
                        }
                    }
                } else if t.dyadic.is_none() {
                    return Err(ConfigError::new("tail", "no diagnostic requested"));
                }
            }
        }
        Ok(())
    }
}
