//! Report and CSV writers.
//!
//! Every JSON report keeps its volatile fields (timestamp, wall clock) in a
//! `run_meta` object on the first line; everything after that line is a
//! deterministic function of the config and seed.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::{json, Map, Value};

/// One pass/fail decision with the statistic and threshold it used.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub statistic: f64,
    pub threshold: f64,
    /// How `statistic` is compared with `threshold`.
    pub rule: String,
    pub passed: bool,
}

impl Check {
    pub fn at_most(name: impl Into<String>, statistic: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            statistic,
            threshold,
            rule: "statistic <= threshold".into(),
            passed: statistic <= threshold,
        }
    }

    pub fn at_least(name: impl Into<String>, statistic: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            statistic,
            threshold,
            rule: "statistic >= threshold".into(),
            passed: statistic >= threshold,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub command: String,
    pub config: Value,
    pub checks: Vec<Check>,
    pub passed: bool,
    pub results: Value,
    pub artifacts: Vec<String>,
}

impl Report {
    pub fn new(command: &str, config: Value) -> Self {
        Self {
            command: command.into(),
            config,
            checks: Vec::new(),
            passed: true,
            results: Value::Object(Map::new()),
            artifacts: Vec::new(),
        }
    }

    pub fn check(&mut self, c: Check) {
        self.passed &= c.passed;
        self.checks.push(c);
    }

    pub fn result(&mut self, key: &str, v: impl Serialize) -> serde_json::Result<()> {
        let v = serde_json::to_value(v)?;
        if let Value::Object(m) = &mut self.results {
            m.insert(key.into(), v);
        }
        Ok(())
    }
}

/// Writes `body` as pretty JSON with a `run_meta` line prepended.
pub fn write_json_with_meta(path: &Path, body: &impl Serialize, elapsed: Duration) -> std::io::Result<()> {
    let ts = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let meta = json!({"timestamp_unix": ts, "wall_clock_seconds": elapsed.as_secs_f64()});
    let body = serde_json::to_string_pretty(body)?;
    let rest = body.strip_prefix('{').unwrap_or(&body);
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "{{\"run_meta\":{meta},{rest}")?;
    writeln!(w)?;
    w.flush()
}

/// `{:.16e}`: 17 significant digits, enough to round-trip an f64.
pub fn f(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn opt(x: Option<f64>) -> String {
    x.map(f).unwrap_or_default()
}

pub fn write_csv(path: &Path, header: &str, rows: &[String]) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{header}")?;
    for r in rows {
        writeln!(w, "{r}")?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn meta_is_confined_to_the_first_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.json");
        let mut r = Report::new("x", json!({"seed": 1}));
        r.check(Check::at_most("c", 0.5, 1.0));
        write_json_with_meta(&p, &r, Duration::from_millis(5)).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let v: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["command"], "x");
        assert!(v["passed"].as_bool().unwrap());
        let first = text.lines().next().unwrap();
        assert!(first.contains("run_meta"));
        assert!(!text.lines().skip(1).any(|l| l.contains("wall_clock")));
    }

    #[test]
    fn floats_keep_seventeen_digits() {
        assert_eq!(f(0.1), "1.0000000000000001e-1");
        assert_eq!(f(0.1).parse::<f64>().unwrap(), 0.1);
        assert_eq!(opt(None), "");
    }
}
