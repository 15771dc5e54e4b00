//! JSON report documents. Every expectation is rounded to 12 significant
//! digits so report files are byte-stable across runs and platforms.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde_json::{json, Map, Value};

use hvsim_core::density::FactorizationReport;
use hvsim_core::inequality::{ChshResult, CorrelationReport};
use hvsim_core::stations::AuditReport;
use hvsim_core::SourceSpace;

use crate::config::RunConfig;
use crate::error::{HarnessError, Result};

/// `x` rounded to 12 significant digits.
pub fn sig12(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return if x == 0.0 { 0.0 } else { x };
    }
    format!("{x:.11e}").parse().expect("formatted float parses")
}

/// 12-significant-digit decimal text for tables and CSV rows.
pub fn fmt12(x: f64) -> String {
    format!("{}", sig12(x))
}

/// JSON number at 12 significant digits; `null` for NaN or infinities.
pub fn num(x: f64) -> Value {
    serde_json::Number::from_f64(sig12(x))
        .map(Value::Number)
        .unwrap_or(Value::Null)
}

/// Header object shared by every report.
pub fn header(cfg: &RunConfig) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("command".into(), json!(cfg.command));
    m.insert("config".into(), serde_json::to_value(cfg).expect("config serializes"));
    if !cfg.deterministic {
        m.insert("generated_unix".into(), json!(unix_now()));
    }
    m
}

pub fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Comment lines for CSV and TOML outputs: the config echo, plus a
/// timestamp unless the run is deterministic.
pub fn comment_lines(cfg: &RunConfig) -> String {
    let mut s = format!(
        "# config: {}\n",
        serde_json::to_string(cfg).expect("config serializes")
    );
    if !cfg.deterministic {
        s.push_str(&format!("# generated: {}\n", unix_now()));
    }
    s
}

fn by_label(source: &SourceSpace, values: &[f64]) -> Value {
    Value::Object(
        source
            .labels()
            .iter()
            .zip(values)
            .map(|(l, v)| (l.clone(), num(*v)))
            .collect(),
    )
}

pub fn correlation(source: &SourceSpace, r: &CorrelationReport) -> Value {
    json!({
        "a": num(r.a.angle()),
        "b": num(r.b.angle()),
        "method": r.method.name(),
        "trials": r.trials,
        "e_ab": num(r.e_ab),
        "std_error": num(r.std_error),
        "marginal_a": num(r.marginal_a),
        "marginal_b": num(r.marginal_b),
        "cond_a": by_label(source, &r.cond_a),
        "cond_b": by_label(source, &r.cond_b),
    })
}

pub fn factorization(r: &FactorizationReport) -> Value {
    let worst = r.worst.map(|w| {
        json!({
            "lambda": w.condition.lambda,
            "m": w.condition.slot.map(|s| s + 1),
            "lambda_star": w.star,
            "lambda_dblstar": w.dblstar,
            "joint": num(w.joint),
            "product": num(w.product),
        })
    });
    json!({
        "mode": r.mode.name(),
        "tol": num(r.tol),
        "max_deviation": num(r.max_deviation),
        "max_total_variation": num(r.max_total_variation),
        "pass": r.pass,
        "conditions": r.deviations.len(),
        "worst": worst,
    })
}

pub fn chsh(source: &SourceSpace, r: &ChshResult) -> Value {
    json!({
        "angles": r.settings.angles().iter().map(|x| num(*x)).collect::<Vec<_>>(),
        "correlations": r.correlations.iter().map(|c| correlation(source, c)).collect::<Vec<_>>(),
        "s_value": num(r.s_value),
        "local_bound": num(r.local_bound),
        "tol": num(r.tol),
        "within_local_bound": r.within_local_bound,
    })
}

pub fn audit(r: &AuditReport) -> Value {
    json!({
        "trials_checked": r.trials_checked,
        "perturbations": r.perturbations,
        "mismatches": r.mismatches,
        "pass": r.pass,
        "first_mismatch": r.first_mismatch.map(|m| json!({
            "trial": m.trial,
            "station": m.station.to_string(),
            "remote_angle": num(m.remote_angle),
            "expected": [m.expected.value, m.expected.outcome.value()],
            "found": [m.found.value, m.found.outcome.value()],
        })),
    })
}

pub fn to_text(doc: &Map<String, Value>) -> String {
    let mut s = serde_json::to_string_pretty(doc).expect("json serializes");
    s.push('\n');
    s
}

/// Writes to `path`, or to stdout when no path is given.
pub fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| HarnessError::io(p, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
