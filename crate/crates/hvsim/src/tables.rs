//! CSV formats: joint tables, trial streams and CHSH rows.
//!
//! Leading `#` lines carry metadata; joint tables record their settings and
//! axes as `# key=value` lines so an export can be imported on its own.

use std::io::Write;

use hvsim_core::density::{CellKey, JointTable};
use hvsim_core::inequality::ChshResult;
use hvsim_core::stations::TrialRecord;
use hvsim_core::{Setting, SourceSpace};

use crate::error::{HarnessError, Result};
use crate::report::fmt12;

pub const JOINT_HEADER: [&str; 5] = ["lambda_star", "lambda_dblstar", "lambda", "m", "prob"];
pub const TRIAL_HEADER: [&str; 9] = [
    "trial",
    "m",
    "a",
    "b",
    "lambda",
    "lambda_star",
    "lambda_dblstar",
    "A",
    "B",
];
pub const CHSH_HEADER: [&str; 10] = [
    "model",
    "a",
    "aprime",
    "b",
    "bprime",
    "method",
    "trials",
    "seed",
    "S",
    "within_bound",
];

fn finish(writer: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = writer
        .into_inner()
        .map_err(|e| HarnessError::Descriptor(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Probabilities are written in shortest round-trip form so imports are exact.
pub fn write_joint_table(table: &JointTable, preamble: &str) -> Result<String> {
    let (a, b) = table.settings();
    let (v1, v2, l, n) = table.axes();
    let mut out = String::from(preamble);
    out.push_str(&format!("# a={}\n# b={}\n# axes={v1},{v2},{l},{n}\n", a.angle(), b.angle()));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(JOINT_HEADER)?;
    for (k, p) in table.entries() {
        w.write_record([
            k.star.to_string(),
            k.dblstar.to_string(),
            k.lambda.to_string(),
            (k.slot + 1).to_string(),
            p.to_string(),
        ])?;
    }
    out.push_str(&finish(w)?);
    Ok(out)
}

fn bad(msg: impl Into<String>) -> HarnessError {
    HarnessError::Descriptor(msg.into())
}

/// Reads a joint table. Missing `# axes` are inferred from the cells and
/// missing settings default to angle 0.
pub fn read_joint_table(text: &str) -> Result<JointTable> {
    let mut a = 0.0;
    let mut b = 0.0;
    let mut axes: Option<(u16, u16, usize, usize)> = None;
    for line in text.lines().filter_map(|l| l.trim().strip_prefix('#')) {
        let Some((key, value)) = line.trim().split_once('=') else {
            continue;
        };
        let value = value.trim();
        match key.trim() {
            "a" => a = value.parse().map_err(|_| bad(format!("bad angle `{value}`")))?,
            "b" => b = value.parse().map_err(|_| bad(format!("bad angle `{value}`")))?,
            "axes" => {
                let parts: Vec<&str> = value.split(',').map(str::trim).collect();
                let [v1, v2, l, n] = parts[..] else {
                    return Err(bad(format!("bad axes `{value}`")));
                };
                let p = |s: &str| s.parse::<usize>().map_err(|_| bad(format!("bad axes `{value}`")));
                axes = Some((p(v1)? as u16, p(v2)? as u16, p(l)?, p(n)?));
            }
            _ => {}
        }
    }
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header != JOINT_HEADER {
        return Err(bad(format!("joint table header {header:?}, expected {}", JOINT_HEADER.join(","))));
    }
    let mut cells = Vec::new();
    for record in reader.records() {
        let r = record?;
        let int = |i: usize| {
            r[i].parse::<usize>()
                .map_err(|_| bad(format!("bad integer `{}` in column {}", &r[i], JOINT_HEADER[i])))
        };
        let m = int(3)?;
        if m == 0 {
            return Err(bad("slot labels start at 1"));
        }
        let p: f64 = r[4].parse().map_err(|_| bad(format!("bad probability `{}`", &r[4])))?;
        cells.push((
            CellKey {
                star: int(0)? as u16,
                dblstar: int(1)? as u16,
                lambda: int(2)?,
                slot: m - 1,
            },
            p,
        ));
    }
    let axes = axes.unwrap_or_else(|| {
        cells.iter().fold((1, 1, 1, 1), |(v1, v2, l, n), (k, _)| {
            (
                v1.max(k.star + 1),
                v2.max(k.dblstar + 1),
                l.max(k.lambda + 1),
                n.max(k.slot + 1),
            )
        })
    });
    Ok(JointTable::from_entries(Setting::s1(a), Setting::s2(b), axes, cells)?)
}

pub fn write_trials<W: Write>(
    out: W,
    source: &SourceSpace,
    records: &[TrialRecord],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRIAL_HEADER)?;
    for r in records {
        w.write_record([
            r.trial.to_string(),
            (r.slot + 1).to_string(),
            fmt12(r.a),
            fmt12(r.b),
            source.labels()[r.lambda].clone(),
            r.lambda_star.to_string(),
            r.lambda_dblstar.to_string(),
            r.outcome_a.value().to_string(),
            r.outcome_b.value().to_string(),
        ])?;
    }
    w.flush().map_err(|e| HarnessError::io("trial stream", e))?;
    Ok(())
}

/// One CHSH evaluation as a CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct ChshRow {
    pub model: String,
    pub angles: [f64; 4],
    pub method: String,
    pub trials: u64,
    pub seed: u64,
    pub s_value: f64,
    pub within_bound: bool,
}

impl ChshRow {
    pub fn from_result(model: &str, seed: u64, r: &ChshResult) -> ChshRow {
        ChshRow {
            model: model.to_string(),
            angles: r.settings.angles(),
            method: r.correlations[0].method.name().to_string(),
            trials: r.correlations[0].trials,
            seed,
            s_value: r.s_value,
            within_bound: r.within_local_bound,
        }
    }
}

pub fn chsh_rows(rows: &[ChshRow], preamble: &str) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CHSH_HEADER)?;
    for r in rows {
        let [a, a2, b, b2] = r.angles;
        w.write_record([
            r.model.clone(),
            fmt12(a),
            fmt12(a2),
            fmt12(b),
            fmt12(b2),
            r.method.clone(),
            r.trials.to_string(),
            r.seed.to_string(),
            fmt12(r.s_value),
            r.within_bound.to_string(),
        ])?;
    }
    Ok(format!("{preamble}{}", finish(w)?))
}
