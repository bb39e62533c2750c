//! Run reports and the canonical JSON form every artifact is written in.
//!
//! Reports are meant to be diffed: two runs of the same scenario must produce
//! byte-identical files once the `timings` section is dropped. The writer
//! therefore fixes everything the default serializer leaves open: key order,
//! float formatting, indentation, and the trailing newline.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use gaussot::inequalities::InequalityReport;
use gaussot::transport::PushforwardCheck;

use crate::scenario::ScenarioFile;

/// One solved map inside a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MapReport {
    /// "primary" for `solve`, "secondary" for `solve2`.
    pub role: String,
    pub backend: String,
    pub dim: usize,
    /// Quadratic cost ∫|T(x)−x|² against the map's source measure.
    pub w2_sq: f64,
    pub pushforward: PushforwardCheck,
}

/// Worst scaled truncation bound across the run, with per-verification detail.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruncationSummary {
    pub worst_scaled: f64,
    pub per_verification: BTreeMap<String, f64>,
}

/// Wall-clock timings in milliseconds. The only top-level section allowed to
/// differ between repeated runs of the same scenario.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Timings {
    pub solve_ms: f64,
    pub verify_ms: BTreeMap<String, f64>,
    pub total_ms: f64,
}

/// Everything a verification run produces.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub artifact_version: String,
    /// Echo of the validated scenario file.
    pub scenario: ScenarioFile,
    pub maps: Vec<MapReport>,
    /// Sorted by verification name.
    pub verifications: Vec<InequalityReport>,
    pub truncation: TruncationSummary,
    pub timings: Timings,
}

impl RunReport {
    /// True when every verification verdict is on the good side.
    pub fn all_hold(&self) -> bool {
        self.verifications.iter().all(InequalityReport::holds)
    }
}

/// Serializes a value into canonical JSON: object keys sorted, floats printed
/// as `{:.16e}` (17 significant digits, which round-trips every f64 exactly),
/// integers printed plainly, two-space indentation, trailing newline.
pub fn canonical_json<T: Serialize>(value: &T) -> serde_json::Result<String> {
    let tree = serde_json::to_value(value)?;
    let mut out = String::new();
    write_value(&mut out, &tree, 0);
    out.push('\n');
    Ok(out)
}

fn push_indent(out: &mut String, levels: usize) {
    for _ in 0..levels {
        out.push_str("  ");
    }
}

fn write_value(out: &mut String, value: &Value, indent: usize) {
    match value {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => write_number(out, n),
        Value::String(s) => {
            let quoted = serde_json::to_string(s).expect("strings always serialize");
            out.push_str(&quoted);
        }
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push_str("[\n");
            for (i, item) in items.iter().enumerate() {
                push_indent(out, indent + 1);
                write_value(out, item, indent + 1);
                if i + 1 < items.len() {
                    out.push(',');
                }
                out.push('\n');
            }
            push_indent(out, indent);
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push_str("{\n");
            for (i, key) in keys.iter().enumerate() {
                push_indent(out, indent + 1);
                let quoted = serde_json::to_string(key).expect("strings always serialize");
                out.push_str(&quoted);
                out.push_str(": ");
                write_value(out, &map[key.as_str()], indent + 1);
                if i + 1 < keys.len() {
                    out.push(',');
                }
                out.push('\n');
            }
            push_indent(out, indent);
            out.push('}');
        }
    }
}

fn write_number(out: &mut String, n: &serde_json::Number) {
    // serde_json keeps the integer/float distinction from the Rust side, so
    // counts stay plain while measured quantities always carry an exponent.
    if let Some(i) = n.as_i64() {
        write!(out, "{i}").expect("writing to a String cannot fail");
    } else if let Some(u) = n.as_u64() {
        write!(out, "{u}").expect("writing to a String cannot fail");
    } else {
        let f = n.as_f64().expect("JSON numbers are i64, u64, or f64");
        write!(out, "{f:.16e}").expect("writing to a String cannot fail");
    }
}

/// Drops the `timings` key from a parsed report so two runs can be compared.
pub fn strip_timings(mut value: Value) -> Value {
    if let Value::Object(map) = &mut value {
        map.remove("timings");
    }
    value
}
