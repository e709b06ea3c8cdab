use std::io::{self, Write};
use std::path::{Path, PathBuf};

use mista_core::sim::RunMetrics;
use serde_json::Value;

const SIGNIFICANT_DIGITS: usize = 12;

fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x).parse().unwrap_or(x)
}

/// Rounds every float in place; integers are left alone.
pub fn round_numbers(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            if let Some(r) = n.as_f64().and_then(|x| serde_json::Number::from_f64(round_sig(x))) {
                *n = r;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_numbers),
        Value::Object(map) => map.values_mut().for_each(round_numbers),
        _ => {}
    }
}

pub fn emit(value: &Value) {
    let mut v = value.clone();
    round_numbers(&mut v);
    let text = serde_json::to_string_pretty(&v).expect("JSON values always serialize");
    let _ = writeln!(io::stdout().lock(), "{text}");
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut name = prefix.file_name().map(|s| s.to_os_string()).unwrap_or_default();
    name.push(suffix);
    prefix.with_file_name(name)
}

/// Writes `<prefix>_trajectory.csv` and `<prefix>_histogram.csv`.
pub fn write_csv(prefix: &Path, m: &RunMetrics) -> io::Result<()> {
    let mut w = csv::Writer::from_path(with_suffix(prefix, "_trajectory.csv"))?;
    w.write_record(["slot", "k", "mean_age"])?;
    for p in &m.k_trajectory {
        w.serialize((p.slot, p.k, p.mean_age))?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(with_suffix(prefix, "_histogram.csv"))?;
    w.write_record(["m", "frequency"])?;
    for (m, f) in m.active_count_histogram.iter().enumerate() {
        w.serialize((m, f))?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding() {
        assert_eq!(round_sig(0.1 + 0.2), 0.3);
        assert_eq!(round_sig(1.0 / 3.0), 0.333333333333);
        let mut v = serde_json::json!({"a": [2.0 / 7.0, 3], "b": {"c": 1e-20 / 3.0}});
        round_numbers(&mut v);
        assert_eq!(v["a"][0], 0.285714285714);
        assert_eq!(v["a"][1], 3);
    }
}
