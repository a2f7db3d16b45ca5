//! CSV and plot-data writers. Every CSV starts with a schema comment line.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;

pub const SCHEMA_VERSION: u32 = 1;

/// Header comment naming the table kind and schema version.
pub fn schema_line(kind: &str) -> String {
    format!("# noma-otfs {kind} schema v{SCHEMA_VERSION}\n")
}

/// Format a float so it round-trips exactly and prints identically on every run.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.12e}")
    } else {
        v.to_string()
    }
}

/// Two-column gnuplot data: rate and empirical CDF.
pub fn cdf_data(label: &str, points: &[(f64, f64)]) -> String {
    let mut s = format!("# {label}\n# rate_bps_hz cdf\n");
    for (x, y) in points {
        let _ = writeln!(s, "{} {}", fmt_f64(*x), fmt_f64(*y));
    }
    s
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    std::fs::write(path, contents)?;
    Ok(())
}
