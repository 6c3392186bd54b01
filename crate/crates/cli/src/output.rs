//! Bit-stable CSV emission.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use strobe_core::tcl2::MetricRow;

use crate::error::CliError;

pub const METRIC_COLUMNS: [&str; 7] = ["N", "t", "P_g", "d_init", "trace_dev", "herm_dev", "min_eig"];

/// A float with 17 significant digits.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Metric rows every `stride` cycles plus optional extra per-cycle columns.
///
/// `t` is reported in units of `period`.
pub fn metrics_csv(rows: &[MetricRow<f64>], period: f64, stride: usize, extra: &[(&str, &[f64])]) -> String {
    let mut out = String::new();
    let header: Vec<&str> = METRIC_COLUMNS.iter().copied().chain(extra.iter().map(|(h, _)| *h)).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for r in rows.iter().filter(|r| r.n % stride.max(1) == 0) {
        let _ = write!(
            out,
            "{},{},{},{},{},{},{}",
            r.n,
            fmt_float(r.t * period),
            fmt_float(r.p_g),
            fmt_float(r.d_init),
            fmt_float(r.trace_dev),
            fmt_float(r.herm_dev),
            fmt_float(r.min_eig)
        );
        for (_, col) in extra {
            out.push(',');
            out.push_str(&fmt_float(col[r.n]));
        }
        out.push('\n');
    }
    out
}

pub fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(n: usize) -> MetricRow<f64> {
        MetricRow { n, t: n as f64, p_g: 1.0, d_init: 0.0, trace_dev: 0.0, herm_dev: 0.0, min_eig: 0.0 }
    }

    #[test]
    fn float_format_has_17_significant_digits() {
        assert_eq!(fmt_float(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_float(0.1).parse::<f64>().unwrap(), 0.1);
        assert_eq!(fmt_float(-2.5), "-2.5000000000000000e0");
    }

    #[test]
    fn stride_filters_rows_and_keeps_header() {
        let rows: Vec<_> = (0..=4).map(row).collect();
        let d = [0.0, 1.0, 2.0, 3.0, 4.0];
        let csv = metrics_csv(&rows, 2.0, 2, &[("d_cross", &d)]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "N,t,P_g,d_init,trace_dev,herm_dev,min_eig,d_cross");
        assert_eq!(lines.len(), 4);
        assert!(lines[2].starts_with("2,4.0000000000000000e0,"));
        assert!(lines[2].ends_with(",2.0000000000000000e0"));
        assert!(!csv.contains('\r'));
    }
}
