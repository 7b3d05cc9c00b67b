//! CSV reports and columnar plot data.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};

use crate::experiment::{loglog_slope, Report, Row, Timing};

pub const REPORT_FILE: &str = "report.csv";
pub const TIMINGS_FILE: &str = "timings.csv";

pub fn write_rows(path: &Path, rows: &[Row]) -> anyhow::Result<()> {
    write_csv(path, rows, &ROW_HEADER)
}

pub fn write_timings(path: &Path, timings: &[Timing]) -> anyhow::Result<()> {
    write_csv(path, timings, &TIMING_HEADER)
}

fn write_csv<T: serde::Serialize>(path: &Path, items: &[T], header: &[&str]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    if items.is_empty() {
        w.write_record(header)?;
    }
    for item in items {
        w.serialize(item)?;
    }
    w.flush()?;
    Ok(())
}

pub const TIMING_HEADER: [&str; 8] = ["p", "kappa", "n", "T", "L", "R", "method", "wall_time_s"];

/// Column order of `report.csv`.
pub const ROW_HEADER: [&str; 19] = [
    "p",
    "kappa",
    "n",
    "T",
    "L",
    "R",
    "method",
    "status",
    "achieved_gap",
    "certified_gap_lower",
    "certified_gap_upper",
    "theoretical_lower_bound",
    "reference_bound",
    "cg_upper_reference",
    "m_phi",
    "replay",
    "holder_ratio",
    "distortion",
    "effective_radius",
];

pub fn read_rows(path: &Path) -> anyhow::Result<Vec<Row>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
    if header != ROW_HEADER {
        bail!("{} does not have the report header", path.display());
    }
    r.deserialize().map(|row| row.map_err(Into::into)).collect()
}

/// Writes `report.csv` and `timings.csv` into `dir`.
pub fn write_report(dir: &Path, report: &Report) -> anyhow::Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let rows = dir.join(REPORT_FILE);
    let timings = dir.join(TIMINGS_FILE);
    write_rows(&rows, &report.rows)?;
    write_timings(&timings, &report.timings)?;
    Ok((rows, timings))
}

/// `inf`, or the shortest decimal form of `p`.
pub fn p_label(p: f64) -> String {
    if p.is_infinite() {
        "inf".into()
    } else {
        format!("{p}")
    }
}

fn group_key(row: &Row) -> (u64, u64, String) {
    (row.p.to_bits(), row.kappa.to_bits(), row.method.clone())
}

fn cell_or_nan(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:e}"),
        None => "nan".into(),
    }
}

/// Writes one whitespace-separated data file per `(p, kappa, method)` with
/// columns `T n achieved_gap certified_gap_lower lower_bound cg_reference`,
/// plus `summary.dat` with gap-to-bound ratios and bound slopes. Returns the
/// written paths.
pub fn emit_plot_data(rows: &[Row], dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let ok: Vec<&Row> = rows.iter().filter(|r| r.is_ok()).collect();
    if ok.is_empty() {
        bail!("report has no successful rows to plot");
    }
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut groups: BTreeMap<(u64, u64, String), Vec<&Row>> = BTreeMap::new();
    for r in &ok {
        groups.entry(group_key(r)).or_default().push(r);
    }
    let mut written = Vec::new();
    let mut summary = String::from("# p kappa method n T achieved_gap/lower_bound certified_gap_lower/lower_bound\n");
    let mut slopes = String::from("# p kappa method bound_slope_vs_T\n");
    for rows in groups.values() {
        let mut rows = rows.clone();
        rows.sort_by(|a, b| a.cell().key_cmp(&b.cell()));
        let first = rows[0];
        let name = format!("plot_p{}_k{}_{}.dat", p_label(first.p), first.kappa, first.method);
        let mut text = format!(
            "# p = {} kappa = {} method = {}\n# T n achieved_gap certified_gap_lower lower_bound cg_reference\n",
            p_label(first.p),
            first.kappa,
            first.method
        );
        for r in &rows {
            writeln!(
                text,
                "{} {} {} {} {} {}",
                r.horizon,
                r.n,
                cell_or_nan(r.achieved_gap),
                cell_or_nan(r.certified_gap_lower),
                cell_or_nan(r.theoretical_lower_bound),
                cell_or_nan(r.cg_upper_reference)
            )?;
            let bound = r.theoretical_lower_bound.unwrap_or(f64::NAN);
            writeln!(
                summary,
                "{} {} {} {} {} {} {}",
                p_label(r.p),
                r.kappa,
                r.method,
                r.n,
                r.horizon,
                cell_or_nan(r.achieved_gap.map(|g| g / bound)),
                cell_or_nan(r.certified_gap_lower.map(|g| g / bound)),
            )?;
        }
        let ts: Vec<f64> = rows.iter().map(|r| r.horizon as f64).collect();
        let bs: Vec<f64> = rows.iter().map(|r| r.theoretical_lower_bound.unwrap_or(f64::NAN)).collect();
        let slope = match loglog_slope(&ts, &bs) {
            Ok(s) => format!("{s:e}"),
            Err(_) => "nan".into(),
        };
        writeln!(slopes, "{} {} {} {}", p_label(first.p), first.kappa, first.method, slope)?;
        let path = dir.join(name);
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        written.push(path);
    }
    let path = dir.join("summary.dat");
    std::fs::write(&path, format!("{summary}\n{slopes}")).with_context(|| format!("writing {}", path.display()))?;
    written.push(path);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{Cell, MethodName};

    fn row(t: usize, bound: f64) -> Row {
        let cell = Cell { n: 64, horizon: t, p: f64::INFINITY, kappa: 2.0, lipschitz: 1.0, radius: 1.0 };
        let mut r = Row::empty(&cell, MethodName::Cg, "ok".into());
        r.achieved_gap = Some(2.0 * bound);
        r.certified_gap_lower = Some(2.0 * bound);
        r.theoretical_lower_bound = Some(bound);
        r
    }

    #[test]
    fn rows_round_trip_through_csv() {
        let dir = tempfile::tempdir().unwrap();
        let rows = vec![row(4, 0.25), row(8, 0.125)];
        let path = dir.path().join(REPORT_FILE);
        write_rows(&path, &rows).unwrap();
        assert_eq!(read_rows(&path).unwrap(), rows);
    }

    #[test]
    fn empty_report_keeps_header() {
        let dir = tempfile::tempdir().unwrap();
        let (rows, timings) = write_report(dir.path(), &Report::default()).unwrap();
        assert_eq!(std::fs::read_to_string(rows).unwrap().trim(), ROW_HEADER.join(","));
        assert_eq!(std::fs::read_to_string(timings).unwrap().trim(), TIMING_HEADER.join(","));
        assert!(emit_plot_data(&[], dir.path()).is_err());
    }

    #[test]
    fn plot_slope_of_inverse_t() {
        let dir = tempfile::tempdir().unwrap();
        let files = emit_plot_data(&[row(4, 0.25), row(8, 0.125), row(16, 0.0625)], dir.path()).unwrap();
        assert_eq!(files.len(), 2);
        let summary = std::fs::read_to_string(dir.path().join("summary.dat")).unwrap();
        let slope: f64 = summary.lines().last().unwrap().split_whitespace().last().unwrap().parse().unwrap();
        assert!((slope + 1.0).abs() < 1e-12);
        assert_eq!(p_label(f64::INFINITY), "inf");
        assert_eq!(p_label(1.5), "1.5");
    }
}
