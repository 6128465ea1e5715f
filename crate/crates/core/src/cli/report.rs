use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::MissingData(format!("{}: {e}", path.display())))?;
        let mut lines = text.lines();
        let header: Vec<String> = lines
            .next()
            .ok_or_else(|| Error::MissingData(format!("{} is empty", path.display())))?
            .split(',')
            .map(str::to_owned)
            .collect();
        let rows = lines.filter(|l| !l.is_empty()).map(|l| l.split(',').map(str::to_owned).collect()).collect();
        Ok(Self { header, rows })
    }

    fn col(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingData(format!("column {name} missing")))
    }
}

fn num(s: &str) -> f64 {
    s.parse().unwrap_or(f64::NAN)
}

/// `ln(B_k / B_{k-1}) / ln(n_k / n_{k-1})` for consecutive entries.
pub fn rates(points: &[(f64, f64)]) -> Vec<Option<f64>> {
    points
        .iter()
        .enumerate()
        .map(|(k, &(n, b))| {
            if k == 0 {
                return None;
            }
            let (n0, b0) = points[k - 1];
            Some((b / b0).ln() / (n / n0).ln())
        })
        .collect()
}

/// Text summary of a run directory.
pub fn report(dir: &Path) -> Result<String> {
    if !dir.is_dir() {
        return Err(Error::MissingData(format!("{} is not a directory", dir.display())));
    }
    let manifest = Table::read(&dir.join("manifest.csv"))?;
    let verdicts = Table::read(&dir.join("verdicts.csv"))?;
    let bounds = Table::read(&dir.join("bound_reports.csv"))?;
    let mut out = String::new();

    let (me, ms, md) = (manifest.col("experiment")?, manifest.col("status")?, manifest.col("detail")?);
    let _ = writeln!(out, "{:<16} {:<8} detail", "experiment", "status");
    for r in &manifest.rows {
        let _ = writeln!(out, "{:<16} {:<8} {}", r[me], r[ms], r.get(md).map(String::as_str).unwrap_or(""));
    }

    let cols = ["experiment", "label", "n", "lhs", "rhs", "verdict"].map(|c| verdicts.col(c));
    let [ve, vl, vn, vlhs, vrhs, vv] = [cols[0].as_ref(), cols[1].as_ref(), cols[2].as_ref(), cols[3].as_ref(), cols[4].as_ref(), cols[5].as_ref()]
        .map(|c| c.copied().map_err(|e| Error::MissingData(e.to_string())));
    let (ve, vl, vn, vlhs, vrhs, vv) = (ve?, vl?, vn?, vlhs?, vrhs?, vv?);
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "{:<16} {:<18} {:>6} {:>13} {:>13} {:>13} verdict",
        "experiment", "inequality", "n", "empirical", "certified", "margin"
    );
    for r in &verdicts.rows {
        let (l, h) = (num(&r[vlhs]), num(&r[vrhs]));
        let _ = writeln!(
            out,
            "{:<16} {:<18} {:>6} {:>13.6e} {:>13.6e} {:>13.6e} {}",
            r[ve], r[vl], r[vn], l, h, h - l, r[vv]
        );
    }

    let (be, bn, bt, bl) = (bounds.col("experiment")?, bounds.col("n")?, bounds.col("total")?, bounds.col("label")?);
    let _ = writeln!(out);
    let _ = writeln!(out, "{:<16} {:<14} {:>6} {:>13} {:>8}", "experiment", "label", "n", "bound", "rate");
    let mut groups: Vec<(String, Vec<&Vec<String>>)> = Vec::new();
    for r in &bounds.rows {
        match groups.iter_mut().find(|(e, _)| *e == r[be]) {
            Some((_, g)) => g.push(r),
            None => groups.push((r[be].clone(), vec![r])),
        }
    }
    for (_, rows) in &groups {
        let pts: Vec<(f64, f64)> = rows.iter().map(|r| (num(&r[bn]), num(&r[bt]))).collect();
        for (r, rate) in rows.iter().zip(rates(&pts)) {
            let rate = rate.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into());
            let _ = writeln!(out, "{:<16} {:<14} {:>6} {:>13.6e} {:>8}", r[be], r[bl], r[bn], num(&r[bt]), rate);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rate_is_log_ratio() {
        let r = rates(&[(8.0, 4.0), (16.0, 2.0), (32.0, 0.5)]);
        assert_eq!(r[0], None);
        assert!((r[1].unwrap() + 1.0).abs() < 1e-12);
        assert!((r[2].unwrap() + 2.0).abs() < 1e-12);
    }

    #[test]
    fn empty_dir_is_an_error() {
        let d = tempfile::tempdir().unwrap();
        assert!(report(d.path()).is_err());
    }
}
