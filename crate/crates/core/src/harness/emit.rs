use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::study::{ConvergenceReport, Errors, Row, COLUMNS};

pub const CSV_HEADER: &str =
    "meshsize,ncells,ndofs,L2error,H1error,L2error_ml,EnergyError,newton_iters";

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

/// CSV text: header, one line per level, failed levels and fitted rates as
/// `#` comment lines. Floats are printed in shortest round-trip form.
pub fn to_csv(report: &ConvergenceReport) -> String {
    let mut s = String::new();
    writeln!(s, "{CSV_HEADER}").unwrap();
    for r in &report.rows {
        writeln!(
            s,
            "{:e},{},{},{},{},{},{},{}",
            r.h,
            r.n_cells,
            r.n_dofs,
            opt(r.errors.l2),
            opt(r.errors.h1),
            opt(r.errors.l2_ml),
            opt(r.errors.energy),
            r.newton_iters.map(|n| n.to_string()).unwrap_or_default()
        )
        .unwrap();
    }
    for (level, msg) in &report.failures {
        writeln!(s, "# failed level {level}: {msg}").unwrap();
    }
    for col in COLUMNS {
        if let Some(rate) = report.rate(col) {
            writeln!(s, "# rate {col}={rate:e}").unwrap();
        }
    }
    s
}

pub fn write_csv(report: &ConvergenceReport, path: impl AsRef<Path>) -> std::io::Result<()> {
    fs::write(path, to_csv(report))
}

/// Rows parsed back from [`to_csv`] output (comment lines skipped).
pub fn parse_csv(text: &str) -> Result<Vec<Row>, String> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err("missing header".into());
    }
    let num = |t: &str| -> Result<Option<f64>, String> {
        if t.is_empty() {
            Ok(None)
        } else {
            t.parse().map(Some).map_err(|_| format!("bad number '{t}'"))
        }
    };
    let mut rows = Vec::new();
    for l in lines.filter(|l| !l.starts_with('#') && !l.is_empty()) {
        let t: Vec<&str> = l.split(',').collect();
        if t.len() != 8 {
            return Err(format!("expected 8 fields: '{l}'"));
        }
        rows.push(Row {
            level: 0,
            h: num(t[0])?.ok_or("missing meshsize")?,
            n_cells: t[1].parse().map_err(|_| "bad ncells")?,
            n_dofs: t[2].parse().map_err(|_| "bad ndofs")?,
            errors: Errors {
                l2: num(t[3])?,
                h1: num(t[4])?,
                l2_ml: num(t[5])?,
                energy: num(t[6])?,
            },
            newton_iters: if t[7].is_empty() {
                None
            } else {
                Some(t[7].parse().map_err(|_| "bad newton_iters")?)
            },
            damping_events: None,
            seconds: 0.0,
        });
    }
    Ok(rows)
}

/// Fixed-width table for terminals.
pub fn to_table(report: &ConvergenceReport) -> String {
    let mut s = String::new();
    writeln!(
        s,
        "case {} on {} (varpi = {})",
        report.case, report.family, report.varpi
    )
    .unwrap();
    writeln!(
        s,
        "{:>5} {:>10} {:>7} {:>8} {:>10} {:>10} {:>10} {:>10} {:>6}",
        "n", "h", "cells", "dofs", "L2", "H1", "L2_ml", "energy", "newton"
    )
    .unwrap();
    let cell = |v: Option<f64>| {
        v.map(|x| format!("{x:10.3e}"))
            .unwrap_or_else(|| format!("{:>10}", "-"))
    };
    for r in &report.rows {
        writeln!(
            s,
            "{:>5} {:>10.3e} {:>7} {:>8} {} {} {} {} {:>6}",
            r.level,
            r.h,
            r.n_cells,
            r.n_dofs,
            cell(r.errors.l2),
            cell(r.errors.h1),
            cell(r.errors.l2_ml),
            cell(r.errors.energy),
            r.newton_iters
                .map(|n| n.to_string())
                .unwrap_or_else(|| "-".into())
        )
        .unwrap();
    }
    for (level, msg) in &report.failures {
        writeln!(s, "level {level} failed: {msg}").unwrap();
    }
    for col in COLUMNS {
        if let Some(rate) = report.rate(col) {
            let pw: Vec<String> = report
                .pairwise_rates(col)
                .iter()
                .map(|r| format!("{r:.2}"))
                .collect();
            writeln!(s, "rate {col}: {rate:.3} (pairwise {})", pw.join(", ")).unwrap();
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{cases, run_family, RunOptions};
    use crate::mesh::MeshFamily;

    #[test]
    fn csv_round_trip_and_rate_footer() {
        let r = run_family(
            &cases::linear(),
            MeshFamily::Cartesian,
            &[2, 4, 8],
            &RunOptions::default(),
        );
        let text = to_csv(&r);
        let rows = parse_csv(&text).unwrap();
        assert_eq!(rows.len(), r.rows.len());
        for (a, b) in rows.iter().zip(&r.rows) {
            assert_eq!(a.h, b.h);
            assert_eq!(a.errors, b.errors);
            assert_eq!(a.n_dofs, b.n_dofs);
        }
        let footer = text
            .lines()
            .find_map(|l| l.strip_prefix("# rate H1error="))
            .unwrap()
            .parse::<f64>()
            .unwrap();
        assert!((footer - r.rate("H1error").unwrap()).abs() < 1e-12);
        assert!(to_table(&r).contains("rate H1error"));
    }

    #[test]
    fn deterministic_output() {
        let run = || {
            to_csv(&run_family(
                &cases::stefan_s1(),
                MeshFamily::Hexagonal,
                &[3, 5],
                &RunOptions::default(),
            ))
        };
        assert_eq!(run(), run());
    }
}
