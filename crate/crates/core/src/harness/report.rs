//! CSV writers for the experiment reports. Floats use Rust's shortest
//! round-trip formatting, so identical numbers give identical bytes.

use std::fmt::Write;

use super::{ConvergenceReport, MomentTable, PositivityReport};

/// Columns `scheme,dt,error_l1,stderr,error_l2,n_paths`, one block per report.
pub fn convergence_csv(reports: &[ConvergenceReport]) -> String {
    let mut out = String::from("scheme,dt,error_l1,stderr,error_l2,n_paths\n");
    for r in reports {
        for p in &r.points {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.scheme.label(),
                p.dt,
                p.error_l1,
                p.stderr,
                p.error_l2,
                r.n_paths
            );
        }
    }
    out
}

/// `log2_dt,log2_error,log2_reference`; the reference is a slope-one line
/// through the coarsest point.
pub fn plot_csv(report: &ConvergenceReport) -> String {
    let mut out = String::from("log2_dt,log2_error,log2_reference\n");
    let Some(first) = report.points.first() else {
        return out;
    };
    let (x0, y0) = (first.dt.log2(), first.error_l1.log2());
    for p in &report.points {
        let x = p.dt.log2();
        let _ = writeln!(out, "{},{},{}", x, p.error_l1.log2(), y0 + (x - x0));
    }
    out
}

pub fn positivity_csv(report: &PositivityReport) -> String {
    let mut out = String::from("param_set,h_family,dt,n_values,n_nonpositive,percent\n");
    for c in &report.cells {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            c.param_set, c.h_family, c.dt, c.n_values, c.n_nonpositive, c.percent
        );
    }
    out
}

pub fn moments_csv(table: &MomentTable) -> String {
    let mut out = String::from("p,sup_mean,sup_stderr,terminal_mean,terminal_stderr,m,n_paths\n");
    for r in &table.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.p, r.sup_mean, r.sup_stderr, r.terminal_mean, r.terminal_stderr, table.m, table.n_paths
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{build_report, LadderPoint, RunSpec, Scheme};

    #[test]
    fn plot_reference_line() {
        let points = (0..3)
            .map(|k| {
                let dt = 2f64.powi(-(5 + k));
                LadderPoint {
                    m: 1 << (5 + k),
                    dt,
                    error_l1: 0.25 * dt * dt,
                    stderr: 0.0,
                    error_l2: 0.0,
                }
            })
            .collect();
        let run = RunSpec {
            n_paths: 10,
            global_seed: 0,
            parallelism: 1,
        };
        let r = build_report(Scheme::Tjabem, points, &run, 256).unwrap();
        let csv = plot_csv(&r);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "log2_dt,log2_error,log2_reference");
        assert_eq!(lines[1], "-5,-12,-12");
        assert_eq!(lines[3], "-7,-16,-14");
        assert!(convergence_csv(&[r]).starts_with("scheme,dt,error_l1,stderr,error_l2,n_paths\ntjabem,0.03125,"));
    }
}
