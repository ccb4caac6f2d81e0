//! CSV time series and JSON report writers. Output depends only on the
//! data, so identical configs give byte-identical files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use landau_core::solver::Trajectory;

use crate::pipeline::{CheckColumns, Outcome, Report};

pub const CSV_HEADER: &str = "t,mass,px,py,pz,energy,entropy,l2,l2_alpha,h1_gamma_half,X,M_neg3gamma,coer_min_ratio,gronwall_rhs,trap_Xbar,growth_env";

/// 17 significant digits; `nan` for missing values.
pub fn format_value(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{x:.16e}")
    }
}

pub fn timeseries_csv(trajectory: &Trajectory, columns: &CheckColumns) -> String {
    let mut out = String::with_capacity(256 * (trajectory.diagnostics.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    let pick = |col: &Option<Vec<f64>>, i: usize| col.as_ref().and_then(|c| c.get(i).copied()).unwrap_or(f64::NAN);
    for (i, r) in trajectory.diagnostics.iter().enumerate() {
        let row = [
            r.t,
            r.mass,
            r.momentum[0],
            r.momentum[1],
            r.momentum[2],
            r.energy,
            r.entropy,
            r.l2,
            r.l2_alpha,
            r.h1_gamma_half,
            r.x,
            r.m_neg3gamma,
            r.coer_min_ratio,
            pick(&columns.gronwall_rhs, i),
            columns.trap_x_bar.unwrap_or(f64::NAN),
            pick(&columns.growth_envelope, i),
        ];
        let line: Vec<String> = row.iter().map(|&x| format_value(x)).collect();
        let _ = writeln!(out, "{}", line.join(","));
    }
    out
}

pub fn report_json(report: &Report) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report)?;
    s.push('\n');
    Ok(s)
}

/// Writes the report (and the CSV when there is a trajectory) into
/// `dir`, returning the paths written.
pub fn write_outputs(outcome: &Outcome, dir: &Path, csv_name: &str, json_name: &str) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let mut written = Vec::new();
    if let Some(tr) = &outcome.trajectory {
        let path = dir.join(csv_name);
        std::fs::write(&path, timeseries_csv(tr, &outcome.columns)).with_context(|| format!("cannot write {}", path.display()))?;
        written.push(path);
    }
    let path = dir.join(json_name);
    std::fs::write(&path, report_json(&outcome.report)?).with_context(|| format!("cannot write {}", path.display()))?;
    written.push(path);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values_keep_seventeen_digits() {
        assert_eq!(format_value(0.1), "1.0000000000000001e-1");
        assert_eq!(format_value(f64::NAN), "nan");
        assert_eq!(format_value(f64::INFINITY), "inf");
        assert_eq!(format_value(0.1).parse::<f64>().unwrap(), 0.1);
    }
}
