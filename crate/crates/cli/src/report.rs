//! Output writers. Every file is built from deterministic structures with
//! shortest round-trip float formatting, so identical runs are byte-identical.

use anyhow::{Context, Result};
use quasiflow::fourier::FourierField;
use quasiflow::kam::KamStepRecord;
use quasiflow::params::{GammaLadder, ParamGrid, PointOutcome, SweepResult};
use quasiflow::transport::NormSample;
use serde::Serialize;
use std::fmt::Write as _;
use std::path::Path;

/// Shortest round-trip representation (ryu), matching the JSON outputs.
pub fn fmt_f64(v: f64) -> String {
    serde_json::to_string(&v).unwrap_or_else(|_| "".to_string())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct StepRow {
    pub n: usize,
    #[serde(rename = "K_n")]
    pub k_n: i64,
    pub delta_s0: f64,
    pub delta_s1: f64,
    pub alpha_n: Vec<f64>,
    pub survived: bool,
}

impl From<&KamStepRecord> for StepRow {
    fn from(r: &KamStepRecord) -> Self {
        StepRow {
            n: r.n,
            k_n: r.k_n,
            delta_s0: r.delta_s0,
            delta_s1: r.delta_s1,
            alpha_n: r.alpha.clone(),
            survived: r.survived,
        }
    }
}

/// Per-run JSON: parameters, status, the diagnostics table and the
/// straightening displacement.
#[derive(Debug, Serialize)]
pub struct RunReport {
    pub xi: Vec<f64>,
    pub status: String,
    pub alpha_inf: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m_inf: Option<Vec<f64>>,
    pub excluded_step: Option<usize>,
    pub iterations: Option<usize>,
    pub final_residual: Option<f64>,
    pub steps: Vec<StepRow>,
    pub beta: Option<FourierField>,
}

/// steps.csv: `n,k_n,delta_s0,delta_s1,alpha_0..alpha_{N-1},survived`.
pub fn steps_csv(steps: &[KamStepRecord], dim: usize) -> String {
    let mut out = String::from("n,k_n,delta_s0,delta_s1");
    for i in 0..dim {
        let _ = write!(out, ",alpha_{i}");
    }
    out.push_str(",survived\n");
    for r in steps {
        let _ = write!(
            out,
            "{},{},{},{}",
            r.n,
            r.k_n,
            fmt_f64(r.delta_s0),
            fmt_f64(r.delta_s1)
        );
        for a in &r.alpha {
            let _ = write!(out, ",{}", fmt_f64(*a));
        }
        let _ = writeln!(out, ",{}", r.survived);
    }
    out
}

/// measure.csv: `gamma,samples,excluded,excluded_fraction,excluded_measure,ci_halfwidth`.
pub fn measure_csv(ladder: &GammaLadder) -> String {
    let mut out =
        String::from("gamma,samples,excluded,excluded_fraction,excluded_measure,ci_halfwidth\n");
    for row in &ladder.rows {
        let e = &row.estimate;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            fmt_f64(row.gamma),
            e.samples,
            e.excluded,
            fmt_f64(e.excluded_fraction),
            fmt_f64(e.excluded_measure),
            fmt_f64(e.ci_halfwidth)
        );
    }
    out
}

/// points.csv: `gamma,xi_0..,outcome,alpha_0..,excluded_step`
/// (outcome codes: 0 converged∩final, 1 excluded, 2 diverged, 3 converged∖final).
pub fn points_csv(grid: &ParamGrid, sweeps: &[SweepResult]) -> String {
    let dim = grid.lo.len();
    let adim = grid
        .samples
        .first()
        .map(|s| s.len())
        .unwrap_or(dim);
    let mut out = String::from("gamma");
    for i in 0..adim {
        let _ = write!(out, ",xi_{i}");
    }
    out.push_str(",outcome");
    for i in 0..adim {
        let _ = write!(out, ",alpha_{i}");
    }
    out.push_str(",excluded_step\n");
    for sweep in sweeps {
        for (xi, o) in grid.samples.iter().zip(&sweep.outcomes) {
            let _ = write!(out, "{}", fmt_f64(sweep.gamma));
            for v in xi {
                let _ = write!(out, ",{}", fmt_f64(*v));
            }
            let _ = write!(out, ",{}", o.code());
            let (alphas, step) = match o {
                PointOutcome::Converged { alpha_inf, .. } => (
                    alpha_inf.iter().map(|a| fmt_f64(*a)).collect::<Vec<_>>(),
                    String::new(),
                ),
                PointOutcome::Excluded { step } => {
                    (vec![String::new(); adim], step.to_string())
                }
                PointOutcome::Diverged { .. } => (vec![String::new(); adim], String::new()),
            };
            for a in alphas {
                let _ = write!(out, ",{a}");
            }
            let _ = writeln!(out, ",{step}");
        }
    }
    out
}

/// norms.csv: `t,s,norm`.
pub fn norms_csv(rows: &[NormSample]) -> String {
    let mut out = String::from("t,s,norm\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{}", fmt_f64(r.t), fmt_f64(r.s), fmt_f64(r.norm));
    }
    out
}

/// tame.csv: `eps,s,beta_norm,f0_norm,ratio`.
pub fn tame_csv(rows: &[quasiflow::verify::TameAuditRow]) -> String {
    let mut out = String::from("eps,s,beta_norm,f0_norm,ratio\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            fmt_f64(r.eps),
            fmt_f64(r.s),
            fmt_f64(r.beta_norm),
            fmt_f64(r.f0_norm),
            fmt_f64(r.ratio)
        );
    }
    out
}
