//! Subcommand drivers. Exit-code contract: 0 converged/completed, 1 config
//! error, 2 excluded (parameter outside the usable set), 3 diverged.

use crate::config::{build_field, ExperimentConfig};
use crate::report::{
    measure_csv, norms_csv, points_csv, steps_csv, tame_csv, write_json, write_text, RunReport,
    StepRow,
};
use anyhow::{anyhow, bail, Result};
use quasiflow::diffeo::VectorFieldOnTorus;
use quasiflow::fourier::FourierField;
use quasiflow::kam::{kam_iterate, KamError, KamOutcome, SchemeConstants, StraighteningResult};
use quasiflow::params::{alpha_lip_quotient, gamma_ladder, ParamGrid};
use quasiflow::transport::{
    evolve_with_reduced, forced_solve_guarded, reduce, ReducedTransport, TransportError,
    TransportOperator, TransportOutcome,
};
use quasiflow::verify::{
    conjugacy_flow_check, lipschitz_audit, rotation_vector, tame_audit, LipschitzAuditReport,
    ROTATION_DT, ROTATION_T,
};
use serde::Serialize;
use std::path::Path;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_EXCLUDED: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;

fn run_report_converged(r: &StraighteningResult) -> RunReport {
    RunReport {
        xi: r.xi.clone(),
        status: "converged".into(),
        alpha_inf: Some(r.alpha_inf.clone()),
        m_inf: None,
        excluded_step: None,
        iterations: Some(r.iterations),
        final_residual: Some(r.final_residual),
        steps: r.steps.iter().map(StepRow::from).collect(),
        beta: Some(r.beta().clone()),
    }
}

#[derive(Debug, Serialize)]
struct FlowVerifyReport {
    rotation_vector: Vec<f64>,
    rotation_deviation: f64,
    rotation_t: f64,
    conjugacy_residual: f64,
    flow_deviation: f64,
    flow_t: f64,
    /// `|α_∞ − ξ|` against its bound `‖f₀‖_{s₁}` (= γ·δ).
    frequency_drift: f64,
    frequency_drift_bound: f64,
    drift_bound_ok: bool,
}

fn flow_verify(
    cfg: &ExperimentConfig,
    constants: &SchemeConstants,
    f0: &FourierField,
    result: &StraighteningResult,
) -> Result<FlowVerifyReport> {
    let v = &cfg.verify;
    let rotation_t = v.rotation_t.unwrap_or(ROTATION_T);
    let rotation_dt = v.rotation_dt.unwrap_or(ROTATION_DT);
    let flow_t = v.flow_t.unwrap_or(100.0);
    let flow_dt = v.flow_dt.unwrap_or(1e-2);
    let theta0 = v
        .theta0
        .clone()
        .unwrap_or_else(|| vec![0.0; constants.n_dim]);

    let x0 = VectorFieldOnTorus::new(result.xi.clone(), f0.clone())?;
    let rv = rotation_vector(&x0, &theta0, rotation_t, rotation_dt)?;
    let rotation_deviation = rv
        .iter()
        .zip(&result.alpha_inf)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let flow_deviation = conjugacy_flow_check(result, &x0, &theta0, flow_t, flow_dt)?;
    let frequency_drift = result
        .alpha_inf
        .iter()
        .zip(&result.xi)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let frequency_drift_bound = f0.sobolev_norm(constants.s1);
    Ok(FlowVerifyReport {
        rotation_vector: rv,
        rotation_deviation,
        rotation_t,
        conjugacy_residual: result.final_residual,
        flow_deviation,
        flow_t,
        frequency_drift,
        frequency_drift_bound,
        drift_bound_ok: frequency_drift <= frequency_drift_bound,
    })
}

pub fn cmd_straighten(cfg: &ExperimentConfig, out: &Path) -> Result<i32> {
    let constants = cfg.constants()?;
    let (xi, f0) = cfg.problem_field()?;
    match kam_iterate(&xi, &f0, &constants) {
        Ok(KamOutcome::Converged(result)) => {
            write_json(&out.join("run.json"), &run_report_converged(&result))?;
            write_text(
                &out.join("steps.csv"),
                &steps_csv(&result.steps, constants.n_dim),
            )?;
            let audit = flow_verify(cfg, &constants, &f0, &result)?;
            write_json(&out.join("audit.json"), &audit)?;
            Ok(EXIT_OK)
        }
        Ok(KamOutcome::Excluded { step, steps }) => {
            let report = RunReport {
                xi,
                status: "excluded".into(),
                alpha_inf: None,
                m_inf: None,
                excluded_step: Some(step),
                iterations: None,
                final_residual: None,
                steps: steps.iter().map(StepRow::from).collect(),
                beta: None,
            };
            write_json(&out.join("run.json"), &report)?;
            write_text(&out.join("steps.csv"), &steps_csv(&steps, constants.n_dim))?;
            Ok(EXIT_EXCLUDED)
        }
        Err(KamError::Diverged { step, reason, records }) => {
            let report = RunReport {
                xi,
                status: "diverged".into(),
                alpha_inf: None,
                m_inf: None,
                excluded_step: Some(step),
                iterations: None,
                final_residual: None,
                steps: records.iter().map(StepRow::from).collect(),
                beta: None,
            };
            write_json(&out.join("run.json"), &report)?;
            write_text(
                &out.join("steps.csv"),
                &steps_csv(&records, constants.n_dim),
            )?;
            eprintln!("diverged at step {step}: {reason}");
            Ok(EXIT_DIVERGED)
        }
        Err(e) => Err(anyhow!(e)),
    }
}

#[derive(Debug, Serialize)]
struct SweepSummary {
    box_lo: Vec<f64>,
    box_hi: Vec<f64>,
    box_volume: f64,
    samples: usize,
    sampling: String,
    gammas: Vec<f64>,
    loglog_slope: f64,
    monotone: bool,
    /// Per-γ max adjacent quotient of ξ ↦ α_∞ (uniform grids only).
    alpha_lip: Vec<Option<f64>>,
}

pub fn cmd_sweep(cfg: &ExperimentConfig, out: &Path) -> Result<i32> {
    let constants = cfg.constants()?;
    let grid_cfg = cfg
        .grid
        .as_ref()
        .ok_or_else(|| anyhow!("config has no [grid] section"))?;
    let n = constants.n_dim;
    let grid = match grid_cfg.sampling.as_str() {
        "uniform" => {
            let counts = grid_cfg
                .counts
                .clone()
                .ok_or_else(|| anyhow!("uniform sampling needs grid.counts"))?;
            ParamGrid::uniform(&grid_cfg.lo, &grid_cfg.hi, &counts)
        }
        "low-discrepancy" => {
            let samples = grid_cfg
                .samples
                .ok_or_else(|| anyhow!("low-discrepancy sampling needs grid.samples"))?;
            ParamGrid::low_discrepancy(&grid_cfg.lo, &grid_cfg.hi, samples)
        }
        "monte-carlo" => {
            let samples = grid_cfg
                .samples
                .ok_or_else(|| anyhow!("monte-carlo sampling needs grid.samples"))?;
            ParamGrid::monte_carlo(&grid_cfg.lo, &grid_cfg.hi, samples, cfg.seed)
        }
        other => bail!("unknown sampling '{other}'"),
    };
    let modes = cfg
        .problem
        .as_ref()
        .map(|p| p.modes.clone())
        .unwrap_or_default();
    let f0 = build_field(n, n, &modes)?;
    let builder = move |_xi: &[f64]| f0.clone();
    let gammas = grid_cfg
        .gammas
        .clone()
        .unwrap_or_else(|| vec![constants.gamma]);
    let (ladder, sweeps) = gamma_ladder(&grid, &builder, &constants, &gammas)
        .map_err(|e| anyhow!("{e}"))?;
    write_text(&out.join("measure.csv"), &measure_csv(&ladder))?;
    write_text(&out.join("points.csv"), &points_csv(&grid, &sweeps))?;
    let alpha_lip = sweeps
        .iter()
        .map(|s| alpha_lip_quotient(&grid, s))
        .collect();
    let summary = SweepSummary {
        box_lo: grid.lo.clone(),
        box_hi: grid.hi.clone(),
        box_volume: grid.volume,
        samples: grid.len(),
        sampling: grid_cfg.sampling.clone(),
        gammas,
        loglog_slope: ladder.loglog_slope,
        monotone: ladder.monotone,
        alpha_lip,
    };
    write_json(&out.join("run.json"), &summary)?;
    write_json(&out.join("measure.json"), &ladder)?;
    Ok(EXIT_OK)
}

fn transport_operator(cfg: &ExperimentConfig) -> Result<(TransportOperator, SchemeConstants)> {
    let constants = cfg.constants()?;
    let t = cfg
        .transport
        .as_ref()
        .ok_or_else(|| anyhow!("config has no [transport] section"))?;
    let zeta = t.zeta()?;
    let nu = t.omega.len();
    let d = zeta.len();
    if constants.n_dim != nu + d {
        bail!(
            "scheme.dim = {} must equal ν + d = {}",
            constants.n_dim,
            nu + d
        );
    }
    let a0 = build_field(nu + d, d, &t.a0_modes)?;
    let op = TransportOperator::new(t.omega.clone(), zeta, a0).map_err(|e| anyhow!("{e}"))?;
    Ok((op, constants))
}

fn reduced_run_report(op: &TransportOperator, red: &ReducedTransport) -> RunReport {
    let mut report = run_report_converged(&red.result);
    report.m_inf = Some(red.m_inf.clone());
    report.xi = op.xi();
    report
}

pub fn cmd_transport(cfg: &ExperimentConfig, out: &Path) -> Result<i32> {
    let (op, constants) = transport_operator(cfg)?;
    let t = cfg.transport.as_ref().expect("checked above");
    match reduce(&op, &constants) {
        Ok(TransportOutcome::Reduced(red)) => {
            write_json(&out.join("run.json"), &reduced_run_report(&op, &red))?;
            write_text(
                &out.join("steps.csv"),
                &steps_csv(&red.result.steps, constants.n_dim),
            )?;
            let u0 = build_field(op.d, 1, &t.u0_modes)?;
            let t_max = t.t_max.unwrap_or(100.0);
            let t_steps = t.t_steps.unwrap_or(51).max(2);
            let ts: Vec<f64> = (0..t_steps)
                .map(|i| t_max * i as f64 / (t_steps - 1) as f64)
                .collect();
            let s_list = t.s_list.clone().unwrap_or_else(|| vec![0.0, 1.0, 2.0]);
            let resolution = t.resolution.unwrap_or(64);
            let (u_hist, v_hist) =
                evolve_with_reduced(&op, &u0, &ts, &s_list, resolution, &red)
                    .map_err(|e| anyhow!("{e}"))?;
            write_text(&out.join("norms.csv"), &norms_csv(&u_hist))?;
            write_text(&out.join("norms_reduced.csv"), &norms_csv(&v_hist))?;
            Ok(EXIT_OK)
        }
        Ok(TransportOutcome::Excluded { step, steps }) => {
            let report = RunReport {
                xi: op.xi(),
                status: "excluded".into(),
                alpha_inf: None,
                m_inf: None,
                excluded_step: Some(step),
                iterations: None,
                final_residual: None,
                steps: steps.iter().map(StepRow::from).collect(),
                beta: None,
            };
            write_json(&out.join("run.json"), &report)?;
            Ok(EXIT_EXCLUDED)
        }
        Err(TransportError::Kam(KamError::Diverged { step, reason, .. })) => {
            eprintln!("reduction diverged at step {step}: {reason}");
            Ok(EXIT_DIVERGED)
        }
        Err(e) => Err(anyhow!(e)),
    }
}

#[derive(Debug, Serialize)]
struct ForcedEstimateRow {
    s: f64,
    b_norm: f64,
    bound: f64,
    ratio: f64,
}

#[derive(Debug, Serialize)]
struct ForcedReport {
    c: Vec<f64>,
    residual: f64,
    min_divisor: f64,
    /// `|c| / ‖f‖_{s₀}`.
    c_over_f_norm: f64,
    /// `‖b‖_s·γ / (‖f‖_{s+σ} + ‖a₀‖_{s+σ}‖f‖_{s₀+σ})` with σ = 2τ+4.
    estimate_rows: Vec<ForcedEstimateRow>,
    b: FourierField,
}

pub fn cmd_forced(cfg: &ExperimentConfig, out: &Path) -> Result<i32> {
    let (op, constants) = transport_operator(cfg)?;
    let t = cfg.transport.as_ref().expect("checked above");
    let red = match reduce(&op, &constants) {
        Ok(TransportOutcome::Reduced(r)) => *r,
        Ok(TransportOutcome::Excluded { step, steps }) => {
            let report = RunReport {
                xi: op.xi(),
                status: "excluded".into(),
                alpha_inf: None,
                m_inf: None,
                excluded_step: Some(step),
                iterations: None,
                final_residual: None,
                steps: steps.iter().map(StepRow::from).collect(),
                beta: None,
            };
            write_json(&out.join("run.json"), &report)?;
            return Ok(EXIT_EXCLUDED);
        }
        Err(TransportError::Kam(KamError::Diverged { step, reason, .. })) => {
            eprintln!("reduction diverged at step {step}: {reason}");
            return Ok(EXIT_DIVERGED);
        }
        Err(e) => return Err(anyhow!(e)),
    };
    write_json(&out.join("run.json"), &reduced_run_report(&op, &red))?;
    let f = build_field(op.nu + op.d, 1, &t.f_modes)?;
    let sol = match forced_solve_guarded(&op, &f, &red, constants.gamma, constants.tau) {
        Ok(s) => s,
        Err(TransportError::ForcedSmallDivisor { k, divisor }) => {
            eprintln!("forced divisor too small at (ℓ,j) = {k:?}: {divisor:.3e}");
            return Ok(EXIT_EXCLUDED);
        }
        Err(e) => return Err(anyhow!(e)),
    };
    let sigma = 2.0 * constants.tau + 4.0;
    let f_s0_sigma = f.sobolev_norm(constants.s0 + sigma);
    let estimate_rows: Vec<ForcedEstimateRow> = (0..5)
        .map(|i| {
            let s = constants.s0 + i as f64;
            let b_norm = sol.b.sobolev_norm(s);
            let bound = constants.gamma.recip()
                * (f.sobolev_norm(s + sigma)
                    + op.a0.sobolev_norm(s + sigma) * f_s0_sigma);
            ForcedEstimateRow {
                s,
                b_norm,
                bound,
                ratio: if bound > 0.0 { b_norm / bound } else { 0.0 },
            }
        })
        .collect();
    let c_abs = sol.c.iter().map(|x| x * x).sum::<f64>().sqrt();
    let report = ForcedReport {
        c: sol.c.clone(),
        residual: sol.residual,
        min_divisor: sol.min_divisor,
        c_over_f_norm: c_abs / f.sobolev_norm(constants.s0),
        estimate_rows,
        b: sol.b,
    };
    write_json(&out.join("audit.json"), &report)?;
    Ok(EXIT_OK)
}

#[derive(Debug, Serialize)]
struct LipschitzLadderRow {
    scale: f64,
    report: LipschitzAuditReport,
}

#[derive(Debug, Serialize)]
struct VerifyReport {
    flow: FlowVerifyReport,
    tame: quasiflow::verify::TameAuditReport,
    lipschitz: Vec<LipschitzLadderRow>,
    /// max/min of measured_c over the comparable ladder rows.
    lipschitz_c_stability: f64,
}

pub fn cmd_verify(cfg: &ExperimentConfig, out: &Path) -> Result<i32> {
    let constants = cfg.constants()?;
    let (xi, f0) = cfg.problem_field()?;
    let result = match kam_iterate(&xi, &f0, &constants).map_err(|e| anyhow!("{e}"))? {
        KamOutcome::Converged(r) => r,
        KamOutcome::Excluded { step, .. } => {
            eprintln!("base run excluded at step {step}; nothing to audit");
            return Ok(EXIT_EXCLUDED);
        }
    };
    let flow = flow_verify(cfg, &constants, &f0, &result)?;

    let norm0 = f0.sobolev_norm(0.0);
    let base = if norm0 > 0.0 {
        f0.scale(1.0 / norm0)
    } else {
        f0.clone()
    };
    let eps_ladder = cfg
        .verify
        .eps_ladder
        .clone()
        .unwrap_or_else(|| vec![1e-3, 1e-4, 1e-5]);
    let s_values: Vec<f64> = (0..7).map(|i| constants.s0 + i as f64).collect();
    let tame = tame_audit(&xi, &base, &constants, &eps_ladder, &s_values)
        .map_err(|e| anyhow!("{e}"))?;

    let delta = build_field(constants.n_dim, constants.n_dim, &cfg.verify.delta_modes)?;
    let ladder = cfg
        .verify
        .lipschitz_ladder
        .clone()
        .unwrap_or_else(|| vec![1.0, 0.1, 0.01]);
    let mut lipschitz = Vec::new();
    for &scale in &ladder {
        let f0_b = f0.add(&delta.scale(scale)).map_err(|e| anyhow!("{e}"))?;
        let report = lipschitz_audit(&xi, &f0, &f0_b, &constants).map_err(|e| anyhow!("{e}"))?;
        lipschitz.push(LipschitzLadderRow { scale, report });
    }
    let cs: Vec<f64> = lipschitz
        .iter()
        .filter(|r| r.report.comparable && r.report.measured_c > 0.0)
        .map(|r| r.report.measured_c)
        .collect();
    let lipschitz_c_stability = if cs.is_empty() {
        1.0
    } else {
        cs.iter().copied().fold(0.0f64, f64::max)
            / cs.iter().copied().fold(f64::INFINITY, f64::min)
    };

    write_text(&out.join("tame.csv"), &tame_csv(&tame.rows))?;
    let report = VerifyReport {
        flow,
        tame,
        lipschitz,
        lipschitz_c_stability,
    };
    write_json(&out.join("audit.json"), &report)?;
    Ok(EXIT_OK)
}

/// Human-oriented one-liner for logs.
pub fn describe_exit(code: i32) -> &'static str {
    match code {
        EXIT_OK => "ok",
        EXIT_CONFIG => "config error",
        EXIT_EXCLUDED => "excluded",
        EXIT_DIVERGED => "diverged",
        _ => "unknown",
    }
}

/// Convenience used by tests: run a command by name into a directory.
pub fn run_command(name: &str, cfg: &ExperimentConfig, out: &Path) -> Result<i32> {
    std::fs::create_dir_all(out)?;
    match name {
        "straighten" => cmd_straighten(cfg, out),
        "sweep" => cmd_sweep(cfg, out),
        "transport" => cmd_transport(cfg, out),
        "forced" => cmd_forced(cfg, out),
        "verify" => cmd_verify(cfg, out),
        other => bail!("unknown subcommand '{other}'"),
    }
}
