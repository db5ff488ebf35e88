//! Independent oracles and estimate audits.
//!
//! Nothing here reuses the spectral conjugation machinery beyond pointwise
//! field evaluation: trajectories are integrated with a fixed-step RK4 on the
//! evaluated right-hand side, so agreement between `α_∞` and a measured
//! rotation vector, or between a flow and its straightened image, is an
//! independent check of the scheme.

use crate::diffeo::VectorFieldOnTorus;
use crate::fourier::{FourierError, FourierField};
use crate::kam::{kam_iterate, KamError, KamOutcome, SchemeConstants, StraighteningResult};
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("non-finite state during integration at t = {t}")]
    NonFinite { t: f64 },
    #[error("flow time step must be positive")]
    BadStep,
    #[error(transparent)]
    Fourier(#[from] FourierError),
    #[error(transparent)]
    Kam(#[from] KamError),
    #[error(transparent)]
    Diffeo(#[from] crate::diffeo::DiffeoError),
}

/// An unwrapped RK4 trajectory of `dθ/dt = α + f(θ)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlowTrace {
    pub theta0: Vec<f64>,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub dt: f64,
    /// Largest step-doubling error estimate over 8 checkpoints.
    pub max_local_error: f64,
}

impl FlowTrace {
    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("trace has at least one sample")
    }
}

fn rk4_step(
    x: &VectorFieldOnTorus,
    y: &[f64],
    h: f64,
    scratch: &mut Vec<f64>,
) -> Result<Vec<f64>, VerifyError> {
    let n = y.len();
    let eval = |p: &[f64]| -> Result<Vec<f64>, VerifyError> { Ok(x.evaluate(p)?) };
    let k1 = eval(y)?;
    scratch.clear();
    scratch.extend(y.iter().zip(&k1).map(|(a, b)| a + 0.5 * h * b));
    let k2 = eval(scratch)?;
    let s2: Vec<f64> = y.iter().zip(&k2).map(|(a, b)| a + 0.5 * h * b).collect();
    let k3 = eval(&s2)?;
    let s3: Vec<f64> = y.iter().zip(&k3).map(|(a, b)| a + h * b).collect();
    let k4 = eval(&s3)?;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        out.push(y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
    }
    Ok(out)
}

/// Integrate `dθ/dt = α + f(θ)` from `theta0` to time `t_end`, recording
/// `samples + 1` evenly spaced states (unwrapped in R^N).
pub fn flow(
    x: &VectorFieldOnTorus,
    theta0: &[f64],
    t_end: f64,
    dt: f64,
    samples: usize,
) -> Result<FlowTrace, VerifyError> {
    if !(dt > 0.0) || !(t_end > 0.0) {
        return Err(VerifyError::BadStep);
    }
    let n_steps = (t_end / dt).ceil().max(1.0) as usize;
    let h = t_end / n_steps as f64;
    let samples = samples.clamp(1, n_steps);
    let record_every = (n_steps / samples).max(1);
    let checkpoint_every = (n_steps / 8).max(1);

    let mut y = theta0.to_vec();
    let mut times = vec![0.0];
    let mut states = vec![y.clone()];
    let mut scratch = Vec::new();
    let mut max_local_error = 0.0f64;

    for step in 0..n_steps {
        let t = step as f64 * h;
        if step % checkpoint_every == 0 {
            let full = rk4_step(x, &y, h, &mut scratch)?;
            let half = rk4_step(x, &y, 0.5 * h, &mut scratch)?;
            let half2 = rk4_step(x, &half, 0.5 * h, &mut scratch)?;
            let err = full
                .iter()
                .zip(&half2)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            max_local_error = max_local_error.max(err);
            y = full;
        } else {
            y = rk4_step(x, &y, h, &mut scratch)?;
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(VerifyError::NonFinite { t });
        }
        if (step + 1) % record_every == 0 || step + 1 == n_steps {
            times.push((step + 1) as f64 * h);
            states.push(y.clone());
        }
    }
    Ok(FlowTrace {
        theta0: theta0.to_vec(),
        times,
        states,
        dt: h,
        max_local_error,
    })
}

pub const ROTATION_T: f64 = 1e4;
pub const ROTATION_DT: f64 = 1e-2;

/// `(θ(T) − θ₀)/T` from the unwrapped trace. Error budget `2π/T + O(dt⁴)`.
pub fn rotation_vector(
    x: &VectorFieldOnTorus,
    theta0: &[f64],
    t_total: f64,
    dt: f64,
) -> Result<Vec<f64>, VerifyError> {
    let trace = flow(x, theta0, t_total, dt, 1)?;
    Ok(trace
        .final_state()
        .iter()
        .zip(theta0)
        .map(|(a, b)| (a - b) / t_total)
        .collect())
}

/// Least-squares slope of `ys` against `xs`.
pub fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let num: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    num / den
}

fn wrap_to_pi(x: f64) -> f64 {
    let mut r = x % TAU;
    if r > TAU / 2.0 {
        r -= TAU;
    } else if r < -TAU / 2.0 {
        r += TAU;
    }
    r
}

/// Euclidean distance on the torus (componentwise wrapped to `[-π, π)`).
pub fn torus_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = wrap_to_pi(x - y);
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Flow-level conjugacy check.
///
/// The straightening identity `Ψ_* X₀ = α_∞·∂θ` says trajectories of `X₀`
/// are `Ψ⁻¹` images of straight lines: `Φ^t_{X₀}(Ψ⁻¹(y₀)) = Ψ⁻¹(y₀ + α_∞ t)`.
/// We integrate `X₀` from `Ψ⁻¹(θ₀)` and return the sup torus distance to
/// `Ψ⁻¹(θ₀ + α_∞ t)` over the sampled times.
pub fn conjugacy_flow_check(
    result: &StraighteningResult,
    x0: &VectorFieldOnTorus,
    theta0: &[f64],
    t_end: f64,
    dt: f64,
) -> Result<f64, VerifyError> {
    let start = result.psi.apply_inverse(theta0)?;
    let trace = flow(x0, &start, t_end, dt, 256)?;
    let mut sup = 0.0f64;
    for (t, state) in trace.times.iter().zip(&trace.states) {
        let line: Vec<f64> = theta0
            .iter()
            .zip(&result.alpha_inf)
            .map(|(p, a)| p + a * t)
            .collect();
        let target = result.psi.apply_inverse(&line)?;
        sup = sup.max(torus_distance(state, &target));
    }
    Ok(sup)
}

/// One row of the tame-estimate table: `ratio = ‖β‖_s·γ / ‖f₀‖_{s+2τ+4}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TameAuditRow {
    pub eps: f64,
    pub s: f64,
    pub beta_norm: f64,
    pub f0_norm: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TameAuditReport {
    pub rows: Vec<TameAuditRow>,
    pub max_ratio: f64,
    /// max/min of the ratios over the whole (ε, s) table.
    pub stability: f64,
    /// max/min of the ratios across ε, per s value.
    pub per_s_stability: Vec<(f64, f64)>,
    pub all_converged: bool,
}

/// Scale `base_f0` through the ε ladder, straighten each, and tabulate the
/// tame ratios `‖β‖_s·γ/‖f₀‖_{s+2τ+4}`.
pub fn tame_audit(
    xi: &[f64],
    base_f0: &FourierField,
    constants: &SchemeConstants,
    eps_ladder: &[f64],
    s_values: &[f64],
) -> Result<TameAuditReport, VerifyError> {
    let loss = 2.0 * constants.tau + 4.0;
    let mut rows = Vec::new();
    let mut all_converged = true;
    for &eps in eps_ladder {
        let f0 = base_f0.scale(eps);
        match kam_iterate(xi, &f0, constants)? {
            KamOutcome::Converged(r) => {
                for &s in s_values {
                    let f0_norm = f0.sobolev_norm(s + loss);
                    if f0_norm == 0.0 {
                        continue; // 0/0 convention: skipped row
                    }
                    let beta_norm = r.beta().sobolev_norm(s);
                    rows.push(TameAuditRow {
                        eps,
                        s,
                        beta_norm,
                        f0_norm,
                        ratio: beta_norm * constants.gamma / f0_norm,
                    });
                }
            }
            KamOutcome::Excluded { .. } => {
                all_converged = false;
            }
        }
    }
    let positive: Vec<f64> = rows.iter().map(|r| r.ratio).filter(|&r| r > 0.0).collect();
    let max_ratio = positive.iter().copied().fold(0.0f64, f64::max);
    let min_ratio = positive.iter().copied().fold(f64::INFINITY, f64::min);
    let stability = if positive.is_empty() {
        1.0
    } else {
        max_ratio / min_ratio
    };
    let mut per_s_stability = Vec::new();
    for &s in s_values {
        let rs: Vec<f64> = rows
            .iter()
            .filter(|r| r.s == s && r.ratio > 0.0)
            .map(|r| r.ratio)
            .collect();
        if !rs.is_empty() {
            let hi = rs.iter().copied().fold(0.0f64, f64::max);
            let lo = rs.iter().copied().fold(f64::INFINITY, f64::min);
            per_s_stability.push((s, hi / lo));
        }
    }
    Ok(TameAuditReport {
        rows,
        max_ratio,
        stability,
        per_s_stability,
        all_converged,
    })
}

/// Two-perturbation comparison at a fixed ξ.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LipschitzAuditReport {
    /// False when either run failed to converge at this ξ.
    pub comparable: bool,
    /// `|Δ₁₂ α_∞|`.
    pub delta_alpha: f64,
    /// `2|Δ₁₂⟨f₀⟩|`.
    pub two_delta_mean: f64,
    /// `‖Δ₁₂β‖_{s₀−1}`.
    pub delta_beta_low: f64,
    /// `‖Δ₁₂f₀‖_{s₀+b}`.
    pub delta_f0_high: f64,
    /// `‖Δ₁₂β‖_{s₀−1}·γ / ‖Δ₁₂f₀‖_{s₀+b}`.
    pub measured_c: f64,
}

pub fn lipschitz_audit(
    xi: &[f64],
    f0_a: &FourierField,
    f0_b: &FourierField,
    constants: &SchemeConstants,
) -> Result<LipschitzAuditReport, VerifyError> {
    let run_a = kam_iterate(xi, f0_a, constants)?;
    let run_b = kam_iterate(xi, f0_b, constants)?;
    let (ra, rb) = match (run_a, run_b) {
        (KamOutcome::Converged(a), KamOutcome::Converged(b)) => (a, b),
        _ => {
            return Ok(LipschitzAuditReport {
                comparable: false,
                delta_alpha: f64::NAN,
                two_delta_mean: f64::NAN,
                delta_beta_low: f64::NAN,
                delta_f0_high: f64::NAN,
                measured_c: f64::NAN,
            })
        }
    };
    let delta_alpha = ra
        .alpha_inf
        .iter()
        .zip(&rb.alpha_inf)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let mean_a = f0_a.average()?;
    let mean_b = f0_b.average()?;
    let two_delta_mean = 2.0
        * mean_a
            .iter()
            .zip(&mean_b)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
    let delta_beta_low = ra
        .beta()
        .sub(rb.beta())?
        .sobolev_norm(constants.s0 - 1.0);
    let delta_f0_high = f0_a.sub(f0_b)?.sobolev_norm(constants.s0 + constants.b_exp);
    let measured_c = if delta_f0_high > 0.0 {
        delta_beta_low * constants.gamma / delta_f0_high
    } else {
        0.0
    };
    Ok(LipschitzAuditReport {
        comparable: true,
        delta_alpha,
        two_delta_mean,
        delta_beta_low,
        delta_f0_high,
        measured_c,
    })
}
