//! Reducibility of quasi-periodic transport operators.
//!
//! The operator `ω·∂φ + (ζ + a₀(φ,x))·∂x` on T^{ν+d} embeds as the vector
//! field `(ξ + f₀)·∂θ` with `θ = (φ, x)`, `ξ = (ω, ζ)` and
//! `f₀ = (0, …, 0, a₀)`. Every object the iteration produces keeps zero
//! φ-components, so the straightened frequency splits as `α_∞ = (ω, m_∞)`
//! and the change of variables acts on `x` alone. The same change of
//! variables integrates the transport PDE (bounded Sobolev norms) and solves
//! the forced equation `ω·∂φ b + (m₀+a₀)·∂x b + f = c` by constant-
//! coefficient Fourier division.

use crate::compose::ComposeOptions;
use crate::diffeo::DiffeoError;
use crate::fourier::{weight_l1, FourierError, FourierField};
use crate::kam::{kam_iterate, KamError, KamOutcome, SchemeConstants, StraighteningResult};
use crate::parallel::par_map;
use crate::verify::{flow, VerifyError};
use crate::diffeo::VectorFieldOnTorus;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on the φ-components of the iterates (they vanish identically
/// in exact arithmetic).
const STRUCTURE_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("operator shape: {0}")]
    Shape(String),
    #[error("structural invariant violated: φ-components reached {value:.3e}")]
    StructureViolated { value: f64 },
    #[error("forced divisor |ω·ℓ + m_∞·j| = {divisor:.3e} below 2γ/⟨ℓ,j⟩^τ at (ℓ,j) = {k:?}")]
    ForcedSmallDivisor { k: Vec<i32>, divisor: f64 },
    #[error(transparent)]
    Kam(#[from] KamError),
    #[error(transparent)]
    Fourier(#[from] FourierError),
    #[error(transparent)]
    Diffeo(#[from] DiffeoError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
}

/// `ω·∂φ + (ζ + a₀(φ,x))·∂x` with `a₀: T^{ν+d} → R^d`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransportOperator {
    pub nu: usize,
    pub d: usize,
    pub omega: Vec<f64>,
    pub zeta: Vec<f64>,
    pub a0: FourierField,
}

impl TransportOperator {
    pub fn new(
        omega: Vec<f64>,
        zeta: Vec<f64>,
        a0: FourierField,
    ) -> Result<Self, TransportError> {
        let nu = omega.len();
        let d = zeta.len();
        if a0.dim_domain() != nu + d || a0.dim_range() != d {
            return Err(TransportError::Shape(format!(
                "a0 must map T^{} → R^{d}, got ({}, {})",
                nu + d,
                a0.dim_domain(),
                a0.dim_range()
            )));
        }
        Ok(TransportOperator { nu, d, omega, zeta, a0 })
    }

    pub fn xi(&self) -> Vec<f64> {
        let mut xi = self.omega.clone();
        xi.extend_from_slice(&self.zeta);
        xi
    }

    /// `f₀ = (0, …, 0, a₀)` on T^{ν+d}.
    pub fn embedded_field(&self) -> FourierField {
        let n = self.nu + self.d;
        let mut f0 = FourierField::zero(n, n, self.a0.k_box());
        for (k, c) in self.a0.modes() {
            let mut coeff = vec![Complex64::default(); n];
            coeff[self.nu..].copy_from_slice(c);
            f0.set_mode(k, &coeff);
        }
        f0
    }

    /// Extended autonomous field `(ω, ζ + a₀)` used by the characteristics.
    fn extended_vector_field(&self, sign: f64) -> Result<VectorFieldOnTorus, TransportError> {
        let mut constant = self.xi();
        constant.iter_mut().for_each(|v| *v *= sign);
        Ok(VectorFieldOnTorus::new(
            constant,
            self.embedded_field().scale(sign),
        )?)
    }
}

/// Constant-coefficient form produced by the reduction.
#[derive(Debug, Clone)]
pub struct ReducedTransport {
    pub m_inf: Vec<f64>,
    /// `β: T^{ν+d} → R^d`, the x-displacement.
    pub beta: FourierField,
    pub reduction_residual: f64,
    pub result: StraighteningResult,
}

#[derive(Debug, Clone)]
pub enum TransportOutcome {
    Reduced(Box<ReducedTransport>),
    Excluded {
        step: usize,
        steps: Vec<crate::kam::KamStepRecord>,
    },
}

fn slice_components(field: &FourierField, from: usize, to: usize) -> FourierField {
    let mut out = FourierField::zero(field.dim_domain(), to - from, field.k_box());
    for (k, c) in field.modes() {
        let part = &c[from..to];
        if part.iter().any(|z| z.norm_sqr() != 0.0) {
            out.set_mode(k, part);
        }
    }
    out
}

fn phi_component_sup(field: &FourierField, nu: usize) -> f64 {
    let mut sup = 0.0f64;
    for (_, c) in field.modes() {
        for z in &c[..nu] {
            sup = sup.max(z.norm());
        }
    }
    sup
}

/// Straighten the operator: for `(ω, ζ)` in the surviving set this produces
/// `m_∞` and `β` with `ω·∂φβ + (ζ + a₀)·(1 + ∂xβ) = m_∞` up to the
/// reported residual.
pub fn reduce(
    op: &TransportOperator,
    constants: &SchemeConstants,
) -> Result<TransportOutcome, TransportError> {
    let f0 = op.embedded_field();
    let xi = op.xi();
    match kam_iterate(&xi, &f0, constants)? {
        KamOutcome::Excluded { step, steps } => Ok(TransportOutcome::Excluded { step, steps }),
        KamOutcome::Converged(result) => {
            let phi_sup = phi_component_sup(result.beta(), op.nu);
            let alpha_drift = result.alpha_inf[..op.nu]
                .iter()
                .zip(&op.omega)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            if phi_sup > STRUCTURE_TOL || alpha_drift > STRUCTURE_TOL {
                return Err(TransportError::StructureViolated {
                    value: phi_sup.max(alpha_drift),
                });
            }
            let m_inf = result.alpha_inf[op.nu..].to_vec();
            let beta = slice_components(result.beta(), op.nu, op.nu + op.d);
            Ok(TransportOutcome::Reduced(Box::new(ReducedTransport {
                m_inf,
                beta,
                reduction_residual: result.final_residual,
                result: *result,
            })))
        }
    }
}

/// One norm sample of the evolution.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NormSample {
    pub t: f64,
    pub s: f64,
    pub norm: f64,
}

/// Uniform x-grid nodes for a d-dimensional torus.
fn x_nodes(d: usize, resolution: usize) -> Vec<Vec<f64>> {
    let grid = crate::grid::GridSamples::zeros(&vec![resolution; d], 1);
    (0..grid.num_points()).map(|p| grid.node(p)).collect()
}

/// Solve `∂t u + (ζ + a₀(ωt, x))·∂x u = 0` by backward characteristics and
/// record `‖u(t)‖_{H^s_x}` over the time grid.
pub fn evolve_characteristics(
    op: &TransportOperator,
    u0: &FourierField,
    t_grid: &[f64],
    s_list: &[f64],
    resolution: usize,
) -> Result<Vec<NormSample>, TransportError> {
    let (u, _) = evolve_impl(op, u0, t_grid, s_list, resolution, None)?;
    Ok(u)
}

/// Same, additionally tracking the reduced variable `v = Ψ⁻¹ u` whose norms
/// stay constant when the reduction holds.
pub fn evolve_with_reduced(
    op: &TransportOperator,
    u0: &FourierField,
    t_grid: &[f64],
    s_list: &[f64],
    resolution: usize,
    reduced: &ReducedTransport,
) -> Result<(Vec<NormSample>, Vec<NormSample>), TransportError> {
    let (u, v) = evolve_impl(op, u0, t_grid, s_list, resolution, Some(reduced))?;
    Ok((u, v.expect("reduced history requested")))
}

/// Characteristic step size: `min(2π/(8|ζ|_∞ + 1), 0.01)`.
fn characteristic_dt(op: &TransportOperator) -> f64 {
    let zsup = op.zeta.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    (std::f64::consts::TAU / (8.0 * zsup + 1.0)).min(0.01)
}

#[allow(clippy::type_complexity)]
fn evolve_impl(
    op: &TransportOperator,
    u0: &FourierField,
    t_grid: &[f64],
    s_list: &[f64],
    resolution: usize,
    reduced: Option<&ReducedTransport>,
) -> Result<(Vec<NormSample>, Option<Vec<NormSample>>), TransportError> {
    if u0.dim_domain() != op.d {
        return Err(TransportError::Shape(format!(
            "u0 must live on T^{}, got T^{}",
            op.d,
            u0.dim_domain()
        )));
    }
    let dt = characteristic_dt(op);
    let nodes = x_nodes(op.d, resolution);
    let backward = op.extended_vector_field(-1.0)?;
    let k_ana = (resolution as i32 - 2) / 2;

    let per_time = par_map(t_grid, |&t| -> Result<(Vec<NormSample>, Vec<NormSample>), TransportError> {
        let mut u_vals = crate::grid::GridSamples::zeros(&vec![resolution; op.d], 1);
        let mut v_vals = crate::grid::GridSamples::zeros(&vec![resolution; op.d], 1);
        for (p, node) in nodes.iter().enumerate() {
            let uval = backtrack_value(op, u0, &backward, t, node, dt)?;
            u_vals.component_mut(0)[p] = uval;
            if let Some(red) = reduced {
                let x_star = invert_x_slice(red, &op.omega, t, node)?;
                let vval = backtrack_value(op, u0, &backward, t, &x_star, dt)?;
                v_vals.component_mut(0)[p] = vval;
            }
        }
        let mut u_rows = Vec::new();
        let mut v_rows = Vec::new();
        let uf = FourierField::analyze(&u_vals, k_ana)?;
        for &s in s_list {
            u_rows.push(NormSample { t, s, norm: uf.sobolev_norm(s) });
        }
        if reduced.is_some() {
            let vf = FourierField::analyze(&v_vals, k_ana)?;
            for &s in s_list {
                v_rows.push(NormSample { t, s, norm: vf.sobolev_norm(s) });
            }
        }
        Ok((u_rows, v_rows))
    });

    let mut u_hist = Vec::new();
    let mut v_hist = Vec::new();
    for item in per_time {
        let (u_rows, v_rows) = item?;
        u_hist.extend(u_rows);
        v_hist.extend(v_rows);
    }
    Ok((u_hist, reduced.map(|_| v_hist)))
}

/// `u(t, x) = u₀(x(0))` where `x(s)` solves the characteristic ODE through
/// `(t, x)`; integrates the extended field backward so that the angle part
/// lands on `φ = 0` exactly.
fn backtrack_value(
    op: &TransportOperator,
    u0: &FourierField,
    backward: &VectorFieldOnTorus,
    t: f64,
    x: &[f64],
    dt: f64,
) -> Result<f64, TransportError> {
    if t == 0.0 {
        return Ok(u0.evaluate_one(x)?[0]);
    }
    let mut theta0: Vec<f64> = op.omega.iter().map(|w| w * t).collect();
    theta0.extend_from_slice(x);
    let trace = flow(backward, &theta0, t, dt, 1)?;
    let end = trace.final_state();
    Ok(u0.evaluate_one(&end[op.nu..])?[0])
}

/// Solve `x + β(ωt, x) = y` for `x` by fixed point.
fn invert_x_slice(
    reduced: &ReducedTransport,
    omega: &[f64],
    t: f64,
    y: &[f64],
) -> Result<Vec<f64>, TransportError> {
    let phi: Vec<f64> = omega.iter().map(|w| w * t).collect();
    let mut x = y.to_vec();
    for _ in 0..100 {
        let mut point = phi.clone();
        point.extend_from_slice(&x);
        let b = reduced.beta.evaluate_one(&point)?;
        let mut next = Vec::with_capacity(y.len());
        let mut delta = 0.0f64;
        for i in 0..y.len() {
            let xi = y[i] - b[i];
            delta = delta.max((xi - x[i]).abs());
            next.push(xi);
        }
        x = next;
        if delta < 1e-13 {
            break;
        }
    }
    Ok(x)
}

/// Solution of the forced equation `ω·∂φ b + (m₀+a₀)·∂x b + f = c`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForcedSolution {
    pub b: FourierField,
    pub c: Vec<f64>,
    /// Sup of the equation residual on an oversampled grid.
    pub residual: f64,
    /// Smallest divisor `|ω·ℓ + m_∞·j|` actually divided by.
    pub min_divisor: f64,
}

/// Solve the forced equation through the straightening.
///
/// With `T w = w∘(Id_φ, x + β)` the reduction gives the exact operator
/// identity `L∘T = T∘L_∞`, `L_∞ = ω·∂φ + m_∞·∂x`. Hence
/// `c = ⟨f∘Ψ⁻¹⟩`, `h = L_∞⁻¹[c − f∘Ψ⁻¹]` by the division
/// `h_{ℓj} = g_{ℓj}/(i(ω·ℓ + m_∞·j))`, and `b = h∘Ψ`.
pub fn forced_solve(
    op: &TransportOperator,
    f: &FourierField,
    reduced: &ReducedTransport,
) -> Result<ForcedSolution, TransportError> {
    let n = op.nu + op.d;
    if f.dim_domain() != n || f.dim_range() != 1 {
        return Err(TransportError::Shape(format!(
            "forcing must map T^{n} → R, got ({}, {})",
            f.dim_domain(),
            f.dim_range()
        )));
    }
    let psi = &reduced.result.psi;
    let k_work = f.k_box() + reduced.beta.k_box().max(1) + 8;
    let opts = ComposeOptions::new(k_work);

    let f_pulled = psi.compose_function_inverse_with(f, &opts)?;
    let c = f_pulled.average()?;
    let g = FourierField::constant(&c, n).sub(&f_pulled)?;

    // Constant-coefficient division over (ℓ, j) ≠ 0.
    let mut h = FourierField::zero(n, 1, g.k_box());
    let mut min_divisor = f64::INFINITY;
    for (k, coeff) in g.modes() {
        if k.iter().all(|&x| x == 0) {
            continue;
        }
        let ell = &k[..op.nu];
        let j = &k[op.nu..];
        let dot: f64 = ell
            .iter()
            .zip(&op.omega)
            .map(|(&a, &b)| a as f64 * b)
            .sum::<f64>()
            + j.iter()
                .zip(&reduced.m_inf)
                .map(|(&a, &b)| a as f64 * b)
                .sum::<f64>();
        min_divisor = min_divisor.min(dot.abs());
        let coeffs: Vec<Complex64> = coeff
            .iter()
            .map(|z| z / Complex64::new(0.0, dot))
            .collect();
        h.set_mode(k, &coeffs);
    }
    let b = psi.compose_function_with(&h, &opts)?;

    let residual = forced_residual(op, f, &b, &c)?;
    Ok(ForcedSolution {
        b,
        c,
        residual,
        min_divisor,
    })
}

/// Guarded variant: refuse divisors at or below `2γ/⟨ℓ,j⟩^τ`.
pub fn forced_solve_guarded(
    op: &TransportOperator,
    f: &FourierField,
    reduced: &ReducedTransport,
    gamma: f64,
    tau: f64,
) -> Result<ForcedSolution, TransportError> {
    // Pre-scan the pulled-back spectrum for forbidden divisors.
    let psi = &reduced.result.psi;
    let k_work = f.k_box() + reduced.beta.k_box().max(1) + 8;
    let opts = ComposeOptions::new(k_work);
    let f_pulled = psi.compose_function_inverse_with(f, &opts)?;
    for (k, _) in f_pulled.modes() {
        if k.iter().all(|&x| x == 0) {
            continue;
        }
        let dot: f64 = k[..op.nu]
            .iter()
            .zip(&op.omega)
            .map(|(&a, &b)| a as f64 * b)
            .sum::<f64>()
            + k[op.nu..]
                .iter()
                .zip(&reduced.m_inf)
                .map(|(&a, &b)| a as f64 * b)
                .sum::<f64>();
        if !(dot.abs() > 2.0 * gamma / weight_l1(k).powf(tau)) {
            return Err(TransportError::ForcedSmallDivisor {
                k: k.clone(),
                divisor: dot.abs(),
            });
        }
    }
    forced_solve(op, f, reduced)
}

/// Sup over an oversampled grid of `|ω·∂φ b + (ζ + a₀)·∂x b + f − c|`.
pub fn forced_residual(
    op: &TransportOperator,
    f: &FourierField,
    b: &FourierField,
    c: &[f64],
) -> Result<f64, TransportError> {
    let xi = op.xi();
    let mut r = b.directional_derivative(&xi).add(f)?;
    if !op.a0.is_zero() && !b.is_zero() {
        let grad_x: Vec<FourierField> =
            (0..op.d).map(|j| b.differentiate(op.nu + j)).collect();
        let grad_field = FourierField::from_components(&grad_x)?;
        r = r.add(&op.a0.dot(&grad_field)?)?;
    }
    let res = crate::fourier::sup_grid(op.nu + op.d, r.k_box().max(1));
    let grid = r.synthesize(&res)?;
    let mut sup = 0.0f64;
    for p in 0..grid.num_points() {
        sup = sup.max((grid.value(p, 0) - c[0]).abs());
    }
    Ok(sup)
}
