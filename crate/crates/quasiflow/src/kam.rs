//! The conjugation step and the quadratic iteration that straighten a
//! perturbed constant vector field `(ξ + f₀(θ))·∂θ` to `α_∞·∂θ`.
//!
//! One step at truncation `K`: solve `α·∂θ g + Π_K f = ⟨f⟩` by Fourier
//! division (possible when `|α·k| > γ/⟨k⟩^τ` on the ℓ¹ ball `|k|₁ ≤ K`),
//! push the field forward by `Φ: θ ↦ θ + g(θ)`:
//!
//! ```text
//! α₊ = α + ⟨f⟩,      f₊ = (Π_K^⊥ f + (f·∂θ) g) ∘ Φ⁻¹,
//! ```
//!
//! which contracts `‖f‖` quadratically. The iteration runs the step over the
//! super-exponential schedule `K_n = K₀^{(3/2)ⁿ}` (capped once the projector
//! is total on the working box), re-checking the diophantine condition on the
//! drifting `α_n` before every step; a failure excludes the parameter at that
//! step. The accumulated change of variables obeys `Ψ_{n+1} = Φ_{n+1} ∘ Ψ_n`,
//! i.e. `h_{n+1} = h_n + g_{n+1}∘(Id + h_n)`.

use crate::compose::{compose_displaced, ComposeOptions};
use crate::diffeo::{advect, DiffeoError, TorusDiffeo};
use crate::fourier::{norm_l1, weight_l1, FourierError, FourierField, DEFAULT_PRUNE_REL};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

const STEP_INVERSE_TOL: f64 = 1e-12;
const STEP_INVERSE_ITERS: usize = 200;
/// Analysis noise (~1e-16 of the dominant amplitude per transform) spreads
/// across the whole working box; trimming the accumulated displacement at
/// this relative level recovers its genuine spectral support.
const BETA_PRUNE_REL: f64 = 1e-13;

#[derive(Debug, Error)]
pub enum KamError {
    #[error("scheme constants violate: {inequality}")]
    InvalidConstants { inequality: String },
    #[error("frequency fails the diophantine condition at k = {k:?} (|α·k| = {value:.3e})")]
    NotDiophantine { k: Vec<i32>, value: f64 },
    #[error("small divisor at k = {k:?}: |α·k| = {divisor:.3e} below γ/⟨k⟩^τ")]
    SmallDivisor { k: Vec<i32>, divisor: f64 },
    #[error("{context}: smallness {value:.3e} exceeds threshold {threshold:.3e}")]
    SmallnessViolated {
        context: &'static str,
        value: f64,
        threshold: f64,
    },
    #[error("iteration diverged at step {step}: {reason}")]
    Diverged {
        step: usize,
        reason: String,
        records: Vec<KamStepRecord>,
    },
    #[error(transparent)]
    Diffeo(#[from] DiffeoError),
    #[error(transparent)]
    Fourier(#[from] FourierError),
}

/// All scheme constants. `validate` enforces the structural inequalities the
/// iteration relies on; smallness thresholds (`eta_star`, `step_delta`) are
/// empirical knobs, disabled by default, with the divergence guard acting as
/// the operative failure detector.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchemeConstants {
    pub n_dim: usize,
    pub tau: f64,
    pub s0: f64,
    pub s1: f64,
    pub gamma: f64,
    pub k0: u32,
    pub chi: f64,
    pub mu: f64,
    pub rho: f64,
    pub kappa: f64,
    pub b_exp: f64,
    pub max_steps: usize,
    pub convergence_tol: f64,
    pub divergence_guard: f64,
    /// Working spectral box for the iterates (per-axis ℓ∞ truncation).
    pub k_box: i32,
    /// Entry gate `γ⁻¹‖f₀‖_{s₁} ≤ η⋆`.
    pub eta_star: f64,
    /// Per-step gate `γ⁻¹K^{2τ+2s₀+1}‖f‖_{s₀} ≤ δ`.
    pub step_delta: f64,
}

impl SchemeConstants {
    /// Minimal constants satisfying every inequality for dimension `n`.
    pub fn defaults(n: usize, gamma: f64, k0: u32) -> Self {
        let tau = (n + 2) as f64;
        let s0 = (n / 2 + 3) as f64;
        let mu = (4.0 * tau + 2.0 * s0 + 4.0) + 1.0;
        let rho = (2.0 * tau + 2.0 * s0 + 1.0) + 1.0;
        let kappa = (8.0 * tau + 2.0 * s0 + 4.0) + 1.0;
        let chi = 1.5;
        let s1 = (chi * mu + s0 + 0.5).ceil();
        let b_exp = (mu * chi + kappa + 1.0 + 0.5).ceil();
        SchemeConstants {
            n_dim: n,
            tau,
            s0,
            s1,
            gamma,
            k0,
            chi,
            mu,
            rho,
            kappa,
            b_exp,
            max_steps: 12,
            convergence_tol: 1e-11,
            divergence_guard: 1e3,
            k_box: 4 * k0 as i32,
            eta_star: f64::INFINITY,
            step_delta: f64::INFINITY,
        }
    }

    pub fn validate(&self) -> Result<(), KamError> {
        let fail = |ineq: &str| -> Result<(), KamError> {
            Err(KamError::InvalidConstants {
                inequality: ineq.to_string(),
            })
        };
        if self.n_dim < 1 {
            return fail("N ≥ 1");
        }
        if self.tau != (self.n_dim + 2) as f64 {
            return fail("tau = N + 2");
        }
        if self.s0 < (self.n_dim / 2 + 3) as f64 {
            return fail("s0 ≥ ⌊N/2⌋ + 3");
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return fail("gamma ∈ (0, 1)");
        }
        if self.chi != 1.5 {
            return fail("chi = 3/2");
        }
        if self.mu <= 4.0 * self.tau + 2.0 * self.s0 + 4.0 {
            return fail("mu > 4·tau + 2·s0 + 4");
        }
        if self.rho <= 2.0 * self.tau + 2.0 * self.s0 + 1.0 {
            return fail("rho > 2·tau + 2·s0 + 1");
        }
        if self.s1 <= self.chi * self.mu + self.s0 {
            return fail("s1 > chi·mu + s0");
        }
        if self.kappa <= 8.0 * self.tau + 2.0 * self.s0 + 4.0 {
            return fail("kappa > 8·tau + 2·s0 + 4");
        }
        if self.b_exp <= self.mu * self.chi + self.kappa + 1.0 {
            return fail("b > mu·chi + kappa + 1");
        }
        if self.k0 < 2 {
            return fail("K0 ≥ 2");
        }
        if self.k_box < self.k0 as i32 {
            return fail("K_box ≥ K0");
        }
        if self.max_steps == 0 {
            return fail("max_steps ≥ 1");
        }
        if !(self.convergence_tol > 0.0) {
            return fail("convergence_tol > 0");
        }
        if !(self.divergence_guard > 1.0) {
            return fail("divergence_guard > 1");
        }
        Ok(())
    }

    /// `K_n = ⌈K₀^{(3/2)ⁿ}⌉`, strictly increasing, capped at `N·K_box`
    /// (the ℓ¹ radius at which the projector becomes total on the box).
    pub fn truncation(&self, n: usize, working_k_box: i32) -> i64 {
        let cap = (self.n_dim as i64) * working_k_box as i64;
        let exponent = self.chi.powi(n as i32) * (self.k0 as f64).log2();
        if exponent > 62.0 {
            return cap;
        }
        let raw = exponent.exp2().ceil() as i64;
        // Monotonicity guard: consecutive ceilings can collide for tiny K0.
        raw.max(self.k0 as i64 + n as i64).min(cap)
    }
}

/// Exhaustive diophantine check `|α·k| > threshold/⟨k⟩^τ` over the ℓ¹ ball
/// `0 < |k|₁ ≤ K`.
pub fn diophantine_ok(alpha: &[f64], gamma_threshold: f64, tau: f64, k_max: i64) -> bool {
    first_resonance(alpha, gamma_threshold, tau, k_max).is_none()
}

/// First (lexicographically) resonant mode, if any.
pub fn first_resonance(
    alpha: &[f64],
    gamma_threshold: f64,
    tau: f64,
    k_max: i64,
) -> Option<(Vec<i32>, f64)> {
    let n = alpha.len();
    let mut k = vec![0i32; n];
    find_resonance_rec(alpha, gamma_threshold, tau, k_max, &mut k, 0, 0.0, false)
}

#[allow(clippy::too_many_arguments)]
fn find_resonance_rec(
    alpha: &[f64],
    gamma_threshold: f64,
    tau: f64,
    budget: i64,
    k: &mut Vec<i32>,
    axis: usize,
    partial_dot: f64,
    nonzero_seen: bool,
) -> Option<(Vec<i32>, f64)> {
    let n = alpha.len();
    if axis == n {
        if !nonzero_seen {
            return None;
        }
        let value = partial_dot.abs();
        if value <= gamma_threshold / weight_l1(k).powf(tau) {
            return Some((k.clone(), value));
        }
        return None;
    }
    // Only the canonical half (first nonzero component positive): |α·k| is even in k.
    let lo = if nonzero_seen { -budget } else { 0 };
    for v in lo..=budget {
        k[axis] = v as i32;
        let found = find_resonance_rec(
            alpha,
            gamma_threshold,
            tau,
            budget - v.abs(),
            k,
            axis + 1,
            partial_dot + v as f64 * alpha[axis],
            nonzero_seen || v != 0,
        );
        if found.is_some() {
            return found;
        }
    }
    k[axis] = 0;
    None
}

/// Certified membership test for the limit Cantor set, at threshold `2γ`.
pub fn check_final_set(alpha: &[f64], constants: &SchemeConstants, k_check: i64) -> bool {
    diophantine_ok(alpha, 2.0 * constants.gamma, constants.tau, k_check)
}

/// Solve `α·∂θ g + Π_K f = ⟨f⟩`: `g_k = −f_k/(i α·k)` for `0 < |k|₁ ≤ K`.
pub fn solve_homological(
    f: &FourierField,
    alpha: &[f64],
    k_max: i64,
    gamma: f64,
    tau: f64,
) -> Result<FourierField, KamError> {
    let mut g = FourierField::zero(
        f.dim_domain(),
        f.dim_range(),
        f.k_box().min(k_max.min(i32::MAX as i64) as i32),
    );
    for (k, c) in f.modes() {
        let l1 = norm_l1(k);
        if l1 == 0 || l1 > k_max {
            continue;
        }
        let dot: f64 = k.iter().zip(alpha).map(|(&ki, &a)| ki as f64 * a).sum();
        if !(dot.abs() > gamma / weight_l1(k).powf(tau)) {
            return Err(KamError::SmallDivisor {
                k: k.clone(),
                divisor: dot.abs(),
            });
        }
        let divisor = Complex64::new(0.0, dot);
        let coeff: Vec<Complex64> = c.iter().map(|z| -z / divisor).collect();
        g.set_mode(k, &coeff);
    }
    g.assert_hermitian();
    Ok(g)
}

/// One conjugation step at truncation `K`.
#[derive(Debug, Clone)]
pub struct KamStepResult {
    pub alpha_plus: Vec<f64>,
    pub f_plus: FourierField,
    pub g: FourierField,
    pub f_plus_norm_s0: f64,
    pub f_plus_norm_s1: f64,
}

pub fn kam_step(
    alpha: &[f64],
    f: &FourierField,
    constants: &SchemeConstants,
    k_max: i64,
    working_k_box: i32,
) -> Result<KamStepResult, KamError> {
    let smallness = constants.gamma.recip()
        * (k_max as f64).powf(2.0 * constants.tau + 2.0 * constants.s0 + 1.0)
        * f.sobolev_norm(constants.s0);
    if smallness > constants.step_delta {
        return Err(KamError::SmallnessViolated {
            context: "kam step",
            value: smallness,
            threshold: constants.step_delta,
        });
    }
    if let Some((k, value)) = first_resonance(alpha, constants.gamma, constants.tau, k_max) {
        return Err(KamError::NotDiophantine { k, value });
    }
    let g = solve_homological(f, alpha, k_max, constants.gamma, constants.tau)?;
    let phi = TorusDiffeo::new(g.clone())?.with_inverse(STEP_INVERSE_TOL, STEP_INVERSE_ITERS)?;
    let mut transported = f.project_complement(k_max).add(&advect(f, &g)?)?;
    transported.prune(DEFAULT_PRUNE_REL);
    let opts = ComposeOptions {
        out_k_box: working_k_box,
        prune_rel: DEFAULT_PRUNE_REL,
        tail_guard: Some(1e-10),
    };
    let f_plus = phi.compose_function_inverse_with(&transported, &opts)?;
    let mean = f.average()?;
    let alpha_plus: Vec<f64> = alpha.iter().zip(&mean).map(|(a, b)| a + b).collect();
    let f_plus_norm_s0 = f_plus.sobolev_norm(constants.s0);
    let f_plus_norm_s1 = f_plus.sobolev_norm(constants.s1);
    Ok(KamStepResult {
        alpha_plus,
        f_plus,
        g,
        f_plus_norm_s0,
        f_plus_norm_s1,
    })
}

/// Per-step diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KamStepRecord {
    pub n: usize,
    pub k_n: i64,
    pub delta_s0: f64,
    pub delta_s1: f64,
    pub alpha: Vec<f64>,
    pub survived: bool,
}

/// Output of a converged iteration.
#[derive(Debug, Clone)]
pub struct StraighteningResult {
    pub xi: Vec<f64>,
    pub alpha_inf: Vec<f64>,
    /// `Ψ: θ ↦ θ + β(θ)` with cached inverse; `Ψ_* X₀ = α_∞·∂θ`.
    pub psi: TorusDiffeo,
    pub iterations: usize,
    pub final_residual: f64,
    pub steps: Vec<KamStepRecord>,
}

impl StraighteningResult {
    pub fn beta(&self) -> &FourierField {
        self.psi.displacement()
    }

    pub fn max_truncation(&self) -> i64 {
        self.steps.iter().map(|r| r.k_n).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone)]
pub enum KamOutcome {
    Converged(Box<StraighteningResult>),
    Excluded {
        step: usize,
        steps: Vec<KamStepRecord>,
    },
}

/// Sup over an oversampled grid of
/// `|ξ + f₀(θ) + (ξ + f₀(θ))·∂θ β(θ) − α_∞|`
/// (the composition with `Ψ⁻¹` is unnecessary: the target is constant).
pub fn conjugacy_residual(
    xi: &[f64],
    f0: &FourierField,
    beta: &FourierField,
    alpha_inf: &[f64],
) -> Result<f64, KamError> {
    let n = xi.len();
    let mut varying = f0.add(&beta.directional_derivative(xi))?;
    if !f0.is_zero() && !beta.is_zero() {
        varying = varying.add(&advect(f0, beta)?)?;
    }
    let shift: Vec<f64> = xi.iter().zip(alpha_inf).map(|(a, b)| a - b).collect();
    let res = crate::fourier::sup_grid(n, varying.k_box().max(1));
    let grid = varying.synthesize(&res)?;
    let mut sup: f64 = 0.0;
    for p in 0..grid.num_points() {
        let mut acc = 0.0;
        for (c, sh) in shift.iter().enumerate() {
            let v = grid.value(p, c) + sh;
            acc += v * v;
        }
        sup = sup.max(acc.sqrt());
    }
    Ok(sup)
}

/// Run the full iteration at a single parameter `ξ`.
pub fn kam_iterate(
    xi: &[f64],
    f0: &FourierField,
    constants: &SchemeConstants,
) -> Result<KamOutcome, KamError> {
    constants.validate()?;
    if f0.dim_domain() != constants.n_dim || f0.dim_range() != constants.n_dim {
        return Err(KamError::Fourier(FourierError::ShapeMismatch(format!(
            "f0 must map T^{0} → R^{0}, got ({1}, {2})",
            constants.n_dim,
            f0.dim_domain(),
            f0.dim_range()
        ))));
    }
    let entry = constants.gamma.recip() * f0.sobolev_norm(constants.s1);
    if entry > constants.eta_star {
        return Err(KamError::SmallnessViolated {
            context: "kam iteration entry",
            value: entry,
            threshold: constants.eta_star,
        });
    }

    let working_k_box = constants.k_box.max(f0.k_box());
    let mut alpha = xi.to_vec();
    let mut f = f0.clone();
    let mut h: Option<FourierField> = None;
    let mut steps: Vec<KamStepRecord> = Vec::new();
    let mut prev_delta: Option<f64> = None;

    let h_opts = ComposeOptions {
        out_k_box: working_k_box,
        prune_rel: DEFAULT_PRUNE_REL,
        tail_guard: Some(1e-10),
    };

    for n in 0..=constants.max_steps {
        let delta_s0 = constants.gamma.recip() * f.sobolev_norm(constants.s0);
        let delta_s1 = constants.gamma.recip() * f.sobolev_norm(constants.s1);
        let k_n = constants.truncation(n, working_k_box);
        steps.push(KamStepRecord {
            n,
            k_n,
            delta_s0,
            delta_s1,
            alpha: alpha.clone(),
            survived: true,
        });

        if delta_s0 < constants.convergence_tol {
            let mut beta = h.unwrap_or_else(|| {
                FourierField::zero(constants.n_dim, constants.n_dim, 0)
            });
            beta.prune(BETA_PRUNE_REL);
            let psi = TorusDiffeo::new(beta)?.with_inverse(STEP_INVERSE_TOL, 2 * STEP_INVERSE_ITERS)?;
            let final_residual = conjugacy_residual(xi, f0, psi.displacement(), &alpha)?;
            return Ok(KamOutcome::Converged(Box::new(StraighteningResult {
                xi: xi.to_vec(),
                alpha_inf: alpha,
                psi,
                iterations: n,
                final_residual,
                steps,
            })));
        }

        if let Some(prev) = prev_delta {
            if delta_s0 > constants.divergence_guard * prev {
                return Err(KamError::Diverged {
                    step: n,
                    reason: format!(
                        "delta_s0 grew from {prev:.3e} to {delta_s0:.3e} (guard {})",
                        constants.divergence_guard
                    ),
                    records: steps,
                });
            }
        }
        prev_delta = Some(delta_s0);

        if n == constants.max_steps {
            return Err(KamError::Diverged {
                step: n,
                reason: format!(
                    "max_steps reached with delta_s0 = {delta_s0:.3e} ≥ tol {}",
                    constants.convergence_tol
                ),
                records: steps,
            });
        }

        if !diophantine_ok(&alpha, constants.gamma, constants.tau, k_n) {
            steps.last_mut().expect("nonempty").survived = false;
            return Ok(KamOutcome::Excluded { step: n, steps });
        }

        let step = kam_step(&alpha, &f, constants, k_n, working_k_box)?;
        h = Some(match h {
            None => step.g.clone(),
            Some(prev_h) => {
                let moved = compose_displaced(&step.g, &prev_h, &h_opts)?;
                prev_h.add(&moved)?
            }
        });
        alpha = step.alpha_plus;
        f = step.f_plus;
    }
    unreachable!("loop always returns")
}

/// Golden-pair frequency `(1, (1+√5)/2)`; the canonical strongly diophantine
/// test vector in two dimensions.
pub fn golden_pair() -> Vec<f64> {
    vec![1.0, (1.0 + 5f64.sqrt()) / 2.0]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fourier::random_field;

    fn golden_constants() -> SchemeConstants {
        SchemeConstants::defaults(2, 1e-2, 8)
    }

    fn golden_f0(amp: f64) -> FourierField {
        // f0 = amp·(sin(θ₁+θ₂), cos θ₁).
        FourierField::zero(2, 2, 1)
            .with_real_mode(&[1, 1], &[0.0, 0.0], &[amp, 0.0])
            .with_real_mode(&[1, 0], &[0.0, amp], &[0.0, 0.0])
    }

    #[test]
    fn constants_defaults_validate() {
        let c = golden_constants();
        c.validate().unwrap();
        assert_eq!(c.tau, 4.0);
        assert_eq!(c.s0, 4.0);
        let mut bad = c.clone();
        bad.mu = 20.0;
        let err = bad.validate().unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("mu > 4·tau + 2·s0 + 4"), "{msg}");
    }

    #[test]
    fn truncation_schedule_grows_and_caps() {
        let c = golden_constants();
        let k0 = c.truncation(0, 32);
        let k1 = c.truncation(1, 32);
        let k2 = c.truncation(2, 32);
        assert_eq!(k0, 8);
        assert_eq!(k1, 23); // ⌈8^1.5⌉ = ⌈22.6⌉
        assert_eq!(k2, 64); // ⌈8^2.25⌉ = 108, capped at N·K_box
        assert_eq!(c.truncation(9, 32), 64);
    }

    #[test]
    fn diophantine_examples() {
        // Exact resonance: α = (1, 1), k = (1, -1).
        assert!(!diophantine_ok(&[1.0, 1.0], 1e-3, 4.0, 2));
        let (k, v) = first_resonance(&[1.0, 1.0], 1e-3, 4.0, 2).unwrap();
        assert_eq!(v, 0.0);
        assert_eq!(k.iter().map(|x| x.abs()).sum::<i32>(), 2);
        // Golden pair survives a deep scan.
        assert!(diophantine_ok(&golden_pair(), 1e-3, 4.0, 64));
        // One frequency, away from zero: nothing can resonate.
        assert!(diophantine_ok(&[1.0], 0.5, 3.0, 100));
    }

    #[test]
    fn homological_zero_and_closed_form() {
        let alpha = golden_pair();
        let zero = FourierField::zero(2, 2, 4);
        let g = solve_homological(&zero, &alpha, 16, 1e-2, 4.0).unwrap();
        assert!(g.is_zero());

        // f = ε cos(k·θ) e₂ with k = (1, 1): g = -(ε/(α·k)) sin(k·θ) e₂.
        let eps = 1e-3;
        let f = FourierField::zero(2, 2, 1).with_real_mode(&[1, 1], &[0.0, eps], &[0.0, 0.0]);
        let g = solve_homological(&f, &alpha, 8, 1e-2, 4.0).unwrap();
        let dot = alpha[0] + alpha[1];
        let expected =
            FourierField::zero(2, 2, 1).with_real_mode(&[1, 1], &[0.0, 0.0], &[0.0, -eps / dot]);
        assert!(g.sub(&expected).unwrap().sobolev_norm(0.0) < 1e-18);
    }

    #[test]
    fn homological_identity_residual() {
        let alpha = golden_pair();
        for seed in 0..5u64 {
            let f = random_field(2, 2, 8, 16, 1.0, 900 + seed);
            let g = solve_homological(&f, &alpha, 16, 1e-2, 4.0).unwrap();
            // α·∂θ g + Π_K f − ⟨f⟩ must vanish.
            let mean = f.average().unwrap();
            let residual = g
                .directional_derivative(&alpha)
                .add(&f.project(16))
                .unwrap()
                .sub(&FourierField::constant(&mean, 2))
                .unwrap();
            let rel = residual.sobolev_norm(0.0) / f.sobolev_norm(0.0);
            assert!(rel < 1e-12, "residual {rel:e}");
        }
    }

    #[test]
    fn homological_refuses_small_divisor() {
        let f = FourierField::zero(2, 2, 1).with_real_mode(&[1, -1], &[1e-3, 0.0], &[0.0, 0.0]);
        let err = solve_homological(&f, &[1.0, 1.0], 4, 1e-2, 4.0).unwrap_err();
        assert!(matches!(err, KamError::SmallDivisor { .. }));
    }

    #[test]
    fn kam_step_zero_field_is_fixed_point() {
        let c = golden_constants();
        let f = FourierField::zero(2, 2, 4);
        let step = kam_step(&golden_pair(), &f, &c, 8, 32).unwrap();
        assert!(step.f_plus.is_zero());
        assert!(step.g.is_zero());
        assert_eq!(step.alpha_plus, golden_pair());
    }

    #[test]
    fn kam_step_single_mode_second_order() {
        // f = ε cos(k·θ) e₂, k = (1,1): to O(ε³),
        // f₊ = -(ε² k₂/(2 α·k)) (1 + cos(2k·θ)) e₂ and α₊ = α.
        let c = golden_constants();
        let alpha = golden_pair();
        let eps = 1e-3;
        let f = FourierField::zero(2, 2, 1).with_real_mode(&[1, 1], &[0.0, eps], &[0.0, 0.0]);
        let step = kam_step(&alpha, &f, &c, 8, 32).unwrap();
        assert_eq!(step.alpha_plus, alpha);
        let dot = alpha[0] + alpha[1];
        let lead = -eps * eps / (2.0 * dot);
        let expected = FourierField::zero(2, 2, 2)
            .with_real_mode(&[0, 0], &[0.0, lead], &[0.0, 0.0])
            .with_real_mode(&[2, 2], &[0.0, lead], &[0.0, 0.0]);
        let diff = step.f_plus.sub(&expected).unwrap().sobolev_norm(0.0);
        assert!(diff < 50.0 * eps.powi(3), "diff {diff:e}");
        // No energy left at the original mode beyond O(ε²·ε).
        let at_k = step.f_plus.coeff(&[1, 1]);
        let mag: f64 = at_k.iter().map(|z| z.norm()).sum();
        assert!(mag < 10.0 * eps * eps * eps, "mode at k survived: {mag:e}");
    }

    #[test]
    fn kam_step_quadratic_decay_bound() {
        // For f supported inside the ball (Π_K^⊥ f = 0):
        // ‖f₊‖_{s0} ≤ 10·γ⁻¹ K^{2τ+2} ‖f‖_{s0}².
        let c = golden_constants();
        let alpha = golden_pair();
        for seed in 0..3u64 {
            let mut f = random_field(2, 2, 4, 8, 1e-6 * c.gamma, 700 + seed);
            f = f.project(8);
            let step = kam_step(&alpha, &f, &c, 8, 32).unwrap();
            let bound = 10.0
                * c.gamma.recip()
                * 8f64.powf(2.0 * c.tau + 2.0)
                * f.sobolev_norm(c.s0).powi(2);
            assert!(
                step.f_plus_norm_s0 <= bound,
                "quadratic bound violated: {} > {bound}",
                step.f_plus_norm_s0
            );
        }
    }

    #[test]
    fn iterate_zero_field_converges_immediately() {
        let c = golden_constants();
        let f0 = FourierField::zero(2, 2, 1);
        match kam_iterate(&golden_pair(), &f0, &c).unwrap() {
            KamOutcome::Converged(r) => {
                assert_eq!(r.iterations, 0);
                assert_eq!(r.alpha_inf, golden_pair());
                assert!(r.beta().is_zero());
                assert!(r.final_residual < 1e-14);
            }
            _ => panic!("expected convergence"),
        }
    }

    #[test]
    fn iterate_golden2d_converges_with_small_residual() {
        let c = golden_constants();
        match kam_iterate(&golden_pair(), &golden_f0(1e-3), &c).unwrap() {
            KamOutcome::Converged(r) => {
                assert!(r.iterations <= 8, "iterations {}", r.iterations);
                assert!(r.final_residual < 1e-8, "residual {:e}", r.final_residual);
                // α_∞ stays within ‖f0‖-order of ξ.
                let drift: f64 = r
                    .alpha_inf
                    .iter()
                    .zip(golden_pair())
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                assert!(drift < 1e-2, "drift {drift}");
            }
            _ => panic!("expected convergence"),
        }
    }

    #[test]
    fn iterate_excludes_resonant_frequency() {
        let c = golden_constants();
        match kam_iterate(&[1.0, 1.0], &golden_f0(1e-3), &c).unwrap() {
            KamOutcome::Excluded { step, steps } => {
                assert_eq!(step, 0);
                assert!(!steps.last().unwrap().survived);
            }
            _ => panic!("expected exclusion"),
        }
    }

    #[test]
    fn reversible_input_gives_odd_beta() {
        // Even f0 (pure cosines) must produce an odd straightening displacement.
        let c = golden_constants();
        let f0 = FourierField::zero(2, 2, 1)
            .with_real_mode(&[1, 1], &[1e-3, 0.0], &[0.0, 0.0])
            .with_real_mode(&[1, 0], &[0.0, 1e-3], &[0.0, 0.0]);
        match kam_iterate(&golden_pair(), &f0, &c).unwrap() {
            KamOutcome::Converged(r) => {
                let beta = r.beta();
                let even = beta.add(&crate::diffeo::reflect(beta)).unwrap().sup_norm();
                assert!(even < 1e-10, "even part {even:e}");
            }
            _ => panic!("expected convergence"),
        }
    }

    #[test]
    fn final_set_check() {
        let c = golden_constants();
        assert!(check_final_set(&golden_pair(), &c, 256));
        assert!(!check_final_set(&[1.0, 1.0], &c, 16));
    }

    #[test]
    fn final_set_implies_per_step_sets() {
        // If α_∞ passes at 2γ up to K ≥ all executed K_n, every per-step
        // check at level γ on α_n also passes for the converged run.
        let c = golden_constants();
        match kam_iterate(&golden_pair(), &golden_f0(1e-3), &c).unwrap() {
            KamOutcome::Converged(r) => {
                let k_max = r.max_truncation();
                assert!(check_final_set(&r.alpha_inf, &c, 4 * k_max));
                for rec in &r.steps {
                    assert!(rec.survived);
                    assert!(diophantine_ok(&rec.alpha, c.gamma, c.tau, rec.k_n));
                }
            }
            _ => panic!("expected convergence"),
        }
    }
}
