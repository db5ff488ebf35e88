//! Torus diffeomorphisms `Φ: θ ↦ θ + h(θ)`: inversion by fixed point,
//! action on functions by composition, composition of maps, and pushforward
//! of vector fields.
//!
//! Construction requires `|h|_{1,∞} = |h|_∞ + |Dh|_∞ ≤ 1/2` (sup norms taken
//! on a 4× oversampled grid), which makes `Id + h` a diffeomorphism and the
//! inverse-displacement iteration `h̃ ← −h∘(Id + h̃)` a contraction.

use crate::compose::{compose_displaced, ComposeOptions};
use crate::fourier::{FourierError, FourierField};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const INVERSE_TOL: f64 = 1e-12;
pub const INVERSE_MAX_ITERS: usize = 200;
/// Extra box width granted to the inverse displacement; the inverse of a
/// trigonometric polynomial is not one, and its spectrum needs headroom.
const INVERSE_K_MARGIN: i32 = 16;
/// Headroom for generic (non-retruncated) compositions.
const COMPOSE_K_MARGIN: i32 = 24;

#[derive(Debug, Error)]
pub enum DiffeoError {
    #[error("displacement C¹ norm {norm:.3e} exceeds 1/2")]
    DisplacementTooLarge { norm: f64 },
    #[error("inverse iteration stalled at residual {residual:.3e} after {iters} steps (tol {tol:.1e})")]
    InverseNotConverged { tol: f64, iters: usize, residual: f64 },
    #[error("inverse displacement not cached")]
    InverseMissing,
    #[error("displacement must map T^N → R^N, got T^{n} → R^{m}")]
    NotSquare { n: usize, m: usize },
    #[error(transparent)]
    Fourier(#[from] FourierError),
}

/// Vector field `X = (α + f(θ))·∂/∂θ` on T^N.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VectorFieldOnTorus {
    pub constant_part: Vec<f64>,
    pub periodic_part: FourierField,
}

impl VectorFieldOnTorus {
    pub fn new(constant_part: Vec<f64>, periodic_part: FourierField) -> Result<Self, DiffeoError> {
        if periodic_part.dim_domain() != constant_part.len()
            || periodic_part.dim_range() != constant_part.len()
        {
            return Err(DiffeoError::NotSquare {
                n: periodic_part.dim_domain(),
                m: periodic_part.dim_range(),
            });
        }
        Ok(VectorFieldOnTorus {
            constant_part,
            periodic_part,
        })
    }

    pub fn dim(&self) -> usize {
        self.constant_part.len()
    }

    /// `α + f(θ)`.
    pub fn evaluate(&self, theta: &[f64]) -> Result<Vec<f64>, FourierError> {
        let mut v = self.periodic_part.evaluate_one(theta)?;
        for (a, b) in v.iter_mut().zip(&self.constant_part) {
            *a += b;
        }
        Ok(v)
    }

    /// Reversible ⇔ the field is even in θ: `sup|f(θ) − f(−θ)| < tol`.
    pub fn is_reversible(&self, tol: f64) -> bool {
        odd_part_sup(&self.periodic_part) < tol
    }
}

/// `sup |u(θ) − u(−θ)|`, the size of the odd part (×2).
fn odd_part_sup(u: &FourierField) -> f64 {
    match u.sub(&reflect(u)) {
        Ok(d) => d.sup_norm(),
        Err(_) => f64::INFINITY,
    }
}

/// `sup |u(θ) + u(−θ)|`, the size of the even part (×2).
fn even_part_sup(u: &FourierField) -> f64 {
    match u.add(&reflect(u)) {
        Ok(d) => d.sup_norm(),
        Err(_) => f64::INFINITY,
    }
}

/// `θ ↦ u(−θ)`: for real fields this conjugates every coefficient.
pub fn reflect(u: &FourierField) -> FourierField {
    let mut out = FourierField::zero(u.dim_domain(), u.dim_range(), u.k_box());
    for (k, c) in u.modes() {
        let conj: Vec<_> = c.iter().map(|z| z.conj()).collect();
        if k.iter().all(|&x| x == 0) {
            out.set_mode(k, c);
        } else {
            out.set_mode(k, &conj);
        }
    }
    out
}

/// `(f·∂θ)g`: component `i` is `Σ_j f_j ∂_{θ_j} g_i`.
pub fn advect(f: &FourierField, g: &FourierField) -> Result<FourierField, FourierError> {
    let n = f.dim_domain();
    if g.dim_domain() != n || f.dim_range() != n {
        return Err(FourierError::ShapeMismatch(format!(
            "advect: f ({}, {}), g ({}, {})",
            f.dim_domain(),
            f.dim_range(),
            g.dim_domain(),
            g.dim_range()
        )));
    }
    let mut comps = Vec::with_capacity(g.dim_range());
    for i in 0..g.dim_range() {
        let gi = g.extract_component(i);
        let grad: Vec<FourierField> = (0..n).map(|j| gi.differentiate(j)).collect();
        let grad_field = FourierField::from_components(&grad)?;
        comps.push(f.dot(&grad_field)?);
    }
    FourierField::from_components(&comps)
}

/// Torus map `θ ↦ θ + h(θ)` with lazily cached inverse displacement.
#[derive(Debug, Clone)]
pub struct TorusDiffeo {
    displacement: FourierField,
    inverse: Option<FourierField>,
    c1_norm: f64,
    inverse_residual: f64,
}

impl TorusDiffeo {
    pub fn identity(n: usize) -> Self {
        TorusDiffeo {
            displacement: FourierField::zero(n, n, 0),
            inverse: Some(FourierField::zero(n, n, 0)),
            c1_norm: 0.0,
            inverse_residual: 0.0,
        }
    }

    pub fn new(displacement: FourierField) -> Result<Self, DiffeoError> {
        if displacement.dim_domain() != displacement.dim_range() {
            return Err(DiffeoError::NotSquare {
                n: displacement.dim_domain(),
                m: displacement.dim_range(),
            });
        }
        let c1_norm = c1_norm(&displacement);
        if c1_norm > 0.5 {
            return Err(DiffeoError::DisplacementTooLarge { norm: c1_norm });
        }
        Ok(TorusDiffeo {
            displacement,
            inverse: None,
            c1_norm,
            inverse_residual: f64::NAN,
        })
    }

    pub fn displacement(&self) -> &FourierField {
        &self.displacement
    }

    pub fn inverse_displacement(&self) -> Option<&FourierField> {
        self.inverse.as_ref()
    }

    pub fn c1_norm(&self) -> f64 {
        self.c1_norm
    }

    pub fn inverse_residual(&self) -> f64 {
        self.inverse_residual
    }

    pub fn dim(&self) -> usize {
        self.displacement.dim_domain()
    }

    /// `θ + h(θ)`.
    pub fn apply(&self, theta: &[f64]) -> Result<Vec<f64>, FourierError> {
        let mut v = self.displacement.evaluate_one(theta)?;
        for (a, b) in v.iter_mut().zip(theta) {
            *a += b;
        }
        Ok(v)
    }

    /// `θ + h̃(θ)` (requires the cached inverse).
    pub fn apply_inverse(&self, theta: &[f64]) -> Result<Vec<f64>, DiffeoError> {
        let inv = self.inverse.as_ref().ok_or(DiffeoError::InverseMissing)?;
        let mut v = inv.evaluate_one(theta)?;
        for (a, b) in v.iter_mut().zip(theta) {
            *a += b;
        }
        Ok(v)
    }

    /// Cache the inverse displacement by the fixed point `h̃ = −h∘(Id+h̃)`,
    /// starting from `h̃₀ = −h`.
    pub fn with_inverse(mut self, tol: f64, max_iters: usize) -> Result<Self, DiffeoError> {
        if self.displacement.is_zero() {
            let n = self.dim();
            self.inverse = Some(FourierField::zero(n, n, 0));
            self.inverse_residual = 0.0;
            return Ok(self);
        }
        let opts = ComposeOptions::new(self.displacement.k_box() + INVERSE_K_MARGIN).without_guard();
        let mut inv = self.displacement.scale(-1.0);
        let mut residual = f64::INFINITY;
        for _iter in 0..max_iters {
            let composed = compose_displaced(&self.displacement, &inv, &opts)?;
            residual = inv.add(&composed)?.sup_norm();
            if residual < tol {
                self.inverse = Some(inv);
                self.inverse_residual = residual;
                return Ok(self);
            }
            inv = composed.scale(-1.0);
        }
        Err(DiffeoError::InverseNotConverged {
            tol,
            iters: max_iters,
            residual,
        })
    }

    /// `u ∘ Φ`, i.e. `θ ↦ u(θ + h(θ))`, with enough spectral headroom to be
    /// exact up to the composition's own tail decay. Iterative schemes that
    /// re-truncate to a working box pass explicit [`ComposeOptions`] (with
    /// the aliasing guard) through [`TorusDiffeo::compose_function_with`].
    pub fn compose_function(&self, u: &FourierField) -> Result<FourierField, DiffeoError> {
        let out = u.k_box() + COMPOSE_K_MARGIN;
        self.compose_function_with(u, &ComposeOptions::new(out).without_guard())
    }

    pub fn compose_function_with(
        &self,
        u: &FourierField,
        opts: &ComposeOptions,
    ) -> Result<FourierField, DiffeoError> {
        Ok(compose_displaced(u, &self.displacement, opts)?)
    }

    /// `u ∘ Φ⁻¹` (requires the cached inverse).
    pub fn compose_function_inverse_with(
        &self,
        u: &FourierField,
        opts: &ComposeOptions,
    ) -> Result<FourierField, DiffeoError> {
        let inv = self.inverse.as_ref().ok_or(DiffeoError::InverseMissing)?;
        Ok(compose_displaced(u, inv, opts)?)
    }

    /// Pushforward `Φ_*X`: the field `Φ⁻¹∘(α + f + (α+f)·∂θ h)`, split into
    /// its mean (constant part) and the remainder.
    pub fn pushforward(&self, x: &VectorFieldOnTorus) -> Result<VectorFieldOnTorus, DiffeoError> {
        let inv = self.inverse.as_ref().ok_or(DiffeoError::InverseMissing)?;
        let g = &self.displacement;
        if x.dim() != self.dim() {
            return Err(DiffeoError::NotSquare {
                n: x.dim(),
                m: self.dim(),
            });
        }
        let f = &x.periodic_part;
        let combined = f
            .add(&g.directional_derivative(&x.constant_part))?
            .add(&advect(f, g)?)?;
        let out_box = combined.k_box() + COMPOSE_K_MARGIN;
        let composed =
            compose_displaced(&combined, inv, &ComposeOptions::new(out_box).without_guard())?;
        let mean = composed.average()?;
        let periodic = composed.sub(&FourierField::constant(&mean, composed.dim_domain()))?;
        let constant: Vec<f64> = x
            .constant_part
            .iter()
            .zip(&mean)
            .map(|(a, b)| a + b)
            .collect();
        Ok(VectorFieldOnTorus {
            constant_part: constant,
            periodic_part: periodic,
        })
    }

    /// Reversibility preserving ⇔ the displacement is odd in θ.
    pub fn is_reversibility_preserving(&self, tol: f64) -> bool {
        even_part_sup(&self.displacement) < tol
    }
}

/// `|h|_∞ + |Dh|_∞` on a 4× oversampled grid.
fn c1_norm(h: &FourierField) -> f64 {
    let sup = h
        .sup_norms_per_component()
        .into_iter()
        .fold(0.0f64, f64::max);
    let mut dsup = 0.0f64;
    for j in 0..h.dim_domain() {
        let d = h.differentiate(j);
        dsup = d
            .sup_norms_per_component()
            .into_iter()
            .fold(dsup, f64::max);
    }
    sup + dsup
}

/// Composition `then ∘ first` (apply `first`, then `then`): the displacement
/// is `h_first + h_then∘(Id + h_first)`.
pub fn compose_diffeos(first: &TorusDiffeo, then: &TorusDiffeo) -> Result<TorusDiffeo, DiffeoError> {
    let out_box = first
        .displacement
        .k_box()
        .max(then.displacement.k_box())
        + COMPOSE_K_MARGIN;
    let opts = ComposeOptions::new(out_box).without_guard();
    let moved = compose_displaced(&then.displacement, &first.displacement, &opts)?;
    let disp = first.displacement.add(&moved)?;
    TorusDiffeo::new(disp)
}

// --- serialization: {"displacement": .., "inverse": ..} ----------------------

#[derive(Serialize, Deserialize)]
struct DiffeoRepr {
    displacement: FourierField,
    inverse: Option<FourierField>,
}

impl Serialize for TorusDiffeo {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        DiffeoRepr {
            displacement: self.displacement.clone(),
            inverse: self.inverse.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for TorusDiffeo {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let repr = DiffeoRepr::deserialize(d)?;
        let mut diffeo = TorusDiffeo::new(repr.displacement).map_err(serde::de::Error::custom)?;
        diffeo.inverse = repr.inverse;
        Ok(diffeo)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fourier::random_field;

    fn small_random_diffeo(seed: u64, scale: f64) -> TorusDiffeo {
        let h = random_field(2, 2, 3, 6, scale, seed);
        TorusDiffeo::new(h).unwrap()
    }

    #[test]
    fn identity_inverts_to_identity() {
        let d = TorusDiffeo::identity(2);
        assert!(d.inverse_displacement().unwrap().is_zero());
        let d2 = TorusDiffeo::new(FourierField::zero(2, 2, 0))
            .unwrap()
            .with_inverse(1e-12, 10)
            .unwrap();
        assert!(d2.inverse_displacement().unwrap().is_zero());
    }

    #[test]
    fn inverse_sup_norm_matches_forward() {
        // N = 1, h = 0.1 sin θ: |h̃|_∞ = |h|_∞ and |Dh̃|_∞ ≤ 2|Dh|_∞.
        let h = FourierField::zero(1, 1, 0).with_real_mode(&[1], &[0.0], &[0.1]);
        let d = TorusDiffeo::new(h.clone())
            .unwrap()
            .with_inverse(1e-13, 200)
            .unwrap();
        let inv = d.inverse_displacement().unwrap();
        // Sup norms of trig polynomials need a very fine grid for a 1e-10
        // comparison (grid sups converge quadratically in the spacing).
        let fine = |f: &FourierField| f.synthesize(&[1 << 17]).unwrap().sup_norm();
        assert!((fine(inv) - fine(&h)).abs() < 1e-10);
        let dh = fine(&h.differentiate(0));
        let dinv = fine(&inv.differentiate(0));
        assert!(dinv <= 2.0 * dh + 1e-10);
    }

    #[test]
    fn inverse_composition_residual_small() {
        let d = small_random_diffeo(3, 0.05)
            .with_inverse(1e-12, 200)
            .unwrap();
        // Both orders of composition return to the identity.
        let h = d.displacement();
        let hinv = d.inverse_displacement().unwrap();
        let opts = ComposeOptions::new(h.k_box() + INVERSE_K_MARGIN).without_guard();
        let r1 = hinv
            .add(&compose_displaced(h, hinv, &opts).unwrap())
            .unwrap()
            .sup_norm();
        let r2 = h
            .add(&compose_displaced(hinv, h, &opts).unwrap())
            .unwrap()
            .sup_norm();
        assert!(r1 < 1e-10, "r1 = {r1:e}");
        assert!(r2 < 1e-10, "r2 = {r2:e}");
    }

    #[test]
    fn construction_rejects_large_displacement() {
        let h = FourierField::zero(1, 1, 0).with_real_mode(&[1], &[0.0], &[0.6]);
        assert!(matches!(
            TorusDiffeo::new(h),
            Err(DiffeoError::DisplacementTooLarge { .. })
        ));
    }

    #[test]
    fn compose_function_identity_and_translation() {
        let u = random_field(2, 1, 3, 6, 1.0, 7);
        let id = TorusDiffeo::identity(2);
        let v = id.compose_function(&u).unwrap();
        assert!(v.sub(&u).unwrap().sobolev_norm(0.0) < 1e-14);
    }

    #[test]
    fn compose_diffeos_constant_shifts_add() {
        let a = TorusDiffeo::new(FourierField::constant(&[0.3, -0.2], 2)).unwrap();
        let b = TorusDiffeo::new(FourierField::constant(&[0.1, 0.25], 2)).unwrap();
        let c = compose_diffeos(&a, &b).unwrap();
        let avg = c.displacement().average().unwrap();
        assert!((avg[0] - 0.4).abs() < 1e-14);
        assert!((avg[1] - 0.05).abs() < 1e-14);
        // Either argument identity returns the other.
        let id = TorusDiffeo::identity(2);
        let d = compose_diffeos(&id, &a).unwrap();
        assert!(d.displacement().sub(a.displacement()).unwrap().sup_norm() < 1e-14);
        let e = compose_diffeos(&a, &id).unwrap();
        assert!(e.displacement().sub(a.displacement()).unwrap().sup_norm() < 1e-14);
    }

    #[test]
    fn compose_diffeos_associative() {
        let a = small_random_diffeo(11, 0.006);
        let b = small_random_diffeo(13, 0.004);
        let c = small_random_diffeo(17, 0.005);
        let ab_c = compose_diffeos(&compose_diffeos(&a, &b).unwrap(), &c).unwrap();
        let a_bc = compose_diffeos(&a, &compose_diffeos(&b, &c).unwrap()).unwrap();
        let diff = ab_c
            .displacement()
            .sub(a_bc.displacement())
            .unwrap()
            .sup_norm();
        assert!(diff < 1e-10, "associativity defect {diff:e}");
    }

    #[test]
    fn compose_function_respects_composition() {
        let u = random_field(2, 1, 4, 8, 1.0, 19);
        let phi1 = small_random_diffeo(23, 0.01);
        let phi2 = small_random_diffeo(29, 0.008);
        // (u∘Φ₁)∘Φ₂ = u∘(Φ₁ after Φ₂), i.e. compose_diffeos(first=Φ₂, then=Φ₁).
        let lhs = phi2
            .compose_function(&phi1.compose_function(&u).unwrap())
            .unwrap();
        let chain = compose_diffeos(&phi2, &phi1).unwrap();
        let rhs = chain.compose_function(&u).unwrap();
        let rel = lhs.sub(&rhs).unwrap().sobolev_norm(0.0) / u.sobolev_norm(0.0);
        assert!(rel < 1e-9, "rel {rel:e}");
    }

    #[test]
    fn pushforward_by_identity_keeps_field() {
        let f = random_field(2, 2, 3, 6, 0.01, 31);
        let x = VectorFieldOnTorus::new(vec![1.0, 0.5], f.clone()).unwrap();
        let id = TorusDiffeo::identity(2);
        let y = id.pushforward(&x).unwrap();
        assert!((y.constant_part[0] - 1.0).abs() < 1e-14);
        let diff = y.periodic_part.sub(&f).unwrap().sobolev_norm(0.0);
        assert!(diff < 1e-13);
    }

    #[test]
    fn pushforward_functorial() {
        let f = random_field(2, 2, 3, 6, 0.01, 37);
        let x = VectorFieldOnTorus::new(vec![1.0, 1.3], f).unwrap();
        let d1 = small_random_diffeo(41, 0.02).with_inverse(1e-13, 200).unwrap();
        let d2 = small_random_diffeo(43, 0.02).with_inverse(1e-13, 200).unwrap();
        let step = d2.pushforward(&d1.pushforward(&x).unwrap()).unwrap();
        let chained = compose_diffeos(&d1, &d2)
            .unwrap()
            .with_inverse(1e-13, 200)
            .unwrap()
            .pushforward(&x)
            .unwrap();
        for (a, b) in step.constant_part.iter().zip(&chained.constant_part) {
            assert!((a - b).abs() < 1e-9);
        }
        let diff = step
            .periodic_part
            .sub(&chained.periodic_part)
            .unwrap()
            .sup_norm();
        assert!(diff < 1e-9, "functoriality defect {diff:e}");
    }

    #[test]
    fn reversibility_checks() {
        let even = FourierField::zero(2, 2, 1).with_real_mode(&[1, 0], &[1.0, 0.0], &[0.0, 0.0]);
        let x = VectorFieldOnTorus::new(vec![1.0, 1.0], even).unwrap();
        assert!(x.is_reversible(1e-12));

        let odd = FourierField::zero(2, 2, 1).with_real_mode(&[1, 0], &[0.0, 0.0], &[0.2, 0.0]);
        let d = TorusDiffeo::new(odd).unwrap();
        assert!(d.is_reversibility_preserving(1e-12));

        let oddf = FourierField::zero(2, 2, 1).with_real_mode(&[1, 0], &[0.0, 0.0], &[1.0, 0.0]);
        let y = VectorFieldOnTorus::new(vec![1.0, 1.0], oddf).unwrap();
        assert!(!y.is_reversible(1e-3));
    }

    #[test]
    fn compose_function_tame_bound() {
        // ‖u∘Φ‖_s ≤ ‖u‖_s + C(‖u‖_s·|h|_{1,∞} + |Dh|_{s-1,∞}·‖u‖₁) audited
        // with the concrete constant C = 5 at s = 2.
        let sup_inf = |f: &FourierField| -> f64 {
            f.sup_norms_per_component().into_iter().fold(0.0, f64::max)
        };
        for seed in 0..3u64 {
            let u = random_field(2, 1, 4, 8, 1.0, 800 + seed);
            let h = random_field(2, 2, 2, 4, 0.02, 900 + seed);
            let d = TorusDiffeo::new(h.clone()).unwrap();
            let composed = d.compose_function(&u).unwrap();
            let s = 2.0;
            // |Dh|_{s-1,∞} = Σ_{order ≤ s-1} sup|D^order (Dh)|.
            let mut dh_sup = 0.0f64;
            let mut d2h_sup = 0.0f64;
            for i in 0..2 {
                let di = h.differentiate(i);
                dh_sup = dh_sup.max(sup_inf(&di));
                for j in 0..2 {
                    d2h_sup = d2h_sup.max(sup_inf(&di.differentiate(j)));
                }
            }
            let rhs = u.sobolev_norm(s)
                + 5.0
                    * (u.sobolev_norm(s) * d.c1_norm()
                        + (dh_sup + d2h_sup) * u.sobolev_norm(1.0));
            let lhs = composed.sobolev_norm(s);
            assert!(lhs <= rhs, "tame composition bound: {lhs} > {rhs}");
        }
    }

    #[test]
    fn serialization_roundtrip_with_inverse() {
        let d = small_random_diffeo(47, 0.02)
            .with_inverse(1e-12, 200)
            .unwrap();
        let json = serde_json::to_string(&d).unwrap();
        let parsed: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert!(parsed["displacement"]["modes"].is_array());
        assert!(parsed["inverse"].is_object());
        let back: TorusDiffeo = serde_json::from_str(&json).unwrap();
        let diff = back
            .displacement()
            .sub(d.displacement())
            .unwrap()
            .sup_norm();
        assert!(diff < 1e-15);
        let idiff = back
            .inverse_displacement()
            .unwrap()
            .sub(d.inverse_displacement().unwrap())
            .unwrap()
            .sup_norm();
        assert!(idiff < 1e-15);
    }

    #[test]
    fn pushforward_preserves_reversibility() {
        let even = FourierField::zero(2, 2, 1)
            .with_real_mode(&[1, 0], &[0.02, 0.0], &[0.0, 0.0])
            .with_real_mode(&[0, 1], &[0.0, 0.015], &[0.0, 0.0]);
        let x = VectorFieldOnTorus::new(vec![1.0, 1.618], even).unwrap();
        let odd = FourierField::zero(2, 2, 1)
            .with_real_mode(&[1, 0], &[0.0, 0.0], &[0.03, 0.0])
            .with_real_mode(&[0, 1], &[0.0, 0.0], &[0.0, 0.02]);
        let d = TorusDiffeo::new(odd)
            .unwrap()
            .with_inverse(1e-13, 200)
            .unwrap();
        assert!(x.is_reversible(1e-12));
        assert!(d.is_reversibility_preserving(1e-12));
        let y = d.pushforward(&x).unwrap();
        assert!(y.is_reversible(1e-10));
    }
}
