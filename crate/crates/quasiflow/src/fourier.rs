//! Truncated Fourier series of real-valued maps T^N → R^m.
//!
//! A field is a sparse map from integer frequency vectors `k` (stored inside
//! the box `|k_i| ≤ K_box`) to complex amplitude vectors, kept Hermitian
//! (`c_{-k} = conj(c_k)`) so that the represented function is real. The mode
//! weight is `⟨k⟩ = max(1, |k|₁)`; Sobolev norms, projections and diophantine
//! conditions all use the ℓ¹ size of `k`, while storage truncation uses the
//! ℓ∞ box for grid compatibility.

use crate::grid::{fft_nd, fft_len, freq_index, GridSamples};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::Error as DeError;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::collections::BTreeMap;
use thiserror::Error;

/// Modes with max amplitude below this fraction of the field's largest
/// amplitude are dropped when re-analyzing grids inside iterative schemes.
pub const DEFAULT_PRUNE_REL: f64 = 1e-16;

const SUP_OVERSAMPLE: usize = 4;

#[derive(Debug, Error)]
pub enum FourierError {
    #[error("incompatible shapes: {0}")]
    ShapeMismatch(String),
    #[error("grid resolution {res} too small for K_box {k_box} (need ≥ 2K+2)")]
    ResolutionTooSmall { res: usize, k_box: i32 },
    #[error("imaginary residue {residue:.3e} exceeds tolerance {tol:.3e}; field is not Hermitian")]
    ImaginaryResidue { residue: f64, tol: f64 },
    #[error("duplicate parameter value with distinct fields (ill-posed Lipschitz quotient)")]
    DuplicateParameter,
    #[error("empty sample list")]
    EmptySamples,
    #[error("aliasing guard violated: {fraction:.3e} of spectral energy above K_box {k_box}")]
    AliasingGuard { fraction: f64, k_box: i32 },
    #[error("invalid serialized field: {0}")]
    InvalidSerialization(String),
}

/// `⟨k⟩ = max(1, Σ|k_i|)`.
pub fn weight_l1(k: &[i32]) -> f64 {
    let s: i64 = k.iter().map(|&x| (x as i64).abs()).sum();
    (s.max(1)) as f64
}

/// `Σ|k_i|`.
pub fn norm_l1(k: &[i32]) -> i64 {
    k.iter().map(|&x| (x as i64).abs()).sum()
}

fn neg_key(k: &[i32]) -> Vec<i32> {
    k.iter().map(|&x| -x).collect()
}

/// `k = 0` or first nonzero component positive.
fn is_canonical(k: &[i32]) -> bool {
    for &x in k {
        if x > 0 {
            return true;
        }
        if x < 0 {
            return false;
        }
    }
    true
}

/// Sup norm and Lipschitz seminorm of a parameter family, combined as
/// `sup + γ·lip` (the lip part measured one Sobolev index lower).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LipschitzNorm {
    pub sup_part: f64,
    pub lip_part: f64,
    pub gamma: f64,
}

impl LipschitzNorm {
    pub fn value(&self) -> f64 {
        self.sup_part + self.gamma * self.lip_part
    }
}

/// Truncated Fourier series of a real map T^N → R^m.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierField {
    n: usize,
    m: usize,
    k_box: i32,
    coeffs: BTreeMap<Vec<i32>, Vec<Complex64>>,
}

impl FourierField {
    pub fn zero(n: usize, m: usize, k_box: i32) -> Self {
        FourierField {
            n,
            m,
            k_box,
            coeffs: BTreeMap::new(),
        }
    }

    pub fn constant(values: &[f64], n: usize) -> Self {
        let mut f = FourierField::zero(n, values.len(), 0);
        let c: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        if c.iter().any(|z| z.norm_sqr() != 0.0) {
            f.coeffs.insert(vec![0; n], c);
        }
        f
    }

    /// Add `cos_amp·cos(k·θ) + sin_amp·sin(k·θ)` componentwise.
    pub fn with_real_mode(mut self, k: &[i32], cos_amp: &[f64], sin_amp: &[f64]) -> Self {
        assert_eq!(k.len(), self.n);
        assert_eq!(cos_amp.len(), self.m);
        assert_eq!(sin_amp.len(), self.m);
        self.k_box = self.k_box.max(k.iter().map(|&x| x.abs()).max().unwrap_or(0));
        if k.iter().all(|&x| x == 0) {
            let entry = self
                .coeffs
                .entry(k.to_vec())
                .or_insert_with(|| vec![Complex64::default(); self.m]);
            for (e, &c) in entry.iter_mut().zip(cos_amp) {
                *e += Complex64::new(c, 0.0);
            }
        } else {
            {
                let entry = self
                    .coeffs
                    .entry(k.to_vec())
                    .or_insert_with(|| vec![Complex64::default(); self.m]);
                for ((e, &c), &s) in entry.iter_mut().zip(cos_amp).zip(sin_amp) {
                    *e += Complex64::new(c / 2.0, -s / 2.0);
                }
            }
            let entry = self
                .coeffs
                .entry(neg_key(k))
                .or_insert_with(|| vec![Complex64::default(); self.m]);
            for ((e, &c), &s) in entry.iter_mut().zip(cos_amp).zip(sin_amp) {
                *e += Complex64::new(c / 2.0, s / 2.0);
            }
        }
        self.drop_zero_modes();
        self
    }

    /// Insert a raw coefficient together with its Hermitian partner.
    pub fn set_mode(&mut self, k: &[i32], coeff: &[Complex64]) {
        assert_eq!(k.len(), self.n);
        assert_eq!(coeff.len(), self.m);
        self.k_box = self.k_box.max(k.iter().map(|&x| x.abs()).max().unwrap_or(0));
        self.coeffs.insert(k.to_vec(), coeff.to_vec());
        if k.iter().any(|&x| x != 0) {
            self.coeffs
                .insert(neg_key(k), coeff.iter().map(|z| z.conj()).collect());
        } else {
            // Real-valuedness forces the mean to be real.
            let real: Vec<Complex64> = coeff.iter().map(|z| Complex64::new(z.re, 0.0)).collect();
            self.coeffs.insert(k.to_vec(), real);
        }
        self.drop_zero_modes();
    }

    pub fn dim_domain(&self) -> usize {
        self.n
    }

    pub fn dim_range(&self) -> usize {
        self.m
    }

    pub fn k_box(&self) -> i32 {
        self.k_box
    }

    pub fn num_modes(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn coeff(&self, k: &[i32]) -> Vec<Complex64> {
        self.coeffs
            .get(k)
            .cloned()
            .unwrap_or_else(|| vec![Complex64::default(); self.m])
    }

    pub fn modes(&self) -> impl Iterator<Item = (&Vec<i32>, &Vec<Complex64>)> {
        self.coeffs.iter()
    }

    fn drop_zero_modes(&mut self) {
        self.coeffs.retain(|_, c| c.iter().any(|z| z.norm_sqr() != 0.0));
    }

    /// Drop modes whose largest amplitude is below `rel · max_amplitude`,
    /// then shrink the box to the surviving spectral support.
    pub fn prune(&mut self, rel: f64) {
        if rel > 0.0 {
            let max_amp = self
                .coeffs
                .values()
                .flat_map(|c| c.iter().map(|z| z.norm()))
                .fold(0.0f64, f64::max);
            let cut = rel * max_amp;
            self.coeffs
                .retain(|_, c| c.iter().any(|z| z.norm() > cut));
        } else {
            self.drop_zero_modes();
        }
        let support = self
            .coeffs
            .keys()
            .flat_map(|k| k.iter().map(|x| x.abs()))
            .max()
            .unwrap_or(0);
        self.k_box = self.k_box.min(support);
    }

    /// Debug-mode invariant: `c_{-k} = conj(c_k)` for every stored mode.
    pub fn assert_hermitian(&self) {
        if cfg!(debug_assertions) {
            for (k, c) in &self.coeffs {
                let partner = self.coeff(&neg_key(k));
                for (a, b) in c.iter().zip(partner.iter()) {
                    let d = (a - b.conj()).norm();
                    debug_assert!(
                        d <= 1e-10 * (1.0 + a.norm()),
                        "Hermitian symmetry violated at k={k:?}: {d:e}"
                    );
                }
            }
        }
    }

    pub fn scale(&self, factor: f64) -> FourierField {
        let mut out = self.clone();
        for c in out.coeffs.values_mut() {
            for z in c.iter_mut() {
                *z *= factor;
            }
        }
        out.drop_zero_modes();
        out
    }

    pub fn add(&self, other: &FourierField) -> Result<FourierField, FourierError> {
        self.lin_comb(other, 1.0)
    }

    pub fn sub(&self, other: &FourierField) -> Result<FourierField, FourierError> {
        self.lin_comb(other, -1.0)
    }

    fn lin_comb(&self, other: &FourierField, sign: f64) -> Result<FourierField, FourierError> {
        if self.n != other.n || self.m != other.m {
            return Err(FourierError::ShapeMismatch(format!(
                "add/sub: ({}, {}) vs ({}, {})",
                self.n, self.m, other.n, other.m
            )));
        }
        let mut out = self.clone();
        out.k_box = self.k_box.max(other.k_box);
        for (k, c) in &other.coeffs {
            let entry = out
                .coeffs
                .entry(k.clone())
                .or_insert_with(|| vec![Complex64::default(); self.m]);
            for (e, z) in entry.iter_mut().zip(c.iter()) {
                *e += sign * z;
            }
        }
        out.drop_zero_modes();
        Ok(out)
    }

    /// `Π_K`: keep modes with `|k|₁ ≤ K`.
    pub fn project(&self, k_max: i64) -> FourierField {
        let mut out = self.clone();
        out.coeffs.retain(|k, _| norm_l1(k) <= k_max);
        out
    }

    /// `Π_K^⊥ = Id − Π_K`.
    pub fn project_complement(&self, k_max: i64) -> FourierField {
        let mut out = self.clone();
        out.coeffs.retain(|k, _| norm_l1(k) > k_max);
        out
    }

    /// `∂_{θ_axis}`: coefficients scale by `i·k_axis`.
    pub fn differentiate(&self, axis: usize) -> FourierField {
        assert!(axis < self.n);
        let mut out = self.clone();
        for (k, c) in out.coeffs.iter_mut() {
            let factor = Complex64::new(0.0, k[axis] as f64);
            for z in c.iter_mut() {
                *z *= factor;
            }
        }
        out.drop_zero_modes();
        out
    }

    /// `α·∂θ`: coefficients scale by `i(α·k)`.
    pub fn directional_derivative(&self, alpha: &[f64]) -> FourierField {
        assert_eq!(alpha.len(), self.n);
        let mut out = self.clone();
        for (k, c) in out.coeffs.iter_mut() {
            let dot: f64 = k.iter().zip(alpha).map(|(&ki, &a)| ki as f64 * a).sum();
            let factor = Complex64::new(0.0, dot);
            for z in c.iter_mut() {
                *z *= factor;
            }
        }
        out.drop_zero_modes();
        out
    }

    /// Mean over T^N, i.e. the `k = 0` coefficient.
    pub fn average(&self) -> Result<Vec<f64>, FourierError> {
        let c = self.coeff(&vec![0; self.n]);
        let residue = c.iter().map(|z| z.im.abs()).fold(0.0f64, f64::max);
        let tol = 1e-13 * (1.0 + self.sobolev_norm(0.0));
        if residue > tol {
            return Err(FourierError::ImaginaryResidue { residue, tol });
        }
        Ok(c.iter().map(|z| z.re).collect())
    }

    /// `‖u‖_s = sqrt(Σ_k ⟨k⟩^{2s} |u_k|²)`, amplitudes summed over range
    /// components. Falls back to log-space evaluation when `⟨k⟩^{2s}` would
    /// overflow.
    pub fn sobolev_norm(&self, s: f64) -> f64 {
        let mut acc = 0.0f64;
        for (k, c) in &self.coeffs {
            let amp2: f64 = c.iter().map(|z| z.norm_sqr()).sum();
            if amp2 == 0.0 {
                continue;
            }
            let w = weight_l1(k);
            let e = 2.0 * s * w.log2();
            let term = if e > 900.0 {
                (e + amp2.log2()).exp2()
            } else {
                w.powf(2.0 * s) * amp2
            };
            acc += term;
        }
        acc.sqrt()
    }

    pub fn extract_component(&self, c: usize) -> FourierField {
        assert!(c < self.m);
        let mut out = FourierField::zero(self.n, 1, self.k_box);
        for (k, coeff) in &self.coeffs {
            if coeff[c].norm_sqr() != 0.0 {
                out.coeffs.insert(k.clone(), vec![coeff[c]]);
            }
        }
        out
    }

    pub fn from_components(parts: &[FourierField]) -> Result<FourierField, FourierError> {
        let n = parts[0].n;
        let k_box = parts.iter().map(|p| p.k_box).max().unwrap_or(0);
        if parts.iter().any(|p| p.n != n || p.m != 1) {
            return Err(FourierError::ShapeMismatch(
                "from_components expects scalar fields of equal domain".into(),
            ));
        }
        let mut out = FourierField::zero(n, parts.len(), k_box);
        for (i, p) in parts.iter().enumerate() {
            for (k, c) in &p.coeffs {
                let entry = out
                    .coeffs
                    .entry(k.clone())
                    .or_insert_with(|| vec![Complex64::default(); parts.len()]);
                entry[i] = c[0];
            }
        }
        out.drop_zero_modes();
        Ok(out)
    }

    /// Direct summation `Σ_k c_k e^{i k·θ}` at arbitrary points.
    pub fn evaluate_at(&self, points: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, FourierError> {
        let tol = 1e-12 * self.sobolev_norm(0.0) + 1e-250;
        let mut out = Vec::with_capacity(points.len());
        for theta in points {
            assert_eq!(theta.len(), self.n);
            let mut acc = vec![Complex64::default(); self.m];
            for (k, c) in &self.coeffs {
                let phase: f64 = k.iter().zip(theta).map(|(&ki, &t)| ki as f64 * t).sum();
                let e = Complex64::new(phase.cos(), phase.sin());
                for (a, z) in acc.iter_mut().zip(c.iter()) {
                    *a += z * e;
                }
            }
            let residue = acc.iter().map(|z| z.im.abs()).fold(0.0f64, f64::max);
            if residue > tol {
                return Err(FourierError::ImaginaryResidue { residue, tol });
            }
            out.push(acc.iter().map(|z| z.re).collect());
        }
        Ok(out)
    }

    pub fn evaluate_one(&self, theta: &[f64]) -> Result<Vec<f64>, FourierError> {
        Ok(self.evaluate_at(std::slice::from_ref(&theta.to_vec()))?.remove(0))
    }

    /// Inverse transform onto a uniform grid, `res[i] ≥ 2·K_box + 2`.
    pub fn synthesize(&self, res: &[usize]) -> Result<GridSamples, FourierError> {
        assert_eq!(res.len(), self.n);
        for &r in res {
            if (r as i32) < 2 * self.k_box + 2 {
                return Err(FourierError::ResolutionTooSmall {
                    res: r,
                    k_box: self.k_box,
                });
            }
        }
        let total: usize = res.iter().product();
        let mut out = GridSamples::zeros(res, self.m);
        let mut plane = vec![Complex64::default(); total];
        for c in 0..self.m {
            plane.iter_mut().for_each(|z| *z = Complex64::default());
            for (k, coeff) in &self.coeffs {
                plane[freq_index(k, res)] = coeff[c];
            }
            fft_nd(&mut plane, res, false);
            let comp = out.component_mut(c);
            for (v, z) in comp.iter_mut().zip(plane.iter()) {
                *v = z.re;
            }
        }
        Ok(out)
    }

    /// Forward transform of grid samples, truncated to the box `|k_i| ≤ K_box`.
    pub fn analyze(g: &GridSamples, k_box: i32) -> Result<FourierField, FourierError> {
        Self::analyze_pruned(g, k_box, 0.0).map(|(f, _)| f)
    }

    /// Like [`FourierField::analyze`], additionally pruning relatively tiny
    /// modes and reporting the fraction of spectral energy above the box.
    pub fn analyze_pruned(
        g: &GridSamples,
        k_box: i32,
        prune_rel: f64,
    ) -> Result<(FourierField, f64), FourierError> {
        for &r in g.dims() {
            if (r as i32) < 2 * k_box + 2 {
                return Err(FourierError::ResolutionTooSmall { res: r, k_box });
            }
        }
        let dims = g.dims().to_vec();
        let total: usize = dims.iter().product();
        let mut planes: Vec<Vec<Complex64>> = Vec::with_capacity(g.dim_range());
        for c in 0..g.dim_range() {
            let mut plane: Vec<Complex64> = g
                .component(c)
                .iter()
                .map(|&v| Complex64::new(v, 0.0))
                .collect();
            fft_nd(&mut plane, &dims, true);
            let scale = 1.0 / total as f64;
            plane.iter_mut().for_each(|z| *z *= scale);
            planes.push(plane);
        }
        Ok(analyze_complex_planes(&planes, &dims, k_box, prune_rel))
    }

    /// Sup norm on a 4× oversampled grid.
    pub fn sup_norm(&self) -> f64 {
        if self.coeffs.is_empty() {
            return 0.0;
        }
        let res = sup_grid(self.n, self.k_box);
        self.synthesize(&res)
            .map(|g| g.sup_norm())
            .unwrap_or(f64::INFINITY)
    }

    /// Per-component sup norms on the oversampled grid.
    /// Componentwise ℓ¹ sum of coefficient magnitudes: a cheap upper bound
    /// for the sup norm.
    pub fn coeff_l1_per_component(&self) -> Vec<f64> {
        let mut out = vec![0.0f64; self.m];
        for c in self.coeffs.values() {
            for (o, z) in out.iter_mut().zip(c) {
                *o += z.norm();
            }
        }
        out
    }

    pub fn sup_norms_per_component(&self) -> Vec<f64> {
        if self.coeffs.is_empty() {
            return vec![0.0; self.m];
        }
        let res = sup_grid(self.n, self.k_box);
        match self.synthesize(&res) {
            Ok(g) => (0..self.m)
                .map(|c| g.component(c).iter().fold(0.0f64, |a, v| a.max(v.abs())))
                .collect(),
            Err(_) => vec![f64::INFINITY; self.m],
        }
    }

    pub fn multiply(&self, other: &FourierField) -> Result<FourierField, FourierError> {
        self.multiply_auto(other, ProductKind::infer(self, other)?)
    }

    /// Contraction `Σ_j u_j v_j` of two fields with equal range dimension.
    pub fn dot(&self, other: &FourierField) -> Result<FourierField, FourierError> {
        if self.n != other.n || self.m != other.m {
            return Err(FourierError::ShapeMismatch(format!(
                "dot: ({}, {}) vs ({}, {})",
                self.n, self.m, other.n, other.m
            )));
        }
        self.multiply_auto(other, ProductKind::Dot)
    }

    fn multiply_auto(
        &self,
        other: &FourierField,
        kind: ProductKind,
    ) -> Result<FourierField, FourierError> {
        // Exact either way; convolution wins for sparse inputs.
        const CONV_BUDGET: usize = 65536;
        if self.num_modes() * other.num_modes() <= CONV_BUDGET {
            self.multiply_convolution(other, kind)
        } else {
            self.multiply_grid(other, kind)
        }
    }

    /// Exact discrete convolution of the stored modes.
    pub fn multiply_convolution(
        &self,
        other: &FourierField,
        kind: ProductKind,
    ) -> Result<FourierField, FourierError> {
        kind.check(self, other)?;
        let m_out = kind.out_range(self, other);
        let mut out = FourierField::zero(self.n, m_out, self.k_box + other.k_box);
        for (k1, c1) in &self.coeffs {
            for (k2, c2) in &other.coeffs {
                let key: Vec<i32> = k1.iter().zip(k2).map(|(a, b)| a + b).collect();
                let entry = out
                    .coeffs
                    .entry(key)
                    .or_insert_with(|| vec![Complex64::default(); m_out]);
                kind.accumulate(c1, c2, entry);
            }
        }
        out.drop_zero_modes();
        out.assert_hermitian();
        Ok(out)
    }

    /// Product via pointwise multiplication on an anti-aliased grid
    /// (`M ≥ 2(K_u + K_v) + 2` per axis).
    pub fn multiply_grid(
        &self,
        other: &FourierField,
        kind: ProductKind,
    ) -> Result<FourierField, FourierError> {
        kind.check(self, other)?;
        let m_out = kind.out_range(self, other);
        let k_out = self.k_box + other.k_box;
        let res: Vec<usize> = (0..self.n)
            .map(|_| fft_len((2 * k_out + 2) as usize))
            .collect();
        let ga = self.synthesize(&res)?;
        let gb = other.synthesize(&res)?;
        let mut prod = GridSamples::zeros(&res, m_out);
        let npts = prod.num_points();
        for p in 0..npts {
            match kind {
                ProductKind::ScalarTimesVector => {
                    let s = ga.value(p, 0);
                    for j in 0..m_out {
                        prod.component_mut(j)[p] = s * gb.value(p, j);
                    }
                }
                ProductKind::VectorTimesScalar => {
                    let s = gb.value(p, 0);
                    for j in 0..m_out {
                        prod.component_mut(j)[p] = ga.value(p, j) * s;
                    }
                }
                ProductKind::Pointwise => {
                    for j in 0..m_out {
                        prod.component_mut(j)[p] = ga.value(p, j) * gb.value(p, j);
                    }
                }
                ProductKind::Dot => {
                    let mut acc = 0.0;
                    for j in 0..self.m {
                        acc += ga.value(p, j) * gb.value(p, j);
                    }
                    prod.component_mut(0)[p] = acc;
                }
            }
        }
        let f = FourierField::analyze(&prod, k_out)?;
        f.assert_hermitian();
        Ok(f)
    }
}

/// How range components combine in a product.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProductKind {
    ScalarTimesVector,
    VectorTimesScalar,
    Pointwise,
    Dot,
}

impl ProductKind {
    fn infer(u: &FourierField, v: &FourierField) -> Result<Self, FourierError> {
        if u.n != v.n {
            return Err(FourierError::ShapeMismatch(format!(
                "multiply: domain {} vs {}",
                u.n, v.n
            )));
        }
        if u.m == 1 && v.m != 1 {
            Ok(ProductKind::ScalarTimesVector)
        } else if v.m == 1 {
            Ok(ProductKind::VectorTimesScalar)
        } else if u.m == v.m {
            Ok(ProductKind::Pointwise)
        } else {
            Err(FourierError::ShapeMismatch(format!(
                "multiply: range {} vs {}",
                u.m, v.m
            )))
        }
    }

    fn check(&self, u: &FourierField, v: &FourierField) -> Result<(), FourierError> {
        let ok = u.n == v.n
            && match self {
                ProductKind::ScalarTimesVector => u.m == 1,
                ProductKind::VectorTimesScalar => v.m == 1,
                ProductKind::Pointwise | ProductKind::Dot => u.m == v.m,
            };
        if ok {
            Ok(())
        } else {
            Err(FourierError::ShapeMismatch(format!(
                "product {:?}: ({}, {}) vs ({}, {})",
                self, u.n, u.m, v.n, v.m
            )))
        }
    }

    fn out_range(&self, u: &FourierField, v: &FourierField) -> usize {
        match self {
            ProductKind::ScalarTimesVector => v.m,
            ProductKind::VectorTimesScalar => u.m,
            ProductKind::Pointwise => u.m,
            ProductKind::Dot => 1,
        }
    }

    fn accumulate(&self, c1: &[Complex64], c2: &[Complex64], out: &mut [Complex64]) {
        match self {
            ProductKind::ScalarTimesVector => {
                for (o, b) in out.iter_mut().zip(c2) {
                    *o += c1[0] * b;
                }
            }
            ProductKind::VectorTimesScalar => {
                for (o, a) in out.iter_mut().zip(c1) {
                    *o += a * c2[0];
                }
            }
            ProductKind::Pointwise => {
                for ((o, a), b) in out.iter_mut().zip(c1).zip(c2) {
                    *o += a * b;
                }
            }
            ProductKind::Dot => {
                let mut acc = Complex64::default();
                for (a, b) in c1.iter().zip(c2) {
                    acc += a * b;
                }
                out[0] += acc;
            }
        }
    }
}

pub(crate) fn sup_grid(n: usize, k_box: i32) -> Vec<usize> {
    let r = fft_len(((SUP_OVERSAMPLE as i32 * k_box.max(1)).max(8) + 2) as usize);
    vec![r; n]
}

/// Extract the boxed spectrum from already-transformed (and scaled) complex
/// planes, Hermitian-symmetrizing, and report the out-of-box energy fraction.
pub(crate) fn analyze_complex_planes(
    planes: &[Vec<Complex64>],
    dims: &[usize],
    k_box: i32,
    prune_rel: f64,
) -> (FourierField, f64) {
    let n = dims.len();
    let m = planes.len();
    let mut field = FourierField::zero(n, m, k_box);
    let total: f64 = planes
        .iter()
        .flat_map(|p| p.iter().map(|z| z.norm_sqr()))
        .sum();
    let mut in_box = 0.0f64;
    // Odometer over the box |k_i| ≤ k_box; only that part is stored.
    let mut k = vec![-k_box; n];
    'outer: loop {
        let flat = freq_index(&k, dims);
        let amp2: f64 = planes.iter().map(|p| p[flat].norm_sqr()).sum();
        in_box += amp2;
        if amp2 > 0.0 && is_canonical(&k) {
            let neg = neg_key(&k);
            let nidx = freq_index(&neg, dims);
            let coeff: Vec<Complex64> = planes
                .iter()
                .map(|p| 0.5 * (p[flat] + p[nidx].conj()))
                .collect();
            if k.iter().any(|&ki| ki != 0) {
                field.coeffs.insert(k.clone(), coeff.clone());
                field
                    .coeffs
                    .insert(neg, coeff.iter().map(|z| z.conj()).collect());
            } else {
                field.coeffs.insert(
                    k.clone(),
                    coeff.iter().map(|z| Complex64::new(z.re, 0.0)).collect(),
                );
            }
        }
        for axis in (0..n).rev() {
            if k[axis] < k_box {
                k[axis] += 1;
                continue 'outer;
            }
            k[axis] = -k_box;
            if axis == 0 {
                break 'outer;
            }
        }
        if n == 0 {
            break;
        }
    }
    field.prune(prune_rel);
    let out_box = (total - in_box).max(0.0);
    let fraction = if total > 0.0 { out_box / total } else { 0.0 };
    (field, fraction)
}

/// `sup + γ·lip` norm of a finite parameter family of fields.
///
/// The sup part maxes `‖u(ξ)‖_s`; the lip part maxes the pairwise quotients
/// `‖u(ξ₁) − u(ξ₂)‖_{s−1} / |ξ₁ − ξ₂|`. A single sample has zero lip part.
pub fn lipschitz_norm(
    samples: &[(Vec<f64>, FourierField)],
    s: f64,
    gamma: f64,
) -> Result<LipschitzNorm, FourierError> {
    if samples.is_empty() {
        return Err(FourierError::EmptySamples);
    }
    let sup_part = samples
        .iter()
        .map(|(_, u)| u.sobolev_norm(s))
        .fold(0.0f64, f64::max);
    let mut lip_part = 0.0f64;
    for i in 0..samples.len() {
        for j in (i + 1)..samples.len() {
            let (xi1, u1) = &samples[i];
            let (xi2, u2) = &samples[j];
            let dist: f64 = xi1
                .iter()
                .zip(xi2)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let diff = u1.sub(u2)?;
            if dist == 0.0 {
                if diff.is_zero() {
                    continue;
                }
                return Err(FourierError::DuplicateParameter);
            }
            lip_part = lip_part.max(diff.sobolev_norm(s - 1.0) / dist);
        }
    }
    Ok(LipschitzNorm {
        sup_part,
        lip_part,
        gamma,
    })
}

/// Deterministic random real field: Gaussian amplitudes on the ℓ¹ ball
/// `0 < |k|₁ ≤ k_l1_max` (intersected with the K_box box), rescaled so that
/// `‖u‖₀ = amplitude`.
pub fn random_field(
    n: usize,
    m: usize,
    k_box: i32,
    k_l1_max: i64,
    amplitude: f64,
    seed: u64,
) -> FourierField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut field = FourierField::zero(n, m, k_box);
    let mut keys = Vec::new();
    collect_box_keys(n, k_box, &mut vec![0i32; n], 0, &mut keys);
    keys.sort();
    for k in keys {
        if !is_canonical(&k) || norm_l1(&k) == 0 || norm_l1(&k) > k_l1_max {
            continue;
        }
        let coeff: Vec<Complex64> = (0..m)
            .map(|_| {
                let re: f64 = rng.gen_range(-1.0..1.0);
                let im: f64 = rng.gen_range(-1.0..1.0);
                // Spectrally decaying amplitudes keep high norms meaningful.
                let decay = weight_l1(&k).powf(-2.0);
                Complex64::new(re, im) * decay
            })
            .collect();
        field.set_mode(&k, &coeff);
    }
    let norm = field.sobolev_norm(0.0);
    if norm > 0.0 {
        field = field.scale(amplitude / norm);
    }
    field
}

fn collect_box_keys(n: usize, k_box: i32, cur: &mut Vec<i32>, axis: usize, out: &mut Vec<Vec<i32>>) {
    if axis == n {
        out.push(cur.clone());
        return;
    }
    for v in -k_box..=k_box {
        cur[axis] = v;
        collect_box_keys(n, k_box, cur, axis + 1, out);
    }
}

// --- serialization -----------------------------------------------------------
//
// {"N": .., "m": .., "K_box": .., "modes": [{"k": [..], "re": [..], "im": [..]}]}
// Only lexicographically non-negative k are stored; partners are implied.

#[derive(Serialize, Deserialize)]
struct ModeRepr {
    k: Vec<i32>,
    re: Vec<f64>,
    im: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct FieldRepr {
    #[serde(rename = "N")]
    n: usize,
    m: usize,
    #[serde(rename = "K_box")]
    k_box: i32,
    modes: Vec<ModeRepr>,
}

impl Serialize for FourierField {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let modes = self
            .coeffs
            .iter()
            .filter(|(k, _)| is_canonical(k))
            .map(|(k, c)| ModeRepr {
                k: k.clone(),
                re: c.iter().map(|z| z.re).collect(),
                im: c.iter().map(|z| z.im).collect(),
            })
            .collect();
        FieldRepr {
            n: self.n,
            m: self.m,
            k_box: self.k_box,
            modes,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for FourierField {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let repr = FieldRepr::deserialize(deserializer)?;
        let mut field = FourierField::zero(repr.n, repr.m, repr.k_box);
        for mode in repr.modes {
            if mode.k.len() != repr.n || mode.re.len() != repr.m || mode.im.len() != repr.m {
                return Err(D::Error::custom("mode entry has inconsistent lengths"));
            }
            if mode.k.iter().any(|&x| x.abs() > repr.k_box) {
                return Err(D::Error::custom("mode outside declared K_box"));
            }
            let coeff: Vec<Complex64> = mode
                .re
                .iter()
                .zip(&mode.im)
                .map(|(&re, &im)| Complex64::new(re, im))
                .collect();
            field.set_mode(&mode.k, &coeff);
        }
        field.k_box = repr.k_box;
        Ok(field)
    }
}
