//! Uniform grids on T^N and the N-dimensional FFT kernels behind
//! `synthesize`/`analyze`.
//!
//! Grid nodes are `θ_j = 2π j / M_i` along each axis. Transforms are exact
//! for fields with box truncation `K` whenever `M_i ≥ 2K + 2` (one spare
//! line keeps the ±K pairs and the Nyquist line apart).

use num_complex::Complex64;
use rustfft::FftPlanner;
use std::cell::RefCell;
use std::f64::consts::TAU;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Real samples of a map T^N → R^m on a uniform grid.
///
/// Storage is component-major: plane `c` holds the values of range component
/// `c` in row-major point order.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSamples {
    dims: Vec<usize>,
    dim_range: usize,
    data: Vec<f64>,
}

impl GridSamples {
    pub fn zeros(dims: &[usize], dim_range: usize) -> Self {
        let len: usize = dims.iter().product();
        GridSamples {
            dims: dims.to_vec(),
            dim_range,
            data: vec![0.0; len * dim_range],
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim_domain(&self) -> usize {
        self.dims.len()
    }

    pub fn dim_range(&self) -> usize {
        self.dim_range
    }

    pub fn num_points(&self) -> usize {
        self.dims.iter().product()
    }

    /// Values of component `c`, row-major over the grid.
    pub fn component(&self, c: usize) -> &[f64] {
        let len = self.num_points();
        &self.data[c * len..(c + 1) * len]
    }

    pub fn component_mut(&mut self, c: usize) -> &mut [f64] {
        let len = self.num_points();
        &mut self.data[c * len..(c + 1) * len]
    }

    pub fn value(&self, flat: usize, c: usize) -> f64 {
        self.data[c * self.num_points() + flat]
    }

    /// Angle coordinates of the `flat`-th grid node.
    pub fn node(&self, flat: usize) -> Vec<f64> {
        let mut rem = flat;
        let mut out = vec![0.0; self.dims.len()];
        for axis in (0..self.dims.len()).rev() {
            let m = self.dims[axis];
            out[axis] = TAU * (rem % m) as f64 / m as f64;
            rem /= m;
        }
        out
    }

    pub fn sup_norm(&self) -> f64 {
        self.data.iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }
}

/// Smallest length ≥ `min` whose prime factors are all in {2, 3, 5}.
pub fn fft_len(min: usize) -> usize {
    let mut n = min.max(2);
    loop {
        let mut r = n;
        for p in [2usize, 3, 5] {
            while r.is_multiple_of(p) {
                r /= p;
            }
        }
        if r == 1 {
            return n;
        }
        n += 1;
    }
}

fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; dims.len()];
    for i in (0..dims.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * dims[i + 1];
    }
    s
}

/// In-place N-dimensional DFT of a row-major complex plane.
///
/// `forward = true` applies `Σ x_j e^{-2πi kj/M}` per axis (unnormalized);
/// `forward = false` the conjugate transform.
pub fn fft_nd(data: &mut [Complex64], dims: &[usize], forward: bool) {
    let total: usize = dims.iter().product();
    assert_eq!(data.len(), total);
    let str = strides(dims);
    PLANNER.with(|planner| {
        let mut planner = planner.borrow_mut();
        for axis in 0..dims.len() {
            let m = dims[axis];
            let fft = if forward {
                planner.plan_fft_forward(m)
            } else {
                planner.plan_fft_inverse(m)
            };
            let stride = str[axis];
            if stride == 1 {
                // Contiguous lines: transform rows in place.
                for chunk in data.chunks_exact_mut(m) {
                    fft.process(chunk);
                }
                continue;
            }
            let mut line = vec![Complex64::default(); m];
            // Enumerate all lines along `axis`.
            let outer = total / m;
            for l in 0..outer {
                // Decompose l into the coordinates of the other axes.
                let mut rem = l;
                let mut base = 0usize;
                for (ax, (&d, &st)) in dims.iter().zip(str.iter()).enumerate() {
                    if ax == axis {
                        continue;
                    }
                    let c = rem % d;
                    rem /= d;
                    base += c * st;
                }
                for (i, v) in line.iter_mut().enumerate() {
                    *v = data[base + i * stride];
                }
                fft.process(&mut line);
                for (i, v) in line.iter().enumerate() {
                    data[base + i * stride] = *v;
                }
            }
        }
    });
}

/// Flat index of integer frequency `k` on a grid of shape `dims`
/// (negative frequencies wrap to the upper half).
pub fn freq_index(k: &[i32], dims: &[usize]) -> usize {
    let str = strides(dims);
    let mut idx = 0usize;
    for (i, &ki) in k.iter().enumerate() {
        let m = dims[i] as i64;
        idx += (ki as i64).rem_euclid(m) as usize * str[i];
    }
    idx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fft_roundtrip_2d() {
        let dims = [6usize, 10];
        let total: usize = dims.iter().product();
        let mut data: Vec<Complex64> = (0..total)
            .map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()))
            .collect();
        let orig = data.clone();
        fft_nd(&mut data, &dims, true);
        fft_nd(&mut data, &dims, false);
        let scale = total as f64;
        for (a, b) in data.iter().zip(orig.iter()) {
            assert!((a / scale - b).norm() < 1e-12);
        }
    }

    #[test]
    fn fft_len_is_smooth() {
        assert_eq!(fft_len(66), 72);
        assert_eq!(fft_len(128), 128);
        assert_eq!(fft_len(7), 8);
    }

    #[test]
    fn freq_index_wraps_negative() {
        let dims = [8usize, 8];
        assert_eq!(freq_index(&[-1, 0], &dims), 7 * 8);
        assert_eq!(freq_index(&[0, 3], &dims), 3);
    }
}
