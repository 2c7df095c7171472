//! Uniform periodic grids on the flat torus `[0, 2π)^d` (d = 1 or 2), discrete
//! Fourier transforms, spectral differentiation, and quadrature.
//!
//! Fourier convention for `f: T^d -> R`:
//!
//! ```text
//!     f̂(z) = (2π)^{-d} ∫ f(x) e^{-i z·x} dx,      f(x) = Σ_z f̂(z) e^{i z·x},
//! ```
//!
//! so on an `n`-point grid per axis the forward transform is the DFT scaled by
//! `n^{-d}`. Coefficients are stored in FFT order: the frequency of bin `i` is
//! `i` for `i <= n/2` and `i - n` otherwise (bin `n/2` is the Nyquist mode).
//!
//! Quadrature is the rectangle rule `h^d Σ_j f(x_j)`, which is exact for
//! trigonometric polynomials below the Nyquist frequency.

use crate::error::{Error, Result};
use num_complex::Complex64;
use rustfft::FftPlanner;
use std::cell::RefCell;
use std::f64::consts::PI;

pub const TWO_PI: f64 = 2.0 * PI;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Uniform grid with `n_per_axis` nodes per axis on `[0, 2π)^d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PeriodicGrid {
    dim: usize,
    n: usize,
}

impl PeriodicGrid {
    pub fn new(dim: usize, n_per_axis: usize) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidGrid(format!("dim must be 1 or 2, got {dim}")));
        }
        if n_per_axis < 8 || n_per_axis % 2 != 0 {
            return Err(Error::InvalidGrid(format!(
                "n_per_axis must be an even integer >= 8, got {n_per_axis}"
            )));
        }
        Ok(Self { dim, n: n_per_axis })
    }

    pub fn line(n: usize) -> Result<Self> {
        Self::new(1, n)
    }

    pub fn square(n: usize) -> Result<Self> {
        Self::new(2, n)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_per_axis(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        TWO_PI / self.n as f64
    }

    pub fn node_count(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    /// Coordinates of node `idx` (row-major for d = 2: `idx = ix * n + iy`).
    pub fn node(&self, idx: usize) -> [f64; 2] {
        let h = self.spacing();
        match self.dim {
            1 => [idx as f64 * h, 0.0],
            _ => [(idx / self.n) as f64 * h, (idx % self.n) as f64 * h],
        }
    }

    /// Integer frequency of FFT bin `i` on the symmetric range `[-n/2, n/2]`.
    pub fn freq(&self, i: usize) -> i64 {
        let n = self.n as i64;
        let i = i as i64;
        if i <= n / 2 {
            i
        } else {
            i - n
        }
    }

    /// Frequency vector of coefficient `idx`.
    pub fn freq_vec(&self, idx: usize) -> [i64; 2] {
        match self.dim {
            1 => [self.freq(idx), 0],
            _ => [self.freq(idx / self.n), self.freq(idx % self.n)],
        }
    }
}

/// Samples of a real function on a [`PeriodicGrid`]; the universal carrier for
/// functions `f: T^d -> R` in this crate.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    grid: PeriodicGrid,
    values: Vec<f64>,
}

impl GridField {
    pub fn new(grid: PeriodicGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(Error::SizeMismatch(format!(
                "expected {} values, got {}",
                grid.node_count(),
                values.len()
            )));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("grid field values".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: PeriodicGrid, c: f64) -> Self {
        Self { grid, values: vec![c; grid.node_count()] }
    }

    pub fn from_fn(grid: PeriodicGrid, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..grid.node_count())
            .map(|i| {
                let p = grid.node(i);
                f(&p[..grid.dim()])
            })
            .collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> PeriodicGrid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridField {
        GridField { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_with(&self, other: &GridField, f: impl Fn(f64, f64) -> f64) -> GridField {
        debug_assert_eq!(self.grid, other.grid);
        GridField {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn add(&self, other: &GridField) -> GridField {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &GridField) -> GridField {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &GridField) -> GridField {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn scale(&self, c: f64) -> GridField {
        self.map(|v| c * v)
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn linf_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `L^2(T^d)` norm, `(∫ f² dx)^{1/2}`.
    pub fn l2_norm(&self) -> f64 {
        quadrature(&self.mul(self)).sqrt()
    }

    /// Mean value `(2π)^{-d} ∫ f dx`.
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Same field shifted to zero mean.
    pub fn zero_mean(&self) -> GridField {
        let m = self.mean();
        self.map(|v| v - m)
    }
}

/// Fourier coefficients of a [`GridField`] under the `(2π)^{-d}` convention.
#[derive(Debug, Clone)]
pub struct SpectralField {
    grid: PeriodicGrid,
    coeffs: Vec<Complex64>,
}

impl SpectralField {
    pub fn new(grid: PeriodicGrid, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != grid.node_count() {
            return Err(Error::SizeMismatch(format!(
                "expected {} coefficients, got {}",
                grid.node_count(),
                coeffs.len()
            )));
        }
        Ok(Self { grid, coeffs })
    }

    pub fn grid(&self) -> PeriodicGrid {
        self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    /// Coefficient at integer frequency `z` (each `|z_i| <= n/2`).
    pub fn coeff_at(&self, z: &[i64]) -> Complex64 {
        let n = self.grid.n_per_axis() as i64;
        let wrap = |zi: i64| (((zi % n) + n) % n) as usize;
        match self.grid.dim() {
            1 => self.coeffs[wrap(z[0])],
            _ => self.coeffs[wrap(z[0]) * self.grid.n_per_axis() + wrap(z[1])],
        }
    }

    /// Multiply every coefficient by `m(z)`.
    pub fn apply_multiplier(&self, m: impl Fn(&[i64; 2]) -> Complex64) -> SpectralField {
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| c * m(&self.grid.freq_vec(i)))
            .collect();
        SpectralField { grid: self.grid, coeffs }
    }

    /// Max deviation from Hermitian symmetry `ĉ(-z) = conj(ĉ(z))`.
    pub fn hermitian_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.coeffs.len() {
            let z = self.grid.freq_vec(i);
            let neg = [-z[0], -z[1]];
            let d = (self.coeff_at(&neg) - self.coeffs[i].conj()).norm();
            worst = worst.max(d);
        }
        worst
    }

    /// Evaluate the trigonometric interpolant at an arbitrary point.
    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (i, c) in self.coeffs.iter().enumerate() {
            let z = self.grid.freq_vec(i);
            let phase = z[0] as f64 * x[0] + if self.grid.dim() == 2 { z[1] as f64 * x[1] } else { 0.0 };
            acc += c * Complex64::new(0.0, phase).exp();
        }
        acc.re
    }
}

fn fft_1d(data: &mut [Complex64], n: usize, inverse: bool) {
    PLANNER.with(|p| {
        let fft = if inverse {
            p.borrow_mut().plan_fft_inverse(n)
        } else {
            p.borrow_mut().plan_fft_forward(n)
        };
        for chunk in data.chunks_exact_mut(n) {
            fft.process(chunk);
        }
    });
}

fn fft_columns(data: &mut [Complex64], n: usize, inverse: bool) {
    let mut col = vec![Complex64::default(); n];
    PLANNER.with(|p| {
        let fft = if inverse {
            p.borrow_mut().plan_fft_inverse(n)
        } else {
            p.borrow_mut().plan_fft_forward(n)
        };
        for j in 0..n {
            for i in 0..n {
                col[i] = data[i * n + j];
            }
            fft.process(&mut col);
            for i in 0..n {
                data[i * n + j] = col[i];
            }
        }
    });
}

/// Forward transform: grid samples to Fourier coefficients.
pub fn transform(field: &GridField) -> SpectralField {
    let grid = field.grid();
    let n = grid.n_per_axis();
    let mut data: Vec<Complex64> =
        field.values().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_1d(&mut data, n, false);
    if grid.dim() == 2 {
        fft_columns(&mut data, n, false);
    }
    let scale = 1.0 / grid.node_count() as f64;
    for c in &mut data {
        *c *= scale;
    }
    SpectralField { grid, coeffs: data }
}

/// Inverse transform: Fourier coefficients back to grid samples (real part).
pub fn inverse(spec: &SpectralField) -> Result<GridField> {
    let grid = spec.grid();
    let n = grid.n_per_axis();
    if spec.coeffs().len() != grid.node_count() {
        return Err(Error::SizeMismatch("spectral coefficients vs grid".into()));
    }
    let mut data = spec.coeffs().to_vec();
    fft_1d(&mut data, n, true);
    if grid.dim() == 2 {
        fft_columns(&mut data, n, true);
    }
    let values = data.iter().map(|c| c.re).collect();
    GridField::new(grid, values)
}

/// Rectangle-rule integral `h^d Σ_j f(x_j)`; spectrally accurate for smooth
/// periodic integrands.
pub fn quadrature(field: &GridField) -> f64 {
    let h = field.grid().spacing();
    let hd = h.powi(field.grid().dim() as i32);
    hd * field.values().iter().sum::<f64>()
}

/// `∫ f g dx` by the rectangle rule.
pub fn inner(f: &GridField, g: &GridField) -> f64 {
    quadrature(&f.mul(g))
}

/// `(2π)^d Σ_z f̂(z) conj(ĝ(z))`; equals `∫ f g dx` for real fields
/// (Parseval).
pub fn spectral_inner(f: &SpectralField, g: &SpectralField) -> f64 {
    let d = f.grid().dim() as i32;
    let s: Complex64 = f.coeffs().iter().zip(g.coeffs()).map(|(a, b)| a * b.conj()).sum();
    TWO_PI.powi(d) * s.re
}

/// Spectral partial derivative of the given `order` along `axis`, with the
/// Nyquist mode zeroed for odd orders. The flag reports whether the zeroed
/// Nyquist bins carried any energy.
pub fn derivative_flagged(field: &GridField, axis: usize, order: u32) -> (GridField, bool) {
    let grid = field.grid();
    let n = grid.n_per_axis() as i64;
    let spec = transform(field);
    let odd = order % 2 == 1;
    let noise_floor = 1e-12 * (1.0 + field.linf_norm());
    let mut nyquist_energy = false;
    let mut out = spec.clone();
    for (i, c) in out.coeffs_mut().iter_mut().enumerate() {
        let z = grid.freq_vec(i);
        if odd && z[axis].abs() == n / 2 {
            if c.norm() > noise_floor {
                nyquist_energy = true;
            }
            *c = Complex64::new(0.0, 0.0);
        } else {
            let iz = Complex64::new(0.0, z[axis] as f64);
            *c *= iz.powu(order);
        }
    }
    (inverse(&out).expect("sizes agree"), nyquist_energy)
}

pub fn derivative(field: &GridField, axis: usize, order: u32) -> GridField {
    derivative_flagged(field, axis, order).0
}

/// `Δ^p f` via the multiplier `(-‖z‖²)^p`; `p = 0` returns `f` unchanged.
pub fn laplacian_power(field: &GridField, p: u32) -> GridField {
    if p == 0 {
        return field.clone();
    }
    let spec = transform(field);
    let out = spec.apply_multiplier(|z| {
        let z2 = (z[0] * z[0] + z[1] * z[1]) as f64;
        Complex64::new((-z2).powi(p as i32), 0.0)
    });
    inverse(&out).expect("sizes agree")
}

/// Exact trigonometric interpolation onto a finer grid of the same dimension
/// (spectral zero-padding; Nyquist coefficients are split across the `±n/2`
/// pair to keep the interpolant real).
pub fn resample_to(field: &GridField, target: PeriodicGrid) -> Result<GridField> {
    let src = field.grid();
    if src.dim() != target.dim() {
        return Err(Error::SizeMismatch("resample across dimensions".into()));
    }
    if target.n_per_axis() < src.n_per_axis() {
        return Err(Error::InvalidParameter("resample_to only upsamples".into()));
    }
    if target.n_per_axis() == src.n_per_axis() {
        return Ok(field.clone());
    }
    let spec = transform(field);
    let nb = src.n_per_axis() as i64;
    let n = target.n_per_axis() as i64;
    let wrap = |z: i64| (((z % n) + n) % n) as usize;
    let mut coeffs = vec![Complex64::new(0.0, 0.0); target.node_count()];
    for (i, &c) in spec.coeffs().iter().enumerate() {
        let z = src.freq_vec(i);
        // Per-axis destinations: interior modes map 1:1, the Nyquist bin
        // splits evenly across ±nb/2.
        let dests = |zi: i64| -> Vec<(i64, f64)> {
            if zi.abs() == nb / 2 {
                vec![(nb / 2, 0.5), (-nb / 2, 0.5)]
            } else {
                vec![(zi, 1.0)]
            }
        };
        match src.dim() {
            1 => {
                for (zx, w) in dests(z[0]) {
                    coeffs[wrap(zx)] += c * w;
                }
            }
            _ => {
                for (zx, wx) in dests(z[0]) {
                    for (zy, wy) in dests(z[1]) {
                        coeffs[wrap(zx) * target.n_per_axis() + wrap(zy)] += c * wx * wy;
                    }
                }
            }
        }
    }
    inverse(&SpectralField::new(target, coeffs)?)
}

/// Zero-mean spectral antiderivative along the single axis of a 1D grid: the
/// mean of the input is dropped, so this is the periodic primitive of
/// `f - mean(f)`.
pub fn antiderivative_1d(field: &GridField) -> GridField {
    debug_assert_eq!(field.grid().dim(), 1);
    let spec = transform(field);
    let out = spec.apply_multiplier(|z| {
        if z[0] == 0 {
            Complex64::new(0.0, 0.0)
        } else {
            1.0 / Complex64::new(0.0, z[0] as f64)
        }
    });
    inverse(&out).expect("sizes agree")
}

/// Squared-gradient field `‖∇f‖²` (spectral gradients).
pub fn grad_norm_sq(field: &GridField) -> GridField {
    let gx = derivative(field, 0, 1);
    let mut out = gx.mul(&gx);
    if field.grid().dim() == 2 {
        let gy = derivative(field, 1, 1);
        out = out.add(&gy.mul(&gy));
    }
    out
}

/// Divergence `∇·(a ∇u)` with pointwise coefficient `a` (spectral derivatives).
pub fn div_a_grad(a: &GridField, u: &GridField) -> GridField {
    let mut out = derivative(&a.mul(&derivative(u, 0, 1)), 0, 1);
    if u.grid().dim() == 2 {
        out = out.add(&derivative(&a.mul(&derivative(u, 1, 1)), 1, 1));
    }
    out
}

/// Random real band-limited field with modes `0 < ‖z‖_∞ <= max_mode`,
/// coefficient magnitudes of order `amplitude`.
pub fn random_band_limited(
    grid: PeriodicGrid,
    max_mode: i64,
    amplitude: f64,
    rng: &mut impl rand::Rng,
) -> GridField {
    let mut field = GridField::constant(grid, 0.0);
    let dim = grid.dim();
    let mut modes: Vec<[i64; 2]> = Vec::new();
    if dim == 1 {
        for z in 1..=max_mode {
            modes.push([z, 0]);
        }
    } else {
        for zx in -max_mode..=max_mode {
            for zy in -max_mode..=max_mode {
                if (zx, zy) > (0, 0) || (zx == 0 && zy > 0) || zx > 0 {
                    modes.push([zx, zy]);
                }
            }
        }
    }
    for z in modes {
        let a: f64 = rng.gen_range(-1.0..1.0);
        let b: f64 = rng.gen_range(-1.0..1.0);
        let contrib = GridField::from_fn(grid, |x| {
            let phase = z[0] as f64 * x[0] + if dim == 2 { z[1] as f64 * x[1] } else { 0.0 };
            a * phase.cos() + b * phase.sin()
        });
        field = field.add(&contrib.scale(amplitude));
    }
    field
}
