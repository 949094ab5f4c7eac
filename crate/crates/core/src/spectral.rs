//! Periodic grid, Fourier differentiation and quadrature.
//!
//! The domain is the torus `[0, L)` sampled at `x_j = j·dx`. Transforms use
//! the `e^{-ikx}` forward convention, so `∂ₓ` acts on mode `k` as `i·k_phys`
//! with `k_phys = 2πk/L`.

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, Mul, Sub};
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

struct Plans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

/// Uniform periodic mesh. Cloning is cheap: FFT plans are shared.
#[derive(Clone)]
pub struct Grid {
    n: usize,
    length: f64,
    dx: f64,
    plans: Arc<Plans>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("n", &self.n)
            .field("length", &self.length)
            .field("dx", &self.dx)
            .finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.length == other.length
    }
}

/// Builds a grid with `n` nodes on a torus of circumference `length`.
pub fn make_grid(n: usize, length: f64) -> Result<Grid> {
    Grid::new(n, length)
}

impl Grid {
    pub fn new(n: usize, length: f64) -> Result<Self> {
        if n < 8 || !n.is_multiple_of(2) || !(length > 0.0) || !length.is_finite() {
            return Err(Error::InvalidGrid { n, length });
        }
        let mut planner = FftPlanner::new();
        let plans = Plans {
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        };
        Ok(Self {
            n,
            length,
            dx: length / n as f64,
            plans: Arc::new(plans),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn node(&self, j: usize) -> f64 {
        j as f64 * self.dx
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(move |j| self.node(j))
    }

    /// Signed integer mode of FFT slot `j`; the Nyquist slot maps to `+n/2`.
    pub fn mode(&self, j: usize) -> i64 {
        let n = self.n as i64;
        let j = j as i64;
        if j <= n / 2 {
            j
        } else {
            j - n
        }
    }

    pub fn is_nyquist(&self, j: usize) -> bool {
        j == self.n / 2
    }

    /// Physical wavenumber `2πk/L` of FFT slot `j`.
    pub fn wavenumber(&self, j: usize) -> f64 {
        2.0 * PI * self.mode(j) as f64 / self.length
    }

    /// Largest |k| kept by the 2/3 rule. Products of two fields limited to
    /// `|k| <= cutoff` alias only onto modes above the cutoff.
    pub fn dealias_cutoff(&self) -> usize {
        (self.n - 1) / 3
    }

    pub fn is_retained(&self, j: usize) -> bool {
        self.mode(j).unsigned_abs() as usize <= self.dealias_cutoff()
    }

    /// Fourier symbol of `∂ₓ^order` at slot `j`; odd orders vanish at Nyquist.
    pub fn derivative_symbol(&self, j: usize, order: u32) -> Complex64 {
        if order % 2 == 1 && self.is_nyquist(j) {
            return Complex64::new(0.0, 0.0);
        }
        Complex64::new(0.0, self.wavenumber(j)).powu(order)
    }

    pub fn scratch_len(&self) -> usize {
        self.plans
            .forward
            .get_inplace_scratch_len()
            .max(self.plans.inverse.get_inplace_scratch_len())
    }

    /// Unnormalized forward transform.
    pub fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.plans.forward.process(&mut buf);
        buf
    }

    /// Inverse transform including the `1/n` factor; the imaginary part is dropped.
    pub fn inverse(&self, spectrum: &[Complex64]) -> Vec<f64> {
        let mut buf = spectrum.to_vec();
        self.plans.inverse.process(&mut buf);
        let scale = 1.0 / self.n as f64;
        buf.iter().map(|c| c.re * scale).collect()
    }

    /// In-place forward transform of `buf` using caller-provided scratch.
    pub fn forward_in_place(&self, buf: &mut [Complex64], scratch: &mut [Complex64]) {
        self.plans.forward.process_with_scratch(buf, scratch);
    }

    /// In-place inverse transform, normalized, real part left in `re`.
    pub fn inverse_in_place(&self, buf: &mut [Complex64], scratch: &mut [Complex64]) {
        self.plans.inverse.process_with_scratch(buf, scratch);
        let scale = 1.0 / self.n as f64;
        for c in buf.iter_mut() {
            *c = Complex64::new(c.re * scale, 0.0);
        }
    }
}

/// Real samples on a [`Grid`].
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

/// Mean tolerance used by every zero-mean precondition.
pub fn mean_tolerance(values: &[f64]) -> f64 {
    let sup = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    1e-10 * sup + 1e-14
}

impl Field {
    pub fn new(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n() {
            return Err(Error::LengthMismatch {
                expected: grid.n(),
                got: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self {
            grid: grid.clone(),
            values,
        })
    }

    /// Wraps samples already known to be finite and of the right length.
    pub(crate) fn from_trusted(grid: &Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.n());
        Self {
            grid: grid.clone(),
            values,
        }
    }

    pub fn zeros(grid: &Grid) -> Self {
        Self::from_trusted(grid, vec![0.0; grid.n()])
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(f64) -> f64) -> Self {
        Self::from_trusted(grid, grid.nodes().map(f).collect())
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_trusted(&self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    /// Pointwise combination of two fields on the same grid.
    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.grid, other.grid, "fields live on different grids");
        Self::from_trusted(
            &self.grid,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    /// `dx·Σ values`: exact for trigonometric polynomials below Nyquist.
    pub fn integral(&self) -> f64 {
        self.grid.dx() * self.values.iter().sum::<f64>()
    }

    pub fn mean(&self) -> f64 {
        self.integral() / self.grid.length()
    }

    pub fn norm_l1(&self) -> f64 {
        self.grid.dx() * self.values.iter().map(|v| v.abs()).sum::<f64>()
    }

    pub fn norm_l2_squared(&self) -> f64 {
        self.grid.dx() * self.values.iter().map(|v| v * v).sum::<f64>()
    }

    pub fn norm_l2(&self) -> f64 {
        self.norm_l2_squared().sqrt()
    }

    pub fn norm_l4_fourth(&self) -> f64 {
        self.grid.dx() * self.values.iter().map(|v| (v * v) * (v * v)).sum::<f64>()
    }

    pub fn norm_l4(&self) -> f64 {
        self.norm_l4_fourth().powf(0.25)
    }

    pub fn norm_linf(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn spectrum(&self) -> Vec<Complex64> {
        self.grid.forward(&self.values)
    }

    /// `(L/n²)·Σ|f̂_k|²`, equal to `norm_l2²` by Parseval.
    pub fn spectral_energy(&self) -> f64 {
        let n = self.grid.n() as f64;
        self.spectrum().iter().map(|c| c.norm_sqr()).sum::<f64>() * self.grid.length() / (n * n)
    }
}

impl Add for &Field {
    type Output = Field;
    fn add(self, rhs: &Field) -> Field {
        self.zip_map(rhs, |a, b| a + b)
    }
}

impl Sub for &Field {
    type Output = Field;
    fn sub(self, rhs: &Field) -> Field {
        self.zip_map(rhs, |a, b| a - b)
    }
}

impl Mul<f64> for &Field {
    type Output = Field;
    fn mul(self, rhs: f64) -> Field {
        self.map(|v| v * rhs)
    }
}

/// Spectral derivative of order 1, 2 or 3.
pub fn derivative(f: &Field, order: u32) -> Field {
    assert!((1..=3).contains(&order), "derivative order must be 1, 2 or 3");
    let grid = f.grid();
    let mut spec = f.spectrum();
    for (j, c) in spec.iter_mut().enumerate() {
        *c *= grid.derivative_symbol(j, order);
    }
    Field::from_trusted(grid, grid.inverse(&spec))
}

/// Periodic antiderivative with zero mean. The input must have zero mean.
pub fn antiderivative_zero_mean(f: &Field) -> Result<Field> {
    let mean = f.mean();
    let tol = mean_tolerance(f.values());
    if mean.abs() > tol {
        return Err(Error::NonZeroMean { mean, tol });
    }
    let grid = f.grid();
    let mut spec = f.spectrum();
    for (j, c) in spec.iter_mut().enumerate() {
        if j == 0 || grid.is_nyquist(j) {
            *c = Complex64::new(0.0, 0.0);
        } else {
            *c /= Complex64::new(0.0, grid.wavenumber(j));
        }
    }
    Ok(Field::from_trusted(grid, grid.inverse(&spec)))
}

/// Trigonometric interpolation of `f` onto a finer grid of the same length.
pub fn resample(f: &Field, target: &Grid) -> Result<Field> {
    let source = f.grid();
    if source == target {
        return Ok(f.clone());
    }
    if target.length() != source.length() || target.n() < source.n() {
        return Err(Error::IncompatibleWindows(format!(
            "cannot resample n = {} onto n = {} (lengths {} and {})",
            source.n(),
            target.n(),
            source.length(),
            target.length()
        )));
    }
    let spec = f.spectrum();
    let (n, m) = (source.n(), target.n());
    let scale = m as f64 / n as f64;
    let mut out = vec![Complex64::new(0.0, 0.0); m];
    for (j, c) in spec.iter().enumerate() {
        let k = source.mode(j);
        if source.is_nyquist(j) {
            // split the Nyquist coefficient between ±n/2 to keep the result real
            let half = *c * 0.5 * scale;
            out[n / 2] += half;
            out[m - n / 2] += half;
        } else {
            let slot = if k >= 0 { k as usize } else { (m as i64 + k) as usize };
            out[slot] += *c * scale;
        }
    }
    Ok(Field::from_trusted(target, target.inverse(&out)))
}

/// Fraction of the (non-mean) energy carried by the upper third of the
/// dealiased band, `2K/3 < |k| <= K`.
pub fn tail_fraction(f: &Field) -> f64 {
    let grid = f.grid();
    let cutoff = grid.dealias_cutoff() as f64;
    let spec = f.spectrum();
    let (mut total, mut tail) = (0.0, 0.0);
    for (j, c) in spec.iter().enumerate().skip(1) {
        let e = c.norm_sqr();
        total += e;
        let k = grid.mode(j).unsigned_abs() as f64;
        if k > 2.0 * cutoff / 3.0 && k <= cutoff {
            tail += e;
        }
    }
    if total > 0.0 {
        tail / total
    } else {
        0.0
    }
}
