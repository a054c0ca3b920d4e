//! Periodic grids, unitary discrete Fourier transforms, Fourier multipliers,
//! and band-limited (trigonometric) interpolation.
//!
//! # Transform convention
//!
//! This is the single normative statement of the normalization used by the
//! whole crate. On each axis of length `L` with `N` points, spacing
//! `Δx = L/N`, the wavenumbers are `ξ_k = 2πk/L` for
//! `k = 0, 1, …, N/2−1, −N/2, …, −1` (internal FFT ordering), and
//!
//! ```text
//! forward:  û(ξ) = Π_a (Δx_a/√(2π)) · Σ_x u(x) e^{−iξ·x}
//! inverse:  u(x) = Π_a (Δξ_a/√(2π)) · Σ_ξ û(ξ) e^{+iξ·x},   Δξ_a = 2π/L_a
//! ```
//!
//! With this symmetric scaling Parseval's identity reads
//!
//! ```text
//! Σ_x |u(x)|² ΠΔx  =  Σ_ξ |û(ξ)|² ΠΔξ
//! ```
//!
//! i.e. the discrete transform is unitary between the physical quadrature
//! inner product and the wavenumber quadrature inner product. All L² norms,
//! energies and pairings in this crate are quadrature sums in whichever
//! representation is cheapest; the convention above makes them agree.
//!
//! The unpaired Nyquist mode `k = −N/2` is zeroed by every odd (derivative
//! like) multiplier and is treated as `cos(ξ_N x)` during interpolation so
//! that real fields stay real under shifts.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// One periodic axis: `N` points over `[0, L)`.
#[derive(Debug, Clone)]
pub struct AxisSpec {
    pub n: usize,
    pub length: f64,
}

impl AxisSpec {
    pub fn spacing(&self) -> f64 {
        self.length / self.n as f64
    }

    /// Wavenumber spacing `2π/L`.
    pub fn dxi(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.length
    }

    /// Signed integer mode index for storage index `i`.
    pub fn mode(&self, i: usize) -> i64 {
        if i < self.n / 2 {
            i as i64
        } else {
            i as i64 - self.n as i64
        }
    }

    /// Wavenumber `ξ = 2π·mode/L` for storage index `i`.
    pub fn wavenumber(&self, i: usize) -> f64 {
        self.dxi() * self.mode(i) as f64
    }

    /// Storage index of the unpaired Nyquist mode `k = −N/2`.
    pub fn nyquist_index(&self) -> usize {
        self.n / 2
    }
}

/// Periodic position grid with its wavenumber set. Immutable after
/// construction; shared by reference-counting across fields and threads.
pub struct SpectralGrid {
    axes: Vec<AxisSpec>,
    len: usize,
    fwd: Vec<Arc<dyn Fft<f64>>>,
    inv: Vec<Arc<dyn Fft<f64>>>,
}

impl std::fmt::Debug for SpectralGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralGrid").field("axes", &self.axes).finish()
    }
}

impl SpectralGrid {
    /// Build a grid from per-axis `(N, L)` pairs. `N` must be a power of two
    /// (and at least 4), `L` positive.
    pub fn new(axes: &[(usize, f64)]) -> Result<Arc<SpectralGrid>> {
        if axes.is_empty() || axes.len() > 3 {
            return Err(Error::Config(format!(
                "grid dimension must be 1..=3, got {}",
                axes.len()
            )));
        }
        let mut planner = FftPlanner::new();
        let mut spec = Vec::with_capacity(axes.len());
        let mut fwd = Vec::new();
        let mut inv = Vec::new();
        let mut len = 1usize;
        for &(n, length) in axes {
            if n < 4 || !n.is_power_of_two() {
                return Err(Error::Config(format!(
                    "axis point count must be a power of two >= 4, got {n}"
                )));
            }
            if !(length > 0.0) || !length.is_finite() {
                return Err(Error::Config(format!("axis length must be positive, got {length}")));
            }
            spec.push(AxisSpec { n, length });
            fwd.push(planner.plan_fft_forward(n));
            inv.push(planner.plan_fft_inverse(n));
            len *= n;
        }
        Ok(Arc::new(SpectralGrid { axes: spec, len, fwd, inv }))
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    /// Total number of grid points.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn axes(&self) -> &[AxisSpec] {
        &self.axes
    }

    pub fn axis(&self, a: usize) -> &AxisSpec {
        &self.axes[a]
    }

    /// Volume element `ΠΔx`.
    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().map(AxisSpec::spacing).product()
    }

    /// Wavenumber-space volume element `ΠΔξ = Π 2π/L`.
    pub fn mode_volume(&self) -> f64 {
        self.axes.iter().map(AxisSpec::dxi).product()
    }

    /// Decompose a flat row-major index (axis 0 slowest) into per-axis indices.
    pub fn unflatten(&self, flat: usize, out: &mut [usize]) {
        let mut rem = flat;
        for a in (0..self.axes.len()).rev() {
            out[a] = rem % self.axes[a].n;
            rem /= self.axes[a].n;
        }
    }

    /// Position of a flat index.
    pub fn position(&self, flat: usize, out: &mut [f64]) {
        let mut rem = flat;
        for a in (0..self.axes.len()).rev() {
            let i = rem % self.axes[a].n;
            rem /= self.axes[a].n;
            out[a] = i as f64 * self.axes[a].spacing();
        }
    }

    /// Wavenumber vector of a flat index (FFT storage order per axis).
    pub fn wavenumber(&self, flat: usize, out: &mut [f64]) {
        let mut rem = flat;
        for a in (0..self.axes.len()).rev() {
            let i = rem % self.axes[a].n;
            rem /= self.axes[a].n;
            out[a] = self.axes[a].wavenumber(i);
        }
    }

    /// Largest wavenumber magnitude on any axis.
    pub fn max_wavenumber(&self, a: usize) -> f64 {
        self.axes[a].dxi() * (self.axes[a].n / 2) as f64
    }

    fn transform(&self, data: &mut [Complex64], forward: bool) {
        debug_assert_eq!(data.len(), self.len);
        for a in 0..self.axes.len() {
            let plan = if forward { &self.fwd[a] } else { &self.inv[a] };
            let scale = if forward {
                self.axes[a].spacing() / (2.0 * std::f64::consts::PI).sqrt()
            } else {
                self.axes[a].dxi() / (2.0 * std::f64::consts::PI).sqrt()
            };
            lane_apply(data, &self.dims(), a, |lane| {
                plan.process(lane);
                for v in lane.iter_mut() {
                    *v *= scale;
                }
            });
        }
    }

    fn dims(&self) -> Vec<usize> {
        self.axes.iter().map(|ax| ax.n).collect()
    }
}

/// Apply `f` to every 1-d lane of `data` along `axis` (row-major layout,
/// axis 0 slowest), via a contiguous scratch buffer.
pub(crate) fn lane_apply(
    data: &mut [Complex64],
    dims: &[usize],
    axis: usize,
    mut f: impl FnMut(&mut [Complex64]),
) {
    let n = dims[axis];
    let stride: usize = dims[axis + 1..].iter().product();
    let block = n * stride;
    let outer = data.len() / block;
    let mut scratch = vec![Complex64::new(0.0, 0.0); n];
    for o in 0..outer {
        for s in 0..stride {
            let base = o * block + s;
            for (i, sc) in scratch.iter_mut().enumerate() {
                *sc = data[base + i * stride];
            }
            f(&mut scratch);
            for (i, sc) in scratch.iter().enumerate() {
                data[base + i * stride] = *sc;
            }
        }
    }
}

/// Which side of the transform a field currently lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Repr {
    Physical,
    Fourier,
}

/// Complex samples over a [`SpectralGrid`], tagged with their representation.
#[derive(Debug, Clone)]
pub struct ComplexField {
    grid: Arc<SpectralGrid>,
    repr: Repr,
    data: Vec<Complex64>,
}

impl ComplexField {
    pub fn zeros(grid: Arc<SpectralGrid>, repr: Repr) -> Self {
        let n = grid.len();
        ComplexField { grid, repr, data: vec![Complex64::new(0.0, 0.0); n] }
    }

    pub fn from_data(grid: Arc<SpectralGrid>, repr: Repr, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::Config(format!(
                "field data length {} does not match grid size {}",
                data.len(),
                grid.len()
            )));
        }
        Ok(ComplexField { grid, repr, data })
    }

    /// Sample a function of position onto the grid (physical representation).
    pub fn from_fn(grid: Arc<SpectralGrid>, f: impl Fn(&[f64]) -> Complex64) -> Self {
        let d = grid.dim();
        let mut x = vec![0.0; d];
        let data = (0..grid.len())
            .map(|i| {
                grid.position(i, &mut x);
                f(&x)
            })
            .collect();
        ComplexField { grid, repr: Repr::Physical, data }
    }

    pub fn grid(&self) -> &Arc<SpectralGrid> {
        &self.grid
    }

    pub fn repr(&self) -> Repr {
        self.repr
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    /// Forward transform (physical -> Fourier).
    pub fn forward(&self) -> Result<ComplexField> {
        if self.repr != Repr::Physical {
            return Err(Error::Config("forward transform expects a physical-space field".into()));
        }
        let mut data = self.data.clone();
        self.grid.transform(&mut data, true);
        Ok(ComplexField { grid: self.grid.clone(), repr: Repr::Fourier, data })
    }

    /// Inverse transform (Fourier -> physical).
    pub fn inverse(&self) -> Result<ComplexField> {
        if self.repr != Repr::Fourier {
            return Err(Error::Config("inverse transform expects a Fourier-space field".into()));
        }
        let mut data = self.data.clone();
        self.grid.transform(&mut data, false);
        Ok(ComplexField { grid: self.grid.clone(), repr: Repr::Physical, data })
    }

    /// Apply a real scalar Fourier multiplier `m(ξ)`; physical in, physical out.
    pub fn apply_multiplier(&self, m: impl Fn(&[f64]) -> f64) -> Result<ComplexField> {
        self.apply_symbol(|xi| {
            let v = m(xi);
            Complex64::new(v, 0.0)
        })
    }

    /// Apply a complex Fourier symbol `s(ξ)`; physical in, physical out.
    pub fn apply_symbol(&self, s: impl Fn(&[f64]) -> Complex64) -> Result<ComplexField> {
        let mut hat = self.forward()?;
        let d = self.grid.dim();
        let mut xi = vec![0.0; d];
        for (i, v) in hat.data.iter_mut().enumerate() {
            self.grid.wavenumber(i, &mut xi);
            let f = s(&xi);
            if !f.re.is_finite() || !f.im.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite multiplier value at wavenumber {xi:?}"
                )));
            }
            *v *= f;
        }
        hat.inverse()
    }

    /// Translate by `delta`: returns samples of `x ↦ u(x + delta)`.
    ///
    /// Exact for band-limited fields; the Nyquist mode is advanced with a
    /// real `cos` factor so real fields stay real.
    pub fn shifted(&self, delta: &[f64]) -> Result<ComplexField> {
        let hat = self.forward()?;
        let mut shifted = hat.shifted_in_fourier(delta)?;
        shifted = shifted.inverse()?;
        Ok(shifted)
    }

    /// Same as [`ComplexField::shifted`] but starting from (and returning)
    /// the Fourier representation.
    pub fn shifted_in_fourier(&self, delta: &[f64]) -> Result<ComplexField> {
        if self.repr != Repr::Fourier {
            return Err(Error::Config("shifted_in_fourier expects a Fourier-space field".into()));
        }
        if delta.len() != self.grid.dim() {
            return Err(Error::Config("shift vector dimension mismatch".into()));
        }
        let d = self.grid.dim();
        let mut out = self.clone();
        let mut idx = vec![0usize; d];
        for (i, v) in out.data.iter_mut().enumerate() {
            self.grid.unflatten(i, &mut idx);
            let mut factor = Complex64::new(1.0, 0.0);
            for a in 0..d {
                let ax = self.grid.axis(a);
                let xi = ax.wavenumber(idx[a]);
                if idx[a] == ax.nyquist_index() {
                    factor *= Complex64::new((xi * delta[a]).cos(), 0.0);
                } else {
                    factor *= Complex64::cis(xi * delta[a]);
                }
            }
            *v *= factor;
        }
        Ok(out)
    }

    /// Evaluate the band-limited interpolant at an arbitrary point
    /// (Fourier representation required). Points wrap periodically. Direct
    /// O(N) mode sum; intended for oracles and scattered evaluations.
    pub fn eval_at(&self, point: &[f64]) -> Result<Complex64> {
        if self.repr != Repr::Fourier {
            return Err(Error::Config("eval_at expects a Fourier-space field".into()));
        }
        let d = self.grid.dim();
        let mut idx = vec![0usize; d];
        let scale = self.grid.mode_volume() / (2.0 * std::f64::consts::PI).sqrt().powi(d as i32);
        let mut acc = Complex64::new(0.0, 0.0);
        for (i, v) in self.data.iter().enumerate() {
            self.grid.unflatten(i, &mut idx);
            let mut factor = Complex64::new(1.0, 0.0);
            for a in 0..d {
                let ax = self.grid.axis(a);
                let xi = ax.wavenumber(idx[a]);
                if idx[a] == ax.nyquist_index() {
                    factor *= Complex64::new((xi * point[a]).cos(), 0.0);
                } else {
                    factor *= Complex64::cis(xi * point[a]);
                }
            }
            acc += v * factor;
        }
        Ok(acc * scale)
    }

    /// Quadrature L² norm, representation-aware (Parseval makes both agree).
    pub fn l2_norm(&self) -> f64 {
        let w = match self.repr {
            Repr::Physical => self.grid.cell_volume(),
            Repr::Fourier => self.grid.mode_volume(),
        };
        (self.data.iter().map(|v| v.norm_sqr()).sum::<f64>() * w).sqrt()
    }

    /// Quadrature inner product `⟨self, other⟩ = ∫ conj(self)·other`.
    pub fn inner(&self, other: &ComplexField) -> Complex64 {
        debug_assert_eq!(self.repr, other.repr);
        let w = match self.repr {
            Repr::Physical => self.grid.cell_volume(),
            Repr::Fourier => self.grid.mode_volume(),
        };
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.conj() * b)
            .sum::<Complex64>()
            * w
    }

    /// Largest |Im| relative to the largest |value|; the realness residue.
    pub fn imag_residue(&self) -> f64 {
        let max_abs = self.data.iter().map(|v| v.norm()).fold(0.0, f64::max);
        if max_abs == 0.0 {
            return 0.0;
        }
        self.data.iter().map(|v| v.im.abs()).fold(0.0, f64::max) / max_abs
    }
}

/// Real samples over a [`SpectralGrid`], physical representation only.
/// Spectral operations route through [`ComplexField`].
#[derive(Debug, Clone)]
pub struct RealField {
    grid: Arc<SpectralGrid>,
    data: Vec<f64>,
}

impl RealField {
    pub fn zeros(grid: Arc<SpectralGrid>) -> Self {
        let n = grid.len();
        RealField { grid, data: vec![0.0; n] }
    }

    pub fn from_data(grid: Arc<SpectralGrid>, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::Config("real field data length mismatch".into()));
        }
        Ok(RealField { grid, data })
    }

    pub fn from_fn(grid: Arc<SpectralGrid>, f: impl Fn(&[f64]) -> f64) -> Self {
        let d = grid.dim();
        let mut x = vec![0.0; d];
        let data = (0..grid.len())
            .map(|i| {
                grid.position(i, &mut x);
                f(&x)
            })
            .collect();
        RealField { grid, data }
    }

    /// Take the real part of a physical-space complex field, discarding the
    /// imaginary residue (available via [`ComplexField::imag_residue`]).
    pub fn from_complex(cf: &ComplexField) -> Result<RealField> {
        if cf.repr() != Repr::Physical {
            return Err(Error::Config("from_complex expects a physical-space field".into()));
        }
        Ok(RealField {
            grid: cf.grid().clone(),
            data: cf.data().iter().map(|v| v.re).collect(),
        })
    }

    pub fn grid(&self) -> &Arc<SpectralGrid> {
        &self.grid
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn to_complex(&self) -> ComplexField {
        ComplexField {
            grid: self.grid.clone(),
            repr: Repr::Physical,
            data: self.data.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        }
    }

    /// Apply a real even multiplier; the real part of the result is returned
    /// (the imaginary residue is roundoff by symmetry).
    pub fn apply_multiplier(&self, m: impl Fn(&[f64]) -> f64) -> Result<RealField> {
        let out = self.to_complex().apply_multiplier(m)?;
        RealField::from_complex(&out)
    }

    pub fn integral(&self) -> f64 {
        self.data.iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn l2_norm(&self) -> f64 {
        (self.data.iter().map(|v| v * v).sum::<f64>() * self.grid.cell_volume()).sqrt()
    }

    /// Quadrature `L^p` norm for `p ≥ 1`.
    pub fn lp_norm(&self, p: f64) -> f64 {
        (self.data.iter().map(|v| v.abs().powf(p)).sum::<f64>() * self.grid.cell_volume())
            .powf(1.0 / p)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.data.iter().fold(f64::INFINITY, |m, &v| m.min(v))
    }
}

/// Evaluate the band-limited interpolant of a physical-space field at
/// arbitrary (periodically wrapped) points.
pub fn trig_interpolate(field: &ComplexField, points: &[Vec<f64>]) -> Result<Vec<Complex64>> {
    let hat = match field.repr() {
        Repr::Physical => field.forward()?,
        Repr::Fourier => field.clone(),
    };
    points.iter().map(|p| hat.eval_at(p)).collect()
}
