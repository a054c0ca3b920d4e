//! Conserved quantities, energies, Schatten norms, density-norm
//! inequalities, and the initial-data assumption margins.
//!
//! Quantities tracked along a run: `tr ρ = Σλ_j`, `tr ρ² = Σλ_j²` (exact
//! invariants of the splitting), the Hartree energy
//! `E = Σ_j λ_j ‖(−ε²Δ+1)^{1/4}ψ_j‖² + (1/2)∫V(n−n̄)`, the Wigner L² norm
//! through the scaling identity, `‖∇V‖_{L²}`, and the density norms
//! `‖n‖_{L¹}, ‖n‖_{L^{5/4}}, ‖n‖_{L^{6/5}}` together with the Hölder
//! interpolation check `‖n‖_{6/5} ≤ ‖n‖₁^{1/6}‖n‖_{5/4}^{5/6}`.
//!
//! For the attractive coupling the run gate is the margin `8π − C̃` with
//! `C̃ = C_s C₂^{5/3} (tr ρ)^{1/3} ‖f^ε(0)‖_{L²}^{2/3}`; the constants
//! `C_s, C₂` are configuration inputs with recorded provenance — no
//! defaults ship with the crate.

use nalgebra::{Complex, DMatrix};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hartree::MixedState;
use crate::spectral::{ComplexField, RealField, Repr, SpectralGrid};

/// A user-supplied inequality constant together with where it came from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantInput {
    pub value: f64,
    pub provenance: String,
}

/// `C_s` (Sobolev form) and `C₂` (p = 2 density bound), both user-supplied.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InequalityConstants {
    pub c_s: ConstantInput,
    pub c_2: ConstantInput,
}

/// Kinetic energy `Σ_j λ_j Σ_k √(ε²|ξ_k|²+1) |ψ̂_j(k)|²`; always ≥ tr ρ
/// since the symbol is ≥ 1.
pub fn kinetic_energy(state: &MixedState) -> Result<f64> {
    let grid = state.grid();
    let d = grid.dim();
    let eps = state.eps;
    let w = grid.mode_volume();
    let mut xi = vec![0.0f64; d];
    let mut total = 0.0;
    for (orb, lambda) in state.orbitals().iter().zip(state.weights()) {
        if *lambda == 0.0 {
            continue;
        }
        let hat = orb.forward()?;
        let mut acc = 0.0;
        for (i, v) in hat.data().iter().enumerate() {
            grid.wavenumber(i, &mut xi);
            let k2: f64 = xi.iter().map(|k| k * k).sum();
            acc += (eps * eps * k2 + 1.0).sqrt() * v.norm_sqr();
        }
        total += lambda * acc * w;
    }
    Ok(total)
}

/// Field energy `(1/2)∫V·(n−n̄) dx` for the κ-signed potential solving
/// `−κΔV = n − n̄`: nonnegative for κ = +1, nonpositive for κ = −1.
pub fn potential_energy(v: &RealField, n: &RealField) -> f64 {
    let nbar = n.mean();
    0.5 * v
        .data()
        .iter()
        .zip(n.data())
        .map(|(vv, nn)| vv * (nn - nbar))
        .sum::<f64>()
        * v.grid().cell_volume()
}

/// `‖f^ε‖_{L²}` computed through the scaling identity
/// `‖f‖² = (2πε)^{−d}‖ρ‖²` with `‖ρ‖² = Σ_{jl} λ_j λ_l |⟨ψ_j,ψ_l⟩|²`.
pub fn wigner_l2_from_state(state: &MixedState) -> f64 {
    let d = state.grid().dim() as i32;
    (state.kernel_l2_sq() / (2.0 * std::f64::consts::PI * state.eps).powi(d)).sqrt()
}

/// Density norms `(‖n‖_{L¹}, ‖n‖_{L^{5/4}}, ‖n‖_{L^{6/5}})`.
pub fn density_norms(n: &RealField) -> (f64, f64, f64) {
    (n.lp_norm(1.0), n.lp_norm(1.25), n.lp_norm(1.2))
}

/// Hölder interpolation `‖n‖_{6/5} ≤ ‖n‖₁^{1/6} ‖n‖_{5/4}^{5/6}` with a
/// roundoff allowance.
pub fn holder_interpolation_ok(n: &RealField) -> bool {
    let (l1, l54, l65) = density_norms(n);
    l65 <= l1.powf(1.0 / 6.0) * l54.powf(5.0 / 6.0) * (1.0 + 1e-12)
}

/// Dense Hermitian discretization of a density-matrix kernel
/// `ρ(x, y)` on a small grid (≤ 512 points), row-major.
#[derive(Debug, Clone)]
pub struct DensityKernel {
    grid: std::sync::Arc<SpectralGrid>,
    mat: Vec<Complex64>,
}

/// Dense-eigendecomposition size cap.
pub const DENSE_KERNEL_MAX_POINTS: usize = 512;

impl DensityKernel {
    pub fn from_mixed_state(state: &MixedState) -> Result<DensityKernel> {
        let grid = state.grid().clone();
        let n = grid.len();
        if n > DENSE_KERNEL_MAX_POINTS {
            return Err(Error::Config(format!(
                "dense kernel limited to {DENSE_KERNEL_MAX_POINTS} grid points, got {n}"
            )));
        }
        let mut mat = vec![Complex64::new(0.0, 0.0); n * n];
        for (orb, w) in state.orbitals().iter().zip(state.weights()) {
            let data = orb.data();
            for r in 0..n {
                for c in 0..n {
                    mat[r * n + c] += w * data[r] * data[c].conj();
                }
            }
        }
        Ok(DensityKernel { grid, mat })
    }

    pub fn grid(&self) -> &std::sync::Arc<SpectralGrid> {
        &self.grid
    }

    /// Diagonal `n(x) = ρ(x, x)`.
    pub fn density(&self) -> RealField {
        let n = self.grid.len();
        let data: Vec<f64> = (0..n).map(|i| self.mat[i * n + i].re).collect();
        RealField::from_data(self.grid.clone(), data).expect("diag length")
    }

    fn hermiticity_defect(&self) -> f64 {
        let n = self.grid.len();
        let mut worst = 0.0f64;
        let mut scale = 0.0f64;
        for r in 0..n {
            for c in 0..n {
                worst = worst.max((self.mat[r * n + c] - self.mat[c * n + r].conj()).norm());
                scale = scale.max(self.mat[r * n + c].norm());
            }
        }
        if scale == 0.0 {
            0.0
        } else {
            worst / scale
        }
    }

    /// Operator eigenvalues (quadrature weight included) and L²-normalized
    /// eigenvector fields.
    fn eigensystem(&self) -> Result<(Vec<f64>, Vec<ComplexField>)> {
        if self.hermiticity_defect() > 1e-8 {
            return Err(Error::Numerical("kernel is not Hermitian within 1e-8".into()));
        }
        let n = self.grid.len();
        let dv = self.grid.cell_volume();
        let mut m = DMatrix::<Complex<f64>>::zeros(n, n);
        let mut max_abs = 0.0f64;
        for r in 0..n {
            for c in 0..n {
                // symmetrize; the integral operator carries the quadrature weight
                let v = 0.5 * (self.mat[r * n + c] + self.mat[c * n + r].conj()) * dv;
                m[(r, c)] = Complex::new(v.re, v.im);
                max_abs = max_abs.max(v.norm());
            }
        }
        // Entries hundreds of orders below the scale (deep Gaussian tails)
        // destabilize the QR iteration; flushing them perturbs the spectrum
        // by less than N·1e−60·‖ρ‖.
        let flush = max_abs * 1e-60;
        for v in m.iter_mut() {
            if v.norm() < flush {
                *v = Complex::new(0.0, 0.0);
            }
        }
        let eig = m.symmetric_eigen();
        let mut vals: Vec<f64> = eig.eigenvalues.iter().cloned().collect();
        let mut vecs = Vec::with_capacity(n);
        for c in 0..n {
            let col: Vec<Complex64> = (0..n)
                .map(|r| {
                    let v = eig.eigenvectors[(r, c)];
                    Complex64::new(v.re, v.im) / dv.sqrt()
                })
                .collect();
            vecs.push(ComplexField::from_data(self.grid.clone(), Repr::Physical, col)?);
        }
        // clamp eigenvalue noise of a PSD operator
        for v in &mut vals {
            if *v < 0.0 && *v > -1e-12 {
                *v = 0.0;
            }
        }
        Ok((vals, vecs))
    }
}

/// Schatten p-norm `(Σ σ_j^p)^{1/p}` of a dense kernel through its
/// eigendecomposition.
pub fn schatten_norm(kernel: &DensityKernel, p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::Config("schatten order p must be >= 1".into()));
    }
    let (vals, _) = kernel.eigensystem()?;
    Ok(vals.iter().map(|v| v.abs().powf(p)).sum::<f64>().powf(1.0 / p))
}

/// Exponents `(q, θ)` of the density bound
/// `‖n‖_{L^q} ≤ C_p ‖ρ‖_{S_p}^θ (tr|∇|ρ)^{1−θ}` in dimension `d`:
/// `q = (d(p−1)+p)/(d(p−1)+1)`, `θ = p/(d(p−1)+p)`.
pub fn lieb_thirring_exponents(p: f64, d: usize) -> (f64, f64) {
    let dd = d as f64;
    let q = (dd * (p - 1.0) + p) / (dd * (p - 1.0) + 1.0);
    let theta = p / (dd * (p - 1.0) + p);
    (q, theta)
}

/// The scale-invariant ratio `‖n‖_{L^q} / (‖ρ‖_{S_p}^θ (tr|∇|ρ)^{1−θ})`
/// for a dense kernel; bounded by the (unknown) constant `C_p`.
pub fn lieb_thirring_ratio(kernel: &DensityKernel, p: f64) -> Result<f64> {
    if !(p > 1.0) {
        return Err(Error::Config("the ratio needs p > 1".into()));
    }
    let d = kernel.grid().dim();
    let (q, theta) = lieb_thirring_exponents(p, d);
    let (vals, vecs) = kernel.eigensystem()?;
    let sp = vals.iter().map(|v| v.abs().powf(p)).sum::<f64>().powf(1.0 / p);

    // tr|∇|ρ = Σ_m μ_m ⟨φ_m, |ξ| φ_m⟩ as a Fourier sum.
    let grid = kernel.grid();
    let w = grid.mode_volume();
    let dd = grid.dim();
    let mut xi = vec![0.0f64; dd];
    let mut tr_grad = 0.0;
    for (mu, phi) in vals.iter().zip(&vecs) {
        if mu.abs() < 1e-14 {
            continue;
        }
        let hat = phi.forward()?;
        let mut acc = 0.0;
        for (i, v) in hat.data().iter().enumerate() {
            grid.wavenumber(i, &mut xi);
            let knorm = xi.iter().map(|k| k * k).sum::<f64>().sqrt();
            acc += knorm * v.norm_sqr();
        }
        tr_grad += mu * acc * w;
    }

    let nq = kernel.density().lp_norm(q);
    let denom = sp.powf(theta) * tr_grad.powf(1.0 - theta);
    if denom == 0.0 {
        return Err(Error::Numerical("zero state has no defined ratio".into()));
    }
    Ok(nq / denom)
}

/// Relative change of [`lieb_thirring_ratio`] under the unitary dilation
/// `ψ(x) → λ_s^{d/2} ψ(λ_s x)` of a Gaussian orbital of width `sigma`
/// (the exponents make the continuum ratio invariant).
pub fn dilation_covariance_check(
    sigma: f64,
    n: usize,
    length: f64,
    p: f64,
    lambda_s: f64,
) -> Result<f64> {
    if !(lambda_s > 0.0) {
        return Err(Error::Config("dilation scale must be positive".into()));
    }
    let dilated_sigma = sigma / lambda_s;
    for s in [sigma, dilated_sigma] {
        if 8.0 * s > length {
            return Err(Error::Config(
                "dilated orbital support leaves the grid; enlarge the domain".into(),
            ));
        }
    }
    let ratio_of = |s: f64| -> Result<f64> {
        let grid = SpectralGrid::new(&[(n, length)])?;
        let center = length / 2.0;
        let mut orb = ComplexField::from_fn(grid.clone(), |x| {
            let dx = x[0] - center;
            Complex64::new((-dx * dx / (2.0 * s * s)).exp(), 0.0)
        });
        let norm = orb.l2_norm();
        for v in orb.data_mut() {
            *v /= norm;
        }
        let state = MixedState::new(grid, 0.5, vec![1.0], vec![orb])?;
        let kernel = DensityKernel::from_mixed_state(&state)?;
        lieb_thirring_ratio(&kernel, p)
    };
    let base = ratio_of(sigma)?;
    let dilated = ratio_of(dilated_sigma)?;
    Ok((dilated - base).abs() / base)
}

/// Margins of the initial-data assumptions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub tr_rho: f64,
    pub tr_rho_sq: f64,
    /// `ε^{−d} tr ρ²`; O(1) for a fully mixed family.
    pub scaled_hilbert_schmidt: f64,
    pub kinetic_energy: f64,
    pub wigner_l2: f64,
    /// `C̃ = C_s C₂^{5/3} (tr ρ)^{1/3} ‖f^ε‖_{L²}^{2/3}` when constants are
    /// supplied.
    pub c_tilde: Option<f64>,
    /// `8π − C̃`; the attractive-case gate requires it positive.
    pub margin: Option<f64>,
    /// True outside d = 3, where the margin semantics are informational.
    pub informational: bool,
    pub zero_mass: bool,
}

impl AssumptionReport {
    pub fn margin_passes(&self) -> Option<bool> {
        self.margin.map(|m| m > 0.0)
    }
}

/// Evaluate the assumption margins of a state. `C_s, C₂` are required for
/// the attractive gate in d = 3; elsewhere the margin is reported as
/// informational.
pub fn assumption_margins(
    state: &MixedState,
    constants: Option<&InequalityConstants>,
) -> Result<AssumptionReport> {
    let d = state.grid().dim();
    let tr_rho = state.trace();
    let tr_rho_sq = state.trace_sq();
    let e_kin = kinetic_energy(state)?;
    let f_l2 = wigner_l2_from_state(state);
    let (c_tilde, margin) = match constants {
        Some(c) => {
            let ct = c.c_s.value
                * c.c_2.value.powf(5.0 / 3.0)
                * tr_rho.powf(1.0 / 3.0)
                * f_l2.powf(2.0 / 3.0);
            (Some(ct), Some(8.0 * std::f64::consts::PI - ct))
        }
        None => (None, None),
    };
    Ok(AssumptionReport {
        tr_rho,
        tr_rho_sq,
        scaled_hilbert_schmidt: tr_rho_sq / state.eps.powi(d as i32),
        kinetic_energy: e_kin,
        wigner_l2: f_l2,
        c_tilde,
        margin,
        informational: d != 3,
        zero_mass: tr_rho <= 0.0,
    })
}

/// The threshold constant `C* = (8π)³/(C_s³ C₂⁵)` of the attractive-case
/// smallness condition.
pub fn c_star(constants: &InequalityConstants) -> f64 {
    (8.0 * std::f64::consts::PI).powi(3)
        / (constants.c_s.value.powi(3) * constants.c_2.value.powi(5))
}

/// Desk-scale d = 3 check of `∬ n(x)n(y)/|x−y| ≤ C_s ‖n‖²_{6/5}` with the
/// minimum-image distance (diagonal excluded). A violation indicates a
/// mis-configured constant, so the outcome is reported, not asserted.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SobolevCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub satisfied: bool,
}

pub fn sobolev_form_check_3d(n: &RealField, c_s: f64) -> Result<SobolevCheck> {
    let grid = n.grid();
    if grid.dim() != 3 {
        return Err(Error::Config("the Sobolev-form check is a d = 3 diagnostic".into()));
    }
    if grid.len() > 4096 {
        return Err(Error::Config("Sobolev-form check limited to small grids".into()));
    }
    let npts = grid.len();
    let dv = grid.cell_volume();
    let mut pos = vec![[0.0f64; 3]; npts];
    let mut buf = vec![0.0f64; 3];
    for (i, pv) in pos.iter_mut().enumerate() {
        grid.position(i, &mut buf);
        pv.copy_from_slice(&buf);
    }
    let lengths: Vec<f64> = grid.axes().iter().map(|a| a.length).collect();
    let data = n.data();
    let mut lhs = 0.0;
    for i in 0..npts {
        for l in 0..npts {
            if i == l {
                continue;
            }
            let mut r2 = 0.0;
            for a in 0..3 {
                let mut dxa = pos[i][a] - pos[l][a];
                dxa -= (dxa / lengths[a]).round() * lengths[a];
                r2 += dxa * dxa;
            }
            lhs += data[i] * data[l] / r2.sqrt();
        }
    }
    lhs *= dv * dv;
    let rhs = c_s * n.lp_norm(1.2).powi(2);
    Ok(SobolevCheck { lhs, rhs, satisfied: lhs <= rhs })
}

/// One sampled row of the run diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub tr_rho: f64,
    pub tr_rho_sq: f64,
    pub tr_rho_sq_scaled: f64,
    pub e_kin: f64,
    pub e_pot: f64,
    pub e_total: f64,
    pub f_l2: f64,
    pub grad_v_l2: f64,
    pub n_l1: f64,
    pub n_l54: f64,
    pub n_l65: f64,
    pub holder_ok: bool,
    pub margin: Option<f64>,
}

impl DiagnosticsRecord {
    /// Evaluate every entry from a state and its self-consistent field.
    pub fn compute(
        state: &MixedState,
        v: &RealField,
        n: &RealField,
        constants: Option<&InequalityConstants>,
    ) -> Result<DiagnosticsRecord> {
        let d = state.grid().dim();
        let e_kin = kinetic_energy(state)?;
        let e_pot = potential_energy(v, n);
        let grads = crate::poisson::grad_potential(v)?;
        let grad_v_l2 = grads.iter().map(|g| g.l2_norm().powi(2)).sum::<f64>().sqrt();
        let (n_l1, n_l54, n_l65) = density_norms(n);
        let margins = assumption_margins(state, constants)?;
        let rec = DiagnosticsRecord {
            t: state.time,
            tr_rho: state.trace(),
            tr_rho_sq: state.trace_sq(),
            tr_rho_sq_scaled: state.trace_sq() / state.eps.powi(d as i32),
            e_kin,
            e_pot,
            e_total: e_kin + e_pot,
            f_l2: margins.wigner_l2,
            grad_v_l2,
            n_l1,
            n_l54,
            n_l65,
            holder_ok: holder_interpolation_ok(n),
            margin: margins.margin,
        };
        debug_assert!(rec.is_finite(), "diagnostics produced non-finite entries");
        Ok(rec)
    }

    pub fn is_finite(&self) -> bool {
        [
            self.t,
            self.tr_rho,
            self.tr_rho_sq,
            self.tr_rho_sq_scaled,
            self.e_kin,
            self.e_pot,
            self.e_total,
            self.f_l2,
            self.grad_v_l2,
            self.n_l1,
            self.n_l54,
            self.n_l65,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}
