//! Mixed quantum states and the Strang-split propagator for the
//! semi-relativistic Hartree system
//!
//! ```text
//! iε ∂_t ψ_j = √(−ε²Δ + 1) ψ_j + V ψ_j,      −κΔV = n − n̄,
//! n(x) = Σ_j λ_j |ψ_j(x)|²
//! ```
//!
//! Both sub-flows are exactly unitary on the grid: the kinetic half is a
//! Fourier phase `exp(−i(τ/ε)√(ε²|ξ|²+1))`, the potential kick a pointwise
//! phase `exp(−i(τ/ε)V(x))`. The occupation weights `λ_j` never change, so
//! `tr ρ = Σλ_j` and `tr ρ² = Σλ_j²` are conserved identically, and the
//! shared propagator keeps the orbital Gram matrix fixed to roundoff.

use std::sync::Arc;

use nalgebra::{Complex, DMatrix};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::poisson::{solve_field, Kappa, Kernel};
use crate::profile::PhaseProfile;
use crate::spectral::{ComplexField, RealField, Repr, SpectralGrid};

/// Density matrix `ρ = Σ_j λ_j |ψ_j⟩⟨ψ_j|` sampled on a spectral grid.
#[derive(Debug, Clone)]
pub struct MixedState {
    grid: Arc<SpectralGrid>,
    pub eps: f64,
    pub time: f64,
    weights: Vec<f64>,
    orbitals: Vec<ComplexField>,
}

impl MixedState {
    pub fn new(
        grid: Arc<SpectralGrid>,
        eps: f64,
        weights: Vec<f64>,
        orbitals: Vec<ComplexField>,
    ) -> Result<MixedState> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::Config(format!("eps must lie in (0,1), got {eps}")));
        }
        if weights.len() != orbitals.len() {
            return Err(Error::Config("one weight per orbital required".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Config("weights must be finite and nonnegative".into()));
        }
        for orb in &orbitals {
            if !Arc::ptr_eq(orb.grid(), &grid) || orb.repr() != Repr::Physical {
                return Err(Error::Config(
                    "orbitals must share the state grid and be in physical representation".into(),
                ));
            }
        }
        Ok(MixedState { grid, eps, time: 0.0, weights, orbitals })
    }

    pub fn grid(&self) -> &Arc<SpectralGrid> {
        &self.grid
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn orbitals(&self) -> &[ComplexField] {
        &self.orbitals
    }

    /// `tr ρ = Σ λ_j`.
    pub fn trace(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `tr ρ² = Σ λ_j²` (orbitals orthonormal).
    pub fn trace_sq(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum()
    }

    /// Particle density `n(x) = Σ_j λ_j |ψ_j(x)|²`.
    pub fn density(&self) -> RealField {
        let npts = self.grid.len();
        let mut data = vec![0.0; npts];
        // Fixed j-order inner loop keeps the reduction deterministic.
        data.par_iter_mut().enumerate().for_each(|(i, out)| {
            let mut acc = 0.0;
            for (w, orb) in self.weights.iter().zip(&self.orbitals) {
                acc += w * orb.data()[i].norm_sqr();
            }
            *out = acc;
        });
        RealField::from_data(self.grid.clone(), data).expect("density length")
    }

    /// Orbital Gram matrix `G_{jl} = ⟨ψ_j, ψ_l⟩`, row-major.
    pub fn gram(&self) -> Vec<Complex64> {
        let j = self.orbitals.len();
        let mut g = vec![Complex64::new(0.0, 0.0); j * j];
        for r in 0..j {
            for c in r..j {
                let v = self.orbitals[r].inner(&self.orbitals[c]);
                g[r * j + c] = v;
                g[c * j + r] = v.conj();
            }
        }
        g
    }

    /// Largest deviation of the Gram matrix from the identity.
    pub fn gram_deviation(&self) -> f64 {
        let j = self.orbitals.len();
        let g = self.gram();
        let mut dev = 0.0f64;
        for r in 0..j {
            for c in 0..j {
                let target = if r == c { 1.0 } else { 0.0 };
                dev = dev.max((g[r * j + c] - Complex64::new(target, 0.0)).norm());
            }
        }
        dev
    }

    /// `‖ρ‖²_{L²(x,y)} = Σ_{jl} λ_j λ_l |⟨ψ_j,ψ_l⟩|²`, valid for any
    /// (not necessarily orthonormal) orbital family.
    pub fn kernel_l2_sq(&self) -> f64 {
        let j = self.orbitals.len();
        let g = self.gram();
        let mut acc = 0.0;
        for r in 0..j {
            for c in 0..j {
                acc += self.weights[r] * self.weights[c] * g[r * j + c].norm_sqr();
            }
        }
        acc
    }

    /// Advance every orbital by the kinetic flow for time `tau`:
    /// multiplication by `exp(−i(τ/ε)√(ε²|ξ|²+1))` in Fourier space.
    pub fn kinetic_step(&mut self, tau: f64) -> Result<()> {
        if tau == 0.0 {
            return Ok(());
        }
        let eps = self.eps;
        let stepped: Result<Vec<ComplexField>> = self
            .orbitals
            .par_iter()
            .map(|orb| {
                orb.apply_symbol(|xi| {
                    let k2: f64 = xi.iter().map(|k| k * k).sum();
                    Complex64::cis(-(tau / eps) * (eps * eps * k2 + 1.0).sqrt())
                })
            })
            .collect();
        self.orbitals = stepped?;
        Ok(())
    }

    /// Advance every orbital by the potential kick for time `tau`:
    /// pointwise multiplication by `exp(−i(τ/ε)V(x))`. The density is
    /// unchanged since `|ψ|` is.
    pub fn potential_step(&mut self, v: &RealField, tau: f64) -> Result<()> {
        if !Arc::ptr_eq(v.grid(), &self.grid) {
            return Err(Error::Config("potential grid mismatch".into()));
        }
        if tau == 0.0 {
            return Ok(());
        }
        let eps = self.eps;
        let phases: Vec<Complex64> =
            v.data().iter().map(|&vv| Complex64::cis(-(tau / eps) * vv)).collect();
        self.orbitals.par_iter_mut().for_each(|orb| {
            for (o, p) in orb.data_mut().iter_mut().zip(&phases) {
                *o *= p;
            }
        });
        Ok(())
    }
}

/// Parameters of a Hartree run.
#[derive(Debug, Clone)]
pub struct HartreeParams {
    pub kappa: Kappa,
    pub kernel: Kernel,
    pub dt: f64,
    pub t_final: f64,
    /// Cap on `Δt/ε`; the `1/ε` propagator phase must stay resolved.
    pub c_eps_cap: f64,
}

impl HartreeParams {
    pub fn validate(&self, eps: f64) -> Result<()> {
        if !(self.dt > 0.0) || self.dt > self.t_final {
            return Err(Error::Config(format!(
                "time step must satisfy 0 < dt <= t_final, got dt={} T={}",
                self.dt, self.t_final
            )));
        }
        if self.dt > self.c_eps_cap * eps {
            return Err(Error::Config(format!(
                "dt = {} exceeds the oscillation cap c_eps*eps = {}",
                self.dt,
                self.c_eps_cap * eps
            )));
        }
        if let Kernel::Yukawa { lambda } = self.kernel {
            if !(lambda > 0.0) {
                return Err(Error::Config("yukawa lambda must be positive".into()));
            }
        }
        Ok(())
    }
}

impl Default for HartreeParams {
    fn default() -> Self {
        HartreeParams {
            kappa: Kappa::Repulsive,
            kernel: Kernel::Coulomb,
            dt: 1.0 / 64.0,
            t_final: 1.0,
            c_eps_cap: 1.0 / 8.0,
        }
    }
}

/// One second-order step: kinetic half, self-consistent kick from the
/// post-half-kinetic density, kinetic half. Returns the potential used for
/// the kick (zero field for `Kernel::Free`).
pub fn strang_step(state: &mut MixedState, params: &HartreeParams) -> Result<RealField> {
    state.kinetic_step(0.5 * params.dt)?;
    let v = match params.kernel {
        Kernel::Free => RealField::zeros(state.grid().clone()),
        kernel => {
            let n = state.density();
            solve_field(&n, params.kappa, kernel)?
        }
    };
    state.potential_step(&v, params.dt)?;
    state.kinetic_step(0.5 * params.dt)?;
    state.time += params.dt;
    Ok(v)
}

/// The self-consistent potential of the current state (zero for `Free`).
pub fn instantaneous_potential(state: &MixedState, params: &HartreeParams) -> Result<RealField> {
    match params.kernel {
        Kernel::Free => Ok(RealField::zeros(state.grid().clone())),
        kernel => solve_field(&state.density(), params.kappa, kernel),
    }
}

/// How the coherent-state quadrature lattice is laid out.
#[derive(Debug, Clone)]
pub struct CoherentInit {
    /// Centers per position axis.
    pub j_x: Vec<usize>,
    /// Centers per momentum axis.
    pub j_xi: Vec<usize>,
    /// Support box is `center ± support_sigmas · σ` of the profile.
    pub support_sigmas: f64,
}

impl CoherentInit {
    /// Lattice spacing at least `β√(2πε)` per axis: fine enough to resolve
    /// `f₀`, coarse enough that the Gaussian family stays independent (one
    /// coherent state needs ~2πε of phase-space area).
    pub fn auto(profile: &PhaseProfile, d: usize, eps: f64, beta: f64) -> CoherentInit {
        let (x_lo, x_hi, xi_lo, xi_hi) = profile.support_box(d, 4.0);
        let h = beta * (2.0 * std::f64::consts::PI * eps).sqrt();
        let count = |lo: f64, hi: f64| (((hi - lo) / h).floor()).max(1.0) as usize;
        CoherentInit {
            j_x: (0..d).map(|a| count(x_lo[a], x_hi[a])).collect(),
            j_xi: (0..d).map(|a| count(xi_lo[a], xi_hi[a])).collect(),
            support_sigmas: 4.0,
        }
    }
}

/// Outcome bookkeeping for [`init_coherent_mixture`].
#[derive(Debug, Clone)]
pub struct CoherentInitReport {
    pub orbital_count: usize,
    pub sum_lambda: f64,
    pub sum_lambda_sq: f64,
    /// `ε^{−d} Σλ²`; O(1) across the ε sweep for a fully mixed family.
    pub scaled_hilbert_schmidt: f64,
    pub uncovered_mass_fraction: f64,
    pub gram_min_eigenvalue: f64,
    /// Gram deviation from identity after orthonormalization.
    pub post_orthonormal_deviation: f64,
}

/// Build a mixed state whose Wigner transform approximates `f₀`:
/// Gaussian coherent states of width `√ε` on a phase-space lattice, weights
/// proportional to `f₀` at the lattice nodes (normalized to `Σλ = ∫∫f₀`),
/// then symmetrically (Löwdin) orthonormalized.
pub fn init_coherent_mixture(
    profile: &PhaseProfile,
    eps: f64,
    grid: Arc<SpectralGrid>,
    init: &CoherentInit,
) -> Result<(MixedState, CoherentInitReport)> {
    let d = grid.dim();
    profile.validate(d)?;
    let mass = profile.mass();
    if mass <= 0.0 {
        return Err(Error::Config("initial profile has zero mass".into()));
    }
    if init.j_x.len() != d || init.j_xi.len() != d {
        return Err(Error::Config("coherent init lattice dimension mismatch".into()));
    }

    let lengths: Vec<f64> = grid.axes().iter().map(|ax| ax.length).collect();
    let (x_lo, x_hi, xi_lo, xi_hi) = profile.support_box(d, init.support_sigmas);

    // Lattice of cell centers over the support box; ξ centers are snapped to
    // the 2πε/L lattice so every coherent phase e^{iξ·x/ε} is L-periodic.
    let mut x_centers: Vec<Vec<f64>> = Vec::with_capacity(d);
    let mut xi_centers: Vec<Vec<f64>> = Vec::with_capacity(d);
    let mut cell = 1.0;
    for a in 0..d {
        let jx = init.j_x[a].max(1);
        let hx = (x_hi[a] - x_lo[a]) / jx as f64;
        x_centers.push((0..jx).map(|i| x_lo[a] + (i as f64 + 0.5) * hx).collect());
        let jxi = init.j_xi[a].max(1);
        let hxi = (xi_hi[a] - xi_lo[a]) / jxi as f64;
        let snap = 2.0 * std::f64::consts::PI * eps / lengths[a];
        xi_centers.push(
            (0..jxi)
                .map(|i| {
                    let raw = xi_lo[a] + (i as f64 + 0.5) * hxi;
                    (raw / snap).round() * snap
                })
                .collect(),
        );
        cell *= hx * hxi;
    }

    // Raw weights at the lattice nodes.
    struct Node {
        x: Vec<f64>,
        xi: Vec<f64>,
        lambda: f64,
    }
    let mut nodes: Vec<Node> = Vec::new();
    let j_x_total: usize = init.j_x.iter().product();
    let j_xi_total: usize = init.j_xi.iter().product();
    for ix in 0..j_x_total {
        let mut rem = ix;
        let mut xc = vec![0.0; d];
        for a in (0..d).rev() {
            xc[a] = x_centers[a][rem % init.j_x[a]];
            rem /= init.j_x[a];
        }
        for ixi in 0..j_xi_total {
            let mut rem = ixi;
            let mut xic = vec![0.0; d];
            for a in (0..d).rev() {
                xic[a] = xi_centers[a][rem % init.j_xi[a]];
                rem /= init.j_xi[a];
            }
            let lambda = profile.eval_periodic(&xc, &xic, &lengths) * cell;
            nodes.push(Node { x: xc.clone(), xi: xic, lambda });
        }
    }

    let max_lambda = nodes.iter().map(|n| n.lambda).fold(0.0, f64::max);
    if max_lambda <= 0.0 {
        return Err(Error::Config("initial profile vanishes on the whole lattice".into()));
    }
    nodes.retain(|n| n.lambda > 1e-10 * max_lambda);

    // Coverage: mass of f₀ farther than (2√ε + h/2) from every kept center,
    // measured on a probe lattice over the support box.
    let uncovered = uncovered_fraction(profile, &nodes.iter().map(|n| (&n.x, &n.xi)).collect::<Vec<_>>(), eps, &x_lo, &x_hi, &xi_lo, &xi_hi, &lengths, cell);
    if uncovered > 0.05 {
        return Err(Error::Numerical(format!(
            "coherent lattice leaves {:.1}% of the profile mass uncovered; increase J",
            uncovered * 100.0
        )));
    }

    // Gaussian coherent states of width √ε, periodically wrapped.
    let raw: Vec<ComplexField> = nodes
        .par_iter()
        .map(|node| {
            let mut orb = ComplexField::from_fn(grid.clone(), |x| {
                let mut envelope = 1.0;
                let mut phase = 0.0;
                for a in 0..d {
                    let l = lengths[a];
                    let mut env_a = 0.0;
                    for m in -2i32..=2 {
                        let dx = x[a] + m as f64 * l - node.x[a];
                        env_a += (-dx * dx / (2.0 * eps)).exp();
                    }
                    envelope *= env_a;
                    phase += node.xi[a] * x[a] / eps;
                }
                Complex64::cis(phase) * envelope
            });
            let norm = orb.l2_norm();
            for v in orb.data_mut() {
                *v /= norm;
            }
            orb
        })
        .collect();

    // Löwdin symmetric orthonormalization through the Gram eigensystem.
    let j = raw.len();
    let mut gmat = DMatrix::<Complex<f64>>::zeros(j, j);
    for r in 0..j {
        for c in r..j {
            let v = raw[r].inner(&raw[c]);
            gmat[(r, c)] = Complex::new(v.re, v.im);
            gmat[(c, r)] = Complex::new(v.re, -v.im);
        }
    }
    let eig = gmat.symmetric_eigen();
    let min_eig = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if min_eig < 1e-8 {
        return Err(Error::Numerical(format!(
            "coherent family is numerically dependent (Gram min eigenvalue {min_eig:.3e}); \
             coarsen the lattice"
        )));
    }
    // S = U diag(1/√μ) U^*
    let u = &eig.eigenvectors;
    let mut s = DMatrix::<Complex<f64>>::zeros(j, j);
    for r in 0..j {
        for c in 0..j {
            let mut acc = Complex::new(0.0, 0.0);
            for m in 0..j {
                acc += u[(r, m)] * u[(c, m)].conj() / Complex::new(eig.eigenvalues[m].sqrt(), 0.0);
            }
            s[(r, c)] = acc;
        }
    }

    let npts = grid.len();
    let orbitals: Vec<ComplexField> = (0..j)
        .into_par_iter()
        .map(|i| {
            let mut data = vec![Complex64::new(0.0, 0.0); npts];
            for (jj, base) in raw.iter().enumerate() {
                let w = s[(jj, i)];
                let w = Complex64::new(w.re, w.im);
                if w.norm_sqr() < 1e-30 {
                    continue;
                }
                for (o, b) in data.iter_mut().zip(base.data()) {
                    *o += w * b;
                }
            }
            ComplexField::from_data(grid.clone(), Repr::Physical, data).expect("orbital length")
        })
        .collect();

    // Normalize weights to the analytic profile mass.
    let raw_sum: f64 = nodes.iter().map(|n| n.lambda).sum();
    let scale = mass / raw_sum;
    let weights: Vec<f64> = nodes.iter().map(|n| n.lambda * scale).collect();

    let state = MixedState::new(grid, eps, weights, orbitals)?;
    let sum_lambda = state.trace();
    let sum_lambda_sq = state.trace_sq();
    let report = CoherentInitReport {
        orbital_count: j,
        sum_lambda,
        sum_lambda_sq,
        scaled_hilbert_schmidt: sum_lambda_sq / eps.powi(d as i32),
        uncovered_mass_fraction: uncovered,
        gram_min_eigenvalue: min_eig,
        post_orthonormal_deviation: state.gram_deviation(),
    };
    Ok((state, report))
}

#[allow(clippy::too_many_arguments)]
fn uncovered_fraction(
    profile: &PhaseProfile,
    centers: &[(&Vec<f64>, &Vec<f64>)],
    eps: f64,
    x_lo: &[f64],
    x_hi: &[f64],
    xi_lo: &[f64],
    xi_hi: &[f64],
    lengths: &[f64],
    cell: f64,
) -> f64 {
    let d = x_lo.len();
    let probes_per_axis = 12usize;
    let reach = 2.0 * eps.sqrt() + 0.5 * cell.powf(1.0 / (2.0 * d as f64));
    let mut covered_mass = 0.0;
    let mut total_mass = 0.0;
    let total_probes = probes_per_axis.pow(2 * d as u32);
    let mut x = vec![0.0; d];
    let mut xi = vec![0.0; d];
    for p in 0..total_probes {
        let mut rem = p;
        for a in 0..d {
            let i = rem % probes_per_axis;
            rem /= probes_per_axis;
            x[a] = x_lo[a] + (i as f64 + 0.5) * (x_hi[a] - x_lo[a]) / probes_per_axis as f64;
        }
        for a in 0..d {
            let i = rem % probes_per_axis;
            rem /= probes_per_axis;
            xi[a] = xi_lo[a] + (i as f64 + 0.5) * (xi_hi[a] - xi_lo[a]) / probes_per_axis as f64;
        }
        let f = profile.eval_periodic(&x, &xi, lengths);
        total_mass += f;
        let near = centers.iter().any(|(cx, cxi)| {
            let mut d2 = 0.0;
            for a in 0..d {
                d2 += (x[a] - cx[a]).powi(2) + (xi[a] - cxi[a]).powi(2);
            }
            d2.sqrt() <= reach
        });
        if near {
            covered_mass += f;
        }
    }
    if total_mass == 0.0 {
        1.0
    } else {
        1.0 - covered_mass / total_mass
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::PhaseGaussian;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn grid1(n: usize, l: f64) -> Arc<SpectralGrid> {
        SpectralGrid::new(&[(n, l)]).unwrap()
    }

    fn random_state(grid: &Arc<SpectralGrid>, eps: f64, j: usize, seed: u64) -> MixedState {
        // Random band-limited orbitals, Löwdin-orthonormalized by hand via
        // Gram-Schmidt (adequate for tests).
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = grid.len();
        let mut orbs: Vec<ComplexField> = Vec::new();
        for _ in 0..j {
            let mut hat = ComplexField::zeros(grid.clone(), Repr::Fourier);
            let kmax = n / 4;
            for (i, v) in hat.data_mut().iter_mut().enumerate() {
                let mode = grid.axis(0).mode(i).unsigned_abs() as usize;
                if mode <= kmax {
                    *v = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                }
            }
            let mut orb = hat.inverse().unwrap();
            for prev in &orbs {
                let ov = prev.inner(&orb);
                let pdata = prev.data().to_vec();
                for (o, p) in orb.data_mut().iter_mut().zip(pdata) {
                    *o -= ov * p;
                }
            }
            let norm = orb.l2_norm();
            for v in orb.data_mut() {
                *v /= norm;
            }
            orbs.push(orb);
        }
        let weights: Vec<f64> = (0..j).map(|_| rng.gen_range(0.1..1.0)).collect();
        MixedState::new(grid.clone(), eps, weights, orbs).unwrap()
    }

    #[test]
    fn density_of_constant_orbital() {
        let l = 2.0 * PI;
        let g = grid1(16, l);
        let orb = ComplexField::from_fn(g.clone(), |_| Complex64::new(1.0 / l.sqrt(), 0.0));
        let st = MixedState::new(g, 0.5, vec![2.0], vec![orb]).unwrap();
        let n = st.density();
        for v in n.data() {
            assert_abs_diff_eq!(*v, 2.0 / l, epsilon = 1e-14);
        }
    }

    #[test]
    fn density_integrates_to_trace() {
        let g = grid1(64, 2.0 * PI);
        let st = random_state(&g, 0.25, 4, 7);
        let n = st.density();
        assert!((n.integral() - st.trace()).abs() <= 1e-10);
        assert!(n.min() >= 0.0);
    }

    #[test]
    fn two_orthonormal_orbitals_mass_two() {
        let l = 2.0 * PI;
        let g = grid1(32, l);
        let a = ComplexField::from_fn(g.clone(), |_| Complex64::new(1.0 / l.sqrt(), 0.0));
        let b = ComplexField::from_fn(g.clone(), |x| {
            Complex64::cis(x[0]) * (1.0 / l.sqrt())
        });
        let st = MixedState::new(g, 0.5, vec![1.0, 1.0], vec![a, b]).unwrap();
        assert!((st.density().integral() - 2.0).abs() < 1e-12);
        assert!(st.gram_deviation() < 1e-12);
    }

    #[test]
    fn kinetic_step_zero_is_identity() {
        let g = grid1(32, 2.0 * PI);
        let mut st = random_state(&g, 0.25, 2, 3);
        let before = st.orbitals()[0].data().to_vec();
        st.kinetic_step(0.0).unwrap();
        assert_eq!(before, st.orbitals()[0].data());
    }

    #[test]
    fn kinetic_step_plane_wave_phase() {
        // ε = 0.5, k = 2, τ = 0.1: phase factor exp(−i·0.2·√2).
        let l = 2.0 * PI;
        let g = grid1(32, l);
        let eps = 0.5;
        let orb = ComplexField::from_fn(g.clone(), |x| Complex64::cis(2.0 * x[0]) / l.sqrt());
        let mut st = MixedState::new(g, eps, vec![1.0], vec![orb.clone()]).unwrap();
        st.kinetic_step(0.1).unwrap();
        let expect = Complex64::cis(-0.2 * 2.0f64.sqrt());
        for (a, b) in orb.data().iter().zip(st.orbitals()[0].data()) {
            assert!((b - a * expect).norm() < 1e-13);
            assert_abs_diff_eq!(a.norm(), b.norm(), epsilon = 1e-13);
        }
    }

    #[test]
    fn kinetic_step_preserves_norms() {
        let g = grid1(64, 3.0);
        let mut st = random_state(&g, 0.25, 3, 11);
        let norms: Vec<f64> = st.orbitals().iter().map(|o| o.l2_norm()).collect();
        for _ in 0..10 {
            st.kinetic_step(0.01).unwrap();
        }
        for (o, n0) in st.orbitals().iter().zip(norms) {
            assert!((o.l2_norm() - n0).abs() <= 1e-12);
        }
    }

    #[test]
    fn potential_step_leaves_density() {
        let g = grid1(32, 2.0 * PI);
        let mut st = random_state(&g, 0.25, 3, 5);
        let v = RealField::from_fn(g.clone(), |x| (x[0]).sin() + 0.3 * (2.0 * x[0]).cos());
        let before = st.density();
        st.potential_step(&v, 0.2).unwrap();
        let after = st.density();
        for (a, b) in before.data().iter().zip(after.data()) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-14);
        }
    }

    #[test]
    fn constant_potential_is_global_phase() {
        let g = grid1(16, 2.0 * PI);
        let mut st = random_state(&g, 0.5, 2, 9);
        let reference = st.clone();
        let v = RealField::from_fn(g.clone(), |_| 1.3);
        st.potential_step(&v, 0.4).unwrap();
        let phase = Complex64::cis(-(0.4 / 0.5) * 1.3);
        for (orb, orb0) in st.orbitals().iter().zip(reference.orbitals()) {
            for (a, b) in orb.data().iter().zip(orb0.data()) {
                assert!((a - b * phase).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn gauge_covariance_of_strang_flow() {
        // Shifting V by a constant changes orbitals by a global phase only;
        // densities agree to roundoff.
        let g = grid1(32, 2.0 * PI);
        let mut s1 = random_state(&g, 0.25, 2, 13);
        let mut s2 = s1.clone();
        let v = RealField::from_fn(g.clone(), |x| x[0].cos());
        let vc = RealField::from_fn(g.clone(), |x| x[0].cos() + 0.7);
        for _ in 0..5 {
            s1.kinetic_step(0.01).unwrap();
            s1.potential_step(&v, 0.02).unwrap();
            s1.kinetic_step(0.01).unwrap();
            s2.kinetic_step(0.01).unwrap();
            s2.potential_step(&vc, 0.02).unwrap();
            s2.kinetic_step(0.01).unwrap();
        }
        let n1 = s1.density();
        let n2 = s2.density();
        for (a, b) in n1.data().iter().zip(n2.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn strang_zero_state_unchanged() {
        let g = grid1(16, 2.0 * PI);
        let orb = ComplexField::zeros(g.clone(), Repr::Physical);
        let mut st = MixedState::new(g, 0.25, vec![0.0], vec![orb]).unwrap();
        let params = HartreeParams { dt: 1.0 / 64.0, ..Default::default() };
        strang_step(&mut st, &params).unwrap();
        assert!(st.orbitals()[0].data().iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn strang_with_free_kernel_is_pure_kinetic() {
        let g = grid1(32, 2.0 * PI);
        let mut st = random_state(&g, 0.25, 2, 17);
        let mut reference = st.clone();
        let params = HartreeParams {
            kernel: Kernel::Free,
            dt: 1.0 / 64.0,
            ..Default::default()
        };
        strang_step(&mut st, &params).unwrap();
        reference.kinetic_step(1.0 / 64.0).unwrap();
        for (orb, orb0) in st.orbitals().iter().zip(reference.orbitals()) {
            for (a, b) in orb.data().iter().zip(orb0.data()) {
                assert!((a - b).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn params_validation() {
        let p = HartreeParams { dt: 0.2, t_final: 1.0, ..Default::default() };
        // dt > c_eps_cap * eps for eps = 0.25.
        assert!(p.validate(0.25).is_err());
        let ok = HartreeParams { dt: 0.25 / 16.0, t_final: 1.0, ..Default::default() };
        assert!(ok.validate(0.25).is_ok());
    }

    #[test]
    fn init_zero_profile_errors() {
        let g = grid1(64, 2.0 * PI);
        let profile = PhaseProfile {
            gaussians: vec![PhaseGaussian {
                center_x: vec![PI],
                center_xi: vec![0.0],
                sigma_x: vec![0.3],
                sigma_xi: vec![0.3],
                weight: 0.0,
            }],
        };
        let init = CoherentInit { j_x: vec![2], j_xi: vec![2], support_sigmas: 4.0 };
        assert!(init_coherent_mixture(&profile, 0.25, g, &init).is_err());
    }

    #[test]
    fn init_single_narrow_bump_single_orbital() {
        let g = grid1(128, 2.0 * PI);
        let eps = 0.25;
        // Bump comparable to the coherent width √ε, so one state covers it.
        let profile = PhaseProfile {
            gaussians: vec![PhaseGaussian {
                center_x: vec![PI],
                center_xi: vec![0.0],
                sigma_x: vec![0.35],
                sigma_xi: vec![0.35],
                weight: 1.0,
            }],
        };
        let init = CoherentInit { j_x: vec![1], j_xi: vec![1], support_sigmas: 4.0 };
        let (st, report) = init_coherent_mixture(&profile, eps, g, &init).unwrap();
        assert_eq!(report.orbital_count, 1);
        assert!((st.trace() - profile.mass()).abs() < 1e-12);
        assert!(report.post_orthonormal_deviation < 1e-10);
    }

    #[test]
    fn init_orthonormal_and_mass_normalized() {
        // 8×8 lattice over a ±4σ box: spacing 1.3 ≥ √(2πε) keeps the
        // coherent family independent.
        let g = grid1(256, 4.0 * PI);
        let eps = 0.25;
        let sigma = 1.3;
        let profile = PhaseProfile {
            gaussians: vec![PhaseGaussian {
                center_x: vec![2.0 * PI],
                center_xi: vec![0.0],
                sigma_x: vec![sigma],
                sigma_xi: vec![sigma],
                weight: 1.0 / (2.0 * PI * sigma * sigma), // unit mass
            }],
        };
        let init = CoherentInit { j_x: vec![8], j_xi: vec![8], support_sigmas: 4.0 };
        let (st, report) = init_coherent_mixture(&profile, eps, g, &init).unwrap();
        assert!(report.orbital_count > 30);
        assert!((st.trace() - profile.mass()).abs() < 1e-10);
        assert!(report.post_orthonormal_deviation < 1e-8, "gram dev {}", report.post_orthonormal_deviation);
        // Fully mixed scaling: ε^{-1} Σλ² stays O(1).
        assert!(report.scaled_hilbert_schmidt > 0.01 && report.scaled_hilbert_schmidt < 10.0);
    }
}
