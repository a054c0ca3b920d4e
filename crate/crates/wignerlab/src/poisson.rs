//! Spectral solvers for the periodic Poisson problem `−κΔV = n − n̄` and its
//! Yukawa variant `(−κΔ + κλ²)V = n`, plus the spectral gradient.
//!
//! On a torus the `k = 0` mode of the Laplacian is not invertible, so the
//! Coulomb solve subtracts the mean density (a uniform neutralizing
//! background) and gauges the potential to zero mean. The Yukawa kernel is
//! invertible at `k = 0` and keeps the full density.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::RealField;

/// Sign of the mean-field coupling: `+1` repulsive, `−1` attractive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "i8", into = "i8")]
pub enum Kappa {
    Repulsive,
    Attractive,
}

impl Kappa {
    pub fn sign(self) -> f64 {
        match self {
            Kappa::Repulsive => 1.0,
            Kappa::Attractive => -1.0,
        }
    }
}

impl TryFrom<i8> for Kappa {
    type Error = String;
    fn try_from(v: i8) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(Kappa::Repulsive),
            -1 => Ok(Kappa::Attractive),
            other => Err(format!("kappa must be +1 or -1, got {other}")),
        }
    }
}

impl From<Kappa> for i8 {
    fn from(k: Kappa) -> i8 {
        match k {
            Kappa::Repulsive => 1,
            Kappa::Attractive => -1,
        }
    }
}

/// Interaction kernel for the self-consistent field. `Free` disables the
/// coupling entirely (diagnostic mode: pure kinetic flow).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum Kernel {
    Coulomb,
    Yukawa { lambda: f64 },
    Free,
}

/// A density together with the potential it sources.
#[derive(Debug, Clone)]
pub struct FieldPair {
    pub density: RealField,
    pub potential: RealField,
    pub kappa: Kappa,
    pub kernel: Kernel,
}

impl FieldPair {
    pub fn solve(density: RealField, kappa: Kappa, kernel: Kernel) -> Result<FieldPair> {
        let potential = solve_field(&density, kappa, kernel)?;
        Ok(FieldPair { density, potential, kappa, kernel })
    }
}

/// Solve `−κΔV = n − n̄` with `V̂(0) = 0` (zero-mean gauge).
pub fn solve_poisson(n: &RealField, kappa: Kappa) -> Result<RealField> {
    let sign = kappa.sign();
    let v = n.to_complex().apply_symbol(|xi| {
        let k2: f64 = xi.iter().map(|k| k * k).sum();
        if k2 == 0.0 {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new(sign / k2, 0.0)
        }
    })?;
    let v = RealField::from_complex(&v)?;
    #[cfg(debug_assertions)]
    check_poisson_residual(n, &v, kappa);
    Ok(v)
}

/// Solve `κ(−Δ + λ²)V = n`, including the `k = 0` mode. As `λ → 0` with a
/// zero-mean density this converges to [`solve_poisson`].
pub fn solve_yukawa(n: &RealField, kappa: Kappa, lambda: f64) -> Result<RealField> {
    if !(lambda > 0.0) {
        return Err(Error::Config(format!("yukawa screening length must be positive, got {lambda}")));
    }
    let sign = kappa.sign();
    let v = n.to_complex().apply_symbol(|xi| {
        let k2: f64 = xi.iter().map(|k| k * k).sum();
        Complex64::new(sign / (k2 + lambda * lambda), 0.0)
    })?;
    RealField::from_complex(&v)
}

/// Dispatch on the kernel choice; `Free` returns the zero potential.
pub fn solve_field(n: &RealField, kappa: Kappa, kernel: Kernel) -> Result<RealField> {
    match kernel {
        Kernel::Coulomb => solve_poisson(n, kappa),
        Kernel::Yukawa { lambda } => solve_yukawa(n, kappa, lambda),
        Kernel::Free => Ok(RealField::zeros(n.grid().clone())),
    }
}

/// Spectral gradient, one field per axis. The Nyquist mode is zeroed (odd
/// symbol), so results stay real and have exact zero mean.
pub fn grad_potential(v: &RealField) -> Result<Vec<RealField>> {
    let d = v.grid().dim();
    let hat = v.to_complex().forward()?;
    let mut out = Vec::with_capacity(d);
    for a in 0..d {
        let mut comp = hat.clone();
        let grid = v.grid().clone();
        let nyq = grid.axis(a).nyquist_index();
        let mut idx = vec![0usize; d];
        for (i, val) in comp.data_mut().iter_mut().enumerate() {
            grid.unflatten(i, &mut idx);
            if idx[a] == nyq {
                *val = Complex64::new(0.0, 0.0);
            } else {
                let k = grid.axis(a).wavenumber(idx[a]);
                *val *= Complex64::new(0.0, k);
            }
        }
        out.push(RealField::from_complex(&comp.inverse()?)?);
    }
    Ok(out)
}

#[cfg(debug_assertions)]
fn check_poisson_residual(n: &RealField, v: &RealField, kappa: Kappa) {
    // ‖−κΔV − (n − n̄)‖_∞ ≤ 1e−9 ‖n‖_∞
    let lap = v
        .to_complex()
        .apply_symbol(|xi| {
            let k2: f64 = xi.iter().map(|k| k * k).sum();
            Complex64::new(-k2, 0.0)
        })
        .expect("laplacian multiplier");
    let nbar = n.mean();
    let sign = kappa.sign();
    let mut worst = 0.0f64;
    for (lv, nv) in lap.data().iter().zip(n.data()) {
        let r = (-sign * lv.re - (nv - nbar)).abs();
        worst = worst.max(r);
    }
    let scale = n.max_abs().max(f64::MIN_POSITIVE);
    debug_assert!(
        worst <= 1e-9 * scale,
        "poisson residual {worst:.3e} exceeds 1e-9 * {scale:.3e}"
    );
}
