//! Phase-space profiles: sums of Gaussians in `(x, ξ)` used as initial data
//! for both the quantum and the classical solver, and as test functions for
//! weak pairings.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One phase-space Gaussian
/// `w · exp(−Σ_a (x_a−cx_a)²/2σx_a² − Σ_a (ξ_a−cξ_a)²/2σξ_a²)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseGaussian {
    pub center_x: Vec<f64>,
    pub center_xi: Vec<f64>,
    pub sigma_x: Vec<f64>,
    pub sigma_xi: Vec<f64>,
    pub weight: f64,
}

impl PhaseGaussian {
    pub fn validate(&self, d: usize) -> Result<()> {
        if self.center_x.len() != d
            || self.center_xi.len() != d
            || self.sigma_x.len() != d
            || self.sigma_xi.len() != d
        {
            return Err(Error::Config(format!("phase gaussian arrays must have dimension {d}")));
        }
        if self.sigma_x.iter().chain(&self.sigma_xi).any(|s| !(*s > 0.0)) {
            return Err(Error::Config("phase gaussian widths must be positive".into()));
        }
        if !self.weight.is_finite() || self.weight < 0.0 {
            return Err(Error::Config("phase gaussian weight must be nonnegative".into()));
        }
        Ok(())
    }

    /// Evaluate with the position axes wrapped to the nearest periodic image
    /// of the domain lengths `lengths` (ξ axes are not wrapped).
    pub fn eval_periodic(&self, x: &[f64], xi: &[f64], lengths: &[f64]) -> f64 {
        let mut arg = 0.0;
        for a in 0..x.len() {
            let mut dx = x[a] - self.center_x[a];
            let l = lengths[a];
            dx -= (dx / l).round() * l;
            arg += dx * dx / (2.0 * self.sigma_x[a] * self.sigma_x[a]);
        }
        for a in 0..xi.len() {
            let dxi = xi[a] - self.center_xi[a];
            arg += dxi * dxi / (2.0 * self.sigma_xi[a] * self.sigma_xi[a]);
        }
        self.weight * (-arg).exp()
    }

    /// Whole-space mass `w Π √(2π)σx_a Π √(2π)σξ_a`.
    pub fn mass(&self) -> f64 {
        let two_pi = 2.0 * std::f64::consts::PI;
        let mut m = self.weight;
        for s in self.sigma_x.iter().chain(&self.sigma_xi) {
            m *= two_pi.sqrt() * s;
        }
        m
    }
}

/// A nonnegative smooth phase-space profile `f₀(x, ξ)` as a sum of Gaussians.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseProfile {
    pub gaussians: Vec<PhaseGaussian>,
}

impl PhaseProfile {
    pub fn validate(&self, d: usize) -> Result<()> {
        if self.gaussians.is_empty() {
            return Err(Error::Config("initial profile needs at least one gaussian".into()));
        }
        for g in &self.gaussians {
            g.validate(d)?;
        }
        Ok(())
    }

    pub fn eval_periodic(&self, x: &[f64], xi: &[f64], lengths: &[f64]) -> f64 {
        self.gaussians.iter().map(|g| g.eval_periodic(x, xi, lengths)).sum()
    }

    pub fn mass(&self) -> f64 {
        self.gaussians.iter().map(PhaseGaussian::mass).sum()
    }

    /// Axis-aligned bounding box `(x_lo, x_hi, ξ_lo, ξ_hi)` covering all
    /// terms out to `k` standard deviations.
    pub fn support_box(&self, d: usize, k: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut x_lo = vec![f64::INFINITY; d];
        let mut x_hi = vec![f64::NEG_INFINITY; d];
        let mut xi_lo = vec![f64::INFINITY; d];
        let mut xi_hi = vec![f64::NEG_INFINITY; d];
        for g in &self.gaussians {
            for a in 0..d {
                x_lo[a] = x_lo[a].min(g.center_x[a] - k * g.sigma_x[a]);
                x_hi[a] = x_hi[a].max(g.center_x[a] + k * g.sigma_x[a]);
                xi_lo[a] = xi_lo[a].min(g.center_xi[a] - k * g.sigma_xi[a]);
                xi_hi[a] = xi_hi[a].max(g.center_xi[a] + k * g.sigma_xi[a]);
            }
        }
        (x_lo, x_hi, xi_lo, xi_hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bump() -> PhaseGaussian {
        PhaseGaussian {
            center_x: vec![1.0],
            center_xi: vec![0.5],
            sigma_x: vec![0.5],
            sigma_xi: vec![0.25],
            weight: 2.0,
        }
    }

    #[test]
    fn mass_closed_form() {
        let g = bump();
        let two_pi = 2.0 * std::f64::consts::PI;
        assert!((g.mass() - 2.0 * two_pi.sqrt() * 0.5 * two_pi.sqrt() * 0.25).abs() < 1e-14);
    }

    #[test]
    fn periodic_wrap_picks_nearest_image() {
        let g = bump();
        let l = [4.0];
        let direct = g.eval_periodic(&[1.1], &[0.5], &l);
        let wrapped = g.eval_periodic(&[1.1 + 4.0], &[0.5], &l);
        assert!((direct - wrapped).abs() < 1e-15);
        assert!(direct > 1.9);
    }

    #[test]
    fn validate_rejects_bad_widths() {
        let mut g = bump();
        g.sigma_x[0] = 0.0;
        assert!(g.validate(1).is_err());
    }
}
