//! Shared constructors for unit tests.

use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::hartree::MixedState;
use crate::spectral::{ComplexField, SpectralGrid};

/// Normalized periodically wrapped Gaussian orbital of width `sigma`.
pub fn gaussian_orbital(grid: &Arc<SpectralGrid>, sigma: f64, center: f64) -> ComplexField {
    let l = grid.axis(0).length;
    let mut orb = ComplexField::from_fn(grid.clone(), |x| {
        let mut v = 0.0;
        for m in -2i32..=2 {
            let dx = x[0] + m as f64 * l - center;
            v += (-dx * dx / (2.0 * sigma * sigma)).exp();
        }
        Complex64::new(v, 0.0)
    });
    let norm = orb.l2_norm();
    for v in orb.data_mut() {
        *v /= norm;
    }
    orb
}

/// Mixed state of `j` random localized orbitals: a Gaussian envelope
/// (width `l/20`, centered) times a random trigonometric polynomial with
/// modes `|k| ≤ k_rand`, Gram-Schmidt orthonormalized.
///
/// The envelope keeps the correlation at arm separation L/2 negligible and
/// the spectral content inside the half-band, the two resolution conditions
/// under which the discrete Wigner transform is exact.
pub fn random_localized_state(
    grid: &Arc<SpectralGrid>,
    eps: f64,
    j: usize,
    k_rand: i64,
    seed: u64,
) -> MixedState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l = grid.axis(0).length;
    let sigma_env = l / 20.0;
    let center = l / 2.0;
    let mut orbs: Vec<ComplexField> = Vec::new();
    for _ in 0..j {
        let coeffs: Vec<(i64, Complex64)> = (-k_rand..=k_rand)
            .map(|k| (k, Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))))
            .collect();
        let mut orb = ComplexField::from_fn(grid.clone(), |x| {
            let mut env = 0.0;
            for m in -2i32..=2 {
                let dx = x[0] + m as f64 * l - center;
                env += (-dx * dx / (2.0 * sigma_env * sigma_env)).exp();
            }
            let mut poly = Complex64::new(0.0, 0.0);
            for (k, c) in &coeffs {
                poly += c * Complex64::cis(*k as f64 * 2.0 * std::f64::consts::PI * x[0] / l);
            }
            poly * env
        });
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
    let weights: Vec<f64> = (0..j).map(|_| rng.gen_range(0.2..1.0)).collect();
    MixedState::new(grid.clone(), eps, weights, orbs).unwrap()
}
