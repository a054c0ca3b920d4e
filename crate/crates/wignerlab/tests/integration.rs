//! Cross-module behavior: free-flow oracles, determinism, restart
//! stability, report completeness, and the CLI contract.

mod common;

use std::f64::consts::PI;
use std::process::Command;

use common::{grid1, random_localized_state};
use wignerlab::harness::{
    epsilon_sweep, run_hartree, CoherentInitConfig, DomainConfig, RunConfig, TimeConfig,
    WignerConfig,
};
use wignerlab::hartree::{
    init_coherent_mixture, strang_step, CoherentInit, HartreeParams, MixedState,
};
use wignerlab::io::{load_checkpoint, save_checkpoint};
use wignerlab::poisson::{Kappa, Kernel};
use wignerlab::profile::{PhaseGaussian, PhaseProfile};
use wignerlab::spectral::RealField;
use wignerlab::vlasov::VlasovState;
use wignerlab::wigner::{
    evolution_residual, weak_pairing, wigner_transform, TestFunction, WignerGrid, WignerSpec,
    XiAxis,
};

fn small_profile(l: f64) -> PhaseProfile {
    PhaseProfile {
        gaussians: vec![PhaseGaussian {
            center_x: vec![0.5 * l],
            center_xi: vec![0.0],
            sigma_x: vec![0.9],
            sigma_xi: vec![0.7],
            weight: 0.2,
        }],
    }
}

fn small_config(out: &str) -> RunConfig {
    RunConfig {
        d: 1,
        domain: DomainConfig { length: vec![8.0 * PI], n_x: vec![128] },
        wigner: WignerConfig { n_xi: vec![768], xi_max: vec![6.0], boundary_tol: 1e-6 },
        kappa: Kappa::Repulsive,
        kernel: Kernel::Coulomb,
        epsilons: vec![0.5, 0.25, 0.125],
        initial_profile: small_profile(8.0 * PI),
        time: TimeConfig {
            t_final: 0.25,
            hartree_dt_over_eps: 1.0 / 16.0,
            vlasov_dt: 1.0 / 64.0,
            sample_times: vec![0.0, 0.25],
        },
        coherent_init: CoherentInitConfig::default(),
        test_functions: None,
        constants: None,
        output_dir: out.into(),
        seed: 3,
    }
}

#[test]
fn free_flow_pairings_match_exact_propagator() {
    // With the coupling disabled the Strang scheme composes to the exact
    // free propagator: a single kinetic step over the whole horizon is the
    // Fourier-space oracle.
    let cfg = {
        let mut c = small_config("unused");
        c.kernel = Kernel::Free;
        c
    };
    let eps = 0.25;
    let grid = cfg.grid().unwrap();
    let init = CoherentInit::auto(&cfg.initial_profile, 1, eps, 1.1);
    let (state0, _) = init_coherent_mixture(&cfg.initial_profile, eps, grid, &init).unwrap();

    let params = HartreeParams {
        kappa: cfg.kappa,
        kernel: Kernel::Free,
        dt: eps / 16.0,
        t_final: 0.25,
        c_eps_cap: 1.0 / 8.0,
    };
    let mut stepped = state0.clone();
    let steps = (0.25 / params.dt).round() as usize;
    for _ in 0..steps {
        strang_step(&mut stepped, &params).unwrap();
    }
    let mut oracle = state0.clone();
    oracle.kinetic_step(0.25).unwrap();

    let spec = cfg.wigner_spec();
    let (f_run, _) = wigner_transform(&stepped, &spec).unwrap();
    let (f_oracle, _) = wigner_transform(&oracle, &spec).unwrap();
    let phis = cfg.test_functions();
    let scale: f64 = phis
        .iter()
        .map(|p| weak_pairing(&f_oracle, p).unwrap().abs())
        .fold(0.0, f64::max);
    for phi in &phis {
        let a = weak_pairing(&f_run, phi).unwrap();
        let b = weak_pairing(&f_oracle, phi).unwrap();
        assert!((a - b).abs() <= 1e-4 * scale.max(1e-12), "pairing gap {}", (a - b).abs());
    }
}

#[test]
fn free_flow_residual_small() {
    // Plane-wave mixture: the Wigner function is x-independent and
    // stationary under free flow, so the residual is pure roundoff.
    let l = 2.0 * PI;
    let grid = grid1(64, l);
    let eps = 0.25;
    let orbs: Vec<_> = [1i32, -2, 3]
        .iter()
        .map(|&k| {
            wignerlab::spectral::ComplexField::from_fn(grid.clone(), |x| {
                num_complex::Complex64::cis(k as f64 * x[0]) / l.sqrt()
            })
        })
        .collect();
    let st = MixedState::new(grid.clone(), eps, vec![0.5, 0.3, 0.2], orbs).unwrap();
    // plane waves are fully delocalized, so the |mass|-based boundary
    // metric is inflated by window-edge tails; the in-window content is a
    // stationary comb and the residual is what the test asserts
    let mut spec = WignerSpec::new(vec![XiAxis { n: 512, xi_max: 4.0 }]);
    spec.boundary_tol = 0.02;
    let (f0, _) = wigner_transform(&st, &spec).unwrap();
    let mut later = st.clone();
    let dt = eps / 32.0;
    later.kinetic_step(dt).unwrap();
    let (f1, _) = wigner_transform(&later, &spec).unwrap();
    later.kinetic_step(dt).unwrap();
    let (f2, _) = wigner_transform(&later, &spec).unwrap();
    let v = RealField::zeros(grid);
    let phi = TestFunction {
        center_x: vec![0.5 * l],
        center_xi: vec![0.3],
        sigma_x: vec![0.8],
        sigma_xi: vec![0.45],
    };
    let r = evolution_residual(&f0, &f1, &f2, &v, dt, std::slice::from_ref(&phi)).unwrap();
    assert!(r <= 1e-10, "stationary residual {r}");

    // Localized free flow: the residual is limited by the O(Δt²) central
    // difference against the exact Fourier flow.
    let st = random_localized_state(&grid1(128, 2.0 * PI), eps, 3, 5, 99);
    let spec = WignerSpec::new(vec![XiAxis { n: 512, xi_max: 16.0 }]);
    // only the O(Δt²) central difference separates the snapshots from the
    // exact Fourier flow
    let dt = eps / 256.0;
    let (f0, _) = wigner_transform(&st, &spec).unwrap();
    let mut later = st.clone();
    later.kinetic_step(dt).unwrap();
    let (f1, _) = wigner_transform(&later, &spec).unwrap();
    later.kinetic_step(dt).unwrap();
    let (f2, _) = wigner_transform(&later, &spec).unwrap();
    let v = RealField::zeros(st.grid().clone());
    let phi = TestFunction {
        center_x: vec![PI],
        center_xi: vec![0.5],
        sigma_x: vec![0.4],
        sigma_xi: vec![1.2],
    };
    let r = evolution_residual(&f0, &f1, &f2, &v, dt, std::slice::from_ref(&phi)).unwrap();
    assert!(r <= 1e-6, "free-flow residual {r}");
}

#[test]
fn quantum_init_pairs_with_profile() {
    // The coherent construction reproduces the profile's pairings up to
    // the ε-scale smoothing; 5% at ε = 0.25 against broad observables
    // (thermal-spread-in-ξ times Gaussian-in-x profile).
    let cfg = small_config("unused");
    let eps = 0.25;
    let grid = cfg.grid().unwrap();
    let profile = PhaseProfile {
        gaussians: vec![PhaseGaussian {
            center_x: vec![4.0 * PI],
            center_xi: vec![0.0],
            sigma_x: vec![1.2],
            sigma_xi: vec![1.0],
            weight: 0.2,
        }],
    };
    let init = CoherentInit::auto(&profile, 1, eps, 1.0);
    let (state, _) = init_coherent_mixture(&profile, eps, grid.clone(), &init).unwrap();
    let spec = WignerSpec::new(vec![XiAxis { n: 896, xi_max: 14.0 }]);
    let (f_eps, _) = wigner_transform(&state, &spec).unwrap();
    let f0 = WignerGrid::from_profile(&profile, grid, spec.xi.clone()).unwrap();

    let x0 = 4.0 * PI;
    let phis: Vec<TestFunction> = [(x0, 0.0), (x0 - 1.0, -0.5), (x0 + 1.0, 0.5)]
        .iter()
        .map(|&(cx, cxi)| TestFunction {
            center_x: vec![cx],
            center_xi: vec![cxi],
            sigma_x: vec![2.5],
            sigma_xi: vec![1.8],
        })
        .collect();
    for phi in &phis {
        let a = weak_pairing(&f_eps, phi).unwrap();
        let b = weak_pairing(&f0, phi).unwrap();
        assert!(
            (a - b).abs() <= 0.05 * b.abs(),
            "init pairing gap {} vs 5% of {}",
            (a - b).abs(),
            b.abs()
        );
    }

    // A classical state initialized from the quantum Wigner field agrees
    // with it exactly at t = 0 (construction-consistency distance).
    let mut f_cl = f_eps.clone();
    f_cl.eps = 0.0;
    let st = VlasovState::new(f_cl, cfg.kappa, cfg.kernel).unwrap();
    for phi in &phis {
        let b = weak_pairing(&f_eps, phi).unwrap();
        let d = b - weak_pairing(&st.f, phi).unwrap();
        assert!(d.abs() <= 5e-2 * b.abs());
    }
}

#[test]
fn sweep_outputs_deterministic_and_complete() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config("unused");
    let out1 = dir.path().join("a");
    let out2 = dir.path().join("b");
    let rep1 = epsilon_sweep(&cfg, false, &out1).unwrap();
    let rep2 = epsilon_sweep(&cfg, false, &out2).unwrap();

    // identical config + seed => byte-identical CSV tables
    for name in ["pairings.csv", "vlasov_series.csv"] {
        let a = std::fs::read(out1.join(name)).unwrap();
        let b = std::fs::read(out2.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between reruns");
    }
    for eps in ["eps_0.500000", "eps_0.250000", "eps_0.125000"] {
        let a = std::fs::read(out1.join(eps).join("diagnostics.csv")).unwrap();
        let b = std::fs::read(out2.join(eps).join("diagnostics.csv")).unwrap();
        assert_eq!(a, b, "{eps}/diagnostics.csv differs between reruns");
    }
    assert_eq!(rep1.config_hash, rep2.config_hash);

    // report completeness: every (ε, t, m) cell present
    let m = rep1.test_functions.len();
    assert_eq!(m, 9);
    assert!(!rep1.failed);
    assert_eq!(rep1.hartree.len(), cfg.epsilons.len());
    for h in &rep1.hartree {
        assert_eq!(h.pairings.len(), cfg.time.sample_times.len());
        for row in &h.pairings {
            assert_eq!(row.len(), m);
        }
    }
    assert_eq!(rep1.vlasov_pairings.len(), cfg.time.sample_times.len());
    assert_eq!(rep1.distances.len(), cfg.epsilons.len());

    // pairing linearity: D from the difference field equals the difference
    // of pairings (same grids), checked through the stored tables.
    for (ei, h) in rep1.hartree.iter().enumerate() {
        for (ti, row) in h.pairings.iter().enumerate() {
            let mut worst = 0.0f64;
            for (pi, v) in row.iter().enumerate() {
                worst = worst.max((v - rep1.vlasov_pairings[ti][pi]).abs());
            }
            assert!((worst - rep1.distances[ei][ti]).abs() <= 1e-12 * worst.max(1.0));
        }
    }
}

#[test]
fn checkpoint_restart_continues_identically() {
    let cfg = small_config("unused");
    let eps = 0.25;
    let grid = cfg.grid().unwrap();
    let init = CoherentInit::auto(&cfg.initial_profile, 1, eps, 1.1);
    let (mut state, _) = init_coherent_mixture(&cfg.initial_profile, eps, grid, &init).unwrap();
    let params = HartreeParams {
        kappa: cfg.kappa,
        kernel: cfg.kernel,
        dt: eps / 16.0,
        t_final: 1.0,
        c_eps_cap: 1.0 / 8.0,
    };
    for _ in 0..4 {
        strang_step(&mut state, &params).unwrap();
    }
    let dir = tempfile::tempdir().unwrap();
    save_checkpoint(dir.path(), &state, cfg.kappa, cfg.kernel).unwrap();
    let (mut restored, kappa, kernel) = load_checkpoint(dir.path()).unwrap();
    assert_eq!(kappa, cfg.kappa);
    assert_eq!(kernel, cfg.kernel);
    assert_eq!(restored.time, state.time);

    // continue both for a few steps; transform roundoff is the only gap
    for _ in 0..4 {
        strang_step(&mut state, &params).unwrap();
        strang_step(&mut restored, &params).unwrap();
    }
    let mut worst = 0.0f64;
    for (a, b) in state.orbitals().iter().zip(restored.orbitals()) {
        for (x, y) in a.data().iter().zip(b.data()) {
            worst = worst.max((x - y).norm());
        }
    }
    assert!(worst <= 1e-12, "restart divergence {worst}");
}

#[test]
fn attractive_without_margin_refuses() {
    let mut cfg = small_config("unused");
    cfg.kappa = Kappa::Attractive;
    // constants chosen so the margin is hugely negative
    cfg.constants = Some(wignerlab::diagnostics::InequalityConstants {
        c_s: wignerlab::diagnostics::ConstantInput { value: 1e6, provenance: "test".into() },
        c_2: wignerlab::diagnostics::ConstantInput { value: 1e6, provenance: "test".into() },
    });
    match run_hartree(&cfg, 0.25, false, None) {
        Err(wignerlab::Error::Numerical(_)) => {}
        Err(other) => panic!("expected a numerical failure, got {other}"),
        Ok(_) => panic!("margin gate did not trip"),
    }
    // the override lets it start
    assert!(run_hartree(&cfg, 0.25, true, None).is_ok());
}

#[test]
fn cli_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_wignerlab");

    // missing config -> exit 2
    let out = Command::new(bin)
        .args(["sweep", "--config", "definitely_missing.json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    // config with unknown keys -> exit 2
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"bogus": 1}"#).unwrap();
    let out = Command::new(bin)
        .args(["sweep", "--config", bad.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    // a fresh checkpoint passes `check` with exit 0
    let cfg = small_config("unused");
    let grid = cfg.grid().unwrap();
    let init = CoherentInit::auto(&cfg.initial_profile, 1, 0.25, 1.1);
    let (state, _) = init_coherent_mixture(&cfg.initial_profile, 0.25, grid, &init).unwrap();
    let ckpt = dir.path().join("ckpt");
    save_checkpoint(&ckpt, &state, cfg.kappa, cfg.kernel).unwrap();
    let out = Command::new(bin)
        .args(["check", "--checkpoint", ckpt.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("tr_rho"));
    assert!(text.contains("e_total"));
}

#[test]
fn checked_in_sweep_config_parses() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/sweep.json");
    let cfg = RunConfig::load(std::path::Path::new(path)).unwrap();
    assert_eq!(cfg.epsilons.len(), 4);
    assert_eq!(cfg.d, 1);
}
