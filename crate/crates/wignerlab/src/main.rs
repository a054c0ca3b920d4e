use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use wignerlab::harness::{
    check_checkpoint, epsilon_sweep, render_report, run_hartree, run_vlasov, single_run_dir,
    write_diagnostics_csv, write_vlasov_series_csv, RunConfig,
};
use wignerlab::io;
use wignerlab::Error;

#[derive(Parser)]
#[command(name = "wignerlab", version, about = "Semi-relativistic Hartree / Vlasov-Poisson phase-space laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve the quantum system for one ε and write snapshots, diagnostics
    /// and a checkpoint.
    Hartree {
        #[arg(long)]
        config: PathBuf,
        /// ε to run (default: the first entry of the config list).
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Continue an attractive run whose smallness margin fails.
        #[arg(long, default_value_t = false)]
        override_assumption_b: bool,
    },
    /// Evolve the classical reference and write its snapshots and series.
    Vlasov {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Full ε sweep: quantum runs, classical reference, pairing tables,
    /// distances and the report.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = false)]
        override_assumption_b: bool,
    },
    /// Print the diagnostics record of a stored checkpoint.
    Check {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Optional config supplying the inequality constants.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Re-render a stored report.json into CSV tables.
    Report {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(path: &PathBuf, seed: Option<u64>) -> Result<RunConfig, Error> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Hartree { config, eps, out, seed, override_assumption_b } => {
            let cfg = load_config(&config, seed)?;
            let eps = eps.unwrap_or(cfg.epsilons[0]);
            let dir = single_run_dir(&cfg, out.as_deref());
            std::fs::create_dir_all(&dir)?;
            let traj = run_hartree(&cfg, eps, override_assumption_b, Some(&dir))?;
            write_diagnostics_csv(&dir.join("diagnostics.csv"), &traj.diagnostics)?;
            println!(
                "hartree eps={eps}: {} orbitals, {} snapshots, wall {:.2}s -> {}",
                traj.init.orbital_count,
                traj.snapshots.len(),
                traj.wall_seconds,
                dir.display()
            );
            Ok(())
        }
        Command::Vlasov { config, out, seed } => {
            let cfg = load_config(&config, seed)?;
            let dir = single_run_dir(&cfg, out.as_deref());
            std::fs::create_dir_all(&dir)?;
            let traj = run_vlasov(&cfg, false)?;
            for (t, f) in &traj.snapshots {
                io::write_wigner(&dir.join(format!("vlasov_t{t:.6}")), f)?;
            }
            write_vlasov_series_csv(&dir.join("vlasov_series.csv"), &traj.series)?;
            println!(
                "vlasov: {} snapshots, final mass {:.6e} -> {}",
                traj.snapshots.len(),
                traj.series.last().map(|r| r.mass).unwrap_or(0.0),
                dir.display()
            );
            Ok(())
        }
        Command::Sweep { config, out, seed, override_assumption_b } => {
            let cfg = load_config(&config, seed)?;
            let dir = single_run_dir(&cfg, out.as_deref());
            let report = epsilon_sweep(&cfg, override_assumption_b, &dir)?;
            for (eps, d) in report
                .hartree
                .iter()
                .map(|h| h.eps)
                .zip(&report.max_distance_per_eps)
            {
                println!("eps {:>8.5}: max_t D = {}", eps, io::fmt_f64(*d));
            }
            println!(
                "strictly decreasing: {}; reference error {}",
                report.strictly_decreasing,
                report
                    .vlasov_reference_error
                    .map(io::fmt_f64)
                    .unwrap_or_else(|| "n/a".into())
            );
            if report.failed {
                for f in &report.failures {
                    eprintln!("FAILED: {f}");
                }
                return Err(Error::Numerical("sweep contains failed runs".into()));
            }
            println!("report -> {}", dir.join("report.json").display());
            Ok(())
        }
        Command::Check { checkpoint, config } => {
            let constants = match config {
                Some(path) => RunConfig::load(&path)?.constants,
                None => None,
            };
            let rec = check_checkpoint(&checkpoint, constants.as_ref())?;
            println!("t          = {}", io::fmt_f64(rec.t));
            println!("tr_rho     = {}", io::fmt_f64(rec.tr_rho));
            println!("tr_rho_sq  = {}", io::fmt_f64(rec.tr_rho_sq));
            println!("e_kin      = {}", io::fmt_f64(rec.e_kin));
            println!("e_pot      = {}", io::fmt_f64(rec.e_pot));
            println!("e_total    = {}", io::fmt_f64(rec.e_total));
            println!("f_l2       = {}", io::fmt_f64(rec.f_l2));
            println!("grad_v_l2  = {}", io::fmt_f64(rec.grad_v_l2));
            println!("n_l1       = {}", io::fmt_f64(rec.n_l1));
            println!("n_l54      = {}", io::fmt_f64(rec.n_l54));
            println!("n_l65      = {}", io::fmt_f64(rec.n_l65));
            println!("holder_ok  = {}", rec.holder_ok);
            if let Some(m) = rec.margin {
                println!("margin     = {}", io::fmt_f64(m));
            }
            Ok(())
        }
        Command::Report { report, out } => render_report(&report, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
