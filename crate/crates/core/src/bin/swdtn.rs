use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use swdtn::compat;
use swdtn::diagnostics::{probe_samples, weak_dissipativity_probe};
use swdtn::geometry::{BoundaryCurve, CurveSpec};
use swdtn::interior::{assemble_dtn, InteriorBathymetry, InteriorChoice};
use swdtn::io;
use swdtn::scenario::{build_scenario, converge, exit_code, run_scenario, ScenarioConfig};
use swdtn::trace::TraceField;
use swdtn::{Error, Result};

#[derive(Parser)]
#[command(name = "swdtn", version, about = "Shallow water around a partially immersed obstacle")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario and write diagnostics, snapshots and a manifest.
    Run {
        config: PathBuf,
        /// Overrides `output_dir` from the configuration.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Print compatibility residuals of the initial data per order.
    CheckCompat {
        config: PathBuf,
        /// Highest order checked.
        #[arg(long, default_value_t = 2)]
        max_order: usize,
    },
    /// Check the DtN assembly against the unit-disk oracle.
    DtnSelftest {
        #[arg(long, default_value_t = 256)]
        n_s: usize,
        /// Also write the assembled spectral operator as a DTN1 file.
        #[arg(long)]
        dump: Option<PathBuf>,
    },
    /// Weak-dissipativity report from snapshots (or from an in-memory run).
    Probe {
        config: PathBuf,
        /// Directory holding `snap_*.dwv` files from a previous run.
        #[arg(long)]
        snapshots: Option<PathBuf>,
    },
    /// Self-convergence table over successively doubled grids.
    Converge {
        config: PathBuf,
        #[arg(long, default_value_t = 3)]
        levels: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.cmd {
        Cmd::Run { config, output_dir } => cmd_run(&config, output_dir),
        Cmd::CheckCompat { config, max_order } => report(cmd_check_compat(&config, max_order)),
        Cmd::DtnSelftest { n_s, dump } => report(cmd_dtn_selftest(n_s, dump.as_deref())),
        Cmd::Probe { config, snapshots } => report(cmd_probe(&config, snapshots.as_deref())),
        Cmd::Converge { config, levels } => report(cmd_converge(&config, levels)),
    };
    ExitCode::from(code as u8)
}

fn report(r: Result<i32>) -> i32 {
    match r {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn cmd_run(path: &Path, output_dir: Option<PathBuf>) -> i32 {
    let mut cfg = match ScenarioConfig::from_path(path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    if output_dir.is_some() {
        cfg.output_dir = output_dir;
    }
    let rep = run_scenario(&cfg);
    for key in ["status", "steps", "t_final", "energy_drift", "max_state_drift", "abort", "reason"] {
        if let Some(v) = rep.manifest.get(key) {
            println!("{key} = {v}");
        }
    }
    rep.exit_code
}

fn cmd_check_compat(path: &Path, max_order: usize) -> Result<i32> {
    let cfg = ScenarioConfig::from_path(path)?;
    let sc = build_scenario(&cfg)?;
    let jet = compat::build_jet(&sc.mesh, &sc.initial.field, &sc.initial.psi, (max_order + 1).min(compat::MAX_JET_ORDER), &cfg.params)?;
    let tol = cfg.compat_tol.unwrap_or_else(|| compat::default_compat_tol(&sc.mesh));
    println!("compat_tol = {tol:e}");
    println!("order  L2           H^-1/2       status");
    let mut all = true;
    for j in 0..=max_order.min(jet.order) {
        let r = compat::check_compatibility(&sc.mesh, &jet, &sc.dtn, j, &cfg.params)?;
        let ok = r.l2 <= tol;
        all &= ok;
        println!("{j:>5}  {:.5e}  {:.5e}  {}", r.l2, r.h_minus_half, if ok { "pass" } else { "FAIL" });
    }
    Ok(if all { 0 } else { 4 })
}

fn cmd_dtn_selftest(n_s: usize, dump: Option<&Path>) -> Result<i32> {
    let curve = BoundaryCurve::new(CurveSpec::Circle { radius: 1.0, center: [0.0, 0.0] }, n_s)?;
    let bathy = InteriorBathymetry::constant(1.0, 0.5);
    let mut ok = true;
    for (choice, label, tol) in [(InteriorChoice::Spectral, "spectral", 1e-6), (InteriorChoice::FiniteDifference, "fd", 5e-2)] {
        let op = assemble_dtn(&curve, &bathy, choice)?;
        let (rows, neg) = op.check_invariants()?;
        println!("[{label}] presym_defect={:.3e} rowsum={rows:.3e} neg_eig={neg:.3e}", op.presym_defect());
        println!("[{label}]  k  rel_err");
        for k in 1..=8 {
            let psi = TraceField::from_fn(n_s, curve.length(), |s| (k as f64 * s).cos());
            let out = op.apply(&psi)?;
            let num: f64 = out.values.iter().zip(&psi.values).map(|(a, b)| (a - k as f64 * b).powi(2)).sum();
            let den: f64 = psi.values.iter().map(|b| (k as f64 * b).powi(2)).sum();
            let rel = (num / den).sqrt();
            ok &= rel <= tol;
            println!("[{label}] {k:>2}  {rel:.3e}{}", if rel <= tol { "" } else { "  FAIL" });
        }
        if let (Some(p), InteriorChoice::Spectral) = (dump, choice) {
            io::write_dtn(p, &op)?;
            println!("wrote {}", p.display());
        }
    }
    Ok(if ok { 0 } else { 4 })
}

fn cmd_probe(path: &Path, snapshots: Option<&Path>) -> Result<i32> {
    let cfg = ScenarioConfig::from_path(path)?;
    let sc = build_scenario(&cfg)?;
    let states = match snapshots {
        Some(dir) => {
            let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("snap_") && n.ends_with(".dwv")))
                .collect();
            files.sort();
            files.iter().map(|f| io::read_snapshot(f, &cfg.params, sc.mesh.curve_length())).collect::<Result<Vec<_>>>()?
        }
        None => {
            let mut st = sc.initial.clone();
            let mut states = vec![st.clone()];
            sc.solver.run(&mut st, cfg.solver.t_end, |s| {
                states.push(s.clone());
                Ok(())
            })?;
            states
        }
    };
    if states.len() < 3 {
        return Err(Error::NotEnoughData(format!("probe needs at least 3 snapshots, found {}", states.len())));
    }
    let samples = probe_samples(&sc.solver, &states)?;
    let normals: Vec<[f64; 2]> = (0..sc.mesh.n_s()).map(|j| sc.mesh.gamma_normal(j)).collect();
    let weights: Vec<f64> = (0..sc.mesh.n_s()).map(|j| sc.mesh.gamma_weight(j)).collect();
    let rep = weak_dissipativity_probe(&samples, &normals, &weights, &sc.dtn)?;
    print!("{}", rep.to_kv());
    Ok(0)
}

fn cmd_converge(path: &Path, levels: usize) -> Result<i32> {
    let cfg = ScenarioConfig::from_path(path)?;
    let table = converge(&cfg, levels)?;
    print!("{}", table.to_text());
    Ok(0)
}
