use clap::{Parser, Subcommand};
use netchemo::config::{parse_run_document, ConfigError, RunDocument, DEFAULT_KEY};
use netchemo::diagnostics::{
    convergence_study, linf_gap, oracle_run, write_records_csv, write_snapshot_csv,
    ConvergenceMode, ConvergenceRow, CONVERGENCE_EXACT_FLOOR,
};
use netchemo::network::{check_global_condition, parse_network, NetworkError, NetworkSpec};
use netchemo::simulator::{run_with, SimError};
use netchemo::NetworkGrids;
use serde_json::json;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Simulator for a hyperbolic-parabolic chemotaxis system on an
/// oriented-arc network.
///
/// Flags override configuration-file values; precedence is
/// flags > file > defaults. `NETCHEMO_THREADS` caps worker parallelism
/// (0 = auto).
#[derive(Parser)]
#[command(name = "netchemo", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a network description against every invariant and report the
    /// per-node global-existence condition as JSON.
    Validate { network: PathBuf },
    /// Run a simulation and write the diagnostics time series as CSV.
    Run {
        config: PathBuf,
        /// Override the final time.
        #[arg(long = "t-final")]
        t_final: Option<f64>,
        /// Override the CFL number.
        #[arg(long)]
        cfl: Option<f64>,
        /// Override the cell count of every arc.
        #[arg(long)]
        cells: Option<usize>,
        /// Write outputs under this directory instead of the configured paths.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Grid-refinement study; prints the observed-order table.
    Converge {
        config: PathBuf,
        /// Number of refinement levels (>= 3).
        #[arg(long)]
        levels: usize,
        /// Chemoattractant-only spatial-order mode (dt proportional to h^2).
        #[arg(long)]
        phi_only: bool,
    },
    /// Run both the split-step solver and the explicit reference integrator
    /// and print the L-infinity gap.
    OracleCompare {
        config: PathBuf,
        /// Override the cell count of every arc.
        #[arg(long)]
        cells: Option<usize>,
        /// Timestep of the explicit reference integrator.
        #[arg(long = "dt-oracle")]
        dt_oracle: f64,
    },
}

/// Failure channels mapped to the exit-code contract:
/// 2 argument/configuration errors, 1 validation failures, 3 numerical
/// failures.
enum Failure {
    Args(String),
    Validation,
    Numerical(String),
}

impl Failure {
    fn exit(&self) -> ExitCode {
        match self {
            Failure::Args(msg) => {
                eprintln!("error: {msg}");
                ExitCode::from(2)
            }
            Failure::Validation => ExitCode::from(1),
            Failure::Numerical(msg) => {
                eprintln!("numerical failure: {msg}");
                ExitCode::from(3)
            }
        }
    }
}

fn args_err(e: impl std::fmt::Display) -> Failure {
    Failure::Args(e.to_string())
}

fn sim_err(e: SimError) -> Failure {
    match e {
        SimError::Config(_) | SimError::NonResampleableIc => Failure::Args(e.to_string()),
        other => Failure::Numerical(other.to_string()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(msg) = setup_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(2);
    }
    let result = match cli.command {
        Command::Validate { network } => cmd_validate(&network),
        Command::Run { config, t_final, cfl, cells, out } => {
            cmd_run(&config, t_final, cfl, cells, out)
        }
        Command::Converge { config, levels, phi_only } => cmd_converge(&config, levels, phi_only),
        Command::OracleCompare { config, cells, dt_oracle } => {
            cmd_oracle_compare(&config, cells, dt_oracle)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => f.exit(),
    }
}

fn setup_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("NETCHEMO_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .parse()
        .map_err(|_| format!("NETCHEMO_THREADS must be a nonnegative integer, got '{raw}'"))?;
    if n == 0 {
        return Ok(()); // auto
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| format!("cannot configure {n} worker threads: {e}"))
}

fn cmd_validate(path: &Path) -> Result<(), Failure> {
    let text = fs::read_to_string(path).map_err(args_err)?;
    match parse_network(&text) {
        Ok(spec) => {
            let satisfied = check_global_condition(&spec);
            let condition: serde_json::Map<String, serde_json::Value> = spec
                .node_ids()
                .map(|node| {
                    (
                        spec.node_name(node).to_string(),
                        json!({
                            "satisfied": satisfied[node.0],
                            "hub": spec
                                .global_condition_hub_at(node)
                                .map(|a| spec.arcs()[a.0].id.clone()),
                        }),
                    )
                })
                .collect();
            let report = json!({
                "valid": true,
                "errors": [],
                "arcs": spec.n_arcs(),
                "nodes": spec.n_nodes(),
                "external_points": spec.n_external_points(),
                "global_condition": condition,
            });
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            Ok(())
        }
        Err(NetworkError::Syntax(e)) => {
            let report = json!({
                "valid": false,
                "errors": [{"code": "SYNTAX", "message": e.to_string()}],
            });
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            Err(Failure::Validation)
        }
        Err(NetworkError::Invalid(violations)) => {
            let report = json!({
                "valid": false,
                "errors": violations,
            });
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            Err(Failure::Validation)
        }
        Err(other) => Err(args_err(other)),
    }
}

struct Loaded {
    spec: NetworkSpec,
    doc: RunDocument,
}

fn load_config(path: &Path) -> Result<Loaded, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| args_err(format!("cannot read '{}': {e}", path.display())))?;
    let doc = parse_run_document(&text).map_err(args_err)?;
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let network_path = dir.join(&doc.network);
    let net_text = fs::read_to_string(&network_path)
        .map_err(|e| args_err(format!("cannot read network '{}': {e}", network_path.display())))?;
    match parse_network(&net_text) {
        Ok(spec) => Ok(Loaded { spec, doc }),
        Err(NetworkError::Syntax(e)) => {
            eprintln!("network '{}' is malformed: {e}", network_path.display());
            Err(Failure::Validation)
        }
        Err(NetworkError::Invalid(violations)) => {
            for v in &violations {
                eprintln!("network invalid [{}]: {}", v.code, v.message);
            }
            Err(Failure::Validation)
        }
        Err(other) => Err(args_err(other)),
    }
}

fn config_err(e: ConfigError) -> Failure {
    args_err(e)
}

fn cmd_run(
    path: &Path,
    t_final: Option<f64>,
    cfl: Option<f64>,
    cells: Option<usize>,
    out: Option<PathBuf>,
) -> Result<(), Failure> {
    let Loaded { spec, mut doc } = load_config(path)?;
    if let Some(t) = t_final {
        doc.t_final = t;
    }
    if let Some(c) = cfl {
        doc.cfl = c;
    }
    if let Some(n) = cells {
        doc.n_cells.clear();
        doc.n_cells.insert(DEFAULT_KEY.to_string(), n as i64);
    }

    let config = doc.to_sim_config(&spec).map_err(config_err)?;
    let ics = doc.resolve_initial(&spec).map_err(config_err)?;
    let grids = NetworkGrids::new(&spec, &config.n_cells).map_err(|e| sim_err(e.into()))?;

    let (csv_path, snapshot_dir) = match &out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(args_err)?;
            let snaps = doc.outputs.snapshots.as_ref().map(|_| dir.join("snapshots"));
            (dir.join("diagnostics.csv"), snaps)
        }
        None => (
            PathBuf::from(doc.outputs.csv.clone().unwrap_or_else(|| "diagnostics.csv".to_string())),
            doc.outputs.snapshots.clone().map(PathBuf::from),
        ),
    };
    if let Some(dir) = &snapshot_dir {
        fs::create_dir_all(dir).map_err(args_err)?;
    }

    let mut snapshot_index = 0usize;
    let mut snapshot_failure: Option<std::io::Error> = None;
    let result = run_with(&spec, &config, &ics, |state, _record| {
        if let Some(dir) = &snapshot_dir {
            if snapshot_failure.is_none() {
                let file = dir.join(format!("snapshot_{snapshot_index:06}.csv"));
                let write = fs::File::create(&file).and_then(|f| {
                    let mut w = std::io::BufWriter::new(f);
                    write_snapshot_csv(&mut w, &spec, &grids, state)
                });
                if let Err(e) = write {
                    snapshot_failure = Some(e);
                }
            }
            snapshot_index += 1;
        }
    })
    .map_err(sim_err)?;
    if let Some(e) = snapshot_failure {
        return Err(args_err(format!("cannot write snapshots: {e}")));
    }

    let mut csv = Vec::new();
    write_records_csv(&mut csv, &spec, &result.records).expect("in-memory write");
    fs::write(&csv_path, csv)
        .map_err(|e| args_err(format!("cannot write '{}': {e}", csv_path.display())))?;

    if config.compat_check {
        let residual = result.records[0].compat_residual;
        if residual > 1e-8 {
            eprintln!(
                "warning: initial data violates the boundary/transmission relations \
                 (residual {residual:e} > 1e-8)"
            );
        }
    }
    let worst_gamma = result
        .records
        .iter()
        .flat_map(|r| r.gamma1.iter().chain(&r.gamma2))
        .fold(0.0f64, |acc, &g| acc.min(g));
    if worst_gamma < -1e-12 {
        eprintln!("warning: node dissipation went negative beyond tolerance ({worst_gamma:e})");
    }

    println!(
        "run complete: {} steps to t = {}; wrote {}",
        result.wall_steps,
        result.final_state.time,
        csv_path.display()
    );
    Ok(())
}

fn uniform_base_cells(config: &[usize]) -> Result<usize, Failure> {
    let first = config[0];
    if config.iter().any(|&n| n != first) {
        return Err(Failure::Args(
            "convergence studies need a uniform cell count; use a single \"default\" entry"
                .to_string(),
        ));
    }
    Ok(first)
}

fn format_err(e: Option<f64>) -> String {
    match e {
        Some(v) if v <= CONVERGENCE_EXACT_FLOOR => "exact".to_string(),
        Some(v) => format!("{v:.3e}"),
        None => "-".to_string(),
    }
}

fn format_order(err: Option<f64>, order: Option<f64>) -> String {
    match (err, order) {
        (Some(e), _) if e <= CONVERGENCE_EXACT_FLOOR => "exact".to_string(),
        (_, Some(o)) => format!("{o:.2}"),
        _ => "-".to_string(),
    }
}

fn print_convergence_table(rows: &[ConvergenceRow]) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(
        out,
        "{:>7} {:>11} {:>11} {:>11} {:>7} {:>11} {:>7} {:>11} {:>7}",
        "cells", "h", "dt", "err_u", "ord_u", "err_v", "ord_v", "err_phi", "ord_phi"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:>7} {:>11.4e} {:>11.4e} {:>11} {:>7} {:>11} {:>7} {:>11} {:>7}",
            r.n_cells,
            r.h,
            r.dt,
            format_err(r.err_u),
            format_order(r.err_u, r.order_u),
            format_err(r.err_v),
            format_order(r.err_v, r.order_v),
            format_err(r.err_phi),
            format_order(r.err_phi, r.order_phi),
        );
    }
}

fn cmd_converge(path: &Path, levels: usize, phi_only: bool) -> Result<(), Failure> {
    let Loaded { spec, doc } = load_config(path)?;
    let ics = doc.resolve_initial(&spec).map_err(config_err)?;
    let cells = doc.resolve_cells(&spec).map_err(config_err)?;
    let base = uniform_base_cells(&cells)?;
    let mode = if phi_only { ConvergenceMode::PhiOnly } else { ConvergenceMode::Coupled };
    let rows = convergence_study(&spec, &ics, base, doc.t_final, doc.cfl, levels, mode)
        .map_err(sim_err)?;
    print_convergence_table(&rows);
    Ok(())
}

fn cmd_oracle_compare(path: &Path, cells: Option<usize>, dt_oracle: f64) -> Result<(), Failure> {
    let Loaded { spec, mut doc } = load_config(path)?;
    if let Some(n) = cells {
        doc.n_cells.clear();
        doc.n_cells.insert(DEFAULT_KEY.to_string(), n as i64);
    }
    let config = doc.to_sim_config(&spec).map_err(config_err)?;
    let ics = doc.resolve_initial(&spec).map_err(config_err)?;
    let grids = NetworkGrids::new(&spec, &config.n_cells).map_err(|e| sim_err(e.into()))?;

    let main = netchemo::simulator::run(&spec, &config, &ics).map_err(sim_err)?;
    let reference = oracle_run(&spec, &grids, &ics, config.t_final, dt_oracle, config.toggles)
        .map_err(sim_err)?;
    let gap = linf_gap(&main.final_state, &reference);
    println!("L_inf gap at t = {}: {gap:e}", config.t_final);
    Ok(())
}
