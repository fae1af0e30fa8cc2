//! `tvcs` command-line interface.
//!
//! Exit codes: 0 success, 1 usage error, 2 numerical failure (flagged
//! cells or instances, non-converged solves).

use clap::{Args, Parser, Subcommand};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use tvcs::experiments::{
    default_m_grid, keyed_rng, m50, phase_csv, phase_svg, phase_transition, stability_suite,
    PhaseConfig, StabilityConfig,
};
use tvcs::gradient::grad;
use tvcs::haar::HaarBasis;
use tvcs::signals::{separation_discrete, write_signal_csv, Signal, SignalFamily};
use tvcs::solver::{solve_tv, MeasurementModel, SolveOpts, SolveStatus};
use tvcs::tree::{balancing, describe, extended_support, to_dot, SignalTree};
use tvcs::width::{
    width_empirical, width_upper_analytic, width_upper_mc_with, AnalyticMode, EmpiricalOpts,
    WidthMethod,
};

#[derive(Parser)]
#[command(name = "tvcs", version, about = "1D total-variation compressed sensing laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a signal from a family and report its separation data
    Gen(GenArgs),
    /// Build the signal tree for a support (with ghost-jump padding)
    Tree(TreeArgs),
    /// Emit the adapted Haar basis for a support
    Haar(HaarArgs),
    /// Estimate the conic mean width of a signal
    Width(WidthArgs),
    /// Solve a TV program from a matrix and measurement file
    Solve(SolveArgs),
    /// Phase-transition grid over (n, m)
    Phase(PhaseArgs),
    /// Stability experiment with perturbations and noise
    Stability(StabilityArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    family: SignalFamilyArg,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    s: usize,
    #[arg(long)]
    seed: u64,
    /// Output CSV path (stdout if omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone)]
struct SignalFamilyArg(SignalFamily);

impl std::str::FromStr for SignalFamilyArg {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        s.parse::<SignalFamily>().map(SignalFamilyArg).map_err(|e| e.to_string())
    }
}

#[derive(Args)]
struct TreeArgs {
    /// Comma-separated 1-based jump faces
    #[arg(long, value_delimiter = ',')]
    support: Vec<usize>,
    #[arg(long)]
    n: usize,
    /// Separation constant used for ghost-jump padding; omit to build
    /// the tree on the raw support without padding
    #[arg(long)]
    delta: Option<f64>,
    /// Also write a Graphviz rendering here
    #[arg(long)]
    dot: Option<PathBuf>,
}

#[derive(Args)]
struct HaarArgs {
    #[arg(long, value_delimiter = ',')]
    support: Vec<usize>,
    #[arg(long)]
    n: usize,
    /// Write the dense matrix as CSV (n <= 256)
    #[arg(long)]
    dense: bool,
}

#[derive(Args)]
struct WidthArgs {
    #[arg(long)]
    family: SignalFamilyArg,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    s: usize,
    #[arg(long)]
    seed: u64,
    /// one of: empirical-polar, mc-dual-upper, analytic-417,
    /// analytic-418, all
    #[arg(long, default_value = "all")]
    method: String,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    /// Golden-section search over the scaling parameter of the
    /// Monte-Carlo upper bound
    #[arg(long)]
    tau_search: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    /// CSV matrix, one row per line
    #[arg(long)]
    matrix: PathBuf,
    /// CSV vector of measurements
    #[arg(long)]
    y: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    eta: f64,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 200_000)]
    max_iters: usize,
    /// Output CSV for the recovered signal
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PhaseArgs {
    #[arg(long)]
    family: SignalFamilyArg,
    #[arg(long)]
    s: usize,
    /// Either `lo..hi` (doubling) or a comma-separated list
    #[arg(long)]
    n: String,
    /// Optional explicit m grid (comma-separated); default steps by
    /// max(1, n_max / 64)
    #[arg(long)]
    m: Option<String>,
    #[arg(long, default_value_t = 50)]
    trials: usize,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 1e-6)]
    solver_tol: f64,
    #[arg(long, env = "TVCS_OUT_DIR")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct StabilityArgs {
    #[arg(long)]
    family: SignalFamilyArg,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    s: usize,
    #[arg(long, default_value_t = 0.0)]
    epsilon: f64,
    #[arg(long, default_value_t = 0.0)]
    eta: f64,
    #[arg(long)]
    m: usize,
    #[arg(long, default_value_t = 20)]
    trials: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, env = "TVCS_OUT_DIR")]
    out_dir: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version requests are successful exits
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, Box<dyn std::error::Error>> {
    match cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::Tree(args) => cmd_tree(args),
        Command::Haar(args) => cmd_haar(args),
        Command::Width(args) => cmd_width(args),
        Command::Solve(args) => cmd_solve(args),
        Command::Phase(args) => cmd_phase(args),
        Command::Stability(args) => cmd_stability(args),
    }
}

fn write_out(path: &Option<PathBuf>, contents: &str) -> std::io::Result<()> {
    match path {
        Some(p) => std::fs::write(p, contents),
        None => std::io::stdout().write_all(contents.as_bytes()),
    }
}

fn cmd_gen(args: GenArgs) -> Result<ExitCode, Box<dyn std::error::Error>> {
    let mut rng = keyed_rng(args.seed, args.n as u64, 0, 0);
    let x = args.family.0.sample(args.n, args.s, &mut rng)?;
    let mut buf = Vec::new();
    write_signal_csv(&x, &mut buf)?;
    write_out(&args.out, std::str::from_utf8(&buf)?)?;
    let report = separation_discrete(&x)?;
    eprintln!("{}", serde_json::to_string(&report)?);
    Ok(ExitCode::SUCCESS)
}

fn cmd_tree(args: TreeArgs) -> Result<ExitCode, Box<dyn std::error::Error>> {
    let support = match args.delta {
        Some(delta) => extended_support(&args.support, delta, args.n)?,
        None => args.support.clone(),
    };
    let tree = SignalTree::build(&support, args.n)?;
    let report = serde_json::json!({
        "n": args.n,
        "support": tree.support(),
        "s_bar": tree.support().len(),
        "depth": tree.depth(),
        "support_depth": tree.support_depth(),
        "vertices": describe(&tree),
    });
    println!("{}", serde_json::to_string_pretty(&report)?);
    if let Some(dot) = args.dot {
        std::fs::write(dot, to_dot(&tree))?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_haar(args: HaarArgs) -> Result<ExitCode, Box<dyn std::error::Error>> {
    let tree = SignalTree::build(&args.support, args.n)?;
    let basis = HaarBasis::from_tree(&tree);
    if args.dense {
        if args.n > 256 {
            return Err("dense output is limited to n <= 256".into());
        }
        let mut out = String::new();
        for row in basis.to_dense() {
            let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        print!("{out}");
    } else {
        let rows: Vec<serde_json::Value> = basis
            .rows()
            .iter()
            .map(|r| {
                serde_json::json!({
                    "level": r.level,
                    "left_start": r.left_start,
                    "pivot": r.pivot,
                    "right_end": r.right_end,
                    "left_val": r.left_val,
                    "right_val": r.right_val,
                })
            })
            .collect();
        println!(
            "{}",
            serde_json::to_string_pretty(&serde_json::json!({
                "n": args.n,
                "gram_max_deviation": basis.gram_max_deviation(),
                "rows": rows,
            }))?
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_width(args: WidthArgs) -> Result<ExitCode, Box<dyn std::error::Error>> {
    let mut rng = keyed_rng(args.seed, args.n as u64, 0, 0);
    let x = args.family.0.sample(args.n, args.s, &mut rng)?;
    let report = separation_discrete(&x)?;
    let delta = report.delta_max;
    let support = x.jump_support();
    let (s_bar, beta) = match extended_support(&support, delta, args.n) {
        Ok(ext) => {
            let tree = SignalTree::build(&ext, args.n)?;
            let labels = tree.decompose();
            let bal = balancing(&tree, &labels);
            (
                ext.len(),
                (bal.beta_max_support, bal.beta_max_near, bal.beta_min_interior.unwrap_or(f64::NAN)),
            )
        }
        Err(_) => (0, (f64::NAN, f64::NAN, f64::NAN)),
    };

    let methods: Vec<WidthMethod> = match args.method.as_str() {
        "all" => vec![
            WidthMethod::EmpiricalPolar,
            WidthMethod::McDualUpper,
            WidthMethod::Analytic417,
            WidthMethod::Analytic418,
        ],
        "empirical-polar" => vec![WidthMethod::EmpiricalPolar],
        "mc-dual-upper" => vec![WidthMethod::McDualUpper],
        "analytic-417" => vec![WidthMethod::Analytic417],
        "analytic-418" => vec![WidthMethod::Analytic418],
        other => return Err(format!("unknown method '{other}'").into()),
    };

    let mut csv = String::from(
        "family,n,method,mean_sq,std_error,trials,tau,s_bar,beta_max_support,beta_max_near,beta_min_interior\n",
    );
    let mut flagged = 0usize;
    for method in methods {
        let (mean_sq, std_error, trials, tau) = match method {
            WidthMethod::EmpiricalPolar => {
                let est = width_empirical(
                    &x,
                    args.trials,
                    &mut keyed_rng(args.seed, args.n as u64, 1, 0),
                    &EmpiricalOpts::default(),
                )?;
                flagged += est.flagged;
                (est.mean_sq, est.std_error, est.trials, f64::NAN)
            }
            WidthMethod::McDualUpper => {
                let est = width_upper_mc_with(
                    &x,
                    delta,
                    args.trials,
                    &mut keyed_rng(args.seed, args.n as u64, 2, 0),
                    None,
                    args.tau_search,
                )?;
                (est.mean_sq, est.std_error, est.trials, est.tau.unwrap_or(f64::NAN))
            }
            WidthMethod::Analytic417 => {
                (width_upper_analytic(&x, delta, AnalyticMode::Eq417)?, 0.0, 0, f64::NAN)
            }
            WidthMethod::Analytic418 => {
                (width_upper_analytic(&x, delta, AnalyticMode::Eq418)?, 0.0, 0, f64::NAN)
            }
        };
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            args.family.0.name(),
            args.n,
            method.name(),
            mean_sq,
            std_error,
            trials,
            tau,
            s_bar,
            beta.0,
            beta.1,
            beta.2
        ));
    }
    write_out(&args.out, &csv)?;
    Ok(if flagged > 0 { ExitCode::from(2) } else { ExitCode::SUCCESS })
}

fn read_matrix(path: &Path) -> Result<Vec<Vec<f64>>, Box<dyn std::error::Error>> {
    let mut rows = Vec::new();
    for line in std::fs::read_to_string(path)?.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row: Result<Vec<f64>, _> = line.split(',').map(|c| c.trim().parse::<f64>()).collect();
        rows.push(row?);
    }
    Ok(rows)
}

fn cmd_solve(args: SolveArgs) -> Result<ExitCode, Box<dyn std::error::Error>> {
    let a = read_matrix(&args.matrix)?;
    let y: Vec<f64> = read_matrix(&args.y)?.into_iter().flatten().collect();
    let model = MeasurementModel::new(a, y, args.eta)?;
    let res = solve_tv(&model, &SolveOpts { tol: args.tol, max_iters: args.max_iters });
    let xhat = Signal::new(res.x.clone())?;
    let mut buf = Vec::new();
    write_signal_csv(&xhat, &mut buf)?;
    write_out(&args.out, std::str::from_utf8(&buf)?)?;
    let summary = serde_json::json!({
        "status": match res.status {
            SolveStatus::Converged => "converged",
            SolveStatus::MaxIters => "max-iters",
            SolveStatus::InfeasibleInput => "infeasible-input",
        },
        "objective": res.objective,
        "feasibility_residual": res.feasibility_residual,
        "primal_dual_gap": res.primal_dual_gap,
        "iterations": res.iterations,
        "tv_check": grad(&res.x).iter().map(|v| v.abs()).sum::<f64>(),
    });
    println!("{}", serde_json::to_string(&summary)?);
    Ok(match res.status {
        SolveStatus::Converged => ExitCode::SUCCESS,
        _ => ExitCode::from(2),
    })
}

fn parse_grid(text: &str) -> Result<Vec<usize>, Box<dyn std::error::Error>> {
    if let Some((lo, hi)) = text.split_once("..") {
        let lo: usize = lo.parse()?;
        let hi: usize = hi.parse()?;
        if lo == 0 || hi < lo {
            return Err("bad grid range".into());
        }
        let mut grid = Vec::new();
        let mut v = lo;
        while v <= hi {
            grid.push(v);
            v *= 2;
        }
        Ok(grid)
    } else {
        let grid: Result<Vec<usize>, _> = text.split(',').map(|c| c.trim().parse()).collect();
        Ok(grid?)
    }
}

fn echo_config<T: serde::Serialize>(dir: &Path, cfg: &T) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("config.json"), serde_json::to_string_pretty(cfg).unwrap())
}

fn cmd_phase(args: PhaseArgs) -> Result<ExitCode, Box<dyn std::error::Error>> {
    let n_grid = parse_grid(&args.n)?;
    let m_grid = match &args.m {
        Some(text) => parse_grid(text)?,
        None => default_m_grid(*n_grid.last().unwrap(), args.s),
    };
    let cfg = PhaseConfig {
        family: args.family.0,
        s: args.s,
        n_grid,
        m_grid,
        trials: args.trials,
        tol: args.tol,
        seed: args.seed,
        solver_tol: args.solver_tol,
        solver_max_iters: 200_000,
    };
    echo_config(&args.out_dir, &cfg)?;
    let diagram = phase_transition(&cfg)?;
    std::fs::write(args.out_dir.join("phase.csv"), phase_csv(&diagram))?;
    std::fs::write(args.out_dir.join("phase.svg"), phase_svg(&diagram))?;
    // derived m50 curve
    let mut curve = String::from("n,m50\n");
    for (i, &n) in diagram.n_grid.iter().enumerate() {
        let v = m50(&diagram.m_grid, &diagram.success_counts[i], diagram.trials_per_cell)
            .map(|v| format!("{v}"))
            .unwrap_or_else(|| "nan".into());
        curve.push_str(&format!("{n},{v}\n"));
    }
    std::fs::write(args.out_dir.join("m50.csv"), curve)?;
    if !diagram.flagged_cells.is_empty() {
        eprintln!("{} cell(s) flagged: > 10% of solves hit the iteration cap", diagram.flagged_cells.len());
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_stability(args: StabilityArgs) -> Result<ExitCode, Box<dyn std::error::Error>> {
    let cfg = StabilityConfig {
        family: args.family.0,
        n: args.n,
        s: args.s,
        epsilon: args.epsilon,
        eta: args.eta,
        m: args.m,
        trials: args.trials,
        seed: args.seed,
        solver_tol: 1e-7,
        solver_max_iters: 200_000,
    };
    echo_config(&args.out_dir, &cfg)?;
    let records = stability_suite(&cfg)?;
    let mut csv =
        String::from("tau_x,term1,term2,eta,m,observed_error,surrogate_tv_gap,skipped\n");
    for r in &records {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.tau_x, r.term1, r.term2, r.eta, r.m, r.observed_error, r.surrogate_tv_gap, r.skipped
        ));
    }
    std::fs::write(args.out_dir.join("stability.csv"), csv)?;
    let skipped = records.iter().filter(|r| r.skipped).count();
    if skipped > 0 {
        eprintln!("{skipped} instance(s) skipped: perturbation changed the dominant-jump set");
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}
