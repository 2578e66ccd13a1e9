use std::fs::OpenOptions;
use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use xmem::bounds::{
    merge_phases, permute_lb, sort_e, tall_cache_transfer_lb, transfer_lb, BoundInputs,
};
use xmem::harness::{run_experiment, write_csv, Algorithm, Backend, Distribution, ExperimentSpec};
use xmem::Error;

#[derive(Parser)]
#[command(name = "xmem", version, about = "External-memory sorting lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sort (or permute) a generated input and report its I/O counters.
    Run(RunArgs),
    /// Print the closed-form cost expressions for a problem shape.
    Bounds(BoundsArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Sim,
    File,
}

#[derive(Clone, Copy, ValueEnum)]
enum Toggle {
    On,
    Off,
}

#[derive(Args)]
struct RunArgs {
    /// merge, dist, split, pq or permute
    #[arg(long)]
    algo: Algorithm,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    m: usize,
    #[arg(long)]
    b: usize,
    /// uniform, sorted, reverse or dupes
    #[arg(long, default_value = "uniform")]
    dist: Distribution,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "sim")]
    backend: BackendArg,
    /// Block file for the file backend; a temporary file when omitted.
    #[arg(long)]
    disk_path: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "on")]
    budget: Toggle,
    /// Append the report row here (the header is written for a new file).
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct BoundsArgs {
    #[arg(long)]
    n: u64,
    #[arg(long)]
    m: u64,
    #[arg(long)]
    b: u64,
    /// Average elements per I/O; defaults to B.
    #[arg(long)]
    avg_b: Option<f64>,
    #[arg(long, default_value_t = 0.5)]
    eps: f64,
}

fn run(args: RunArgs) -> xmem::Result<()> {
    let mut spec = ExperimentSpec::new(args.algo, args.n, args.m, args.b, args.dist, args.seed);
    spec.enforce_budget = matches!(args.budget, Toggle::On);
    let _scratch;
    if let BackendArg::File = args.backend {
        let path = match args.disk_path {
            Some(p) => p,
            None => {
                let dir = tempfile::tempdir()?;
                let p = dir.path().join("disk.bin");
                _scratch = dir;
                p
            }
        };
        spec.backend = Backend::File(path);
    }
    log::info!(
        "running {} on n={} m={} b={}",
        spec.algo,
        spec.n,
        spec.m,
        spec.b
    );
    let report = run_experiment(&spec)?;
    write_csv(io::stdout().lock(), std::slice::from_ref(&report), true)?;
    if let Some(path) = args.csv {
        let fresh = std::fs::metadata(&path)
            .map(|m| m.len() == 0)
            .unwrap_or(true);
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        write_csv(file, &[report], fresh)?;
    }
    Ok(())
}

fn yes_no(v: bool) -> &'static str {
    if v {
        "yes"
    } else {
        "no"
    }
}

fn bounds(args: BoundsArgs) -> xmem::Result<()> {
    let inputs = match args.avg_b {
        Some(avg) => BoundInputs::with_avg(args.n, args.m, args.b, avg)?,
        None => BoundInputs::new(args.n, args.m, args.b)?,
    };
    let transfer = transfer_lb(&inputs);
    let tall = tall_cache_transfer_lb(&inputs, args.eps)?;
    println!("sort_e          {}", sort_e(args.n, args.m, args.b)?);
    println!("merge_phases    {}", merge_phases(args.n, args.m, args.b));
    println!(
        "permute_lb      {:.3}  (Omega governing expression, b = {})",
        permute_lb(&inputs),
        inputs.b_avg
    );
    println!(
        "transfer_lb     {}  (in regime: {})",
        transfer.value,
        yes_no(transfer.in_regime)
    );
    println!(
        "tall_cache_lb   {:.3}  (I/O threshold {:.3}, eps = {}, assumption holds: {})",
        tall.value,
        tall.io_threshold,
        args.eps,
        yes_no(tall.assumption_holds)
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Bounds(args) => bounds(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::Verification(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
