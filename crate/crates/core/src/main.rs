use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};

use fdcop::baselines::HcmsConfig;
use fdcop::bench::{self, Algorithm, ExperimentSpec, GeneratorConfig, Topology};
use fdcop::ccocoa::{FreezePolicy, SolverConfig};
use fdcop::engine::{RunOptions, SimRng};
use fdcop::exec::Execution;
use fdcop::model::{parse_problem, serialize_problem, Problem};
use fdcop::oracle::{self, GridSpec, QuadraticMin};

#[derive(Parser)]
#[command(
    name = "fdcop",
    version,
    about = "Solve, generate and benchmark functional DCOPs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one problem file and print the assignment and metrics.
    Solve(SolveArgs),
    /// Run an experiment over generated instances and write CSV.
    Bench(BenchArgs),
    /// Generate a random problem file.
    Gen(GenArgs),
    /// Check a problem against the reference oracles.
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgoName {
    Ccocoa,
    Cocoa,
    Hcms,
}

#[derive(Clone, Copy, ValueEnum)]
enum Freeze {
    /// Hold every committed neighbour fixed while refining.
    All,
    /// Hold only the most recently committed neighbour fixed.
    Latest,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    problem: PathBuf,
    #[arg(long, value_enum, default_value = "ccocoa")]
    algo: AlgoName,
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, default_value_t = 0.01)]
    alpha: f64,
    #[arg(long, default_value_t = 100)]
    refine_iters: usize,
    #[arg(long, default_value_t = 100)]
    maxsum_iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "all")]
    freeze: Freeze,
    /// Print every message in delivery order.
    #[arg(long)]
    trace: bool,
}

#[derive(Args)]
struct TopologyArgs {
    #[arg(long, value_parser = parse_topology)]
    topology: Topology,
    #[arg(long, default_value_t = 50)]
    agents: usize,
    /// Edge probability; defaults to 0.2 (sparse) or 0.6 (dense).
    #[arg(long)]
    p: Option<f64>,
    /// Attachments per new scale-free agent.
    #[arg(long, default_value_t = 2)]
    attach: usize,
}

impl TopologyArgs {
    fn generator(&self) -> GeneratorConfig {
        let mut g = GeneratorConfig::preset(self.topology, self.agents);
        if let Some(p) = self.p {
            g.edge_prob = p;
        }
        g.attach = self.attach;
        g
    }
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    topology: TopologyArgs,
    #[arg(long, default_value_t = 50)]
    instances: usize,
    #[arg(long, default_value_t = 3)]
    k: usize,
    /// Comma-separated: ccocoa, cocoa, hcms, hcms<iters>.
    #[arg(long, default_value = "ccocoa,hcms100,hcms500", value_delimiter = ',')]
    algos: Vec<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run instances one after another instead of in parallel.
    #[arg(long)]
    sequential: bool,
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    topology: TopologyArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output problem file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    problem: PathBuf,
    #[command(subcommand)]
    check: Check,
}

#[derive(Subcommand)]
enum Check {
    /// Exhaustive search over a uniform grid.
    Grid {
        #[arg(long, default_value_t = 41)]
        points: usize,
    },
    /// Closed-form minimum when the Hessian is positive definite.
    Quadmin,
    /// Compare analytic gradients with central differences.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
    },
}

fn parse_topology(s: &str) -> Result<Topology, String> {
    s.parse()
}

/// A failure after arguments were accepted; maps to exit code 2.
struct Failure(String);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(e.to_string())
    }
}

fn load(path: &PathBuf) -> Result<Problem, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure(format!("{}: {e}", path.display())))?;
    parse_problem(&text).map_err(|e| Failure(format!("{}: {e}", path.display())))
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<(), Failure> {
    match out {
        Some(path) => {
            fs::write(path, text).map_err(|e| Failure(format!("{}: {e}", path.display())))
        }
        None => Ok(io::stdout().write_all(text.as_bytes())?),
    }
}

fn solve(args: SolveArgs) -> Result<(), Failure> {
    let p = load(&args.problem)?;
    let cfg = SolverConfig {
        k: args.k,
        alpha: args.alpha,
        max_refine_iters: args.refine_iters,
        seed: args.seed,
        freeze: match args.freeze {
            Freeze::All => FreezePolicy::AllCommitted,
            Freeze::Latest => FreezePolicy::LatestCommitted,
        },
        ..SolverConfig::default()
    };
    let algo = match args.algo {
        AlgoName::Ccocoa => Algorithm::CCoCoA(cfg),
        AlgoName::Cocoa => Algorithm::CoCoA(cfg),
        AlgoName::Hcms => Algorithm::Hcms(
            cfg,
            HcmsConfig {
                max_sum_iters: args.maxsum_iters,
                ..HcmsConfig::default()
            },
        ),
    };
    let m = algo.run_with(&p, args.seed, RunOptions { trace: args.trace })?;
    let mut out = io::stdout().lock();
    if let Some(trace) = &m.trace {
        for entry in trace {
            writeln!(out, "{entry}")?;
        }
    }
    writeln!(out, "algorithm   {}", algo.label())?;
    for (i, v) in m.assignment.iter() {
        writeln!(out, "x{i:<10} {v}")?;
    }
    writeln!(out, "cost        {}", m.cost)?;
    writeln!(out, "messages    {}", m.messages.total())?;
    writeln!(out, "hold_events {}", m.hold_events)?;
    writeln!(out, "beta        {}", m.beta_final)?;
    writeln!(out, "time_s      {:.6}", m.elapsed_secs())?;
    Ok(())
}

fn run_bench(args: BenchArgs) -> Result<(), Failure> {
    let cfg = SolverConfig {
        k: args.k,
        ..SolverConfig::default()
    };
    let algorithms = args
        .algos
        .iter()
        .map(|name| Algorithm::parse(name.trim(), cfg.clone()))
        .collect::<Result<Vec<_>, _>>()
        .map_err(Failure)?;
    let spec = ExperimentSpec {
        instances: args.instances,
        base_seed: args.seed,
        ..ExperimentSpec::new(args.topology.generator(), algorithms)
    };
    let mode = if args.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    let table = bench::run_experiment_with(&spec, mode)?;
    emit(&args.out, &table.to_csv_string()?)
}

fn generate(args: GenArgs) -> Result<(), Failure> {
    let p = args.topology.generator().generate(args.seed)?;
    emit(&args.out, &serialize_problem(&p))
}

fn verify(args: VerifyArgs) -> Result<(), Failure> {
    let p = load(&args.problem)?;
    match args.check {
        Check::Grid { points } => {
            let r = oracle::grid_search(&p, &GridSpec::new(points))?;
            println!("grid points {points}");
            for (i, v) in r.assignment.iter().enumerate() {
                println!("x{i:<10} {v}");
            }
            println!("cost        {}", r.cost);
        }
        Check::Quadmin => match oracle::quadratic_global_min(&p) {
            QuadraticMin::Minimum {
                assignment,
                cost,
                feasible,
            } => {
                for (i, v) in assignment.iter().enumerate() {
                    println!("x{i:<10} {v}");
                }
                println!("cost        {cost}");
                println!("in_domain   {feasible}");
            }
            QuadraticMin::Indefinite => {
                return Err(Failure(
                    "Hessian is not positive definite; no finite global minimum".into(),
                ));
            }
        },
        Check::Gradcheck { seed, tol } => {
            let mut rng = SimRng::seed_from_u64(seed);
            let point: Vec<f64> = p
                .domains()
                .iter()
                .map(|d| rng.random_range(d.lb()..=d.ub()))
                .collect();
            let mut worst: f64 = 0.0;
            for e in p.edges() {
                worst = worst.max(oracle::edge_gradient_check(
                    &e.cost,
                    point[e.first],
                    point[e.second],
                    1e-5,
                ));
            }
            for i in p.agents() {
                let err = oracle::local_objective_check(&p, i, &point, 1e-5);
                println!("agent {i:<5} max_error {err:.3e}");
                worst = worst.max(err);
            }
            println!("overall     max_error {worst:.3e}");
            if worst >= tol {
                return Err(Failure(format!(
                    "gradient error {worst:.3e} exceeds {tol:.1e}"
                )));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Solve(a) => solve(a),
        Command::Bench(a) => run_bench(a),
        Command::Gen(a) => generate(a),
        Command::Verify(a) => verify(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
