use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use qudit_qite::harness::{self, ExperimentPlan, ScalingPlan, SolveOptions};
use qudit_qite::qubo::ConstraintMode;
use qudit_qite::solver::{self, SolverConfig};

#[derive(Parser)]
#[command(name = "qite", version, about = "Qudit imaginary-time solver for capacitated Min-d-Cut")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write random k-nearest-neighbour instances for a grid of (N, d).
    Generate(GenerateArgs),
    /// Solve instance files and write run records and a summary CSV.
    Solve(SolveArgs),
    /// Approximation ratios against a baseline cost CSV (seed,N,d,cost).
    Compare(CompareArgs),
    /// Partition-size distribution of run records.
    Histogram(HistogramArgs),
    /// Export an instance as a binary QUBO (LP and JSON) with a manifest.
    ExportQubo(ExportArgs),
    /// Time solver steps while varying edge count and d.
    BenchScaling(ScalingArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Vertex counts.
    #[arg(long = "n", value_delimiter = ',', default_values_t = [50, 100, 150])]
    n: Vec<usize>,
    /// Partition counts.
    #[arg(long = "d", value_delimiter = ',', default_values_t = [3, 5, 7])]
    d: Vec<usize>,
    #[arg(long, default_value_t = harness::DEFAULT_INSTANCES_PER_CELL)]
    instances: usize,
    #[arg(long, default_value_t = harness::DEFAULT_NEIGHBORS)]
    neighbors: usize,
    /// Seed of the first instance in every cell.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SolverArgs {
    #[arg(long, default_value_t = solver::DEFAULT_DELTA_TAU)]
    dtau: f64,
    #[arg(long, default_value_t = solver::DEFAULT_MAX_STEPS)]
    max_steps: usize,
    #[arg(long, default_value_t = solver::DEFAULT_PLATEAU_WINDOW)]
    plateau_window: usize,
    /// Amplitude of the seeded perturbation of the initial state.
    #[arg(long, default_value_t = solver::DEFAULT_INIT_NOISE)]
    init_noise: f64,
    /// Seed of the initial-state perturbation.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl SolverArgs {
    fn config(&self, record_every: usize) -> SolverConfig {
        SolverConfig {
            delta_tau: self.dtau,
            max_steps: self.max_steps,
            plateau_window: self.plateau_window,
            record_every,
            init_noise: self.init_noise,
            seed: self.seed,
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    /// Instance files or directories of them.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[command(flatten)]
    solver: SolverArgs,
    /// Record every k-th step of the trajectory.
    #[arg(long, default_value_t = 1)]
    record_every: usize,
    /// Write wall_ms = 0 so outputs are byte-identical across runs.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Args)]
struct CompareArgs {
    /// summary.csv written by `solve`.
    #[arg(long)]
    summary: PathBuf,
    /// CSV with columns seed,N,d,cost.
    #[arg(long)]
    baseline: PathBuf,
    /// penalized: total costs; hard: cut costs of feasible solutions.
    #[arg(long, default_value = "penalized")]
    constraint_mode: ConstraintMode,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct HistogramArgs {
    /// Run record files or directories of them.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExportArgs {
    instance: PathBuf,
    #[arg(long, default_value = "penalized")]
    constraint_mode: ConstraintMode,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ScalingArgs {
    #[arg(long = "n", default_value_t = 400)]
    n: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [10, 20, 40])]
    neighbors: Vec<usize>,
    #[arg(long = "d", value_delimiter = ',', default_values_t = [4, 8, 16])]
    d: Vec<usize>,
    #[arg(long, default_value_t = 50)]
    steps: usize,
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    #[command(flatten)]
    solver: SolverArgs,
    /// Output CSV file.
    #[arg(long)]
    out: PathBuf,
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(a) => {
            let plan = ExperimentPlan {
                grid: a.n.iter().flat_map(|&n| a.d.iter().map(move |&d| (n, d))).collect(),
                instances_per_cell: a.instances,
                neighbors: a.neighbors,
                base_seed: a.seed,
                solver: SolverConfig::default(),
                out_dir: a.out.clone(),
                baseline: None,
            };
            let files = harness::cmd_generate(&plan, &a.out)?;
            eprintln!("wrote {} instances to {}", files.len(), a.out.display());
        }
        Command::Solve(a) => {
            let files = harness::collect_files(&a.inputs, ".json", &[".run.json", ".manifest.json", ".qubo.json"])?;
            if files.is_empty() {
                bail!("no instance files found");
            }
            let opts = SolveOptions { config: a.solver.config(a.record_every), jobs: a.jobs, no_timing: a.no_timing };
            let report = harness::cmd_solve(&files, &opts, &a.out)?;
            eprintln!("solved {} of {} instances; summary in {}", report.rows.len(), files.len(), report.summary_path.display());
            if !report.success() {
                for e in &report.errors {
                    eprintln!("error: {}: {}", e.file, e.error);
                }
                bail!("{} instance(s) failed; see {}", report.errors.len(), a.out.join("errors.csv").display());
            }
        }
        Command::Compare(a) => {
            let report = harness::cmd_compare(&a.summary, &a.baseline, a.constraint_mode, &a.out)?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            print!("{}", harness::ar_grid(&report.cells));
        }
        Command::Histogram(a) => {
            let files = harness::collect_files(&a.inputs, ".run.json", &[])?;
            if files.is_empty() {
                bail!("no run records found");
            }
            let hist = harness::cmd_histogram(&files, &a.out)?;
            for v in &hist.violations {
                println!(
                    "N={} d={} C_max={}: {}/{} partitions over capacity, max margin {}",
                    v.n, v.d, v.c_max, v.violating, v.partitions, v.max_margin
                );
            }
        }
        Command::ExportQubo(a) => {
            let m = harness::cmd_export_qubo(&a.instance, a.constraint_mode, &a.out)?;
            eprintln!("wrote {} and {} ({} variables)", m.lp_file, m.qubo_file, m.num_variables);
        }
        Command::BenchScaling(a) => {
            let plan = ScalingPlan {
                n: a.n,
                neighbors: a.neighbors,
                ds: a.d,
                seed: a.solver.seed,
                steps: a.steps,
                repeats: a.repeats,
            };
            let rows = harness::cmd_bench_scaling(&plan, &a.solver.config(1), &a.out)
                .with_context(|| format!("timing run for {}", a.out.display()))?;
            for r in rows {
                println!("N={} d={} k={} |E|={}: {:.3e} s/step", r.n, r.d, r.neighbors, r.edges, r.seconds_per_step);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
