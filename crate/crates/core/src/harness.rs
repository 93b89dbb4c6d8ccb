//! Batch experiments: instance generation, parallel solving, approximation
//! ratios against imported baseline costs, partition-size histograms, QUBO
//! export and per-step timing.
//!
//! All tabular outputs are CSV. Rows are written in a fixed order that does
//! not depend on thread scheduling.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expectation::HamiltonianSpec;
use crate::problem::{generate_instance, MinDCutInstance};
use crate::qubo::{export_qubo, ConstraintMode};
use crate::qudit::{build_pool, ProductState};
use crate::solver::{solve, step, RunRecord, SolverConfig};

pub const DEFAULT_INSTANCES_PER_CELL: usize = 50;
pub const DEFAULT_NEIGHBORS: usize = 10;
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    /// `(N, d)` cells.
    pub grid: Vec<(usize, usize)>,
    pub instances_per_cell: usize,
    pub neighbors: usize,
    /// Instance `j` of every cell uses seed `base_seed + j`.
    pub base_seed: u64,
    pub solver: SolverConfig,
    pub out_dir: PathBuf,
    pub baseline: Option<PathBuf>,
}

impl ExperimentPlan {
    /// The N ∈ {50, 100, 150} × d ∈ {3, 5, 7} benchmark grid.
    pub fn benchmark(out_dir: impl Into<PathBuf>) -> Self {
        let grid = [50, 100, 150].iter().flat_map(|&n| [3, 5, 7].map(|d| (n, d))).collect();
        Self {
            grid,
            instances_per_cell: DEFAULT_INSTANCES_PER_CELL,
            neighbors: DEFAULT_NEIGHBORS,
            base_seed: 0,
            solver: SolverConfig::default(),
            out_dir: out_dir.into(),
            baseline: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::InvalidConfig("experiment grid is empty".into()));
        }
        if self.instances_per_cell < 1 {
            return Err(Error::InvalidConfig("instances_per_cell must be at least 1".into()));
        }
        self.solver.validate()
    }

    pub fn instances_dir(&self) -> PathBuf {
        self.out_dir.join("instances")
    }

    pub fn runs_dir(&self) -> PathBuf {
        self.out_dir.join("runs")
    }
}

pub fn instance_file_name(n: usize, d: usize, seed: u64) -> String {
    format!("instance_N{n}_d{d}_s{seed}.json")
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    if !dir.is_dir() {
        return Err(Error::Format(format!("{} is not a directory", dir.display())));
    }
    Ok(())
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| Error::csv(path, e))).collect()
}

/// Writes `instances_per_cell` instance files per grid cell into `dir` and
/// returns their paths in grid order.
pub fn cmd_generate(plan: &ExperimentPlan, dir: &Path) -> Result<Vec<PathBuf>> {
    plan.validate()?;
    ensure_dir(dir)?;
    let mut paths = Vec::with_capacity(plan.grid.len() * plan.instances_per_cell);
    for &(n, d) in &plan.grid {
        for j in 0..plan.instances_per_cell as u64 {
            let seed = plan.base_seed + j;
            let inst = generate_instance(n, plan.neighbors, d, seed)?;
            let path = dir.join(instance_file_name(n, d, seed));
            inst.save(&path)?;
            paths.push(path);
        }
    }
    Ok(paths)
}

/// Expands directories into their files whose names end in `suffix`,
/// skipping names that end in any of `exclude`. Sorted by path.
pub fn collect_files(inputs: &[PathBuf], suffix: &str, exclude: &[&str]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let entries = fs::read_dir(input).map_err(|e| Error::io(input, e))?;
            for entry in entries {
                let path = entry.map_err(|e| Error::io(input, e))?.path();
                let name = path.file_name().and_then(|s| s.to_str()).unwrap_or("");
                if path.is_file() && name.ends_with(suffix) && !exclude.iter().any(|x| name.ends_with(x)) {
                    out.push(path);
                }
            }
        } else {
            out.push(input.clone());
        }
    }
    out.sort();
    out.dedup();
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub seed: Option<u64>,
    #[serde(rename = "N")]
    pub n: usize,
    pub d: usize,
    /// Best rounded penalized cost.
    pub final_cost: f64,
    pub cut_cost: f64,
    pub feasible: bool,
    pub violated_partitions: usize,
    pub max_violation: usize,
    pub steps: usize,
    pub wall_ms: f64,
}

impl SummaryRow {
    pub fn from_record(rec: &RunRecord) -> Self {
        Self {
            seed: rec.instance_seed,
            n: rec.num_vertices,
            d: rec.d,
            final_cost: rec.best_cost,
            cut_cost: rec.best_cut_cost,
            feasible: rec.feasible,
            violated_partitions: rec.violated_partitions,
            max_violation: rec.max_violation,
            steps: rec.steps,
            wall_ms: rec.wall_ms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub step: usize,
    pub energy: f64,
    pub rounded_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileError {
    pub file: String,
    pub error: String,
}

#[derive(Debug, Clone, Default)]
pub struct SolveReport {
    pub rows: Vec<SummaryRow>,
    pub errors: Vec<FileError>,
    pub summary_path: PathBuf,
}

impl SolveReport {
    pub fn success(&self) -> bool {
        self.errors.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub config: SolverConfig,
    /// Worker threads; each instance runs on one thread.
    pub jobs: usize,
    /// Write `wall_ms = 0` so outputs are byte-reproducible.
    pub no_timing: bool,
}

fn file_stem(path: &Path) -> String {
    let name = path.file_name().and_then(|s| s.to_str()).unwrap_or("instance");
    name.strip_suffix(".json").unwrap_or(name).to_string()
}

fn solve_one(path: &Path, opts: &SolveOptions, out_dir: &Path) -> Result<SummaryRow> {
    let inst = MinDCutInstance::load(path)?;
    let mut rec = solve(&inst, &opts.config)?;
    if opts.no_timing {
        rec.wall_ms = 0.0;
    }
    let stem = file_stem(path);
    write_file(&out_dir.join(format!("{stem}.run.json")), &rec.to_json())?;
    let traj: Vec<TrajectoryRow> = rec
        .trajectory
        .iter()
        .map(|p| TrajectoryRow { step: p.step, energy: p.energy, rounded_cost: p.rounded_cost })
        .collect();
    write_csv(&out_dir.join(format!("{stem}.trajectory.csv")), &traj)?;
    Ok(SummaryRow::from_record(&rec))
}

/// Solves every instance file, writing `<stem>.run.json` and
/// `<stem>.trajectory.csv` per instance plus `summary.csv`, and
/// `errors.csv` when any file fails.
pub fn cmd_solve(files: &[PathBuf], opts: &SolveOptions, out_dir: &Path) -> Result<SolveReport> {
    opts.config.validate()?;
    if opts.jobs < 1 {
        return Err(Error::InvalidConfig("jobs must be at least 1".into()));
    }
    ensure_dir(out_dir)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    let results: Vec<(PathBuf, Result<SummaryRow>)> =
        pool.install(|| files.par_iter().map(|p| (p.clone(), solve_one(p, opts, out_dir))).collect());

    let mut rows = Vec::new();
    let mut errors = Vec::new();
    for (path, res) in results {
        match res {
            Ok(row) => rows.push((path, row)),
            Err(e) => errors.push(FileError { file: path.display().to_string(), error: e.to_string() }),
        }
    }
    rows.sort_by(|a, b| (a.1.n, a.1.d, a.1.seed, &a.0).cmp(&(b.1.n, b.1.d, b.1.seed, &b.0)));
    let rows: Vec<SummaryRow> = rows.into_iter().map(|(_, r)| r).collect();

    let summary_path = out_dir.join("summary.csv");
    write_csv(&summary_path, &rows)?;
    let errors_path = out_dir.join("errors.csv");
    if errors.is_empty() {
        if errors_path.exists() {
            fs::remove_file(&errors_path).map_err(|e| Error::io(&errors_path, e))?;
        }
    } else {
        write_csv(&errors_path, &errors)?;
    }
    Ok(SolveReport { rows, errors, summary_path })
}

/// One baseline cost per instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub seed: u64,
    #[serde(rename = "N")]
    pub n: usize,
    pub d: usize,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArRow {
    pub seed: Option<u64>,
    #[serde(rename = "N")]
    pub n: usize,
    pub d: usize,
    pub qite_cost: Option<f64>,
    pub baseline_cost: Option<f64>,
    /// Empty (NA) when either cost is missing or the baseline is 0.
    pub ar: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    #[serde(rename = "N")]
    pub n: usize,
    pub d: usize,
    pub instances: usize,
    pub na: usize,
    pub mean: Option<f64>,
    /// Sample standard deviation; NA below two values.
    pub std: Option<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct CompareReport {
    pub instances: Vec<ArRow>,
    pub cells: Vec<CellSummary>,
    pub warnings: Vec<String>,
}

pub fn mean_std(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (Some(mean), None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (Some(mean), Some(var.sqrt()))
}

/// Approximation ratios per instance and per `(N, d)` cell.
///
/// Penalized mode compares penalized total costs. Hard mode compares cut
/// costs and only counts QITE solutions that satisfy every capacity.
pub fn compare(summary: &[SummaryRow], baseline: &[BaselineRow], mode: ConstraintMode) -> CompareReport {
    let mut report = CompareReport::default();
    let mut base: BTreeMap<(u64, usize, usize), f64> = BTreeMap::new();
    for b in baseline {
        if base.insert((b.seed, b.n, b.d), b.cost).is_some() {
            report.warnings.push(format!("duplicate baseline row for seed {} N {} d {}", b.seed, b.n, b.d));
        }
    }
    let mut cells: BTreeMap<(usize, usize), (usize, Vec<f64>)> = BTreeMap::new();
    for row in summary {
        let qite = match mode {
            ConstraintMode::Penalized => Some(row.final_cost),
            ConstraintMode::Hard => row.feasible.then_some(row.cut_cost),
        };
        let b = row.seed.and_then(|s| base.get(&(s, row.n, row.d)).copied());
        let label = format!("seed {:?} N {} d {}", row.seed, row.n, row.d);
        if b.is_none() {
            report.warnings.push(format!("no baseline cost for {label}"));
        } else if b == Some(0.0) {
            report.warnings.push(format!("baseline cost is 0 for {label}"));
        }
        if qite.is_none() {
            report.warnings.push(format!("QITE solution infeasible for {label}"));
        }
        let ar = match (qite, b) {
            (Some(q), Some(b)) if b != 0.0 => Some(q / b),
            _ => None,
        };
        let cell = cells.entry((row.n, row.d)).or_default();
        cell.0 += 1;
        cell.1.extend(ar);
        report.instances.push(ArRow { seed: row.seed, n: row.n, d: row.d, qite_cost: qite, baseline_cost: b, ar });
    }
    report.cells = cells
        .into_iter()
        .map(|((n, d), (count, ars))| {
            let (mean, std) = mean_std(&ars);
            CellSummary { n, d, instances: count, na: count - ars.len(), mean, std }
        })
        .collect();
    report
}

/// Table layout: one row per N, one column per d, cells `mean ± std`.
pub fn ar_grid(cells: &[CellSummary]) -> String {
    let ns: Vec<usize> = cells.iter().map(|c| c.n).collect::<std::collections::BTreeSet<_>>().into_iter().collect();
    let ds: Vec<usize> = cells.iter().map(|c| c.d).collect::<std::collections::BTreeSet<_>>().into_iter().collect();
    let mut out = String::from("N");
    for d in &ds {
        let _ = write!(out, ",d={d}");
    }
    out.push('\n');
    for n in &ns {
        let _ = write!(out, "{n}");
        for d in &ds {
            let cell = cells.iter().find(|c| c.n == *n && c.d == *d);
            let text = match cell.map(|c| (c.mean, c.std)) {
                Some((Some(m), Some(s))) => format!("{m:.3} ± {s:.3}"),
                Some((Some(m), None)) => format!("{m:.3}"),
                _ => "NA".to_string(),
            };
            let _ = write!(out, ",{text}");
        }
        out.push('\n');
    }
    out
}

/// Reads `summary.csv` and a baseline CSV (`seed,N,d,cost`) and writes
/// `ar_instances.csv`, `ar_cells.csv` and `ar_grid.csv`.
pub fn cmd_compare(summary_path: &Path, baseline_path: &Path, mode: ConstraintMode, out_dir: &Path) -> Result<CompareReport> {
    let summary: Vec<SummaryRow> = read_csv(summary_path)?;
    let baseline: Vec<BaselineRow> = read_csv(baseline_path)?;
    ensure_dir(out_dir)?;
    let report = compare(&summary, &baseline, mode);
    write_csv(&out_dir.join("ar_instances.csv"), &report.instances)?;
    write_csv(&out_dir.join("ar_cells.csv"), &report.cells)?;
    write_file(&out_dir.join("ar_grid.csv"), &ar_grid(&report.cells))?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramRow {
    #[serde(rename = "N")]
    pub n: usize,
    pub d: usize,
    pub size: usize,
    pub percent_of_n: f64,
    pub count: usize,
    pub over_capacity: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationSummary {
    #[serde(rename = "N")]
    pub n: usize,
    pub d: usize,
    pub c_max: usize,
    pub runs: usize,
    pub partitions: usize,
    pub violating: usize,
    pub violation_fraction: f64,
    pub max_margin: usize,
}

#[derive(Debug, Clone, Default)]
pub struct Histogram {
    pub bins: Vec<HistogramRow>,
    pub violations: Vec<ViolationSummary>,
}

/// Pools the final partition sizes of all records, one bin per vertex count,
/// grouped by `(N, d)`.
pub fn histogram(records: &[RunRecord]) -> Result<Histogram> {
    // (N, d) -> (c_max, runs, size -> partitions of that size)
    type Group = (usize, usize, BTreeMap<usize, usize>);
    let mut groups: BTreeMap<(usize, usize), Group> = BTreeMap::new();
    for rec in records {
        if rec.counts.len() != rec.d {
            return Err(Error::DimensionMismatch { expected: rec.d, got: rec.counts.len() });
        }
        let g = groups.entry((rec.num_vertices, rec.d)).or_insert((rec.c_max, 0, BTreeMap::new()));
        if g.0 != rec.c_max {
            return Err(Error::Format(format!(
                "records for N {} d {} disagree on c_max ({} vs {})",
                rec.num_vertices, rec.d, g.0, rec.c_max
            )));
        }
        g.1 += 1;
        for &c in &rec.counts {
            *g.2.entry(c).or_default() += 1;
        }
    }
    let mut out = Histogram::default();
    for ((n, d), (c_max, runs, bins)) in groups {
        let partitions: usize = bins.values().sum();
        let mut violating = 0;
        let mut max_margin = 0;
        for (&size, &count) in &bins {
            if size > c_max {
                violating += count;
                max_margin = max_margin.max(size - c_max);
            }
            out.bins.push(HistogramRow {
                n,
                d,
                size,
                percent_of_n: 100.0 * size as f64 / n as f64,
                count,
                over_capacity: size > c_max,
            });
        }
        out.violations.push(ViolationSummary {
            n,
            d,
            c_max,
            runs,
            partitions,
            violating,
            violation_fraction: violating as f64 / partitions as f64,
            max_margin,
        });
    }
    Ok(out)
}

pub fn load_record(path: &Path) -> Result<RunRecord> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    RunRecord::from_json(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

/// Writes `histogram.csv` and `violations.csv`.
pub fn cmd_histogram(record_files: &[PathBuf], out_dir: &Path) -> Result<Histogram> {
    let records = record_files.iter().map(|p| load_record(p)).collect::<Result<Vec<_>>>()?;
    let hist = histogram(&records)?;
    ensure_dir(out_dir)?;
    write_csv(&out_dir.join("histogram.csv"), &hist.bins)?;
    write_csv(&out_dir.join("violations.csv"), &hist.violations)?;
    Ok(hist)
}

/// Records which instance and penalty values produced an export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportManifest {
    pub version: u32,
    pub instance: String,
    pub instance_seed: Option<u64>,
    pub mode: ConstraintMode,
    pub num_vertices: usize,
    pub d: usize,
    pub c_max: usize,
    pub lambda1: f64,
    pub lambda2: f64,
    pub num_variables: usize,
    pub lp_file: String,
    pub qubo_file: String,
}

/// Writes `<stem>.<mode>.lp`, `<stem>.<mode>.qubo.json` and
/// `<stem>.<mode>.manifest.json`; returns the manifest.
pub fn cmd_export_qubo(instance_path: &Path, mode: ConstraintMode, out_dir: &Path) -> Result<ExportManifest> {
    let inst = MinDCutInstance::load(instance_path)?;
    ensure_dir(out_dir)?;
    let model = export_qubo(&inst, mode);
    let base = format!("{}.{}", file_stem(instance_path), mode.as_str());
    let lp_file = format!("{base}.lp");
    let qubo_file = format!("{base}.qubo.json");
    write_file(&out_dir.join(&lp_file), &model.to_lp())?;
    write_file(&out_dir.join(&qubo_file), &model.to_json())?;
    let p = inst.penalty();
    let manifest = ExportManifest {
        version: MANIFEST_VERSION,
        instance: instance_path.display().to_string(),
        instance_seed: inst.seed(),
        mode,
        num_vertices: inst.num_vertices(),
        d: inst.num_partitions(),
        c_max: p.c_max,
        lambda1: p.lambda1,
        lambda2: p.lambda2,
        num_variables: model.num_variables(),
        lp_file,
        qubo_file,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serialization cannot fail");
    write_file(&out_dir.join(format!("{base}.manifest.json")), &text)?;
    Ok(manifest)
}

/// Seconds per solver step: the minimum over `repeats` timings of `steps`
/// consecutive steps from the perturbed start.
pub fn measure_step_time(instance: &MinDCutInstance, config: &SolverConfig, steps: usize, repeats: usize) -> Result<f64> {
    config.validate()?;
    if steps < 1 || repeats < 1 {
        return Err(Error::InvalidConfig("steps and repeats must be at least 1".into()));
    }
    let spec = HamiltonianSpec::new(instance);
    let pool = build_pool(instance.num_partitions())?;
    let start =
        ProductState::perturbed_uniform(instance.num_vertices(), instance.num_partitions(), config.init_noise, config.seed)?;
    let mut best = f64::INFINITY;
    for _ in 0..repeats {
        let mut state = start.clone();
        let t = Instant::now();
        for _ in 0..steps {
            std::hint::black_box(step(&spec, &pool, &mut state, config.delta_tau)?);
        }
        best = best.min(t.elapsed().as_secs_f64() / steps as f64);
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    #[serde(rename = "N")]
    pub n: usize,
    pub d: usize,
    pub neighbors: usize,
    pub edges: usize,
    pub seconds_per_step: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingPlan {
    pub n: usize,
    pub neighbors: Vec<usize>,
    pub ds: Vec<usize>,
    pub seed: u64,
    pub steps: usize,
    pub repeats: usize,
}

/// Times one instance per `(neighbors, d)` pair at fixed N and writes the
/// rows to `out` as CSV.
pub fn cmd_bench_scaling(plan: &ScalingPlan, config: &SolverConfig, out: &Path) -> Result<Vec<ScalingRow>> {
    let mut rows = Vec::new();
    for &k in &plan.neighbors {
        for &d in &plan.ds {
            let inst = generate_instance(plan.n, k, d, plan.seed)?;
            let seconds_per_step = measure_step_time(&inst, config, plan.steps, plan.repeats)?;
            rows.push(ScalingRow { n: plan.n, d, neighbors: k, edges: inst.graph().num_edges(), seconds_per_step });
        }
    }
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    write_csv(out, &rows)?;
    Ok(rows)
}

#[derive(Debug, Clone)]
pub struct PlanOutputs {
    pub instances: Vec<PathBuf>,
    pub solve: SolveReport,
    pub compare: Option<CompareReport>,
}

/// Generate, solve and, if the plan names a baseline file, compare.
pub fn run_plan(plan: &ExperimentPlan, jobs: usize, no_timing: bool) -> Result<PlanOutputs> {
    let instances = cmd_generate(plan, &plan.instances_dir())?;
    let opts = SolveOptions { config: plan.solver.clone(), jobs, no_timing };
    let solve = cmd_solve(&instances, &opts, &plan.runs_dir())?;
    let compare = match &plan.baseline {
        Some(b) => Some(cmd_compare(&solve.summary_path, b, ConstraintMode::Penalized, &plan.out_dir.join("compare"))?),
        None => None,
    };
    Ok(PlanOutputs { instances, solve, compare })
}
