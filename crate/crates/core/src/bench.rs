//! Benchmark harness: grid families, timed runs, CSV emission.
//!
//! The suite sweeps grid families of 2, 3, 5, 7 and 9 dimensions over nine
//! size tiers (roughly 2,000 to 1,200,000 states at full scale) with fixed
//! obstacle/terminal counts per tier and six seeds per cell. A `scale`
//! factor shrinks every tier proportionally so the whole protocol stays
//! runnable on small machines. Dimension sizes are chosen near-equal, so a
//! tier's actual state count is the closest product of equal-or-adjacent
//! axis sizes to the scaled target.
//!
//! Runs are timed end to end (model build plus solve) and recorded together
//! with the solver's multiply count and the deterministic storage
//! accounting, one CSV row per run. Cells whose dense model would exceed
//! the configured cap are recorded as infeasible rather than aborting the
//! suite, while the sparse solvers still complete them.

use crate::error::{Error, Result};
use crate::gridworld::GridSpec;
use crate::solvers::{
    policy_iteration_with_threads, tabular_policy_iteration_with_threads,
    tabular_value_iteration_with_threads, value_iteration_with_threads, SolveResult, SolverConfig,
    SolverKind,
};
use crate::statespace::GridShape;
use crate::transition::{
    build_models, dense_bytes_estimate, dense_entries_estimate, DEFAULT_DENSE_CAP_BYTES,
};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

/// (terminals, obstacles) per size tier.
const TIER_TERMINALS_OBSTACLES: [(usize, usize); 9] = [
    (6, 50),
    (8, 100),
    (10, 200),
    (12, 300),
    (14, 400),
    (16, 500),
    (18, 600),
    (20, 700),
    (22, 800),
];

const FAMILY_DIMS: [usize; 5] = [2, 3, 5, 7, 9];

/// Target state counts per tier, one column per grid family.
const TIER_STATES: [[usize; 9]; 5] = [
    [
        4_900, 10_000, 14_400, 19_600, 22_500, 90_000, 250_000, 640_000, 1_000_000,
    ],
    [
        4_000, 8_000, 12_500, 18_750, 24_000, 60_000, 125_000, 512_000, 1_000_000,
    ],
    [
        3_125, 7_000, 10_000, 12_500, 19_200, 100_000, 200_000, 600_000, 1_200_000,
    ],
    [
        2_048, 5_184, 9_216, 10_368, 18_432, 78_125, 233_280, 605_052, 823_543,
    ],
    [
        3_888, 5_832, 8_748, 9_216, 17_496, 82_944, 196_008, 491_520, 1_000_000,
    ],
];

pub const DEFAULT_SEEDS_PER_CELL: usize = 6;

/// Suite cells come in family-major order, this many size tiers per family.
pub const TIERS_PER_FAMILY: usize = 9;

/// One grid configuration of the suite.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuiteCell {
    pub shape: GridShape,
    pub n_obstacles: usize,
    pub n_terminals: usize,
    pub seeds: Vec<u64>,
}

/// The full benchmark protocol: cells in run order plus the solvers to run
/// on each.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuiteSpec {
    pub cells: Vec<SuiteCell>,
    pub solvers: Vec<SolverKind>,
}

/// Measurement knobs shared by every run.
#[derive(Debug, Clone, Copy)]
pub struct MeasureOptions {
    /// Byte cap above which the dense model is not materialized.
    pub dense_cap_bytes: u64,
    /// Worker threads inside one solve.
    pub threads: usize,
    /// Exclude model construction from the wall time.
    pub solve_only_timing: bool,
}

impl Default for MeasureOptions {
    fn default() -> Self {
        MeasureOptions {
            dense_cap_bytes: DEFAULT_DENSE_CAP_BYTES,
            threads: 1,
            solve_only_timing: false,
        }
    }
}

/// One measured solver run, one CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub solver: SolverKind,
    pub dims: Vec<usize>,
    pub num_states: usize,
    pub actions: usize,
    pub obstacles: usize,
    pub terminals: usize,
    pub seed: u64,
    pub noise: f64,
    pub iterations: usize,
    pub converged: bool,
    pub wall_time_s: f64,
    pub multiplies: u64,
    pub model_components: u128,
    pub model_bytes: u128,
    pub value_bytes: u64,
    pub infeasible: bool,
}

/// Peak value/policy buffer bytes per solver family: value iteration holds
/// two f64 buffers and one u32 policy; policy iteration peaks at four f64
/// buffers and two u32 policies.
fn value_buffer_bytes(kind: SolverKind, num_states: usize) -> u64 {
    let per_state = match kind {
        SolverKind::CpVi | SolverKind::TabVi => 20,
        SolverKind::CpPi | SolverKind::TabPi => 40,
    };
    num_states as u64 * per_state
}

/// Nearest product of equal-or-adjacent axis sizes: `d` axes, each `lo` or
/// `lo+1` with `lo = floor(target^(1/d))`, picking the count of `lo+1` axes
/// whose product lands closest to `target` (fewer on ties). Axes are listed
/// largest first.
fn near_equal_dims(target: usize, d: usize) -> Vec<usize> {
    let target = target.max(2);
    if d == 1 {
        return vec![target];
    }
    let pow = |b: usize, e: usize| -> usize {
        b.checked_pow(e as u32).unwrap_or(usize::MAX)
    };
    let mut lo = (target as f64).powf(1.0 / d as f64).floor() as usize;
    lo = lo.max(1);
    while pow(lo + 1, d) <= target {
        lo += 1;
    }
    while lo > 1 && pow(lo, d) > target {
        lo -= 1;
    }
    let mut best_k = 0;
    let mut best_diff = usize::MAX;
    for k in 0..=d {
        let product = pow(lo + 1, k).saturating_mul(pow(lo, d - k));
        let diff = product.abs_diff(target);
        if diff < best_diff {
            best_diff = diff;
            best_k = k;
        }
    }
    let mut dims = vec![lo + 1; best_k];
    dims.resize(d, lo);
    dims
}

/// The five grid families at nine size tiers each, scaled by `scale` in
/// (0, 1]. Every cell keeps at least one terminal and at least one plain
/// state regardless of scale. Runs all four solvers with
/// [`DEFAULT_SEEDS_PER_CELL`] seeds per cell.
pub fn table1_suite(scale: f64) -> SuiteSpec {
    assert!(
        scale > 0.0 && scale <= 1.0,
        "scale {scale} outside (0, 1]"
    );
    let mut cells = Vec::new();
    for (family, &d) in FAMILY_DIMS.iter().enumerate() {
        for (tier, &(terminals, obstacles)) in TIER_TERMINALS_OBSTACLES.iter().enumerate() {
            let target = ((TIER_STATES[family][tier] as f64 * scale).round() as usize).max(2);
            let dims = near_equal_dims(target, d);
            let shape = GridShape::new(dims).expect("near-equal dims are valid");
            let s = shape.num_states();
            let n_terminals = ((terminals as f64 * scale).round() as usize).clamp(1, s - 1);
            let n_obstacles =
                ((obstacles as f64 * scale).round() as usize).min(s - 1 - n_terminals);
            cells.push(SuiteCell {
                shape,
                n_obstacles,
                n_terminals,
                seeds: (1..=DEFAULT_SEEDS_PER_CELL as u64).collect(),
            });
        }
    }
    SuiteSpec {
        cells,
        solvers: SolverKind::ALL.to_vec(),
    }
}

fn infeasible_record(
    spec: &GridSpec,
    solver: SolverKind,
    components: u128,
    bytes: u128,
) -> RunRecord {
    RunRecord {
        solver,
        dims: spec.shape().dims().to_vec(),
        num_states: spec.num_states(),
        actions: spec.action_count(),
        obstacles: spec.obstacles().len(),
        terminals: spec.terminals().len(),
        seed: spec.seed(),
        noise: spec.noise(),
        iterations: 0,
        converged: false,
        wall_time_s: 0.0,
        multiplies: 0,
        model_components: components,
        model_bytes: bytes,
        value_bytes: 0,
        infeasible: true,
    }
}

/// A [`RunRecord`] together with the solver output it was measured from;
/// `result` is `None` for infeasible runs.
#[derive(Debug)]
pub struct MeasuredSolve {
    pub record: RunRecord,
    pub result: Option<SolveResult>,
}

/// Builds the models for `spec`, runs one solver, and returns the populated
/// record. Wall time covers build plus solve unless `solve_only_timing` is
/// set. A dense model over the byte cap yields an infeasible record instead
/// of an error; `Err` is only returned for an invalid config.
pub fn measure_run(
    spec: &GridSpec,
    solver: SolverKind,
    cfg: &SolverConfig,
    opts: &MeasureOptions,
) -> Result<RunRecord> {
    measure_run_with_result(spec, solver, cfg, opts).map(|m| m.record)
}

/// [`measure_run`] keeping the solved values and policy alongside the record.
pub fn measure_run_with_result(
    spec: &GridSpec,
    solver: SolverKind,
    cfg: &SolverConfig,
    opts: &MeasureOptions,
) -> Result<MeasuredSolve> {
    cfg.validate()?;
    let n = spec.num_states();
    let actions = spec.action_count();
    let dense_components = dense_entries_estimate(n, actions);
    let dense_bytes = dense_bytes_estimate(n, actions);

    let mut started = Instant::now();
    let built = match build_models(spec) {
        Ok(models) => models,
        Err(e) if e.is_capacity() => {
            return Ok(MeasuredSolve {
                record: infeasible_record(spec, solver, dense_components, dense_bytes),
                result: None,
            });
        }
        Err(e) => return Err(e),
    };
    let (cm, rm) = built;

    let tm = if solver.is_tabular() {
        match cm.to_tabular(opts.dense_cap_bytes) {
            Ok(tm) => Some(tm),
            Err(Error::DenseCapExceeded { .. }) => {
                return Ok(MeasuredSolve {
                    record: infeasible_record(spec, solver, dense_components, dense_bytes),
                    result: None,
                });
            }
            Err(e) => return Err(e),
        }
    } else {
        None
    };

    if opts.solve_only_timing {
        started = Instant::now();
    }
    let result: SolveResult = match (solver, &tm) {
        (SolverKind::CpVi, _) => value_iteration_with_threads(&cm, &rm, cfg, opts.threads)?,
        (SolverKind::CpPi, _) => policy_iteration_with_threads(&cm, &rm, cfg, opts.threads)?,
        (SolverKind::TabVi, Some(tm)) => {
            tabular_value_iteration_with_threads(tm, &rm, cfg, opts.threads)?
        }
        (SolverKind::TabPi, Some(tm)) => {
            tabular_policy_iteration_with_threads(tm, &rm, cfg, opts.threads)?
        }
        (SolverKind::TabVi | SolverKind::TabPi, None) => unreachable!("tabular model built above"),
    };
    let wall_time_s = started.elapsed().as_secs_f64();

    let (model_components, model_bytes) = if solver.is_tabular() {
        (dense_components, dense_bytes)
    } else {
        let stats = cm.storage_entries();
        (stats.components as u128, stats.bytes as u128)
    };
    let record = RunRecord {
        solver,
        dims: spec.shape().dims().to_vec(),
        num_states: n,
        actions,
        obstacles: spec.obstacles().len(),
        terminals: spec.terminals().len(),
        seed: spec.seed(),
        noise: spec.noise(),
        iterations: result.iterations,
        converged: result.converged,
        wall_time_s,
        multiplies: result.multiplies,
        model_components,
        model_bytes,
        value_bytes: value_buffer_bytes(solver, n),
        infeasible: false,
    };
    Ok(MeasuredSolve {
        record,
        result: Some(result),
    })
}

/// Runs every (cell, seed, solver) combination in order. `workers > 1`
/// spreads the (cell, seed) jobs over that many threads; record order stays
/// identical, only the timings become contended.
pub fn run_suite(
    suite: &SuiteSpec,
    cfg: &SolverConfig,
    opts: &MeasureOptions,
    workers: usize,
) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    let mut jobs = Vec::new();
    for cell in &suite.cells {
        for &seed in &cell.seeds {
            jobs.push((cell, seed));
        }
    }
    let run_job = |&(cell, seed): &(&SuiteCell, u64)| -> Result<Vec<RunRecord>> {
        let spec = GridSpec::generate_random_spec(
            cell.shape.clone(),
            cell.n_obstacles,
            cell.n_terminals,
            seed,
        )?;
        suite
            .solvers
            .iter()
            .map(|&solver| measure_run(&spec, solver, cfg, opts))
            .collect()
    };

    let workers = workers.max(1).min(jobs.len().max(1));
    if workers == 1 {
        let mut records = Vec::new();
        for job in &jobs {
            records.extend(run_job(job)?);
        }
        return Ok(records);
    }

    let slots: Mutex<Vec<Option<Result<Vec<RunRecord>>>>> =
        Mutex::new((0..jobs.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= jobs.len() {
                    break;
                }
                let out = run_job(&jobs[i]);
                slots.lock().expect("suite worker poisoned the slot lock")[i] = Some(out);
            });
        }
    });
    let mut records = Vec::new();
    for slot in slots.into_inner().expect("suite worker poisoned the slot lock") {
        records.extend(slot.expect("every job claimed exactly once")?);
    }
    Ok(records)
}

/// Six significant digits, plain decimal notation.
fn fmt_g6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    let exp = x.abs().log10().floor() as i32;
    let decimals = (5 - exp).max(0) as usize;
    format!("{x:.decimals$}")
}

pub const CSV_HEADER: &str = "solver,D,S,A,obstacles,terminals,seed,noise,iterations,converged,\
                              wall_time_s,multiplies,model_components,model_bytes,value_bytes,infeasible";

/// One CSV row (no newline) in [`CSV_HEADER`] column order.
pub fn csv_row(r: &RunRecord) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        r.solver,
        r.dims.len(),
        r.num_states,
        r.actions,
        r.obstacles,
        r.terminals,
        r.seed,
        fmt_g6(r.noise),
        r.iterations,
        r.converged,
        fmt_g6(r.wall_time_s),
        r.multiplies,
        r.model_components,
        r.model_bytes,
        r.value_bytes,
        r.infeasible,
    )
}

/// Renders records as CSV, header first, in input order.
pub fn csv_string(records: &[RunRecord]) -> String {
    let mut out = String::new();
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&csv_row(r));
        out.push('\n');
    }
    out
}

pub fn emit_csv(records: &[RunRecord], path: &Path) -> Result<()> {
    std::fs::write(path, csv_string(records)).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Per-cell aggregate over seeds: mean and sample standard deviation of the
/// wall time, plus run counts.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub solver: SolverKind,
    pub dims: Vec<usize>,
    pub num_states: usize,
    pub runs: usize,
    pub infeasible_runs: usize,
    pub mean_wall_time_s: f64,
    pub stddev_wall_time_s: f64,
    pub mean_multiplies: f64,
}

/// Groups feasible records by (solver, grid configuration) in first-seen
/// order and aggregates over their seeds.
pub fn summarize(records: &[RunRecord]) -> Vec<CellSummary> {
    let mut order: Vec<(SolverKind, Vec<usize>, usize, usize)> = Vec::new();
    let mut buckets: Vec<Vec<&RunRecord>> = Vec::new();
    for r in records {
        let key = (r.solver, r.dims.clone(), r.obstacles, r.terminals);
        match order.iter().position(|k| *k == key) {
            Some(i) => buckets[i].push(r),
            None => {
                order.push(key);
                buckets.push(vec![r]);
            }
        }
    }
    order
        .into_iter()
        .zip(buckets)
        .map(|((solver, dims, _, _), bucket)| {
            let feasible: Vec<&&RunRecord> = bucket.iter().filter(|r| !r.infeasible).collect();
            let n = feasible.len();
            let mean = |f: &dyn Fn(&RunRecord) -> f64| -> f64 {
                if n == 0 {
                    0.0
                } else {
                    feasible.iter().map(|r| f(r)).sum::<f64>() / n as f64
                }
            };
            let mean_wall = mean(&|r| r.wall_time_s);
            let stddev_wall = if n >= 2 {
                let ss: f64 = feasible
                    .iter()
                    .map(|r| (r.wall_time_s - mean_wall).powi(2))
                    .sum();
                (ss / (n - 1) as f64).sqrt()
            } else {
                0.0
            };
            CellSummary {
                solver,
                num_states: bucket[0].num_states,
                dims,
                runs: n,
                infeasible_runs: bucket.len() - n,
                mean_wall_time_s: mean_wall,
                stddev_wall_time_s: stddev_wall,
                mean_multiplies: mean(&|r| r.multiplies as f64),
            }
        })
        .collect()
}
