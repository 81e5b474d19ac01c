//! `cpmdp`: generate gridworld specs, solve them with the sparse-component
//! or dense solvers, compare solver outputs, run benchmark suites, and
//! render policies.
//!
//! Exit codes: 0 success, 1 usage or comparison failure, 2 infeasible or
//! over a capacity limit, 3 I/O.

use clap::{Args, Parser, Subcommand};
use cpmdp_core::bench::{
    self, measure_run_with_result, table1_suite, MeasureOptions, MeasuredSolve, SuiteSpec,
    TIERS_PER_FAMILY,
};
use cpmdp_core::gridworld::{DEFAULT_NOISE, DEFAULT_STEP_REWARD};
use cpmdp_core::solvers::q_gaps;
use cpmdp_core::transition::{build_models, DEFAULT_DENSE_CAP_BYTES};
use cpmdp_core::{ActionId, Error, GridShape, GridSpec, Result, SolverConfig, SolverKind, StateId};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser)]
#[command(
    name = "cpmdp",
    version,
    about = "Gridworld MDP solvers on a sparse tensor-component transition model"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random gridworld spec file.
    GenSpec(GenSpecArgs),
    /// Solve a spec and write value/policy files.
    Solve(SolveArgs),
    /// Run two solvers on one spec and compare their outputs.
    Compare(CompareArgs),
    /// Run the benchmark suite and write a CSV.
    Bench(BenchArgs),
    /// Render a policy, as an arrow grid for 2-D worlds.
    ShowPolicy(ShowPolicyArgs),
}

#[derive(Args)]
struct SolverOpts {
    /// Discount factor.
    #[arg(long, default_value_t = 0.9)]
    gamma: f64,
    /// Accuracy target; iteration stops once the Bellman residual drops
    /// below epsilon*(1-gamma)/gamma.
    #[arg(long, default_value_t = 1e-4)]
    epsilon: f64,
    /// Iteration cap per solve (and per policy-evaluation pass).
    #[arg(long, default_value_t = 1000)]
    max_iter: usize,
    /// Accuracy target of the inner policy evaluation (policy iteration).
    #[arg(long, default_value_t = 1e-6)]
    eval_epsilon: f64,
    #[arg(long, default_value_t = 1000)]
    eval_max_iter: usize,
}

impl SolverOpts {
    fn config(&self) -> SolverConfig {
        SolverConfig {
            gamma: self.gamma,
            epsilon: self.epsilon,
            max_iter: self.max_iter,
            eval_epsilon: self.eval_epsilon,
            eval_max_iter: self.eval_max_iter,
        }
    }
}

#[derive(Args)]
struct ResourceOpts {
    /// Worker threads inside one solve (env CPMDP_THREADS, default 1).
    #[arg(long)]
    threads: Option<usize>,
    /// Dense model byte cap for tabular solvers (env CPMDP_DENSE_CAP_BYTES,
    /// default 2 GiB).
    #[arg(long)]
    dense_cap_bytes: Option<u64>,
}

fn env_override<T: std::str::FromStr>(name: &str) -> Result<Option<T>> {
    match std::env::var(name) {
        Ok(raw) => raw.trim().parse::<T>().map(Some).map_err(|_| Error::InvalidConfig {
            reason: format!("environment variable {name}={raw} is not a valid value"),
        }),
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(Error::InvalidConfig {
            reason: format!("environment variable {name}: {e}"),
        }),
    }
}

impl ResourceOpts {
    fn threads(&self) -> Result<usize> {
        Ok(match self.threads {
            Some(t) => t,
            None => env_override("CPMDP_THREADS")?.unwrap_or(1),
        })
    }

    fn dense_cap(&self) -> Result<u64> {
        Ok(match self.dense_cap_bytes {
            Some(c) => c,
            None => env_override("CPMDP_DENSE_CAP_BYTES")?.unwrap_or(DEFAULT_DENSE_CAP_BYTES),
        })
    }

    fn measure_options(&self) -> Result<MeasureOptions> {
        Ok(MeasureOptions {
            dense_cap_bytes: self.dense_cap()?,
            threads: self.threads()?,
            solve_only_timing: false,
        })
    }
}

#[derive(Args)]
struct GenSpecArgs {
    /// Axis sizes, comma separated (e.g. 70,70).
    #[arg(long, value_delimiter = ',', required = true)]
    dims: Vec<usize>,
    /// Number of randomly placed obstacle cells.
    #[arg(long, default_value_t = 0)]
    obstacles: usize,
    /// Number of randomly placed terminal cells (rewards alternate +100/-100).
    #[arg(long, default_value_t = 1)]
    terminals: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Probability that the intended move is executed; the remainder spreads
    /// over sideways slips.
    #[arg(long, default_value_t = DEFAULT_NOISE)]
    noise: f64,
    /// Reward collected in every non-terminal state.
    #[arg(long, default_value_t = DEFAULT_STEP_REWARD, allow_negative_numbers = true)]
    step_reward: f64,
    /// Output spec file (TOML).
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    /// Spec file to solve.
    #[arg(long)]
    spec: PathBuf,
    /// One of cp-vi, cp-pi, tab-vi, tab-pi.
    #[arg(long, default_value = "cp-vi")]
    solver: SolverKind,
    #[command(flatten)]
    solver_opts: SolverOpts,
    #[command(flatten)]
    resources: ResourceOpts,
    /// Output prefix; writes <prefix>.values and <prefix>.policy.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    solver_a: SolverKind,
    #[arg(long)]
    solver_b: SolverKind,
    /// Agreement threshold for values and for the Q-gap that turns a policy
    /// disagreement into a true disagreement.
    #[arg(long, default_value_t = 1e-6)]
    tolerance: f64,
    #[arg(long, default_value_t = 0.9)]
    gamma: f64,
    /// Accuracy target for both solver runs; tight by default so solver
    /// error stays well below the tolerance.
    #[arg(long, default_value_t = 1e-8)]
    epsilon: f64,
    #[arg(long, default_value_t = 1e-8)]
    eval_epsilon: f64,
    #[arg(long, default_value_t = 1000)]
    max_iter: usize,
    #[arg(long, default_value_t = 1000)]
    eval_max_iter: usize,
    #[command(flatten)]
    resources: ResourceOpts,
}

#[derive(Args)]
struct BenchArgs {
    /// Suite scale in (0, 1]; 1 reproduces the full protocol sizes.
    #[arg(long, default_value_t = 0.01)]
    scale: f64,
    /// Solvers to run, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = SolverKind::ALL)]
    solvers: Vec<SolverKind>,
    /// Seeds per cell.
    #[arg(long, default_value_t = bench::DEFAULT_SEEDS_PER_CELL)]
    repeats: usize,
    /// Restrict to these dimension families (subset of 2,3,5,7,9).
    #[arg(long, value_delimiter = ',')]
    families: Vec<usize>,
    /// Restrict to these size tiers, 1-based (subset of 1..=9).
    #[arg(long, value_delimiter = ',')]
    tiers: Vec<usize>,
    /// Output CSV path.
    #[arg(long, short)]
    out: PathBuf,
    /// Run suite cells on this many workers; wall times become contended
    /// when above 1.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Time only the solve, excluding model construction.
    #[arg(long)]
    solve_only_timing: bool,
    #[command(flatten)]
    solver_opts: SolverOpts,
    #[command(flatten)]
    resources: ResourceOpts,
}

#[derive(Args)]
struct ShowPolicyArgs {
    #[arg(long)]
    spec: PathBuf,
    /// Solver used when no policy file is given.
    #[arg(long, default_value = "cp-vi")]
    solver: SolverKind,
    /// Render a previously saved .policy file instead of solving.
    #[arg(long)]
    policy: Option<PathBuf>,
    #[command(flatten)]
    solver_opts: SolverOpts,
    #[command(flatten)]
    resources: ResourceOpts,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            let code = if err.is_capacity() {
                2
            } else if err.is_io() {
                3
            } else {
                1
            };
            ExitCode::from(code)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::GenSpec(args) => cmd_gen_spec(args),
        Command::Solve(args) => cmd_solve(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Bench(args) => cmd_bench(args),
        Command::ShowPolicy(args) => cmd_show_policy(args),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn cmd_gen_spec(args: GenSpecArgs) -> Result<ExitCode> {
    let shape = GridShape::new(args.dims)?;
    let drawn = GridSpec::generate_random_spec(shape, args.obstacles, args.terminals, args.seed)?;
    let spec = GridSpec::new(
        drawn.shape().clone(),
        drawn.obstacles().to_vec(),
        drawn.terminals().to_vec(),
        args.step_reward,
        args.noise,
        args.seed,
    )?;
    spec.save(&args.out)?;
    let positive = spec.terminals().iter().filter(|(_, r)| *r > 0.0).count();
    println!(
        "S={} A={} obstacles={} terminals={} (+{} positive, {} negative)",
        spec.num_states(),
        spec.action_count(),
        spec.obstacles().len(),
        spec.terminals().len(),
        positive,
        spec.terminals().len() - positive,
    );
    println!("wrote {}", args.out.display());
    Ok(ExitCode::SUCCESS)
}

/// Runs one solver end to end; infeasible dense models become the capacity
/// error instead of a record.
fn solve_or_err(
    spec: &GridSpec,
    solver: SolverKind,
    cfg: &SolverConfig,
    opts: &MeasureOptions,
) -> Result<MeasuredSolve> {
    let measured = measure_run_with_result(spec, solver, cfg, opts)?;
    if measured.result.is_none() {
        return Err(Error::DenseCapExceeded {
            required_bytes: u64::try_from(measured.record.model_bytes).unwrap_or(u64::MAX),
            cap_bytes: opts.dense_cap_bytes,
        });
    }
    Ok(measured)
}

fn cmd_solve(args: SolveArgs) -> Result<ExitCode> {
    let spec = GridSpec::load(&args.spec)?;
    let cfg = args.solver_opts.config();
    let opts = args.resources.measure_options()?;
    let measured = solve_or_err(&spec, args.solver, &cfg, &opts)?;
    let result = measured.result.expect("feasible by construction");

    let mut values = String::new();
    for (s, v) in result.value.values().iter().enumerate() {
        writeln!(values, "{s} {v:.12}").expect("string write");
    }
    let values_path = args.out.with_extension("values");
    write_text(&values_path, &values)?;

    let mut policy = String::new();
    for s in 0..spec.num_states() {
        if let Some(ActionId(a)) = result.policy.action(StateId(s)) {
            writeln!(policy, "{s} {a}").expect("string write");
        }
    }
    let policy_path = args.out.with_extension("policy");
    write_text(&policy_path, &policy)?;

    println!("{}", bench::csv_row(&measured.record));
    eprintln!(
        "wrote {} and {}",
        values_path.display(),
        policy_path.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_compare(args: CompareArgs) -> Result<ExitCode> {
    let spec = GridSpec::load(&args.spec)?;
    let cfg = SolverConfig {
        gamma: args.gamma,
        epsilon: args.epsilon,
        max_iter: args.max_iter,
        eval_epsilon: args.eval_epsilon,
        eval_max_iter: args.eval_max_iter,
    };
    let opts = args.resources.measure_options()?;
    let a = solve_or_err(&spec, args.solver_a, &cfg, &opts)?;
    let b = solve_or_err(&spec, args.solver_b, &cfg, &opts)?;
    let ra = a.result.expect("feasible by construction");
    let rb = b.result.expect("feasible by construction");

    let sup_diff = ra
        .value
        .values()
        .iter()
        .zip(rb.value.values())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0f64, f64::max);

    let (cm, rm) = build_models(&spec)?;
    let gaps = q_gaps(&cm, &rm, &ra.value, &cfg)?;
    let mut disagreements = 0usize;
    let mut true_disagreements = 0usize;
    for &s in rm.plain_states() {
        if ra.policy.action(s) != rb.policy.action(s) {
            disagreements += 1;
            if gaps[s.0] > args.tolerance {
                true_disagreements += 1;
            }
        }
    }
    let agree = true_disagreements == 0 && sup_diff <= args.tolerance;

    println!(
        "solver_a {} iterations {} wall_time_s {:.6}",
        args.solver_a, ra.iterations, a.record.wall_time_s
    );
    println!(
        "solver_b {} iterations {} wall_time_s {:.6}",
        args.solver_b, rb.iterations, b.record.wall_time_s
    );
    println!("sup_value_diff {sup_diff:.6e}");
    println!("policy_disagreements {disagreements}");
    println!("true_disagreements {true_disagreements}");
    println!("agreement {agree}");
    Ok(if agree {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn cmd_bench(args: BenchArgs) -> Result<ExitCode> {
    if !(args.scale > 0.0 && args.scale <= 1.0) {
        return Err(Error::InvalidConfig {
            reason: format!("--scale {} outside (0, 1]", args.scale),
        });
    }
    if args.repeats == 0 {
        return Err(Error::InvalidConfig {
            reason: "--repeats must be at least 1".into(),
        });
    }
    if args.solvers.is_empty() {
        return Err(Error::InvalidConfig {
            reason: "--solvers must name at least one solver".into(),
        });
    }
    let full = table1_suite(args.scale);
    let families: Vec<usize> = full
        .cells
        .iter()
        .map(|c| c.shape.rank())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    for f in &args.families {
        if !families.contains(f) {
            return Err(Error::InvalidConfig {
                reason: format!("--families {f} is not one of {families:?}"),
            });
        }
    }
    for t in &args.tiers {
        if !(1..=TIERS_PER_FAMILY).contains(t) {
            return Err(Error::InvalidConfig {
                reason: format!("--tiers {t} outside 1..={TIERS_PER_FAMILY}"),
            });
        }
    }

    let seeds: Vec<u64> = (1..=args.repeats as u64).collect();
    let cells = full
        .cells
        .into_iter()
        .enumerate()
        .filter(|(i, cell)| {
            let tier = i % TIERS_PER_FAMILY + 1;
            (args.families.is_empty() || args.families.contains(&cell.shape.rank()))
                && (args.tiers.is_empty() || args.tiers.contains(&tier))
        })
        .map(|(_, mut cell)| {
            cell.seeds = seeds.clone();
            cell
        })
        .collect::<Vec<_>>();
    if cells.is_empty() {
        return Err(Error::InvalidConfig {
            reason: "no suite cells match --families/--tiers".into(),
        });
    }
    let suite = SuiteSpec {
        cells,
        solvers: args.solvers.clone(),
    };

    let cfg = args.solver_opts.config();
    let opts = MeasureOptions {
        dense_cap_bytes: args.resources.dense_cap()?,
        threads: args.resources.threads()?,
        solve_only_timing: args.solve_only_timing,
    };
    if args.workers > 1 {
        eprintln!(
            "note: running cells on {} workers, wall times are contended",
            args.workers
        );
    }
    let started = Instant::now();
    let records = bench::run_suite(&suite, &cfg, &opts, args.workers)?;
    bench::emit_csv(&records, &args.out)?;

    for s in bench::summarize(&records) {
        let dims = s
            .dims
            .iter()
            .map(|d| d.to_string())
            .collect::<Vec<_>>()
            .join("x");
        println!(
            "{} dims={} S={} runs={} infeasible={} wall_s={:.6}+-{:.6} mean_multiplies={:.0}",
            s.solver,
            dims,
            s.num_states,
            s.runs,
            s.infeasible_runs,
            s.mean_wall_time_s,
            s.stddev_wall_time_s,
            s.mean_multiplies,
        );
    }
    eprintln!(
        "wrote {} ({} records in {:.3}s)",
        args.out.display(),
        records.len(),
        started.elapsed().as_secs_f64()
    );
    Ok(ExitCode::SUCCESS)
}

fn parse_policy_file(path: &Path, num_states: usize) -> Result<Vec<Option<usize>>> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut actions = vec![None; num_states];
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let bad = || Error::InvalidSpec {
            reason: format!(
                "{}:{}: expected `state action`, got `{line}`",
                path.display(),
                lineno + 1
            ),
        };
        let state: usize = parts.next().and_then(|t| t.parse().ok()).ok_or_else(bad)?;
        let action: usize = parts.next().and_then(|t| t.parse().ok()).ok_or_else(bad)?;
        if parts.next().is_some() || state >= num_states {
            return Err(bad());
        }
        actions[state] = Some(action);
    }
    Ok(actions)
}

fn cmd_show_policy(args: ShowPolicyArgs) -> Result<ExitCode> {
    let spec = GridSpec::load(&args.spec)?;
    let actions: Vec<Option<usize>> = match &args.policy {
        Some(path) => parse_policy_file(path, spec.num_states())?,
        None => {
            let cfg = args.solver_opts.config();
            let opts = args.resources.measure_options()?;
            let measured = solve_or_err(&spec, args.solver, &cfg, &opts)?;
            let policy = measured.result.expect("feasible by construction").policy;
            (0..spec.num_states())
                .map(|s| policy.action(StateId(s)).map(|a| a.0))
                .collect()
        }
    };

    let shape = spec.shape();
    if shape.rank() == 2 {
        let rows = shape.dims()[0];
        let cols = shape.dims()[1];
        for r in 0..rows {
            let mut line = String::with_capacity(cols);
            for c in 0..cols {
                let s = shape.linear_index(&vec![r, c].into())?;
                let ch = if spec.is_obstacle(s) {
                    '#'
                } else if spec.is_terminal(s) {
                    if spec.terminal_reward(s).unwrap_or(0.0) > 0.0 {
                        '+'
                    } else {
                        '-'
                    }
                } else {
                    match actions[s.0] {
                        Some(0) => '^',
                        Some(1) => 'v',
                        Some(2) => '<',
                        Some(3) => '>',
                        _ => '?',
                    }
                };
                line.push(ch);
            }
            println!("{line}");
        }
    } else {
        for s in 0..spec.num_states() {
            let s = StateId(s);
            if let Some(a) = actions[s.0] {
                println!("{} {} {}", s, shape.multi_index(s)?, ActionId(a));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
