//! Value iteration and policy iteration on both transition representations.
//!
//! All four solvers run the same synchronous (Jacobi) backup
//!
//! ```text
//! V'(s) = R(s) + gamma * max_a sum_{s'} P(s'|s,a) V(s')
//! ```
//!
//! over the plain states only; terminal values stay pinned at their reward
//! and obstacles stay at 0. The sparse and dense variants share one generic
//! kernel that accumulates each state's sum in ascending successor order, so
//! a component-model solve and a tabular solve produce bit-identical value
//! trajectories and the residual traces are directly comparable.
//!
//! Backups within a sweep are independent, so sweeps can be chunked across
//! threads; chunking never changes results because no cross-state reduction
//! exists and per-state sums keep their fixed order.

use crate::error::{Error, Result};
use crate::gridworld::ActionId;
use crate::statespace::StateId;
use crate::transition::{ComponentModel, RewardModel, TabularModel};
use nalgebra::{DMatrix, DVector};
use std::fmt;
use std::str::FromStr;

/// Largest plain-state count accepted by [`policy_evaluation_exact`].
pub const EXACT_EVAL_MAX_STATES: usize = 4096;

const NO_ACTION: u32 = u32::MAX;

/// Discount, tolerances, and iteration caps shared by all solvers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Discount factor, in `[0, 1)`.
    pub gamma: f64,
    /// Target accuracy of the returned values; the iteration stops once the
    /// max-norm residual drops below `epsilon * (1 - gamma) / gamma`.
    pub epsilon: f64,
    pub max_iter: usize,
    /// Accuracy of the inner policy-evaluation loop of policy iteration.
    pub eval_epsilon: f64,
    pub eval_max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            gamma: 0.9,
            epsilon: 1e-4,
            max_iter: 1000,
            eval_epsilon: 1e-6,
            eval_max_iter: 1000,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::InvalidConfig {
                reason: format!("gamma {} outside [0, 1)", self.gamma),
            });
        }
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if !positive(self.epsilon) || !positive(self.eval_epsilon) {
            return Err(Error::InvalidConfig {
                reason: "tolerances must be positive and finite".into(),
            });
        }
        if self.max_iter == 0 || self.eval_max_iter == 0 {
            return Err(Error::InvalidConfig {
                reason: "iteration caps must be at least 1".into(),
            });
        }
        Ok(())
    }

    /// Residual threshold guaranteeing epsilon-accurate values.
    fn threshold(&self) -> f64 {
        scaled_threshold(self.epsilon, self.gamma)
    }

    fn eval_threshold(&self) -> f64 {
        scaled_threshold(self.eval_epsilon, self.gamma)
    }
}

fn scaled_threshold(epsilon: f64, gamma: f64) -> f64 {
    if gamma == 0.0 {
        epsilon
    } else {
        epsilon * (1.0 - gamma) / gamma
    }
}

/// State values, length S, with terminals pinned to their reward and
/// obstacles at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction {
    values: Vec<f64>,
}

impl ValueFunction {
    /// The canonical starting point `V0 = r`.
    pub fn from_rewards(rm: &RewardModel) -> Self {
        ValueFunction {
            values: rm.rewards().to_vec(),
        }
    }

    /// Wraps raw values; solver entry points re-pin terminals and obstacles.
    pub fn from_values(values: Vec<f64>) -> Self {
        ValueFunction { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, s: StateId) -> f64 {
        self.values[s.0]
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// One action per plain state; obstacles and terminals carry no action.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Policy {
    actions: Vec<u32>,
}

impl Policy {
    /// The all-lowest-index policy, the fixed starting point of policy
    /// iteration.
    pub fn initial(rm: &RewardModel) -> Self {
        let mut actions = vec![NO_ACTION; rm.num_states()];
        for &s in rm.plain_states() {
            actions[s.0] = 0;
        }
        Policy { actions }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn action(&self, s: StateId) -> Option<ActionId> {
        match self.actions[s.0] {
            NO_ACTION => None,
            a => Some(ActionId(a as usize)),
        }
    }

    fn raw(&self) -> &[u32] {
        &self.actions
    }

    fn from_raw(actions: Vec<u32>) -> Self {
        Policy { actions }
    }

    fn assert_valid(&self, rm: &RewardModel, actions: usize) {
        assert_eq!(self.actions.len(), rm.num_states(), "policy length mismatch");
        for &s in rm.plain_states() {
            let a = self.actions[s.0];
            assert!(
                a != NO_ACTION && (a as usize) < actions,
                "policy has no valid action for plain state {s}"
            );
        }
    }
}

/// Outcome of a full solve.
#[derive(Debug, Clone)]
pub struct SolveResult {
    pub value: ValueFunction,
    pub policy: Policy,
    /// Backup sweeps for value iteration; outer rounds for policy iteration.
    pub iterations: usize,
    /// Max-norm change per iteration (per outer round for policy iteration).
    pub residual_trace: Vec<f64>,
    /// Every probability-times-value multiply performed.
    pub multiplies: u64,
    /// Value iteration: residual under threshold. Policy iteration: policy
    /// stable before the round cap.
    pub converged: bool,
    /// Multiplies spent in policy-evaluation sweeps (policy iteration only).
    pub multiplies_eval: u64,
    /// Multiplies spent in improvement/backup argmax passes (policy
    /// iteration only).
    pub multiplies_improve: u64,
    /// Inner evaluation residual traces, one per outer round (policy
    /// iteration only).
    pub eval_traces: Vec<Vec<f64>>,
}

/// Outcome of one policy-evaluation run.
#[derive(Debug, Clone)]
pub struct EvalResult {
    pub value: ValueFunction,
    pub iterations: usize,
    pub residual_trace: Vec<f64>,
    pub converged: bool,
    pub multiplies: u64,
}

/// Solver selector used by the benchmark harness and the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SolverKind {
    CpVi,
    CpPi,
    TabVi,
    TabPi,
}

impl SolverKind {
    pub const ALL: [SolverKind; 4] = [
        SolverKind::CpVi,
        SolverKind::CpPi,
        SolverKind::TabVi,
        SolverKind::TabPi,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SolverKind::CpVi => "cp-vi",
            SolverKind::CpPi => "cp-pi",
            SolverKind::TabVi => "tab-vi",
            SolverKind::TabPi => "tab-pi",
        }
    }

    pub fn is_tabular(self) -> bool {
        matches!(self, SolverKind::TabVi | SolverKind::TabPi)
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SolverKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "cp-vi" => Ok(SolverKind::CpVi),
            "cp-pi" => Ok(SolverKind::CpPi),
            "tab-vi" => Ok(SolverKind::TabVi),
            "tab-pi" => Ok(SolverKind::TabPi),
            other => Err(format!(
                "unknown solver '{other}' (expected cp-vi, cp-pi, tab-vi or tab-pi)"
            )),
        }
    }
}

/// The two transition representations behind one backup interface.
trait Backend: Sync {
    /// Σ p·v[s'] for one (action, state) row, plus the multiplies used.
    fn expected(&self, a: usize, s: usize, v: &[f64]) -> (f64, u64);
    fn action_count(&self) -> usize;
    fn tally(&self, n: u64);
}

impl Backend for ComponentModel {
    #[inline]
    fn expected(&self, a: usize, s: usize, v: &[f64]) -> (f64, u64) {
        let row = self.row(a, s);
        let mut acc = 0.0;
        for e in row {
            acc += e.p * v[e.next as usize];
        }
        (acc, row.len() as u64)
    }

    fn action_count(&self) -> usize {
        ComponentModel::action_count(self)
    }

    fn tally(&self, n: u64) {
        self.add_multiplies(n);
    }
}

impl Backend for TabularModel {
    #[inline]
    fn expected(&self, a: usize, s: usize, v: &[f64]) -> (f64, u64) {
        let row = self.row_raw(a, s);
        let mut acc = 0.0;
        for (p, x) in row.iter().zip(v) {
            acc += p * x;
        }
        (acc, row.len() as u64)
    }

    fn action_count(&self) -> usize {
        TabularModel::action_count(self)
    }

    fn tally(&self, n: u64) {
        self.add_multiplies(n);
    }
}

/// Copies `v`, forcing the pinned entries (terminal reward, obstacle 0).
fn pinned(v: &[f64], rm: &RewardModel) -> Vec<f64> {
    assert_eq!(v.len(), rm.num_states(), "value vector length mismatch");
    let mut out = v.to_vec();
    for (s, slot) in out.iter_mut().enumerate() {
        let s = StateId(s);
        if rm.is_terminal(s) {
            *slot = rm.reward(s);
        } else if rm.is_obstacle(s) {
            *slot = 0.0;
        }
    }
    out
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

fn run_chunk<F>(
    states: &[StateId],
    v_out: &mut [f64],
    pol_out: &mut [u32],
    base: usize,
    per_state: &F,
) -> u64
where
    F: Fn(usize) -> (f64, u32, u64),
{
    let mut count = 0;
    for &s in states {
        let (val, act, c) = per_state(s.0);
        v_out[s.0 - base] = val;
        pol_out[s.0 - base] = act;
        count += c;
    }
    count
}

/// Runs `per_state` over every plain state, writing values and actions in
/// place. With more than one thread the plain states are chunked into
/// contiguous ranges; per-state work is independent, so the outcome is
/// identical for any thread count.
fn sweep<F>(
    rm: &RewardModel,
    v_out: &mut [f64],
    pol_out: &mut [u32],
    threads: usize,
    per_state: &F,
) -> u64
where
    F: Fn(usize) -> (f64, u32, u64) + Sync,
{
    let plain = rm.plain_states();
    let threads = threads.max(1).min(plain.len().max(1));
    if threads == 1 {
        return run_chunk(plain, v_out, pol_out, 0, per_state);
    }
    let chunk_len = plain.len().div_ceil(threads);
    let chunks: Vec<&[StateId]> = plain.chunks(chunk_len).collect();
    let mut total = 0u64;
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        let mut v_rest = v_out;
        let mut pol_rest = pol_out;
        let mut base = 0usize;
        for (i, &chunk) in chunks.iter().enumerate() {
            let end = if i + 1 < chunks.len() {
                chunks[i + 1][0].0
            } else {
                base + v_rest.len()
            };
            let (v_chunk, v_tail) = v_rest.split_at_mut(end - base);
            let (pol_chunk, pol_tail) = pol_rest.split_at_mut(end - base);
            let my_base = base;
            handles.push(scope.spawn(move || run_chunk(chunk, v_chunk, pol_chunk, my_base, per_state)));
            v_rest = v_tail;
            pol_rest = pol_tail;
            base = end;
        }
        for h in handles {
            total += h.join().expect("sweep worker panicked");
        }
    });
    total
}

/// One greedy Bellman backup of every plain state, Jacobi semantics: all
/// reads from `v`, lowest action index wins ties. Returns the backed-up
/// values and the argmax policy.
pub fn bellman_backup(
    cm: &ComponentModel,
    rm: &RewardModel,
    v: &ValueFunction,
    cfg: &SolverConfig,
) -> Result<(ValueFunction, Policy)> {
    cfg.validate()?;
    let v_in = pinned(v.values(), rm);
    let mut v_out = v_in.clone();
    let mut pol_out = Policy::initial(rm).actions;
    let count = sweep(rm, &mut v_out, &mut pol_out, 1, &greedy_state(cm, rm, cfg.gamma, &v_in));
    cm.tally(count);
    Ok((ValueFunction { values: v_out }, Policy::from_raw(pol_out)))
}

/// Per-state greedy backup: value and argmax over the gamma-scaled
/// expectation bracket.
fn greedy_state<'a, B: Backend>(
    backend: &'a B,
    rm: &'a RewardModel,
    gamma: f64,
    v_in: &'a [f64],
) -> impl Fn(usize) -> (f64, u32, u64) + Sync + 'a {
    let actions = backend.action_count();
    let rewards = rm.rewards();
    move |s: usize| {
        let mut best_q = f64::NEG_INFINITY;
        let mut best_a = 0u32;
        let mut count = 0u64;
        for a in 0..actions {
            let (exp, c) = backend.expected(a, s, v_in);
            count += c;
            let q = gamma * exp;
            if q > best_q {
                best_q = q;
                best_a = a as u32;
            }
        }
        (rewards[s] + best_q, best_a, count)
    }
}

/// Per-state fixed-policy backup.
fn policy_state<'a, B: Backend>(
    backend: &'a B,
    rm: &'a RewardModel,
    gamma: f64,
    v_in: &'a [f64],
    policy: &'a [u32],
) -> impl Fn(usize) -> (f64, u32, u64) + Sync + 'a {
    let rewards = rm.rewards();
    move |s: usize| {
        let a = policy[s];
        let (exp, c) = backend.expected(a as usize, s, v_in);
        (rewards[s] + gamma * exp, a, c)
    }
}

fn vi_generic<B: Backend>(
    backend: &B,
    rm: &RewardModel,
    cfg: &SolverConfig,
    threads: usize,
) -> Result<SolveResult> {
    cfg.validate()?;
    let threshold = cfg.threshold();
    let mut v_cur = pinned(rm.rewards(), rm);
    let mut v_next = v_cur.clone();
    let mut pol = Policy::initial(rm).actions;
    let mut trace = Vec::new();
    let mut multiplies = 0u64;
    let mut converged = false;
    while trace.len() < cfg.max_iter {
        let count = sweep(
            rm,
            &mut v_next,
            &mut pol,
            threads,
            &greedy_state(backend, rm, cfg.gamma, &v_cur),
        );
        backend.tally(count);
        multiplies += count;
        let residual = max_abs_diff(&v_cur, &v_next);
        trace.push(residual);
        std::mem::swap(&mut v_cur, &mut v_next);
        if residual < threshold {
            converged = true;
            break;
        }
    }
    Ok(SolveResult {
        value: ValueFunction { values: v_cur },
        policy: Policy::from_raw(pol),
        iterations: trace.len(),
        residual_trace: trace,
        multiplies,
        converged,
        multiplies_eval: 0,
        multiplies_improve: 0,
        eval_traces: Vec::new(),
    })
}

fn eval_generic<B: Backend>(
    backend: &B,
    rm: &RewardModel,
    policy: &Policy,
    v0: &ValueFunction,
    cfg: &SolverConfig,
    threads: usize,
) -> Result<EvalResult> {
    cfg.validate()?;
    policy.assert_valid(rm, backend.action_count());
    let threshold = cfg.eval_threshold();
    let mut v_cur = pinned(v0.values(), rm);
    let mut v_next = v_cur.clone();
    let mut pol_scratch = policy.raw().to_vec();
    let mut trace = Vec::new();
    let mut multiplies = 0u64;
    let mut converged = false;
    while trace.len() < cfg.eval_max_iter {
        let count = sweep(
            rm,
            &mut v_next,
            &mut pol_scratch,
            threads,
            &policy_state(backend, rm, cfg.gamma, &v_cur, policy.raw()),
        );
        backend.tally(count);
        multiplies += count;
        let residual = max_abs_diff(&v_cur, &v_next);
        trace.push(residual);
        std::mem::swap(&mut v_cur, &mut v_next);
        if residual < threshold {
            converged = true;
            break;
        }
    }
    Ok(EvalResult {
        value: ValueFunction { values: v_cur },
        iterations: trace.len(),
        residual_trace: trace,
        converged,
        multiplies,
    })
}

fn improvement_generic<B: Backend>(
    backend: &B,
    rm: &RewardModel,
    v: &ValueFunction,
    cfg: &SolverConfig,
    threads: usize,
) -> Result<(Policy, u64)> {
    cfg.validate()?;
    let v_in = pinned(v.values(), rm);
    let mut v_scratch = v_in.clone();
    let mut pol = Policy::initial(rm).actions;
    let count = sweep(
        rm,
        &mut v_scratch,
        &mut pol,
        threads,
        &greedy_state(backend, rm, cfg.gamma, &v_in),
    );
    backend.tally(count);
    Ok((Policy::from_raw(pol), count))
}

fn pi_generic<B: Backend>(
    backend: &B,
    rm: &RewardModel,
    cfg: &SolverConfig,
    threads: usize,
) -> Result<SolveResult> {
    cfg.validate()?;
    let mut policy = Policy::initial(rm);
    let mut value = ValueFunction::from_rewards(rm);
    let mut outer_trace = Vec::new();
    let mut eval_traces = Vec::new();
    let mut multiplies_eval = 0u64;
    let mut multiplies_improve = 0u64;
    let mut converged = false;
    while outer_trace.len() < cfg.max_iter {
        let prev = value.values.clone();
        let eval = eval_generic(backend, rm, &policy, &value, cfg, threads)?;
        multiplies_eval += eval.multiplies;
        eval_traces.push(eval.residual_trace);
        value = eval.value;
        outer_trace.push(max_abs_diff(&prev, value.values()));
        let (improved, count) = improvement_generic(backend, rm, &value, cfg, threads)?;
        multiplies_improve += count;
        if improved == policy {
            converged = true;
            break;
        }
        policy = improved;
    }
    Ok(SolveResult {
        value,
        policy,
        iterations: outer_trace.len(),
        residual_trace: outer_trace,
        multiplies: multiplies_eval + multiplies_improve,
        converged,
        multiplies_eval,
        multiplies_improve,
        eval_traces,
    })
}

/// Value iteration on the component model (CP-VI).
pub fn value_iteration(
    cm: &ComponentModel,
    rm: &RewardModel,
    cfg: &SolverConfig,
) -> Result<SolveResult> {
    vi_generic(cm, rm, cfg, 1)
}

pub fn value_iteration_with_threads(
    cm: &ComponentModel,
    rm: &RewardModel,
    cfg: &SolverConfig,
    threads: usize,
) -> Result<SolveResult> {
    vi_generic(cm, rm, cfg, threads)
}

/// Policy iteration on the component model (CP-PI): iterative evaluation on
/// the components alternating with greedy improvement, starting from the
/// lowest-index policy, until the policy stops changing.
pub fn policy_iteration(
    cm: &ComponentModel,
    rm: &RewardModel,
    cfg: &SolverConfig,
) -> Result<SolveResult> {
    pi_generic(cm, rm, cfg, 1)
}

pub fn policy_iteration_with_threads(
    cm: &ComponentModel,
    rm: &RewardModel,
    cfg: &SolverConfig,
    threads: usize,
) -> Result<SolveResult> {
    pi_generic(cm, rm, cfg, threads)
}

/// Fixed-policy Jacobi evaluation from `V0 = r`.
pub fn policy_evaluation_iterative(
    cm: &ComponentModel,
    rm: &RewardModel,
    policy: &Policy,
    cfg: &SolverConfig,
) -> Result<EvalResult> {
    eval_generic(cm, rm, policy, &ValueFunction::from_rewards(rm), cfg, 1)
}

/// Fixed-policy Jacobi evaluation warm-started from `v0`.
pub fn policy_evaluation_iterative_from(
    cm: &ComponentModel,
    rm: &RewardModel,
    policy: &Policy,
    v0: &ValueFunction,
    cfg: &SolverConfig,
) -> Result<EvalResult> {
    eval_generic(cm, rm, policy, v0, cfg, 1)
}

/// Greedy policy with respect to `v`, lowest action index on ties.
pub fn policy_improvement(
    cm: &ComponentModel,
    rm: &RewardModel,
    v: &ValueFunction,
    cfg: &SolverConfig,
) -> Result<Policy> {
    improvement_generic(cm, rm, v, cfg, 1).map(|(p, _)| p)
}

/// Value iteration on the dense model.
pub fn tabular_value_iteration(
    tm: &TabularModel,
    rm: &RewardModel,
    cfg: &SolverConfig,
) -> Result<SolveResult> {
    vi_generic(tm, rm, cfg, 1)
}

pub fn tabular_value_iteration_with_threads(
    tm: &TabularModel,
    rm: &RewardModel,
    cfg: &SolverConfig,
    threads: usize,
) -> Result<SolveResult> {
    vi_generic(tm, rm, cfg, threads)
}

/// Policy iteration on the dense model.
pub fn tabular_policy_iteration(
    tm: &TabularModel,
    rm: &RewardModel,
    cfg: &SolverConfig,
) -> Result<SolveResult> {
    pi_generic(tm, rm, cfg, 1)
}

pub fn tabular_policy_iteration_with_threads(
    tm: &TabularModel,
    rm: &RewardModel,
    cfg: &SolverConfig,
    threads: usize,
) -> Result<SolveResult> {
    pi_generic(tm, rm, cfg, threads)
}

/// Exact fixed-policy values by direct linear solve of
/// `(I - gamma * P_pi) V = r` over the plain states, terminals as boundary
/// values. Test oracle for the iterative evaluation.
pub fn policy_evaluation_exact(
    tm: &TabularModel,
    rm: &RewardModel,
    policy: &Policy,
    cfg: &SolverConfig,
) -> Result<ValueFunction> {
    cfg.validate()?;
    policy.assert_valid(rm, tm.action_count());
    let plain = rm.plain_states();
    let m = plain.len();
    if m > EXACT_EVAL_MAX_STATES {
        return Err(Error::ExactEvalCapExceeded {
            states: m,
            cap: EXACT_EVAL_MAX_STATES,
        });
    }
    let mut values = pinned(rm.rewards(), rm);
    if m == 0 {
        return Ok(ValueFunction { values });
    }
    let mut col_of = vec![usize::MAX; rm.num_states()];
    for (i, &s) in plain.iter().enumerate() {
        col_of[s.0] = i;
    }
    let mut a = DMatrix::<f64>::identity(m, m);
    let mut b = DVector::<f64>::zeros(m);
    for (i, &s) in plain.iter().enumerate() {
        let act = policy.action(s).expect("validated above");
        let row = tm.row(act, s);
        let mut boundary = 0.0;
        for (j, &p) in row.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let t = StateId(j);
            if rm.is_terminal(t) {
                boundary += p * rm.reward(t);
            } else if !rm.is_obstacle(t) {
                a[(i, col_of[j])] -= cfg.gamma * p;
            }
        }
        b[i] = rm.reward(s) + cfg.gamma * boundary;
    }
    let solution = a.lu().solve(&b).ok_or(Error::SingularSystem)?;
    for (i, &s) in plain.iter().enumerate() {
        values[s.0] = solution[i];
    }
    Ok(ValueFunction { values })
}

/// Per-state gap between the best and second-best gamma-scaled action value
/// under `v`. Infinite for non-plain states and single-action models; a gap
/// of zero means the greedy action is not unique.
pub fn q_gaps(
    cm: &ComponentModel,
    rm: &RewardModel,
    v: &ValueFunction,
    cfg: &SolverConfig,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    let v_in = pinned(v.values(), rm);
    let actions = cm.action_count();
    let mut gaps = vec![f64::INFINITY; rm.num_states()];
    let mut count = 0u64;
    for &s in rm.plain_states() {
        let mut best = f64::NEG_INFINITY;
        let mut second = f64::NEG_INFINITY;
        for a in 0..actions {
            let (exp, c) = Backend::expected(cm, a, s.0, &v_in);
            count += c;
            let q = cfg.gamma * exp;
            if q > best {
                second = best;
                best = q;
            } else if q > second {
                second = q;
            }
        }
        gaps[s.0] = if second == f64::NEG_INFINITY {
            f64::INFINITY
        } else {
            best - second
        };
    }
    cm.tally(count);
    Ok(gaps)
}
