//! Transition-model storage: sparse rank-one components and the dense baseline.
//!
//! [`ComponentModel`] keeps, for every action, the positive-probability
//! transitions as (state, successor, probability) components in a compact
//! offsets-plus-entries layout. A gridworld pair (s, a) has at most 2D−1
//! successors, so the component count grows linearly with the state count
//! while the dense per-action matrices of [`TabularModel`] grow with its
//! square. Both models feed the same solver kernels and both count every
//! probability-times-value multiply they perform, which is what the solver
//! cost comparisons are built on.

use crate::error::{Error, Result};
use crate::gridworld::{ActionId, GridSpec};
use crate::statespace::{GridShape, StateId};
use std::io::{self, Write};
use std::sync::atomic::{AtomicU64, Ordering};

/// Default accounting cap for dense-model materialization: 2 GiB.
pub const DEFAULT_DENSE_CAP_BYTES: u64 = 2 * 1024 * 1024 * 1024;

/// One positive-probability transition under a fixed action.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TensorComponent {
    pub s: StateId,
    pub s_next: StateId,
    pub p: f64,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Entry {
    pub(crate) next: u32,
    pub(crate) p: f64,
}

#[derive(Debug)]
struct ActionTable {
    offsets: Vec<usize>,
    entries: Vec<Entry>,
}

/// Sparse transition model: per action, per-state component groups stored
/// contiguously with an offset array. Obstacle rows are empty; terminal rows
/// hold their absorbing self-loop.
#[derive(Debug)]
pub struct ComponentModel {
    shape: GridShape,
    actions: usize,
    tables: Vec<ActionTable>,
    active_states: Vec<StateId>,
    multiplies: AtomicU64,
}

/// Rewards plus the state-kind masks the solvers iterate with.
#[derive(Debug, Clone)]
pub struct RewardModel {
    rewards: Vec<f64>,
    terminal_mask: Vec<bool>,
    obstacle_mask: Vec<bool>,
    plain_states: Vec<StateId>,
}

/// Dense per-action transition matrices; the baseline representation.
#[derive(Debug)]
pub struct TabularModel {
    num_states: usize,
    actions: usize,
    mats: Vec<Vec<f64>>,
    multiplies: AtomicU64,
}

/// Deterministic storage accounting for a [`ComponentModel`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StorageStats {
    /// Total component count over all actions and states.
    pub components: usize,
    /// Estimated bytes: per component two indices plus an 8-byte real, plus
    /// the per-action offset arrays.
    pub bytes: u64,
    /// Declared index width in bytes (smallest of 1/2/4/8 covering S).
    pub index_width: usize,
    /// Declared offset width in bytes (smallest covering the entry count).
    pub offset_width: usize,
}

/// Smallest of 1/2/4/8 bytes able to address `count` distinct values.
fn byte_width(count: usize) -> usize {
    if count <= 1 << 8 {
        1
    } else if count <= 1 << 16 {
        2
    } else if count as u128 <= 1u128 << 32 {
        4
    } else {
        8
    }
}

/// Entry count of the dense representation: S^2 per action.
pub fn dense_entries_estimate(num_states: usize, actions: usize) -> u128 {
    (num_states as u128) * (num_states as u128) * (actions as u128)
}

/// Byte accounting for the dense representation (8-byte reals).
pub fn dense_bytes_estimate(num_states: usize, actions: usize) -> u128 {
    dense_entries_estimate(num_states, actions) * 8
}

/// Builds the component and reward models for a spec.
///
/// Component rows reproduce [`GridSpec::transition_distribution`] exactly;
/// rewards are the step reward on plain states, the terminal reward on
/// terminals, and 0 on obstacles.
pub fn build_models(spec: &GridSpec) -> Result<(ComponentModel, RewardModel)> {
    let n = spec.num_states();
    if n > u32::MAX as usize {
        return Err(Error::ModelTooLarge {
            states: n,
            max: u32::MAX as usize,
        });
    }
    let actions = spec.action_count();
    let mut tables = Vec::with_capacity(actions);
    for a in 0..actions {
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0usize);
        let mut entries = Vec::new();
        for s in spec.shape().states() {
            if !spec.is_obstacle(s) {
                for (dest, p) in spec.transition_distribution(s, ActionId(a))? {
                    entries.push(Entry {
                        next: dest.0 as u32,
                        p,
                    });
                }
            }
            offsets.push(entries.len());
        }
        entries.shrink_to_fit();
        tables.push(ActionTable { offsets, entries });
    }
    let active_states = spec
        .shape()
        .states()
        .filter(|&s| !spec.is_obstacle(s))
        .collect();

    let mut rewards = vec![0.0; n];
    let mut terminal_mask = vec![false; n];
    let mut obstacle_mask = vec![false; n];
    let mut plain_states = Vec::new();
    for s in spec.shape().states() {
        if spec.is_obstacle(s) {
            obstacle_mask[s.0] = true;
        } else if let Some(r) = spec.terminal_reward(s) {
            terminal_mask[s.0] = true;
            rewards[s.0] = r;
        } else {
            rewards[s.0] = spec.step_reward();
            plain_states.push(s);
        }
    }

    Ok((
        ComponentModel {
            shape: spec.shape().clone(),
            actions,
            tables,
            active_states,
            multiplies: AtomicU64::new(0),
        },
        RewardModel {
            rewards,
            terminal_mask,
            obstacle_mask,
            plain_states,
        },
    ))
}

impl ComponentModel {
    pub fn shape(&self) -> &GridShape {
        &self.shape
    }

    pub fn num_states(&self) -> usize {
        self.shape.num_states()
    }

    pub fn action_count(&self) -> usize {
        self.actions
    }

    /// Non-obstacle states, ascending.
    pub fn active_states(&self) -> &[StateId] {
        &self.active_states
    }

    /// Total component count over all actions.
    pub fn component_count(&self) -> usize {
        self.tables.iter().map(|t| t.entries.len()).sum()
    }

    /// Component count of one (state, action) group.
    pub fn pair_component_count(&self, s: StateId, a: ActionId) -> usize {
        let t = &self.tables[a.0];
        t.offsets[s.0 + 1] - t.offsets[s.0]
    }

    /// Component count of one state summed over actions.
    pub fn state_component_count(&self, s: StateId) -> usize {
        (0..self.actions)
            .map(|a| self.pair_component_count(s, ActionId(a)))
            .sum()
    }

    #[inline]
    pub(crate) fn row(&self, a: usize, s: usize) -> &[Entry] {
        let t = &self.tables[a];
        &t.entries[t.offsets[s]..t.offsets[s + 1]]
    }

    /// All components of one action in (s, s_next) order.
    pub fn components(&self, a: ActionId) -> impl Iterator<Item = TensorComponent> + '_ {
        let n = self.num_states();
        (0..n).flat_map(move |s| {
            self.row(a.0, s).iter().map(move |e| TensorComponent {
                s: StateId(s),
                s_next: StateId(e.next as usize),
                p: e.p,
            })
        })
    }

    /// Expected successor values under one action: out[s] = Σ p · v[s_next],
    /// 0 for obstacles. Adds every component touched to the multiply counter.
    pub fn expected_values(&self, a: ActionId, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.num_states(), "value vector length mismatch");
        assert!(a.0 < self.actions, "action {a} out of range");
        let n = v.len();
        let mut out = vec![0.0; n];
        for (s, slot) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for e in self.row(a.0, s) {
                acc += e.p * v[e.next as usize];
            }
            *slot = acc;
        }
        self.add_multiplies(self.tables[a.0].entries.len() as u64);
        out
    }

    /// Storage accounting: component count and the declared-width byte
    /// estimate (two indices + one 8-byte real per component, plus the
    /// per-action offset arrays).
    pub fn storage_entries(&self) -> StorageStats {
        let components = self.component_count();
        let index_width = byte_width(self.num_states());
        let offset_width = byte_width(components + 1);
        let component_bytes = components as u64 * (2 * index_width as u64 + 8);
        let offset_bytes = self.actions as u64 * (self.num_states() as u64 + 1) * offset_width as u64;
        StorageStats {
            components,
            bytes: component_bytes + offset_bytes,
            index_width,
            offset_width,
        }
    }

    /// Expands to dense per-action matrices, refusing when the accounting
    /// exceeds `cap_bytes`. Obstacle rows become identity rows.
    pub fn to_tabular(&self, cap_bytes: u64) -> Result<TabularModel> {
        let n = self.num_states();
        let required = dense_bytes_estimate(n, self.actions);
        if required > cap_bytes as u128 {
            return Err(Error::DenseCapExceeded {
                required_bytes: u64::try_from(required).unwrap_or(u64::MAX),
                cap_bytes,
            });
        }
        let mut mats = Vec::with_capacity(self.actions);
        for a in 0..self.actions {
            let mut mat = vec![0.0; n * n];
            for s in 0..n {
                let row = self.row(a, s);
                if row.is_empty() {
                    mat[s * n + s] = 1.0;
                } else {
                    for e in row {
                        mat[s * n + e.next as usize] += e.p;
                    }
                }
            }
            mats.push(mat);
        }
        Ok(TabularModel {
            num_states: n,
            actions: self.actions,
            mats,
            multiplies: AtomicU64::new(0),
        })
    }

    /// Writes one `s s_next p` line per component under per-action headers.
    pub fn dump_components(&self, w: &mut impl Write) -> io::Result<()> {
        for a in 0..self.actions {
            writeln!(w, "# action {a}")?;
            for c in self.components(ActionId(a)) {
                writeln!(w, "{} {} {}", c.s, c.s_next, c.p)?;
            }
        }
        Ok(())
    }

    pub fn multiplies(&self) -> u64 {
        self.multiplies.load(Ordering::Relaxed)
    }

    pub fn reset_multiplies(&self) {
        self.multiplies.store(0, Ordering::Relaxed);
    }

    pub(crate) fn add_multiplies(&self, n: u64) {
        self.multiplies.fetch_add(n, Ordering::Relaxed);
    }
}

impl RewardModel {
    pub fn num_states(&self) -> usize {
        self.rewards.len()
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn reward(&self, s: StateId) -> f64 {
        self.rewards[s.0]
    }

    pub fn is_terminal(&self, s: StateId) -> bool {
        self.terminal_mask[s.0]
    }

    pub fn is_obstacle(&self, s: StateId) -> bool {
        self.obstacle_mask[s.0]
    }

    /// States that are neither terminals nor obstacles, ascending; the only
    /// states the solvers back up.
    pub fn plain_states(&self) -> &[StateId] {
        &self.plain_states
    }
}

impl TabularModel {
    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn action_count(&self) -> usize {
        self.actions
    }

    /// One dense matrix row, length S.
    pub fn row(&self, a: ActionId, s: StateId) -> &[f64] {
        assert!(a.0 < self.actions, "action {a} out of range");
        &self.mats[a.0][s.0 * self.num_states..(s.0 + 1) * self.num_states]
    }

    #[inline]
    pub(crate) fn row_raw(&self, a: usize, s: usize) -> &[f64] {
        &self.mats[a][s * self.num_states..(s + 1) * self.num_states]
    }

    /// Actual bytes held by the dense matrices.
    pub fn dense_bytes(&self) -> u128 {
        dense_bytes_estimate(self.num_states, self.actions)
    }

    pub fn multiplies(&self) -> u64 {
        self.multiplies.load(Ordering::Relaxed)
    }

    pub fn reset_multiplies(&self) {
        self.multiplies.store(0, Ordering::Relaxed);
    }

    pub(crate) fn add_multiplies(&self, n: u64) {
        self.multiplies.fetch_add(n, Ordering::Relaxed);
    }
}
