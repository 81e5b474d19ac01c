//! Random gridworld scenarios and their exact transition distributions.
//!
//! A [`GridSpec`] is an n-dimensional grid with randomly placed obstacles
//! (inaccessible cells), terminal cells carrying +100/−100 rewards, a uniform
//! step reward for all remaining cells, and stochastic axis-aligned moves.
//! Each axis contributes two actions, so a D-dimensional grid has 2D actions.
//! An action moves one cell along its axis with probability `noise`; the
//! remaining mass slips onto the 2(D−1) orthogonal unit moves. Moves that
//! would enter an obstacle or leave the grid bounce back to the current cell,
//! and terminals are absorbing.
//!
//! Because a move can only reach the intended cell or an orthogonal slip
//! cell, every (state, action) pair has at most 2D−1 successors with positive
//! probability. That bound is what keeps the component representation in
//! [`crate::transition`] small.

use crate::error::{Error, Result};
use crate::statespace::{GridShape, MultiIndex, StateId, StepDir};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;

pub const DEFAULT_NOISE: f64 = 0.8;
pub const DEFAULT_STEP_REWARD: f64 = -3.0;
pub const TERMINAL_REWARD_MAGNITUDE: f64 = 100.0;

/// Action index in `[0, 2D)`: action `2k` decrements axis `k`, action `2k+1`
/// increments it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ActionId(pub usize);

impl ActionId {
    pub fn axis(self) -> usize {
        self.0 / 2
    }

    pub fn dir(self) -> StepDir {
        if self.0.is_multiple_of(2) {
            StepDir::Dec
        } else {
            StepDir::Inc
        }
    }
}

impl fmt::Display for ActionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = match self.dir() {
            StepDir::Dec => '-',
            StepDir::Inc => '+',
        };
        write!(f, "a{}({}axis{})", self.0, sign, self.axis())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Plain,
    Obstacle,
    Terminal,
}

/// A fully specified gridworld scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    shape: GridShape,
    kind: Vec<Kind>,
    obstacles: Vec<StateId>,
    terminals: Vec<(StateId, f64)>,
    step_reward: f64,
    noise: f64,
    seed: u64,
}

impl GridSpec {
    /// Builds a spec from explicit placements. Obstacles and terminals must
    /// be in range and mutually disjoint, at least one cell must remain
    /// accessible, and `noise` must lie in `[0, 1]`.
    pub fn new(
        shape: GridShape,
        obstacles: Vec<StateId>,
        terminals: Vec<(StateId, f64)>,
        step_reward: f64,
        noise: f64,
        seed: u64,
    ) -> Result<Self> {
        let n = shape.num_states();
        if !(0.0..=1.0).contains(&noise) {
            return Err(Error::InvalidSpec {
                reason: format!("noise {noise} outside [0, 1]"),
            });
        }
        if !step_reward.is_finite() {
            return Err(Error::InvalidSpec {
                reason: "step_reward is not finite".into(),
            });
        }
        let mut kind = vec![Kind::Plain; n];
        for &s in &obstacles {
            if s.0 >= n {
                return Err(Error::StateOutOfBounds { state: s.0, count: n });
            }
            if kind[s.0] != Kind::Plain {
                return Err(Error::InvalidSpec {
                    reason: format!("state {s} placed twice"),
                });
            }
            kind[s.0] = Kind::Obstacle;
        }
        for &(s, reward) in &terminals {
            if s.0 >= n {
                return Err(Error::StateOutOfBounds { state: s.0, count: n });
            }
            if kind[s.0] != Kind::Plain {
                return Err(Error::InvalidSpec {
                    reason: format!("state {s} placed twice"),
                });
            }
            if !reward.is_finite() {
                return Err(Error::InvalidSpec {
                    reason: format!("terminal reward at {s} is not finite"),
                });
            }
            kind[s.0] = Kind::Terminal;
        }
        if obstacles.len() == n {
            return Err(Error::InvalidSpec {
                reason: "every state is an obstacle".into(),
            });
        }
        let mut obstacles = obstacles;
        obstacles.sort_unstable();
        let mut terminals = terminals;
        terminals.sort_unstable_by_key(|&(s, _)| s);
        Ok(GridSpec {
            shape,
            kind,
            obstacles,
            terminals,
            step_reward,
            noise,
            seed,
        })
    }

    /// Draws `n_obstacles + n_terminals` distinct cells with a seeded RNG and
    /// assigns the first block to obstacles and the rest to terminals whose
    /// rewards alternate +100, −100, ... in draw order. Uses the default
    /// step reward (−3) and noise (0.8).
    pub fn generate_random_spec(
        shape: GridShape,
        n_obstacles: usize,
        n_terminals: usize,
        seed: u64,
    ) -> Result<Self> {
        let n = shape.num_states();
        let requested = n_obstacles
            .checked_add(n_terminals)
            .ok_or(Error::InfeasiblePlacement {
                requested: usize::MAX,
                available: n.saturating_sub(1),
            })?;
        if requested >= n {
            return Err(Error::InfeasiblePlacement {
                requested,
                available: n - 1,
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let draws = rand::seq::index::sample(&mut rng, n, requested);
        let mut obstacles = Vec::with_capacity(n_obstacles);
        let mut terminals = Vec::with_capacity(n_terminals);
        for (k, cell) in draws.into_iter().enumerate() {
            if k < n_obstacles {
                obstacles.push(StateId(cell));
            } else {
                let sign = if (k - n_obstacles).is_multiple_of(2) { 1.0 } else { -1.0 };
                terminals.push((StateId(cell), sign * TERMINAL_REWARD_MAGNITUDE));
            }
        }
        Self::new(
            shape,
            obstacles,
            terminals,
            DEFAULT_STEP_REWARD,
            DEFAULT_NOISE,
            seed,
        )
    }

    /// Returns the same spec with a different noise level.
    pub fn with_noise(mut self, noise: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&noise) {
            return Err(Error::InvalidSpec {
                reason: format!("noise {noise} outside [0, 1]"),
            });
        }
        self.noise = noise;
        Ok(self)
    }

    pub fn shape(&self) -> &GridShape {
        &self.shape
    }

    pub fn num_states(&self) -> usize {
        self.shape.num_states()
    }

    /// Number of actions, two per axis.
    pub fn action_count(&self) -> usize {
        2 * self.shape.rank()
    }

    /// Sorted obstacle cells.
    pub fn obstacles(&self) -> &[StateId] {
        &self.obstacles
    }

    /// Terminal cells with their rewards, sorted by state.
    pub fn terminals(&self) -> &[(StateId, f64)] {
        &self.terminals
    }

    pub fn step_reward(&self) -> f64 {
        self.step_reward
    }

    pub fn noise(&self) -> f64 {
        self.noise
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn is_obstacle(&self, s: StateId) -> bool {
        self.kind[s.0] == Kind::Obstacle
    }

    pub fn is_terminal(&self, s: StateId) -> bool {
        self.kind[s.0] == Kind::Terminal
    }

    pub fn terminal_reward(&self, s: StateId) -> Option<f64> {
        self.terminals
            .binary_search_by_key(&s, |&(t, _)| t)
            .ok()
            .map(|i| self.terminals[i].1)
    }

    /// States that are neither obstacles nor terminals.
    pub fn num_plain_states(&self) -> usize {
        self.num_states() - self.obstacles.len() - self.terminals.len()
    }

    /// Destination of the intended move: one step along the action's axis,
    /// bouncing back to `s` when the destination is out of bounds or an
    /// obstacle.
    pub fn intended_successor(&self, s: StateId, a: ActionId) -> Result<StateId> {
        if self.is_obstacle(s) {
            return Err(Error::ObstacleState { state: s.0 });
        }
        assert!(a.0 < self.action_count(), "action {a} out of range");
        let m = self.shape.multi_index(s)?;
        let (m2, moved) = self.shape.step(&m, a.axis(), a.dir());
        if !moved {
            return Ok(s);
        }
        let dest = self.shape.linear_index(&m2)?;
        if self.is_obstacle(dest) {
            Ok(s)
        } else {
            Ok(dest)
        }
    }

    /// Exact successor distribution of `(s, a)`: the intended move carries
    /// mass `noise`, the rest splits equally over the orthogonal slips (for
    /// D=1 it stays put). Terminals are absorbing. Entries are merged per
    /// successor, sorted by state, and never zero.
    pub fn transition_distribution(&self, s: StateId, a: ActionId) -> Result<Vec<(StateId, f64)>> {
        if self.is_obstacle(s) {
            return Err(Error::ObstacleState { state: s.0 });
        }
        assert!(a.0 < self.action_count(), "action {a} out of range");
        if self.is_terminal(s) {
            return Ok(vec![(s, 1.0)]);
        }
        let mut pairs: Vec<(StateId, f64)> = Vec::with_capacity(2 * self.shape.rank() - 1);
        let mut add = |dest: StateId, p: f64| {
            if p == 0.0 {
                return;
            }
            match pairs.iter_mut().find(|(d, _)| *d == dest) {
                Some((_, mass)) => *mass += p,
                None => pairs.push((dest, p)),
            }
        };
        add(self.intended_successor(s, a)?, self.noise);
        let slip_total = 1.0 - self.noise;
        let rank = self.shape.rank();
        if rank == 1 {
            add(s, slip_total);
        } else if slip_total > 0.0 {
            let per_slip = slip_total / (2 * (rank - 1)) as f64;
            for axis in 0..rank {
                if axis == a.axis() {
                    continue;
                }
                for dir in [StepDir::Dec, StepDir::Inc] {
                    let slip_action = ActionId(2 * axis + if dir == StepDir::Inc { 1 } else { 0 });
                    add(self.intended_successor(s, slip_action)?, per_slip);
                }
            }
        }
        pairs.sort_unstable_by_key(|&(d, _)| d);
        Ok(pairs)
    }

    /// Serializes to the spec-file text format.
    pub fn to_toml(&self) -> String {
        let file = SpecFile {
            dims: self.shape.dims().to_vec(),
            step_reward: self.step_reward,
            noise: self.noise,
            seed: self.seed,
            obstacles: self
                .obstacles
                .iter()
                .map(|&s| self.shape.multi_index(s).expect("stored state in range").0)
                .collect(),
            terminals: self
                .terminals
                .iter()
                .map(|&(s, reward)| TerminalEntry {
                    cell: self.shape.multi_index(s).expect("stored state in range").0,
                    reward,
                })
                .collect(),
        };
        toml::to_string(&file).expect("spec file serialization cannot fail")
    }

    /// Parses the spec-file text format.
    pub fn from_toml(text: &str) -> Result<Self> {
        let file: SpecFile =
            toml::from_str(text).map_err(|e| Error::SpecParse(e.to_string()))?;
        let shape = GridShape::new(file.dims)?;
        let obstacles = file
            .obstacles
            .iter()
            .map(|c| shape.linear_index(&MultiIndex(c.clone())))
            .collect::<Result<Vec<_>>>()?;
        let terminals = file
            .terminals
            .iter()
            .map(|t| {
                shape
                    .linear_index(&MultiIndex(t.cell.clone()))
                    .map(|s| (s, t.reward))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(
            shape,
            obstacles,
            terminals,
            file.step_reward,
            file.noise,
            file.seed,
        )
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }
}

#[derive(Serialize, Deserialize)]
struct SpecFile {
    dims: Vec<usize>,
    step_reward: f64,
    noise: f64,
    seed: u64,
    obstacles: Vec<Vec<usize>>,
    terminals: Vec<TerminalEntry>,
}

#[derive(Serialize, Deserialize)]
struct TerminalEntry {
    cell: Vec<usize>,
    reward: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn shape(dims: &[usize]) -> GridShape {
        GridShape::new(dims.to_vec()).unwrap()
    }

    fn empty_spec(dims: &[usize], noise: f64) -> GridSpec {
        GridSpec::new(shape(dims), vec![], vec![], -3.0, noise, 0).unwrap()
    }

    #[test]
    fn action_count_by_rank() {
        assert_eq!(empty_spec(&[3, 3], 0.8).action_count(), 4);
        assert_eq!(empty_spec(&[2; 9], 0.8).action_count(), 18);
        assert_eq!(empty_spec(&[5], 0.8).action_count(), 2);
    }

    #[test]
    fn action_axis_and_dir() {
        assert_eq!(ActionId(0).axis(), 0);
        assert_eq!(ActionId(0).dir(), StepDir::Dec);
        assert_eq!(ActionId(1).axis(), 0);
        assert_eq!(ActionId(1).dir(), StepDir::Inc);
        assert_eq!(ActionId(4).axis(), 2);
        assert_eq!(ActionId(5).dir(), StepDir::Inc);
    }

    #[test]
    fn generate_table_row_counts() {
        let spec = GridSpec::generate_random_spec(shape(&[70, 70]), 50, 6, 1).unwrap();
        assert_eq!(spec.num_states(), 4_900);
        assert_eq!(spec.obstacles().len(), 50);
        assert_eq!(spec.terminals().len(), 6);
        assert_eq!(spec.num_plain_states(), 4_844);
        let positive = spec.terminals().iter().filter(|&&(_, r)| r > 0.0).count();
        assert_eq!(positive, 3);
        for &(s, r) in spec.terminals() {
            assert!(!spec.is_obstacle(s));
            assert_eq!(r.abs(), 100.0);
        }
        assert_eq!(spec.step_reward(), -3.0);
        assert_eq!(spec.noise(), 0.8);
    }

    #[test]
    fn generate_is_deterministic() {
        let a = GridSpec::generate_random_spec(shape(&[7, 8]), 5, 3, 42).unwrap();
        let b = GridSpec::generate_random_spec(shape(&[7, 8]), 5, 3, 42).unwrap();
        assert_eq!(a, b);
        let c = GridSpec::generate_random_spec(shape(&[7, 8]), 5, 3, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn generate_two_cell_chain() {
        let spec = GridSpec::generate_random_spec(shape(&[2]), 0, 1, 9).unwrap();
        assert_eq!(spec.terminals().len(), 1);
        assert_eq!(spec.terminals()[0].1, 100.0);
        assert_eq!(spec.num_plain_states(), 1);
    }

    #[test]
    fn generate_infeasible_counts() {
        let err = GridSpec::generate_random_spec(shape(&[2, 2]), 3, 1, 0).unwrap_err();
        assert!(matches!(
            err,
            Error::InfeasiblePlacement {
                requested: 4,
                available: 3
            }
        ));
    }

    #[test]
    fn odd_terminal_count_alternation() {
        let spec = GridSpec::generate_random_spec(shape(&[10, 10]), 0, 3, 5).unwrap();
        let positive = spec.terminals().iter().filter(|&&(_, r)| r > 0.0).count();
        assert_eq!(positive, 2);
    }

    #[test]
    fn intended_successor_bounces() {
        let spec = empty_spec(&[3, 4], 0.8);
        let corner = spec.shape().linear_index(&MultiIndex(vec![0, 0])).unwrap();
        assert_eq!(spec.intended_successor(corner, ActionId(0)).unwrap(), corner);
        let interior = spec.shape().linear_index(&MultiIndex(vec![1, 2])).unwrap();
        let below = spec.shape().linear_index(&MultiIndex(vec![2, 2])).unwrap();
        assert_eq!(spec.intended_successor(interior, ActionId(1)).unwrap(), below);
    }

    #[test]
    fn intended_successor_obstacle_bounce() {
        let sh = shape(&[3, 3]);
        let center = sh.linear_index(&MultiIndex(vec![1, 1])).unwrap();
        let spec = GridSpec::new(sh, vec![center], vec![], -3.0, 0.8, 0).unwrap();
        let above = spec.shape().linear_index(&MultiIndex(vec![0, 1])).unwrap();
        assert_eq!(spec.intended_successor(above, ActionId(1)).unwrap(), above);
        assert!(matches!(
            spec.intended_successor(center, ActionId(0)),
            Err(Error::ObstacleState { .. })
        ));
    }

    #[test]
    fn corner_distribution_merges_bounces() {
        let spec = empty_spec(&[3, 4], 0.8);
        let corner = spec.shape().linear_index(&MultiIndex(vec![0, 0])).unwrap();
        let right = spec.shape().linear_index(&MultiIndex(vec![0, 1])).unwrap();
        let dist = spec.transition_distribution(corner, ActionId(0)).unwrap();
        assert_eq!(dist.len(), 2);
        assert_eq!(dist[0].0, corner);
        assert!((dist[0].1 - 0.9).abs() < 1e-12);
        assert_eq!(dist[1].0, right);
        assert!((dist[1].1 - 0.1).abs() < 1e-12);
    }

    #[test]
    fn deterministic_noise_single_component() {
        let spec = empty_spec(&[3, 4], 1.0);
        let interior = spec.shape().linear_index(&MultiIndex(vec![1, 2])).unwrap();
        let below = spec.shape().linear_index(&MultiIndex(vec![2, 2])).unwrap();
        let dist = spec.transition_distribution(interior, ActionId(1)).unwrap();
        assert_eq!(dist, vec![(below, 1.0)]);
    }

    #[test]
    fn terminal_is_absorbing() {
        let sh = shape(&[3, 3]);
        let t = sh.linear_index(&MultiIndex(vec![1, 1])).unwrap();
        let spec = GridSpec::new(sh, vec![], vec![(t, 100.0)], -3.0, 0.8, 0).unwrap();
        for a in 0..spec.action_count() {
            assert_eq!(
                spec.transition_distribution(t, ActionId(a)).unwrap(),
                vec![(t, 1.0)]
            );
        }
    }

    #[test]
    fn one_dimensional_remainder_stays_put() {
        let spec = empty_spec(&[5], 0.8);
        let dist = spec.transition_distribution(StateId(2), ActionId(1)).unwrap();
        assert_eq!(dist.len(), 2);
        assert_eq!(dist[0].0, StateId(2));
        assert!((dist[0].1 - 0.2).abs() < 1e-12);
        assert_eq!(dist[1].0, StateId(3));
        assert!((dist[1].1 - 0.8).abs() < 1e-12);
    }

    #[test]
    fn distributions_are_stochastic_and_bounded() {
        let specs = [
            GridSpec::generate_random_spec(shape(&[6, 7]), 5, 3, 11).unwrap(),
            GridSpec::generate_random_spec(shape(&[4, 3, 5]), 6, 2, 12).unwrap(),
            GridSpec::generate_random_spec(shape(&[9]), 2, 2, 13).unwrap(),
        ];
        for spec in &specs {
            let rank = spec.shape().rank();
            // D=1 can produce intended + stay, so the slip bound floors at 2.
            let max_entries = (2 * rank - 1).max(2);
            for s in spec.shape().states() {
                if spec.is_obstacle(s) {
                    continue;
                }
                for a in 0..spec.action_count() {
                    let dist = spec.transition_distribution(s, ActionId(a)).unwrap();
                    assert!(!dist.is_empty() && dist.len() <= max_entries);
                    let total: f64 = dist.iter().map(|&(_, p)| p).sum();
                    assert!((total - 1.0).abs() < 1e-12, "mass {total} at ({s}, {a})");
                    for window in dist.windows(2) {
                        assert!(window[0].0 < window[1].0, "successors must ascend");
                    }
                    for &(dest, p) in &dist {
                        assert!(p > 0.0);
                        assert!(!spec.is_obstacle(dest));
                    }
                }
            }
        }
    }

    #[test]
    fn toml_roundtrip_is_lossless() {
        let spec = GridSpec::generate_random_spec(shape(&[5, 6]), 4, 3, 21).unwrap();
        let text = spec.to_toml();
        let back = GridSpec::from_toml(&text).unwrap();
        assert_eq!(spec, back);
    }

    #[test]
    fn toml_parse_rejects_garbage() {
        assert!(matches!(
            GridSpec::from_toml("dims = \"nope\""),
            Err(Error::SpecParse(_))
        ));
        let overlapping = "dims = [2, 2]\nstep_reward = -3.0\nnoise = 0.8\nseed = 0\n\
                           obstacles = [[0, 0]]\n[[terminals]]\ncell = [0, 0]\nreward = 100.0\n";
        assert!(matches!(
            GridSpec::from_toml(overlapping),
            Err(Error::InvalidSpec { .. })
        ));
    }

    #[test]
    fn save_load_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("maze.toml");
        let spec = GridSpec::generate_random_spec(shape(&[4, 4, 4]), 6, 2, 33).unwrap();
        spec.save(&path).unwrap();
        assert_eq!(GridSpec::load(&path).unwrap(), spec);
    }

    #[test]
    fn load_missing_file_is_io_error() {
        let err = GridSpec::load(Path::new("/nonexistent/spec.toml")).unwrap_err();
        assert!(err.is_io());
    }

    proptest! {
        #[test]
        fn generation_is_pure(
            w in 2usize..6,
            h in 2usize..6,
            n_obst in 0usize..4,
            n_term in 0usize..3,
            seed in 0u64..1000,
        ) {
            prop_assume!(n_obst + n_term < w * h);
            let sh = GridShape::new(vec![w, h]).unwrap();
            let a = GridSpec::generate_random_spec(sh.clone(), n_obst, n_term, seed).unwrap();
            let b = GridSpec::generate_random_spec(sh, n_obst, n_term, seed).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn any_noise_level_stays_stochastic(noise in 0.0f64..=1.0, seed in 0u64..100) {
            let sh = GridShape::new(vec![4, 4]).unwrap();
            let spec = GridSpec::generate_random_spec(sh, 3, 2, seed)
                .unwrap()
                .with_noise(noise)
                .unwrap();
            for s in spec.shape().states() {
                if spec.is_obstacle(s) {
                    continue;
                }
                for a in 0..spec.action_count() {
                    let dist = spec.transition_distribution(s, ActionId(a)).unwrap();
                    let total: f64 = dist.iter().map(|&(_, p)| p).sum();
                    prop_assert!((total - 1.0).abs() < 1e-12);
                    prop_assert!(dist.iter().all(|&(_, p)| p > 0.0));
                }
            }
        }
    }
}
