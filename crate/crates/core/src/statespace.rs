//! Composite multi-dimensional states and their flat addressing.
//!
//! A grid with per-axis sizes `(S_1, ..., S_D)` has `S = S_1 * ... * S_D`
//! states. Each state is a coordinate tuple ([`MultiIndex`]) and, for the
//! solvers, a flat [`StateId`] in `[0, S)`. The bijection is row-major with
//! the last axis varying fastest; everything downstream relies on that order
//! being fixed.

use crate::error::{Error, Result};
use std::fmt;

/// Flat state identifier in `[0, num_states)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StateId(pub usize);

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Coordinate tuple of one composite state, one entry per axis.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MultiIndex(pub Vec<usize>);

impl MultiIndex {
    pub fn coords(&self) -> &[usize] {
        &self.0
    }
}

impl From<Vec<usize>> for MultiIndex {
    fn from(coords: Vec<usize>) -> Self {
        MultiIndex(coords)
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (k, c) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// Direction of a unit move along one axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepDir {
    Dec,
    Inc,
}

/// Per-axis sizes of the grid; validated so the total state count fits usize.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridShape {
    dims: Vec<usize>,
    state_count: usize,
}

impl GridShape {
    /// Builds a shape from per-axis sizes. Every entry must be at least 1 and
    /// the product of all entries must not overflow.
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidShape {
                reason: "no dimensions".into(),
            });
        }
        if let Some(axis) = dims.iter().position(|&d| d == 0) {
            return Err(Error::InvalidShape {
                reason: format!("axis {axis} has size 0"),
            });
        }
        let mut count: usize = 1;
        for &d in &dims {
            count = count
                .checked_mul(d)
                .ok_or_else(|| Error::StateCountOverflow { dims: dims.clone() })?;
        }
        Ok(GridShape {
            dims,
            state_count: count,
        })
    }

    /// Number of axes `D`.
    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Total number of composite states (product of the axis sizes).
    pub fn num_states(&self) -> usize {
        self.state_count
    }

    /// Flattens a coordinate tuple: `index = sum_k coords[k] * prod_{j>k} dims[j]`.
    pub fn linear_index(&self, m: &MultiIndex) -> Result<StateId> {
        if m.0.len() != self.dims.len() {
            return Err(Error::RankMismatch {
                expected: self.dims.len(),
                got: m.0.len(),
            });
        }
        let mut index = 0usize;
        for (axis, (&coord, &size)) in m.0.iter().zip(&self.dims).enumerate() {
            if coord >= size {
                return Err(Error::CoordOutOfBounds { axis, coord, size });
            }
            index = index * size + coord;
        }
        Ok(StateId(index))
    }

    /// Inverse of [`linear_index`](Self::linear_index).
    pub fn multi_index(&self, s: StateId) -> Result<MultiIndex> {
        if s.0 >= self.state_count {
            return Err(Error::StateOutOfBounds {
                state: s.0,
                count: self.state_count,
            });
        }
        let mut coords = vec![0usize; self.dims.len()];
        let mut rem = s.0;
        for (k, &size) in self.dims.iter().enumerate().rev() {
            coords[k] = rem % size;
            rem /= size;
        }
        Ok(MultiIndex(coords))
    }

    /// Unit move along one axis. Returns the shifted index and `true`, or the
    /// input unchanged and `false` when the move would leave the grid.
    ///
    /// Panics if `axis >= rank()`.
    pub fn step(&self, m: &MultiIndex, axis: usize, dir: StepDir) -> (MultiIndex, bool) {
        assert!(
            axis < self.dims.len(),
            "axis {axis} out of range for rank {}",
            self.dims.len()
        );
        let coord = m.0[axis];
        let moved = match dir {
            StepDir::Dec => coord > 0,
            StepDir::Inc => coord + 1 < self.dims[axis],
        };
        if !moved {
            return (m.clone(), false);
        }
        let mut coords = m.0.clone();
        coords[axis] = match dir {
            StepDir::Dec => coord - 1,
            StepDir::Inc => coord + 1,
        };
        (MultiIndex(coords), true)
    }

    /// Iterates all state ids in ascending order.
    pub fn states(&self) -> impl Iterator<Item = StateId> {
        (0..self.state_count).map(StateId)
    }
}
