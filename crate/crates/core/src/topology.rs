//! Linear chain of backbone vehicles.
//!
//! Nodes are indexed from 0 in code (vehicle `i` in reports is node `i - 1`).
//! Each node hears and reaches only its immediate neighbors, so node `i + 2`
//! is hidden from node `i` with respect to a frame sent to `i + 1`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Topology {
    pub n: usize,
    /// Probability that an interior node addresses its left (lower-index)
    /// neighbor.
    pub a: f64,
}

impl Default for Topology {
    fn default() -> Self {
        Self { n: 6, a: 0.5 }
    }
}

impl Topology {
    pub fn new(n: usize, a: f64) -> Result<Self> {
        let t = Self { n, a };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidTopology(format!(
                "need at least 2 nodes, got {}",
                self.n
            )));
        }
        if !(0.0..=1.0).contains(&self.a) {
            return Err(Error::InvalidTopology(format!(
                "destination probability must lie in [0, 1], got {}",
                self.a
            )));
        }
        Ok(())
    }

    /// Nodes that node `i` can hear. Communication range is the same set.
    pub fn sense(&self, i: usize) -> Neighbors {
        let left = (i > 0).then(|| i - 1);
        let right = (i + 1 < self.n).then_some(i + 1);
        Neighbors { left, right }
    }

    pub fn hears(&self, i: usize, j: usize) -> bool {
        i.abs_diff(j) == 1 && i < self.n && j < self.n
    }

    /// Nodes outside `i`'s range that can still corrupt frames `i` sends.
    pub fn hidden(&self, i: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(2);
        if i >= 2 {
            out.push(i - 2);
        }
        if i + 2 < self.n {
            out.push(i + 2);
        }
        out
    }

    /// Draws the destination of node `i`'s next packet. End nodes always
    /// address their only neighbor.
    pub fn sample_destination<R: Rng + ?Sized>(&self, i: usize, rng: &mut R) -> Result<usize> {
        self.validate()?;
        if i >= self.n {
            return Err(Error::IndexOutOfRange {
                index: i,
                n: self.n,
            });
        }
        Ok(if i == 0 {
            1
        } else if i == self.n - 1 || rng.gen_bool(self.a) {
            i - 1
        } else {
            i + 1
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Neighbors {
    pub left: Option<usize>,
    pub right: Option<usize>,
}

impl Neighbors {
    pub fn iter(self) -> impl Iterator<Item = usize> {
        self.left.into_iter().chain(self.right)
    }

    pub fn contains(self, j: usize) -> bool {
        self.left == Some(j) || self.right == Some(j)
    }

    pub fn len(self) -> usize {
        self.left.is_some() as usize + self.right.is_some() as usize
    }

    pub fn is_empty(self) -> bool {
        self.len() == 0
    }
}
