//! Sorted, duplicate-free point index sets.
//!
//! Difference, intersection and union are single linear merges over the two
//! sorted lists, so the entity-level algebra over view sets of ~10^5 points
//! stays cheap.

use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::error::{Error, Result};

/// Strictly increasing point indices into one scene's point cloud.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PointIndexSet {
    scene_id: String,
    indices: Vec<u32>,
}

impl PointIndexSet {
    pub fn empty(scene_id: impl Into<String>) -> Self {
        Self { scene_id: scene_id.into(), indices: Vec::new() }
    }

    /// All indices `0..n`.
    pub fn full(scene_id: impl Into<String>, n: usize) -> Self {
        Self { scene_id: scene_id.into(), indices: (0..n as u32).collect() }
    }

    /// Validates that `indices` is strictly increasing.
    pub fn from_sorted(scene_id: impl Into<String>, indices: Vec<u32>) -> Result<Self> {
        if let Some(w) = indices.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter {
                name: "indices",
                reason: alloc::format!("not strictly increasing at {} -> {}", w[0], w[1]),
            });
        }
        Ok(Self { scene_id: scene_id.into(), indices })
    }

    pub fn from_unsorted(scene_id: impl Into<String>, mut indices: Vec<u32>) -> Self {
        indices.sort_unstable();
        indices.dedup();
        Self { scene_id: scene_id.into(), indices }
    }

    pub fn scene_id(&self) -> &str {
        &self.scene_id
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn into_indices(self) -> Vec<u32> {
        self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, index: u32) -> bool {
        self.indices.binary_search(&index).is_ok()
    }

    /// Checks every index is below `n`.
    pub fn check_bounds(&self, n: usize) -> Result<()> {
        match self.indices.last() {
            Some(&last) if last as usize >= n => Err(Error::InvalidParameter {
                name: "indices",
                reason: alloc::format!("index {last} out of range for {n} points"),
            }),
            _ => Ok(()),
        }
    }

    /// `self ∖ other`
    pub fn difference(&self, other: &Self) -> Self {
        self.derived(difference(&self.indices, &other.indices))
    }

    /// `self ∩ other`
    pub fn intersection(&self, other: &Self) -> Self {
        self.derived(intersection(&self.indices, &other.indices))
    }

    /// `self ∪ other`
    pub fn union(&self, other: &Self) -> Self {
        self.derived(union(&self.indices, &other.indices))
    }

    fn derived(&self, indices: Vec<u32>) -> Self {
        Self { scene_id: self.scene_id.clone(), indices }
    }
}

pub fn difference(a: &[u32], b: &[u32]) -> Vec<u32> {
    let mut out = Vec::with_capacity(a.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() {
        if j == b.len() {
            out.extend_from_slice(&a[i..]);
            break;
        }
        match a[i].cmp(&b[j]) {
            Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            Ordering::Equal => {
                i += 1;
                j += 1;
            }
            Ordering::Greater => j += 1,
        }
    }
    out
}

pub fn intersection(a: &[u32], b: &[u32]) -> Vec<u32> {
    let mut out = Vec::with_capacity(a.len().min(b.len()));
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            Ordering::Less => i += 1,
            Ordering::Greater => j += 1,
            Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out
}

pub fn union(a: &[u32], b: &[u32]) -> Vec<u32> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}
