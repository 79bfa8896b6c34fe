// Copyright 2026 The qpopss Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! Query-optimized Space-Saving: Space-Saving over a [`MinMaxHeap`].

use crate::error::{invalid, Result};
use crate::heap::{Counter, ElementId, MinMaxHeap, NONE};
use crate::oracle::counters_for;

/// One element of a query result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub struct QueryResultEntry {
    pub element: ElementId,
    pub estimate: u64,
}

impl From<Counter> for QueryResultEntry {
    fn from(c: Counter) -> Self {
        QueryResultEntry { element: c.element, estimate: c.count }
    }
}

/// A single-owner Space-Saving synopsis with `m` counters.
///
/// For every tracked element `e`, `f(e) <= estimate(e) <= f(e) + min()`,
/// and every element with `f(e) > min()` is tracked.
#[derive(Debug, Clone)]
pub struct Qoss {
    heap: MinMaxHeap,
    total: u64,
}

impl Qoss {
    /// Sizes the synopsis at `ceil(1/epsilon)` counters unless an explicit
    /// capacity is given.
    pub fn new(epsilon: f64, capacity_override: Option<usize>) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(invalid(format!("epsilon must lie in (0, 1], got {epsilon}")));
        }
        match capacity_override {
            Some(m) => Self::with_capacity(m),
            None => Self::with_capacity(counters_for(1.0 / epsilon)),
        }
    }

    pub fn with_capacity(m: usize) -> Result<Self> {
        Ok(Qoss { heap: MinMaxHeap::new(m)?, total: 0 })
    }

    /// Applies `w` occurrences of `e`.
    #[inline]
    pub fn update(&mut self, e: ElementId, w: u64) -> Result<()> {
        if w == 0 {
            return Err(invalid("weight must be positive"));
        }
        if e == NONE {
            return Err(invalid("the reserved NONE id cannot be counted"));
        }
        if self.heap.contains(e) {
            self.heap.increase_count(e, w)?;
        } else {
            let min = self.heap.peek_min().count;
            self.heap.replace_min(e, min + w)?;
        }
        self.total += w;
        Ok(())
    }

    /// Tracked counters with an estimate strictly above `threshold`.
    pub fn query(&mut self, threshold: u64) -> Vec<QueryResultEntry> {
        self.heap.threshold_scan(threshold).into_iter().map(Into::into).collect()
    }

    /// The minimum counter; 0 while free counters remain.
    #[inline]
    pub fn min(&self) -> u64 {
        self.heap.peek_min().count
    }

    pub fn estimate(&self, e: ElementId) -> Option<u64> {
        self.heap.get(e)
    }

    pub fn capacity(&self) -> usize {
        self.heap.capacity()
    }

    pub fn padded_capacity(&self) -> usize {
        self.heap.padded_len()
    }

    /// Number of distinct tracked elements.
    pub fn live(&self) -> usize {
        self.heap.len()
    }

    /// Sum of all applied weights, which equals the sum of all counts.
    pub fn total_weight(&self) -> u64 {
        self.total
    }

    pub fn counters(&self) -> impl Iterator<Item = Counter> + '_ {
        self.heap.counters()
    }

    pub fn last_query_comparisons(&self) -> usize {
        self.heap.comparisons()
    }

    pub fn heap(&self) -> &MinMaxHeap {
        &self.heap
    }
}
