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

//! Array-backed binary min-max heap of counters.
//!
//! Even levels (the root is level 0) are min levels and odd levels are max
//! levels: a counter on a min level is no larger than any descendant, a
//! counter on a max level is no smaller. The heap owns an element index so a
//! counter can be located in O(1) and re-positioned in O(log m).
//!
//! Counters are ordered by `(count, stamp)`, where `stamp` is the value of a
//! per-heap clock taken when the counter was last written. The stamp makes
//! every key distinct, so the minimum is unique: among counters with equal
//! counts the least recently written one sits at the root and is the one
//! evicted by [`MinMaxHeap::replace_min`].

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Opaque element identity.
pub type ElementId = u64;

/// Reserved id marking an unused slot. Never produced by workloads.
pub const NONE: ElementId = u64::MAX;

/// An `(element, estimated count)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Counter {
    pub element: ElementId,
    pub count: u64,
}

impl Counter {
    pub const SENTINEL: Counter = Counter { element: NONE, count: 0 };

    pub fn new(element: ElementId, count: u64) -> Self {
        Counter { element, count }
    }
}

#[derive(Debug, Clone, Copy)]
struct Slot {
    element: ElementId,
    count: u64,
    stamp: u64,
}

impl Slot {
    const EMPTY: Slot = Slot { element: NONE, count: 0, stamp: 0 };

    #[inline]
    fn key(&self) -> (u64, u64) {
        (self.count, self.stamp)
    }

    #[inline]
    fn counter(&self) -> Counter {
        Counter { element: self.element, count: self.count }
    }
}

#[inline]
fn is_min_level(i: usize) -> bool {
    (usize::BITS - 1 - (i + 1).leading_zeros()).is_multiple_of(2)
}

#[inline]
fn parent(i: usize) -> usize {
    (i - 1) / 2
}

/// Smallest perfect binary tree size `2^k - 1` that holds `capacity` slots.
pub fn padded_size(capacity: usize) -> usize {
    (capacity + 1).next_power_of_two() - 1
}

#[derive(Debug, Clone)]
pub struct MinMaxHeap {
    slots: Vec<Slot>,
    len: usize,
    capacity: usize,
    index: FxHashMap<ElementId, usize>,
    clock: u64,
    comparisons: usize,
}

impl MinMaxHeap {
    /// Creates a heap holding at most `capacity` live counters.
    ///
    /// Storage is padded to a perfect tree of [`padded_size`] slots; slots
    /// without a live counter read as [`Counter::SENTINEL`].
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(invalid("heap capacity must be at least 1"));
        }
        let padded = padded_size(capacity);
        let mut index = FxHashMap::default();
        index.reserve(capacity);
        Ok(MinMaxHeap {
            slots: vec![Slot::EMPTY; padded],
            len: 0,
            capacity,
            index,
            clock: 0,
            comparisons: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Number of allocated slots, `2^k - 1 >= capacity`.
    pub fn padded_len(&self) -> usize {
        self.slots.len()
    }

    /// Number of live counters.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn is_full(&self) -> bool {
        self.len == self.capacity
    }

    /// The minimum counter. While free slots remain this is the sentinel
    /// with count 0.
    #[inline]
    pub fn peek_min(&self) -> Counter {
        if self.len < self.capacity {
            Counter::SENTINEL
        } else {
            self.slots[0].counter()
        }
    }

    /// The live counter with the largest count, if any.
    pub fn peek_max(&self) -> Option<Counter> {
        match self.len {
            0 => None,
            1 => Some(self.slots[0].counter()),
            2 => Some(self.slots[1].counter()),
            _ => {
                let i = if self.slots[1].key() >= self.slots[2].key() { 1 } else { 2 };
                Some(self.slots[i].counter())
            }
        }
    }

    #[inline]
    pub fn get(&self, element: ElementId) -> Option<u64> {
        self.index.get(&element).map(|&i| self.slots[i].count)
    }

    #[inline]
    pub fn contains(&self, element: ElementId) -> bool {
        self.index.contains_key(&element)
    }

    /// Slot position of a tracked element.
    pub fn position(&self, element: ElementId) -> Option<usize> {
        self.index.get(&element).copied()
    }

    /// Counter stored at slot `i`, or the sentinel for a free slot.
    pub fn slot(&self, i: usize) -> Counter {
        if i < self.len {
            self.slots[i].counter()
        } else {
            Counter::SENTINEL
        }
    }

    /// Live counters in slot order.
    pub fn counters(&self) -> impl Iterator<Item = Counter> + '_ {
        self.slots[..self.len].iter().map(Slot::counter)
    }

    /// Count-vs-threshold comparisons made by the last [`threshold_scan`].
    ///
    /// [`threshold_scan`]: MinMaxHeap::threshold_scan
    pub fn comparisons(&self) -> usize {
        self.comparisons
    }

    /// Evicts the minimum counter and installs `(element, new_count)`.
    ///
    /// While free slots remain the new counter fills one and nothing is
    /// evicted. Returns the evicted live counter.
    pub fn replace_min(&mut self, element: ElementId, new_count: u64) -> Result<Option<Counter>> {
        if element == NONE {
            return Err(invalid("the reserved NONE id cannot be stored"));
        }
        if self.index.contains_key(&element) {
            return Err(Error::Precondition(format!(
                "element {element} is already tracked; increase its count instead"
            )));
        }
        let min = self.peek_min().count;
        if new_count < min {
            return Err(Error::Precondition(format!(
                "new count {new_count} is below the current minimum {min}"
            )));
        }
        let stamp = self.tick();
        let slot = Slot { element, count: new_count, stamp };
        if self.len < self.capacity {
            let i = self.len;
            self.slots[i] = slot;
            self.index.insert(element, i);
            self.len += 1;
            self.bubble_up(i);
            return Ok(None);
        }
        let evicted = self.slots[0];
        self.index.remove(&evicted.element);
        self.slots[0] = slot;
        self.index.insert(element, 0);
        self.trickle_down_min(0);
        Ok(Some(evicted.counter()))
    }

    /// Adds `w` to the count of a tracked element.
    pub fn increase_count(&mut self, element: ElementId, w: u64) -> Result<u64> {
        if w == 0 {
            return Err(invalid("weight must be positive"));
        }
        let i = *self.index.get(&element).ok_or(Error::NotFound(element))?;
        let stamp = self.tick();
        let slot = &mut self.slots[i];
        debug_assert!(slot.count.checked_add(w).is_some(), "counter overflow");
        slot.count += w;
        slot.stamp = stamp;
        let count = slot.count;
        let mut pos = i;
        if is_min_level(i) {
            self.trickle_down_min(i);
            pos = self.index[&element];
        }
        self.bubble_up(pos);
        Ok(count)
    }

    /// Returns every live counter whose count exceeds `threshold`.
    ///
    /// Max-level counters are examined first, starting at the root's
    /// children. A max-level counter at or below the threshold bounds its
    /// whole subtree, so the walk stops there. A min-level counter is only
    /// compared when one of its max-level children exceeded the threshold,
    /// or when it is a leaf under a reported counter. The number of
    /// comparisons is at most `5 * |result| + 2`.
    pub fn threshold_scan(&mut self, threshold: u64) -> Vec<Counter> {
        let mut out = Vec::new();
        let mut comparisons = 0usize;
        if self.len == 0 {
            self.comparisons = 0;
            return out;
        }
        let mut stack: Vec<usize> = Vec::new();
        self.scan_min_node(0, threshold, &mut comparisons, &mut out, &mut stack);
        while let Some(v) = stack.pop() {
            for c in [2 * v + 1, 2 * v + 2] {
                if c < self.len {
                    self.scan_min_node(c, threshold, &mut comparisons, &mut out, &mut stack);
                }
            }
        }
        self.comparisons = comparisons;
        out
    }

    fn scan_min_node(
        &self,
        c: usize,
        threshold: u64,
        comparisons: &mut usize,
        out: &mut Vec<Counter>,
        stack: &mut Vec<usize>,
    ) {
        let first = 2 * c + 1;
        if first >= self.len {
            *comparisons += 1;
            if self.slots[c].count > threshold {
                out.push(self.slots[c].counter());
            }
            return;
        }
        let mut any = false;
        for g in [first, first + 1] {
            if g < self.len {
                *comparisons += 1;
                if self.slots[g].count > threshold {
                    out.push(self.slots[g].counter());
                    stack.push(g);
                    any = true;
                }
            }
        }
        // no max child exceeded the threshold: skip c
        if any {
            *comparisons += 1;
            if self.slots[c].count > threshold {
                out.push(self.slots[c].counter());
            }
        }
    }

    /// Verifies the min-max ordering and the index. Meant for tests and
    /// debugging; runs in O(m).
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        if self.index.len() != self.len {
            return Err(format!("index holds {} entries for {} live slots", self.index.len(), self.len));
        }
        for i in 0..self.len {
            let s = &self.slots[i];
            if s.element == NONE {
                return Err(format!("live slot {i} holds NONE"));
            }
            if self.index.get(&s.element) != Some(&i) {
                return Err(format!("index does not map element {} to slot {i}", s.element));
            }
            let min_level = is_min_level(i);
            let first_child = 2 * i + 1;
            let kin = [first_child, first_child + 1]
                .into_iter()
                .chain(2 * first_child + 1..=2 * first_child + 4);
            for d in kin.filter(|&d| d < self.len) {
                let ok = if min_level {
                    s.key() <= self.slots[d].key()
                } else {
                    s.key() >= self.slots[d].key()
                };
                if !ok {
                    return Err(format!(
                        "{} level slot {i} (count {}) out of order with descendant {d} (count {})",
                        if min_level { "min" } else { "max" },
                        s.count,
                        self.slots[d].count
                    ));
                }
            }
        }
        Ok(())
    }

    #[inline]
    fn tick(&mut self) -> u64 {
        self.clock += 1;
        self.clock
    }

    #[inline]
    fn less(&self, a: usize, b: usize) -> bool {
        self.slots[a].key() < self.slots[b].key()
    }

    #[inline]
    fn swap(&mut self, a: usize, b: usize) {
        self.slots.swap(a, b);
        *self.index.get_mut(&self.slots[a].element).expect("indexed") = a;
        *self.index.get_mut(&self.slots[b].element).expect("indexed") = b;
    }

    fn bubble_up(&mut self, i: usize) {
        if i == 0 {
            return;
        }
        let p = parent(i);
        if is_min_level(i) {
            if self.less(p, i) {
                self.swap(i, p);
                self.bubble_up_max(p);
            } else {
                self.bubble_up_min(i);
            }
        } else if self.less(i, p) {
            self.swap(i, p);
            self.bubble_up_min(p);
        } else {
            self.bubble_up_max(i);
        }
    }

    fn bubble_up_min(&mut self, mut i: usize) {
        while i >= 3 {
            let gp = parent(parent(i));
            if !self.less(i, gp) {
                break;
            }
            self.swap(i, gp);
            i = gp;
        }
    }

    fn bubble_up_max(&mut self, mut i: usize) {
        while i >= 3 {
            let gp = parent(parent(i));
            if !self.less(gp, i) {
                break;
            }
            self.swap(i, gp);
            i = gp;
        }
    }

    /// Sinks the counter at min-level slot `i`. Among equal keys the lower
    /// slot wins, which never happens in practice since stamps are unique.
    fn trickle_down_min(&mut self, mut i: usize) {
        loop {
            let first_child = 2 * i + 1;
            if first_child >= self.len {
                return;
            }
            let mut m = first_child;
            let candidates = [first_child + 1]
                .into_iter()
                .chain(2 * first_child + 1..=2 * first_child + 4);
            for d in candidates {
                if d < self.len && self.less(d, m) {
                    m = d;
                }
            }
            if m > first_child + 1 {
                if !self.less(m, i) {
                    return;
                }
                self.swap(m, i);
                let p = parent(m);
                if self.less(p, m) {
                    self.swap(m, p);
                }
                i = m;
            } else {
                if self.less(m, i) {
                    self.swap(m, i);
                }
                return;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn heap_with(capacity: usize, counters: &[(u64, u64)]) -> MinMaxHeap {
        let mut h = MinMaxHeap::new(capacity).unwrap();
        for &(e, c) in counters {
            h.replace_min(e, c).unwrap();
        }
        h.check_invariants().unwrap();
        h
    }

    #[test]
    fn new_pads_to_perfect_tree() {
        assert_eq!(MinMaxHeap::new(1).unwrap().padded_len(), 1);
        assert_eq!(MinMaxHeap::new(5).unwrap().padded_len(), 7);
        assert_eq!(MinMaxHeap::new(7).unwrap().padded_len(), 7);
        assert_eq!(MinMaxHeap::new(8).unwrap().padded_len(), 15);
        assert!(matches!(MinMaxHeap::new(0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn fresh_heap_min_is_sentinel() {
        let h = MinMaxHeap::new(1).unwrap();
        assert_eq!(h.peek_min(), Counter::SENTINEL);
        assert_eq!(h.slot(0), Counter::SENTINEL);
    }

    #[test]
    fn peek_min_after_replacement() {
        let mut h = heap_with(3, &[(1, 5), (2, 9), (3, 7)]);
        assert_eq!(h.peek_min().count, 5);
        let evicted = h.replace_min(4, 10).unwrap();
        assert_eq!(evicted, Some(Counter::new(1, 5)));
        assert_eq!(h.peek_min().count, 7);
        h.check_invariants().unwrap();
    }

    #[test]
    fn replace_min_installs_new_counter() {
        let mut h = heap_with(3, &[(1, 5), (2, 9), (3, 7)]);
        h.replace_min(4, 6).unwrap();
        let mut got: Vec<_> = h.counters().collect();
        got.sort();
        assert_eq!(got, vec![Counter::new(2, 9), Counter::new(3, 7), Counter::new(4, 6)]);
        assert_eq!(h.peek_min(), Counter::new(4, 6));
        assert!(!h.contains(1));
    }

    #[test]
    fn replace_min_single_slot() {
        let mut h = heap_with(1, &[(1, 3)]);
        assert_eq!(h.replace_min(2, 4).unwrap(), Some(Counter::new(1, 3)));
        assert_eq!(h.counters().collect::<Vec<_>>(), vec![Counter::new(2, 4)]);
    }

    #[test]
    fn equal_minima_evict_the_root() {
        let mut h = heap_with(3, &[(1, 5), (2, 5), (3, 5)]);
        let root = h.slot(0).element;
        assert_eq!(root, 1, "oldest of the tied counters sits at the root");
        let evicted = h.replace_min(4, 6).unwrap().unwrap();
        assert_eq!(evicted.element, root);
    }

    #[test]
    fn replace_min_rejects_tracked_and_low_counts() {
        let mut h = heap_with(2, &[(1, 5), (2, 9)]);
        assert!(matches!(h.replace_min(1, 10), Err(Error::Precondition(_))));
        assert!(matches!(h.replace_min(3, 4), Err(Error::Precondition(_))));
        assert!(matches!(h.replace_min(NONE, 10), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn increase_moves_counter_to_max_level() {
        let mut h = heap_with(2, &[(1, 5), (2, 9)]);
        h.increase_count(1, 10).unwrap();
        assert_eq!(h.get(1), Some(15));
        let pos = h.position(1).unwrap();
        assert!(!is_min_level(pos));
        assert_eq!(h.peek_min(), Counter::new(2, 9));
        assert_eq!(h.peek_max(), Some(Counter::new(1, 15)));
        h.check_invariants().unwrap();
    }

    #[test]
    fn increase_singleton_by_one() {
        let mut h = heap_with(1, &[(7, 1)]);
        h.increase_count(7, 1).unwrap();
        assert_eq!(h.slot(0), Counter::new(7, 2));
    }

    #[test]
    fn increase_min_past_max() {
        let mut h = heap_with(7, &[(1, 1), (2, 10), (3, 9), (4, 4), (5, 5), (6, 6), (7, 7)]);
        h.increase_count(1, 100).unwrap();
        h.check_invariants().unwrap();
        assert_eq!(h.peek_max(), Some(Counter::new(1, 101)));
        assert_eq!(h.peek_min().count, 4);
    }

    #[test]
    fn increase_unknown_element() {
        let mut h = heap_with(2, &[(1, 1)]);
        assert!(matches!(h.increase_count(9, 1), Err(Error::NotFound(9))));
    }

    #[test]
    fn scan_examples() {
        let mut h = heap_with(7, &[(1, 1), (2, 1), (3, 1), (4, 1), (5, 10), (6, 9), (7, 8)]);
        let mut got: Vec<_> = h.threshold_scan(5).into_iter().map(|c| c.count).collect();
        got.sort();
        assert_eq!(got, vec![8, 9, 10]);
        assert!(h.comparisons() <= 5 * 3 + 2);

        assert!(h.threshold_scan(10).is_empty());
        assert!(h.comparisons() <= 2);

        assert_eq!(h.threshold_scan(0).len(), 7);
    }

    #[test]
    fn scan_skips_free_slots() {
        let mut h = heap_with(7, &[(1, 3), (2, 4)]);
        let got = h.threshold_scan(0);
        assert_eq!(got.len(), 2);
        assert!(got.iter().all(|c| c.element != NONE));
    }
}
