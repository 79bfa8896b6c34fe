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

//! Domain splitting and delegation filters.
//!
//! Every element has exactly one owner thread. A thread that reads an element
//! it does not own buffers it in a small filter reserved for the pair
//! `(owner, source)`; filters are handed to their owners in batches and the
//! owner folds them into its synopsis as weighted updates.

use std::cell::UnsafeCell;
use std::sync::atomic::{AtomicU64, AtomicU8, Ordering};

use crossbeam_queue::SegQueue;
use crossbeam_utils::CachePadded;
use rustc_hash::FxHashMap;

use crate::error::{invalid, Error, Result};
use crate::heap::ElementId;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seeded partition of the element domain over `T` threads.
///
/// `owner(e) = (mix64(e ^ seed) * T) >> 64`: a full-avalanche 64-bit mix
/// reduced by multiply-shift, which is unbiased for any `T`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OwnerMap {
    threads: usize,
    seed: u64,
}

impl OwnerMap {
    pub fn new(threads: usize, seed: u64) -> Result<Self> {
        if threads == 0 {
            return Err(invalid("thread count must be positive"));
        }
        Ok(OwnerMap { threads, seed })
    }

    #[inline]
    pub fn owner_of(&self, e: ElementId) -> usize {
        ((mix64(e ^ self.seed) as u128 * self.threads as u128) >> 64) as usize
    }

    pub fn threads(&self) -> usize {
        self.threads
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// Lifecycle of a filter. `Empty` and `Open` filters belong to their source
/// thread; a `HandedOver` filter belongs to its owner until drained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum FilterState {
    Open = 0,
    HandedOver = 1,
    Empty = 2,
}

impl FilterState {
    fn from_u8(v: u8) -> Self {
        match v {
            0 => FilterState::Open,
            1 => FilterState::HandedOver,
            _ => FilterState::Empty,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterInsert {
    Inserted,
    /// The element is new and all `D` slots are taken; nothing changed.
    Full,
}

/// Fixed-capacity element/count buffer stored as two parallel arrays.
#[derive(Debug, Clone)]
pub struct DelegationFilter {
    elements: Box<[ElementId]>,
    counts: Box<[u64]>,
    distinct: usize,
    total: u64,
    state: FilterState,
}

impl DelegationFilter {
    pub fn new(slots: usize) -> Result<Self> {
        if slots == 0 {
            return Err(invalid("a filter needs at least one slot"));
        }
        Ok(DelegationFilter {
            elements: vec![0; slots].into_boxed_slice(),
            counts: vec![0; slots].into_boxed_slice(),
            distinct: 0,
            total: 0,
            state: FilterState::Empty,
        })
    }

    /// Counts one occurrence of `e` by linear search over occupied slots.
    #[inline]
    pub fn insert(&mut self, e: ElementId) -> Result<FilterInsert> {
        if self.state == FilterState::HandedOver {
            return Err(Error::Contract("insert into a handed-over filter".into()));
        }
        let occupied = &self.elements[..self.distinct];
        if let Some(i) = occupied.iter().position(|&x| x == e) {
            self.counts[i] += 1;
        } else if self.distinct < self.elements.len() {
            self.elements[self.distinct] = e;
            self.counts[self.distinct] = 1;
            self.distinct += 1;
        } else {
            return Ok(FilterInsert::Full);
        }
        self.total += 1;
        self.state = FilterState::Open;
        Ok(FilterInsert::Inserted)
    }

    /// Marks a non-empty open filter as handed over. Returns whether the
    /// state changed.
    pub fn hand_over(&mut self) -> bool {
        if self.state == FilterState::Open && self.distinct > 0 {
            self.state = FilterState::HandedOver;
            true
        } else {
            false
        }
    }

    /// Feeds every `(element, count)` pair to `f` and resets the filter.
    pub fn drain_with<F: FnMut(ElementId, u64)>(&mut self, mut f: F) -> Result<()> {
        if self.state != FilterState::HandedOver {
            return Err(Error::Contract(format!("drain of a filter in state {:?}", self.state)));
        }
        for i in 0..self.distinct {
            f(self.elements[i], self.counts[i]);
        }
        self.distinct = 0;
        self.total = 0;
        self.state = FilterState::Empty;
        Ok(())
    }

    pub fn drain(&mut self) -> Result<Vec<(ElementId, u64)>> {
        let mut out = Vec::with_capacity(self.distinct);
        self.drain_with(|e, c| out.push((e, c)))?;
        Ok(out)
    }

    pub fn entries(&self) -> impl Iterator<Item = (ElementId, u64)> + '_ {
        self.elements[..self.distinct].iter().copied().zip(self.counts[..self.distinct].iter().copied())
    }

    pub fn count_of(&self, e: ElementId) -> u64 {
        self.entries().find(|&(x, _)| x == e).map_or(0, |(_, c)| c)
    }

    pub fn distinct(&self) -> usize {
        self.distinct
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn slots(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.distinct == 0
    }

    pub fn state(&self) -> FilterState {
        self.state
    }
}

/// Whether thread `j` must hand over all its filters now.
#[inline]
pub fn should_handover(since_handover: u64, bound_e: u64, last_insert_full: bool) -> bool {
    last_insert_full || since_handover >= bound_e
}

struct FilterCell {
    /// Publication flag mirroring `filter.state` across threads.
    state: AtomicU8,
    filter: UnsafeCell<DelegationFilter>,
}

/// All `T x T` filters plus the per-owner handover queues and the
/// per-thread progress counters `N[j]` and `c[j]`.
///
/// Filter `(owner, source)` is written only by `source` while `Empty` or
/// `Open`, and read and reset only by whoever popped it from `owner`'s queue
/// while `HandedOver`. The atomic state is stored with release ordering after
/// each handoff and loaded with acquire ordering before touching the data.
pub struct FilterMatrix {
    threads: usize,
    bound_e: u64,
    cells: Box<[FilterCell]>,
    pending: Box<[CachePadded<SegQueue<usize>>]>,
    processed: Box<[CachePadded<AtomicU64>]>,
    since_handover: Box<[CachePadded<AtomicU64>]>,
}

// SAFETY: filter data is only reached through the ownership protocol above;
// all cross-thread handoffs go through `state` with release/acquire ordering.
unsafe impl Sync for FilterMatrix {}

impl FilterMatrix {
    pub fn new(threads: usize, slots_d: usize, bound_e: u64) -> Result<Self> {
        if threads == 0 {
            return Err(invalid("thread count must be positive"));
        }
        if bound_e == 0 {
            return Err(invalid("handover bound E must be positive"));
        }
        let cells = (0..threads * threads)
            .map(|_| {
                Ok(FilterCell {
                    state: AtomicU8::new(FilterState::Empty as u8),
                    filter: UnsafeCell::new(DelegationFilter::new(slots_d)?),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let counters = || (0..threads).map(|_| CachePadded::new(AtomicU64::new(0))).collect::<Vec<_>>();
        Ok(FilterMatrix {
            threads,
            bound_e,
            cells: cells.into_boxed_slice(),
            pending: (0..threads).map(|_| CachePadded::new(SegQueue::new())).collect(),
            processed: counters().into_boxed_slice(),
            since_handover: counters().into_boxed_slice(),
        })
    }

    #[inline]
    fn cell(&self, owner: usize, source: usize) -> &FilterCell {
        &self.cells[owner * self.threads + source]
    }

    pub fn threads(&self) -> usize {
        self.threads
    }

    pub fn bound_e(&self) -> u64 {
        self.bound_e
    }

    pub fn state(&self, owner: usize, source: usize) -> FilterState {
        FilterState::from_u8(self.cell(owner, source).state.load(Ordering::Acquire))
    }

    /// Inserts `e` into filter `(owner, source)`. On success `N[source]` and
    /// `c[source]` grow by one.
    ///
    /// # Safety
    ///
    /// The caller must be the only context acting as `source`.
    #[inline]
    pub(crate) unsafe fn insert(&self, owner: usize, source: usize, e: ElementId) -> Result<FilterInsert> {
        let cell = self.cell(owner, source);
        if cell.state.load(Ordering::Acquire) == FilterState::HandedOver as u8 {
            return Err(Error::Contract("insert into a handed-over filter".into()));
        }
        let filter = &mut *cell.filter.get();
        let outcome = filter.insert(e)?;
        if outcome == FilterInsert::Inserted {
            cell.state.store(FilterState::Open as u8, Ordering::Relaxed);
            let n = &self.processed[source];
            n.store(n.load(Ordering::Relaxed) + 1, Ordering::Relaxed);
            let c = &self.since_handover[source];
            c.store(c.load(Ordering::Relaxed) + 1, Ordering::Relaxed);
        }
        Ok(outcome)
    }

    /// Hands every non-empty filter of `source` to its owner's queue.
    /// Returns the number of filters handed over.
    ///
    /// # Safety
    ///
    /// The caller must be the only context acting as `source`.
    pub(crate) unsafe fn handover_all(&self, source: usize) -> usize {
        let mut handed = 0;
        for owner in 0..self.threads {
            let cell = self.cell(owner, source);
            if cell.state.load(Ordering::Relaxed) != FilterState::Open as u8 {
                continue;
            }
            let filter = &mut *cell.filter.get();
            if filter.hand_over() {
                cell.state.store(FilterState::HandedOver as u8, Ordering::Release);
                self.pending[owner].push(source);
                handed += 1;
            }
        }
        handed
    }

    /// True when no filter of `source` is waiting on its owner.
    pub fn all_returned(&self, source: usize) -> bool {
        (0..self.threads).all(|owner| self.state(owner, source) != FilterState::HandedOver)
    }

    /// Completes a handover round for `source`: if every filter has come
    /// back, resets `c[source]` and returns true.
    pub fn try_complete_handover(&self, source: usize) -> bool {
        if self.all_returned(source) {
            self.since_handover[source].store(0, Ordering::Relaxed);
            true
        } else {
            false
        }
    }

    /// Pops one ready filter from `owner`'s queue and feeds its contents to
    /// `sink`. Returns false when the queue was empty.
    ///
    /// Popping transfers exclusive ownership of the filter, so this is safe
    /// from any context.
    pub(crate) fn drain_next<F: FnMut(ElementId, u64)>(&self, owner: usize, sink: F) -> Result<bool> {
        let Some(source) = self.pending[owner].pop() else {
            return Ok(false);
        };
        let cell = self.cell(owner, source);
        if cell.state.load(Ordering::Acquire) != FilterState::HandedOver as u8 {
            return Err(Error::Contract(format!("queued filter ({owner}, {source}) is not handed over")));
        }
        // SAFETY: the filter was popped from the queue, so no other context
        // reads it, and its source does not write it until it sees `Empty`.
        let filter = unsafe { &mut *cell.filter.get() };
        filter.drain_with(sink)?;
        cell.state.store(FilterState::Empty as u8, Ordering::Release);
        Ok(true)
    }

    pub fn has_pending(&self, owner: usize) -> bool {
        !self.pending[owner].is_empty()
    }

    pub fn pending_len(&self, owner: usize) -> usize {
        self.pending[owner].len()
    }

    /// `N[j]`: filter insertions made by thread `j`.
    #[inline]
    pub fn processed(&self, j: usize) -> u64 {
        self.processed[j].load(Ordering::Relaxed)
    }

    /// Sum of all `N[j]`, read once per thread.
    pub fn total_processed(&self) -> u64 {
        self.processed.iter().map(|n| n.load(Ordering::Relaxed)).sum()
    }

    /// `c[j]`: insertions by thread `j` since its last completed handover.
    #[inline]
    pub fn since_handover(&self, j: usize) -> u64 {
        self.since_handover[j].load(Ordering::Relaxed)
    }

    /// Reads a filter's contents.
    ///
    /// # Safety
    ///
    /// No other context may be writing or draining the filter.
    pub(crate) unsafe fn filter_unsync(&self, owner: usize, source: usize) -> &DelegationFilter {
        &*self.cell(owner, source).filter.get()
    }

    /// Per-element counts currently buffered in any filter (open or
    /// handed over), and the largest single-filter total.
    ///
    /// # Safety
    ///
    /// No other context may be touching any filter.
    pub(crate) unsafe fn buffered_unsync(&self) -> (FxHashMap<ElementId, u64>, u64) {
        let mut out = FxHashMap::default();
        let mut max_total = 0;
        for owner in 0..self.threads {
            for source in 0..self.threads {
                let f = self.filter_unsync(owner, source);
                max_total = max_total.max(f.total());
                for (e, c) in f.entries() {
                    *out.entry(e).or_insert(0) += c;
                }
            }
        }
        (out, max_total)
    }
}
