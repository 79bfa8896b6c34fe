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

//! The multi-threaded frequent-elements engine.
//!
//! Each of the `T` threads owns one [`Qoss`] guarded by a [`TryLock`] and one
//! share of the element domain. Updates go through the delegation filters of
//! the [`FilterMatrix`]; owners fold handed-over filters into their synopsis
//! ([`Engine::process_pending`]); queries visit every synopsis in turn
//! ([`Engine::query`]).
//!
//! The pipeline is written as small non-blocking steps. [`Worker`] strings
//! them together with spin-waits for real threads, and [`sim::Simulation`]
//! drives the very same steps from a scripted interleaving on one thread.

pub mod run;
pub mod sim;

use std::sync::atomic::{AtomicBool, Ordering};

use crossbeam_utils::{Backoff, CachePadded};
use serde::{Deserialize, Serialize};

use crate::delegation::{FilterInsert, FilterMatrix, FilterState, OwnerMap};
use crate::error::{invalid, Error, Result};
use crate::heap::{padded_size, ElementId, NONE};
use crate::lock::{TryLock, TryLockGuard};
use crate::oracle::{counters_for, zipf_counters, ZipfParams};
use crate::qoss::{Qoss, QueryResultEntry};

/// How many counters each per-thread synopsis gets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Sizing {
    /// `ceil(1 / (T * epsilon))` per instance; no distribution assumption.
    General,
    /// `ceil((1 / (T * epsilon))^(1/a))` per instance; valid for Zipf input
    /// with skew `a > 1`.
    Zipf { a: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub epsilon: f64,
    pub phi: f64,
    pub threads: usize,
    /// Distinct slots per delegation filter (`D`).
    pub filter_slots: usize,
    /// Bound on buffered counts per filter and handover period (`E`).
    pub handover_bound: u64,
    pub owner_seed: u64,
    pub sizing: Sizing,
}

impl EngineConfig {
    pub const DEFAULT_FILTER_SLOTS: usize = 16;
    pub const DEFAULT_HANDOVER_BOUND: u64 = 1000;
    pub const DEFAULT_OWNER_SEED: u64 = 0x9e37_79b9_7f4a_7c15;

    pub fn new(epsilon: f64, phi: f64, threads: usize) -> Self {
        EngineConfig {
            epsilon,
            phi,
            threads,
            filter_slots: Self::DEFAULT_FILTER_SLOTS,
            handover_bound: Self::DEFAULT_HANDOVER_BOUND,
            owner_seed: Self::DEFAULT_OWNER_SEED,
            sizing: Sizing::General,
        }
    }

    pub fn with_filters(mut self, slots: usize, handover_bound: u64) -> Self {
        self.filter_slots = slots;
        self.handover_bound = handover_bound;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.owner_seed = seed;
        self
    }

    pub fn with_sizing(mut self, sizing: Sizing) -> Self {
        self.sizing = sizing;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon <= self.phi && self.phi < 1.0) {
            return Err(invalid(format!(
                "need 0 < epsilon <= phi < 1, got epsilon={} phi={}",
                self.epsilon, self.phi
            )));
        }
        if self.threads == 0 {
            return Err(invalid("thread count must be positive"));
        }
        if self.filter_slots == 0 {
            return Err(invalid("filter slots D must be positive"));
        }
        if self.handover_bound == 0 {
            return Err(invalid("handover bound E must be positive"));
        }
        if let Sizing::Zipf { a } = self.sizing {
            if a.is_nan() || a <= 1.0 {
                return Err(invalid(format!("Zipf sizing requires a > 1 (got {a}); use general sizing")));
            }
        }
        Ok(())
    }

    /// Requested counters per synopsis, before padding.
    pub fn counters_per_instance(&self) -> Result<usize> {
        self.validate()?;
        match self.sizing {
            Sizing::General => Ok(counters_for(1.0 / (self.threads as f64 * self.epsilon))),
            Sizing::Zipf { a } => zipf_counters(&ZipfParams::new(a, u64::MAX)?, self.epsilon, self.threads),
        }
    }

    /// Allocated counters per synopsis after padding to a perfect tree.
    pub fn padded_counters_per_instance(&self) -> Result<usize> {
        Ok(padded_size(self.counters_per_instance()?))
    }
}

/// Result of a frequent-elements query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrequentElementsReport {
    pub entries: Vec<QueryResultEntry>,
    /// Stream length read at the start of the query (`N_S`).
    pub n_at_start: u64,
    /// `floor(N_S * phi)`; every entry's estimate is above it.
    pub threshold_used: u64,
}

impl FrequentElementsReport {
    pub fn estimate(&self, e: ElementId) -> Option<u64> {
        self.entries.iter().find(|r| r.element == e).map(|r| r.estimate)
    }
}

/// What happened to an element offered to a delegation filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Offer {
    Accepted,
    /// Accepted, and `c >= E` triggered a handover of all filters.
    AcceptedHandover,
    /// The target filter was full; all filters were handed over and the
    /// element must be offered again once they come back.
    Rejected,
}

pub struct Engine {
    config: EngineConfig,
    owners: OwnerMap,
    instances: Box<[CachePadded<TryLock<Qoss>>]>,
    matrix: FilterMatrix,
    claimed: Box<[AtomicBool]>,
    counters: usize,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine").field("config", &self.config).finish_non_exhaustive()
    }
}

impl Engine {
    pub fn new(config: EngineConfig) -> Result<Self> {
        let m = config.counters_per_instance()?;
        let t = config.threads;
        let instances = (0..t)
            .map(|_| Ok(CachePadded::new(TryLock::new(Qoss::with_capacity(m)?))))
            .collect::<Result<Vec<_>>>()?;
        Ok(Engine {
            config,
            owners: OwnerMap::new(t, config.owner_seed)?,
            instances: instances.into_boxed_slice(),
            matrix: FilterMatrix::new(t, config.filter_slots, config.handover_bound)?,
            claimed: (0..t).map(|_| AtomicBool::new(false)).collect(),
            counters: m,
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn threads(&self) -> usize {
        self.config.threads
    }

    pub fn owner_map(&self) -> &OwnerMap {
        &self.owners
    }

    #[inline]
    pub fn owner_of(&self, e: ElementId) -> usize {
        self.owners.owner_of(e)
    }

    pub fn matrix(&self) -> &FilterMatrix {
        &self.matrix
    }

    pub fn counters_per_instance(&self) -> usize {
        self.counters
    }

    /// Sum of `N[j]` over all threads.
    pub fn total_processed(&self) -> u64 {
        self.matrix.total_processed()
    }

    fn check_thread(&self, j: usize) -> Result<()> {
        if j < self.config.threads {
            Ok(())
        } else {
            Err(invalid(format!("thread index {j} out of range for T={}", self.config.threads)))
        }
    }

    /// Claims the update role of thread `j`. Only one [`Worker`] per thread
    /// may exist at a time.
    pub fn worker(&self, j: usize) -> Result<Worker<'_>> {
        self.check_thread(j)?;
        if self.claimed[j].swap(true, Ordering::Acquire) {
            return Err(Error::Precondition(format!("worker {j} is already claimed")));
        }
        Ok(Worker { engine: self, thread: j })
    }

    pub(crate) fn claim_all(&self) -> Result<()> {
        for j in 0..self.threads() {
            if self.claimed[j].swap(true, Ordering::Acquire) {
                for k in 0..j {
                    self.claimed[k].store(false, Ordering::Release);
                }
                return Err(Error::Precondition(format!("worker {j} is already claimed")));
            }
        }
        Ok(())
    }

    pub(crate) fn release_all(&self) {
        for c in self.claimed.iter() {
            c.store(false, Ordering::Release);
        }
    }

    pub(crate) fn lock_cell(&self, i: usize) -> &TryLock<Qoss> {
        &self.instances[i]
    }

    /// Tries to lock thread `i`'s synopsis.
    pub fn try_lock(&self, i: usize) -> Option<TryLockGuard<'_, Qoss>> {
        self.instances[i].try_lock()
    }

    /// Mutable access to a synopsis when the engine is not shared.
    pub fn instance_mut(&mut self, i: usize) -> &mut Qoss {
        self.instances[i].get_mut()
    }

    /// Sum of the weights folded into all synopses.
    pub fn tracked_total(&mut self) -> u64 {
        self.instances.iter_mut().map(|l| l.get_mut().total_weight()).sum()
    }

    /// Offers `e` to the filter reserved for `(owner(e), j)`.
    ///
    /// # Safety
    ///
    /// The caller must be the only context acting as thread `j`'s updater.
    #[inline]
    pub(crate) unsafe fn offer(&self, j: usize, e: ElementId) -> Result<Offer> {
        let owner = self.owners.owner_of(e);
        match self.matrix.insert(owner, j, e)? {
            FilterInsert::Inserted => {
                if self.matrix.since_handover(j) >= self.config.handover_bound {
                    self.matrix.handover_all(j);
                    Ok(Offer::AcceptedHandover)
                } else {
                    Ok(Offer::Accepted)
                }
            }
            FilterInsert::Full => {
                self.matrix.handover_all(j);
                Ok(Offer::Rejected)
            }
        }
    }

    /// Folds the filters waiting in thread `i`'s queue into its synopsis.
    ///
    /// Returns the number of filters drained; 0 if none were ready or the
    /// synopsis lock was taken.
    pub fn process_pending(&self, i: usize) -> usize {
        self.process_pending_with(i, |_, _| {})
    }

    pub(crate) fn process_pending_with<F: FnMut(ElementId, u64)>(&self, i: usize, mut observe: F) -> usize {
        if !self.matrix.has_pending(i) {
            return 0;
        }
        let Some(mut qoss) = self.instances[i].try_lock() else {
            return 0;
        };
        let mut drained = 0;
        loop {
            let more = self
                .matrix
                .drain_next(i, |e, w| {
                    observe(e, w);
                    qoss.update(e, w).expect("filters never hold NONE or zero counts");
                })
                .expect("queued filters are always handed over");
            if !more {
                break;
            }
            drained += 1;
        }
        drained
    }

    /// Reports every element whose estimate exceeds `floor(N_S * phi)`,
    /// where `N_S` is the stream length at the start of the query.
    ///
    /// `q` is the calling thread; while a synopsis is locked the caller
    /// works off its own pending filters and retries. Counts still buffered
    /// in filters are not included.
    pub fn query(&self, q: usize) -> Result<FrequentElementsReport> {
        self.check_thread(q)?;
        let n_at_start = self.matrix.total_processed();
        let threshold = (n_at_start as f64 * self.config.phi).floor() as u64;
        let mut entries = Vec::new();
        for i in 0..self.threads() {
            let backoff = Backoff::new();
            loop {
                if let Some(mut qoss) = self.instances[i].try_lock() {
                    entries.extend(qoss.query(threshold));
                    break;
                }
                if self.process_pending(q) == 0 {
                    backoff.snooze();
                }
            }
        }
        Ok(FrequentElementsReport { entries, n_at_start, threshold_used: threshold })
    }

    /// Hands over and drains every filter so that all counts are visible
    /// to queries.
    ///
    /// Fails if any [`Worker`] is alive.
    pub fn flush(&self) -> Result<()> {
        self.claim_all()?;
        // SAFETY: all updater roles are claimed by this call
        unsafe { self.drain_all_with(|_, _, _| {}) };
        self.release_all();
        Ok(())
    }

    /// Hands over every filter and drains until all have come back.
    ///
    /// # Safety
    ///
    /// The caller must hold every updater role.
    pub(crate) unsafe fn drain_all_with<F: FnMut(usize, ElementId, u64)>(&self, mut observe: F) {
        for j in 0..self.threads() {
            self.matrix.handover_all(j);
        }
        let backoff = Backoff::new();
        loop {
            for i in 0..self.threads() {
                self.process_pending_with(i, |e, w| observe(i, e, w));
            }
            if (0..self.threads()).all(|j| self.matrix.try_complete_handover(j)) {
                break;
            }
            backoff.snooze();
        }
    }
}

/// The update role of one thread.
pub struct Worker<'a> {
    engine: &'a Engine,
    thread: usize,
}

impl<'a> Worker<'a> {
    pub fn thread(&self) -> usize {
        self.thread
    }

    pub fn engine(&self) -> &'a Engine {
        self.engine
    }

    /// Records one occurrence of `e`.
    ///
    /// Blocks (doing useful work) when a handover round is in flight until
    /// every filter of this thread has been drained by its owner.
    #[inline]
    pub fn update(&mut self, e: ElementId) -> Result<()> {
        if e == NONE {
            return Err(invalid("the reserved NONE id cannot be counted"));
        }
        self.engine.process_pending(self.thread);
        loop {
            // SAFETY: `self` holds the claim on this thread's updater role
            match unsafe { self.engine.offer(self.thread, e)? } {
                Offer::Accepted => return Ok(()),
                Offer::AcceptedHandover => {
                    self.await_handover();
                    return Ok(());
                }
                Offer::Rejected => self.await_handover(),
            }
        }
    }

    /// Hands over all non-empty filters and waits until they are drained.
    pub fn flush(&mut self) {
        // SAFETY: `self` holds the claim on this thread's updater role
        unsafe { self.engine.matrix.handover_all(self.thread) };
        self.await_handover();
    }

    /// Drains this thread's own pending filters.
    pub fn process_pending(&self) -> usize {
        self.engine.process_pending(self.thread)
    }

    pub fn query(&self) -> FrequentElementsReport {
        self.engine.query(self.thread).expect("worker index is in range")
    }

    /// Spins until every filter of this thread is back. Between checks it
    /// drains its own queue and then helps the owners still holding its
    /// filters, so a finished or idle owner cannot stall it.
    fn await_handover(&self) {
        let j = self.thread;
        let backoff = Backoff::new();
        while !self.engine.matrix.try_complete_handover(j) {
            let mut drained = self.engine.process_pending(j);
            if drained == 0 {
                for i in (0..self.engine.threads()).filter(|&i| i != j) {
                    if self.engine.matrix.state(i, j) == FilterState::HandedOver {
                        drained += self.engine.process_pending(i);
                    }
                }
            }
            if drained == 0 {
                backoff.snooze();
            }
        }
    }
}

impl Drop for Worker<'_> {
    fn drop(&mut self) {
        self.engine.claimed[self.thread].store(false, Ordering::Release);
    }
}
