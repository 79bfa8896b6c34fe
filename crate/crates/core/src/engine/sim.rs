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

//! Deterministic single-threaded execution of the engine pipeline.
//!
//! A [`Simulation`] owns an [`Engine`] and plays all `T` threads from one
//! context. A script of [`Step`]s decides which thread acts next, so any
//! interleaving of updates, handovers, drains and query progress can be
//! reproduced exactly. Queries record the consistency window they ran in
//! together with the ground truth needed to check it.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Engine, EngineConfig, Offer};
use crate::error::{invalid, Result};
use crate::heap::{Counter, ElementId};
use crate::oracle::ExactCounts;
use crate::qoss::{Qoss, QueryResultEntry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    /// Consume the next input element, or make progress on a handover wait.
    Update,
    ProcessPending,
    /// Start a query, advance it by one lock step, or finish it.
    QueryStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Step {
    pub thread: usize,
    pub action: Action,
}

impl Step {
    pub fn new(thread: usize, action: Action) -> Self {
        Step { thread, action }
    }
}

/// Relative weights of the three actions in a random script.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScriptMix {
    pub update: u32,
    pub process_pending: u32,
    pub query_step: u32,
}

impl ScriptMix {
    pub const BALANCED: ScriptMix = ScriptMix { update: 8, process_pending: 3, query_step: 2 };
    /// Owners rarely drain, so filters sit handed over for long stretches.
    pub const DELAYED_HANDOVER: ScriptMix = ScriptMix { update: 16, process_pending: 1, query_step: 3 };
}

/// Draws `len` steps with threads chosen uniformly.
pub fn random_script<R: Rng + ?Sized>(rng: &mut R, threads: usize, len: usize, mix: ScriptMix) -> Vec<Step> {
    let total = mix.update + mix.process_pending + mix.query_step;
    assert!(threads > 0 && total > 0);
    (0..len)
        .map(|_| {
            let thread = rng.random_range(0..threads);
            let pick = rng.random_range(0..total);
            let action = if pick < mix.update {
                Action::Update
            } else if pick < mix.update + mix.process_pending {
                Action::ProcessPending
            } else {
                Action::QueryStep
            };
            Step { thread, action }
        })
        .collect()
}

/// A random script whose queries start only after roughly `warmup` input
/// elements have been consumed, followed by `len` mixed steps.
pub fn mid_stream_script<R: Rng + ?Sized>(
    rng: &mut R,
    threads: usize,
    warmup: usize,
    len: usize,
    mix: ScriptMix,
) -> Vec<Step> {
    let quiet = ScriptMix { query_step: 0, ..mix };
    let per_update = (mix.update + mix.process_pending) as f64 / mix.update.max(1) as f64;
    let mut script = random_script(rng, threads, (warmup as f64 * per_update).ceil() as usize, quiet);
    script.extend(random_script(rng, threads, len, mix));
    script
}

/// Cycles `Update` over all threads `rounds` times.
pub fn round_robin_script(threads: usize, rounds: usize) -> Vec<Step> {
    (0..rounds).flat_map(|_| (0..threads).map(|j| Step::new(j, Action::Update))).collect()
}

/// Splits `stream` into `parts` contiguous pieces of near-equal length.
pub fn partition(stream: &[ElementId], parts: usize) -> Vec<Vec<ElementId>> {
    let parts = parts.max(1);
    let chunk = stream.len().div_ceil(parts).max(1);
    let mut out: Vec<Vec<ElementId>> = stream.chunks(chunk).map(<[_]>::to_vec).collect();
    out.resize(parts, Vec::new());
    out
}

/// Stream lengths bracketing a query and the counts it could not see.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsistencyWindow {
    pub n_start: u64,
    pub n_end: u64,
    /// Counts per element buffered in any filter when the query started.
    pub filter_snapshot: BTreeMap<ElementId, u64>,
}

impl ConsistencyWindow {
    pub fn buffered(&self, e: ElementId) -> u64 {
        self.filter_snapshot.get(&e).copied().unwrap_or(0)
    }
}

/// Ground truth for one element of interest to a query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub element: ElementId,
    pub estimate: Option<u64>,
    pub f_start: u64,
    pub f_end: u64,
    pub buffered: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub querier: usize,
    /// Script position at which the query started and finished.
    pub started_at: usize,
    pub finished_at: usize,
    pub window: ConsistencyWindow,
    pub threshold: u64,
    pub entries: Vec<QueryResultEntry>,
    /// Every reported element plus every element the query was obliged to
    /// report, sorted by id.
    pub observations: Vec<Observation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    EstimateBelowWindow,
    EstimateAboveWindow,
    MissedFrequent,
    ReportedInfrequent,
    BelowThreshold,
    BufferedAboveBound,
    WindowInverted,
    StreamLengthDecreased,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub query: usize,
    pub element: Option<ElementId>,
}

/// Checks one query against the window bounds, the reported-set bounds and
/// the buffered-count bound `T * E`.
pub fn check_query(index: usize, rec: &QueryRecord, config: &EngineConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut flag = |kind, element| out.push(Violation { kind, query: index, element });
    let w = &rec.window;
    if w.n_start > w.n_end {
        flag(ViolationKind::WindowInverted, None);
    }
    let bound = config.threads as u64 * config.handover_bound;
    for (&e, &b) in &w.filter_snapshot {
        if b > bound {
            flag(ViolationKind::BufferedAboveBound, Some(e));
        }
    }
    let slack_end = config.epsilon * w.n_end as f64;
    let phi_start = config.phi * w.n_start as f64;
    for o in &rec.observations {
        match o.estimate {
            Some(est) => {
                if (est as f64) < o.f_start as f64 - o.buffered as f64 {
                    flag(ViolationKind::EstimateBelowWindow, Some(o.element));
                }
                if est as f64 > o.f_end as f64 + slack_end {
                    flag(ViolationKind::EstimateAboveWindow, Some(o.element));
                }
                if (o.f_end as f64) < phi_start - slack_end {
                    flag(ViolationKind::ReportedInfrequent, Some(o.element));
                }
                if est <= rec.threshold {
                    flag(ViolationKind::BelowThreshold, Some(o.element));
                }
            }
            None => {
                if o.f_start as f64 > phi_start + o.buffered as f64 {
                    flag(ViolationKind::MissedFrequent, Some(o.element));
                }
            }
        }
    }
    out
}

/// Checks all queries of a trace, including that successive queries never
/// see a shorter stream.
pub fn check_trace(trace: &Trace, config: &EngineConfig) -> Vec<Violation> {
    let mut out: Vec<Violation> = trace.queries.iter().enumerate().flat_map(|(i, q)| check_query(i, q, config)).collect();
    let mut by_start: Vec<(usize, usize, u64)> =
        trace.queries.iter().enumerate().map(|(i, q)| (q.started_at, i, q.window.n_start)).collect();
    by_start.sort_unstable();
    for pair in by_start.windows(2) {
        if pair[1].2 < pair[0].2 {
            out.push(Violation { kind: ViolationKind::StreamLengthDecreased, query: pair[1].1, element: None });
        }
    }
    if trace.max_buffered_per_element > config.threads as u64 * config.handover_bound {
        out.push(Violation { kind: ViolationKind::BufferedAboveBound, query: usize::MAX, element: None });
    }
    out
}

/// Largest observed overestimate `estimate - f_{N_E}(e)` over all reported
/// elements of all queries.
pub fn max_window_slack(trace: &Trace) -> u64 {
    trace
        .queries
        .iter()
        .flat_map(|q| q.observations.iter())
        .filter_map(|o| o.estimate.map(|est| est.saturating_sub(o.f_end)))
        .max()
        .unwrap_or(0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SimOptions {
    /// Measure filter contents after every step.
    pub monitor_buffers: bool,
    /// Keep every `(element, weight)` each owner folds into its synopsis.
    pub log_deliveries: bool,
}

/// Replayable outcome of a simulation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub steps_run: usize,
    pub queries: Vec<QueryRecord>,
    /// Final counters of each synopsis, sorted by element.
    pub instances: Vec<Vec<Counter>>,
    pub stream_length: u64,
    /// Largest `sum over filters` of one element's buffered count seen by
    /// the monitor (0 when monitoring is off).
    pub max_buffered_per_element: u64,
    /// Largest total buffered by one source thread across its filters.
    pub max_buffered_per_source: u64,
    /// Per-owner deliveries when logging is on.
    pub deliveries: Option<Vec<Vec<(ElementId, u64)>>>,
}

#[derive(Debug)]
enum Activity {
    Idle,
    Waiting { retry: Option<ElementId> },
}

#[derive(Debug)]
struct QueryCursor {
    started_at: usize,
    n_start: u64,
    threshold: u64,
    snapshot: BTreeMap<ElementId, u64>,
    truth_start: ExactCounts,
    next: usize,
    holding: bool,
    entries: Vec<QueryResultEntry>,
}

#[derive(Debug)]
struct SimThread {
    input: Vec<ElementId>,
    cursor: usize,
    activity: Activity,
    query: Option<QueryCursor>,
}

pub struct Simulation {
    engine: Engine,
    threads: Vec<SimThread>,
    truth: ExactCounts,
    options: SimOptions,
    steps: usize,
    queries: Vec<QueryRecord>,
    deliveries: Vec<Vec<(ElementId, u64)>>,
    max_per_element: u64,
    max_per_source: u64,
}

impl Simulation {
    /// Builds an engine and takes every thread role. `inputs[j]` is the
    /// substream thread `j` will consume.
    pub fn new(config: EngineConfig, inputs: Vec<Vec<ElementId>>, options: SimOptions) -> Result<Self> {
        let engine = Engine::new(config)?;
        if inputs.len() != config.threads {
            return Err(invalid(format!("{} input partitions for T={}", inputs.len(), config.threads)));
        }
        if inputs.iter().flatten().any(|&e| e == crate::heap::NONE) {
            return Err(invalid("the reserved NONE id cannot be counted"));
        }
        engine.claim_all()?;
        Ok(Simulation {
            threads: inputs
                .into_iter()
                .map(|input| SimThread { input, cursor: 0, activity: Activity::Idle, query: None })
                .collect(),
            deliveries: vec![Vec::new(); config.threads],
            engine,
            truth: ExactCounts::new(),
            options,
            steps: 0,
            queries: Vec::new(),
            max_per_element: 0,
            max_per_source: 0,
        })
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn truth(&self) -> &ExactCounts {
        &self.truth
    }

    pub fn queries(&self) -> &[QueryRecord] {
        &self.queries
    }

    pub fn remaining_input(&self) -> usize {
        self.threads.iter().map(|t| t.input.len() - t.cursor).sum()
    }

    pub fn run(&mut self, script: &[Step]) -> Result<()> {
        if let Some(bad) = script.iter().find(|s| s.thread >= self.threads.len()) {
            return Err(invalid(format!("script names thread {} but T={}", bad.thread, self.threads.len())));
        }
        for &s in script {
            self.step(s)?;
        }
        Ok(())
    }

    pub fn step(&mut self, s: Step) -> Result<()> {
        if s.thread >= self.threads.len() {
            return Err(invalid(format!("script names thread {} but T={}", s.thread, self.threads.len())));
        }
        match s.action {
            Action::Update => self.update_step(s.thread)?,
            Action::ProcessPending => {
                self.drain(s.thread);
            }
            Action::QueryStep => self.query_step(s.thread),
        }
        self.steps += 1;
        if self.options.monitor_buffers {
            self.measure_buffers();
        }
        Ok(())
    }

    fn drain(&mut self, i: usize) -> usize {
        let log = &mut self.deliveries[i];
        let keep = self.options.log_deliveries;
        self.engine.process_pending_with(i, |e, w| {
            if keep {
                log.push((e, w));
            }
        })
    }

    fn update_step(&mut self, j: usize) -> Result<()> {
        self.drain(j);
        let element = match self.threads[j].activity {
            Activity::Waiting { retry } => {
                if !self.engine.matrix.try_complete_handover(j) {
                    return Ok(());
                }
                self.threads[j].activity = Activity::Idle;
                match retry {
                    Some(e) => e,
                    None => return Ok(()),
                }
            }
            Activity::Idle => {
                let t = &mut self.threads[j];
                let Some(&e) = t.input.get(t.cursor) else {
                    return Ok(());
                };
                t.cursor += 1;
                e
            }
        };
        // SAFETY: the simulation holds every updater role
        match unsafe { self.engine.offer(j, element)? } {
            Offer::Accepted => self.truth.add(element),
            Offer::AcceptedHandover => {
                self.truth.add(element);
                self.threads[j].activity = Activity::Waiting { retry: None };
            }
            Offer::Rejected => self.threads[j].activity = Activity::Waiting { retry: Some(element) },
        }
        Ok(())
    }

    fn query_step(&mut self, q: usize) {
        let Some(mut cur) = self.threads[q].query.take() else {
            let n_start = self.engine.total_processed();
            // SAFETY: single-threaded; no filter is being touched right now
            let (buffered, _) = unsafe { self.engine.matrix.buffered_unsync() };
            self.threads[q].query = Some(QueryCursor {
                started_at: self.steps,
                n_start,
                threshold: (n_start as f64 * self.engine.config.phi).floor() as u64,
                snapshot: buffered.into_iter().collect(),
                truth_start: self.truth.clone(),
                next: 0,
                holding: false,
                entries: Vec::new(),
            });
            return;
        };
        if cur.next == self.threads.len() {
            self.finish_query(q, cur);
            return;
        }
        let cell = self.engine.lock_cell(cur.next);
        if cur.holding {
            // SAFETY: this query acquired the lock in an earlier step
            let qoss = unsafe { cell.get_unchecked() };
            cur.entries.extend(qoss.query(cur.threshold));
            unsafe { cell.release() };
            cur.holding = false;
            cur.next += 1;
        } else if cell.try_acquire() {
            cur.holding = true;
        } else {
            self.drain(q);
        }
        self.threads[q].query = Some(cur);
    }

    fn finish_query(&mut self, q: usize, cur: QueryCursor) {
        let n_end = self.engine.total_processed();
        let mut entries = cur.entries;
        entries.sort_unstable_by_key(|r| r.element);
        let phi_start = self.engine.config.phi * cur.n_start as f64;
        let mut observations: BTreeMap<ElementId, Observation> = BTreeMap::new();
        let observe = |e: ElementId, estimate: Option<u64>| Observation {
            element: e,
            estimate,
            f_start: cur.truth_start.get(e),
            f_end: self.truth.get(e),
            buffered: cur.snapshot.get(&e).copied().unwrap_or(0),
        };
        for r in &entries {
            observations.insert(r.element, observe(r.element, Some(r.estimate)));
        }
        for (e, f) in cur.truth_start.iter() {
            let buffered = cur.snapshot.get(&e).copied().unwrap_or(0);
            if f as f64 > phi_start + buffered as f64 && !observations.contains_key(&e) {
                observations.insert(e, observe(e, None));
            }
        }
        self.queries.push(QueryRecord {
            querier: q,
            started_at: cur.started_at,
            finished_at: self.steps,
            window: ConsistencyWindow { n_start: cur.n_start, n_end, filter_snapshot: cur.snapshot },
            threshold: cur.threshold,
            entries,
            observations: observations.into_values().collect(),
        });
    }

    fn measure_buffers(&mut self) {
        let t = self.threads.len();
        // SAFETY: single-threaded; no filter is being touched right now
        unsafe {
            let (per_element, _) = self.engine.matrix.buffered_unsync();
            if let Some(&m) = per_element.values().max() {
                self.max_per_element = self.max_per_element.max(m);
            }
            for source in 0..t {
                let total: u64 = (0..t).map(|owner| self.engine.matrix.filter_unsync(owner, source).total()).sum();
                self.max_per_source = self.max_per_source.max(total);
            }
        }
    }

    /// Finishes open queries, consumes the remaining input round-robin and
    /// drains every filter.
    pub fn quiesce(&mut self) -> Result<()> {
        let t = self.threads.len();
        while self.threads.iter().any(|th| th.query.is_some()) {
            for q in 0..t {
                if self.threads[q].query.is_some() {
                    self.step(Step::new(q, Action::QueryStep))?;
                }
            }
        }
        while self.remaining_input() > 0 || self.threads.iter().any(|th| !matches!(th.activity, Activity::Idle)) {
            for j in 0..t {
                self.step(Step::new(j, Action::Update))?;
            }
        }
        let keep = self.options.log_deliveries;
        let log = &mut self.deliveries;
        // SAFETY: the simulation holds every updater role
        unsafe {
            self.engine.drain_all_with(|i, e, w| {
                if keep {
                    log[i].push((e, w));
                }
            })
        };
        Ok(())
    }

    /// Snapshot of the run so far.
    pub fn trace(&mut self) -> Trace {
        let instances = (0..self.threads.len())
            .map(|i| {
                let mut cs: Vec<Counter> = self.engine.instance_mut(i).counters().collect();
                cs.sort_unstable_by_key(|c| c.element);
                cs
            })
            .collect();
        Trace {
            steps_run: self.steps,
            queries: self.queries.clone(),
            instances,
            stream_length: self.truth.n(),
            max_buffered_per_element: self.max_per_element,
            max_buffered_per_source: self.max_per_source,
            deliveries: self.options.log_deliveries.then(|| self.deliveries.clone()),
        }
    }

    /// Feeds each owner's delivery log into a fresh synopsis of the same
    /// size. Requires `log_deliveries`.
    pub fn serial_replay(&self) -> Result<Vec<Qoss>> {
        if !self.options.log_deliveries {
            return Err(crate::error::Error::Precondition("delivery logging is off".into()));
        }
        self.deliveries
            .iter()
            .map(|log| {
                let mut q = Qoss::with_capacity(self.engine.counters_per_instance())?;
                for &(e, w) in log {
                    q.update(e, w)?;
                }
                Ok(q)
            })
            .collect()
    }

    pub fn into_engine(self) -> Engine {
        self.engine.release_all();
        self.engine
    }
}

/// Runs `script` over `inputs`, quiesces and returns the trace.
pub fn run_deterministic(
    config: EngineConfig,
    inputs: Vec<Vec<ElementId>>,
    script: &[Step],
    options: SimOptions,
) -> Result<Trace> {
    let mut sim = Simulation::new(config, inputs, options)?;
    sim.run(script)?;
    sim.quiesce()?;
    Ok(sim.trace())
}
