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

//! Multi-threaded driver: one OS thread per engine thread, each consuming a
//! contiguous slice of the input.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use crossbeam_utils::Backoff;

use super::{Engine, FrequentElementsReport};
use crate::error::Result;
use crate::heap::ElementId;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunOptions {
    /// Queries per million updates issued by each thread; 0 disables them.
    pub query_rate: f64,
    /// Replay the input until this much time has passed.
    pub duration: Option<Duration>,
    /// Drain all filters once every thread has finished.
    pub flush: bool,
}

#[derive(Debug, Clone, Default)]
pub struct RunStats {
    pub updates: u64,
    pub queries: u64,
    pub elapsed: Duration,
    /// One entry per query, in no particular order.
    pub latencies: Vec<Duration>,
    pub last_report: Option<FrequentElementsReport>,
}

impl RunStats {
    /// Million operations (updates and queries) per second.
    pub fn mops(&self) -> f64 {
        let secs = self.elapsed.as_secs_f64();
        if secs == 0.0 {
            return 0.0;
        }
        (self.updates + self.queries) as f64 / secs / 1e6
    }
}

struct ThreadStats {
    updates: u64,
    latencies: Vec<Duration>,
    last: Option<(Instant, FrequentElementsReport)>,
}

/// Runs `stream` through `engine` on `T` scoped threads.
///
/// Threads that run out of input keep folding delegated work until all
/// threads are done, so no one waits forever on an idle owner.
pub fn run_threads(engine: &Engine, stream: &[ElementId], opts: RunOptions) -> Result<RunStats> {
    let t = engine.threads();
    let chunk = stream.len().div_ceil(t).max(1);
    let mut slices: Vec<&[ElementId]> = stream.chunks(chunk).collect();
    slices.resize(t, &[]);
    let query_every = if opts.query_rate > 0.0 { Some(((1e6 / opts.query_rate).round() as u64).max(1)) } else { None };
    let done = AtomicUsize::new(0);
    let start = Instant::now();
    let results: Vec<Result<ThreadStats>> = std::thread::scope(|s| {
        let handles: Vec<_> = slices
            .iter()
            .enumerate()
            .map(|(j, &slice)| {
                let done = &done;
                s.spawn(move || {
                    let out = drive(engine, j, slice, query_every, opts.duration, start);
                    done.fetch_add(1, Ordering::AcqRel);
                    let backoff = Backoff::new();
                    while done.load(Ordering::Acquire) < t {
                        if engine.process_pending(j) == 0 {
                            backoff.snooze();
                        }
                    }
                    out
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker thread panicked")).collect()
    });
    let elapsed = start.elapsed();
    let mut stats = RunStats { elapsed, ..RunStats::default() };
    let mut last: Option<(Instant, FrequentElementsReport)> = None;
    for r in results {
        let r = r?;
        stats.updates += r.updates;
        stats.queries += r.latencies.len() as u64;
        stats.latencies.extend(r.latencies);
        if let Some(l) = r.last {
            if last.as_ref().is_none_or(|(at, _)| l.0 > *at) {
                last = Some(l);
            }
        }
    }
    stats.last_report = last.map(|(_, r)| r);
    if opts.flush {
        engine.flush()?;
    }
    Ok(stats)
}

fn drive(
    engine: &Engine,
    j: usize,
    slice: &[ElementId],
    query_every: Option<u64>,
    duration: Option<Duration>,
    start: Instant,
) -> Result<ThreadStats> {
    let mut worker = engine.worker(j)?;
    let mut st = ThreadStats { updates: 0, latencies: Vec::new(), last: None };
    let mut until_query = query_every.unwrap_or(u64::MAX);
    loop {
        for &e in slice {
            worker.update(e)?;
            st.updates += 1;
            until_query -= 1;
            if until_query == 0 {
                let t0 = Instant::now();
                let report = worker.query();
                let t1 = Instant::now();
                st.latencies.push(t1 - t0);
                st.last = Some((t1, report));
                until_query = query_every.unwrap_or(u64::MAX);
            }
            if duration.is_some() && st.updates.is_multiple_of(4096) && duration.is_some_and(|d| start.elapsed() >= d) {
                return Ok(st);
            }
        }
        match duration {
            Some(d) if !slice.is_empty() && start.elapsed() < d => continue,
            _ => return Ok(st),
        }
    }
}
