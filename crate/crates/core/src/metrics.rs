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

//! Accuracy, latency/throughput and memory figures for experiment runs.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::engine::run::RunStats;
use crate::engine::EngineConfig;
use crate::error::{invalid, Result};
use crate::oracle::ExactCounts;
use crate::qoss::QueryResultEntry;

/// Bytes charged per counter by the memory model, whatever the native
/// counter size.
pub const BYTES_PER_COUNTER: u64 = 32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub precision: f64,
    pub recall: f64,
    /// Average relative error over reported elements that occur in the
    /// stream.
    pub are: f64,
    pub reported: usize,
    pub true_frequent: usize,
    /// Reported elements with true count below `N * (phi - epsilon)`.
    pub violations: usize,
    /// Reported elements that never occurred; left out of the ARE.
    pub unseen_reported: usize,
}

/// Scores a report against exact counts over the same `N`.
pub fn accuracy(report: &[QueryResultEntry], truth: &ExactCounts, phi: f64, epsilon: f64) -> Result<Accuracy> {
    if truth.n() == 0 {
        return Err(invalid("accuracy needs a nonempty ground truth"));
    }
    let n = truth.n() as f64;
    let frequent = truth.frequent(phi);
    let mut hits = 0usize;
    let mut violations = 0usize;
    let mut unseen = 0usize;
    let mut err_sum = 0.0;
    for r in report {
        let f = truth.get(r.element);
        if frequent.contains(&r.element) {
            hits += 1;
        }
        if (f as f64) < n * (phi - epsilon) {
            violations += 1;
        }
        if f == 0 {
            unseen += 1;
            log::warn!("reported element {} never occurred; excluded from ARE", r.element);
            continue;
        }
        err_sum += r.estimate.abs_diff(f) as f64 / f as f64;
    }
    let seen = report.len() - unseen;
    Ok(Accuracy {
        precision: if report.is_empty() { 1.0 } else { hits as f64 / report.len() as f64 },
        recall: if frequent.is_empty() { 1.0 } else { hits as f64 / frequent.len() as f64 },
        are: if seen == 0 { 0.0 } else { err_sum / seen as f64 },
        reported: report.len(),
        true_frequent: frequent.len(),
        violations,
        unseen_reported: unseen,
    })
}

/// Operation counts and query latencies of a run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PerfCounters {
    pub updates_done: u64,
    pub queries_done: u64,
    pub elapsed: Duration,
    pub query_latencies: Vec<Duration>,
}

impl From<&RunStats> for PerfCounters {
    fn from(s: &RunStats) -> Self {
        PerfCounters {
            updates_done: s.updates,
            queries_done: s.queries,
            elapsed: s.elapsed,
            query_latencies: s.latencies.clone(),
        }
    }
}

impl PerfCounters {
    pub fn merge(&mut self, other: &PerfCounters) {
        self.updates_done += other.updates_done;
        self.queries_done += other.queries_done;
        self.elapsed = self.elapsed.max(other.elapsed);
        self.query_latencies.extend_from_slice(&other.query_latencies);
    }

    /// Operations per second.
    pub fn throughput(&self) -> f64 {
        let secs = self.elapsed.as_secs_f64();
        if secs > 0.0 {
            (self.updates_done + self.queries_done) as f64 / secs
        } else {
            0.0
        }
    }

    pub fn mean_latency(&self) -> Option<Duration> {
        let n = u32::try_from(self.query_latencies.len()).ok().filter(|&n| n > 0)?;
        Some(self.query_latencies.iter().sum::<Duration>() / n)
    }

    /// Nearest-rank 99th percentile.
    pub fn p99_latency(&self) -> Option<Duration> {
        percentile(&self.query_latencies, 0.99)
    }
}

pub fn percentile(samples: &[Duration], q: f64) -> Option<Duration> {
    if samples.is_empty() {
        return None;
    }
    let mut v = samples.to_vec();
    v.sort_unstable();
    let rank = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len());
    Some(v[rank - 1])
}

/// Modeled footprint: `(T * m' + T^2 * D) * 32` bytes with `m'` the padded
/// per-instance size.
pub fn memory_model(config: &EngineConfig) -> Result<u64> {
    let t = config.threads as u64;
    let m = config.padded_counters_per_instance()? as u64;
    Ok((t * m + t * t * config.filter_slots as u64) * BYTES_PER_COUNTER)
}
