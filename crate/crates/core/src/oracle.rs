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

//! Ground truth and analytic calculators.
//!
//! Exact frequency counting, an array-based Space-Saving used as an
//! equivalence oracle for [`Qoss`](crate::qoss::Qoss), and the Zipf formulas
//! for counter sizing and the number of frequent ranks.

use rustc_hash::{FxHashMap, FxHashSet};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::heap::{Counter, ElementId};
use crate::qoss::QueryResultEntry;

/// Default tolerance for [`zeta`].
pub const ZETA_TOL: f64 = 1e-9;

/// Rounds a counter requirement up to an integer, absorbing floating-point
/// noise so that e.g. `1 / 1e-4` yields exactly 10000.
pub fn counters_for(x: f64) -> usize {
    let r = x.round();
    let n = if (x - r).abs() <= 1e-9 * x.abs().max(1.0) { r } else { x.ceil() };
    (n as usize).max(1)
}

/// Exact occurrence counts of a stream.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExactCounts {
    counts: FxHashMap<ElementId, u64>,
    n: u64,
}

impl ExactCounts {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, e: ElementId) {
        *self.counts.entry(e).or_insert(0) += 1;
        self.n += 1;
    }

    /// True count of `e`, 0 if never seen.
    #[inline]
    pub fn get(&self, e: ElementId) -> u64 {
        self.counts.get(&e).copied().unwrap_or(0)
    }

    /// Stream length.
    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn distinct(&self) -> usize {
        self.counts.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ElementId, u64)> + '_ {
        self.counts.iter().map(|(&e, &c)| (e, c))
    }

    /// Elements whose true count is strictly above `n * phi`.
    pub fn frequent(&self, phi: f64) -> FxHashSet<ElementId> {
        let bound = self.n as f64 * phi;
        self.iter().filter(|&(_, c)| c as f64 > bound).map(|(e, _)| e).collect()
    }
}

/// Counts every element of `stream`.
pub fn exact_count<I: IntoIterator<Item = ElementId>>(stream: I) -> ExactCounts {
    let mut out = ExactCounts::new();
    for e in stream {
        out.add(e);
    }
    out
}

/// Straightforward Space-Saving over an unsorted array of `m` counters.
///
/// Ties on the minimum count are broken like the heap does: the counter
/// written least recently is evicted. Returns counters sorted by element.
pub fn reference_space_saving<I: IntoIterator<Item = ElementId>>(stream: I, m: usize) -> Vec<Counter> {
    reference_space_saving_weighted(stream.into_iter().map(|e| (e, 1)), m)
}

/// Weighted variant of [`reference_space_saving`].
pub fn reference_space_saving_weighted<I: IntoIterator<Item = (ElementId, u64)>>(
    stream: I,
    m: usize,
) -> Vec<Counter> {
    assert!(m >= 1, "at least one counter is required");
    // (element, count, last write)
    let mut table: Vec<(ElementId, u64, u64)> = Vec::with_capacity(m);
    let mut clock = 0u64;
    for (e, w) in stream {
        clock += 1;
        if let Some(slot) = table.iter_mut().find(|s| s.0 == e) {
            slot.1 += w;
            slot.2 = clock;
        } else if table.len() < m {
            table.push((e, w, clock));
        } else {
            let victim = (0..table.len())
                .min_by_key(|&i| (table[i].1, table[i].2))
                .expect("table is full");
            let min = table[victim].1;
            table[victim] = (e, min + w, clock);
        }
    }
    let mut out: Vec<Counter> = table.into_iter().map(|(e, c, _)| Counter::new(e, c)).collect();
    out.sort();
    out
}

/// Riemann zeta function for real `a > 1`.
///
/// Sums the leading terms directly and closes the tail with an
/// Euler-Maclaurin correction; the truncation point is chosen so that the
/// first omitted correction term is below `tol`.
pub fn zeta(a: f64, tol: f64) -> Result<f64> {
    if a.is_nan() || a <= 1.0 || !a.is_finite() {
        return Err(invalid(format!("zeta requires a finite a > 1, got {a}")));
    }
    if tol.is_nan() || tol <= 0.0 {
        return Err(invalid("tolerance must be positive"));
    }
    // rising factorial a(a+1)...(a+6) over 8!/B8 = 1209600
    let rising7: f64 = (0..7).map(|k| a + k as f64).product();
    let mut n: u64 = 8;
    while rising7 / 1_209_600.0 * (n as f64).powf(-a - 7.0) >= tol / 2.0 {
        n *= 2;
    }
    let nf = n as f64;
    // sum small terms last to limit rounding error
    let head: f64 = (1..n).rev().map(|i| (i as f64).powf(-a)).sum();
    let tail = nf.powf(1.0 - a) / (a - 1.0)
        + nf.powf(-a) / 2.0
        + a * nf.powf(-a - 1.0) / 12.0
        - a * (a + 1.0) * (a + 2.0) * nf.powf(-a - 3.0) / 720.0
        + a * (a + 1.0) * (a + 2.0) * (a + 3.0) * (a + 4.0) * nf.powf(-a - 5.0) / 30_240.0;
    Ok(head + tail)
}

/// Skew and universe size of a finite Zipf distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZipfParams {
    pub skew_a: f64,
    pub universe: u64,
}

impl ZipfParams {
    pub fn new(skew_a: f64, universe: u64) -> Result<Self> {
        if skew_a.is_nan() || skew_a <= 0.0 || !skew_a.is_finite() {
            return Err(invalid(format!("Zipf skew must be positive, got {skew_a}")));
        }
        if universe == 0 {
            return Err(invalid("universe must hold at least one element"));
        }
        Ok(ZipfParams { skew_a, universe })
    }
}

/// Number of ranks whose expected share exceeds `phi` in an unbounded Zipf
/// distribution: `floor((1 / (zeta(a) * phi))^(1/a))`.
pub fn rank_threshold(p: &ZipfParams, phi: f64) -> Result<u64> {
    if p.skew_a.is_nan() || p.skew_a <= 1.0 {
        return Err(invalid(format!(
            "rank threshold needs a > 1 (got {}); count the stream exactly instead",
            p.skew_a
        )));
    }
    if !(phi > 0.0 && phi < 1.0) {
        return Err(invalid(format!("phi must lie in (0, 1), got {phi}")));
    }
    let z = zeta(p.skew_a, ZETA_TOL)?;
    Ok((1.0 / (z * phi)).powf(1.0 / p.skew_a).floor() as u64)
}

/// Counters per instance that suffice on Zipf input with `a > 1`:
/// `ceil((1 / (T * epsilon))^(1/a))`.
pub fn zipf_counters(p: &ZipfParams, epsilon: f64, threads: usize) -> Result<usize> {
    if p.skew_a.is_nan() || p.skew_a <= 1.0 {
        return Err(invalid(format!("Zipf sizing needs a > 1, got {}", p.skew_a)));
    }
    if !(epsilon > 0.0 && epsilon <= 1.0) || threads == 0 {
        return Err(invalid("epsilon must lie in (0, 1] and threads must be positive"));
    }
    Ok(counters_for((1.0 / (threads as f64 * epsilon)).powf(1.0 / p.skew_a)))
}

/// Outcome of comparing a report against the exact counts.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Definition1Check {
    pub recall: f64,
    pub precision: f64,
    /// Truly frequent elements (`f > N*phi`) missing from the report.
    pub missed: Vec<ElementId>,
    /// Reported elements with `f < N*(phi - epsilon)`.
    pub violations: Vec<ElementId>,
}

impl Definition1Check {
    pub fn is_valid(&self) -> bool {
        self.missed.is_empty() && self.violations.is_empty()
    }
}

/// Checks a report against the epsilon-approximate phi-frequent contract
/// over the stream counted in `truth`.
pub fn check_definition1(
    report: &[QueryResultEntry],
    truth: &ExactCounts,
    phi: f64,
    epsilon: f64,
) -> Definition1Check {
    let n = truth.n() as f64;
    let frequent = truth.frequent(phi);
    let reported: FxHashSet<ElementId> = report.iter().map(|r| r.element).collect();
    let hits = reported.iter().filter(|e| frequent.contains(e)).count();
    let mut missed: Vec<_> = frequent.iter().copied().filter(|e| !reported.contains(e)).collect();
    missed.sort_unstable();
    let floor = n * (phi - epsilon);
    let mut violations: Vec<_> =
        reported.iter().copied().filter(|&e| (truth.get(e) as f64) < floor).collect();
    violations.sort_unstable();
    Definition1Check {
        recall: if frequent.is_empty() { 1.0 } else { hits as f64 / frequent.len() as f64 },
        precision: if reported.is_empty() { 1.0 } else { hits as f64 / reported.len() as f64 },
        missed,
        violations,
    }
}
