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

//! Acceptance suite: runs every criterion at its stated tolerance and
//! runtime budget, printing one PASS/FAIL line per criterion.

use std::io::Write;
use std::time::{Duration, Instant};

use qpopss::engine::run::{run_threads, RunOptions};
use qpopss::engine::sim::{self, Action, ScriptMix, SimOptions, Simulation, Step};
use qpopss::engine::{Engine, EngineConfig, Sizing};
use qpopss::heap::{Counter, MinMaxHeap};
use qpopss::metrics;
use qpopss::oracle::{self, exact_count, reference_space_saving, ZipfParams};
use qpopss::qoss::Qoss;
use qpopss::workload::{generate, generate_vec, StreamSpec};
use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64;

type Outcome = Result<String, String>;

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Duration,
    /// Failures are reported but do not fail the suite.
    informational: bool,
    run: fn() -> Outcome,
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_ops(heap: &mut MinMaxHeap, rng: &mut Pcg64, ops: usize, next_id: &mut u64, mut after: impl FnMut(&MinMaxHeap) -> Result<(), String>) -> Result<(), String> {
    for _ in 0..ops {
        let tracked: Vec<Counter> = heap.counters().collect();
        if tracked.is_empty() || rng.random_bool(0.5) {
            let min = heap.peek_min().count;
            *next_id += 1;
            heap.replace_min(*next_id, min + rng.random_range(0..5)).map_err(|e| e.to_string())?;
        } else {
            let c = tracked[rng.random_range(0..tracked.len())];
            heap.increase_count(c.element, rng.random_range(1..=10)).map_err(|e| e.to_string())?;
        }
        after(heap)?;
    }
    Ok(())
}

fn c1_heap_correctness() -> Outcome {
    let mut rng = Pcg64::seed_from_u64(1);
    let mut checks = 0u64;
    for _ in 0..10_000 {
        let cap = rng.random_range(1..=127usize);
        let mut heap = MinMaxHeap::new(cap).map_err(|e| e.to_string())?;
        let mut next_id = 0;
        let ops = rng.random_range(1..=3 * cap + 8);
        random_ops(&mut heap, &mut rng, ops, &mut next_id, |h| {
            h.check_invariants()?;
            let min = h.peek_min();
            if h.is_full() {
                let brute = h.counters().map(|c| c.count).min().unwrap();
                ensure(min.count == brute && h.get(min.element) == Some(brute), || {
                    format!("peek_min {min:?} but brute-force min {brute}")
                })?;
            } else {
                ensure(min == Counter::SENTINEL, || format!("peek_min {min:?} with free slots"))?;
            }
            checks += 1;
            Ok(())
        })?;
    }
    Ok(format!("10000 sequences, {checks} post-operation checks"))
}

fn c2_query_cost() -> Outcome {
    let mut rng = Pcg64::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..1_000 {
        let cap = rng.random_range(1..=1000usize);
        let mut heap = MinMaxHeap::new(cap).map_err(|e| e.to_string())?;
        let mut next_id = 0;
        let ops = rng.random_range(1..=4 * cap);
        random_ops(&mut heap, &mut rng, ops, &mut next_id, |_| Ok(()))?;
        let max = heap.counters().map(|c| c.count).max().unwrap_or(0);
        let t = rng.random_range(0..=max + 1);
        let mut got = heap.threshold_scan(t);
        let mut want: Vec<Counter> = heap.counters().filter(|c| c.count > t).collect();
        got.sort_unstable();
        want.sort_unstable();
        ensure(got == want, || format!("scan mismatch at threshold {t}"))?;
        let bound = 5 * want.len() + 2;
        ensure(heap.comparisons() <= bound, || format!("{} comparisons for |F|={}", heap.comparisons(), want.len()))?;
        worst = worst.max(heap.comparisons() as f64 / bound as f64);
    }
    Ok(format!("1000 heaps; max comparisons/(5|F|+2) = {worst:.3}"))
}

fn c3_space_saving_oracle() -> Outcome {
    let mut rng = Pcg64::seed_from_u64(3);
    for case in 0..1_000 {
        let n = rng.random_range(1..=10_000usize);
        let universe = rng.random_range(1..=256u64);
        let m = rng.random_range(4..=64usize);
        let skewed = rng.random_bool(0.5);
        let stream: Vec<u64> = (0..n)
            .map(|_| {
                let x = rng.random_range(1..=universe);
                if skewed { x.min(rng.random_range(1..=universe)) } else { x }
            })
            .collect();
        let mut q = Qoss::with_capacity(m).map_err(|e| e.to_string())?;
        for &e in &stream {
            q.update(e, 1).map_err(|e| e.to_string())?;
        }
        let mut got: Vec<Counter> = q.counters().collect();
        got.sort_unstable_by_key(|c| c.element);
        let want = reference_space_saving(stream.iter().copied(), m);
        ensure(got == want, || format!("case {case}: counters differ from the reference"))?;
        let truth = exact_count(stream.iter().copied());
        let sum: u64 = got.iter().map(|c| c.count).sum();
        ensure(sum == n as u64, || format!("case {case}: estimates sum to {sum}, N = {n}"))?;
        let fmin = q.min();
        for c in &got {
            let f = truth.get(c.element);
            ensure(c.count >= f && c.count - f <= fmin, || format!("case {case}: {c:?} with f={f}, F_min={fmin}"))?;
        }
        for (e, f) in truth.iter() {
            ensure(f <= fmin || q.estimate(e).is_some(), || format!("case {case}: {e} (f={f}) untracked, F_min={fmin}"))?;
        }
    }
    Ok("1000 streams match the reference; sum, overestimation and coverage hold".into())
}

fn c4_epsilon_approximation() -> Outcome {
    let (phi, eps) = (1e-3, 1e-4);
    let spec = StreamSpec::new(1.25, 100_000, 1_000_000, 4).map_err(|e| e.to_string())?;
    let mut q = Qoss::new(eps, None).map_err(|e| e.to_string())?;
    ensure(q.capacity() == 10_000, || format!("m = {}", q.capacity()))?;
    let mut truth = oracle::ExactCounts::new();
    let mut checkpoints = 0;
    for (i, e) in generate(&spec).map_err(|e| e.to_string())?.enumerate() {
        q.update(e, 1).map_err(|e| e.to_string())?;
        truth.add(e);
        let n = i as u64 + 1;
        if n.is_multiple_of(100_000) {
            let bound = (n as f64 * eps).floor() as u64;
            ensure(q.min() <= bound, || format!("F_min {} > floor(N eps) {bound} at N={n}", q.min()))?;
            checkpoints += 1;
        }
    }
    let report = q.query((truth.n() as f64 * phi).floor() as u64);
    let check = oracle::check_definition1(&report, &truth, phi, eps);
    ensure(check.recall == 1.0 && check.violations.is_empty(), || {
        format!("recall {} with {} violations", check.recall, check.violations.len())
    })?;
    Ok(format!("recall 1.0, 0 violations, F_min bound held at {checkpoints} checkpoints ({} reported)", report.len()))
}

fn c5_zipf_sizing() -> Outcome {
    let phi = 1e-3;
    let config = EngineConfig::new(1e-4, phi, 4).with_sizing(Sizing::Zipf { a: 2.0 });
    let m = config.counters_per_instance().map_err(|e| e.to_string())?;
    ensure(m == 50, || format!("per-instance m = {m}"))?;
    let stream = generate_vec(&StreamSpec::new(2.0, 100_000, 1_000_000, 5).map_err(|e| e.to_string())?.shuffled(true))
        .map_err(|e| e.to_string())?;
    let mut sim = Simulation::new(config, sim::partition(&stream, 4), SimOptions::default()).map_err(|e| e.to_string())?;
    sim.run(&sim::round_robin_script(4, stream.len() / 4 + 1)).map_err(|e| e.to_string())?;
    sim.quiesce().map_err(|e| e.to_string())?;
    let engine = sim.into_engine();
    let report = engine.query(0).map_err(|e| e.to_string())?;
    let truth = exact_count(stream.iter().copied());
    let check = oracle::check_definition1(&report.entries, &truth, phi, config.epsilon);
    let least = truth.frequent(phi).iter().map(|&e| truth.get(e)).min().unwrap_or(0);
    let boundary_only = check.missed.len() <= 1 && check.missed.iter().all(|&e| truth.get(e) == least);
    ensure(check.violations.is_empty() && (check.recall == 1.0 || boundary_only), || {
        format!("recall {} missed {:?} violations {:?}", check.recall, check.missed, check.violations)
    })?;
    Ok(format!("m = 50 per instance, recall {} over {} frequent elements", check.recall, truth.frequent(phi).len()))
}

fn c6_table() -> Outcome {
    let mut got = Vec::new();
    for (a, phi, want) in [(2.0, 1e-3, 24), (3.0, 1e-3, 9), (3.0, 1e-5, 43)] {
        let r = oracle::rank_threshold(&ZipfParams::new(a, u64::MAX).unwrap(), phi).map_err(|e| e.to_string())?;
        ensure(r == want, || format!("a={a} phi={phi}: {r} != {want}"))?;
        got.push(r.to_string());
    }
    Ok(format!("rank thresholds {}", got.join(", ")))
}

fn c7_consistency() -> Outcome {
    let (eps, phi, n) = (0.01, 0.05, 4000u64);
    let mut queries = 0;
    let mut max_buffered = 0;
    let mut slack = 0;
    for case in 0..200u64 {
        let t = [2, 4][(case % 2) as usize];
        let e = [4, 64][(case / 2 % 2) as usize];
        let d = [4, 16][(case / 4 % 2) as usize];
        let config = EngineConfig::new(eps, phi, t).with_filters(d, e).with_seed(case);
        let stream = generate_vec(&StreamSpec::new(1.0, 1000, n, case).unwrap().shuffled(true)).map_err(|e| e.to_string())?;
        let mut rng = Pcg64::seed_from_u64(case);
        let mix = if case % 3 == 0 { ScriptMix::DELAYED_HANDOVER } else { ScriptMix::BALANCED };
        let script = sim::mid_stream_script(&mut rng, t, n as usize / 10, 3 * n as usize, mix);
        let opts = SimOptions { monitor_buffers: true, log_deliveries: false };
        let trace = sim::run_deterministic(config, sim::partition(&stream, t), &script, opts).map_err(|e| e.to_string())?;
        let v = sim::check_trace(&trace, &config);
        ensure(v.is_empty(), || format!("interleaving {case} (T={t} E={e} D={d}): {:?}", &v[..v.len().min(3)]))?;
        ensure(trace.max_buffered_per_element <= t as u64 * e, || format!("interleaving {case}: D(e) above T*E"))?;
        queries += trace.queries.len();
        max_buffered = max_buffered.max(trace.max_buffered_per_element);
        slack = slack.max(sim::max_window_slack(&trace));
    }
    Ok(format!("200 interleavings, {queries} queries, 0 violations; max D(e) {max_buffered}, max overestimate {slack}"))
}

/// Deterministic run over all input, then one query while filters still
/// hold their last counts.
fn trend_point(n: u64, seed: u64) -> Result<(f64, f64), String> {
    let (phi, eps, t) = (1e-3, 1e-4, 4);
    let config = EngineConfig::new(eps, phi, t).with_filters(16, 1000);
    let stream = generate_vec(&StreamSpec::new(1.0, 100_000, n, seed).unwrap().shuffled(true)).map_err(|e| e.to_string())?;
    let mut sim = Simulation::new(config, sim::partition(&stream, t), SimOptions::default()).map_err(|e| e.to_string())?;
    sim.run(&sim::round_robin_script(t, stream.len() / t + 1)).map_err(|e| e.to_string())?;
    while sim.queries().is_empty() {
        sim.step(Step::new(0, Action::QueryStep)).map_err(|e| e.to_string())?;
    }
    let truth = exact_count(stream.iter().copied());
    let acc = metrics::accuracy(&sim.queries()[0].entries, &truth, phi, eps).map_err(|e| e.to_string())?;
    Ok((acc.recall, acc.are))
}

fn c8_trend() -> Outcome {
    let seeds = 5u64;
    let mut small = (0.0, 0.0);
    let mut large = (0.0, 0.0);
    for s in 0..seeds {
        let (r, a) = trend_point(100_000, 80 + s)?;
        small = (small.0 + r / seeds as f64, small.1 + a / seeds as f64);
        let (r, a) = trend_point(1_000_000, 80 + s)?;
        large = (large.0 + r / seeds as f64, large.1 + a / seeds as f64);
    }
    let msg = format!("N=1e5: recall {:.4} ARE {:.5}; N=1e6: recall {:.4} ARE {:.5}", small.0, small.1, large.0, large.1);
    ensure(large.1 <= small.1 && large.0 >= small.0, || msg.clone())?;
    Ok(msg)
}

fn c9_conservation() -> Outcome {
    let mut rng = Pcg64::seed_from_u64(9);
    let mut total = 0u64;
    for case in 0..100u64 {
        let t = rng.random_range(1..=6usize);
        let d = rng.random_range(1..=32usize);
        let e = rng.random_range(1..=256u64);
        let eps = [1e-2, 1e-3, 1e-4][rng.random_range(0..3)];
        let n = rng.random_range(1..=50_000u64);
        let a = rng.random_range(0.5..2.5);
        let config = EngineConfig::new(eps, 0.05, t).with_filters(d, e).with_seed(rng.random());
        let stream = generate_vec(&StreamSpec::new(a, 10_000, n, case).unwrap()).map_err(|e| e.to_string())?;
        let mut engine = Engine::new(config).map_err(|e| e.to_string())?;
        run_threads(&engine, &stream, RunOptions { flush: true, ..Default::default() }).map_err(|e| e.to_string())?;
        let tracked = engine.tracked_total();
        ensure(tracked == n && engine.total_processed() == n, || {
            format!("config {case} (T={t} D={d} E={e}): tracked {tracked}, processed {}, N {n}", engine.total_processed())
        })?;
        total += n;
    }
    Ok(format!("100 configs, {total} updates conserved"))
}

fn throughput(threads: usize, stream: &[u64]) -> Result<f64, String> {
    let engine = Engine::new(EngineConfig::new(1e-4, 1e-3, threads)).map_err(|e| e.to_string())?;
    let stats = run_threads(&engine, stream, RunOptions::default()).map_err(|e| e.to_string())?;
    Ok(stats.mops())
}

fn c10_throughput() -> Outcome {
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    let stream = generate_vec(&StreamSpec::new(1.0, 1_000_000, 10_000_000, 10).unwrap().shuffled(true)).map_err(|e| e.to_string())?;
    let one = throughput(1, &stream)?;
    let four = throughput(4, &stream)?;
    let msg = format!("T=1 {one:.2} Mops/s, T=4 {four:.2} Mops/s, speedup {:.2} on {cores} logical cores", four / one);
    if cores < 4 {
        return Err(format!("{msg}; fewer than 4 cores, speedup not evaluated"));
    }
    ensure(four >= 2.0 * one, || msg.clone())?;
    Ok(msg)
}

fn main() {
    let criteria = [
        Criterion { id: 1, name: "heap correctness", budget: Duration::from_secs(60), informational: false, run: c1_heap_correctness },
        Criterion { id: 2, name: "query equivalence and cost", budget: Duration::from_secs(30), informational: false, run: c2_query_cost },
        Criterion { id: 3, name: "Space-Saving oracle equivalence", budget: Duration::from_secs(60), informational: false, run: c3_space_saving_oracle },
        Criterion { id: 4, name: "epsilon-approximation", budget: Duration::from_secs(30), informational: false, run: c4_epsilon_approximation },
        Criterion { id: 5, name: "Zipf sizing", budget: Duration::from_secs(30), informational: false, run: c5_zipf_sizing },
        Criterion { id: 6, name: "analytic table", budget: Duration::from_secs(1), informational: false, run: c6_table },
        Criterion { id: 7, name: "consistency window", budget: Duration::from_secs(120), informational: false, run: c7_consistency },
        Criterion { id: 8, name: "recall/ARE trend", budget: Duration::from_secs(60), informational: false, run: c8_trend },
        Criterion { id: 9, name: "conservation", budget: Duration::from_secs(30), informational: false, run: c9_conservation },
        Criterion { id: 10, name: "throughput smoke", budget: Duration::from_secs(600), informational: true, run: c10_throughput },
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    let mut err = std::io::stderr().lock();
    for c in &criteria {
        let label = format!("criterion {:>2} ({})", c.id, c.name);
        if !filter.is_empty() && !filter.iter().any(|f| label.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = (c.run)();
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(msg) if elapsed > c.budget => Err(format!("{msg}; took {elapsed:.1?}, budget {:?}", c.budget)),
            other => other,
        };
        let line = match (&outcome, c.informational) {
            (Ok(msg), _) => format!("PASS {label} [{elapsed:.2?}]: {msg}"),
            (Err(msg), true) => format!("WARN {label} [{elapsed:.2?}]: {msg}"),
            (Err(msg), false) => {
                failed += 1;
                format!("FAIL {label} [{elapsed:.2?}]: {msg}")
            }
        };
        println!("{line}");
        let _ = err.flush();
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
