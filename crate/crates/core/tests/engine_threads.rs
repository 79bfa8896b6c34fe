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

use std::sync::atomic::{AtomicBool, Ordering};

use qpopss::engine::run::{run_threads, RunOptions};
use qpopss::engine::{Engine, EngineConfig};
use qpopss::oracle::{check_definition1, exact_count};
use qpopss::workload::{generate_vec, StreamSpec};

#[test]
fn concurrent_queries_during_updates() {
    let stream = generate_vec(&StreamSpec::new(1.1, 50_000, 400_000, 1).unwrap()).unwrap();
    let engine = Engine::new(EngineConfig::new(1e-4, 1e-3, 3).with_filters(16, 256)).unwrap();
    let done = AtomicBool::new(false);
    std::thread::scope(|s| {
        let querier = s.spawn(|| {
            let mut last = 0;
            let mut reports = 0;
            while !done.load(Ordering::Acquire) {
                let r = engine.query(0).unwrap();
                assert!(r.n_at_start >= last);
                last = r.n_at_start;
                assert!(r.entries.iter().all(|e| e.estimate > r.threshold_used));
                let mut ids: Vec<u64> = r.entries.iter().map(|e| e.element).collect();
                ids.sort_unstable();
                ids.dedup();
                assert_eq!(ids.len(), r.entries.len());
                reports += 1;
            }
            reports
        });
        run_threads(&engine, &stream, RunOptions { query_rate: 50.0, ..Default::default() }).unwrap();
        done.store(true, Ordering::Release);
        assert!(querier.join().unwrap() > 0);
    });
    engine.flush().unwrap();
    let report = engine.query(1).unwrap();
    assert_eq!(report.n_at_start, 400_000);
    let truth = exact_count(stream.iter().copied());
    let check = check_definition1(&report.entries, &truth, 1e-3, 1e-4);
    assert!(check.is_valid(), "{check:?}");
}

#[test]
fn conservation_over_many_configs() {
    for (t, d, e) in [(1usize, 1usize, 1u64), (2, 1, 1), (3, 2, 5), (5, 16, 1000), (8, 4, 3)] {
        let stream = generate_vec(&StreamSpec::new(0.9, 5000, 60_000, t as u64).unwrap()).unwrap();
        let mut engine = Engine::new(EngineConfig::new(1e-3, 1e-2, t).with_filters(d, e)).unwrap();
        let stats = run_threads(&engine, &stream, RunOptions { flush: true, ..Default::default() }).unwrap();
        assert_eq!(stats.updates, 60_000);
        assert_eq!(engine.total_processed(), 60_000);
        assert_eq!(engine.tracked_total(), 60_000, "T={t} D={d} E={e}");
    }
}

#[test]
fn quiescent_accuracy_with_threads() {
    let stream = generate_vec(&StreamSpec::new(1.25, 100_000, 500_000, 9).unwrap().shuffled(true)).unwrap();
    let engine = Engine::new(EngineConfig::new(1e-4, 1e-3, 4)).unwrap();
    run_threads(&engine, &stream, RunOptions { flush: true, ..Default::default() }).unwrap();
    let r = engine.query(3).unwrap();
    let truth = exact_count(stream.iter().copied());
    let check = check_definition1(&r.entries, &truth, 1e-3, 1e-4);
    assert_eq!(check.recall, 1.0);
    assert!(check.violations.is_empty());
}
