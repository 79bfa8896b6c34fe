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

//! C ABI for the qpopss engine.
//!
//! All objects are opaque handles created by a `*_new` function and
//! released by the matching `*_free`. Every fallible call returns a
//! [`QpopssStatus`]; the message of the most recent failure on the calling
//! thread is available from [`qpopss_last_error`].
//!
//! An engine handle may be used from any number of threads at once. A
//! worker handle stands for one engine thread and must only be used by one
//! OS thread at a time.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

use qpopss::engine::{Engine, EngineConfig, FrequentElementsReport, Sizing, Worker};
use qpopss::qoss::{Qoss, QueryResultEntry};
use qpopss::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpopssStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Precondition = 3,
    NotFound = 4,
    OutOfRange = 5,
    Io = 6,
    Parse = 7,
    Internal = 8,
    Panic = 9,
}

/// Engine parameters. `zipf_a > 1` selects Zipf sizing with that skew;
/// any other value selects general sizing.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct QpopssConfig {
    pub epsilon: f64,
    pub phi: f64,
    pub threads: usize,
    pub filter_slots: usize,
    pub handover_bound: u64,
    pub owner_seed: u64,
    pub zipf_a: f64,
}

impl From<&QpopssConfig> for EngineConfig {
    fn from(c: &QpopssConfig) -> Self {
        let sizing = if c.zipf_a > 1.0 { Sizing::Zipf { a: c.zipf_a } } else { Sizing::General };
        EngineConfig::new(c.epsilon, c.phi, c.threads)
            .with_filters(c.filter_slots, c.handover_bound)
            .with_seed(c.owner_seed)
            .with_sizing(sizing)
    }
}

pub struct QpopssEngine {
    engine: Arc<Engine>,
}

pub struct QpopssWorker {
    // Declared before `_engine` so it is dropped first.
    worker: Worker<'static>,
    _engine: Arc<Engine>,
}

pub struct QpopssReport {
    entries: Vec<QueryResultEntry>,
    n_at_start: u64,
    threshold: u64,
}

pub struct QpopssQoss {
    qoss: Qoss,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> QpopssStatus {
    match e {
        Error::InvalidArgument(_) => QpopssStatus::InvalidArgument,
        Error::Precondition(_) => QpopssStatus::Precondition,
        Error::NotFound(_) => QpopssStatus::NotFound,
        Error::Contract(_) => QpopssStatus::Internal,
        Error::Parse { .. } => QpopssStatus::Parse,
        Error::Io(_) => QpopssStatus::Io,
    }
}

struct Fail(QpopssStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(QpopssStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, converting errors and panics into a status code.
fn guard<F: FnOnce() -> Result<(), Fail>>(f: F) -> QpopssStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => QpopssStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            QpopssStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn deref_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    out.write(value);
    Ok(())
}

/// A configuration with default filter parameters and general sizing.
#[no_mangle]
pub extern "C" fn qpopss_config_default(epsilon: f64, phi: f64, threads: usize) -> QpopssConfig {
    QpopssConfig {
        epsilon,
        phi,
        threads,
        filter_slots: EngineConfig::DEFAULT_FILTER_SLOTS,
        handover_bound: EngineConfig::DEFAULT_HANDOVER_BOUND,
        owner_seed: EngineConfig::DEFAULT_OWNER_SEED,
        zipf_a: 0.0,
    }
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn qpopss_status_str(status: QpopssStatus) -> *const c_char {
    let s: &'static CStr = match status {
        QpopssStatus::Ok => c"ok",
        QpopssStatus::NullPointer => c"null pointer",
        QpopssStatus::InvalidArgument => c"invalid argument",
        QpopssStatus::Precondition => c"precondition violated",
        QpopssStatus::NotFound => c"not found",
        QpopssStatus::OutOfRange => c"index out of range",
        QpopssStatus::Io => c"i/o error",
        QpopssStatus::Parse => c"parse error",
        QpopssStatus::Internal => c"internal error",
        QpopssStatus::Panic => c"panic",
    };
    s.as_ptr()
}

/// Copies the calling thread's last error message into `buf` as a
/// NUL-terminated string, truncating to `len - 1` bytes. Returns the full
/// message length.
///
/// # Safety
///
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn qpopss_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// # Safety
///
/// `config` must point to a valid config and `out` to writable storage.
#[no_mangle]
pub unsafe extern "C" fn qpopss_engine_new(config: *const QpopssConfig, out: *mut *mut QpopssEngine) -> QpopssStatus {
    guard(|| {
        let config = EngineConfig::from(deref(config, "config")?);
        let engine = Engine::new(config)?;
        put(out, Box::into_raw(Box::new(QpopssEngine { engine: Arc::new(engine) })))
    })
}

/// Releases an engine handle. Workers created from it stay valid until
/// they are freed.
///
/// # Safety
///
/// `engine` must be null or a handle from [`qpopss_engine_new`] that has
/// not been freed.
#[no_mangle]
pub unsafe extern "C" fn qpopss_engine_free(engine: *mut QpopssEngine) {
    if !engine.is_null() {
        drop(Box::from_raw(engine));
    }
}

/// # Safety
///
/// `engine` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qpopss_engine_counters_per_instance(engine: *const QpopssEngine, out: *mut usize) -> QpopssStatus {
    guard(|| put(out, deref(engine, "engine")?.engine.counters_per_instance()))
}

/// Stream length so far: the sum of all threads' processed counts.
///
/// # Safety
///
/// `engine` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qpopss_engine_total_processed(engine: *const QpopssEngine, out: *mut u64) -> QpopssStatus {
    guard(|| put(out, deref(engine, "engine")?.engine.total_processed()))
}

/// Drains every delegation filter. Fails with `Precondition` while any
/// worker handle is alive.
///
/// # Safety
///
/// `engine` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn qpopss_engine_flush(engine: *const QpopssEngine) -> QpopssStatus {
    guard(|| Ok(deref(engine, "engine")?.engine.flush()?))
}

/// Runs a frequent-elements query on behalf of thread `thread`.
///
/// # Safety
///
/// `engine` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qpopss_engine_query(
    engine: *const QpopssEngine,
    thread: usize,
    out: *mut *mut QpopssReport,
) -> QpopssStatus {
    guard(|| {
        let r: FrequentElementsReport = deref(engine, "engine")?.engine.query(thread)?;
        let report = QpopssReport { entries: r.entries, n_at_start: r.n_at_start, threshold: r.threshold_used };
        put(out, Box::into_raw(Box::new(report)))
    })
}

/// Claims the update role of thread `thread`.
///
/// # Safety
///
/// `engine` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qpopss_worker_new(
    engine: *const QpopssEngine,
    thread: usize,
    out: *mut *mut QpopssWorker,
) -> QpopssStatus {
    guard(|| {
        let arc = Arc::clone(&deref(engine, "engine")?.engine);
        // SAFETY: the engine lives in the Arc's heap allocation, which the
        // worker handle keeps alive and outlives the borrowing `Worker`.
        let engine_ref: &'static Engine = &*Arc::as_ptr(&arc);
        let worker = engine_ref.worker(thread)?;
        put(out, Box::into_raw(Box::new(QpopssWorker { worker, _engine: arc })))
    })
}

/// # Safety
///
/// `worker` must be null or a live worker handle.
#[no_mangle]
pub unsafe extern "C" fn qpopss_worker_free(worker: *mut QpopssWorker) {
    if !worker.is_null() {
        drop(Box::from_raw(worker));
    }
}

/// Records one occurrence of `element`. May block while this thread's
/// filters are being drained by their owners.
///
/// # Safety
///
/// `worker` must be a live handle used by one thread at a time.
#[no_mangle]
pub unsafe extern "C" fn qpopss_worker_update(worker: *mut QpopssWorker, element: u64) -> QpopssStatus {
    guard(|| Ok(deref_mut(worker, "worker")?.worker.update(element)?))
}

/// Records a batch of occurrences.
///
/// # Safety
///
/// `worker` must be a live handle and `elements` valid for `len` reads.
#[no_mangle]
pub unsafe extern "C" fn qpopss_worker_update_batch(
    worker: *mut QpopssWorker,
    elements: *const u64,
    len: usize,
) -> QpopssStatus {
    guard(|| {
        let w = deref_mut(worker, "worker")?;
        if len == 0 {
            return Ok(());
        }
        if elements.is_null() {
            return Err(null("elements"));
        }
        for &e in std::slice::from_raw_parts(elements, len) {
            w.worker.update(e)?;
        }
        Ok(())
    })
}

/// Folds this thread's pending filters into its synopsis.
///
/// # Safety
///
/// `worker` must be a live handle; `drained` may be null.
#[no_mangle]
pub unsafe extern "C" fn qpopss_worker_process_pending(worker: *mut QpopssWorker, drained: *mut usize) -> QpopssStatus {
    guard(|| {
        let n = deref_mut(worker, "worker")?.worker.process_pending();
        if !drained.is_null() {
            drained.write(n);
        }
        Ok(())
    })
}

/// Hands over this thread's filters and waits until they are drained.
///
/// # Safety
///
/// `worker` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn qpopss_worker_flush(worker: *mut QpopssWorker) -> QpopssStatus {
    guard(|| {
        deref_mut(worker, "worker")?.worker.flush();
        Ok(())
    })
}

/// # Safety
///
/// `report` must be null or a live report handle.
#[no_mangle]
pub unsafe extern "C" fn qpopss_report_free(report: *mut QpopssReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// # Safety
///
/// `report` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qpopss_report_len(report: *const QpopssReport, out: *mut usize) -> QpopssStatus {
    guard(|| put(out, deref(report, "report")?.entries.len()))
}

/// Stream length the query's threshold was computed from.
///
/// # Safety
///
/// `report` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qpopss_report_n_at_start(report: *const QpopssReport, out: *mut u64) -> QpopssStatus {
    guard(|| put(out, deref(report, "report")?.n_at_start))
}

/// # Safety
///
/// `report` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qpopss_report_threshold(report: *const QpopssReport, out: *mut u64) -> QpopssStatus {
    guard(|| put(out, deref(report, "report")?.threshold))
}

/// Reads entry `index` of a report.
///
/// # Safety
///
/// `report` must be a live handle; both outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn qpopss_report_get(
    report: *const QpopssReport,
    index: usize,
    element: *mut u64,
    estimate: *mut u64,
) -> QpopssStatus {
    guard(|| {
        let r = deref(report, "report")?;
        let entry = r
            .entries
            .get(index)
            .ok_or_else(|| Fail(QpopssStatus::OutOfRange, format!("index {index} >= {}", r.entries.len())))?;
        if element.is_null() || estimate.is_null() {
            return Err(null("output pointer"));
        }
        element.write(entry.element);
        estimate.write(entry.estimate);
        Ok(())
    })
}

/// A standalone single-threaded synopsis with `counters` counters.
///
/// # Safety
///
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qpopss_qoss_new(counters: usize, out: *mut *mut QpopssQoss) -> QpopssStatus {
    guard(|| put(out, Box::into_raw(Box::new(QpopssQoss { qoss: Qoss::with_capacity(counters)? }))))
}

/// # Safety
///
/// `qoss` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn qpopss_qoss_free(qoss: *mut QpopssQoss) {
    if !qoss.is_null() {
        drop(Box::from_raw(qoss));
    }
}

/// # Safety
///
/// `qoss` must be a live handle not used concurrently.
#[no_mangle]
pub unsafe extern "C" fn qpopss_qoss_update(qoss: *mut QpopssQoss, element: u64, weight: u64) -> QpopssStatus {
    guard(|| Ok(deref_mut(qoss, "qoss")?.qoss.update(element, weight)?))
}

/// Estimated count of `element`; `NotFound` when it is not tracked.
///
/// # Safety
///
/// `qoss` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qpopss_qoss_estimate(qoss: *const QpopssQoss, element: u64, out: *mut u64) -> QpopssStatus {
    guard(|| {
        let q = deref(qoss, "qoss")?;
        let est = q.qoss.estimate(element).ok_or(Error::NotFound(element))?;
        put(out, est)
    })
}

/// Every tracked element whose estimate exceeds `threshold`. The report's
/// stream length is the synopsis' total weight.
///
/// # Safety
///
/// `qoss` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qpopss_qoss_query(
    qoss: *mut QpopssQoss,
    threshold: u64,
    out: *mut *mut QpopssReport,
) -> QpopssStatus {
    guard(|| {
        let q = deref_mut(qoss, "qoss")?;
        let report = QpopssReport { entries: q.qoss.query(threshold), n_at_start: q.qoss.total_weight(), threshold };
        put(out, Box::into_raw(Box::new(report)))
    })
}
