/* Copyright 2026 The qpopss Authors. Licensed under the Apache License, Version 2.0. */

#ifndef QPOPSS_H
#define QPOPSS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result of every fallible call.
 */
typedef enum QpopssStatus {
  QPOPSS_STATUS_OK = 0,
  QPOPSS_STATUS_NULL_POINTER = 1,
  QPOPSS_STATUS_INVALID_ARGUMENT = 2,
  QPOPSS_STATUS_PRECONDITION = 3,
  QPOPSS_STATUS_NOT_FOUND = 4,
  QPOPSS_STATUS_OUT_OF_RANGE = 5,
  QPOPSS_STATUS_IO = 6,
  QPOPSS_STATUS_PARSE = 7,
  QPOPSS_STATUS_INTERNAL = 8,
  QPOPSS_STATUS_PANIC = 9,
} QpopssStatus;

typedef struct QpopssEngine QpopssEngine;

typedef struct QpopssQoss QpopssQoss;

typedef struct QpopssReport QpopssReport;

typedef struct QpopssWorker QpopssWorker;

/*
 Engine parameters. `zipf_a > 1` selects Zipf sizing with that skew;
 any other value selects general sizing.
 */
typedef struct QpopssConfig {
  double epsilon;
  double phi;
  size_t threads;
  size_t filter_slots;
  uint64_t handover_bound;
  uint64_t owner_seed;
  double zipf_a;
} QpopssConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 A configuration with default filter parameters and general sizing.
 */
struct QpopssConfig qpopss_config_default(double epsilon, double phi, size_t threads);

/*
 Static description of a status code.
 */
const char *qpopss_status_str(enum QpopssStatus status);

/*
 Copies the calling thread's last error message into `buf` as a
 NUL-terminated string, truncating to `len - 1` bytes. Returns the full
 message length.

 # Safety

 `buf` must be null or valid for `len` bytes.
 */
size_t qpopss_last_error(char *buf, size_t len);

/*
 # Safety

 `config` must point to a valid config and `out` to writable storage.
 */
enum QpopssStatus qpopss_engine_new(const struct QpopssConfig *config, struct QpopssEngine **out);

/*
 Releases an engine handle. Workers created from it stay valid until
 they are freed.

 # Safety

 `engine` must be null or a handle from [`qpopss_engine_new`] that has
 not been freed.
 */
void qpopss_engine_free(struct QpopssEngine *engine);

/*
 # Safety

 `engine` must be a live handle and `out` writable.
 */
enum QpopssStatus qpopss_engine_counters_per_instance(const struct QpopssEngine *engine,
                                                      size_t *out);

/*
 Stream length so far: the sum of all threads' processed counts.

 # Safety

 `engine` must be a live handle and `out` writable.
 */
enum QpopssStatus qpopss_engine_total_processed(const struct QpopssEngine *engine, uint64_t *out);

/*
 Drains every delegation filter. Fails with `Precondition` while any
 worker handle is alive.

 # Safety

 `engine` must be a live handle.
 */
enum QpopssStatus qpopss_engine_flush(const struct QpopssEngine *engine);

/*
 Runs a frequent-elements query on behalf of thread `thread`.

 # Safety

 `engine` must be a live handle and `out` writable.
 */
enum QpopssStatus qpopss_engine_query(const struct QpopssEngine *engine,
                                      size_t thread,
                                      struct QpopssReport **out);

/*
 Claims the update role of thread `thread`.

 # Safety

 `engine` must be a live handle and `out` writable.
 */
enum QpopssStatus qpopss_worker_new(const struct QpopssEngine *engine,
                                    size_t thread,
                                    struct QpopssWorker **out);

/*
 # Safety

 `worker` must be null or a live worker handle.
 */
void qpopss_worker_free(struct QpopssWorker *worker);

/*
 Records one occurrence of `element`. May block while this thread's
 filters are being drained by their owners.

 # Safety

 `worker` must be a live handle used by one thread at a time.
 */
enum QpopssStatus qpopss_worker_update(struct QpopssWorker *worker, uint64_t element);

/*
 Records a batch of occurrences.

 # Safety

 `worker` must be a live handle and `elements` valid for `len` reads.
 */
enum QpopssStatus qpopss_worker_update_batch(struct QpopssWorker *worker,
                                             const uint64_t *elements,
                                             size_t len);

/*
 Folds this thread's pending filters into its synopsis.

 # Safety

 `worker` must be a live handle; `drained` may be null.
 */
enum QpopssStatus qpopss_worker_process_pending(struct QpopssWorker *worker, size_t *drained);

/*
 Hands over this thread's filters and waits until they are drained.

 # Safety

 `worker` must be a live handle.
 */
enum QpopssStatus qpopss_worker_flush(struct QpopssWorker *worker);

/*
 # Safety

 `report` must be null or a live report handle.
 */
void qpopss_report_free(struct QpopssReport *report);

/*
 # Safety

 `report` must be a live handle and `out` writable.
 */
enum QpopssStatus qpopss_report_len(const struct QpopssReport *report, size_t *out);

/*
 Stream length the query's threshold was computed from.

 # Safety

 `report` must be a live handle and `out` writable.
 */
enum QpopssStatus qpopss_report_n_at_start(const struct QpopssReport *report, uint64_t *out);

/*
 # Safety

 `report` must be a live handle and `out` writable.
 */
enum QpopssStatus qpopss_report_threshold(const struct QpopssReport *report, uint64_t *out);

/*
 Reads entry `index` of a report.

 # Safety

 `report` must be a live handle; both outputs must be writable.
 */
enum QpopssStatus qpopss_report_get(const struct QpopssReport *report,
                                    size_t index,
                                    uint64_t *element,
                                    uint64_t *estimate);

/*
 A standalone single-threaded synopsis with `counters` counters.

 # Safety

 `out` must be writable.
 */
enum QpopssStatus qpopss_qoss_new(size_t counters, struct QpopssQoss **out);

/*
 # Safety

 `qoss` must be null or a live handle.
 */
void qpopss_qoss_free(struct QpopssQoss *qoss);

/*
 # Safety

 `qoss` must be a live handle not used concurrently.
 */
enum QpopssStatus qpopss_qoss_update(struct QpopssQoss *qoss, uint64_t element, uint64_t weight);

/*
 Estimated count of `element`; `NotFound` when it is not tracked.

 # Safety

 `qoss` must be a live handle and `out` writable.
 */
enum QpopssStatus qpopss_qoss_estimate(const struct QpopssQoss *qoss,
                                       uint64_t element,
                                       uint64_t *out);

/*
 Every tracked element whose estimate exceeds `threshold`. The report's
 stream length is the synopsis' total weight.

 # Safety

 `qoss` must be a live handle and `out` writable.
 */
enum QpopssStatus qpopss_qoss_query(struct QpopssQoss *qoss,
                                    uint64_t threshold,
                                    struct QpopssReport **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QPOPSS_H */
