/* Copyright 2026 The qpopss Authors. Licensed under the Apache License, Version 2.0. */
#include <stdio.h>
#include "qpopss.h"

int main(void) {
  QpopssConfig cfg = qpopss_config_default(0.01, 0.1, 1);
  QpopssEngine *eng = NULL;
  QpopssWorker *w = NULL;
  QpopssReport *r = NULL;
  if (qpopss_engine_new(&cfg, &eng) != QPOPSS_STATUS_OK) return 1;
  if (qpopss_worker_new(eng, 0, &w) != QPOPSS_STATUS_OK) return 2;
  for (uint64_t i = 0; i < 1000; i++) {
    if (qpopss_worker_update(w, i % 3 == 0 ? 7 : i) != QPOPSS_STATUS_OK) return 3;
  }
  qpopss_worker_free(w);
  if (qpopss_engine_flush(eng) != QPOPSS_STATUS_OK) return 4;
  if (qpopss_engine_query(eng, 0, &r) != QPOPSS_STATUS_OK) return 5;
  size_t len = 0;
  uint64_t e = 0, est = 0;
  qpopss_report_len(r, &len);
  if (len != 1 || qpopss_report_get(r, 0, &e, &est) != QPOPSS_STATUS_OK || e != 7) return 6;
  printf("element %llu estimate %llu\n", (unsigned long long)e, (unsigned long long)est);
  qpopss_report_free(r);
  qpopss_engine_free(eng);
  return 0;
}
