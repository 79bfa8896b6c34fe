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

//! Concurrent frequent-elements tracking with Space-Saving synopses over
//! min-max heaps, domain splitting and delegation filters.

pub mod cli;
pub mod delegation;
pub mod engine;
pub mod error;
pub mod heap;
pub mod lock;
pub mod metrics;
pub mod oracle;
pub mod qoss;
pub mod workload;

pub use engine::{Engine, EngineConfig, FrequentElementsReport, Sizing, Worker};
pub use error::{Error, Result};
pub use heap::{Counter, ElementId, MinMaxHeap, NONE};
pub use qoss::{Qoss, QueryResultEntry};
