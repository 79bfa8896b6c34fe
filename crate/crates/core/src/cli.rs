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

//! Command-line experiment harness.
//!
//! Every command prints one JSON record (`"schema": 1`) carrying the full
//! configuration and seeds needed to replay it. Exit status is 0 on
//! success, 1 when a run detects an accuracy or consistency violation and
//! 2 on bad usage or unreadable input.

use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_pcg::Pcg64;
use serde_json::{json, Value};

use crate::engine::run::{run_threads, RunOptions};
use crate::engine::sim::{self, ScriptMix, SimOptions};
use crate::engine::{Engine, EngineConfig, Sizing};
use crate::error::Error;
use crate::heap::ElementId;
use crate::metrics::{self, PerfCounters};
use crate::oracle::{exact_count, rank_threshold, ZipfParams};
use crate::workload::{self, Format, StreamSpec, StreamWriter};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(name = "qpopss", version, about = "Concurrent frequent-elements engine and experiment harness")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a seeded Zipf stream to a file.
    Generate(GenerateArgs),
    /// Run an accuracy, throughput, latency or consistency experiment.
    Run(RunArgs),
    /// Print counter counts and modeled memory for a configuration.
    Space(SpaceArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Text,
    Bin,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Format {
        match f {
            FormatArg::Text => Format::Text,
            FormatArg::Bin => Format::Bin,
        }
    }
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Zipf skew (> 0).
    #[arg(long)]
    pub a: f64,
    #[arg(long)]
    pub universe: u64,
    #[arg(long)]
    pub n: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = FormatArg::Bin)]
    pub format: FormatArg,
    /// Map ranks to a seeded permutation of ids.
    #[arg(long)]
    pub shuffle: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SizingArg {
    General,
    Zipf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Accuracy,
    Throughput,
    Latency,
    Consistency,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Stream file (TEXT or BIN, detected). Without it a Zipf stream is
    /// generated from --a, --universe, --n and --seed.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Zipf skew of the generated stream; also the skew assumed by
    /// `--sizing zipf`.
    #[arg(long)]
    pub a: Option<f64>,
    #[arg(long)]
    pub universe: Option<u64>,
    #[arg(long)]
    pub n: Option<u64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub shuffle: bool,
    #[arg(long)]
    pub phi: f64,
    #[arg(long)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    /// Slots per delegation filter.
    #[arg(long, default_value_t = EngineConfig::DEFAULT_FILTER_SLOTS)]
    pub d: usize,
    /// Handover bound per thread.
    #[arg(long, default_value_t = EngineConfig::DEFAULT_HANDOVER_BOUND)]
    pub e: u64,
    #[arg(long, default_value_t = EngineConfig::DEFAULT_OWNER_SEED)]
    pub owner_seed: u64,
    #[arg(long, value_enum, default_value_t = SizingArg::General)]
    pub sizing: SizingArg,
    /// Queries per million updates, per thread. Latency mode uses 100 when
    /// this is 0.
    #[arg(long, default_value_t = 0.0)]
    pub query_rate: f64,
    #[arg(long, value_enum, default_value_t = Mode::Accuracy)]
    pub mode: Mode,
    /// Throughput mode: how long to replay the stream.
    #[arg(long, default_value_t = 1.0)]
    pub duration_seconds: f64,
    /// Consistency mode: number of scripted interleavings.
    #[arg(long, default_value_t = 20)]
    pub interleavings: u64,
    #[arg(long)]
    pub json_out: Option<PathBuf>,
    /// Also write the result fields as a one-row CSV table.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SpaceArgs {
    #[arg(long)]
    pub phi: f64,
    #[arg(long)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    /// Zipf skew; adds a Zipf-sizing row and the rank threshold when > 1.
    #[arg(long)]
    pub a: Option<f64>,
    #[arg(long, default_value_t = EngineConfig::DEFAULT_FILTER_SLOTS)]
    pub d: usize,
    #[arg(long)]
    pub json_out: Option<PathBuf>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

/// Why a command did not succeed.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Engine(#[from] Error),
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Engine(Error::Io(e))
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Outcome of a successful command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    Violation,
}

impl Status {
    pub fn exit_code(self) -> u8 {
        match self {
            Status::Ok => 0,
            Status::Violation => 1,
        }
    }
}

pub fn main() -> ExitCode {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let stdout = io::stdout();
    match execute(&cli, &mut stdout.lock()) {
        Ok(status) => ExitCode::from(status.exit_code()),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

/// Runs a parsed command, writing its record to `out`.
pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<Status, CliError> {
    match &cli.command {
        Command::Generate(a) => cmd_generate(a, out),
        Command::Run(a) => cmd_run(a, out),
        Command::Space(a) => cmd_space(a, out),
    }
}

fn emit(record: &Value, json_out: Option<&Path>, out: &mut dyn Write) -> Result<(), CliError> {
    match json_out {
        Some(p) => {
            let mut f = File::create(p)?;
            serde_json::to_writer_pretty(&mut f, record).map_err(io::Error::from)?;
            writeln!(f)?;
        }
        None => {
            serde_json::to_writer(&mut *out, record).map_err(io::Error::from)?;
            writeln!(out)?;
        }
    }
    Ok(())
}

fn csv_cell(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

fn write_csv(path: &Path, rows: &[&serde_json::Map<String, Value>]) -> Result<(), CliError> {
    let Some(first) = rows.first() else { return Ok(()) };
    let mut f = io::BufWriter::new(File::create(path)?);
    let keys: Vec<&String> = first.keys().collect();
    writeln!(f, "{}", keys.iter().map(|k| k.as_str()).collect::<Vec<_>>().join(","))?;
    for row in rows {
        let cells: Vec<String> = keys.iter().map(|k| row.get(*k).map(csv_cell).unwrap_or_default()).collect();
        writeln!(f, "{}", cells.join(","))?;
    }
    f.flush()?;
    Ok(())
}

fn cmd_generate(a: &GenerateArgs, out: &mut dyn Write) -> Result<Status, CliError> {
    let spec = StreamSpec::new(a.a, a.universe, a.n, a.seed).map_err(|e| usage(e.to_string()))?.shuffled(a.shuffle);
    let stream = workload::generate(&spec).map_err(|e| usage(e.to_string()))?;
    let mut w = StreamWriter::create(&a.out, a.format.into())?;
    for e in stream {
        w.write(e)?;
    }
    let written = w.written();
    w.finish()?;
    let record = json!({
        "schema": SCHEMA_VERSION,
        "command": "generate",
        "spec": spec,
        "format": Format::from(a.format),
        "out": a.out,
        "records": written,
    });
    emit(&record, None, out)?;
    Ok(Status::Ok)
}

fn engine_config(a: &RunArgs) -> Result<EngineConfig, CliError> {
    if !(a.epsilon > 0.0 && a.epsilon <= a.phi && a.phi < 1.0) {
        return Err(usage(format!("need 0 < epsilon <= phi < 1 (epsilon={}, phi={})", a.epsilon, a.phi)));
    }
    let sizing = match a.sizing {
        SizingArg::General => Sizing::General,
        SizingArg::Zipf => match a.a {
            Some(skew) if skew > 1.0 => Sizing::Zipf { a: skew },
            Some(skew) => return Err(usage(format!("zipf sizing requires --a > 1 (got {skew}); use --sizing general"))),
            None => return Err(usage("zipf sizing requires --a")),
        },
    };
    let c = EngineConfig::new(a.epsilon, a.phi, a.threads)
        .with_filters(a.d, a.e)
        .with_seed(a.owner_seed)
        .with_sizing(sizing);
    c.validate().map_err(|e| usage(e.to_string()))?;
    Ok(c)
}

fn load_stream(a: &RunArgs) -> Result<(Vec<ElementId>, Value), CliError> {
    if let Some(p) = &a.input {
        let stream = workload::read_stream_vec(p)?;
        return Ok((stream, json!({ "source": "file", "path": p })));
    }
    let (Some(skew), Some(universe), Some(n)) = (a.a, a.universe, a.n) else {
        return Err(usage("give --input or all of --a, --universe and --n"));
    };
    let spec = StreamSpec::new(skew, universe, n, a.seed).map_err(|e| usage(e.to_string()))?.shuffled(a.shuffle);
    let stream = workload::generate_vec(&spec).map_err(|e| usage(e.to_string()))?;
    Ok((stream, json!({ "source": "zipf", "spec": spec })))
}

fn cmd_run(a: &RunArgs, out: &mut dyn Write) -> Result<Status, CliError> {
    let config = engine_config(a)?;
    if a.mode == Mode::Throughput && !(a.duration_seconds > 0.0 && a.duration_seconds.is_finite()) {
        return Err(usage("--duration-seconds must be positive"));
    }
    if !(a.query_rate >= 0.0 && a.query_rate.is_finite()) {
        return Err(usage("--query-rate must be a non-negative number"));
    }
    let (stream, source) = load_stream(a)?;
    if stream.is_empty() {
        return Err(usage("the input stream is empty"));
    }
    let (result, status) = match a.mode {
        Mode::Accuracy => run_accuracy(&config, &stream)?,
        Mode::Throughput => run_throughput(&config, &stream, a)?,
        Mode::Latency => run_latency(&config, &stream, a)?,
        Mode::Consistency => run_consistency(&config, &stream, a)?,
    };
    let record = json!({
        "schema": SCHEMA_VERSION,
        "command": "run",
        "mode": format!("{:?}", a.mode).to_lowercase(),
        "config": config,
        "counters_per_instance": config.counters_per_instance()?,
        "memory_bytes": metrics::memory_model(&config)?,
        "stream": source,
        "seeds": { "stream": a.seed, "owner": a.owner_seed },
        "result": result,
    });
    if let (Some(p), Value::Object(row)) = (&a.csv, &record["result"]) {
        write_csv(p, &[row])?;
    }
    emit(&record, a.json_out.as_deref(), out)?;
    Ok(status)
}

fn run_accuracy(config: &EngineConfig, stream: &[ElementId]) -> Result<(Value, Status), CliError> {
    let engine = Engine::new(*config)?;
    let stats = run_threads(&engine, stream, RunOptions { flush: true, ..Default::default() })?;
    let report = engine.query(0)?;
    let truth = exact_count(stream.iter().copied());
    let acc = metrics::accuracy(&report.entries, &truth, config.phi, config.epsilon)?;
    let status = if acc.violations > 0 || acc.recall < 1.0 { Status::Violation } else { Status::Ok };
    let result = json!({
        "n": truth.n(),
        "precision": acc.precision,
        "recall": acc.recall,
        "are": acc.are,
        "reported": acc.reported,
        "true_frequent": acc.true_frequent,
        "violations": acc.violations,
        "threshold": report.threshold_used,
        "elapsed_s": stats.elapsed.as_secs_f64(),
    });
    Ok((result, status))
}

fn throughput_once(config: &EngineConfig, stream: &[ElementId], opts: RunOptions) -> Result<PerfCounters, CliError> {
    let engine = Engine::new(*config)?;
    let stats = run_threads(&engine, stream, opts)?;
    Ok(PerfCounters::from(&stats))
}

fn run_throughput(config: &EngineConfig, stream: &[ElementId], a: &RunArgs) -> Result<(Value, Status), CliError> {
    let opts = RunOptions {
        query_rate: a.query_rate,
        duration: Some(Duration::from_secs_f64(a.duration_seconds)),
        flush: false,
    };
    let perf = throughput_once(config, stream, opts)?;
    let mops = perf.throughput() / 1e6;
    let speedup = if config.threads > 1 {
        let reference = EngineConfig { threads: 1, ..*config };
        let base = throughput_once(&reference, stream, opts)?.throughput() / 1e6;
        if base > 0.0 { mops / base } else { 0.0 }
    } else {
        1.0
    };
    let result = json!({
        "mops": mops,
        "speedup_ref": speedup,
        "updates_done": perf.updates_done,
        "queries_done": perf.queries_done,
        "elapsed_s": perf.elapsed.as_secs_f64(),
    });
    Ok((result, Status::Ok))
}

fn run_latency(config: &EngineConfig, stream: &[ElementId], a: &RunArgs) -> Result<(Value, Status), CliError> {
    let rate = if a.query_rate > 0.0 { a.query_rate } else { 100.0 };
    let perf = throughput_once(config, stream, RunOptions { query_rate: rate, ..Default::default() })?;
    let us = |d: Option<Duration>| d.map(|d| d.as_secs_f64() * 1e6);
    let result = json!({
        "mean_us": us(perf.mean_latency()),
        "p99_us": us(perf.p99_latency()),
        "samples": perf.query_latencies.len(),
        "query_rate": rate,
        "updates_done": perf.updates_done,
    });
    Ok((result, Status::Ok))
}

fn run_consistency(config: &EngineConfig, stream: &[ElementId], a: &RunArgs) -> Result<(Value, Status), CliError> {
    let t = config.threads;
    let start = Instant::now();
    let mut violations = Vec::new();
    let mut slack = 0;
    let mut queries = 0;
    for k in 0..a.interleavings {
        let mut rng = Pcg64::seed_from_u64(a.seed.wrapping_add(k));
        let mix = if k % 2 == 0 { ScriptMix::BALANCED } else { ScriptMix::DELAYED_HANDOVER };
        let script = sim::mid_stream_script(&mut rng, t, stream.len() / 10, 2 * stream.len(), mix);
        let opts = SimOptions { monitor_buffers: true, log_deliveries: false };
        let trace = sim::run_deterministic(*config, sim::partition(stream, t), &script, opts)?;
        queries += trace.queries.len();
        slack = slack.max(sim::max_window_slack(&trace));
        violations.extend(sim::check_trace(&trace, config).into_iter().map(|v| (k, v)));
    }
    for (k, v) in violations.iter().take(20) {
        log::error!("interleaving {k}: {v:?}");
    }
    let result = json!({
        "violations": violations.len(),
        "max_window_slack": slack,
        "queries": queries,
        "interleavings": a.interleavings,
        "elapsed_s": start.elapsed().as_secs_f64(),
    });
    let status = if violations.is_empty() { Status::Ok } else { Status::Violation };
    Ok((result, status))
}

fn cmd_space(a: &SpaceArgs, out: &mut dyn Write) -> Result<Status, CliError> {
    let base = EngineConfig::new(a.epsilon, a.phi, a.threads).with_filters(a.d, EngineConfig::DEFAULT_HANDOVER_BOUND);
    base.validate().map_err(|e| usage(e.to_string()))?;
    let mut rows = Vec::new();
    let mut push = |name: &str, c: &EngineConfig| -> Result<(), CliError> {
        let m = c.counters_per_instance()?;
        let padded = c.padded_counters_per_instance()?;
        rows.push(json!({
            "sizing": name,
            "threads": c.threads,
            "counters_per_instance": m,
            "padded_per_instance": padded,
            "total_counters": m * c.threads,
            "filter_counters": c.threads * c.threads * c.filter_slots,
            "memory_bytes": metrics::memory_model(c)?,
        }));
        Ok(())
    };
    push("general", &base)?;
    let mut rank = None;
    match a.a {
        Some(skew) if skew > 1.0 => {
            push("zipf", &base.with_sizing(Sizing::Zipf { a: skew }))?;
            rank = Some(rank_threshold(&ZipfParams::new(skew, u64::MAX)?, a.phi)?);
        }
        Some(skew) if skew.is_nan() || skew <= 0.0 => return Err(usage(format!("--a must be positive, got {skew}"))),
        _ => {}
    }
    if let Some(p) = &a.csv {
        let maps: Vec<&serde_json::Map<String, Value>> = rows.iter().filter_map(Value::as_object).collect();
        write_csv(p, &maps)?;
    }
    let record = json!({
        "schema": SCHEMA_VERSION,
        "command": "space",
        "phi": a.phi,
        "epsilon": a.epsilon,
        "a": a.a,
        "d": a.d,
        "rank_threshold": rank,
        "rows": rows,
    });
    emit(&record, a.json_out.as_deref(), out)?;
    Ok(Status::Ok)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(args: &[&str]) -> Result<(Status, Value), CliError> {
        let cli = Cli::try_parse_from(std::iter::once("qpopss").chain(args.iter().copied()))
            .map_err(|e| usage(e.to_string()))?;
        let mut buf = Vec::new();
        let status = execute(&cli, &mut buf)?;
        let text = String::from_utf8(buf).unwrap();
        Ok((status, serde_json::from_str(text.trim()).unwrap()))
    }

    #[test]
    fn space_rows() {
        let (_, v) = run(&["space", "--phi", "1e-3", "--epsilon", "1e-4", "--a", "2"]).unwrap();
        assert_eq!(v["schema"], 1);
        assert_eq!(v["rank_threshold"], 24);
        assert_eq!(v["rows"][0]["total_counters"], 10000);
        let (_, v) = run(&["space", "--phi", "1e-4", "--epsilon", "1e-5", "--threads", "24", "--a", "2"]).unwrap();
        assert_eq!(v["rows"][1]["counters_per_instance"], 65);
        assert_eq!(v["rows"][1]["memory_bytes"], (24 * 127 + 24 * 24 * 16) * 32);
    }

    #[test]
    fn usage_errors() {
        let is_usage = |args: &[&str]| matches!(run(args), Err(CliError::Usage(_)));
        assert!(is_usage(&["run", "--phi", "0.01", "--epsilon", "0.1", "--a", "1", "--universe", "10", "--n", "10"]));
        assert!(is_usage(&[
            "run", "--phi", "0.1", "--epsilon", "0.01", "--a", "1", "--universe", "10", "--n", "10", "--sizing", "zipf"
        ]));
        assert!(is_usage(&["run", "--phi", "0.1", "--epsilon", "0.01"]));
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("s.bin");
        let out = out.to_str().unwrap();
        assert!(is_usage(&["generate", "--a", "0", "--universe", "10", "--n", "10", "--out", out]));
        assert!(is_usage(&["generate", "--a", "1", "--universe", "10", "--n", "10", "--out", out, "--format", "csv"]));
    }

    #[test]
    fn generate_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.bin");
        let p2 = dir.path().join("b.bin");
        for p in [&p1, &p2] {
            let args = ["generate", "--a", "1.25", "--universe", "1000", "--n", "5000", "--seed", "7", "--out"];
            let (_, v) = run(&[&args[..], &[p.to_str().unwrap()]].concat()).unwrap();
            assert_eq!(v["records"], 5000);
        }
        let (b1, b2) = (std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        assert_eq!(b1.len(), 8 + 5000 * 8);
        assert_eq!(b1, b2);
    }

    #[test]
    fn accuracy_and_consistency_modes() {
        let (status, v) = run(&[
            "run", "--a", "1.25", "--universe", "10000", "--n", "100000", "--phi", "1e-2", "--epsilon", "1e-3",
            "--threads", "2",
        ])
        .unwrap();
        assert_eq!(status, Status::Ok);
        assert_eq!(v["result"]["recall"], 1.0);
        assert_eq!(v["config"]["threads"], 2);
        let (status, v) = run(&[
            "run", "--mode", "consistency", "--a", "1", "--universe", "500", "--n", "2000", "--phi", "0.05",
            "--epsilon", "0.01", "--threads", "2", "--e", "8", "--d", "4", "--interleavings", "3",
        ])
        .unwrap();
        assert_eq!(status, Status::Ok);
        assert_eq!(v["result"]["violations"], 0);
    }

    #[test]
    fn throughput_and_latency_modes() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("r.csv");
        let (_, v) = run(&[
            "run", "--mode", "throughput", "--a", "1", "--universe", "1000", "--n", "100000", "--phi", "1e-2",
            "--epsilon", "1e-3", "--duration-seconds", "0.05", "--query-rate", "100", "--csv", csv.to_str().unwrap(),
        ])
        .unwrap();
        assert!(v["result"]["mops"].as_f64().unwrap() > 0.0);
        assert!(std::fs::read_to_string(&csv).unwrap().starts_with("elapsed_s,mops"));
        let (_, v) = run(&[
            "run", "--mode", "latency", "--a", "1", "--universe", "1000", "--n", "100000", "--phi", "1e-2",
            "--epsilon", "1e-3",
        ])
        .unwrap();
        assert_eq!(v["result"]["samples"], 10);
    }
}
