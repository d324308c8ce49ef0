use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use super::config::ScenarioConfig;
use super::metrics::Summary;
use crate::des::{derive_seed, SimTime, TieBreak};
use crate::error::{Error, Result};
use crate::sim::{check_trace, simulate, write_trace, ProtocolVariant, Record, RunResult};

/// Records shown around a violation when reporting it.
const CONTEXT_RECORDS: usize = 6;

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Record every run's trace and audit it against the protocol rules.
    pub check_invariants: bool,
    /// Write every trace to this file (forces sequential execution).
    pub trace_path: Option<PathBuf>,
    pub tie_break: TieBreak,
}

/// One (node count, replication, variant) run.
#[derive(Clone, Debug, Serialize)]
pub struct RunRecord {
    pub node_count: usize,
    pub replication: u32,
    pub topology_seed: u64,
    pub result: RunResult,
}

/// A rule violation found in one run, with the surrounding trace lines.
#[derive(Clone, Debug, Serialize)]
pub struct RunViolation {
    pub node_count: usize,
    pub replication: u32,
    pub variant: ProtocolVariant,
    pub message: String,
    pub context: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct GroupSummary {
    pub node_count: usize,
    pub variant: ProtocolVariant,
    pub replications: usize,
    pub network_throughput_bps: Summary,
    pub uplink_throughput_bps: Summary,
    pub downlink_throughput_bps: Summary,
    /// Over the replications where the index is defined.
    pub jain_index: Summary,
    pub hd_transactions: Summary,
    pub two_node_transactions: Summary,
    pub three_node_transactions: Summary,
    pub failures: Summary,
    pub drops: Summary,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentReport {
    pub name: String,
    pub seed: u64,
    pub runs: Vec<RunRecord>,
    pub violations: Vec<RunViolation>,
}

/// Flat `results.csv` row.
#[derive(Clone, Debug, Serialize)]
struct CsvRow {
    node_count: usize,
    replication: u32,
    variant: ProtocolVariant,
    topology_seed: u64,
    run_seed: u64,
    duration_s: f64,
    network_throughput_bps: f64,
    uplink_throughput_bps: f64,
    downlink_throughput_bps: f64,
    jain_index: Option<f64>,
    hd_transactions: u64,
    two_node_transactions: u64,
    three_node_transactions: u64,
    attempts: u64,
    successes: u64,
    collisions: u64,
    data_losses: u64,
    receiver_busy: u64,
    deferred: u64,
    drops: u64,
    events: u64,
}

impl From<&RunRecord> for CsvRow {
    fn from(r: &RunRecord) -> Self {
        let x = &r.result;
        CsvRow {
            node_count: r.node_count,
            replication: r.replication,
            variant: x.variant,
            topology_seed: r.topology_seed,
            run_seed: x.seed,
            duration_s: x.duration_s,
            network_throughput_bps: x.network_throughput_bps,
            uplink_throughput_bps: x.uplink_throughput_bps,
            downlink_throughput_bps: x.downlink_throughput_bps,
            jain_index: x.jain_index,
            hd_transactions: x.transactions.hd,
            two_node_transactions: x.transactions.two_node,
            three_node_transactions: x.transactions.three_node,
            attempts: x.attempts,
            successes: x.successes,
            collisions: x.collisions,
            data_losses: x.data_losses,
            receiver_busy: x.receiver_busy,
            deferred: x.deferred,
            drops: x.drops,
            events: x.events_dispatched,
        }
    }
}

impl ExperimentReport {
    pub fn results(&self, n: usize, variant: ProtocolVariant) -> impl Iterator<Item = &RunResult> {
        self.runs.iter().filter(move |r| r.node_count == n && r.result.variant == variant).map(|r| &r.result)
    }

    pub fn mean_throughput(&self, n: usize, variant: ProtocolVariant) -> f64 {
        Summary::of(&self.results(n, variant).map(|r| r.network_throughput_bps).collect::<Vec<_>>()).mean
    }

    /// Mean Jain index over replications where it is defined.
    pub fn mean_jain(&self, n: usize, variant: ProtocolVariant) -> f64 {
        Summary::of(&self.results(n, variant).filter_map(|r| r.jain_index).collect::<Vec<_>>()).mean
    }

    pub fn summaries(&self) -> Vec<GroupSummary> {
        let mut groups: BTreeMap<(usize, ProtocolVariant), Vec<&RunResult>> = BTreeMap::new();
        for r in &self.runs {
            groups.entry((r.node_count, r.result.variant)).or_default().push(&r.result);
        }
        groups
            .into_iter()
            .map(|((node_count, variant), rs)| {
                let s = |f: &dyn Fn(&RunResult) -> f64| Summary::of(&rs.iter().map(|r| f(r)).collect::<Vec<_>>());
                GroupSummary {
                    node_count,
                    variant,
                    replications: rs.len(),
                    network_throughput_bps: s(&|r| r.network_throughput_bps),
                    uplink_throughput_bps: s(&|r| r.uplink_throughput_bps),
                    downlink_throughput_bps: s(&|r| r.downlink_throughput_bps),
                    jain_index: Summary::of(&rs.iter().filter_map(|r| r.jain_index).collect::<Vec<_>>()),
                    hd_transactions: s(&|r| r.transactions.hd as f64),
                    two_node_transactions: s(&|r| r.transactions.two_node as f64),
                    three_node_transactions: s(&|r| r.transactions.three_node as f64),
                    failures: s(&|r| r.failures() as f64),
                    drops: s(&|r| r.drops as f64),
                }
            })
            .collect()
    }

    pub fn write_results_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.runs {
            w.serialize(CsvRow::from(r))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_summary_json<W: Write>(&self, out: W) -> Result<()> {
        #[derive(Serialize)]
        struct Doc<'a> {
            name: &'a str,
            seed: u64,
            groups: Vec<GroupSummary>,
            violations: usize,
        }
        let doc = Doc { name: &self.name, seed: self.seed, groups: self.summaries(), violations: self.violations.len() };
        serde_json::to_writer_pretty(out, &doc)?;
        Ok(())
    }

    /// Writes `results.csv` and `summary.json` into `dir`, creating it.
    pub fn write_outputs(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.write_results_csv(BufWriter::new(File::create(dir.join("results.csv"))?))?;
        let mut f = BufWriter::new(File::create(dir.join("summary.json"))?);
        self.write_summary_json(&mut f)?;
        writeln!(f)?;
        f.flush()?;
        Ok(())
    }

    /// Turns the first recorded violation into an error.
    pub fn ensure_clean(&self) -> Result<()> {
        match self.violations.first() {
            None => Ok(()),
            Some(v) => Err(Error::Invariant(format!(
                "{} violation(s); first in n={} replication={} {}: {}\n{}",
                self.violations.len(),
                v.node_count,
                v.replication,
                v.variant,
                v.message,
                v.context.join("\n")
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Job {
    n: usize,
    replication: u32,
    variant: ProtocolVariant,
}

/// Seeds for replication `rep` at `n` nodes: topology and run seeds are
/// shared by every variant so protocols are compared on identical inputs.
pub fn replication_seeds(base: u64, n: usize, rep: u32) -> (u64, u64) {
    let key = derive_seed(base, ((n as u64) << 32) | rep as u64);
    (derive_seed(key, 0), derive_seed(key, 1))
}

struct JobOutput {
    record: RunRecord,
    violations: Vec<RunViolation>,
    trace: Option<Vec<Record>>,
}

fn context_of(trace: &[Record], time: SimTime, node: usize) -> Vec<String> {
    let idx = trace.partition_point(|r| r.time < time);
    let lo = idx.saturating_sub(CONTEXT_RECORDS);
    let hi = (idx + CONTEXT_RECORDS).min(trace.len());
    trace[lo..hi].iter().filter(|r| r.node == node || r.time == time).map(|r| r.to_string()).collect()
}

fn run_job(config: &ScenarioConfig, job: Job, opts: &RunOptions) -> Result<JobOutput> {
    let (topo_seed, run_seed) = replication_seeds(config.seed, job.n, job.replication);
    let topology = config.topology(job.n, topo_seed)?;
    let mut setup = config.setup(&topology, job.variant, run_seed)?;
    let want_trace = opts.check_invariants || opts.trace_path.is_some();
    setup.params.record_trace = want_trace;
    setup.params.tie_break = opts.tie_break;
    let timing = setup.params.timing;
    let out = simulate(setup)?;
    let mut violations = Vec::new();
    let violation = |message: String, context: Vec<String>| RunViolation {
        node_count: job.n,
        replication: job.replication,
        variant: job.variant,
        message,
        context,
    };
    for v in &out.violations {
        violations.push(violation(v.clone(), Vec::new()));
    }
    if opts.check_invariants {
        let trace = out.trace.as_deref().unwrap_or_default();
        for v in check_trace(trace, job.variant, &timing) {
            violations.push(violation(v.to_string(), context_of(trace, v.time, v.node)));
        }
    }
    Ok(JobOutput {
        record: RunRecord { node_count: job.n, replication: job.replication, topology_seed: topo_seed, result: out.result },
        violations,
        trace: if opts.trace_path.is_some() { out.trace } else { None },
    })
}

/// Runs every variant at every node count for every replication.
///
/// Runs execute in parallel unless a trace file is requested; the output
/// order is always node count, replication, then variant as listed.
pub fn run_experiment(config: &ScenarioConfig, opts: &RunOptions) -> Result<ExperimentReport> {
    config.validate()?;
    let mut jobs = Vec::new();
    for &n in &config.node_counts {
        for replication in 0..config.replications {
            for &variant in &config.variants {
                jobs.push(Job { n, replication, variant });
            }
        }
    }
    let mut report =
        ExperimentReport { name: config.name.clone(), seed: config.seed, runs: Vec::new(), violations: Vec::new() };
    let absorb = |o: JobOutput, report: &mut ExperimentReport| {
        report.runs.push(o.record);
        report.violations.extend(o.violations);
    };
    match &opts.trace_path {
        Some(path) => {
            let mut f = BufWriter::new(File::create(path)?);
            for job in jobs {
                let mut o = run_job(config, job, opts)?;
                writeln!(f, "# run n={} replication={} variant={} seed={}", job.n, job.replication, job.variant, o.record.result.seed)?;
                write_trace(&mut f, o.trace.as_deref().unwrap_or_default())?;
                o.trace = None;
                absorb(o, &mut report);
            }
            f.flush()?;
        }
        None => {
            let outs: Vec<Result<JobOutput>> = jobs.par_iter().map(|&job| run_job(config, job, opts)).collect();
            for o in outs {
                absorb(o?, &mut report);
            }
        }
    }
    Ok(report)
}
