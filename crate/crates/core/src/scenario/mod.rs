//! Experiment orchestration: configuration files, topologies, replicated
//! runs, metrics and the power-control sweep.

mod config;
mod experiment;
mod metrics;
mod powerctl;
mod topology;

pub use config::{AntennaSection, GridMw, PowerSection, ProtocolSection, RadioConfig, ScenarioConfig, TopologyConfig};
pub use experiment::{
    replication_seeds, run_experiment, ExperimentReport, GroupSummary, RunOptions, RunRecord, RunViolation,
};
pub use metrics::{jain_index, Summary};
pub use powerctl::{powerctl_sweep, write_sweep_csv, LinkNodeConfig, LinkSpecConfig, SweepRange, SweepRow};
pub use topology::{generate_topology, Topology, MIN_SEPARATION_M};
