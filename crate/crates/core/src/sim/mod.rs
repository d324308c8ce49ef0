//! Packet-level network simulation of the FD protocol and its half-duplex
//! baselines.

mod config;
mod invariants;
mod links;
mod network;
mod result;
mod trace;

pub use config::{NodeSpec, ProtocolVariant, SimParams, SimSetup, TrafficConfig, TrafficModel};
pub use invariants::{check_trace, Rule, Violation};
pub use network::{simulate, Network, SimOutput};
pub use result::{LinkSinr, NodeResult, RunResult, TxnCounts};
pub use trace::{write_trace, FailureCause, NodeId, Outcome, Record, TraceKind, TxnMode};
