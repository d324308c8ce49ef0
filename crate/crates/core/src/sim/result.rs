use serde::Serialize;

use super::config::ProtocolVariant;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct TxnCounts {
    pub hd: u64,
    pub two_node: u64,
    pub three_node: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NodeResult {
    pub node: usize,
    pub is_ap: bool,
    /// Payload bits acknowledged to this node as sender within the run.
    pub delivered_bits: u64,
    pub delivered_packets: u64,
    pub throughput_bps: f64,
    pub attempts: u64,
    pub successes: u64,
    pub failures: u64,
    pub drops: u64,
}

/// DATA-frame SINR statistics of one directed link, in dB (per-frame minimum).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LinkSinr {
    pub src: usize,
    pub dst: usize,
    pub frames: u64,
    pub failed: u64,
    pub mean_sinr_db: f64,
    pub min_sinr_db: f64,
    pub max_sinr_db: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunResult {
    pub variant: ProtocolVariant,
    pub node_count: usize,
    pub seed: u64,
    pub duration_s: f64,
    pub network_throughput_bps: f64,
    pub uplink_throughput_bps: f64,
    pub downlink_throughput_bps: f64,
    /// Jain index over the users' uplink throughput; `None` when no user
    /// delivered anything.
    pub jain_index: Option<f64>,
    pub transactions: TxnCounts,
    pub attempts: u64,
    pub successes: u64,
    pub collisions: u64,
    pub data_losses: u64,
    pub receiver_busy: u64,
    pub deferred: u64,
    pub drops: u64,
    pub link_sinr: Vec<LinkSinr>,
    pub nodes: Vec<NodeResult>,
    pub events_dispatched: u64,
}

impl RunResult {
    /// Failed attempts of any cause.
    pub fn failures(&self) -> u64 {
        self.collisions + self.data_losses + self.receiver_busy
    }
}
