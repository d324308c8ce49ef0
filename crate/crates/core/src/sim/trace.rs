use std::fmt;
use std::io::Write;

use serde::Serialize;

use crate::des::SimTime;
use crate::mac::{FrameKind, TxnId};

pub type NodeId = usize;

/// Transmission mode chosen by the responder.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TxnMode {
    Hd,
    TwoNode,
    ThreeNode,
}

impl TxnMode {
    pub fn is_full_duplex(self) -> bool {
        self != TxnMode::Hd
    }
}

/// Why an attempt failed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailureCause {
    /// No CTS although the receiver was free when the RTS started.
    Collision,
    /// DATA sent but never acknowledged.
    DataLoss,
    /// The receiver was already engaged in another exchange.
    ReceiverBusy,
}

/// How an attempt ended and what it did to the contention window.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Success,
    /// Failed; window doubled (capped).
    Failure(FailureCause),
    /// Failed past the retry limit; packet dropped and window reset.
    Drop(FailureCause),
    /// Failed because the receiver's tone was held by another exchange;
    /// the window is left unchanged.
    Deferred,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum TraceKind {
    TxStart { frame: FrameKind, dst: NodeId, txn: TxnId, work: u8, mcs: u8, end: SimTime, power: f64 },
    TxEnd { frame: FrameKind, txn: TxnId },
    RxEnd { frame: FrameKind, src: NodeId, txn: TxnId, ok: bool, min_sinr_db: f64, lock_start: SimTime },
    ToneStart { owner: NodeId, txn: TxnId },
    ToneEcho,
    ToneEnd { owner: NodeId, txn: TxnId },
    Freeze { receiver: NodeId },
    Unfreeze { receiver: NodeId },
    Backoff { counter: u32, cw: u32 },
    Timeout { txn: TxnId, expected: FrameKind, from: NodeId },
    TxnOpen { txn: TxnId, responder: NodeId, idle_since: SimTime },
    TxnMode { txn: TxnId, mode: TxnMode, secondary: Option<NodeId> },
    Attempt { txn: TxnId, outcome: Outcome, cw_before: u32, cw_after: u32, failures: u32 },
    Delivered { txn: TxnId, dst: NodeId, bits: u64, counted: bool },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Record {
    pub time: SimTime,
    pub node: NodeId,
    pub kind: TraceKind,
}

impl TraceKind {
    pub fn name(&self) -> &'static str {
        match self {
            TraceKind::TxStart { .. } => "tx-start",
            TraceKind::TxEnd { .. } => "tx-end",
            TraceKind::RxEnd { .. } => "rx-end",
            TraceKind::ToneStart { .. } => "bt-start",
            TraceKind::ToneEcho => "bt-echo",
            TraceKind::ToneEnd { .. } => "bt-end",
            TraceKind::Freeze { .. } => "freeze",
            TraceKind::Unfreeze { .. } => "unfreeze",
            TraceKind::Backoff { .. } => "backoff",
            TraceKind::Timeout { .. } => "timeout",
            TraceKind::TxnOpen { .. } => "txn-open",
            TraceKind::TxnMode { .. } => "txn-mode",
            TraceKind::Attempt { .. } => "attempt",
            TraceKind::Delivered { .. } => "delivered",
        }
    }
}

impl fmt::Display for Record {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}\t{}\t{}\t", self.time.as_nanos(), self.node, self.kind.name())?;
        match &self.kind {
            TraceKind::TxStart { frame, dst, txn, work, mcs, end, power } => write!(
                f,
                "{} dst={dst} txn={txn} work={work:b} mcs={mcs} end={} p_dbm={:.2}",
                frame.as_str(),
                end.as_nanos(),
                crate::units::watts_to_dbm(*power)
            ),
            TraceKind::TxEnd { frame, txn } => write!(f, "{} txn={txn}", frame.as_str()),
            TraceKind::RxEnd { frame, src, txn, ok, min_sinr_db, lock_start } => write!(
                f,
                "{} src={src} txn={txn} ok={ok} sinr_db={min_sinr_db:.3} start={}",
                frame.as_str(),
                lock_start.as_nanos()
            ),
            TraceKind::ToneStart { owner, txn } | TraceKind::ToneEnd { owner, txn } => write!(f, "owner={owner} txn={txn}"),
            TraceKind::ToneEcho => Ok(()),
            TraceKind::Freeze { receiver } | TraceKind::Unfreeze { receiver } => write!(f, "receiver={receiver}"),
            TraceKind::Backoff { counter, cw } => write!(f, "counter={counter} cw={cw}"),
            TraceKind::Timeout { txn, expected, from } => write!(f, "txn={txn} expected={} from={from}", expected.as_str()),
            TraceKind::TxnOpen { txn, responder, idle_since } => {
                write!(f, "txn={txn} responder={responder} idle_since={}", idle_since.as_nanos())
            }
            TraceKind::TxnMode { txn, mode, secondary } => match secondary {
                Some(s) => write!(f, "txn={txn} mode={mode:?} secondary={s}"),
                None => write!(f, "txn={txn} mode={mode:?}"),
            },
            TraceKind::Attempt { txn, outcome, cw_before, cw_after, failures } => {
                write!(f, "txn={txn} outcome={outcome:?} cw={cw_before}->{cw_after} failures={failures}")
            }
            TraceKind::Delivered { txn, dst, bits, counted } => write!(f, "txn={txn} dst={dst} bits={bits} counted={counted}"),
        }
    }
}

/// Writes records as `time_ns<TAB>node<TAB>kind<TAB>detail` lines.
pub fn write_trace<W: Write>(mut out: W, records: &[Record]) -> std::io::Result<()> {
    for r in records {
        writeln!(out, "{r}")?;
    }
    Ok(())
}
