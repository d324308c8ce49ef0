//! Audits a recorded trace against the protocol rules.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use super::config::ProtocolVariant;
use super::trace::{FailureCause, NodeId, Outcome, Record, TraceKind, TxnMode};
use crate::des::SimTime;
use crate::mac::{work, ContentionWindow, FrameKind, MacTiming, TxnId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    TonePairing,
    FreezeRelease,
    Spacing,
    Difs,
    CwLaw,
    HdExclusivity,
    Simultaneity,
    NoDeafness,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub rule: Rule,
    pub time: SimTime,
    pub node: NodeId,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{:?}] t={} node={}: {}", self.rule, self.time, self.node, self.detail)
    }
}

#[derive(Clone, Copy, Debug)]
struct Tx {
    node: NodeId,
    kind: FrameKind,
    work: u8,
    start: SimTime,
    end: SimTime,
}

#[derive(Default)]
struct TxnLog {
    idle_since: Option<SimTime>,
    mode: Option<TxnMode>,
    frames: Vec<Tx>,
}

struct Checker<'a> {
    timing: &'a MacTiming,
    out: Vec<Violation>,
}

impl Checker<'_> {
    fn flag(&mut self, rule: Rule, time: SimTime, node: NodeId, detail: String) {
        self.out.push(Violation { rule, time, node, detail });
    }

    fn expect_at(&mut self, rule: Rule, tx: &Tx, want: SimTime, what: &str) {
        if tx.start != want {
            self.flag(
                rule,
                tx.start,
                tx.node,
                format!("{} starts at {} but {what} requires {}", tx.kind.as_str(), tx.start, want),
            );
        }
    }

    fn spacing(&mut self, txn: TxnId, log: &TxnLog) {
        let sifs = self.timing.sifs();
        let of = |k: FrameKind| log.frames.iter().filter(move |f| f.kind == k);
        let Some(rts) = of(FrameKind::Rts).find(|f| f.work == work::RTS_PRIMARY).copied() else {
            return;
        };
        if let Some(idle) = log.idle_since {
            if rts.start < idle + self.timing.difs() {
                self.flag(Rule::Difs, rts.start, rts.node, format!("exchange {txn} started {} after the medium went idle", rts.start - idle));
            }
        }
        let secondary: Vec<Tx> = of(FrameKind::Rts).filter(|f| f.work == work::RTS_SECONDARY).copied().collect();
        for s in &secondary {
            self.expect_at(Rule::Spacing, s, rts.end + sifs, "SIFS after the primary RTS");
        }
        let handshake_end = secondary.iter().map(|s| s.end).max().unwrap_or(rts.end);
        let cts: Vec<Tx> = of(FrameKind::Cts).copied().collect();
        for c in &cts {
            self.expect_at(Rule::Spacing, c, handshake_end + sifs, "SIFS after the RTS");
        }
        let data: Vec<Tx> = of(FrameKind::Data).copied().collect();
        if let Some(cts_end) = cts.iter().map(|c| c.end).max() {
            for d in &data {
                self.expect_at(Rule::Spacing, d, cts_end + sifs, "SIFS after the CTS");
            }
        } else if let Some(d) = data.first() {
            self.flag(Rule::Spacing, d.start, d.node, format!("DATA in exchange {txn} without a CTS"));
        }
        let acks: Vec<Tx> = of(FrameKind::Ack).copied().collect();
        if let Some(data_end) = data.iter().map(|d| d.end).max() {
            for a in &acks {
                self.expect_at(Rule::Spacing, a, data_end + sifs, "SIFS after the last DATA");
            }
        } else if let Some(a) = acks.first() {
            self.flag(Rule::Spacing, a.start, a.node, format!("ACK in exchange {txn} without DATA"));
        }
        let simultaneous = match log.mode {
            Some(TxnMode::ThreeNode) => vec![("CTS", &cts), ("ACK", &acks)],
            Some(TxnMode::TwoNode) => vec![("DATA", &data), ("ACK", &acks)],
            _ => Vec::new(),
        };
        for (name, frames) in simultaneous {
            if let Some(first) = frames.first() {
                if frames.iter().any(|f| f.start != first.start) {
                    self.flag(Rule::Simultaneity, first.start, first.node, format!("{name} frames of exchange {txn} start at different times"));
                }
            }
        }
    }
}

/// Checks tone pairing, freeze release, inter-frame spacing, DIFS, the
/// contention-window law, half-duplex exclusivity, FD simultaneity and (for
/// the FD protocol) the absence of deafness-induced window doubling.
pub fn check_trace(records: &[Record], variant: ProtocolVariant, timing: &MacTiming) -> Vec<Violation> {
    let mut c = Checker { timing, out: Vec::new() };
    let mut txns: BTreeMap<TxnId, TxnLog> = BTreeMap::new();
    let mut tone_balance: BTreeMap<NodeId, i64> = BTreeMap::new();
    let mut frozen: BTreeMap<NodeId, bool> = BTreeMap::new();
    let mut cw_failures: BTreeMap<NodeId, u32> = BTreeMap::new();
    let mut tx_iv: BTreeMap<NodeId, Vec<(SimTime, SimTime, TxnId)>> = BTreeMap::new();
    let mut rx_iv: BTreeMap<NodeId, Vec<(SimTime, SimTime, TxnId)>> = BTreeMap::new();
    let (cw_min, cw_max) = (timing.cw_min, timing.cw_max);

    for r in records {
        match &r.kind {
            TraceKind::TxStart { frame, txn, work, end, .. } => {
                txns.entry(*txn).or_default().frames.push(Tx { node: r.node, kind: *frame, work: *work, start: r.time, end: *end });
                tx_iv.entry(r.node).or_default().push((r.time, *end, *txn));
            }
            TraceKind::RxEnd { txn, lock_start, .. } => {
                if r.time > *lock_start {
                    rx_iv.entry(r.node).or_default().push((*lock_start, r.time, *txn));
                }
            }
            TraceKind::ToneStart { owner, .. } => *tone_balance.entry(*owner).or_default() += 1,
            TraceKind::ToneEnd { owner, txn } => {
                let b = tone_balance.entry(*owner).or_default();
                *b -= 1;
                if *b < 0 {
                    c.flag(Rule::TonePairing, r.time, r.node, format!("end tone of node {owner} (exchange {txn}) without a start"));
                }
            }
            TraceKind::Freeze { receiver } => {
                if frozen.insert(r.node, true) == Some(true) {
                    c.flag(Rule::FreezeRelease, r.time, r.node, format!("second freeze on node {receiver}'s tone"));
                }
            }
            TraceKind::Unfreeze { .. } => {
                if frozen.insert(r.node, false) != Some(true) {
                    c.flag(Rule::FreezeRelease, r.time, r.node, "unfreeze without a freeze".into());
                }
            }
            TraceKind::TxnOpen { txn, idle_since, .. } => txns.entry(*txn).or_default().idle_since = Some(*idle_since),
            TraceKind::TxnMode { txn, mode, .. } => txns.entry(*txn).or_default().mode = Some(*mode),
            TraceKind::Attempt { outcome, cw_before, cw_after, failures, .. } => {
                let k = cw_failures.entry(r.node).or_default();
                let expected_before = ContentionWindow::after_failures(cw_min, cw_max, *k);
                if *cw_before != expected_before {
                    c.flag(Rule::CwLaw, r.time, r.node, format!("cw {cw_before} after {k} failures, expected {expected_before}"));
                }
                let expected_after = match outcome {
                    Outcome::Success | Outcome::Drop(_) => {
                        *k = 0;
                        cw_min
                    }
                    Outcome::Failure(_) => {
                        *k += 1;
                        ContentionWindow::after_failures(cw_min, cw_max, *k)
                    }
                    Outcome::Deferred => *cw_before,
                };
                if *cw_after != expected_after || *failures != *k {
                    c.flag(Rule::CwLaw, r.time, r.node, format!("cw {cw_before}->{cw_after} on {outcome:?}, expected {expected_after}"));
                }
                if *k > timing.retry_limit {
                    c.flag(Rule::CwLaw, r.time, r.node, format!("{k} consecutive failures exceed the retry limit"));
                }
                let deaf = matches!(outcome, Outcome::Failure(FailureCause::ReceiverBusy) | Outcome::Drop(FailureCause::ReceiverBusy));
                if variant.full_duplex() && deaf {
                    c.flag(Rule::NoDeafness, r.time, r.node, "window doubled because the receiver was engaged elsewhere".into());
                }
            }
            _ => {}
        }
    }

    for (txn, log) in &txns {
        c.spacing(*txn, log);
    }
    for (owner, b) in tone_balance {
        if b != 0 {
            c.flag(Rule::TonePairing, SimTime::ZERO, owner, format!("start/end tone imbalance {b}"));
        }
    }
    for (node, f) in frozen {
        if f {
            c.flag(Rule::FreezeRelease, SimTime::ZERO, node, "still frozen at the end of the trace".into());
        }
    }
    for (node, rx) in &rx_iv {
        let Some(tx) = tx_iv.get(node) else { continue };
        for &(s, e, rtxn) in rx {
            let first = tx.partition_point(|&(_, te, _)| te <= s);
            for &(ts, te, ttxn) in tx[first..].iter().take_while(|&&(ts, _, _)| ts < e) {
                if te <= s {
                    continue;
                }
                let fd_ok = variant.full_duplex()
                    && rtxn == ttxn
                    && txns.get(&ttxn).and_then(|l| l.mode).is_some_and(|m| m.is_full_duplex());
                if !fd_ok {
                    c.flag(
                        Rule::HdExclusivity,
                        ts.max(s),
                        *node,
                        format!("receiving [{s}, {e}) of exchange {rtxn} while transmitting [{ts}, {te}) of exchange {ttxn}"),
                    );
                }
            }
        }
    }
    c.out
}
