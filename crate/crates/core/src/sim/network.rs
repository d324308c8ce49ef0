//! The network model driven by the event scheduler.
//!
//! Reception is modelled per receiver lock: at the instant a frame starts,
//! every node that is listening (quasi-omni when idle, or a beam toward its
//! expected peer inside an exchange) locks onto the strongest new frame whose
//! SINR clears the preamble threshold. The lock tracks the minimum SINR over
//! every interval of constant interference; the frame decodes iff that
//! minimum clears the frame's threshold.
//!
//! All state changes happen in event handlers; carrier sensing, lock
//! acquisition and contention decisions happen once per timestamp in
//! `settle`, so the outcome does not depend on the order of simultaneous
//! events.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use super::config::{NodeSpec, SimParams, SimSetup, TrafficModel};
use super::links::{LinkCache, TxView};
use super::result::{LinkSinr, NodeResult, RunResult, TxnCounts};
use super::trace::{FailureCause, NodeId, Outcome, Record, TraceKind, TxnMode};
use crate::des::{run_until, Event, EventHandle, Model, RngStream, Scheduler, SimTime};
use crate::error::Result;
use crate::mac::{encode_frame, work, ContentionWindow, Duplex, Frame, FrameKind, ToneBoard, TxnId};
use crate::power::{optimize_powers, FdLinkSpec, FdMode, FdNode};
use crate::scenario::jain_index;
use crate::units::linear_to_db;

/// Result of one run plus the material needed to audit it.
#[derive(Clone, Debug)]
pub struct SimOutput {
    pub result: RunResult,
    pub trace: Option<Vec<Record>>,
    /// Protocol errors detected while running (unmatched tones, exchanges
    /// left open after the drain period, ...).
    pub violations: Vec<String>,
}

/// Builds and runs a network in one call.
pub fn simulate(setup: SimSetup) -> Result<SimOutput> {
    Network::new(setup)?.run()
}

#[derive(Clone, Copy, Debug)]
pub enum Ev {
    TxEnd(NodeId),
    Send { node: NodeId, txn: TxnId, what: Planned },
    Timeout { node: NodeId, seq: u64 },
    DifsDone(NodeId),
    BackoffDone(NodeId),
    Arrival(NodeId),
    Wake,
    DrainStart,
}

#[derive(Clone, Copy, Debug)]
pub enum Planned {
    Cts { to: NodeId, work: u8 },
    SecondaryRts { to: NodeId },
    Data { to: NodeId },
    Ack { to: NodeId },
}

#[derive(Clone, Copy, Debug)]
enum Contention {
    Off,
    Defer,
    Difs(EventHandle),
    Counting { since: SimTime, handle: EventHandle },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Role {
    Initiator,
    Responder,
    Secondary,
}

#[derive(Clone, Copy, Debug)]
struct Expect {
    from: NodeId,
    kind: FrameKind,
    deadline: SimTime,
    seq: u64,
    handle: EventHandle,
}

#[derive(Clone, Copy, Debug)]
struct OwnData {
    attempted: bool,
    acked: bool,
    cause: Option<FailureCause>,
}

#[derive(Clone, Debug)]
struct Part {
    txn: TxnId,
    role: Role,
    expects: VecDeque<Expect>,
    pending_sends: u32,
    own: Option<OwnData>,
}

#[derive(Clone, Copy, Debug)]
struct Lock {
    key: u64,
    src: NodeId,
    pattern: usize,
    start: SimTime,
    min_sinr: f64,
}

#[derive(Clone, Copy, Debug, Default)]
struct Counters {
    delivered_bits: u64,
    delivered_packets: u64,
    attempts: u64,
    successes: u64,
    failures: u64,
    drops: u64,
    collisions: u64,
    data_losses: u64,
    receiver_busy: u64,
    deferred: u64,
}

struct NodeRt {
    spec: NodeSpec,
    rng: RngStream,
    queue: VecDeque<NodeId>,
    cw: ContentionWindow,
    failures: u32,
    counter: Option<u32>,
    contention: Contention,
    frozen_on: Option<NodeId>,
    idle_since: SimTime,
    nav_until: SimTime,
    part: Option<Part>,
    engaged_since: Option<SimTime>,
    tx: Option<u64>,
    lock: Option<Lock>,
    stats: Counters,
}

struct OnAir {
    key: u64,
    frame: Frame,
    txn: TxnId,
    view: TxView,
    threshold: f64,
}

#[derive(Clone, Copy, Debug)]
struct DataPlan {
    power: f64,
    mcs: u8,
    airtime: SimTime,
}

struct Txn {
    initiator: NodeId,
    receiver_busy: bool,
    /// The receiver's tone was already held by an earlier exchange when the
    /// RTS started.
    tone_prior: bool,
    started: SimTime,
    /// Tone holds taken for this exchange: (owner, activator).
    holds: Vec<(NodeId, NodeId)>,
    joined: BTreeSet<NodeId>,
    plan: BTreeMap<NodeId, DataPlan>,
    data_end: SimTime,
    open: u32,
}

impl Txn {
    fn max_airtime(&self) -> SimTime {
        self.plan.values().map(|p| p.airtime).max().unwrap_or(SimTime::ZERO)
    }
}

struct Response {
    mode: TxnMode,
    secondary: Option<NodeId>,
    initiator: DataPlan,
    responder: Option<DataPlan>,
}

#[derive(Default)]
struct LinkAcc {
    frames: u64,
    failed: u64,
    sum_db: f64,
    min_db: f64,
    max_db: f64,
}

pub struct Network {
    p: SimParams,
    n: usize,
    cache: LinkCache,
    nodes: Vec<NodeRt>,
    air: BTreeMap<NodeId, OnAir>,
    txns: BTreeMap<TxnId, Txn>,
    tones: ToneBoard,
    next_txn: TxnId,
    next_key: u64,
    next_seq: u64,
    last_eval: SimTime,
    started_now: Vec<NodeId>,
    draining: bool,
    trace: Option<Vec<Record>>,
    violations: Vec<String>,
    links: BTreeMap<(NodeId, NodeId), LinkAcc>,
    counts: TxnCounts,
}

fn at(sched: &mut Scheduler<Ev>, t: SimTime, ev: Ev) -> EventHandle {
    sched.schedule(t, ev).expect("protocol logic scheduled an event in the past")
}

fn duration_us(t: SimTime) -> u16 {
    t.as_nanos().div_ceil(1000).min(u16::MAX as u64) as u16
}

impl Network {
    pub fn new(setup: SimSetup) -> Result<Self> {
        setup.validate()?;
        let SimSetup { params, nodes } = setup;
        let cache = LinkCache::new(&nodes, &params.channel)?;
        let n = nodes.len();
        let t = params.timing;
        let rt = nodes
            .into_iter()
            .enumerate()
            .map(|(i, spec)| NodeRt {
                spec,
                rng: RngStream::new(params.seed, i as u64),
                queue: VecDeque::new(),
                cw: ContentionWindow::new(t.cw_min, t.cw_max),
                failures: 0,
                counter: None,
                contention: Contention::Off,
                frozen_on: None,
                idle_since: SimTime::ZERO,
                nav_until: SimTime::ZERO,
                part: None,
                engaged_since: None,
                tx: None,
                lock: None,
                stats: Counters::default(),
            })
            .collect();
        Ok(Network {
            trace: params.record_trace.then(Vec::new),
            p: params,
            n,
            cache,
            nodes: rt,
            air: BTreeMap::new(),
            txns: BTreeMap::new(),
            tones: ToneBoard::new(),
            next_txn: 0,
            next_key: 0,
            next_seq: 0,
            last_eval: SimTime::ZERO,
            started_now: Vec::new(),
            draining: false,
            violations: Vec::new(),
            links: BTreeMap::new(),
            counts: TxnCounts::default(),
        })
    }

    pub fn run(mut self) -> Result<SimOutput> {
        let mut sched = Scheduler::with_tie_break(self.p.tie_break);
        self.bootstrap(&mut sched);
        let limit = self.p.duration + self.p.drain;
        let dispatched = run_until(&mut sched, &mut self, limit);
        if sched.scheduled_count() != dispatched + sched.cancelled_count() + sched.pending_count() {
            self.violations.push("event accounting mismatch".into());
        }
        Ok(self.finish(dispatched))
    }

    fn rec(&mut self, time: SimTime, node: NodeId, kind: TraceKind) {
        if let Some(t) = self.trace.as_mut() {
            t.push(Record { time, node, kind });
        }
    }

    fn bt(&self) -> bool {
        self.p.busy_tones
    }

    fn has_source(&self, i: NodeId) -> bool {
        if i == 0 {
            self.p.traffic.downlink
        } else {
            self.p.traffic.uplink
        }
    }

    fn new_destination(&mut self, i: NodeId) -> NodeId {
        if i == 0 {
            let hi = self.n as i64 - 1;
            self.nodes[0].rng.uniform_int(1, hi).expect("at least one user") as NodeId
        } else {
            0
        }
    }

    fn bootstrap(&mut self, sched: &mut Scheduler<Ev>) {
        for i in 0..self.n {
            if !self.has_source(i) {
                continue;
            }
            match self.p.traffic.model {
                TrafficModel::Saturated => {
                    let d = self.new_destination(i);
                    self.nodes[i].queue.push_back(d);
                }
                TrafficModel::Poisson { packets_per_second } => {
                    let dt = self.nodes[i].rng.exponential(packets_per_second);
                    let t = SimTime::from_secs_ceil(dt);
                    if t < self.p.duration {
                        at(sched, t, Ev::Arrival(i));
                    }
                }
            }
        }
        at(sched, self.p.duration, Ev::DrainStart);
        at(sched, SimTime::ZERO, Ev::Wake);
    }

    fn replenish(&mut self, i: NodeId) {
        if matches!(self.p.traffic.model, TrafficModel::Saturated) && self.has_source(i) {
            let d = self.new_destination(i);
            self.nodes[i].queue.push_back(d);
        }
    }

    // ----- physical layer -------------------------------------------------

    fn lock_sinr(&self, k: NodeId, lock: &Lock) -> f64 {
        let wanted = &self.air[&lock.src].view;
        let own = self.nodes[k].tx.map(|_| self.air[&k].view.power);
        self.cache
            .sinr(k, lock.pattern, own, self.nodes[k].spec.beta, wanted, self.air.values().map(|a| &a.view), self.p.ibi)
            .sinr
    }

    /// Folds the interval `[last_eval, now)` into every active lock.
    fn advance(&mut self, now: SimTime) {
        if now <= self.last_eval {
            return;
        }
        for k in 0..self.n {
            if let Some(lock) = self.nodes[k].lock {
                let s = self.lock_sinr(k, &lock);
                let l = self.nodes[k].lock.as_mut().expect("lock vanished");
                l.min_sinr = l.min_sinr.min(s);
            }
        }
        self.last_eval = now;
    }

    fn cca_busy(&self, i: NodeId) -> bool {
        let omni = self.cache.quasi_omni();
        self.air
            .values()
            .any(|a| a.view.src != i && self.cache.power(&a.view, i, omni) >= self.p.cca_threshold)
    }

    /// Pattern a node would use to receive a frame from `s`, if it listens at all.
    fn listen_pattern(&self, k: NodeId, s: NodeId) -> Option<usize> {
        let node = &self.nodes[k];
        match &node.part {
            Some(p) => {
                let e = p.expects.front()?;
                if e.from != s || (node.tx.is_some() && !self.p.variant.full_duplex()) {
                    return None;
                }
                Some(s)
            }
            None => node.tx.is_none().then_some(self.cache.quasi_omni()),
        }
    }

    fn acquire_locks(&mut self, now: SimTime) {
        if self.started_now.is_empty() {
            return;
        }
        let mut started = std::mem::take(&mut self.started_now);
        started.sort_unstable();
        started.dedup();
        for k in 0..self.n {
            if self.nodes[k].lock.is_some() {
                continue;
            }
            let mut best: Option<(f64, NodeId, usize)> = None;
            for &s in &started {
                if s == k || !self.air.contains_key(&s) {
                    continue;
                }
                let Some(pattern) = self.listen_pattern(k, s) else { continue };
                let probe = Lock { key: 0, src: s, pattern, start: now, min_sinr: f64::INFINITY };
                let sinr = self.lock_sinr(k, &probe);
                if best.is_none_or(|(b, _, _)| sinr > b) {
                    best = Some((sinr, s, pattern));
                }
            }
            if let Some((sinr, s, pattern)) = best {
                if sinr >= self.p.control_threshold {
                    let key = self.air[&s].key;
                    self.nodes[k].lock = Some(Lock { key, src: s, pattern, start: now, min_sinr: sinr });
                }
            }
        }
    }

    fn transmit(&mut self, sched: &mut Scheduler<Ev>, i: NodeId, frame: Frame, txn: TxnId, power: f64, now: SimTime) {
        self.advance(now);
        if self.air.contains_key(&i) {
            self.violations.push(format!("node {i} started a {} while already transmitting at {now}", frame.kind.as_str()));
            return;
        }
        let enc = encode_frame(&frame, &self.p.timing, &self.p.mcs).expect("protocol built an invalid frame");
        if !self.p.variant.full_duplex() {
            if let Some(lock) = self.nodes[i].lock.take() {
                let oa = &self.air[&lock.src];
                let (kind, txn) = (oa.frame.kind, oa.txn);
                self.rec(
                    now,
                    i,
                    TraceKind::RxEnd { frame: kind, src: lock.src, txn, ok: false, min_sinr_db: linear_to_db(lock.min_sinr), lock_start: lock.start },
                );
            }
        }
        let threshold = if frame.kind == FrameKind::Data {
            self.p.mcs.by_index(frame.mcs_mode).expect("validated MCS").sinr_threshold()
        } else {
            self.p.control_threshold
        };
        let key = self.next_key;
        self.next_key += 1;
        let end = now + enc.airtime;
        let view = TxView { src: i, toward: frame.dst, power, link: txn };
        self.rec(
            now,
            i,
            TraceKind::TxStart { frame: frame.kind, dst: frame.dst, txn, work: frame.work_mode, mcs: frame.mcs_mode, end, power },
        );
        if frame.kind == FrameKind::Data {
            if let Some(t) = self.txns.get_mut(&txn) {
                t.data_end = t.data_end.max(end);
            }
        }
        self.air.insert(i, OnAir { key, frame, txn, view, threshold });
        self.nodes[i].tx = Some(key);
        self.started_now.push(i);
        at(sched, end, Ev::TxEnd(i));
    }

    // ----- contention -----------------------------------------------------

    fn leave_contention(&mut self, i: NodeId, sched: &mut Scheduler<Ev>, now: SimTime) {
        let slot = self.p.timing.slot_ns;
        let node = &mut self.nodes[i];
        match node.contention {
            Contention::Difs(h) => {
                sched.cancel(h);
            }
            Contention::Counting { since, handle } => {
                sched.cancel(handle);
                let elapsed = ((now - since).as_nanos() / slot) as u32;
                node.counter = node.counter.map(|c| c.saturating_sub(elapsed));
            }
            Contention::Off | Contention::Defer => {}
        }
        node.contention = Contention::Off;
        if let Some(r) = node.frozen_on.take() {
            self.rec(now, i, TraceKind::Unfreeze { receiver: r });
        }
    }

    fn contend(&mut self, sched: &mut Scheduler<Ev>, i: NodeId, now: SimTime) {
        if self.nodes[i].part.is_some() || self.nodes[i].tx.is_some() {
            return;
        }
        let Some(&dst) = self.nodes[i].queue.front() else {
            self.leave_contention(i, sched, now);
            return;
        };
        let tone_busy = self.bt() && self.tones.is_active(dst);
        match (tone_busy, self.nodes[i].frozen_on) {
            (true, None) => {
                self.nodes[i].frozen_on = Some(dst);
                self.rec(now, i, TraceKind::Freeze { receiver: dst });
            }
            (false, Some(r)) => {
                self.nodes[i].frozen_on = None;
                self.rec(now, i, TraceKind::Unfreeze { receiver: r });
            }
            _ => {}
        }
        let busy = tone_busy || self.nodes[i].lock.is_some() || self.nodes[i].nav_until > now || self.cca_busy(i);
        let slot = self.p.timing.slot_ns;
        match self.nodes[i].contention {
            Contention::Off | Contention::Defer => {
                if busy || self.draining {
                    self.nodes[i].contention = Contention::Defer;
                    return;
                }
                if self.nodes[i].counter.is_none() {
                    let cw = self.nodes[i].cw.value();
                    let c = self.nodes[i].rng.uniform_int(0, cw as i64 - 1).expect("cw >= 1") as u32;
                    self.nodes[i].counter = Some(c);
                    self.rec(now, i, TraceKind::Backoff { counter: c, cw });
                }
                let h = at(sched, now + self.p.timing.difs(), Ev::DifsDone(i));
                let node = &mut self.nodes[i];
                node.contention = Contention::Difs(h);
                node.idle_since = now;
            }
            Contention::Difs(h) => {
                if busy {
                    sched.cancel(h);
                    self.nodes[i].contention = Contention::Defer;
                }
            }
            Contention::Counting { since, handle } => {
                if busy {
                    sched.cancel(handle);
                    let node = &mut self.nodes[i];
                    let elapsed = ((now - since).as_nanos() / slot) as u32;
                    node.counter = node.counter.map(|c| c.saturating_sub(elapsed));
                    node.contention = Contention::Defer;
                }
            }
        }
    }

    fn on_difs(&mut self, sched: &mut Scheduler<Ev>, i: NodeId, now: SimTime) {
        if !matches!(self.nodes[i].contention, Contention::Difs(_)) {
            return;
        }
        if self.draining {
            self.nodes[i].contention = Contention::Defer;
            return;
        }
        let c = self.nodes[i].counter.unwrap_or(0);
        if c == 0 {
            self.start_rts(sched, i, now);
        } else {
            let handle = at(sched, now + self.p.timing.slot() * c as u64, Ev::BackoffDone(i));
            self.nodes[i].contention = Contention::Counting { since: now, handle };
        }
    }

    fn on_backoff(&mut self, sched: &mut Scheduler<Ev>, i: NodeId, now: SimTime) {
        let Contention::Counting { since, .. } = self.nodes[i].contention else { return };
        if self.draining {
            let elapsed = ((now - since).as_nanos() / self.p.timing.slot_ns) as u32;
            let node = &mut self.nodes[i];
            node.counter = node.counter.map(|c| c.saturating_sub(elapsed));
            node.contention = Contention::Defer;
            return;
        }
        self.nodes[i].counter = Some(0);
        self.start_rts(sched, i, now);
    }

    // ----- rate and power planning ---------------------------------------

    fn data_plan(&self, power: f64, mcs: u8) -> DataPlan {
        let rate = self.p.mcs.by_index(mcs).expect("MCS from table").data_rate_bps;
        DataPlan { power, mcs, airtime: self.p.timing.data_airtime(self.p.timing.payload_bits, rate) }
    }

    fn view(&self, src: NodeId, toward: NodeId, power: f64) -> TxView {
        TxView { src, toward, power, link: 0 }
    }

    /// MCS for a one-way DATA from `a` to `b` at nominal power.
    fn nominal_mcs(&self, a: NodeId, b: NodeId) -> u8 {
        if !self.p.adaptive_mcs {
            return self.p.data_mcs;
        }
        let v = self.view(a, b, self.nodes[a].spec.tx_power);
        let s = self.cache.sinr(b, a, None, self.nodes[b].spec.beta, &v, [], self.p.ibi).sinr;
        self.p.mcs.mcs_match(s).unwrap_or(self.p.mcs.lowest()).index
    }

    /// Predicted SINRs (at `b` for a->b, at the secondary receiver for the
    /// reverse or relayed link) of a concurrent exchange.
    fn predict(&self, a: NodeId, b: NodeId, c: Option<NodeId>, pa: f64, pb: f64) -> (f64, f64) {
        let va = self.view(a, b, pa);
        let second_rx = c.unwrap_or(a);
        let vb = self.view(b, second_rx, pb);
        let both = [va, vb];
        let at_b = self.cache.sinr(b, a, Some(pb), self.nodes[b].spec.beta, &va, &both, self.p.ibi).sinr;
        let own = c.is_none().then_some(pa);
        let at_c = self.cache.sinr(second_rx, b, own, self.nodes[second_rx].spec.beta, &vb, &both, self.p.ibi).sinr;
        (at_b, at_c)
    }

    fn fd_node(&self, i: NodeId) -> FdNode {
        let s = &self.nodes[i].spec;
        FdNode { position: s.position, antenna: s.antenna, beta: s.beta }
    }

    fn try_full_duplex(&self, a: NodeId, b: NodeId, c: Option<NodeId>) -> Option<Response> {
        let mode = if c.is_some() { TxnMode::ThreeNode } else { TxnMode::TwoNode };
        if self.p.power_control {
            let spec = FdLinkSpec {
                mode: if c.is_some() { FdMode::ThreeNode } else { FdMode::TwoNode },
                primary_tx: self.fd_node(a),
                primary_rx: self.fd_node(b),
                secondary_rx: c.map(|c| self.fd_node(c)),
                payload_primary_bits: self.p.timing.payload_bits as f64,
                payload_secondary_bits: self.p.timing.payload_bits as f64,
                primary_power: self.nodes[a].spec.power_grid,
                secondary_power: self.nodes[b].spec.power_grid,
                overhead_s: self
                    .p
                    .timing
                    .fd_overhead(if c.is_some() { FdMode::ThreeNode } else { FdMode::TwoNode })
                    .as_secs_f64(),
                ibi_enabled: self.p.ibi,
                channel: self.p.channel,
                mcs: self.p.mcs.clone(),
            };
            let sol = optimize_powers(&spec).ok()?;
            return Some(Response {
                mode,
                secondary: c,
                initiator: self.data_plan(sol.p_primary, sol.mcs_primary),
                responder: Some(self.data_plan(sol.p_secondary, sol.mcs_secondary)),
            });
        }
        let (pa, pb) = (self.nodes[a].spec.tx_power, self.nodes[b].spec.tx_power);
        let (sa, sb) = self.predict(a, b, c, pa, pb);
        let (ma, mb) = if self.p.adaptive_mcs {
            (self.p.mcs.mcs_match(sa)?.index, self.p.mcs.mcs_match(sb)?.index)
        } else {
            let th = self.p.mcs.by_index(self.p.data_mcs)?.sinr_threshold();
            if sa < th || sb < th {
                return None;
            }
            (self.p.data_mcs, self.p.data_mcs)
        };
        Some(Response { mode, secondary: c, initiator: self.data_plan(pa, ma), responder: Some(self.data_plan(pb, mb)) })
    }

    fn plan_response(&self, a: NodeId, b: NodeId) -> Response {
        if self.p.variant.full_duplex() {
            let head = self.nodes[b].queue.front().copied();
            let fd = match head {
                Some(d) if d == a => self.try_full_duplex(a, b, None),
                Some(c) if !(self.bt() && self.tones.is_active(c)) => self.try_full_duplex(a, b, Some(c)),
                _ => None,
            };
            if let Some(r) = fd {
                return r;
            }
        }
        let hd = self.data_plan(self.nodes[a].spec.tx_power, self.nominal_mcs(a, b));
        Response { mode: TxnMode::Hd, secondary: None, initiator: hd, responder: None }
    }

    // ----- exchanges -------------------------------------------------------

    fn tone_start(&mut self, owner: NodeId, txn: TxnId, activator: NodeId, now: SimTime) {
        if let Err(e) = self.tones.start(owner, txn) {
            self.violations.push(format!("{now}: {e}"));
            return;
        }
        if let Some(t) = self.txns.get_mut(&txn) {
            t.holds.push((owner, activator));
        }
        self.rec(now, activator, TraceKind::ToneStart { owner, txn });
        let o = &self.nodes[owner];
        if owner != activator && o.part.is_none() && o.tx.is_none() {
            self.rec(now, owner, TraceKind::ToneEcho);
        }
    }

    fn push_expect(&mut self, sched: &mut Scheduler<Ev>, k: NodeId, from: NodeId, kind: FrameKind, deadline: SimTime) {
        let seq = self.next_seq;
        self.next_seq += 1;
        let handle = at(sched, deadline, Ev::Timeout { node: k, seq });
        let part = self.nodes[k].part.as_mut().expect("expectation outside an exchange");
        part.expects.push_back(Expect { from, kind, deadline, seq, handle });
    }

    fn send_later(&mut self, sched: &mut Scheduler<Ev>, k: NodeId, txn: TxnId, t: SimTime, what: Planned) {
        self.nodes[k].part.as_mut().expect("send outside an exchange").pending_sends += 1;
        at(sched, t, Ev::Send { node: k, txn, what });
    }

    fn start_rts(&mut self, sched: &mut Scheduler<Ev>, i: NodeId, now: SimTime) {
        let dst = *self.nodes[i].queue.front().expect("contending without a packet");
        let txn = self.next_txn;
        self.next_txn += 1;
        let receiver_busy = self.nodes[dst].engaged_since.is_some_and(|t| t < now);
        let tone_prior = self.tones.holders(dst).any(|h| self.txns.get(&h).is_some_and(|x| x.started < now));
        self.txns.insert(
            txn,
            Txn {
                initiator: i,
                receiver_busy,
                tone_prior,
                started: now,
                holds: Vec::new(),
                joined: BTreeSet::new(),
                plan: BTreeMap::new(),
                data_end: SimTime::ZERO,
                open: 1,
            },
        );
        let idle_since = self.nodes[i].idle_since;
        {
            let node = &mut self.nodes[i];
            node.counter = None;
            node.contention = Contention::Off;
            node.engaged_since = Some(now);
            node.stats.attempts += 1;
            node.part = Some(Part {
                txn,
                role: Role::Initiator,
                expects: VecDeque::new(),
                pending_sends: 1,
                own: Some(OwnData { attempted: true, acked: false, cause: None }),
            });
        }
        if let Some(r) = self.nodes[i].frozen_on.take() {
            self.rec(now, i, TraceKind::Unfreeze { receiver: r });
        }
        self.rec(now, i, TraceKind::TxnOpen { txn, responder: dst, idle_since });
        if self.bt() {
            self.tone_start(i, txn, i, now);
            self.tone_start(dst, txn, i, now);
        }
        let t = self.p.timing;
        let mcs = self.nominal_mcs(i, dst);
        let mut remaining = t.sifs() + t.cts_airtime() + t.sifs() + self.data_plan(0.0, mcs).airtime + t.sifs() + t.ack_airtime();
        if self.p.variant.full_duplex() {
            remaining = remaining + t.rts_airtime() + t.sifs();
        }
        let frame = Frame {
            kind: FrameKind::Rts,
            src: i,
            dst,
            duplex: self.duplex(),
            work_mode: work::RTS_PRIMARY,
            mcs_mode: mcs,
            duration_us: duration_us(remaining),
            payload_bits: 0,
        };
        let power = self.nodes[i].spec.tx_power;
        self.transmit(sched, i, frame, txn, power, now);
    }

    fn duplex(&self) -> Duplex {
        if self.p.variant.full_duplex() {
            Duplex::Full
        } else {
            Duplex::Half
        }
    }

    fn can_respond(&self, k: NodeId, now: SimTime) -> bool {
        let node = &self.nodes[k];
        node.part.is_none() && node.tx.is_none() && node.nav_until <= now
    }

    fn join(&mut self, sched: &mut Scheduler<Ev>, k: NodeId, txn: TxnId, role: Role, own: Option<OwnData>, now: SimTime) {
        self.leave_contention(k, sched, now);
        let node = &mut self.nodes[k];
        node.engaged_since = Some(now);
        node.part = Some(Part { txn, role, expects: VecDeque::new(), pending_sends: 0, own });
        let t = self.txns.get_mut(&txn).expect("joining a closed exchange");
        t.joined.insert(k);
        t.open += 1;
    }

    fn respond_primary(&mut self, sched: &mut Scheduler<Ev>, b: NodeId, a: NodeId, txn: TxnId, now: SimTime) {
        if !self.can_respond(b, now) || !self.txns.contains_key(&txn) {
            return;
        }
        let r = self.plan_response(a, b);
        let own = match r.mode {
            TxnMode::Hd => None,
            TxnMode::TwoNode | TxnMode::ThreeNode => Some(OwnData { attempted: false, acked: false, cause: None }),
        };
        self.join(sched, b, txn, Role::Responder, own, now);
        {
            let t = self.txns.get_mut(&txn).expect("open exchange");
            t.plan.insert(a, r.initiator);
            if let Some(p) = r.responder {
                t.plan.insert(b, p);
            }
        }
        match r.mode {
            TxnMode::Hd => self.counts.hd += 1,
            TxnMode::TwoNode => self.counts.two_node += 1,
            TxnMode::ThreeNode => self.counts.three_node += 1,
        }
        self.rec(now, b, TraceKind::TxnMode { txn, mode: r.mode, secondary: r.secondary });

        let tm = self.p.timing;
        let (sifs, slot) = (tm.sifs(), tm.slot());
        let max_air = self.txns[&txn].max_airtime();
        match r.mode {
            TxnMode::Hd | TxnMode::TwoNode => {
                let work = if r.mode == TxnMode::Hd { work::CTS_HD } else { work::CTS_TWO_NODE };
                self.send_later(sched, b, txn, now + sifs, Planned::Cts { to: a, work });
                let ds = now + sifs + tm.cts_airtime() + sifs;
                if r.mode == TxnMode::TwoNode {
                    self.send_later(sched, b, txn, ds, Planned::Data { to: a });
                }
                self.push_expect(sched, b, a, FrameKind::Data, ds + slot);
                if r.mode == TxnMode::TwoNode {
                    self.push_expect(sched, b, a, FrameKind::Ack, ds + max_air + sifs + slot);
                }
            }
            TxnMode::ThreeNode => {
                let c = r.secondary.expect("three-node target");
                self.send_later(sched, b, txn, now + sifs, Planned::SecondaryRts { to: c });
                let cts_t = now + sifs + tm.rts_airtime() + sifs;
                self.send_later(sched, b, txn, cts_t, Planned::Cts { to: a, work: work::CTS_THREE_NODE });
                let ds = cts_t + tm.cts_airtime() + sifs;
                self.push_expect(sched, b, c, FrameKind::Cts, cts_t + slot);
                self.push_expect(sched, b, a, FrameKind::Data, ds + slot);
                self.push_expect(sched, b, c, FrameKind::Ack, ds + max_air + sifs + slot);
            }
        }
    }

    fn respond_secondary(&mut self, sched: &mut Scheduler<Ev>, c: NodeId, b: NodeId, txn: TxnId, now: SimTime) {
        if !self.can_respond(c, now) || !self.txns.contains_key(&txn) {
            return;
        }
        self.join(sched, c, txn, Role::Secondary, None, now);
        let tm = self.p.timing;
        self.send_later(sched, c, txn, now + tm.sifs(), Planned::Cts { to: b, work: work::CTS_HD });
        let ds = now + tm.sifs() + tm.cts_airtime() + tm.sifs();
        self.push_expect(sched, c, b, FrameKind::Data, ds + tm.slot());
    }

    fn on_send(&mut self, sched: &mut Scheduler<Ev>, k: NodeId, txn: TxnId, what: Planned, now: SimTime) {
        if self.nodes[k].part.as_ref().map(|p| p.txn) != Some(txn) {
            self.violations.push(format!("{now}: node {k} planned a frame for exchange {txn} it is not part of"));
            return;
        }
        let tm = self.p.timing;
        let (sifs, ack) = (tm.sifs(), tm.ack_airtime());
        let t = &self.txns[&txn];
        let max_air = t.max_airtime();
        let nominal = self.nodes[k].spec.tx_power;
        let (frame, power) = match what {
            Planned::Cts { to, work } => {
                let mcs = t.plan.get(&to).map_or(0, |p| p.mcs);
                let remaining = sifs + max_air + sifs + ack;
                (self.control(FrameKind::Cts, k, to, work, mcs, remaining), nominal)
            }
            Planned::SecondaryRts { to } => {
                let mcs = t.plan.get(&k).map_or(0, |p| p.mcs);
                let remaining = sifs + tm.cts_airtime() + sifs + max_air + sifs + ack;
                self.mark_attempt(k);
                if self.bt() {
                    self.tone_start(to, txn, k, now);
                }
                (self.control(FrameKind::Rts, k, to, work::RTS_SECONDARY, mcs, remaining), nominal)
            }
            Planned::Data { to } => {
                let plan = t.plan[&k];
                let end = now + plan.airtime;
                let remaining = (now + max_air).saturating_sub(end) + sifs + ack;
                if self.nodes[k].part.as_ref().is_some_and(|p| p.role != Role::Initiator) {
                    self.mark_attempt(k);
                }
                let frame = Frame {
                    kind: FrameKind::Data,
                    src: k,
                    dst: to,
                    duplex: self.duplex(),
                    work_mode: 0,
                    mcs_mode: plan.mcs,
                    duration_us: duration_us(remaining),
                    payload_bits: tm.payload_bits,
                };
                (frame, plan.power)
            }
            Planned::Ack { to } => (self.control(FrameKind::Ack, k, to, 0, 0, SimTime::ZERO), nominal),
        };
        self.transmit(sched, k, frame, txn, power, now);
        if !self.nodes[k].tx.is_some() {
            // transmit refused; account for the lost send
            if let Some(p) = self.nodes[k].part.as_mut() {
                p.pending_sends -= 1;
            }
            self.maybe_close(sched, k, now);
        }
    }

    fn mark_attempt(&mut self, k: NodeId) {
        let node = &mut self.nodes[k];
        if let Some(own) = node.part.as_mut().and_then(|p| p.own.as_mut()) {
            if !own.attempted {
                own.attempted = true;
                node.stats.attempts += 1;
            }
        }
    }

    fn control(&self, kind: FrameKind, src: NodeId, dst: NodeId, work_mode: u8, mcs: u8, remaining: SimTime) -> Frame {
        Frame {
            kind,
            src,
            dst,
            duplex: self.duplex(),
            work_mode,
            mcs_mode: mcs,
            duration_us: duration_us(remaining),
            payload_bits: 0,
        }
    }

    fn on_tx_end(&mut self, sched: &mut Scheduler<Ev>, i: NodeId, now: SimTime) {
        self.advance(now);
        let Some(oa) = self.air.remove(&i) else { return };
        self.nodes[i].tx = None;
        self.rec(now, i, TraceKind::TxEnd { frame: oa.frame.kind, txn: oa.txn });
        for k in 0..self.n {
            if self.nodes[k].lock.is_some_and(|l| l.key == oa.key) {
                self.finish_rx(sched, k, &oa, now);
            }
        }
        let tm = self.p.timing;
        let cts_wait = if self.p.variant.full_duplex() {
            tm.sifs() + tm.rts_airtime() + tm.sifs() + tm.slot()
        } else {
            tm.sifs() + tm.slot()
        };
        let Some(part) = self.nodes[i].part.as_mut() else { return };
        part.pending_sends = part.pending_sends.saturating_sub(1);
        if oa.frame.kind == FrameKind::Rts && oa.frame.work_mode == work::RTS_PRIMARY && part.role == Role::Initiator {
            self.push_expect(sched, i, oa.frame.dst, FrameKind::Cts, now + cts_wait);
        }
        self.maybe_close(sched, i, now);
    }

    fn finish_rx(&mut self, sched: &mut Scheduler<Ev>, k: NodeId, oa: &OnAir, now: SimTime) {
        let lock = self.nodes[k].lock.take().expect("finishing a missing lock");
        let ok = lock.min_sinr >= oa.threshold;
        let f = &oa.frame;
        self.rec(
            now,
            k,
            TraceKind::RxEnd { frame: f.kind, src: f.src, txn: oa.txn, ok, min_sinr_db: linear_to_db(lock.min_sinr), lock_start: lock.start },
        );
        if f.kind == FrameKind::Data && f.dst == k {
            let db = linear_to_db(lock.min_sinr);
            let acc = self.links.entry((f.src, k)).or_insert(LinkAcc { min_db: f64::INFINITY, max_db: f64::NEG_INFINITY, ..Default::default() });
            acc.frames += 1;
            acc.failed += (!ok) as u64;
            acc.sum_db += db;
            acc.min_db = acc.min_db.min(db);
            acc.max_db = acc.max_db.max(db);
        }
        let mine = self.nodes[k].part.as_ref().is_some_and(|p| p.txn == oa.txn);
        if ok && f.dst != k && !mine {
            let until = now + SimTime::from_micros(f.duration_us as u64);
            if until > self.nodes[k].nav_until {
                self.nodes[k].nav_until = until;
                at(sched, until, Ev::Wake);
            }
        }
        if ok && f.dst == k {
            if f.kind == FrameKind::Rts {
                if f.work_mode == work::RTS_PRIMARY {
                    self.respond_primary(sched, k, f.src, oa.txn, now);
                } else {
                    self.respond_secondary(sched, k, f.src, oa.txn, now);
                }
                return;
            }
            let front = self.nodes[k].part.as_ref().and_then(|p| p.expects.front().copied());
            if let Some(e) = front {
                if mine && e.from == f.src && e.kind == f.kind {
                    sched.cancel(e.handle);
                    self.nodes[k].part.as_mut().expect("part").expects.pop_front();
                    self.on_expected(sched, k, oa, now);
                    self.maybe_close(sched, k, now);
                    return;
                }
            }
        }
        let front = self.nodes[k].part.as_ref().and_then(|p| p.expects.front().copied());
        if let Some(e) = front {
            if e.from == f.src && now >= e.deadline {
                sched.cancel(e.handle);
                self.nodes[k].part.as_mut().expect("part").expects.pop_front();
                self.on_missed(sched, k, e, now);
                self.maybe_close(sched, k, now);
            }
        }
    }

    fn on_expected(&mut self, sched: &mut Scheduler<Ev>, k: NodeId, oa: &OnAir, now: SimTime) {
        let role = self.nodes[k].part.as_ref().expect("part").role;
        let txn = oa.txn;
        let tm = self.p.timing;
        let (sifs, slot) = (tm.sifs(), tm.slot());
        match oa.frame.kind {
            FrameKind::Cts if role == Role::Initiator => {
                let b = oa.frame.src;
                let ds = now + sifs;
                if let Some(t) = self.txns.get_mut(&txn) {
                    if let Some(p) = t.plan.get_mut(&k) {
                        if p.mcs != oa.frame.mcs_mode {
                            let rate = self.p.mcs.by_index(oa.frame.mcs_mode).map(|e| e.data_rate_bps);
                            if let Some(rate) = rate {
                                p.mcs = oa.frame.mcs_mode;
                                p.airtime = tm.data_airtime(tm.payload_bits, rate);
                            }
                        }
                    }
                }
                let max_air = self.txns[&txn].max_airtime();
                self.send_later(sched, k, txn, ds, Planned::Data { to: b });
                if oa.frame.work_mode == work::CTS_TWO_NODE {
                    self.push_expect(sched, k, b, FrameKind::Data, ds + slot);
                }
                self.push_expect(sched, k, b, FrameKind::Ack, ds + max_air + sifs + slot);
            }
            FrameKind::Cts => {
                self.send_later(sched, k, txn, now + sifs, Planned::Data { to: oa.frame.src });
            }
            FrameKind::Data => {
                let t_ack = self.txns[&txn].data_end + sifs;
                self.send_later(sched, k, txn, t_ack, Planned::Ack { to: oa.frame.src });
            }
            FrameKind::Ack => {
                let bits = tm.payload_bits;
                let counted = now <= self.p.duration;
                let node = &mut self.nodes[k];
                if let Some(own) = node.part.as_mut().and_then(|p| p.own.as_mut()) {
                    own.acked = true;
                }
                if counted {
                    node.stats.delivered_bits += bits;
                    node.stats.delivered_packets += 1;
                }
                self.rec(now, k, TraceKind::Delivered { txn, dst: oa.frame.src, bits, counted });
            }
            FrameKind::Rts => {}
        }
    }

    fn on_missed(&mut self, sched: &mut Scheduler<Ev>, k: NodeId, e: Expect, now: SimTime) {
        let (txn, role) = {
            let p = self.nodes[k].part.as_ref().expect("part");
            (p.txn, p.role)
        };
        self.rec(now, k, TraceKind::Timeout { txn, expected: e.kind, from: e.from });
        let receiver_busy = self.txns.get(&txn).is_some_and(|t| t.receiver_busy);
        let part = self.nodes[k].part.as_mut().expect("part");
        match (role, e.kind) {
            (Role::Initiator, FrameKind::Cts) => {
                if let Some(own) = part.own.as_mut() {
                    own.cause = Some(if receiver_busy { FailureCause::ReceiverBusy } else { FailureCause::Collision });
                }
            }
            (Role::Responder, FrameKind::Cts) => {
                if let Some(own) = part.own.as_mut() {
                    own.cause = Some(FailureCause::Collision);
                }
                let from = e.from;
                let mut dropped = Vec::new();
                part.expects.retain(|x| {
                    let keep = !(x.from == from && x.kind == FrameKind::Ack);
                    if !keep {
                        dropped.push(x.handle);
                    }
                    keep
                });
                for h in dropped {
                    sched.cancel(h);
                }
            }
            (_, FrameKind::Ack) => {
                if let Some(own) = part.own.as_mut() {
                    own.cause.get_or_insert(FailureCause::DataLoss);
                }
            }
            _ => {}
        }
    }

    fn on_timeout(&mut self, sched: &mut Scheduler<Ev>, k: NodeId, seq: u64, now: SimTime) {
        let Some(part) = self.nodes[k].part.as_ref() else { return };
        let Some(idx) = part.expects.iter().position(|e| e.seq == seq) else { return };
        let e = part.expects[idx];
        if idx == 0 && self.nodes[k].lock.is_some_and(|l| l.src == e.from) {
            return;
        }
        self.nodes[k].part.as_mut().expect("part").expects.remove(idx);
        self.on_missed(sched, k, e, now);
        self.maybe_close(sched, k, now);
    }

    fn maybe_close(&mut self, sched: &mut Scheduler<Ev>, k: NodeId, now: SimTime) {
        let Some(p) = self.nodes[k].part.as_ref() else { return };
        if p.expects.is_empty() && p.pending_sends == 0 && self.nodes[k].tx.is_none() {
            self.close(sched, k, now);
        }
    }

    fn close(&mut self, _sched: &mut Scheduler<Ev>, k: NodeId, now: SimTime) {
        let part = self.nodes[k].part.take().expect("closing without a part");
        let txn = part.txn;
        if self.bt() {
            let releases: Vec<NodeId> = match self.txns.get(&txn) {
                Some(t) => t
                    .holds
                    .iter()
                    .filter(|&&(owner, act)| owner == k || (act == k && !t.joined.contains(&owner) && owner != t.initiator))
                    .map(|&(owner, _)| owner)
                    .collect(),
                None => Vec::new(),
            };
            for owner in releases {
                if let Err(e) = self.tones.end(owner, txn) {
                    self.violations.push(format!("{now}: {e}"));
                }
                if let Some(t) = self.txns.get_mut(&txn) {
                    t.holds.retain(|&(o, _)| o != owner);
                }
                self.rec(now, k, TraceKind::ToneEnd { owner, txn });
            }
        }
        if let Some(own) = part.own.filter(|o| o.attempted) {
            let retry_limit = self.p.timing.retry_limit;
            let bt = self.bt();
            let held_elsewhere = self.txns.get(&txn).is_some_and(|t| t.tone_prior);
            let node = &mut self.nodes[k];
            let cw_before = node.cw.value();
            let outcome = if own.acked {
                Outcome::Success
            } else {
                let cause = own.cause.unwrap_or(FailureCause::DataLoss);
                if part.role == Role::Initiator && cause != FailureCause::DataLoss && bt && held_elsewhere {
                    Outcome::Deferred
                } else if node.failures + 1 > retry_limit {
                    Outcome::Drop(cause)
                } else {
                    Outcome::Failure(cause)
                }
            };
            let mut pop = false;
            match outcome {
                Outcome::Success => {
                    node.cw.reset();
                    node.failures = 0;
                    node.stats.successes += 1;
                    pop = true;
                }
                Outcome::Failure(c) | Outcome::Drop(c) => {
                    node.stats.failures += 1;
                    match c {
                        FailureCause::Collision => node.stats.collisions += 1,
                        FailureCause::DataLoss => node.stats.data_losses += 1,
                        FailureCause::ReceiverBusy => node.stats.receiver_busy += 1,
                    }
                    if matches!(outcome, Outcome::Drop(_)) {
                        node.stats.drops += 1;
                        node.failures = 0;
                        node.cw.reset();
                        pop = true;
                    } else {
                        node.failures += 1;
                        node.cw.on_failure();
                    }
                }
                Outcome::Deferred => node.stats.deferred += 1,
            }
            node.counter = None;
            let (cw_after, failures) = (node.cw.value(), node.failures);
            if pop {
                node.queue.pop_front();
                self.replenish(k);
            }
            self.rec(now, k, TraceKind::Attempt { txn, outcome, cw_before, cw_after, failures });
        }
        let node = &mut self.nodes[k];
        node.engaged_since = None;
        node.contention = Contention::Off;
        if let Some(t) = self.txns.get_mut(&txn) {
            t.open -= 1;
            if t.open == 0 {
                if !t.holds.is_empty() {
                    self.violations.push(format!("{now}: exchange {txn} closed with tones still held"));
                }
                self.txns.remove(&txn);
            }
        }
    }

    fn finish(mut self, dispatched: u64) -> SimOutput {
        if !self.txns.is_empty() {
            self.violations.push(format!("{} exchange(s) still open after the drain period", self.txns.len()));
        }
        if self.tones.any_active() {
            self.violations.push("busy tone still active at the end of the run".into());
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if let Some(r) = node.frozen_on {
                self.violations.push(format!("node {i} still frozen on node {r}'s tone at the end of the run"));
            }
        }
        let secs = self.p.duration.as_secs_f64();
        let tp = |bits: u64| if secs > 0.0 { bits as f64 / secs } else { 0.0 };
        let nodes: Vec<NodeResult> = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| NodeResult {
                node: i,
                is_ap: i == 0,
                delivered_bits: n.stats.delivered_bits,
                delivered_packets: n.stats.delivered_packets,
                throughput_bps: tp(n.stats.delivered_bits),
                attempts: n.stats.attempts,
                successes: n.stats.successes,
                failures: n.stats.failures,
                drops: n.stats.drops,
            })
            .collect();
        let sum = |f: fn(&Counters) -> u64| self.nodes.iter().map(|n| f(&n.stats)).sum::<u64>();
        let network_throughput_bps = nodes.iter().map(|n| n.throughput_bps).sum();
        let downlink_throughput_bps = nodes[0].throughput_bps;
        let users: Vec<f64> = nodes[1..].iter().map(|n| n.throughput_bps).collect();
        let result = RunResult {
            variant: self.p.variant,
            node_count: self.n,
            seed: self.p.seed,
            duration_s: secs,
            network_throughput_bps,
            uplink_throughput_bps: users.iter().sum(),
            downlink_throughput_bps,
            jain_index: jain_index(&users).ok(),
            transactions: self.counts,
            attempts: sum(|c| c.attempts),
            successes: sum(|c| c.successes),
            collisions: sum(|c| c.collisions),
            data_losses: sum(|c| c.data_losses),
            receiver_busy: sum(|c| c.receiver_busy),
            deferred: sum(|c| c.deferred),
            drops: sum(|c| c.drops),
            link_sinr: self
                .links
                .iter()
                .map(|(&(src, dst), a)| LinkSinr {
                    src,
                    dst,
                    frames: a.frames,
                    failed: a.failed,
                    mean_sinr_db: a.sum_db / a.frames as f64,
                    min_sinr_db: a.min_db,
                    max_sinr_db: a.max_db,
                })
                .collect(),
            nodes,
            events_dispatched: dispatched,
        };
        SimOutput { result, trace: self.trace.take(), violations: self.violations }
    }
}

impl Model for Network {
    type Event = Ev;

    fn handle(&mut self, sched: &mut Scheduler<Ev>, event: Event<Ev>) {
        let now = event.time;
        self.advance(now);
        match event.payload {
            Ev::TxEnd(i) => self.on_tx_end(sched, i, now),
            Ev::Send { node, txn, what } => self.on_send(sched, node, txn, what, now),
            Ev::Timeout { node, seq } => self.on_timeout(sched, node, seq, now),
            Ev::DifsDone(i) => self.on_difs(sched, i, now),
            Ev::BackoffDone(i) => self.on_backoff(sched, i, now),
            Ev::Arrival(i) => {
                let d = self.new_destination(i);
                self.nodes[i].queue.push_back(d);
                if let TrafficModel::Poisson { packets_per_second } = self.p.traffic.model {
                    let next = now + SimTime::from_secs_ceil(self.nodes[i].rng.exponential(packets_per_second));
                    if next < self.p.duration {
                        at(sched, next, Ev::Arrival(i));
                    }
                }
            }
            Ev::Wake => {}
            Ev::DrainStart => self.draining = true,
        }
    }

    fn settle(&mut self, sched: &mut Scheduler<Ev>, now: SimTime) {
        self.acquire_locks(now);
        for i in 0..self.n {
            self.contend(sched, i, now);
        }
    }
}
