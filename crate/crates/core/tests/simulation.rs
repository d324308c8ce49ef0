use mmfd_core::des::{SimTime, TieBreak};
use mmfd_core::mac::{FrameKind, MacTiming};
use mmfd_core::radio::{AntennaConfig, Position};
use mmfd_core::scenario::{generate_topology, ScenarioConfig};
use mmfd_core::sim::{
    check_trace, simulate, FailureCause, NodeSpec, Outcome, ProtocolVariant, Record, Rule, SimSetup, TraceKind,
    TrafficConfig, TrafficModel, TxnMode,
};
use mmfd_core::power::PowerGrid;
use mmfd_core::units::dbm_to_watts;
use proptest::prelude::*;

fn disc_setup(n: usize, variant: ProtocolVariant, seed: u64, duration_ms: u64) -> SimSetup {
    let cfg = ScenarioConfig::from_toml_str(&format!("node_counts = [{n}]")).unwrap();
    let topo = generate_topology(n, 10.0, seed, AntennaConfig::new(12).unwrap(), AntennaConfig::new(12).unwrap()).unwrap();
    let mut s = cfg.setup(&topo, variant, seed).unwrap();
    s.params.duration = SimTime::from_millis(duration_ms);
    s
}

fn explicit_setup(positions: &[(f64, f64)], variant: ProtocolVariant) -> SimSetup {
    let a = AntennaConfig::new(12).unwrap();
    let nodes = positions
        .iter()
        .map(|&(x, y)| NodeSpec {
            position: Position::new(x, y).unwrap(),
            antenna: a,
            tx_power: dbm_to_watts(10.0),
            power_grid: PowerGrid::from_mw(1.0, 20.0, 1.0).unwrap(),
            beta: 10f64.powf(-8.5),
        })
        .collect();
    let mut params = mmfd_core::sim::SimParams::new(variant);
    params.duration = SimTime::from_millis(20);
    SimSetup { params, nodes }
}

fn traced(mut s: SimSetup) -> (mmfd_core::sim::RunResult, Vec<Record>, Vec<String>) {
    s.params.record_trace = true;
    let out = simulate(s).unwrap();
    (out.result, out.trace.unwrap(), out.violations)
}

fn audit(s: SimSetup) -> (mmfd_core::sim::RunResult, Vec<Record>) {
    let variant = s.params.variant;
    let timing = s.params.timing;
    let (r, trace, v) = traced(s);
    assert!(v.is_empty(), "{v:?}");
    let found = check_trace(&trace, variant, &timing);
    assert!(found.is_empty(), "{}", found.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("\n"));
    (r, trace)
}

#[test]
fn same_seed_same_result() {
    for v in ProtocolVariant::ALL {
        let a = simulate(disc_setup(8, v, 5, 30)).unwrap().result;
        let b = simulate(disc_setup(8, v, 5, 30)).unwrap().result;
        assert_eq!(a, b);
    }
}

#[test]
fn different_seeds_differ() {
    let a = simulate(disc_setup(8, ProtocolVariant::Dfdmac, 5, 30)).unwrap().result;
    let mut s = disc_setup(8, ProtocolVariant::Dfdmac, 5, 30);
    s.params.seed = 6;
    let b = simulate(s).unwrap().result;
    assert_ne!(a.nodes, b.nodes);
}

#[test]
fn simultaneous_event_order_does_not_matter() {
    for v in ProtocolVariant::ALL {
        let fifo = simulate(disc_setup(10, v, 3, 40)).unwrap().result;
        let mut s = disc_setup(10, v, 3, 40);
        s.params.tie_break = TieBreak::Lifo;
        let lifo = simulate(s).unwrap().result;
        assert_eq!(fifo, lifo, "{v}");
    }
}

#[test]
fn single_user_downlink_is_identical_across_variants() {
    let results: Vec<_> = ProtocolVariant::ALL
        .into_iter()
        .map(|v| {
            let mut s = explicit_setup(&[(0.0, 0.0), (6.0, 2.0)], v);
            s.params.traffic = TrafficConfig { model: TrafficModel::Saturated, uplink: false, downlink: true };
            audit(s).0
        })
        .collect();
    assert!(results[0].network_throughput_bps > 0.0);
    for r in &results[1..] {
        assert_eq!(r.network_throughput_bps, results[0].network_throughput_bps);
        assert_eq!(r.nodes[0].delivered_packets, results[0].nodes[0].delivered_packets);
    }
    assert_eq!(results[0].transactions.two_node + results[0].transactions.three_node, 0);
}

#[test]
fn zero_duration_is_empty_and_clean() {
    for v in ProtocolVariant::ALL {
        let mut s = disc_setup(6, v, 1, 0);
        s.params.duration = SimTime::ZERO;
        let (r, _) = audit(s);
        assert_eq!(r.network_throughput_bps, 0.0);
        assert_eq!(r.jain_index, None);
        assert!(r.nodes.iter().all(|n| n.delivered_bits == 0));
    }
}

#[test]
fn two_users_saturated_use_two_node_mode_with_exact_hold() {
    let t = MacTiming::default();
    let mut s = explicit_setup(&[(0.0, 0.0), (5.0, 0.0)], ProtocolVariant::Dfdmac);
    s.params.traffic.downlink = true;
    let (r, trace) = audit(s);
    assert!(r.transactions.two_node > 0);
    // RTS start to ACK end of every successful two-node exchange.
    let data = t.data_airtime(t.payload_bits, 1904e6);
    let hold = t.transaction_hold(Some(mmfd_core::power::FdMode::TwoNode), data) - t.difs();
    let modes: std::collections::BTreeMap<u64, TxnMode> = trace
        .iter()
        .filter_map(|r| match r.kind {
            TraceKind::TxnMode { txn, mode, .. } => Some((txn, mode)),
            _ => None,
        })
        .collect();
    let mut checked = 0;
    for (txn, mode) in modes.iter().filter(|(_, m)| **m == TxnMode::TwoNode) {
        let rts = trace.iter().find(|r| matches!(r.kind, TraceKind::TxStart { frame: FrameKind::Rts, txn: x, .. } if x == *txn));
        let acks: Vec<&Record> = trace
            .iter()
            .filter(|r| matches!(r.kind, TraceKind::TxEnd { frame: FrameKind::Ack, txn: x } if x == *txn))
            .collect();
        if let (Some(rts), 2) = (rts, acks.len()) {
            assert_eq!(acks[0].time, acks[1].time, "{mode:?}");
            assert_eq!(acks[0].time - rts.time, hold);
            checked += 1;
        }
    }
    assert!(checked > 10);
}

#[test]
fn three_node_mode_relays_downlink() {
    // Users west and east of the AP; the AP always has a packet for a user,
    // so an uplink RTS from the west user can be paired with downlink east.
    let s = explicit_setup(&[(0.0, 0.0), (-6.0, 0.5), (5.0, 3.0)], ProtocolVariant::Dfdmac);
    let (r, trace) = audit(s);
    assert!(r.transactions.three_node > 0, "{:?}", r.transactions);
    let secondary_rts = trace
        .iter()
        .filter(|r| matches!(r.kind, TraceKind::TxStart { frame: FrameKind::Rts, work: 1, .. }))
        .count();
    assert!(secondary_rts as u64 >= r.transactions.three_node);
}

#[test]
fn busy_tones_remove_deafness() {
    let (fd, _) = audit(disc_setup(10, ProtocolVariant::Dfdmac, 9, 60));
    let (bt, _) = audit(disc_setup(10, ProtocolVariant::AyWithBt, 9, 60));
    let (plain, trace) = audit(disc_setup(10, ProtocolVariant::AyWithoutBt, 9, 60));
    assert_eq!(fd.receiver_busy, 0);
    assert_eq!(bt.receiver_busy, 0);
    assert!(plain.receiver_busy > 0);
    assert!(trace.iter().any(|r| matches!(
        r.kind,
        TraceKind::Attempt { outcome: Outcome::Failure(FailureCause::ReceiverBusy), cw_before, cw_after, .. } if cw_after == (2 * cw_before).min(1024)
    )));
    assert!(fd.network_throughput_bps > 1.4 * plain.network_throughput_bps);
}

#[test]
fn every_freeze_is_released() {
    let (_, trace) = audit(disc_setup(6, ProtocolVariant::AyWithBt, 2, 20));
    let freezes = trace.iter().filter(|r| matches!(r.kind, TraceKind::Freeze { .. })).count();
    let unfreezes = trace.iter().filter(|r| matches!(r.kind, TraceKind::Unfreeze { .. })).count();
    assert!(freezes > 0);
    assert_eq!(freezes, unfreezes);
}

#[test]
fn poisson_traffic_power_control_and_adaptive_rates_stay_clean() {
    for v in ProtocolVariant::ALL {
        let mut s = disc_setup(8, v, 11, 40);
        s.params.traffic.model = TrafficModel::Poisson { packets_per_second: 4000.0 };
        s.params.power_control = true;
        s.params.adaptive_mcs = true;
        let (r, _) = audit(s);
        assert!(r.successes > 0);
    }
}

#[test]
fn lower_data_mcs_lowers_throughput() {
    let mut s = disc_setup(6, ProtocolVariant::AyWithoutBt, 4, 20);
    s.params.data_mcs = 1;
    let slow = simulate(s).unwrap().result;
    let fast = simulate(disc_setup(6, ProtocolVariant::AyWithoutBt, 4, 20)).unwrap().result;
    assert!(slow.network_throughput_bps < fast.network_throughput_bps);
}

#[test]
fn checker_flags_tampered_traces() {
    let s = disc_setup(6, ProtocolVariant::Dfdmac, 7, 10);
    let (variant, timing) = (s.params.variant, s.params.timing);
    let (_, trace, _) = traced(s);

    let mut shifted = trace.clone();
    let i = shifted.iter().position(|r| matches!(r.kind, TraceKind::TxStart { frame: FrameKind::Cts, .. })).unwrap();
    shifted[i].time += SimTime::from_nanos(1);
    assert!(check_trace(&shifted, variant, &timing).iter().any(|v| v.rule == Rule::Spacing));

    let mut unpaired = trace.clone();
    let i = unpaired.iter().position(|r| matches!(r.kind, TraceKind::ToneEnd { .. })).unwrap();
    unpaired.remove(i);
    assert!(check_trace(&unpaired, variant, &timing).iter().any(|v| v.rule == Rule::TonePairing));

    let mut bad_cw = trace.clone();
    let i = bad_cw.iter().position(|r| matches!(r.kind, TraceKind::Attempt { .. })).unwrap();
    if let TraceKind::Attempt { cw_after, .. } = &mut bad_cw[i].kind {
        *cw_after += 1;
    }
    assert!(check_trace(&bad_cw, variant, &timing).iter().any(|v| v.rule == Rule::CwLaw));
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn conservation_and_bounds(seed in 0u64..10_000, n in 2usize..9, v in 0usize..3) {
        let variant = ProtocolVariant::ALL[v];
        let s = disc_setup(n, variant, seed, 15);
        let duration = s.params.duration;
        let (r, trace) = audit(s);
        let counted: u64 = trace
            .iter()
            .filter_map(|x| match x.kind {
                TraceKind::Delivered { bits, counted: true, .. } => Some(bits),
                _ => None,
            })
            .sum();
        let per_node: u64 = r.nodes.iter().map(|x| x.delivered_bits).sum();
        prop_assert_eq!(counted, per_node);
        let sum_thr: f64 = r.nodes.iter().map(|x| x.throughput_bps).sum();
        prop_assert!((sum_thr - r.network_throughput_bps).abs() <= 1e-9 * r.network_throughput_bps.max(1.0));
        prop_assert!(r.network_throughput_bps <= 2.0 * 3807e6);
        prop_assert!(trace.iter().all(|x| x.time <= duration + SimTime::from_millis(5)));
        if let Some(j) = r.jain_index {
            prop_assert!(j >= 1.0 / (n - 1) as f64 - 1e-12 && j <= 1.0 + 1e-12);
        }
    }
}
