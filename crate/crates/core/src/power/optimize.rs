use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::spec::{FdLinkSpec, FdMode};
use super::{occupation_time, throughput_from};
use crate::error::{invalid, Error, Result};
use crate::radio::{sinr, ActiveTransmission, BeamRole, Receiver, ReceiverState, RxPattern, SinrBreakdown, Transmitter};

const PRIMARY_TX: usize = 0;
const PRIMARY_RX: usize = 1;
const SECONDARY_RX: usize = 2;

/// SINRs and matched rates for one power pair.
#[derive(Clone, Debug, PartialEq)]
pub struct LinkEvaluation {
    /// At the primary receiver (decides the primary rate).
    pub primary: SinrBreakdown,
    /// At the node receiving the secondary transmission.
    pub secondary: SinrBreakdown,
    /// Table positions of the matched MCS entries.
    pub mcs_primary: Option<usize>,
    pub mcs_secondary: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerSolution {
    pub p_primary: f64,
    pub p_secondary: f64,
    pub mcs_primary: u8,
    pub mcs_secondary: u8,
    pub rate_primary: f64,
    pub rate_secondary: f64,
    pub sinr_primary: SinrBreakdown,
    pub sinr_secondary: SinrBreakdown,
    pub occupation_time: f64,
    pub throughput: f64,
}

impl PowerSolution {
    fn key(&self) -> (f64, f64, f64, f64) {
        (self.occupation_time, -self.throughput, self.p_primary + self.p_secondary, self.p_primary)
    }

    /// Ordering used for ties: shorter occupation time, then higher
    /// throughput, then lower total power, then lower primary power.
    fn better_than(&self, other: &PowerSolution) -> bool {
        let (a, b) = (self.key(), other.key());
        let cmp = a
            .0
            .total_cmp(&b.0)
            .then(a.1.total_cmp(&b.1))
            .then(a.2.total_cmp(&b.2))
            .then(a.3.total_cmp(&b.3));
        cmp == Ordering::Less
    }
}

/// SINR at both receivers of the link for one `(p_primary, p_secondary)`.
pub fn evaluate(spec: &FdLinkSpec, p_primary: f64, p_secondary: f64) -> Result<LinkEvaluation> {
    let t = &spec.primary_tx;
    let r = &spec.primary_rx;
    let sr = spec.secondary_receiver();
    let sr_id = match spec.mode {
        FdMode::TwoNode => PRIMARY_TX,
        FdMode::ThreeNode => SECONDARY_RX,
    };

    let primary = ActiveTransmission {
        source: PRIMARY_TX,
        tx: Transmitter {
            position: t.position,
            antenna: t.antenna,
            beam: t.antenna.beam_toward(&t.position, &r.position, BeamRole::Transmit)?,
        },
        power: p_primary,
        link: 0,
    };
    let secondary = ActiveTransmission {
        source: PRIMARY_RX,
        tx: Transmitter {
            position: r.position,
            antenna: r.antenna,
            beam: r.antenna.beam_toward(&r.position, &sr.position, BeamRole::Transmit)?,
        },
        power: p_secondary,
        link: 0,
    };
    let on_air = [primary, secondary];

    let at_primary_rx = ReceiverState {
        node: PRIMARY_RX,
        rx: Receiver {
            position: r.position,
            antenna: r.antenna,
            pattern: RxPattern::Beam(r.antenna.beam_toward(&r.position, &t.position, BeamRole::Receive)?),
        },
        own_tx_power: Some(p_secondary),
        beta: r.beta,
    };
    let at_secondary_rx = ReceiverState {
        node: sr_id,
        rx: Receiver {
            position: sr.position,
            antenna: sr.antenna,
            pattern: RxPattern::Beam(sr.antenna.beam_toward(&sr.position, &r.position, BeamRole::Receive)?),
        },
        own_tx_power: match spec.mode {
            FdMode::TwoNode => Some(p_primary),
            FdMode::ThreeNode => None,
        },
        beta: sr.beta,
    };

    let primary_sinr = sinr(&at_primary_rx, &primary, &on_air, &spec.channel, spec.ibi_enabled)?;
    let secondary_sinr = sinr(&at_secondary_rx, &secondary, &on_air, &spec.channel, spec.ibi_enabled)?;
    let class = |s: &SinrBreakdown| spec.mcs.mcs_match(s.sinr).and_then(|e| spec.mcs.position(e.index));
    Ok(LinkEvaluation {
        mcs_primary: class(&primary_sinr),
        mcs_secondary: class(&secondary_sinr),
        primary: primary_sinr,
        secondary: secondary_sinr,
    })
}

fn solution(spec: &FdLinkSpec, p_primary: f64, p_secondary: f64, ev: LinkEvaluation) -> Result<Option<PowerSolution>> {
    let (Some(cp), Some(cs)) = (ev.mcs_primary, ev.mcs_secondary) else {
        return Ok(None);
    };
    let ep = &spec.mcs.entries()[cp];
    let es = &spec.mcs.entries()[cs];
    let d = occupation_time(spec.payload_primary_bits, ep.data_rate_bps, spec.payload_secondary_bits, es.data_rate_bps)?;
    Ok(Some(PowerSolution {
        p_primary,
        p_secondary,
        mcs_primary: ep.index,
        mcs_secondary: es.index,
        rate_primary: ep.data_rate_bps,
        rate_secondary: es.data_rate_bps,
        sinr_primary: ev.primary,
        sinr_secondary: ev.secondary,
        occupation_time: d,
        throughput: throughput_from(spec, d),
    }))
}

fn keep_best(best: &mut Option<PowerSolution>, candidate: PowerSolution) {
    if best.as_ref().is_none_or(|b| candidate.better_than(b)) {
        *best = Some(candidate);
    }
}

/// Exhaustive search over every grid pair. Serves as the reference for
/// [`optimize_powers`].
pub fn brute_force_oracle(spec: &FdLinkSpec) -> Result<PowerSolution> {
    spec.validate()?;
    if spec.grid_pairs() > 1_000_000 {
        return Err(invalid(format!("grid of {} pairs is too large to enumerate", spec.grid_pairs())));
    }
    let mut best = None;
    for &pt in &spec.primary_power.points() {
        for &pr in &spec.secondary_power.points() {
            if let Some(s) = solution(spec, pt, pr, evaluate(spec, pt, pr)?)? {
                keep_best(&mut best, s);
            }
        }
    }
    best.ok_or(Error::Infeasible)
}

/// Grid power control for one FD link.
///
/// For each primary power, from the maximum down by one step:
/// 1. the primary rate range is bounded by evaluating the secondary at its
///    maximum power (slowest primary rate) and its minimum (fastest);
/// 2. for every rate class in that range the secondary's power is set to the
///    highest grid value that still lets the primary decode at that class,
///    which gives the best secondary rate for the class;
/// 3. the secondary's power is then lowered to the smallest grid value that
///    keeps the same occupation time, and the pair competes with the incumbent.
///
/// The primary receiver's SINR falls as the secondary's power rises (residual
/// SI), and the secondary receiver's SINR rises with it, so steps 2 and 3 are
/// binary searches over the secondary grid.
pub fn optimize_powers(spec: &FdLinkSpec) -> Result<PowerSolution> {
    spec.validate()?;
    let pt_grid = spec.primary_power.points();
    let pr_grid = spec.secondary_power.points();
    let entries = spec.mcs.entries();
    let mut best: Option<PowerSolution> = None;

    for &pt in pt_grid.iter().rev() {
        let primary_class = |pr: f64| -> Result<Option<usize>> { Ok(evaluate(spec, pt, pr)?.mcs_primary) };
        let secondary_class = |pr: f64| -> Result<Option<usize>> { Ok(evaluate(spec, pt, pr)?.mcs_secondary) };

        let r_min = primary_class(*pr_grid.last().expect("non-empty grid"))?;
        let Some(r_max) = primary_class(pr_grid[0])? else {
            continue;
        };
        let lowest = r_min.unwrap_or(0);

        for class in lowest..=r_max {
            // Largest secondary power with the primary still at `class` or better.
            let supports = |pr: f64| -> Result<bool> { Ok(primary_class(pr)?.is_some_and(|c| c >= class)) };
            let hi = partition_point(&pr_grid, supports)?;
            if hi == 0 {
                continue;
            }
            let pr_hi = pr_grid[hi - 1];
            let ev = evaluate(spec, pt, pr_hi)?;
            let Some(at_hi) = solution(spec, pt, pr_hi, ev)? else {
                continue;
            };
            let d = at_hi.occupation_time;

            // Smallest secondary power whose own DATA fits in `d`.
            let fits = |pr: f64| -> Result<bool> {
                Ok(secondary_class(pr)?
                    .is_some_and(|c| spec.payload_secondary_bits / entries[c].data_rate_bps <= d))
            };
            let lo = partition_point_rev(&pr_grid[..hi], fits)?;
            let pr = pr_grid[lo];
            let candidate = solution(spec, pt, pr, evaluate(spec, pt, pr)?)?.unwrap_or(at_hi);
            keep_best(&mut best, candidate);
        }
    }
    best.ok_or(Error::Infeasible)
}

/// Number of leading elements for which the (prefix-true) predicate holds.
fn partition_point(grid: &[f64], mut pred: impl FnMut(f64) -> Result<bool>) -> Result<usize> {
    let (mut lo, mut hi) = (0usize, grid.len());
    while lo < hi {
        let mid = (lo + hi) / 2;
        if pred(grid[mid])? {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// First index at which the (suffix-true) predicate holds. The last element
/// is assumed to satisfy it.
fn partition_point_rev(grid: &[f64], mut pred: impl FnMut(f64) -> Result<bool>) -> Result<usize> {
    let (mut lo, mut hi) = (0usize, grid.len() - 1);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if pred(grid[mid])? {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Ok(lo)
}
