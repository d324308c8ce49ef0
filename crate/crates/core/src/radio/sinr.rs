use serde::{Deserialize, Serialize};

use super::channel::{received_power, residual_si, ChannelParams, Receiver, Transmitter};

use crate::error::Result;

/// Identifies which FD link a transmission belongs to. Interference from a
/// transmission on the receiver's own link is inter-beam interference; from
/// any other link it is co-channel interference.
pub type LinkId = u64;

/// A transmission currently on the air.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ActiveTransmission {
    pub source: usize,
    pub tx: Transmitter,
    pub power: f64,
    pub link: LinkId,
}

/// A node receiving `wanted`. `own_tx_power` is set when the receiver is itself
/// transmitting (full duplex), which adds residual self-interference.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReceiverState {
    pub node: usize,
    pub rx: Receiver,
    pub own_tx_power: Option<f64>,
    pub beta: f64,
}

/// Every term of one receiver's SINR, in watts (sinr is linear).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SinrBreakdown {
    pub signal: f64,
    pub residual_si: f64,
    pub ibi: f64,
    pub co_channel: f64,
    pub noise: f64,
    pub sinr: f64,
}

impl SinrBreakdown {
    pub fn interference_plus_noise(&self) -> f64 {
        self.residual_si + self.ibi + self.co_channel + self.noise
    }
}

/// SINR of `wanted` at `receiver` given the other transmissions on the air.
///
/// Entries of `concurrent` sent by the receiver itself are skipped (they are
/// accounted for as residual SI), as is `wanted` if it appears in the set.
/// With `ibi_enabled == false` the same-link interference term is forced to 0.
pub fn sinr<'a, I>(
    receiver: &ReceiverState,
    wanted: &ActiveTransmission,
    concurrent: I,
    params: &ChannelParams,
    ibi_enabled: bool,
) -> Result<SinrBreakdown>
where
    I: IntoIterator<Item = &'a ActiveTransmission>,
{
    let signal = received_power(wanted.power, &wanted.tx, &receiver.rx, params)?;
    let si = receiver.own_tx_power.map_or(0.0, |p| residual_si(p, receiver.beta));
    let mut ibi = 0.0;
    let mut co_channel = 0.0;
    for other in concurrent {
        if other.source == receiver.node || other.source == wanted.source {
            continue;
        }
        let p = received_power(other.power, &other.tx, &receiver.rx, params)?;
        if other.link == wanted.link {
            if ibi_enabled {
                ibi += p;
            }
        } else {
            co_channel += p;
        }
    }
    let noise = params.n0;
    let sinr = signal / (si + ibi + co_channel + noise);
    Ok(SinrBreakdown { signal, residual_si: si, ibi, co_channel, noise, sinr })
}
