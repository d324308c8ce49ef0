use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::des::{SimTime, TieBreak};
use crate::error::{invalid, Error, Result};
use crate::mac::MacTiming;
use crate::power::PowerGrid;
use crate::radio::{AntennaConfig, ChannelParams, McsTable, Position};

/// MAC protocol under test.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProtocolVariant {
    /// Directional FD MAC with busy tones and two/three-node FD modes.
    Dfdmac,
    /// Half-duplex 802.11ay-style RTS/CTS with busy tones.
    AyWithBt,
    /// Plain half-duplex 802.11ay-style RTS/CTS.
    AyWithoutBt,
}

impl ProtocolVariant {
    pub const ALL: [ProtocolVariant; 3] = [ProtocolVariant::Dfdmac, ProtocolVariant::AyWithBt, ProtocolVariant::AyWithoutBt];

    pub fn as_str(self) -> &'static str {
        match self {
            ProtocolVariant::Dfdmac => "dfdmac",
            ProtocolVariant::AyWithBt => "ay-with-bt",
            ProtocolVariant::AyWithoutBt => "ay-without-bt",
        }
    }

    pub fn full_duplex(self) -> bool {
        self == ProtocolVariant::Dfdmac
    }

    pub fn default_busy_tones(self) -> bool {
        self != ProtocolVariant::AyWithoutBt
    }
}

impl fmt::Display for ProtocolVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProtocolVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ProtocolVariant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown protocol variant `{s}`")))
    }
}

/// Offered load.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum TrafficModel {
    /// Every enabled source always has a packet queued.
    Saturated,
    /// Poisson packet arrivals per enabled source.
    Poisson { packets_per_second: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrafficConfig {
    #[serde(flatten)]
    pub model: TrafficModel,
    /// Users send to the AP.
    pub uplink: bool,
    /// The AP sends to randomly chosen users.
    pub downlink: bool,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        TrafficConfig { model: TrafficModel::Saturated, uplink: true, downlink: true }
    }
}

/// One simulated radio. Node 0 is the AP.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeSpec {
    pub position: Position,
    pub antenna: AntennaConfig,
    /// Transmit power without power control, watts.
    pub tx_power: f64,
    /// Grid searched when power control is on.
    pub power_grid: PowerGrid,
    /// Residual self-interference ratio, linear.
    pub beta: f64,
}

/// Everything a single run needs besides the nodes.
#[derive(Clone, Debug)]
pub struct SimParams {
    pub variant: ProtocolVariant,
    pub busy_tones: bool,
    pub power_control: bool,
    pub ibi: bool,
    pub timing: MacTiming,
    pub channel: ChannelParams,
    pub mcs: McsTable,
    /// MCS index used for DATA when `adaptive_mcs` is off.
    pub data_mcs: u8,
    /// Pick the DATA MCS from the predicted SINR instead.
    pub adaptive_mcs: bool,
    /// Energy-detect threshold for clear channel assessment, watts.
    pub cca_threshold: f64,
    /// Minimum SINR to detect a preamble and decode a control frame, linear.
    pub control_threshold: f64,
    pub traffic: TrafficConfig,
    pub duration: SimTime,
    /// Extra time after `duration` for in-flight exchanges to finish.
    pub drain: SimTime,
    pub seed: u64,
    pub record_trace: bool,
    pub tie_break: TieBreak,
}

impl SimParams {
    pub fn new(variant: ProtocolVariant) -> Self {
        SimParams {
            variant,
            busy_tones: variant.default_busy_tones(),
            power_control: false,
            ibi: true,
            timing: MacTiming::default(),
            channel: ChannelParams::default(),
            mcs: McsTable::default(),
            data_mcs: 2,
            adaptive_mcs: false,
            cca_threshold: crate::units::dbm_to_watts(-68.0),
            control_threshold: crate::units::db_to_linear(5.5),
            traffic: TrafficConfig::default(),
            duration: SimTime::from_millis(1000),
            drain: SimTime::from_millis(5),
            seed: 1,
            record_trace: false,
            tie_break: TieBreak::Fifo,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.channel.validate()?;
        if !self.adaptive_mcs && self.mcs.by_index(self.data_mcs).is_none() {
            return Err(invalid(format!("data MCS {} is not in the rate table", self.data_mcs)));
        }
        if !(self.cca_threshold > 0.0 && self.control_threshold > 0.0) {
            return Err(invalid("thresholds must be positive"));
        }
        let t = &self.timing;
        if t.cw_min == 0 || t.cw_min > t.cw_max || t.slot_ns == 0 || t.control_rate_bps <= 0.0 || t.payload_bits == 0 {
            return Err(invalid("invalid MAC timing parameters"));
        }
        if let TrafficModel::Poisson { packets_per_second } = self.traffic.model {
            if !(packets_per_second > 0.0 && packets_per_second.is_finite()) {
                return Err(invalid("Poisson arrival rate must be positive"));
            }
        }
        Ok(())
    }
}

/// A complete, runnable simulation.
#[derive(Clone, Debug)]
pub struct SimSetup {
    pub params: SimParams,
    pub nodes: Vec<NodeSpec>,
}

impl SimSetup {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.nodes.len() < 2 {
            return Err(invalid("a network needs the AP and at least one user"));
        }
        for (i, a) in self.nodes.iter().enumerate() {
            if !(a.tx_power > 0.0) || !(0.0..=1.0).contains(&a.beta) {
                return Err(invalid(format!("node {i}: transmit power must be positive and beta in [0, 1]")));
            }
            a.power_grid.validate()?;
            for b in &self.nodes[i + 1..] {
                if a.position.distance(&b.position) == 0.0 {
                    return Err(invalid(format!("node {i} shares its position with another node")));
                }
            }
        }
        Ok(())
    }
}
