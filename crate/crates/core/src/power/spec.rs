use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::mac::MacTiming;
use crate::radio::{AntennaConfig, ChannelParams, McsTable, Position};
use crate::units::{db_to_linear, mw_to_watts};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FdMode {
    TwoNode,
    ThreeNode,
}

/// One endpoint of an FD link.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FdNode {
    pub position: Position,
    pub antenna: AntennaConfig,
    /// SI cancellation level (linear ratio of residual SI to transmit power).
    pub beta: f64,
}

/// Inclusive discrete power grid `{min, min+step, …, max}` in watts.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerGrid {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl PowerGrid {
    pub fn new(min: f64, max: f64, step: f64) -> Result<Self> {
        let g = PowerGrid { min, max, step };
        g.validate()?;
        Ok(g)
    }

    pub fn from_mw(min: f64, max: f64, step: f64) -> Result<Self> {
        Self::new(mw_to_watts(min), mw_to_watts(max), mw_to_watts(step))
    }

    pub fn single(p: f64) -> Self {
        PowerGrid { min: p, max: p, step: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.min >= 0.0 && self.min.is_finite() && self.max.is_finite()) {
            return Err(invalid(format!("bad power bounds [{}, {}]", self.min, self.max)));
        }
        if self.min > self.max {
            return Err(invalid(format!("P_min {} exceeds P_max {}", self.min, self.max)));
        }
        if !(self.step > 0.0) {
            return Err(invalid(format!("power step must be positive, got {}", self.step)));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        ((self.max - self.min) / self.step + 1e-9).floor() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Grid points in ascending order.
    pub fn points(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.min + k as f64 * self.step).collect()
    }
}

/// Everything the power optimiser needs to know about one FD link.
///
/// In two-node mode the secondary transmitter (`primary_rx`) sends back to
/// `primary_tx`; in three-node mode it relays to `secondary_rx`.
#[derive(Clone, Debug, PartialEq)]
pub struct FdLinkSpec {
    pub mode: FdMode,
    pub primary_tx: FdNode,
    pub primary_rx: FdNode,
    pub secondary_rx: Option<FdNode>,
    pub payload_primary_bits: f64,
    pub payload_secondary_bits: f64,
    pub primary_power: PowerGrid,
    pub secondary_power: PowerGrid,
    pub overhead_s: f64,
    pub ibi_enabled: bool,
    pub channel: ChannelParams,
    pub mcs: McsTable,
}

impl FdLinkSpec {
    pub fn validate(&self) -> Result<()> {
        self.primary_power.validate()?;
        self.secondary_power.validate()?;
        self.channel.validate()?;
        match (self.mode, &self.secondary_rx) {
            (FdMode::ThreeNode, None) => return Err(invalid("three-node link needs a secondary receiver")),
            (FdMode::TwoNode, Some(_)) => return Err(invalid("two-node link has no separate secondary receiver")),
            _ => {}
        }
        if !(self.payload_primary_bits > 0.0 && self.payload_secondary_bits > 0.0) {
            return Err(invalid("payloads must be positive"));
        }
        if !(self.overhead_s >= 0.0) {
            return Err(invalid("overhead must be non-negative"));
        }
        for n in self.nodes() {
            if !(0.0..=1.0).contains(&n.beta) {
                return Err(invalid(format!("SI level {} outside [0, 1]", n.beta)));
            }
        }
        let pos: Vec<Position> = self.nodes().map(|n| n.position).collect();
        for i in 0..pos.len() {
            for j in i + 1..pos.len() {
                if pos[i] == pos[j] {
                    return Err(invalid("link endpoints share a position"));
                }
            }
        }
        Ok(())
    }

    fn nodes(&self) -> impl Iterator<Item = &FdNode> {
        [Some(&self.primary_tx), Some(&self.primary_rx), self.secondary_rx.as_ref()].into_iter().flatten()
    }

    /// Node that receives the secondary transmission.
    pub fn secondary_receiver(&self) -> &FdNode {
        match self.mode {
            FdMode::TwoNode => &self.primary_tx,
            FdMode::ThreeNode => self.secondary_rx.as_ref().expect("validated three-node spec"),
        }
    }

    pub fn grid_pairs(&self) -> usize {
        self.primary_power.len() * self.secondary_power.len()
    }

    /// The three-node uplink/downlink case used for the power-control sweep:
    /// a user 15 m west of the AP sends uplink while the AP sends downlink to
    /// a user 15 m east. User grid 1–20 mW, AP grid 1–100 mW, 1 mW steps.
    pub fn fig7(ibi_enabled: bool) -> Self {
        let user = AntennaConfig::new(8).expect("8 beams");
        let ap = AntennaConfig::new(32).expect("32 beams");
        let beta = db_to_linear(-85.0);
        let timing = MacTiming::default();
        FdLinkSpec {
            mode: FdMode::ThreeNode,
            primary_tx: FdNode { position: Position { x: -15.0, y: 0.0 }, antenna: user, beta },
            primary_rx: FdNode { position: Position::ORIGIN, antenna: ap, beta },
            secondary_rx: Some(FdNode { position: Position { x: 15.0, y: 0.0 }, antenna: user, beta }),
            payload_primary_bits: timing.payload_bits as f64,
            payload_secondary_bits: timing.payload_bits as f64,
            primary_power: PowerGrid::from_mw(1.0, 20.0, 1.0).expect("grid"),
            secondary_power: PowerGrid::from_mw(1.0, 100.0, 1.0).expect("grid"),
            overhead_s: timing.fd_overhead(FdMode::ThreeNode).as_secs_f64(),
            ibi_enabled,
            channel: ChannelParams::default(),
            mcs: McsTable::default(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_is_inclusive() {
        let g = PowerGrid::from_mw(1.0, 20.0, 1.0).unwrap();
        let pts = g.points();
        assert_eq!(pts.len(), 20);
        assert!((pts[19] - 0.020).abs() < 1e-15);
        assert_eq!(PowerGrid::single(0.01).points(), vec![0.01]);
        assert!(PowerGrid::new(0.02, 0.01, 0.001).is_err());
        assert!(PowerGrid::new(0.01, 0.02, 0.0).is_err());
    }

    #[test]
    fn fig7_spec_is_valid() {
        FdLinkSpec::fig7(true).validate().unwrap();
        let mut bad = FdLinkSpec::fig7(true);
        bad.secondary_rx = None;
        assert!(bad.validate().is_err());
    }
}
