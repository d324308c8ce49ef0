use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use super::geometry::{normalize_angle, wrap_offset, Position};
use crate::error::{invalid, Result};

/// Sectorised antenna with `M` equal beams covering the full circle.
/// Beamwidth is `2π/M` and the in-beam gain is `2π/θ = M`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct AntennaConfig {
    beam_count: u32,
}

impl TryFrom<u32> for AntennaConfig {
    type Error = crate::Error;
    fn try_from(m: u32) -> Result<Self> {
        AntennaConfig::new(m)
    }
}

impl From<AntennaConfig> for u32 {
    fn from(a: AntennaConfig) -> u32 {
        a.beam_count
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BeamRole {
    Transmit,
    Receive,
}

/// A selected beam: its boresight and whether it is used to send or listen.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BeamPointing {
    boresight: f64,
    pub role: BeamRole,
}

impl BeamPointing {
    pub fn new(boresight: f64, role: BeamRole) -> Self {
        BeamPointing { boresight: normalize_angle(boresight), role }
    }

    pub fn boresight(&self) -> f64 {
        self.boresight
    }
}

/// How a node is listening.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RxPattern {
    /// Idle listening with unit gain in every direction.
    QuasiOmni,
    Beam(BeamPointing),
}

impl AntennaConfig {
    pub fn new(beam_count: u32) -> Result<Self> {
        if beam_count == 0 {
            return Err(invalid("antenna needs at least one beam"));
        }
        Ok(AntennaConfig { beam_count })
    }

    pub fn beam_count(&self) -> u32 {
        self.beam_count
    }

    pub fn beamwidth(&self) -> f64 {
        TAU / self.beam_count as f64
    }

    pub fn max_gain(&self) -> f64 {
        self.beam_count as f64
    }

    pub fn boresight_of(&self, index: u32) -> f64 {
        (index % self.beam_count) as f64 * self.beamwidth()
    }

    /// The `g(φ)` indicator: 1 when `offset` lies in the beam. Sector edges
    /// belong to the beam on their clockwise side, so a direction on a
    /// boundary is covered by exactly one beam.
    fn covers(&self, offset: f64) -> bool {
        let half = self.beamwidth() / 2.0;
        offset > -half && offset <= half
    }

    /// Index of the unique beam covering `bearing`.
    pub fn beam_index_toward(&self, bearing: f64) -> u32 {
        let m = self.beam_count as i64;
        let guess = (normalize_angle(bearing) / self.beamwidth()).round() as i64;
        let mut candidates = [guess - 1, guess, guess + 1].map(|k| k.rem_euclid(m) as u32);
        candidates.sort_unstable();
        candidates
            .into_iter()
            .find(|&k| self.covers(wrap_offset(bearing - self.boresight_of(k))))
            .unwrap_or((guess.rem_euclid(m)) as u32)
    }

    /// Best codebook beam from `from` toward `to`.
    pub fn beam_toward(&self, from: &Position, to: &Position, role: BeamRole) -> Result<BeamPointing> {
        let bearing = from.bearing_to(to)?;
        Ok(BeamPointing::new(self.boresight_of(self.beam_index_toward(bearing)), role))
    }

    fn gain(&self, beam: &BeamPointing, own: &Position, other: &Position) -> Result<f64> {
        let bearing = own.bearing_to(other)?;
        let offset = wrap_offset(bearing - beam.boresight);
        Ok(if self.covers(offset) { self.max_gain() } else { 0.0 })
    }
}

/// Transmit antenna gain `g(φ_t)·G^max` toward `target`.
pub fn tx_gain(antenna: &AntennaConfig, beam: &BeamPointing, target: &Position, own: &Position) -> Result<f64> {
    if beam.role != BeamRole::Transmit {
        return Err(invalid("tx_gain needs a transmit beam"));
    }
    antenna.gain(beam, own, target)
}

/// Receive antenna gain `g(φ_r)·G^max` toward `source`.
pub fn rx_gain(antenna: &AntennaConfig, beam: &BeamPointing, source: &Position, own: &Position) -> Result<f64> {
    if beam.role != BeamRole::Receive {
        return Err(invalid("rx_gain needs a receive beam"));
    }
    antenna.gain(beam, own, source)
}

/// Receive gain for either listening mode.
pub fn pattern_gain(antenna: &AntennaConfig, pattern: &RxPattern, source: &Position, own: &Position) -> Result<f64> {
    match pattern {
        RxPattern::QuasiOmni => {
            if source == own {
                return Err(invalid("source coincides with receiver"));
            }
            Ok(1.0)
        }
        RxPattern::Beam(b) => rx_gain(antenna, b, source, own),
    }
}
