use serde::{Deserialize, Serialize};

use super::antenna::{pattern_gain, tx_gain, AntennaConfig, BeamPointing, RxPattern};
use super::geometry::Position;
use crate::error::{invalid, Result};
use crate::units::{db_to_linear, dbm_to_watts};

/// Propagation constants, all linear.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    /// Path gain at the 1 m reference distance.
    pub g0: f64,
    /// Path-loss exponent.
    pub alpha: f64,
    /// Oxygen absorption, per meter.
    pub c0: f64,
    /// Background noise, watts.
    pub n0: f64,
}

impl Default for ChannelParams {
    /// 60 GHz free-space reference gain, α = 2, 0.0037/m absorption, −90 dBm noise.
    fn default() -> Self {
        ChannelParams {
            g0: db_to_linear(-68.0),
            alpha: 2.0,
            c0: 0.0037,
            n0: dbm_to_watts(-90.0),
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.g0 > 0.0 && self.g0.is_finite()) {
            return Err(invalid(format!("g0 must be positive, got {}", self.g0)));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(invalid(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(self.c0 >= 0.0 && self.c0.is_finite()) {
            return Err(invalid(format!("c0 must be non-negative, got {}", self.c0)));
        }
        if !(self.n0 > 0.0 && self.n0.is_finite()) {
            return Err(invalid(format!("n0 must be positive, got {}", self.n0)));
        }
        Ok(())
    }
}

/// `G(a, b) = G0 · d^-α · e^(-c0·d)`.
pub fn path_gain(params: &ChannelParams, a: &Position, b: &Position) -> Result<f64> {
    let d = a.distance(b);
    if d <= 0.0 {
        return Err(invalid("path gain undefined at zero distance"));
    }
    Ok(params.g0 * d.powf(-params.alpha) * (-params.c0 * d).exp())
}

/// A radiating node with its selected transmit beam.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transmitter {
    pub position: Position,
    pub antenna: AntennaConfig,
    pub beam: BeamPointing,
}

/// A listening node with its current receive pattern.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Receiver {
    pub position: Position,
    pub antenna: AntennaConfig,
    pub pattern: RxPattern,
}

/// `P = P_tx · G^Tx · G^Rx · G(tx, rx)`.
pub fn received_power(p_tx: f64, tx: &Transmitter, rx: &Receiver, params: &ChannelParams) -> Result<f64> {
    if !(p_tx >= 0.0) {
        return Err(invalid(format!("negative transmit power {p_tx}")));
    }
    let gt = tx_gain(&tx.antenna, &tx.beam, &rx.position, &tx.position)?;
    let gr = pattern_gain(&rx.antenna, &rx.pattern, &tx.position, &rx.position)?;
    if p_tx == 0.0 || gt == 0.0 || gr == 0.0 {
        // Still validate the geometry so coincident nodes are reported.
        path_gain(params, &tx.position, &rx.position)?;
        return Ok(0.0);
    }
    Ok(p_tx * gt * gr * path_gain(params, &tx.position, &rx.position)?)
}

/// Residual self-interference `P · β`.
pub fn residual_si(p_tx: f64, beta: f64) -> f64 {
    debug_assert!(p_tx >= 0.0);
    debug_assert!((0.0..=1.0).contains(&beta));
    p_tx * beta
}
