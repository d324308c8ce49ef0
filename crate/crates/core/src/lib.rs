//! Discrete-event simulator for a directional mmWave WLAN with full-duplex
//! MAC variants, plus the link-level power-control model.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod des;
pub mod error;
pub mod mac;
pub mod power;
pub mod radio;
pub mod scenario;
pub mod sim;
pub mod units;

pub use error::{Error, Result};
