//! Physical-layer models: sector antennas, path gain, received power,
//! residual self-interference, SINR and rate matching.

mod antenna;
mod channel;
mod geometry;
mod mcs;
mod sinr;

pub use antenna::{pattern_gain, rx_gain, tx_gain, AntennaConfig, BeamPointing, BeamRole, RxPattern};
pub use channel::{path_gain, received_power, residual_si, ChannelParams, Receiver, Transmitter};
pub use geometry::{normalize_angle, wrap_offset, Position};
pub use mcs::{McsEntry, McsTable};
pub use sinr::{sinr, ActiveTransmission, LinkId, ReceiverState, SinrBreakdown};
