use serde::{Deserialize, Serialize};

use crate::des::SimTime;
use crate::power::FdMode;

/// MAC/PHY timing and frame-size constants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MacTiming {
    pub control_phy_header_bits: u64,
    pub sc_phy_header_bits: u64,
    pub mac_header_bits: u64,
    pub payload_bits: u64,
    pub control_rate_bps: f64,
    pub rts_bits: u64,
    pub cts_bits: u64,
    pub ack_bits: u64,
    pub difs_ns: u64,
    pub sifs_ns: u64,
    pub slot_ns: u64,
    pub cw_min: u32,
    pub cw_max: u32,
    pub retry_limit: u32,
}

impl Default for MacTiming {
    fn default() -> Self {
        MacTiming {
            control_phy_header_bits: 40,
            sc_phy_header_bits: 64,
            mac_header_bits: 320,
            payload_bits: 8000 * 8,
            control_rate_bps: 27.5e6,
            rts_bits: 352,
            cts_bits: 304,
            ack_bits: 304,
            difs_ns: 13_000,
            sifs_ns: 3_000,
            slot_ns: 5_000,
            cw_min: 16,
            cw_max: 1024,
            retry_limit: 7,
        }
    }
}

impl MacTiming {
    pub fn difs(&self) -> SimTime {
        SimTime::from_nanos(self.difs_ns)
    }

    pub fn sifs(&self) -> SimTime {
        SimTime::from_nanos(self.sifs_ns)
    }

    pub fn slot(&self) -> SimTime {
        SimTime::from_nanos(self.slot_ns)
    }

    /// Control PHY airtime of a control frame of `bits` MAC bits.
    pub fn control_airtime(&self, bits: u64) -> SimTime {
        SimTime::from_secs_ceil((self.control_phy_header_bits + bits) as f64 / self.control_rate_bps)
    }

    pub fn rts_airtime(&self) -> SimTime {
        self.control_airtime(self.rts_bits)
    }

    pub fn cts_airtime(&self) -> SimTime {
        self.control_airtime(self.cts_bits)
    }

    pub fn ack_airtime(&self) -> SimTime {
        self.control_airtime(self.ack_bits)
    }

    /// Time to send the SC and control PHY headers of a DATA frame.
    pub fn data_phy_header_airtime(&self) -> SimTime {
        SimTime::from_secs_ceil((self.sc_phy_header_bits + self.control_phy_header_bits) as f64 / self.control_rate_bps)
    }

    /// Full DATA airtime: PHY headers at the control rate plus MAC header and
    /// payload at `rate_bps`, rounded up once to the nanosecond.
    pub fn data_airtime(&self, payload_bits: u64, rate_bps: f64) -> SimTime {
        let header = (self.sc_phy_header_bits + self.control_phy_header_bits) as f64 / self.control_rate_bps;
        let body = (self.mac_header_bits + payload_bits) as f64 / rate_bps;
        SimTime::from_secs_ceil(header + body)
    }

    /// Channel-hold time of one complete exchange: DIFS, the handshake, one
    /// DATA slot of `data` airtime and the ACKs. Three-node exchanges add one
    /// RTS and one SIFS.
    pub fn transaction_hold(&self, mode: Option<FdMode>, data: SimTime) -> SimTime {
        let base = self.difs() + self.rts_airtime() + self.sifs() + self.cts_airtime() + self.sifs() + data
            + self.sifs()
            + self.ack_airtime();
        match mode {
            Some(FdMode::ThreeNode) => base + self.rts_airtime() + self.sifs(),
            _ => base,
        }
    }

    /// Everything in an FD exchange that is not payload airtime: contention
    /// gap, control frames, DATA PHY headers and inter-frame spaces.
    pub fn fd_overhead(&self, mode: FdMode) -> SimTime {
        let two = self.difs() + self.rts_airtime() + self.sifs() + self.cts_airtime() + self.sifs()
            + self.data_phy_header_airtime()
            + self.sifs()
            + self.ack_airtime();
        match mode {
            FdMode::TwoNode => two,
            FdMode::ThreeNode => two + self.rts_airtime() + self.sifs(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn control_frame_airtimes() {
        let t = MacTiming::default();
        // (40 + 352) / 27.5 Mb/s = 14.2545 us, (40 + 304) / 27.5 Mb/s = 12.5091 us
        assert_eq!(t.rts_airtime().as_nanos(), 14_255);
        assert_eq!(t.cts_airtime().as_nanos(), 12_510);
        assert_eq!(t.ack_airtime().as_nanos(), 12_510);
    }

    #[test]
    fn data_airtime_at_mcs2() {
        let t = MacTiming::default();
        // 104/27.5e6 + 64320/1904e6 = 3.7818 us + 33.7815 us = 37.5633 us
        assert_eq!(t.data_airtime(64_000, 1904e6).as_nanos(), 37_564);
    }

    #[test]
    fn two_node_hold_matches_hand_sum() {
        let t = MacTiming::default();
        let hold = t.transaction_hold(Some(FdMode::TwoNode), t.data_airtime(64_000, 1904e6));
        // 13 + 14.254 + 3 + 12.509 + 3 + 37.564 + 3 + 12.509 = 98.84 us
        assert!((hold.as_nanos() as i64 - 98_840).abs() <= 4, "{hold}");
        let three = t.transaction_hold(Some(FdMode::ThreeNode), t.data_airtime(64_000, 1904e6));
        assert_eq!((three - hold).as_nanos(), 17_255);
    }
}
