use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{GridMw, RadioConfig};
use crate::error::{Error, Result};
use crate::mac::MacTiming;
use crate::power::{evaluate, link_throughput, occupation_time, optimize_powers, FdLinkSpec, FdMode, FdNode, PowerGrid};
use crate::radio::{AntennaConfig, McsEntry, McsTable, Position};
use crate::units::{db_to_linear, linear_to_db, mw_to_watts};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkNodeConfig {
    pub x: f64,
    pub y: f64,
    pub beams: u32,
    /// Falls back to the radio section's `beta_db`.
    pub beta_db: Option<f64>,
}

/// Range of the secondary transmitter's maximum power, milliwatts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepRange {
    pub from_mw: f64,
    pub to_mw: f64,
    pub step_mw: f64,
}

/// One FD link and the range swept over the secondary transmitter's power cap.
///
/// In three-node mode the primary receiver (the AP) is also the secondary
/// transmitter, so the sweep varies the AP's maximum power.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSpecConfig {
    pub mode: FdMode,
    pub primary_tx: LinkNodeConfig,
    pub primary_rx: LinkNodeConfig,
    pub secondary_rx: Option<LinkNodeConfig>,
    /// Primary transmitter grid.
    pub primary_grid_mw: GridMw,
    /// Secondary grid lower bound and step; the upper bound is swept.
    pub secondary_min_mw: f64,
    pub secondary_step_mw: f64,
    pub sweep: SweepRange,
    #[serde(default)]
    pub radio: RadioConfig,
    #[serde(default)]
    pub mac: MacTiming,
    #[serde(default)]
    pub mcs: Vec<McsEntry>,
}

impl LinkSpecConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let c: LinkSpecConfig = toml::from_str(s)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.sweep;
        if !(s.from_mw > 0.0 && s.from_mw <= s.to_mw && s.step_mw > 0.0 && s.to_mw.is_finite()) {
            return Err(Error::Config("sweep needs 0 < from_mw <= to_mw and a positive step".into()));
        }
        if self.secondary_min_mw > s.from_mw {
            return Err(Error::Config("secondary_min_mw exceeds the first sweep point".into()));
        }
        self.spec(s.from_mw, true)?.validate()
    }

    pub fn sweep_points_mw(&self) -> Vec<f64> {
        let s = self.sweep;
        let n = ((s.to_mw - s.from_mw) / s.step_mw + 1e-9).floor() as usize + 1;
        (0..n).map(|k| s.from_mw + k as f64 * s.step_mw).collect()
    }

    fn node(&self, c: &LinkNodeConfig) -> Result<FdNode> {
        Ok(FdNode {
            position: Position::new(c.x, c.y)?,
            antenna: AntennaConfig::new(c.beams)?,
            beta: db_to_linear(c.beta_db.unwrap_or(self.radio.beta_db)),
        })
    }

    /// The link with the secondary power capped at `secondary_max_mw`.
    pub fn spec(&self, secondary_max_mw: f64, ibi_enabled: bool) -> Result<FdLinkSpec> {
        let payload = self.mac.payload_bits as f64;
        let spec = FdLinkSpec {
            mode: self.mode,
            primary_tx: self.node(&self.primary_tx)?,
            primary_rx: self.node(&self.primary_rx)?,
            secondary_rx: self.secondary_rx.as_ref().map(|c| self.node(c)).transpose()?,
            payload_primary_bits: payload,
            payload_secondary_bits: payload,
            primary_power: self.primary_grid_mw.to_grid()?,
            secondary_power: PowerGrid::from_mw(self.secondary_min_mw, secondary_max_mw, self.secondary_step_mw)?,
            overhead_s: self.mac.fd_overhead(self.mode).as_secs_f64(),
            ibi_enabled,
            channel: self.radio.channel()?,
            mcs: if self.mcs.is_empty() { McsTable::default() } else { McsTable::new(self.mcs.clone())? },
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// One point of the sweep. Powers in watts, SINRs in dB, rates in bit/s.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub secondary_max_w: f64,
    pub ibi: bool,
    pub power_control: bool,
    pub p_primary_w: f64,
    pub p_secondary_w: f64,
    /// At the primary receiver.
    pub sinr_primary_db: f64,
    /// At the secondary receiver.
    pub sinr_secondary_db: f64,
    pub mcs_primary: Option<u8>,
    pub mcs_secondary: Option<u8>,
    pub occupation_time_s: Option<f64>,
    pub throughput_bps: Option<f64>,
    pub feasible: bool,
}

fn fixed_power_row(spec: &FdLinkSpec, cap_w: f64) -> Result<SweepRow> {
    let (pt, pr) = (spec.primary_power.max, spec.secondary_power.max);
    let e = evaluate(spec, pt, pr)?;
    let entry = |pos: Option<usize>| pos.map(|p| &spec.mcs.entries()[p]);
    let (a, b) = (entry(e.mcs_primary), entry(e.mcs_secondary));
    let (d, s) = match (a, b) {
        (Some(a), Some(b)) => (
            Some(occupation_time(spec.payload_primary_bits, a.data_rate_bps, spec.payload_secondary_bits, b.data_rate_bps)?),
            Some(link_throughput(spec, a.data_rate_bps, b.data_rate_bps)?),
        ),
        _ => (None, None),
    };
    Ok(SweepRow {
        secondary_max_w: cap_w,
        ibi: spec.ibi_enabled,
        power_control: false,
        p_primary_w: pt,
        p_secondary_w: pr,
        sinr_primary_db: linear_to_db(e.primary.sinr),
        sinr_secondary_db: linear_to_db(e.secondary.sinr),
        mcs_primary: a.map(|m| m.index),
        mcs_secondary: b.map(|m| m.index),
        occupation_time_s: d,
        throughput_bps: s,
        feasible: d.is_some(),
    })
}

fn controlled_row(spec: &FdLinkSpec, cap_w: f64) -> Result<SweepRow> {
    match optimize_powers(spec) {
        Ok(sol) => Ok(SweepRow {
            secondary_max_w: cap_w,
            ibi: spec.ibi_enabled,
            power_control: true,
            p_primary_w: sol.p_primary,
            p_secondary_w: sol.p_secondary,
            sinr_primary_db: linear_to_db(sol.sinr_primary.sinr),
            sinr_secondary_db: linear_to_db(sol.sinr_secondary.sinr),
            mcs_primary: Some(sol.mcs_primary),
            mcs_secondary: Some(sol.mcs_secondary),
            occupation_time_s: Some(sol.occupation_time),
            throughput_bps: Some(sol.throughput),
            feasible: true,
        }),
        Err(Error::Infeasible) => {
            let mut row = fixed_power_row(spec, cap_w)?;
            row.power_control = true;
            row.mcs_primary = None;
            row.mcs_secondary = None;
            row.occupation_time_s = None;
            row.throughput_bps = None;
            row.feasible = false;
            Ok(row)
        }
        Err(e) => Err(e),
    }
}

/// For every cap in the sweep, with and without IBI, with and without power
/// control. Without power control both transmitters use their maximum power;
/// an infeasible power-controlled point reports the maximum-power SINRs.
pub fn powerctl_sweep(config: &LinkSpecConfig) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for ibi in [true, false] {
        for cap in config.sweep_points_mw() {
            let spec = config.spec(cap, ibi)?;
            let cap_w = mw_to_watts(cap);
            rows.push(fixed_power_row(&spec, cap_w)?);
            rows.push(controlled_row(&spec, cap_w)?);
        }
    }
    Ok(rows)
}

pub fn write_sweep_csv<W: Write>(out: W, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const FIG7: &str = include_str!("../../../../configs/fig7_linkspec.toml");

    #[test]
    fn shipped_linkspec_matches_builtin_case() {
        let c = LinkSpecConfig::from_toml_str(FIG7).unwrap();
        for ibi in [true, false] {
            let spec = c.spec(100.0, ibi).unwrap();
            assert_eq!(spec, FdLinkSpec::fig7(ibi));
        }
        assert_eq!(c.sweep_points_mw().len(), 81);
    }

    #[test]
    fn sweep_shape() {
        let c = LinkSpecConfig::from_toml_str(FIG7).unwrap();
        let rows = powerctl_sweep(&c).unwrap();
        assert_eq!(rows.len(), 4 * 81);
        let fixed: Vec<_> = rows.iter().filter(|r| !r.power_control && !r.ibi).collect();
        for w in fixed.windows(2) {
            assert!(w[1].sinr_primary_db <= w[0].sinr_primary_db + 1e-12);
            assert!(w[1].sinr_secondary_db >= w[0].sinr_secondary_db - 1e-12);
        }
    }

    #[test]
    fn rejects_bad_sweep() {
        let bad = FIG7.replace("to_mw = 100.0", "to_mw = 10.0");
        assert!(LinkSpecConfig::from_toml_str(&bad).is_err());
    }
}
