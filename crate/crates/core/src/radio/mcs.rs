use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::units::db_to_linear;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McsEntry {
    pub index: u8,
    pub modulation: String,
    /// Coding rate as `[numerator, denominator]`.
    pub coding_rate: [u32; 2],
    pub data_rate_bps: f64,
    pub sinr_threshold_db: f64,
}

impl McsEntry {
    pub fn sinr_threshold(&self) -> f64 {
        db_to_linear(self.sinr_threshold_db)
    }
}

/// Rate table, sorted by index, strictly increasing in rate and threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<McsEntry>", into = "Vec<McsEntry>")]
pub struct McsTable {
    entries: Vec<McsEntry>,
}

impl TryFrom<Vec<McsEntry>> for McsTable {
    type Error = crate::Error;
    fn try_from(v: Vec<McsEntry>) -> Result<Self> {
        McsTable::new(v)
    }
}

impl From<McsTable> for Vec<McsEntry> {
    fn from(t: McsTable) -> Self {
        t.entries
    }
}

impl Default for McsTable {
    fn default() -> Self {
        let e = |index, modulation: &str, num, den, rate_mbps: f64, thr| McsEntry {
            index,
            modulation: modulation.to_string(),
            coding_rate: [num, den],
            data_rate_bps: rate_mbps * 1e6,
            sinr_threshold_db: thr,
        };
        McsTable {
            entries: vec![
                e(1, "QPSK", 1, 2, 952.0, 5.5),
                e(2, "QPSK", 2, 3, 1904.0, 13.0),
                e(3, "16-QAM", 2, 3, 3807.0, 18.0),
            ],
        }
    }
}

impl McsTable {
    pub fn new(entries: Vec<McsEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(invalid("MCS table is empty"));
        }
        for w in entries.windows(2) {
            if !(w[1].index > w[0].index
                && w[1].data_rate_bps > w[0].data_rate_bps
                && w[1].sinr_threshold_db > w[0].sinr_threshold_db)
            {
                return Err(invalid(format!(
                    "MCS {} -> {} is not strictly increasing in index, rate and threshold",
                    w[0].index, w[1].index
                )));
            }
        }
        if entries.iter().any(|e| !(e.data_rate_bps > 0.0)) {
            return Err(invalid("MCS data rates must be positive"));
        }
        Ok(McsTable { entries })
    }

    pub fn entries(&self) -> &[McsEntry] {
        &self.entries
    }

    pub fn by_index(&self, index: u8) -> Option<&McsEntry> {
        self.entries.iter().find(|e| e.index == index)
    }

    pub fn lowest(&self) -> &McsEntry {
        &self.entries[0]
    }

    /// Highest entry whose threshold the SINR meets; `None` when the frame
    /// cannot be decoded at any rate.
    pub fn mcs_match(&self, sinr: f64) -> Option<&McsEntry> {
        self.entries.iter().rev().find(|e| sinr >= e.sinr_threshold())
    }

    /// Position of `entry` within the table.
    pub fn position(&self, index: u8) -> Option<usize> {
        self.entries.iter().position(|e| e.index == index)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn matches_table_rows() {
        let t = McsTable::default();
        let m = t.mcs_match(db_to_linear(18.0)).unwrap();
        assert_eq!((m.index, m.data_rate_bps), (3, 3807e6));
        let m = t.mcs_match(db_to_linear(12.9)).unwrap();
        assert_eq!((m.index, m.data_rate_bps), (1, 952e6));
        assert!(t.mcs_match(db_to_linear(5.4)).is_none());
        assert_eq!(t.mcs_match(db_to_linear(13.0)).unwrap().index, 2);
    }

    #[test]
    fn rejects_non_monotone_tables() {
        let mut v: Vec<McsEntry> = McsTable::default().into();
        v[2].sinr_threshold_db = 10.0;
        assert!(McsTable::new(v).is_err());
        assert!(McsTable::new(vec![]).is_err());
    }

    proptest! {
        #[test]
        fn rate_is_monotone_in_sinr(a in -10.0f64..30.0, b in -10.0f64..30.0) {
            let t = McsTable::default();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let r = |db: f64| t.mcs_match(db_to_linear(db)).map_or(0.0, |e| e.data_rate_bps);
            prop_assert!(r(lo) <= r(hi));
        }
    }
}
