//! Transmit power control for a single full-duplex link.
//!
//! The link's channel occupation time is the longer of the two DATA airtimes;
//! minimising it over a discrete power grid maximises the link throughput.
//! [`optimize_powers`] walks the grid the way the power control algorithm
//! does (primary power descending, rate classes between the extremes reachable
//! by the secondary's power), while [`brute_force_oracle`] enumerates every
//! pair. Both break ties identically.

mod optimize;
mod spec;

pub use optimize::{brute_force_oracle, evaluate, optimize_powers, LinkEvaluation, PowerSolution};
pub use spec::{FdLinkSpec, FdMode, FdNode, PowerGrid};

use crate::error::{invalid, Result};

/// `D = max(L_t / r_t, L_r / r_r)`. A zero payload contributes nothing, so a
/// one-way link reduces to `L_t / r_t`.
pub fn occupation_time(l_t: f64, r_t: f64, l_r: f64, r_r: f64) -> Result<f64> {
    let side = |l: f64, r: f64| -> Result<f64> {
        if l < 0.0 {
            return Err(invalid(format!("negative payload {l}")));
        }
        if l == 0.0 {
            return Ok(0.0);
        }
        if !(r > 0.0) {
            return Err(invalid(format!("rate must be positive, got {r}")));
        }
        Ok(l / r)
    };
    Ok(side(l_t, r_t)?.max(side(l_r, r_r)?))
}

/// `S = (L_t + L_r) / (T_overhead + D)`.
pub fn link_throughput(spec: &FdLinkSpec, r_t: f64, r_r: f64) -> Result<f64> {
    let d = occupation_time(spec.payload_primary_bits, r_t, spec.payload_secondary_bits, r_r)?;
    Ok(throughput_from(spec, d))
}

pub(crate) fn throughput_from(spec: &FdLinkSpec, d: f64) -> f64 {
    (spec.payload_primary_bits + spec.payload_secondary_bits) / (spec.overhead_s + d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn occupation_time_examples() {
        assert_relative_eq!(occupation_time(64e3, 1904e6, 64e3, 1904e6).unwrap(), 33.613_445_378e-6, max_relative = 1e-9);
        assert_relative_eq!(occupation_time(64e3, 3807e6, 64e3, 952e6).unwrap(), 67.226_890_756e-6, max_relative = 1e-9);
        assert_relative_eq!(occupation_time(64e3, 1904e6, 0.0, 0.0).unwrap(), 64e3 / 1904e6, max_relative = 1e-15);
        assert!(occupation_time(64e3, 0.0, 64e3, 1e9).is_err());
    }

    #[test]
    fn throughput_examples() {
        let mut spec = FdLinkSpec::fig7(true);
        spec.payload_primary_bits = 64e3;
        spec.payload_secondary_bits = 64e3;
        spec.overhead_s = 0.0;
        assert_relative_eq!(link_throughput(&spec, 1904e6, 1904e6).unwrap(), 3808e6, max_relative = 1e-12);
        spec.overhead_s = 64e3 / 1904e6;
        assert_relative_eq!(link_throughput(&spec, 1904e6, 1904e6).unwrap(), 1904e6, max_relative = 1e-12);
        spec.overhead_s = 0.0;
        assert_relative_eq!(link_throughput(&spec, 3807e6, 952e6).unwrap(), 1904e6, max_relative = 1e-12);
    }
}
