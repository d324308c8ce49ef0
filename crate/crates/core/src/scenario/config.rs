use std::path::Path;

use serde::{Deserialize, Serialize};

use super::topology::{generate_topology, Topology};
use crate::des::SimTime;
use crate::error::{Error, Result};
use crate::mac::MacTiming;
use crate::power::PowerGrid;
use crate::radio::{AntennaConfig, ChannelParams, McsEntry, McsTable, Position};
use crate::sim::{NodeSpec, ProtocolVariant, SimParams, SimSetup, TrafficConfig};
use crate::units::{db_to_linear, dbm_to_watts};

/// Propagation and detection constants in engineering units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadioConfig {
    pub g0_db: f64,
    pub alpha: f64,
    pub c0_per_m: f64,
    pub noise_dbm: f64,
    pub beta_db: f64,
    /// Per-node overrides of `beta_db`, indexed by node id (AP first).
    pub beta_db_per_node: Vec<f64>,
    pub cca_dbm: f64,
    pub control_sinr_db: f64,
}

impl Default for RadioConfig {
    fn default() -> Self {
        RadioConfig {
            g0_db: -68.0,
            alpha: 2.0,
            c0_per_m: 0.0037,
            noise_dbm: -90.0,
            beta_db: -85.0,
            beta_db_per_node: Vec::new(),
            cca_dbm: -68.0,
            control_sinr_db: 5.5,
        }
    }
}

impl RadioConfig {
    pub fn channel(&self) -> Result<ChannelParams> {
        let c = ChannelParams {
            g0: db_to_linear(self.g0_db),
            alpha: self.alpha,
            c0: self.c0_per_m,
            n0: dbm_to_watts(self.noise_dbm),
        };
        c.validate()?;
        Ok(c)
    }

    pub fn beta(&self, node: usize) -> f64 {
        db_to_linear(self.beta_db_per_node.get(node).copied().unwrap_or(self.beta_db))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TopologyConfig {
    /// AP at the centre, users uniform in the disc.
    Disc { radius_m: f64 },
    /// Fixed coordinates, AP first. `node_counts` must equal their number.
    Explicit { positions: Vec<[f64; 2]> },
}

impl Default for TopologyConfig {
    fn default() -> Self {
        TopologyConfig::Disc { radius_m: 10.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AntennaSection {
    pub ap_beams: u32,
    pub user_beams: u32,
}

impl Default for AntennaSection {
    fn default() -> Self {
        AntennaSection { ap_beams: 12, user_beams: 12 }
    }
}

/// Power grid in milliwatts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridMw {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl GridMw {
    pub fn to_grid(self) -> Result<PowerGrid> {
        PowerGrid::from_mw(self.min, self.max, self.step)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerSection {
    pub ap_tx_dbm: f64,
    pub user_tx_dbm: f64,
    pub ap_grid_mw: GridMw,
    pub user_grid_mw: GridMw,
}

impl Default for PowerSection {
    fn default() -> Self {
        PowerSection {
            ap_tx_dbm: 10.0,
            user_tx_dbm: 10.0,
            ap_grid_mw: GridMw { min: 1.0, max: 100.0, step: 1.0 },
            user_grid_mw: GridMw { min: 1.0, max: 20.0, step: 1.0 },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolSection {
    pub data_mcs: u8,
    pub adaptive_mcs: bool,
    /// Overrides the variant's default.
    pub busy_tones: Option<bool>,
    pub power_control: bool,
    pub ibi: bool,
}

impl Default for ProtocolSection {
    fn default() -> Self {
        ProtocolSection { data_mcs: 2, adaptive_mcs: false, busy_tones: None, power_control: false, ibi: true }
    }
}

/// A batch of simulations: every variant at every node count, replicated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub node_counts: Vec<usize>,
    pub variants: Vec<ProtocolVariant>,
    pub duration_s: f64,
    pub drain_ms: f64,
    pub replications: u32,
    pub seed: u64,
    pub topology: TopologyConfig,
    pub antenna: AntennaSection,
    pub power: PowerSection,
    pub radio: RadioConfig,
    pub protocol: ProtocolSection,
    pub traffic: TrafficConfig,
    pub mac: MacTiming,
    /// Replaces the default rate table when non-empty.
    pub mcs: Vec<McsEntry>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            name: "scenario".into(),
            node_counts: vec![10],
            variants: ProtocolVariant::ALL.to_vec(),
            duration_s: 1.0,
            drain_ms: 5.0,
            replications: 10,
            seed: 1,
            topology: TopologyConfig::default(),
            antenna: AntennaSection::default(),
            power: PowerSection::default(),
            radio: RadioConfig::default(),
            protocol: ProtocolSection::default(),
            traffic: TrafficConfig::default(),
            mac: MacTiming::default(),
            mcs: Vec::new(),
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let c: ScenarioConfig = toml::from_str(s)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn mcs_table(&self) -> Result<McsTable> {
        if self.mcs.is_empty() {
            Ok(McsTable::default())
        } else {
            McsTable::new(self.mcs.clone())
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.node_counts.is_empty() || self.node_counts.iter().any(|&n| n < 2) {
            return bad("node_counts must be non-empty and every count at least 2".into());
        }
        if self.variants.is_empty() {
            return bad("at least one protocol variant is required".into());
        }
        if !(self.duration_s >= 0.0 && self.duration_s.is_finite()) || !(self.drain_ms >= 0.0 && self.drain_ms.is_finite()) {
            return bad("duration_s and drain_ms must be finite and non-negative".into());
        }
        if self.replications == 0 {
            return bad("replications must be at least 1".into());
        }
        match &self.topology {
            TopologyConfig::Disc { radius_m } if !(*radius_m > 0.0) => return bad("disc radius must be positive".into()),
            TopologyConfig::Explicit { positions } if self.node_counts.iter().any(|&n| n != positions.len()) => {
                return bad("explicit topologies need node_counts equal to the number of positions".into())
            }
            _ => {}
        }
        AntennaConfig::new(self.antenna.ap_beams)?;
        AntennaConfig::new(self.antenna.user_beams)?;
        self.power.ap_grid_mw.to_grid()?;
        self.power.user_grid_mw.to_grid()?;
        self.radio.channel()?;
        let mcs = self.mcs_table()?;
        if !self.protocol.adaptive_mcs && mcs.by_index(self.protocol.data_mcs).is_none() {
            return bad(format!("data_mcs {} is not in the rate table", self.protocol.data_mcs));
        }
        let max_n = *self.node_counts.iter().max().expect("non-empty");
        if self.radio.beta_db_per_node.len() > max_n {
            return bad("beta_db_per_node lists more nodes than any run has".into());
        }
        self.params(ProtocolVariant::Dfdmac, 0)?.validate()?;
        Ok(())
    }

    /// Node placement for replication-specific seed `topology_seed`.
    pub fn topology(&self, n: usize, topology_seed: u64) -> Result<Topology> {
        let ap = AntennaConfig::new(self.antenna.ap_beams)?;
        let user = AntennaConfig::new(self.antenna.user_beams)?;
        match &self.topology {
            TopologyConfig::Disc { radius_m } => generate_topology(n, *radius_m, topology_seed, ap, user),
            TopologyConfig::Explicit { positions } => {
                let ps = positions.iter().map(|&[x, y]| Position::new(x, y)).collect::<Result<Vec<_>>>()?;
                Topology::from_positions(ps, ap, user)
            }
        }
    }

    pub fn params(&self, variant: ProtocolVariant, seed: u64) -> Result<SimParams> {
        let mut p = SimParams::new(variant);
        p.busy_tones = self.protocol.busy_tones.unwrap_or(variant.default_busy_tones());
        p.power_control = self.protocol.power_control;
        p.ibi = self.protocol.ibi;
        p.timing = self.mac;
        p.channel = self.radio.channel()?;
        p.mcs = self.mcs_table()?;
        p.data_mcs = self.protocol.data_mcs;
        p.adaptive_mcs = self.protocol.adaptive_mcs;
        p.cca_threshold = dbm_to_watts(self.radio.cca_dbm);
        p.control_threshold = db_to_linear(self.radio.control_sinr_db);
        p.traffic = self.traffic;
        p.duration = SimTime::from_secs_ceil(self.duration_s);
        p.drain = SimTime::from_secs_ceil(self.drain_ms * 1e-3);
        p.seed = seed;
        Ok(p)
    }

    pub fn setup(&self, topology: &Topology, variant: ProtocolVariant, seed: u64) -> Result<SimSetup> {
        let ap_grid = self.power.ap_grid_mw.to_grid()?;
        let user_grid = self.power.user_grid_mw.to_grid()?;
        let nodes = topology
            .positions
            .iter()
            .enumerate()
            .map(|(i, &position)| NodeSpec {
                position,
                antenna: topology.antennas[i],
                tx_power: dbm_to_watts(if i == 0 { self.power.ap_tx_dbm } else { self.power.user_tx_dbm }),
                power_grid: if i == 0 { ap_grid } else { user_grid },
                beta: self.radio.beta(i),
            })
            .collect();
        Ok(SimSetup { params: self.params(variant, seed)?, nodes })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_setup() {
        let c = ScenarioConfig::from_toml_str("node_counts = [5, 10]").unwrap();
        assert_eq!(c.variants.len(), 3);
        assert_eq!(c.replications, 10);
        assert_eq!(c.duration_s, 1.0);
        assert_eq!(c.mac, MacTiming::default());
        let p = c.params(ProtocolVariant::AyWithoutBt, 3).unwrap();
        assert!(!p.busy_tones);
        assert_eq!(p.duration, SimTime::from_millis(1000));
    }

    #[test]
    fn parses_sections() {
        let c = ScenarioConfig::from_toml_str(
            r#"
            node_counts = [3]
            variants = ["dfdmac"]
            [topology]
            kind = "explicit"
            positions = [[0.0, 0.0], [5.0, 0.0], [0.0, 5.0]]
            [traffic]
            model = "poisson"
            packets_per_second = 1000.0
            downlink = false
            [protocol]
            busy_tones = false
            "#,
        )
        .unwrap();
        let topo = c.topology(3, 0).unwrap();
        let s = c.setup(&topo, ProtocolVariant::Dfdmac, 9).unwrap();
        assert!(!s.params.busy_tones);
        assert!(!s.params.traffic.downlink);
        assert_eq!(s.nodes[1].position, Position::new(5.0, 0.0).unwrap());
    }

    #[test]
    fn rejects_invalid_configs() {
        for bad in [
            "node_counts = [1]",
            "node_counts = []",
            "replications = 0",
            "duration_s = -1.0",
            "variants = []",
            "[protocol]\ndata_mcs = 7",
            "unknown_key = 3",
            "[topology]\nkind = \"explicit\"\npositions = [[0.0, 0.0], [1.0, 1.0]]",
        ] {
            assert!(ScenarioConfig::from_toml_str(bad).is_err(), "{bad}");
        }
    }
}
