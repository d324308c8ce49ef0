use std::f64::consts::TAU;

use crate::des::{derive_seed, RngStream, TOPOLOGY_STREAM};
use crate::error::{invalid, Result};
use crate::radio::{AntennaConfig, BeamRole, Position};

/// Nodes closer than this are treated as coincident and redrawn.
pub const MIN_SEPARATION_M: f64 = 0.1;
const MAX_REDRAWS: usize = 10_000;

/// Node placement plus the beam each node uses toward every other node.
#[derive(Clone, Debug, PartialEq)]
pub struct Topology {
    pub positions: Vec<Position>,
    pub antennas: Vec<AntennaConfig>,
    /// `beams[i][j]`: index of node i's beam toward node j (`None` on the diagonal).
    pub beams: Vec<Vec<Option<u32>>>,
}

impl Topology {
    pub fn from_positions(positions: Vec<Position>, ap: AntennaConfig, user: AntennaConfig) -> Result<Self> {
        if positions.len() < 2 {
            return Err(invalid("a topology needs the AP and at least one user"));
        }
        for (i, a) in positions.iter().enumerate() {
            for b in &positions[i + 1..] {
                if a.distance(b) == 0.0 {
                    return Err(invalid(format!("node {i} shares its position with another node")));
                }
            }
        }
        let antennas: Vec<AntennaConfig> = (0..positions.len()).map(|i| if i == 0 { ap } else { user }).collect();
        let mut beams = vec![vec![None; positions.len()]; positions.len()];
        for (i, row) in beams.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                if i != j {
                    let b = antennas[i].beam_toward(&positions[i], &positions[j], BeamRole::Transmit)?;
                    *cell = Some(antennas[i].beam_index_toward(b.boresight()));
                }
            }
        }
        Ok(Topology { positions, antennas, beams })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// AP at the origin, `n - 1` users uniform over the disc of `radius` meters.
pub fn generate_topology(n: usize, radius: f64, seed: u64, ap: AntennaConfig, user: AntennaConfig) -> Result<Topology> {
    if n < 2 {
        return Err(invalid("a topology needs the AP and at least one user"));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(invalid("disc radius must be positive"));
    }
    let mut rng = RngStream::new(derive_seed(seed, n as u64), TOPOLOGY_STREAM);
    let mut positions = vec![Position::ORIGIN];
    let mut draws = 0;
    while positions.len() < n {
        draws += 1;
        if draws > MAX_REDRAWS {
            return Err(invalid(format!("could not place {n} separated nodes in a {radius} m disc")));
        }
        let r = radius * rng.uniform_f64().sqrt();
        let phi = TAU * rng.uniform_f64();
        let p = Position::new(r * phi.cos(), r * phi.sin())?;
        if positions.iter().all(|q| q.distance(&p) >= MIN_SEPARATION_M) {
            positions.push(p);
        }
    }
    Topology::from_positions(positions, ap, user)
}
