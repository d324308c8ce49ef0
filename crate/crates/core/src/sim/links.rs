//! Per-run table of antenna and path gains between every node pair.

use super::config::NodeSpec;
use crate::error::Result;
use crate::radio::{path_gain, rx_gain, tx_gain, BeamRole, ChannelParams, SinrBreakdown};

/// A transmission as seen by the interference calculation.
#[derive(Clone, Copy, Debug)]
pub(crate) struct TxView {
    pub src: usize,
    pub toward: usize,
    pub power: f64,
    pub link: u64,
}

pub(crate) struct LinkCache {
    n: usize,
    path: Vec<f64>,
    tx: Vec<f64>,
    rx: Vec<f64>,
    noise: f64,
}

impl LinkCache {
    /// `pattern == n` selects quasi-omni reception.
    pub fn new(nodes: &[NodeSpec], channel: &ChannelParams) -> Result<Self> {
        let n = nodes.len();
        let mut path = vec![0.0; n * n];
        let mut tx = vec![0.0; n * n * n];
        let mut rx = vec![1.0; n * (n + 1) * n];
        for i in 0..n {
            for k in 0..n {
                if i != k {
                    path[i * n + k] = path_gain(channel, &nodes[i].position, &nodes[k].position)?;
                }
            }
        }
        for i in 0..n {
            let a = &nodes[i];
            for j in (0..n).filter(|&j| j != i) {
                let tb = a.antenna.beam_toward(&a.position, &nodes[j].position, BeamRole::Transmit)?;
                let rb = a.antenna.beam_toward(&a.position, &nodes[j].position, BeamRole::Receive)?;
                for k in (0..n).filter(|&k| k != i) {
                    tx[(i * n + j) * n + k] = tx_gain(&a.antenna, &tb, &nodes[k].position, &a.position)?;
                    rx[(i * (n + 1) + j) * n + k] = rx_gain(&a.antenna, &rb, &nodes[k].position, &a.position)?;
                }
            }
        }
        Ok(LinkCache { n, path, tx, rx, noise: channel.n0 })
    }

    pub fn quasi_omni(&self) -> usize {
        self.n
    }

    /// Power received at `at` (listening with `pattern`) from `t`.
    pub fn power(&self, t: &TxView, at: usize, pattern: usize) -> f64 {
        let n = self.n;
        t.power * self.tx[(t.src * n + t.toward) * n + at] * self.rx[(at * (n + 1) + pattern) * n + t.src] * self.path[t.src * n + at]
    }

    /// Same accounting rules as [`crate::radio::sinr`].
    #[allow(clippy::too_many_arguments)]
    pub fn sinr<'a, I>(&self, at: usize, pattern: usize, own_tx: Option<f64>, beta: f64, wanted: &TxView, others: I, ibi_enabled: bool) -> SinrBreakdown
    where
        I: IntoIterator<Item = &'a TxView>,
    {
        let signal = self.power(wanted, at, pattern);
        let residual_si = own_tx.map_or(0.0, |p| p * beta);
        let mut ibi = 0.0;
        let mut co_channel = 0.0;
        for o in others {
            if o.src == at || o.src == wanted.src {
                continue;
            }
            let p = self.power(o, at, pattern);
            if o.link == wanted.link {
                if ibi_enabled {
                    ibi += p;
                }
            } else {
                co_channel += p;
            }
        }
        let sinr = signal / (residual_si + ibi + co_channel + self.noise);
        SinrBreakdown { signal, residual_si, ibi, co_channel, noise: self.noise, sinr }
    }
}
