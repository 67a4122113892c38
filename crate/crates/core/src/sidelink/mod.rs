//! Simulated radar-to-radar sidelink: network topology, payload codecs,
//! clock-offset delivery and payload bit accounting.

mod delivery;
mod message;
mod replay;
mod stats;

pub use delivery::{deliver, ClockModel, Delivery, MessageBuffer};
pub use message::{
    decode_coop, decode_fed, encode_coop, encode_fed, CoopMessage, FedMessage, Message, MessageKind, BITS_PER_VALUE,
    FED_VALUES_PER_COMPONENT,
};
pub use replay::{read_replay, write_replay, ReplayWriter, WireRecord};
pub use stats::{ratio_to_f64, LinkStats};

use crate::error::{Error, Result};

/// Directed communication graph. An edge `(h, k)` lets radar `k` receive
/// from radar `h`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Topology {
    n_radars: usize,
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
}

impl Topology {
    pub fn new(n_radars: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n_radars == 0 {
            return Err(Error::config("topology needs at least one radar"));
        }
        let mut neighbors = vec![Vec::new(); n_radars];
        for &(h, k) in edges {
            if h >= n_radars || k >= n_radars {
                return Err(Error::config(format!(
                    "edge ({h}, {k}) references a radar outside 0..{n_radars}"
                )));
            }
            if h == k {
                return Err(Error::config(format!("self-loop on radar {h}")));
            }
            neighbors[k].push(h);
        }
        for n in &mut neighbors {
            n.sort_unstable();
            n.dedup();
        }
        let edges = neighbors
            .iter()
            .enumerate()
            .flat_map(|(k, hs)| hs.iter().map(move |&h| (h, k)))
            .collect();
        Ok(Self {
            n_radars,
            edges,
            neighbors,
        })
    }

    pub fn fully_connected(n_radars: usize) -> Result<Self> {
        let edges: Vec<_> = (0..n_radars)
            .flat_map(|h| (0..n_radars).filter(move |&k| k != h).map(move |k| (h, k)))
            .collect();
        Self::new(n_radars, &edges)
    }

    pub fn n_radars(&self) -> usize {
        self.n_radars
    }

    /// Edges sorted by receiver, then sender.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// `N_k`, ascending.
    pub fn neighbors(&self, k: usize) -> &[usize] {
        &self.neighbors[k]
    }
}
