//! Star-network cluster model and bandwidth matrices.
//!
//! The cluster is a star: every node has one uplink and one downlink to a
//! central hub, so a point-to-point path s -> t is constrained by s's uplink
//! and t's downlink. Planners consume a measured [`BandwidthMatrix`] produced
//! by a simulated benchmark that can distort the true matrix; realized costs
//! always use the true matrix.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::model::{Phase, Transfer};
use crate::{Error, NodeId, Result};

/// Star network: per-node uplink/downlink bandwidth in bytes per time unit.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    uplink_bw: Vec<f64>,
    downlink_bw: Vec<f64>,
}

impl Topology {
    /// Star with per-node uplink and downlink bandwidths. Lengths must agree
    /// and hold at least two nodes; bandwidths must be strictly positive.
    pub fn new(uplink_bw: Vec<f64>, downlink_bw: Vec<f64>) -> Result<Self> {
        if uplink_bw.len() != downlink_bw.len() {
            return Err(Error::InvalidTopology(format!(
                "uplink count {} != downlink count {}",
                uplink_bw.len(),
                downlink_bw.len()
            )));
        }
        if uplink_bw.len() < 2 {
            return Err(Error::InvalidTopology(format!(
                "need at least 2 nodes, got {}",
                uplink_bw.len()
            )));
        }
        for (v, bw) in uplink_bw.iter().chain(downlink_bw.iter()).enumerate() {
            if !bw.is_finite() || *bw <= 0.0 {
                return Err(Error::InvalidTopology(format!(
                    "bandwidth #{v} must be positive and finite, got {bw}"
                )));
            }
        }
        Ok(Topology {
            uplink_bw,
            downlink_bw,
        })
    }

    pub fn node_count(&self) -> usize {
        self.uplink_bw.len()
    }

    pub fn uplink_bw(&self, v: NodeId) -> f64 {
        self.uplink_bw[v]
    }

    pub fn downlink_bw(&self, v: NodeId) -> f64 {
        self.downlink_bw[v]
    }
}

/// Star in which every node has the same uplink and downlink bandwidth.
pub fn make_uniform_star(n: usize, link_bw: f64) -> Result<Topology> {
    Topology::new(vec![link_bw; n], vec![link_bw; n])
}

/// Point-to-point bandwidth estimates B(s -> t). The diagonal is unused.
#[derive(Debug, Clone, PartialEq)]
pub struct BandwidthMatrix {
    n: usize,
    bw: Vec<f64>,
}

impl BandwidthMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n < 2 {
            return Err(Error::InvalidTopology(format!(
                "need at least 2 nodes, got {n}"
            )));
        }
        let mut bw = Vec::with_capacity(n * n);
        for (s, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidTopology(format!(
                    "row {s} has {} entries, want {n}",
                    row.len()
                )));
            }
            for (t, b) in row.iter().enumerate() {
                if s != t && (!b.is_finite() || *b <= 0.0) {
                    return Err(Error::InvalidTopology(format!(
                        "bw[{s}][{t}] must be positive and finite, got {b}"
                    )));
                }
                bw.push(*b);
            }
        }
        Ok(BandwidthMatrix { n, bw })
    }

    /// Unshared path bandwidth min(uplink(s), downlink(t)) for every pair.
    pub fn from_topology(top: &Topology) -> Self {
        let n = top.node_count();
        let mut bw = Vec::with_capacity(n * n);
        for s in 0..n {
            for t in 0..n {
                bw.push(top.uplink_bw(s).min(top.downlink_bw(t)));
            }
        }
        BandwidthMatrix { n, bw }
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn get(&self, s: NodeId, t: NodeId) -> f64 {
        self.bw[s * self.n + t]
    }
}

/// Locality-scaled matrix: entries between nodes in the same group are
/// `intra_factor` times the unshared star bandwidth, emulating fragments
/// co-located on one machine.
pub fn pairwise_bandwidth(
    top: &Topology,
    groups: &[usize],
    intra_factor: f64,
) -> Result<BandwidthMatrix> {
    let n = top.node_count();
    if groups.len() != n {
        return Err(Error::InvalidTopology(format!(
            "group map covers {} nodes, topology has {n}",
            groups.len()
        )));
    }
    if !intra_factor.is_finite() || intra_factor < 1.0 {
        return Err(Error::InvalidTopology(format!(
            "intra_factor must be >= 1, got {intra_factor}"
        )));
    }
    let mut rows = vec![vec![0.0; n]; n];
    for s in 0..n {
        for t in 0..n {
            let base = top.uplink_bw(s).min(top.downlink_bw(t));
            rows[s][t] = if s != t && groups[s] == groups[t] {
                base * intra_factor
            } else {
                base
            };
        }
    }
    BandwidthMatrix::from_rows(rows)
}

/// Distortion applied by the simulated bandwidth benchmark.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseSpec {
    /// Measured matrix equals the true matrix.
    #[default]
    None,
    /// Every entry scaled by (1 - percent/100).
    Underestimate { percent: f64 },
    /// Each entry independently scaled by a uniform draw from
    /// [1 - percent/100, 1], reproducible from the seed.
    PerEntry { percent: f64 },
}

impl NoiseSpec {
    fn percent(&self) -> f64 {
        match self {
            NoiseSpec::None => 0.0,
            NoiseSpec::Underestimate { percent } | NoiseSpec::PerEntry { percent } => *percent,
        }
    }
}

/// Produce the "measured" matrix the planner will trust. Deterministic for a
/// fixed (matrix, noise, seed); entries stay positive because p < 100.
pub fn simulate_benchmark(
    true_bw: &BandwidthMatrix,
    noise: NoiseSpec,
    seed: u64,
) -> Result<BandwidthMatrix> {
    let p = noise.percent();
    if !p.is_finite() || !(0.0..100.0).contains(&p) {
        return Err(Error::InvalidTopology(format!(
            "noise percent must be in [0, 100), got {p}"
        )));
    }
    let n = true_bw.node_count();
    let mut out = true_bw.clone();
    match noise {
        NoiseSpec::None => {}
        NoiseSpec::Underestimate { .. } => {
            let scale = 1.0 - p / 100.0;
            for e in out.bw.iter_mut() {
                *e *= scale;
            }
        }
        NoiseSpec::PerEntry { .. } => {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let lo = 1.0 - p / 100.0;
            for s in 0..n {
                for t in 0..n {
                    // Draw for every pair, diagonal included, so the stream
                    // position depends only on (s, t) and not on matrix content.
                    let factor = rng.random_range(lo..=1.0);
                    if s != t {
                        out.bw[s * n + t] = true_bw.get(s, t) * factor;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Link-shared bandwidth of the transfer s -> t within a concurrent phase:
/// min(uplink(s)/d_o(s), downlink(t)/d_i(t)) where the degrees count phase
/// transfers sharing s's uplink and t's downlink. Plan-validation utility;
/// planner-produced phases always have both degrees equal to one.
pub fn effective_bandwidth(
    top: &Topology,
    phase: &Phase,
    s: NodeId,
    t: NodeId,
) -> Result<f64> {
    if !phase
        .iter()
        .any(|tr: &Transfer| tr.source == s && tr.dest == t)
    {
        return Err(Error::InvalidTopology(format!(
            "transfer {s} -> {t} is not part of the phase"
        )));
    }
    let d_o = phase.iter().filter(|tr| tr.source == s).count() as f64;
    let d_i = phase.iter().filter(|tr| tr.dest == t).count() as f64;
    Ok((top.uplink_bw(s) / d_o).min(top.downlink_bw(t) / d_i))
}
