//! Similarity-driven greedy planner.
//!
//! Planning never touches raw data: it works against a belief of per-node,
//! per-partition cardinalities that also prices the union two holdings would
//! aggregate into. The faithful belief is the minhash ledger built once from
//! the initial state; an exact belief (real distinct sets) isolates estimator
//! error from planner behavior.
//!
//! Each phase is chosen greedily: score every candidate transfer one phase
//! ahead (shipping cost now plus the receiver's estimated onward shipment,
//! except for deliveries straight to the partition's destination), pick the
//! cheapest, retire the sender and receiver for this phase, and repeat until
//! no finite candidate remains. Candidate scoring is O(n^2 * |L|) per phase;
//! after a pick only entries of the affected partition touching the two
//! nodes are recomputed.

use std::collections::BTreeSet;

use crate::model::{AggregationPlan, AggregationState, Phase, Transfer};
use crate::sketch::{signature, HashFamily, MinhashSignature, SketchState};
use crate::topology::BandwidthMatrix;
use crate::{Error, NodeId, PartitionId, Result};

/// How the planner believes in cardinalities.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlannerMode {
    /// Minhash sketches: the production configuration.
    Estimates { hash_count: usize, seed: u64 },
    /// Ground-truth distinct sets: isolates estimation error.
    Exact,
}

impl PlannerMode {
    pub fn estimates(seed: u64) -> Self {
        PlannerMode::Estimates {
            hash_count: 100,
            seed,
        }
    }
}

/// Cardinality belief the greedy loop plans against.
pub trait SizeModel {
    fn node_count(&self) -> usize;
    fn partition_count(&self) -> usize;
    /// Believed distinct cardinality of node v's partition-l holding.
    fn card(&self, v: NodeId, l: PartitionId) -> f64;
    /// Believed |X(s) union X(t)| for partition l. At least one of the two
    /// holdings must be believed nonempty.
    fn union_card(&self, s: NodeId, t: NodeId, l: PartitionId) -> f64;
    /// Account for the transfer s -> t of partition l.
    fn record_transfer(&mut self, s: NodeId, t: NodeId, l: PartitionId) -> Result<()>;
}

impl SizeModel for SketchState {
    fn node_count(&self) -> usize {
        SketchState::node_count(self)
    }

    fn partition_count(&self) -> usize {
        SketchState::partition_count(self)
    }

    fn card(&self, v: NodeId, l: PartitionId) -> f64 {
        SketchState::card(self, v, l)
    }

    fn union_card(&self, s: NodeId, t: NodeId, l: PartitionId) -> f64 {
        self.est_card(s, t, l)
            .expect("union_card requires a nonempty side")
    }

    fn record_transfer(&mut self, s: NodeId, t: NodeId, l: PartitionId) -> Result<()> {
        self.update(s, t, l)
    }
}

/// Belief backed by the true distinct key sets.
#[derive(Debug, Clone)]
pub struct ExactSizeModel {
    partition_count: usize,
    sets: Vec<Vec<BTreeSet<u64>>>,
}

impl ExactSizeModel {
    pub fn from_state(state: &AggregationState) -> Self {
        let sets = (0..state.node_count())
            .map(|v| {
                (0..state.partition_count())
                    .map(|l| state.holding(v, l).keys().collect())
                    .collect()
            })
            .collect();
        ExactSizeModel {
            partition_count: state.partition_count(),
            sets,
        }
    }
}

impl SizeModel for ExactSizeModel {
    fn node_count(&self) -> usize {
        self.sets.len()
    }

    fn partition_count(&self) -> usize {
        self.partition_count
    }

    fn card(&self, v: NodeId, l: PartitionId) -> f64 {
        self.sets[v][l].len() as f64
    }

    fn union_card(&self, s: NodeId, t: NodeId, l: PartitionId) -> f64 {
        self.sets[s][l].union(&self.sets[t][l]).count() as f64
    }

    fn record_transfer(&mut self, s: NodeId, t: NodeId, l: PartitionId) -> Result<()> {
        if self.sets[s][l].is_empty() && self.sets[t][l].is_empty() {
            return Err(Error::DegenerateInput(format!(
                "transfer between two empty holdings (nodes {s}, {t}, partition {l})"
            )));
        }
        let moved = std::mem::take(&mut self.sets[s][l]);
        self.sets[t][l].extend(moved);
        Ok(())
    }
}

/// Build the minhash belief from the state's distinct holdings. Run this on
/// pre-aggregated states: the belief tracks distinct cardinalities.
pub fn sketch_belief(state: &AggregationState, hash_count: usize, seed: u64) -> Result<SketchState> {
    let fam = HashFamily::new(hash_count, seed)?;
    let mut cards = Vec::with_capacity(state.node_count());
    let mut sigs = Vec::with_capacity(state.node_count());
    for v in 0..state.node_count() {
        let mut crow = Vec::with_capacity(state.partition_count());
        let mut srow: Vec<MinhashSignature> = Vec::with_capacity(state.partition_count());
        for l in 0..state.partition_count() {
            let holding = state.holding(v, l);
            crow.push(holding.distinct() as f64);
            srow.push(signature(holding.keys(), &fam));
        }
        cards.push(crow);
        sigs.push(srow);
    }
    SketchState::new(cards, sigs)
}

/// One-phase-lookahead score of sending partition l from s to t.
///
/// Infinite when s = t, when s is the partition's destination, when the
/// source is believed empty, or when the receiver is believed empty and is
/// not the destination. Deliveries to the destination cost only the shipment
/// itself; anything else adds the receiver's estimated onward shipment.
pub fn cost_entry<M: SizeModel>(
    belief: &M,
    bw: &BandwidthMatrix,
    mapping: &[NodeId],
    s: NodeId,
    t: NodeId,
    l: PartitionId,
    w: f64,
) -> f64 {
    if s == t || s == mapping[l] {
        return f64::INFINITY;
    }
    let cs = belief.card(s, l);
    if cs == 0.0 {
        return f64::INFINITY;
    }
    let ship = cs * w / bw.get(s, t);
    if t == mapping[l] {
        return ship;
    }
    if belief.card(t, l) == 0.0 {
        return f64::INFINITY;
    }
    ship + belief.union_card(s, t, l) * w / bw.get(s, t)
}

/// Candidate scores for one phase, indexed (partition, source, target).
/// Infinity encodes forbidden pairs.
pub struct CostMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl CostMatrix {
    pub fn build<M: SizeModel>(belief: &M, bw: &BandwidthMatrix, mapping: &[NodeId], w: f64) -> Self {
        let n = belief.node_count();
        let m = belief.partition_count();
        let mut entries = vec![f64::INFINITY; m * n * n];
        for l in 0..m {
            for s in 0..n {
                for t in 0..n {
                    entries[(l * n + s) * n + t] = cost_entry(belief, bw, mapping, s, t, l, w);
                }
            }
        }
        CostMatrix { n, entries }
    }

    pub fn get(&self, s: NodeId, t: NodeId, l: PartitionId) -> f64 {
        self.entries[(l * self.n + s) * self.n + t]
    }

    /// Recompute partition l's entries touching node x; only the cards and
    /// signature of (x, l) cells can have changed.
    fn refresh_node<M: SizeModel>(
        &mut self,
        belief: &M,
        bw: &BandwidthMatrix,
        mapping: &[NodeId],
        w: f64,
        x: NodeId,
        l: PartitionId,
    ) {
        let n = self.n;
        for u in 0..n {
            self.entries[(l * n + x) * n + u] = cost_entry(belief, bw, mapping, x, u, l, w);
            self.entries[(l * n + u) * n + x] = cost_entry(belief, bw, mapping, u, x, l, w);
        }
    }
}

/// Pick one phase greedily. Per pick, the cheapest finite candidate wins with
/// ties broken lexicographically by (partition, receiver, sender); the sender
/// leaves the phase's send pool, the receiver its receive pool, and both
/// leave the partition's pool so neither touches that partition again this
/// phase. Empty result means the belief is already complete.
pub fn select_phase<M: SizeModel>(
    belief: &mut M,
    bw: &BandwidthMatrix,
    mapping: &[NodeId],
    w: f64,
) -> Result<Phase> {
    let n = belief.node_count();
    let m = belief.partition_count();
    let mut can_send = vec![true; n];
    let mut can_recv = vec![true; n];
    let mut in_partition = vec![true; m * n];
    let mut costs = CostMatrix::build(belief, bw, mapping, w);
    let mut phase = Phase::new();

    loop {
        let mut best = f64::INFINITY;
        let mut pick: Option<(NodeId, NodeId, PartitionId)> = None;
        for l in 0..m {
            for t in 0..n {
                if !can_recv[t] || !in_partition[l * n + t] {
                    continue;
                }
                for s in 0..n {
                    if !can_send[s] || !in_partition[l * n + s] {
                        continue;
                    }
                    let c = costs.get(s, t, l);
                    if c < best {
                        best = c;
                        pick = Some((s, t, l));
                    }
                }
            }
        }
        let Some((s, t, l)) = pick else {
            break;
        };
        phase.push(Transfer::new(s, t, l)?);
        belief.record_transfer(s, t, l)?;
        can_send[s] = false;
        can_recv[t] = false;
        in_partition[l * n + s] = false;
        in_partition[l * n + t] = false;
        costs.refresh_node(belief, bw, mapping, w, s, l);
        costs.refresh_node(belief, bw, mapping, w, t, l);
        if can_send.iter().all(|x| !x) || can_recv.iter().all(|x| !x) {
            break;
        }
    }
    Ok(phase)
}

fn belief_complete<M: SizeModel>(belief: &M, mapping: &[NodeId]) -> bool {
    (0..belief.partition_count()).all(|l| {
        (0..belief.node_count()).all(|v| v == mapping[l] || belief.card(v, l) == 0.0)
    })
}

/// Run the greedy loop to completion against a caller-supplied belief.
pub fn plan_from_belief<M: SizeModel>(
    belief: &mut M,
    bw: &BandwidthMatrix,
    mapping: &[NodeId],
    w: f64,
) -> Result<AggregationPlan> {
    let max_phases = belief.node_count() * belief.partition_count() + 1;
    let mut phases = Vec::new();
    while !belief_complete(belief, mapping) {
        let phase = select_phase(belief, bw, mapping, w)?;
        if phase.is_empty() {
            return Err(Error::Planner(
                "no candidate transfer although aggregation is incomplete".into(),
            ));
        }
        phases.push(phase);
        if phases.len() > max_phases {
            return Err(Error::Planner(format!(
                "planning exceeded {max_phases} phases without completing"
            )));
        }
    }
    Ok(AggregationPlan::new(phases))
}

/// Plan the instance in the given mode. The state should already be
/// pre-aggregated; the belief is seeded from its distinct holdings and the
/// measured bandwidth matrix prices every candidate.
pub fn plan_grasp(
    state: &AggregationState,
    bw: &BandwidthMatrix,
    mode: PlannerMode,
) -> Result<AggregationPlan> {
    if bw.node_count() != state.node_count() {
        return Err(Error::Planner(format!(
            "bandwidth matrix covers {} nodes, state has {}",
            bw.node_count(),
            state.node_count()
        )));
    }
    let mapping = state.mapping().to_vec();
    let w = state.tuple_width();
    match mode {
        PlannerMode::Estimates { hash_count, seed } => {
            let mut belief = sketch_belief(state, hash_count, seed)?;
            plan_from_belief(&mut belief, bw, &mapping, w)
        }
        PlannerMode::Exact => {
            let mut belief = ExactSizeModel::from_state(state);
            plan_from_belief(&mut belief, bw, &mapping, w)
        }
    }
}
