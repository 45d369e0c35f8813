//! Ground-truth aggregation state and the network cost model.
//!
//! State: every node holds one key multiset per partition, and every
//! partition has a mapped destination node. A plan is an ordered list of
//! phases; each phase is a set of concurrent transfers in which a node sends
//! its entire current holding of one partition to one receiver. A phase costs
//! the slowest of its transfers, a plan costs the sum of its phases, and
//! aggregation is complete when only destinations hold data.

use std::collections::{BTreeMap, BTreeSet};

use crate::topology::BandwidthMatrix;
use crate::{Error, NodeId, PartitionId, Result};

/// Keys with multiplicities. Raw scan output can hold repeated keys; any
/// aggregation step collapses every multiplicity to one.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KeyMultiset {
    counts: BTreeMap<u64, u64>,
}

impl KeyMultiset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_keys(keys: impl IntoIterator<Item = u64>) -> Self {
        let mut m = Self::new();
        for k in keys {
            m.insert(k, 1);
        }
        m
    }

    pub fn insert(&mut self, key: u64, multiplicity: u64) {
        if multiplicity > 0 {
            *self.counts.entry(key).or_insert(0) += multiplicity;
        }
    }

    /// Total tuple count, multiplicities included.
    pub fn tuples(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn distinct(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn keys(&self) -> impl Iterator<Item = u64> + '_ {
        self.counts.keys().copied()
    }

    pub fn multiplicity(&self, key: u64) -> u64 {
        self.counts.get(&key).copied().unwrap_or(0)
    }

    /// One tuple per distinct key: the result of aggregating this multiset.
    pub fn collapsed(&self) -> KeyMultiset {
        KeyMultiset {
            counts: self.counts.keys().map(|&k| (k, 1)).collect(),
        }
    }
}

/// Cluster-wide holdings plus the partition-to-destination mapping and the
/// tuple width w (bytes per tuple) used by the cost model.
#[derive(Debug, Clone)]
pub struct AggregationState {
    data: Vec<Vec<KeyMultiset>>,
    mapping: Vec<NodeId>,
    tuple_width: f64,
}

impl AggregationState {
    pub fn new(data: Vec<Vec<KeyMultiset>>, mapping: Vec<NodeId>, tuple_width: f64) -> Result<Self> {
        let node_count = data.len();
        if node_count < 2 {
            return Err(Error::InvalidState(format!(
                "need at least 2 nodes, got {node_count}"
            )));
        }
        let partition_count = mapping.len();
        if partition_count == 0 {
            return Err(Error::InvalidState("no partitions".into()));
        }
        for row in &data {
            if row.len() != partition_count {
                return Err(Error::InvalidState(format!(
                    "node rows must have {partition_count} partitions, got {}",
                    row.len()
                )));
            }
        }
        for (l, &dest) in mapping.iter().enumerate() {
            if dest >= node_count {
                return Err(Error::InvalidState(format!(
                    "partition {l} maps to node {dest}, cluster has {node_count}"
                )));
            }
        }
        if !tuple_width.is_finite() || tuple_width <= 0.0 {
            return Err(Error::InvalidState(format!(
                "tuple width must be positive, got {tuple_width}"
            )));
        }
        Ok(AggregationState {
            data,
            mapping,
            tuple_width,
        })
    }

    pub fn node_count(&self) -> usize {
        self.data.len()
    }

    pub fn partition_count(&self) -> usize {
        self.mapping.len()
    }

    pub fn mapping(&self) -> &[NodeId] {
        &self.mapping
    }

    pub fn destination(&self, l: PartitionId) -> NodeId {
        self.mapping[l]
    }

    /// The single destination if every partition maps to the same node.
    pub fn all_to_one_destination(&self) -> Option<NodeId> {
        let first = self.mapping[0];
        self.mapping.iter().all(|&d| d == first).then_some(first)
    }

    pub fn tuple_width(&self) -> f64 {
        self.tuple_width
    }

    pub fn holding(&self, v: NodeId, l: PartitionId) -> &KeyMultiset {
        &self.data[v][l]
    }

    /// Tuples node v holds for partition l, multiplicities included.
    pub fn tuples(&self, v: NodeId, l: PartitionId) -> u64 {
        self.data[v][l].tuples()
    }

    pub fn total_tuples(&self) -> u64 {
        self.data
            .iter()
            .flat_map(|row| row.iter().map(KeyMultiset::tuples))
            .sum()
    }

    /// All partitions aggregated at their destinations: no other node holds
    /// any data.
    pub fn is_complete(&self) -> bool {
        (0..self.partition_count()).all(|l| {
            (0..self.node_count()).all(|v| v == self.mapping[l] || self.data[v][l].is_empty())
        })
    }

    /// Distinct keys of partition l across the whole cluster. Invariant under
    /// phase application: keys are never lost or invented.
    pub fn distinct_union(&self, l: PartitionId) -> BTreeSet<u64> {
        let mut set = BTreeSet::new();
        for row in &self.data {
            set.extend(row[l].keys());
        }
        set
    }

    /// Local pre-aggregation everywhere: every multiplicity collapses to one.
    pub fn collapse_multiplicities(&self) -> AggregationState {
        AggregationState {
            data: self
                .data
                .iter()
                .map(|row| row.iter().map(KeyMultiset::collapsed).collect())
                .collect(),
            mapping: self.mapping.clone(),
            tuple_width: self.tuple_width,
        }
    }
}

/// One point-to-point shipment of a whole partition holding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct Transfer {
    pub source: NodeId,
    pub dest: NodeId,
    pub partition: PartitionId,
}

impl Transfer {
    pub fn new(source: NodeId, dest: NodeId, partition: PartitionId) -> Result<Self> {
        if source == dest {
            return Err(Error::PlanViolation(format!(
                "transfer source and destination are both node {source}"
            )));
        }
        Ok(Transfer {
            source,
            dest,
            partition,
        })
    }
}

/// Concurrent transfers executed together; the phase ends when the slowest
/// finishes.
pub type Phase = Vec<Transfer>;

#[derive(Debug, Clone, Default)]
pub struct AggregationPlan {
    pub phases: Vec<Phase>,
}

impl AggregationPlan {
    pub fn new(phases: Vec<Phase>) -> Self {
        AggregationPlan { phases }
    }

    pub fn phase_count(&self) -> usize {
        self.phases.len()
    }

    pub fn transfer_count(&self) -> usize {
        self.phases.iter().map(Vec::len).sum()
    }
}

/// Why a phase is illegal against a given state.
fn check_phase(state: &AggregationState, phase: &Phase) -> Result<()> {
    let n = state.node_count();
    let mut sends: Vec<Option<PartitionId>> = vec![None; n];
    let mut recvs: Vec<Option<PartitionId>> = vec![None; n];
    for tr in phase {
        if tr.source == tr.dest {
            return Err(Error::PlanViolation(format!(
                "node {} sends to itself",
                tr.source
            )));
        }
        if tr.source >= n || tr.dest >= n || tr.partition >= state.partition_count() {
            return Err(Error::PlanViolation(format!(
                "transfer {}->{} partition {} is out of range",
                tr.source, tr.dest, tr.partition
            )));
        }
        if sends[tr.source].is_some() {
            return Err(Error::PlanViolation(format!(
                "node {} sends twice in one phase",
                tr.source
            )));
        }
        if recvs[tr.dest].is_some() {
            return Err(Error::PlanViolation(format!(
                "node {} receives twice in one phase",
                tr.dest
            )));
        }
        sends[tr.source] = Some(tr.partition);
        recvs[tr.dest] = Some(tr.partition);
        let dest_of_l = state.destination(tr.partition);
        if state.holding(tr.source, tr.partition).is_empty() && tr.dest != dest_of_l {
            return Err(Error::PlanViolation(format!(
                "node {} sends empty partition {} to non-destination {}",
                tr.source, tr.partition, tr.dest
            )));
        }
        if state.holding(tr.dest, tr.partition).is_empty() && tr.dest != dest_of_l {
            return Err(Error::PlanViolation(format!(
                "node {} receives partition {} while holding none of it and not being its destination",
                tr.dest, tr.partition
            )));
        }
    }
    for v in 0..n {
        if let (Some(ls), Some(lr)) = (sends[v], recvs[v]) {
            if ls == lr {
                return Err(Error::PlanViolation(format!(
                    "node {v} both sends and receives partition {ls} in one phase"
                )));
            }
        }
    }
    Ok(())
}

/// Execute one phase: each source's partition holding moves out whole; each
/// receiver aggregates what it got with what it had (one tuple per distinct
/// key afterwards). All transfers read the pre-phase state.
pub fn apply_phase(state: &mut AggregationState, phase: &Phase) -> Result<()> {
    check_phase(state, phase)?;
    let mut moved: Vec<(NodeId, PartitionId, KeyMultiset)> = Vec::with_capacity(phase.len());
    for tr in phase {
        let payload = std::mem::take(&mut state.data[tr.source][tr.partition]);
        moved.push((tr.dest, tr.partition, payload));
    }
    for (dest, l, payload) in moved {
        let keys: BTreeSet<u64> = state.data[dest][l]
            .keys()
            .chain(payload.keys())
            .collect();
        state.data[dest][l] = KeyMultiset::from_keys(keys);
    }
    Ok(())
}

/// Time to move `tuples` tuples of `w` bytes over a `bw` bytes-per-unit link.
pub fn transfer_cost(tuples: f64, w: f64, bw: f64) -> Result<f64> {
    if !bw.is_finite() || bw <= 0.0 {
        return Err(Error::InvalidState(format!(
            "bandwidth must be positive, got {bw}"
        )));
    }
    Ok(tuples * w / bw)
}

/// Cost of the slowest transfer in the phase, evaluated on pre-phase data.
pub fn phase_cost(state: &AggregationState, phase: &Phase, bw: &BandwidthMatrix) -> Result<f64> {
    check_phase(state, phase)?;
    let mut worst = 0.0f64;
    for tr in phase {
        let tuples = state.tuples(tr.source, tr.partition) as f64;
        let c = transfer_cost(tuples, state.tuple_width(), bw.get(tr.source, tr.dest))?;
        worst = worst.max(c);
    }
    Ok(worst)
}

/// Full simulation record of one plan execution.
#[derive(Debug, Clone)]
pub struct PlanCost {
    pub total: f64,
    pub per_phase: Vec<f64>,
    pub final_state: AggregationState,
    /// Tuples received by each node across all transfers.
    pub received: Vec<u64>,
    /// Tuples received by each node on transfers for partitions mapped to it.
    pub dest_received: Vec<u64>,
}

impl PlanCost {
    /// Tuples that crossed a mapped destination's downlink, summed.
    pub fn dest_tuples(&self) -> u64 {
        self.dest_received.iter().sum()
    }
}

/// Apply the plan phase by phase, summing phase costs. The first invalid
/// phase aborts with its diagnostic.
pub fn plan_cost(
    state: &AggregationState,
    plan: &AggregationPlan,
    bw: &BandwidthMatrix,
) -> Result<PlanCost> {
    let mut cur = state.clone();
    let mut per_phase = Vec::with_capacity(plan.phases.len());
    let mut received = vec![0u64; state.node_count()];
    let mut dest_received = vec![0u64; state.node_count()];
    for (i, phase) in plan.phases.iter().enumerate() {
        let cost = phase_cost(&cur, phase, bw)
            .map_err(|e| Error::PlanViolation(format!("phase {i}: {e}")))?;
        for tr in phase {
            let tuples = cur.tuples(tr.source, tr.partition);
            received[tr.dest] += tuples;
            if tr.dest == cur.destination(tr.partition) {
                dest_received[tr.dest] += tuples;
            }
        }
        apply_phase(&mut cur, phase).map_err(|e| Error::PlanViolation(format!("phase {i}: {e}")))?;
        per_phase.push(cost);
    }
    Ok(PlanCost {
        // fold from +0.0: f64's sum() identity is -0.0, which would leak a
        // minus sign into reports for empty plans
        total: per_phase.iter().fold(0.0, |acc, c| acc + c),
        per_phase,
        final_state: cur,
        received,
        dest_received,
    })
}

/// Replay the plan against a copy of the state and collect every rule
/// violation: per-phase degree and emptiness rules, and completion at the
/// end. Empty result means the plan is valid.
pub fn validate_plan(state: &AggregationState, plan: &AggregationPlan) -> Vec<String> {
    let mut violations = Vec::new();
    let mut cur = state.clone();
    for (i, phase) in plan.phases.iter().enumerate() {
        if let Err(e) = apply_phase(&mut cur, phase) {
            violations.push(format!("phase {i}: {e}"));
            // The phase did not apply; later phases would cascade noise.
            return violations;
        }
    }
    if !cur.is_complete() {
        for l in 0..cur.partition_count() {
            for v in 0..cur.node_count() {
                if v != cur.destination(l) && !cur.holding(v, l).is_empty() {
                    violations.push(format!(
                        "incomplete: node {v} still holds {} tuples of partition {l}",
                        cur.tuples(v, l)
                    ));
                }
            }
        }
    }
    violations
}
