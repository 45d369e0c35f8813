//! Brute-force ground truth for small single-destination instances: exact
//! set arithmetic and exhaustive search over every spanning tree's
//! leaf-peeling schedule.

use std::collections::BTreeSet;

use crate::model::{AggregationPlan, AggregationState, KeyMultiset, Phase, Transfer};
use crate::topology::BandwidthMatrix;
use crate::{Error, NodeId, Result};

/// Default cap on exhaustive search; n nodes mean n^(n-2) spanning trees,
/// so 6 keeps the sweep at 1296 trees.
pub const DEFAULT_NODE_LIMIT: usize = 6;

/// Exact |distinct(a) ∪ distinct(b)|.
pub fn exact_union_card(a: &KeyMultiset, b: &KeyMultiset) -> usize {
    let mut keys: BTreeSet<u64> = a.keys().collect();
    keys.extend(b.keys());
    keys.len()
}

/// Spanning tree over all nodes, rooted at the aggregation destination. Its
/// schedule peels leaves inward: each phase the current leaves (ascending)
/// ship their whole holding to their parent, except that a parent accepts
/// only one child per phase, so siblings serialize across phases.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreePlan {
    parent: Vec<Option<NodeId>>,
    root: NodeId,
}

impl TreePlan {
    pub fn new(parent: Vec<Option<NodeId>>, root: NodeId) -> Result<Self> {
        let n = parent.len();
        if root >= n {
            return Err(Error::Planner(format!("root {root} out of range for {n} nodes")));
        }
        if parent[root].is_some() {
            return Err(Error::Planner("the root must not have a parent".into()));
        }
        for v in 0..n {
            if v == root {
                continue;
            }
            // Walking upward must reach the root within n steps or the map
            // contains a cycle or a gap.
            let mut cur = v;
            for _ in 0..n {
                match parent[cur] {
                    Some(p) if p < n => cur = p,
                    _ => break,
                }
                if cur == root {
                    break;
                }
            }
            if cur != root {
                return Err(Error::Planner(format!(
                    "node {v} does not reach the root through the parent map"
                )));
            }
        }
        Ok(TreePlan { parent, root })
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn parent(&self, v: NodeId) -> Option<NodeId> {
        self.parent[v]
    }

    /// Parent map with the root marked by its own index; lexicographic order
    /// over this key breaks cost ties deterministically.
    pub fn parent_key(&self) -> Vec<usize> {
        self.parent
            .iter()
            .enumerate()
            .map(|(v, p)| p.unwrap_or(v))
            .collect()
    }

    /// Derive the phase schedule against a concrete state. Nodes whose
    /// entire subtree is empty peel silently without a transfer. Fails if
    /// the tree would route tuples into an empty node other than the
    /// destination, which the transfer rules forbid.
    pub fn schedule(&self, state: &AggregationState) -> Result<AggregationPlan> {
        let dest = crate::baselines::single_destination(state)?;
        if dest != self.root {
            return Err(Error::Planner(format!(
                "tree is rooted at {} but the destination is {dest}",
                self.root
            )));
        }
        let n = self.parent.len();
        if n != state.node_count() {
            return Err(Error::Planner(format!(
                "tree covers {n} nodes, state has {}",
                state.node_count()
            )));
        }

        let mut sets: Vec<BTreeSet<u64>> = (0..n).map(|v| state.holding(v, 0).keys().collect()).collect();
        let mut pending_children = vec![0usize; n];
        for v in 0..n {
            if let Some(p) = self.parent[v] {
                pending_children[p] += 1;
            }
        }
        let mut done = vec![false; n];
        let mut remaining = n - 1;
        let mut phases = Vec::new();

        while remaining > 0 {
            let leaves: Vec<NodeId> = (0..n)
                .filter(|&v| v != self.root && !done[v] && pending_children[v] == 0)
                .collect();
            let mut receiving = vec![false; n];
            let mut phase = Phase::new();
            for &v in &leaves {
                let p = self.parent[v].expect("non-root leaf has a parent");
                if sets[v].is_empty() {
                    // Nothing to ship; the node leaves the tree silently.
                    done[v] = true;
                    pending_children[p] -= 1;
                    remaining -= 1;
                    continue;
                }
                if receiving[p] {
                    continue; // Waits for a later phase.
                }
                if p != self.root && sets[p].is_empty() {
                    return Err(Error::Planner(format!(
                        "tree routes data into empty node {p}"
                    )));
                }
                let payload = std::mem::take(&mut sets[v]);
                sets[p].extend(payload);
                receiving[p] = true;
                phase.push(Transfer::new(v, p, 0)?);
                done[v] = true;
                pending_children[p] -= 1;
                remaining -= 1;
            }
            if !phase.is_empty() {
                phases.push(phase);
            }
        }
        Ok(AggregationPlan::new(phases))
    }
}

/// Decode one labeled tree from its length-(n-2) sequence over node ids.
fn decode_tree(seq: &[usize], n: usize) -> Vec<(usize, usize)> {
    let mut degree = vec![1usize; n];
    for &s in seq {
        degree[s] += 1;
    }
    let mut leaves: BTreeSet<usize> = (0..n).filter(|&v| degree[v] == 1).collect();
    let mut edges = Vec::with_capacity(n - 1);
    for &s in seq {
        let leaf = *leaves.iter().next().expect("a leaf always remains");
        leaves.remove(&leaf);
        edges.push((leaf, s));
        degree[s] -= 1;
        if degree[s] == 1 {
            leaves.insert(s);
        }
    }
    let mut last = leaves.iter();
    let a = *last.next().expect("two leaves close the sequence");
    let b = *last.next().expect("two leaves close the sequence");
    edges.push((a, b));
    edges
}

fn orient_to_root(edges: &[(usize, usize)], n: usize, root: NodeId) -> Vec<Option<NodeId>> {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut parent = vec![None; n];
    let mut seen = vec![false; n];
    let mut queue = std::collections::VecDeque::from([root]);
    seen[root] = true;
    while let Some(v) = queue.pop_front() {
        for &u in &adj[v] {
            if !seen[u] {
                seen[u] = true;
                parent[u] = Some(v);
                queue.push_back(u);
            }
        }
    }
    parent
}

/// Best tree found, its derived schedule, and the schedule's cost.
#[derive(Debug, Clone)]
pub struct OracleOutcome {
    pub tree: TreePlan,
    pub plan: AggregationPlan,
    pub cost: f64,
}

/// Try every spanning tree rooted at the destination and keep the cheapest
/// leaf-peeling schedule; exact costs, no estimation anywhere. Cost ties go
/// to the lexicographically smallest parent map. Trees that would route
/// tuples into an empty relay are skipped as invalid.
pub fn optimal_tree_plan(
    state: &AggregationState,
    bw: &BandwidthMatrix,
    node_limit: usize,
) -> Result<OracleOutcome> {
    let n = state.node_count();
    if n > node_limit {
        return Err(Error::OracleUnsupported(format!(
            "{n} nodes exceed the exhaustive-search limit {node_limit}"
        )));
    }
    crate::baselines::single_destination(state)
        .map_err(|e| Error::OracleUnsupported(e.to_string()))?;
    let root = state.destination(0);

    let mut best: Option<OracleOutcome> = None;
    let seq_len = n.saturating_sub(2);
    let total: usize = n.pow(seq_len as u32);
    let mut seq = vec![0usize; seq_len];
    for code in 0..total {
        let mut c = code;
        for slot in seq.iter_mut() {
            *slot = c % n;
            c /= n;
        }
        let parent = orient_to_root(&decode_tree(&seq, n), n, root);
        let tree = TreePlan::new(parent, root)?;
        let Ok(plan) = tree.schedule(state) else {
            continue;
        };
        let cost = crate::model::plan_cost(state, &plan, bw)?.total;
        let better = match &best {
            None => true,
            Some(b) => {
                cost < b.cost || (cost == b.cost && tree.parent_key() < b.tree.parent_key())
            }
        };
        if better {
            best = Some(OracleOutcome { tree, plan, cost });
        }
    }
    best.ok_or_else(|| Error::Planner("no valid aggregation tree exists".into()))
}
