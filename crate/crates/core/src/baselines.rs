//! Comparison planners: direct repartition, repartition after local
//! pre-aggregation, and fixed-fan-in balanced aggregation trees.

use std::collections::VecDeque;

use crate::model::{AggregationPlan, AggregationState, Phase, Transfer};
use crate::oracle::TreePlan;
use crate::{Error, NodeId, PartitionId, Result};

/// Collapse every holding to distinct keys, modeling local aggregation
/// before any network transfer.
pub fn preaggregate(state: &AggregationState) -> AggregationState {
    state.collapse_multiplicities()
}

/// Ship every holding straight to its partition's destination.
///
/// Each phase, nodes in ascending order send the next pending partition —
/// round-robin over their own pending list — whose destination is not
/// already receiving this phase. Holdings already at their destination never
/// move. On a balanced all-to-all instance this yields the familiar rotation
/// schedule; all-to-one degenerates to one serialized send per phase.
pub fn plan_repartition(state: &AggregationState) -> Result<AggregationPlan> {
    let n = state.node_count();
    let mut pending: Vec<VecDeque<PartitionId>> = (0..n)
        .map(|v| {
            (0..state.partition_count())
                .filter(|&l| state.destination(l) != v && !state.holding(v, l).is_empty())
                .collect()
        })
        .collect();

    let mut phases = Vec::new();
    loop {
        let mut receiving = vec![false; n];
        let mut phase = Phase::new();
        for (v, queue) in pending.iter_mut().enumerate() {
            let Some(k) = queue
                .iter()
                .position(|&l| !receiving[state.destination(l)])
            else {
                continue;
            };
            // Keep scanning after the sent entry next phase: rotate it to the
            // front, drop it, and the queue resumes where this phase left off.
            queue.rotate_left(k);
            let l = queue.pop_front().expect("nonempty after position hit");
            let dest = state.destination(l);
            receiving[dest] = true;
            phase.push(Transfer::new(v, dest, l)?);
        }
        if phase.is_empty() {
            break;
        }
        phases.push(phase);
    }
    Ok(AggregationPlan::new(phases))
}

/// Fan-in policy for the balanced-tree planner.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoomConfig {
    /// Explicit fan-in, at least 2. Values at or above node_count - 1
    /// degenerate to a star, i.e. direct serialized sends.
    Fixed(usize),
    /// Derive the fan-in from how much combining shrinks the data: with no
    /// shrinkage (global distinct count equals the summed per-node distinct
    /// counts) the tree flattens to a star; total overlap pushes it to
    /// binary. fanin = clamp(round((n-1) * global / summed), 2, n-1).
    Auto,
}

fn resolve_fanin(state: &AggregationState, cfg: LoomConfig) -> Result<usize> {
    let n = state.node_count();
    match cfg {
        LoomConfig::Fixed(f) => {
            if f < 2 {
                return Err(Error::Planner(format!("tree fan-in must be at least 2, got {f}")));
            }
            Ok(f)
        }
        LoomConfig::Auto => {
            let summed: usize = (0..n).map(|v| state.holding(v, 0).distinct()).sum();
            let global = state.distinct_union(0).len();
            if summed == 0 {
                return Ok(n.saturating_sub(1).max(2));
            }
            let raw = ((n - 1) as f64 * global as f64 / summed as f64).round() as usize;
            Ok(raw.clamp(2, (n - 1).max(2)))
        }
    }
}

/// Aggregate along a balanced tree with the configured fan-in, rooted at the
/// single destination. Non-root nodes fill tree slots breadth-first in
/// ascending order; leaves peel inward, and a parent accepts one child per
/// phase, so sibling deliveries serialize deterministically.
pub fn plan_loom(state: &AggregationState, cfg: LoomConfig) -> Result<AggregationPlan> {
    let root = single_destination(state)?;
    let fanin = resolve_fanin(state, cfg)?;
    let n = state.node_count();

    let mut parent: Vec<Option<NodeId>> = vec![None; n];
    let mut slots = VecDeque::from([root]);
    let mut filled = vec![0usize; n];
    for v in (0..n).filter(|&v| v != root) {
        let p = loop {
            let &front = slots.front().expect("a slot remains while nodes remain");
            if filled[front] < fanin {
                break front;
            }
            slots.pop_front();
        };
        parent[v] = Some(p);
        filled[p] += 1;
        slots.push_back(v);
    }

    TreePlan::new(parent, root)?.schedule(state)
}

/// The one destination of a single-partition all-to-one instance; tree
/// planners only make sense there.
pub(crate) fn single_destination(state: &AggregationState) -> Result<NodeId> {
    if state.partition_count() != 1 {
        return Err(Error::Planner(format!(
            "tree planning requires a single partition, got {}",
            state.partition_count()
        )));
    }
    state
        .all_to_one_destination()
        .ok_or_else(|| Error::Planner("tree planning requires an all-to-one mapping".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{plan_cost, validate_plan, KeyMultiset};
    use crate::topology::{make_uniform_star, BandwidthMatrix};
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;

    fn toy_state() -> AggregationState {
        AggregationState::new(
            vec![
                vec![KeyMultiset::new()],
                vec![KeyMultiset::from_keys([1, 2, 3])],
                vec![KeyMultiset::from_keys([4, 5, 6])],
                vec![KeyMultiset::from_keys([4, 5, 6])],
            ],
            vec![0],
            1.0,
        )
        .unwrap()
    }

    fn star(n: usize) -> BandwidthMatrix {
        BandwidthMatrix::from_topology(&make_uniform_star(n, 1.0).unwrap())
    }

    #[test]
    fn repartition_serializes_all_to_one() {
        let state = toy_state();
        let plan = plan_repartition(&state).unwrap();
        assert_eq!(
            plan.phases,
            vec![
                vec![Transfer::new(1, 0, 0).unwrap()],
                vec![Transfer::new(2, 0, 0).unwrap()],
                vec![Transfer::new(3, 0, 0).unwrap()],
            ]
        );
        let out = plan_cost(&state, &plan, &star(4)).unwrap();
        assert_eq!(out.total, 9.0);
    }

    #[test]
    fn repartition_of_empty_state_is_empty() {
        let state = AggregationState::new(
            vec![vec![KeyMultiset::new()], vec![KeyMultiset::new()]],
            vec![0],
            1.0,
        )
        .unwrap();
        assert_eq!(plan_repartition(&state).unwrap().phase_count(), 0);
    }

    #[test]
    fn balanced_all_to_all_phases_cost_one_holding() {
        // 8 nodes, 8 partitions mapped l -> l, every off-destination holding
        // the same 100 keys: rotation drains in 7 phases of cost 100 each.
        let n = 8;
        let rows: Vec<Vec<KeyMultiset>> = (0..n)
            .map(|_| (0..n).map(|l| KeyMultiset::from_keys((0..100).map(|x| (l * 1000 + x) as u64))).collect())
            .collect();
        let state = AggregationState::new(rows, (0..n).collect(), 1.0).unwrap();
        let plan = plan_repartition(&state).unwrap();
        assert!(validate_plan(&state, &plan).is_empty());
        let out = plan_cost(&state, &plan, &star(n)).unwrap();
        assert_eq!(plan.phase_count(), 7);
        for c in &out.per_phase {
            assert_eq!(*c, 100.0);
        }
    }

    #[test]
    fn star_tree_costs_nine_on_the_toy() {
        let state = toy_state();
        let plan = plan_loom(&state, LoomConfig::Fixed(3)).unwrap();
        let out = plan_cost(&state, &plan, &star(4)).unwrap();
        assert_eq!(out.total, 9.0);
        assert_eq!(plan.phase_count(), 3);
    }

    #[test]
    fn binary_tree_matches_pair_merge_shape_on_the_toy() {
        let state = toy_state();
        let plan = plan_loom(&state, LoomConfig::Fixed(2)).unwrap();
        // Children of 0 are {1, 2}; 3 hangs under 1. Leaves 2 and 3 go first.
        assert_eq!(
            plan.phases,
            vec![
                vec![Transfer::new(2, 0, 0).unwrap(), Transfer::new(3, 1, 0).unwrap()],
                vec![Transfer::new(1, 0, 0).unwrap()],
            ]
        );
        let out = plan_cost(&state, &plan, &star(4)).unwrap();
        // Node 1 forwards {1,2,3} merged with {4,5,6}: six tuples.
        assert_eq!(out.total, 9.0);
    }

    #[test]
    fn oversized_fanin_degenerates_to_repartition() {
        let state = toy_state();
        let tree = plan_loom(&state, LoomConfig::Fixed(16)).unwrap();
        let repart = plan_repartition(&state).unwrap();
        assert_eq!(tree.phases, repart.phases);
    }

    #[test]
    fn auto_fanin_flattens_disjoint_data_and_deepens_overlapping_data() {
        let disjoint = AggregationState::new(
            (0..4)
                .map(|v| vec![KeyMultiset::from_keys((0..10).map(|x| (v * 100 + x) as u64))])
                .collect(),
            vec![0],
            1.0,
        )
        .unwrap();
        assert_eq!(resolve_fanin(&disjoint, LoomConfig::Auto).unwrap(), 3);

        let identical = AggregationState::new(
            (0..4)
                .map(|_| vec![KeyMultiset::from_keys(0..10)])
                .collect(),
            vec![0],
            1.0,
        )
        .unwrap();
        assert_eq!(resolve_fanin(&identical, LoomConfig::Auto).unwrap(), 2);
    }

    #[test]
    fn loom_rejects_all_to_all() {
        let state = AggregationState::new(
            vec![
                vec![KeyMultiset::from_keys([1]), KeyMultiset::from_keys([2])],
                vec![KeyMultiset::from_keys([3]), KeyMultiset::from_keys([4])],
            ],
            vec![0, 1],
            1.0,
        )
        .unwrap();
        assert!(plan_loom(&state, LoomConfig::Fixed(2)).is_err());
    }

    #[test]
    fn preaggregate_collapses_and_is_idempotent() {
        let mut a = KeyMultiset::new();
        a.insert(7, 2);
        a.insert(9, 1);
        let state =
            AggregationState::new(vec![vec![a], vec![KeyMultiset::from_keys([7])]], vec![0], 1.0)
                .unwrap();
        let pre = preaggregate(&state);
        assert_eq!(pre.tuples(0, 0), 2);
        assert_eq!(pre.holding(0, 0).multiplicity(7), 1);
        let again = preaggregate(&pre);
        assert_eq!(again.tuples(0, 0), pre.tuples(0, 0));
        assert_eq!(again.total_tuples(), pre.total_tuples());
    }

    #[test]
    fn preaggregation_never_raises_repartition_cost() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        for _ in 0..30 {
            let n = rng.random_range(2..=5);
            let parts = rng.random_range(1..=3);
            let mapping: Vec<usize> = (0..parts).map(|_| rng.random_range(0..n)).collect();
            let rows: Vec<Vec<KeyMultiset>> = (0..n)
                .map(|_| {
                    (0..parts)
                        .map(|_| {
                            let mut ks = KeyMultiset::new();
                            for _ in 0..rng.random_range(0..20) {
                                ks.insert(rng.random_range(0..12), rng.random_range(1..4));
                            }
                            ks
                        })
                        .collect()
                })
                .collect();
            let state = AggregationState::new(rows, mapping, 1.0).unwrap();
            let bw = star(n);
            let raw = plan_cost(&state, &plan_repartition(&state).unwrap(), &bw)
                .unwrap()
                .total;
            let pre = preaggregate(&state);
            let collapsed = plan_cost(&pre, &plan_repartition(&pre).unwrap(), &bw)
                .unwrap()
                .total;
            assert!(collapsed <= raw + 1e-9, "collapsed {collapsed} > raw {raw}");
        }
    }
}
