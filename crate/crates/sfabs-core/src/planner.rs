//! Shortest-path value function and policy over the abstraction.
//!
//! Edge cost bounds are nonnegative, so single-source-set shortest paths to
//! the goal cells over the reversed digraph give, for every cell, an upper
//! bound on the achievable cost-to-goal. The resulting function satisfies the
//! Bellman inequality on every finite-valued cell (checked explicitly by
//! [`check_bellman`]), and concretizes to continuous states by taking the
//! minimum over all cells containing the state; overlapping cells are the
//! point of that rule.

use alloc::collections::BinaryHeap;
use alloc::vec::Vec;
use nalgebra::DVector;

use crate::abstraction::{AbstractionGraph, CellCover};
use crate::{Error, Result};

/// Tolerance for the Bellman inequality check.
pub const BELLMAN_TOL: f64 = 1e-9;

/// Per-cell cost-to-goal values with the chosen outgoing edge per cell.
#[derive(Debug, Clone)]
pub struct ValueFunction {
    values: Vec<f64>,
    policy: Vec<Option<usize>>,
    goal_ids: Vec<usize>,
}

impl ValueFunction {
    pub fn from_parts(
        values: Vec<f64>,
        policy: Vec<Option<usize>>,
        mut goal_ids: Vec<usize>,
    ) -> Result<Self> {
        if values.len() != policy.len() {
            return Err(Error::Dimension {
                context: "value/policy length",
                expected: values.len(),
                got: policy.len(),
            });
        }
        goal_ids.sort_unstable();
        goal_ids.dedup();
        if goal_ids.iter().any(|&g| g >= values.len()) {
            return Err(Error::InvalidModel("goal id out of range"));
        }
        Ok(Self {
            values,
            policy,
            goal_ids,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Cost-to-goal bound of a cell; `f64::INFINITY` when unreachable.
    pub fn value(&self, cell: usize) -> f64 {
        self.values[cell]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn policy(&self, cell: usize) -> Option<usize> {
        self.policy[cell]
    }

    pub fn goal_ids(&self) -> &[usize] {
        &self.goal_ids
    }

    pub fn is_goal(&self, cell: usize) -> bool {
        self.goal_ids.binary_search(&cell).is_ok()
    }
}

#[derive(PartialEq)]
struct HeapEntry {
    cost: f64,
    cell: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> core::cmp::Ordering {
        // BinaryHeap is a max-heap: invert so the smallest (cost, cell) pops
        // first; the cell id breaks cost ties deterministically.
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.cell.cmp(&self.cell))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<core::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Shortest-path costs to the goal set over reversed edges; goal cells get
/// value 0, unreachable cells stay at infinity. The policy edge per cell is
/// the lowest-id outgoing edge attaining `v(source) = cost + v(target)`.
pub fn reverse_dijkstra(graph: &AbstractionGraph) -> ValueFunction {
    let n = graph.cover().len();
    let mut incoming: Vec<Vec<usize>> = alloc::vec![Vec::new(); n];
    for (eid, e) in graph.edges().iter().enumerate() {
        incoming[e.target].push(eid);
    }
    let mut values = alloc::vec![f64::INFINITY; n];
    let mut settled = alloc::vec![false; n];
    let mut heap = BinaryHeap::new();
    for &g in graph.goal_ids() {
        values[g] = 0.0;
        heap.push(HeapEntry { cost: 0.0, cell: g });
    }
    while let Some(HeapEntry { cost, cell }) = heap.pop() {
        if settled[cell] {
            continue;
        }
        settled[cell] = true;
        for &eid in &incoming[cell] {
            let e = graph.edge(eid);
            if graph.is_goal(e.source) {
                continue; // goal values stay pinned at zero
            }
            let candidate = e.cost_bound() + cost;
            if candidate < values[e.source] {
                values[e.source] = candidate;
                heap.push(HeapEntry {
                    cost: candidate,
                    cell: e.source,
                });
            }
        }
    }

    // Policy pass: lowest-id edge attaining the stored value. Both sides are
    // computed as cost_bound + value(target) on the same stored floats, so
    // the match is exact.
    let mut policy = alloc::vec![None; n];
    for cell in 0..n {
        if graph.is_goal(cell) || !values[cell].is_finite() {
            continue;
        }
        let mut best: Option<(f64, usize)> = None;
        for &eid in graph.outgoing(cell) {
            let e = graph.edge(eid);
            let cand = e.cost_bound() + values[e.target];
            if best.as_ref().map_or(true, |&(b, _)| cand < b) {
                best = Some((cand, eid));
            }
        }
        if let Some((cand, eid)) = best {
            debug_assert_eq!(cand, values[cell]);
            policy[cell] = Some(eid);
        }
    }
    ValueFunction {
        values,
        policy,
        goal_ids: graph.goal_ids().to_vec(),
    }
}

/// Summary of a passing Bellman check.
#[derive(Debug, Clone, Copy)]
pub struct BellmanReport {
    pub finite_cells: usize,
    pub checked_edges: usize,
}

/// Verifies the Bellman inequality on every finite-valued non-goal cell:
/// some outgoing edge satisfies `v(source) ≥ cost + v(target) − tol`, and the
/// policy edge attains it with equality.
pub fn check_bellman(graph: &AbstractionGraph, vf: &ValueFunction) -> Result<BellmanReport> {
    let mut report = BellmanReport {
        finite_cells: 0,
        checked_edges: 0,
    };
    for cell in 0..graph.cover().len() {
        if vf.is_goal(cell) || !vf.value(cell).is_finite() {
            continue;
        }
        report.finite_cells += 1;
        let mut witnessed = false;
        for &eid in graph.outgoing(cell) {
            let e = graph.edge(eid);
            report.checked_edges += 1;
            if vf.value(cell) >= e.cost_bound() + vf.value(e.target) - BELLMAN_TOL {
                witnessed = true;
            }
        }
        if !witnessed {
            return Err(Error::BellmanViolation { cell, edge: None });
        }
        let eid = vf
            .policy(cell)
            .ok_or(Error::BellmanViolation { cell, edge: None })?;
        let e = graph.edge(eid);
        let lhs = vf.value(cell);
        let rhs = e.cost_bound() + vf.value(e.target);
        if (lhs - rhs).abs() > BELLMAN_TOL {
            return Err(Error::BellmanViolation {
                cell,
                edge: Some(eid),
            });
        }
    }
    Ok(report)
}

/// Value at a continuous state: minimum over all cells containing `x`;
/// infinity when every containing cell is unreachable.
pub fn concretize_value(vf: &ValueFunction, cover: &CellCover, x: &DVector<f64>) -> Result<f64> {
    let containing = cover.containing_cells(x);
    if containing.is_empty() {
        return Err(Error::OutsideDomain);
    }
    Ok(containing
        .into_iter()
        .map(|id| vf.value(id))
        .fold(f64::INFINITY, f64::min))
}

/// What the policy prescribes at a continuous state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyDecision {
    /// The state sits in a goal cell: stop.
    Goal { cell: usize },
    /// Apply the controller of this edge (from the given source cell).
    Apply { cell: usize, edge: usize },
}

/// Chooses, among the finite-valued cells containing `x`, the one of minimal
/// value (ties to the lowest id) and returns its policy edge, or the goal
/// signal when that cell is a goal.
pub fn policy_lookup(
    vf: &ValueFunction,
    cover: &CellCover,
    graph: &AbstractionGraph,
    x: &DVector<f64>,
) -> Result<PolicyDecision> {
    let containing = cover.containing_cells(x);
    if containing.is_empty() {
        return Err(Error::OutsideDomain);
    }
    let mut best: Option<(f64, usize)> = None;
    for id in containing {
        let v = vf.value(id);
        if !v.is_finite() {
            continue;
        }
        if best.as_ref().map_or(true, |&(bv, _)| v < bv) {
            best = Some((v, id));
        }
    }
    let (_, cell) = best.ok_or(Error::PolicyUnavailable)?;
    if vf.is_goal(cell) {
        return Ok(PolicyDecision::Goal { cell });
    }
    let edge = vf.policy(cell).ok_or(Error::PolicyUnavailable)?;
    let _ = graph.edge(edge); // bounds check against the supplied graph
    Ok(PolicyDecision::Apply { cell, edge })
}
