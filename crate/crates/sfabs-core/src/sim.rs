//! Closed-loop rollouts of the concrete system under the abstraction policy.
//!
//! Each step looks up the active cell (minimum concretized value), applies
//! its edge controller, draws a noise sample, and steps the dynamics of the
//! cell's mode; cells own a single mode even when they straddle a partition
//! boundary, matching the assumption under which their controllers were
//! certified. Containment in the planned target cell is asserted at every
//! step; a violation is a bug witness, not a recoverable condition.

use alloc::vec::Vec;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::abstraction::AbstractionGraph;
use crate::lmi::AUDIT_TOL;
use crate::planner::{concretize_value, policy_lookup, PolicyDecision, ValueFunction};
use crate::pwa::{input_box_to_ellipsoid_rows, CostModel, PwaSystem, MAX_VERTEX_DIM};
use crate::sets::AaBox;
use crate::{Error, Result};

/// Default step cap for [`rollout`].
pub const DEFAULT_MAX_STEPS: usize = 1_000;

/// How the per-step disturbance is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseModel {
    /// Uniform over the active mode's noise box (seeded stream).
    Uniform,
    /// Noise-box vertex maximizing the successor's target membership: the
    /// extreme points of the successor hull, used to stress containment.
    AdversarialVertex,
}

/// One closed-loop trajectory with its certification data.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    /// Visited states; one longer than `inputs`.
    pub states: Vec<DVector<f64>>,
    pub inputs: Vec<DVector<f64>>,
    /// Per step: (active cell, planned target cell).
    pub cells: Vec<(usize, usize)>,
    pub stage_costs: Vec<f64>,
    pub reached_goal: bool,
    /// Sum of the stage costs.
    pub total_cost: f64,
    pub seed: u64,
}

fn uniform_noise<R: Rng + ?Sized>(noise_box: &AaBox, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(noise_box.dim(), |d, _| {
        let (lo, hi) = (noise_box.lo()[d], noise_box.hi()[d]);
        if lo == hi {
            lo
        } else {
            rng.random_range(lo..=hi)
        }
    })
}

/// Runs the closed loop from `x0` until a goal cell is entered or `max_steps`
/// elapse. The noise stream is fully determined by `seed`.
#[allow(clippy::too_many_arguments)]
pub fn rollout(
    system: &PwaSystem,
    graph: &AbstractionGraph,
    vf: &ValueFunction,
    cost: &CostModel,
    x0: &DVector<f64>,
    seed: u64,
    max_steps: usize,
    noise_model: NoiseModel,
) -> Result<Rollout> {
    let cover = graph.cover();
    let input_rows = input_box_to_ellipsoid_rows(system.input_box())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Rollout {
        states: alloc::vec![x0.clone()],
        inputs: Vec::new(),
        cells: Vec::new(),
        stage_costs: Vec::new(),
        reached_goal: false,
        total_cost: 0.0,
        seed,
    };
    let mut x = x0.clone();
    for step in 0..max_steps {
        let (cell, edge_id) = match policy_lookup(vf, cover, graph, &x)? {
            PolicyDecision::Goal { .. } => {
                out.reached_goal = true;
                break;
            }
            PolicyDecision::Apply { cell, edge } => (cell, edge),
        };
        let edge = graph.edge(edge_id);
        let source = cover.cell(cell);
        let target = cover.cell(edge.target);
        let u = edge.controller.control(&x, source.center());
        for row in &input_rows {
            let v = row * &u;
            let norm = crate::linalg::sqrt(v.iter().map(|e| e * e).sum());
            if norm > 1.0 + AUDIT_TOL {
                return Err(Error::CertificationFailed {
                    step,
                    detail: "control left the admissible input set",
                });
            }
        }
        let mode_id = cover.mode_of_cell(cell);
        let mode = system.mode(mode_id);
        let noise_box = system.noise_box(mode_id);
        let base = mode.step(&x, &u);
        let omega = match noise_model {
            NoiseModel::Uniform => uniform_noise(noise_box, &mut rng),
            NoiseModel::AdversarialVertex => {
                let mut worst: Option<(f64, DVector<f64>)> = None;
                for w in noise_box.vertices(MAX_VERTEX_DIM)? {
                    let membership = target.membership(&(&base + &w));
                    if worst.as_ref().map_or(true, |(m, _)| membership > *m) {
                        worst = Some((membership, w));
                    }
                }
                worst.expect("noise box has at least one vertex").1
            }
        };
        let next = base + &omega;
        let membership = target.membership(&next);
        if membership > 1.0 + AUDIT_TOL {
            return Err(Error::ContainmentViolation { step, membership });
        }
        let stage = cost.stage_cost(&x, &u)?;
        out.inputs.push(u);
        out.cells.push((cell, edge.target));
        out.stage_costs.push(stage);
        out.states.push(next.clone());
        x = next;
    }
    if !out.reached_goal {
        // Re-check the final state so a goal entry on the last step counts.
        if let Ok(PolicyDecision::Goal { .. }) = policy_lookup(vf, cover, graph, &x) {
            out.reached_goal = true;
        }
    }
    out.total_cost = out.stage_costs.iter().sum();
    Ok(out)
}

/// Certification summary for a goal-reaching rollout.
#[derive(Debug, Clone, Copy)]
pub struct CostCertificate {
    pub start_value: f64,
    pub total_cost: f64,
    pub steps: usize,
}

/// Verifies the cost guarantee along a completed rollout: the realized total
/// cost is bounded by the concretized value at the start, and the value chain
/// `v(x_k) ≥ J(x_k, u_k) + v(x_{k+1})` descends step by step.
pub fn certify_cost(
    rollout: &Rollout,
    vf: &ValueFunction,
    cover: &crate::abstraction::CellCover,
) -> Result<CostCertificate> {
    if !rollout.reached_goal {
        return Err(Error::CertificationFailed {
            step: rollout.stage_costs.len(),
            detail: "rollout did not reach the goal",
        });
    }
    let start_value = concretize_value(vf, cover, &rollout.states[0])?;
    if rollout.total_cost > start_value + AUDIT_TOL {
        return Err(Error::CertificationFailed {
            step: 0,
            detail: "total cost exceeded the certified start value",
        });
    }
    for step in 0..rollout.stage_costs.len() {
        let v_here = concretize_value(vf, cover, &rollout.states[step])?;
        let v_next = concretize_value(vf, cover, &rollout.states[step + 1])?;
        if v_here < rollout.stage_costs[step] + v_next - AUDIT_TOL {
            return Err(Error::CertificationFailed {
                step,
                detail: "value chain failed to descend by the stage cost",
            });
        }
    }
    Ok(CostCertificate {
        start_value,
        total_cost: rollout.total_cost,
        steps: rollout.stage_costs.len(),
    })
}
