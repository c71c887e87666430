//! Ball covers of the state domain and the certified transition graph.
//!
//! The domain box is covered by equal-radius balls centered on an axis-aligned
//! grid. Candidate transitions between cells are pruned with a norm-based
//! reachability bound, survivors go through full controller synthesis, and
//! every synthesized controller is re-audited by sampling before it becomes an
//! edge. The result is a deterministic weighted digraph: each edge carries its
//! own controller and cost bound.

use alloc::vec::Vec;
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::linalg::{self, spectral_norm};
use crate::lmi::{
    audit_transition, synthesize_transition, AuditReport, AuditSamples, SynthesisOutcome,
    TransitionController,
};
use crate::pwa::{input_box_to_ellipsoid_rows, AffineMode, CostModel, PwaSystem, MAX_VERTEX_DIM};
use crate::sdp::SdpTolerances;
use crate::sets::{AaBox, Ellipsoid, Region};
use crate::{Error, Result};

/// Default cap on the number of cover cells.
pub const DEFAULT_CELL_CAP: usize = 100_000;
/// Distance slack when matching targets against the reach bound.
const PRUNE_MARGIN: f64 = 1e-9;

/// Equal-radius ball cover of the domain with per-cell mode assignment.
#[derive(Debug, Clone)]
pub struct CellCover {
    cells: Vec<Ellipsoid>,
    radius: f64,
    grid_spacing: f64,
    mode_of_cell: Vec<usize>,
}

impl CellCover {
    /// Covers the system domain with balls of `radius` centered on a grid
    /// with nominal spacing `2r/√n`, shrunk per axis to land on the domain
    /// corners. Every grid hypercube then has circumradius ≤ `radius`, so the
    /// balls cover the box.
    pub fn build(system: &PwaSystem, radius: f64) -> Result<Self> {
        Self::build_with_cap(system, radius, DEFAULT_CELL_CAP)
    }

    pub fn build_with_cap(system: &PwaSystem, radius: f64, cap: usize) -> Result<Self> {
        if !radius.is_finite() || radius <= 0.0 {
            return Err(Error::InvalidModel("cover radius must be positive"));
        }
        let domain = system.domain();
        let n = domain.dim();
        let nominal = 2.0 * radius / linalg::sqrt(n as f64);

        let mut counts = Vec::with_capacity(n);
        let mut spacings = Vec::with_capacity(n);
        let mut total: usize = 1;
        for d in 0..n {
            let width = domain.hi()[d] - domain.lo()[d];
            let (count, spacing) = if width == 0.0 {
                (1usize, 0.0)
            } else {
                let intervals = linalg::ceil(width / nominal) as usize;
                (intervals + 1, width / intervals as f64)
            };
            counts.push(count);
            spacings.push(spacing);
            total = total.saturating_mul(count);
            if total > cap {
                return Err(Error::CoverTooLarge { count: total, cap });
            }
        }
        // Covering guarantee: grid hypercube circumradius ≤ radius.
        let circumradius = linalg::sqrt(spacings.iter().map(|h| h * h).sum::<f64>()) * 0.5;
        if circumradius > radius + 1e-12 {
            return Err(Error::Numerical("cover spacing failed the covering bound"));
        }

        let mut cells = Vec::with_capacity(total);
        let mut mode_of_cell = Vec::with_capacity(total);
        let mut idx = alloc::vec![0usize; n];
        loop {
            let center = DVector::from_fn(n, |d, _| domain.lo()[d] + spacings[d] * idx[d] as f64);
            mode_of_cell.push(system.mode_of(&center)?);
            cells.push(Ellipsoid::ball(center, radius));
            // Row-major odometer: last axis fastest.
            let mut d = n;
            loop {
                if d == 0 {
                    return Self::from_parts(cells, radius, nominal, mode_of_cell);
                }
                d -= 1;
                idx[d] += 1;
                if idx[d] < counts[d] {
                    break;
                }
                idx[d] = 0;
            }
        }
    }

    /// Reassembles a cover from stored fields (used by persistence).
    pub fn from_parts(
        cells: Vec<Ellipsoid>,
        radius: f64,
        grid_spacing: f64,
        mode_of_cell: Vec<usize>,
    ) -> Result<Self> {
        if cells.len() != mode_of_cell.len() {
            return Err(Error::Dimension {
                context: "cover cells vs modes",
                expected: cells.len(),
                got: mode_of_cell.len(),
            });
        }
        if cells.is_empty() {
            return Err(Error::InvalidModel("cover needs at least one cell"));
        }
        Ok(Self {
            cells,
            radius,
            grid_spacing,
            mode_of_cell,
        })
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cell(&self, id: usize) -> &Ellipsoid {
        &self.cells[id]
    }

    pub fn cells(&self) -> &[Ellipsoid] {
        &self.cells
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn grid_spacing(&self) -> f64 {
        self.grid_spacing
    }

    pub fn mode_of_cell(&self, id: usize) -> usize {
        self.mode_of_cell[id]
    }

    pub fn modes(&self) -> &[usize] {
        &self.mode_of_cell
    }

    /// Ids of all cells containing `x`, ascending.
    pub fn containing_cells(&self, x: &DVector<f64>) -> Vec<usize> {
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, cell)| cell.contains(x, 0.0))
            .map(|(id, _)| id)
            .collect()
    }
}

/// Ball overapproximating the one-step reachable set of a cell.
#[derive(Debug, Clone)]
pub struct ReachBall {
    pub center: DVector<f64>,
    pub radius: f64,
}

impl ReachBall {
    pub fn intersects_ball(&self, center: &DVector<f64>, radius: f64) -> bool {
        linalg::dist(&self.center, center) <= self.radius + radius + PRUNE_MARGIN
    }
}

/// Norm-based growth bound: the image of a ball cell under one mode, any
/// admissible input and any noise lies inside the ball with
/// `center = A·c + B·mid(U) + g` and `radius = ‖A‖₂·r + ‖B‖₂·r_U + r_Ω`.
pub fn reach_overapprox(
    cell: &Ellipsoid,
    mode: &AffineMode,
    input_box: &AaBox,
    noise_box: &AaBox,
) -> Result<ReachBall> {
    let n = cell.dim();
    // The cover only emits balls; recover r from P = r⁻²·I and insist on it.
    let p = cell.shape();
    let r = 1.0 / linalg::sqrt(p[(0, 0)]);
    for i in 0..n {
        for j in 0..n {
            let expect = if i == j { 1.0 / (r * r) } else { 0.0 };
            if (p[(i, j)] - expect).abs() > 1e-9 * p[(0, 0)].abs().max(1.0) {
                return Err(Error::InvalidModel("reach bound requires a ball cell"));
            }
        }
    }
    let center = mode.step(cell.center(), &input_box.midpoint());
    let radius = spectral_norm(&mode.a) * r
        + spectral_norm(&mode.b) * input_box.circumradius()
        + noise_box.circumradius();
    Ok(ReachBall { center, radius })
}

/// One certified transition: the controller maps the whole source cell into
/// the target cell for every admissible noise realization.
#[derive(Debug, Clone)]
pub struct Edge {
    pub source: usize,
    pub target: usize,
    pub controller: TransitionController,
}

impl Edge {
    pub fn cost_bound(&self) -> f64 {
        self.controller.cost_bound
    }
}

/// Deterministic weighted digraph over the cover.
#[derive(Debug, Clone)]
pub struct AbstractionGraph {
    cover: CellCover,
    edges: Vec<Edge>,
    goal_ids: Vec<usize>,
    blocked_ids: Vec<usize>,
    outgoing: Vec<Vec<usize>>,
}

impl AbstractionGraph {
    pub fn new(
        cover: CellCover,
        edges: Vec<Edge>,
        mut goal_ids: Vec<usize>,
        mut blocked_ids: Vec<usize>,
    ) -> Result<Self> {
        goal_ids.sort_unstable();
        goal_ids.dedup();
        blocked_ids.sort_unstable();
        blocked_ids.dedup();
        let n = cover.len();
        if goal_ids.iter().chain(blocked_ids.iter()).any(|&id| id >= n) {
            return Err(Error::InvalidModel("goal/blocked id out of range"));
        }
        let mut outgoing = alloc::vec![Vec::new(); n];
        for (eid, e) in edges.iter().enumerate() {
            if e.source >= n || e.target >= n {
                return Err(Error::InvalidModel("edge endpoint out of range"));
            }
            if blocked_ids.binary_search(&e.source).is_ok()
                || blocked_ids.binary_search(&e.target).is_ok()
            {
                return Err(Error::InvalidModel("edge touches a blocked cell"));
            }
            if e.cost_bound().is_nan() || e.cost_bound() < 0.0 {
                return Err(Error::InvalidModel("edge cost bound must be nonnegative"));
            }
            outgoing[e.source].push(eid);
        }
        // Determinism: one target per (source, controller) pair. Controllers
        // are compared bit-for-bit; identical (K, ℓ) at one source pointing
        // at two targets would make the abstract transition relation
        // non-deterministic.
        for ids in &outgoing {
            for (a, &ea) in ids.iter().enumerate() {
                for &eb in ids.iter().skip(a + 1) {
                    let (ca, cb) = (&edges[ea].controller, &edges[eb].controller);
                    if ca.k == cb.k && ca.l == cb.l && edges[ea].target != edges[eb].target {
                        return Err(Error::InvalidModel(
                            "one controller cannot target two cells",
                        ));
                    }
                }
            }
        }
        Ok(Self {
            cover,
            edges,
            goal_ids,
            blocked_ids,
            outgoing,
        })
    }

    pub fn cover(&self) -> &CellCover {
        &self.cover
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, id: usize) -> &Edge {
        &self.edges[id]
    }

    pub fn goal_ids(&self) -> &[usize] {
        &self.goal_ids
    }

    pub fn blocked_ids(&self) -> &[usize] {
        &self.blocked_ids
    }

    pub fn is_goal(&self, cell: usize) -> bool {
        self.goal_ids.binary_search(&cell).is_ok()
    }

    pub fn is_blocked(&self, cell: usize) -> bool {
        self.blocked_ids.binary_search(&cell).is_ok()
    }

    /// Edge ids leaving `cell`, in edge-id order.
    pub fn outgoing(&self, cell: usize) -> &[usize] {
        &self.outgoing[cell]
    }
}

/// Candidate transition that survived goal/obstacle marking and the
/// reachability prune.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CandidatePair {
    pub source: usize,
    pub target: usize,
}

/// Result of the marking + pruning pass, ready for (possibly parallel)
/// synthesis of the candidate pairs.
#[derive(Debug, Clone)]
pub struct BuildPlan {
    pub goal_ids: Vec<usize>,
    pub blocked_ids: Vec<usize>,
    pub candidates: Vec<CandidatePair>,
}

/// Marks blocked and goal cells, then enumerates candidate (source, target)
/// pairs: sources are unblocked; targets are unblocked, distinct, inside the
/// domain, and within reach of the source's growth bound.
pub fn plan_build(
    system: &PwaSystem,
    cover: &CellCover,
    goal: &Region,
    obstacles: &[Region],
) -> Result<BuildPlan> {
    let r = cover.radius();
    let mut blocked = Vec::new();
    let mut goals = Vec::new();
    for (id, cell) in cover.cells().iter().enumerate() {
        if obstacles
            .iter()
            .any(|o| o.intersects_ball(cell.center(), r))
        {
            blocked.push(id);
        } else if goal.contains_ball(cell.center(), r) {
            goals.push(id);
        }
    }
    let is_blocked = |id: usize| blocked.binary_search(&id).is_ok();
    let target_ok: Vec<bool> = cover
        .cells()
        .iter()
        .enumerate()
        .map(|(id, cell)| !is_blocked(id) && system.domain().contains_ball(cell.center(), r))
        .collect();

    let mut candidates = Vec::new();
    for (source, cell) in cover.cells().iter().enumerate() {
        if is_blocked(source) {
            continue;
        }
        let mode_id = cover.mode_of_cell(source);
        let reach = reach_overapprox(
            cell,
            system.mode(mode_id),
            system.input_box(),
            system.noise_box(mode_id),
        )?;
        for (target, tcell) in cover.cells().iter().enumerate() {
            if target == source || !target_ok[target] {
                continue;
            }
            if reach.intersects_ball(tcell.center(), r) {
                candidates.push(CandidatePair { source, target });
            }
        }
    }
    Ok(BuildPlan {
        goal_ids: goals,
        blocked_ids: blocked,
        candidates,
    })
}

/// Outcome of synthesizing one candidate pair.
#[derive(Debug, Clone)]
pub enum PairOutcome {
    /// Certified and audited edge.
    Edge(Edge, AuditReport),
    Infeasible,
    /// Synthesis or audit trouble; the pair is dropped with a note.
    Warning(&'static str),
}

/// Synthesizes and audits one candidate pair. The audit RNG stream is
/// derived from the pair so rebuilds are reproducible.
pub fn synthesize_pair(
    system: &PwaSystem,
    cover: &CellCover,
    cost: &CostModel,
    pair: CandidatePair,
    tol: &SdpTolerances,
) -> Result<PairOutcome> {
    let mode_id = cover.mode_of_cell(pair.source);
    let mode = system.mode(mode_id);
    let noise_vertices = system.noise_box(mode_id).vertices(MAX_VERTEX_DIM)?;
    let input_rows = input_box_to_ellipsoid_rows(system.input_box())?;
    let source = cover.cell(pair.source);
    let target = cover.cell(pair.target);
    let outcome = match synthesize_transition(
        mode,
        source,
        target,
        &noise_vertices,
        &input_rows,
        cost,
        tol,
    ) {
        Ok(o) => o,
        Err(Error::Numerical(msg)) => return Ok(PairOutcome::Warning(msg)),
        Err(e) => return Err(e),
    };
    match outcome {
        SynthesisOutcome::Infeasible { .. } => Ok(PairOutcome::Infeasible),
        SynthesisOutcome::Feasible { controller, .. } => {
            let mut rng =
                ChaCha8Rng::seed_from_u64(((pair.source as u64) << 32) ^ pair.target as u64);
            match audit_transition(
                &controller,
                mode,
                source,
                target,
                &noise_vertices,
                &input_rows,
                cost,
                AuditSamples::default(),
                &mut rng,
            ) {
                Ok(report) => Ok(PairOutcome::Edge(
                    Edge {
                        source: pair.source,
                        target: pair.target,
                        controller,
                    },
                    report,
                )),
                Err(Error::AuditFailed { .. }) => Ok(PairOutcome::Warning(
                    "synthesized controller failed its audit",
                )),
                Err(e) => Err(e),
            }
        }
    }
}

/// Counters and notes from a build.
#[derive(Debug, Clone, Default)]
pub struct BuildReport {
    pub candidates: usize,
    pub infeasible: usize,
    pub synthesized: usize,
    /// Per-pair warnings (numerical trouble or audit rejection).
    pub warnings: Vec<(CandidatePair, &'static str)>,
    /// Worst audit slacks over all accepted edges.
    pub max_membership: f64,
    pub max_input_norm: f64,
    pub max_cost_excess: f64,
}

/// Merges per-pair outcomes into the final graph. Edges are ordered by
/// (source, target) so the result is identical regardless of the order in
/// which outcomes were produced.
pub fn assemble_graph(
    cover: CellCover,
    plan: &BuildPlan,
    mut outcomes: Vec<(CandidatePair, PairOutcome)>,
) -> Result<(AbstractionGraph, BuildReport)> {
    outcomes.sort_by_key(|(pair, _)| (pair.source, pair.target));
    let mut report = BuildReport {
        candidates: plan.candidates.len(),
        max_membership: f64::NEG_INFINITY,
        max_input_norm: f64::NEG_INFINITY,
        max_cost_excess: f64::NEG_INFINITY,
        ..BuildReport::default()
    };
    let mut edges = Vec::new();
    for (pair, outcome) in outcomes {
        match outcome {
            PairOutcome::Edge(edge, audit) => {
                report.synthesized += 1;
                report.max_membership = report.max_membership.max(audit.max_membership);
                report.max_input_norm = report.max_input_norm.max(audit.max_input_norm);
                report.max_cost_excess = report.max_cost_excess.max(audit.max_cost_excess);
                edges.push(edge);
            }
            PairOutcome::Infeasible => report.infeasible += 1,
            PairOutcome::Warning(msg) => report.warnings.push((pair, msg)),
        }
    }
    let graph = AbstractionGraph::new(
        cover,
        edges,
        plan.goal_ids.clone(),
        plan.blocked_ids.clone(),
    )?;
    Ok((graph, report))
}

/// Sequential end-to-end build: plan, synthesize every candidate, audit, and
/// assemble. Per-pair synthesis failures become warnings, never aborts.
pub fn build_abstraction(
    system: &PwaSystem,
    cover: &CellCover,
    goal: &Region,
    obstacles: &[Region],
    cost: &CostModel,
    tol: &SdpTolerances,
) -> Result<(AbstractionGraph, BuildReport)> {
    let plan = plan_build(system, cover, goal, obstacles)?;
    let mut outcomes = Vec::with_capacity(plan.candidates.len());
    for &pair in &plan.candidates {
        outcomes.push((pair, synthesize_pair(system, cover, cost, pair, tol)?));
    }
    assemble_graph(cover.clone(), &plan, outcomes)
}
