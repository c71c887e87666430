//! End-to-end optimal-control experiment: build the abstraction in parallel,
//! plan values, run seeded rollouts, certify everything, and emit artifacts.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use anyhow::{bail, Context};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sfabs_core::abstraction::{
    assemble_graph, plan_build, synthesize_pair, AbstractionGraph, BuildReport, CellCover,
};
use sfabs_core::planner::{check_bellman, concretize_value, reverse_dijkstra, ValueFunction};
use sfabs_core::pwa::{CostModel, PwaSystem};
use sfabs_core::sdp::SdpTolerances;
use sfabs_core::sets::Region;
use sfabs_core::sim::{certify_cost, rollout, NoiseModel, Rollout};

use crate::io;
use crate::schema::{vec_to_dvector, TaskConfig};

/// Parallel counterpart of `sfabs_core::abstraction::build_abstraction`:
/// candidate pairs are synthesized across the rayon pool and merged in
/// deterministic (source, target) order, so the graph is identical to a
/// sequential build.
pub fn build_abstraction_parallel(
    system: &PwaSystem,
    cover: &CellCover,
    goal: &Region,
    obstacles: &[Region],
    cost: &CostModel,
    tol: &SdpTolerances,
    progress: bool,
) -> anyhow::Result<(AbstractionGraph, BuildReport)> {
    let plan = plan_build(system, cover, goal, obstacles).context("build planning failed")?;
    let done = AtomicUsize::new(0);
    let total = plan.candidates.len();
    let outcomes: Vec<_> = plan
        .candidates
        .par_iter()
        .map(|&pair| {
            let out = synthesize_pair(system, cover, cost, pair, tol).map(|o| (pair, o));
            if progress {
                let n = done.fetch_add(1, Ordering::Relaxed) + 1;
                if n % 1000 == 0 || n == total {
                    eprintln!("synthesis {n}/{total}");
                }
            }
            out
        })
        .collect::<sfabs_core::Result<_>>()
        .context("candidate synthesis failed")?;
    let (graph, report) =
        assemble_graph(cover.clone(), &plan, outcomes).context("graph assembly failed")?;
    Ok((graph, report))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RolloutSummary {
    pub seed: u64,
    pub steps: usize,
    pub reached_goal: bool,
    pub total_cost: f64,
}

/// Machine-readable record of one experiment run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub cells: usize,
    pub candidates: usize,
    pub edge_count: usize,
    pub infeasible_pairs: usize,
    pub build_warnings: Vec<String>,
    pub build_seconds: f64,
    pub plan_seconds: f64,
    pub finite_valued_cells: usize,
    /// Certified cost-to-go at the start state.
    pub start_value: f64,
    pub rollouts: Vec<RolloutSummary>,
    /// Worst audit slacks over all edges (from the build-time audits).
    pub max_membership: f64,
    pub max_input_norm: f64,
    pub max_cost_excess: f64,
}

/// Runs the full pipeline described by `task` and writes four artifacts into
/// `out_dir`: `abstraction.json`, `values.csv`, `trajectories.csv`, and
/// `summary.json`. Fails (nonzero exit) unless the Bellman check and every
/// rollout certification pass.
pub fn run_optimal_control_experiment(
    task: &TaskConfig,
    out_dir: &Path,
    base_seed: u64,
    progress: bool,
    verbose: bool,
) -> anyhow::Result<ExperimentSummary> {
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("cannot create output directory {}", out_dir.display()))?;
    let (system, cost) = task.system.to_core()?;
    let goal = task.goal.to_core("goal")?;
    let obstacles: Vec<Region> = task
        .obstacles
        .iter()
        .map(|o| o.to_core("obstacle"))
        .collect::<anyhow::Result<_>>()?;
    let cover = CellCover::build(&system, task.radius).context("cover construction failed")?;
    if verbose {
        eprintln!("cover: {} cells of radius {}", cover.len(), task.radius);
    }

    let build_started = Instant::now();
    let (graph, report) = build_abstraction_parallel(
        &system,
        &cover,
        &goal,
        &obstacles,
        &cost,
        &SdpTolerances::default(),
        progress,
    )?;
    let build_seconds = build_started.elapsed().as_secs_f64();
    if verbose {
        eprintln!(
            "built {} edges from {} candidates in {:.1}s ({} infeasible, {} warnings)",
            graph.edges().len(),
            report.candidates,
            build_seconds,
            report.infeasible,
            report.warnings.len()
        );
    }

    let plan_started = Instant::now();
    let vf = reverse_dijkstra(&graph);
    let plan_seconds = plan_started.elapsed().as_secs_f64();
    let bellman = check_bellman(&graph, &vf).context("Bellman check failed")?;

    let x0 = vec_to_dvector(&task.x0);
    let start_value =
        concretize_value(&vf, graph.cover(), &x0).context("start state lies outside the cover")?;
    if !start_value.is_finite() {
        bail!("no certified path from the start state to the goal");
    }
    if verbose {
        eprintln!("start value v(x0) = {start_value:.4}");
    }

    let mut rollouts: Vec<Rollout> = Vec::with_capacity(task.rollouts);
    let mut summaries = Vec::with_capacity(task.rollouts);
    for i in 0..task.rollouts {
        let seed = base_seed + i as u64;
        let r = rollout(
            &system,
            &graph,
            &vf,
            &cost,
            &x0,
            seed,
            task.max_steps,
            NoiseModel::Uniform,
        )
        .with_context(|| format!("rollout with seed {seed} failed"))?;
        if !r.reached_goal {
            bail!("rollout with seed {seed} hit the step cap before the goal");
        }
        certify_cost(&r, &vf, graph.cover())
            .with_context(|| format!("cost certification failed for seed {seed}"))?;
        summaries.push(RolloutSummary {
            seed,
            steps: r.stage_costs.len(),
            reached_goal: r.reached_goal,
            total_cost: r.total_cost,
        });
        rollouts.push(r);
    }

    let values_along: Vec<Vec<f64>> = rollouts
        .iter()
        .map(|r| {
            r.states
                .iter()
                .map(|s| concretize_value(&vf, graph.cover(), s))
                .collect::<sfabs_core::Result<Vec<f64>>>()
        })
        .collect::<sfabs_core::Result<_>>()
        .context("value lookup along a trajectory failed")?;

    io::save_abstraction(&task.system, &graph, &out_dir.join("abstraction.json"))?;
    io::write_values_csv(&graph, &vf, &out_dir.join("values.csv"))?;
    io::write_trajectories_csv(&rollouts, &values_along, &out_dir.join("trajectories.csv"))?;

    let summary = ExperimentSummary {
        cells: graph.cover().len(),
        candidates: report.candidates,
        edge_count: graph.edges().len(),
        infeasible_pairs: report.infeasible,
        build_warnings: report
            .warnings
            .iter()
            .map(|(pair, msg)| format!("({} -> {}): {msg}", pair.source, pair.target))
            .collect(),
        build_seconds,
        plan_seconds,
        finite_valued_cells: bellman.finite_cells,
        start_value,
        rollouts: summaries,
        max_membership: report.max_membership,
        max_input_norm: report.max_input_norm,
        max_cost_excess: report.max_cost_excess,
    };
    io::write_json(&summary, &out_dir.join("summary.json"))?;
    Ok(summary)
}

/// Plans values for a loaded abstraction and checks the Bellman inequality.
pub fn plan_values(graph: &AbstractionGraph) -> anyhow::Result<ValueFunction> {
    let vf = reverse_dijkstra(graph);
    check_bellman(graph, &vf).context("Bellman check failed")?;
    Ok(vf)
}
