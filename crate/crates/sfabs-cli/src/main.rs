use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use rand::SeedableRng;
use sfabs_cli::schema::{
    vec_to_dvector, ControllerRecord, DiagnosticsRecord, SweepConfig, SynthesisRecord, TaskConfig,
    TransitionProblemConfig,
};
use sfabs_cli::{experiment, io, sweep};
use sfabs_core::lmi::{assemble_synthesis_sdp, synthesize_transition, SynthesisOutcome};
use sfabs_core::pwa::{input_box_to_ellipsoid_rows, CostModel, MAX_VERTEX_DIM};
use sfabs_core::sdp::SdpTolerances;
use sfabs_core::sim::{certify_cost, rollout, NoiseModel};

/// Certified transition synthesis, abstraction building, value planning, and
/// closed-loop simulation for piecewise-affine systems under bounded noise.
#[derive(Parser)]
#[command(name = "sfabs", version, about)]
struct Cli {
    /// Base seed for randomized stages (rollout noise).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads for parallel synthesis (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Chatty progress information on stderr.
    #[arg(long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one ellipsoid-to-ellipsoid transition and write the controller.
    SynthesizeTransition {
        /// JSON problem: mode, source, target, noise_box, input_box, cost_Q.
        #[arg(long)]
        config: PathBuf,
        /// Output controller record (JSON).
        #[arg(long)]
        out: PathBuf,
        /// Also dump the assembled SDP (JSON) for solver debugging.
        #[arg(long)]
        dump_sdp: Option<PathBuf>,
    },
    /// Cover the domain, synthesize all certified transitions, persist the
    /// graph.
    BuildAbstraction {
        /// Task JSON: system, radius, goal, obstacles (x0/rollouts ignored).
        #[arg(long)]
        config: PathBuf,
        /// Cell radius; overrides the value in the config.
        #[arg(long)]
        radius: Option<f64>,
        /// Output abstraction file (JSON, schema v1).
        #[arg(long)]
        out: PathBuf,
        /// Print synthesis progress on stderr.
        #[arg(long)]
        progress: bool,
    },
    /// Compute the value function over a stored abstraction.
    Plan {
        #[arg(long)]
        abstraction: PathBuf,
        /// Output CSV: cell_id, center coords, value, policy_edge_id.
        #[arg(long)]
        out: PathBuf,
    },
    /// Roll out the closed loop from a start state under stored values.
    Simulate {
        #[arg(long)]
        abstraction: PathBuf,
        /// Values CSV previously written by `plan`.
        #[arg(long)]
        values: PathBuf,
        /// Start state, comma-separated (e.g. "1.5,-1.5").
        #[arg(long, allow_hyphen_values = true)]
        x0: String,
        /// Number of seeded rollouts (seeds seed..seed+n-1).
        #[arg(long, default_value_t = 1)]
        seeds: usize,
        /// Output trajectory CSV.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = sfabs_core::sim::DEFAULT_MAX_STEPS)]
        max_steps: usize,
    },
    /// Run the single-transition parameter sweep and write its table.
    Sweep {
        /// JSON grids: nu, eta, omega_max (base defaults to "companion3").
        #[arg(long)]
        config: PathBuf,
        /// Output CSV table.
        #[arg(long)]
        out: PathBuf,
    },
    /// Full optimal-control experiment: build, plan, simulate, summarize.
    Experiment {
        /// Task JSON: system, radius, goal, obstacles, x0, rollouts.
        #[arg(long)]
        config: PathBuf,
        /// Output directory for the four artifacts.
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        /// Print synthesis progress on stderr.
        #[arg(long)]
        progress: bool,
    },
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("thread pool configuration failed")?;
    }
    match cli.command {
        Command::SynthesizeTransition {
            config,
            out,
            dump_sdp,
        } => {
            let problem: TransitionProblemConfig = io::read_json(&config)?;
            let mode = problem.mode.to_core()?;
            let source = problem.source.to_core("source")?;
            let target = problem.target.to_core("target")?;
            let noise_vertices = problem
                .noise_box
                .to_core("noise_box")?
                .vertices(MAX_VERTEX_DIM)?;
            let input_rows = input_box_to_ellipsoid_rows(&problem.input_box.to_core("input_box")?)?;
            let cost = CostModel::new(
                sfabs_cli::schema::rows_to_matrix(&problem.cost_q, "cost_Q")?,
                mode.state_dim(),
                mode.input_dim(),
            )?;
            if let Some(dump_path) = dump_sdp {
                let sdp = assemble_synthesis_sdp(
                    &mode,
                    &source,
                    &target,
                    &noise_vertices,
                    &input_rows,
                    &cost,
                )?;
                io::dump_sdp(&sdp, &dump_path)?;
            }
            let started = std::time::Instant::now();
            let outcome = synthesize_transition(
                &mode,
                &source,
                &target,
                &noise_vertices,
                &input_rows,
                &cost,
                &SdpTolerances::default(),
            )?;
            let solve_seconds = started.elapsed().as_secs_f64();
            let record = match outcome {
                SynthesisOutcome::Feasible {
                    controller,
                    diagnostics,
                } => {
                    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cli.seed);
                    sfabs_core::lmi::audit_transition(
                        &controller,
                        &mode,
                        &source,
                        &target,
                        &noise_vertices,
                        &input_rows,
                        &cost,
                        sfabs_core::lmi::AuditSamples::default(),
                        &mut rng,
                    )
                    .context("synthesized controller failed its audit")?;
                    if cli.verbose {
                        eprintln!(
                            "feasible: cost bound {:.6} in {} iterations (audit passed)",
                            controller.cost_bound, diagnostics.iterations
                        );
                    }
                    SynthesisRecord {
                        status: "feasible".into(),
                        controller: Some(ControllerRecord::from_core(&controller)),
                        infeasibility_margin: None,
                        diagnostics: Some(DiagnosticsRecord::from_core(
                            &diagnostics,
                            solve_seconds,
                        )),
                    }
                }
                SynthesisOutcome::Infeasible { margin } => {
                    if cli.verbose {
                        eprintln!("infeasible: phase-1 margin {margin:.3e}");
                    }
                    SynthesisRecord {
                        status: "infeasible".into(),
                        controller: None,
                        infeasibility_margin: Some(margin),
                        diagnostics: None,
                    }
                }
            };
            io::write_json(&record, &out)?;
        }
        Command::BuildAbstraction {
            config,
            radius,
            out,
            progress,
        } => {
            let mut task: TaskConfig = io::read_json(&config)?;
            if let Some(r) = radius {
                task.radius = r;
            }
            let (system, cost) = task.system.to_core()?;
            let goal = task.goal.to_core("goal")?;
            let obstacles: Vec<_> = task
                .obstacles
                .iter()
                .map(|o| o.to_core("obstacle"))
                .collect::<anyhow::Result<_>>()?;
            let cover = sfabs_core::abstraction::CellCover::build(&system, task.radius)?;
            let (graph, report) = experiment::build_abstraction_parallel(
                &system,
                &cover,
                &goal,
                &obstacles,
                &cost,
                &SdpTolerances::default(),
                progress,
            )?;
            if cli.verbose || !report.warnings.is_empty() {
                eprintln!(
                    "{} edges from {} candidates ({} infeasible, {} warnings)",
                    graph.edges().len(),
                    report.candidates,
                    report.infeasible,
                    report.warnings.len()
                );
                for (pair, msg) in &report.warnings {
                    eprintln!("warning: ({} -> {}): {msg}", pair.source, pair.target);
                }
            }
            io::save_abstraction(&task.system, &graph, &out)?;
            if !report.warnings.is_empty() {
                bail!(
                    "{} candidate pairs failed synthesis or audit",
                    report.warnings.len()
                );
            }
        }
        Command::Plan { abstraction, out } => {
            let (_, _, graph) = io::load_abstraction(&abstraction)?;
            let vf = experiment::plan_values(&graph)?;
            io::write_values_csv(&graph, &vf, &out)?;
            if cli.verbose {
                let finite = vf.values().iter().filter(|v| v.is_finite()).count();
                eprintln!("{finite}/{} cells have finite values", graph.cover().len());
            }
        }
        Command::Simulate {
            abstraction,
            values,
            x0,
            seeds,
            out,
            max_steps,
        } => {
            let (system, cost, graph) = io::load_abstraction(&abstraction)?;
            let vf = io::read_values_csv(&values, &graph)?;
            sfabs_core::planner::check_bellman(&graph, &vf)
                .context("stored values fail the Bellman check for this abstraction")?;
            let x0: Vec<f64> = x0
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .context("cannot parse --x0")?;
            let x0 = vec_to_dvector(&x0);
            let mut rollouts = Vec::with_capacity(seeds);
            let mut values_along = Vec::with_capacity(seeds);
            for i in 0..seeds {
                let seed = cli.seed + i as u64;
                let r = rollout(
                    &system,
                    &graph,
                    &vf,
                    &cost,
                    &x0,
                    seed,
                    max_steps,
                    NoiseModel::Uniform,
                )
                .with_context(|| format!("rollout with seed {seed} failed"))?;
                if !r.reached_goal {
                    bail!("rollout with seed {seed} hit the step cap before the goal");
                }
                let cert = certify_cost(&r, &vf, graph.cover())
                    .with_context(|| format!("certification failed for seed {seed}"))?;
                if cli.verbose {
                    eprintln!(
                        "seed {seed}: {} steps, cost {:.4} ≤ value {:.4}",
                        cert.steps, cert.total_cost, cert.start_value
                    );
                }
                values_along.push(
                    r.states
                        .iter()
                        .map(|s| sfabs_core::planner::concretize_value(&vf, graph.cover(), s))
                        .collect::<sfabs_core::Result<Vec<f64>>>()?,
                );
                rollouts.push(r);
            }
            // Re-audit every edge the rollouts actually exercised.
            let input_rows = input_box_to_ellipsoid_rows(system.input_box())?;
            let mut used: Vec<usize> = rollouts
                .iter()
                .flat_map(|r| r.cells.iter())
                .filter_map(|&(cell, _)| vf.policy(cell))
                .collect();
            used.sort_unstable();
            used.dedup();
            for eid in used {
                let edge = graph.edge(eid);
                let cover = graph.cover();
                let mode_id = cover.mode_of_cell(edge.source);
                let noise_vertices = system.noise_box(mode_id).vertices(MAX_VERTEX_DIM)?;
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cli.seed ^ eid as u64);
                sfabs_core::lmi::audit_transition(
                    &edge.controller,
                    system.mode(mode_id),
                    cover.cell(edge.source),
                    cover.cell(edge.target),
                    &noise_vertices,
                    &input_rows,
                    &cost,
                    sfabs_core::lmi::AuditSamples::default(),
                    &mut rng,
                )
                .with_context(|| format!("edge {eid} failed its audit"))?;
            }
            io::write_trajectories_csv(&rollouts, &values_along, &out)?;
        }
        Command::Sweep { config, out } => {
            let spec: SweepConfig = io::read_json(&config)?;
            let rows = sweep::run_single_transition_sweep(&spec)?;
            if cli.verbose {
                let feasible = rows.iter().filter(|r| r.feasible).count();
                eprintln!("{feasible}/{} grid points feasible", rows.len());
            }
            io::write_sweep_csv(&rows, &out)?;
        }
        Command::Experiment {
            config,
            out_dir,
            progress,
        } => {
            let task: TaskConfig = io::read_json(&config)?;
            let summary = experiment::run_optimal_control_experiment(
                &task,
                &out_dir,
                cli.seed,
                progress,
                cli.verbose,
            )?;
            println!(
                "{} edges, v(x0) = {:.4}, {} rollouts certified",
                summary.edge_count,
                summary.start_value,
                summary.rollouts.len()
            );
            if !summary.build_warnings.is_empty() {
                bail!("{} build warnings", summary.build_warnings.len());
            }
        }
    }
    Ok(())
}
