//! Acceptance suite: one test per release criterion, each printing a
//! PASS line with its measured numbers (`cargo test --test acceptance --
//! --nocapture` to see them). Expected values come from independent oracles
//! computed inside this file (dense grids, interval arithmetic, and direct
//! linear solves), never from the implementation under test.

use std::sync::OnceLock;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sfabs_cli::experiment::build_abstraction_parallel;
use sfabs_cli::schema::{SweepConfig, TaskConfig};
use sfabs_cli::sweep::{run_single_transition_sweep, SweepRow};
use sfabs_core::abstraction::{AbstractionGraph, CellCover};
use sfabs_core::lmi::{audit_transition, synthesize_transition, AuditSamples, SynthesisOutcome};
use sfabs_core::planner::{check_bellman, concretize_value, reverse_dijkstra, ValueFunction};
use sfabs_core::pwa::{input_box_to_ellipsoid_rows, AffineMode, CostModel, PwaSystem};
use sfabs_core::sdp::{self, LinearSdp, SdpBlock, SdpStatus, SdpTolerances};
use sfabs_core::sets::{Ellipsoid, Region};
use sfabs_core::sim::{certify_cost, rollout, NoiseModel};

fn scalar_mode(a: f64, b: f64) -> AffineMode {
    AffineMode::new(
        DMatrix::from_element(1, 1, a),
        DMatrix::from_element(1, 1, b),
        DVector::zeros(1),
    )
    .unwrap()
}

fn scalar_cost() -> CostModel {
    CostModel::new(
        DMatrix::from_diagonal(&DVector::from_row_slice(&[1.0, 1.0, 0.0])),
        1,
        1,
    )
    .unwrap()
}

fn unit_ball() -> Ellipsoid {
    Ellipsoid::ball(DVector::zeros(1), 1.0)
}

/// Interval-arithmetic feasibility for scalar unit-ball transitions with
/// ℓ = 0: `|A + K| + ω_max ≤ 1` and `|K| ≤ u_max`.
fn scalar_grid_oracle(a: f64, w_max: f64, u_max: f64) -> Option<(f64, f64)> {
    let mut best: Option<(f64, f64)> = None;
    let steps = 20_000;
    for i in 0..=steps {
        let k = -10.0 + 20.0 * i as f64 / steps as f64;
        if (a + k).abs() + w_max <= 1.0 && k.abs() <= u_max {
            let j = 1.0 + k * k;
            if best.map_or(true, |(bj, _)| j < bj) {
                best = Some((j, k));
            }
        }
    }
    best
}

#[test]
fn criterion_1_scalar_synthesis_oracle() {
    let (oracle_cost, oracle_gain) = scalar_grid_oracle(2.0, 0.0, 10.0).expect("feasible");
    assert!((oracle_cost - 2.0).abs() < 1e-6);
    assert!((oracle_gain + 1.0).abs() < 1e-3);

    let started = Instant::now();
    let outcome = synthesize_transition(
        &scalar_mode(2.0, 1.0),
        &unit_ball(),
        &unit_ball(),
        &[DVector::zeros(1)],
        &[DMatrix::from_element(1, 1, 0.1)],
        &scalar_cost(),
        &SdpTolerances::default(),
    )
    .unwrap();
    let elapsed = started.elapsed();
    let (cost_bound, gain) = match outcome {
        SynthesisOutcome::Feasible { controller, .. } => {
            (controller.cost_bound, controller.k[(0, 0)])
        }
        SynthesisOutcome::Infeasible { .. } => panic!("oracle-feasible transition"),
    };
    assert!(
        (cost_bound - oracle_cost).abs() <= 1e-3,
        "cost bound {cost_bound} vs oracle {oracle_cost}"
    );
    assert!(
        (gain - oracle_gain).abs() <= 1e-2,
        "gain {gain} vs oracle {oracle_gain}"
    );
    assert!(elapsed < Duration::from_secs(1), "took {elapsed:?}");
    println!(
        "acceptance criterion 1: PASS (cost bound {cost_bound:.6} = 2 ± 1e-3, gain {gain:.4} = −1 ± 1e-2, {elapsed:?})"
    );
}

#[test]
fn criterion_2_necessity_spot_checks() {
    assert!(scalar_grid_oracle(2.0, 0.0, 0.0).is_none());
    let started = Instant::now();
    let expanding = synthesize_transition(
        &scalar_mode(2.0, 0.0),
        &unit_ball(),
        &unit_ball(),
        &[DVector::zeros(1)],
        &[DMatrix::from_element(1, 1, 0.1)],
        &scalar_cost(),
        &SdpTolerances::default(),
    )
    .unwrap();
    let t_infeasible = started.elapsed();
    assert!(matches!(expanding, SynthesisOutcome::Infeasible { .. }));

    assert!(scalar_grid_oracle(0.5, 0.0, 0.0).is_some());
    let started = Instant::now();
    let contracting = synthesize_transition(
        &scalar_mode(0.5, 0.0),
        &unit_ball(),
        &unit_ball(),
        &[DVector::zeros(1)],
        &[DMatrix::from_element(1, 1, 0.1)],
        &scalar_cost(),
        &SdpTolerances::default(),
    )
    .unwrap();
    let t_feasible = started.elapsed();
    assert!(matches!(contracting, SynthesisOutcome::Feasible { .. }));
    assert!(t_infeasible < Duration::from_secs(1) && t_feasible < Duration::from_secs(1));
    println!(
        "acceptance criterion 2: PASS (A=2,B=0 infeasible in {t_infeasible:?}; A=0.5,B=0 feasible in {t_feasible:?}; both match interval brute force)"
    );
}

fn sweep_cell(rows: &[SweepRow], nu: f64, eta: f64, w: f64) -> &SweepRow {
    rows.iter()
        .find(|r| r.nu == nu && r.eta == eta && r.omega_max == w)
        .expect("grid point present")
}

#[test]
fn criterion_3_sweep_trends() {
    let nus = [0.5, 1.0, 2.0, 4.0];
    let etas = [1.0, 2.0, 4.0];
    let omegas = [0.001, 0.01, 0.1];
    let spec = SweepConfig {
        base: "companion3".into(),
        nu: nus.to_vec(),
        eta: etas.to_vec(),
        omega_max: omegas.to_vec(),
    };
    let started = Instant::now();
    let rows = run_single_transition_sweep(&spec).unwrap();
    let elapsed = started.elapsed();
    assert_eq!(rows.len(), 36);
    let max_solve = rows.iter().map(|r| r.solve_time_s).fold(0.0, f64::max);
    assert!(max_solve < 1.0, "per-SDP time {max_solve}s");

    // The baseline regime is feasible.
    assert!(sweep_cell(&rows, 1.0, 1.0, 0.01).feasible);

    // J~ monotone non-decreasing in ν and in η over comparable points
    // (infeasible grid points are recorded, not fatal, per the sweep
    // contract).
    let mut nu_pairs = 0;
    for &eta in &etas {
        for &w in &omegas {
            for pair in nus.windows(2) {
                let (lo, hi) = (
                    sweep_cell(&rows, pair[0], eta, w),
                    sweep_cell(&rows, pair[1], eta, w),
                );
                if let (Some(a), Some(b)) = (lo.cost_bound, hi.cost_bound) {
                    assert!(a <= b + 1e-6, "J~ not monotone in ν at η={eta}, ω={w}");
                    nu_pairs += 1;
                }
            }
        }
    }
    assert!(nu_pairs > 0, "ν-monotonicity must be exercised");
    for &nu in &nus {
        for &w in &omegas {
            for pair in etas.windows(2) {
                let (lo, hi) = (
                    sweep_cell(&rows, nu, pair[0], w),
                    sweep_cell(&rows, nu, pair[1], w),
                );
                if let (Some(a), Some(b)) = (lo.cost_bound, hi.cost_bound) {
                    assert!(a <= b + 1e-6, "J~ not monotone in η at ν={nu}, ω={w}");
                }
            }
        }
    }

    // Noise shrinks the closed-loop spectrum: ρ at ω = 0.1 never exceeds ρ at
    // ω = 0.001 for fixed (ν, η = 1). On this grid ω = 0.1 is infeasible for
    // every ν ≤ 4: the best one-step contraction in the P₀ metric over all
    // rank-one gain updates is ≈ 0.927, and the ω = 0.1 noise corner then
    // exceeds the remaining room (a direct controller search confirms both),
    // so the same comparison is also run at ν = 20 where both endpoints are
    // feasible and the trend is observable.
    let mut rho_pairs = 0;
    for &nu in &nus {
        let lo = sweep_cell(&rows, nu, 1.0, 0.001);
        let hi = sweep_cell(&rows, nu, 1.0, 0.1);
        if let (Some(a), Some(b)) = (lo.spectral_radius, hi.spectral_radius) {
            assert!(b <= a + 1e-9, "spectrum grew with noise at ν={nu}");
            rho_pairs += 1;
        }
    }
    let wide = run_single_transition_sweep(&SweepConfig {
        base: "companion3".into(),
        nu: vec![20.0],
        eta: vec![1.0],
        omega_max: vec![0.001, 0.1],
    })
    .unwrap();
    let (lo, hi) = (
        sweep_cell(&wide, 20.0, 1.0, 0.001),
        sweep_cell(&wide, 20.0, 1.0, 0.1),
    );
    let (rho_lo, rho_hi) = (lo.spectral_radius.unwrap(), hi.spectral_radius.unwrap());
    assert!(rho_hi <= rho_lo + 1e-9, "spectrum grew with noise at ν=20");
    rho_pairs += 1;
    println!(
        "acceptance criterion 3: PASS (36-point grid in {elapsed:?}, max solve {max_solve:.3}s, {nu_pairs} ν-pairs monotone, ρ-shrink checked on {rho_pairs} pair(s): {rho_lo:.4} → {rho_hi:.4} at ν=20)"
    );
}

struct Pipeline {
    system: PwaSystem,
    cost: CostModel,
    graph: AbstractionGraph,
    vf: ValueFunction,
    build_seconds: f64,
    audit_rejects: usize,
}

fn task() -> TaskConfig {
    let text = std::fs::read_to_string(
        std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/spiral_task.json"),
    )
    .expect("shipped task config");
    serde_json::from_str(&text).expect("valid task config")
}

fn pipeline() -> &'static Pipeline {
    static PIPELINE: OnceLock<Pipeline> = OnceLock::new();
    PIPELINE.get_or_init(|| {
        let task = task();
        let (system, cost) = task.system.to_core().unwrap();
        let cover = CellCover::build(&system, task.radius).unwrap();
        let goal = task.goal.to_core("goal").unwrap();
        let obstacles: Vec<Region> = task
            .obstacles
            .iter()
            .map(|o| o.to_core("obstacle").unwrap())
            .collect();
        let started = Instant::now();
        let (graph, report) = build_abstraction_parallel(
            &system,
            &cover,
            &goal,
            &obstacles,
            &cost,
            &SdpTolerances::default(),
            false,
        )
        .unwrap();
        let build_seconds = started.elapsed().as_secs_f64();
        let vf = reverse_dijkstra(&graph);
        Pipeline {
            system,
            cost,
            graph,
            vf,
            build_seconds,
            audit_rejects: report.warnings.len(),
        }
    })
}

#[test]
fn criterion_4_end_to_end_certified_rollouts() {
    let p = pipeline();
    let task = task();
    assert!(
        p.build_seconds < 1800.0,
        "build took {:.0}s, budget 30 min",
        p.build_seconds
    );
    let edges = p.graph.edges().len();
    assert!(
        (1_000..=100_000).contains(&edges),
        "edge count {edges} outside [1e3, 1e5]"
    );

    let x0 = DVector::from_row_slice(&task.x0);
    let start_value = concretize_value(&p.vf, p.graph.cover(), &x0).unwrap();
    assert!(
        start_value.is_finite(),
        "no certified value at the start state"
    );

    let goal = task.goal.to_core("goal").unwrap();
    let obstacles: Vec<Region> = task
        .obstacles
        .iter()
        .map(|o| o.to_core("obstacle").unwrap())
        .collect();
    let mut worst_cost = 0.0f64;
    for seed in 0..100u64 {
        // Per-step containment is asserted inside `rollout`; an escape
        // returns an error and fails the criterion.
        let r = rollout(
            &p.system,
            &p.graph,
            &p.vf,
            &p.cost,
            &x0,
            seed,
            task.max_steps,
            NoiseModel::Uniform,
        )
        .unwrap_or_else(|e| panic!("rollout seed {seed}: {e}"));
        assert!(r.reached_goal, "seed {seed} missed the goal");
        // Goal entry is detected by cell, and goal cells lie inside the goal
        // region, so the final state must be inside it too.
        let last = r.states.last().unwrap();
        assert!(
            goal.contains_point(last),
            "seed {seed} ended outside the goal"
        );
        for state in &r.states {
            assert!(
                obstacles.iter().all(|o| !o.contains_point(state)),
                "seed {seed} touched an obstacle"
            );
        }
        certify_cost(&r, &p.vf, p.graph.cover())
            .unwrap_or_else(|e| panic!("certification seed {seed}: {e}"));
        assert!(
            r.total_cost <= start_value + 1e-6,
            "seed {seed}: cost {} exceeds value {start_value}",
            r.total_cost
        );
        worst_cost = worst_cost.max(r.total_cost);
    }

    // Stress containment with the extreme points of the successor hull: the
    // adversarial vertex picker maximizes target membership at every step.
    for seed in 0..10u64 {
        let r = rollout(
            &p.system,
            &p.graph,
            &p.vf,
            &p.cost,
            &x0,
            seed,
            task.max_steps,
            NoiseModel::AdversarialVertex,
        )
        .unwrap_or_else(|e| panic!("adversarial rollout seed {seed}: {e}"));
        assert!(r.reached_goal, "adversarial seed {seed} missed the goal");
        certify_cost(&r, &p.vf, p.graph.cover())
            .unwrap_or_else(|e| panic!("adversarial certification seed {seed}: {e}"));
    }

    // The graph survives persistence bit-for-bit at full scale.
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("abstraction.json");
    sfabs_cli::io::save_abstraction(&task.system, &p.graph, &path).unwrap();
    let (_, _, reloaded) = sfabs_cli::io::load_abstraction(&path).unwrap();
    assert_eq!(reloaded.edges().len(), p.graph.edges().len());
    for (a, b) in p.graph.edges().iter().zip(reloaded.edges()) {
        assert_eq!((a.source, a.target), (b.source, b.target));
        assert_eq!(a.controller, b.controller);
    }
    assert_eq!(reloaded.goal_ids(), p.graph.goal_ids());
    assert_eq!(reloaded.blocked_ids(), p.graph.blocked_ids());
    let file_size = std::fs::metadata(&path).unwrap().len();

    println!(
        "acceptance criterion 4: PASS ({edges} edges in {:.1}s, v(x0) = {start_value:.4}, 100/100 uniform + 10/10 adversarial rollouts certified, worst cost {worst_cost:.4} ≤ {start_value:.4}; graph round-trips bit-exactly through a {file_size}-byte file)",
        p.build_seconds
    );
}

#[test]
fn criterion_5_certificate_audits() {
    let p = pipeline();
    assert_eq!(
        p.audit_rejects, 0,
        "{} synthesized controllers failed their build-time audit",
        p.audit_rejects
    );
    let input_rows = input_box_to_ellipsoid_rows(p.system.input_box()).unwrap();
    let mut worst_membership = f64::NEG_INFINITY;
    for (eid, edge) in p.graph.edges().iter().enumerate() {
        let cover = p.graph.cover();
        let mode_id = cover.mode_of_cell(edge.source);
        let noise_vertices = p.system.noise_box(mode_id).vertices(6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0xACCE97 ^ eid as u64);
        let report = audit_transition(
            &edge.controller,
            p.system.mode(mode_id),
            cover.cell(edge.source),
            cover.cell(edge.target),
            &noise_vertices,
            &input_rows,
            &p.cost,
            AuditSamples::default(),
            &mut rng,
        )
        .unwrap_or_else(|e| panic!("edge {eid} failed its audit: {e}"));
        worst_membership = worst_membership.max(report.max_membership);
    }
    let bellman = check_bellman(&p.graph, &p.vf).expect("Bellman inequality");
    println!(
        "acceptance criterion 5: PASS ({} edges re-audited at 300 samples each, worst membership {worst_membership:.6}; Bellman holds on {} finite cells)",
        p.graph.edges().len(),
        bellman.finite_cells
    );
}

/// Random strictly feasible instance with box-bounded variables (same recipe
/// as the solver's unit suite, reproduced here as an independent fixture).
fn random_sdp(rng: &mut ChaCha8Rng, num_vars: usize) -> LinearSdp {
    use sfabs_core::linalg::{sym_min_eigenvalue, symmetrize};
    let y0 = DVector::from_fn(num_vars, |_, _| rng.random_range(-1.0..1.0));
    let num_blocks = rng.random_range(1..=3usize);
    let mut blocks = Vec::new();
    for _ in 0..num_blocks {
        let dim = rng.random_range(1..=3usize);
        let coeffs: Vec<DMatrix<f64>> = (0..num_vars)
            .map(|_| {
                symmetrize(&DMatrix::from_fn(dim, dim, |_, _| {
                    rng.random_range(-1.0..1.0)
                }))
            })
            .collect();
        let base = symmetrize(&DMatrix::from_fn(dim, dim, |_, _| {
            rng.random_range(-1.0..1.0)
        }));
        let lift = -sym_min_eigenvalue(&base) + rng.random_range(0.3..1.0);
        let mut f0 = base + DMatrix::identity(dim, dim) * lift;
        for (j, f) in coeffs.iter().enumerate() {
            f0 -= f * y0[j];
        }
        blocks.push(SdpBlock {
            f0: symmetrize(&f0),
            coeffs,
        });
    }
    for j in 0..num_vars {
        for sign in [1.0, -1.0] {
            let mut c = vec![DMatrix::zeros(1, 1); num_vars];
            c[j] = DMatrix::from_element(1, 1, sign);
            blocks.push(SdpBlock {
                f0: DMatrix::from_element(1, 1, 3.0),
                coeffs: c,
            });
        }
    }
    let c = DVector::from_fn(num_vars, |_, _| rng.random_range(-1.0..1.0));
    LinearSdp::new(c, blocks).unwrap()
}

/// Multilevel dense grid minimization over the boxed feasible set;
/// feasibility via Cholesky of the slightly shifted pencil.
fn grid_minimum_with_steps(prob: &LinearSdp, steps: usize) -> Option<f64> {
    let m = prob.num_vars();
    let feasible = |y: &DVector<f64>| {
        prob.blocks.iter().all(|b| {
            (b.eval(y) + DMatrix::identity(b.dim(), b.dim()) * 1e-9)
                .cholesky()
                .is_some()
        })
    };
    let mut lo = vec![-3.2; m];
    let mut hi = vec![3.2; m];
    let mut best: Option<(f64, DVector<f64>)> = None;
    for _ in 0..4 {
        let mut level_best: Option<(f64, DVector<f64>)> = None;
        let mut idx = vec![0usize; m];
        loop {
            let y = DVector::from_iterator(
                m,
                idx.iter()
                    .enumerate()
                    .map(|(d, &i)| lo[d] + (hi[d] - lo[d]) * i as f64 / steps as f64),
            );
            if feasible(&y) {
                let v = prob.objective.dot(&y);
                if level_best.as_ref().map_or(true, |(b, _)| v < *b) {
                    level_best = Some((v, y.clone()));
                }
            }
            let mut d = 0;
            while d < m {
                idx[d] += 1;
                if idx[d] <= steps {
                    break;
                }
                idx[d] = 0;
                d += 1;
            }
            if d == m {
                break;
            }
        }
        let (v, y) = level_best?;
        if best.as_ref().map_or(true, |(b, _)| v < *b) {
            best = Some((v, y.clone()));
        }
        let span: Vec<f64> = (0..m).map(|d| (hi[d] - lo[d]) / steps as f64).collect();
        for d in 0..m {
            lo[d] = y[d] - 8.0 * span[d];
            hi[d] = y[d] + 8.0 * span[d];
        }
    }
    best.map(|(v, _)| v)
}

/// Self-validating grid oracle: two unrelated grid alignments must agree, or
/// the instance counts as unresolvable by brute force (thin feasible needles
/// can slip between grid points at any fixed resolution).
fn grid_minimum(prob: &LinearSdp) -> Option<f64> {
    let a = grid_minimum_with_steps(prob, 160)?;
    let b = grid_minimum_with_steps(prob, 149)?;
    if (a - b).abs() > 5e-4 {
        return None;
    }
    Some(a.min(b))
}

#[test]
fn criterion_6_solver_property_suite() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5D9);
    let mut worst_gap = 0.0f64;
    let mut worst_slack = f64::INFINITY;
    // Tight solve tolerances: the grid comparison measures where the optimum
    // is, so the solver must not wander 1e-3 past the boundary on instances
    // with large dual sensitivity. The feasibility recheck below stays at the
    // stated −1e-6.
    let tol = SdpTolerances {
        feas_tol: 1e-9,
        gap_tol: 1e-8,
        max_iter: 200,
    };
    let mut accepted = 0usize;
    let mut skipped = 0usize;
    let mut trial = 0usize;
    while accepted < 200 {
        let m = 1 + (trial % 2);
        trial += 1;
        let prob = random_sdp(&mut rng, m);
        let Some(oracle) = grid_minimum(&prob) else {
            // Brute force could not certify this instance (grid alignments
            // disagree); it says nothing about the solver either way.
            skipped += 1;
            assert!(skipped <= 60, "too many grid-unresolvable instances");
            continue;
        };
        accepted += 1;
        let sol = sdp::solve(&prob, &tol);
        assert_eq!(sol.status, SdpStatus::Optimal, "trial {trial} not optimal");
        // Independent feasibility recheck through the public eigensolver.
        let recheck = prob
            .blocks
            .iter()
            .map(|b| sdp::min_eigenvalue(&sfabs_core::linalg::symmetrize(&b.eval(&sol.y))).unwrap())
            .fold(f64::INFINITY, f64::min);
        assert!(
            recheck >= -1e-6,
            "trial {trial}: infeasible by recheck ({recheck:e})"
        );
        worst_slack = worst_slack.min(recheck);
        let diff = (sol.objective_value - oracle).abs();
        assert!(
            diff <= 1e-3,
            "trial {trial}: solver {} vs grid {oracle} (diff {diff:e})",
            sol.objective_value
        );
        worst_gap = worst_gap.max(diff);
    }
    println!(
        "acceptance criterion 6: PASS (200 random SDPs: worst |obj − grid| = {worst_gap:.2e}, worst feasibility slack {worst_slack:.2e} ≥ −1e-6; {skipped} grid-unresolvable instances resampled)"
    );
}

#[test]
fn criterion_7_equilibrium_check() {
    let task = task();
    let (system, _) = task.system.to_core().unwrap();
    let a1 = &system.mode(0).a;
    let g1 = &system.mode(0).g;
    let x_eq = (DMatrix::identity(2, 2) - a1)
        .lu()
        .solve(g1)
        .expect("I − A₁ invertible");
    assert!((x_eq[0] - (-0.9635)).abs() < 5e-5, "x_eq[0] = {}", x_eq[0]);
    assert!((x_eq[1] - 0.3654).abs() < 5e-5, "x_eq[1] = {}", x_eq[1]);
    println!(
        "acceptance criterion 7: PASS (equilibrium ({:.4}, {:.4}) matches (−0.9635, 0.3654) to 4 decimals)",
        x_eq[0], x_eq[1]
    );
}
