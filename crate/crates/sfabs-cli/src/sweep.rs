//! Single-transition parameter sweep on the built-in benchmark problem.
//!
//! The base problem is a third-order continuous-time system in companion
//! form, discretized with a zero-order hold at T = 0.5:
//!
//! ```text
//! A_c = [0 1 0; 0 0 1; 1 −1 −1],  B_c = [0; 0; 1],  |u| ≤ 10
//! ```
//!
//! Source and target ellipsoids derive from a fixed Lyapunov-certified shape
//! `P₀` via a volume multiplier ν (`P = ν⁻¹P₀`, larger ν = larger source) and
//! a contraction ratio η (`P₊ = ηP`, larger η = smaller target), with the
//! target centered at (0.1, 0.5, 1.9). The stage cost is `xᵀx + uᵀu`. Each
//! grid point reports feasibility, the optimal cost bound, the closed-loop
//! spectral radius, and the wall-clock solve time.

use std::time::Instant;

use anyhow::{bail, Context};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use sfabs_core::linalg::zoh_discretize;
use sfabs_core::lmi::{
    audit_transition, closed_loop_spectral_radius, synthesize_transition, AuditSamples,
    SynthesisOutcome, TransitionController,
};
use sfabs_core::pwa::{AffineMode, CostModel};
use sfabs_core::sdp::SdpTolerances;
use sfabs_core::sets::{AaBox, Ellipsoid};

use crate::schema::SweepConfig;

/// Discretization tolerance for the base problem (fixed so the discretized
/// matrices are reproducible bit-for-bit across runs).
pub const DISCRETIZATION_TOL: f64 = 1e-12;

/// The built-in base problem of the sweep.
pub struct BaseProblem {
    pub mode: AffineMode,
    pub p0: DMatrix<f64>,
    pub target_center: DVector<f64>,
    pub input_rows: Vec<DMatrix<f64>>,
    pub cost: CostModel,
}

/// Companion-form oscillator, ZOH-discretized at T = 0.5, `|u| ≤ 10`,
/// `J(x, u) = xᵀx + uᵀu`.
pub fn companion3() -> anyhow::Result<BaseProblem> {
    let a_c = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, -1.0, -1.0]);
    let b_c = DMatrix::from_row_slice(3, 1, &[0.0, 0.0, 1.0]);
    let (a, b) = zoh_discretize(&a_c, &b_c, 0.5, DISCRETIZATION_TOL)
        .context("discretization of the base problem failed")?;
    let mode = AffineMode::new(a, b, DVector::zeros(3)).context("invalid base mode")?;
    let p0 = DMatrix::from_row_slice(
        3,
        3,
        &[
            2.8106, 1.6583, 1.0143, //
            1.6583, 4.4629, 1.4071, //
            1.0143, 1.4071, 2.3453,
        ],
    );
    let input_rows = sfabs_core::pwa::input_box_to_ellipsoid_rows(&AaBox::centered(
        &DVector::from_element(1, 10.0),
    )?)
    .context("input rows")?;
    let cost = CostModel::new(
        DMatrix::from_diagonal(&DVector::from_row_slice(&[1.0, 1.0, 1.0, 1.0, 0.0])),
        3,
        1,
    )
    .context("base cost")?;
    Ok(BaseProblem {
        mode,
        p0,
        target_center: DVector::from_row_slice(&[0.1, 0.5, 1.9]),
        input_rows,
        cost,
    })
}

/// One sweep grid point.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub nu: f64,
    pub eta: f64,
    pub omega_max: f64,
    pub feasible: bool,
    pub cost_bound: Option<f64>,
    pub spectral_radius: Option<f64>,
    pub solve_time_s: f64,
}

/// Synthesizes one grid point of the sweep; `None` cost/radius on
/// infeasibility.
pub fn sweep_point(
    base: &BaseProblem,
    nu: f64,
    eta: f64,
    omega_max: f64,
) -> anyhow::Result<(SweepRow, Option<TransitionController>)> {
    let p = &base.p0 / nu;
    let source = Ellipsoid::new(p.clone(), DVector::zeros(3)).context("source ellipsoid")?;
    let target = Ellipsoid::new(p * eta, base.target_center.clone()).context("target ellipsoid")?;
    let noise_vertices = AaBox::centered(&DVector::from_element(3, omega_max))?
        .vertices(sfabs_core::pwa::MAX_VERTEX_DIM)
        .context("noise vertices")?;
    let started = Instant::now();
    let outcome = synthesize_transition(
        &base.mode,
        &source,
        &target,
        &noise_vertices,
        &base.input_rows,
        &base.cost,
        &SdpTolerances::default(),
    )
    .context("sweep synthesis failed")?;
    let solve_time_s = started.elapsed().as_secs_f64();
    Ok(match outcome {
        SynthesisOutcome::Feasible { controller, .. } => {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(
                (nu.to_bits() ^ eta.to_bits()).rotate_left(17) ^ omega_max.to_bits(),
            );
            audit_transition(
                &controller,
                &base.mode,
                &source,
                &target,
                &noise_vertices,
                &base.input_rows,
                &base.cost,
                AuditSamples::default(),
                &mut rng,
            )
            .context("sweep controller failed its audit")?;
            (
                SweepRow {
                    nu,
                    eta,
                    omega_max,
                    feasible: true,
                    cost_bound: Some(controller.cost_bound),
                    spectral_radius: Some(closed_loop_spectral_radius(&base.mode, &controller.k)),
                    solve_time_s,
                },
                Some(controller),
            )
        }
        SynthesisOutcome::Infeasible { .. } => (
            SweepRow {
                nu,
                eta,
                omega_max,
                feasible: false,
                cost_bound: None,
                spectral_radius: None,
                solve_time_s,
            },
            None,
        ),
    })
}

/// Runs the full grid in deterministic order: ν outermost, then η, then
/// ω_max. Infeasible points are recorded, never fatal.
pub fn run_single_transition_sweep(spec: &SweepConfig) -> anyhow::Result<Vec<SweepRow>> {
    if spec.base != "companion3" {
        bail!("unknown sweep base problem {:?}", spec.base);
    }
    if spec
        .nu
        .iter()
        .chain(&spec.eta)
        .chain(&spec.omega_max)
        .any(|&v| !v.is_finite() || v <= 0.0)
    {
        bail!("sweep grids must be strictly positive");
    }
    let base = companion3()?;
    let mut rows = Vec::with_capacity(spec.nu.len() * spec.eta.len() * spec.omega_max.len());
    for &nu in &spec.nu {
        for &eta in &spec.eta {
            for &omega_max in &spec.omega_max {
                let (row, _) = sweep_point(&base, nu, eta, omega_max)?;
                rows.push(row);
            }
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn baseline_grid_point_is_feasible() {
        let base = companion3().unwrap();
        // The shape matrix is positive definite to begin with.
        assert!(sfabs_core::sdp::min_eigenvalue(&base.p0).unwrap() > 0.0);
        let (row, ctrl) = sweep_point(&base, 1.0, 1.0, 0.01).unwrap();
        assert!(row.feasible);
        assert!(row.cost_bound.unwrap() > 0.0);
        assert!(ctrl.is_some());
    }

    #[test]
    fn discretized_base_matches_series_recomputation() {
        // Same series at a tighter tolerance should agree to near machine
        // precision.
        let a_c = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, -1.0, -1.0]);
        let b_c = DMatrix::from_row_slice(3, 1, &[0.0, 0.0, 1.0]);
        let (a1, b1) = zoh_discretize(&a_c, &b_c, 0.5, 1e-12).unwrap();
        let (a2, b2) = zoh_discretize(&a_c, &b_c, 0.5, 1e-15).unwrap();
        assert!((&a1 - &a2).iter().all(|v| v.abs() < 1e-12));
        assert!((&b1 - &b2).iter().all(|v| v.abs() < 1e-12));
        // The discretized pair must be reproducible bit-for-bit across calls.
        let (a3, b3) = zoh_discretize(&a_c, &b_c, 0.5, 1e-12).unwrap();
        assert_eq!(a1, a3);
        assert_eq!(b1, b3);
    }
}
