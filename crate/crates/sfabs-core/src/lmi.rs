//! Assembly and solution of the per-transition matrix inequalities.
//!
//! For a source ellipsoid `B_s = {(x−c)ᵀP(x−c) ≤ 1}`, a target ellipsoid
//! `B_f = {(x−c₊)ᵀP₊(x−c₊) ≤ 1}` and one affine mode, an affine controller
//! `κ(x) = K(x−c) + ℓ` drives every `x ∈ B_s` into `B_f` under every noise
//! vertex `ω_i` iff there are multipliers `β_i, τ_i ≥ 0` making the blocks
//!
//! ```text
//! ⎡ β_i P   0      (A+BK)ᵀ ⎤           ⎡ τ_i P   0      KᵀU_iᵀ ⎤
//! ⎢ 0       1−β_i  μ_iᵀ    ⎥ ⪰ 0,      ⎢ 0       1−τ_i  ℓᵀU_iᵀ ⎥ ⪰ 0
//! ⎣ A+BK    μ_i    P₊⁻¹    ⎦           ⎣ U_iK    U_iℓ   I      ⎦
//! ```
//!
//! positive semidefinite, with `μ_i = g + Ac + Bℓ + ω_i − c₊`. A third block
//! bounds the quadratic stage cost over `B_s` by `J~`, which the synthesis
//! minimizes. All three are affine in the decision variables, so the search
//! is a single small SDP. Certificates are re-checked by independent sampling
//! in [`audit_transition`].
//!
//! Decision-variable ordering (fixed so certificates reproduce across runs):
//! `vec(K)` column-major, then `ℓ`, then the `β_i`, then the `τ_i`, and for
//! the cost program `γ` then `J~`.

use alloc::vec;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::linalg::{spd_condition, spd_inverse, spectral_radius};
use crate::pwa::{AffineMode, CostModel};
use crate::sdp::{self, LinearSdp, SdpBlock, SdpStatus, SdpTolerances};
use crate::sets::Ellipsoid;
use crate::{AuditCheck, Error, Result};

/// Condition-number cap on the target shape matrix before inversion.
pub const TARGET_CONDITION_CAP: f64 = 1e12;
/// Slack allowed by the sampling audit on membership, input and cost checks.
pub const AUDIT_TOL: f64 = 1e-6;
/// Multipliers this far below zero indicate a broken solve.
const MULTIPLIER_FLOOR: f64 = -1e-7;

/// Affine feedback `κ(x) = K(x − c) + ℓ` certified for one transition.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionController {
    pub k: DMatrix<f64>,
    pub l: DVector<f64>,
    /// Tight bound on the stage cost over the source set.
    pub cost_bound: f64,
    /// One containment multiplier per noise vertex.
    pub beta: Vec<f64>,
    /// One input-constraint multiplier per input row.
    pub tau: Vec<f64>,
    /// Cost-bound multiplier.
    pub gamma: f64,
}

impl TransitionController {
    /// Control value at `x` for a transition whose source is centered at `c`.
    pub fn control(&self, x: &DVector<f64>, center: &DVector<f64>) -> DVector<f64> {
        &self.k * (x - center) + &self.l
    }
}

/// Solver-side context reported with a synthesized controller.
#[derive(Debug, Clone)]
pub struct SynthesisDiagnostics {
    pub iterations: usize,
    pub duality_gap: f64,
    pub min_eig_slack: f64,
    /// Indices (into `β ++ τ ++ [γ]`) of multipliers at the zero boundary
    /// of the relaxed (≥ 0) constraints; flagged for inspection, never
    /// rejected.
    pub boundary_multipliers: Vec<usize>,
}

/// Result of [`synthesize_transition`].
#[derive(Debug, Clone)]
pub enum SynthesisOutcome {
    Feasible {
        controller: TransitionController,
        diagnostics: SynthesisDiagnostics,
    },
    Infeasible {
        /// Phase-1 margin certifying the absence of an affine controller.
        margin: f64,
    },
}

struct VarLayout {
    n_x: usize,
    n_u: usize,
    num_omega: usize,
    num_rows: usize,
    with_cost: bool,
}

impl VarLayout {
    fn k(&self, p: usize, q: usize) -> usize {
        q * self.n_u + p
    }
    fn l(&self, p: usize) -> usize {
        self.n_u * self.n_x + p
    }
    fn beta(&self, i: usize) -> usize {
        self.n_u * self.n_x + self.n_u + i
    }
    fn tau(&self, i: usize) -> usize {
        self.beta(0) + self.num_omega + i
    }
    fn gamma(&self) -> usize {
        debug_assert!(self.with_cost);
        self.tau(0) + self.num_rows
    }
    fn jtilde(&self) -> usize {
        self.gamma() + 1
    }
    fn len(&self) -> usize {
        let base = self.n_u * self.n_x + self.n_u + self.num_omega + self.num_rows;
        if self.with_cost {
            base + 2
        } else {
            base
        }
    }
}

fn check_problem_dims(
    mode: &AffineMode,
    source: &Ellipsoid,
    target: &Ellipsoid,
    noise_vertices: &[DVector<f64>],
    input_rows: &[DMatrix<f64>],
) -> Result<()> {
    let n_x = mode.state_dim();
    let n_u = mode.input_dim();
    if source.dim() != n_x || target.dim() != n_x {
        return Err(Error::Dimension {
            context: "transition source/target dimension",
            expected: n_x,
            got: source.dim().min(target.dim()),
        });
    }
    if noise_vertices.is_empty() {
        return Err(Error::InvalidModel("need at least one noise vertex"));
    }
    for w in noise_vertices {
        if w.len() != n_x {
            return Err(Error::Dimension {
                context: "noise vertex dimension",
                expected: n_x,
                got: w.len(),
            });
        }
    }
    for u in input_rows {
        if u.ncols() != n_u {
            return Err(Error::Dimension {
                context: "input row columns",
                expected: n_u,
                got: u.ncols(),
            });
        }
    }
    Ok(())
}

/// Emits the containment block (`lmi1`) per noise vertex and the input block
/// (`lmi2`) per input row, in that order, over the feasibility variable
/// layout `vec(K), ℓ, β, τ`.
pub fn assemble_transition_lmis(
    mode: &AffineMode,
    source: &Ellipsoid,
    target: &Ellipsoid,
    noise_vertices: &[DVector<f64>],
    input_rows: &[DMatrix<f64>],
) -> Result<Vec<SdpBlock>> {
    check_problem_dims(mode, source, target, noise_vertices, input_rows)?;
    let cond = spd_condition(target.shape())?;
    if cond > TARGET_CONDITION_CAP {
        return Err(Error::IllConditioned {
            cond,
            cap: TARGET_CONDITION_CAP,
        });
    }
    let p_plus_inv = spd_inverse(target.shape())?;

    let n_x = mode.state_dim();
    let n_u = mode.input_dim();
    let layout = VarLayout {
        n_x,
        n_u,
        num_omega: noise_vertices.len(),
        num_rows: input_rows.len(),
        with_cost: false,
    };
    let m = layout.len();
    let p = source.shape();
    let c = source.center();
    let drift = &mode.g + &mode.a * c - target.center();

    let mut blocks = Vec::with_capacity(noise_vertices.len() + input_rows.len());
    for (i, omega) in noise_vertices.iter().enumerate() {
        let dim = 2 * n_x + 1;
        let mut f0 = DMatrix::zeros(dim, dim);
        f0[(n_x, n_x)] = 1.0;
        // Constant part of the successor row: A and μ_i at ℓ = 0.
        for r in 0..n_x {
            for q in 0..n_x {
                f0[(n_x + 1 + r, q)] = mode.a[(r, q)];
                f0[(q, n_x + 1 + r)] = mode.a[(r, q)];
            }
            let mu0 = drift[r] + omega[r];
            f0[(n_x + 1 + r, n_x)] = mu0;
            f0[(n_x, n_x + 1 + r)] = mu0;
            for s in 0..n_x {
                f0[(n_x + 1 + r, n_x + 1 + s)] = p_plus_inv[(r, s)];
            }
        }
        let mut coeffs = vec![DMatrix::zeros(dim, dim); m];
        for pu in 0..n_u {
            for q in 0..n_x {
                let fk = &mut coeffs[layout.k(pu, q)];
                for r in 0..n_x {
                    fk[(n_x + 1 + r, q)] += mode.b[(r, pu)];
                    fk[(q, n_x + 1 + r)] += mode.b[(r, pu)];
                }
            }
            let fl = &mut coeffs[layout.l(pu)];
            for r in 0..n_x {
                fl[(n_x + 1 + r, n_x)] += mode.b[(r, pu)];
                fl[(n_x, n_x + 1 + r)] += mode.b[(r, pu)];
            }
        }
        let fb = &mut coeffs[layout.beta(i)];
        for r in 0..n_x {
            for q in 0..n_x {
                fb[(r, q)] = p[(r, q)];
            }
        }
        fb[(n_x, n_x)] = -1.0;
        blocks.push(SdpBlock { f0, coeffs });
    }

    for (i, u_row) in input_rows.iter().enumerate() {
        let d = u_row.nrows();
        let dim = n_x + 1 + d;
        let mut f0 = DMatrix::zeros(dim, dim);
        f0[(n_x, n_x)] = 1.0;
        for r in 0..d {
            f0[(n_x + 1 + r, n_x + 1 + r)] = 1.0;
        }
        let mut coeffs = vec![DMatrix::zeros(dim, dim); m];
        for pu in 0..n_u {
            for q in 0..n_x {
                let fk = &mut coeffs[layout.k(pu, q)];
                for r in 0..d {
                    fk[(n_x + 1 + r, q)] += u_row[(r, pu)];
                    fk[(q, n_x + 1 + r)] += u_row[(r, pu)];
                }
            }
            let fl = &mut coeffs[layout.l(pu)];
            for r in 0..d {
                fl[(n_x + 1 + r, n_x)] += u_row[(r, pu)];
                fl[(n_x, n_x + 1 + r)] += u_row[(r, pu)];
            }
        }
        let ft = &mut coeffs[layout.tau(i)];
        for r in 0..n_x {
            for q in 0..n_x {
                ft[(r, q)] = p[(r, q)];
            }
        }
        ft[(n_x, n_x)] = -1.0;
        blocks.push(SdpBlock { f0, coeffs });
    }
    Ok(blocks)
}

/// Emits the cost block bounding `J(x, κ(x)) ≤ J~` over the source set. Its
/// variable layout is `vec(K), ℓ, γ, J~` (no multipliers); the synthesis
/// routine splices it into the full layout.
pub fn assemble_cost_lmi(cost: &CostModel, source: &Ellipsoid) -> Result<SdpBlock> {
    let n_x = cost.state_dim();
    let n_u = cost.input_dim();
    if source.dim() != n_x {
        return Err(Error::Dimension {
            context: "cost block source dimension",
            expected: n_x,
            got: source.dim(),
        });
    }
    let factor = cost.factor();
    let rank = factor.nrows();
    let l_x = factor.columns(0, n_x).into_owned();
    let l_u = factor.columns(n_x, n_u).into_owned();
    let l_1 = factor.column(n_x + n_u).into_owned();

    let dim = n_x + 1 + rank;
    let m = n_u * n_x + n_u + 2;
    let gamma_idx = n_u * n_x + n_u;
    let jtilde_idx = gamma_idx + 1;
    let p = source.shape();
    let c = source.center();

    let mut f0 = DMatrix::zeros(dim, dim);
    let const_row = &l_x * c + &l_1; // L_x·c + L₁, length `rank`
    for s in 0..rank {
        for q in 0..n_x {
            f0[(q, n_x + 1 + s)] = l_x[(s, q)];
            f0[(n_x + 1 + s, q)] = l_x[(s, q)];
        }
        f0[(n_x, n_x + 1 + s)] = const_row[s];
        f0[(n_x + 1 + s, n_x)] = const_row[s];
        f0[(n_x + 1 + s, n_x + 1 + s)] = 1.0;
    }
    let mut coeffs = vec![DMatrix::zeros(dim, dim); m];
    for pu in 0..n_u {
        for q in 0..n_x {
            let fk = &mut coeffs[q * n_u + pu];
            for s in 0..rank {
                fk[(q, n_x + 1 + s)] += l_u[(s, pu)];
                fk[(n_x + 1 + s, q)] += l_u[(s, pu)];
            }
        }
        let fl = &mut coeffs[n_u * n_x + pu];
        for s in 0..rank {
            fl[(n_x, n_x + 1 + s)] += l_u[(s, pu)];
            fl[(n_x + 1 + s, n_x)] += l_u[(s, pu)];
        }
    }
    let fg = &mut coeffs[gamma_idx];
    for r in 0..n_x {
        for q in 0..n_x {
            fg[(r, q)] = p[(r, q)];
        }
    }
    fg[(n_x, n_x)] = -1.0;
    coeffs[jtilde_idx][(n_x, n_x)] = 1.0;
    Ok(SdpBlock { f0, coeffs })
}

fn nonneg_block(m: usize, var: usize) -> SdpBlock {
    let mut coeffs = vec![DMatrix::zeros(1, 1); m];
    coeffs[var] = DMatrix::from_element(1, 1, 1.0);
    SdpBlock {
        f0: DMatrix::zeros(1, 1),
        coeffs,
    }
}

/// Widens a block to `m` variables, moving coefficient `i` to `to[i]`.
fn splice_block(block: SdpBlock, m: usize, to: &[usize]) -> SdpBlock {
    let dim = block.dim();
    let mut coeffs = vec![DMatrix::zeros(dim, dim); m];
    for (f, &dest) in block.coeffs.into_iter().zip(to) {
        coeffs[dest] = f;
    }
    SdpBlock {
        f0: block.f0,
        coeffs,
    }
}

fn feasibility_problem(
    mode: &AffineMode,
    source: &Ellipsoid,
    target: &Ellipsoid,
    noise_vertices: &[DVector<f64>],
    input_rows: &[DMatrix<f64>],
) -> Result<LinearSdp> {
    let layout = VarLayout {
        n_x: mode.state_dim(),
        n_u: mode.input_dim(),
        num_omega: noise_vertices.len(),
        num_rows: input_rows.len(),
        with_cost: false,
    };
    let m = layout.len();
    let mut blocks = assemble_transition_lmis(mode, source, target, noise_vertices, input_rows)?;
    for i in 0..noise_vertices.len() {
        blocks.push(nonneg_block(m, layout.beta(i)));
    }
    for i in 0..input_rows.len() {
        blocks.push(nonneg_block(m, layout.tau(i)));
    }
    LinearSdp::new(DVector::zeros(m), blocks)
}

/// Phase-1 margin of the containment + input LMIs (no cost block): positive
/// iff an affine controller exists with room to spare.
pub fn transition_feasibility_margin(
    mode: &AffineMode,
    source: &Ellipsoid,
    target: &Ellipsoid,
    noise_vertices: &[DVector<f64>],
    input_rows: &[DMatrix<f64>],
) -> Result<f64> {
    let prob = feasibility_problem(mode, source, target, noise_vertices, input_rows)?;
    sdp::feasibility_margin(&prob)
}

/// Full synthesis program in canonical form: containment and input blocks,
/// the spliced cost block, and the multiplier sign blocks, minimizing `J~`.
pub fn assemble_synthesis_sdp(
    mode: &AffineMode,
    source: &Ellipsoid,
    target: &Ellipsoid,
    noise_vertices: &[DVector<f64>],
    input_rows: &[DMatrix<f64>],
    cost: &CostModel,
) -> Result<LinearSdp> {
    let n_x = mode.state_dim();
    let n_u = mode.input_dim();
    if cost.state_dim() != n_x || cost.input_dim() != n_u {
        return Err(Error::Dimension {
            context: "cost model dimensions",
            expected: n_x + n_u,
            got: cost.state_dim() + cost.input_dim(),
        });
    }
    let layout = VarLayout {
        n_x,
        n_u,
        num_omega: noise_vertices.len(),
        num_rows: input_rows.len(),
        with_cost: true,
    };
    let m = layout.len();

    let feas_layout = VarLayout {
        with_cost: false,
        ..layout
    };
    let feas_map: Vec<usize> = (0..feas_layout.len()).collect();
    let mut blocks: Vec<SdpBlock> =
        assemble_transition_lmis(mode, source, target, noise_vertices, input_rows)?
            .into_iter()
            .map(|b| splice_block(b, m, &feas_map))
            .collect();

    let mut cost_map: Vec<usize> = (0..n_u * n_x + n_u).collect();
    cost_map.push(layout.gamma());
    cost_map.push(layout.jtilde());
    blocks.push(splice_block(assemble_cost_lmi(cost, source)?, m, &cost_map));

    for i in 0..noise_vertices.len() {
        blocks.push(nonneg_block(m, layout.beta(i)));
    }
    for i in 0..input_rows.len() {
        blocks.push(nonneg_block(m, layout.tau(i)));
    }
    blocks.push(nonneg_block(m, layout.gamma()));
    blocks.push(nonneg_block(m, layout.jtilde()));

    let mut objective = DVector::zeros(m);
    objective[layout.jtilde()] = 1.0;
    LinearSdp::new(objective, blocks)
}

/// Minimizes the cost bound `J~` over all certified affine controllers for
/// the transition. Returns the controller with its multipliers, or the
/// phase-1 margin when no controller exists.
pub fn synthesize_transition(
    mode: &AffineMode,
    source: &Ellipsoid,
    target: &Ellipsoid,
    noise_vertices: &[DVector<f64>],
    input_rows: &[DMatrix<f64>],
    cost: &CostModel,
    tol: &SdpTolerances,
) -> Result<SynthesisOutcome> {
    let n_x = mode.state_dim();
    let n_u = mode.input_dim();
    let layout = VarLayout {
        n_x,
        n_u,
        num_omega: noise_vertices.len(),
        num_rows: input_rows.len(),
        with_cost: true,
    };
    let prob = assemble_synthesis_sdp(mode, source, target, noise_vertices, input_rows, cost)?;
    let sol = sdp::solve(&prob, tol);
    match sol.status {
        SdpStatus::Infeasible => Ok(SynthesisOutcome::Infeasible {
            margin: sol.min_eig_slack,
        }),
        SdpStatus::NumericalFailure => Err(Error::Numerical(
            sol.failure.unwrap_or("transition SDP solve failed"),
        )),
        SdpStatus::Optimal => {
            let y = &sol.y;
            let k = DMatrix::from_fn(n_u, n_x, |p, q| y[layout.k(p, q)]);
            let l = DVector::from_fn(n_u, |p, _| y[layout.l(p)]);
            // Multiplier sign noise from a finite-precision solve is
            // truncated; anything materially negative is a solver fault.
            let clamp = |v: f64, what: &'static str| -> Result<f64> {
                if v < MULTIPLIER_FLOOR {
                    return Err(Error::Numerical(what));
                }
                Ok(v.max(0.0))
            };
            let mut boundary = Vec::new();
            let mut beta = Vec::with_capacity(noise_vertices.len());
            for i in 0..noise_vertices.len() {
                let v = clamp(y[layout.beta(i)], "negative containment multiplier")?;
                if v <= 1e-7 {
                    boundary.push(i);
                }
                beta.push(v);
            }
            let mut tau = Vec::with_capacity(input_rows.len());
            for i in 0..input_rows.len() {
                let v = clamp(y[layout.tau(i)], "negative input multiplier")?;
                if v <= 1e-7 {
                    boundary.push(noise_vertices.len() + i);
                }
                tau.push(v);
            }
            let gamma = clamp(y[layout.gamma()], "negative cost multiplier")?;
            if gamma <= 1e-7 {
                boundary.push(noise_vertices.len() + input_rows.len());
            }
            let cost_bound = clamp(y[layout.jtilde()], "negative cost bound")?;
            Ok(SynthesisOutcome::Feasible {
                controller: TransitionController {
                    k,
                    l,
                    cost_bound,
                    beta,
                    tau,
                    gamma,
                },
                diagnostics: SynthesisDiagnostics {
                    iterations: sol.iterations,
                    duality_gap: sol.duality_gap,
                    min_eig_slack: sol.min_eig_slack,
                    boundary_multipliers: boundary,
                },
            })
        }
    }
}

/// Sample counts for [`audit_transition`]. Boundary points dominate because
/// all three certified quantities are quadratic, hence extremal on the
/// boundary of the source set.
#[derive(Debug, Clone, Copy)]
pub struct AuditSamples {
    pub boundary: usize,
    pub interior: usize,
}

impl Default for AuditSamples {
    fn default() -> Self {
        Self {
            boundary: 200,
            interior: 100,
        }
    }
}

/// Worst-case slack observed by a passing audit.
#[derive(Debug, Clone, Copy)]
pub struct AuditReport {
    pub samples: usize,
    /// Largest target membership value over samples × noise vertices (≤ 1
    /// means inside).
    pub max_membership: f64,
    /// Largest input-row norm `‖U_i κ(x)‖` (≤ 1 means within constraints).
    pub max_input_norm: f64,
    /// Largest `J(x, κ(x)) − J~` (≤ 0 means the bound holds with slack).
    pub max_cost_excess: f64,
}

/// Independently re-checks a synthesized certificate by sampling the source
/// set: every sampled state must map into the target for every noise vertex,
/// respect every input row, and cost no more than the bound.
#[allow(clippy::too_many_arguments)]
pub fn audit_transition<R: Rng + ?Sized>(
    ctrl: &TransitionController,
    mode: &AffineMode,
    source: &Ellipsoid,
    target: &Ellipsoid,
    noise_vertices: &[DVector<f64>],
    input_rows: &[DMatrix<f64>],
    cost: &CostModel,
    samples: AuditSamples,
    rng: &mut R,
) -> Result<AuditReport> {
    check_problem_dims(mode, source, target, noise_vertices, input_rows)?;
    let sampler = source.sampler()?;
    let mut report = AuditReport {
        samples: samples.boundary + samples.interior,
        max_membership: f64::NEG_INFINITY,
        max_input_norm: f64::NEG_INFINITY,
        max_cost_excess: f64::NEG_INFINITY,
    };
    let witness = |x: &DVector<f64>| x.iter().copied().collect::<Vec<f64>>();
    for s in 0..(samples.boundary + samples.interior) {
        let x = if s < samples.boundary {
            sampler.boundary(rng)
        } else {
            sampler.interior(rng)
        };
        let u = ctrl.control(&x, source.center());
        for row in input_rows {
            let v = row * &u;
            let norm = crate::linalg::sqrt(v.iter().map(|e| e * e).sum());
            report.max_input_norm = report.max_input_norm.max(norm);
            if norm > 1.0 + AUDIT_TOL {
                return Err(Error::AuditFailed {
                    check: AuditCheck::InputConstraint,
                    value: norm,
                    witness: witness(&x),
                });
            }
        }
        let stage = cost.stage_cost(&x, &u)?;
        report.max_cost_excess = report.max_cost_excess.max(stage - ctrl.cost_bound);
        if stage > ctrl.cost_bound + AUDIT_TOL {
            return Err(Error::AuditFailed {
                check: AuditCheck::CostBound,
                value: stage,
                witness: witness(&x),
            });
        }
        let base = mode.step(&x, &u);
        for omega in noise_vertices {
            let succ = &base + omega;
            let membership = target.membership(&succ);
            report.max_membership = report.max_membership.max(membership);
            if membership > 1.0 + AUDIT_TOL {
                return Err(Error::AuditFailed {
                    check: AuditCheck::TargetMembership,
                    value: membership,
                    witness: witness(&x),
                });
            }
        }
    }
    Ok(report)
}

/// Largest eigenvalue modulus of the closed loop `A + BK`.
pub fn closed_loop_spectral_radius(mode: &AffineMode, k: &DMatrix<f64>) -> f64 {
    spectral_radius(&(&mode.a + &mode.b * k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sdp::min_eigenvalue;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar_mode(a: f64, b: f64) -> AffineMode {
        AffineMode::new(
            DMatrix::from_element(1, 1, a),
            DMatrix::from_element(1, 1, b),
            DVector::zeros(1),
        )
        .unwrap()
    }

    fn unit_ball() -> Ellipsoid {
        Ellipsoid::ball(DVector::zeros(1), 1.0)
    }

    fn scalar_rows(u_max: f64) -> Vec<DMatrix<f64>> {
        vec![DMatrix::from_element(1, 1, 1.0 / u_max)]
    }

    fn no_noise() -> Vec<DVector<f64>> {
        vec![DVector::zeros(1)]
    }

    fn scalar_cost() -> CostModel {
        CostModel::new(
            DMatrix::from_diagonal(&DVector::from_row_slice(&[1.0, 1.0, 0.0])),
            1,
            1,
        )
        .unwrap()
    }

    /// Interval-arithmetic feasibility of a scalar origin-centered transition
    /// with `ℓ = 0`: `|A+BK|·r_s + ω_max ≤ r_f` and `|K|·r_s ≤ u_max`.
    fn scalar_feasible(a: f64, b: f64, k: f64, r_s: f64, r_f: f64, w_max: f64, u_max: f64) -> bool {
        (a + b * k).abs() * r_s + w_max <= r_f && k.abs() * r_s <= u_max
    }

    /// Dense grid oracle: best `(1 + K²)·r_s²` over feasible `K ∈ [−10, 10]`.
    fn scalar_grid_best_cost(a: f64, r_s: f64, r_f: f64, w_max: f64, u_max: f64) -> Option<f64> {
        let mut best: Option<f64> = None;
        let steps = 20_000;
        for i in 0..=steps {
            let k = -10.0 + 20.0 * i as f64 / steps as f64;
            if scalar_feasible(a, 1.0, k, r_s, r_f, w_max, u_max) {
                let j = (1.0 + k * k) * r_s * r_s;
                best = Some(best.map_or(j, |b: f64| b.min(j)));
            }
        }
        best
    }

    #[test]
    fn scalar_assembly_matches_hand_schur() {
        // A=2, B=1, unit balls, no noise, |u| ≤ 10. At K=−2, ℓ=0, β=τ=1 the
        // containment block becomes diag(1, 0, 1); its Schur complement with
        // respect to the trailing block is β·P − A_cl²·P₊ = 1.
        let mode = scalar_mode(2.0, 1.0);
        let blocks = assemble_transition_lmis(
            &mode,
            &unit_ball(),
            &unit_ball(),
            &no_noise(),
            &scalar_rows(10.0),
        )
        .unwrap();
        assert_eq!(blocks.len(), 2);
        assert_eq!(blocks[0].dim(), 3);
        assert_eq!(blocks[1].dim(), 3);
        // μ₁ constant part is zero: centered sets, g = 0, ω = 0.
        assert_eq!(blocks[0].f0[(2, 1)], 0.0);
        let y = DVector::from_row_slice(&[-2.0, 0.0, 1.0, 1.0]); // K, ℓ, β, τ
        let m1 = blocks[0].eval(&y);
        assert!(min_eigenvalue(&m1).unwrap() >= -1e-12);
        let a_cl = m1[(2, 0)];
        let mu = m1[(2, 1)];
        let p_plus_inv = m1[(2, 2)];
        let schur_00 = m1[(0, 0)] - a_cl * a_cl / p_plus_inv;
        assert_relative_eq!(schur_00, 1.0, epsilon = 1e-12);
        assert_eq!(mu, 0.0);
        let m2 = blocks[1].eval(&y);
        assert!(min_eigenvalue(&m2).unwrap() >= -1e-12);
    }

    #[test]
    fn discretized_oscillator_block_counts() {
        // Three-state mode with a full noise box: 2³ containment blocks plus
        // one input block.
        let a_c = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, -1.0, -1.0]);
        let b_c = DMatrix::from_row_slice(3, 1, &[0.0, 0.0, 1.0]);
        let (a, b) = crate::linalg::zoh_discretize(&a_c, &b_c, 0.5, 1e-12).unwrap();
        let mode = AffineMode::new(a, b, DVector::zeros(3)).unwrap();
        let noise = crate::sets::AaBox::centered(&DVector::from_element(3, 0.01))
            .unwrap()
            .vertices(6)
            .unwrap();
        assert_eq!(noise.len(), 8);
        let bs = Ellipsoid::ball(DVector::zeros(3), 1.0);
        let bf = Ellipsoid::ball(DVector::from_row_slice(&[0.1, 0.5, 1.9]), 1.0);
        let rows = vec![DMatrix::from_row_slice(1, 1, &[0.1])];
        let blocks = assemble_transition_lmis(&mode, &bs, &bf, &noise, &rows).unwrap();
        assert_eq!(blocks.len(), 9);
        assert!(blocks[..8].iter().all(|b| b.dim() == 7));
        assert_eq!(blocks[8].dim(), 5);
    }

    #[test]
    fn cost_block_zero_cost_gives_zero_bound() {
        let cost = CostModel::zero(1, 1);
        let block = assemble_cost_lmi(&cost, &unit_ball()).unwrap();
        assert_eq!(block.dim(), 2); // rank-0 factor: no trailing identity rows
                                    // min J~ over the block alone (γ, J~ ≥ 0, K/ℓ irrelevant).
        let m = block.coeffs.len();
        let mut blocks = vec![block];
        blocks.push(nonneg_block(m, m - 2));
        blocks.push(nonneg_block(m, m - 1));
        let mut c = DVector::zeros(m);
        c[m - 1] = 1.0;
        let prob = LinearSdp::new(c, blocks).unwrap();
        let sol = sdp::solve(&prob, &SdpTolerances::default());
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert!(sol.objective_value.abs() <= 1e-6);
    }

    #[test]
    fn cost_block_fixed_gain_matches_grid_max() {
        // Oracle: dense grid over |x| ≤ 1 for max of x²(1 + K²) at K = −1.
        let k_fixed = -1.0;
        let mut oracle: f64 = 0.0;
        for i in 0..=100_000 {
            let x = -1.0 + 2.0 * i as f64 / 100_000.0;
            oracle = oracle.max(x * x * (1.0 + k_fixed * k_fixed));
        }
        assert_relative_eq!(oracle, 2.0, epsilon = 1e-8);

        let cost = scalar_cost();
        let block = assemble_cost_lmi(&cost, &unit_ball()).unwrap();
        assert_eq!(block.dim(), 1 + 1 + 2);
        // Partial-evaluate K = −1, ℓ = 0; remaining variables (γ, J~).
        let mut f0 = block.f0.clone();
        f0 += &block.coeffs[0] * k_fixed;
        let reduced = SdpBlock {
            f0,
            coeffs: block.coeffs[2..4].to_vec(),
        };
        let mut blocks = vec![reduced];
        blocks.push(nonneg_block(2, 0));
        blocks.push(nonneg_block(2, 1));
        let prob = LinearSdp::new(DVector::from_row_slice(&[0.0, 1.0]), blocks).unwrap();
        let sol = sdp::solve(&prob, &SdpTolerances::default());
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert_relative_eq!(sol.objective_value, oracle, epsilon = 1e-4);
    }

    #[test]
    fn synthesize_scalar_oracle() {
        // Feasibility forces |2 + K| ≤ 1; minimizing 1 + K² lands at K = −1.
        let oracle = scalar_grid_best_cost(2.0, 1.0, 1.0, 0.0, 10.0).unwrap();
        assert_relative_eq!(oracle, 2.0, epsilon = 1e-6);
        let outcome = synthesize_transition(
            &scalar_mode(2.0, 1.0),
            &unit_ball(),
            &unit_ball(),
            &no_noise(),
            &scalar_rows(10.0),
            &scalar_cost(),
            &SdpTolerances::default(),
        )
        .unwrap();
        match outcome {
            SynthesisOutcome::Feasible {
                controller,
                diagnostics,
            } => {
                assert_relative_eq!(controller.cost_bound, 2.0, epsilon = 1e-3);
                assert_relative_eq!(controller.k[(0, 0)], -1.0, epsilon = 1e-2);
                assert!(controller.l[0].abs() <= 1e-2);
                assert!(controller.beta.iter().all(|&b| b >= 0.0));
                assert!(controller.tau.iter().all(|&t| t >= 0.0));
                assert!(diagnostics.min_eig_slack >= -1e-7);
            }
            SynthesisOutcome::Infeasible { .. } => panic!("oracle says feasible"),
        }
    }

    #[test]
    fn synthesize_necessity_spot_checks() {
        // A=2 with no control authority expands the unit ball: infeasible.
        let out = synthesize_transition(
            &scalar_mode(2.0, 0.0),
            &unit_ball(),
            &unit_ball(),
            &no_noise(),
            &scalar_rows(10.0),
            &scalar_cost(),
            &SdpTolerances::default(),
        )
        .unwrap();
        assert!(matches!(out, SynthesisOutcome::Infeasible { .. }));

        // A=0.5 contracts on its own.
        let out = synthesize_transition(
            &scalar_mode(0.5, 0.0),
            &unit_ball(),
            &unit_ball(),
            &no_noise(),
            &scalar_rows(10.0),
            &scalar_cost(),
            &SdpTolerances::default(),
        )
        .unwrap();
        match out {
            SynthesisOutcome::Feasible { controller, .. } => {
                // With B = 0 the gain only adds input cost; optimum is K = 0,
                // ℓ = 0 with J~ = max x² = 1.
                assert_relative_eq!(controller.cost_bound, 1.0, epsilon = 1e-3);
                assert!(controller.k[(0, 0)].abs() <= 1e-2);
            }
            SynthesisOutcome::Infeasible { .. } => panic!("contraction must be feasible"),
        }
    }

    #[test]
    fn tightness_of_scalar_family() {
        for a in [1.5, 2.0, 3.0] {
            let oracle = scalar_grid_best_cost(a, 1.0, 1.0, 0.0, 10.0).unwrap();
            let analytic = 1.0 + (a - 1.0) * (a - 1.0);
            assert_relative_eq!(oracle, analytic, epsilon = 1e-5);
            let out = synthesize_transition(
                &scalar_mode(a, 1.0),
                &unit_ball(),
                &unit_ball(),
                &no_noise(),
                &scalar_rows(10.0),
                &scalar_cost(),
                &SdpTolerances::default(),
            )
            .unwrap();
            match out {
                SynthesisOutcome::Feasible { controller, .. } => {
                    assert_relative_eq!(controller.cost_bound, analytic, epsilon = 1e-3);
                }
                SynthesisOutcome::Infeasible { .. } => panic!("family is feasible"),
            }
        }
    }

    #[test]
    fn necessity_randomized_against_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..40 {
            let a: f64 = rng.random_range(-3.0..3.0);
            let r_f: f64 = rng.random_range(0.5..2.0);
            let w_max: f64 = rng.random_range(0.0..0.2);
            let u_max: f64 = rng.random_range(0.5..5.0);
            let grid = scalar_grid_best_cost(a, 1.0, r_f, w_max, u_max);
            let noise = if w_max > 0.0 {
                vec![
                    DVector::from_element(1, -w_max),
                    DVector::from_element(1, w_max),
                ]
            } else {
                no_noise()
            };
            let out = synthesize_transition(
                &scalar_mode(a, 1.0),
                &unit_ball(),
                &Ellipsoid::ball(DVector::zeros(1), r_f),
                &noise,
                &scalar_rows(u_max),
                &scalar_cost(),
                &SdpTolerances::default(),
            )
            .unwrap();
            if grid.is_some() {
                assert!(
                    matches!(out, SynthesisOutcome::Feasible { .. }),
                    "grid found a controller (a={a}, r_f={r_f}, w={w_max}, u={u_max})"
                );
            }
        }
    }

    #[test]
    fn monotone_in_source_volume_and_contraction() {
        let cost = scalar_cost();
        let synth = |nu: f64, eta: f64| -> f64 {
            let bs = unit_ball().scaled(nu);
            let bf = Ellipsoid::new(bs.shape() * eta, DVector::zeros(1)).unwrap();
            match synthesize_transition(
                &scalar_mode(2.0, 1.0),
                &bs,
                &bf,
                &no_noise(),
                &scalar_rows(10.0),
                &cost,
                &SdpTolerances::default(),
            )
            .unwrap()
            {
                SynthesisOutcome::Feasible { controller, .. } => controller.cost_bound,
                SynthesisOutcome::Infeasible { .. } => f64::INFINITY,
            }
        };
        // Larger source ball never cheapens the bound.
        let j_small = synth(0.5, 1.0);
        let j_big = synth(1.0, 1.0);
        assert!(j_small <= j_big + 1e-6);
        // Tighter target (larger η) never cheapens the bound.
        let j_loose = synth(1.0, 1.0);
        let j_tight = synth(1.0, 2.0);
        assert!(j_loose <= j_tight + 1e-6);
    }

    #[test]
    fn audit_accepts_oracle_and_rejects_corruption() {
        let mode = scalar_mode(2.0, 1.0);
        let cost = scalar_cost();
        let ctrl = TransitionController {
            k: DMatrix::from_element(1, 1, -1.0),
            l: DVector::zeros(1),
            cost_bound: 2.0,
            beta: vec![1.0],
            tau: vec![1.0],
            gamma: 2.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let report = audit_transition(
            &ctrl,
            &mode,
            &unit_ball(),
            &unit_ball(),
            &no_noise(),
            &scalar_rows(10.0),
            &cost,
            AuditSamples::default(),
            &mut rng,
        )
        .unwrap();
        // Closed loop is x ↦ −x: boundary samples sit exactly on the target
        // boundary.
        assert!((report.max_membership - 1.0).abs() <= 1e-9);
        assert!(report.max_cost_excess <= 1e-9);

        let broken = TransitionController {
            k: DMatrix::zeros(1, 1),
            ..ctrl.clone()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let err = audit_transition(
            &broken,
            &mode,
            &unit_ball(),
            &unit_ball(),
            &no_noise(),
            &scalar_rows(10.0),
            &cost,
            AuditSamples::default(),
            &mut rng,
        )
        .unwrap_err();
        match err {
            Error::AuditFailed { check, witness, .. } => {
                assert_eq!(check, AuditCheck::TargetMembership);
                assert!(
                    witness[0].abs() > 0.5,
                    "witness should sit near the boundary"
                );
            }
            other => panic!("expected audit failure, got {other:?}"),
        }

        // Inflating the target by 4 in volume terms leaves strict slack.
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let report = audit_transition(
            &ctrl,
            &mode,
            &unit_ball(),
            &unit_ball().scaled(4.0),
            &no_noise(),
            &scalar_rows(10.0),
            &cost,
            AuditSamples::default(),
            &mut rng,
        )
        .unwrap();
        assert!(report.max_membership <= 0.26);
    }

    #[test]
    fn vertex_containment_extends_to_sampled_noise() {
        // Noisy scalar transition; vertex certificates must cover the hull.
        let mode = scalar_mode(2.0, 1.0);
        let noise = vec![
            DVector::from_element(1, -0.1),
            DVector::from_element(1, 0.1),
        ];
        let out = synthesize_transition(
            &mode,
            &unit_ball(),
            &unit_ball(),
            &noise,
            &scalar_rows(10.0),
            &scalar_cost(),
            &SdpTolerances::default(),
        )
        .unwrap();
        let ctrl = match out {
            SynthesisOutcome::Feasible { controller, .. } => controller,
            _ => panic!("feasible by interval arithmetic"),
        };
        let bf = unit_ball();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let sampler = unit_ball().sampler().unwrap();
        for _ in 0..1000 {
            let x = sampler.boundary(&mut rng);
            let u = ctrl.control(&x, &DVector::zeros(1));
            let w: f64 = rng.random_range(-0.1..=0.1);
            let succ = mode.step(&x, &u) + DVector::from_element(1, w);
            assert!(bf.membership(&succ) <= 1.0 + 1e-6);
        }
    }

    #[test]
    fn spectral_radius_examples() {
        let mode = scalar_mode(2.0, 1.0);
        assert_relative_eq!(
            closed_loop_spectral_radius(&mode, &DMatrix::from_element(1, 1, -1.0)),
            1.0,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            closed_loop_spectral_radius(&mode, &DMatrix::from_element(1, 1, -2.0)),
            0.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn rejects_ill_conditioned_target() {
        let p = DMatrix::from_diagonal(&DVector::from_row_slice(&[1.0, 1e13]));
        let bf = Ellipsoid::new(p, DVector::zeros(2)).unwrap();
        let mode = AffineMode::new(
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
            DVector::zeros(2),
        )
        .unwrap();
        let err = assemble_transition_lmis(
            &mode,
            &Ellipsoid::ball(DVector::zeros(2), 1.0),
            &bf,
            &[DVector::zeros(2)],
            &[DMatrix::from_row_slice(1, 2, &[1.0, 0.0])],
        )
        .unwrap_err();
        assert!(matches!(err, Error::IllConditioned { .. }));
    }

    #[test]
    fn feasibility_margin_sign_matches_outcomes() {
        let margin = transition_feasibility_margin(
            &scalar_mode(2.0, 1.0),
            &unit_ball(),
            &unit_ball(),
            &no_noise(),
            &scalar_rows(10.0),
        )
        .unwrap();
        assert!(margin > 0.0);
        let margin = transition_feasibility_margin(
            &scalar_mode(2.0, 0.0),
            &unit_ball(),
            &unit_ball(),
            &no_noise(),
            &scalar_rows(10.0),
        )
        .unwrap();
        assert!(margin < crate::sdp::INFEASIBILITY_MARGIN);
    }
}
