//! Dense linear semidefinite programs over block-diagonal matrix pencils.
//!
//! A [`LinearSdp`] is `min cᵀy` subject to `F₀ + Σⱼ yⱼ Fⱼ ⪰ 0` for every
//! block. Problems here are tiny (a handful of variables, blocks of dimension
//! at most ~10), so the solver is a straightforward infeasible-start
//! primal-dual path-following method with Nesterov–Todd scaling and a
//! Mehrotra-style adaptive centering parameter. Infeasibility is decided by a
//! phase-1 margin problem rather than a dual ray.

use alloc::vec;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

use crate::linalg::{asymmetry, frob_dot, max_abs, sym_min_eigenvalue, symmetrize};
use crate::{Error, Result};

/// Symmetry tolerance enforced on every pencil matrix.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Phase-1 margins below this value certify infeasibility.
pub const INFEASIBILITY_MARGIN: f64 = -1e-7;
/// Upper guard on the phase-1 margin variable, keeping the problem bounded.
const MARGIN_CAP: f64 = 1e8;
/// Iterations without composite-residual improvement before giving up.
const STALL_WINDOW: usize = 12;
/// Iterations the dual residual may lag once primal and gap have converged.
const DUAL_GRACE: usize = 10;
/// Dual-residual ceiling for accepting a stalled but otherwise converged run.
const STALL_DUAL_TOL: f64 = 1e-5;

/// One PSD constraint `F₀ + Σⱼ yⱼ Fⱼ ⪰ 0`.
#[derive(Debug, Clone)]
pub struct SdpBlock {
    pub f0: DMatrix<f64>,
    pub coeffs: Vec<DMatrix<f64>>,
}

impl SdpBlock {
    pub fn dim(&self) -> usize {
        self.f0.nrows()
    }

    /// Evaluates the pencil at `y`.
    pub fn eval(&self, y: &DVector<f64>) -> DMatrix<f64> {
        let mut m = self.f0.clone();
        for (j, f) in self.coeffs.iter().enumerate() {
            if y[j] != 0.0 {
                m += f * y[j];
            }
        }
        m
    }
}

/// `min cᵀy` over a block-diagonal PSD pencil.
#[derive(Debug, Clone)]
pub struct LinearSdp {
    pub objective: DVector<f64>,
    pub blocks: Vec<SdpBlock>,
}

impl LinearSdp {
    /// Builds and validates a problem: symmetric pencils, consistent variable
    /// counts, nonempty blocks.
    pub fn new(objective: DVector<f64>, blocks: Vec<SdpBlock>) -> Result<Self> {
        let m = objective.len();
        if blocks.is_empty() {
            return Err(Error::InvalidModel("SDP needs at least one block"));
        }
        for b in &blocks {
            if b.dim() == 0 || b.f0.ncols() != b.dim() {
                return Err(Error::InvalidModel("SDP block must be square and nonempty"));
            }
            if b.coeffs.len() != m {
                return Err(Error::Dimension {
                    context: "SDP block coefficient count",
                    expected: m,
                    got: b.coeffs.len(),
                });
            }
            for f in core::iter::once(&b.f0).chain(b.coeffs.iter()) {
                let asym = asymmetry(f);
                if asym > SYMMETRY_TOL * max_abs(f).max(1.0) {
                    return Err(Error::NotSymmetric { asymmetry: asym });
                }
                if f.nrows() != b.dim() || f.ncols() != b.dim() {
                    return Err(Error::Dimension {
                        context: "SDP coefficient dimension",
                        expected: b.dim(),
                        got: f.nrows(),
                    });
                }
                if f.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidModel("non-finite entry in SDP pencil"));
                }
            }
        }
        Ok(Self { objective, blocks })
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    /// Smallest eigenvalue over all blocks evaluated at `y`.
    pub fn min_eig_at(&self, y: &DVector<f64>) -> f64 {
        self.blocks
            .iter()
            .map(|b| sym_min_eigenvalue(&b.eval(y)))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Solver outcome classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdpStatus {
    Optimal,
    Infeasible,
    NumericalFailure,
}

/// Result of [`solve`].
#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub status: SdpStatus,
    pub y: DVector<f64>,
    pub objective_value: f64,
    /// Smallest eigenvalue over all blocks at `y` (negative = violation).
    pub min_eig_slack: f64,
    /// Absolute complementarity gap `⟨S, Z⟩` at termination.
    pub duality_gap: f64,
    pub iterations: usize,
    /// Short description of what broke, for `NumericalFailure` results.
    pub failure: Option<&'static str>,
}

/// Termination thresholds for [`solve`].
#[derive(Debug, Clone, Copy)]
pub struct SdpTolerances {
    pub feas_tol: f64,
    pub gap_tol: f64,
    pub max_iter: usize,
}

impl Default for SdpTolerances {
    fn default() -> Self {
        Self {
            feas_tol: 1e-7,
            gap_tol: 1e-6,
            max_iter: 200,
        }
    }
}

/// Smallest eigenvalue of a symmetric matrix; rejects asymmetric input.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> Result<f64> {
    let asym = asymmetry(m);
    if asym > SYMMETRY_TOL * max_abs(m).max(1.0) {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    Ok(sym_min_eigenvalue(m))
}

struct IpmRun {
    y: DVector<f64>,
    gap: f64,
    iterations: usize,
    converged: bool,
}

/// One Newton direction with its primal and dual step lengths.
type IpmStep = (DVector<f64>, Vec<DMatrix<f64>>, Vec<DMatrix<f64>>, f64, f64);

/// Core path-following loop. `s0` must be strictly positive definite per
/// block; primal feasibility of `(y0, s0)` is not required.
fn ipm(
    prob: &LinearSdp,
    y0: DVector<f64>,
    s0: Vec<DMatrix<f64>>,
    tol: &SdpTolerances,
) -> core::result::Result<IpmRun, &'static str> {
    let m = prob.num_vars();
    let nb = prob.blocks.len();
    let total_dim: usize = prob.blocks.iter().map(SdpBlock::dim).sum();
    let f0_scale = 1.0
        + prob
            .blocks
            .iter()
            .map(|b| max_abs(&b.f0))
            .fold(0.0, f64::max);
    let c_scale = 1.0 + max_abs_v(&prob.objective);

    let mut y = y0;
    let mut s = s0;
    let mut z: Vec<DMatrix<f64>> = prob
        .blocks
        .iter()
        .map(|b| DMatrix::identity(b.dim(), b.dim()))
        .collect();

    #[cfg(feature = "std")]
    let trace = std::env::var_os("SFABS_SDP_TRACE").is_some();

    // Stall detection: the dual residual can floor above its tolerance on
    // badly conditioned instances even while the primal iterate and the gap
    // are fully converged.
    let mut best_score = f64::INFINITY;
    let mut since_improvement = 0usize;
    let mut dual_only_pending = 0usize;

    for iter in 0..tol.max_iter {
        // Residuals: R_p = F(y) − S per block, r_d = c − ⟨F_j, Z⟩.
        let rp: Vec<DMatrix<f64>> = prob
            .blocks
            .iter()
            .zip(&s)
            .map(|(b, sb)| b.eval(&y) - sb)
            .collect();
        let pinf = rp.iter().map(max_abs).fold(0.0, f64::max);
        let mut rd = DVector::zeros(m);
        for j in 0..m {
            let mut acc = prob.objective[j];
            for (b, zb) in prob.blocks.iter().zip(&z) {
                acc -= frob_dot(&b.coeffs[j], zb);
            }
            rd[j] = acc;
        }
        let dinf = max_abs_v(&rd);
        let gap: f64 = s.iter().zip(&z).map(|(sb, zb)| frob_dot(sb, zb)).sum();
        let obj = prob.objective.dot(&y);
        if !gap.is_finite() || !obj.is_finite() {
            return Err("non-finite iterate");
        }
        #[cfg(feature = "std")]
        if trace {
            let min_s = s
                .iter()
                .map(sym_min_eigenvalue)
                .fold(f64::INFINITY, f64::min);
            let min_z = z
                .iter()
                .map(sym_min_eigenvalue)
                .fold(f64::INFINITY, f64::min);
            std::eprintln!(
                "iter {iter:3}: obj={obj:+.6e} gap={gap:.3e} pinf={pinf:.3e} dinf={dinf:.3e} min_s={min_s:.3e} min_z={min_z:.3e}"
            );
        }
        let pinf_ok = pinf <= tol.feas_tol * f0_scale;
        let gap_ok = gap <= tol.gap_tol * (1.0 + obj.abs());
        if pinf_ok && gap_ok && dinf <= tol.feas_tol * c_scale {
            return Ok(IpmRun {
                y,
                gap,
                iterations: iter,
                converged: true,
            });
        }
        // The dual residual tends to jitter at a conditioning-dependent floor
        // long after the primal iterate and the gap have converged; such an
        // iterate is acceptable (the residual objective error, ~dinf·‖y‖, is
        // far below anything downstream resolves).
        let dual_floored = pinf_ok && gap_ok && dinf <= STALL_DUAL_TOL * c_scale;
        if pinf_ok && gap_ok {
            dual_only_pending += 1;
            if dual_only_pending >= DUAL_GRACE {
                if dual_floored {
                    return Ok(IpmRun {
                        y,
                        gap,
                        iterations: iter,
                        converged: true,
                    });
                }
                return Err("dual residual floored above tolerance");
            }
        }
        let score = (pinf / (tol.feas_tol * f0_scale))
            .max(dinf / (tol.feas_tol * c_scale))
            .max(gap / (tol.gap_tol * (1.0 + obj.abs())));
        if score < 0.97 * best_score {
            best_score = score;
            since_improvement = 0;
        } else {
            since_improvement += 1;
        }
        if since_improvement >= STALL_WINDOW {
            if dual_floored {
                return Ok(IpmRun {
                    y,
                    gap,
                    iterations: iter,
                    converged: true,
                });
            }
            return Err("progress stalled before reaching tolerances");
        }
        let mu = gap / total_dim as f64;

        let step = (|| -> core::result::Result<IpmStep, &'static str> {
            // Per-block NT scaling:
            // W⁻¹ = Z^{1/2} (Z^{1/2} S Z^{1/2})^{-1/2} Z^{1/2}.
            let mut s_chol = Vec::with_capacity(nb);
            let mut s_inv = Vec::with_capacity(nb);
            let mut w_inv = Vec::with_capacity(nb);
            for (sb, zb) in s.iter().zip(&z) {
                let chol = sb.clone().cholesky().ok_or("slack lost definiteness")?;
                s_inv.push(symmetrize(&chol.inverse()));
                s_chol.push(chol);
                let se = zb.clone().symmetric_eigen();
                if se.eigenvalues.iter().any(|&l| l <= 0.0) {
                    return Err("dual iterate lost definiteness");
                }
                let q = &se.eigenvectors;
                let z_half = symmetrize(
                    &(q * DMatrix::from_diagonal(&se.eigenvalues.map(crate::linalg::sqrt))
                        * q.transpose()),
                );
                let g = symmetrize(&(&z_half * sb * &z_half));
                let seg = g.symmetric_eigen();
                if seg.eigenvalues.iter().any(|&l| l <= 0.0) {
                    return Err("NT scaling breakdown");
                }
                let gq = &seg.eigenvectors;
                let g_inv_half = symmetrize(
                    &(gq * DMatrix::from_diagonal(
                        &seg.eigenvalues.map(|l| 1.0 / crate::linalg::sqrt(l)),
                    ) * gq.transpose()),
                );
                w_inv.push(symmetrize(&(&z_half * g_inv_half * z_half)));
            }

            // Schur complement M_ij = Σ_b ⟨F_i, W⁻¹ F_j W⁻¹⟩.
            let mut scaled_coeffs: Vec<Vec<DMatrix<f64>>> = Vec::with_capacity(nb);
            for (b, w) in prob.blocks.iter().zip(&w_inv) {
                scaled_coeffs.push(b.coeffs.iter().map(|f| w * f * w).collect());
            }
            let mut schur = DMatrix::<f64>::zeros(m, m);
            for i in 0..m {
                for j in i..m {
                    let mut acc = 0.0;
                    for (b, sc) in prob.blocks.iter().zip(&scaled_coeffs) {
                        acc += frob_dot(&b.coeffs[i], &sc[j]);
                    }
                    schur[(i, j)] = acc;
                    schur[(j, i)] = acc;
                }
            }
            let schur_chol =
                factor_with_regularization(&schur).ok_or("Schur factorization failed")?;

            // Shared feasibility part of the right-hand side.
            let rp_scaled: Vec<DMatrix<f64>> =
                rp.iter().zip(&w_inv).map(|(r, w)| w * r * w).collect();
            let solve_direction = |rc: &[DMatrix<f64>]| {
                let mut rhs = DVector::zeros(m);
                for i in 0..m {
                    let mut acc = -rd[i];
                    for (b, (rcb, rpsb)) in prob.blocks.iter().zip(rc.iter().zip(&rp_scaled)) {
                        acc += frob_dot(&b.coeffs[i], rcb) - frob_dot(&b.coeffs[i], rpsb);
                    }
                    rhs[i] = acc;
                }
                let dy = schur_chol.solve(&rhs);
                let ds: Vec<DMatrix<f64>> = prob
                    .blocks
                    .iter()
                    .zip(&rp)
                    .map(|(b, rpb)| {
                        let mut acc = rpb.clone();
                        for (j, f) in b.coeffs.iter().enumerate() {
                            acc += f * dy[j];
                        }
                        acc
                    })
                    .collect();
                let dz: Vec<DMatrix<f64>> = ds
                    .iter()
                    .zip(rc.iter().zip(&w_inv))
                    .map(|(dsb, (rcb, w))| symmetrize(&(rcb - w * dsb * w)))
                    .collect();
                (dy, ds, dz)
            };

            // Predictor (affine scaling) step fixes the centering parameter.
            let rc_aff: Vec<DMatrix<f64>> = z.iter().map(|zb| -zb.clone()).collect();
            let (_dy_aff, ds_aff, dz_aff) = solve_direction(&rc_aff);
            let ap_aff = step_length(&s_chol, &ds_aff)?;
            let ad_aff = step_length_of(&z, &dz_aff)?;
            let gap_aff: f64 = s
                .iter()
                .zip(&ds_aff)
                .zip(z.iter().zip(&dz_aff))
                .map(|((sb, dsb), (zb, dzb))| frob_dot(&(sb + dsb * ap_aff), &(zb + dzb * ad_aff)))
                .sum::<f64>()
                .max(0.0);
            let mut sigma = (gap_aff / gap).powi_pos(3).clamp(0.01, 0.9);
            if ap_aff.min(ad_aff) < 0.2 {
                sigma = sigma.max(0.5);
            }

            // Corrector with target σμ.
            let rc: Vec<DMatrix<f64>> = s_inv
                .iter()
                .zip(&z)
                .map(|(sib, zb)| sib * (sigma * mu) - zb)
                .collect();
            let (dy, ds, dz) = solve_direction(&rc);
            let ap = step_length(&s_chol, &ds)?;
            let ad = step_length_of(&z, &dz)?;
            if !ap.is_finite() || !ad.is_finite() || ap <= 1e-12 || ad <= 1e-12 {
                return Err("step length collapsed");
            }
            Ok((dy, ds, dz, ap, ad))
        })();
        match step {
            Ok((dy, ds, dz, ap, ad)) => {
                y += &dy * ap;
                for ((sb, dsb), (zb, dzb)) in s.iter_mut().zip(&ds).zip(z.iter_mut().zip(&dz)) {
                    *sb += dsb * ap;
                    *zb += dzb * ad;
                }
            }
            Err(why) => {
                // Breakdown at the numerical floor: if the iterate is already
                // primal feasible with a closed gap and the dual residual is
                // merely floored, that is convergence, not failure.
                if dual_floored {
                    return Ok(IpmRun {
                        y,
                        gap,
                        iterations: iter,
                        converged: true,
                    });
                }
                return Err(why);
            }
        }
    }
    let gap: f64 = s.iter().zip(&z).map(|(sb, zb)| frob_dot(sb, zb)).sum();
    Ok(IpmRun {
        y,
        gap,
        iterations: tol.max_iter,
        converged: false,
    })
}

trait PowiPos {
    fn powi_pos(self, e: u32) -> f64;
}

impl PowiPos for f64 {
    #[inline]
    fn powi_pos(self, e: u32) -> f64 {
        let mut acc = 1.0;
        for _ in 0..e {
            acc *= self;
        }
        acc
    }
}

fn max_abs_v(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |a, &x| a.max(x.abs()))
}

fn factor_with_regularization(m: &DMatrix<f64>) -> Option<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let scale = max_abs(m).max(1.0);
    let mut delta = 0.0;
    for _ in 0..9 {
        let cand = if delta == 0.0 {
            m.clone()
        } else {
            m + DMatrix::identity(m.nrows(), m.ncols()) * delta
        };
        if let Some(c) = cand.cholesky() {
            return Some(c);
        }
        delta = if delta == 0.0 {
            1e-14 * scale
        } else {
            delta * 100.0
        };
    }
    None
}

/// Largest `α ≤ 1` (scaled by 0.98 to stay interior) with `S + αΔ ⪰ 0`.
fn step_length(
    chols: &[nalgebra::Cholesky<f64, nalgebra::Dyn>],
    deltas: &[DMatrix<f64>],
) -> core::result::Result<f64, &'static str> {
    let mut alpha = 1.0f64;
    for (chol, delta) in chols.iter().zip(deltas) {
        let l = chol.l();
        let t1 = l
            .solve_lower_triangular(delta)
            .ok_or("triangular solve failed")?;
        let t2 = l
            .solve_lower_triangular(&t1.transpose())
            .ok_or("triangular solve failed")?;
        let lam = sym_min_eigenvalue(&symmetrize(&t2));
        if !lam.is_finite() {
            return Err("non-finite step bound");
        }
        if lam < -1e-14 {
            alpha = alpha.min(-0.98 / lam);
        }
    }
    Ok(alpha.min(1.0))
}

fn step_length_of(
    mats: &[DMatrix<f64>],
    deltas: &[DMatrix<f64>],
) -> core::result::Result<f64, &'static str> {
    let chols: Vec<_> = mats
        .iter()
        .map(|m| {
            // Iterates can drift to numerically semidefinite near
            // convergence; a hair of regularization only shortens the step.
            factor_with_regularization(m).ok_or("iterate lost definiteness")
        })
        .collect::<core::result::Result<_, _>>()?;
    step_length(&chols, deltas)
}

/// Rescales every block pencil to unit magnitude. Positive block scalings
/// leave the feasible set and the optimal `y` untouched while leveling the
/// Schur-complement conditioning across blocks of very different scales.
fn normalized(prob: &LinearSdp) -> LinearSdp {
    let blocks = prob
        .blocks
        .iter()
        .map(|b| {
            let scale = core::iter::once(&b.f0)
                .chain(b.coeffs.iter())
                .map(max_abs)
                .fold(0.0f64, f64::max)
                .max(1e-12);
            SdpBlock {
                f0: &b.f0 / scale,
                coeffs: b.coeffs.iter().map(|f| f / scale).collect(),
            }
        })
        .collect();
    LinearSdp {
        objective: prob.objective.clone(),
        blocks,
    }
}

/// Builds the phase-1 margin problem `max t` s.t. `F_b(y) − t·I ⪰ 0` plus the
/// guard `t ≤ MARGIN_CAP`, expressed in canonical form over `(y, t)`.
fn margin_problem(prob: &LinearSdp) -> LinearSdp {
    let m = prob.num_vars();
    let mut blocks: Vec<SdpBlock> = prob
        .blocks
        .iter()
        .map(|b| {
            let mut coeffs = b.coeffs.clone();
            coeffs.push(-DMatrix::<f64>::identity(b.dim(), b.dim()));
            SdpBlock {
                f0: b.f0.clone(),
                coeffs,
            }
        })
        .collect();
    let mut guard_coeffs = vec![DMatrix::zeros(1, 1); m];
    guard_coeffs.push(DMatrix::from_element(1, 1, -1.0 / MARGIN_CAP));
    blocks.push(SdpBlock {
        f0: DMatrix::from_element(1, 1, 1.0),
        coeffs: guard_coeffs,
    });
    let mut c = DVector::zeros(m + 1);
    c[m] = -1.0;
    LinearSdp {
        objective: c,
        blocks,
    }
}

fn run_phase1(
    prob: &LinearSdp,
    max_iter: usize,
) -> core::result::Result<(f64, DVector<f64>), &'static str> {
    let phase1 = normalized(&margin_problem(prob));
    let m = prob.num_vars();
    let y0_base = DVector::zeros(m);
    let t0 = prob.min_eig_at(&y0_base) - 1.0;
    let mut y0 = DVector::zeros(m + 1);
    y0[m] = t0;
    let s0: Vec<DMatrix<f64>> = phase1.blocks.iter().map(|b| b.eval(&y0)).collect();
    let tol = SdpTolerances {
        feas_tol: 1e-9,
        gap_tol: 1e-8,
        max_iter,
    };
    let run = ipm(&phase1, y0, s0, &tol)?;
    if !run.converged {
        return Err("phase-1 hit the iteration cap");
    }
    let margin = run.y[m];
    let y = DVector::from_iterator(m, run.y.iter().take(m).copied());
    Ok((margin, y))
}

/// Maximal uniform slack `t*` with `F(y) ⪰ t·I` for some `y` (capped above at
/// `1e8`). Strict feasibility is equivalent to `t* > 0`.
pub fn feasibility_margin(prob: &LinearSdp) -> Result<f64> {
    run_phase1(prob, SdpTolerances::default().max_iter)
        .map(|(margin, _)| margin)
        .map_err(Error::Numerical)
}

/// Solves the program. Infeasibility is declared when the phase-1 margin
/// falls below [`INFEASIBILITY_MARGIN`]; numerical breakdowns surface as
/// [`SdpStatus::NumericalFailure`] rather than an `Err`.
pub fn solve(prob: &LinearSdp, tol: &SdpTolerances) -> SdpSolution {
    let m = prob.num_vars();
    let failure = |iters: usize, why: &'static str| SdpSolution {
        status: SdpStatus::NumericalFailure,
        y: DVector::zeros(m),
        objective_value: f64::NAN,
        min_eig_slack: f64::NAN,
        duality_gap: f64::NAN,
        iterations: iters,
        failure: Some(why),
    };

    let (margin, y_feas) = match run_phase1(prob, tol.max_iter) {
        Ok(r) => r,
        Err(why) => return failure(tol.max_iter, why),
    };
    if margin < INFEASIBILITY_MARGIN {
        return SdpSolution {
            status: SdpStatus::Infeasible,
            objective_value: f64::INFINITY,
            min_eig_slack: margin,
            duality_gap: 0.0,
            iterations: 0,
            y: y_feas,
            failure: None,
        };
    }

    // Warm start from the phase-1 point; shift the slack if the margin is too
    // thin for a strictly interior start.
    let scaled = normalized(prob);
    let lam = scaled.min_eig_at(&y_feas);
    let shift = if lam > 1e-9 {
        0.0
    } else {
        1e-6 + (-lam).max(0.0)
    };
    let s0: Vec<DMatrix<f64>> = scaled
        .blocks
        .iter()
        .map(|b| {
            let mut s = b.eval(&y_feas);
            if shift > 0.0 {
                s += DMatrix::identity(b.dim(), b.dim()) * shift;
            }
            s
        })
        .collect();
    match ipm(&scaled, y_feas, s0, tol) {
        Ok(run) if run.converged => {
            let min_eig_slack = prob.min_eig_at(&run.y);
            SdpSolution {
                status: SdpStatus::Optimal,
                objective_value: prob.objective.dot(&run.y),
                min_eig_slack,
                duality_gap: run.gap,
                iterations: run.iterations,
                y: run.y,
                failure: None,
            }
        }
        Ok(run) => failure(run.iterations, "main solve hit the iteration cap"),
        Err(why) => failure(tol.max_iter, why),
    }
}
