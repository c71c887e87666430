//! Non-deterministic piecewise-affine systems with box-bounded noise.
//!
//! A mode is `x⁺ = A x + B u + g + ω` with `ω` ranging over an axis-aligned
//! noise box; the active mode is selected by a partition of the state domain
//! into conjunctions of axis-aligned half-spaces.

use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

use crate::linalg::{asymmetry, max_abs, symmetrize};
use crate::sets::AaBox;
use crate::{Error, Result};

/// Largest state dimension for which noise-box vertices are enumerated.
pub const MAX_VERTEX_DIM: usize = 6;

/// One affine subsystem `x⁺ = A x + B u + g (+ ω)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMode {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub g: DVector<f64>,
}

impl AffineMode {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, g: DVector<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::Dimension {
                context: "mode A must be square",
                expected: n,
                got: a.ncols(),
            });
        }
        if b.nrows() != n || g.len() != n {
            return Err(Error::Dimension {
                context: "mode B/g row count",
                expected: n,
                got: b.nrows().min(g.len()),
            });
        }
        if a.iter()
            .chain(b.iter())
            .chain(g.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidModel("mode matrices must be finite"));
        }
        Ok(Self { a, b, g })
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    /// Nominal successor `A x + B u + g`.
    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b * u + &self.g
    }
}

/// Comparison operator of an axis-aligned half-space predicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cmp {
    Le,
    Lt,
    Ge,
    Gt,
}

/// Predicate `x[axis] op bound`.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfSpace {
    pub axis: usize,
    pub op: Cmp,
    pub bound: f64,
}

impl HalfSpace {
    pub fn holds(&self, x: &DVector<f64>) -> bool {
        let v = x[self.axis];
        match self.op {
            Cmp::Le => v <= self.bound,
            Cmp::Lt => v < self.bound,
            Cmp::Ge => v >= self.bound,
            Cmp::Gt => v > self.bound,
        }
    }
}

/// Quadratic stage cost `J(x, u) = [x; u; 1]ᵀ Q [x; u; 1]` with `Q = LᵀL ⪰ 0`.
#[derive(Debug, Clone)]
pub struct CostModel {
    q: DMatrix<f64>,
    factor: DMatrix<f64>,
    state_dim: usize,
    input_dim: usize,
}

/// Eigenvalues of `Q` below this are treated as zero when factoring.
const FACTOR_EIG_FLOOR: f64 = 1e-12;

impl CostModel {
    /// Validates PSD-ness (within `1e-10`) and factors `Q = LᵀL` through a
    /// symmetric eigendecomposition, dropping the near-zero spectrum.
    pub fn new(q: DMatrix<f64>, state_dim: usize, input_dim: usize) -> Result<Self> {
        let n = state_dim + input_dim + 1;
        if q.nrows() != n || q.ncols() != n {
            return Err(Error::Dimension {
                context: "cost matrix size",
                expected: n,
                got: q.nrows(),
            });
        }
        let scale = max_abs(&q).max(1.0);
        let asym = asymmetry(&q);
        if asym > 1e-10 * scale {
            return Err(Error::NotSymmetric { asymmetry: asym });
        }
        let q = symmetrize(&q);
        let se = q.clone().symmetric_eigen();
        let min_eig = se.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        if min_eig < -1e-10 * scale {
            return Err(Error::IndefiniteCost { min_eig });
        }
        let mut rows: Vec<DVector<f64>> = Vec::new();
        for (i, &lam) in se.eigenvalues.iter().enumerate() {
            if lam > FACTOR_EIG_FLOOR {
                let v = se.eigenvectors.column(i) * crate::linalg::sqrt(lam);
                rows.push(v.into_owned());
            }
        }
        let factor = DMatrix::from_fn(rows.len(), n, |r, c| rows[r][c]);
        let residual = max_abs(&(factor.transpose() * &factor - &q));
        if residual > 1e-8 * scale {
            return Err(Error::Numerical("cost factorization residual too large"));
        }
        Ok(Self {
            q,
            factor,
            state_dim,
            input_dim,
        })
    }

    /// Zero cost of matching dimensions.
    pub fn zero(state_dim: usize, input_dim: usize) -> Self {
        let n = state_dim + input_dim + 1;
        Self {
            q: DMatrix::zeros(n, n),
            factor: DMatrix::zeros(0, n),
            state_dim,
            input_dim,
        }
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    /// The factor `L` (rank × (n_x + n_u + 1)).
    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    /// `J(x, u)`, evaluated through the factor so the result is nonnegative.
    pub fn stage_cost(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<f64> {
        if x.len() != self.state_dim {
            return Err(Error::Dimension {
                context: "stage cost state",
                expected: self.state_dim,
                got: x.len(),
            });
        }
        if u.len() != self.input_dim {
            return Err(Error::Dimension {
                context: "stage cost input",
                expected: self.input_dim,
                got: u.len(),
            });
        }
        let mut z = DVector::zeros(self.state_dim + self.input_dim + 1);
        z.rows_mut(0, self.state_dim).copy_from(x);
        z.rows_mut(self.state_dim, self.input_dim).copy_from(u);
        z[self.state_dim + self.input_dim] = 1.0;
        let lz = &self.factor * z;
        Ok(lz.iter().map(|v| v * v).sum())
    }
}

/// The full piecewise-affine model: modes, partition, domain, input and noise
/// boxes. Immutable after construction; all queries are pure.
#[derive(Debug, Clone)]
pub struct PwaSystem {
    modes: Vec<AffineMode>,
    partition: Vec<Vec<HalfSpace>>,
    domain: AaBox,
    input_box: AaBox,
    noise_boxes: Vec<AaBox>,
}

impl PwaSystem {
    pub fn new(
        modes: Vec<AffineMode>,
        partition: Vec<Vec<HalfSpace>>,
        domain: AaBox,
        input_box: AaBox,
        noise_boxes: Vec<AaBox>,
    ) -> Result<Self> {
        if modes.is_empty() {
            return Err(Error::InvalidModel("system needs at least one mode"));
        }
        let n_x = modes[0].state_dim();
        let n_u = modes[0].input_dim();
        for m in &modes {
            if m.state_dim() != n_x || m.input_dim() != n_u {
                return Err(Error::InvalidModel("modes disagree on dimensions"));
            }
        }
        if partition.len() != modes.len() {
            return Err(Error::Dimension {
                context: "partition regions per mode",
                expected: modes.len(),
                got: partition.len(),
            });
        }
        if noise_boxes.len() != modes.len() {
            return Err(Error::Dimension {
                context: "noise boxes per mode",
                expected: modes.len(),
                got: noise_boxes.len(),
            });
        }
        if domain.dim() != n_x {
            return Err(Error::Dimension {
                context: "domain dimension",
                expected: n_x,
                got: domain.dim(),
            });
        }
        if input_box.dim() != n_u {
            return Err(Error::Dimension {
                context: "input box dimension",
                expected: n_u,
                got: input_box.dim(),
            });
        }
        for hs in partition.iter().flatten() {
            if hs.axis >= n_x {
                return Err(Error::InvalidModel("half-space axis out of range"));
            }
        }
        for nb in &noise_boxes {
            if nb.dim() != n_x {
                return Err(Error::Dimension {
                    context: "noise box dimension",
                    expected: n_x,
                    got: nb.dim(),
                });
            }
            if !nb.contains_origin() {
                return Err(Error::InvalidModel("noise box must contain the origin"));
            }
        }
        Ok(Self {
            modes,
            partition,
            domain,
            input_box,
            noise_boxes,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.modes[0].state_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.modes[0].input_dim()
    }

    pub fn num_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn mode(&self, i: usize) -> &AffineMode {
        &self.modes[i]
    }

    pub fn noise_box(&self, i: usize) -> &AaBox {
        &self.noise_boxes[i]
    }

    pub fn domain(&self) -> &AaBox {
        &self.domain
    }

    pub fn input_box(&self) -> &AaBox {
        &self.input_box
    }

    /// Index of the partition region containing `x`; boundary ties go to the
    /// lowest index.
    pub fn mode_of(&self, x: &DVector<f64>) -> Result<usize> {
        if !self.domain.contains(x) {
            return Err(Error::OutsideDomain);
        }
        self.partition
            .iter()
            .position(|preds| preds.iter().all(|hs| hs.holds(x)))
            .ok_or(Error::PartitionGap)
    }

    /// Extreme points of the successor set `{A x + B u + g} ⊕ Ω`, one per
    /// noise-box vertex; the true successor set is their convex hull.
    pub fn successor_vertices(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
    ) -> Result<Vec<DVector<f64>>> {
        if self.state_dim() > MAX_VERTEX_DIM {
            return Err(Error::VertexBlowup {
                max: MAX_VERTEX_DIM,
                got: self.state_dim(),
            });
        }
        if u.len() != self.input_dim() {
            return Err(Error::Dimension {
                context: "successor input",
                expected: self.input_dim(),
                got: u.len(),
            });
        }
        let mode = self.mode_of(x)?;
        let base = self.modes[mode].step(x, u);
        let vertices = self.noise_boxes[mode].vertices(MAX_VERTEX_DIM)?;
        Ok(vertices.into_iter().map(|w| &base + w).collect())
    }
}

/// Rewrites an origin-centered input box as degenerate-ellipsoid rows: one
/// `1 × n_u` row `Uⱼ = eⱼᵀ/hⱼ` per axis, so `‖Uⱼu‖ ≤ 1 ⟺ |uⱼ| ≤ hⱼ`.
pub fn input_box_to_ellipsoid_rows(input_box: &AaBox) -> Result<Vec<DMatrix<f64>>> {
    let n = input_box.dim();
    let mid = input_box.midpoint();
    let half = input_box.half_widths();
    let mut rows = Vec::with_capacity(n);
    for j in 0..n {
        if half[j] <= 0.0 {
            return Err(Error::DegenerateInput { axis: j });
        }
        if mid[j].abs() > 1e-12 * half[j].max(1.0) {
            return Err(Error::OffCenterInput {
                axis: j,
                midpoint: mid[j],
            });
        }
        let mut row = DMatrix::zeros(1, n);
        row[(0, j)] = 1.0 / half[j];
        rows.push(row);
    }
    Ok(rows)
}
