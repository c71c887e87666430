//! Axis-aligned boxes, ellipsoids, and goal/obstacle regions.

use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::linalg::{self, asymmetry, max_abs, spd_sqrt_pair, sym_min_eigenvalue};
use crate::{Error, Result};

/// Closed axis-aligned box `{x : lo ≤ x ≤ hi}`.
#[derive(Debug, Clone, PartialEq)]
pub struct AaBox {
    lo: DVector<f64>,
    hi: DVector<f64>,
}

impl AaBox {
    pub fn new(lo: DVector<f64>, hi: DVector<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::Dimension {
                context: "box bounds",
                expected: lo.len(),
                got: hi.len(),
            });
        }
        if lo
            .iter()
            .zip(hi.iter())
            .any(|(l, h)| !l.is_finite() || !h.is_finite() || l > h)
        {
            return Err(Error::InvalidModel("box needs finite lo ≤ hi"));
        }
        Ok(Self { lo, hi })
    }

    /// Symmetric box `[-r, r]^n`.
    pub fn centered(half_widths: &DVector<f64>) -> Result<Self> {
        Self::new(-half_widths.clone(), half_widths.clone())
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &DVector<f64> {
        &self.lo
    }

    pub fn hi(&self) -> &DVector<f64> {
        &self.hi
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lo.iter().zip(self.hi.iter()))
                .all(|(v, (l, h))| *v >= *l && *v <= *h)
    }

    pub fn midpoint(&self) -> DVector<f64> {
        (&self.lo + &self.hi) * 0.5
    }

    pub fn half_widths(&self) -> DVector<f64> {
        (&self.hi - &self.lo) * 0.5
    }

    /// Radius of the smallest ball around the midpoint containing the box.
    pub fn circumradius(&self) -> f64 {
        linalg::sqrt(self.half_widths().iter().map(|h| h * h).sum())
    }

    pub fn contains_origin(&self) -> bool {
        self.lo.iter().all(|&l| l <= 0.0) && self.hi.iter().all(|&h| h >= 0.0)
    }

    /// Euclidean distance from `x` to the box (zero inside).
    pub fn distance_to(&self, x: &DVector<f64>) -> f64 {
        let mut acc = 0.0;
        for (v, (l, h)) in x.iter().zip(self.lo.iter().zip(self.hi.iter())) {
            let d = if v < l {
                l - v
            } else if v > h {
                v - h
            } else {
                0.0
            };
            acc += d * d;
        }
        linalg::sqrt(acc)
    }

    pub fn intersects_ball(&self, center: &DVector<f64>, radius: f64) -> bool {
        self.distance_to(center) <= radius
    }

    pub fn contains_ball(&self, center: &DVector<f64>, radius: f64) -> bool {
        center
            .iter()
            .zip(self.lo.iter().zip(self.hi.iter()))
            .all(|(c, (l, h))| *c - radius >= *l && *c + radius <= *h)
    }

    /// Corner vertices, collapsing degenerate axes (`lo == hi`). At most
    /// `2^max_free` non-degenerate axes are allowed.
    pub fn vertices(&self, max_free: usize) -> Result<Vec<DVector<f64>>> {
        let free: Vec<usize> = (0..self.dim())
            .filter(|&d| self.lo[d] < self.hi[d])
            .collect();
        if free.len() > max_free {
            return Err(Error::VertexBlowup {
                max: max_free,
                got: free.len(),
            });
        }
        let count = 1usize << free.len();
        let mut out = Vec::with_capacity(count);
        for mask in 0..count {
            let mut v = self.lo.clone();
            for (bit, &axis) in free.iter().enumerate() {
                if mask & (1 << bit) != 0 {
                    v[axis] = self.hi[axis];
                }
            }
            out.push(v);
        }
        Ok(out)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        DVector::from_fn(self.dim(), |d, _| {
            if self.lo[d] == self.hi[d] {
                self.lo[d]
            } else {
                rng.random_range(self.lo[d]..=self.hi[d])
            }
        })
    }
}

/// `{x : (x − c)ᵀ P (x − c) ≤ 1}` with `P ≻ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ellipsoid {
    p: DMatrix<f64>,
    c: DVector<f64>,
}

impl Ellipsoid {
    pub fn new(p: DMatrix<f64>, c: DVector<f64>) -> Result<Self> {
        if p.nrows() != p.ncols() || p.nrows() != c.len() {
            return Err(Error::Dimension {
                context: "ellipsoid shape/center",
                expected: p.nrows(),
                got: c.len(),
            });
        }
        let asym = asymmetry(&p);
        if asym > 1e-12 * max_abs(&p).max(1.0) {
            return Err(Error::NotSymmetric { asymmetry: asym });
        }
        let min_eig = sym_min_eigenvalue(&p);
        if min_eig <= 0.0 {
            return Err(Error::NotPositiveDefinite { min_eig });
        }
        Ok(Self { p, c })
    }

    /// Ball of given radius: `P = r⁻²·I`.
    pub fn ball(center: DVector<f64>, radius: f64) -> Self {
        let n = center.len();
        let p = DMatrix::identity(n, n) / (radius * radius);
        Self { p, c: center }
    }

    pub fn dim(&self) -> usize {
        self.c.len()
    }

    pub fn shape(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.c
    }

    /// Quadratic membership value `(x − c)ᵀ P (x − c)`; ≤ 1 inside.
    pub fn membership(&self, x: &DVector<f64>) -> f64 {
        let d = x - &self.c;
        (&self.p * &d).dot(&d)
    }

    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        self.membership(x) <= 1.0 + tol
    }

    /// Grows/shrinks the set by scaling `P ← P/factor` (factor > 1 enlarges).
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            p: &self.p / factor,
            c: self.c.clone(),
        }
    }

    pub fn sampler(&self) -> Result<EllipsoidSampler> {
        let (_, inv_sqrt) = spd_sqrt_pair(&self.p)?;
        Ok(EllipsoidSampler {
            inv_sqrt,
            center: self.c.clone(),
            dim: self.dim(),
        })
    }
}

/// Draws boundary and interior points of an ellipsoid through `P^{-1/2}`.
#[derive(Debug, Clone)]
pub struct EllipsoidSampler {
    inv_sqrt: DMatrix<f64>,
    center: DVector<f64>,
    dim: usize,
}

impl EllipsoidSampler {
    fn unit_direction<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        loop {
            let d = DVector::from_fn(self.dim, |_, _| rng.sample::<f64, _>(StandardNormal));
            let norm = linalg::sqrt(d.iter().map(|v| v * v).sum());
            if norm > 1e-12 {
                return d / norm;
            }
        }
    }

    /// Point on the ellipsoid boundary (membership = 1).
    pub fn boundary<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        &self.center + &self.inv_sqrt * self.unit_direction(rng)
    }

    /// Point uniform in the ellipsoid volume.
    pub fn interior<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let radius = linalg::powf(rng.random::<f64>(), 1.0 / self.dim as f64);
        &self.center + &self.inv_sqrt * (self.unit_direction(rng) * radius)
    }
}

/// Goal or obstacle region.
#[derive(Debug, Clone)]
pub enum Region {
    Box(AaBox),
    Ball { center: DVector<f64>, radius: f64 },
}

impl Region {
    pub fn contains_point(&self, x: &DVector<f64>) -> bool {
        match self {
            Region::Box(b) => b.contains(x),
            Region::Ball { center, radius } => linalg::dist(x, center) <= *radius,
        }
    }

    pub fn intersects_ball(&self, c: &DVector<f64>, r: f64) -> bool {
        match self {
            Region::Box(b) => b.intersects_ball(c, r),
            Region::Ball { center, radius } => linalg::dist(c, center) <= r + radius,
        }
    }

    pub fn contains_ball(&self, c: &DVector<f64>, r: f64) -> bool {
        match self {
            Region::Box(b) => b.contains_ball(c, r),
            Region::Ball { center, radius } => linalg::dist(c, center) + r <= *radius,
        }
    }
}
