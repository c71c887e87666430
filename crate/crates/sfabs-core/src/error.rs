use alloc::vec::Vec;

/// Which certificate requirement an audit sample violated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AuditCheck {
    /// Closed-loop successor left the target ellipsoid.
    TargetMembership,
    /// Control value violated an input-constraint row.
    InputConstraint,
    /// Stage cost exceeded the certified bound.
    CostBound,
}

impl core::fmt::Display for AuditCheck {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        let s = match self {
            AuditCheck::TargetMembership => "target membership",
            AuditCheck::InputConstraint => "input constraint",
            AuditCheck::CostBound => "cost bound",
        };
        f.write_str(s)
    }
}

/// Crate-wide error type.
#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("state lies outside the domain box")]
    OutsideDomain,
    #[error("no partition region contains the queried in-domain state")]
    PartitionGap,
    #[error("noise-box vertex enumeration supports at most {max} dimensions, got {got}")]
    VertexBlowup { max: usize, got: usize },
    #[error("input box has zero half-width on axis {axis}")]
    DegenerateInput { axis: usize },
    #[error("input box must be centered at the origin (axis {axis} has midpoint {midpoint})")]
    OffCenterInput { axis: usize, midpoint: f64 },
    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("matrix is not positive definite (min eigenvalue {min_eig:e})")]
    NotPositiveDefinite { min_eig: f64 },
    #[error("matrix condition number {cond:e} exceeds cap {cap:e}")]
    IllConditioned { cond: f64, cap: f64 },
    #[error(
        "cost matrix is not positive semidefinite within tolerance (min eigenvalue {min_eig:e})"
    )]
    IndefiniteCost { min_eig: f64 },
    #[error("invalid model: {0}")]
    InvalidModel(&'static str),
    #[error("cell count {count} exceeds configured cap {cap}")]
    CoverTooLarge { count: usize, cap: usize },
    #[error("numerical failure in SDP solve: {0}")]
    Numerical(&'static str),
    #[error("certificate audit failed ({check}): value {value} at witness {witness:?}")]
    AuditFailed {
        check: AuditCheck,
        value: f64,
        witness: Vec<f64>,
    },
    #[error("no finite-valued cell contains the state")]
    PolicyUnavailable,
    #[error("Bellman inequality violated at cell {cell} (policy edge {edge:?})")]
    BellmanViolation { cell: usize, edge: Option<usize> },
    #[error(
        "successor escaped its certified target cell at step {step} (membership {membership})"
    )]
    ContainmentViolation { step: usize, membership: f64 },
    #[error("cost certification failed at step {step}: {detail}")]
    CertificationFailed { step: usize, detail: &'static str },
}
