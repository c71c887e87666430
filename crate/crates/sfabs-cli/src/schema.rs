//! On-disk JSON schemas and their conversions to core types.
//!
//! All matrices are nested arrays of rows (row-major), all vectors flat
//! arrays, all numbers decimal floats. `serde_json` prints floats in
//! shortest-roundtrip form, so save/load cycles preserve every bit.

use anyhow::{bail, Context};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sfabs_core::abstraction::{AbstractionGraph, CellCover, Edge};
use sfabs_core::lmi::{SynthesisDiagnostics, TransitionController};
use sfabs_core::pwa::{AffineMode, Cmp, CostModel, HalfSpace, PwaSystem};
use sfabs_core::sdp::LinearSdp;
use sfabs_core::sets::{AaBox, Ellipsoid, Region};

/// Version tag of the abstraction file format.
pub const SCHEMA_VERSION: u32 = 1;

pub fn rows_to_matrix(rows: &[Vec<f64>], what: &str) -> anyhow::Result<DMatrix<f64>> {
    if rows.is_empty() {
        return Ok(DMatrix::zeros(0, 0));
    }
    let ncols = rows[0].len();
    if rows.iter().any(|r| r.len() != ncols) {
        bail!("{what}: ragged matrix rows");
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

pub fn vec_to_dvector(v: &[f64]) -> DVector<f64> {
    DVector::from_row_slice(v)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoxConfig {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxConfig {
    pub fn to_core(&self, what: &str) -> anyhow::Result<AaBox> {
        AaBox::new(vec_to_dvector(&self.lo), vec_to_dvector(&self.hi))
            .with_context(|| format!("invalid box for {what}"))
    }

    pub fn from_core(b: &AaBox) -> Self {
        Self {
            lo: b.lo().iter().copied().collect(),
            hi: b.hi().iter().copied().collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CmpConfig {
    Le,
    Lt,
    Ge,
    Gt,
}

impl From<CmpConfig> for Cmp {
    fn from(c: CmpConfig) -> Self {
        match c {
            CmpConfig::Le => Cmp::Le,
            CmpConfig::Lt => Cmp::Lt,
            CmpConfig::Ge => Cmp::Ge,
            CmpConfig::Gt => Cmp::Gt,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HalfSpaceConfig {
    pub axis: usize,
    pub op: CmpConfig,
    pub bound: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModeConfig {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub g: Vec<f64>,
}

impl ModeConfig {
    pub fn to_core(&self) -> anyhow::Result<AffineMode> {
        AffineMode::new(
            rows_to_matrix(&self.a, "mode A")?,
            rows_to_matrix(&self.b, "mode B")?,
            vec_to_dvector(&self.g),
        )
        .context("invalid affine mode")
    }
}

/// One noise box shared by every mode, or one per mode.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NoiseConfig {
    Shared(BoxConfig),
    PerMode(Vec<BoxConfig>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SystemConfig {
    pub modes: Vec<ModeConfig>,
    pub partition: Vec<Vec<HalfSpaceConfig>>,
    pub domain: BoxConfig,
    pub input_box: BoxConfig,
    pub noise_box: NoiseConfig,
    #[serde(rename = "cost_Q")]
    pub cost_q: Vec<Vec<f64>>,
}

impl SystemConfig {
    pub fn to_core(&self) -> anyhow::Result<(PwaSystem, CostModel)> {
        let modes: Vec<AffineMode> = self
            .modes
            .iter()
            .map(ModeConfig::to_core)
            .collect::<anyhow::Result<_>>()?;
        if modes.is_empty() {
            bail!("system needs at least one mode");
        }
        let n_x = modes[0].state_dim();
        let n_u = modes[0].input_dim();
        let partition: Vec<Vec<HalfSpace>> = self
            .partition
            .iter()
            .map(|preds| {
                preds
                    .iter()
                    .map(|h| HalfSpace {
                        axis: h.axis,
                        op: h.op.into(),
                        bound: h.bound,
                    })
                    .collect()
            })
            .collect();
        let noise_boxes = match &self.noise_box {
            NoiseConfig::Shared(b) => vec![b.to_core("noise_box")?; modes.len()],
            NoiseConfig::PerMode(list) => list
                .iter()
                .map(|b| b.to_core("noise_box"))
                .collect::<anyhow::Result<_>>()?,
        };
        let system = PwaSystem::new(
            modes,
            partition,
            self.domain.to_core("domain")?,
            self.input_box.to_core("input_box")?,
            noise_boxes,
        )
        .context("invalid system definition")?;
        let cost = CostModel::new(rows_to_matrix(&self.cost_q, "cost_Q")?, n_x, n_u)
            .context("invalid cost_Q")?;
        Ok((system, cost))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EllipsoidConfig {
    pub shape: Vec<Vec<f64>>,
    pub center: Vec<f64>,
}

impl EllipsoidConfig {
    pub fn to_core(&self, what: &str) -> anyhow::Result<Ellipsoid> {
        Ellipsoid::new(
            rows_to_matrix(&self.shape, what)?,
            vec_to_dvector(&self.center),
        )
        .with_context(|| format!("invalid ellipsoid for {what}"))
    }
}

/// Input for `synthesize-transition`: one mode, source and target ellipsoids,
/// the noise and input boxes, and the stage-cost matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransitionProblemConfig {
    pub mode: ModeConfig,
    pub source: EllipsoidConfig,
    pub target: EllipsoidConfig,
    pub noise_box: BoxConfig,
    pub input_box: BoxConfig,
    #[serde(rename = "cost_Q")]
    pub cost_q: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ControllerRecord {
    pub k: Vec<Vec<f64>>,
    pub l: Vec<f64>,
    pub cost_bound: f64,
    pub beta: Vec<f64>,
    pub tau: Vec<f64>,
    pub gamma: f64,
}

impl ControllerRecord {
    pub fn from_core(c: &TransitionController) -> Self {
        Self {
            k: matrix_to_rows(&c.k),
            l: c.l.iter().copied().collect(),
            cost_bound: c.cost_bound,
            beta: c.beta.clone(),
            tau: c.tau.clone(),
            gamma: c.gamma,
        }
    }

    pub fn to_core(&self) -> anyhow::Result<TransitionController> {
        Ok(TransitionController {
            k: rows_to_matrix(&self.k, "controller K")?,
            l: vec_to_dvector(&self.l),
            cost_bound: self.cost_bound,
            beta: self.beta.clone(),
            tau: self.tau.clone(),
            gamma: self.gamma,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub iterations: usize,
    pub duality_gap: f64,
    pub min_eig_slack: f64,
    pub boundary_multipliers: Vec<usize>,
    pub solve_seconds: f64,
}

impl DiagnosticsRecord {
    pub fn from_core(d: &SynthesisDiagnostics, solve_seconds: f64) -> Self {
        Self {
            iterations: d.iterations,
            duality_gap: d.duality_gap,
            min_eig_slack: d.min_eig_slack,
            boundary_multipliers: d.boundary_multipliers.clone(),
            solve_seconds,
        }
    }
}

/// Output of `synthesize-transition`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthesisRecord {
    /// "feasible" or "infeasible".
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub controller: Option<ControllerRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub infeasibility_margin: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<DiagnosticsRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionConfig {
    Box(BoxConfig),
    Ball { center: Vec<f64>, radius: f64 },
}

impl RegionConfig {
    pub fn to_core(&self, what: &str) -> anyhow::Result<Region> {
        Ok(match self {
            RegionConfig::Box(b) => Region::Box(b.to_core(what)?),
            RegionConfig::Ball { center, radius } => {
                if !radius.is_finite() || *radius <= 0.0 {
                    bail!("{what}: ball radius must be positive");
                }
                Region::Ball {
                    center: vec_to_dvector(center),
                    radius: *radius,
                }
            }
        })
    }
}

fn default_rollouts() -> usize {
    100
}

fn default_max_steps() -> usize {
    sfabs_core::sim::DEFAULT_MAX_STEPS
}

/// Configuration for `build-abstraction` and `experiment`: the system plus
/// the control task (start state, goal, obstacles). The goal and obstacle
/// geometry is always explicit; there are no built-in defaults.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskConfig {
    pub system: SystemConfig,
    pub radius: f64,
    pub goal: RegionConfig,
    #[serde(default)]
    pub obstacles: Vec<RegionConfig>,
    pub x0: Vec<f64>,
    #[serde(default = "default_rollouts")]
    pub rollouts: usize,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
}

/// Grids for the single-transition sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepConfig {
    /// Base problem name; only "companion3" is built in.
    #[serde(default = "default_base")]
    pub base: String,
    pub nu: Vec<f64>,
    pub eta: Vec<f64>,
    pub omega_max: Vec<f64>,
}

fn default_base() -> String {
    "companion3".to_string()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellRecord {
    pub center: Vec<f64>,
    pub mode: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub source: usize,
    pub target: usize,
    pub controller: ControllerRecord,
}

/// Persisted abstraction (schema v1). Cells are balls, so storing centers,
/// the shared radius and grid spacing reproduces the cover exactly. The
/// system definition is embedded so simulation needs no second file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AbstractionFile {
    pub schema_version: u32,
    pub system: SystemConfig,
    pub radius: f64,
    pub grid_spacing: f64,
    pub cells: Vec<CellRecord>,
    pub edges: Vec<EdgeRecord>,
    pub goal_ids: Vec<usize>,
    pub blocked_ids: Vec<usize>,
}

impl AbstractionFile {
    pub fn from_core(system: &SystemConfig, graph: &AbstractionGraph) -> Self {
        let cover = graph.cover();
        Self {
            schema_version: SCHEMA_VERSION,
            system: system.clone(),
            radius: cover.radius(),
            grid_spacing: cover.grid_spacing(),
            cells: cover
                .cells()
                .iter()
                .zip(cover.modes())
                .map(|(cell, &mode)| CellRecord {
                    center: cell.center().iter().copied().collect(),
                    mode,
                })
                .collect(),
            edges: graph
                .edges()
                .iter()
                .map(|e| EdgeRecord {
                    source: e.source,
                    target: e.target,
                    controller: ControllerRecord::from_core(&e.controller),
                })
                .collect(),
            goal_ids: graph.goal_ids().to_vec(),
            blocked_ids: graph.blocked_ids().to_vec(),
        }
    }

    /// Rebuilds the system, cost model, and graph.
    pub fn to_core(&self) -> anyhow::Result<(PwaSystem, CostModel, AbstractionGraph)> {
        if self.schema_version != SCHEMA_VERSION {
            bail!(
                "abstraction schema version {} unsupported (expected {})",
                self.schema_version,
                SCHEMA_VERSION
            );
        }
        let (system, cost) = self.system.to_core()?;
        let cells: Vec<Ellipsoid> = self
            .cells
            .iter()
            .map(|c| Ellipsoid::ball(vec_to_dvector(&c.center), self.radius))
            .collect();
        let modes: Vec<usize> = self.cells.iter().map(|c| c.mode).collect();
        let cover = CellCover::from_parts(cells, self.radius, self.grid_spacing, modes)
            .context("invalid cover in abstraction file")?;
        let edges: Vec<Edge> = self
            .edges
            .iter()
            .map(|e| {
                Ok(Edge {
                    source: e.source,
                    target: e.target,
                    controller: e.controller.to_core()?,
                })
            })
            .collect::<anyhow::Result<_>>()?;
        let graph = AbstractionGraph::new(
            cover,
            edges,
            self.goal_ids.clone(),
            self.blocked_ids.clone(),
        )
        .context("invalid graph in abstraction file")?;
        Ok((system, cost, graph))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SdpBlockDump {
    pub dim: usize,
    /// Row-major flattened `F₀`.
    pub f0: Vec<f64>,
    /// Row-major flattened coefficient matrices, one per variable.
    pub coeffs: Vec<Vec<f64>>,
}

/// Debug dump of a canonical-form SDP, for reproducing solver behavior.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SdpDump {
    pub num_vars: usize,
    pub objective: Vec<f64>,
    pub blocks: Vec<SdpBlockDump>,
}

impl SdpDump {
    pub fn from_core(prob: &LinearSdp) -> Self {
        let flat = |m: &DMatrix<f64>| -> Vec<f64> {
            (0..m.nrows())
                .flat_map(|i| (0..m.ncols()).map(move |j| (i, j)))
                .map(|(i, j)| m[(i, j)])
                .collect()
        };
        Self {
            num_vars: prob.num_vars(),
            objective: prob.objective.iter().copied().collect(),
            blocks: prob
                .blocks
                .iter()
                .map(|b| SdpBlockDump {
                    dim: b.dim(),
                    f0: flat(&b.f0),
                    coeffs: b.coeffs.iter().map(&flat).collect(),
                })
                .collect(),
        }
    }
}
