//! Readers and writers for the artifact files: abstraction JSON, value and
//! trajectory CSVs, sweep tables, and SDP debug dumps.
//!
//! CSV floats use Rust's shortest-roundtrip display, so identical inputs
//! produce byte-identical files. The planner's infinite values appear as the
//! literal `unreachable`, never as a sentinel number.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context};
use nalgebra::DVector;
use sfabs_core::abstraction::AbstractionGraph;
use sfabs_core::planner::ValueFunction;
use sfabs_core::sdp::LinearSdp;
use sfabs_core::sim::Rollout;

use crate::schema::{AbstractionFile, SdpDump, SystemConfig};
use crate::sweep::SweepRow;

pub fn save_abstraction(
    system: &SystemConfig,
    graph: &AbstractionGraph,
    path: &Path,
) -> anyhow::Result<()> {
    let file = File::create(path)
        .with_context(|| format!("cannot create abstraction file {}", path.display()))?;
    serde_json::to_writer(
        BufWriter::new(file),
        &AbstractionFile::from_core(system, graph),
    )
    .context("failed to serialize abstraction")?;
    Ok(())
}

pub fn load_abstraction(
    path: &Path,
) -> anyhow::Result<(
    sfabs_core::pwa::PwaSystem,
    sfabs_core::pwa::CostModel,
    AbstractionGraph,
)> {
    let file = File::open(path)
        .with_context(|| format!("cannot open abstraction file {}", path.display()))?;
    let parsed: AbstractionFile =
        serde_json::from_reader(BufReader::new(file)).context("corrupt abstraction file")?;
    parsed.to_core()
}

pub fn dump_sdp(prob: &LinearSdp, path: &Path) -> anyhow::Result<()> {
    let file =
        File::create(path).with_context(|| format!("cannot create SDP dump {}", path.display()))?;
    serde_json::to_writer(BufWriter::new(file), &SdpDump::from_core(prob))
        .context("failed to serialize SDP dump")?;
    Ok(())
}

/// `cell_id, c0..c{n-1}, value, policy_edge_id`: one row per cell, in id
/// order. Unreachable cells print `unreachable` and an empty policy field.
pub fn write_values_csv(
    graph: &AbstractionGraph,
    vf: &ValueFunction,
    path: &Path,
) -> anyhow::Result<()> {
    let cover = graph.cover();
    let dim = cover.cell(0).dim();
    let file = File::create(path)
        .with_context(|| format!("cannot create values file {}", path.display()))?;
    let mut w = BufWriter::new(file);
    let coords: Vec<String> = (0..dim).map(|d| format!("c{d}")).collect();
    writeln!(w, "cell_id,{},value,policy_edge_id", coords.join(","))?;
    for (id, cell) in cover.cells().iter().enumerate() {
        let center: Vec<String> = cell.center().iter().map(|v| format!("{v}")).collect();
        let value = if vf.value(id).is_finite() {
            format!("{}", vf.value(id))
        } else {
            "unreachable".to_string()
        };
        let policy = vf.policy(id).map(|e| e.to_string()).unwrap_or_default();
        writeln!(w, "{id},{},{value},{policy}", center.join(","))?;
    }
    Ok(())
}

/// Rebuilds a [`ValueFunction`] from a values CSV; goal ids come from the
/// abstraction the values were planned for.
pub fn read_values_csv(path: &Path, graph: &AbstractionGraph) -> anyhow::Result<ValueFunction> {
    let file =
        File::open(path).with_context(|| format!("cannot open values file {}", path.display()))?;
    let reader = BufReader::new(file);
    let n = graph.cover().len();
    let mut values = vec![f64::INFINITY; n];
    let mut policy = vec![None; n];
    let mut seen = vec![false; n];
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if lineno == 0 {
            continue; // header
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 3 {
            bail!("values file line {} is malformed", lineno + 1);
        }
        let id: usize = fields[0]
            .parse()
            .with_context(|| format!("bad cell id on line {}", lineno + 1))?;
        if id >= n {
            bail!("cell id {id} out of range for this abstraction");
        }
        let value_field = fields[fields.len() - 2];
        let policy_field = fields[fields.len() - 1];
        values[id] = if value_field == "unreachable" {
            f64::INFINITY
        } else {
            value_field
                .parse()
                .with_context(|| format!("bad value on line {}", lineno + 1))?
        };
        policy[id] = if policy_field.is_empty() {
            None
        } else {
            Some(
                policy_field
                    .parse()
                    .with_context(|| format!("bad policy edge on line {}", lineno + 1))?,
            )
        };
        seen[id] = true;
    }
    if seen.iter().any(|s| !s) {
        bail!("values file does not cover every cell of the abstraction");
    }
    ValueFunction::from_parts(values, policy, graph.goal_ids().to_vec())
        .context("values file inconsistent with the abstraction")
}

/// One row per step and seed: `seed, step, x*, u*, cell_id, stage_cost,
/// value_at_state`, plus a terminal row per rollout carrying the final state
/// with empty input/cell/cost fields.
pub fn write_trajectories_csv(
    rollouts: &[Rollout],
    values_along: &[Vec<f64>],
    path: &Path,
) -> anyhow::Result<()> {
    let file = File::create(path)
        .with_context(|| format!("cannot create trajectory file {}", path.display()))?;
    let mut w = BufWriter::new(file);
    let (dim_x, dim_u) = rollouts
        .iter()
        .find(|r| !r.inputs.is_empty())
        .map(|r| (r.states[0].len(), r.inputs[0].len()))
        .unwrap_or_else(|| {
            let dx = rollouts.first().map(|r| r.states[0].len()).unwrap_or(0);
            (dx, 0)
        });
    let xcols: Vec<String> = (0..dim_x).map(|d| format!("x{d}")).collect();
    let ucols: Vec<String> = (0..dim_u).map(|d| format!("u{d}")).collect();
    writeln!(
        w,
        "seed,step,{},{},cell_id,stage_cost,value_at_state",
        xcols.join(","),
        ucols.join(",")
    )?;
    let fmt_vec = |v: &DVector<f64>| -> String {
        v.iter()
            .map(|x| format!("{x}"))
            .collect::<Vec<_>>()
            .join(",")
    };
    for (rollout, values) in rollouts.iter().zip(values_along) {
        for (step, (state, value)) in rollout.states.iter().zip(values).enumerate() {
            let state = fmt_vec(state);
            if step < rollout.inputs.len() {
                writeln!(
                    w,
                    "{},{step},{state},{},{},{},{value}",
                    rollout.seed,
                    fmt_vec(&rollout.inputs[step]),
                    rollout.cells[step].0,
                    rollout.stage_costs[step],
                )?;
            } else {
                let empty_u = vec![""; dim_u].join(",");
                writeln!(w, "{},{step},{state},{empty_u},,,{value}", rollout.seed)?;
            }
        }
    }
    Ok(())
}

/// One row per sweep grid point, in grid order. The solve-time column is
/// wall-clock and therefore not reproducible across runs; every other column
/// is deterministic.
pub fn write_sweep_csv(rows: &[SweepRow], path: &Path) -> anyhow::Result<()> {
    let file = File::create(path)
        .with_context(|| format!("cannot create sweep file {}", path.display()))?;
    let mut w = BufWriter::new(file);
    writeln!(
        w,
        "nu,eta,omega_max,feasible,cost_bound,spectral_radius,solve_time_s"
    )?;
    for r in rows {
        let cost = r.cost_bound.map(|v| format!("{v}")).unwrap_or_default();
        let rho = r
            .spectral_radius
            .map(|v| format!("{v}"))
            .unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{cost},{rho},{}",
            r.nu, r.eta, r.omega_max, r.feasible, r.solve_time_s
        )?;
    }
    Ok(())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let file =
        File::open(path).with_context(|| format!("cannot open config {}", path.display()))?;
    serde_json::from_reader(BufReader::new(file))
        .with_context(|| format!("failed to parse {}", path.display()))
}

pub fn write_json<T: serde::Serialize>(value: &T, path: &Path) -> anyhow::Result<()> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    serde_json::to_writer_pretty(BufWriter::new(file), value)
        .with_context(|| format!("failed to write {}", path.display()))?;
    Ok(())
}
