//! Serialization: trajectory CSV, legacy ASCII VTK fields, run report.
//! Floats are written with 17 significant digits so parsing them back is
//! exact; node order is the row-major mesh order.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::diagnostics::{LedgerRow, NormComparison, StationarityReport};
use crate::energy::EnergyBreakdown;
use crate::evolution::ParametrizedTrajectory;
use crate::fem::Mesh;
use crate::Result;

/// 17 significant digits; round-trips through f64 parsing exactly.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// One CSV row, emitted at a segment end.
#[derive(Debug, Clone)]
pub struct CsvRow {
    pub s: f64,
    pub kind: &'static str,
    pub node: usize,
    pub inner: i64,
    pub t: f64,
    pub energy: EnergyBreakdown,
    pub slope_u: f64,
    pub slope_z: f64,
    pub arc_inc: f64,
    pub power: f64,
    pub ledger_residual: f64,
}

pub fn write_csv(path: &Path, rows: &[CsvRow]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(
        w,
        "s,segment_kind,node_i,inner_j,t,F,E,D,slope_u,slope_z,arc_inc,power,ledger_residual"
    )?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            fmt17(r.s),
            r.kind,
            r.node,
            r.inner,
            fmt17(r.t),
            fmt17(r.energy.total),
            fmt17(r.energy.elastic),
            fmt17(r.energy.dissipation),
            fmt17(r.slope_u),
            fmt17(r.slope_z),
            fmt17(r.arc_inc),
            fmt17(r.power),
            fmt17(r.ledger_residual),
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Legacy ASCII VTK 2.0 unstructured grid with the displacement vector and
/// phase scalar as point data.
pub fn write_vtk(path: &Path, mesh: &Mesh, u: &[f64], z: &[f64], title: &str) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# vtk DataFile Version 2.0")?;
    writeln!(w, "{title}")?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(w, "POINTS {} double", mesh.node_count())?;
    for p in &mesh.nodes {
        writeln!(w, "{} {} 0", fmt17(p[0]), fmt17(p[1]))?;
    }
    writeln!(w, "CELLS {} {}", mesh.element_count(), 4 * mesh.element_count())?;
    for t in &mesh.triangles {
        writeln!(w, "3 {} {} {}", t[0], t[1], t[2])?;
    }
    writeln!(w, "CELL_TYPES {}", mesh.element_count())?;
    for _ in 0..mesh.element_count() {
        writeln!(w, "5")?;
    }
    writeln!(w, "POINT_DATA {}", mesh.node_count())?;
    writeln!(w, "VECTORS displacement double")?;
    for i in 0..mesh.node_count() {
        writeln!(w, "{} {} 0", fmt17(u[2 * i]), fmt17(u[2 * i + 1]))?;
    }
    writeln!(w, "SCALARS phase double 1")?;
    writeln!(w, "LOOKUP_TABLE default")?;
    for v in z {
        writeln!(w, "{}", fmt17(*v))?;
    }
    w.flush()?;
    Ok(())
}

/// Summary lines appended by the orchestrator.
pub struct ReportInput<'a> {
    pub config_path: String,
    pub mode: String,
    pub traj: &'a ParametrizedTrajectory,
    pub ledger: &'a [LedgerRow],
    pub stationarity: &'a StationarityReport,
    pub norms: Option<&'a NormComparison>,
    pub equilibrium_worst: f64,
    pub irreversibility_worst: f64,
    pub bounds_worst: f64,
    /// (t, |u|_H1, min z, max z) of the final state.
    pub final_state: (f64, f64, f64, f64),
    pub failure: Option<&'a (usize, String)>,
}

pub fn write_report(path: &Path, inp: &ReportInput<'_>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "run report")?;
    writeln!(w, "==========")?;
    writeln!(w, "config: {}", inp.config_path)?;
    writeln!(w, "parametrization mode: {}", inp.mode)?;
    writeln!(w)?;
    writeln!(w, "[equilibrium]")?;
    writeln!(
        w,
        "worst relative slope at converged nodes: {}",
        fmt17(inp.equilibrium_worst)
    )?;
    writeln!(w)?;
    writeln!(w, "[irreversibility]")?;
    writeln!(
        w,
        "max nodewise increase across nodes: {}",
        fmt17(inp.irreversibility_worst)
    )?;
    writeln!(
        w,
        "max excursion outside [0, 1]: {}",
        fmt17(inp.bounds_worst)
    )?;
    writeln!(w)?;
    writeln!(w, "[ledger]")?;
    let (mut rmin, mut rmax) = (f64::INFINITY, f64::NEG_INFINITY);
    for r in inp.ledger {
        rmin = rmin.min(r.residual);
        rmax = rmax.max(r.residual);
    }
    if inp.ledger.is_empty() {
        writeln!(w, "no rows")?;
    } else {
        writeln!(w, "rows: {}", inp.ledger.len())?;
        writeln!(w, "residual min: {}", fmt17(rmin))?;
        writeln!(w, "residual max: {}", fmt17(rmax))?;
    }
    writeln!(w)?;
    writeln!(w, "[arc length]")?;
    writeln!(w, "S_k: {}", fmt17(inp.traj.total_length))?;
    writeln!(w, "segments: {}", inp.traj.segments.len())?;
    for (i, s) in inp.traj.node_s.iter().enumerate() {
        writeln!(w, "s at node {i}: {}", fmt17(*s))?;
    }
    writeln!(w)?;
    writeln!(w, "[final state]")?;
    let (tf, unorm, zmin, zmax) = inp.final_state;
    writeln!(w, "t: {}", fmt17(tf))?;
    writeln!(w, "|u|_H1: {}", fmt17(unorm))?;
    writeln!(w, "z min: {}", fmt17(zmin))?;
    writeln!(w, "z max: {}", fmt17(zmax))?;
    writeln!(w)?;
    writeln!(w, "[stationarity]")?;
    writeln!(
        w,
        "z-active intervals: {} (total length {})",
        inp.stationarity.z_intervals.len(),
        fmt17(inp.stationarity.beta_total())
    )?;
    writeln!(w, "alternation events: {}", inp.stationarity.events.len())?;
    for ev in &inp.stationarity.events {
        let kinds: Vec<&str> = ev.kinds.iter().map(|k| k.label()).collect();
        writeln!(
            w,
            "  node {} (t = {}): {} with jumps {:?}",
            ev.node,
            fmt17(ev.t),
            kinds.join(","),
            ev.jumps.iter().map(|j| fmt17(*j)).collect::<Vec<_>>()
        )?;
    }
    if let Some(nc) = inp.norms {
        writeln!(w)?;
        writeln!(w, "[norm comparison]")?;
        writeln!(w, "ratio min: {}", fmt17(nc.min_ratio))?;
        writeln!(w, "ratio max: {}", fmt17(nc.max_ratio))?;
        writeln!(w, "spread: {}", fmt17(nc.spread()))?;
    }
    if let Some((node, msg)) = inp.failure {
        writeln!(w)?;
        writeln!(w, "[failure]")?;
        writeln!(w, "node {node}: {msg}")?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fmt17_roundtrips() {
        for &x in &[
            0.0,
            1.0,
            -1.5,
            std::f64::consts::PI,
            1.0 / 3.0,
            6.02e23,
            -2.2e-308,
            f64::MIN_POSITIVE,
        ] {
            let s = fmt17(x);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back.to_bits(), x.to_bits(), "{x} -> {s} -> {back}");
        }
    }
}
