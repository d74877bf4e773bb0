//! Run orchestration: evolve, parametrize, audit, serialize.

use std::path::Path;

use crate::config::Config;
use crate::diagnostics::{ledger, norm_comparison, stationarity};
use crate::energy::{assemble_energy, assemble_gradients, power, slopes_from_gradients, State};
use crate::evolution::{evolve, parametrize, ParamMode, SegmentKind};
use crate::model::DegradationFamily;
use crate::output::{write_csv, write_report, write_vtk, CsvRow, ReportInput};
use crate::{Error, Result};

/// Exit statuses of `run`.
pub const EXIT_OK: i32 = 0;
pub const EXIT_SOLVER_FAILURE: i32 = 2;
pub const EXIT_INVARIANT_VIOLATION: i32 = 3;

/// State quantities at every segment end, zipped with the ledger.
pub fn trajectory_rows(
    sys: &crate::system::System,
    traj: &crate::evolution::ParametrizedTrajectory,
    rows: &[crate::diagnostics::LedgerRow],
) -> Result<Vec<CsvRow>> {
    let mut csv_rows = Vec::with_capacity(traj.segments.len());
    for (seg, row) in traj.segments.iter().zip(rows) {
        let end = State::new(seg.t_end, seg.u_end.clone(), seg.z_end.clone());
        let energy = assemble_energy(sys, &end)?;
        let (g_u, g_z) = assemble_gradients(sys, &end)?;
        let rep = slopes_from_gradients(sys, &g_u, &g_z)?;
        let pw = power(sys, &end)?;
        csv_rows.push(CsvRow {
            s: seg.s_end,
            kind: seg.kind.label(),
            node: seg.node,
            inner: seg.inner,
            t: seg.t_end,
            energy,
            slope_u: rep.slope_u,
            slope_z: rep.slope_z_unilateral,
            arc_inc: seg.arc_inc,
            power: pw,
            ledger_residual: row.residual,
        });
    }
    Ok(csv_rows)
}

pub struct RunOutcome {
    pub exit_code: i32,
    /// Diagnostics worth surfacing on stderr.
    pub messages: Vec<String>,
    pub total_length: f64,
    pub csv_rows: usize,
}

/// Executes a validated configuration: initial equilibrium, staggered
/// evolution, arc-length parametrization, ledger and stationarity reports,
/// CSV/VTK/report files. Partial outputs are flushed before reporting a
/// solver failure.
pub fn run(cfg: &Config, config_label: &str) -> Result<RunOutcome> {
    std::fs::create_dir_all(&cfg.output_dir)?;
    let sys = cfg.build_system()?;
    let z0 = cfg.initial_z(&sys.mesh);
    let evo = evolve(&sys, &cfg.time, &z0, &cfg.stagger)?;
    let mut messages = Vec::new();

    // per-state VTK snapshots (state 0 is the initial equilibrium)
    {
        let path = cfg.output_dir.join("state_0000.vtk");
        write_vtk(
            &path,
            &sys.mesh,
            &evo.initial.u,
            &evo.initial.z,
            "staggered evolution state 0",
        )?;
        for rec in &evo.records {
            if rec.node % cfg.vtk_stride != 0 {
                continue;
            }
            let path = cfg.output_dir.join(format!("state_{:04}.vtk", rec.node));
            write_vtk(
                &path,
                &sys.mesh,
                rec.final_u(),
                rec.final_z(),
                &format!("staggered evolution state {}", rec.node),
            )?;
        }
    }

    let traj = parametrize(&sys, &evo, &cfg.time, cfg.mode, &cfg.stagger)?;
    let rows = ledger(&sys, &traj)?;
    let stat = stationarity(&traj);
    let norms = if cfg.degradation == DegradationFamily::Quadratic {
        Some(norm_comparison(&sys, &evo, cfg.time.tau())?)
    } else {
        None
    };

    let csv_rows = trajectory_rows(&sys, &traj, &rows)?;
    if cfg.write_csv {
        write_csv(&cfg.output_dir.join("trajectory.csv"), &csv_rows)?;
    }

    // invariant audit
    let mut irreversibility_worst = 0.0f64;
    let mut bounds_worst = 0.0f64;
    let mut z_prev = evo.initial.z.clone();
    for rec in &evo.records {
        for (a, b) in rec.final_z().iter().zip(&z_prev) {
            irreversibility_worst = irreversibility_worst.max(a - b);
            bounds_worst = bounds_worst.max((-a).max(a - 1.0));
        }
        z_prev = rec.final_z().to_vec();
    }
    let mut equilibrium_worst = 0.0f64;
    for rec in &evo.records {
        if !rec.converged {
            continue;
        }
        if let Some(it) = rec.iterates.last() {
            let denom = 1.0 + it.energy.total.abs();
            equilibrium_worst =
                equilibrium_worst.max(it.slope_u.max(it.slope_z) / denom);
        }
    }

    let final_state = {
        let z = &evo.final_state.z;
        (
            evo.final_state.t,
            sys.ips.h1_norm(&sys.mesh, &evo.final_state.u),
            z.iter().cloned().fold(f64::MAX, f64::min),
            z.iter().cloned().fold(f64::MIN, f64::max),
        )
    };
    write_report(
        &cfg.output_dir.join("report.txt"),
        &ReportInput {
            config_path: config_label.to_string(),
            mode: cfg.mode.to_string(),
            traj: &traj,
            ledger: &rows,
            stationarity: &stat,
            norms: norms.as_ref(),
            equilibrium_worst,
            irreversibility_worst,
            bounds_worst,
            final_state,
            failure: evo.failure.as_ref(),
        },
    )?;

    let exit_code = if let Some((node, msg)) = &evo.failure {
        messages.push(format!("solver failure at time node {node}: {msg}"));
        EXIT_SOLVER_FAILURE
    } else {
        let mut violated = Vec::new();
        if irreversibility_worst > 1e-12 {
            violated.push(format!(
                "irreversibility violated by {irreversibility_worst:e}"
            ));
        }
        if bounds_worst > 1e-12 {
            violated.push(format!("phase field left [0, 1] by {bounds_worst:e}"));
        }
        if equilibrium_worst > 1e-6 {
            violated.push(format!(
                "equilibrium slope {equilibrium_worst:e} above 1e-6 at a converged node"
            ));
        }
        let f0 = assemble_energy(&sys, &traj.initial)?.total;
        if cfg.mode == ParamMode::Chord {
            let worst = rows
                .iter()
                .map(|r| -r.residual)
                .fold(f64::NEG_INFINITY, f64::max);
            if worst > 1e-8 * (1.0 + f0.abs()) {
                violated.push(format!("one-sided ledger violated by {worst:e}"));
            }
        }
        for seg in &traj.segments {
            if seg.kind == SegmentKind::Time
                && (seg.arc_inc - cfg.time.tau()).abs() > 1e-12 * (1.0 + cfg.time.tau())
            {
                violated.push("time segment with increment != tau".into());
                break;
            }
        }
        if violated.is_empty() {
            EXIT_OK
        } else {
            messages.extend(violated);
            EXIT_INVARIANT_VIOLATION
        }
    };

    Ok(RunOutcome {
        exit_code,
        messages,
        total_length: traj.total_length,
        csv_rows: csv_rows.len(),
    })
}

/// Convenience wrapper: parse a config file, apply CLI overrides, run.
pub fn run_file(
    path: &Path,
    output_dir: Option<&Path>,
    mode: Option<ParamMode>,
) -> Result<RunOutcome> {
    let mut cfg = crate::config::parse_config(path)?;
    if let Some(dir) = output_dir {
        cfg.output_dir = dir.to_path_buf();
    }
    if let Some(m) = mode {
        cfg.mode = m;
    }
    if cfg.mode == ParamMode::EnergyNormChord && cfg.degradation != DegradationFamily::Quadratic {
        return Err(Error::Unsupported(
            "energy-norm-chord mode requires the quadratic degradation family".into(),
        ));
    }
    run(&cfg, &path.display().to_string())
}
