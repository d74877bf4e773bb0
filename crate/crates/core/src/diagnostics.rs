//! Post-processing verifiers over a parametrized trajectory: the
//! energy-dissipation ledger, the stationary-set/beta segmentation, the
//! alternation report, and the chord vs energy-norm comparison.

use crate::energy::{
    assemble_energy, assemble_gradients, energy_norms, slopes_from_gradients, State,
};
use crate::evolution::{Evolution, ParamMode, ParametrizedTrajectory, Segment, SegmentKind};
use crate::system::System;
use crate::{Error, Result};

/// One audited segment end: the actual energy against the ledger
/// prediction (initial energy minus accumulated dissipation plus
/// accumulated power work).
#[derive(Debug, Clone)]
pub struct LedgerRow {
    pub s_end: f64,
    pub kind: SegmentKind,
    pub node: usize,
    pub inner: i64,
    pub t: f64,
    pub f_actual: f64,
    pub f_predicted: f64,
    pub residual: f64,
    /// Slope-times-speed work subtracted on this segment (u/z segments).
    pub dissipation_inc: f64,
    /// Power work added on this segment (time segments).
    pub power_inc: f64,
}

/// Power on a time segment with frozen fields, integrated by Simpson's
/// 3-point rule (exact for the piecewise-quadratic integrand away from
/// trace sign changes).
fn power_simpson(sys: &System, seg: &Segment) -> Result<f64> {
    let eval = |t: f64| -> Result<f64> {
        crate::energy::power(sys, &State::new(t, seg.u_start.clone(), seg.z_start.clone()))
    };
    let a = seg.t_start;
    let b = seg.t_end;
    let pa = eval(a)?;
    let pm = eval(0.5 * (a + b))?;
    let pb = eval(b)?;
    Ok((b - a) / 6.0 * (pa + 4.0 * pm + pb))
}

/// Accumulates the ledger along a trajectory, one row per segment end.
/// Chord mode subtracts slope-at-start times chord length (left endpoint
/// rule); flow mode subtracts the flow's discrete dissipation.
pub fn ledger(sys: &System, traj: &ParametrizedTrajectory) -> Result<Vec<LedgerRow>> {
    let f0 = assemble_energy(sys, &traj.initial)?.total;
    let mut predicted = f0;
    let mut rows = Vec::with_capacity(traj.segments.len());
    for seg in &traj.segments {
        let mut dissipation_inc = 0.0;
        let mut power_inc = 0.0;
        match seg.kind {
            SegmentKind::Time => {
                power_inc = power_simpson(sys, seg)?;
                predicted += power_inc;
            }
            SegmentKind::U => {
                dissipation_inc = match (&traj.mode, &seg.flow) {
                    (ParamMode::Flow, Some(fl)) => fl.dissipated_work(),
                    (ParamMode::Flow, None) => {
                        return Err(Error::Invariant(
                            "flow-mode u-segment is missing its flow payload".into(),
                        ))
                    }
                    _ => {
                        let start = State::new(seg.t_start, seg.u_start.clone(), seg.z_start.clone());
                        let (g_u, g_z) = assemble_gradients(sys, &start)?;
                        let rep = slopes_from_gradients(sys, &g_u, &g_z)?;
                        rep.slope_u * seg.arc_inc
                    }
                };
                predicted -= dissipation_inc;
            }
            SegmentKind::Z => {
                dissipation_inc = match (&traj.mode, &seg.flow) {
                    (ParamMode::Flow, Some(fl)) => fl.dissipated_work(),
                    (ParamMode::Flow, None) => {
                        return Err(Error::Invariant(
                            "flow-mode z-segment is missing its flow payload".into(),
                        ))
                    }
                    _ => {
                        let start = State::new(seg.t_start, seg.u_start.clone(), seg.z_start.clone());
                        let (g_u, g_z) = assemble_gradients(sys, &start)?;
                        let rep = slopes_from_gradients(sys, &g_u, &g_z)?;
                        rep.slope_z_unilateral * seg.arc_inc
                    }
                };
                predicted -= dissipation_inc;
            }
        }
        let end_state = State::new(seg.t_end, seg.u_end.clone(), seg.z_end.clone());
        let f_actual = assemble_energy(sys, &end_state)?.total;
        rows.push(LedgerRow {
            s_end: seg.s_end,
            kind: seg.kind,
            node: seg.node,
            inner: seg.inner,
            t: seg.t_end,
            f_actual,
            f_predicted: predicted,
            residual: f_actual - predicted,
            dissipation_inc,
            power_inc,
        });
    }
    Ok(rows)
}

/// Kind sequence and jump norms of one time node that needed more than one
/// alternation sweep.
#[derive(Debug, Clone)]
pub struct AlternationEvent {
    pub node: usize,
    pub t: f64,
    pub kinds: Vec<SegmentKind>,
    pub jumps: Vec<f64>,
}

/// The z-active set, its cumulative-length reparametrization beta, and the
/// per-node alternation events.
#[derive(Debug, Clone)]
pub struct StationarityReport {
    /// Closed s-intervals on which the phase field moves.
    pub z_intervals: Vec<(f64, f64)>,
    /// (s_end, beta(s_end)) per segment, beta = cumulative z-active length.
    pub beta: Vec<(f64, f64)>,
    pub events: Vec<AlternationEvent>,
}

impl StationarityReport {
    pub fn beta_total(&self) -> f64 {
        self.beta.last().map(|&(_, b)| b).unwrap_or(0.0)
    }
}

/// Approximates the stationary set by the union of z-segments, tabulates
/// beta, and collects the alternation events.
pub fn stationarity(traj: &ParametrizedTrajectory) -> StationarityReport {
    let mut z_intervals = Vec::new();
    let mut beta = Vec::with_capacity(traj.segments.len());
    let mut acc = 0.0;
    for seg in &traj.segments {
        if seg.kind == SegmentKind::Z {
            z_intervals.push((seg.s_start, seg.s_end));
            acc += seg.s_end - seg.s_start;
        }
        beta.push((seg.s_end, acc));
    }

    let mut events = Vec::new();
    let mut node_segs: Vec<(usize, f64, Vec<&Segment>)> = Vec::new();
    for seg in &traj.segments {
        if seg.kind == SegmentKind::Time {
            continue;
        }
        match node_segs.last_mut() {
            Some((node, _, list)) if *node == seg.node => list.push(seg),
            _ => node_segs.push((seg.node, seg.t_end, vec![seg])),
        }
    }
    for (node, t, list) in node_segs {
        let needed_more_than_one_sweep = list.iter().any(|s| s.inner >= 1);
        if !needed_more_than_one_sweep {
            continue;
        }
        events.push(AlternationEvent {
            node,
            t,
            kinds: list.iter().map(|s| s.kind).collect(),
            jumps: list.iter().map(|s| s.arc_inc).collect(),
        });
    }

    StationarityReport {
        z_intervals,
        beta,
        events,
    }
}

/// Per-node increments of the chord parametrization in the two geometries:
/// `s` measures H1 / lumped-L2 chords, `r` the intrinsic energy-norm chords
/// of the separately quadratic model.
#[derive(Debug, Clone)]
pub struct NormComparison {
    /// (node, s-increment, r-increment, ratio r/s)
    pub per_node: Vec<(usize, f64, f64, f64)>,
    pub min_ratio: f64,
    pub max_ratio: f64,
}

impl NormComparison {
    pub fn spread(&self) -> f64 {
        if self.min_ratio > 0.0 {
            self.max_ratio / self.min_ratio
        } else {
            f64::INFINITY
        }
    }
}

/// Compares per-node parametrization increments in the H1/L2 and
/// energy-norm geometries (quadratic degradation family only).
pub fn norm_comparison(sys: &System, evo: &Evolution, tau: f64) -> Result<NormComparison> {
    let n2 = sys.mesh.n_udofs();
    let zeros_u = vec![0.0; n2];
    let zeros_z = vec![0.0; sys.mesh.node_count()];
    let mut per_node = Vec::with_capacity(evo.records.len());
    let mut min_ratio = f64::INFINITY;
    let mut max_ratio = 0.0f64;
    for rec in &evo.records {
        let mut s_inc = tau;
        let mut r_inc = tau;
        let mut u_prev = &rec.u_start;
        let mut z_prev = &rec.z_start;
        for it in &rec.iterates {
            s_inc += it.chord_u + it.chord_z;
            let du: Vec<f64> = it.u.iter().zip(u_prev).map(|(a, b)| a - b).collect();
            let state_u = State::new(rec.t, u_prev.clone(), z_prev.clone());
            let (nu, _) = energy_norms(sys, &du, &zeros_z, &state_u)?;
            let dz: Vec<f64> = it.z.iter().zip(z_prev).map(|(a, b)| a - b).collect();
            let state_z = State::new(rec.t, it.u.clone(), z_prev.clone());
            let (_, nz) = energy_norms(sys, &zeros_u, &dz, &state_z)?;
            r_inc += nu + nz;
            u_prev = &it.u;
            z_prev = &it.z;
        }
        let ratio = r_inc / s_inc;
        min_ratio = min_ratio.min(ratio);
        max_ratio = max_ratio.max(ratio);
        per_node.push((rec.node, s_inc, r_inc, ratio));
    }
    Ok(NormComparison {
        per_node,
        min_ratio,
        max_ratio,
    })
}
