//! The time-incremental staggered evolution: inner alternate-minimization
//! loops at each time node, irreversibility threading, and the arc-length
//! parametrization of the resulting discrete graph.

use crate::energy::{
    assemble_energy, assemble_gradients, energy_norms, slopes_from_gradients, EnergyBreakdown,
    State,
};
use crate::model::TimeGrid;
use crate::solver::{flow_u, flow_z, solve_u, solve_z, FlowTrajectory, SolveOptions};
use crate::system::System;
use crate::{Error, Result};

/// Options of the outer staggered loop on top of the subproblem solver
/// options.
#[derive(Debug, Clone, Copy)]
pub struct StaggerOptions {
    pub solve: SolveOptions,
    /// Successive-iterate distance tolerance of the inner loop.
    pub tol_stag: f64,
    pub max_inner: usize,
    /// Pseudo-time step of the interpolating flows (flow mode).
    pub flow_dl: f64,
}

impl Default for StaggerOptions {
    fn default() -> Self {
        Self {
            solve: SolveOptions::default(),
            tol_stag: 1e-9,
            max_inner: 200,
            flow_dl: 0.05,
        }
    }
}

/// One inner sweep: the pair after the u-solve and the constrained z-solve,
/// with chord lengths, energies at the half and full step, and the joint
/// slopes of the new pair.
#[derive(Debug, Clone)]
pub struct InnerIterate {
    pub u: Vec<f64>,
    pub z: Vec<f64>,
    /// `|u_{j+1} - u_j|` in H1.
    pub chord_u: f64,
    /// `|z_{j+1} - z_j|` in lumped L2.
    pub chord_z: f64,
    /// `F(t_i, u_{j+1}, z_j)`, after the displacement update.
    pub energy_half: EnergyBreakdown,
    /// `F(t_i, u_{j+1}, z_{j+1})`.
    pub energy: EnergyBreakdown,
    pub slope_u: f64,
    pub slope_z: f64,
}

/// The inner history of one time node.
#[derive(Debug, Clone)]
pub struct StaggeredRecord {
    /// Time node index (1-based; node 0 is the initial state).
    pub node: usize,
    pub t: f64,
    pub u_start: Vec<f64>,
    pub z_start: Vec<f64>,
    pub iterates: Vec<InnerIterate>,
    pub inner_count: usize,
    pub converged: bool,
}

impl StaggeredRecord {
    pub fn final_u(&self) -> &[f64] {
        self.iterates.last().map(|it| &it.u[..]).unwrap_or(&self.u_start)
    }

    pub fn final_z(&self) -> &[f64] {
        self.iterates.last().map(|it| &it.z[..]).unwrap_or(&self.z_start)
    }
}

/// Initial equilibrium: minimize in `u` at the initial datum, relax `z`
/// under its own bound, and iterate the pair until jointly stationary.
pub fn initial_state(sys: &System, z0: &[f64], opts: &StaggerOptions) -> Result<State> {
    if z0.iter().any(|&v| !((-1e-12..=1.0 + 1e-12).contains(&v))) {
        return Err(Error::Infeasible("initial phase field outside [0, 1]".into()));
    }
    let n = sys.mesh.node_count();
    if z0.len() != n {
        return Err(Error::SizeMismatch("initial phase field size".into()));
    }
    let mut u = vec![0.0; sys.mesh.n_udofs()];
    let mut z = z0.to_vec();
    for _ in 0..opts.max_inner {
        let (unew, _) = solve_u(sys, 0.0, &z, &u, &opts.solve)?;
        u = unew;
        let (znew, _, _) = solve_z(sys, 0.0, &u, &z, &z, &opts.solve)?;
        z = znew;
        let state = State::new(0.0, u.clone(), z.clone());
        let (g_u, g_z) = assemble_gradients(sys, &state)?;
        let rep = slopes_from_gradients(sys, &g_u, &g_z)?;
        let f = assemble_energy(sys, &state)?.total;
        let tol = opts.solve.tol_slope * (1.0 + f.abs());
        if rep.slope_u <= tol && rep.slope_z_unilateral <= tol {
            return Ok(state);
        }
    }
    Err(Error::NonConvergence {
        what: "initial alternate loop".into(),
        iterations: opts.max_inner,
        last_slope: f64::NAN,
    })
}

/// One time node of the staggered scheme: alternate `solve_u` / `solve_z`
/// from `(u_prev, z_prev)` under the shrinking bound `z <= z_{i,j}` until
/// both successive-iterate distances fall below `tol_stag` and the pair is
/// jointly stationary, or `max_inner` is hit (recorded, not fatal).
pub fn staggered_step(
    sys: &System,
    node: usize,
    t: f64,
    u_prev: &[f64],
    z_prev: &[f64],
    opts: &StaggerOptions,
) -> Result<StaggeredRecord> {
    if z_prev
        .iter()
        .any(|&v| !((-1e-12..=1.0 + 1e-12).contains(&v)))
    {
        return Err(Error::Infeasible(format!(
            "phase field outside [0, 1] entering node {node}"
        )));
    }
    let mut rec = StaggeredRecord {
        node,
        t,
        u_start: u_prev.to_vec(),
        z_start: z_prev.to_vec(),
        iterates: Vec::new(),
        inner_count: 0,
        converged: false,
    };
    let mut u = u_prev.to_vec();
    let mut z = z_prev.to_vec();
    for _ in 0..opts.max_inner {
        let (u_next, _) = solve_u(sys, t, &z, &u, &opts.solve)?;
        let chord_u = {
            let d: Vec<f64> = u_next.iter().zip(&u).map(|(a, b)| a - b).collect();
            sys.ips.h1_norm(&sys.mesh, &d)
        };
        let energy_half = assemble_energy(sys, &State::new(t, u_next.clone(), z.clone()))?;
        let (z_next, _, _) = solve_z(sys, t, &u_next, &z, &z, &opts.solve)?;
        let chord_z = {
            let d: Vec<f64> = z_next.iter().zip(&z).map(|(a, b)| a - b).collect();
            sys.ips.l2_lumped_norm(&d)
        };
        let state = State::new(t, u_next.clone(), z_next.clone());
        let energy = assemble_energy(sys, &state)?;
        let (g_u, g_z) = assemble_gradients(sys, &state)?;
        let rep = slopes_from_gradients(sys, &g_u, &g_z)?;
        rec.iterates.push(InnerIterate {
            u: u_next.clone(),
            z: z_next.clone(),
            chord_u,
            chord_z,
            energy_half,
            energy,
            slope_u: rep.slope_u,
            slope_z: rep.slope_z_unilateral,
        });
        rec.inner_count += 1;
        u = u_next;
        z = z_next;
        let tol_slope = opts.solve.tol_slope * (1.0 + energy.total.abs());
        if chord_u <= opts.tol_stag
            && chord_z <= opts.tol_stag
            && rep.slope_u <= tol_slope
            && rep.slope_z_unilateral <= tol_slope
        {
            rec.converged = true;
            break;
        }
    }
    Ok(rec)
}

/// A completed (possibly truncated) evolution.
pub struct Evolution {
    pub initial: State,
    pub records: Vec<StaggeredRecord>,
    pub final_state: State,
    /// Node index and message of the first solver failure, when any.
    pub failure: Option<(usize, String)>,
}

/// Runs the staggered scheme over all time nodes, threading the pair and
/// the irreversibility envelope. Solver failures truncate the evolution and
/// are reported in `failure` so partial output can still be flushed.
pub fn evolve(
    sys: &System,
    grid: &TimeGrid,
    z0: &[f64],
    opts: &StaggerOptions,
) -> Result<Evolution> {
    let initial = initial_state(sys, z0, opts)?;
    let mut records = Vec::with_capacity(grid.steps);
    let mut u = initial.u.clone();
    let mut z = initial.z.clone();
    let mut failure = None;
    for i in 1..=grid.steps {
        let t = grid.node(i);
        match staggered_step(sys, i, t, &u, &z, opts) {
            Ok(rec) => {
                u = rec.final_u().to_vec();
                z = rec.final_z().to_vec();
                let converged = rec.converged;
                records.push(rec);
                if !converged {
                    failure = Some((
                        i,
                        format!("inner loop hit max_inner = {} at node {i}", opts.max_inner),
                    ));
                    break;
                }
            }
            Err(e) => {
                failure = Some((i, e.to_string()));
                break;
            }
        }
    }
    let t_end = records.last().map(|r| r.t).unwrap_or(0.0);
    Ok(Evolution {
        initial,
        records,
        final_state: State::new(t_end, u, z),
        failure,
    })
}

/// How u/z segment lengths are measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParamMode {
    Chord,
    Flow,
    EnergyNormChord,
}

impl std::fmt::Display for ParamMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ParamMode::Chord => "chord",
            ParamMode::Flow => "flow",
            ParamMode::EnergyNormChord => "energy-norm-chord",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentKind {
    Time,
    U,
    Z,
}

impl SegmentKind {
    pub fn label(&self) -> &'static str {
        match self {
            SegmentKind::Time => "time",
            SegmentKind::U => "u",
            SegmentKind::Z => "z",
        }
    }
}

/// One interval of the arc-length parametrization; exactly one of (t, u, z)
/// varies on it.
#[derive(Debug, Clone)]
pub struct Segment {
    pub kind: SegmentKind,
    pub s_start: f64,
    pub s_end: f64,
    /// Owning time node (1-based).
    pub node: usize,
    /// Inner iteration index for u/z segments, -1 for time segments.
    pub inner: i64,
    pub t_start: f64,
    pub t_end: f64,
    pub u_start: Vec<f64>,
    pub u_end: Vec<f64>,
    pub z_start: Vec<f64>,
    pub z_end: Vec<f64>,
    /// Arc-length increment in the mode's metric; equals s_end - s_start.
    pub arc_inc: f64,
    /// Interpolating flow (flow mode only).
    pub flow: Option<FlowTrajectory>,
}

pub struct ParametrizedTrajectory {
    pub mode: ParamMode,
    pub segments: Vec<Segment>,
    pub total_length: f64,
    /// `s` coordinate of each time node, starting with 0 at node 0.
    pub node_s: Vec<f64>,
    pub tau: f64,
    pub initial: State,
}

/// Segments shorter than this are dropped (converged-in-one-sweep noise);
/// keeps the arc coordinate strictly increasing.
const DROP_EPS: f64 = 1e-14;

/// Builds the arc-length parametrization of a completed evolution.
/// Time segments always have length `tau`; u/z segments are measured by
/// chords, interpolating flows, or energy-norm chords depending on `mode`.
pub fn parametrize(
    sys: &System,
    evo: &Evolution,
    grid: &TimeGrid,
    mode: ParamMode,
    opts: &StaggerOptions,
) -> Result<ParametrizedTrajectory> {
    let tau = grid.tau();
    let mut segments: Vec<Segment> = Vec::new();
    let mut node_s = vec![0.0];
    let mut s = 0.0;
    let n2 = sys.mesh.n_udofs();
    let zeros_u = vec![0.0; n2];
    let zeros_z = vec![0.0; sys.mesh.node_count()];

    for rec in &evo.records {
        let t_prev = rec.t - tau;
        // time segment: fields frozen at the previous pair
        segments.push(Segment {
            kind: SegmentKind::Time,
            s_start: s,
            s_end: s + tau,
            node: rec.node,
            inner: -1,
            t_start: t_prev,
            t_end: rec.t,
            u_start: rec.u_start.clone(),
            u_end: rec.u_start.clone(),
            z_start: rec.z_start.clone(),
            z_end: rec.z_start.clone(),
            arc_inc: tau,
            flow: None,
        });
        s += tau;

        let mut u_prev = &rec.u_start;
        let mut z_prev = &rec.z_start;
        for (j, it) in rec.iterates.iter().enumerate() {
            // u-segment at frozen (t, z_prev)
            let (u_len, u_flow) = match mode {
                ParamMode::Chord => (it.chord_u, None),
                ParamMode::Flow => {
                    if it.chord_u <= DROP_EPS {
                        (0.0, None)
                    } else {
                        let fl = flow_u(sys, rec.t, z_prev, u_prev, opts.flow_dl, &opts.solve)?;
                        // closing hop from the flow terminal to the recorded
                        // endpoint keeps the length >= the chord
                        let tail: Vec<f64> =
                            it.u.iter().zip(&fl.terminal).map(|(a, b)| a - b).collect();
                        let len = fl.arc_length + sys.ips.h1_norm(&sys.mesh, &tail);
                        (len, Some(fl))
                    }
                }
                ParamMode::EnergyNormChord => {
                    let diff: Vec<f64> = it.u.iter().zip(u_prev).map(|(a, b)| a - b).collect();
                    let state = State::new(rec.t, u_prev.clone(), z_prev.clone());
                    let (nu, _) = energy_norms(sys, &diff, &zeros_z, &state)?;
                    (nu, None)
                }
            };
            if u_len > DROP_EPS {
                segments.push(Segment {
                    kind: SegmentKind::U,
                    s_start: s,
                    s_end: s + u_len,
                    node: rec.node,
                    inner: j as i64,
                    t_start: rec.t,
                    t_end: rec.t,
                    u_start: u_prev.clone(),
                    u_end: it.u.clone(),
                    z_start: z_prev.clone(),
                    z_end: z_prev.clone(),
                    arc_inc: u_len,
                    flow: u_flow,
                });
                s += u_len;
            }
            // z-segment at frozen (t, u_{j+1})
            let (z_len, z_flow) = match mode {
                ParamMode::Chord => (it.chord_z, None),
                ParamMode::Flow => {
                    if it.chord_z <= DROP_EPS {
                        (0.0, None)
                    } else {
                        let fl = flow_z(sys, rec.t, &it.u, z_prev, opts.flow_dl, &opts.solve)?;
                        let tail: Vec<f64> =
                            it.z.iter().zip(&fl.terminal).map(|(a, b)| a - b).collect();
                        let len = fl.arc_length + sys.ips.l2_lumped_norm(&tail);
                        (len, Some(fl))
                    }
                }
                ParamMode::EnergyNormChord => {
                    let diff: Vec<f64> = it.z.iter().zip(z_prev).map(|(a, b)| a - b).collect();
                    let state = State::new(rec.t, it.u.clone(), z_prev.clone());
                    let (_, nz) = energy_norms(sys, &zeros_u, &diff, &state)?;
                    (nz, None)
                }
            };
            if z_len > DROP_EPS {
                segments.push(Segment {
                    kind: SegmentKind::Z,
                    s_start: s,
                    s_end: s + z_len,
                    node: rec.node,
                    inner: j as i64,
                    t_start: rec.t,
                    t_end: rec.t,
                    u_start: it.u.clone(),
                    u_end: it.u.clone(),
                    z_start: z_prev.clone(),
                    z_end: it.z.clone(),
                    arc_inc: z_len,
                    flow: z_flow,
                });
                s += z_len;
            }
            u_prev = &it.u;
            z_prev = &it.z;
        }
        node_s.push(s);
    }

    Ok(ParametrizedTrajectory {
        mode,
        segments,
        total_length: s,
        node_s,
        tau,
        initial: evo.initial.clone(),
    })
}
