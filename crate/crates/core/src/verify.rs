//! Self-contained verification suites behind `pfrac verify <suite>`, plus
//! the two desk-scale benchmark configurations they (and the acceptance
//! tests) run on.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diagnostics::{ledger, norm_comparison};
use crate::energy::{assemble_energy, assemble_gradients, State};
use crate::evolution::{evolve, parametrize, ParamMode, StaggerOptions};
use crate::fem::{build_rect_mesh, DirichletSpec, Side};
use crate::linalg;
use crate::model::{
    BoundaryDatum, DegradationFamily, DegradationSpec, DissipationSpec, MaterialParams, TimeGrid,
};
use crate::solver::{flow_u, flow_z, qp_active_set_oracle, solve_u, solve_z, SolveOptions};
use crate::system::System;
use crate::{Error, Result};

/// One named check with its measured value.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub measured: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, measured: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            measured: measured.into(),
        }
    }
}

fn standard_material() -> (MaterialParams, DegradationSpec, DissipationSpec) {
    let params = MaterialParams {
        mu: 1.0,
        kappa: 2.0,
        eta: 0.01,
    };
    (
        params,
        DegradationSpec {
            family: DegradationFamily::Quadratic,
            eta: params.eta,
        },
        DissipationSpec::At2,
    )
}

/// Homogeneous benchmark: full-Dirichlet unit square under the uniaxial
/// ramp `g = t (x1, 0)`. Closed form: u = 0 and z_i = 1/(1 + 1.5 t_i^2).
pub fn benchmark_homogeneous(nx: usize, k: usize) -> Result<(System, TimeGrid, Vec<f64>)> {
    let mesh = build_rect_mesh(nx, nx, 1.0, 1.0, &DirichletSpec::all_sides_both())?;
    let n = mesh.node_count();
    let (params, deg, dis) = standard_material();
    let sys = System::new(
        mesh,
        params,
        deg,
        dis,
        BoundaryDatum::linear_ramp([[1.0, 0.0], [0.0, 0.0]], [0.0, 0.0], 1.0),
    )?;
    Ok((sys, TimeGrid::new(1.0, k)?, vec![1.0; n]))
}

/// Notched-strip benchmark: left edge clamped, right edge ramped, with a
/// seeded low-z band at mid height reaching half way across.
pub fn benchmark_notched(nx: usize, k: usize) -> Result<(System, TimeGrid, Vec<f64>)> {
    let mesh = build_rect_mesh(
        nx,
        nx,
        1.0,
        1.0,
        &DirichletSpec::sides_both(&[Side::Left, Side::Right]),
    )?;
    let mut z0 = vec![1.0; mesh.node_count()];
    for (i, p) in mesh.nodes.iter().enumerate() {
        if p[0] <= 0.5 && (p[1] - 0.5).abs() <= 0.52 / nx as f64 {
            z0[i] = 0.25;
        }
    }
    let (params, deg, dis) = standard_material();
    let sys = System::new(
        mesh,
        params,
        deg,
        dis,
        BoundaryDatum::linear_ramp([[1.0, 0.0], [0.0, 0.0]], [0.0, 0.0], 1.0),
    )?;
    Ok((sys, TimeGrid::new(1.0, k)?, z0))
}

fn random_state(sys: &System, rng: &mut ChaCha8Rng) -> State {
    let nf = sys.mesh.free_dofs.len();
    let n = sys.mesh.node_count();
    let uf: Vec<f64> = (0..nf).map(|_| rng.gen_range(-0.3..0.3)).collect();
    State::new(
        rng.gen_range(0.05..0.95),
        sys.mesh.prolong(&uf),
        (0..n).map(|_| rng.gen_range(0.05..1.0)).collect(),
    )
}

/// Finite-difference agreement of the assembled gradients on an 8x8 mesh:
/// 5 random states, 20 random directions each, in both variables.
pub fn suite_gradcheck(seed: u64) -> Result<Vec<Check>> {
    let mesh = build_rect_mesh(
        8,
        8,
        1.0,
        1.0,
        &DirichletSpec::sides_both(&[Side::Left, Side::Right]),
    )?;
    let (params, deg, dis) = standard_material();
    let sys = System::new(
        mesh,
        params,
        deg,
        dis,
        BoundaryDatum::linear_ramp([[1.0, 0.0], [0.0, 0.0]], [0.0, 0.0], 1.0),
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nf = sys.mesh.free_dofs.len();
    let n = sys.mesh.node_count();
    let h = 1e-6;
    let mut worst_u = 0.0f64;
    let mut worst_z = 0.0f64;
    for _ in 0..5 {
        let state = random_state(&sys, &mut rng);
        let (g_u, g_z) = assemble_gradients(&sys, &state)?;
        for _ in 0..20 {
            let du_f: Vec<f64> = (0..nf).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let du = sys.mesh.prolong(&du_f);
            let mut sp = state.clone();
            let mut sm = state.clone();
            for i in 0..du.len() {
                sp.u[i] += h * du[i];
                sm.u[i] -= h * du[i];
            }
            let fd = (assemble_energy(&sys, &sp)?.total - assemble_energy(&sys, &sm)?.total)
                / (2.0 * h);
            let an = linalg::dot(&g_u, &du_f);
            worst_u = worst_u.max((fd - an).abs() / (1.0 + an.abs()));

            let dz: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut sp = state.clone();
            let mut sm = state.clone();
            for i in 0..n {
                sp.z[i] += h * dz[i];
                sm.z[i] -= h * dz[i];
            }
            let fd = (assemble_energy(&sys, &sp)?.total - assemble_energy(&sys, &sm)?.total)
                / (2.0 * h);
            let an = linalg::dot(&g_z, &dz);
            worst_z = worst_z.max((fd - an).abs() / (1.0 + an.abs()));
        }
    }
    Ok(vec![
        Check::new(
            "d_u F matches central differences (rel err <= 1e-6)",
            worst_u <= 1e-6,
            format!("max rel err {worst_u:.3e}"),
        ),
        Check::new(
            "d_z F matches central differences (rel err <= 1e-6)",
            worst_z <= 1e-6,
            format!("max rel err {worst_z:.3e}"),
        ),
    ])
}

/// Bound-constrained solver against the 2^6 active-set enumeration on a
/// 2x1 mesh, 50 random instances.
pub fn suite_oracle(seed: u64) -> Result<Vec<Check>> {
    let mesh = build_rect_mesh(
        2,
        1,
        2.0,
        1.0,
        &DirichletSpec::sides_both(&[Side::Left, Side::Right]),
    )?;
    let (params, deg, dis) = standard_material();
    let sys = System::new(
        mesh,
        params,
        deg,
        dis,
        BoundaryDatum::linear_ramp([[1.0, 0.0], [0.0, 0.0]], [0.0, 0.0], 1.0),
    )?;
    let n = sys.mesh.node_count();
    let nf = sys.mesh.free_dofs.len();
    let opts = SolveOptions::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let uf: Vec<f64> = (0..nf).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let u = sys.mesh.prolong(&uf);
        let upper: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
        let t = rng.gen_range(0.0..1.0);
        let (z, _, _) = solve_z(&sys, t, &u, &upper, &upper, &opts)?;
        let z_oracle = qp_active_set_oracle(&sys, t, &u, &upper)?;
        for i in 0..n {
            worst = worst.max((z[i] - z_oracle[i]).abs());
        }
    }
    Ok(vec![Check::new(
        "solve_z vs 2^6 active-set enumeration (gap <= 1e-9)",
        worst <= 1e-9,
        format!("max nodewise gap {worst:.3e}"),
    )])
}

/// Comparison principle of the constrained z-flow and monotone decay of the
/// u-flow, on random instances.
pub fn suite_flows(seed: u64) -> Result<Vec<Check>> {
    let mesh = build_rect_mesh(
        4,
        4,
        1.0,
        1.0,
        &DirichletSpec::sides_both(&[Side::Left, Side::Right]),
    )?;
    let (params, deg, dis) = standard_material();
    let sys = System::new(
        mesh,
        params,
        deg,
        dis,
        BoundaryDatum::linear_ramp([[1.0, 0.0], [0.0, 0.0]], [0.0, 0.0], 1.0),
    )?;
    let n = sys.mesh.node_count();
    let nf = sys.mesh.free_dofs.len();
    let opts = SolveOptions {
        tol_slope: 1e-10,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut comparison_worst = f64::NEG_INFINITY;
    for _ in 0..20 {
        let uf: Vec<f64> = (0..nf).map(|_| rng.gen_range(-0.4..0.4)).collect();
        let u = sys.mesh.prolong(&uf);
        let z0: Vec<f64> = (0..n).map(|_| rng.gen_range(0.4..1.0)).collect();
        let t = rng.gen_range(0.0..1.0);
        let (z_bar, _, _) = solve_z(&sys, t, &u, &z0, &z0, &opts)?;
        let traj = flow_z(&sys, t, &u, &z0, 0.25, &opts)?;
        for s in &traj.samples {
            for (a, b) in s.field.iter().zip(&z_bar) {
                comparison_worst = comparison_worst.max(b - a);
            }
        }
    }

    let mut decay_ok = true;
    let mut terminal_worst = 0.0f64;
    for _ in 0..5 {
        let z: Vec<f64> = (0..n).map(|_| rng.gen_range(0.3..1.0)).collect();
        let u0f: Vec<f64> = (0..nf).map(|_| rng.gen_range(-0.1..0.1)).collect();
        let u0 = sys.mesh.prolong(&u0f);
        let t = rng.gen_range(0.2..1.0);
        let traj = flow_u(&sys, t, &z, &u0, 2.0, &opts)?;
        let (u_star, _) = solve_u(&sys, t, &z, &u0, &opts)?;
        let mut prev = f64::INFINITY;
        for s in &traj.samples {
            let d: Vec<f64> = s.field.iter().zip(&u_star).map(|(a, b)| a - b).collect();
            let dist = sys.ips.h1_norm(&sys.mesh, &d);
            if dist > prev + 1e-12 {
                decay_ok = false;
            }
            prev = dist;
        }
        let d: Vec<f64> = traj
            .terminal
            .iter()
            .zip(&u_star)
            .map(|(a, b)| a - b)
            .collect();
        terminal_worst = terminal_worst.max(sys.ips.h1_norm(&sys.mesh, &d));
    }

    Ok(vec![
        Check::new(
            "z-flow samples stay above the constrained minimizer (>= -1e-10)",
            comparison_worst <= 1e-10,
            format!("max undershoot {comparison_worst:.3e}"),
        ),
        Check::new(
            "u-flow distance to the minimizer is non-increasing",
            decay_ok,
            String::from(if decay_ok { "monotone" } else { "not monotone" }),
        ),
        Check::new(
            "u-flow terminal matches the direct solve (<= 1e-6 in H1)",
            terminal_worst <= 1e-6,
            format!("max terminal gap {terminal_worst:.3e}"),
        ),
    ])
}

/// Ledger checks: flat-ramp exactness, one-sided chord inequality, and
/// first-order refinement of the flow-mode residual.
pub fn suite_ledger(_seed: u64) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    let opts = StaggerOptions::default();

    // flat ramp: all residuals vanish
    {
        let mesh = build_rect_mesh(3, 3, 1.0, 1.0, &DirichletSpec::all_sides_both())?;
        let n = mesh.node_count();
        let (params, deg, dis) = standard_material();
        let sys = System::new(
            mesh,
            params,
            deg,
            dis,
            BoundaryDatum {
                a: [[1.0, 0.0], [0.0, 0.0]],
                b: [0.0, 0.0],
                ramp: vec![(0.0, 0.0), (1.0, 0.0)],
            },
        )?;
        let grid = TimeGrid::new(1.0, 3)?;
        let evo = evolve(&sys, &grid, &vec![1.0; n], &opts)?;
        let traj = parametrize(&sys, &evo, &grid, ParamMode::Chord, &opts)?;
        let rows = ledger(&sys, &traj)?;
        let worst = rows
            .iter()
            .map(|r| r.residual.abs())
            .fold(0.0f64, f64::max);
        checks.push(Check::new(
            "flat ramp: ledger residuals vanish (<= 1e-12)",
            worst <= 1e-12,
            format!("max |residual| {worst:.3e}"),
        ));
    }

    // chord mode on both benchmarks: actual energy never falls below the
    // prediction (left-endpoint dissipation overestimates)
    for (label, (sys, grid, z0)) in [
        ("homogeneous", benchmark_homogeneous(8, 4)?),
        ("notched", benchmark_notched(16, 8)?),
    ] {
        let evo = evolve(&sys, &grid, &z0, &opts)?;
        let traj = parametrize(&sys, &evo, &grid, ParamMode::Chord, &opts)?;
        let rows = ledger(&sys, &traj)?;
        let f0 = assemble_energy(&sys, &traj.initial)?.total;
        let worst = rows
            .iter()
            .map(|r| -r.residual)
            .fold(f64::NEG_INFINITY, f64::max);
        checks.push(Check::new(
            format!("{label}: one-sided chord ledger (residual >= -1e-8 (1+|F0|))"),
            worst <= 1e-8 * (1.0 + f0.abs()),
            format!("max violation {worst:.3e}"),
        ));
        // time segments balance the power integral
        let time_worst = rows
            .iter()
            .zip(&traj.segments)
            .filter(|(_, s)| s.kind == crate::evolution::SegmentKind::Time)
            .map(|(r, s)| {
                let fa = assemble_energy(
                    &sys,
                    &State::new(s.t_start, s.u_start.clone(), s.z_start.clone()),
                )
                .unwrap()
                .total;
                (r.f_actual - fa - r.power_inc).abs()
            })
            .fold(0.0f64, f64::max);
        checks.push(Check::new(
            format!("{label}: time segments balance power (<= 1e-10)"),
            time_worst <= 1e-10,
            format!("max imbalance {time_worst:.3e}"),
        ));
    }

    // flow-mode refinement on the homogeneous benchmark
    {
        let (sys, grid, z0) = benchmark_homogeneous(4, 4)?;
        let mut residuals = Vec::new();
        for dl in [0.05, 0.025] {
            let o = StaggerOptions {
                flow_dl: dl,
                ..Default::default()
            };
            let evo = evolve(&sys, &grid, &z0, &o)?;
            let traj = parametrize(&sys, &evo, &grid, ParamMode::Flow, &o)?;
            let rows = ledger(&sys, &traj)?;
            residuals.push(rows.last().map(|r| r.residual.abs()).unwrap_or(0.0));
        }
        let ratio = residuals[0] / residuals[1];
        checks.push(Check::new(
            "flow mode: terminal residual shrinks by >= 1.5 when dl halves",
            ratio >= 1.5,
            format!("ratio {ratio:.3}"),
        ));
    }

    Ok(checks)
}

/// Chord vs energy-norm increments on the notched benchmark.
pub fn suite_norms(_seed: u64) -> Result<Vec<Check>> {
    let opts = StaggerOptions::default();
    let (sys, grid, z0) = benchmark_notched(16, 8)?;
    let evo = evolve(&sys, &grid, &z0, &opts)?;
    let cmp = norm_comparison(&sys, &evo, grid.tau())?;
    let finite = cmp.min_ratio.is_finite() && cmp.max_ratio.is_finite() && cmp.min_ratio > 0.0;
    Ok(vec![
        Check::new(
            "per-node increment ratios finite and positive",
            finite,
            format!("min {:.3e}, max {:.3e}", cmp.min_ratio, cmp.max_ratio),
        ),
        Check::new(
            "ratio spread max/min <= 1e3",
            cmp.spread() <= 1e3,
            format!("spread {:.3e}", cmp.spread()),
        ),
    ])
}

/// Runs a named suite.
pub fn suite(name: &str, seed: u64) -> Result<Vec<Check>> {
    match name {
        "gradcheck" => suite_gradcheck(seed),
        "oracle" => suite_oracle(seed),
        "flows" => suite_flows(seed),
        "ledger" => suite_ledger(seed),
        "norms" => suite_norms(seed),
        other => Err(Error::Config(format!(
            "unknown suite \"{other}\"; expected one of gradcheck, oracle, flows, ledger, norms"
        ))),
    }
}
