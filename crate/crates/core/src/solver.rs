//! The two convex subproblems of the staggered scheme and the two auxiliary
//! gradient flows built on them.
//!
//! Displacement: generalized Newton on the C^{1,1} residual with the "+"
//! branch tangent at trace ties, Armijo backtracking, H1-preconditioned
//! steepest descent as fallback. Phase field: primal-dual active set for the
//! quadratic family (finite termination), reduced-space projected Newton for
//! the quartic one. Flows are implicit Euler (minimizing movements) in the
//! H1 metric for `u` and the lumped L2 metric for `z`.

use sprs::CsMat;

use crate::energy::{psi_plus_weighted, psi_split, total_displacement, State};
use crate::fem::element_strain_unchecked;
use crate::linalg::{self, SpdFactor};
use crate::model::{eval_boundary, DegradationFamily, DissipationSpec};
use crate::system::System;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    /// Relative stationarity tolerance: stop when slope <= tol * (1 + |F|).
    pub tol_slope: f64,
    pub max_iter: usize,
    /// Backtracking factor of the Armijo line search.
    pub backtrack: f64,
    /// Sufficient-decrease constant of the Armijo line search.
    pub sufficient_decrease: f64,
    /// Hard cap on flow steps.
    pub max_flow_steps: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol_slope: 1e-8,
            max_iter: 200,
            backtrack: 0.5,
            sufficient_decrease: 1e-4,
            max_flow_steps: 10_000,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol_slope > 0.0) {
            return Err(Error::Config("tol_slope must be > 0".into()));
        }
        if self.max_iter < 1 {
            return Err(Error::Config("max_iter must be >= 1".into()));
        }
        Ok(())
    }
}

/// Proximal regularization: weight and anchor field in the flow's metric.
struct Prox<'a> {
    weight: f64,
    anchor: &'a [f64],
}

// ---------------------------------------------------------------------------
// displacement subproblem
// ---------------------------------------------------------------------------

struct UObjective<'a> {
    sys: &'a System,
    h_elem: Vec<f64>,
    g_nodal: Vec<f64>,
    d_const: f64,
    prox: Option<Prox<'a>>,
}

impl<'a> UObjective<'a> {
    fn new(sys: &'a System, t: f64, z: &[f64], prox: Option<Prox<'a>>) -> Result<Self> {
        let (g_nodal, _) = eval_boundary(&sys.datum, &sys.mesh, t)?;
        let mut h_elem = Vec::with_capacity(sys.mesh.element_count());
        for tri in &sys.mesh.triangles {
            let (h0, _) = sys.deg.eval(z[tri[0]]);
            let (h1, _) = sys.deg.eval(z[tri[1]]);
            let (h2, _) = sys.deg.eval(z[tri[2]]);
            h_elem.push((h0 + h1 + h2) / 3.0);
        }
        let kz = linalg::mul_vec(&sys.ips.stiffness_z, z);
        let mut d_const = 0.5 * linalg::dot(z, &kz);
        for (zi, mi) in z.iter().zip(&sys.ips.lumped_mass) {
            let (f, _) = sys.dis.eval(*zi);
            d_const += mi * f;
        }
        Ok(Self {
            sys,
            h_elem,
            g_nodal,
            d_const,
            prox,
        })
    }

    fn total_u(&self, u: &[f64]) -> Vec<f64> {
        u.iter().zip(&self.g_nodal).map(|(a, b)| a + b).collect()
    }

    fn energy(&self, u: &[f64]) -> f64 {
        let total = self.total_u(u);
        let mesh = &self.sys.mesh;
        let mut e = 0.0;
        for el in 0..mesh.element_count() {
            let eps = element_strain_unchecked(mesh, &total, el);
            let (pp, pm) = psi_split(&eps, &self.sys.params);
            e += mesh.areas[el] * (self.h_elem[el] * pp + pm);
        }
        let mut val = e + self.d_const;
        if let Some(p) = &self.prox {
            let diff: Vec<f64> = u.iter().zip(p.anchor).map(|(a, b)| a - b).collect();
            let w = mesh.restrict(&diff);
            val += 0.5 * p.weight * linalg::quad_form(&self.sys.ips.h1_matrix, &w, &w);
        }
        val
    }

    /// Gradient on free dofs, including the proximal term.
    fn residual(&self, u: &[f64]) -> Vec<f64> {
        let total = self.total_u(u);
        let mut r = assemble_residual_u_with_h(self.sys, &self.h_elem, &total);
        if let Some(p) = &self.prox {
            let diff: Vec<f64> = u.iter().zip(p.anchor).map(|(a, b)| a - b).collect();
            let w = self.sys.mesh.restrict(&diff);
            let hv = linalg::mul_vec(&self.sys.ips.h1_matrix, &w);
            for (ri, hi) in r.iter_mut().zip(&hv) {
                *ri += p.weight * hi;
            }
        }
        r
    }

    /// Generalized tangent on free dofs; the "+" branch is taken at trace
    /// ties. Always symmetric positive definite.
    fn tangent(&self, u: &[f64]) -> CsMat<f64> {
        let total = self.total_u(u);
        let mesh = &self.sys.mesh;
        let p = &self.sys.params;
        let nfree = mesh.free_dofs.len();
        let mut trip: Vec<(usize, usize, f64)> = Vec::new();
        for el in 0..mesh.element_count() {
            let eps = element_strain_unchecked(mesh, &total, el);
            let h = self.h_elem[el];
            let a_dev = 2.0 * h * p.mu;
            let a_vol = if eps.trace() >= 0.0 {
                2.0 * h * p.kappa
            } else {
                2.0 * p.kappa
            };
            let area = mesh.areas[el];
            let grads = &mesh.shape_grads[el];
            let tri = &mesh.triangles[el];
            for (k, &v) in tri.iter().enumerate() {
                let bv = grads[k];
                for (l, &w) in tri.iter().enumerate() {
                    let bw = grads[l];
                    let dotb = bv[0] * bw[0] + bv[1] * bw[1];
                    for c in 0..2 {
                        let Some(fr) = mesh.full_to_free[2 * v + c] else {
                            continue;
                        };
                        for d in 0..2 {
                            let Some(fc) = mesh.full_to_free[2 * w + d] else {
                                continue;
                            };
                            let e1e2 =
                                0.5 * (if c == d { dotb } else { 0.0 } + bw[c] * bv[d]);
                            let trtr = 0.5 * bv[c] * bw[d];
                            let val = area * (a_dev * e1e2 + (a_vol - a_dev) * trtr);
                            trip.push((fr, fc, val));
                        }
                    }
                }
            }
        }
        let mut mat = linalg::csr_from_triplets(nfree, &trip);
        if let Some(pr) = &self.prox {
            let scaled = self.sys.ips.h1_matrix.map(|v| v * pr.weight);
            mat = &mat + &scaled;
        }
        mat
    }

    fn slope(&self, r: &[f64]) -> f64 {
        let x = self.sys.ips.h1_factor.solve(r);
        linalg::dot(r, &x).max(0.0).sqrt()
    }
}

fn assemble_residual_u_with_h(sys: &System, h_elem: &[f64], total_u: &[f64]) -> Vec<f64> {
    let mesh = &sys.mesh;
    let p = &sys.params;
    let mut g = vec![0.0; mesh.free_dofs.len()];
    for el in 0..mesh.element_count() {
        let eps = element_strain_unchecked(mesh, total_u, el);
        let s = crate::energy::split_strain(&eps);
        let h = h_elem[el];
        let sigma = s
            .dev
            .scale(2.0 * h * p.mu)
            .add(&s.vol_plus.scale(2.0 * h * p.kappa))
            .sub(&s.vol_minus.scale(2.0 * p.kappa));
        let area = mesh.areas[el];
        let grads = &mesh.shape_grads[el];
        for (k, &v) in mesh.triangles[el].iter().enumerate() {
            let b = grads[k];
            let rows = [
                sigma.e11 * b[0] + sigma.e12 * b[1],
                sigma.e12 * b[0] + sigma.e22 * b[1],
            ];
            for c in 0..2 {
                if let Some(fd) = mesh.full_to_free[2 * v + c] {
                    g[fd] += area * rows[c];
                }
            }
        }
    }
    g
}

/// Minimizes `F(t, ., z)` from `u_init`. Returns the minimizer (full field,
/// zero on Dirichlet dofs) and the iteration count.
pub fn solve_u(
    sys: &System,
    t: f64,
    z: &[f64],
    u_init: &[f64],
    opts: &SolveOptions,
) -> Result<(Vec<f64>, usize)> {
    solve_u_prox(sys, t, z, u_init, opts, None)
}

fn solve_u_prox(
    sys: &System,
    t: f64,
    z: &[f64],
    u_init: &[f64],
    opts: &SolveOptions,
    prox: Option<Prox<'_>>,
) -> Result<(Vec<f64>, usize)> {
    opts.validate()?;
    if u_init.len() != sys.mesh.n_udofs() || z.len() != sys.mesh.node_count() {
        return Err(Error::SizeMismatch("solve_u input sizes".into()));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::Infeasible("phase field contains non-finite values".into()));
    }
    let obj = UObjective::new(sys, t, z, prox)?;
    // enforce the homogeneous Dirichlet values on the iterate
    let mut u = sys.mesh.prolong(&sys.mesh.restrict(u_init));
    let mut last_slope = f64::INFINITY;

    for iter in 0..opts.max_iter {
        let r = obj.residual(&u);
        let f = obj.energy(&u);
        let slope = obj.slope(&r);
        last_slope = slope;
        if slope <= opts.tol_slope * (1.0 + f.abs()) {
            return Ok((u, iter));
        }

        let newton_dir = match SpdFactor::new(&obj.tangent(&u)) {
            Ok(fac) => {
                let d: Vec<f64> = fac.solve(&r).iter().map(|v| -v).collect();
                if linalg::dot(&r, &d) < 0.0 {
                    Some(d)
                } else {
                    None
                }
            }
            Err(_) => None,
        };
        let fallback: Vec<f64> = sys
            .ips
            .h1_factor
            .solve(&r)
            .iter()
            .map(|v| -v)
            .collect();

        let mut advanced = false;
        for dir in newton_dir.iter().chain(std::iter::once(&fallback)) {
            let d0 = linalg::dot(&r, dir);
            if d0 >= 0.0 {
                continue;
            }
            let mut alpha = 1.0;
            while alpha > 1e-14 {
                let mut trial = u.clone();
                for (k, &dof) in sys.mesh.free_dofs.iter().enumerate() {
                    trial[dof] += alpha * dir[k];
                }
                if obj.energy(&trial) <= f + opts.sufficient_decrease * alpha * d0 {
                    u = trial;
                    advanced = true;
                    break;
                }
                alpha *= opts.backtrack;
            }
            if advanced {
                break;
            }
        }
        if !advanced {
            return Err(Error::NonConvergence {
                what: "displacement line search stalled".into(),
                iterations: iter,
                last_slope: slope,
            });
        }
    }
    Err(Error::NonConvergence {
        what: "displacement minimization".into(),
        iterations: opts.max_iter,
        last_slope,
    })
}

// ---------------------------------------------------------------------------
// phase-field subproblem
// ---------------------------------------------------------------------------

struct ZObjective<'a> {
    sys: &'a System,
    /// area/3-weighted tensile density sums P_i (fixed during the solve)
    p: Vec<f64>,
    prox_weight: f64,
    prox_anchor: Option<&'a [f64]>,
}

impl<'a> ZObjective<'a> {
    fn new(sys: &'a System, t: f64, u: &[f64], prox: Option<Prox<'a>>) -> Result<Self> {
        let state = State::new(t, u.to_vec(), vec![0.0; sys.mesh.node_count()]);
        let total = total_displacement(sys, &state)?;
        let p = psi_plus_weighted(sys, &total);
        let (prox_weight, prox_anchor) = match prox {
            Some(pr) => (pr.weight, Some(pr.anchor)),
            None => (0.0, None),
        };
        Ok(Self {
            sys,
            p,
            prox_weight,
            prox_anchor,
        })
    }

    fn value(&self, z: &[f64]) -> f64 {
        let kz = linalg::mul_vec(&self.sys.ips.stiffness_z, z);
        let mut val = 0.5 * linalg::dot(z, &kz);
        for i in 0..z.len() {
            let (h, _) = self.sys.deg.eval(z[i]);
            let (f, _) = self.sys.dis.eval(z[i]);
            val += h * self.p[i] + self.sys.ips.lumped_mass[i] * f;
            if let Some(anchor) = self.prox_anchor {
                let d = z[i] - anchor[i];
                val += 0.5 * self.prox_weight * self.sys.ips.lumped_mass[i] * d * d;
            }
        }
        val
    }

    fn gradient(&self, z: &[f64]) -> Vec<f64> {
        let kz = linalg::mul_vec(&self.sys.ips.stiffness_z, z);
        let mut g = vec![0.0; z.len()];
        for i in 0..z.len() {
            let (_, hp) = self.sys.deg.eval(z[i]);
            let (_, fp) = self.sys.dis.eval(z[i]);
            g[i] = hp * self.p[i] + kz[i] + self.sys.ips.lumped_mass[i] * fp;
            if let Some(anchor) = self.prox_anchor {
                g[i] += self.prox_weight * self.sys.ips.lumped_mass[i] * (z[i] - anchor[i]);
            }
        }
        g
    }

    /// Diagonal of the Hessian minus the z-stiffness part.
    fn hessian_diag(&self, z: &[f64]) -> Vec<f64> {
        let m = &self.sys.ips.lumped_mass;
        (0..z.len())
            .map(|i| {
                let hpp = match self.sys.deg.family {
                    DegradationFamily::Quadratic => 2.0,
                    DegradationFamily::Quartic => 12.0 * z[i] * z[i],
                };
                hpp * self.p[i] + 2.0 * m[i] + self.prox_weight * m[i]
            })
            .collect()
    }

    /// KKT residual in the lumped geometry: plain gradient on inactive
    /// nodes, positive part on active ones.
    fn kkt_residual(&self, z: &[f64], upper: &[f64], g: &[f64]) -> f64 {
        let m = &self.sys.ips.lumped_mass;
        let mut acc = 0.0;
        for i in 0..z.len() {
            let r = if upper[i] - z[i] <= 1e-12 {
                g[i].max(0.0)
            } else {
                g[i]
            };
            acc += r * r / m[i];
        }
        acc.sqrt()
    }
}

/// Minimizes `F(t, u, .)` subject to the nodewise bound `z <= z_upper`,
/// starting from `z_init`. Returns the minimizer, the iteration count and
/// the active-set flags.
pub fn solve_z(
    sys: &System,
    t: f64,
    u: &[f64],
    z_upper: &[f64],
    z_init: &[f64],
    opts: &SolveOptions,
) -> Result<(Vec<f64>, usize, Vec<bool>)> {
    solve_z_prox(sys, t, u, z_upper, z_init, opts, None)
}

fn solve_z_prox(
    sys: &System,
    t: f64,
    u: &[f64],
    z_upper: &[f64],
    z_init: &[f64],
    opts: &SolveOptions,
    prox: Option<Prox<'_>>,
) -> Result<(Vec<f64>, usize, Vec<bool>)> {
    opts.validate()?;
    let n = sys.mesh.node_count();
    if u.len() != sys.mesh.n_udofs() || z_upper.len() != n || z_init.len() != n {
        return Err(Error::SizeMismatch("solve_z input sizes".into()));
    }
    for i in 0..n {
        if z_init[i] > z_upper[i] + 1e-12 {
            return Err(Error::Infeasible(format!(
                "z_init exceeds the upper bound at node {i}: {} > {}",
                z_init[i], z_upper[i]
            )));
        }
    }
    let obj = ZObjective::new(sys, t, u, prox)?;
    match sys.deg.family {
        DegradationFamily::Quadratic => {
            match pdas_quadratic(sys, &obj, z_upper, z_init, opts) {
                Ok(out) => Ok(out),
                // fall back on the globally convergent method
                Err(_) => projected_newton(sys, &obj, z_upper, z_init, opts),
            }
        }
        DegradationFamily::Quartic => projected_newton(sys, &obj, z_upper, z_init, opts),
    }
}

/// Primal-dual active set for the quadratic family. The objective is an
/// exact convex QP: `H = K + diag(2 P_i + (2 + w) m_i)`.
fn pdas_quadratic(
    sys: &System,
    obj: &ZObjective<'_>,
    upper: &[f64],
    z_init: &[f64],
    opts: &SolveOptions,
) -> Result<(Vec<f64>, usize, Vec<bool>)> {
    let n = upper.len();
    let m = &sys.ips.lumped_mass;
    let diag: Vec<f64> = (0..n)
        .map(|i| 2.0 * obj.p[i] + 2.0 * m[i] + obj.prox_weight * m[i])
        .collect();
    let b: Vec<f64> = (0..n)
        .map(|i| {
            2.0 * m[i]
                + obj.prox_weight * m[i] * obj.prox_anchor.map_or(0.0, |a| a[i])
        })
        .collect();

    let mut active: Vec<bool> = (0..n).map(|i| z_init[i] >= upper[i] - 1e-14).collect();
    let mut z = z_init.to_vec();
    for iter in 1..=opts.max_iter {
        // solve the reduced system with the active nodes pinned to the bound
        let free_idx: Vec<usize> = (0..n).filter(|&i| !active[i]).collect();
        for i in 0..n {
            if active[i] {
                z[i] = upper[i];
            }
        }
        if !free_idx.is_empty() {
            let mut trip = Vec::new();
            let mut rhs = vec![0.0; free_idx.len()];
            let pos: Vec<Option<usize>> = {
                let mut v = vec![None; n];
                for (k, &i) in free_idx.iter().enumerate() {
                    v[i] = Some(k);
                }
                v
            };
            for (row, vec) in sys.ips.stiffness_z.outer_iterator().enumerate() {
                let Some(r) = pos[row] else { continue };
                rhs[r] = b[row];
                for (col, &v) in vec.iter() {
                    match pos[col] {
                        Some(c) => trip.push((r, c, v)),
                        None => rhs[r] -= v * upper[col],
                    }
                }
                trip.push((r, r, diag[row]));
            }
            let mat = linalg::csr_from_triplets(free_idx.len(), &trip);
            let sol = SpdFactor::new(&mat)?.solve(&rhs);
            for (k, &i) in free_idx.iter().enumerate() {
                z[i] = sol[k];
            }
        }
        // multipliers on the active set; lambda_i = -g_i
        let g = obj.gradient(&z);
        let mut next: Vec<bool> = Vec::with_capacity(n);
        for i in 0..n {
            let lambda = if active[i] { -g[i] } else { 0.0 };
            next.push(lambda + (z[i] - upper[i]) > 0.0);
        }
        if next == active {
            let kkt = obj.kkt_residual(&z, upper, &g);
            let val = obj.value(&z);
            if kkt <= opts.tol_slope * (1.0 + val.abs()) {
                return Ok((z, iter, active));
            }
            return Err(Error::NonConvergence {
                what: "active set stabilized away from KKT".into(),
                iterations: iter,
                last_slope: kkt,
            });
        }
        active = next;
    }
    Err(Error::NonConvergence {
        what: "primal-dual active set".into(),
        iterations: opts.max_iter,
        last_slope: f64::NAN,
    })
}

/// Reduced-space projected Newton with Armijo backtracking; handles both
/// families and serves as the fallback path.
fn projected_newton(
    sys: &System,
    obj: &ZObjective<'_>,
    upper: &[f64],
    z_init: &[f64],
    opts: &SolveOptions,
) -> Result<(Vec<f64>, usize, Vec<bool>)> {
    let n = upper.len();
    let mut z: Vec<f64> = z_init.iter().zip(upper).map(|(a, b)| a.min(*b)).collect();
    let mut last = f64::INFINITY;
    for iter in 0..opts.max_iter {
        let g = obj.gradient(&z);
        let val = obj.value(&z);
        let kkt = obj.kkt_residual(&z, upper, &g);
        last = kkt;
        if kkt <= opts.tol_slope * (1.0 + val.abs()) {
            let active: Vec<bool> = (0..n).map(|i| upper[i] - z[i] <= 1e-12).collect();
            return Ok((z, iter, active));
        }
        // nodes pressed against the bound with a gradient pushing upward
        let bound_active: Vec<bool> = (0..n)
            .map(|i| upper[i] - z[i] <= 1e-12 && g[i] < 0.0)
            .collect();
        let free_idx: Vec<usize> = (0..n).filter(|&i| !bound_active[i]).collect();
        let diag = obj.hessian_diag(&z);
        let mut dir = vec![0.0; n];
        if !free_idx.is_empty() {
            let mut pos = vec![None; n];
            for (k, &i) in free_idx.iter().enumerate() {
                pos[i] = Some(k);
            }
            let mut trip = Vec::new();
            let mut rhs = vec![0.0; free_idx.len()];
            for (row, vec) in sys.ips.stiffness_z.outer_iterator().enumerate() {
                let Some(r) = pos[row] else { continue };
                rhs[r] = -g[row];
                for (col, &v) in vec.iter() {
                    if let Some(c) = pos[col] {
                        trip.push((r, c, v));
                    }
                }
                trip.push((r, r, diag[row]));
            }
            let mat = linalg::csr_from_triplets(free_idx.len(), &trip);
            match SpdFactor::new(&mat) {
                Ok(f) => {
                    let sol = f.solve(&rhs);
                    for (k, &i) in free_idx.iter().enumerate() {
                        dir[i] = sol[k];
                    }
                }
                Err(_) => {
                    for &i in &free_idx {
                        dir[i] = -g[i] / sys.ips.lumped_mass[i];
                    }
                }
            }
        }
        let d0: f64 = (0..n).map(|i| g[i] * dir[i]).sum();
        if d0 >= 0.0 {
            return Err(Error::NonConvergence {
                what: "projected Newton produced a non-descent direction".into(),
                iterations: iter,
                last_slope: kkt,
            });
        }
        let mut alpha = 1.0;
        let mut advanced = false;
        while alpha > 1e-14 {
            let trial: Vec<f64> = (0..n).map(|i| (z[i] + alpha * dir[i]).min(upper[i])).collect();
            if obj.value(&trial) <= val + opts.sufficient_decrease * alpha * d0 {
                z = trial;
                advanced = true;
                break;
            }
            alpha *= opts.backtrack;
        }
        if !advanced {
            return Err(Error::NonConvergence {
                what: "phase-field line search stalled".into(),
                iterations: iter,
                last_slope: kkt,
            });
        }
    }
    Err(Error::NonConvergence {
        what: "phase-field minimization".into(),
        iterations: opts.max_iter,
        last_slope: last,
    })
}

// ---------------------------------------------------------------------------
// brute-force oracle
// ---------------------------------------------------------------------------

/// Enumerates all 2^n active sets of the bound-constrained QP (quadratic
/// degradation, at2 dissipation, at most 12 z-dofs) and returns the unique
/// feasible KKT point. The quadratic form is extracted from exact energy
/// evaluations, independent of the solver's own assembly.
pub fn qp_active_set_oracle(
    sys: &System,
    t: f64,
    u: &[f64],
    z_upper: &[f64],
) -> Result<Vec<f64>> {
    let n = sys.mesh.node_count();
    if n > 12 {
        return Err(Error::Unsupported(format!(
            "active-set enumeration oracle capped at 12 z-dofs, got {n}"
        )));
    }
    if sys.deg.family != DegradationFamily::Quadratic || sys.dis != DissipationSpec::At2 {
        return Err(Error::Unsupported(
            "oracle requires the quadratic degradation and at2 dissipation families".into(),
        ));
    }
    let value = |z: &[f64]| -> Result<f64> {
        let state = State::new(t, u.to_vec(), z.to_vec());
        Ok(crate::energy::assemble_energy(sys, &state)?.total)
    };
    // exact quadratic identities: G(z) = 1/2 z^T H z - b^T z + c
    let zeros = vec![0.0; n];
    let c = value(&zeros)?;
    let mut b = vec![0.0; n];
    let mut h = vec![vec![0.0; n]; n];
    let mut ei = vec![0.0; n];
    for i in 0..n {
        ei[i] = 1.0;
        let gp = value(&ei)?;
        ei[i] = -1.0;
        let gm = value(&ei)?;
        ei[i] = 0.0;
        b[i] = 0.5 * (gm - gp);
        h[i][i] = gp + gm - 2.0 * c;
    }
    for i in 0..n {
        for j in i + 1..n {
            ei[i] = 1.0;
            ei[j] = 1.0;
            let gij = value(&ei)?;
            ei[i] = 0.0;
            let gj = value(&ei)?;
            ei[i] = 1.0;
            ei[j] = 0.0;
            let gi = value(&ei)?;
            ei[i] = 0.0;
            let hij = gij - gi - gj + c;
            h[i][j] = hij;
            h[j][i] = hij;
        }
    }

    for mask in 0u32..(1 << n) {
        let active: Vec<bool> = (0..n).map(|i| mask & (1 << i) != 0).collect();
        let free: Vec<usize> = (0..n).filter(|&i| !active[i]).collect();
        let mut z: Vec<f64> = (0..n).map(|i| if active[i] { z_upper[i] } else { 0.0 }).collect();
        if !free.is_empty() {
            let mut a_red = vec![vec![0.0; free.len()]; free.len()];
            let mut rhs = vec![0.0; free.len()];
            for (r, &i) in free.iter().enumerate() {
                rhs[r] = b[i];
                for (cc, &j) in free.iter().enumerate() {
                    a_red[r][cc] = h[i][j];
                }
                for j in 0..n {
                    if active[j] {
                        rhs[r] -= h[i][j] * z_upper[j];
                    }
                }
            }
            let sol = linalg::dense_spd_solve(&a_red, &rhs)?;
            for (r, &i) in free.iter().enumerate() {
                z[i] = sol[r];
            }
        }
        // primal feasibility on the free set
        if free.iter().any(|&i| z[i] > z_upper[i] + 1e-10) {
            continue;
        }
        // dual feasibility: lambda_i = (b - H z)_i >= 0 on the active set
        let mut ok = true;
        for i in 0..n {
            if active[i] {
                let gi: f64 = (0..n).map(|j| h[i][j] * z[j]).sum::<f64>() - b[i];
                if -gi < -1e-10 {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            return Ok(z);
        }
    }
    Err(Error::Invariant(
        "active-set enumeration found no KKT point".into(),
    ))
}

// ---------------------------------------------------------------------------
// gradient flows (minimizing movements)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct FlowSample {
    /// Accumulated pseudo-time.
    pub l: f64,
    pub field: Vec<f64>,
    pub energy: f64,
    pub slope: f64,
    /// Metric norm of the increment from the previous sample.
    pub inc_norm: f64,
}

#[derive(Debug, Clone)]
pub struct FlowTrajectory {
    pub samples: Vec<FlowSample>,
    /// Sum of increment norms.
    pub arc_length: f64,
    pub terminal: Vec<f64>,
    pub converged: bool,
}

impl FlowTrajectory {
    /// Discrete dissipation `sum |inc|^2 / dl` over the steps; converges to
    /// the flow's energy drop as the step is refined.
    pub fn dissipated_work(&self) -> f64 {
        let mut acc = 0.0;
        for w in self.samples.windows(2) {
            let dl = w[1].l - w[0].l;
            if dl > 0.0 {
                acc += w[1].inc_norm * w[1].inc_norm / dl;
            }
        }
        acc
    }
}

/// Implicit Euler for the H1 gradient flow of `F(t, ., z)`: each step
/// minimizes `F + 1/(2 dl) |u - u_prev|_H1^2`. The step is halved on a
/// line-search failure and never increased again.
pub fn flow_u(
    sys: &System,
    t: f64,
    z: &[f64],
    u0: &[f64],
    dl: f64,
    opts: &SolveOptions,
) -> Result<FlowTrajectory> {
    if !(dl > 0.0) {
        return Err(Error::Config(format!("flow step must be > 0, got {dl}")));
    }
    let obj = UObjective::new(sys, t, z, None)?;
    let mut u = sys.mesh.prolong(&sys.mesh.restrict(u0));
    let mut l = 0.0;
    let mut dl_cur = dl;
    let mut arc = 0.0;
    let mut samples = Vec::new();

    let r0 = obj.residual(&u);
    let mut energy_prev = obj.energy(&u);
    samples.push(FlowSample {
        l,
        field: u.clone(),
        energy: energy_prev,
        slope: obj.slope(&r0),
        inc_norm: 0.0,
    });

    let mut converged = samples[0].slope <= opts.tol_slope * (1.0 + energy_prev.abs());
    while !converged && samples.len() <= opts.max_flow_steps {
        let step = loop {
            let prox = Prox {
                weight: 1.0 / dl_cur,
                anchor: &u,
            };
            match solve_u_prox(sys, t, z, &u, opts, Some(prox)) {
                Ok((next, _)) => break next,
                Err(e) => {
                    dl_cur *= 0.5;
                    if dl_cur < 1e-14 * dl {
                        return Err(e);
                    }
                }
            }
        };
        let diff: Vec<f64> = step.iter().zip(&u).map(|(a, b)| a - b).collect();
        let inc = sys.ips.h1_norm(&sys.mesh, &diff);
        l += dl_cur;
        arc += inc;
        u = step;
        let r = obj.residual(&u);
        let slope = obj.slope(&r);
        let energy = obj.energy(&u);
        samples.push(FlowSample {
            l,
            field: u.clone(),
            energy,
            slope,
            inc_norm: inc,
        });
        let rel_decrement = (energy_prev - energy).abs() / (1.0 + energy.abs());
        converged = slope <= opts.tol_slope * (1.0 + energy.abs()) || rel_decrement <= 1e-14;
        energy_prev = energy;
    }
    Ok(FlowTrajectory {
        arc_length: arc,
        terminal: u,
        converged,
        samples,
    })
}

/// Implicit Euler for the unilateral lumped-L2 flow of `F(t, u, .)`: each
/// step minimizes `F + 1/(2 dl) |z - z_prev|^2` under `z <= z_prev`.
/// Samples are nodewise non-increasing and stay above the constrained
/// minimizer (discrete comparison principle).
pub fn flow_z(
    sys: &System,
    t: f64,
    u: &[f64],
    z0: &[f64],
    dl: f64,
    opts: &SolveOptions,
) -> Result<FlowTrajectory> {
    if !(dl > 0.0) {
        return Err(Error::Config(format!("flow step must be > 0, got {dl}")));
    }
    if z0.iter().any(|&v| v < -1e-12 || v > 1.0 + 1e-12) {
        return Err(Error::Infeasible("z0 outside [0, 1]".into()));
    }
    let obj = ZObjective::new(sys, t, u, None)?;
    let mut z = z0.to_vec();
    let mut l = 0.0;
    let mut dl_cur = dl;
    let mut arc = 0.0;
    let mut samples = Vec::new();

    let g0 = obj.gradient(&z);
    let mut energy_prev = obj.value(&z);
    let slope0 = crate::energy::unilateral_slope_z(sys, &g0);
    samples.push(FlowSample {
        l,
        field: z.clone(),
        energy: energy_prev,
        slope: slope0,
        inc_norm: 0.0,
    });

    let mut converged = slope0 <= opts.tol_slope * (1.0 + energy_prev.abs());
    while !converged && samples.len() <= opts.max_flow_steps {
        let step = loop {
            let prox = Prox {
                weight: 1.0 / dl_cur,
                anchor: &z,
            };
            match solve_z_prox(sys, t, u, &z, &z, opts, Some(prox)) {
                Ok((next, _, _)) => break next,
                Err(e) => {
                    dl_cur *= 0.5;
                    if dl_cur < 1e-14 * dl {
                        return Err(e);
                    }
                }
            }
        };
        let inc = {
            let diff: Vec<f64> = step.iter().zip(&z).map(|(a, b)| a - b).collect();
            sys.ips.l2_lumped_norm(&diff)
        };
        l += dl_cur;
        arc += inc;
        z = step;
        let g = obj.gradient(&z);
        let slope = crate::energy::unilateral_slope_z(sys, &g);
        let energy = obj.value(&z);
        samples.push(FlowSample {
            l,
            field: z.clone(),
            energy,
            slope,
            inc_norm: inc,
        });
        let rel_decrement = (energy_prev - energy).abs() / (1.0 + energy.abs());
        converged = slope <= opts.tol_slope * (1.0 + energy.abs()) || rel_decrement <= 1e-14;
        energy_prev = energy;
    }
    Ok(FlowTrajectory {
        arc_length: arc,
        terminal: z,
        converged,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{build_rect_mesh, DirichletSpec, Side};
    use crate::model::{
        BoundaryDatum, DegradationSpec, DissipationSpec, MaterialParams,
    };
    use rand::{Rng, SeedableRng};

    fn sys_full_dirichlet(nx: usize) -> System {
        let mesh = build_rect_mesh(nx, nx, 1.0, 1.0, &DirichletSpec::all_sides_both()).unwrap();
        System::new(
            mesh,
            MaterialParams {
                mu: 1.0,
                kappa: 2.0,
                eta: 0.01,
            },
            DegradationSpec {
                family: DegradationFamily::Quadratic,
                eta: 0.01,
            },
            DissipationSpec::At2,
            BoundaryDatum::linear_ramp([[1.0, 0.0], [0.0, 0.0]], [0.0, 0.0], 1.0),
        )
        .unwrap()
    }

    fn sys_partial(nx: usize) -> System {
        let mesh = build_rect_mesh(
            nx,
            nx,
            1.0,
            1.0,
            &DirichletSpec::sides_both(&[Side::Left, Side::Right]),
        )
        .unwrap();
        System::new(
            mesh,
            MaterialParams {
                mu: 1.0,
                kappa: 2.0,
                eta: 0.01,
            },
            DegradationSpec {
                family: DegradationFamily::Quadratic,
                eta: 0.01,
            },
            DissipationSpec::At2,
            BoundaryDatum::linear_ramp([[1.0, 0.0], [0.0, 0.0]], [0.0, 0.0], 1.0),
        )
        .unwrap()
    }

    #[test]
    fn solve_u_zero_datum() {
        let sys = sys_full_dirichlet(3);
        let n = sys.n_nodes();
        let opts = SolveOptions::default();
        let (u, iters) = solve_u(&sys, 0.0, &vec![1.0; n], &vec![0.0; 2 * n], &opts).unwrap();
        assert!(u.iter().all(|v| v.abs() < 1e-12));
        assert_eq!(iters, 0);
    }

    #[test]
    fn solve_u_constant_strain_is_stationary() {
        // full Dirichlet, affine datum, uniform z: u = 0 is the minimizer
        let sys = sys_full_dirichlet(4);
        let n = sys.n_nodes();
        let opts = SolveOptions::default();
        let state = State::new(0.8, vec![0.0; 2 * n], vec![0.6; n]);
        let (g_u, _) = crate::energy::assemble_gradients(&sys, &state).unwrap();
        assert!(g_u.iter().all(|v| v.abs() < 1e-12));
        let (u, _) = solve_u(&sys, 0.8, &vec![0.6; n], &vec![0.0; 2 * n], &opts).unwrap();
        assert!(sys.ips.h1_norm(&sys.mesh, &u) < 1e-10);
    }

    #[test]
    fn solve_u_matches_linear_oracle_in_tension() {
        // uniaxial stretch between clamped grips: the Poisson contraction is
        // too weak to flip any element trace, so the nonlinear solve must
        // agree with one linear solve in the tension branch
        let mesh = build_rect_mesh(
            4,
            4,
            1.0,
            1.0,
            &DirichletSpec::sides_both(&[Side::Left, Side::Right]),
        )
        .unwrap();
        let sys = System::new(
            mesh,
            MaterialParams {
                mu: 1.0,
                kappa: 2.0,
                eta: 0.01,
            },
            DegradationSpec {
                family: DegradationFamily::Quadratic,
                eta: 0.01,
            },
            DissipationSpec::At2,
            BoundaryDatum::linear_ramp([[0.4, 0.0], [0.0, 0.0]], [0.0, 0.0], 1.0),
        )
        .unwrap();
        let n = sys.n_nodes();
        let z = vec![1.0; n];
        let opts = SolveOptions {
            tol_slope: 1e-12,
            ..Default::default()
        };
        let (u, _) = solve_u(&sys, 1.0, &z, &vec![0.0; 2 * n], &opts).unwrap();

        // tension state a posteriori
        let state = State::new(1.0, u.clone(), z.clone());
        let total = total_displacement(&sys, &state).unwrap();
        for e in 0..sys.mesh.element_count() {
            let eps = element_strain_unchecked(&sys.mesh, &total, e);
            assert!(eps.trace() > 0.0, "element {e} not in tension");
        }

        // one-shot linear solve: tangent at zero strain in the "+" branch
        let obj = UObjective::new(&sys, 1.0, &z, None).unwrap();
        let u0 = vec![0.0; 2 * n];
        let tangent = obj.tangent(&u0);
        let rhs: Vec<f64> = obj.residual(&u0).iter().map(|v| -v).collect();
        let linear = SpdFactor::new(&tangent).unwrap().solve(&rhs);
        let lin_full = sys.mesh.prolong(&linear);
        let diff: Vec<f64> = u.iter().zip(&lin_full).map(|(a, b)| a - b).collect();
        assert!(
            sys.ips.h1_norm(&sys.mesh, &diff) <= 1e-10,
            "nonlinear vs linear gap {}",
            sys.ips.h1_norm(&sys.mesh, &diff)
        );
    }

    #[test]
    fn solve_z_rest_state_stays_at_one() {
        let sys = sys_full_dirichlet(3);
        let n = sys.n_nodes();
        let opts = SolveOptions::default();
        let (z, _, _) = solve_z(
            &sys,
            0.0,
            &vec![0.0; 2 * sys.n_nodes()],
            &vec![1.0; n],
            &vec![1.0; n],
            &opts,
        )
        .unwrap();
        for v in &z {
            assert!((v - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn solve_z_uniform_closed_form() {
        // full Dirichlet, G = (x1, 0): psi_plus = 1.5 t^2; at t with psi = 1
        // the unconstrained stationary point is z = 1/(1 + psi) = 0.5
        let sys = sys_full_dirichlet(4);
        let n = sys.n_nodes();
        let t = (2.0f64 / 3.0).sqrt();
        let opts = SolveOptions::default();
        let u0 = vec![0.0; 2 * n];
        let (z, _, active) = solve_z(&sys, t, &u0, &vec![1.0; n], &vec![1.0; n], &opts).unwrap();
        for v in &z {
            assert!((v - 0.5).abs() < 1e-9, "z = {v}");
        }
        assert!(active.iter().all(|a| !a));

        // binding upper bound: z = 0.3 with non-positive gradients
        let (z, _, active) = solve_z(&sys, t, &u0, &vec![0.3; n], &vec![0.3; n], &opts).unwrap();
        for v in &z {
            assert!((v - 0.3).abs() < 1e-10);
        }
        assert!(active.iter().all(|a| *a));
        let state = State::new(t, u0.clone(), z);
        let (_, g_z) = crate::energy::assemble_gradients(&sys, &state).unwrap();
        for g in &g_z {
            assert!(*g <= 1e-10);
        }
    }

    #[test]
    fn solve_z_rejects_infeasible_start() {
        let sys = sys_full_dirichlet(2);
        let n = sys.n_nodes();
        let opts = SolveOptions::default();
        let err = solve_z(
            &sys,
            0.5,
            &vec![0.0; 2 * n],
            &vec![0.5; n],
            &vec![0.9; n],
            &opts,
        );
        assert!(matches!(err, Err(Error::Infeasible(_))));
    }

    #[test]
    fn solve_z_unique_minimizer_from_any_start() {
        let sys = sys_partial(3);
        let n = sys.n_nodes();
        let opts = SolveOptions::default();
        let t = 0.9;
        let u0 = vec![0.0; 2 * n];
        let upper = vec![0.8; n];
        let (z1, _, _) = solve_z(&sys, t, &u0, &upper, &vec![0.8; n], &opts).unwrap();
        let (z2, _, _) = solve_z(&sys, t, &u0, &upper, &vec![0.0; n], &opts).unwrap();
        for (a, b) in z1.iter().zip(&z2) {
            assert!((a - b).abs() <= 10.0 * opts.tol_slope, "{a} vs {b}");
        }
    }

    #[test]
    fn oracle_agrees_with_solver() {
        // 2x1 mesh has 6 z-dofs
        let mesh = build_rect_mesh(
            2,
            1,
            2.0,
            1.0,
            &DirichletSpec::sides_both(&[Side::Left, Side::Right]),
        )
        .unwrap();
        let sys = System::new(
            mesh,
            MaterialParams {
                mu: 1.0,
                kappa: 2.0,
                eta: 0.01,
            },
            DegradationSpec {
                family: DegradationFamily::Quadratic,
                eta: 0.01,
            },
            DissipationSpec::At2,
            BoundaryDatum::linear_ramp([[1.0, 0.0], [0.0, 0.0]], [0.0, 0.0], 1.0),
        )
        .unwrap();
        let n = sys.n_nodes();
        assert_eq!(n, 6);
        let opts = SolveOptions::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for trial in 0..20 {
            let nf = sys.mesh.free_dofs.len();
            let uf: Vec<f64> = (0..nf).map(|_| rng.gen_range(-0.5..0.5)).collect();
            let u = sys.mesh.prolong(&uf);
            let upper: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..1.0)).collect();
            let t = rng.gen_range(0.0..1.0);
            let init = upper.clone();
            let (z, _, _) = solve_z(&sys, t, &u, &upper, &init, &opts).unwrap();
            let z_oracle = qp_active_set_oracle(&sys, t, &u, &upper).unwrap();
            for i in 0..n {
                assert!(
                    (z[i] - z_oracle[i]).abs() <= 1e-9,
                    "trial {trial} node {i}: {} vs {}",
                    z[i],
                    z_oracle[i]
                );
            }
        }
    }

    #[test]
    fn oracle_trivial_cases() {
        let mesh = build_rect_mesh(
            2,
            1,
            2.0,
            1.0,
            &DirichletSpec::sides_both(&[Side::Left]),
        )
        .unwrap();
        let sys = System::new(
            mesh,
            MaterialParams {
                mu: 1.0,
                kappa: 2.0,
                eta: 0.01,
            },
            DegradationSpec {
                family: DegradationFamily::Quadratic,
                eta: 0.01,
            },
            DissipationSpec::At2,
            BoundaryDatum::linear_ramp([[1.0, 0.0], [0.0, 0.0]], [0.0, 0.0], 1.0),
        )
        .unwrap();
        let n = sys.n_nodes();
        // zero strain, upper = 1: z stays 1, no active constraints at the optimum
        let z = qp_active_set_oracle(&sys, 0.0, &vec![0.0; 2 * n], &vec![1.0; n]).unwrap();
        for v in &z {
            assert!((v - 1.0).abs() < 1e-12);
        }
        // upper = 0 forces z = 0 with the full active set
        let z = qp_active_set_oracle(&sys, 0.7, &vec![0.0; 2 * n], &vec![0.0; n]).unwrap();
        for v in &z {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn flow_u_at_minimizer_is_single_sample() {
        let sys = sys_full_dirichlet(3);
        let n = sys.n_nodes();
        let opts = SolveOptions::default();
        let traj = flow_u(&sys, 0.5, &vec![1.0; n], &vec![0.0; 2 * n], 0.1, &opts).unwrap();
        assert_eq!(traj.samples.len(), 1);
        assert_eq!(traj.arc_length, 0.0);
        assert!(traj.converged);
    }

    #[test]
    fn flow_z_scalar_first_step() {
        // uniform psi_plus = 1, z0 = 1, dl = 1: the first proximal step
        // solves 5z - 3 = 0 nodewise
        let sys = sys_full_dirichlet(4);
        let n = sys.n_nodes();
        let t = (2.0f64 / 3.0).sqrt();
        let opts = SolveOptions::default();
        let traj = flow_z(&sys, t, &vec![0.0; 2 * n], &vec![1.0; n], 1.0, &opts).unwrap();
        assert!(traj.samples.len() >= 2);
        for v in &traj.samples[1].field {
            assert!((v - 0.6).abs() < 1e-9, "first step {v}");
        }
        // terminal agrees with the constrained minimizer z = 0.5
        for v in &traj.terminal {
            assert!((v - 0.5).abs() < 1e-6);
        }
        // monotone samples
        for w in traj.samples.windows(2) {
            for (a, b) in w[1].field.iter().zip(&w[0].field) {
                assert!(*a <= b + 1e-12);
            }
        }
    }

    #[test]
    fn flow_z_already_stationary() {
        let sys = sys_full_dirichlet(3);
        let n = sys.n_nodes();
        let opts = SolveOptions::default();
        let traj = flow_z(&sys, 0.0, &vec![0.0; 2 * n], &vec![1.0; n], 0.5, &opts).unwrap();
        assert_eq!(traj.samples.len(), 1);
        assert_eq!(traj.arc_length, 0.0);
    }

    #[test]
    fn flows_decrease_energy_and_satisfy_prox_chain() {
        let sys = sys_partial(4);
        let n = sys.n_nodes();
        let opts = SolveOptions::default();
        let t = 0.9;
        let (u_star, _) = solve_u(&sys, t, &vec![1.0; n], &vec![0.0; 2 * n], &opts).unwrap();
        let traj = flow_z(&sys, t, &u_star, &vec![1.0; n], 0.2, &opts).unwrap();
        for w in traj.samples.windows(2) {
            assert!(
                w[1].energy <= w[0].energy + 1e-12 * (1.0 + w[0].energy.abs()),
                "energy increased along the flow"
            );
            // F(out) + 1/(2 dl) |inc|^2 <= F(in)
            let dl = w[1].l - w[0].l;
            assert!(
                w[1].energy + w[1].inc_norm * w[1].inc_norm / (2.0 * dl)
                    <= w[0].energy + 1e-10 * (1.0 + w[0].energy.abs())
            );
        }
        // arc length dominates the metric distance between endpoints
        let diff: Vec<f64> = traj
            .terminal
            .iter()
            .zip(&traj.samples[0].field)
            .map(|(a, b)| a - b)
            .collect();
        assert!(traj.arc_length >= sys.ips.l2_lumped_norm(&diff) - 1e-12);
    }

    #[test]
    fn flow_u_terminal_matches_direct_solve() {
        let sys = sys_partial(4);
        let n = sys.n_nodes();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        let z: Vec<f64> = (0..n).map(|_| rng.gen_range(0.3..1.0)).collect();
        let opts = SolveOptions {
            tol_slope: 1e-9,
            ..Default::default()
        };
        let t = 1.0;
        let nf = sys.mesh.free_dofs.len();
        let u0f: Vec<f64> = (0..nf).map(|_| rng.gen_range(-0.1..0.1)).collect();
        let u0 = sys.mesh.prolong(&u0f);
        let traj = flow_u(&sys, t, &z, &u0, 2.0, &opts).unwrap();
        let (u_star, _) = solve_u(&sys, t, &z, &u0, &opts).unwrap();
        let diff: Vec<f64> = traj.terminal.iter().zip(&u_star).map(|(a, b)| a - b).collect();
        assert!(
            sys.ips.h1_norm(&sys.mesh, &diff) <= 1e-6,
            "terminal gap {}",
            sys.ips.h1_norm(&sys.mesh, &diff)
        );
        // distance to the minimizer is non-increasing along the flow
        let mut prev = f64::INFINITY;
        for s in &traj.samples {
            let d: Vec<f64> = s.field.iter().zip(&u_star).map(|(a, b)| a - b).collect();
            let dist = sys.ips.h1_norm(&sys.mesh, &d);
            assert!(dist <= prev + 1e-12);
            prev = dist;
        }
    }

    #[test]
    fn scalar_implicit_euler_surrogate() {
        // along an eigen-direction of modulus a, each implicit Euler step of
        // the quadratic energy contracts by exactly 1/(1 + a dl)
        for a in [0.5, 2.0, 10.0] {
            for dl in [0.1, 1.0] {
                let mut x = 1.0f64;
                let step = |x: f64| x / (1.0 + a * dl);
                for _ in 0..50 {
                    // argmin of a y^2/2 + (y - x)^2 / (2 dl)
                    let argmin = x / (1.0 + a * dl);
                    assert!((argmin - step(x)).abs() < 1e-15);
                    assert!(argmin.abs() < x.abs());
                    x = argmin;
                }
                let exact = 1.0 / (1.0 + a * dl).powi(50);
                assert!((x - exact).abs() <= 1e-12 * exact.max(1e-30));
            }
        }
    }

    #[test]
    fn flow_u_lognorm_decay_fit() {
        // distances to the minimizer decay exponentially: the least-squares
        // line through (l, log |u(l) - u_bar|) has negative slope and the
        // data never rises meaningfully above it
        let sys = sys_partial(4);
        let n = sys.n_nodes();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(29);
        let z: Vec<f64> = (0..n).map(|_| rng.gen_range(0.4..1.0)).collect();
        let nf = sys.mesh.free_dofs.len();
        let u0f: Vec<f64> = (0..nf).map(|_| rng.gen_range(-0.2..0.2)).collect();
        let u0 = sys.mesh.prolong(&u0f);
        let opts = SolveOptions::default();
        let (u_star, _) = solve_u(&sys, 1.0, &z, &u0, &opts).unwrap();
        let traj = flow_u(&sys, 1.0, &z, &u0, 0.5, &opts).unwrap();
        let mut pts = Vec::new();
        for s in &traj.samples {
            let d: Vec<f64> = s.field.iter().zip(&u_star).map(|(a, b)| a - b).collect();
            let dist = sys.ips.h1_norm(&sys.mesh, &d);
            if dist > 1e-13 {
                pts.push((s.l, dist.ln()));
            }
        }
        assert!(pts.len() >= 5, "need enough decay samples, got {}", pts.len());
        // log of a sum of decaying exponentials is convex, so the sequence
        // lies below the secant through its endpoints, which decays linearly
        let (l0, y0) = pts[0];
        let (l1, y1) = *pts.last().unwrap();
        let slope = (y1 - y0) / (l1 - l0);
        assert!(slope < 0.0, "fitted decay rate {slope} not negative");
        let overshoot = pts
            .iter()
            .map(|&(l, y)| y - (y0 + slope * (l - l0)))
            .fold(f64::MIN, f64::max);
        assert!(
            overshoot <= 1e-9,
            "log-norms rise {overshoot} above the fitted decay line"
        );
    }

    #[test]
    fn flow_z_arc_length_stable_under_refinement() {
        // halving dl changes the accumulated arc length by at most 20%
        let sys = sys_full_dirichlet(4);
        let n = sys.n_nodes();
        let opts = SolveOptions::default();
        let t = 0.9;
        let u0 = vec![0.0; 2 * n];
        let mut lengths = Vec::new();
        for dl in [0.2, 0.1] {
            let traj = flow_z(&sys, t, &u0, &vec![1.0; n], dl, &opts).unwrap();
            lengths.push(traj.arc_length);
        }
        let rel = (lengths[0] - lengths[1]).abs() / lengths[1];
        assert!(rel <= 0.2, "arc length jumped {rel} under refinement: {lengths:?}");
    }

    #[test]
    fn solve_u_unique_from_any_start() {
        let sys = sys_partial(3);
        let n = sys.n_nodes();
        let nf = sys.mesh.free_dofs.len();
        let opts = SolveOptions::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(41);
        let z: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..1.0)).collect();
        let (u1, _) = solve_u(&sys, 0.8, &z, &vec![0.0; 2 * n], &opts).unwrap();
        let far: Vec<f64> = (0..nf).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let (u2, _) = solve_u(&sys, 0.8, &z, &sys.mesh.prolong(&far), &opts).unwrap();
        let d: Vec<f64> = u1.iter().zip(&u2).map(|(a, b)| a - b).collect();
        assert!(
            sys.ips.h1_norm(&sys.mesh, &d) <= 10.0 * opts.tol_slope,
            "minimizer depends on the start: {}",
            sys.ips.h1_norm(&sys.mesh, &d)
        );
    }

    #[test]
    fn solve_z_quartic_against_scalar_bisection() {
        // uniform psi = 1: stationarity 4 z^3 + 2 z - 2 = 0, solved
        // independently by bisection
        let mesh = build_rect_mesh(4, 4, 1.0, 1.0, &DirichletSpec::all_sides_both()).unwrap();
        let sys = System::new(
            mesh,
            MaterialParams {
                mu: 1.0,
                kappa: 2.0,
                eta: 0.01,
            },
            DegradationSpec {
                family: DegradationFamily::Quartic,
                eta: 0.01,
            },
            DissipationSpec::At2,
            BoundaryDatum::linear_ramp([[1.0, 0.0], [0.0, 0.0]], [0.0, 0.0], 1.0),
        )
        .unwrap();
        let n = sys.n_nodes();
        let t = (2.0f64 / 3.0).sqrt(); // psi_plus = 1.5 t^2 = 1
        let opts = SolveOptions::default();
        let (z, _, _) = solve_z(
            &sys,
            t,
            &vec![0.0; 2 * n],
            &vec![1.0; n],
            &vec![1.0; n],
            &opts,
        )
        .unwrap();
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if 4.0 * mid * mid * mid + 2.0 * mid - 2.0 < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let z_exact = 0.5 * (lo + hi);
        for v in &z {
            assert!((v - z_exact).abs() < 1e-8, "quartic z = {v} vs {z_exact}");
        }
    }

    #[test]
    fn shifted_dissipation_shares_the_minimizer() {
        // f and f + c0 have the same derivative: identical argmin, energy
        // offset by c0 |Omega|
        let mesh = build_rect_mesh(3, 3, 1.0, 1.0, &DirichletSpec::all_sides_both()).unwrap();
        let mk = |dis: DissipationSpec| {
            System::new(
                build_rect_mesh(3, 3, 1.0, 1.0, &DirichletSpec::all_sides_both()).unwrap(),
                MaterialParams {
                    mu: 1.0,
                    kappa: 2.0,
                    eta: 0.01,
                },
                DegradationSpec {
                    family: DegradationFamily::Quadratic,
                    eta: 0.01,
                },
                dis,
                BoundaryDatum::linear_ramp([[1.0, 0.0], [0.0, 0.0]], [0.0, 0.0], 1.0),
            )
            .unwrap()
        };
        drop(mesh);
        let sys_a = mk(DissipationSpec::At2);
        let sys_b = mk(DissipationSpec::Shifted { c0: 0.3 });
        let n = sys_a.n_nodes();
        let opts = SolveOptions::default();
        let t = 0.8;
        let u0 = vec![0.0; 2 * n];
        let (za, _, _) = solve_z(&sys_a, t, &u0, &vec![1.0; n], &vec![1.0; n], &opts).unwrap();
        let (zb, _, _) = solve_z(&sys_b, t, &u0, &vec![1.0; n], &vec![1.0; n], &opts).unwrap();
        for (a, b) in za.iter().zip(&zb) {
            assert!((a - b).abs() < 1e-12);
        }
        let ea = crate::energy::assemble_energy(&sys_a, &State::new(t, u0.clone(), za)).unwrap();
        let eb = crate::energy::assemble_energy(&sys_b, &State::new(t, u0, zb)).unwrap();
        assert!((eb.total - ea.total - 0.3).abs() < 1e-12);
    }

    #[test]
    fn flow_z_comparison_principle() {
        let sys = sys_partial(3);
        let n = sys.n_nodes();
        let opts = SolveOptions::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        for _ in 0..5 {
            let nf = sys.mesh.free_dofs.len();
            let uf: Vec<f64> = (0..nf).map(|_| rng.gen_range(-0.4..0.4)).collect();
            let u = sys.mesh.prolong(&uf);
            let z0: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..1.0)).collect();
            let t = rng.gen_range(0.0..1.0);
            let (z_bar, _, _) = solve_z(&sys, t, &u, &z0, &z0, &opts).unwrap();
            let traj = flow_z(&sys, t, &u, &z0, 0.3, &opts).unwrap();
            for s in &traj.samples {
                for (a, b) in s.field.iter().zip(&z_bar) {
                    assert!(*a >= b - 1e-10, "comparison principle violated");
                }
            }
        }
    }
}
