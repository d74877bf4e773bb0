//! Pointwise constitutive algebra (volumetric/deviatoric split, energy
//! density, stress) and global assembly of energies, gradients, slopes,
//! power and the intrinsic energy norms of the separately quadratic model.

use crate::fem::{element_strain_unchecked, Strain2};
use crate::linalg;
use crate::model::{eval_boundary, DegradationFamily, DegradationSpec, MaterialParams};
use crate::system::System;
use crate::{Error, Result};

/// Volumetric/deviatoric split with positive and negative volumetric parts.
/// Convention: `(x)_- = max(-x, 0)`, so `vol = vol_plus - vol_minus`.
#[derive(Debug, Clone, Copy)]
pub struct SplitStrain {
    pub vol: Strain2,
    pub dev: Strain2,
    pub vol_plus: Strain2,
    pub vol_minus: Strain2,
}

pub fn split_strain(e: &Strain2) -> SplitStrain {
    let tr = e.trace();
    let vol = Strain2::spherical(0.5 * tr);
    SplitStrain {
        vol,
        dev: e.sub(&vol),
        vol_plus: Strain2::spherical(0.5 * tr.max(0.0)),
        vol_minus: Strain2::spherical(0.5 * (-tr).max(0.0)),
    }
}

/// Tensile and compressive parts of the elastic density:
/// `psi_plus = mu |e_d|^2 + kappa |e_v^+|^2`, `psi_minus = kappa |e_v^-|^2`.
pub fn psi_split(e: &Strain2, params: &MaterialParams) -> (f64, f64) {
    let s = split_strain(e);
    (
        params.mu * s.dev.norm_sq() + params.kappa * s.vol_plus.norm_sq(),
        params.kappa * s.vol_minus.norm_sq(),
    )
}

/// Energy density `W(z, e) = h(z) psi_plus(e) + psi_minus(e)` and its stress
/// `dW/de = 2 h(z) (mu e_d + kappa e_v^+) - 2 kappa e_v^-`.
pub fn density_and_stress(
    z: f64,
    e: &Strain2,
    params: &MaterialParams,
    deg: &DegradationSpec,
) -> (f64, Strain2) {
    let (h, _) = deg.eval(z);
    let s = split_strain(e);
    let psi_plus = params.mu * s.dev.norm_sq() + params.kappa * s.vol_plus.norm_sq();
    let psi_minus = params.kappa * s.vol_minus.norm_sq();
    let w = h * psi_plus + psi_minus;
    let sigma = s
        .dev
        .scale(2.0 * h * params.mu)
        .add(&s.vol_plus.scale(2.0 * h * params.kappa))
        .sub(&s.vol_minus.scale(2.0 * params.kappa));
    (w, sigma)
}

/// Stress with the element-mean degradation factor already evaluated.
fn stress_with_h(h: f64, e: &Strain2, params: &MaterialParams) -> Strain2 {
    let s = split_strain(e);
    s.dev
        .scale(2.0 * h * params.mu)
        .add(&s.vol_plus.scale(2.0 * h * params.kappa))
        .sub(&s.vol_minus.scale(2.0 * params.kappa))
}

/// A point of the evolution: time, displacement (full-length nodal field,
/// zero on Dirichlet dofs) and phase field.
#[derive(Debug, Clone)]
pub struct State {
    pub t: f64,
    pub u: Vec<f64>,
    pub z: Vec<f64>,
}

impl State {
    pub fn new(t: f64, u: Vec<f64>, z: Vec<f64>) -> Self {
        Self { t, u, z }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EnergyBreakdown {
    pub elastic: f64,
    pub dissipation: f64,
    pub total: f64,
}

fn check_sizes(sys: &System, state: &State) -> Result<()> {
    if state.u.len() != sys.mesh.n_udofs() {
        return Err(Error::SizeMismatch(format!(
            "u has {} entries, expected {}",
            state.u.len(),
            sys.mesh.n_udofs()
        )));
    }
    if state.z.len() != sys.mesh.node_count() {
        return Err(Error::SizeMismatch(format!(
            "z has {} entries, expected {}",
            state.z.len(),
            sys.mesh.node_count()
        )));
    }
    Ok(())
}

/// Total displacement `u + g(t)` as a nodal field.
pub fn total_displacement(sys: &System, state: &State) -> Result<Vec<f64>> {
    let (g, _) = eval_boundary(&sys.datum, &sys.mesh, state.t)?;
    Ok(state.u.iter().zip(&g).map(|(a, b)| a + b).collect())
}

fn h_mean(sys: &System, z: &[f64], tri: usize) -> f64 {
    let t = &sys.mesh.triangles[tri];
    let (h0, _) = sys.deg.eval(z[t[0]]);
    let (h1, _) = sys.deg.eval(z[t[1]]);
    let (h2, _) = sys.deg.eval(z[t[2]]);
    (h0 + h1 + h2) / 3.0
}

/// Elastic energy with nodal quadrature on the degradation factor,
/// dissipation `1/2 z^T K z + sum_i m_i f(z_i)`, and their sum.
pub fn assemble_energy(sys: &System, state: &State) -> Result<EnergyBreakdown> {
    check_sizes(sys, state)?;
    let total_u = total_displacement(sys, state)?;
    let mut elastic = 0.0;
    for e in 0..sys.mesh.element_count() {
        let eps = element_strain_unchecked(&sys.mesh, &total_u, e);
        let (psi_p, psi_m) = psi_split(&eps, &sys.params);
        elastic += sys.mesh.areas[e] * (h_mean(sys, &state.z, e) * psi_p + psi_m);
    }
    let kz = linalg::mul_vec(&sys.ips.stiffness_z, &state.z);
    let grad_term = 0.5 * linalg::dot(&state.z, &kz);
    let mut reaction = 0.0;
    for (zi, mi) in state.z.iter().zip(&sys.ips.lumped_mass) {
        let (f, _) = sys.dis.eval(*zi);
        reaction += mi * f;
    }
    let dissipation = grad_term + reaction;
    Ok(EnergyBreakdown {
        elastic,
        dissipation,
        total: elastic + dissipation,
    })
}

/// Area/3-weighted nodal recovery of the tensile density:
/// `P_i = sum_{e owning i} area_e/3 * psi_plus(eps_e)`; the node average is
/// `P_i / m_i`. Returns the weighted sums `P_i`.
pub fn psi_plus_weighted(sys: &System, total_u: &[f64]) -> Vec<f64> {
    let mut p = vec![0.0; sys.mesh.node_count()];
    for e in 0..sys.mesh.element_count() {
        let eps = element_strain_unchecked(&sys.mesh, total_u, e);
        let (psi_p, _) = psi_split(&eps, &sys.params);
        let w = sys.mesh.areas[e] / 3.0 * psi_p;
        for &v in &sys.mesh.triangles[e] {
            p[v] += w;
        }
    }
    p
}

/// Gradients of the total energy: `g_u` on free u-dofs assembles
/// `int sigma : eps(phi)`; `g_z_i = h'(z_i) P_i + (K z)_i + m_i f'(z_i)`.
pub fn assemble_gradients(sys: &System, state: &State) -> Result<(Vec<f64>, Vec<f64>)> {
    check_sizes(sys, state)?;
    let total_u = total_displacement(sys, state)?;
    let g_u = assemble_residual_u(sys, &state.z, &total_u);
    let g_z = assemble_gradient_z(sys, &state.z, &total_u);
    Ok((g_u, g_z))
}

pub(crate) fn assemble_residual_u(sys: &System, z: &[f64], total_u: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; sys.mesh.free_dofs.len()];
    for e in 0..sys.mesh.element_count() {
        let eps = element_strain_unchecked(&sys.mesh, total_u, e);
        let sigma = stress_with_h(h_mean(sys, z, e), &eps, &sys.params);
        let area = sys.mesh.areas[e];
        let grads = &sys.mesh.shape_grads[e];
        for (k, &v) in sys.mesh.triangles[e].iter().enumerate() {
            let b = grads[k];
            // sigma : sym(e_c x b) = (sigma row c) . b
            let rows = [
                sigma.e11 * b[0] + sigma.e12 * b[1],
                sigma.e12 * b[0] + sigma.e22 * b[1],
            ];
            for c in 0..2 {
                if let Some(fd) = sys.mesh.full_to_free[2 * v + c] {
                    g[fd] += area * rows[c];
                }
            }
        }
    }
    g
}

pub(crate) fn assemble_gradient_z(sys: &System, z: &[f64], total_u: &[f64]) -> Vec<f64> {
    let p = psi_plus_weighted(sys, total_u);
    let kz = linalg::mul_vec(&sys.ips.stiffness_z, z);
    let mut g = vec![0.0; sys.mesh.node_count()];
    for i in 0..g.len() {
        let (_, hp) = sys.deg.eval(z[i]);
        let (_, fp) = sys.dis.eval(z[i]);
        g[i] = hp * p[i] + kz[i] + sys.ips.lumped_mass[i] * fp;
    }
    g
}

/// Discrete metric slopes of the energy at a state.
#[derive(Debug, Clone)]
pub struct SlopeReport {
    /// `|d_u F| = sqrt(g_u^T H^-1 g_u)` in the H1 geometry.
    pub slope_u: f64,
    /// Unilateral slope `sqrt(sum ((g_z)_i)_+^2 / m_i)` in the lumped L2
    /// geometry (descent restricted to non-positive directions).
    pub slope_z_unilateral: f64,
    /// Riesz representative `-H^-1 g_u` as a full u-field; its H1 norm
    /// equals `slope_u` and it realizes the slope's Rayleigh quotient.
    pub maximizer_u: Vec<f64>,
}

pub fn slopes(sys: &System, state: &State) -> Result<SlopeReport> {
    let (g_u, g_z) = assemble_gradients(sys, state)?;
    slopes_from_gradients(sys, &g_u, &g_z)
}

pub(crate) fn slopes_from_gradients(
    sys: &System,
    g_u: &[f64],
    g_z: &[f64],
) -> Result<SlopeReport> {
    let riesz = sys.ips.h1_factor.solve(g_u);
    let slope_u = linalg::dot(g_u, &riesz).max(0.0).sqrt();
    let maximizer_free: Vec<f64> = riesz.iter().map(|v| -v).collect();
    let maximizer_u = sys.mesh.prolong(&maximizer_free);
    let slope_z_unilateral = unilateral_slope_z(sys, g_z);
    Ok(SlopeReport {
        slope_u,
        slope_z_unilateral,
        maximizer_u,
    })
}

pub(crate) fn unilateral_slope_z(sys: &System, g_z: &[f64]) -> f64 {
    g_z.iter()
        .zip(&sys.ips.lumped_mass)
        .map(|(g, m)| {
            let gp = g.max(0.0);
            gp * gp / m
        })
        .sum::<f64>()
        .sqrt()
}

/// Power expended by the moving datum: `int dW/de : eps(gdot)`.
pub fn power(sys: &System, state: &State) -> Result<f64> {
    check_sizes(sys, state)?;
    let total_u = total_displacement(sys, state)?;
    let (_, gdot) = eval_boundary(&sys.datum, &sys.mesh, state.t)?;
    let mut p = 0.0;
    for e in 0..sys.mesh.element_count() {
        let eps = element_strain_unchecked(&sys.mesh, &total_u, e);
        let sigma = stress_with_h(h_mean(sys, &state.z, e), &eps, &sys.params);
        let eps_dot = element_strain_unchecked(&sys.mesh, &gdot, e);
        p += sys.mesh.areas[e] * sigma.inner(&eps_dot);
    }
    Ok(p)
}

/// Isotropic stress of the separately quadratic model,
/// `sigma(e) = lambda tr(e) I + 2 mu e` with `lambda = kappa - mu`.
fn sigma_isotropic(e: &Strain2, params: &MaterialParams) -> Strain2 {
    let lambda = params.kappa - params.mu;
    Strain2::spherical(lambda * e.trace()).add(&e.scale(2.0 * params.mu))
}

/// Intrinsic energy norms of direction fields at the current state
/// (separately quadratic model, quadratic degradation only):
/// `|u_dir|_z^2 = int (z^2 + eta) sigma(u_dir) : eps(u_dir)` and
/// `|z_dir|_u^2 = int |grad z_dir|^2 + z_dir^2 (1 + sigma(u+g) : eps(u+g))`.
pub fn energy_norms(
    sys: &System,
    u_dir: &[f64],
    z_dir: &[f64],
    state: &State,
) -> Result<(f64, f64)> {
    if sys.deg.family != DegradationFamily::Quadratic {
        return Err(Error::Unsupported(
            "energy norms are defined for the quadratic degradation family only".into(),
        ));
    }
    check_sizes(sys, state)?;
    if u_dir.len() != sys.mesh.n_udofs() || z_dir.len() != sys.mesh.node_count() {
        return Err(Error::SizeMismatch("direction field sizes".into()));
    }

    // |u_dir|_z^2 with nodal quadrature on z^2 + eta
    let mut norm_u_sq = 0.0;
    for e in 0..sys.mesh.element_count() {
        let t = &sys.mesh.triangles[e];
        let wz = (state.z[t[0]] * state.z[t[0]]
            + state.z[t[1]] * state.z[t[1]]
            + state.z[t[2]] * state.z[t[2]])
            / 3.0
            + sys.params.eta;
        let eps = element_strain_unchecked(&sys.mesh, u_dir, e);
        let sig = sigma_isotropic(&eps, &sys.params);
        norm_u_sq += sys.mesh.areas[e] * wz * sig.inner(&eps);
    }

    // |z_dir|_u^2 with the area/3-weighted nodal recovery of sigma : eps
    let total_u = total_displacement(sys, state)?;
    let mut q = vec![0.0; sys.mesh.node_count()];
    for e in 0..sys.mesh.element_count() {
        let eps = element_strain_unchecked(&sys.mesh, &total_u, e);
        let sig = sigma_isotropic(&eps, &sys.params);
        let w = sys.mesh.areas[e] / 3.0 * sig.inner(&eps);
        for &v in &sys.mesh.triangles[e] {
            q[v] += w;
        }
    }
    let kz = linalg::mul_vec(&sys.ips.stiffness_z, z_dir);
    let mut norm_z_sq = linalg::dot(z_dir, &kz);
    for i in 0..z_dir.len() {
        norm_z_sq += sys.ips.lumped_mass[i] * z_dir[i] * z_dir[i] + q[i] * z_dir[i] * z_dir[i];
    }

    Ok((norm_u_sq.max(0.0).sqrt(), norm_z_sq.max(0.0).sqrt()))
}
