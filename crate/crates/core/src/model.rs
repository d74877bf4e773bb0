//! Material parameters, the degradation/dissipation function families,
//! the separable boundary datum and the uniform time grid.
//!
//! Both function families satisfy the convexity hypotheses globally, which
//! is why arbitrary user-supplied functions are not accepted: convexity of
//! opaque code cannot be validated.

use crate::fem::Mesh;
use crate::{Error, Result};

/// Shear modulus, bulk-type modulus (kappa = lambda + mu) and residual
/// stiffness eta = h(0).
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct MaterialParams {
    pub mu: f64,
    pub kappa: f64,
    pub eta: f64,
}

/// Degradation families: `h(z) = z^2 + eta` or `h(z) = z^4 + eta`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DegradationFamily {
    Quadratic,
    Quartic,
}

#[derive(Debug, Clone, Copy)]
pub struct DegradationSpec {
    pub family: DegradationFamily,
    pub eta: f64,
}

impl DegradationSpec {
    /// (h(z), h'(z))
    pub fn eval(&self, z: f64) -> (f64, f64) {
        match self.family {
            DegradationFamily::Quadratic => (z * z + self.eta, 2.0 * z),
            DegradationFamily::Quartic => {
                let z2 = z * z;
                (z2 * z2 + self.eta, 4.0 * z2 * z)
            }
        }
    }
}

/// Dissipation families: `f(z) = (1-z)^2` or the shifted `(1-z)^2 + c0`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase", tag = "family")]
pub enum DissipationSpec {
    At2,
    Shifted { c0: f64 },
}

impl DissipationSpec {
    /// (f(z), f'(z))
    pub fn eval(&self, z: f64) -> (f64, f64) {
        let w = 1.0 - z;
        match self {
            DissipationSpec::At2 => (w * w, -2.0 * w),
            DissipationSpec::Shifted { c0 } => (w * w + c0, -2.0 * w),
        }
    }
}

/// Evaluates the selected families and their first derivatives at `z`.
pub fn eval_h_f(deg: &DegradationSpec, dis: &DissipationSpec, z: f64) -> (f64, f64, f64, f64) {
    let (h, hp) = deg.eval(z);
    let (f, fp) = dis.eval(z);
    (h, hp, f, fp)
}

/// Separable boundary datum `g(t,x) = rho(t) * G(x)` with affine
/// `G(x) = A x + b` and a piecewise-linear ramp `rho`.
///
/// The factorization gives an exact time derivative `rho'(t) * G(x)` and
/// exact elementwise strains for P1 interpolation.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct BoundaryDatum {
    /// Spatial matrix A (row-major).
    pub a: [[f64; 2]; 2],
    /// Spatial shift b.
    pub b: [f64; 2],
    /// Ramp breakpoints (t_j, rho_j), strictly increasing in t, covering [0,T].
    pub ramp: Vec<(f64, f64)>,
}

impl BoundaryDatum {
    /// Linear monotone ramp rho(t) = t on [0, t_final].
    pub fn linear_ramp(a: [[f64; 2]; 2], b: [f64; 2], t_final: f64) -> Self {
        Self {
            a,
            b,
            ramp: vec![(0.0, 0.0), (t_final, t_final)],
        }
    }

    pub fn t_end(&self) -> f64 {
        self.ramp.last().map(|&(t, _)| t).unwrap_or(0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.ramp.len() < 2 {
            return Err(Error::Config(
                "ramp needs at least two breakpoints".into(),
            ));
        }
        if self.ramp[0].0 != 0.0 {
            return Err(Error::Config("ramp must start at t = 0".into()));
        }
        for w in self.ramp.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::Config(
                    "ramp breakpoints must be strictly increasing in t".into(),
                ));
            }
        }
        Ok(())
    }

    fn segment(&self, t: f64) -> Result<usize> {
        if t < 0.0 || t > self.t_end() + 1e-12 * self.t_end().max(1.0) {
            return Err(Error::Config(format!(
                "time {t} outside the ramp interval [0, {}]",
                self.t_end()
            )));
        }
        // segment owning t, with the right-derivative convention at breakpoints
        let mut seg = self.ramp.len() - 2;
        for i in 0..self.ramp.len() - 1 {
            if t < self.ramp[i + 1].0 {
                seg = i;
                break;
            }
        }
        Ok(seg)
    }

    pub fn rho(&self, t: f64) -> Result<f64> {
        let i = self.segment(t)?;
        let (t0, r0) = self.ramp[i];
        let (t1, r1) = self.ramp[i + 1];
        Ok(r0 + (r1 - r0) * (t - t0) / (t1 - t0))
    }

    /// Right-derivative of the ramp (left-derivative at t = T).
    pub fn rho_dot(&self, t: f64) -> Result<f64> {
        let i = self.segment(t)?;
        let (t0, r0) = self.ramp[i];
        let (t1, r1) = self.ramp[i + 1];
        Ok((r1 - r0) / (t1 - t0))
    }

    pub fn g_at(&self, x: [f64; 2], t: f64) -> Result<[f64; 2]> {
        let r = self.rho(t)?;
        Ok([
            r * (self.a[0][0] * x[0] + self.a[0][1] * x[1] + self.b[0]),
            r * (self.a[1][0] * x[0] + self.a[1][1] * x[1] + self.b[1]),
        ])
    }
}

/// Nodal interpolation of the datum and its time derivative at time `t`.
/// Returns full-length u-fields (2 entries per node).
pub fn eval_boundary(datum: &BoundaryDatum, mesh: &Mesh, t: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let rho = datum.rho(t)?;
    let rho_dot = datum.rho_dot(t)?;
    let mut g = vec![0.0; mesh.n_udofs()];
    let mut gdot = vec![0.0; mesh.n_udofs()];
    for (i, p) in mesh.nodes.iter().enumerate() {
        let gx = datum.a[0][0] * p[0] + datum.a[0][1] * p[1] + datum.b[0];
        let gy = datum.a[1][0] * p[0] + datum.a[1][1] * p[1] + datum.b[1];
        g[2 * i] = rho * gx;
        g[2 * i + 1] = rho * gy;
        gdot[2 * i] = rho_dot * gx;
        gdot[2 * i + 1] = rho_dot * gy;
    }
    Ok((g, gdot))
}

/// Uniform grid of `steps` time steps on [0, t_final].
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct TimeGrid {
    pub t_final: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(t_final: f64, steps: usize) -> Result<Self> {
        if !(t_final > 0.0) {
            return Err(Error::Config(format!("final time must be > 0, got {t_final}")));
        }
        if steps < 1 {
            return Err(Error::Config("time grid needs at least one step".into()));
        }
        Ok(Self { t_final, steps })
    }

    pub fn tau(&self) -> f64 {
        self.t_final / self.steps as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        if i == self.steps {
            self.t_final
        } else {
            i as f64 * self.tau()
        }
    }
}

/// One validated assumption: which check, did it pass, and the offending
/// sample when it did not.
#[derive(Debug, Clone)]
pub struct ValidationItem {
    pub check: String,
    pub passed: bool,
    pub detail: Option<String>,
}

#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub items: Vec<ValidationItem>,
}

impl ValidationReport {
    fn push(&mut self, check: &str, passed: bool, detail: Option<String>) {
        self.items.push(ValidationItem {
            check: check.into(),
            passed,
            detail,
        });
    }

    pub fn all_passed(&self) -> bool {
        self.items.iter().all(|i| i.passed)
    }

    pub fn failures(&self) -> Vec<String> {
        self.items
            .iter()
            .filter(|i| !i.passed)
            .map(|i| match &i.detail {
                Some(d) => format!("{}: {}", i.check, d),
                None => i.check.clone(),
            })
            .collect()
    }
}

/// Checks every model assumption by direct inequalities plus sampled
/// convexity/monotonicity on [-1, 2]. Never aborts; failures carry the
/// offending sample.
pub fn validate_model(
    params: &MaterialParams,
    deg: &DegradationSpec,
    dis: &DissipationSpec,
) -> ValidationReport {
    let mut rep = ValidationReport::default();
    rep.push(
        "mu > 0",
        params.mu > 0.0,
        (!(params.mu > 0.0)).then(|| format!("mu = {}", params.mu)),
    );
    rep.push(
        "kappa > 0",
        params.kappa > 0.0,
        (!(params.kappa > 0.0)).then(|| format!("kappa = {}", params.kappa)),
    );
    rep.push(
        "eta > 0",
        params.eta > 0.0,
        (!(params.eta > 0.0)).then(|| format!("eta = {}", params.eta)),
    );
    if let DissipationSpec::Shifted { c0 } = dis {
        rep.push(
            "c0 >= 0",
            *c0 >= 0.0,
            (!(*c0 >= 0.0)).then(|| format!("c0 = {c0}")),
        );
    }

    // h(0) = eta
    let (h0, _) = deg.eval(0.0);
    rep.push(
        "h(0) = eta",
        (h0 - deg.eta).abs() <= 1e-15 * (1.0 + deg.eta),
        None,
    );

    // sampled second differences of h (convexity) and first differences on
    // [0, inf) (monotonicity); f strong convexity via second differences
    let n = 401;
    let dxs = 3.0 / (n as f64 - 1.0);
    let mut h_convex = true;
    let mut h_mono = true;
    let mut f_strong = true;
    let mut f_min_at_1 = true;
    let mut bad = (0.0, 0.0, 0.0);
    for k in 1..n - 1 {
        let z = -1.0 + k as f64 * dxs;
        let (hm, _) = deg.eval(z - dxs);
        let (hz, _) = deg.eval(z);
        let (hp, _) = deg.eval(z + dxs);
        let d2 = hp - 2.0 * hz + hm;
        if d2 < -1e-10 {
            h_convex = false;
            bad = (z, d2, 0.0);
        }
        if z >= 0.0 && hp - hz < -1e-12 {
            h_mono = false;
        }
        let (fm, _) = dis.eval(z - dxs);
        let (fz, _) = dis.eval(z);
        let (fp, _) = dis.eval(z + dxs);
        // f'' = 2 exactly for both families; demand modulus >= 2 in samples
        if fp - 2.0 * fz + fm < (2.0 - 1e-8) * dxs * dxs {
            f_strong = false;
        }
        let (f1, _) = dis.eval(1.0);
        if !(0.0 <= f1 && f1 <= fz + 1e-12) {
            f_min_at_1 = false;
        }
    }
    rep.push(
        "h convex",
        h_convex,
        (!h_convex).then(|| format!("second difference {} at z = {}", bad.1, bad.0)),
    );
    rep.push("h non-decreasing on [0, inf)", h_mono, None);
    rep.push("f strongly convex (modulus >= 2)", f_strong, None);
    rep.push("0 <= f(1) <= f(z)", f_min_at_1, None);
    rep
}
