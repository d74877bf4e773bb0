//! TOML run configuration: parsing, exhaustive validation, defaults.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::evolution::{ParamMode, StaggerOptions};
use crate::fem::{build_rect_mesh, Comp, DirichletSpec, Mesh, Side};
use crate::model::{
    BoundaryDatum, DegradationFamily, DegradationSpec, DissipationSpec, MaterialParams, TimeGrid,
};
use crate::solver::SolveOptions;
use crate::system::System;
use crate::{Error, Result};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    mesh: Option<RawMesh>,
    material: Option<RawMaterial>,
    functions: Option<RawFunctions>,
    bc: Option<RawBc>,
    time: Option<RawTime>,
    #[serde(default)]
    solver: RawSolver,
    #[serde(default)]
    initial: RawInitial,
    #[serde(default)]
    parametrization: RawParametrization,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMesh {
    nx: Option<usize>,
    ny: Option<usize>,
    lx: Option<f64>,
    ly: Option<f64>,
    /// Pairs like [["left", "both"], ["right", "x"]].
    dirichlet: Option<Vec<(Side, Comp)>>,
    /// Optional plain-text mesh file; overrides nx/ny/lx/ly.
    file: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMaterial {
    mu: Option<f64>,
    kappa: Option<f64>,
    eta: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFunctions {
    degradation: Option<DegradationFamily>,
    dissipation: Option<String>,
    #[serde(default)]
    c0: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBc {
    a: Option<[[f64; 2]; 2]>,
    b: Option<[f64; 2]>,
    /// Breakpoints [[t0, rho0], [t1, rho1], ...].
    ramp: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTime {
    #[serde(rename = "T")]
    t_final: Option<f64>,
    k: Option<usize>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    tol_slope: Option<f64>,
    tol_stag: Option<f64>,
    max_iter: Option<usize>,
    max_inner: Option<usize>,
    flow_dl: Option<f64>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawInitial {
    /// Constant initial phase field (default 1).
    z0: Option<f64>,
    /// Optional seeded box: nodes inside get `value`.
    band: Option<RawBand>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBand {
    value: f64,
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawParametrization {
    mode: Option<ParamMode>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    directory: Option<PathBuf>,
    csv: Option<bool>,
    vtk_stride: Option<usize>,
}

/// A fully validated run configuration.
#[derive(Debug, Clone)]
pub struct Config {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub dirichlet: DirichletSpec,
    pub mesh_file: Option<PathBuf>,
    pub material: MaterialParams,
    pub degradation: DegradationFamily,
    pub dissipation: DissipationSpec,
    pub bc_a: [[f64; 2]; 2],
    pub bc_b: [f64; 2],
    pub ramp: Vec<(f64, f64)>,
    pub time: TimeGrid,
    pub stagger: StaggerOptions,
    pub z0: f64,
    pub band: Option<(f64, [f64; 4])>,
    pub mode: ParamMode,
    pub output_dir: PathBuf,
    pub write_csv: bool,
    pub vtk_stride: usize,
}

impl Config {
    pub fn datum(&self) -> BoundaryDatum {
        BoundaryDatum {
            a: self.bc_a,
            b: self.bc_b,
            ramp: self.ramp.clone(),
        }
    }

    pub fn build_mesh(&self) -> Result<Mesh> {
        match &self.mesh_file {
            Some(path) => Mesh::from_ascii(path, &self.dirichlet),
            None => build_rect_mesh(self.nx, self.ny, self.lx, self.ly, &self.dirichlet),
        }
    }

    pub fn build_system(&self) -> Result<System> {
        let mesh = self.build_mesh()?;
        System::new(
            mesh,
            self.material,
            DegradationSpec {
                family: self.degradation,
                eta: self.material.eta,
            },
            self.dissipation,
            self.datum(),
        )
    }

    /// Nodal initial phase field: the constant `z0` with the optional
    /// seeded box applied.
    pub fn initial_z(&self, mesh: &Mesh) -> Vec<f64> {
        let mut z = vec![self.z0; mesh.node_count()];
        if let Some((value, [x0, x1, y0, y1])) = self.band {
            for (i, p) in mesh.nodes.iter().enumerate() {
                if p[0] >= x0 && p[0] <= x1 && p[1] >= y0 && p[1] <= y1 {
                    z[i] = value;
                }
            }
        }
        z
    }
}

/// Parses and validates a TOML configuration file. Parse errors carry the
/// line; validation failures are collected exhaustively.
pub fn parse_config(path: &Path) -> Result<Config> {
    let text = std::fs::read_to_string(path)?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<Config> {
    let raw: RawConfig =
        toml::from_str(text).map_err(|e| Error::Config(format!("TOML parse error: {e}")))?;
    let mut errs: Vec<String> = Vec::new();

    let time = match &raw.time {
        None => {
            errs.push("time.T and time.k required".into());
            None
        }
        Some(t) => match (t.t_final, t.k) {
            (Some(tf), Some(k)) => match TimeGrid::new(tf, k) {
                Ok(g) => Some(g),
                Err(e) => {
                    errs.push(e.to_string());
                    None
                }
            },
            _ => {
                errs.push("time.T and time.k required".into());
                None
            }
        },
    };

    let mesh = raw.mesh.clone().unwrap_or(RawMesh {
        nx: None,
        ny: None,
        lx: None,
        ly: None,
        dirichlet: None,
        file: None,
    });
    let nx = mesh.nx.unwrap_or(8);
    let ny = mesh.ny.unwrap_or(nx);
    let lx = mesh.lx.unwrap_or(1.0);
    let ly = mesh.ly.unwrap_or(1.0);
    if nx < 1 || ny < 1 {
        errs.push(format!("mesh.nx and mesh.ny must be >= 1, got {nx} x {ny}"));
    }
    if !(lx > 0.0) || !(ly > 0.0) {
        errs.push(format!("mesh.lx and mesh.ly must be > 0, got {lx} x {ly}"));
    }
    let dirichlet = DirichletSpec {
        entries: mesh.dirichlet.unwrap_or_default(),
    };
    if dirichlet.entries.is_empty() {
        errs.push("mesh.dirichlet must select at least one side/component".into());
    }

    let mat = raw.material.clone().unwrap_or(RawMaterial {
        mu: None,
        kappa: None,
        eta: None,
    });
    let material = MaterialParams {
        mu: mat.mu.unwrap_or(1.0),
        kappa: mat.kappa.unwrap_or(2.0),
        eta: mat.eta.unwrap_or(0.01),
    };
    if !(material.mu > 0.0) {
        errs.push(format!("material.mu must be > 0, got {}", material.mu));
    }
    if !(material.kappa > 0.0) {
        errs.push(format!("material.kappa must be > 0, got {}", material.kappa));
    }
    if !(material.eta > 0.0) {
        errs.push(format!("material.eta must be > 0, got {}", material.eta));
    }

    let funcs = raw.functions.clone().unwrap_or(RawFunctions {
        degradation: None,
        dissipation: None,
        c0: 0.0,
    });
    let degradation = funcs.degradation.unwrap_or(DegradationFamily::Quadratic);
    let dissipation = match funcs.dissipation.as_deref() {
        None | Some("at2") => DissipationSpec::At2,
        Some("shifted") => {
            if funcs.c0 < 0.0 {
                errs.push(format!("functions.c0 must be >= 0, got {}", funcs.c0));
            }
            DissipationSpec::Shifted { c0: funcs.c0 }
        }
        Some(other) => {
            errs.push(format!(
                "functions.dissipation must be \"at2\" or \"shifted\", got \"{other}\""
            ));
            DissipationSpec::At2
        }
    };

    let bc = raw.bc.clone().unwrap_or(RawBc {
        a: None,
        b: None,
        ramp: None,
    });
    let bc_a = bc.a.unwrap_or([[1.0, 0.0], [0.0, 0.0]]);
    let bc_b = bc.b.unwrap_or([0.0, 0.0]);
    let t_end = time.map(|g| g.t_final).unwrap_or(1.0);
    let ramp: Vec<(f64, f64)> = bc
        .ramp
        .map(|r| r.iter().map(|p| (p[0], p[1])).collect())
        .unwrap_or_else(|| vec![(0.0, 0.0), (t_end, t_end)]);
    {
        let datum = BoundaryDatum {
            a: bc_a,
            b: bc_b,
            ramp: ramp.clone(),
        };
        if let Err(e) = datum.validate() {
            errs.push(e.to_string());
        } else if let Some(g) = time {
            if datum.t_end() < g.t_final - 1e-12 {
                errs.push(format!(
                    "bc.ramp ends at {} but time.T = {}",
                    datum.t_end(),
                    g.t_final
                ));
            }
        }
    }

    let stagger = StaggerOptions {
        solve: SolveOptions {
            tol_slope: raw.solver.tol_slope.unwrap_or(1e-8),
            max_iter: raw.solver.max_iter.unwrap_or(200),
            ..Default::default()
        },
        tol_stag: raw.solver.tol_stag.unwrap_or(1e-9),
        max_inner: raw.solver.max_inner.unwrap_or(200),
        flow_dl: raw.solver.flow_dl.unwrap_or(0.05),
    };
    if !(stagger.solve.tol_slope > 0.0) {
        errs.push("solver.tol_slope must be > 0".into());
    }
    if !(stagger.tol_stag > 0.0) {
        errs.push("solver.tol_stag must be > 0".into());
    }
    if stagger.max_inner < 1 {
        errs.push("solver.max_inner must be >= 1".into());
    }
    if !(stagger.flow_dl > 0.0) {
        errs.push("solver.flow_dl must be > 0".into());
    }

    let z0 = raw.initial.z0.unwrap_or(1.0);
    if !(0.0..=1.0).contains(&z0) {
        errs.push(format!("initial.z0 must lie in [0, 1], got {z0}"));
    }
    let band = raw.initial.band.map(|b| {
        if !(0.0..=1.0).contains(&b.value) {
            errs.push(format!("initial.band.value must lie in [0, 1], got {}", b.value));
        }
        (b.value, [b.x_min, b.x_max, b.y_min, b.y_max])
    });

    let vtk_stride = raw.output.vtk_stride.unwrap_or(1);
    if vtk_stride == 0 {
        errs.push("output.vtk_stride must be >= 1".into());
    }

    // model validation on top of the field checks
    if errs.is_empty() {
        let rep = crate::model::validate_model(
            &material,
            &DegradationSpec {
                family: degradation,
                eta: material.eta,
            },
            &dissipation,
        );
        errs.extend(rep.failures());
    }

    if !errs.is_empty() {
        return Err(Error::Validation(errs));
    }

    Ok(Config {
        nx,
        ny,
        lx,
        ly,
        dirichlet,
        mesh_file: mesh.file,
        material,
        degradation,
        dissipation,
        bc_a,
        bc_b,
        ramp,
        time: time.expect("validated"),
        stagger,
        z0,
        band,
        mode: raw.parametrization.mode.unwrap_or(ParamMode::Chord),
        output_dir: raw.output.directory.unwrap_or_else(|| PathBuf::from("out")),
        write_csv: raw.output.csv.unwrap_or(true),
        vtk_stride,
    })
}
