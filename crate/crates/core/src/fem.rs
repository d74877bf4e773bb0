//! Structured P1 triangle meshes on a rectangle, constant element strains,
//! and the H1 / lumped-L2 inner products the solvers run in.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use sprs::CsMat;

use crate::linalg::{self, SpdFactor};
use crate::{Error, Result};

/// Sides of the rectangle, used for boundary tagging and Dirichlet specs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Left, Side::Right, Side::Bottom, Side::Top];

    fn bit(self) -> u8 {
        match self {
            Side::Left => 1,
            Side::Right => 2,
            Side::Bottom => 4,
            Side::Top => 8,
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Side::Left => "left",
            Side::Right => "right",
            Side::Bottom => "bottom",
            Side::Top => "top",
        };
        f.write_str(s)
    }
}

/// Displacement components constrained on a side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Comp {
    X,
    Y,
    Both,
}

/// Which sides carry Dirichlet conditions, per component.
#[derive(Debug, Clone, Default, serde::Serialize, serde::Deserialize)]
pub struct DirichletSpec {
    pub entries: Vec<(Side, Comp)>,
}

impl DirichletSpec {
    pub fn all_sides_both() -> Self {
        Self {
            entries: Side::ALL.iter().map(|&s| (s, Comp::Both)).collect(),
        }
    }

    pub fn sides_both(sides: &[Side]) -> Self {
        Self {
            entries: sides.iter().map(|&s| (s, Comp::Both)).collect(),
        }
    }
}

/// Symmetric 2x2 strain tensor; `e12` stores the off-diagonal entry once.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Strain2 {
    pub e11: f64,
    pub e22: f64,
    pub e12: f64,
}

impl Strain2 {
    pub const ZERO: Strain2 = Strain2 {
        e11: 0.0,
        e22: 0.0,
        e12: 0.0,
    };

    pub fn new(e11: f64, e22: f64, e12: f64) -> Self {
        Self { e11, e22, e12 }
    }

    /// Multiple of the identity: c * I.
    pub fn spherical(c: f64) -> Self {
        Self::new(c, c, 0.0)
    }

    pub fn trace(&self) -> f64 {
        self.e11 + self.e22
    }

    /// Squared Frobenius norm, counting the off-diagonal entry twice.
    pub fn norm_sq(&self) -> f64 {
        self.e11 * self.e11 + self.e22 * self.e22 + 2.0 * self.e12 * self.e12
    }

    /// Frobenius inner product A : B.
    pub fn inner(&self, o: &Strain2) -> f64 {
        self.e11 * o.e11 + self.e22 * o.e22 + 2.0 * self.e12 * o.e12
    }

    pub fn add(&self, o: &Strain2) -> Strain2 {
        Strain2::new(self.e11 + o.e11, self.e22 + o.e22, self.e12 + o.e12)
    }

    pub fn sub(&self, o: &Strain2) -> Strain2 {
        Strain2::new(self.e11 - o.e11, self.e22 - o.e22, self.e12 - o.e12)
    }

    pub fn scale(&self, c: f64) -> Strain2 {
        Strain2::new(c * self.e11, c * self.e22, c * self.e12)
    }
}

/// Triangulated rectangle with boundary tags and Dirichlet dof bookkeeping.
///
/// Node numbering is row-major: node `j*(nx+1)+i` sits at `(i*lx/nx, j*ly/ny)`.
/// Each cell is split along its lower-left to upper-right diagonal.
/// Displacement dofs are interleaved: dof `2*node + comp`.
#[derive(Debug, Clone)]
pub struct Mesh {
    pub nodes: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    /// Bitmask of `Side`s each node lies on (0 for interior nodes).
    pub boundary_tags: Vec<u8>,
    /// Constrained (node, component) pairs, component in {0, 1}.
    pub dirichlet_u: BTreeSet<(usize, usize)>,
    /// Full u-dof indices that are unconstrained, in increasing order.
    pub free_dofs: Vec<usize>,
    /// Inverse map: full u-dof index -> position in `free_dofs`.
    pub full_to_free: Vec<Option<usize>>,
    /// Element areas (strictly positive).
    pub areas: Vec<f64>,
    /// Gradients of the three barycentric shape functions per element.
    pub shape_grads: Vec<[[f64; 2]; 3]>,
    pub lx: f64,
    pub ly: f64,
}

impl Mesh {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn element_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn n_udofs(&self) -> usize {
        2 * self.nodes.len()
    }

    pub fn on_side(&self, node: usize, side: Side) -> bool {
        self.boundary_tags[node] & side.bit() != 0
    }

    /// Restrict a full u-field to the free dofs.
    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.free_dofs.iter().map(|&d| full[d]).collect()
    }

    /// Scatter a free-dof vector into a full u-field (zero on Dirichlet dofs).
    pub fn prolong(&self, free: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.n_udofs()];
        for (k, &d) in self.free_dofs.iter().enumerate() {
            full[d] = free[k];
        }
        full
    }

    fn finish(
        nodes: Vec<[f64; 2]>,
        triangles: Vec<[usize; 3]>,
        origin: [f64; 2],
        lx: f64,
        ly: f64,
        dirichlet: &DirichletSpec,
    ) -> Result<Mesh> {
        let n = nodes.len();
        let mut boundary_tags = vec![0u8; n];
        let tol = 1e-12 * (lx.max(ly)).max(1.0);
        for (i, p) in nodes.iter().enumerate() {
            if (p[0] - origin[0]).abs() <= tol {
                boundary_tags[i] |= Side::Left.bit();
            }
            if (p[0] - origin[0] - lx).abs() <= tol {
                boundary_tags[i] |= Side::Right.bit();
            }
            if (p[1] - origin[1]).abs() <= tol {
                boundary_tags[i] |= Side::Bottom.bit();
            }
            if (p[1] - origin[1] - ly).abs() <= tol {
                boundary_tags[i] |= Side::Top.bit();
            }
        }

        if dirichlet.entries.is_empty() {
            return Err(Error::Config(
                "Dirichlet specification is empty: rigid motions are unconstrained".into(),
            ));
        }
        let mut dirichlet_u = BTreeSet::new();
        for &(side, comp) in &dirichlet.entries {
            for node in 0..n {
                if boundary_tags[node] & side.bit() != 0 {
                    match comp {
                        Comp::X => {
                            dirichlet_u.insert((node, 0));
                        }
                        Comp::Y => {
                            dirichlet_u.insert((node, 1));
                        }
                        Comp::Both => {
                            dirichlet_u.insert((node, 0));
                            dirichlet_u.insert((node, 1));
                        }
                    }
                }
            }
        }
        if dirichlet_u.is_empty() {
            return Err(Error::Config(
                "Dirichlet specification selects no nodes".into(),
            ));
        }

        let mut areas = Vec::with_capacity(triangles.len());
        let mut shape_grads = Vec::with_capacity(triangles.len());
        for (e, tri) in triangles.iter().enumerate() {
            for &v in tri {
                if v >= n {
                    return Err(Error::Config(format!(
                        "triangle {e} references node {v} out of range {n}"
                    )));
                }
            }
            let p0 = nodes[tri[0]];
            let p1 = nodes[tri[1]];
            let p2 = nodes[tri[2]];
            let det = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
            if det <= 0.0 {
                return Err(Error::Config(format!(
                    "triangle {e} has non-positive signed area {}",
                    det / 2.0
                )));
            }
            areas.push(det / 2.0);
            // grad of barycentric k: rotate the opposite edge by 90 degrees / det
            let g = |a: [f64; 2], b: [f64; 2]| [(a[1] - b[1]) / det, (b[0] - a[0]) / det];
            shape_grads.push([g(p1, p2), g(p2, p0), g(p0, p1)]);
        }
        let area_sum: f64 = areas.iter().sum();
        if (area_sum - lx * ly).abs() > 1e-12 * lx * ly {
            return Err(Error::Config(format!(
                "triangles do not tile the rectangle: area sum {area_sum} vs {}",
                lx * ly
            )));
        }

        let mut free_dofs = Vec::new();
        let mut full_to_free = vec![None; 2 * n];
        for node in 0..n {
            for comp in 0..2 {
                if !dirichlet_u.contains(&(node, comp)) {
                    full_to_free[2 * node + comp] = Some(free_dofs.len());
                    free_dofs.push(2 * node + comp);
                }
            }
        }

        Ok(Mesh {
            nodes,
            triangles,
            boundary_tags,
            dirichlet_u,
            free_dofs,
            full_to_free,
            areas,
            shape_grads,
            lx,
            ly,
        })
    }

    /// Reads the plain-text mesh format documented in the README:
    /// a node count line, one `x y` line per node, an element count line,
    /// one `i j k` line per triangle (0-based, counterclockwise).
    /// Boundary tags are recovered from the bounding box.
    pub fn from_ascii(path: &Path, dirichlet: &DirichletSpec) -> Result<Mesh> {
        let text = std::fs::read_to_string(path)?;
        let mut tokens = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or(""))
            .flat_map(|l| l.split_whitespace())
            .map(String::from)
            .collect::<Vec<_>>()
            .into_iter();
        let mut next = |what: &str| -> Result<String> {
            tokens
                .next()
                .ok_or_else(|| Error::Config(format!("mesh file ended while reading {what}")))
        };
        let nn: usize = next("node count")?
            .parse()
            .map_err(|e| Error::Config(format!("bad node count: {e}")))?;
        let mut nodes = Vec::with_capacity(nn);
        for i in 0..nn {
            let x: f64 = next("node x")?
                .parse()
                .map_err(|e| Error::Config(format!("node {i}: bad x: {e}")))?;
            let y: f64 = next("node y")?
                .parse()
                .map_err(|e| Error::Config(format!("node {i}: bad y: {e}")))?;
            nodes.push([x, y]);
        }
        let ne: usize = next("element count")?
            .parse()
            .map_err(|e| Error::Config(format!("bad element count: {e}")))?;
        let mut triangles = Vec::with_capacity(ne);
        for e in 0..ne {
            let mut tri = [0usize; 3];
            for t in &mut tri {
                *t = next("element index")?
                    .parse()
                    .map_err(|er| Error::Config(format!("element {e}: bad index: {er}")))?;
            }
            triangles.push(tri);
        }
        if nodes.is_empty() {
            return Err(Error::Config("mesh file has no nodes".into()));
        }
        let xmin = nodes.iter().map(|p| p[0]).fold(f64::MAX, f64::min);
        let xmax = nodes.iter().map(|p| p[0]).fold(f64::MIN, f64::max);
        let ymin = nodes.iter().map(|p| p[1]).fold(f64::MAX, f64::min);
        let ymax = nodes.iter().map(|p| p[1]).fold(f64::MIN, f64::max);
        Mesh::finish(
            nodes,
            triangles,
            [xmin, ymin],
            xmax - xmin,
            ymax - ymin,
            dirichlet,
        )
    }
}

/// Builds the structured triangulation of the `lx` x `ly` rectangle with
/// `nx` x `ny` cells, each split along its lower-left to upper-right diagonal.
pub fn build_rect_mesh(
    nx: usize,
    ny: usize,
    lx: f64,
    ly: f64,
    dirichlet: &DirichletSpec,
) -> Result<Mesh> {
    if nx < 1 || ny < 1 {
        return Err(Error::Config(format!(
            "mesh subdivisions must be >= 1, got {nx} x {ny}"
        )));
    }
    if !(lx > 0.0) || !(ly > 0.0) {
        return Err(Error::Config(format!(
            "rectangle sides must be positive, got {lx} x {ly}"
        )));
    }
    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            nodes.push([lx * i as f64 / nx as f64, ly * j as f64 / ny as f64]);
        }
    }
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let n00 = j * (nx + 1) + i;
            let n10 = n00 + 1;
            let n01 = n00 + (nx + 1);
            let n11 = n01 + 1;
            triangles.push([n00, n10, n11]);
            triangles.push([n00, n11, n01]);
        }
    }
    Mesh::finish(nodes, triangles, [0.0, 0.0], lx, ly, dirichlet)
}

/// Constant strain of the P1 interpolant of a nodal 2-vector field on one
/// triangle. `field` is a full-length u-field (2 entries per node).
pub fn element_strain(mesh: &Mesh, field: &[f64], tri: usize) -> Result<Strain2> {
    if field.len() != mesh.n_udofs() {
        return Err(Error::SizeMismatch(format!(
            "field has {} entries, expected {}",
            field.len(),
            mesh.n_udofs()
        )));
    }
    if tri >= mesh.triangles.len() {
        return Err(Error::SizeMismatch(format!(
            "triangle {tri} out of range {}",
            mesh.triangles.len()
        )));
    }
    Ok(element_strain_unchecked(mesh, field, tri))
}

#[inline]
pub(crate) fn element_strain_unchecked(mesh: &Mesh, field: &[f64], tri: usize) -> Strain2 {
    let t = &mesh.triangles[tri];
    let g = &mesh.shape_grads[tri];
    let mut du = [[0.0f64; 2]; 2]; // du[c][d] = d u_c / d x_d
    for k in 0..3 {
        let ux = field[2 * t[k]];
        let uy = field[2 * t[k] + 1];
        du[0][0] += ux * g[k][0];
        du[0][1] += ux * g[k][1];
        du[1][0] += uy * g[k][0];
        du[1][1] += uy * g[k][1];
    }
    Strain2::new(du[0][0], du[1][1], 0.5 * (du[0][1] + du[1][0]))
}

/// The inner-product operators shared by every solver:
/// full H1 form on free u-dofs, lumped L2 mass and P1 stiffness on z-nodes.
pub struct InnerProducts {
    /// `int u.v + grad u : grad v` restricted to free u-dofs.
    pub h1_matrix: CsMat<f64>,
    /// Prefactored `h1_matrix`; reused by every slope evaluation.
    pub h1_factor: SpdFactor,
    /// Row sums of the consistent P1 mass matrix; sums to the domain area.
    pub lumped_mass: Vec<f64>,
    /// `int grad z . grad w` on all z-nodes (constants in the kernel).
    pub stiffness_z: CsMat<f64>,
}

impl InnerProducts {
    /// H1 norm of a full u-field that vanishes on the Dirichlet dofs.
    pub fn h1_norm(&self, mesh: &Mesh, full: &[f64]) -> f64 {
        let w = mesh.restrict(full);
        linalg::quad_form(&self.h1_matrix, &w, &w).max(0.0).sqrt()
    }

    /// Lumped L2 norm of a nodal scalar field.
    pub fn l2_lumped_norm(&self, z: &[f64]) -> f64 {
        z.iter()
            .zip(&self.lumped_mass)
            .map(|(zi, mi)| mi * zi * zi)
            .sum::<f64>()
            .max(0.0)
            .sqrt()
    }
}

/// Assembles the H1 matrix (free u-dofs), the lumped mass vector and the
/// z-stiffness matrix for a mesh.
pub fn assemble_inner_products(mesh: &Mesh) -> Result<InnerProducts> {
    let n = mesh.node_count();
    let mut mass_trip = Vec::new();
    let mut stiff_trip = Vec::new();
    for (e, tri) in mesh.triangles.iter().enumerate() {
        let a = mesh.areas[e];
        let g = &mesh.shape_grads[e];
        for i in 0..3 {
            for j in 0..3 {
                let m = if i == j { a / 6.0 } else { a / 12.0 };
                mass_trip.push((tri[i], tri[j], m));
                let k = a * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
                stiff_trip.push((tri[i], tri[j], k));
            }
        }
    }
    let mass = linalg::csr_from_triplets(n, &mass_trip);
    let stiffness_z = linalg::csr_from_triplets(n, &stiff_trip);

    let mut lumped_mass = vec![0.0; n];
    for (row, vec) in mass.outer_iterator().enumerate() {
        lumped_mass[row] = vec.iter().map(|(_, &v)| v).sum();
    }
    if lumped_mass.iter().any(|&m| !(m > 0.0)) {
        return Err(Error::Invariant("lumped mass has a non-positive entry".into()));
    }

    // vector H1 form: (M + K) per displacement component, no cross coupling
    let nfree = mesh.free_dofs.len();
    let mut h1_trip = Vec::new();
    for (row, (mvec, kvec)) in mass
        .outer_iterator()
        .zip(stiffness_z.outer_iterator())
        .enumerate()
    {
        // mass and stiffness share the P1 sparsity pattern
        for ((col, &mv), (_, &kv)) in mvec.iter().zip(kvec.iter()) {
            for comp in 0..2 {
                let (r, c) = (2 * row + comp, 2 * col + comp);
                if let (Some(fr), Some(fc)) = (mesh.full_to_free[r], mesh.full_to_free[c]) {
                    h1_trip.push((fr, fc, mv + kv));
                }
            }
        }
    }
    let h1_matrix = linalg::csr_from_triplets(nfree, &h1_trip);
    if linalg::asymmetry(&h1_matrix) > 1e-14 {
        return Err(Error::Invariant("H1 matrix is not symmetric".into()));
    }
    let h1_factor = SpdFactor::new(&h1_matrix)?;

    Ok(InnerProducts {
        h1_matrix,
        h1_factor,
        lumped_mass,
        stiffness_z,
    })
}
