//! Piecewise-polynomial envelope functions and their degrees of freedom.
//!
//! Two families are supported. The hierarchical family attaches `lambda_1`
//! to each vertex patch, `lambda_2 lambda_3` to each edge patch and the
//! cubic bubble `lambda_1 lambda_2 lambda_3` to each triangle. The Lagrange
//! family of order `k` is the usual nodal basis.

use nalgebra::{Point2, Vector2};

use crate::error::{Error, Result};
use crate::mesh::{barycentric, barycentric_gradients, build_patches, Mesh, Patch};
use crate::quadrature::TriangleRule;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvelopeFamily {
    Hierarchical { bubbles: bool },
    Lagrange { order: usize },
}

impl EnvelopeFamily {
    pub fn hierarchical() -> Self {
        EnvelopeFamily::Hierarchical { bubbles: true }
    }

    pub fn lagrange(order: usize) -> Result<Self> {
        if !(1..=3).contains(&order) {
            return Err(Error::InvalidArgument(format!("Lagrange order must be 1, 2 or 3, got {order}")));
        }
        Ok(EnvelopeFamily::Lagrange { order })
    }

    /// Short label used in reports, e.g. `P2` or `H`.
    pub fn label(&self) -> String {
        match self {
            EnvelopeFamily::Hierarchical { bubbles: true } => "H".into(),
            EnvelopeFamily::Hierarchical { bubbles: false } => "H-nobubble".into(),
            EnvelopeFamily::Lagrange { order } => format!("P{order}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryCondition {
    /// Boundary-carried dofs are dropped.
    Homogeneous,
    /// Boundary-carried dofs are kept in a separate list.
    Nonhomogeneous,
    /// Every dof is kept.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Carrier {
    Vertex(usize),
    Edge { edge: usize, node: usize },
    Triangle { triangle: usize, node: usize },
}

/// Restriction of an envelope to one triangle, in that triangle's local
/// vertex numbering.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LocalShape {
    Linear(usize),
    EdgeProduct(usize, usize),
    Bubble,
    /// Nodal Lagrange function with barycentric multi-index summing to `order`.
    Lagrange { order: u8, index: [u8; 3] },
}

impl LocalShape {
    pub fn value(&self, lam: &[f64; 3]) -> f64 {
        match *self {
            LocalShape::Linear(a) => lam[a],
            LocalShape::EdgeProduct(a, b) => lam[a] * lam[b],
            LocalShape::Bubble => lam[0] * lam[1] * lam[2],
            LocalShape::Lagrange { order, index } => {
                let k = order as f64;
                (0..3).map(|m| lagrange_factor(k, index[m], lam[m]).0).product()
            }
        }
    }

    /// Value and gradient given the triangle's barycentric gradients.
    pub fn value_grad(&self, lam: &[f64; 3], dlam: &[Vector2<f64>; 3]) -> (f64, Vector2<f64>) {
        match *self {
            LocalShape::Linear(a) => (lam[a], dlam[a]),
            LocalShape::EdgeProduct(a, b) => (lam[a] * lam[b], dlam[a] * lam[b] + dlam[b] * lam[a]),
            LocalShape::Bubble => (
                lam[0] * lam[1] * lam[2],
                dlam[0] * (lam[1] * lam[2]) + dlam[1] * (lam[0] * lam[2]) + dlam[2] * (lam[0] * lam[1]),
            ),
            LocalShape::Lagrange { order, index } => {
                let k = order as f64;
                let f: [(f64, f64); 3] = std::array::from_fn(|m| lagrange_factor(k, index[m], lam[m]));
                let value = f[0].0 * f[1].0 * f[2].0;
                let grad = dlam[0] * (f[0].1 * f[1].0 * f[2].0)
                    + dlam[1] * (f[0].0 * f[1].1 * f[2].0)
                    + dlam[2] * (f[0].0 * f[1].0 * f[2].1);
                (value, grad)
            }
        }
    }
}

/// `prod_{j < i} (k l - j) / (j + 1)` and its derivative in `l`.
fn lagrange_factor(k: f64, i: u8, l: f64) -> (f64, f64) {
    let mut value = 1.0;
    let mut deriv = 0.0;
    for j in 0..i {
        let jf = j as f64;
        let term = (k * l - jf) / (jf + 1.0);
        deriv = deriv * term + value * k / (jf + 1.0);
        value *= term;
    }
    (value, deriv)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DofDescriptor {
    /// Position within its list (free or boundary).
    pub index: usize,
    pub carrier: Carrier,
    /// Carrier location: vertex, edge midpoint or node, centroid.
    pub position: Point2<f64>,
    pub support: Patch,
    pub on_dirichlet_boundary: bool,
    /// One local shape per support triangle, same order as `support.members`.
    pub shapes: Vec<(usize, LocalShape)>,
}

impl DofDescriptor {
    pub fn shape_on(&self, triangle: usize) -> Option<LocalShape> {
        self.shapes.iter().find(|(t, _)| *t == triangle).map(|(_, s)| *s)
    }
}

/// Dofs split according to the boundary condition.
#[derive(Debug, Clone, PartialEq)]
pub struct DofSet {
    pub family: EnvelopeFamily,
    pub bc: BoundaryCondition,
    /// Dofs that carry unknowns of the interior problem.
    pub free: Vec<DofDescriptor>,
    /// Boundary dofs, non-empty only for `Nonhomogeneous`.
    pub boundary: Vec<DofDescriptor>,
}

impl DofSet {
    pub fn len(&self) -> usize {
        self.free.len() + self.boundary.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Free dofs followed by boundary dofs.
    pub fn all(&self) -> impl Iterator<Item = &DofDescriptor> {
        self.free.iter().chain(self.boundary.iter())
    }
}

/// Enumerates envelope dofs in the order vertices, edges, triangles, each
/// ascending by mesh index and then by node index.
pub fn enumerate_dofs(mesh: &Mesh, family: EnvelopeFamily, bc: BoundaryCondition) -> DofSet {
    let patches = build_patches(mesh);
    let mut all: Vec<DofDescriptor> = Vec::new();

    match family {
        EnvelopeFamily::Hierarchical { bubbles } => {
            for (v, patch) in patches.vertex.iter().enumerate() {
                all.push(DofDescriptor {
                    index: 0,
                    carrier: Carrier::Vertex(v),
                    position: mesh.vertices[v],
                    shapes: patch.members.iter().map(|m| (m.triangle, LocalShape::Linear(m.local[0]))).collect(),
                    support: patch.clone(),
                    on_dirichlet_boundary: mesh.boundary_vertex[v],
                });
            }
            for (e, patch) in patches.edge.iter().enumerate() {
                let [a, b] = mesh.edges[e].vertices;
                all.push(DofDescriptor {
                    index: 0,
                    carrier: Carrier::Edge { edge: e, node: 0 },
                    position: Point2::from((mesh.vertices[a].coords + mesh.vertices[b].coords) * 0.5),
                    shapes: patch
                        .members
                        .iter()
                        .map(|m| (m.triangle, LocalShape::EdgeProduct(m.local[1], m.local[2])))
                        .collect(),
                    support: patch.clone(),
                    on_dirichlet_boundary: mesh.boundary_edge[e],
                });
            }
            if bubbles {
                for (t, patch) in patches.element.iter().enumerate() {
                    let [a, b, c] = mesh.triangle_vertices(t);
                    all.push(DofDescriptor {
                        index: 0,
                        carrier: Carrier::Triangle { triangle: t, node: 0 },
                        position: Point2::from((a.coords + b.coords + c.coords) / 3.0),
                        shapes: vec![(t, LocalShape::Bubble)],
                        support: patch.clone(),
                        on_dirichlet_boundary: false,
                    });
                }
            }
        }
        EnvelopeFamily::Lagrange { order } => {
            let k = order;
            let node_dof = |carrier: Carrier, position: Point2<f64>, patch: &Patch, boundary: bool| {
                let shapes = patch
                    .members
                    .iter()
                    .map(|m| {
                        let lam = barycentric(&mesh.triangle_vertices(m.triangle), &position)
                            .expect("mesh triangles are non-degenerate");
                        let index = lam.map(|l| (l * k as f64).round().max(0.0) as u8);
                        (m.triangle, LocalShape::Lagrange { order: k as u8, index })
                    })
                    .collect();
                DofDescriptor {
                    index: 0,
                    carrier,
                    position,
                    shapes,
                    support: patch.clone(),
                    on_dirichlet_boundary: boundary,
                }
            };
            for (v, patch) in patches.vertex.iter().enumerate() {
                all.push(node_dof(Carrier::Vertex(v), mesh.vertices[v], patch, mesh.boundary_vertex[v]));
            }
            for (e, patch) in patches.edge.iter().enumerate() {
                let [a, b] = mesh.edges[e].vertices;
                let pa = mesh.vertices[a];
                let pb = mesh.vertices[b];
                for node in 1..k {
                    let s = node as f64 / k as f64;
                    let p = pa + (pb - pa) * s;
                    all.push(node_dof(Carrier::Edge { edge: e, node: node - 1 }, p, patch, mesh.boundary_edge[e]));
                }
            }
            for (t, patch) in patches.element.iter().enumerate() {
                let v = mesh.triangle_vertices(t);
                let mut node = 0;
                for i in 1..k {
                    for j in 1..(k - i) {
                        let l = k - i - j;
                        let lam = [i as f64 / k as f64, j as f64 / k as f64, l as f64 / k as f64];
                        let p = crate::mesh::to_physical(&v, &lam);
                        all.push(node_dof(Carrier::Triangle { triangle: t, node }, p, patch, false));
                        node += 1;
                    }
                }
            }
        }
    }

    let (mut free, mut boundary): (Vec<_>, Vec<_>) = match bc {
        BoundaryCondition::None => (all, Vec::new()),
        BoundaryCondition::Homogeneous => (all.into_iter().filter(|d| !d.on_dirichlet_boundary).collect(), Vec::new()),
        BoundaryCondition::Nonhomogeneous => all.into_iter().partition(|d| !d.on_dirichlet_boundary),
    };
    for (i, d) in free.iter_mut().enumerate() {
        d.index = i;
    }
    for (i, d) in boundary.iter_mut().enumerate() {
        d.index = i;
    }
    DofSet { family, bc, free, boundary }
}

/// For each triangle, the `(position in dofs, local shape)` pairs active on it.
pub fn element_dof_map<'a>(
    mesh: &Mesh,
    dofs: impl IntoIterator<Item = &'a DofDescriptor>,
) -> Vec<Vec<(usize, LocalShape)>> {
    let mut map = vec![Vec::new(); mesh.n_triangles()];
    for (i, d) in dofs.into_iter().enumerate() {
        for &(t, shape) in &d.shapes {
            map[t].push((i, shape));
        }
    }
    map
}

/// Envelope value at a barycentric point of `triangle`; zero off the support.
pub fn envelope_eval(dof: &DofDescriptor, triangle: usize, lam: &[f64; 3]) -> f64 {
    dof.shape_on(triangle).map_or(0.0, |s| s.value(lam))
}

/// Envelope gradient at a barycentric point of `triangle`; zero off the support.
pub fn envelope_grad(mesh: &Mesh, dof: &DofDescriptor, triangle: usize, lam: &[f64; 3]) -> Vector2<f64> {
    match dof.shape_on(triangle) {
        Some(s) => {
            let dlam = barycentric_gradients(&mesh.triangle_vertices(triangle)).expect("valid mesh");
            s.value_grad(lam, &dlam).1
        }
        None => Vector2::zeros(),
    }
}

/// Maximum over triangles of the number of dof supports containing it.
pub fn overlap_bound<'a>(mesh: &Mesh, dofs: impl IntoIterator<Item = &'a DofDescriptor>) -> usize {
    element_dof_map(mesh, dofs).iter().map(Vec::len).max().unwrap_or(0)
}

/// Partition functions `psi_i = phi_i / sum_j phi_j` over the full dof set.
pub struct PartitionOfUnity<'m> {
    mesh: &'m Mesh,
    pub dofs: Vec<DofDescriptor>,
    element_map: Vec<Vec<(usize, LocalShape)>>,
}

/// Denominator threshold below which the partition functions are not evaluated.
pub const POU_DENOMINATOR_TOLERANCE: f64 = 1e-12;

pub fn partition_functions(mesh: &Mesh, family: EnvelopeFamily) -> PartitionOfUnity<'_> {
    let dofs = enumerate_dofs(mesh, family, BoundaryCondition::None).free;
    let element_map = element_dof_map(mesh, &dofs);
    PartitionOfUnity { mesh, dofs, element_map }
}

impl PartitionOfUnity<'_> {
    /// Nonzero `(dof, psi)` pairs on `triangle` at `lam`.
    pub fn eval(&self, triangle: usize, lam: &[f64; 3]) -> Result<Vec<(usize, f64)>> {
        let local = &self.element_map[triangle];
        let values: Vec<f64> = local.iter().map(|(_, s)| s.value(lam)).collect();
        let denominator: f64 = values.iter().sum();
        if denominator.abs() < POU_DENOMINATOR_TOLERANCE {
            return Err(Error::DegeneratePoint { denominator });
        }
        Ok(local.iter().zip(values).map(|((i, _), v)| (*i, v / denominator)).collect())
    }

    /// Nonzero `(dof, psi, grad psi)` triples on `triangle` at `lam`.
    pub fn eval_grad(&self, triangle: usize, lam: &[f64; 3]) -> Result<Vec<(usize, f64, Vector2<f64>)>> {
        let dlam = barycentric_gradients(&self.mesh.triangle_vertices(triangle))?;
        let local = &self.element_map[triangle];
        let vg: Vec<(f64, Vector2<f64>)> = local.iter().map(|(_, s)| s.value_grad(lam, &dlam)).collect();
        let s: f64 = vg.iter().map(|p| p.0).sum();
        let ds: Vector2<f64> = vg.iter().map(|p| p.1).sum();
        if s.abs() < POU_DENOMINATOR_TOLERANCE {
            return Err(Error::DegeneratePoint { denominator: s });
        }
        Ok(local
            .iter()
            .zip(vg)
            .map(|((i, _), (v, g))| (*i, v / s, (g * s - ds * v) / (s * s)))
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PouConstants {
    /// Overlap bound.
    pub overlap: usize,
    /// Max of |psi_i| over quadrature points.
    pub c_inf: f64,
    /// Max over i of diam(Omega_i) times the sampled max of |grad psi_i|.
    pub c_grad: f64,
}

pub fn pou_constants(mesh: &Mesh, family: EnvelopeFamily, rule: &TriangleRule) -> Result<PouConstants> {
    let pou = partition_functions(mesh, family);
    let overlap = overlap_bound(mesh, &pou.dofs);
    let mut c_inf: f64 = 0.0;
    let mut grad_max = vec![0.0f64; pou.dofs.len()];
    for t in 0..mesh.n_triangles() {
        for lam in &rule.points {
            for (i, psi, g) in pou.eval_grad(t, lam)? {
                c_inf = c_inf.max(psi.abs());
                grad_max[i] = grad_max[i].max(g.norm());
            }
        }
    }
    let c_grad = pou
        .dofs
        .iter()
        .zip(&grad_max)
        .map(|(d, g)| d.support.diameter * g)
        .fold(0.0, f64::max);
    Ok(PouConstants { overlap, c_inf, c_grad })
}
