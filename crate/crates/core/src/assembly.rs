//! Element-wise assembly of `a(w, v) = ∫ A∇w·∇v + b w v` and `(f, v)`.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, Vector2};

use crate::error::{Error, Result};
use crate::linalg::SymMatrix;
use crate::mesh::{barycentric, to_physical};
use crate::nnspace::NNElementSpace;
use crate::problem::EllipticProblem;
use crate::quadrature::{GaussRule1d, TriangleRule};

#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricSystem {
    pub a: SymMatrix,
    pub b: DVector<f64>,
}

impl SymmetricSystem {
    pub fn dim(&self) -> usize {
        self.b.len()
    }

    /// Plain-text dump: header `%%sym-dense v1`, the dimension, `N` rows of
    /// the full matrix, then the right-hand side on one line.
    pub fn dump_dense(&self) -> String {
        let n = self.dim();
        let mut s = String::from("%%sym-dense v1\n");
        writeln!(s, "{n}").unwrap();
        for i in 0..n {
            let row: Vec<String> = (0..n).map(|j| format!("{:.17e}", self.a.get(i, j))).collect();
            writeln!(s, "{}", row.join(" ")).unwrap();
        }
        let rhs: Vec<String> = self.b.iter().map(|v| format!("{v:.17e}")).collect();
        writeln!(s, "{}", rhs.join(" ")).unwrap();
        s
    }

    pub fn parse_dense(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::InvalidArgument(format!("sym-dense: {m}"));
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some("%%sym-dense v1") {
            return Err(bad("missing header"));
        }
        let n: usize = lines.next().and_then(|l| l.trim().parse().ok()).ok_or_else(|| bad("bad dimension"))?;
        let mut row = |len: usize| -> Result<Vec<f64>> {
            let vals: Vec<f64> = lines
                .next()
                .ok_or_else(|| bad("truncated"))?
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| bad("bad number")))
                .collect::<Result<_>>()?;
            if vals.len() != len {
                return Err(bad("wrong row length"));
            }
            Ok(vals)
        };
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n {
            for (j, v) in row(n)?.into_iter().enumerate() {
                a[(i, j)] = v;
            }
        }
        let b = DVector::from_vec(row(n)?);
        Ok(SymmetricSystem { a: SymMatrix::from_dense(&a)?, b })
    }
}

/// Sparsity pattern of the space: basis functions sharing a triangle.
pub fn basis_pattern(space: &NNElementSpace) -> Result<SymMatrix> {
    let groups: Vec<Vec<usize>> = (0..space.mesh.n_triangles()).map(|t| space.local_basis_indices(t)).collect();
    SymMatrix::from_groups(space.dim(), groups)
}

/// Assembles `A_mn = a(phi_n, phi_m)` and `B_m = (f, phi_m)` over the whole
/// space, free basis functions first.
pub fn assemble(space: &NNElementSpace, problem: &EllipticProblem, rule: &TriangleRule) -> Result<SymmetricSystem> {
    assemble_with_source(space, problem, rule, &*problem.source)
}

pub fn assemble_with_source(
    space: &NNElementSpace,
    problem: &EllipticProblem,
    rule: &TriangleRule,
    source: &dyn Fn(&nalgebra::Point2<f64>) -> f64,
) -> Result<SymmetricSystem> {
    let mesh = &space.mesh;
    let mut a = basis_pattern(space)?;
    let mut b = DVector::zeros(space.dim());
    let diff = problem.diffusion;
    let mut local = Vec::new();
    let mut vals = Vec::new();
    let mut flux: Vec<Vector2<f64>> = Vec::new();
    for t in 0..mesh.n_triangles() {
        let tri = mesh.triangle_vertices(t);
        let area2 = 2.0 * mesh.triangle_area(t);
        let idx = space.local_basis_indices(t);
        let k = idx.len();
        let mut ke = vec![0.0; k * k];
        let mut fe = vec![0.0; k];
        for (lam, &wq) in rule.points.iter().zip(&rule.weights) {
            let w = wq * area2;
            let x = to_physical(&tri, lam);
            let r = (problem.reaction)(&x);
            let fx = source(&x);
            space.eval_local(t, lam, &mut local, None);
            space.basis_values(&local, &mut vals);
            flux.clear();
            flux.extend(vals.iter().map(|v| diff * v.grad));
            for m in 0..k {
                fe[m] += w * fx * vals[m].value;
                for n in 0..=m {
                    let e = w * (flux[n].dot(&vals[m].grad) + r * vals[n].value * vals[m].value);
                    ke[m * k + n] += e;
                }
            }
        }
        for m in 0..k {
            b[idx[m]] += fe[m];
            for n in 0..=m {
                let e = ke[m * k + n];
                a.add(idx[m], idx[n], e)?;
                if n != m {
                    a.add(idx[n], idx[m], e)?;
                }
            }
        }
    }
    Ok(SymmetricSystem { a, b })
}

/// Replaces rows and columns `indices` by identity rows with zero load.
pub fn apply_homogeneous_dirichlet(system: &SymmetricSystem, indices: &[usize]) -> Result<SymmetricSystem> {
    let mut out = system.clone();
    for &i in indices {
        out.a.constrain(i)?;
        out.b[i] = 0.0;
    }
    Ok(out)
}

/// Pieces of the two-stage boundary procedure.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundarySystem {
    /// Boundary mass matrix `D_ij = (psi_j, psi_i)` over boundary edges.
    pub d: DMatrix<f64>,
    /// `G_i = (g, psi_i)` over boundary edges.
    pub g: DVector<f64>,
    /// `coupling[(i, j)] = a(psi_j^bd, psi_i^in)`, interior rows.
    pub coupling: DMatrix<f64>,
}

/// Boundary mass system and interior/boundary coupling block for a space
/// built with `BoundaryCondition::Nonhomogeneous`.
pub fn assemble_boundary_system(
    space: &NNElementSpace,
    problem: &EllipticProblem,
    rule_1d: &GaussRule1d,
    rule: &TriangleRule,
) -> Result<BoundarySystem> {
    let (v, gs) = boundary_samples(space, problem, rule_1d)?;
    let d = v.tr_mul(&v);
    let g = v.tr_mul(&gs);
    let n_in = space.n_free_basis();
    let full = assemble(space, problem, rule)?;
    let coupling = full.a.block(0..n_in, n_in..space.dim());
    Ok(BoundarySystem { d, g, coupling })
}

/// Boundary basis values and Dirichlet data at the edge Gauss points, rows
/// scaled by the square root of the quadrature weight, so that
/// `D = V^T V` and `G = V^T g`.
pub fn boundary_samples(
    space: &NNElementSpace,
    problem: &EllipticProblem,
    rule_1d: &GaussRule1d,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let g = problem
        .dirichlet
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("problem has no Dirichlet data".into()))?;
    let mesh = &space.mesh;
    let n_in = space.n_free_basis();
    let n_bd = space.dim() - n_in;
    let n_edges = mesh.boundary_edge.iter().filter(|&&b| b).count();
    let mut v = DMatrix::zeros(n_edges * rule_1d.len(), n_bd);
    let mut gs = DVector::zeros(n_edges * rule_1d.len());
    let mut local = Vec::new();
    let mut vals = Vec::new();
    let mut row = 0;
    for (e, edge) in mesh.edges.iter().enumerate() {
        if !mesh.boundary_edge[e] {
            continue;
        }
        let t = edge.triangles[0];
        let tri = mesh.triangle_vertices(t);
        let (p0, p1) = (mesh.vertices[edge.vertices[0]], mesh.vertices[edge.vertices[1]]);
        let len = (p1 - p0).norm();
        for (&s, &ws) in rule_1d.nodes.iter().zip(&rule_1d.weights) {
            let x = p0 + (p1 - p0) * s;
            let lam = barycentric(&tri, &x)?;
            space.eval_local(t, &lam, &mut local, None);
            space.basis_values(&local, &mut vals);
            let w = (ws * len).sqrt();
            gs[row] = w * g(&x);
            for bi in vals.iter().filter(|v| v.index >= n_in) {
                v[(row, bi.index - n_in)] = w * bi.value;
            }
            row += 1;
        }
    }
    Ok((v, gs))
}
