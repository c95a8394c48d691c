//! Error norms, the finite element baseline, convergence studies and mesh /
//! partition diagnostics.

use std::sync::Arc;
use std::time::Instant;

use nalgebra::DVector;

use crate::envelope::{pou_constants, BoundaryCondition, EnvelopeFamily};
use crate::error::{Error, Result};
use crate::localnet::NetConfig;
use crate::mesh::{to_physical, Mesh};
use crate::nnspace::NNElementSpace;
use crate::problem::EllipticProblem;
use crate::quadrature::TriangleRule;
use crate::solver::{train, Solution, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorReport {
    pub e_l2: f64,
    /// H1 seminorm of the error.
    pub e_h1: f64,
    pub h: f64,
    pub n: usize,
    pub steps: usize,
    pub seconds: f64,
}

/// `||u - Psi||_L2` and `|u - Psi|_H1` by mesh quadrature.
pub fn compute_errors(solution: &Solution, problem: &EllipticProblem, rule: &TriangleRule) -> Result<ErrorReport> {
    compute_errors_of(&solution.space, &solution.c, problem, rule)
}

pub fn compute_errors_of(
    space: &NNElementSpace,
    c: &DVector<f64>,
    problem: &EllipticProblem,
    rule: &TriangleRule,
) -> Result<ErrorReport> {
    let (u, gu) = match (&problem.exact, &problem.exact_grad) {
        (Some(u), Some(g)) => (u, g),
        _ => return Err(Error::MissingExactSolution),
    };
    if c.len() != space.dim() {
        return Err(Error::DimensionMismatch { expected: space.dim(), got: c.len() });
    }
    let mesh = &space.mesh;
    let mut l2 = 0.0;
    let mut h1 = 0.0;
    let mut local = Vec::new();
    let mut vals = Vec::new();
    for t in 0..mesh.n_triangles() {
        let tri = mesh.triangle_vertices(t);
        let area2 = 2.0 * mesh.triangle_area(t);
        for (lam, &wq) in rule.points.iter().zip(&rule.weights) {
            let x = to_physical(&tri, lam);
            space.eval_local(t, lam, &mut local, None);
            space.basis_values(&local, &mut vals);
            let (v, g) = vals
                .iter()
                .fold((0.0, nalgebra::Vector2::zeros()), |(v, g), b| (v + c[b.index] * b.value, g + b.grad * c[b.index]));
            let w = wq * area2;
            l2 += w * (u(&x) - v).powi(2);
            h1 += w * (gu(&x) - g).norm_squared();
        }
    }
    Ok(ErrorReport { e_l2: l2.sqrt(), e_h1: h1.sqrt(), h: mesh.h, n: space.dim(), steps: 0, seconds: 0.0 })
}

/// Classical Galerkin solution in the envelope family's polynomial space.
pub fn fem_solve(
    mesh: Arc<Mesh>,
    family: EnvelopeFamily,
    problem: &EllipticProblem,
    bc: BoundaryCondition,
    rule: &TriangleRule,
) -> Result<(Solution, ErrorReport)> {
    let start = Instant::now();
    let space = NNElementSpace::fem(mesh, family, bc)?;
    let (sol, _) = train(space, problem, rule, TrainConfig::default())?;
    let mut report = if problem.has_exact() {
        compute_errors(&sol, problem, rule)?
    } else {
        ErrorReport { e_l2: f64::NAN, e_h1: f64::NAN, h: sol.space.mesh.h, n: sol.space.dim(), steps: 0, seconds: 0.0 }
    };
    report.seconds = start.elapsed().as_secs_f64();
    Ok((sol, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshKind {
    UnitSquare,
    LShape,
}

impl MeshKind {
    pub fn build(self, n: usize) -> Result<Mesh> {
        match self {
            MeshKind::UnitSquare => Mesh::unit_square(n),
            MeshKind::LShape => Mesh::l_shape(n),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    Fem,
    Nnem { net: NetConfig, augment: bool, train: TrainConfig },
}

impl Method {
    pub fn label(&self, family: EnvelopeFamily) -> String {
        match self {
            Method::Fem => format!("FEM{}", family.label()),
            Method::Nnem { .. } => format!("NNEM{}", family.label()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub h: f64,
    pub n: usize,
    pub e_h1: f64,
    pub e_l2: f64,
    pub order_h1: Option<f64>,
    pub order_l2: Option<f64>,
    pub steps: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    pub method: String,
    pub rows: Vec<ConvergenceRow>,
}

pub const CSV_HEADER: &str = "method,h,N,e_H1,e_L2,order_H1,order_L2,steps,seconds";

impl ConvergenceTable {
    /// Builds the table from reports, sorting by decreasing `h` and filling
    /// in consecutive-pair orders `log2(e(h) / e(h/2))`.
    pub fn from_reports(method: &str, reports: &[ErrorReport]) -> Self {
        let mut reports = reports.to_vec();
        reports.sort_by(|a, b| b.h.total_cmp(&a.h));
        let mut rows: Vec<ConvergenceRow> = reports
            .iter()
            .map(|r| ConvergenceRow {
                h: r.h,
                n: r.n,
                e_h1: r.e_h1,
                e_l2: r.e_l2,
                order_h1: None,
                order_l2: None,
                steps: r.steps,
                seconds: r.seconds,
            })
            .collect();
        for i in 1..rows.len() {
            let ratio = (rows[i - 1].h / rows[i].h).log2();
            rows[i].order_h1 = Some((rows[i - 1].e_h1 / rows[i].e_h1).log2() / ratio);
            rows[i].order_l2 = Some((rows[i - 1].e_l2 / rows[i].e_l2).log2() / ratio);
        }
        ConvergenceTable { method: method.to_string(), rows }
    }

    /// CSV rows without the header.
    pub fn csv_rows(&self, with_seconds: bool) -> String {
        let opt = |o: Option<f64>| o.map_or(String::new(), |v| format!("{v:e}"));
        self.rows
            .iter()
            .map(|r| {
                let secs = if with_seconds { format!("{:e}", r.seconds) } else { String::new() };
                format!(
                    "{},{:e},{},{:e},{:e},{},{},{},{}\n",
                    self.method,
                    r.h,
                    r.n,
                    r.e_h1,
                    r.e_l2,
                    opt(r.order_h1),
                    opt(r.order_l2),
                    r.steps,
                    secs
                )
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        format!("{CSV_HEADER}\n{}", self.csv_rows(true))
    }

    /// Orders on the finest pair.
    pub fn finest_orders(&self) -> Option<(f64, f64)> {
        let r = self.rows.last()?;
        Some((r.order_h1?, r.order_l2?))
    }
}

/// Solves on each mesh size and tabulates errors.
pub fn convergence_study(
    problem: &EllipticProblem,
    family: EnvelopeFamily,
    bc: BoundaryCondition,
    mesh_kind: MeshKind,
    sizes: &[usize],
    method: &Method,
    rule: &TriangleRule,
) -> Result<ConvergenceTable> {
    if sizes.len() < 2 {
        return Err(Error::InvalidArgument(format!("a study needs at least 2 mesh sizes, got {}", sizes.len())));
    }
    let mut reports = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let mesh = Arc::new(mesh_kind.build(n)?);
        let report = match method {
            Method::Fem => fem_solve(mesh, family, problem, bc, rule)?.1,
            Method::Nnem { net, augment, train: cfg } => run_nnem(mesh, family, problem, bc, rule, *net, *augment, cfg)?.1,
        };
        reports.push(report);
    }
    Ok(ConvergenceTable::from_reports(&method.label(family), &reports))
}

/// Builds an NN element space seeded by `config.seed`, trains it and
/// reports errors.
#[allow(clippy::too_many_arguments)]
pub fn run_nnem(
    mesh: Arc<Mesh>,
    family: EnvelopeFamily,
    problem: &EllipticProblem,
    bc: BoundaryCondition,
    rule: &TriangleRule,
    net: NetConfig,
    augment: bool,
    config: &TrainConfig,
) -> Result<(Solution, ErrorReport)> {
    let start = Instant::now();
    let space = NNElementSpace::build(mesh, family, net, bc, config.seed, augment)?;
    let (sol, state) = train(space, problem, rule, *config)?;
    let mut report = compute_errors(&sol, problem, rule)?;
    report.steps = state.step;
    report.seconds = start.elapsed().as_secs_f64();
    Ok((sol, report))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diagnostics {
    pub overlap: usize,
    pub c_inf: f64,
    pub c_grad: f64,
    /// Degrees.
    pub min_angle: f64,
    pub shape_regularity: f64,
    pub h: f64,
}

pub fn diagnostics(mesh: &Mesh, family: EnvelopeFamily, rule: &TriangleRule) -> Result<Diagnostics> {
    let pou = pou_constants(mesh, family, rule)?;
    Ok(Diagnostics {
        overlap: pou.overlap,
        c_inf: pou.c_inf,
        c_grad: pou.c_grad,
        min_angle: mesh.min_angle().to_degrees(),
        shape_regularity: mesh.shape_regularity(),
        h: mesh.h,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{laplace_sine, linear_xy};
    use crate::quadrature::triangle_rule_36;

    #[test]
    fn orders_from_reports() {
        let rep = |h: f64, e: f64| ErrorReport { e_l2: e * h, e_h1: e, h, n: 1, steps: 0, seconds: 0.0 };
        let t = ConvergenceTable::from_reports("X", &[rep(0.25, 0.25), rep(0.5, 1.0)]);
        assert_eq!(t.rows[0].h, 0.5);
        let (o1, o2) = t.finest_orders().unwrap();
        assert!((o1 - 2.0).abs() < 1e-12 && (o2 - 3.0).abs() < 1e-12);
        assert!(t.to_csv().starts_with(CSV_HEADER));
    }

    #[test]
    fn study_needs_two_sizes() {
        let r = convergence_study(
            &laplace_sine(),
            EnvelopeFamily::lagrange(1).unwrap(),
            BoundaryCondition::Homogeneous,
            MeshKind::UnitSquare,
            &[2],
            &Method::Fem,
            &triangle_rule_36(),
        );
        assert!(r.is_err());
    }

    #[test]
    fn missing_exact_solution() {
        let mut p = laplace_sine();
        p.exact = None;
        let s = NNElementSpace::fem(
            Arc::new(Mesh::unit_square(2).unwrap()),
            EnvelopeFamily::lagrange(1).unwrap(),
            BoundaryCondition::Homogeneous,
        )
        .unwrap();
        let sol = Solution { c: DVector::zeros(s.dim()), space: s };
        assert!(matches!(compute_errors(&sol, &p, &triangle_rule_36()), Err(Error::MissingExactSolution)));
    }

    #[test]
    fn p1_reproduces_linear_solution() {
        let (_, r) = fem_solve(
            Arc::new(Mesh::unit_square(3).unwrap()),
            EnvelopeFamily::lagrange(1).unwrap(),
            &linear_xy(),
            BoundaryCondition::Nonhomogeneous,
            &triangle_rule_36(),
        )
        .unwrap();
        assert!(r.e_h1 < 1e-12 && r.e_l2 < 1e-12, "{r:?}");
    }

    #[test]
    fn diagnostics_examples() {
        let rule = triangle_rule_36();
        let a = diagnostics(&Mesh::unit_square(2).unwrap(), EnvelopeFamily::hierarchical(), &rule).unwrap();
        let b = diagnostics(&Mesh::unit_square(4).unwrap(), EnvelopeFamily::hierarchical(), &rule).unwrap();
        assert_eq!(a.overlap, b.overlap);
        assert!(a.c_inf <= 1.0 + 1e-12);
        assert!((a.min_angle - 45.0).abs() < 1e-10);
    }
}
