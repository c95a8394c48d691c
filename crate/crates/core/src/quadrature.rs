//! Gauss rules on `[0, 1]` and on triangles.

use nalgebra::Point2;

use crate::error::{Error, Result};
use crate::mesh::{to_physical, Mesh};

/// Gauss-Legendre nodes and weights on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussRule1d {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule1d {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

/// `n`-point Gauss-Legendre rule on `[0, 1]`, exact for degree `2n - 1`.
pub fn gauss_legendre_1d(n: usize) -> Result<GaussRule1d> {
    if !(1..=64).contains(&n) {
        return Err(Error::InvalidArgument(format!("Gauss-Legendre point count must be in 1..=64, got {n}")));
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    // Roots come in symmetric pairs; Newton on P_n from the asymptotic guess.
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // x is the i-th largest root on [-1, 1].
        nodes[i] = 0.5 * (1.0 - x);
        nodes[n - 1 - i] = 0.5 * (1.0 + x);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.5;
    }
    Ok(GaussRule1d { nodes, weights })
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Quadrature on the reference triangle `(0,0), (1,0), (0,1)`.
///
/// Points are barycentric triples `(1 - x - y, x, y)`; weights sum to the
/// reference area `1/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    pub declared_exact_degree: usize,
    pub name: String,
}

impl TriangleRule {
    /// Collapsed-coordinate rule: tensor product of two `n`-point Gauss rules
    /// under `(x, y) = (s, t (1 - s))` with weight factor `1 - s`.
    pub fn collapsed_gauss(n: usize) -> Result<TriangleRule> {
        let g = gauss_legendre_1d(n)?;
        let mut points = Vec::with_capacity(n * n);
        let mut weights = Vec::with_capacity(n * n);
        for (&s, &ws) in g.nodes.iter().zip(&g.weights) {
            for (&t, &wt) in g.nodes.iter().zip(&g.weights) {
                let x = s;
                let y = t * (1.0 - s);
                points.push([1.0 - x - y, x, y]);
                weights.push(ws * wt * (1.0 - s));
            }
        }
        Ok(TriangleRule {
            points,
            weights,
            // x^a y^b becomes degree a + b + 1 in s and b in t.
            declared_exact_degree: 2 * n - 2,
            name: format!("collapsed-gauss {n}x{n}"),
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Integral over the reference triangle of `f(x, y)`.
    pub fn integrate_reference(&self, f: impl Fn(f64, f64) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(p, &w)| w * f(p[1], p[2]))
            .sum()
    }

    /// Largest relative error over monomials `x^a y^b` with `a + b <= degree`.
    pub fn monomial_error(&self, degree: usize) -> f64 {
        let mut worst: f64 = 0.0;
        for a in 0..=degree {
            for b in 0..=(degree - a) {
                let exact = monomial_integral(a, b);
                let approx = self.integrate_reference(|x, y| x.powi(a as i32) * y.powi(b as i32));
                worst = worst.max(((approx - exact) / exact).abs());
            }
        }
        worst
    }
}

/// The 36-point rule used throughout: 6x6 collapsed Gauss.
pub fn triangle_rule_36() -> TriangleRule {
    TriangleRule::collapsed_gauss(6).expect("6-point Gauss rule is in range")
}

/// Closed form `a! b! / (a + b + 2)!` of the monomial integral on the
/// reference triangle.
pub fn monomial_integral(a: usize, b: usize) -> f64 {
    let fact = |k: usize| (1..=k).map(|i| i as f64).product::<f64>();
    fact(a) * fact(b) / fact(a + b + 2)
}

/// Sum over quadrature points of `w_q * 2|K| * f(x_q)`.
pub fn integrate_on_element<F>(f: F, triangle: &[Point2<f64>; 3], rule: &TriangleRule) -> f64
where
    F: Fn(&Point2<f64>) -> f64,
{
    let [a, b, c] = triangle;
    let area2 = (b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y);
    rule.points
        .iter()
        .zip(&rule.weights)
        .map(|(lam, &w)| w * area2 * f(&to_physical(triangle, lam)))
        .sum()
}

/// Sum of element integrals in ascending triangle order.
pub fn integrate_on_mesh<F>(f: F, mesh: &Mesh, rule: &TriangleRule) -> f64
where
    F: Fn(&Point2<f64>) -> f64,
{
    (0..mesh.n_triangles())
        .map(|t| integrate_on_element(&f, &mesh.triangle_vertices(t), rule))
        .sum()
}
