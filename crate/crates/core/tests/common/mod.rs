#![allow(dead_code)]

use std::sync::Arc;

use nalgebra::{DVector, Vector2};
use nnem::assembly::{assemble, SymmetricSystem};
use nnem::mesh::to_physical;
use nnem::problem::EllipticProblem;
use nnem::solver::ritz_loss;
use nnem::{
    loss_parameter_gradient, triangle_rule_36, Activation, BoundaryCondition, EnvelopeFamily, Mesh, NNElementSpace,
    NetConfig, TriangleRule,
};

pub fn small_space(n: usize, family: EnvelopeFamily, width: usize, activation: Activation, seed: u64) -> NNElementSpace {
    NNElementSpace::build(
        Arc::new(Mesh::unit_square(n).unwrap()),
        family,
        NetConfig { hidden_layers: 2, width, activation },
        BoundaryCondition::Homogeneous,
        seed,
        true,
    )
    .unwrap()
}

/// Worst relative error `|fd - g| / max(|fd|, |g|)` over components, with
/// central differences of `theta -> ritz_loss(assemble(theta), c)` at frozen
/// `c`. The rounding noise of the difference quotient,
/// `8 eps max(|L|, 1) / step`, is subtracted from `|fd - g|` first.
pub fn gradient_fd_error(space: &NNElementSpace, problem: &EllipticProblem, c: &DVector<f64>, step: f64) -> f64 {
    let rule = triangle_rule_36();
    let g = loss_parameter_gradient(space, problem, &rule, c).unwrap();
    let l0 = ritz_loss(&assemble(space, problem, &rule).unwrap(), c).unwrap();
    let noise = 8.0 * f64::EPSILON * l0.abs().max(1.0) / step;
    let theta = space.theta();
    let mut probe = space.clone();
    let mut worst: f64 = 0.0;
    for i in 0..theta.len() {
        let mut t = theta.clone();
        t[i] = theta[i] + step;
        probe.set_theta(&t).unwrap();
        let lp = ritz_loss(&assemble(&probe, problem, &rule).unwrap(), c).unwrap();
        t[i] = theta[i] - step;
        probe.set_theta(&t).unwrap();
        let lm = ritz_loss(&assemble(&probe, problem, &rule).unwrap(), c).unwrap();
        let fd = (lp - lm) / (2.0 * step);
        let diff = ((fd - g[i]).abs() - noise).max(0.0);
        if diff > 0.0 {
            worst = worst.max(diff / fd.abs().max(g[i].abs()));
        }
    }
    worst
}

/// `max_i |a(Psi, phi_i) - (f, phi_i)|` by direct quadrature, free basis only.
pub fn galerkin_residual(space: &NNElementSpace, problem: &EllipticProblem, rule: &TriangleRule, c: &DVector<f64>) -> f64 {
    let mut r = DVector::<f64>::zeros(space.dim());
    let mut local = Vec::new();
    let mut vals = Vec::new();
    for t in 0..space.mesh.n_triangles() {
        let tri = space.mesh.triangle_vertices(t);
        let area2 = 2.0 * space.mesh.triangle_area(t);
        for (lam, &wq) in rule.points.iter().zip(&rule.weights) {
            let x = to_physical(&tri, lam);
            space.eval_local(t, lam, &mut local, None);
            space.basis_values(&local, &mut vals);
            let (psi, gpsi) = vals
                .iter()
                .fold((0.0, Vector2::zeros()), |(v, g), b| (v + c[b.index] * b.value, g + b.grad * c[b.index]));
            let flux = problem.diffusion * gpsi;
            let react = (problem.reaction)(&x) * psi - (problem.source)(&x);
            for b in &vals {
                r[b.index] += wq * area2 * (flux.dot(&b.grad) + react * b.value);
            }
        }
    }
    r.rows(0, space.n_free_basis()).amax()
}

pub fn system(space: &NNElementSpace, problem: &EllipticProblem) -> SymmetricSystem {
    assemble(space, problem, &triangle_rule_36()).unwrap()
}
