//! Elliptic model problems `-div(A grad u) + b u = f` and the built-in
//! manufactured-solution registry.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{Matrix2, Point2, Vector2};

use crate::error::{Error, Result};

pub type ScalarFn = Arc<dyn Fn(&Point2<f64>) -> f64 + Send + Sync>;
pub type VectorFn = Arc<dyn Fn(&Point2<f64>) -> Vector2<f64> + Send + Sync>;

#[derive(Clone)]
pub struct EllipticProblem {
    pub name: String,
    pub diffusion: Matrix2<f64>,
    pub reaction: ScalarFn,
    pub source: ScalarFn,
    pub dirichlet: Option<ScalarFn>,
    pub exact: Option<ScalarFn>,
    pub exact_grad: Option<VectorFn>,
}

impl fmt::Debug for EllipticProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EllipticProblem")
            .field("name", &self.name)
            .field("diffusion", &self.diffusion)
            .field("dirichlet", &self.dirichlet.is_some())
            .field("exact", &self.exact.is_some())
            .finish()
    }
}

impl EllipticProblem {
    /// Problem with the given coefficients and no boundary data or exact solution.
    pub fn new(name: &str, diffusion: Matrix2<f64>, reaction: ScalarFn, source: ScalarFn) -> Result<Self> {
        let p = EllipticProblem {
            name: name.to_string(),
            diffusion,
            reaction,
            source,
            dirichlet: None,
            exact: None,
            exact_grad: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_dirichlet(mut self, g: ScalarFn) -> Self {
        self.dirichlet = Some(g);
        self
    }

    pub fn with_exact(mut self, u: ScalarFn, grad: VectorFn) -> Self {
        self.exact = Some(u);
        self.exact_grad = Some(grad);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let a = &self.diffusion;
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("diffusion has non-finite entries".into()));
        }
        if (a[(0, 1)] - a[(1, 0)]).abs() > 1e-14 * a.amax() {
            return Err(Error::InvalidArgument("diffusion must be symmetric".into()));
        }
        let det = a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)];
        if !(a[(0, 0)] > 0.0 && det > 0.0) {
            return Err(Error::InvalidArgument("diffusion must be positive definite".into()));
        }
        Ok(())
    }

    pub fn has_exact(&self) -> bool {
        self.exact.is_some() && self.exact_grad.is_some()
    }
}

fn f(g: impl Fn(&Point2<f64>) -> f64 + Send + Sync + 'static) -> ScalarFn {
    Arc::new(g)
}

fn v(g: impl Fn(&Point2<f64>) -> Vector2<f64> + Send + Sync + 'static) -> VectorFn {
    Arc::new(g)
}

/// `-Δu = 2π² sin(πx) sin(πy)` with `u = sin(πx) sin(πy)` and `u = 0` on the
/// boundary of the unit square.
pub fn laplace_sine() -> EllipticProblem {
    EllipticProblem::new(
        "laplace_sine",
        Matrix2::identity(),
        f(|_| 0.0),
        f(|p| 2.0 * PI * PI * (PI * p.x).sin() * (PI * p.y).sin()),
    )
    .expect("identity diffusion")
    .with_dirichlet(f(|_| 0.0))
    .with_exact(
        f(|p| (PI * p.x).sin() * (PI * p.y).sin()),
        v(|p| Vector2::new(PI * (PI * p.x).cos() * (PI * p.y).sin(), PI * (PI * p.x).sin() * (PI * p.y).cos())),
    )
}

/// `-Δu = 0` with `u = x + y`.
pub fn linear_xy() -> EllipticProblem {
    EllipticProblem::new("linear_xy", Matrix2::identity(), f(|_| 0.0), f(|_| 0.0))
        .expect("identity diffusion")
        .with_dirichlet(f(|p| p.x + p.y))
        .with_exact(f(|p| p.x + p.y), v(|_| Vector2::new(1.0, 1.0)))
}

/// `-Δu = 2π² sin(πx) sin(πy)` with `u = sin(πx) sin(πy) + x`.
pub fn sine_plus_x() -> EllipticProblem {
    EllipticProblem::new(
        "sine_plus_x",
        Matrix2::identity(),
        f(|_| 0.0),
        f(|p| 2.0 * PI * PI * (PI * p.x).sin() * (PI * p.y).sin()),
    )
    .expect("identity diffusion")
    .with_dirichlet(f(|p| (PI * p.x).sin() * (PI * p.y).sin() + p.x))
    .with_exact(
        f(|p| (PI * p.x).sin() * (PI * p.y).sin() + p.x),
        v(|p| {
            Vector2::new(PI * (PI * p.x).cos() * (PI * p.y).sin() + 1.0, PI * (PI * p.x).sin() * (PI * p.y).cos())
        }),
    )
}

/// `-div(A grad u) + u = f` with `A = [[2, 0.5], [0.5, 1]]`,
/// `u = sin(πx) sin(πy)`.
pub fn anisotropic_reaction() -> EllipticProblem {
    let a = Matrix2::new(2.0, 0.5, 0.5, 1.0);
    EllipticProblem::new(
        "anisotropic_reaction",
        a,
        f(|_| 1.0),
        f(move |p| {
            let (sx, cx) = (PI * p.x).sin_cos();
            let (sy, cy) = (PI * p.y).sin_cos();
            // -(a11 u_xx + 2 a12 u_xy + a22 u_yy) + u
            PI * PI * (a[(0, 0)] + a[(1, 1)]) * sx * sy - 2.0 * a[(0, 1)] * PI * PI * cx * cy + sx * sy
        }),
    )
    .expect("positive definite diffusion")
    .with_dirichlet(f(|_| 0.0))
    .with_exact(
        f(|p| (PI * p.x).sin() * (PI * p.y).sin()),
        v(|p| Vector2::new(PI * (PI * p.x).cos() * (PI * p.y).sin(), PI * (PI * p.x).sin() * (PI * p.y).cos())),
    )
}

pub const BUILTIN_PROBLEMS: [&str; 4] = ["laplace_sine", "linear_xy", "sine_plus_x", "anisotropic_reaction"];

/// Looks up a built-in problem by name.
pub fn builtin(name: &str) -> Result<EllipticProblem> {
    match name {
        "laplace_sine" => Ok(laplace_sine()),
        "linear_xy" => Ok(linear_xy()),
        "sine_plus_x" => Ok(sine_plus_x()),
        "anisotropic_reaction" => Ok(anisotropic_reaction()),
        _ => Err(Error::InvalidArgument(format!(
            "unknown problem `{name}`; expected one of {}",
            BUILTIN_PROBLEMS.join(", ")
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_diffusion() {
        let z = f(|_| 0.0);
        assert!(EllipticProblem::new("x", Matrix2::new(1.0, 0.2, 0.3, 1.0), z.clone(), z.clone()).is_err());
        assert!(EllipticProblem::new("x", Matrix2::new(1.0, 2.0, 2.0, 1.0), z.clone(), z.clone()).is_err());
        assert!(EllipticProblem::new("x", Matrix2::new(-1.0, 0.0, 0.0, -1.0), z.clone(), z).is_err());
    }

    #[test]
    fn registry() {
        for name in BUILTIN_PROBLEMS {
            let p = builtin(name).unwrap();
            assert_eq!(p.name, name);
            assert!(p.has_exact());
        }
        assert!(builtin("nope").is_err());
    }

    #[test]
    fn manufactured_sources_match_the_exact_solutions() {
        let h = 1e-4;
        for name in BUILTIN_PROBLEMS {
            let p = builtin(name).unwrap();
            let u = p.exact.clone().unwrap();
            let gu = p.exact_grad.clone().unwrap();
            for &(x, y) in &[(0.3, 0.4), (0.71, 0.12), (0.5, 0.5)] {
                let pt = Point2::new(x, y);
                let flux = |q: Point2<f64>| p.diffusion * gu(&q);
                let div = (flux(Point2::new(x + h, y)).x - flux(Point2::new(x - h, y)).x) / (2.0 * h)
                    + (flux(Point2::new(x, y + h)).y - flux(Point2::new(x, y - h)).y) / (2.0 * h);
                let lhs = -div + (p.reaction)(&pt) * u(&pt);
                assert!((lhs - (p.source)(&pt)).abs() < 1e-6, "{name}");
                let fd = Vector2::new(
                    (u(&Point2::new(x + h, y)) - u(&Point2::new(x - h, y))) / (2.0 * h),
                    (u(&Point2::new(x, y + h)) - u(&Point2::new(x, y - h))) / (2.0 * h),
                );
                assert!((fd - gu(&pt)).norm() < 1e-6, "{name}");
            }
        }
    }
}
