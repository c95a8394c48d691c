mod common;

use std::sync::Arc;

use nalgebra::{DVector, Vector2};
use nnem::mesh::to_physical;
use nnem::problem::{anisotropic_reaction, laplace_sine, EllipticProblem};
use nnem::solver::{checkpoint_load, checkpoint_save};
use nnem::{
    assemble, triangle_rule_36, train, Activation, BoundaryCondition, EnvelopeFamily, Mesh, NNElementSpace, NetConfig,
    TrainConfig, Trainer,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};

fn fem_loss(mesh: Arc<Mesh>, fam: EnvelopeFamily, p: &EllipticProblem) -> f64 {
    let space = NNElementSpace::fem(mesh, fam, BoundaryCondition::Homogeneous).unwrap();
    Trainer::new(space, p, &triangle_rule_36(), TrainConfig::default()).unwrap().solve().unwrap().1
}

fn config(steps: usize, lr: f64, seed: u64) -> TrainConfig {
    TrainConfig { max_steps: steps, learning_rate: lr, seed, log_every: 1, ..TrainConfig::default() }
}

/// Energy norm `a(u - w, u - w)^{1/2}` with `w = sum c_i phi_i`.
fn energy_error(space: &NNElementSpace, c: &DVector<f64>, p: &EllipticProblem) -> f64 {
    let rule = triangle_rule_36();
    let u = p.exact.clone().unwrap();
    let gu = p.exact_grad.clone().unwrap();
    let mut s = 0.0;
    for t in 0..space.mesh.n_triangles() {
        let tri = space.mesh.triangle_vertices(t);
        let area2 = 2.0 * space.mesh.triangle_area(t);
        for (lam, &w) in rule.points.iter().zip(&rule.weights) {
            let x = to_physical(&tri, lam);
            let (v, g) = space.combine_at(c, t, lam).unwrap();
            let e: Vector2<f64> = gu(&x) - g;
            s += w * area2 * (e.dot(&(p.diffusion * e)) + (p.reaction)(&x) * (u(&x) - v).powi(2));
        }
    }
    s.sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn nnem_loss_never_exceeds_fem_loss(seed in 0u64..10_000, lr in 1e-3..3e-2f64,
                                        fam in prop_oneof![Just(EnvelopeFamily::Lagrange { order: 1 }),
                                                           Just(EnvelopeFamily::Lagrange { order: 2 }),
                                                           Just(EnvelopeFamily::hierarchical())]) {
        for p in [laplace_sine(), anisotropic_reaction()] {
            let space = common::small_space(2, fam, 4, Activation::Sine, seed);
            let reference = fem_loss(space.mesh.clone(), fam, &p);
            let (_, state) = train(space, &p, &triangle_rule_36(), config(15, lr, seed)).unwrap();
            prop_assert_eq!(state.history.len(), 16);
            for h in &state.history {
                prop_assert!(h.loss <= reference + 1e-10, "step {}: {} > {}", h.step, h.loss, reference);
            }
        }
    }

    #[test]
    fn galerkin_orthogonality_after_every_solve(seed in 0u64..10_000, n in 1usize..=2) {
        let p = anisotropic_reaction();
        let rule = triangle_rule_36();
        let space = common::small_space(n, EnvelopeFamily::Lagrange { order: 2 }, 4, Activation::Tanh, seed);
        let mut trainer = Trainer::new(space, &p, &rule, config(5, 1e-2, seed)).unwrap();
        for _ in 0..=5 {
            let (c, _) = trainer.solve().unwrap();
            let b = assemble(&trainer.space, &p, &rule).unwrap().b;
            let r = common::galerkin_residual(&trainer.space, &p, &rule, &c);
            prop_assert!(r <= 1e-8 * b.norm(), "residual {r:e}, |B| {:e}", b.norm());
            trainer.step().unwrap();
        }
    }
}

#[test]
fn galerkin_solution_is_energy_optimal() {
    let rule = triangle_rule_36();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    for p in [laplace_sine(), anisotropic_reaction()] {
        let space = common::small_space(2, EnvelopeFamily::Lagrange { order: 2 }, 6, Activation::Sine, 5);
        let (c, _) = Trainer::new(space.clone(), &p, &rule, TrainConfig::default()).unwrap().solve().unwrap();
        let best = energy_error(&space, &c, &p);
        for k in 0..50 {
            let scale = 10f64.powi(-(k % 4));
            let v = DVector::from_fn(c.len(), |i, _| c[i] + scale * rng.random_range(-1.0..1.0));
            assert!(best <= energy_error(&space, &v, &p), "{} trial {k}", p.name);
        }
    }
}

#[test]
fn zero_steps_is_a_galerkin_solve_below_fem() {
    let p = laplace_sine();
    let fam = EnvelopeFamily::Lagrange { order: 2 };
    let space = common::small_space(2, fam, 16, Activation::Sine, 0);
    let reference = fem_loss(space.mesh.clone(), fam, &p);
    let (_, state) = train(space, &p, &triangle_rule_36(), config(0, 3e-4, 0)).unwrap();
    assert_eq!(state.history.len(), 1);
    assert_eq!(state.step, 0);
    assert!(state.history[0].loss <= reference + 1e-10);
}

#[test]
fn two_hundred_steps_do_not_increase_the_loss() {
    let p = laplace_sine();
    let space = common::small_space(2, EnvelopeFamily::Lagrange { order: 2 }, 16, Activation::Sine, 1);
    let (_, state) = train(space, &p, &triangle_rule_36(), TrainConfig { log_every: 20, ..config(200, 3e-4, 1) })
        .unwrap();
    let first = state.history.first().unwrap().loss;
    let last = state.history.last().unwrap().loss;
    let min = state.history.iter().map(|h| h.loss).fold(f64::INFINITY, f64::min);
    assert_eq!(state.history.last().unwrap().step, 200);
    assert!(last <= first, "{last} > {first}");
    assert!(last <= min + 1e-6 * first.abs());
}

#[test]
fn history_steps_strictly_increase() {
    let p = laplace_sine();
    let space = common::small_space(1, EnvelopeFamily::hierarchical(), 3, Activation::Sine, 2);
    let (_, state) = train(space, &p, &triangle_rule_36(), TrainConfig { log_every: 3, ..config(10, 1e-3, 2) }).unwrap();
    let steps: Vec<usize> = state.history.iter().map(|h| h.step).collect();
    assert_eq!(steps, vec![0, 3, 6, 9, 10]);
    assert!(state.history.iter().all(|h| h.e_h1.is_some() && h.e_l2.is_some()));
}

#[test]
fn identical_seeds_give_identical_histories() {
    let p = anisotropic_reaction();
    let run = || {
        let space = common::small_space(2, EnvelopeFamily::Lagrange { order: 2 }, 5, Activation::Sine, 9);
        train(space, &p, &triangle_rule_36(), config(12, 1e-3, 9)).unwrap().1
    };
    let (a, b) = (run(), run());
    assert_eq!(a.history_csv(), b.history_csv());
    assert_eq!(a.theta, b.theta);
}

#[test]
fn resumed_run_matches_uninterrupted_run() {
    let p = laplace_sine();
    let rule = triangle_rule_36();
    let text = "net.width = 4\ntrain.lr = 0.001\n";
    let fresh = || common::small_space(2, EnvelopeFamily::Lagrange { order: 2 }, 4, Activation::Sine, 4);

    let (_, whole) = train(fresh(), &p, &rule, config(20, 1e-3, 4)).unwrap();

    let mut first = Trainer::new(fresh(), &p, &rule, config(20, 1e-3, 4)).unwrap();
    for _ in 0..10 {
        first.step().unwrap();
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.ckpt");
    checkpoint_save(&path, &first.state, text).unwrap();
    drop(first);

    let state = checkpoint_load(&path, text).unwrap();
    assert_eq!(state.step, 10);
    let mut second = Trainer::resume(fresh(), &p, &rule, config(20, 1e-3, 4), state).unwrap();
    second.run().unwrap();
    let resumed = second.state;

    assert_eq!(resumed.theta, whole.theta);
    assert_eq!(resumed.m, whole.m);
    assert_eq!(resumed.v, whole.v);
    assert_eq!(resumed.c, whole.c);
    assert_eq!(resumed.history_csv(), whole.history_csv());

    let err = checkpoint_load(&path, "net.width = 5\ntrain.lr = 0.001\n").unwrap_err();
    assert!(err.to_string().contains("net.width"), "{err}");
}

#[test]
fn zero_networks_train_through_the_pseudo_inverse() {
    let p = laplace_sine();
    let mut space = NNElementSpace::build(
        Arc::new(Mesh::unit_square(2).unwrap()),
        EnvelopeFamily::Lagrange { order: 2 },
        NetConfig { hidden_layers: 2, width: 4, activation: Activation::Sine },
        BoundaryCondition::Homogeneous,
        0,
        true,
    )
    .unwrap();
    space.set_theta(&vec![0.0; space.theta_len()]).unwrap();
    let fam = EnvelopeFamily::Lagrange { order: 2 };
    let reference = fem_loss(space.mesh.clone(), fam, &p);
    let (_, state) = train(space, &p, &triangle_rule_36(), config(3, 1e-3, 0)).unwrap();
    assert!((state.history[0].loss - reference).abs() <= 1e-10 * reference.abs());
    assert!(state.history.iter().all(|h| h.loss.is_finite()));
}
