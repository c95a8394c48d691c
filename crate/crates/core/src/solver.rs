//! Training loop: Galerkin solve for the coefficients, Ritz loss, parameter
//! gradient at frozen coefficients, Adam update; plus the two-stage
//! nonhomogeneous solve and training checkpoints.

use std::path::Path;

use nalgebra::{DVector, Point2, Vector2};
use sha2::{Digest, Sha256};

use crate::analysis::compute_errors_of;
use crate::assembly::{assemble, assemble_boundary_system, boundary_samples, SymmetricSystem};
use crate::envelope::BoundaryCondition;
use crate::error::{Error, Result};
use crate::linalg::solve_linear;
use crate::localnet::Tape;
use crate::mesh::to_physical;
use crate::nnspace::NNElementSpace;
use crate::problem::EllipticProblem;
use crate::quadrature::{gauss_legendre_1d, TriangleRule};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub max_steps: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    /// Relative eigenvalue cutoff of the fallback solve.
    pub tau: f64,
    pub log_every: usize,
    /// Gauss points per boundary edge.
    pub edge_points: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_steps: 0,
            learning_rate: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            tau: 1e-12,
            log_every: 100,
            edge_points: 6,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate must be > 0, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("Adam betas must lie in [0, 1)".into());
        }
        if !(self.epsilon > 0.0) {
            return bad("Adam epsilon must be > 0".into());
        }
        if !(self.tau >= 0.0 && self.tau < 1.0) {
            return bad(format!("solve regularisation must lie in [0, 1), got {}", self.tau));
        }
        if self.log_every == 0 {
            return bad("log_every must be >= 1".into());
        }
        if !(1..=64).contains(&self.edge_points) {
            return bad(format!("edge points must be in 1..=64, got {}", self.edge_points));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryEntry {
    pub step: usize,
    pub loss: f64,
    pub e_l2: Option<f64>,
    pub e_h1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub c: DVector<f64>,
    pub theta: Vec<f64>,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: usize,
    pub seed: u64,
    pub history: Vec<HistoryEntry>,
}

impl TrainState {
    pub fn new(space: &NNElementSpace, seed: u64) -> Self {
        let theta = space.theta();
        let n = theta.len();
        TrainState {
            c: DVector::zeros(space.dim()),
            theta,
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
            seed,
            history: Vec::new(),
        }
    }

    /// History as CSV with header `step,loss,e_L2,e_H1`.
    pub fn history_csv(&self) -> String {
        let mut s = String::from("step,loss,e_L2,e_H1\n");
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:e}"));
        for h in &self.history {
            s.push_str(&format!("{},{:e},{},{}\n", h.step, h.loss, opt(h.e_l2), opt(h.e_h1)));
        }
        s
    }
}

/// `1/2 c^T A c - B^T c`.
pub fn ritz_loss(system: &SymmetricSystem, c: &DVector<f64>) -> Result<f64> {
    if c.len() != system.dim() {
        return Err(Error::DimensionMismatch { expected: system.dim(), got: c.len() });
    }
    Ok(0.5 * system.a.quadratic_form(c) - system.b.dot(c))
}

/// Gradient in the parameters of the free dofs' networks of
/// `1/2 a(Psi, Psi) - (f, Psi)`, `Psi = sum c_i phi_i`, with `c` held fixed.
/// Networks of boundary dofs get a zero gradient.
pub fn loss_parameter_gradient(
    space: &NNElementSpace,
    problem: &EllipticProblem,
    rule: &TriangleRule,
    c: &DVector<f64>,
) -> Result<Vec<f64>> {
    if c.len() != space.dim() {
        return Err(Error::DimensionMismatch { expected: space.dim(), got: c.len() });
    }
    let mut grad = vec![0.0; space.theta_len()];
    if !space.mode.has_network() {
        return Ok(grad);
    }
    let p = space.params_per_net();
    let n_free = space.dofs.free.len();
    let mesh = &space.mesh;
    let mut local = Vec::new();
    let mut vals = Vec::new();
    let mut tapes: Vec<Tape> = Vec::new();
    for t in 0..mesh.n_triangles() {
        let tri = mesh.triangle_vertices(t);
        let area2 = 2.0 * mesh.triangle_area(t);
        let active = space
            .local_dofs(t)
            .iter()
            .any(|&(d, _)| d < n_free && space.network_index(d).is_some_and(|i| c[i] != 0.0));
        if !active {
            continue;
        }
        for (lam, &wq) in rule.points.iter().zip(&rule.weights) {
            let w = wq * area2;
            let x = to_physical(&tri, lam);
            space.eval_local(t, lam, &mut local, Some(&mut tapes));
            space.basis_values(&local, &mut vals);
            let (psi, gpsi) = vals
                .iter()
                .fold((0.0, Vector2::zeros()), |(v, g), b| (v + c[b.index] * b.value, g + b.grad * c[b.index]));
            let r_val = (problem.reaction)(&x) * psi - (problem.source)(&x);
            let r_grad = problem.diffusion * gpsi;
            for (k, e) in local.iter().enumerate() {
                if e.dof >= n_free {
                    continue;
                }
                let cj = space.network_index(e.dof).map_or(0.0, |i| c[i]);
                if cj == 0.0 {
                    continue;
                }
                let sv = w * cj * (r_val * e.envelope + r_grad.dot(&e.envelope_grad));
                let sg = r_grad * (w * cj * e.envelope);
                space.nets[e.dof].backprop_tape(&mut tapes[k], sv, [sg.x, sg.y], &mut grad[e.dof * p..(e.dof + 1) * p]);
            }
        }
    }
    Ok(grad)
}

/// One bias-corrected Adam update; advances `state.step`.
pub fn adam_step(state: &mut TrainState, grad: &[f64], config: &TrainConfig) -> Result<()> {
    let n = state.theta.len();
    if grad.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: grad.len() });
    }
    if state.m.len() != n || state.v.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: state.m.len().min(state.v.len()) });
    }
    if let Some(index) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::TrainingDiverged { step: state.step, index });
    }
    let t = (state.step + 1) as i32;
    let (b1, b2) = (config.beta1, config.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for i in 0..n {
        let g = grad[i];
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
        let mh = state.m[i] / c1;
        let vh = state.v[i] / c2;
        state.theta[i] -= config.learning_rate * mh / (vh.sqrt() + config.epsilon);
    }
    state.step += 1;
    Ok(())
}

/// A trained or solved function `Psi(x) = sum c_i phi_i(x)`.
#[derive(Debug, Clone)]
pub struct Solution {
    pub space: NNElementSpace,
    pub c: DVector<f64>,
}

impl Solution {
    pub fn value(&self, x: &Point2<f64>) -> Result<f64> {
        self.space.combine(&self.c, x)
    }

    pub fn gradient(&self, x: &Point2<f64>) -> Result<Vector2<f64>> {
        self.space.combine_grad(&self.c, x)
    }

    pub fn value_grad_at(&self, triangle: usize, lam: &[f64; 3]) -> Result<(f64, Vector2<f64>)> {
        self.space.combine_at(&self.c, triangle, lam)
    }
}

/// Runs the training loop step by step. With a nonhomogeneous space the boundary
/// coefficients are fixed once from the boundary mass system and only the
/// interior block is solved and trained.
pub struct Trainer<'p> {
    pub space: NNElementSpace,
    pub problem: &'p EllipticProblem,
    pub rule: TriangleRule,
    pub config: TrainConfig,
    pub state: TrainState,
    constrained: Vec<usize>,
    lift: Option<DVector<f64>>,
}

impl<'p> Trainer<'p> {
    pub fn new(space: NNElementSpace, problem: &'p EllipticProblem, rule: &TriangleRule, config: TrainConfig) -> Result<Self> {
        let state = TrainState::new(&space, config.seed);
        Self::resume(space, problem, rule, config, state)
    }

    /// Continues from `state`; the space's parameters are replaced by `state.theta`.
    pub fn resume(
        mut space: NNElementSpace,
        problem: &'p EllipticProblem,
        rule: &TriangleRule,
        config: TrainConfig,
        state: TrainState,
    ) -> Result<Self> {
        config.validate()?;
        problem.validate()?;
        space.set_theta(&state.theta)?;
        if state.m.len() != state.theta.len() || state.v.len() != state.theta.len() {
            return Err(Error::DimensionMismatch { expected: state.theta.len(), got: state.m.len() });
        }
        let constrained = if space.bc() == BoundaryCondition::None {
            let mut idx = Vec::new();
            for (d, dof) in space.dofs.all().enumerate() {
                if dof.on_dirichlet_boundary {
                    idx.extend(space.constant_index(d));
                    idx.extend(space.network_index(d));
                }
            }
            idx
        } else {
            Vec::new()
        };
        let lift = if space.bc() == BoundaryCondition::Nonhomogeneous {
            Some(boundary_coefficients(&space, problem, rule, &config)?)
        } else {
            None
        };
        Ok(Trainer { space, problem, rule: rule.clone(), config, state, constrained, lift })
    }

    /// Assembles the interior system at the current parameters, with the
    /// Dirichlet modification and the boundary lift applied.
    pub fn interior_system(&self) -> Result<SymmetricSystem> {
        let full = assemble(&self.space, self.problem, &self.rule)?;
        match &self.lift {
            None => crate::assembly::apply_homogeneous_dirichlet(&full, &self.constrained),
            Some(c_bd) => {
                let n_in = self.space.n_free_basis();
                let coupling = full.a.block(0..n_in, n_in..self.space.dim());
                let b = full.b.rows(0, n_in) - coupling * c_bd;
                Ok(SymmetricSystem { a: full.a.leading(n_in), b })
            }
        }
    }

    fn full_coefficients(&self, c_in: &DVector<f64>) -> DVector<f64> {
        match &self.lift {
            None => c_in.clone(),
            Some(c_bd) => {
                let mut c = DVector::zeros(self.space.dim());
                c.rows_mut(0, c_in.len()).copy_from(c_in);
                c.rows_mut(c_in.len(), c_bd.len()).copy_from(c_bd);
                c
            }
        }
    }

    /// Galerkin solve at the current parameters: `(full c, loss)`.
    pub fn solve(&self) -> Result<(DVector<f64>, f64)> {
        let sys = self.interior_system()?;
        let c_in = solve_linear(&sys.a, &sys.b, self.config.tau)?;
        let loss = ritz_loss(&sys, &c_in)?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { step: self.state.step });
        }
        Ok((self.full_coefficients(&c_in), loss))
    }

    fn record(&mut self, loss: f64) -> Result<()> {
        let (e_l2, e_h1) = if self.problem.has_exact() {
            let r = compute_errors_of(&self.space, &self.state.c, self.problem, &self.rule)?;
            (Some(r.e_l2), Some(r.e_h1))
        } else {
            (None, None)
        };
        if self.state.history.last().is_none_or(|h| h.step < self.state.step) {
            self.state.history.push(HistoryEntry { step: self.state.step, loss, e_l2, e_h1 });
        }
        Ok(())
    }

    /// One iteration: solve, log, gradient at frozen `c`, Adam update.
    /// On error the parameters and moments are left untouched.
    pub fn step(&mut self) -> Result<f64> {
        let (c, loss) = self.solve()?;
        let grad = loss_parameter_gradient(&self.space, self.problem, &self.rule, &c)?;
        self.state.c = c;
        if self.state.step % self.config.log_every == 0 {
            self.record(loss)?;
        }
        adam_step(&mut self.state, &grad, &self.config)?;
        self.space.set_theta(&self.state.theta)?;
        Ok(loss)
    }

    /// Steps until `config.max_steps`, then solves once more in the final space.
    pub fn run(&mut self) -> Result<f64> {
        while self.state.step < self.config.max_steps {
            self.step()?;
        }
        self.finalize()
    }

    /// Galerkin solve in the current space, recorded in the history.
    pub fn finalize(&mut self) -> Result<f64> {
        let (c, loss) = self.solve()?;
        self.state.c = c;
        self.record(loss)?;
        Ok(loss)
    }

    pub fn solution(&self) -> Solution {
        Solution { space: self.space.clone(), c: self.state.c.clone() }
    }

    pub fn into_parts(self) -> (Solution, TrainState) {
        (Solution { space: self.space, c: self.state.c.clone() }, self.state)
    }
}

/// Trains to `config.max_steps`; returns the final Galerkin solution.
pub fn train(
    space: NNElementSpace,
    problem: &EllipticProblem,
    rule: &TriangleRule,
    config: TrainConfig,
) -> Result<(Solution, TrainState)> {
    let mut trainer = Trainer::new(space, problem, rule, config)?;
    trainer.run()?;
    Ok(trainer.into_parts())
}

/// Boundary stage `D c_bd = G`.
pub fn boundary_coefficients(
    space: &NNElementSpace,
    problem: &EllipticProblem,
    rule: &TriangleRule,
    config: &TrainConfig,
) -> Result<DVector<f64>> {
    if problem.dirichlet.is_none() {
        return Err(Error::MissingDirichletData);
    }
    let bs = assemble_boundary_system(space, problem, &gauss_legendre_1d(config.edge_points)?, rule)?;
    let n = bs.g.len();
    if n == 0 {
        return Ok(DVector::zeros(0));
    }
    let max_diag = (0..n).map(|i| bs.d[(i, i)]).fold(0.0, f64::max);
    let chol = nalgebra::Cholesky::new(bs.d.clone())
        .filter(|ch| (0..n).all(|i| ch.l_dirty()[(i, i)].powi(2) > config.tau * max_diag));
    match chol {
        // Least squares on the weighted samples; same minimiser as D c = G
        // without squaring the condition number.
        Some(_) => {
            let (v, gs) = boundary_samples(space, problem, &gauss_legendre_1d(config.edge_points)?)?;
            let qr = v.qr();
            let mut rhs = gs;
            qr.q_tr_mul(&mut rhs);
            let r = qr.r();
            r.solve_upper_triangular(&rhs.rows(0, n).into_owned())
                .ok_or_else(|| Error::BoundaryRankDeficient("boundary sample matrix is singular".into()))
        }
        None => {
            let eig = bs.d.symmetric_eigenvalues();
            Err(Error::BoundaryRankDeficient(format!(
                "boundary mass matrix of size {n} has smallest eigenvalue {:e} (largest {:e})",
                eig.min(),
                eig.max()
            )))
        }
    }
}

/// Two-stage solve with Dirichlet data `g`, training the interior networks
/// for `config.max_steps` steps.
pub fn solve_nonhomogeneous(
    space: NNElementSpace,
    problem: &EllipticProblem,
    rule: &TriangleRule,
    config: TrainConfig,
) -> Result<(Solution, TrainState)> {
    if space.bc() != BoundaryCondition::Nonhomogeneous {
        return Err(Error::InvalidArgument("space must be built with nonhomogeneous boundary conditions".into()));
    }
    train(space, problem, rule, config)
}

const MAGIC: &[u8; 8] = b"NNEMCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn config_hash(config_text: &str) -> [u8; 32] {
    Sha256::digest(config_text.as_bytes()).into()
}

/// Checkpoint layout, little-endian:
/// magic `NNEMCKPT`, version u32, sha256 of the config text, config text
/// (u64 length + UTF-8), seed u64, step u64, then `c`, `theta`, `m`, `v` each
/// as u64 length + f64 values, the history as u64 count + (step u64, loss
/// f64, flags u8, e_L2 f64, e_H1 f64), and a trailing sha256 of all
/// preceding bytes.
pub fn checkpoint_bytes(state: &TrainState, config_text: &str) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&config_hash(config_text));
    out.extend_from_slice(&(config_text.len() as u64).to_le_bytes());
    out.extend_from_slice(config_text.as_bytes());
    out.extend_from_slice(&state.seed.to_le_bytes());
    out.extend_from_slice(&(state.step as u64).to_le_bytes());
    for vec in [state.c.as_slice(), &state.theta, &state.m, &state.v] {
        out.extend_from_slice(&(vec.len() as u64).to_le_bytes());
        for x in vec {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out.extend_from_slice(&(state.history.len() as u64).to_le_bytes());
    for h in &state.history {
        out.extend_from_slice(&(h.step as u64).to_le_bytes());
        out.extend_from_slice(&h.loss.to_le_bytes());
        out.push(u8::from(h.e_l2.is_some()) | (u8::from(h.e_h1.is_some()) << 1));
        out.extend_from_slice(&h.e_l2.unwrap_or(0.0).to_le_bytes());
        out.extend_from_slice(&h.e_h1.unwrap_or(0.0).to_le_bytes());
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Checkpoint("unexpected end of data".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn len(&mut self) -> Result<usize> {
        let n = self.u64()? as usize;
        if n > self.bytes.len() {
            return Err(Error::Checkpoint("length field exceeds file size".into()));
        }
        Ok(n)
    }

    fn vec(&mut self) -> Result<Vec<f64>> {
        let n = self.len()?;
        (0..n).map(|_| self.f64()).collect()
    }
}

/// Keys whose `key = value` lines differ between two config texts.
pub fn differing_keys(a: &str, b: &str) -> Vec<String> {
    let parse = |s: &str| -> std::collections::BTreeMap<String, String> {
        s.lines()
            .filter_map(|l| l.split_once('='))
            .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
            .collect()
    };
    let (ma, mb) = (parse(a), parse(b));
    let mut keys: Vec<String> = ma
        .keys()
        .chain(mb.keys())
        .filter(|k| ma.get(*k) != mb.get(*k))
        .cloned()
        .collect();
    keys.sort();
    keys.dedup();
    keys
}

/// Parses checkpoint bytes, refusing them unless they were written for
/// `config_text`.
pub fn checkpoint_from_bytes(bytes: &[u8], config_text: &str) -> Result<TrainState> {
    if bytes.len() < MAGIC.len() + 4 + 32 + 32 {
        return Err(Error::Checkpoint("file is truncated".into()));
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != digest {
        return Err(Error::Checkpoint("integrity check failed (truncated or corrupted file)".into()));
    }
    let mut r = Reader { bytes: body, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file".into()));
    }
    let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}, expected {CHECKPOINT_VERSION}")));
    }
    let hash: [u8; 32] = r.take(32)?.try_into().unwrap();
    let n = r.len()?;
    let stored = String::from_utf8(r.take(n)?.to_vec()).map_err(|_| Error::Checkpoint("config text is not UTF-8".into()))?;
    if hash != config_hash(config_text) {
        let mut keys = differing_keys(&stored, config_text);
        if keys.is_empty() {
            keys.push("<config text>".into());
        }
        return Err(Error::ConfigMismatch { keys });
    }
    let seed = r.u64()?;
    let step = r.u64()? as usize;
    let c = DVector::from_vec(r.vec()?);
    let theta = r.vec()?;
    let m = r.vec()?;
    let v = r.vec()?;
    let n_hist = r.len()?;
    let mut history = Vec::with_capacity(n_hist);
    for _ in 0..n_hist {
        let step = r.u64()? as usize;
        let loss = r.f64()?;
        let flags = r.take(1)?[0];
        let e_l2 = r.f64()?;
        let e_h1 = r.f64()?;
        history.push(HistoryEntry {
            step,
            loss,
            e_l2: (flags & 1 != 0).then_some(e_l2),
            e_h1: (flags & 2 != 0).then_some(e_h1),
        });
    }
    if r.pos != body.len() {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    if m.len() != theta.len() || v.len() != theta.len() {
        return Err(Error::Checkpoint("moment vectors do not match parameters".into()));
    }
    Ok(TrainState { c, theta, m, v, step, seed, history })
}

pub fn checkpoint_save(path: &Path, state: &TrainState, config_text: &str) -> Result<()> {
    std::fs::write(path, checkpoint_bytes(state, config_text))?;
    Ok(())
}

pub fn checkpoint_load(path: &Path, config_text: &str) -> Result<TrainState> {
    checkpoint_from_bytes(&std::fs::read(path)?, config_text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::SymmetricSystem;
    use crate::envelope::EnvelopeFamily;
    use crate::localnet::NetConfig;
    use crate::mesh::Mesh;
    use crate::problem::laplace_sine;
    use crate::quadrature::triangle_rule_36;
    use crate::linalg::SymMatrix;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn diag_system() -> SymmetricSystem {
        let a = SymMatrix::from_dense(&DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 4.0])).unwrap();
        SymmetricSystem { a, b: DVector::from_vec(vec![2.0, 8.0]) }
    }

    #[test]
    fn ritz_loss_examples() {
        let s = diag_system();
        assert_eq!(ritz_loss(&s, &DVector::zeros(2)).unwrap(), 0.0);
        assert_eq!(ritz_loss(&s, &DVector::from_vec(vec![1.0, 2.0])).unwrap(), -9.0);
        assert!(ritz_loss(&s, &DVector::zeros(3)).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            let d = DVector::from_fn(2, |_, _| rng.random_range(-0.1..0.1));
            assert!(ritz_loss(&s, &(DVector::from_vec(vec![1.0, 2.0]) + d)).unwrap() >= -9.0);
        }
    }

    #[test]
    fn adam_examples() {
        let cfg = TrainConfig::default();
        let mut st = TrainState {
            c: DVector::zeros(0),
            theta: vec![1.0, 1.0, 1.0],
            m: vec![0.0; 3],
            v: vec![0.0; 3],
            step: 0,
            seed: 0,
            history: vec![],
        };
        adam_step(&mut st, &[0.5, -2.0, 0.0], &cfg).unwrap();
        assert!((st.theta[0] - (1.0 - 3e-4)).abs() < 1e-10);
        assert!((st.theta[1] - (1.0 + 3e-4)).abs() < 1e-10);
        assert_eq!(st.theta[2], 1.0);
        let before = st.theta.clone();
        let m = st.m.clone();
        adam_step(&mut st, &[0.0; 3], &cfg).unwrap();
        assert_eq!(st.m, m.iter().map(|x| 0.9 * x).collect::<Vec<_>>());
        assert!(st.theta.iter().zip(&before).all(|(a, b)| (a - b).abs() <= 3e-4 * 3f64.sqrt()));
        let snapshot = st.clone();
        assert!(matches!(
            adam_step(&mut st, &[0.0, f64::NAN, 0.0], &cfg),
            Err(Error::TrainingDiverged { step: 2, index: 1 })
        ));
        assert_eq!(st, snapshot);
    }

    #[test]
    fn gradient_vanishes_without_network_coefficients() {
        let space = NNElementSpace::build(
            Arc::new(Mesh::unit_square(2).unwrap()),
            EnvelopeFamily::lagrange(2).unwrap(),
            NetConfig::default(),
            BoundaryCondition::Homogeneous,
            1,
            true,
        )
        .unwrap();
        let mut c = DVector::from_element(space.dim(), 1.0);
        for d in 0..space.n_dofs() {
            c[space.network_index(d).unwrap()] = 0.0;
        }
        let g = loss_parameter_gradient(&space, &laplace_sine(), &triangle_rule_36(), &c).unwrap();
        assert!(g.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn checkpoint_round_trip_and_refusals() {
        let state = TrainState {
            c: DVector::from_vec(vec![1.0, -2.5]),
            theta: vec![0.1, 0.2],
            m: vec![1e-3, -1e-3],
            v: vec![1e-6, 2e-6],
            step: 7,
            seed: 42,
            history: vec![
                HistoryEntry { step: 0, loss: -1.0, e_l2: Some(0.1), e_h1: None },
                HistoryEntry { step: 5, loss: -1.5, e_l2: None, e_h1: Some(0.3) },
            ],
        };
        let cfg = "mesh.n = 2\ntrain.lr = 0.0003\n";
        let bytes = checkpoint_bytes(&state, cfg);
        assert_eq!(checkpoint_from_bytes(&bytes, cfg).unwrap(), state);
        assert!(matches!(checkpoint_from_bytes(&bytes[..bytes.len() - 5], cfg), Err(Error::Checkpoint(_))));
        match checkpoint_from_bytes(&bytes, "mesh.n = 4\ntrain.lr = 0.0003\n") {
            Err(Error::ConfigMismatch { keys }) => assert_eq!(keys, vec!["mesh.n".to_string()]),
            other => panic!("{other:?}"),
        }
        let mut corrupt = bytes.clone();
        corrupt[30] ^= 1;
        assert!(checkpoint_from_bytes(&corrupt, cfg).is_err());
    }
}
