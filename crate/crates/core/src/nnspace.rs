//! The NN element space: envelope times local network, plus optional
//! envelope-times-constant partners.
//!
//! With constant augmentation each dof `d` owns two consecutive basis
//! functions, `2d` (envelope alone) and `2d + 1` (envelope times its
//! network), so the stiffness matrix has a 2x2 block per dof pair.

use std::sync::Arc;

use nalgebra::{DVector, Point2, Vector2};

use crate::envelope::{element_dof_map, enumerate_dofs, BoundaryCondition, DofSet, EnvelopeFamily, LocalShape};
use crate::error::{Error, Result};
use crate::localnet::{LocalNet, NetConfig, Tape};
use crate::mesh::{barycentric_gradients, to_physical, Mesh};

/// Which functions each dof contributes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisMode {
    /// `envelope * net` only.
    Network,
    /// `envelope * 1` and `envelope * net`.
    Augmented,
    /// `envelope * 1` only: the classical finite element space.
    ConstantOnly,
}

impl BasisMode {
    pub fn per_dof(self) -> usize {
        match self {
            BasisMode::Augmented => 2,
            _ => 1,
        }
    }

    pub fn has_network(self) -> bool {
        self != BasisMode::ConstantOnly
    }
}

/// Value and gradient of one basis function at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasisValue {
    pub index: usize,
    pub value: f64,
    pub grad: Vector2<f64>,
}

/// Everything about one dof evaluated at one point of one triangle.
#[derive(Debug, Clone, Copy)]
pub struct LocalDofEval {
    /// Position of the dof in `free ++ boundary`.
    pub dof: usize,
    pub envelope: f64,
    pub envelope_grad: Vector2<f64>,
    /// Network value and spatial gradient (zero in `ConstantOnly` mode).
    pub net: f64,
    pub net_grad: Vector2<f64>,
}

#[derive(Debug, Clone)]
pub struct NNElementSpace {
    pub mesh: Arc<Mesh>,
    pub dofs: DofSet,
    pub net_config: NetConfig,
    /// One network per dof, free dofs first; empty in `ConstantOnly` mode.
    pub nets: Vec<LocalNet>,
    pub mode: BasisMode,
    element_map: Vec<Vec<(usize, LocalShape)>>,
    bary_grads: Vec<[Vector2<f64>; 3]>,
}

/// Per-dof seed derived from the space seed (splitmix64 finaliser).
pub fn dof_seed(seed: u64, dof: usize) -> u64 {
    let mut z = seed.wrapping_add((dof as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl NNElementSpace {
    /// Builds the space; every network is initialised from `seed`.
    pub fn build(
        mesh: Arc<Mesh>,
        family: EnvelopeFamily,
        net_config: NetConfig,
        bc: BoundaryCondition,
        seed: u64,
        augment_constant: bool,
    ) -> Result<Self> {
        let mode = if augment_constant { BasisMode::Augmented } else { BasisMode::Network };
        Self::with_mode(mesh, family, net_config, bc, seed, mode)
    }

    /// Classical finite element space of the envelope family.
    pub fn fem(mesh: Arc<Mesh>, family: EnvelopeFamily, bc: BoundaryCondition) -> Result<Self> {
        Self::with_mode(mesh, family, NetConfig::default(), bc, 0, BasisMode::ConstantOnly)
    }

    pub fn with_mode(
        mesh: Arc<Mesh>,
        family: EnvelopeFamily,
        net_config: NetConfig,
        bc: BoundaryCondition,
        seed: u64,
        mode: BasisMode,
    ) -> Result<Self> {
        net_config.validate()?;
        if let EnvelopeFamily::Lagrange { order } = family {
            EnvelopeFamily::lagrange(order)?;
        }
        let dofs = enumerate_dofs(&mesh, family, bc);
        let nets = if mode.has_network() {
            (0..dofs.len())
                .map(|d| LocalNet::initialized(net_config, dof_seed(seed, d)))
                .collect::<Result<Vec<_>>>()?
        } else {
            Vec::new()
        };
        let element_map = element_dof_map(&mesh, dofs.all());
        let bary_grads = (0..mesh.n_triangles())
            .map(|t| barycentric_gradients(&mesh.triangle_vertices(t)))
            .collect::<Result<Vec<_>>>()?;
        Ok(NNElementSpace { mesh, dofs, net_config, nets, mode, element_map, bary_grads })
    }

    pub fn family(&self) -> EnvelopeFamily {
        self.dofs.family
    }

    pub fn bc(&self) -> BoundaryCondition {
        self.dofs.bc
    }

    /// Space dimension N.
    pub fn dim(&self) -> usize {
        self.dofs.len() * self.mode.per_dof()
    }

    /// Number of basis functions attached to free dofs; they come first.
    pub fn n_free_basis(&self) -> usize {
        self.dofs.free.len() * self.mode.per_dof()
    }

    pub fn n_dofs(&self) -> usize {
        self.dofs.len()
    }

    /// Basis index of dof `d`'s network function, if it has one.
    pub fn network_index(&self, d: usize) -> Option<usize> {
        match self.mode {
            BasisMode::Network => Some(d),
            BasisMode::Augmented => Some(2 * d + 1),
            BasisMode::ConstantOnly => None,
        }
    }

    /// Basis index of dof `d`'s constant-partner function, if it has one.
    pub fn constant_index(&self, d: usize) -> Option<usize> {
        match self.mode {
            BasisMode::Network => None,
            BasisMode::Augmented => Some(2 * d),
            BasisMode::ConstantOnly => Some(d),
        }
    }

    /// `(dof, is_network)` for basis index `i`.
    pub fn basis_owner(&self, i: usize) -> Result<(usize, bool)> {
        if i >= self.dim() {
            return Err(Error::IndexOutOfRange { index: i, len: self.dim() });
        }
        Ok(match self.mode {
            BasisMode::Network => (i, true),
            BasisMode::Augmented => (i / 2, i % 2 == 1),
            BasisMode::ConstantOnly => (i, false),
        })
    }

    pub fn params_per_net(&self) -> usize {
        if self.mode.has_network() {
            self.net_config.param_count()
        } else {
            0
        }
    }

    /// Concatenated parameters of all local networks.
    pub fn theta(&self) -> Vec<f64> {
        let mut theta = Vec::with_capacity(self.nets.len() * self.params_per_net());
        for net in &self.nets {
            theta.extend_from_slice(&net.params);
        }
        theta
    }

    pub fn theta_len(&self) -> usize {
        self.nets.len() * self.params_per_net()
    }

    pub fn set_theta(&mut self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.theta_len() {
            return Err(Error::DimensionMismatch { expected: self.theta_len(), got: theta.len() });
        }
        let p = self.params_per_net();
        for (net, chunk) in self.nets.iter_mut().zip(theta.chunks(p.max(1))) {
            net.params.copy_from_slice(chunk);
        }
        Ok(())
    }

    /// `(dof position, local shape)` pairs active on `triangle`.
    pub fn local_dofs(&self, triangle: usize) -> &[(usize, LocalShape)] {
        &self.element_map[triangle]
    }

    pub fn barycentric_gradients(&self, triangle: usize) -> &[Vector2<f64>; 3] {
        &self.bary_grads[triangle]
    }

    /// Evaluates every dof active on `triangle` at `lam`. When `tapes` is
    /// given, the network forward passes are recorded there, one per entry.
    pub fn eval_local(
        &self,
        triangle: usize,
        lam: &[f64; 3],
        out: &mut Vec<LocalDofEval>,
        mut tapes: Option<&mut Vec<Tape>>,
    ) {
        out.clear();
        let dlam = &self.bary_grads[triangle];
        let x = to_physical(&self.mesh.triangle_vertices(triangle), lam);
        if let Some(t) = tapes.as_deref_mut() {
            if t.len() < self.element_map[triangle].len() {
                t.resize_with(self.element_map[triangle].len(), Tape::default);
            }
        }
        for (k, &(dof, shape)) in self.element_map[triangle].iter().enumerate() {
            let (envelope, envelope_grad) = shape.value_grad(lam, dlam);
            let (net, net_grad) = if self.mode.has_network() {
                let (v, g) = match tapes.as_deref_mut() {
                    Some(t) => self.nets[dof].forward_tape([x.x, x.y], &mut t[k]),
                    None => self.nets[dof].forward_with_spatial_grad([x.x, x.y]),
                };
                (v, Vector2::new(g[0], g[1]))
            } else {
                (0.0, Vector2::zeros())
            };
            out.push(LocalDofEval { dof, envelope, envelope_grad, net, net_grad });
        }
    }

    /// Expands local dof evaluations into basis values.
    pub fn basis_values(&self, local: &[LocalDofEval], out: &mut Vec<BasisValue>) {
        out.clear();
        for e in local {
            if let Some(i) = self.constant_index(e.dof) {
                out.push(BasisValue { index: i, value: e.envelope, grad: e.envelope_grad });
            }
            if let Some(i) = self.network_index(e.dof) {
                out.push(BasisValue {
                    index: i,
                    value: e.envelope * e.net,
                    grad: e.envelope_grad * e.net + e.net_grad * e.envelope,
                });
            }
        }
    }

    /// Basis indices active on `triangle`, in the order `basis_values` emits them.
    pub fn local_basis_indices(&self, triangle: usize) -> Vec<usize> {
        let mut idx = Vec::new();
        for &(dof, _) in &self.element_map[triangle] {
            idx.extend(self.constant_index(dof));
            idx.extend(self.network_index(dof));
        }
        idx
    }

    /// Value and gradient of basis function `i` at a barycentric point of
    /// `triangle`; zero outside its support.
    pub fn basis_eval_grad(&self, i: usize, triangle: usize, lam: &[f64; 3]) -> Result<(f64, Vector2<f64>)> {
        self.basis_owner(i)?;
        if triangle >= self.mesh.n_triangles() {
            return Err(Error::IndexOutOfRange { index: triangle, len: self.mesh.n_triangles() });
        }
        let mut local = Vec::new();
        let mut vals = Vec::new();
        self.eval_local(triangle, lam, &mut local, None);
        self.basis_values(&local, &mut vals);
        Ok(vals
            .iter()
            .find(|b| b.index == i)
            .map_or((0.0, Vector2::zeros()), |b| (b.value, b.grad)))
    }

    /// `sum_i c_i phi_i` and its gradient at a barycentric point of `triangle`.
    pub fn combine_at(&self, c: &DVector<f64>, triangle: usize, lam: &[f64; 3]) -> Result<(f64, Vector2<f64>)> {
        if c.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: c.len() });
        }
        let mut local = Vec::new();
        let mut vals = Vec::new();
        self.eval_local(triangle, lam, &mut local, None);
        self.basis_values(&local, &mut vals);
        Ok(vals
            .iter()
            .fold((0.0, Vector2::zeros()), |(v, g), b| (v + c[b.index] * b.value, g + b.grad * c[b.index])))
    }

    /// `sum_i c_i phi_i(x)`; `x` must lie in the mesh.
    pub fn combine(&self, c: &DVector<f64>, x: &Point2<f64>) -> Result<f64> {
        Ok(self.combine_with_grad(c, x)?.0)
    }

    pub fn combine_grad(&self, c: &DVector<f64>, x: &Point2<f64>) -> Result<Vector2<f64>> {
        Ok(self.combine_with_grad(c, x)?.1)
    }

    pub fn combine_with_grad(&self, c: &DVector<f64>, x: &Point2<f64>) -> Result<(f64, Vector2<f64>)> {
        let (t, lam) = self
            .mesh
            .locate(x)
            .ok_or_else(|| Error::InvalidArgument(format!("point ({}, {}) is outside the mesh", x.x, x.y)))?;
        self.combine_at(c, t, &lam)
    }

    /// Embeds coefficients of the classical envelope space into this space's
    /// constant-partner slots.
    pub fn embed_fem_coefficients(&self, fem: &DVector<f64>) -> Result<DVector<f64>> {
        if fem.len() != self.n_dofs() {
            return Err(Error::DimensionMismatch { expected: self.n_dofs(), got: fem.len() });
        }
        let mut c = DVector::zeros(self.dim());
        for d in 0..self.n_dofs() {
            match self.constant_index(d) {
                Some(i) => c[i] = fem[d],
                None => return Err(Error::InvalidArgument("space has no constant partners".into())),
            }
        }
        Ok(c)
    }
}
