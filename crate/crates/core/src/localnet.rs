//! Small fully connected networks `R^2 -> R` attached to each envelope.
//!
//! The spatial gradient is carried forward alongside the value as
//! `(a, da/dx, da/dy)` triples. Parameter gradients of any linear
//! functional `s_v * value + s_g . grad` are obtained by reverse-mode
//! sweep over that forward pass.

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Sine,
    Tanh,
    Identity,
}

impl Activation {
    /// `(s(z), s'(z), s''(z))`.
    #[inline]
    fn eval(self, z: f64) -> (f64, f64, f64) {
        match self {
            Activation::Sine => {
                let (s, c) = z.sin_cos();
                (s, c, -s)
            }
            Activation::Tanh => {
                let t = z.tanh();
                let d = 1.0 - t * t;
                (t, d, -2.0 * t * d)
            }
            Activation::Identity => (z, 1.0, 0.0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Sine => "sine",
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sine" | "sin" => Ok(Activation::Sine),
            "tanh" => Ok(Activation::Tanh),
            "identity" | "linear" => Ok(Activation::Identity),
            other => Err(Error::InvalidArgument(format!("unknown activation `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NetConfig {
    pub hidden_layers: usize,
    pub width: usize,
    pub activation: Activation,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig { hidden_layers: 2, width: 16, activation: Activation::Sine }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_layers == 0 || self.width == 0 {
            return Err(Error::InvalidArgument(format!(
                "network needs at least one hidden layer of width >= 1, got {} x {}",
                self.hidden_layers, self.width
            )));
        }
        Ok(())
    }

    /// `[2, width, ..., width, 1]`.
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![2];
        sizes.extend(std::iter::repeat_n(self.width, self.hidden_layers));
        sizes.push(1);
        sizes
    }

    /// Sum over layers of `in * out + out`.
    pub fn param_count(&self) -> usize {
        self.layer_sizes().windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}

/// Glorot-uniform weights and zero biases. Each layer stores its weight
/// matrix row-major (`out x in`) followed by its bias vector.
pub fn init_params(config: &NetConfig, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut theta = Vec::with_capacity(config.param_count());
    for w in config.layer_sizes().windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        theta.extend((0..fan_in * fan_out).map(|_| dist.sample(&mut rng)));
        theta.extend(std::iter::repeat_n(0.0, fan_out));
    }
    theta
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalNet {
    pub config: NetConfig,
    pub params: Vec<f64>,
}

/// Forward cache for one evaluation: per layer the input triple and the
/// activation derivatives.
#[derive(Debug, Default, Clone)]
pub struct Tape {
    // Inputs of each layer (value, d/dx, d/dy), concatenated.
    a: Vec<f64>,
    ax: Vec<f64>,
    ay: Vec<f64>,
    // Pre-activation tangents and activation derivatives of hidden layers.
    zx: Vec<f64>,
    zy: Vec<f64>,
    d1: Vec<f64>,
    d2: Vec<f64>,
    // Adjoint scratch.
    ba: Vec<f64>,
    bax: Vec<f64>,
    bay: Vec<f64>,
}

impl LocalNet {
    pub fn new(config: NetConfig, params: Vec<f64>) -> Result<Self> {
        config.validate()?;
        if params.len() != config.param_count() {
            return Err(Error::DimensionMismatch { expected: config.param_count(), got: params.len() });
        }
        Ok(LocalNet { config, params })
    }

    pub fn initialized(config: NetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        Ok(LocalNet { config, params: init_params(&config, seed) })
    }

    pub fn zeros(config: NetConfig) -> Result<Self> {
        config.validate()?;
        Ok(LocalNet { params: vec![0.0; config.param_count()], config })
    }

    pub fn forward(&self, x: [f64; 2]) -> f64 {
        self.forward_with_spatial_grad(x).0
    }

    /// Network value and exact spatial gradient.
    pub fn forward_with_spatial_grad(&self, x: [f64; 2]) -> (f64, [f64; 2]) {
        let mut tape = Tape::default();
        self.forward_tape(x, &mut tape)
    }

    /// Forward pass recording what the reverse sweep needs.
    pub fn forward_tape(&self, x: [f64; 2], tape: &mut Tape) -> (f64, [f64; 2]) {
        let width = self.config.width;
        let hidden = self.config.hidden_layers;
        let act = self.config.activation;
        tape.a.clear();
        tape.ax.clear();
        tape.ay.clear();
        tape.zx.clear();
        tape.zy.clear();
        tape.d1.clear();
        tape.d2.clear();
        tape.a.extend_from_slice(&x);
        tape.ax.extend_from_slice(&[1.0, 0.0]);
        tape.ay.extend_from_slice(&[0.0, 1.0]);

        let p = &self.params;
        let mut offset = 0;
        let mut in_start = 0;
        let mut n_in = 2;
        for _ in 0..hidden {
            let w = &p[offset..offset + width * n_in];
            let b = &p[offset + width * n_in..offset + width * n_in + width];
            for o in 0..width {
                let row = &w[o * n_in..(o + 1) * n_in];
                let mut z = b[o];
                let mut zx = 0.0;
                let mut zy = 0.0;
                for k in 0..n_in {
                    z += row[k] * tape.a[in_start + k];
                    zx += row[k] * tape.ax[in_start + k];
                    zy += row[k] * tape.ay[in_start + k];
                }
                let (s, d1, d2) = act.eval(z);
                tape.zx.push(zx);
                tape.zy.push(zy);
                tape.d1.push(d1);
                tape.d2.push(d2);
                tape.a.push(s);
                tape.ax.push(d1 * zx);
                tape.ay.push(d1 * zy);
            }
            offset += width * n_in + width;
            in_start += n_in;
            n_in = width;
        }

        let w = &p[offset..offset + n_in];
        let b = p[offset + n_in];
        let mut value = b;
        let mut gx = 0.0;
        let mut gy = 0.0;
        for k in 0..n_in {
            value += w[k] * tape.a[in_start + k];
            gx += w[k] * tape.ax[in_start + k];
            gy += w[k] * tape.ay[in_start + k];
        }
        (value, [gx, gy])
    }

    /// Accumulates into `grad` the parameter gradient of
    /// `seed_value * value + seed_grad . grad_x value` at `x`.
    pub fn backprop_theta(&self, x: [f64; 2], seed_value: f64, seed_grad: [f64; 2], grad: &mut [f64]) {
        let mut tape = Tape::default();
        self.forward_tape(x, &mut tape);
        self.backprop_tape(&mut tape, seed_value, seed_grad, grad);
    }

    /// Reverse sweep over a tape filled by `forward_tape` at the same parameters.
    pub fn backprop_tape(&self, tape: &mut Tape, seed_value: f64, seed_grad: [f64; 2], grad: &mut [f64]) {
        debug_assert_eq!(grad.len(), self.params.len());
        let width = self.config.width;
        let hidden = self.config.hidden_layers;
        let p = &self.params;

        // Layer offsets into params and into the tape's activation arrays.
        let mut param_offsets = Vec::with_capacity(hidden + 1);
        let mut input_offsets = Vec::with_capacity(hidden + 1);
        let mut off = 0;
        let mut a_off = 0;
        let mut n_in = 2;
        for _ in 0..hidden {
            param_offsets.push(off);
            input_offsets.push(a_off);
            off += width * n_in + width;
            a_off += n_in;
            n_in = width;
        }
        param_offsets.push(off);
        input_offsets.push(a_off);

        // Output layer.
        let out_in = input_offsets[hidden];
        let off = param_offsets[hidden];
        let [sgx, sgy] = seed_grad;
        tape.ba.clear();
        tape.bax.clear();
        tape.bay.clear();
        for k in 0..width {
            let a = tape.a[out_in + k];
            let ax = tape.ax[out_in + k];
            let ay = tape.ay[out_in + k];
            grad[off + k] += seed_value * a + sgx * ax + sgy * ay;
            let wk = p[off + k];
            tape.ba.push(seed_value * wk);
            tape.bax.push(sgx * wk);
            tape.bay.push(sgy * wk);
        }
        grad[off + width] += seed_value;

        // Hidden layers, last to first. `ba/bax/bay` hold adjoints of this
        // layer's outputs on entry and of its inputs on exit.
        let mut zbar = vec![0.0; width];
        let mut zxbar = vec![0.0; width];
        let mut zybar = vec![0.0; width];
        for l in (0..hidden).rev() {
            let n_in = if l == 0 { 2 } else { width };
            let in_off = input_offsets[l];
            let off = param_offsets[l];
            let t0 = l * width;
            for o in 0..width {
                let d1 = tape.d1[t0 + o];
                let d2 = tape.d2[t0 + o];
                zbar[o] = tape.ba[o] * d1 + d2 * (tape.bax[o] * tape.zx[t0 + o] + tape.bay[o] * tape.zy[t0 + o]);
                zxbar[o] = tape.bax[o] * d1;
                zybar[o] = tape.bay[o] * d1;
            }
            for o in 0..width {
                let row = off + o * n_in;
                for k in 0..n_in {
                    grad[row + k] += zbar[o] * tape.a[in_off + k]
                        + zxbar[o] * tape.ax[in_off + k]
                        + zybar[o] * tape.ay[in_off + k];
                }
                grad[off + width * n_in + o] += zbar[o];
            }
            if l > 0 {
                // Adjoints of this layer's inputs.
                let mut ba = vec![0.0; n_in];
                let mut bax = vec![0.0; n_in];
                let mut bay = vec![0.0; n_in];
                for o in 0..width {
                    let row = off + o * n_in;
                    for k in 0..n_in {
                        let w = p[row + k];
                        ba[k] += w * zbar[o];
                        bax[k] += w * zxbar[o];
                        bay[k] += w * zybar[o];
                    }
                }
                tape.ba = ba;
                tape.bax = bax;
                tape.bay = bay;
            }
        }
    }
}
