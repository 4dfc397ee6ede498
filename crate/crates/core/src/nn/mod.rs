//! Minimal dense feed-forward substrate: reverse-mode gradients, mean squared
//! error, Adam, and a finite-difference gradient check.
//!
//! Everything is `f64` and single-threaded; with a fixed seed two runs produce
//! bit-identical trajectories, which the reproducibility tests rely on.

mod matrix;
mod optim;

pub use matrix::Matrix;
pub use optim::{AdamConfig, AdamState};

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

const NET_MAGIC: &[u8; 6] = b"FMNET\x01";

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch in {context}: expected {expected}, found {found}")]
    ShapeMismatch { context: &'static str, expected: String, found: String },
    #[error("malformed checkpoint: {0}")]
    MalformedCheckpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
}

impl Activation {
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Identity => v,
            Activation::Relu => v.max(0.0),
        }
    }

    /// Derivative in terms of the post-activation value. The ReLU subgradient
    /// at 0 is 0.
    fn derivative_from_output(self, out: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if out > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    fn code(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Relu => 1,
        }
    }

    fn from_code(code: u8) -> Result<Self, NnError> {
        match code {
            0 => Ok(Activation::Identity),
            1 => Ok(Activation::Relu),
            other => Err(NnError::MalformedCheckpoint(format!("unknown activation code {other}"))),
        }
    }
}

/// One affine layer: `out = activation(x · weights + bias)`, with `weights`
/// shaped `d_in × d_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    fn d_in(&self) -> usize {
        self.weights.rows()
    }

    fn d_out(&self) -> usize {
        self.weights.cols()
    }
}

/// A stack of dense layers.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    layers: Vec<Layer>,
}

/// Per-layer activations cached by [`DenseNet::forward`]; index 0 is the
/// input batch itself.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub activations: Vec<Matrix>,
}

impl ForwardPass {
    pub fn output(&self) -> &Matrix {
        self.activations.last().expect("forward pass always has an input")
    }
}

/// Parameter gradients mirroring the layer structure.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub layers: Vec<LayerGrads>,
}

#[derive(Debug, Clone)]
pub struct LayerGrads {
    pub d_weights: Matrix,
    pub d_bias: Vec<f64>,
}

impl Gradients {
    /// Zero gradients shaped like the given net.
    pub fn zeros_like(net: &DenseNet) -> Self {
        Gradients {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGrads {
                    d_weights: Matrix::zeros(l.d_in(), l.d_out()),
                    d_bias: vec![0.0; l.d_out()],
                })
                .collect(),
        }
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.d_weights.as_slice(), l.d_bias.as_slice()])
            .collect()
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.d_weights.add_assign(&b.d_weights);
            for (x, y) in a.d_bias.iter_mut().zip(&b.d_bias) {
                *x += y;
            }
        }
    }
}

impl DenseNet {
    /// Builds a net with Glorot-uniform weights and zero biases,
    /// deterministically from the seed.
    pub fn glorot(dims: &[usize], activations: &[Activation], seed: u64) -> Self {
        assert!(dims.len() >= 2, "need input and output dims");
        assert_eq!(activations.len(), dims.len() - 1, "one activation per layer");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = dims
            .windows(2)
            .zip(activations)
            .map(|(w, &activation)| {
                let (d_in, d_out) = (w[0], w[1]);
                let limit = (6.0 / (d_in + d_out) as f64).sqrt();
                let mut weights = Matrix::zeros(d_in, d_out);
                for v in weights.as_mut_slice() {
                    *v = rng.random_range(-limit..limit);
                }
                Layer { weights, bias: vec![0.0; d_out], activation }
            })
            .collect();
        DenseNet { layers }
    }

    pub fn from_layers(layers: Vec<Layer>) -> Self {
        for pair in layers.windows(2) {
            assert_eq!(pair[0].d_out(), pair[1].d_in(), "adjacent layer dims must chain");
        }
        DenseNet { layers }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, Layer::d_in)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, Layer::d_out)
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim()];
        dims.extend(self.layers.iter().map(Layer::d_out));
        dims
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.d_in() * l.d_out() + l.d_out()).sum()
    }

    /// Flat views of every parameter tensor, weights then bias per layer,
    /// in layer order. Matches [`Gradients::tensors`].
    pub fn param_tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                let Layer { weights, bias, .. } = l;
                [weights.as_mut_slice(), bias.as_mut_slice()]
            })
            .collect()
    }

    /// Affine-then-activation composition over the batch `x` (`batch × d_in`).
    pub fn forward(&self, x: &Matrix) -> Result<ForwardPass, NnError> {
        if x.cols() != self.input_dim() {
            return Err(NnError::ShapeMismatch {
                context: "forward",
                expected: format!("input width {}", self.input_dim()),
                found: format!("{}", x.cols()),
            });
        }
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x.clone());
        for layer in &self.layers {
            let prev = activations.last().expect("non-empty");
            let mut z = prev.matmul(&layer.weights);
            for i in 0..z.rows() {
                let row = z.row_mut(i);
                for (v, b) in row.iter_mut().zip(&layer.bias) {
                    *v = layer.activation.apply(*v + b);
                }
            }
            activations.push(z);
        }
        Ok(ForwardPass { activations })
    }

    /// Exact reverse-mode gradients for the pass, given `dLoss/dOutput`.
    /// Also returns `dLoss/dInput` so callers can chain through composed nets.
    pub fn backward(
        &self,
        pass: &ForwardPass,
        d_output: &Matrix,
    ) -> Result<(Gradients, Matrix), NnError> {
        let out = pass.output();
        if d_output.rows() != out.rows() || d_output.cols() != out.cols() {
            return Err(NnError::ShapeMismatch {
                context: "backward",
                expected: format!("{}x{}", out.rows(), out.cols()),
                found: format!("{}x{}", d_output.rows(), d_output.cols()),
            });
        }
        let mut layer_grads: Vec<LayerGrads> = Vec::with_capacity(self.layers.len());
        let mut d_post = d_output.clone();
        for (idx, layer) in self.layers.iter().enumerate().rev() {
            let post = &pass.activations[idx + 1];
            let prev = &pass.activations[idx];
            // d_pre = d_post ⊙ activation'(post)
            let mut d_pre = d_post;
            for i in 0..d_pre.rows() {
                let post_row = post.row(i);
                for (g, &o) in d_pre.row_mut(i).iter_mut().zip(post_row) {
                    *g *= layer.activation.derivative_from_output(o);
                }
            }
            let d_weights = prev.matmul_transpose_a(&d_pre);
            let mut d_bias = vec![0.0; layer.d_out()];
            for i in 0..d_pre.rows() {
                for (b, &g) in d_bias.iter_mut().zip(d_pre.row(i)) {
                    *b += g;
                }
            }
            d_post = d_pre.matmul_transpose_b(&layer.weights);
            layer_grads.push(LayerGrads { d_weights, d_bias });
        }
        layer_grads.reverse();
        Ok((Gradients { layers: layer_grads }, d_post))
    }

    /// Serializes dims, activations, and row-major parameters. Parameters are
    /// written as raw IEEE-754 bits, so the round-trip is bit-exact.
    pub fn write_to(&self, w: &mut impl Write) -> Result<(), NnError> {
        w.write_all(NET_MAGIC)?;
        w.write_all(&(self.layers.len() as u32).to_le_bytes())?;
        for layer in &self.layers {
            w.write_all(&(layer.d_in() as u32).to_le_bytes())?;
            w.write_all(&(layer.d_out() as u32).to_le_bytes())?;
            w.write_all(&[layer.activation.code()])?;
            for v in layer.weights.as_slice() {
                w.write_all(&v.to_le_bytes())?;
            }
            for v in &layer.bias {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self, NnError> {
        let mut magic = [0u8; 6];
        r.read_exact(&mut magic)?;
        if &magic != NET_MAGIC {
            return Err(NnError::MalformedCheckpoint("bad magic/version tag".to_string()));
        }
        let n_layers = read_u32(r)? as usize;
        let mut layers = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let d_in = read_u32(r)? as usize;
            let d_out = read_u32(r)? as usize;
            let mut code = [0u8; 1];
            r.read_exact(&mut code)?;
            let activation = Activation::from_code(code[0])?;
            let mut weights = Matrix::zeros(d_in, d_out);
            for v in weights.as_mut_slice() {
                *v = read_f64(r)?;
            }
            let mut bias = vec![0.0; d_out];
            for v in &mut bias {
                *v = read_f64(r)?;
            }
            layers.push(Layer { weights, bias, activation });
        }
        Ok(DenseNet::from_layers(layers))
    }
}

pub(crate) fn read_u32(r: &mut impl Read) -> Result<u32, NnError> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

pub(crate) fn read_f64(r: &mut impl Read) -> Result<f64, NnError> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

pub(crate) fn read_u64(r: &mut impl Read) -> Result<u64, NnError> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

/// Mean over batch and coordinates of squared differences, with the matching
/// gradient w.r.t. `x_hat`.
pub fn mse_loss(x_hat: &Matrix, x: &Matrix) -> Result<(f64, Matrix), NnError> {
    if x_hat.rows() != x.rows() || x_hat.cols() != x.cols() {
        return Err(NnError::ShapeMismatch {
            context: "mse_loss",
            expected: format!("{}x{}", x.rows(), x.cols()),
            found: format!("{}x{}", x_hat.rows(), x_hat.cols()),
        });
    }
    let count = (x.rows() * x.cols()) as f64;
    let mut grad = Matrix::zeros(x.rows(), x.cols());
    let mut loss = 0.0;
    for i in 0..x.rows() {
        let (h, t) = (x_hat.row(i), x.row(i));
        let g = grad.row_mut(i);
        for k in 0..h.len() {
            let diff = h[k] - t[k];
            loss += diff * diff;
            g[k] = 2.0 * diff / count;
        }
    }
    Ok((loss / count, grad))
}

/// Compares `analytic` against central finite differences of `loss` over the
/// net's parameters and returns the worst error, measured relative with a
/// unit floor: `|fd - analytic| / max(|fd|, |analytic|, 1)`.
///
/// Nets above 10⁴ parameters are checked on a fixed-seed subsample of 10⁴
/// coordinates.
pub fn grad_check<F>(net: &DenseNet, loss: F, analytic: &Gradients) -> f64
where
    F: Fn(&DenseNet) -> f64,
{
    const STEP: f64 = 1e-5;
    const MAX_COORDS: usize = 10_000;

    let tensor_lens: Vec<usize> = {
        let mut probe = net.clone();
        probe.param_tensors_mut().iter().map(|t| t.len()).collect()
    };
    let total: usize = tensor_lens.iter().sum();

    let coords: Vec<(usize, usize)> = if total <= MAX_COORDS {
        tensor_lens
            .iter()
            .enumerate()
            .flat_map(|(t, &len)| (0..len).map(move |k| (t, k)))
            .collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(0xC0FFEE);
        (0..MAX_COORDS)
            .map(|_| {
                let mut pick = rng.random_range(0..total);
                for (t, &len) in tensor_lens.iter().enumerate() {
                    if pick < len {
                        return (t, pick);
                    }
                    pick -= len;
                }
                unreachable!("pick always lands inside a tensor")
            })
            .collect()
    };

    let analytic_tensors = analytic.tensors();
    let mut worst = 0.0f64;
    for (t, k) in coords {
        let mut plus = net.clone();
        plus.param_tensors_mut()[t][k] += STEP;
        let mut minus = net.clone();
        minus.param_tensors_mut()[t][k] -= STEP;
        let fd = (loss(&plus) - loss(&minus)) / (2.0 * STEP);
        let a = analytic_tensors[t][k];
        let err = (fd - a).abs() / fd.abs().max(a.abs()).max(1.0);
        if err > worst {
            worst = err;
        }
    }
    worst
}
