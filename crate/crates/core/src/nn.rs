//! Multilayer perceptrons: ELU activation, tape-recorded forward passes and
//! hand-derived reverse-mode gradients.
//!
//! Networks here are plain chains of dense layers, so instead of a general
//! autodiff graph each forward pass records per-layer pre/post activations
//! into a [`Tape`] and `backward` replays the chain rule layer by layer.
//! Gradients are exact; the test suite checks them against central finite
//! differences.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, Matrix};

/// Exponential linear unit with α = 1: `x` for `x > 0`, `exp(x) − 1` otherwise.
///
/// Continuously differentiable, with derivative 1 for `x > 0` and `exp(x)`
/// for `x ≤ 0`.
pub fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp() - 1.0
    }
}

/// Derivative of [`elu`] at pre-activation `x`.
pub fn elu_prime(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        x.exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Elu,
    Identity,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Elu => "elu",
            Activation::Identity => "identity",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "elu" => Ok(Activation::Elu),
            "identity" => Ok(Activation::Identity),
            other => Err(Error::format(format!("unknown activation '{other}'"))),
        }
    }

    fn apply(self, pre: &mut [f64]) {
        if self == Activation::Elu {
            for v in pre.iter_mut() {
                *v = elu(*v);
            }
        }
    }

    /// Derivative at each pre-activation.
    fn derivative(self, pre: &f64) -> f64 {
        match self {
            Activation::Elu => elu_prime(*pre),
            Activation::Identity => 1.0,
        }
    }
}

/// One dense layer `y = act(W x + b)` with a row-major `out × in` weight.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }
}

/// An MLP as an ordered list of layers with chaining dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    layers: Vec<Layer>,
}

impl MlpParams {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::param("an MLP needs at least one layer"));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::shape(format!(
                    "layer {} outputs {} but layer {} expects {}",
                    i,
                    pair[0].out_dim(),
                    i + 1,
                    pair[1].in_dim()
                )));
            }
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.out_dim() {
                return Err(Error::shape(format!(
                    "layer {} bias length {} != out dim {}",
                    i,
                    l.bias.len(),
                    l.out_dim()
                )));
            }
            if !l.weight.is_finite() || !l.bias.iter().all(|v| v.is_finite()) {
                return Err(Error::numeric(format!("layer {i} has non-finite entries")));
            }
        }
        Ok(MlpParams { layers })
    }

    /// Glorot-uniform initialized network over the dimension chain `dims`,
    /// ELU on hidden layers and Identity on the last.
    pub fn glorot(dims: &[usize], rng: &mut ChaCha8Rng) -> Self {
        assert!(dims.len() >= 2, "need at least input and output dims");
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for (i, io) in dims.windows(2).enumerate() {
            let (fan_in, fan_out) = (io[0], io[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let mut weight = Matrix::zeros(fan_out, fan_in);
            for w in weight.data_mut() {
                *w = rng.gen_range(-limit..limit);
            }
            let activation = if i + 2 == dims.len() {
                Activation::Identity
            } else {
                Activation::Elu
            };
            layers.push(Layer {
                weight,
                bias: vec![0.0; fan_out],
                activation,
            });
        }
        MlpParams { layers }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Mutable layer access for optimizers and deserialization. Callers must
    /// not change layer shapes.
    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.data().len() + l.bias.len())
            .sum()
    }

    /// Forward pass recording all intermediates for [`MlpParams::backward`].
    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, Tape)> {
        if input.len() != self.in_dim() {
            return Err(Error::shape(format!(
                "input length {} != network input dim {}",
                input.len(),
                self.in_dim()
            )));
        }
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post = Vec::with_capacity(self.layers.len());
        let mut current = input;
        for layer in &self.layers {
            let mut z = layer.bias.clone();
            for (r, zi) in z.iter_mut().enumerate() {
                *zi += dot(layer.weight.row(r), current);
            }
            pre.push(z.clone());
            layer.activation.apply(&mut z);
            post.push(z);
            current = post.last().unwrap();
        }
        let output = post.last().unwrap().clone();
        Ok((
            output,
            Tape {
                input: input.to_vec(),
                pre,
                post,
            },
        ))
    }

    /// Reverse-mode gradients of `⟨grad_output, forward(input)⟩` with respect
    /// to every weight, bias and the input.
    ///
    /// `tape` must come from a forward pass through these same parameters.
    /// Parameter gradients are accumulated into `grads` (callers zero or
    /// reuse them across a batch); the input gradient is returned.
    pub fn backward_into(
        &self,
        tape: &Tape,
        grad_output: &[f64],
        grads: &mut MlpGrads,
    ) -> Result<Vec<f64>> {
        if tape.pre.len() != self.layers.len() {
            return Err(Error::shape("tape layer count mismatch".to_string()));
        }
        if grad_output.len() != self.out_dim() {
            return Err(Error::shape(format!(
                "grad_output length {} != output dim {}",
                grad_output.len(),
                self.out_dim()
            )));
        }
        if grads.layers.len() != self.layers.len() {
            return Err(Error::shape("gradient buffer layer count mismatch".to_string()));
        }

        let mut g = grad_output.to_vec();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let pre = &tape.pre[l];
            if pre.len() != layer.out_dim() {
                return Err(Error::shape(format!("tape layer {l} width mismatch")));
            }
            // dz = g ⊙ act'(pre)
            let mut dz = g;
            for (d, p) in dz.iter_mut().zip(pre) {
                *d *= layer.activation.derivative(p);
            }
            let below: &[f64] = if l == 0 { &tape.input } else { &tape.post[l - 1] };
            let gl = &mut grads.layers[l];
            for (r, &dzr) in dz.iter().enumerate() {
                axpy(dzr, below, gl.d_weight.row_mut(r));
                gl.d_bias[r] += dzr;
            }
            // g = Wᵀ dz, for the layer below.
            let mut gnext = vec![0.0; layer.in_dim()];
            for (r, &dzr) in dz.iter().enumerate() {
                axpy(dzr, layer.weight.row(r), &mut gnext);
            }
            g = gnext;
        }
        Ok(g)
    }

    /// Convenience wrapper over [`MlpParams::backward_into`] with fresh
    /// zeroed gradient buffers.
    pub fn backward(&self, tape: &Tape, grad_output: &[f64]) -> Result<(MlpGrads, Vec<f64>)> {
        let mut grads = MlpGrads::zeros_like(self);
        let grad_input = self.backward_into(tape, grad_output, &mut grads)?;
        Ok((grads, grad_input))
    }
}

/// Per-layer intermediates recorded by a forward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    input: Vec<f64>,
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
}

impl Tape {
    pub fn output(&self) -> &[f64] {
        self.post.last().unwrap()
    }
}

/// Gradient buffers shaped like an [`MlpParams`].
#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub layers: Vec<LayerGrads>,
}

#[derive(Debug, Clone)]
pub struct LayerGrads {
    pub d_weight: Matrix,
    pub d_bias: Vec<f64>,
}

impl MlpGrads {
    pub fn zeros_like(params: &MlpParams) -> Self {
        MlpGrads {
            layers: params
                .layers()
                .iter()
                .map(|l| LayerGrads {
                    d_weight: Matrix::zeros(l.out_dim(), l.in_dim()),
                    d_bias: vec![0.0; l.out_dim()],
                })
                .collect(),
        }
    }

    pub fn zero(&mut self) {
        for l in &mut self.layers {
            l.d_weight.data_mut().fill(0.0);
            l.d_bias.fill(0.0);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            for v in l.d_weight.data_mut() {
                *v *= s;
            }
            for v in &mut l.d_bias {
                *v *= s;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.d_weight.is_finite() && l.d_bias.iter().all(|v| v.is_finite()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn single_layer(weight: Matrix, bias: Vec<f64>, activation: Activation) -> MlpParams {
        MlpParams::new(vec![Layer {
            weight,
            bias,
            activation,
        }])
        .unwrap()
    }

    #[test]
    fn elu_pinned_values() {
        assert_eq!(elu(0.0), 0.0);
        assert_eq!(elu(1.0), 1.0);
        assert!((elu(-20.0) - ((-20.0f64).exp() - 1.0)).abs() < 1e-15);
        assert!((elu(-20.0) + 1.0 - 2.061e-9).abs() < 1e-11);
    }

    #[test]
    fn elu_is_smooth_at_origin() {
        // Derivative 1 from both sides; symmetric secant converges to 2h.
        for &h in &[1e-3, 1e-5, 1e-7] {
            let secant = elu(h) - elu(-h);
            assert!((secant - 2.0 * h).abs() < h * h);
        }
        assert_eq!(elu_prime(0.0), 1.0);
        assert!((elu_prime(-1e-12) - 1.0).abs() < 1e-11);
    }

    #[test]
    fn identity_network_passes_input_through() {
        let net = single_layer(
            Matrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]),
            vec![0.0, 0.0],
            Activation::Identity,
        );
        let (out, _) = net.forward(&[1.0, 2.0]).unwrap();
        assert_eq!(out, vec![1.0, 2.0]);
    }

    #[test]
    fn hand_composed_elu_layer() {
        // W = [[2]], b = [1], input -3 → elu(-5).
        let net = single_layer(
            Matrix::from_vec(1, 1, vec![2.0]),
            vec![1.0],
            Activation::Elu,
        );
        let (out, _) = net.forward(&[-3.0]).unwrap();
        assert!((out[0] - ((-5.0f64).exp() - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn forward_matches_straight_line_evaluation() {
        // Independent re-evaluation of the same affine/ELU chain, no tape.
        let mut r = rng::seeded(42);
        let net = MlpParams::glorot(&[3, 5, 2], &mut r);
        let x = rng::normal_vec(&mut r, 3);
        let (out, _) = net.forward(&x).unwrap();

        let mut h = x.clone();
        for layer in net.layers() {
            let mut next = vec![0.0; layer.out_dim()];
            for i in 0..layer.out_dim() {
                let mut s = layer.bias[i];
                for j in 0..layer.in_dim() {
                    s += layer.weight.row(i)[j] * h[j];
                }
                next[i] = match layer.activation {
                    Activation::Elu => elu(s),
                    Activation::Identity => s,
                };
            }
            h = next;
        }
        for (a, b) in out.iter().zip(&h) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let mut r = rng::seeded(1);
        let net = MlpParams::glorot(&[4, 8, 3], &mut r);
        let x = rng::normal_vec(&mut r, 4);
        let (a, _) = net.forward(&x).unwrap();
        let (b, _) = net.forward(&x).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn forward_rejects_wrong_input_length() {
        let mut r = rng::seeded(1);
        let net = MlpParams::glorot(&[4, 3], &mut r);
        assert!(matches!(net.forward(&[0.0; 3]), Err(Error::Shape(_))));
    }

    #[test]
    fn linear_backward_is_w_transpose() {
        let w = Matrix::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let net = single_layer(w.clone(), vec![0.5, -0.5], Activation::Identity);
        let (_, tape) = net.forward(&[0.1, 0.2, 0.3]).unwrap();
        let g = vec![1.0, -2.0];
        let (_, grad_in) = net.backward(&tape, &g).unwrap();
        let mut expect = vec![0.0; 3];
        w.matvec_t(&g, &mut expect);
        assert_eq!(grad_in, expect);
    }

    #[test]
    fn zero_grad_output_gives_zero_gradients() {
        let mut r = rng::seeded(9);
        let net = MlpParams::glorot(&[3, 4, 2], &mut r);
        let x = rng::normal_vec(&mut r, 3);
        let (_, tape) = net.forward(&x).unwrap();
        let (grads, grad_in) = net.backward(&tape, &[0.0, 0.0]).unwrap();
        assert!(grad_in.iter().all(|&v| v == 0.0));
        for l in &grads.layers {
            assert!(l.d_weight.data().iter().all(|&v| v == 0.0));
            assert!(l.d_bias.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn chaining_dimensions_are_validated() {
        let a = Layer {
            weight: Matrix::zeros(3, 2),
            bias: vec![0.0; 3],
            activation: Activation::Elu,
        };
        let b = Layer {
            weight: Matrix::zeros(2, 4),
            bias: vec![0.0; 2],
            activation: Activation::Identity,
        };
        assert!(matches!(MlpParams::new(vec![a, b]), Err(Error::Shape(_))));
    }
}
