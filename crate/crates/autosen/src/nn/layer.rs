//! Layer kinds and the sequential stack that runs them.
//!
//! A stack validates every intermediate for finiteness on both passes. ReLU
//! maps NaN to zero, so a NaN escaping one layer would otherwise vanish
//! silently instead of failing the run.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{matmul, transpose, Tensor};

use super::conv::{Conv2d, ConvTranspose2d};

/// Uniform weight init on (-sqrt(6/fan_in), sqrt(6/fan_in)).
pub(crate) fn uniform_init(rng: &mut ChaCha8Rng, n: usize, fan_in: usize) -> Vec<f64> {
    let limit = (6.0 / fan_in as f64).sqrt();
    (0..n).map(|_| rng.random_range(-limit..limit)).collect()
}

/// Fully connected layer. Weight layout `(out_dim, in_dim)`; accepts any
/// input shape whose element count equals `in_dim` and emits `[out_dim]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Dense {
    pub fn new(in_dim: usize, out_dim: usize, weight: Tensor, bias: Tensor) -> Result<Self> {
        if weight.shape() != [out_dim, in_dim] {
            return Err(Error::ShapeMismatch(format!(
                "dense weight {:?}, expected [{}, {}]",
                weight.shape(),
                out_dim,
                in_dim
            )));
        }
        if bias.shape() != [out_dim] {
            return Err(Error::ShapeMismatch(format!(
                "dense bias {:?}, expected [{}]",
                bias.shape(),
                out_dim
            )));
        }
        Ok(Dense {
            in_dim,
            out_dim,
            weight,
            bias,
        })
    }

    /// Uniform init with limit sqrt(6 / in_dim); zero bias.
    pub fn init(in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        let weight = Tensor::from_vec(
            &[out_dim, in_dim],
            uniform_init(rng, out_dim * in_dim, in_dim),
        )?;
        Self::new(in_dim, out_dim, weight, Tensor::zeros(&[out_dim]))
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        if x.len() != self.in_dim {
            return Err(Error::ShapeMismatch(format!(
                "dense input has {} elements, expected {}",
                x.len(),
                self.in_dim
            )));
        }
        let mut out = matmul(self.weight.data(), self.out_dim, self.in_dim, x.data(), 1);
        for (o, b) in out.iter_mut().zip(self.bias.data().iter()) {
            *o += b;
        }
        Tensor::from_vec(&[self.out_dim], out)
    }

    /// Returns (input grad shaped like `x`, parameter grads).
    pub fn backward(&self, x: &Tensor, grad_out: &Tensor) -> Result<(Tensor, LayerGrads)> {
        if x.len() != self.in_dim || grad_out.len() != self.out_dim {
            return Err(Error::ShapeMismatch(format!(
                "dense backward: input {} / grad {} vs {} -> {}",
                x.len(),
                grad_out.len(),
                self.in_dim,
                self.out_dim
            )));
        }
        // dW = dy x^T (outer product), dx = W^T dy
        let dw = matmul(grad_out.data(), self.out_dim, 1, x.data(), self.in_dim);
        let dx = matmul(
            &transpose(self.weight.data(), self.out_dim, self.in_dim),
            self.in_dim,
            self.out_dim,
            grad_out.data(),
            1,
        );
        Ok((
            Tensor::from_vec(x.shape(), dx)?,
            LayerGrads {
                weight: Some(Tensor::from_vec(&[self.out_dim, self.in_dim], dw)?),
                bias: Some(Tensor::from_vec(&[self.out_dim], grad_out.data().to_vec())?),
            },
        ))
    }
}

/// One step of a sequential network.
#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv2d(Conv2d),
    ConvTranspose2d(ConvTranspose2d),
    Dense(Dense),
    Relu,
    /// Reinterpret the data in a new shape of equal element count.
    Reshape(Vec<usize>),
}

/// Parameter gradients for one layer; `None` for parameterless layers.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub weight: Option<Tensor>,
    pub bias: Option<Tensor>,
}

impl LayerGrads {
    pub fn none() -> Self {
        LayerGrads {
            weight: None,
            bias: None,
        }
    }

    /// Present gradients in a fixed order: weight then bias.
    pub fn params(&self) -> Vec<&Tensor> {
        self.weight.iter().chain(self.bias.iter()).collect()
    }
}

impl Layer {
    pub fn name(&self) -> &'static str {
        match self {
            Layer::Conv2d(_) => "conv2d",
            Layer::ConvTranspose2d(_) => "conv_transpose2d",
            Layer::Dense(_) => "dense",
            Layer::Relu => "relu",
            Layer::Reshape(_) => "reshape",
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        match self {
            Layer::Conv2d(c) => c.forward(x),
            Layer::ConvTranspose2d(c) => c.forward(x),
            Layer::Dense(d) => d.forward(x),
            Layer::Relu => Ok(relu(x)),
            Layer::Reshape(shape) => x.reshaped(shape),
        }
    }

    pub fn backward(&self, x: &Tensor, grad_out: &Tensor) -> Result<(Tensor, LayerGrads)> {
        match self {
            Layer::Conv2d(c) => c.backward(x, grad_out),
            Layer::ConvTranspose2d(c) => c.backward(x, grad_out),
            Layer::Dense(d) => d.backward(x, grad_out),
            Layer::Relu => {
                if grad_out.len() != x.len() {
                    return Err(Error::ShapeMismatch(format!(
                        "relu backward: grad {} vs input {}",
                        grad_out.len(),
                        x.len()
                    )));
                }
                let dx = x
                    .data()
                    .iter()
                    .zip(grad_out.data().iter())
                    .map(|(&xi, &gi)| if xi > 0.0 { gi } else { 0.0 })
                    .collect();
                Ok((Tensor::from_vec(x.shape(), dx)?, LayerGrads::none()))
            }
            Layer::Reshape(_) => Ok((grad_out.reshaped(x.shape())?, LayerGrads::none())),
        }
    }

    /// Parameter tensors in a fixed order: weight then bias.
    pub fn params(&self) -> Vec<&Tensor> {
        match self {
            Layer::Conv2d(c) => vec![&c.weight, &c.bias],
            Layer::ConvTranspose2d(c) => vec![&c.weight, &c.bias],
            Layer::Dense(d) => vec![&d.weight, &d.bias],
            Layer::Relu | Layer::Reshape(_) => vec![],
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Layer::Conv2d(c) => vec![&mut c.weight, &mut c.bias],
            Layer::ConvTranspose2d(c) => vec![&mut c.weight, &mut c.bias],
            Layer::Dense(d) => vec![&mut d.weight, &mut d.bias],
            Layer::Relu | Layer::Reshape(_) => vec![],
        }
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }
}

fn relu(x: &Tensor) -> Tensor {
    let data = x
        .data()
        .iter()
        .map(|&v| if v > 0.0 { v } else { 0.0 })
        .collect();
    Tensor::from_vec(x.shape(), data).expect("shape unchanged")
}

/// Per-layer inputs recorded by a forward pass, consumed by backward.
#[derive(Debug, Clone)]
pub struct Tape {
    inputs: Vec<Tensor>,
    output: Tensor,
}

impl Tape {
    pub fn output(&self) -> &Tensor {
        &self.output
    }
}

/// A sequential network.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LayerStack {
    pub layers: Vec<Layer>,
}

impl LayerStack {
    pub fn new(layers: Vec<Layer>) -> Self {
        LayerStack { layers }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.param_count()).sum()
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.forward_recorded(x)?.output)
    }

    /// Forward pass that keeps each layer's input for [`Self::backward`].
    pub fn forward_recorded(&self, x: &Tensor) -> Result<Tape> {
        x.check_finite("stack input")?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let next = layer.forward(&cur)?;
            next.check_finite(&format!("layer {} ({}) output", i, layer.name()))?;
            inputs.push(cur);
            cur = next;
        }
        Ok(Tape {
            inputs,
            output: cur,
        })
    }

    /// Backpropagate `grad_out` through the recorded pass. Returns the
    /// gradient wrt the stack input and per-layer parameter gradients
    /// aligned with `self.layers`.
    pub fn backward(&self, tape: &Tape, grad_out: &Tensor) -> Result<(Tensor, Vec<LayerGrads>)> {
        if tape.inputs.len() != self.layers.len() {
            return Err(Error::InvalidInput(format!(
                "tape has {} entries for {} layers",
                tape.inputs.len(),
                self.layers.len()
            )));
        }
        if grad_out.len() != tape.output.len() {
            return Err(Error::ShapeMismatch(format!(
                "grad_out has {} elements, output has {}",
                grad_out.len(),
                tape.output.len()
            )));
        }
        grad_out.check_finite("stack output grad")?;
        let mut grads = vec![LayerGrads::none(); self.layers.len()];
        let mut cur = grad_out.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let (dx, g) = layer.backward(&tape.inputs[i], &cur)?;
            dx.check_finite(&format!("layer {} ({}) input grad", i, layer.name()))?;
            grads[i] = g;
            cur = dx;
        }
        Ok((cur, grads))
    }
}

/// Zero-valued gradients shaped like the stack's parameters.
pub fn zero_grads_like(stack: &LayerStack) -> Vec<LayerGrads> {
    stack
        .layers
        .iter()
        .map(|l| match l.params().as_slice() {
            [] => LayerGrads::none(),
            [w, b] => LayerGrads {
                weight: Some(Tensor::zeros(w.shape())),
                bias: Some(Tensor::zeros(b.shape())),
            },
            _ => unreachable!("layers expose zero or two parameter tensors"),
        })
        .collect()
}

/// acc += scale * delta, layer by layer.
pub fn accumulate_grads(acc: &mut [LayerGrads], delta: &[LayerGrads], scale: f64) -> Result<()> {
    if acc.len() != delta.len() {
        return Err(Error::ShapeMismatch(format!(
            "gradient lists of length {} and {}",
            acc.len(),
            delta.len()
        )));
    }
    for (a, d) in acc.iter_mut().zip(delta.iter()) {
        match (&mut a.weight, &d.weight) {
            (Some(aw), Some(dw)) => aw.add_scaled(dw, scale)?,
            (None, None) => {}
            _ => {
                return Err(Error::ShapeMismatch(
                    "gradient lists disagree on which layers have weights".into(),
                ))
            }
        }
        match (&mut a.bias, &d.bias) {
            (Some(ab), Some(db)) => ab.add_scaled(db, scale)?,
            (None, None) => {}
            _ => {
                return Err(Error::ShapeMismatch(
                    "gradient lists disagree on which layers have biases".into(),
                ))
            }
        }
    }
    Ok(())
}

/// Multiply every gradient entry by `s`.
pub fn scale_grads(grads: &mut [LayerGrads], s: f64) {
    for g in grads.iter_mut() {
        if let Some(w) = &mut g.weight {
            w.scale(s);
        }
        if let Some(b) = &mut g.bias {
            b.scale(s);
        }
    }
}
