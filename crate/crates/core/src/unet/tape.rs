//! Forward execution and tape-driven backpropagation.
//!
//! The network topology is written once, in [`run`], against the [`Exec`]
//! trait. [`Infer`] evaluates it directly and frees intermediates as it goes;
//! [`Recorder`] additionally appends every executed op to a [`Tape`] together
//! with the values its backward pass needs.

use super::model::ModelWeights;
use crate::engine::*;
use crate::{Error, Result};

/// Ordered record of the ops executed by one forward pass.
#[derive(Clone, Debug, Default)]
pub struct Tape<T = f32> {
    values: Vec<Option<Tensor<T>>>,
    shapes: Vec<Shape>,
    ops: Vec<Op>,
    output: usize,
    regime: Regime,
}

/// Running hash of every ReLU on/off decision and max-pool choice.
#[derive(Clone, Copy, Debug)]
struct Regime(u64);

impl Default for Regime {
    fn default() -> Self {
        Regime(0xcbf2_9ce4_8422_2325)
    }
}

impl Regime {
    fn mix(&mut self, v: u64) {
        self.0 = (self.0 ^ v).wrapping_mul(0x0000_0100_0000_01b3);
    }
}

#[derive(Clone, Debug)]
enum Op {
    Conv { layer: usize, input: usize, output: usize },
    UpConv { layer: usize, input: usize, output: usize },
    Relu { output: usize, input: usize },
    Pool { input: usize, output: usize, indices: PoolIndices },
    Concat { a: usize, b: usize, output: usize },
    Sigmoid { input: usize, output: usize },
}

impl<T> Tape<T> {
    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// Identifies the smooth piece of the network function this pass ran on:
    /// two passes with equal regimes made identical ReLU and max-pool choices.
    pub fn regime(&self) -> u64 {
        self.regime.0
    }
}

/// Result of [`forward`].
#[derive(Clone, Debug)]
pub struct Forward<T = f32> {
    pub output: Tensor<T>,
    pub tape: Option<Tape<T>>,
}

/// Gradient of one layer's parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrad<T = f32> {
    pub weights: Tensor<T>,
    pub bias: Vec<T>,
}

/// One gradient per parameter array, aligned with [`ModelWeights::layers`].
#[derive(Clone, Debug, PartialEq)]
pub struct ModelGradients<T = f32> {
    pub layers: Vec<LayerGrad<T>>,
    pub input: Option<Tensor<T>>,
}

impl<T: Element> ModelGradients<T> {
    pub fn zeros_like(weights: &ModelWeights<T>) -> Self {
        ModelGradients {
            layers: weights
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weights: Tensor::zeros(l.weights.shape()),
                    bias: vec![T::zero(); l.bias.len()],
                })
                .collect(),
            input: None,
        }
    }

    pub fn to_flat(&self) -> Vec<T> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(l.weights.data());
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.is_finite() && l.bias.iter().all(|b| b.is_finite()))
    }
}

trait Exec<T: Element> {
    type V;
    fn conv(&mut self, layer: usize, x: &Self::V) -> Result<Self::V>;
    fn relu(&mut self, x: Self::V) -> Self::V;
    fn pool(&mut self, x: &Self::V) -> Result<Self::V>;
    fn upconv(&mut self, layer: usize, x: &Self::V) -> Result<Self::V>;
    fn concat(&mut self, a: &Self::V, b: &Self::V) -> Result<Self::V>;
    fn sigmoid(&mut self, x: Self::V) -> Self::V;
}

fn run<T: Element, E: Exec<T>>(depth: usize, e: &mut E, input: E::V) -> Result<E::V> {
    let mut layer = 0;
    let mut conv_relu = |e: &mut E, x: &E::V| -> Result<E::V> {
        let y = e.conv(layer, x)?;
        layer += 1;
        Ok(e.relu(y))
    };
    let mut skips = Vec::with_capacity(depth);
    let mut h = input;
    for _ in 0..depth {
        h = conv_relu(e, &h)?;
        h = conv_relu(e, &h)?;
        let pooled = e.pool(&h)?;
        skips.push(h);
        h = pooled;
    }
    h = conv_relu(e, &h)?;
    h = conv_relu(e, &h)?;
    let mut layer = 2 * (depth + 1);
    while let Some(skip) = skips.pop() {
        let up = e.upconv(layer, &h)?;
        layer += 1;
        h = e.concat(&up, &skip)?;
        for _ in 0..3 {
            let y = e.conv(layer, &h)?;
            layer += 1;
            h = e.relu(y);
        }
    }
    let y = e.conv(layer, &h)?;
    Ok(e.sigmoid(y))
}

struct Infer<'a, T> {
    weights: &'a ModelWeights<T>,
}

impl<T: Element> Exec<T> for Infer<'_, T> {
    type V = Tensor<T>;

    fn conv(&mut self, layer: usize, x: &Tensor<T>) -> Result<Tensor<T>> {
        conv2d_forward(x, &self.weights.layers[layer])
    }

    fn relu(&mut self, mut x: Tensor<T>) -> Tensor<T> {
        x.data_mut().iter_mut().for_each(|v| {
            if *v <= T::zero() {
                *v = T::zero()
            }
        });
        x
    }

    fn pool(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(maxpool2x2_forward(x)?.0)
    }

    fn upconv(&mut self, layer: usize, x: &Tensor<T>) -> Result<Tensor<T>> {
        upconv2x2_forward(x, &self.weights.layers[layer])
    }

    fn concat(&mut self, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
        concat_channels(a, b)
    }

    fn sigmoid(&mut self, x: Tensor<T>) -> Tensor<T> {
        sigmoid(&x)
    }
}

struct Recorder<'a, T> {
    weights: &'a ModelWeights<T>,
    tape: Tape<T>,
}

impl<T: Element> Recorder<'_, T> {
    fn push(&mut self, t: Tensor<T>) -> usize {
        self.tape.shapes.push(t.shape());
        self.tape.values.push(Some(t));
        self.tape.values.len() - 1
    }

    fn value(&self, id: usize) -> &Tensor<T> {
        self.tape.values[id].as_ref().expect("value released before use")
    }
}

impl<T: Element> Exec<T> for Recorder<'_, T> {
    type V = usize;

    fn conv(&mut self, layer: usize, &input: &usize) -> Result<usize> {
        let y = conv2d_forward(self.value(input), &self.weights.layers[layer])?;
        let output = self.push(y);
        self.tape.ops.push(Op::Conv { layer, input, output });
        Ok(output)
    }

    fn relu(&mut self, input: usize) -> usize {
        let y = relu(self.value(input));
        for v in y.data() {
            self.tape.regime.mix((*v > T::zero()) as u64);
        }
        // backward masks on the output, so the pre-activation is not needed
        self.tape.values[input] = None;
        let output = self.push(y);
        self.tape.ops.push(Op::Relu { output, input });
        output
    }

    fn pool(&mut self, &input: &usize) -> Result<usize> {
        let (y, indices) = maxpool2x2_forward(self.value(input))?;
        for &i in &indices.indices {
            self.tape.regime.mix(i as u64);
        }
        let output = self.push(y);
        self.tape.ops.push(Op::Pool { input, output, indices });
        Ok(output)
    }

    fn upconv(&mut self, layer: usize, &input: &usize) -> Result<usize> {
        let y = upconv2x2_forward(self.value(input), &self.weights.layers[layer])?;
        let output = self.push(y);
        self.tape.ops.push(Op::UpConv { layer, input, output });
        Ok(output)
    }

    fn concat(&mut self, &a: &usize, &b: &usize) -> Result<usize> {
        let y = concat_channels(self.value(a), self.value(b))?;
        let output = self.push(y);
        self.tape.ops.push(Op::Concat { a, b, output });
        Ok(output)
    }

    fn sigmoid(&mut self, input: usize) -> usize {
        let y = sigmoid(self.value(input));
        self.tape.values[input] = None;
        let output = self.push(y);
        self.tape.ops.push(Op::Sigmoid { input, output });
        output
    }
}

fn check_input<T: Element>(weights: &ModelWeights<T>, input: &Tensor<T>) -> Result<()> {
    let cfg = &weights.config;
    let s = input.shape();
    if s.channels != cfg.in_channels {
        return Err(Error::ShapeMismatch {
            op: "unet forward",
            left: s.with_channels(cfg.in_channels),
            right: s,
        });
    }
    let m = cfg.size_multiple();
    if s.height == 0 || s.width == 0 || !s.height.is_multiple_of(m) || !s.width.is_multiple_of(m) {
        return Err(Error::Indivisible {
            op: "unet forward",
            shape: s,
            divisor: m,
        });
    }
    Ok(())
}

/// Runs the network on `input` (values expected in `[0, 1]`).
///
/// With `record_tape` the returned [`Forward::tape`] holds what [`backward`] needs.
pub fn forward<T: Element>(weights: &ModelWeights<T>, input: &Tensor<T>, record_tape: bool) -> Result<Forward<T>> {
    if !record_tape {
        return Ok(Forward {
            output: infer(weights, input)?,
            tape: None,
        });
    }
    check_input(weights, input)?;
    let mut rec = Recorder {
        weights,
        tape: Tape::default(),
    };
    let x = rec.push(input.clone());
    let out = run(weights.config.depth, &mut rec, x)?;
    let mut tape = rec.tape;
    tape.output = out;
    let output = tape.values[out].clone().expect("output is retained");
    Ok(Forward {
        output,
        tape: Some(tape),
    })
}

/// Forward pass without a tape. Safe to call concurrently on shared weights.
pub fn infer<T: Element>(weights: &ModelWeights<T>, input: &Tensor<T>) -> Result<Tensor<T>> {
    check_input(weights, input)?;
    run(weights.config.depth, &mut Infer { weights }, input.clone())
}

fn accumulate<T: Element>(slot: &mut Option<Tensor<T>>, g: Tensor<T>) {
    match slot {
        None => *slot = Some(g),
        Some(acc) => acc
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .for_each(|(a, &b)| *a += b),
    }
}

/// Backpropagates `grad_output` (the loss gradient w.r.t. the network output)
/// through a recorded tape.
pub fn backward<T: Element>(
    weights: &ModelWeights<T>,
    tape: Option<&Tape<T>>,
    grad_output: &Tensor<T>,
) -> Result<ModelGradients<T>> {
    let tape = tape.ok_or(Error::MissingTape)?;
    if tape.is_empty() {
        return Err(Error::MissingTape);
    }
    grad_output.expect_shape("unet backward", tape.shapes[tape.output])?;
    let value = |id: usize| tape.values[id].as_ref().expect("tape value retained");
    let mut grads: Vec<Option<Tensor<T>>> = vec![None; tape.values.len()];
    grads[tape.output] = Some(grad_output.clone());
    let mut out = ModelGradients::zeros_like(weights);

    for op in tape.ops.iter().rev() {
        match *op {
            Op::Sigmoid { input, output } => {
                let Some(g) = grads[output].take() else { continue };
                accumulate(&mut grads[input], sigmoid_backward(value(output), &g)?);
            }
            Op::Relu { output, input } => {
                let Some(g) = grads[output].take() else { continue };
                accumulate(&mut grads[input], relu_backward(value(output), &g)?);
            }
            Op::Conv { layer, input, output } => {
                let Some(g) = grads[output].take() else { continue };
                let cg = conv2d_backward(value(input), &weights.layers[layer], &g)?;
                out.layers[layer] = LayerGrad {
                    weights: cg.weights,
                    bias: cg.bias,
                };
                accumulate(&mut grads[input], cg.input);
            }
            Op::UpConv { layer, input, output } => {
                let Some(g) = grads[output].take() else { continue };
                let cg = upconv2x2_backward(value(input), &weights.layers[layer], &g)?;
                out.layers[layer] = LayerGrad {
                    weights: cg.weights,
                    bias: cg.bias,
                };
                accumulate(&mut grads[input], cg.input);
            }
            Op::Pool { input, output, ref indices } => {
                let Some(g) = grads[output].take() else { continue };
                accumulate(&mut grads[input], maxpool2x2_backward(indices, &g)?);
            }
            Op::Concat { a, b, output } => {
                let Some(g) = grads[output].take() else { continue };
                let (ga, gb) = concat_channels_backward(tape.shapes[a].channels, &g)?;
                accumulate(&mut grads[a], ga);
                accumulate(&mut grads[b], gb);
            }
        }
    }
    out.input = grads[0].take();
    Ok(out)
}
