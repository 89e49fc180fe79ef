use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

use crate::error::{invalid, Result};
use crate::real::Real;

/// Numerically stable `ln(1 + e^x)`.
#[inline]
pub fn softplus<T: Real>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// `x` such that `softplus(x) = y`, for `y > 0`.
pub fn softplus_inverse(y: f64) -> f64 {
    y + (-(-y).exp_m1()).ln()
}

#[inline]
fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    // eight independent lanes so the reduction vectorizes
    let mut acc = [T::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut s = ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
    for (x, y) in ra.iter().zip(rb) {
        s += *x * *y;
    }
    s
}

#[inline]
fn axpy<T: Real>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Fully connected layer, `weight` row-major `outputs x inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Dense<T> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            inputs,
            outputs,
            weight: vec![T::zero(); inputs * outputs],
            bias: vec![T::zero(); outputs],
        }
    }

    fn forward(&self, x: &[T], out: &mut [T]) {
        for (o, row) in self.weight.chunks_exact(self.inputs).enumerate() {
            out[o] = dot(row, x) + self.bias[o];
        }
    }
}

/// Gradient buffers shaped like a decoder's layers: `(weight, bias)` per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderGrad<T> {
    pub layers: Vec<(Vec<T>, Vec<T>)>,
}

impl<T: Real> DecoderGrad<T> {
    pub fn zero(&mut self) {
        for (w, b) in &mut self.layers {
            w.fill(T::zero());
            b.fill(T::zero());
        }
    }

    pub fn add(&mut self, other: &DecoderGrad<T>) {
        for ((w, b), (ow, ob)) in self.layers.iter_mut().zip(&other.layers) {
            w.iter_mut().zip(ow).for_each(|(a, &x)| *a += x);
            b.iter_mut().zip(ob).for_each(|(a, &x)| *a += x);
        }
    }

    pub fn tensors(&self) -> Vec<&[T]> {
        self.layers
            .iter()
            .flat_map(|(w, b)| [w.as_slice(), b.as_slice()])
            .collect()
    }
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct DecodeTrace<T> {
    pub input: Vec<T>,
    /// Post-ReLU activations of each hidden layer.
    pub hidden: Vec<Vec<T>>,
    /// Output pre-activations: density logit then three color logits.
    pub logits: [T; 4],
}

/// MLP mapping a feature vector to density and color.
///
/// Hidden layers use ReLU. Output 0 goes through softplus (density, `>= 0`);
/// outputs 1..4 through the logistic function (color in `[0, 1]`).
#[derive(Debug, Clone, PartialEq)]
pub struct Decoder<T> {
    pub layers: Vec<Dense<T>>,
    pub grad: DecoderGrad<T>,
}

impl<T: Real> Decoder<T> {
    pub const OUTPUTS: usize = 4;

    /// All-zero decoder with `hidden.len()` hidden layers.
    pub fn zeros(inputs: usize, hidden: &[usize]) -> Self {
        let mut dims = vec![inputs];
        dims.extend_from_slice(hidden);
        dims.push(Self::OUTPUTS);
        let layers: Vec<Dense<T>> = dims.windows(2).map(|d| Dense::zeros(d[0], d[1])).collect();
        Self::from_layers(layers).expect("layer dims chain by construction")
    }

    pub fn from_layers(layers: Vec<Dense<T>>) -> Result<Self> {
        if layers.is_empty() || layers.last().unwrap().outputs != Self::OUTPUTS {
            return Err(invalid("decoder must end in a 4-output layer"));
        }
        for l in &layers {
            if l.weight.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                return Err(invalid("dense layer buffer sizes do not match its shape"));
            }
        }
        if layers.windows(2).any(|w| w[0].outputs != w[1].inputs) {
            return Err(invalid("decoder layer shapes do not chain"));
        }
        let grad = DecoderGrad {
            layers: layers
                .iter()
                .map(|l| {
                    (
                        vec![T::zero(); l.weight.len()],
                        vec![T::zero(); l.bias.len()],
                    )
                })
                .collect(),
        };
        Ok(Decoder { layers, grad })
    }

    /// He-uniform weights, zero biases, and a density bias giving initial
    /// density `initial_density` for near-zero features.
    pub fn init<R: Rng>(
        inputs: usize,
        hidden: &[usize],
        initial_density: f64,
        rng: &mut R,
    ) -> Self {
        let mut d = Self::zeros(inputs, hidden);
        for layer in &mut d.layers {
            let limit = (6.0 / layer.inputs as f64).sqrt();
            for w in &mut layer.weight {
                *w = T::of(rng.gen_range(-limit..limit));
            }
        }
        d.layers.last_mut().unwrap().bias[0] = T::of(softplus_inverse(initial_density));
        d
    }

    pub fn inputs(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn hidden_sizes(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1]
            .iter()
            .map(|l| l.outputs)
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    pub fn grad_buffer(&self) -> DecoderGrad<T> {
        let mut g = self.grad.clone();
        g.zero();
        g
    }

    pub fn zero_grad(&mut self) {
        self.grad.zero();
    }

    pub fn new_trace(&self) -> DecodeTrace<T> {
        DecodeTrace {
            input: vec![T::zero(); self.inputs()],
            hidden: self.layers[..self.layers.len() - 1]
                .iter()
                .map(|l| vec![T::zero(); l.outputs])
                .collect(),
            logits: [T::zero(); 4],
        }
    }

    /// Runs the network, recording activations into `trace`.
    pub fn forward(&self, feature: &[T], trace: &mut DecodeTrace<T>) -> (T, [T; 3]) {
        trace.input.copy_from_slice(&feature[..self.inputs()]);
        let n = self.layers.len();
        for i in 0..n - 1 {
            let (done, rest) = trace.hidden.split_at_mut(i);
            let x: &[T] = if i == 0 { &trace.input } else { &done[i - 1] };
            let h = &mut rest[0];
            self.layers[i].forward(x, h);
            h.iter_mut().for_each(|v| *v = v.max(T::zero()));
        }
        let x: &[T] = if n == 1 {
            &trace.input
        } else {
            &trace.hidden[n - 2]
        };
        self.layers[n - 1].forward(x, &mut trace.logits);
        let l = trace.logits;
        (
            softplus(l[0]),
            [sigmoid(l[1]), sigmoid(l[2]), sigmoid(l[3])],
        )
    }

    pub fn decode(&self, feature: &[T]) -> (T, [T; 3]) {
        let mut trace = self.new_trace();
        self.forward(feature, &mut trace)
    }

    /// Adjoint of [`forward`](Self::forward). Adds the feature gradient into
    /// `feature_grad` and parameter gradients into `grad`.
    pub fn backward_into(
        &self,
        trace: &DecodeTrace<T>,
        up_sigma: T,
        up_rgb: [T; 3],
        feature_grad: &mut [T],
        grad: &mut DecoderGrad<T>,
    ) {
        let l = trace.logits;
        let mut delta: Vec<T> = vec![up_sigma * sigmoid(l[0])];
        for k in 0..3 {
            let s = sigmoid(l[k + 1]);
            delta.push(up_rgb[k] * s * (T::one() - s));
        }
        let n = self.layers.len();
        for i in (0..n).rev() {
            let layer = &self.layers[i];
            let x: &[T] = if i == 0 {
                &trace.input
            } else {
                &trace.hidden[i - 1]
            };
            let (gw, gb) = &mut grad.layers[i];
            let mut dx = vec![T::zero(); layer.inputs];
            for (o, &d) in delta.iter().enumerate() {
                if d == T::zero() {
                    continue;
                }
                gb[o] += d;
                let row = o * layer.inputs..(o + 1) * layer.inputs;
                axpy(d, x, &mut gw[row.clone()]);
                axpy(d, &layer.weight[row], &mut dx);
            }
            if i == 0 {
                axpy(T::one(), &dx, feature_grad);
            } else {
                // ReLU mask
                for (d, &h) in dx.iter_mut().zip(x) {
                    if h <= T::zero() {
                        *d = T::zero();
                    }
                }
                delta = dx;
            }
        }
    }

    /// Runs forward and accumulates the adjoint into `self.grad`; returns the
    /// feature gradient.
    pub fn decode_backward(&mut self, feature: &[T], up_sigma: T, up_rgb: [T; 3]) -> Vec<T> {
        let mut trace = self.new_trace();
        self.forward(feature, &mut trace);
        let mut fg = vec![T::zero(); self.inputs()];
        let mut g = self.grad_buffer();
        self.backward_into(&trace, up_sigma, up_rgb, &mut fg, &mut g);
        self.grad.add(&g);
        fg
    }

    /// Mutable parameter tensors in `(w0, b0, w1, b1, ...)` order, paired
    /// with their gradients.
    pub fn params_and_grads(&mut self) -> (Vec<&mut [T]>, Vec<&[T]>) {
        let params = self
            .layers
            .iter_mut()
            .flat_map(|l| [l.weight.as_mut_slice(), l.bias.as_mut_slice()])
            .collect();
        (params, self.grad.tensors())
    }

    pub fn cast<U: Real>(&self) -> Decoder<U> {
        let conv = |v: &[T]| v.iter().map(|&x| U::of(x.f64())).collect::<Vec<U>>();
        let layers = self
            .layers
            .iter()
            .map(|l| Dense {
                inputs: l.inputs,
                outputs: l.outputs,
                weight: conv(&l.weight),
                bias: conv(&l.bias),
            })
            .collect();
        Decoder::from_layers(layers).expect("shapes preserved")
    }
}
