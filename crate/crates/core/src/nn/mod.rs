//! Small fully connected networks with hand-written backpropagation.
//!
//! Weights are stored row-major as `outputs x inputs`. The single-sample
//! [`Mlp::forward`]/[`Mlp::backward`] pair is the reference contract; the
//! batch variants compute the same quantities with matrix products and sum
//! parameter gradients over the batch.

mod adam;
pub mod gradcheck;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use adam::{adam_step, AdamState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
    Linear,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            Activation::Linear => z,
        }
    }

    /// Derivative expressed through the activation output `y`.
    #[inline]
    pub fn derivative(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Linear => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub activation: Activation,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Layer>,
    rng_seed: u64,
}

/// Parameter gradients, shape-congruent with an [`Mlp`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Gradients {
            weights: net.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            bias: net.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.tensors_mut().zip(other.tensors()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            for x in t.iter_mut() {
                *x *= factor;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().all(|t| t.iter().all(|x| x.is_finite()))
    }

    pub fn max_abs(&self) -> f64 {
        self.tensors()
            .flat_map(|t| t.iter())
            .fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Tensors in checkpoint order: `w0, b0, w1, b1, ...`.
    pub fn tensors(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.weights.iter().zip(&self.bias).flat_map(|(w, b)| [w, b])
    }

    fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Vec<f64>> {
        self.weights
            .iter_mut()
            .zip(self.bias.iter_mut())
            .flat_map(|(w, b)| [w, b])
    }
}

/// Row-major batch of equally sized vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Batch {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Batch {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.as_ref().len(), cols, "ragged batch");
            data.extend_from_slice(r.as_ref());
        }
        Batch {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Horizontal concatenation `[self | other]`.
    pub fn concat(&self, other: &Batch) -> Batch {
        assert_eq!(self.rows, other.rows);
        let cols = self.cols + other.cols;
        let mut data = Vec::with_capacity(self.rows * cols);
        for i in 0..self.rows {
            data.extend_from_slice(self.row(i));
            data.extend_from_slice(other.row(i));
        }
        Batch {
            rows: self.rows,
            cols,
            data,
        }
    }

    /// Columns `start..start + len` of every row.
    pub fn columns(&self, start: usize, len: usize) -> Batch {
        let mut data = Vec::with_capacity(self.rows * len);
        for i in 0..self.rows {
            data.extend_from_slice(&self.row(i)[start..start + len]);
        }
        Batch {
            rows: self.rows,
            cols: len,
            data,
        }
    }
}

/// Layer outputs kept by [`Mlp::forward_batch`] for the backward pass.
#[derive(Debug, Clone)]
pub struct BatchTrace {
    /// `activations[0]` is the input; `activations[l + 1]` is layer `l`'s output.
    activations: Vec<Batch>,
}

impl BatchTrace {
    pub fn output(&self) -> &Batch {
        self.activations.last().expect("trace holds the input")
    }
}

/// `c = a * b + beta * c` with explicit strides: `a` is `m x k`, `b` is `k x n`.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_strides: (usize, usize),
    b: &[f64],
    b_strides: (usize, usize),
    beta: f64,
    c: &mut [f64],
    c_strides: (usize, usize),
) {
    if m == 0 || n == 0 {
        return;
    }
    let last = |rows: usize, cols: usize, (rs, cs): (usize, usize)| {
        (rows - 1) * rs + (cols - 1) * cs
    };
    if k > 0 {
        assert!(last(m, k, a_strides) < a.len());
        assert!(last(k, n, b_strides) < b.len());
    }
    assert!(last(m, n, c_strides) < c.len());
    // SAFETY: the asserts above bound every element the kernel touches.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_strides.0 as isize,
            a_strides.1 as isize,
            b.as_ptr(),
            b_strides.0 as isize,
            b_strides.1 as isize,
            beta,
            c.as_mut_ptr(),
            c_strides.0 as isize,
            c_strides.1 as isize,
        );
    }
}

impl Mlp {
    /// Uniform fan-in initialization `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`,
    /// a pure function of `rng_seed`.
    pub fn new(layer_dims: &[usize], activations: &[Activation], rng_seed: u64) -> Self {
        assert!(layer_dims.len() >= 2, "need input and output sizes");
        assert_eq!(activations.len(), layer_dims.len() - 1, "one activation per layer");
        assert!(layer_dims.iter().all(|&d| d > 0), "zero-width layer");
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let layers = layer_dims
            .windows(2)
            .zip(activations)
            .map(|(dims, &activation)| {
                let (inputs, outputs) = (dims[0], dims[1]);
                let bound = 1.0 / (inputs as f64).sqrt();
                let mut draw = || rng.random_range(-bound..=bound);
                let weights = (0..inputs * outputs).map(|_| draw()).collect();
                let bias = (0..outputs).map(|_| draw()).collect();
                Layer {
                    inputs,
                    outputs,
                    activation,
                    weights,
                    bias,
                }
            })
            .collect();
        Mlp { layers, rng_seed }
    }

    pub fn from_layers(layers: Vec<Layer>, rng_seed: u64) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Checkpoint("network has no layers".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                return Err(Error::Checkpoint(format!("layer {i} has inconsistent shapes")));
            }
            if i > 0 && layers[i - 1].outputs != l.inputs {
                return Err(Error::Checkpoint(format!("layer {i} input does not chain")));
            }
            if !l.weights.iter().chain(&l.bias).all(|x| x.is_finite()) {
                return Err(Error::Checkpoint(format!("layer {i} has non-finite parameters")));
            }
        }
        Ok(Mlp { layers, rng_seed })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").outputs
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(|l| l.outputs))
            .collect()
    }

    pub fn activations(&self) -> Vec<Activation> {
        self.layers.iter().map(|l| l.activation).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn same_architecture(&self, other: &Mlp) -> bool {
        self.layer_dims() == other.layer_dims() && self.activations() == other.activations()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|x| x.is_finite()))
    }

    /// Per-layer outputs for a single input; element 0 is the input itself.
    fn forward_all(&self, input: &[f64]) -> Vec<Vec<f64>> {
        assert_eq!(input.len(), self.input_dim(), "input width");
        let mut outs = Vec::with_capacity(self.layers.len() + 1);
        outs.push(input.to_vec());
        for l in &self.layers {
            let x = outs.last().expect("non-empty");
            let y: Vec<f64> = (0..l.outputs)
                .map(|o| {
                    let row = &l.weights[o * l.inputs..(o + 1) * l.inputs];
                    let z = l.bias[o] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
                    l.activation.apply(z)
                })
                .collect();
            outs.push(y);
        }
        outs
    }

    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        self.forward_all(input).pop().expect("non-empty")
    }

    /// Reverse-mode gradients of `upstream · forward(input)` with respect to
    /// the parameters and the input.
    pub fn backward(&self, input: &[f64], upstream: &[f64]) -> (Gradients, Vec<f64>) {
        self.backward_impl(input, upstream, |act, y| act.derivative(y))
    }

    fn backward_impl(
        &self,
        input: &[f64],
        upstream: &[f64],
        derivative: impl Fn(Activation, f64) -> f64,
    ) -> (Gradients, Vec<f64>) {
        assert_eq!(upstream.len(), self.output_dim(), "upstream width");
        let outs = self.forward_all(input);
        let mut grads = Gradients::zeros_like(self);
        let mut g = upstream.to_vec();
        for (li, l) in self.layers.iter().enumerate().rev() {
            let x = &outs[li];
            let y = &outs[li + 1];
            let delta: Vec<f64> = g
                .iter()
                .zip(y)
                .map(|(gi, &yi)| gi * derivative(l.activation, yi))
                .collect();
            let mut gx = vec![0.0; l.inputs];
            for o in 0..l.outputs {
                let d = delta[o];
                grads.bias[li][o] = d;
                let wrow = &l.weights[o * l.inputs..(o + 1) * l.inputs];
                let grow = &mut grads.weights[li][o * l.inputs..(o + 1) * l.inputs];
                for i in 0..l.inputs {
                    grow[i] = d * x[i];
                    gx[i] += wrow[i] * d;
                }
            }
            g = gx;
        }
        (grads, g)
    }

    /// Backward pass with a deliberately wrong derivative for one activation.
    /// Exists so gradient checks can be shown to fail.
    #[doc(hidden)]
    pub fn backward_with_corrupted_derivative(
        &self,
        input: &[f64],
        upstream: &[f64],
        corrupted: Activation,
    ) -> (Gradients, Vec<f64>) {
        self.backward_impl(input, upstream, |act, y| {
            let d = act.derivative(y);
            if act == corrupted {
                1.5 * d + 0.1
            } else {
                d
            }
        })
    }

    pub fn forward_batch(&self, input: &Batch) -> BatchTrace {
        assert_eq!(input.cols, self.input_dim(), "input width");
        let rows = input.rows;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input.clone());
        for l in &self.layers {
            let x = activations.last().expect("non-empty");
            let mut out = Batch::zeros(rows, l.outputs);
            for r in 0..rows {
                out.row_mut(r).copy_from_slice(&l.bias);
            }
            // out (rows x outputs) += x (rows x inputs) * W^T (inputs x outputs)
            gemm(
                rows,
                l.inputs,
                l.outputs,
                &x.data,
                (l.inputs, 1),
                &l.weights,
                (1, l.inputs),
                1.0,
                &mut out.data,
                (l.outputs, 1),
            );
            if l.activation != Activation::Linear {
                for v in &mut out.data {
                    *v = l.activation.apply(*v);
                }
            }
            activations.push(out);
        }
        BatchTrace { activations }
    }

    pub fn predict_batch(&self, input: &Batch) -> Batch {
        self.forward_batch(input).activations.pop().expect("non-empty")
    }

    /// Batched backward pass. Parameter gradients are summed over rows; the
    /// returned input gradients are per row.
    pub fn backward_batch(&self, trace: &BatchTrace, upstream: &Batch) -> (Gradients, Batch) {
        let rows = upstream.rows;
        assert_eq!(upstream.cols, self.output_dim(), "upstream width");
        assert_eq!(trace.output().rows, rows, "trace rows");
        let mut grads = Gradients::zeros_like(self);
        let mut g = upstream.clone();
        for (li, l) in self.layers.iter().enumerate().rev() {
            let x = &trace.activations[li];
            let y = &trace.activations[li + 1];
            let mut delta = g;
            if l.activation != Activation::Linear {
                for (d, &yi) in delta.data.iter_mut().zip(&y.data) {
                    *d *= l.activation.derivative(yi);
                }
            }
            for r in 0..rows {
                for (b, d) in grads.bias[li].iter_mut().zip(delta.row(r)) {
                    *b += d;
                }
            }
            // dW (outputs x inputs) = delta^T (outputs x rows) * x (rows x inputs)
            gemm(
                l.outputs,
                rows,
                l.inputs,
                &delta.data,
                (1, l.outputs),
                &x.data,
                (l.inputs, 1),
                0.0,
                &mut grads.weights[li],
                (l.inputs, 1),
            );
            // dx (rows x inputs) = delta (rows x outputs) * W (outputs x inputs)
            let mut gx = Batch::zeros(rows, l.inputs);
            gemm(
                rows,
                l.outputs,
                l.inputs,
                &delta.data,
                (l.outputs, 1),
                &l.weights,
                (l.inputs, 1),
                0.0,
                &mut gx.data,
                (l.inputs, 1),
            );
            g = gx;
        }
        (grads, g)
    }

    /// `target <- tau * online + (1 - tau) * target`.
    pub fn soft_update_from(&mut self, online: &Mlp, tau: f64) -> Result<()> {
        if !(tau > 0.0 && tau <= 1.0) {
            return Err(Error::Argument(format!("tau must lie in (0, 1], got {tau}")));
        }
        if !self.same_architecture(online) {
            return Err(Error::Argument("soft update between different architectures".into()));
        }
        for (t, o) in self.layers.iter_mut().zip(&online.layers) {
            for (a, b) in t.weights.iter_mut().zip(&o.weights) {
                *a = tau * b + (1.0 - tau) * *a;
            }
            for (a, b) in t.bias.iter_mut().zip(&o.bias) {
                *a = tau * b + (1.0 - tau) * *a;
            }
        }
        Ok(())
    }

    pub fn to_checkpoint(&self) -> NetCheckpoint {
        NetCheckpoint {
            version: CHECKPOINT_VERSION,
            arch: Arch {
                layer_dims: self.layer_dims(),
                activations: self.activations(),
                rng_seed: self.rng_seed,
            },
            params: self
                .layers
                .iter()
                .flat_map(|l| [l.weights.clone(), l.bias.clone()])
                .collect(),
        }
    }

    pub fn from_checkpoint(cp: &NetCheckpoint) -> Result<Self> {
        if cp.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", cp.version)));
        }
        let dims = &cp.arch.layer_dims;
        if dims.len() < 2 || cp.arch.activations.len() != dims.len() - 1 {
            return Err(Error::Checkpoint("architecture is inconsistent".into()));
        }
        if cp.params.len() != 2 * (dims.len() - 1) {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {}",
                2 * (dims.len() - 1),
                cp.params.len()
            )));
        }
        let layers = dims
            .windows(2)
            .zip(&cp.arch.activations)
            .zip(cp.params.chunks(2))
            .map(|((d, &activation), t)| Layer {
                inputs: d[0],
                outputs: d[1],
                activation,
                weights: t[0].clone(),
                bias: t[1].clone(),
            })
            .collect();
        Mlp::from_layers(layers, cp.arch.rng_seed)
    }
}

/// Free-function form of [`Mlp::forward`].
pub fn forward(net: &Mlp, input: &[f64]) -> Vec<f64> {
    net.forward(input)
}

/// Free-function form of [`Mlp::backward`].
pub fn backward(net: &Mlp, input: &[f64], upstream: &[f64]) -> (Gradients, Vec<f64>) {
    net.backward(input, upstream)
}

pub fn soft_update(target: &mut Mlp, online: &Mlp, tau: f64) -> Result<()> {
    target.soft_update_from(online, tau)
}

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arch {
    pub layer_dims: Vec<usize>,
    pub activations: Vec<Activation>,
    pub rng_seed: u64,
}

/// Portable network checkpoint: flat parameter arrays in `w0, b0, w1, b1, ...` order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetCheckpoint {
    pub version: u32,
    pub arch: Arch,
    pub params: Vec<Vec<f64>>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_input(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn zero_network_outputs_zero() {
        let mut net = Mlp::new(&[3, 2], &[Activation::Linear], 1);
        for l in net.layers_mut() {
            l.weights.fill(0.0);
            l.bias.fill(0.0);
        }
        assert_eq!(net.forward(&[1.0, -2.0, 3.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_layer() {
        let mut net = Mlp::new(&[3, 3], &[Activation::Linear], 1);
        let l = &mut net.layers_mut()[0];
        l.weights = vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        l.bias.fill(0.0);
        assert_eq!(net.forward(&[0.5, -1.5, 2.0]), vec![0.5, -1.5, 2.0]);
    }

    #[test]
    fn hand_computed_tanh_net() {
        let net = Mlp::from_layers(
            vec![
                Layer {
                    inputs: 2,
                    outputs: 2,
                    activation: Activation::Tanh,
                    weights: vec![0.5, -0.25, 0.1, 0.2],
                    bias: vec![0.1, -0.1],
                },
                Layer {
                    inputs: 2,
                    outputs: 1,
                    activation: Activation::Tanh,
                    weights: vec![1.0, -1.0],
                    bias: vec![0.05],
                },
            ],
            0,
        )
        .unwrap();
        let x = [1.0, 2.0];
        let h0 = (0.5 * 1.0 - 0.25 * 2.0 + 0.1f64).tanh();
        let h1 = (0.1 * 1.0 + 0.2 * 2.0 - 0.1f64).tanh();
        let y = (h0 - h1 + 0.05f64).tanh();
        assert!((net.forward(&x)[0] - y).abs() < 1e-12);
    }

    #[test]
    fn zero_upstream_zero_gradients() {
        let net = Mlp::new(&[4, 5, 2], &[Activation::Tanh, Activation::Linear], 3);
        let (g, gx) = net.backward(&random_input(4, 1), &[0.0, 0.0]);
        assert_eq!(g.max_abs(), 0.0);
        assert!(gx.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_layer_weight_grad_is_outer_product() {
        let net = Mlp::new(&[3, 2], &[Activation::Linear], 5);
        let x = [1.0, 2.0, -1.0];
        let up = [0.5, -2.0];
        let (g, _) = net.backward(&x, &up);
        for o in 0..2 {
            for i in 0..3 {
                assert_eq!(g.weights[0][o * 3 + i], up[o] * x[i]);
            }
        }
        assert_eq!(g.bias[0], up.to_vec());
    }

    #[test]
    fn batch_paths_agree_with_single_sample() {
        let net = Mlp::new(
            &[6, 8, 8, 3],
            &[Activation::Relu, Activation::Tanh, Activation::Sigmoid],
            11,
        );
        let xs: Vec<Vec<f64>> = (0..5).map(|s| random_input(6, s)).collect();
        let ups: Vec<Vec<f64>> = (0..5).map(|s| random_input(3, 100 + s)).collect();
        let trace = net.forward_batch(&Batch::from_rows(&xs));
        let (g, gx) = net.backward_batch(&trace, &Batch::from_rows(&ups));
        let mut sum = Gradients::zeros_like(&net);
        for (i, (x, u)) in xs.iter().zip(&ups).enumerate() {
            let y = net.forward(x);
            for (a, b) in y.iter().zip(trace.output().row(i)) {
                assert!((a - b).abs() < 1e-12);
            }
            let (gi, gxi) = net.backward(x, u);
            sum.add_assign(&gi);
            for (a, b) in gxi.iter().zip(gx.row(i)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        for (a, b) in sum.tensors().zip(g.tensors()) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn soft_update_rules() {
        let online = Mlp::new(&[2, 2], &[Activation::Linear], 1);
        let mut target = Mlp::new(&[2, 2], &[Activation::Linear], 2);
        let mut t1 = target.clone();
        t1.soft_update_from(&online, 1.0).unwrap();
        assert_eq!(t1.layers(), online.layers());
        assert!(target.soft_update_from(&online, 0.0).is_err());

        for l in target.layers_mut() {
            l.weights.fill(0.0);
            l.bias.fill(0.0);
        }
        let mut ones = online.clone();
        for l in ones.layers_mut() {
            l.weights.fill(1.0);
            l.bias.fill(1.0);
        }
        soft_update(&mut target, &ones, 0.005).unwrap();
        assert!(target.layers()[0].weights.iter().all(|&w| (w - 0.005).abs() < 1e-15));

        let other = Mlp::new(&[2, 3], &[Activation::Linear], 1);
        assert!(target.soft_update_from(&other, 0.5).is_err());
    }

    #[test]
    fn init_is_seeded() {
        let a = Mlp::new(&[4, 8, 2], &[Activation::Relu, Activation::Linear], 9);
        let b = Mlp::new(&[4, 8, 2], &[Activation::Relu, Activation::Linear], 9);
        let c = Mlp::new(&[4, 8, 2], &[Activation::Relu, Activation::Linear], 10);
        assert_eq!(a, b);
        assert_ne!(a, c);
        let bound = 0.5;
        assert!(a.layers()[0].weights.iter().all(|w| w.abs() <= bound));
    }

    #[test]
    fn checkpoint_round_trip() {
        let net = Mlp::new(&[4, 8, 2], &[Activation::Relu, Activation::Tanh], 9);
        let json = serde_json::to_string(&net.to_checkpoint()).unwrap();
        let cp: NetCheckpoint = serde_json::from_str(&json).unwrap();
        assert_eq!(Mlp::from_checkpoint(&cp).unwrap(), net);
        let mut bad = cp.clone();
        bad.params.pop();
        assert!(Mlp::from_checkpoint(&bad).is_err());
    }
}
