//! Central finite-difference check of [`Mlp::backward`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{Activation, Gradients, Mlp};

pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradcheckOptions {
    pub step: f64,
    /// Parameters probed per tensor; tensors smaller than this are probed fully.
    pub probes_per_tensor: usize,
    /// Replaces the analytic derivative of this activation with a wrong one.
    pub corrupt: Option<Activation>,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        GradcheckOptions {
            step: DEFAULT_STEP,
            probes_per_tensor: 24,
            corrupt: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Probes skipped because the perturbation crossed a relu kink.
    pub skipped: usize,
}

impl GradcheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.checked > 0 && self.max_rel_error <= tolerance
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Relu on/off pattern for one input, used to detect kink crossings.
fn relu_pattern(net: &Mlp, input: &[f64]) -> Vec<bool> {
    let mut pattern = Vec::new();
    let mut x = input.to_vec();
    for l in net.layers() {
        let mut y = Vec::with_capacity(l.outputs);
        for o in 0..l.outputs {
            let row = &l.weights[o * l.inputs..(o + 1) * l.inputs];
            let z = l.bias[o] + row.iter().zip(&x).map(|(w, v)| w * v).sum::<f64>();
            if l.activation == Activation::Relu {
                pattern.push(z > 0.0);
            }
            y.push(l.activation.apply(z));
        }
        x = y;
    }
    pattern
}

fn param_mut(net: &mut Mlp, layer: usize, is_bias: bool, idx: usize) -> &mut f64 {
    let l = &mut net.layers_mut()[layer];
    if is_bias {
        &mut l.bias[idx]
    } else {
        &mut l.weights[idx]
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Checks parameter and input gradients of the scalar `u · net(x)` for a
/// random input `x` and random upstream `u` drawn from `seed`.
pub fn gradcheck(net: &Mlp, seed: u64, options: &GradcheckOptions) -> GradcheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..net.input_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let u: Vec<f64> = (0..net.output_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let (grads, input_grad): (Gradients, Vec<f64>) = match options.corrupt {
        Some(act) => net.backward_with_corrupted_derivative(&x, &u, act),
        None => net.backward(&x, &u),
    };
    let h = options.step;
    let base_pattern = relu_pattern(net, &x);
    let mut report = GradcheckReport {
        max_rel_error: 0.0,
        checked: 0,
        skipped: 0,
    };
    let mut record = |analytic: f64, numeric: Option<f64>| match numeric {
        Some(n) => {
            report.checked += 1;
            report.max_rel_error = report.max_rel_error.max(relative_error(analytic, n));
        }
        None => report.skipped += 1,
    };

    let probe = |net: &mut Mlp, li: usize, is_bias: bool, idx: usize| -> Option<f64> {
        let orig = *param_mut(net, li, is_bias, idx);
        let eval = |value: f64, n: &mut Mlp| {
            *param_mut(n, li, is_bias, idx) = value;
            (dot(&u, &n.forward(&x)), relu_pattern(n, &x))
        };
        let (fp, pp) = eval(orig + h, net);
        let (fm, pm) = eval(orig - h, net);
        *param_mut(net, li, is_bias, idx) = orig;
        (pp == base_pattern && pm == base_pattern).then(|| (fp - fm) / (2.0 * h))
    };

    let mut work = net.clone();
    for li in 0..net.layers().len() {
        for (is_bias, len) in [
            (false, net.layers()[li].weights.len()),
            (true, net.layers()[li].bias.len()),
        ] {
            let indices: Vec<usize> = if len <= options.probes_per_tensor {
                (0..len).collect()
            } else {
                (0..options.probes_per_tensor)
                    .map(|_| rng.random_range(0..len))
                    .collect()
            };
            for idx in indices {
                let analytic = if is_bias {
                    grads.bias[li][idx]
                } else {
                    grads.weights[li][idx]
                };
                let numeric = probe(&mut work, li, is_bias, idx);
                record(analytic, numeric);
            }
        }
    }

    for i in 0..x.len() {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += h;
        xm[i] -= h;
        let numeric = (relu_pattern(net, &xp) == base_pattern
            && relu_pattern(net, &xm) == base_pattern)
            .then(|| (dot(&u, &net.forward(&xp)) - dot(&u, &net.forward(&xm))) / (2.0 * h));
        record(input_grad[i], numeric);
    }
    report
}
