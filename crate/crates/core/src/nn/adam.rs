use super::{Gradients, Mlp};
use crate::error::{Error, Result};

/// Adam moments for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Gradients,
    v: Gradients,
}

impl AdamState {
    pub fn new(net: &Mlp, lr: f64) -> Self {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Gradients::zeros_like(net),
            v: Gradients::zeros_like(net),
        }
    }
}

/// One bias-corrected Adam descent step on `net` using `grads`.
pub fn adam_step(net: &mut Mlp, grads: &Gradients, state: &mut AdamState) -> Result<()> {
    if !grads.is_finite() {
        return Err(Error::Argument("non-finite gradient".into()));
    }
    if grads.weights.len() != net.layers().len() {
        return Err(Error::Dimension {
            what: "gradient layers",
            expected: net.layers().len(),
            actual: grads.weights.len(),
        });
    }
    state.step += 1;
    let t = state.step as f64;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powf(t);
    let c2 = 1.0 - b2.powf(t);
    let (lr, eps) = (state.lr, state.eps);
    let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
        for i in 0..p.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let mh = m[i] / c1;
            let vh = v[i] / c2;
            p[i] -= lr * mh / (vh.sqrt() + eps);
        }
    };
    for (li, layer) in net.layers_mut().iter_mut().enumerate() {
        update(
            &mut layer.weights,
            &grads.weights[li],
            &mut state.m.weights[li],
            &mut state.v.weights[li],
        );
        update(
            &mut layer.bias,
            &grads.bias[li],
            &mut state.m.bias[li],
            &mut state.v.bias[li],
        );
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Activation;

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        let mut net = Mlp::new(&[2, 1], &[Activation::Linear], 4);
        let before = net.clone();
        let mut grads = Gradients::zeros_like(&net);
        grads.weights[0] = vec![3.0, -0.5];
        grads.bias[0] = vec![0.0];
        let mut st = AdamState::new(&net, 0.01);
        adam_step(&mut net, &grads, &mut st).unwrap();
        let w0 = before.layers()[0].weights[0];
        let w1 = before.layers()[0].weights[1];
        assert!((net.layers()[0].weights[0] - (w0 - 0.01)).abs() < 1e-9);
        assert!((net.layers()[0].weights[1] - (w1 + 0.01)).abs() < 1e-9);
        assert_eq!(net.layers()[0].bias, before.layers()[0].bias);
    }

    #[test]
    fn minimizes_a_quadratic() {
        // fit y = 2x - 1 with a single linear unit
        let mut net = Mlp::new(&[1, 1], &[Activation::Linear], 1);
        let mut st = AdamState::new(&net, 0.05);
        for _ in 0..2000 {
            let mut g = Gradients::zeros_like(&net);
            for x in [-1.0, 0.0, 1.0, 2.0] {
                let err = net.forward(&[x])[0] - (2.0 * x - 1.0);
                let (gi, _) = net.backward(&[x], &[err]);
                g.add_assign(&gi);
            }
            adam_step(&mut net, &g, &mut st).unwrap();
        }
        assert!((net.layers()[0].weights[0] - 2.0).abs() < 1e-3);
        assert!((net.layers()[0].bias[0] + 1.0).abs() < 1e-3);
    }

    #[test]
    fn rejects_non_finite_gradients() {
        let mut net = Mlp::new(&[1, 1], &[Activation::Linear], 1);
        let mut g = Gradients::zeros_like(&net);
        g.bias[0][0] = f64::NAN;
        let mut st = AdamState::new(&net, 0.1);
        assert!(adam_step(&mut net, &g, &mut st).is_err());
    }
}
