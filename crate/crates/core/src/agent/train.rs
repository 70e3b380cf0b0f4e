use rand::Rng;
use rand_distr::StandardNormal;

use super::{adjust_probs, adjust_slope, decide_mask, pin_masked, AgentBundle, MaskDecision, MaskingMode};
use super::buffer::{ReplayBuffer, Transition};
use crate::error::{Error, Result};
use crate::nn::{adam_step, AdamState, Batch, BatchTrace, Gradients, Mlp};

#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    /// Mean squared TD error of the two critics, averaged.
    pub critic_loss: f64,
    pub baseline_loss: f64,
    /// `mean(δ · log_prob) - λ · mean Σ p̃`; zero when masking is pinned.
    pub selector_objective: f64,
    pub actor_loss: Option<f64>,
    /// Critic regression targets `y_c` of this batch.
    pub critic_targets: Vec<f64>,
    /// Baseline regression targets `y_b` of this batch.
    pub baseline_targets: Vec<f64>,
}

fn divergence(detail: impl Into<String>) -> Error {
    Error::Divergence {
        episode: 0,
        detail: detail.into(),
    }
}

fn step(net: &mut Mlp, grads: &Gradients, state: &mut AdamState, name: &str) -> Result<()> {
    if !grads.is_finite() {
        return Err(divergence(format!("non-finite {name} gradient")));
    }
    adam_step(net, grads, state)?;
    if !net.is_finite() {
        return Err(divergence(format!("non-finite {name} parameters")));
    }
    Ok(())
}

fn min_pair(a: &Batch, b: &Batch) -> Vec<f64> {
    a.data.iter().zip(&b.data).map(|(x, y)| x.min(*y)).collect()
}

/// Per-row masks from raw selector outputs (or pinned open) using `K`
/// uniforms per row from `rng`.
fn sample_masks<R: Rng>(
    raw: Option<&Batch>,
    open: &[Vec<bool>],
    history: &[f64],
    beta: f64,
    rng: &mut R,
) -> Vec<MaskDecision> {
    open.iter()
        .enumerate()
        .map(|(i, o)| {
            let probs = match raw {
                Some(raw) => adjust_probs(raw.row(i), history, o, beta),
                None => o.iter().map(|&x| if x { 1.0 } else { 0.0 }).collect(),
            };
            let u: Vec<f64> = (0..o.len()).map(|_| rng.random::<f64>()).collect();
            decide_mask(probs, o, Some(&u))
        })
        .collect()
}

fn pinned_rows(scores: &Batch, masks: impl Iterator<Item = Vec<bool>>) -> Batch {
    let rows: Vec<Vec<f64>> = masks
        .enumerate()
        .map(|(i, m)| pin_masked(scores.row(i), &m))
        .collect();
    Batch::from_rows(&rows)
}

/// Regresses `net` onto `targets`; returns (mean loss, per-sample squared errors).
fn regress(
    net: &mut Mlp,
    adam: &mut AdamState,
    input: &Batch,
    targets: &[f64],
    name: &str,
) -> Result<(f64, Vec<f64>)> {
    let trace = net.forward_batch(input);
    let n = targets.len() as f64;
    let err: Vec<f64> = trace.output().data.iter().zip(targets).map(|(q, y)| q - y).collect();
    let sq: Vec<f64> = err.iter().map(|e| e * e).collect();
    let loss = sq.iter().sum::<f64>() / n;
    if !loss.is_finite() {
        return Err(divergence(format!("non-finite {name} loss")));
    }
    let upstream = Batch {
        rows: err.len(),
        cols: 1,
        data: err.iter().map(|e| 2.0 * e / n).collect(),
    };
    let (grads, _) = net.backward_batch(&trace, &upstream);
    step(net, &grads, adam, name)?;
    Ok((loss, sq))
}

/// One update of critics, baselines and selector on a uniformly sampled
/// batch, plus the delayed actor and target update every `policy_delay`
/// calls. Draws target-noise normals, then `2 · batch · K` uniforms.
pub fn train_step<R: Rng>(
    bundle: &mut AgentBundle,
    buffer: &mut ReplayBuffer,
    rng: &mut R,
) -> Result<LossReport> {
    let hp = bundle.hyper.clone();
    let b = hp.batch_size;
    let batch: Vec<Transition> = buffer.sample(b)?;
    let k = bundle.action_dim;
    let learned = hp.masking == MaskingMode::Learned;
    let col = |f: fn(&Transition) -> &Vec<f64>| {
        Batch::from_rows(&batch.iter().map(f).collect::<Vec<_>>())
    };
    let s = col(|t| &t.state);
    let a = col(|t| &t.action);
    let s2 = col(|t| &t.next_state);
    if s.cols != bundle.state_dim || a.cols != k {
        return Err(Error::Dimension {
            what: "replayed transition",
            expected: bundle.state_dim + k,
            actual: s.cols + a.cols,
        });
    }
    let open: Vec<Vec<bool>> = batch.iter().map(|t| t.feasible.clone()).collect();
    let open2: Vec<Vec<bool>> = batch.iter().map(|t| t.feasible_next.clone()).collect();

    // target action with clipped smoothing noise
    let mut a2 = bundle.actor_target.predict_batch(&s2);
    for v in &mut a2.data {
        let n: f64 = rng.sample(StandardNormal);
        let noise = (hp.target_noise * n).clamp(-hp.noise_clip, hp.noise_clip);
        *v = (*v + noise).clamp(-1.0, 1.0);
    }
    let raw2 = learned.then(|| bundle.selector_target.predict_batch(&s2.concat(&a2)));
    let masks2 = sample_masks(raw2.as_ref(), &open2, &bundle.mask_history, hp.history_beta, rng);
    let a2_masked = pinned_rows(&a2, masks2.iter().map(|d| d.mask.clone()));
    let a2_open = pinned_rows(&a2, open2.iter().cloned());

    let bootstrap = |q: Vec<f64>| -> Vec<f64> {
        batch
            .iter()
            .zip(q)
            .map(|(t, q)| {
                let cont = if t.done { 0.0 } else { 1.0 };
                t.reward * bundle.reward_scale + hp.gamma * cont * q
            })
            .collect()
    };
    let in_c2 = s2.concat(&a2_masked);
    let y_c = bootstrap(min_pair(
        &bundle.critic_targets[0].predict_batch(&in_c2),
        &bundle.critic_targets[1].predict_batch(&in_c2),
    ));
    let in_b2 = s2.concat(&a2_open);
    let y_b = bootstrap(min_pair(
        &bundle.baseline_targets[0].predict_batch(&in_b2),
        &bundle.baseline_targets[1].predict_batch(&in_b2),
    ));

    // fresh masks on the stored actions
    let sel_input = s.concat(&a);
    let sel_trace: Option<BatchTrace> = learned.then(|| bundle.selector.forward_batch(&sel_input));
    let masks = sample_masks(
        sel_trace.as_ref().map(|t| t.output()),
        &open,
        &bundle.mask_history,
        hp.history_beta,
        rng,
    );
    let in_c = s.concat(&pinned_rows(&a, masks.iter().map(|d| d.mask.clone())));
    let in_b = s.concat(&pinned_rows(&a, open.iter().cloned()));

    let mut critic_loss = 0.0;
    let mut ell_c = vec![0.0; b];
    for j in 0..2 {
        let (loss, sq) = regress(
            &mut bundle.critics[j],
            &mut bundle.optim.critics[j],
            &in_c,
            &y_c,
            "critic",
        )?;
        critic_loss += loss / 2.0;
        for (e, x) in ell_c.iter_mut().zip(sq) {
            *e += x / 2.0;
        }
    }
    let mut baseline_loss = 0.0;
    let mut ell_b = vec![0.0; b];
    for j in 0..2 {
        let (loss, sq) = regress(
            &mut bundle.baselines[j],
            &mut bundle.optim.baselines[j],
            &in_b,
            &y_b,
            "baseline",
        )?;
        baseline_loss += loss / 2.0;
        for (e, x) in ell_b.iter_mut().zip(sq) {
            *e += x / 2.0;
        }
    }

    let mut selector_objective = 0.0;
    if let Some(trace) = &sel_trace {
        let raw = trace.output();
        let lambda = hp.sparsity_lambda;
        let n = b as f64;
        let mut upstream = Batch::zeros(b, k);
        for (i, d) in masks.iter().enumerate() {
            let advantage = ell_b[i] - ell_c[i];
            selector_objective +=
                (advantage * d.log_prob - lambda * d.probs.iter().sum::<f64>()) / n;
            let row = upstream.row_mut(i);
            for kk in 0..k {
                if !open[i][kk] {
                    continue;
                }
                let p = d.probs[kk];
                let dlogp = if Some(kk) == d.forced {
                    0.0
                } else if d.mask[kk] {
                    1.0 / p
                } else {
                    -1.0 / (1.0 - p)
                };
                let slope = adjust_slope(raw.row(i)[kk], bundle.mask_history[kk], hp.history_beta);
                row[kk] = slope * (-advantage * dlogp + lambda) / n;
            }
        }
        if !selector_objective.is_finite() {
            return Err(divergence("non-finite selector objective"));
        }
        let (grads, _) = bundle.selector.backward_batch(trace, &upstream);
        step(&mut bundle.selector, &grads, &mut bundle.optim.selector, "selector")?;
        bundle.selector_updates += 1;
    }

    bundle.train_steps += 1;
    let mut actor_loss = None;
    if bundle.train_steps % hp.policy_delay as u64 == 0 {
        let actor_trace = bundle.actor.forward_batch(&s);
        let pa = actor_trace.output();
        let eval_masks: Vec<Vec<bool>> = if bundle.selector_active() {
            let raw = bundle.selector.predict_batch(&s.concat(pa));
            open.iter()
                .enumerate()
                .map(|(i, o)| {
                    let probs = adjust_probs(raw.row(i), &bundle.mask_history, o, hp.history_beta);
                    decide_mask(probs, o, None).mask
                })
                .collect()
        } else {
            open.clone()
        };
        let critic_in = s.concat(&pinned_rows(pa, eval_masks.iter().cloned()));
        let ctrace = bundle.critics[0].forward_batch(&critic_in);
        let n = b as f64;
        let loss = -ctrace.output().data.iter().sum::<f64>() / n;
        if !loss.is_finite() {
            return Err(divergence("non-finite actor loss"));
        }
        let (_, gin) = bundle.critics[0].backward_batch(
            &ctrace,
            &Batch {
                rows: b,
                cols: 1,
                data: vec![-1.0 / n; b],
            },
        );
        let mut upstream = gin.columns(bundle.state_dim, k);
        for (i, m) in eval_masks.iter().enumerate() {
            for (g, &keep) in upstream.row_mut(i).iter_mut().zip(m) {
                if !keep {
                    *g = 0.0;
                }
            }
        }
        let (grads, _) = bundle.actor.backward_batch(&actor_trace, &upstream);
        step(&mut bundle.actor, &grads, &mut bundle.optim.actor, "actor")?;
        actor_loss = Some(loss);

        let tau = hp.tau;
        bundle.actor_target.soft_update_from(&bundle.actor, tau)?;
        for j in 0..2 {
            bundle.critic_targets[j].soft_update_from(&bundle.critics[j], tau)?;
            bundle.baseline_targets[j].soft_update_from(&bundle.baselines[j], tau)?;
        }
        bundle.selector_target.soft_update_from(&bundle.selector, tau)?;
    }

    let rho = hp.history_rho;
    for kk in 0..k {
        let mean = masks.iter().filter(|d| d.mask[kk]).count() as f64 / b as f64;
        bundle.mask_history[kk] = rho * bundle.mask_history[kk] + (1.0 - rho) * mean;
    }

    Ok(LossReport {
        critic_loss,
        baseline_loss,
        selector_objective,
        actor_loss,
        critic_targets: y_c,
        baseline_targets: y_b,
    })
}
