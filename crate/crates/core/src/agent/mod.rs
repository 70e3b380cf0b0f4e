//! TD3 learner with a selector network that masks action dimensions.
//!
//! The actor emits one score in `[-1, 1]` per candidate and the executed
//! action is the argmax over unmasked feasible scores. Critics see the score
//! vector with masked dimensions pinned to `-1`; baseline critics see it with
//! only infeasible dimensions pinned. The selector is trained by a
//! policy-gradient step whose advantage is the baseline squared TD error minus
//! the critic squared TD error, plus an expected-L0 sparsity penalty.

mod buffer;
mod checkpoint;

mod run;
mod train;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Activation, AdamState, Mlp};

pub use buffer::{ReplayBuffer, Transition};
pub use checkpoint::{BundleManifest, MANIFEST_FILE};
pub use run::{
    evaluate, evaluate_detailed, run_training, run_training_from, EvalRollout, EvalStep,
    TraceRow, TrainingTrace, TRACE_HEADER,
};
pub use train::{train_step, LossReport};

/// Probability clamp applied after history blending.
pub const PROB_EPS: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskingMode {
    /// Selector network trained online.
    Learned,
    /// Selector ignored: every feasible dimension is kept (`p̃ ≡ 1`).
    Pinned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hyperparams {
    pub gamma: f64,
    pub tau: f64,
    pub policy_delay: usize,
    pub exploration_noise: f64,
    pub target_noise: f64,
    pub noise_clip: f64,
    pub sparsity_lambda: f64,
    pub history_beta: f64,
    pub history_rho: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub learning_rate: f64,
    pub hidden: Vec<usize>,
    /// Multiplier applied to rewards before they enter the TD targets.
    /// `None` picks `1 / max first-step reward` on the training environment.
    pub reward_scale: Option<f64>,
    pub masking: MaskingMode,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            gamma: 0.99,
            tau: 0.005,
            policy_delay: 2,
            exploration_noise: 0.2,
            target_noise: 0.2,
            noise_clip: 0.5,
            sparsity_lambda: 0.01,
            history_beta: 0.3,
            history_rho: 0.9,
            batch_size: 64,
            buffer_capacity: 100_000,
            learning_rate: 3e-4,
            hidden: vec![128, 128],
            reward_scale: None,
            masking: MaskingMode::Learned,
        }
    }
}

impl Hyperparams {
    /// The no-selector ablation: masks pinned open, no sparsity pressure.
    pub fn without_masking(mut self) -> Self {
        self.masking = MaskingMode::Pinned;
        self.sparsity_lambda = 0.0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Argument(format!("invalid hyperparameter: {what}")));
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau must lie in (0, 1]");
        }
        if self.policy_delay == 0 {
            return bad("policy_delay must be at least 1");
        }
        if !(self.exploration_noise >= 0.0 && self.target_noise >= 0.0 && self.noise_clip >= 0.0) {
            return bad("noise scales must be non-negative");
        }
        if !(self.sparsity_lambda >= 0.0) {
            return bad("sparsity_lambda must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.history_beta) || !(0.0..=1.0).contains(&self.history_rho) {
            return bad("history_beta and history_rho must lie in [0, 1]");
        }
        if self.batch_size == 0 || self.buffer_capacity < self.batch_size {
            return bad("need 0 < batch_size <= buffer_capacity");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden layer sizes must be positive");
        }
        if let Some(s) = self.reward_scale {
            if !(s > 0.0 && s.is_finite()) {
                return bad("reward_scale must be positive");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskDecision {
    /// Adjusted probabilities; `0` on hard-zeroed dimensions.
    pub probs: Vec<f64>,
    pub mask: Vec<bool>,
    /// Bernoulli log-likelihood of the sampled dimensions.
    pub log_prob: f64,
    /// Dimension switched on because nothing else survived.
    pub forced: Option<usize>,
}

impl MaskDecision {
    /// `|{k : p̃[k] >= 0.5 and feasible[k]}|`.
    pub fn effective_size(&self, feasible: &[bool]) -> usize {
        self.probs
            .iter()
            .zip(feasible)
            .filter(|(&p, &f)| f && p >= 0.5)
            .count()
    }
}

/// Network set, optimizer state and mask statistics of one learner.
#[derive(Debug, Clone)]
pub struct AgentBundle {
    pub hyper: Hyperparams,
    pub state_dim: usize,
    pub action_dim: usize,
    pub actor: Mlp,
    pub actor_target: Mlp,
    pub critics: [Mlp; 2],
    pub critic_targets: [Mlp; 2],
    pub baselines: [Mlp; 2],
    pub baseline_targets: [Mlp; 2],
    pub selector: Mlp,
    pub selector_target: Mlp,
    pub mask_history: Vec<f64>,
    /// Candidates already in the current episode's configuration.
    pub action_exist: Vec<bool>,
    /// Resolved reward multiplier.
    pub reward_scale: f64,
    pub train_steps: u64,
    pub selector_updates: u64,
    pub(crate) optim: Optimizers,
}

#[derive(Debug, Clone)]
pub(crate) struct Optimizers {
    pub actor: AdamState,
    pub critics: [AdamState; 2],
    pub baselines: [AdamState; 2],
    pub selector: AdamState,
}

impl Optimizers {
    fn new(actor: &Mlp, critics: &[Mlp; 2], selector: &Mlp, lr: f64) -> Self {
        let pair = || [AdamState::new(&critics[0], lr), AdamState::new(&critics[1], lr)];
        Optimizers {
            actor: AdamState::new(actor, lr),
            critics: pair(),
            baselines: pair(),
            selector: AdamState::new(selector, lr),
        }
    }
}

fn sub_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn dims(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    std::iter::once(input)
        .chain(hidden.iter().copied())
        .chain(std::iter::once(output))
        .collect()
}

fn acts(hidden: usize, last: Activation) -> Vec<Activation> {
    let mut v = vec![Activation::Relu; hidden];
    v.push(last);
    v
}

impl AgentBundle {
    /// Fresh networks. Baselines share initial weights with the critics so
    /// the two families coincide exactly when masking is pinned.
    pub fn new(state_dim: usize, action_dim: usize, hyper: Hyperparams, seed: u64) -> Result<Self> {
        hyper.validate()?;
        if state_dim == 0 || action_dim == 0 {
            return Err(Error::Argument("state and action dimensions must be positive".into()));
        }
        let h = &hyper.hidden;
        let actor = Mlp::new(
            &dims(state_dim, h, action_dim),
            &acts(h.len(), Activation::Tanh),
            sub_seed(seed, 1),
        );
        let critic = |j: u64| {
            Mlp::new(
                &dims(state_dim + action_dim, h, 1),
                &acts(h.len(), Activation::Linear),
                sub_seed(seed, 2 + j),
            )
        };
        let selector = Mlp::new(
            &dims(state_dim + action_dim, h, action_dim),
            &acts(h.len(), Activation::Sigmoid),
            sub_seed(seed, 4),
        );
        let critics = [critic(0), critic(1)];
        let optim = Optimizers::new(&actor, &critics, &selector, hyper.learning_rate);
        Ok(AgentBundle {
            state_dim,
            action_dim,
            actor_target: actor.clone(),
            actor,
            critic_targets: critics.clone(),
            baselines: critics.clone(),
            baseline_targets: critics.clone(),
            critics,
            selector_target: selector.clone(),
            selector,
            mask_history: vec![1.0; action_dim],
            action_exist: vec![false; action_dim],
            reward_scale: hyper.reward_scale.unwrap_or(1.0),
            hyper,
            train_steps: 0,
            selector_updates: 0,
            optim,
        })
    }

    /// The architectures the agent trains, by name.
    pub fn networks(&self) -> [(&'static str, &Mlp); 6] {
        [
            ("actor", &self.actor),
            ("critic1", &self.critics[0]),
            ("critic2", &self.critics[1]),
            ("baseline1", &self.baselines[0]),
            ("baseline2", &self.baselines[1]),
            ("selector", &self.selector),
        ]
    }

    /// Whether masks currently come from the selector. Before the first
    /// selector update the selector is untrained and masks stay open.
    pub fn selector_active(&self) -> bool {
        self.hyper.masking == MaskingMode::Learned && self.selector_updates > 0
    }

    fn check_dims(&self, state: &[f64], feasible: &[bool]) -> Result<()> {
        if state.len() != self.state_dim {
            return Err(Error::Dimension {
                what: "state",
                expected: self.state_dim,
                actual: state.len(),
            });
        }
        if feasible.len() != self.action_dim {
            return Err(Error::Dimension {
                what: "feasibility vector",
                expected: self.action_dim,
                actual: feasible.len(),
            });
        }
        Ok(())
    }

    /// Dimensions the selector may keep: feasible and not already selected.
    fn open_dims(&self, feasible: &[bool]) -> Vec<bool> {
        feasible
            .iter()
            .zip(&self.action_exist)
            .map(|(&f, &e)| f && !e)
            .collect()
    }

    /// Mask for `(state, action)`. Train mode consumes exactly `K` uniforms
    /// from `rng` whether or not the selector is active.
    pub fn select_mask<R: Rng>(
        &self,
        state: &[f64],
        action: &[f64],
        feasible: &[bool],
        mode: Mode,
        rng: &mut R,
    ) -> Result<MaskDecision> {
        self.check_dims(state, feasible)?;
        let open = self.open_dims(feasible);
        if !open.iter().any(|&o| o) {
            return Err(Error::EmptyMask);
        }
        let probs = if self.selector_active() {
            let input: Vec<f64> = state.iter().chain(action).copied().collect();
            let raw = self.selector.forward(&input);
            adjust_probs(&raw, &self.mask_history, &open, self.hyper.history_beta)
        } else {
            open.iter().map(|&o| if o { 1.0 } else { 0.0 }).collect()
        };
        let uniforms: Option<Vec<f64>> = match mode {
            Mode::Train => Some((0..self.action_dim).map(|_| rng.random::<f64>()).collect()),
            Mode::Eval => None,
        };
        Ok(decide_mask(probs, &open, uniforms.as_deref()))
    }

    /// Picks an action for `state`. Train mode adds clipped Gaussian noise to
    /// the actor scores and consumes `K` normals then `K` uniforms.
    pub fn act<R: Rng>(
        &self,
        state: &[f64],
        feasible: &[bool],
        mode: Mode,
        rng: &mut R,
    ) -> Result<(Vec<f64>, usize, MaskDecision)> {
        self.check_dims(state, feasible)?;
        let mut scores = self.actor.forward(state);
        if mode == Mode::Train {
            let sigma = self.hyper.exploration_noise;
            for s in &mut scores {
                let n: f64 = rng.sample(StandardNormal);
                *s = (*s + sigma * n).clamp(-1.0, 1.0);
            }
        }
        let decision = self.select_mask(state, &scores, feasible, mode, rng)?;
        let chosen = masked_argmax(&scores, &decision.mask).ok_or(Error::EmptyMask)?;
        assert!(
            feasible[chosen] && decision.mask[chosen] && !self.action_exist[chosen],
            "chose a masked or infeasible dimension"
        );
        Ok((scores, chosen, decision))
    }
}

/// `clamp((1 - beta) p + beta M_hist, eps, 1 - eps)` on open dims, `0` elsewhere.
pub fn adjust_probs(raw: &[f64], history: &[f64], open: &[bool], beta: f64) -> Vec<f64> {
    raw.iter()
        .zip(history)
        .zip(open)
        .map(|((&p, &m), &o)| {
            if o {
                ((1.0 - beta) * p + beta * m).clamp(PROB_EPS, 1.0 - PROB_EPS)
            } else {
                0.0
            }
        })
        .collect()
}

/// Derivative of the adjusted probability with respect to the raw one.
pub(crate) fn adjust_slope(raw: f64, history: f64, beta: f64) -> f64 {
    let v = (1.0 - beta) * raw + beta * history;
    if (PROB_EPS..=1.0 - PROB_EPS).contains(&v) {
        1.0 - beta
    } else {
        0.0
    }
}

/// Samples (`uniforms` given) or thresholds at 0.5, then forces the most
/// probable open dimension on if the mask came out empty. Closed dims stay 0.
pub(crate) fn decide_mask(probs: Vec<f64>, open: &[bool], uniforms: Option<&[f64]>) -> MaskDecision {
    let mut mask: Vec<bool> = probs
        .iter()
        .enumerate()
        .map(|(k, &p)| {
            open[k]
                && match uniforms {
                    Some(u) => u[k] < p,
                    None => p >= 0.5,
                }
        })
        .collect();
    let mut forced = None;
    if !mask.iter().any(|&m| m) {
        let best = (0..probs.len())
            .filter(|&k| open[k])
            .fold(None, |best: Option<usize>, k| match best {
                Some(b) if probs[b] >= probs[k] => Some(b),
                _ => Some(k),
            });
        if let Some(k) = best {
            mask[k] = true;
            forced = Some(k);
        }
    }
    let log_prob = (0..probs.len())
        .filter(|&k| open[k] && Some(k) != forced)
        .map(|k| {
            if mask[k] {
                probs[k].ln()
            } else {
                (1.0 - probs[k]).ln()
            }
        })
        .filter(|x| x.is_finite())
        .sum();
    MaskDecision {
        probs,
        mask,
        log_prob,
        forced,
    }
}

/// Argmax over unmasked entries, ties to the lowest index.
pub fn masked_argmax(scores: &[f64], mask: &[bool]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (k, (&s, &m)) in scores.iter().zip(mask).enumerate() {
        if m && best.is_none_or(|b| s > scores[b]) {
            best = Some(k);
        }
    }
    best
}

/// Score vector with masked dimensions pinned to `-1`.
pub fn pin_masked(scores: &[f64], mask: &[bool]) -> Vec<f64> {
    scores
        .iter()
        .zip(mask)
        .map(|(&s, &m)| if m { s } else { -1.0 })
        .collect()
}
