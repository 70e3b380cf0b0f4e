use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::buffer::{ReplayBuffer, Transition};
use super::{sub_seed, train_step, AgentBundle, Hyperparams, Mode};
use crate::costmodel::{CostReport, IndexConfiguration};
use crate::env::{value_from_costs, IndexEnv};
use crate::error::{Error, Result};

pub const TRACE_HEADER: [&str; 5] = [
    "episode",
    "cum_reward",
    "rollout_value",
    "eff_action_space",
    "seconds",
];

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub episode: usize,
    pub cum_reward: f64,
    pub rollout_value: f64,
    /// Mean over the episode's steps of `|{k : p̃[k] >= 0.5 and feasible[k]}|`.
    pub eff_action_space: f64,
    pub seconds: f64,
    /// Storage of the final configuration (not written to CSV).
    pub storage_units: f64,
    /// Candidate indices chosen, in order (not written to CSV).
    pub chosen: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingTrace {
    pub rows: Vec<TraceRow>,
}

impl TrainingTrace {
    /// CSV text. With `wall_clock = false` the seconds column is written as
    /// `0` so that reruns are byte-identical.
    pub fn to_csv(&self, wall_clock: bool) -> String {
        let mut out = TRACE_HEADER.join(",");
        out.push('\n');
        for r in &self.rows {
            let secs = if wall_clock { r.seconds } else { 0.0 };
            writeln!(
                out,
                "{},{:?},{:?},{:?},{:?}",
                r.episode, r.cum_reward, r.rollout_value, r.eff_action_space, secs
            )
            .expect("writing to a string");
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>, wall_clock: bool) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv(wall_clock)).map_err(|e| Error::io(path, e))
    }

    /// SHA-256 of the CSV with the wall-clock column zeroed.
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.to_csv(false).as_bytes()))
    }

    /// Area under the rollout-value curve with unit width per episode.
    pub fn rollout_auc(&self) -> f64 {
        self.rows.iter().map(|r| r.rollout_value).sum()
    }
}

/// `1 / max first-step reward` over the candidates feasible at reset.
fn auto_reward_scale(env: &IndexEnv) -> Result<f64> {
    let start = env.reset(0)?;
    let mut best: f64 = 0.0;
    for k in (0..env.action_dim()).filter(|&k| start.feasible[k]) {
        best = best.max(env.step(&start, k)?.reward);
    }
    Ok(if best > 0.0 && best.is_finite() { 1.0 / best } else { 1.0 })
}

fn with_episode(err: Error, episode: usize) -> Error {
    match err {
        Error::Divergence { detail, .. } => Error::Divergence { episode, detail },
        other => other,
    }
}

/// Trains a fresh agent for `episodes` episodes.
pub fn run_training(
    env: &IndexEnv,
    hyper: &Hyperparams,
    episodes: usize,
    seed: u64,
) -> Result<(AgentBundle, TrainingTrace)> {
    let bundle = AgentBundle::new(env.state_dim(), env.action_dim(), hyper.clone(), seed)?;
    run_training_from(env, bundle, episodes, seed)
}

/// Continues training `bundle` (e.g. restored from a checkpoint) on `env`,
/// whose pool must have the bundle's dimensionality.
pub fn run_training_from(
    env: &IndexEnv,
    mut bundle: AgentBundle,
    episodes: usize,
    seed: u64,
) -> Result<(AgentBundle, TrainingTrace)> {
    check_env(&bundle, env)?;
    if bundle.train_steps == 0 {
        bundle.reward_scale = match bundle.hyper.reward_scale {
            Some(s) => s,
            None => auto_reward_scale(env)?,
        };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, 100));
    let mut buffer = ReplayBuffer::new(bundle.hyper.buffer_capacity, sub_seed(seed, 101));
    let mut trace = TrainingTrace::default();
    for episode in 0..episodes {
        let started = Instant::now();
        let mut state = env.reset(sub_seed(seed, 1000 + episode as u64))?;
        bundle.action_exist = state.selected.clone();
        let mut cum_reward = 0.0;
        let mut eff_sum = 0.0;
        let mut chosen = Vec::new();
        while !state.done {
            let sv = state.state_vec.to_vec();
            let (scores, k, decision) = bundle.act(&sv, &state.feasible, Mode::Train, &mut rng)?;
            eff_sum += decision.effective_size(&state.feasible) as f64;
            let out = env.step(&state, k)?;
            cum_reward += out.reward;
            chosen.push(k);
            buffer.push(Transition {
                state: sv,
                action: scores,
                reward: out.reward,
                next_state: out.next_state.state_vec.to_vec(),
                done: out.next_state.done,
                feasible: state.feasible.clone(),
                feasible_next: out.next_state.feasible.clone(),
            })?;
            state = out.next_state;
            bundle.action_exist = state.selected.clone();
            if buffer.len() >= bundle.hyper.batch_size {
                train_step(&mut bundle, &mut buffer, &mut rng).map_err(|e| with_episode(e, episode))?;
            }
        }
        let steps = chosen.len();
        trace.rows.push(TraceRow {
            episode,
            cum_reward,
            rollout_value: value_from_costs(state.report.total_cost, env.empty_report().total_cost),
            eff_action_space: if steps > 0 { eff_sum / steps as f64 } else { 0.0 },
            seconds: started.elapsed().as_secs_f64(),
            storage_units: state.config.total_storage_units(),
            chosen,
        });
    }
    bundle.action_exist = vec![false; bundle.action_dim];
    Ok((bundle, trace))
}

fn check_env(bundle: &AgentBundle, env: &IndexEnv) -> Result<()> {
    if env.action_dim() != bundle.action_dim {
        return Err(Error::Dimension {
            what: "candidate pool",
            expected: bundle.action_dim,
            actual: env.action_dim(),
        });
    }
    if env.state_dim() != bundle.state_dim {
        return Err(Error::Dimension {
            what: "state",
            expected: bundle.state_dim,
            actual: env.state_dim(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalStep {
    pub chosen: usize,
    /// Actor scores for this state.
    pub scores: Vec<f64>,
    pub feasible: Vec<bool>,
    pub probs: Vec<f64>,
    pub mask: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRollout {
    pub config: IndexConfiguration,
    pub report: CostReport,
    pub value: f64,
    pub steps: Vec<EvalStep>,
}

/// Noise-free rollout with thresholded masks, recording every decision.
pub fn evaluate_detailed(bundle: &AgentBundle, env: &IndexEnv) -> Result<EvalRollout> {
    check_env(bundle, env)?;
    let mut agent = bundle.clone();
    // eval mode draws nothing; the generator only satisfies the signature
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut state = env.reset(0)?;
    let mut steps = Vec::new();
    while !state.done {
        agent.action_exist = state.selected.clone();
        let sv = state.state_vec.to_vec();
        let (scores, k, decision) = agent.act(&sv, &state.feasible, Mode::Eval, &mut rng)?;
        steps.push(EvalStep {
            chosen: k,
            scores,
            feasible: state.feasible.clone(),
            probs: decision.probs,
            mask: decision.mask,
        });
        state = env.step(&state, k)?.next_state;
    }
    let value = value_from_costs(state.report.total_cost, env.empty_report().total_cost);
    Ok(EvalRollout {
        config: state.config,
        report: state.report,
        value,
        steps,
    })
}

pub fn evaluate(bundle: &AgentBundle, env: &IndexEnv) -> Result<(IndexConfiguration, CostReport)> {
    let r = evaluate_detailed(bundle, env)?;
    Ok((r.config, r.report))
}
