//! Reference selectors: exhaustive optimum, additive greedy, uniform random,
//! and the TD3 agent with masking disabled.
//!
//! All of them read the instance (schema, workload, pool, cost source and
//! budget) from an [`IndexEnv`]. Only the TD3 ablation honours the
//! environment's step limit; the others run until nothing more fits.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{evaluate_detailed, run_training, Hyperparams, TrainingTrace};
use crate::costmodel::{CostReport, IndexConfiguration};
use crate::env::{value_from_costs, IndexEnv};
use crate::error::{Error, Result};

/// Default pool-size limit for [`exhaustive_best`].
pub const DEFAULT_MAX_POOL: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exhaustive,
    Greedy,
    Random,
    Td3Nomask,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Exhaustive => "exhaustive",
            Method::Greedy => "greedy",
            Method::Random => "random",
            Method::Td3Nomask => "td3_nomask",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exhaustive" => Ok(Method::Exhaustive),
            "greedy" => Ok(Method::Greedy),
            "random" => Ok(Method::Random),
            "td3_nomask" => Ok(Method::Td3Nomask),
            other => Err(Error::Argument(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineResult {
    pub method: Method,
    pub config: IndexConfiguration,
    pub report: CostReport,
    /// `1 - C(config)/C(∅)`.
    pub value: f64,
    /// Pool indices of the chosen candidates, in selection order.
    pub chosen: Vec<usize>,
    pub elapsed_seconds: f64,
}

fn finish(
    env: &IndexEnv,
    method: Method,
    chosen: Vec<usize>,
    started: Instant,
) -> Result<BaselineResult> {
    let config = config_of(env, &chosen);
    let report = env.cost_source().evaluate(env.workload(), &config)?;
    Ok(BaselineResult {
        method,
        value: value_from_costs(report.total_cost, env.empty_report().total_cost),
        config,
        report,
        chosen,
        elapsed_seconds: started.elapsed().as_secs_f64(),
    })
}

fn config_of(env: &IndexEnv, chosen: &[usize]) -> IndexConfiguration {
    IndexConfiguration::from_indexes(
        chosen
            .iter()
            .map(|&k| (env.pool().candidates()[k].clone(), env.storages()[k])),
    )
}

/// Minimum-cost budget-feasible subset of the pool. Ties go to the smaller
/// total storage, then to the lexicographically smaller sorted index list.
pub fn exhaustive_best(env: &IndexEnv, max_pool: usize) -> Result<BaselineResult> {
    let started = Instant::now();
    let k = env.action_dim();
    if k > max_pool {
        return Err(Error::PoolTooLarge {
            size: k,
            limit: max_pool,
        });
    }
    let storages = env.storages();
    let mut best: Option<(f64, f64, Vec<usize>)> = None;
    for bits in 0u64..(1u64 << k) {
        let members: Vec<usize> = (0..k).filter(|&i| bits >> i & 1 == 1).collect();
        let storage: f64 = members.iter().map(|&i| storages[i]).sum();
        if storage > env.budget_units() {
            continue;
        }
        let cost = env
            .cost_source()
            .evaluate(env.workload(), &config_of(env, &members))?
            .total_cost;
        let better = match &best {
            None => true,
            Some((bc, bs, bm)) => {
                cost < *bc || (cost == *bc && (storage < *bs || (storage == *bs && members < *bm)))
            }
        };
        if better {
            best = Some((cost, storage, members));
        }
    }
    let (_, _, members) = best.expect("the empty set is always feasible");
    finish(env, Method::Exhaustive, members, started)
}

/// Adds the candidate with the largest cost reduction per storage unit until
/// no fitting candidate reduces cost. Ties go to the lowest pool index.
pub fn greedy_select(env: &IndexEnv) -> Result<BaselineResult> {
    let started = Instant::now();
    let storages = env.storages();
    let mut chosen: Vec<usize> = Vec::new();
    let mut used = 0.0;
    let mut cost = env.empty_report().total_cost;
    loop {
        let mut best: Option<(f64, usize, f64)> = None;
        for k in 0..env.action_dim() {
            if chosen.contains(&k) || used + storages[k] > env.budget_units() {
                continue;
            }
            let mut trial = chosen.clone();
            trial.push(k);
            let after = env
                .cost_source()
                .evaluate(env.workload(), &config_of(env, &trial))?
                .total_cost;
            let reduction = cost - after;
            if reduction <= 0.0 {
                continue;
            }
            let ratio = if storages[k] > 0.0 {
                reduction / storages[k]
            } else {
                f64::INFINITY
            };
            if best.is_none_or(|(r, _, _)| ratio > r) {
                best = Some((ratio, k, after));
            }
        }
        match best {
            Some((_, k, after)) => {
                chosen.push(k);
                used += storages[k];
                cost = after;
            }
            None => break,
        }
    }
    finish(env, Method::Greedy, chosen, started)
}

/// Adds uniformly drawn fitting candidates until none fits.
pub fn random_select(env: &IndexEnv, seed: u64) -> Result<BaselineResult> {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let storages = env.storages();
    let mut chosen: Vec<usize> = Vec::new();
    let mut used = 0.0;
    loop {
        let fitting: Vec<usize> = (0..env.action_dim())
            .filter(|k| !chosen.contains(k) && used + storages[*k] <= env.budget_units())
            .collect();
        if fitting.is_empty() {
            break;
        }
        let k = fitting[rng.random_range(0..fitting.len())];
        chosen.push(k);
        used += storages[k];
    }
    finish(env, Method::Random, chosen, started)
}

/// Trains the agent with the selector pinned open and `λ = 0`, then
/// evaluates it.
pub fn td3_nomask(
    env: &IndexEnv,
    hyper: &Hyperparams,
    episodes: usize,
    seed: u64,
) -> Result<(BaselineResult, TrainingTrace)> {
    let started = Instant::now();
    let (bundle, trace) = run_training(env, &hyper.clone().without_masking(), episodes, seed)?;
    let rollout = evaluate_detailed(&bundle, env)?;
    let result = BaselineResult {
        method: Method::Td3Nomask,
        value: rollout.value,
        chosen: rollout.steps.iter().map(|s| s.chosen).collect(),
        config: rollout.config,
        report: rollout.report,
        elapsed_seconds: started.elapsed().as_secs_f64(),
    };
    Ok((result, trace))
}
