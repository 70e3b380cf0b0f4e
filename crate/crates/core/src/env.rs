//! Budget-constrained episodic environment for sequential index addition.
//!
//! The reward for adding an index is the normalized cost reduction divided by
//! the relative storage growth:
//!
//! ```text
//! r_t = [(C(I_{t-1}) - C(I_t)) / C(∅)] / [(M(I_t) - M(I_{t-1})) / max(M(I_{t-1}), M_floor)]
//! ```
//!
//! `M_floor` (default one storage unit) keeps the first step finite, where the
//! previous storage is zero.

use std::sync::Arc;

use crate::candidates::CandidatePool;
use crate::costmodel::{CostReport, CostSource, IndexConfiguration};
use crate::error::{Error, Result};
use crate::schema::SchemaStats;
use crate::workload::{Featurizer, Progress, StateVector, Workload, DEFAULT_Q_MAX};

pub const DEFAULT_M_FLOOR: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetState {
    pub total_budget_units: f64,
    pub used_units: f64,
}

impl BudgetState {
    pub fn new(total_budget_units: f64) -> Self {
        BudgetState {
            total_budget_units,
            used_units: 0.0,
        }
    }

    pub fn remaining(&self) -> f64 {
        self.total_budget_units - self.used_units
    }

    /// Whether adding `units` keeps usage within the budget.
    pub fn fits(&self, units: f64) -> bool {
        self.used_units + units <= self.total_budget_units
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub cost_before: f64,
    pub cost_after: f64,
    /// `C(∅)`, the normalizer.
    pub cost_empty: f64,
    pub storage_before: f64,
    pub storage_after: f64,
}

/// Recomputes the step reward from its bookkeeping.
pub fn reward(info: &StepInfo, m_floor: f64) -> f64 {
    let gain = if info.cost_empty > 0.0 {
        (info.cost_before - info.cost_after) / info.cost_empty
    } else {
        0.0
    };
    let growth = (info.storage_after - info.storage_before) / info.storage_before.max(m_floor);
    if gain == 0.0 {
        0.0
    } else {
        gain / growth
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeState {
    pub config: IndexConfiguration,
    pub budget: BudgetState,
    pub step_index: usize,
    pub state_vec: StateVector,
    /// Candidate not yet selected and fits the remaining budget.
    pub feasible: Vec<bool>,
    /// Candidate already in `config` (the action-existence set).
    pub selected: Vec<bool>,
    pub done: bool,
    pub report: CostReport,
}

impl EpisodeState {
    pub fn feasible_count(&self) -> usize {
        self.feasible.iter().filter(|&&f| f).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next_state: EpisodeState,
    pub reward: f64,
    pub info: StepInfo,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvOptions {
    /// Episode horizon; `None` means the pool size.
    pub max_steps: Option<usize>,
    pub q_max: usize,
    pub m_floor: f64,
}

impl Default for EnvOptions {
    fn default() -> Self {
        EnvOptions {
            max_steps: None,
            q_max: DEFAULT_Q_MAX,
            m_floor: DEFAULT_M_FLOOR,
        }
    }
}

/// Immutable environment description; episodes are value snapshots.
#[derive(Clone)]
pub struct IndexEnv {
    schema: Arc<SchemaStats>,
    workload: Arc<Workload>,
    pool: Arc<CandidatePool>,
    storages: Vec<f64>,
    cost_source: Arc<dyn CostSource>,
    featurizer: Featurizer,
    budget_units: f64,
    max_steps: usize,
    m_floor: f64,
    empty_report: CostReport,
}

impl std::fmt::Debug for IndexEnv {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("IndexEnv")
            .field("workload", &self.workload.name)
            .field("pool", &self.pool.len())
            .field("budget_units", &self.budget_units)
            .field("max_steps", &self.max_steps)
            .finish()
    }
}

impl IndexEnv {
    pub fn new(
        schema: Arc<SchemaStats>,
        workload: Arc<Workload>,
        pool: Arc<CandidatePool>,
        budget_units: f64,
        cost_source: Arc<dyn CostSource>,
        options: EnvOptions,
    ) -> Result<Self> {
        if !(budget_units.is_finite() && budget_units > 0.0) {
            return Err(Error::Argument(format!("budget must be positive, got {budget_units}")));
        }
        if pool.is_empty() {
            return Err(Error::Argument("candidate pool is empty".into()));
        }
        if !(options.m_floor > 0.0) {
            return Err(Error::Argument("m_floor must be positive".into()));
        }
        let storages = pool.storages(&schema)?;
        let featurizer = Featurizer::new(&schema, &workload, pool.len(), options.q_max)?;
        let empty_report = cost_source.evaluate(&workload, &IndexConfiguration::empty())?;
        let max_steps = options.max_steps.unwrap_or(pool.len());
        Ok(IndexEnv {
            schema,
            workload,
            pool,
            storages,
            cost_source,
            featurizer,
            budget_units,
            max_steps,
            m_floor: options.m_floor,
            empty_report,
        })
    }

    pub fn schema(&self) -> &Arc<SchemaStats> {
        &self.schema
    }

    pub fn workload(&self) -> &Arc<Workload> {
        &self.workload
    }

    pub fn pool(&self) -> &Arc<CandidatePool> {
        &self.pool
    }

    pub fn cost_source(&self) -> &Arc<dyn CostSource> {
        &self.cost_source
    }

    pub fn storages(&self) -> &[f64] {
        &self.storages
    }

    pub fn budget_units(&self) -> f64 {
        self.budget_units
    }

    pub fn max_steps(&self) -> usize {
        self.max_steps
    }

    pub fn m_floor(&self) -> f64 {
        self.m_floor
    }

    pub fn action_dim(&self) -> usize {
        self.pool.len()
    }

    pub fn state_dim(&self) -> usize {
        self.featurizer.state_dim()
    }

    pub fn empty_report(&self) -> &CostReport {
        &self.empty_report
    }

    /// Same environment with a different budget.
    pub fn with_budget(&self, budget_units: f64) -> Result<Self> {
        if !(budget_units.is_finite() && budget_units > 0.0) {
            return Err(Error::Argument(format!("budget must be positive, got {budget_units}")));
        }
        let mut env = self.clone();
        env.budget_units = budget_units;
        Ok(env)
    }

    /// Fresh episode with no indexes. The environment is deterministic, so
    /// the seed only identifies the episode.
    pub fn reset(&self, _seed: u64) -> Result<EpisodeState> {
        let budget = BudgetState::new(self.budget_units);
        let selected = vec![false; self.pool.len()];
        self.assemble(IndexConfiguration::empty(), budget, 0, selected, self.empty_report.clone())
    }

    fn assemble(
        &self,
        config: IndexConfiguration,
        budget: BudgetState,
        step_index: usize,
        selected: Vec<bool>,
        report: CostReport,
    ) -> Result<EpisodeState> {
        let feasible: Vec<bool> = selected
            .iter()
            .zip(&self.storages)
            .map(|(&sel, &s)| !sel && budget.fits(s))
            .collect();
        let done = step_index >= self.max_steps || !feasible.iter().any(|&f| f);
        let state_vec = self.featurizer.featurize_reports(
            &report,
            &self.empty_report,
            &selected,
            &budget,
            Progress {
                step_index,
                max_steps: self.max_steps,
            },
        )?;
        Ok(EpisodeState {
            config,
            budget,
            step_index,
            state_vec,
            feasible,
            selected,
            done,
            report,
        })
    }

    pub fn step(&self, state: &EpisodeState, action: usize) -> Result<StepOutcome> {
        if state.done {
            return Err(Error::EpisodeDone);
        }
        if !state.feasible.get(action).copied().unwrap_or(false) {
            return Err(Error::InfeasibleAction { index: action });
        }
        let storage = self.storages[action];
        let candidate = self.pool.candidates()[action].clone();
        let config = state.config.with_index(candidate, storage);
        let budget = BudgetState {
            total_budget_units: state.budget.total_budget_units,
            used_units: state.budget.used_units + storage,
        };
        let report = self.cost_source.evaluate(&self.workload, &config)?;
        let info = StepInfo {
            cost_before: state.report.total_cost,
            cost_after: report.total_cost,
            cost_empty: self.empty_report.total_cost,
            storage_before: state.budget.used_units,
            storage_after: budget.used_units,
        };
        let reward = reward(&info, self.m_floor);
        let mut selected = state.selected.clone();
        selected[action] = true;
        let next_state = self.assemble(config, budget, state.step_index + 1, selected, report)?;
        Ok(StepOutcome {
            next_state,
            reward,
            info,
        })
    }

    /// `1 - C(I)/C(∅)` for an arbitrary configuration.
    pub fn rollout_value(&self, config: &IndexConfiguration) -> Result<f64> {
        let report = self.cost_source.evaluate(&self.workload, config)?;
        Ok(value_from_costs(report.total_cost, self.empty_report.total_cost))
    }
}

pub fn value_from_costs(cost: f64, empty_cost: f64) -> f64 {
    if empty_cost > 0.0 {
        1.0 - cost / empty_cost
    } else {
        0.0
    }
}

/// Relative improvement `1 - C(I)/C(∅)` of `config`.
pub fn rollout_value(
    config: &IndexConfiguration,
    workload: &Workload,
    cost_source: &dyn CostSource,
) -> Result<f64> {
    let cost = cost_source.evaluate(workload, config)?.total_cost;
    let empty = cost_source
        .evaluate(workload, &IndexConfiguration::empty())?
        .total_cost;
    Ok(value_from_costs(cost, empty))
}
