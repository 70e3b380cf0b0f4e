//! Run configuration: a flat TOML table whose keys mirror the fields below.
//! Every key is optional except where a command needs an output directory.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use idxsel_core::agent::{Hyperparams, MaskingMode};
use idxsel_core::candidates::{enumerate_candidates, CandidatePool, DEFAULT_W_MAX};
use idxsel_core::costmodel::{AnalyticCostSource, CostSource, ExternalCostSource};
use idxsel_core::env::{EnvOptions, IndexEnv, DEFAULT_M_FLOOR};
use idxsel_core::schema::{generate_schema, load_schema, SchemaProfile, SchemaStats};
use idxsel_core::workload::{generate_workload, load_workload, Workload, DEFAULT_Q_MAX};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Generated schema profile, used when `schema_path` is unset.
    pub profile: String,
    pub schema_path: Option<PathBuf>,
    /// Template and query counts for generated workloads.
    pub templates: usize,
    pub queries: usize,
    pub workload_path: Option<PathBuf>,
    /// Seed for schema and workload generation; defaults to `seed`.
    pub instance_seed: Option<u64>,
    pub w_max: usize,
    pub budget_units: f64,
    pub episodes: usize,
    pub max_steps: Option<usize>,
    pub q_max: usize,
    pub m_floor: f64,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    /// Program and arguments of an external cost source.
    pub cost_source_cmd: Option<String>,
    pub cost_timeout_secs: f64,
    /// Write real seconds into the trace (makes it non-reproducible).
    pub trace_wall_clock: bool,

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
    pub reward_scale: Option<f64>,
    pub masking: MaskingMode,

    pub compare_methods: Vec<String>,
    pub compare_budgets: Vec<f64>,
    pub compare_episodes: Vec<usize>,
    /// Instance seeds for the workload axis; empty means the run's own.
    pub compare_instance_seeds: Vec<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let h = Hyperparams::default();
        RunConfig {
            profile: "tiny".into(),
            schema_path: None,
            templates: 3,
            queries: 10,
            workload_path: None,
            instance_seed: None,
            w_max: DEFAULT_W_MAX,
            budget_units: 2.0,
            episodes: 300,
            max_steps: None,
            q_max: DEFAULT_Q_MAX,
            m_floor: DEFAULT_M_FLOOR,
            seed: 0,
            output_dir: None,
            cost_source_cmd: None,
            cost_timeout_secs: 10.0,
            trace_wall_clock: false,
            gamma: h.gamma,
            tau: h.tau,
            policy_delay: h.policy_delay,
            exploration_noise: h.exploration_noise,
            target_noise: h.target_noise,
            noise_clip: h.noise_clip,
            sparsity_lambda: h.sparsity_lambda,
            history_beta: h.history_beta,
            history_rho: h.history_rho,
            batch_size: h.batch_size,
            buffer_capacity: h.buffer_capacity,
            learning_rate: h.learning_rate,
            hidden: h.hidden,
            reward_scale: h.reward_scale,
            masking: h.masking,
            compare_methods: ["agent", "td3_nomask", "greedy", "random", "exhaustive"]
                .map(String::from)
                .to_vec(),
            compare_budgets: vec![2.0, 4.0, 6.0, 8.0],
            compare_episodes: vec![50, 100, 200, 400],
            compare_instance_seeds: Vec::new(),
        }
    }
}

/// Everything one environment needs, loaded or generated.
pub struct Instance {
    pub schema: Arc<SchemaStats>,
    pub workload: Arc<Workload>,
    pub pool: Arc<CandidatePool>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical TOML rendering.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.profile()?;
        self.hyperparams().validate().map_err(|e| CliError::Usage(e.to_string()))?;
        let bad = |m: &str| Err(CliError::Usage(format!("config: {m}")));
        if self.w_max == 0 {
            return bad("w_max must be at least 1");
        }
        if !(self.budget_units.is_finite() && self.budget_units > 0.0) {
            return bad("budget_units must be positive");
        }
        if self.templates == 0 || self.queries < self.templates {
            return bad("need 0 < templates <= queries");
        }
        if self.max_steps == Some(0) {
            return bad("max_steps must be positive");
        }
        if !(self.cost_timeout_secs > 0.0 && self.cost_timeout_secs.is_finite()) {
            return bad("cost_timeout_secs must be positive");
        }
        for m in &self.compare_methods {
            if m != "agent" {
                m.parse::<idxsel_core::baselines::Method>()
                    .map_err(|e| CliError::Usage(e.to_string()))?;
            }
        }
        if self.compare_budgets.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
            return bad("compare_budgets must be positive");
        }
        Ok(())
    }

    pub fn profile(&self) -> Result<SchemaProfile, CliError> {
        self.profile.parse().map_err(|e: idxsel_core::Error| CliError::Usage(e.to_string()))
    }

    pub fn instance_seed(&self) -> u64 {
        self.instance_seed.unwrap_or(self.seed)
    }

    pub fn hyperparams(&self) -> Hyperparams {
        Hyperparams {
            gamma: self.gamma,
            tau: self.tau,
            policy_delay: self.policy_delay,
            exploration_noise: self.exploration_noise,
            target_noise: self.target_noise,
            noise_clip: self.noise_clip,
            sparsity_lambda: self.sparsity_lambda,
            history_beta: self.history_beta,
            history_rho: self.history_rho,
            batch_size: self.batch_size,
            buffer_capacity: self.buffer_capacity,
            learning_rate: self.learning_rate,
            hidden: self.hidden.clone(),
            reward_scale: self.reward_scale,
            masking: self.masking,
        }
    }

    pub fn schema(&self) -> Result<SchemaStats, CliError> {
        match &self.schema_path {
            Some(p) => load_schema(p).map_err(CliError::Input),
            None => Ok(generate_schema(self.profile()?, self.instance_seed())),
        }
    }

    /// Workload for `schema`; files are checked against it.
    pub fn workload(&self, schema: &SchemaStats) -> Result<Workload, CliError> {
        match &self.workload_path {
            Some(p) => load_workload(p, schema).map_err(CliError::Input),
            None => generate_workload(schema, self.templates, self.queries, self.instance_seed())
                .map_err(CliError::Input),
        }
    }

    pub fn instance(&self) -> Result<Instance, CliError> {
        let schema = self.schema()?;
        let workload = self.workload(&schema)?;
        let pool = enumerate_candidates(&schema, &workload, self.w_max);
        Ok(Instance {
            schema: Arc::new(schema),
            workload: Arc::new(workload),
            pool: Arc::new(pool),
        })
    }

    pub fn cost_source(&self, schema: &Arc<SchemaStats>) -> Result<Arc<dyn CostSource>, CliError> {
        match &self.cost_source_cmd {
            None => Ok(Arc::new(AnalyticCostSource::new(schema.clone()))),
            Some(cmd) => {
                let mut parts = cmd.split_whitespace();
                let program = parts
                    .next()
                    .ok_or_else(|| CliError::Usage("cost_source_cmd is empty".into()))?;
                let args: Vec<&str> = parts.collect();
                let timeout = Duration::from_secs_f64(self.cost_timeout_secs);
                Ok(Arc::new(
                    ExternalCostSource::spawn(program, &args, timeout).map_err(CliError::Runtime)?,
                ))
            }
        }
    }

    pub fn env(&self, inst: &Instance, budget_units: f64) -> Result<IndexEnv, CliError> {
        let options = EnvOptions {
            max_steps: self.max_steps,
            q_max: self.q_max,
            m_floor: self.m_floor,
        };
        IndexEnv::new(
            inst.schema.clone(),
            inst.workload.clone(),
            inst.pool.clone(),
            budget_units,
            self.cost_source(&inst.schema)?,
            options,
        )
        .map_err(CliError::Input)
    }
}
