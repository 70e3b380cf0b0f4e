//! Frequency-weighted query workloads and state featurization.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::candidates::CandidatePool;
use crate::costmodel::{CostReport, CostSource, IndexConfiguration};
use crate::env::BudgetState;
use crate::error::{Error, Result};
use crate::schema::SchemaStats;

/// Default number of query slots in the plan-feature block.
pub const DEFAULT_Q_MAX: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredicateKind {
    Eq,
    Range,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Predicate {
    pub column: String,
    pub kind: PredicateKind,
}

/// The columns one query touches on one table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableAccess {
    pub table: String,
    #[serde(default)]
    pub predicates: Vec<Predicate>,
    #[serde(default)]
    pub payload: Vec<String>,
}

impl TableAccess {
    pub fn predicate_kind(&self, column: &str) -> Option<PredicateKind> {
        self.predicates
            .iter()
            .find(|p| p.column == column)
            .map(|p| p.kind)
    }

    pub fn has_predicate(&self, column: &str) -> bool {
        self.predicates.iter().any(|p| p.column == column)
    }

    /// Predicate columns followed by payload columns not already listed.
    pub fn referenced_columns(&self) -> Vec<&str> {
        let mut out: Vec<&str> = self.predicates.iter().map(|p| p.column.as_str()).collect();
        for c in &self.payload {
            if !out.contains(&c.as_str()) {
                out.push(c);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Query {
    pub id: String,
    pub frequency: f64,
    pub tables: Vec<TableAccess>,
}

impl Query {
    pub fn access(&self, table: &str) -> Option<&TableAccess> {
        self.tables.iter().find(|t| t.table == table)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Workload {
    pub name: String,
    pub queries: Vec<Query>,
}

impl Workload {
    pub fn total_frequency(&self) -> f64 {
        self.queries.iter().map(|q| q.frequency).sum()
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    /// Structural checks that need no schema. An empty workload passes; the
    /// positive-total-frequency rule is enforced by [`Workload::validate`].
    pub fn validate_structure(&self) -> Result<()> {
        let mut ids = HashSet::new();
        for q in &self.queries {
            if !ids.insert(q.id.as_str()) {
                return Err(Error::invariant(
                    "query ids unique",
                    format!("duplicate query id `{}`", q.id),
                ));
            }
            if !(q.frequency.is_finite() && q.frequency > 0.0) {
                return Err(Error::invariant(
                    "frequency > 0",
                    format!("query `{}` has frequency {}", q.id, q.frequency),
                ));
            }
            if !q.tables.iter().any(|t| !t.predicates.is_empty()) {
                return Err(Error::invariant(
                    "predicate columns non-empty for at least one table",
                    format!("query `{}` has no predicates", q.id),
                ));
            }
            let mut tables = HashSet::new();
            for t in &q.tables {
                if !tables.insert(t.table.as_str()) {
                    return Err(Error::invariant(
                        "table referenced once per query",
                        format!("query `{}` lists `{}` twice", q.id, t.table),
                    ));
                }
                let mut preds = HashSet::new();
                for p in &t.predicates {
                    if !preds.insert(p.column.as_str()) {
                        return Err(Error::invariant(
                            "predicate columns distinct",
                            format!("query `{}` repeats predicate `{}.{}`", q.id, t.table, p.column),
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_structure()?;
        if self.total_frequency() <= 0.0 {
            return Err(Error::invariant(
                "total frequency > 0",
                format!("workload `{}` has no queries", self.name),
            ));
        }
        Ok(())
    }

    /// Every referenced table and column must exist in `schema`.
    pub fn validate_against(&self, schema: &SchemaStats) -> Result<()> {
        for q in &self.queries {
            for t in &q.tables {
                let table = schema.table(&t.table).ok_or_else(|| {
                    Error::invariant(
                        "referenced column exists",
                        format!("query `{}` references unknown table `{}`", q.id, t.table),
                    )
                })?;
                let cols = t.predicates.iter().map(|p| &p.column).chain(t.payload.iter());
                for c in cols {
                    if table.column(c).is_none() {
                        return Err(Error::invariant(
                            "referenced column exists",
                            format!("query `{}` references unknown column `{}.{}`", q.id, t.table, c),
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("workload serializes")
    }

    /// Parses and checks structure only; see [`load_workload`] for full validation.
    pub fn from_json_lenient(text: &str) -> Result<Self> {
        let w: Workload = serde_json::from_str(text).map_err(|e| Error::parse("workload", &e))?;
        w.validate_structure()?;
        Ok(w)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

pub fn save_workload(workload: &Workload, path: impl AsRef<Path>) -> Result<()> {
    workload.save(path)
}

/// Loads a workload and checks every invariant, including column existence.
pub fn load_workload(path: impl AsRef<Path>, schema: &SchemaStats) -> Result<Workload> {
    let w = load_workload_lenient(path)?;
    w.validate()?;
    w.validate_against(schema)?;
    Ok(w)
}

/// Like [`load_workload`] but accepts an empty query list.
pub fn load_workload_lenient(path: impl AsRef<Path>) -> Result<Workload> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Workload::from_json_lenient(&text)
}

struct Template {
    tables: Vec<TableAccess>,
    base_frequency: f64,
}

/// Builds a workload from `template_count` random query templates.
///
/// Query shape limits scale with `template_count`: more templates means more
/// tables, predicates and payload columns per query.
pub fn generate_workload(
    schema: &SchemaStats,
    template_count: usize,
    queries_per_workload: usize,
    seed: u64,
) -> Result<Workload> {
    if template_count == 0 || queries_per_workload == 0 {
        return Err(Error::Argument(
            "template_count and queries_per_workload must be positive".into(),
        ));
    }
    if template_count > queries_per_workload {
        return Err(Error::Argument(format!(
            "template_count {template_count} exceeds queries_per_workload {queries_per_workload}"
        )));
    }
    if schema.tables.is_empty() {
        return Err(Error::Argument("schema has no tables".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x3a0d_10ad_0000_0002);
    let max_tables = (1 + template_count / 4).min(schema.tables.len());
    let max_preds = (1 + template_count / 2).min(3);
    let max_payload = template_count.div_ceil(2).min(2);

    let templates: Vec<Template> = (0..template_count)
        .map(|_| {
            let ntables = rng.random_range(1..=max_tables);
            let picks = sample(&mut rng, schema.tables.len(), ntables).into_vec();
            let tables = picks
                .into_iter()
                .enumerate()
                .map(|(slot, ti)| {
                    let table = &schema.tables[ti];
                    let ncols = table.columns.len();
                    let lo = usize::from(slot == 0);
                    let npred = rng.random_range(lo..=max_preds.min(ncols));
                    let npay = rng.random_range(0..=max_payload.min(ncols - npred));
                    let order = sample(&mut rng, ncols, npred + npay).into_vec();
                    let predicates = order[..npred]
                        .iter()
                        .map(|&ci| Predicate {
                            column: table.columns[ci].name.clone(),
                            kind: if rng.random_bool(0.6) {
                                PredicateKind::Eq
                            } else {
                                PredicateKind::Range
                            },
                        })
                        .collect();
                    let payload = order[npred..]
                        .iter()
                        .map(|&ci| table.columns[ci].name.clone())
                        .collect();
                    TableAccess {
                        table: table.name.clone(),
                        predicates,
                        payload,
                    }
                })
                .collect();
            Template {
                tables,
                base_frequency: rng.random_range(1.0..10.0),
            }
        })
        .collect();

    let queries = (0..queries_per_workload)
        .map(|i| {
            let t = if i < template_count {
                i
            } else {
                rng.random_range(0..template_count)
            };
            let template = &templates[t];
            Query {
                id: format!("q{i}"),
                frequency: template.base_frequency * rng.random_range(0.5..1.5),
                tables: template.tables.clone(),
            }
        })
        .collect();

    let workload = Workload {
        name: format!("{}x{}-s{}", template_count, queries_per_workload, seed),
        queries,
    };
    workload.validate()?;
    workload.validate_against(schema)?;
    Ok(workload)
}

/// Network input assembled from four blocks: per-query plan features, the
/// multi-hot configuration, budget/progress meta data and a static
/// column-usage embedding of the workload.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub plan_features: Vec<f64>,
    pub config_bits: Vec<f64>,
    pub meta: [f64; 2],
    pub query_embedding: Vec<f64>,
}

impl StateVector {
    pub fn dim(&self) -> usize {
        self.plan_features.len() + self.config_bits.len() + 2 + self.query_embedding.len()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        v.extend_from_slice(&self.plan_features);
        v.extend_from_slice(&self.config_bits);
        v.extend_from_slice(&self.meta);
        v.extend_from_slice(&self.query_embedding);
        v
    }
}

/// Step counter and horizon, used for the second meta entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Progress {
    pub step_index: usize,
    pub max_steps: usize,
}

/// Precomputed layout for [`StateVector`]s of one (schema, workload, pool).
#[derive(Debug, Clone)]
pub struct Featurizer {
    q_max: usize,
    pool_len: usize,
    embedding: Vec<f64>,
}

impl Featurizer {
    pub fn new(
        schema: &SchemaStats,
        workload: &Workload,
        pool_len: usize,
        q_max: usize,
    ) -> Result<Self> {
        if workload.len() > q_max {
            return Err(Error::Dimension {
                what: "workload size vs Q_max",
                expected: q_max,
                actual: workload.len(),
            });
        }
        let index: HashMap<(&str, &str), usize> = schema
            .all_columns()
            .enumerate()
            .map(|(i, tc)| (tc, i))
            .collect();
        let ncols = index.len();
        let mut embedding = vec![0.0; 2 * ncols];
        let total = workload.total_frequency();
        if total > 0.0 {
            for q in &workload.queries {
                let w = q.frequency / total;
                for t in &q.tables {
                    for p in &t.predicates {
                        if let Some(&i) = index.get(&(t.table.as_str(), p.column.as_str())) {
                            embedding[2 * i] += w;
                        }
                    }
                    for c in &t.payload {
                        if let Some(&i) = index.get(&(t.table.as_str(), c.as_str())) {
                            embedding[2 * i + 1] += w;
                        }
                    }
                }
            }
        }
        for e in &mut embedding {
            *e = e.clamp(0.0, 1.0);
        }
        Ok(Featurizer {
            q_max,
            pool_len,
            embedding,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.q_max + self.pool_len + 2 + self.embedding.len()
    }

    pub fn q_max(&self) -> usize {
        self.q_max
    }

    pub fn embedding(&self) -> &[f64] {
        &self.embedding
    }

    /// Builds the state from already evaluated cost reports.
    pub fn featurize_reports(
        &self,
        report: &CostReport,
        empty_report: &CostReport,
        config_bits: &[bool],
        budget: &BudgetState,
        progress: Progress,
    ) -> Result<StateVector> {
        if config_bits.len() != self.pool_len {
            return Err(Error::Dimension {
                what: "config bits",
                expected: self.pool_len,
                actual: config_bits.len(),
            });
        }
        if report.per_query.len() > self.q_max {
            return Err(Error::Dimension {
                what: "workload size vs Q_max",
                expected: self.q_max,
                actual: report.per_query.len(),
            });
        }
        let mut plan_features = vec![0.0; self.q_max];
        for (i, (qc, base)) in report
            .per_query
            .iter()
            .zip(empty_report.per_query.iter())
            .enumerate()
        {
            plan_features[i] = if base.cost > 0.0 { qc.cost / base.cost } else { 1.0 };
        }
        let meta = [
            if budget.total_budget_units > 0.0 {
                (budget.remaining() / budget.total_budget_units).max(0.0)
            } else {
                0.0
            },
            if progress.max_steps > 0 {
                progress.step_index as f64 / progress.max_steps as f64
            } else {
                0.0
            },
        ];
        Ok(StateVector {
            plan_features,
            config_bits: config_bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
            meta,
            query_embedding: self.embedding.clone(),
        })
    }
}

/// One-shot featurization: evaluates `config` and the empty configuration on
/// `cost_source` and assembles the state.
#[allow(clippy::too_many_arguments)]
pub fn featurize(
    schema: &SchemaStats,
    workload: &Workload,
    pool: &CandidatePool,
    config: &IndexConfiguration,
    budget: &BudgetState,
    progress: Progress,
    cost_source: &dyn CostSource,
    q_max: usize,
) -> Result<StateVector> {
    let featurizer = Featurizer::new(schema, workload, pool.len(), q_max)?;
    let report = cost_source.evaluate(workload, config)?;
    let empty = cost_source.evaluate(workload, &IndexConfiguration::empty())?;
    let bits = pool.config_bits(config);
    featurizer.featurize_reports(&report, &empty, &bits, budget, progress)
}
