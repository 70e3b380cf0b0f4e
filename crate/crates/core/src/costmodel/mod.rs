//! What-if cost evaluation.
//!
//! [`AnalyticCostSource`] prices a workload under a hypothetical index
//! configuration with a closed-form model over [`SchemaStats`]. Costs are in
//! abstract units (rows examined plus a logarithmic traversal term):
//!
//! * a table without a usable index costs `row_count` (sequential scan);
//! * an index is usable iff its leading column is a predicate column of the
//!   query on that table;
//! * the matched prefix is the longest leading run of predicate columns, and
//!   an index path costs `traversal_weight * log2(rows) + rows * prod(sel) * h`
//!   where `h = 1` for a covering index and `heap_fetch_factor` otherwise.
//!
//! Each table takes the cheapest path; ties go to the index path.
//!
//! [`external`] proxies the same contract to a subprocess.

pub mod external;

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::candidates::{candidate_storage, IndexDef};
use crate::error::{Error, Result};
use crate::schema::SchemaStats;
use crate::workload::{PredicateKind, Query, Workload};

pub use external::{spawn_external_source, ExternalCostSource};

/// Relative tolerance for the report total and storage bookkeeping checks.
pub const REPORT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IndexConfiguration {
    indexes: BTreeSet<IndexDef>,
    total_storage_units: f64,
}

impl IndexConfiguration {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds a configuration from `(index, storage)` pairs; duplicates are
    /// counted once.
    pub fn from_indexes(items: impl IntoIterator<Item = (IndexDef, f64)>) -> Self {
        let mut config = Self::empty();
        for (idx, storage) in items {
            config = config.with_index(idx, storage);
        }
        config
    }

    /// Builds a configuration and prices each member against `schema`.
    pub fn from_schema(
        indexes: impl IntoIterator<Item = IndexDef>,
        schema: &SchemaStats,
    ) -> Result<Self> {
        let mut config = Self::empty();
        for idx in indexes {
            let s = candidate_storage(&idx, schema)?;
            config = config.with_index(idx, s);
        }
        Ok(config)
    }

    /// `self ∪ {index}`; a no-op if already present.
    pub fn with_index(&self, index: IndexDef, storage_units: f64) -> Self {
        let mut next = self.clone();
        if next.indexes.insert(index) {
            next.total_storage_units += storage_units;
        }
        next
    }

    pub fn contains(&self, index: &IndexDef) -> bool {
        self.indexes.contains(index)
    }

    pub fn indexes(&self) -> impl Iterator<Item = &IndexDef> {
        self.indexes.iter()
    }

    pub fn len(&self) -> usize {
        self.indexes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indexes.is_empty()
    }

    pub fn total_storage_units(&self) -> f64 {
        self.total_storage_units
    }

    pub fn validate(&self, schema: &SchemaStats) -> Result<()> {
        let expected: f64 = self
            .indexes
            .iter()
            .map(|i| candidate_storage(i, schema))
            .sum::<Result<f64>>()?;
        if (expected - self.total_storage_units).abs()
            > REPORT_TOLERANCE * expected.abs().max(1.0)
        {
            return Err(Error::invariant(
                "total_storage_units = sum of member storage",
                format!("{} vs {}", self.total_storage_units, expected),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryCost {
    pub id: String,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub total_cost: f64,
    pub per_query: Vec<QueryCost>,
    pub storage_units: f64,
}

impl CostReport {
    /// Checks the report against the workload it prices: one finite,
    /// non-negative cost per query in workload order, and a total equal to
    /// the frequency-weighted sum.
    pub fn validate(&self, workload: &Workload) -> Result<()> {
        if self.per_query.len() != workload.len() {
            return Err(Error::invariant(
                "one cost per query",
                format!("{} costs for {} queries", self.per_query.len(), workload.len()),
            ));
        }
        let mut sum = 0.0;
        for (qc, q) in self.per_query.iter().zip(&workload.queries) {
            if qc.id != q.id {
                return Err(Error::invariant(
                    "per-query ids follow workload order",
                    format!("expected `{}`, got `{}`", q.id, qc.id),
                ));
            }
            if !(qc.cost.is_finite() && qc.cost >= 0.0) {
                return Err(Error::invariant(
                    "query cost finite and >= 0",
                    format!("`{}` cost {}", qc.id, qc.cost),
                ));
            }
            sum += q.frequency * qc.cost;
        }
        if !(self.total_cost.is_finite() && self.storage_units.is_finite() && self.storage_units >= 0.0)
        {
            return Err(Error::invariant(
                "report totals finite",
                format!("total {} storage {}", self.total_cost, self.storage_units),
            ));
        }
        if (sum - self.total_cost).abs() > REPORT_TOLERANCE * sum.abs().max(1.0) {
            return Err(Error::invariant(
                "total_cost = sum of frequency-weighted query costs",
                format!("reported {} but weighted sum is {}", self.total_cost, sum),
            ));
        }
        Ok(())
    }
}

/// Something that can price a workload under a hypothetical configuration.
/// Implementations must be pure: identical inputs give identical reports.
pub trait CostSource: Send + Sync {
    fn evaluate(&self, workload: &Workload, config: &IndexConfiguration) -> Result<CostReport>;
}

impl<T: CostSource + ?Sized> CostSource for Arc<T> {
    fn evaluate(&self, workload: &Workload, config: &IndexConfiguration) -> Result<CostReport> {
        (**self).evaluate(workload, config)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    /// Multiplier on rows fetched through a non-covering index.
    pub heap_fetch_factor: f64,
    /// Multiplier on the `log2(rows)` descent term.
    pub traversal_weight: f64,
}

impl Default for CostParams {
    fn default() -> Self {
        CostParams {
            heap_fetch_factor: 2.0,
            traversal_weight: 1.0,
        }
    }
}

pub fn query_cost(
    query: &Query,
    config: &IndexConfiguration,
    schema: &SchemaStats,
    params: &CostParams,
) -> Result<f64> {
    let mut total = 0.0;
    for access in &query.tables {
        let table = schema.table_or_err(&access.table)?;
        let rows = table.row_count as f64;
        let mut best = rows;
        for idx in config.indexes().filter(|i| i.table == access.table) {
            let Some(lead) = idx.columns.first() else {
                continue;
            };
            if !access.has_predicate(lead) {
                continue;
            }
            let mut selectivity = 1.0;
            for c in &idx.columns {
                let Some(kind) = access.predicate_kind(c) else {
                    break;
                };
                let stats = schema.column_or_err(&access.table, c)?;
                selectivity *= match kind {
                    PredicateKind::Eq => stats.selectivity_eq,
                    PredicateKind::Range => stats.selectivity_range,
                };
            }
            let covering = access
                .predicates
                .iter()
                .map(|p| &p.column)
                .chain(access.payload.iter())
                .all(|c| idx.columns.contains(c));
            let heap = if covering { 1.0 } else { params.heap_fetch_factor };
            let cost = params.traversal_weight * rows.log2() + rows * selectivity * heap;
            if cost <= best {
                best = cost;
            }
        }
        total += best;
    }
    Ok(total)
}

pub fn workload_cost(
    workload: &Workload,
    config: &IndexConfiguration,
    schema: &SchemaStats,
    params: &CostParams,
) -> Result<CostReport> {
    let mut per_query = Vec::with_capacity(workload.len());
    let mut total_cost = 0.0;
    for q in &workload.queries {
        let cost = query_cost(q, config, schema, params)?;
        total_cost += q.frequency * cost;
        per_query.push(QueryCost {
            id: q.id.clone(),
            cost,
        });
    }
    Ok(CostReport {
        total_cost,
        per_query,
        storage_units: config.total_storage_units(),
    })
}

#[derive(Debug, Clone)]
pub struct AnalyticCostSource {
    schema: Arc<SchemaStats>,
    params: CostParams,
}

impl AnalyticCostSource {
    pub fn new(schema: impl Into<Arc<SchemaStats>>) -> Self {
        Self::with_params(schema, CostParams::default())
    }

    pub fn with_params(schema: impl Into<Arc<SchemaStats>>, params: CostParams) -> Self {
        AnalyticCostSource {
            schema: schema.into(),
            params,
        }
    }

    pub fn schema(&self) -> &SchemaStats {
        &self.schema
    }
}

impl CostSource for AnalyticCostSource {
    fn evaluate(&self, workload: &Workload, config: &IndexConfiguration) -> Result<CostReport> {
        workload_cost(workload, config, &self.schema, &self.params)
    }
}
