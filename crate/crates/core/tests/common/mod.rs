#![allow(dead_code)]

use std::collections::BTreeSet;
use std::sync::Arc;

use idxsel_core::candidates::{enumerate_candidates, CandidatePool, IndexDef, DEFAULT_W_MAX};
use idxsel_core::costmodel::{AnalyticCostSource, CostSource};
use idxsel_core::env::{EnvOptions, IndexEnv};
use idxsel_core::schema::{generate_schema, ColumnStats, SchemaProfile, SchemaStats, TableStats};
use idxsel_core::workload::{generate_workload, Predicate, PredicateKind, Query, TableAccess, Workload};
use rand::seq::SliceRandom;
use rand::Rng;

pub fn instance(
    profile: SchemaProfile,
    templates: usize,
    queries: usize,
    seed: u64,
) -> (Arc<SchemaStats>, Arc<Workload>, Arc<CandidatePool>) {
    let schema = generate_schema(profile, seed);
    let workload = generate_workload(&schema, templates, queries, seed).unwrap();
    let pool = enumerate_candidates(&schema, &workload, DEFAULT_W_MAX);
    (Arc::new(schema), Arc::new(workload), Arc::new(pool))
}

pub fn env_for(
    schema: Arc<SchemaStats>,
    workload: Arc<Workload>,
    pool: Arc<CandidatePool>,
    budget: f64,
    max_steps: Option<usize>,
) -> IndexEnv {
    let source: Arc<dyn CostSource> = Arc::new(AnalyticCostSource::new(schema.clone()));
    let options = EnvOptions {
        max_steps,
        ..EnvOptions::default()
    };
    IndexEnv::new(schema, workload, pool, budget, source, options).unwrap()
}

pub fn env(
    profile: SchemaProfile,
    templates: usize,
    queries: usize,
    seed: u64,
    budget: f64,
    max_steps: Option<usize>,
) -> IndexEnv {
    let (s, w, p) = instance(profile, templates, queries, seed);
    env_for(s, w, p, budget, max_steps)
}

/// Random schema with `1..=max_tables` tables of `1..=max_cols` columns.
pub fn random_schema<R: Rng>(rng: &mut R, max_tables: usize, max_cols: usize) -> SchemaStats {
    let tables = (0..rng.random_range(1..=max_tables))
        .map(|t| TableStats {
            name: format!("t{t}"),
            row_count: rng.random_range(1..=20_000),
            columns: (0..rng.random_range(1..=max_cols))
                .map(|c| ColumnStats {
                    name: format!("c{c}"),
                    width_bytes: [1, 4, 8, 16][rng.random_range(0..4)],
                    distinct_fraction: rng.random_range(0.001..1.0),
                    selectivity_eq: rng.random_range(0.0001..0.5),
                    selectivity_range: rng.random_range(0.01..0.9),
                })
                .collect(),
        })
        .collect();
    SchemaStats { seed: 0, tables }
}

/// Random workload touching `schema`; columns may appear as predicates,
/// payload, or both roles across queries.
pub fn random_workload<R: Rng>(rng: &mut R, schema: &SchemaStats, queries: usize) -> Workload {
    let queries = (0..queries)
        .map(|i| {
            let mut tables: Vec<&TableStats> = schema.tables.iter().collect();
            tables.shuffle(rng);
            let n = rng.random_range(1..=tables.len());
            let accesses = tables[..n]
                .iter()
                .map(|t| {
                    let mut cols: Vec<&str> = t.columns.iter().map(|c| c.name.as_str()).collect();
                    cols.shuffle(rng);
                    let npred = rng.random_range(0..=cols.len());
                    let npay = rng.random_range(0..=cols.len() - npred);
                    TableAccess {
                        table: t.name.clone(),
                        predicates: cols[..npred]
                            .iter()
                            .map(|c| Predicate {
                                column: c.to_string(),
                                kind: if rng.random_bool(0.5) {
                                    PredicateKind::Eq
                                } else {
                                    PredicateKind::Range
                                },
                            })
                            .collect(),
                        payload: cols[npred..npred + npay].iter().map(|c| c.to_string()).collect(),
                    }
                })
                .collect();
            Query {
                id: format!("q{i}"),
                frequency: rng.random_range(0.5..10.0),
                tables: accesses,
            }
        })
        .collect();
    Workload {
        name: "random".into(),
        queries,
    }
}

/// Every ordered selection of schema columns up to `w_max`, filtered by the
/// three validity rules checked literally.
pub fn brute_force_pool(schema: &SchemaStats, workload: &Workload, w_max: usize) -> Vec<IndexDef> {
    fn perms(cols: &[String], w_max: usize) -> Vec<Vec<String>> {
        let mut out: Vec<Vec<String>> = vec![vec![]];
        let mut all = Vec::new();
        for _ in 0..w_max {
            let mut next = Vec::new();
            for p in &out {
                for c in cols {
                    if !p.contains(c) {
                        let mut q = p.clone();
                        q.push(c.clone());
                        next.push(q);
                    }
                }
            }
            all.extend(next.iter().cloned());
            out = next;
        }
        all
    }
    let mut pool = BTreeSet::new();
    for t in &schema.tables {
        let cols: Vec<String> = t.columns.iter().map(|c| c.name.clone()).collect();
        let accesses: Vec<_> = workload
            .queries
            .iter()
            .filter_map(|q| q.tables.iter().find(|a| a.table == t.name))
            .collect();
        let mentioned = |c: &String| {
            accesses
                .iter()
                .any(|a| a.predicates.iter().any(|p| &p.column == c) || a.payload.contains(c))
        };
        for p in perms(&cols, w_max) {
            let r1 = p.iter().all(mentioned);
            let r2 = accesses
                .iter()
                .any(|a| a.predicates.iter().any(|pr| pr.column == p[0]));
            let r3 = accesses.iter().any(|a| {
                p.iter()
                    .all(|c| a.predicates.iter().any(|pr| &pr.column == c) || a.payload.contains(c))
            });
            if r1 && r2 && r3 {
                pool.insert(IndexDef::new(t.name.clone(), p));
            }
        }
    }
    pool.into_iter().collect()
}
