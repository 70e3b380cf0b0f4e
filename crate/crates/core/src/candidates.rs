//! Multi-attribute index candidates: the raw action space.
//!
//! A candidate is an ordered column list on one table. The enumerator keeps
//! every permutation of up to `w_max` columns that passes three rules:
//!
//! * R1: every column is referenced (predicate or payload) by some query on
//!   that table;
//! * R2: the leading column is a predicate column of some query;
//! * R3: all columns are referenced together by one single query.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::costmodel::IndexConfiguration;
use crate::error::{Error, Result};
use crate::schema::SchemaStats;
use crate::workload::Workload;

pub const DEFAULT_W_MAX: usize = 3;

/// Bytes per storage unit (128 MiB).
pub const STORAGE_UNIT_BYTES: f64 = 128.0 * 1024.0 * 1024.0;

/// Per-entry row pointer overhead in bytes.
pub const ROWID_BYTES: u64 = 8;

/// Ordering is lexicographic by table, then by column sequence.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct IndexDef {
    pub table: String,
    pub columns: Vec<String>,
}

impl IndexDef {
    pub fn new<I, S>(table: impl Into<String>, columns: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        IndexDef {
            table: table.into(),
            columns: columns.into_iter().map(Into::into).collect(),
        }
    }

    pub fn validate(&self, schema: &SchemaStats, w_max: usize) -> Result<()> {
        if self.columns.is_empty() || self.columns.len() > w_max {
            return Err(Error::invariant(
                "1 <= |columns| <= W_max",
                format!("{self} has {} columns (W_max {w_max})", self.columns.len()),
            ));
        }
        let mut seen = HashSet::new();
        for c in &self.columns {
            if !seen.insert(c) {
                return Err(Error::invariant("index columns distinct", self.to_string()));
            }
            schema.column_or_err(&self.table, c)?;
        }
        Ok(())
    }
}

impl fmt::Display for IndexDef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.table, self.columns.join(","))
    }
}

/// Storage of `index` in 128 MiB units: `rows * (sum of widths + 8) / 2^27`.
pub fn candidate_storage(index: &IndexDef, schema: &SchemaStats) -> Result<f64> {
    let table = schema.table_or_err(&index.table)?;
    let mut width = ROWID_BYTES;
    for c in &index.columns {
        width += u64::from(schema.column_or_err(&index.table, c)?.width_bytes);
    }
    Ok(table.row_count as f64 * width as f64 / STORAGE_UNIT_BYTES)
}

#[derive(Debug, Clone, Default)]
pub struct CandidatePool {
    candidates: Vec<IndexDef>,
    index_of: HashMap<IndexDef, usize>,
}

impl PartialEq for CandidatePool {
    fn eq(&self, other: &Self) -> bool {
        self.candidates == other.candidates
    }
}

impl CandidatePool {
    pub fn enumerate(schema: &SchemaStats, workload: &Workload, w_max: usize) -> Self {
        enumerate_candidates(schema, workload, w_max)
    }

    /// Builds a pool from arbitrary candidates, sorted and deduplicated.
    /// Bypasses the enumeration rules; used to inject decoy actions.
    pub fn from_candidates(candidates: impl IntoIterator<Item = IndexDef>) -> Self {
        let set: BTreeSet<IndexDef> = candidates.into_iter().collect();
        let candidates: Vec<IndexDef> = set.into_iter().collect();
        let index_of = candidates
            .iter()
            .enumerate()
            .map(|(i, c)| (c.clone(), i))
            .collect();
        CandidatePool {
            candidates,
            index_of,
        }
    }

    /// This pool plus `extra`, re-sorted.
    pub fn extended(&self, extra: impl IntoIterator<Item = IndexDef>) -> Self {
        Self::from_candidates(self.candidates.iter().cloned().chain(extra))
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn candidates(&self) -> &[IndexDef] {
        &self.candidates
    }

    pub fn get(&self, k: usize) -> Option<&IndexDef> {
        self.candidates.get(k)
    }

    pub fn position(&self, index: &IndexDef) -> Option<usize> {
        self.index_of.get(index).copied()
    }

    pub fn storages(&self, schema: &SchemaStats) -> Result<Vec<f64>> {
        self.candidates
            .iter()
            .map(|c| candidate_storage(c, schema))
            .collect()
    }

    /// Multi-hot membership of `config` over this pool.
    pub fn config_bits(&self, config: &IndexConfiguration) -> Vec<bool> {
        let mut bits = vec![false; self.len()];
        for idx in config.indexes() {
            if let Some(k) = self.position(idx) {
                bits[k] = true;
            }
        }
        bits
    }

    /// SHA-256 over the ordered candidate list.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for c in &self.candidates {
            h.update(c.table.as_bytes());
            h.update([0u8]);
            for col in &c.columns {
                h.update(col.as_bytes());
                h.update([1u8]);
            }
            h.update([2u8]);
        }
        hex::encode(h.finalize())
    }
}

/// All ordered selections of `1..=max_len` distinct items from `items`.
pub(crate) fn permutations<'a>(items: &[&'a str], max_len: usize) -> Vec<Vec<&'a str>> {
    fn rec<'a>(
        items: &[&'a str],
        max_len: usize,
        used: &mut Vec<bool>,
        cur: &mut Vec<&'a str>,
        out: &mut Vec<Vec<&'a str>>,
    ) {
        if !cur.is_empty() {
            out.push(cur.clone());
        }
        if cur.len() == max_len {
            return;
        }
        for i in 0..items.len() {
            if used[i] {
                continue;
            }
            used[i] = true;
            cur.push(items[i]);
            rec(items, max_len, used, cur, out);
            cur.pop();
            used[i] = false;
        }
    }
    let mut out = Vec::new();
    rec(items, max_len, &mut vec![false; items.len()], &mut Vec::new(), &mut out);
    out
}

pub fn enumerate_candidates(_schema: &SchemaStats, workload: &Workload, w_max: usize) -> CandidatePool {
    let mut leading: HashMap<&str, HashSet<&str>> = HashMap::new();
    for q in &workload.queries {
        for t in &q.tables {
            let set = leading.entry(t.table.as_str()).or_default();
            set.extend(t.predicates.iter().map(|p| p.column.as_str()));
        }
    }
    let mut found = BTreeSet::new();
    for q in &workload.queries {
        for t in &q.tables {
            let lead = &leading[t.table.as_str()];
            let cols = t.referenced_columns();
            for perm in permutations(&cols, w_max) {
                if lead.contains(perm[0]) {
                    found.insert(IndexDef::new(t.table.clone(), perm));
                }
            }
        }
    }
    CandidatePool::from_candidates(found)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{ColumnStats, TableStats};
    use crate::workload::{Predicate, PredicateKind, Query, TableAccess};

    fn schema(cols: &[&str], rows: u64, width: u32) -> SchemaStats {
        SchemaStats {
            seed: 0,
            tables: vec![TableStats {
                name: "t".into(),
                row_count: rows,
                columns: cols
                    .iter()
                    .map(|c| ColumnStats {
                        name: c.to_string(),
                        width_bytes: width,
                        distinct_fraction: 0.5,
                        selectivity_eq: 0.1,
                        selectivity_range: 0.3,
                    })
                    .collect(),
            }],
        }
    }

    fn query(preds: &[&str], payload: &[&str]) -> Query {
        Query {
            id: "q".into(),
            frequency: 1.0,
            tables: vec![TableAccess {
                table: "t".into(),
                predicates: preds
                    .iter()
                    .map(|c| Predicate {
                        column: c.to_string(),
                        kind: PredicateKind::Eq,
                    })
                    .collect(),
                payload: payload.iter().map(|c| c.to_string()).collect(),
            }],
        }
    }

    #[test]
    fn predicate_plus_payload() {
        let s = schema(&["a", "b"], 100, 4);
        let w = Workload {
            name: "w".into(),
            queries: vec![query(&["a"], &["b"])],
        };
        let pool = enumerate_candidates(&s, &w, 2);
        assert_eq!(
            pool.candidates(),
            &[IndexDef::new("t", ["a"]), IndexDef::new("t", ["a", "b"])]
        );
    }

    #[test]
    fn empty_workload_empty_pool() {
        let s = schema(&["a"], 100, 4);
        let w = Workload {
            name: "w".into(),
            queries: vec![],
        };
        assert!(enumerate_candidates(&s, &w, 3).is_empty());
    }

    #[test]
    fn three_predicates_all_permutations() {
        let s = schema(&["a", "b", "c"], 100, 4);
        let w = Workload {
            name: "w".into(),
            queries: vec![query(&["a", "b", "c"], &[])],
        };
        assert_eq!(enumerate_candidates(&s, &w, 3).len(), 3 + 6 + 6);
    }

    #[test]
    fn storage_arithmetic() {
        let s = schema(&["a", "b"], 1 << 20, 8);
        let st = candidate_storage(&IndexDef::new("t", ["a"]), &s).unwrap();
        assert_eq!(st, 0.125);
        let wide = candidate_storage(&IndexDef::new("t", ["a", "b"]), &s).unwrap();
        assert!(wide > st);
        assert!(matches!(
            candidate_storage(&IndexDef::new("t", ["z"]), &s),
            Err(Error::UnknownColumn { .. })
        ));
        assert!(matches!(
            candidate_storage(&IndexDef::new("u", ["a"]), &s),
            Err(Error::UnknownTable(_))
        ));
    }

    #[test]
    fn index_def_validation() {
        let s = schema(&["a", "b"], 10, 4);
        assert!(IndexDef::new("t", Vec::<String>::new()).validate(&s, 3).is_err());
        assert!(IndexDef::new("t", ["a", "a"]).validate(&s, 3).is_err());
        assert!(IndexDef::new("t", ["a", "b"]).validate(&s, 1).is_err());
        IndexDef::new("t", ["b", "a"]).validate(&s, 2).unwrap();
    }

    #[test]
    fn ordering_is_lexicographic() {
        let pool = CandidatePool::from_candidates([
            IndexDef::new("u", ["a"]),
            IndexDef::new("t", ["b"]),
            IndexDef::new("t", ["a", "c"]),
            IndexDef::new("t", ["a"]),
            IndexDef::new("t", ["a"]),
        ]);
        let names: Vec<String> = pool.candidates().iter().map(|c| c.to_string()).collect();
        assert_eq!(names, ["t(a)", "t(a,c)", "t(b)", "u(a)"]);
        assert_eq!(pool.position(&IndexDef::new("t", ["b"])), Some(2));
    }

    #[test]
    fn permutation_counts() {
        let items = ["a", "b", "c", "d"];
        assert_eq!(permutations(&items, 1).len(), 4);
        assert_eq!(permutations(&items, 2).len(), 4 + 12);
        assert_eq!(permutations(&items, 4).len(), 4 + 12 + 24 + 24);
    }
}
