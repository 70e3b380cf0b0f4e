//! Synthetic database schemas with per-column statistics.
//!
//! Statistics are the only ground truth the analytic cost model reads. There
//! are no rows; a schema is a catalog of cardinalities, widths and
//! selectivities.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnStats {
    pub name: String,
    pub width_bytes: u32,
    pub distinct_fraction: f64,
    /// Expected fraction of rows matching an equality predicate.
    pub selectivity_eq: f64,
    /// Expected fraction of rows matching a range predicate.
    pub selectivity_range: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableStats {
    pub name: String,
    pub row_count: u64,
    pub columns: Vec<ColumnStats>,
}

impl TableStats {
    pub fn column(&self, name: &str) -> Option<&ColumnStats> {
        self.columns.iter().find(|c| c.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemaStats {
    pub seed: u64,
    pub tables: Vec<TableStats>,
}

impl SchemaStats {
    pub fn table(&self, name: &str) -> Option<&TableStats> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn table_or_err(&self, name: &str) -> Result<&TableStats> {
        self.table(name)
            .ok_or_else(|| Error::UnknownTable(name.to_string()))
    }

    pub fn column_or_err(&self, table: &str, column: &str) -> Result<&ColumnStats> {
        self.table_or_err(table)?
            .column(column)
            .ok_or_else(|| Error::UnknownColumn {
                table: table.to_string(),
                column: column.to_string(),
            })
    }

    /// All `(table, column)` pairs in declaration order.
    pub fn all_columns(&self) -> impl Iterator<Item = (&str, &str)> {
        self.tables.iter().flat_map(|t| {
            t.columns
                .iter()
                .map(move |c| (t.name.as_str(), c.name.as_str()))
        })
    }

    pub fn column_count(&self) -> usize {
        self.tables.iter().map(|t| t.columns.len()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let mut names = HashSet::new();
        for t in &self.tables {
            if !names.insert(t.name.as_str()) {
                return Err(Error::invariant(
                    "table names unique",
                    format!("duplicate table `{}`", t.name),
                ));
            }
            if t.row_count < 1 {
                return Err(Error::invariant(
                    "row_count >= 1",
                    format!("table `{}` has row_count 0", t.name),
                ));
            }
            let mut cols = HashSet::new();
            for c in &t.columns {
                if !cols.insert(c.name.as_str()) {
                    return Err(Error::invariant(
                        "column names unique within a table",
                        format!("duplicate column `{}.{}`", t.name, c.name),
                    ));
                }
                validate_column(&t.name, c)?;
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let schema: SchemaStats =
            serde_json::from_str(text).map_err(|e| Error::parse("schema", &e))?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

fn validate_column(table: &str, c: &ColumnStats) -> Result<()> {
    let at = || format!("{table}.{}", c.name);
    if c.width_bytes < 1 {
        return Err(Error::invariant("width_bytes >= 1", at()));
    }
    let in_unit = |v: f64| v.is_finite() && v > 0.0 && v <= 1.0;
    if !in_unit(c.distinct_fraction) {
        return Err(Error::invariant(
            "distinct_fraction in (0,1]",
            format!("{}: {}", at(), c.distinct_fraction),
        ));
    }
    if !in_unit(c.selectivity_eq) || !in_unit(c.selectivity_range) {
        return Err(Error::invariant(
            "selectivities in (0,1]",
            format!("{}: eq={} range={}", at(), c.selectivity_eq, c.selectivity_range),
        ));
    }
    if c.selectivity_eq > c.selectivity_range {
        return Err(Error::invariant(
            "selectivity_eq <= selectivity_range",
            format!("{}: eq={} > range={}", at(), c.selectivity_eq, c.selectivity_range),
        ));
    }
    Ok(())
}

pub fn load_schema(path: impl AsRef<Path>) -> Result<SchemaStats> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    SchemaStats::from_json(&text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemaProfile {
    Tiny,
    Small,
    TpchLike,
}

impl FromStr for SchemaProfile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tiny" => Ok(SchemaProfile::Tiny),
            "small" => Ok(SchemaProfile::Small),
            "tpch_like" => Ok(SchemaProfile::TpchLike),
            other => Err(Error::Argument(format!(
                "unknown schema profile `{other}` (expected tiny, small or tpch_like)"
            ))),
        }
    }
}

impl fmt::Display for SchemaProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SchemaProfile::Tiny => "tiny",
            SchemaProfile::Small => "small",
            SchemaProfile::TpchLike => "tpch_like",
        })
    }
}

/// Row counts for the `tpch_like` profile: SF1 cardinalities scaled so that
/// `lineitem` has 10^6 rows. `region` and `nation` do not scale in TPC-H and
/// keep their fixed sizes.
pub const TPCH_LIKE_ROWS: [(&str, u64); 8] = [
    ("region", 5),
    ("nation", 25),
    ("supplier", 1_667),
    ("customer", 24_995),
    ("part", 33_330),
    ("partsupp", 133_306),
    ("orders", 249_949),
    ("lineitem", 1_000_000),
];

// (column, width, distinct values at SF1 scaled to the table above; 0 = unique key)
const TPCH_COLUMNS: [(&str, &[(&str, u32, u64)]); 8] = [
    ("region", &[("r_regionkey", 4, 0), ("r_name", 25, 0), ("r_comment", 152, 0)]),
    (
        "nation",
        &[
            ("n_nationkey", 4, 0),
            ("n_name", 25, 0),
            ("n_regionkey", 4, 5),
            ("n_comment", 152, 0),
        ],
    ),
    (
        "supplier",
        &[
            ("s_suppkey", 4, 0),
            ("s_name", 25, 0),
            ("s_address", 40, 0),
            ("s_nationkey", 4, 25),
            ("s_phone", 15, 0),
            ("s_acctbal", 8, 1_600),
        ],
    ),
    (
        "customer",
        &[
            ("c_custkey", 4, 0),
            ("c_name", 25, 0),
            ("c_address", 40, 0),
            ("c_nationkey", 4, 25),
            ("c_phone", 15, 0),
            ("c_acctbal", 8, 20_000),
            ("c_mktsegment", 10, 5),
        ],
    ),
    (
        "part",
        &[
            ("p_partkey", 4, 0),
            ("p_name", 55, 0),
            ("p_mfgr", 25, 5),
            ("p_brand", 10, 25),
            ("p_type", 25, 150),
            ("p_size", 4, 50),
            ("p_container", 10, 40),
            ("p_retailprice", 8, 5_000),
        ],
    ),
    (
        "partsupp",
        &[
            ("ps_partkey", 4, 33_330),
            ("ps_suppkey", 4, 1_667),
            ("ps_availqty", 4, 9_999),
            ("ps_supplycost", 8, 99_901),
        ],
    ),
    (
        "orders",
        &[
            ("o_orderkey", 4, 0),
            ("o_custkey", 4, 16_667),
            ("o_orderstatus", 1, 3),
            ("o_totalprice", 8, 0),
            ("o_orderdate", 4, 2_406),
            ("o_orderpriority", 15, 5),
            ("o_shippriority", 4, 1),
        ],
    ),
    (
        "lineitem",
        &[
            ("l_orderkey", 4, 249_949),
            ("l_partkey", 4, 33_330),
            ("l_suppkey", 4, 1_667),
            ("l_quantity", 8, 50),
            ("l_extendedprice", 8, 155_000),
            ("l_discount", 8, 11),
            ("l_shipdate", 4, 2_526),
            ("l_commitdate", 4, 2_466),
            ("l_receiptdate", 4, 2_554),
            ("l_returnflag", 1, 3),
            ("l_linestatus", 1, 2),
            ("l_shipmode", 10, 7),
        ],
    ),
];

/// Deterministic synthetic schema for a profile and seed.
pub fn generate_schema(profile: SchemaProfile, seed: u64) -> SchemaStats {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5c4e_4d41_0001);
    let tables = match profile {
        SchemaProfile::Tiny => random_tables(&mut rng, 3, 2..=4, 1_000..=10_000),
        SchemaProfile::Small => random_tables(&mut rng, 5, 3..=6, 10_000..=100_000),
        SchemaProfile::TpchLike => tpch_tables(&mut rng),
    };
    SchemaStats { seed, tables }
}

fn random_tables(
    rng: &mut ChaCha8Rng,
    count: usize,
    columns: std::ops::RangeInclusive<usize>,
    rows: std::ops::RangeInclusive<u64>,
) -> Vec<TableStats> {
    const WIDTHS: [u32; 6] = [4, 4, 8, 8, 16, 32];
    (0..count)
        .map(|t| {
            let row_count = rng.random_range(rows.clone());
            let ncols = rng.random_range(columns.clone());
            let columns = (0..ncols)
                .map(|c| {
                    // log-uniform distinct fraction in [1e-3, 1]
                    let distinct_fraction = 10f64.powf(rng.random_range(-3.0..=0.0));
                    let width = WIDTHS[rng.random_range(0..WIDTHS.len())];
                    column_stats(rng, format!("c{c}"), width, distinct_fraction, row_count)
                })
                .collect();
            TableStats {
                name: format!("t{t}"),
                row_count,
                columns,
            }
        })
        .collect()
}

fn tpch_tables(rng: &mut ChaCha8Rng) -> Vec<TableStats> {
    TPCH_LIKE_ROWS
        .iter()
        .zip(TPCH_COLUMNS.iter())
        .map(|(&(name, row_count), &(cname, cols))| {
            debug_assert_eq!(name, cname);
            let columns = cols
                .iter()
                .map(|&(col, width, ndv)| {
                    let ndv = if ndv == 0 { row_count } else { ndv.min(row_count) };
                    let distinct_fraction = ndv as f64 / row_count as f64;
                    column_stats(rng, col.to_string(), width, distinct_fraction, row_count)
                })
                .collect();
            TableStats {
                name: name.to_string(),
                row_count,
                columns,
            }
        })
        .collect()
}

fn column_stats(
    rng: &mut ChaCha8Rng,
    name: String,
    width_bytes: u32,
    distinct_fraction: f64,
    row_count: u64,
) -> ColumnStats {
    let ndv = (distinct_fraction * row_count as f64).round().max(1.0);
    let selectivity_eq = (1.0 / ndv).min(1.0);
    let upper = selectivity_eq.max(0.25);
    let selectivity_range = if upper > selectivity_eq {
        rng.random_range(selectivity_eq..=upper)
    } else {
        selectivity_eq
    };
    ColumnStats {
        name,
        width_bytes,
        distinct_fraction,
        selectivity_eq,
        selectivity_range,
    }
}
