//! Relational inputs: tables, the join file, and the
//! disjoint feature partition that maps every feature to exactly one table.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Column {
    pub name: String,
    pub values: Vec<f64>,
}

/// An immutable numeric table. Rows form a multiset: duplicates are kept.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    name: String,
    columns: Vec<Column>,
    rows: usize,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: Vec<Column>) -> Result<Self> {
        let name = name.into();
        if columns.is_empty() {
            return Err(Error::contract(format!("table {name} has no columns")));
        }
        let rows = columns[0].values.len();
        if rows == 0 {
            return Err(Error::contract(format!("table {name} is empty")));
        }
        let mut seen = HashSet::new();
        for c in &columns {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::contract(format!(
                    "table {name} repeats feature {}",
                    c.name
                )));
            }
            if c.values.len() != rows {
                return Err(Error::contract(format!(
                    "table {name}: column {} has {} values, expected {rows}",
                    c.name,
                    c.values.len()
                )));
            }
            if let Some(v) = c.values.iter().find(|v| !v.is_finite()) {
                return Err(Error::contract(format!(
                    "table {name}: column {} holds non-finite value {v}",
                    c.name
                )));
            }
        }
        Ok(Self {
            name,
            columns,
            rows,
        })
    }

    /// Convenience constructor from a header and row-major values.
    pub fn from_rows<R: AsRef<[f64]>>(
        name: impl Into<String>,
        header: &[&str],
        rows: &[R],
    ) -> Result<Self> {
        let mut columns: Vec<Column> = header
            .iter()
            .map(|h| Column {
                name: h.to_string(),
                values: Vec::with_capacity(rows.len()),
            })
            .collect();
        for r in rows {
            let r = r.as_ref();
            if r.len() != header.len() {
                return Err(Error::contract("row width differs from header width"));
            }
            for (c, v) in columns.iter_mut().zip(r) {
                c.values.push(*v);
            }
        }
        Self::new(name, columns)
    }

    /// Reads a CSV file with a header row. `subset`, when given, keeps only
    /// the named columns (in subset order).
    pub fn from_csv(name: &str, path: &Path, subset: Option<&[String]>) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_reader(name, file, path, subset)
    }

    pub fn from_csv_reader<R: std::io::Read>(
        name: &str,
        reader: R,
        origin: &Path,
        subset: Option<&[String]>,
    ) -> Result<Self> {
        let load_err = |line: usize, message: String| Error::Load {
            file: origin.to_path_buf(),
            line,
            message,
        };
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header: Vec<String> = rdr
            .headers()
            .map_err(|e| load_err(1, e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        if header.is_empty() || header.iter().all(String::is_empty) {
            return Err(load_err(1, "missing header row".into()));
        }
        let mut seen = HashSet::new();
        for h in &header {
            if h.is_empty() {
                return Err(load_err(1, "empty feature name in header".into()));
            }
            if !seen.insert(h.as_str()) {
                return Err(load_err(1, format!("duplicate feature {h}")));
            }
        }
        let keep: Vec<usize> = match subset {
            None => (0..header.len()).collect(),
            Some(names) => {
                let mut picked = Vec::with_capacity(names.len());
                for n in names {
                    let pos = header.iter().position(|h| h == n).ok_or_else(|| {
                        load_err(1, format!("feature {n} listed in spec but not in header"))
                    })?;
                    if picked.contains(&pos) {
                        return Err(load_err(1, format!("duplicate feature {n} in subset")));
                    }
                    picked.push(pos);
                }
                picked
            }
        };
        let mut values: Vec<Vec<f64>> = vec![Vec::new(); keep.len()];
        for (i, rec) in rdr.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| load_err(line, e.to_string()))?;
            if rec.len() != header.len() {
                return Err(load_err(
                    line,
                    format!("expected {} fields, found {}", header.len(), rec.len()),
                ));
            }
            for (slot, &c) in values.iter_mut().zip(&keep) {
                let cell = &rec[c];
                let v: f64 = cell.parse().map_err(|_| {
                    load_err(line, format!("cannot parse {cell:?} in column {}", header[c]))
                })?;
                if !v.is_finite() {
                    return Err(load_err(
                        line,
                        format!("non-finite value {cell:?} in column {}", header[c]),
                    ));
                }
                slot.push(v);
            }
        }
        if values.first().is_none_or(Vec::is_empty) {
            return Err(load_err(1, "table has no data rows".into()));
        }
        let columns = keep
            .iter()
            .zip(values)
            .map(|(&c, values)| Column {
                name: header[c].clone(),
                values,
            })
            .collect();
        Self::new(name, columns)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn feature_names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|c| c.name.as_str())
    }

    pub fn column_index(&self, feature: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == feature)
    }

    pub fn column(&self, feature: &str) -> Option<&[f64]> {
        self.column_index(feature)
            .map(|i| self.columns[i].values.as_slice())
    }

    #[inline]
    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.columns[col].values[row]
    }

    pub fn row(&self, row: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c.values[row]).collect()
    }

    /// Copy keeping only rows for which `keep` holds.
    pub fn filter_rows(&self, mut keep: impl FnMut(usize) -> bool) -> Result<Table> {
        let idx: Vec<usize> = (0..self.rows).filter(|&r| keep(r)).collect();
        let columns = self
            .columns
            .iter()
            .map(|c| Column {
                name: c.name.clone(),
                values: idx.iter().map(|&r| c.values[r]).collect(),
            })
            .collect();
        Table::new(self.name.clone(), columns)
    }
}

/// The full feature list `D`, every table's own features `D_i`, and the
/// disjoint sets `D̂_i = D_i \ (D̂_1 ∪ … ∪ D̂_{i-1})`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FeaturePartition {
    pub full: Vec<String>,
    pub per_table: Vec<Vec<String>>,
    pub disjoint: Vec<Vec<String>>,
    /// For table `i`, positions (within the table) of the columns in `D̂_i`.
    pub block_columns: Vec<Vec<usize>>,
    /// For table `i`, offset of the `D̂_i` block inside a full point.
    pub block_offsets: Vec<usize>,
}

impl FeaturePartition {
    pub fn new(tables: &[Table]) -> Self {
        let mut full = Vec::new();
        let mut claimed = HashSet::new();
        let mut per_table = Vec::with_capacity(tables.len());
        let mut disjoint = Vec::with_capacity(tables.len());
        let mut block_columns = Vec::with_capacity(tables.len());
        let mut block_offsets = Vec::with_capacity(tables.len());
        for t in tables {
            per_table.push(t.feature_names().map(str::to_string).collect());
            block_offsets.push(full.len());
            let mut own = Vec::new();
            let mut cols = Vec::new();
            for (ci, name) in t.feature_names().enumerate() {
                if claimed.insert(name.to_string()) {
                    own.push(name.to_string());
                    cols.push(ci);
                    full.push(name.to_string());
                }
            }
            disjoint.push(own);
            block_columns.push(cols);
        }
        Self {
            full,
            per_table,
            disjoint,
            block_columns,
            block_offsets,
        }
    }

    pub fn dim(&self) -> usize {
        self.full.len()
    }

    pub fn tables(&self) -> usize {
        self.per_table.len()
    }

    pub fn block_dim(&self, table: usize) -> usize {
        self.disjoint[table].len()
    }

    /// The `D̂_table` slice of a full point.
    pub fn block<'p>(&self, point: &'p [f64], table: usize) -> &'p [f64] {
        let o = self.block_offsets[table];
        &point[o..o + self.block_dim(table)]
    }

    pub fn feature_index(&self, feature: &str) -> Option<usize> {
        self.full.iter().position(|f| f == feature)
    }
}

/// Parsed join file (TOML).
///
/// ```toml
/// label = "y"            # optional class-label feature
///
/// [[table]]
/// name = "orders"        # optional, defaults to the file stem
/// path = "orders.csv"    # relative to the join file
/// features = ["a", "b"]  # optional subset of the header
/// ```
#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
pub struct JoinSpec {
    #[serde(rename = "table")]
    pub tables: Vec<TableSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
pub struct TableSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<String>>,
}

impl JoinSpec {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut spec: JoinSpec = toml::from_str(&text).map_err(|e| Error::Spec(e.to_string()))?;
        if spec.tables.is_empty() {
            return Err(Error::Spec("no [[table]] entries".into()));
        }
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        for t in &mut spec.tables {
            if t.path.is_relative() {
                t.path = base.join(&t.path);
            }
        }
        Ok(spec)
    }

    pub fn table_name(&self, i: usize) -> String {
        let t = &self.tables[i];
        t.name.clone().unwrap_or_else(|| {
            t.path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| format!("T{}", i + 1))
        })
    }

    /// Every file this spec reads, spec order.
    pub fn input_paths(&self) -> Vec<PathBuf> {
        self.tables.iter().map(|t| t.path.clone()).collect()
    }
}

/// Loads all tables of `spec` in spec order, together with their partition.
pub fn load_tables(spec: &JoinSpec) -> Result<(Vec<Table>, FeaturePartition)> {
    let mut tables = Vec::with_capacity(spec.tables.len());
    let mut names = HashSet::new();
    for (i, t) in spec.tables.iter().enumerate() {
        let name = spec.table_name(i);
        if !names.insert(name.clone()) {
            return Err(Error::Spec(format!("duplicate table name {name}")));
        }
        tables.push(Table::from_csv(&name, &t.path, t.features.as_deref())?);
    }
    let partition = FeaturePartition::new(&tables);
    Ok((tables, partition))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn csv_table(name: &str, text: &str) -> Result<Table> {
        Table::from_csv_reader(name, text.as_bytes(), Path::new(name), None)
    }

    #[test]
    fn partition_of_two_table_example() {
        let t1 = csv_table("T1", "d1,d2\n1,1\n2,1\n2,2\n3,3\n").unwrap();
        let t2 = csv_table("T2", "d2,d3\n1,1\n1,4\n3,1\n3,3\n").unwrap();
        let p = FeaturePartition::new(&[t1, t2]);
        assert_eq!(p.full, ["d1", "d2", "d3"]);
        assert_eq!(p.disjoint, vec![vec!["d1", "d2"], vec!["d3"]]);
        assert_eq!(p.block_columns, vec![vec![0, 1], vec![1]]);
        assert_eq!(p.block_offsets, vec![0, 2]);
    }

    #[test]
    fn partition_single_table() {
        let t = csv_table("A", "a\n5\n").unwrap();
        let p = FeaturePartition::new(&[t]);
        assert_eq!(p.disjoint, vec![vec!["a"]]);
        assert_eq!(p.dim(), 1);
    }

    #[test]
    fn partition_three_table_chain() {
        let r = Table::from_rows("R", &["a", "b"], &[[0.0, 0.0]]).unwrap();
        let s = Table::from_rows("S", &["b", "c"], &[[0.0, 0.0]]).unwrap();
        let u = Table::from_rows("U", &["c", "e"], &[[0.0, 0.0]]).unwrap();
        let p = FeaturePartition::new(&[r, s, u]);
        assert_eq!(p.disjoint, vec![vec!["a", "b"], vec!["c"], vec!["e"]]);
    }

    #[test]
    fn load_errors_name_file_and_line() {
        let err = csv_table("T", "a,b\n1,2\n3,x\n").unwrap_err();
        assert_eq!(err.to_string(), "T:3: cannot parse \"x\" in column b");
        let err = csv_table("T", "a,a\n1,2\n").unwrap_err();
        assert_eq!(err.to_string(), "T:1: duplicate feature a");
        let err = csv_table("T", "a,b\n").unwrap_err();
        assert_eq!(err.to_string(), "T:1: table has no data rows");
        let err = csv_table("T", "a\ninf\n").unwrap_err();
        assert!(err.to_string().starts_with("T:2: non-finite"));
    }

    #[test]
    fn feature_subset_is_respected() {
        let t = Table::from_csv_reader(
            "T",
            "a,b,c\n1,2,3\n".as_bytes(),
            Path::new("T"),
            Some(&["c".to_string(), "a".to_string()]),
        )
        .unwrap();
        assert_eq!(t.feature_names().collect::<Vec<_>>(), ["c", "a"]);
        assert_eq!(t.row(0), vec![3.0, 1.0]);
    }

    #[test]
    fn spec_parses_and_resolves_paths() {
        let dir = tempfile::tempdir().unwrap();
        let spec_path = dir.path().join("join.toml");
        std::fs::write(
            &spec_path,
            "label = \"y\"\n[[table]]\npath = \"t1.csv\"\n[[table]]\nname = \"S\"\npath = \"sub/t2.csv\"\nfeatures = [\"b\"]\n",
        )
        .unwrap();
        let spec = JoinSpec::from_file(&spec_path).unwrap();
        assert_eq!(spec.label.as_deref(), Some("y"));
        assert_eq!(spec.tables[0].path, dir.path().join("t1.csv"));
        assert_eq!(spec.table_name(0), "t1");
        assert_eq!(spec.table_name(1), "S");
    }
}
