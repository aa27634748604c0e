use std::path::Path;

use crate::error::{Error, Result};
use crate::jointree::{check_acyclic, JoinTree};
use crate::schema::{load_tables, FeaturePartition, JoinSpec, Table};

/// Validated acyclic join: tables, their feature partition and a join tree.
#[derive(Clone, Debug)]
pub struct JoinInstance {
    pub tables: Vec<Table>,
    pub partition: FeaturePartition,
    pub tree: JoinTree,
}

impl JoinInstance {
    pub fn new(tables: Vec<Table>) -> Result<Self> {
        let tree = check_acyclic(&tables)?;
        let partition = FeaturePartition::new(&tables);
        Ok(Self {
            tables,
            partition,
            tree,
        })
    }

    pub fn from_spec(spec: &JoinSpec) -> Result<Self> {
        let (tables, partition) = load_tables(spec)?;
        let tree = check_acyclic(&tables)?;
        Ok(Self {
            tables,
            partition,
            tree,
        })
    }

    pub fn load(spec_path: &Path) -> Result<Self> {
        Self::from_spec(&JoinSpec::from_file(spec_path)?)
    }

    pub fn tables(&self) -> usize {
        self.tables.len()
    }

    pub fn dim(&self) -> usize {
        self.partition.dim()
    }

    /// Largest table size `N`.
    pub fn max_rows(&self) -> usize {
        self.tables.iter().map(Table::rows).max().unwrap_or(0)
    }

    /// Distinct values of `label` across the tables holding it, ascending.
    pub fn label_classes(&self, label: &str) -> Result<Vec<f64>> {
        let mut seen: Vec<f64> = Vec::new();
        let mut found = false;
        for t in &self.tables {
            if let Some(col) = t.column(label) {
                found = true;
                seen.extend_from_slice(col);
            }
        }
        if !found {
            return Err(Error::Spec(format!("label feature {label} not found")));
        }
        seen.sort_by(f64::total_cmp);
        seen.dedup_by(|a, b| a.to_bits() == b.to_bits());
        Ok(seen)
    }

    /// Sub-instance whose join is exactly the tuples with `label == class`.
    /// Returns `None` when some table has no row of that class.
    pub fn restrict_label(&self, label: &str, class: f64) -> Result<Option<JoinInstance>> {
        let mut tables = Vec::with_capacity(self.tables.len());
        for t in &self.tables {
            match t.column_index(label) {
                None => tables.push(t.clone()),
                Some(c) => {
                    let col = &t.columns()[c].values;
                    if !col.iter().any(|v| v.to_bits() == class.to_bits()) {
                        return Ok(None);
                    }
                    tables.push(t.filter_rows(|r| col[r].to_bits() == class.to_bits())?);
                }
            }
        }
        Ok(Some(JoinInstance {
            tables,
            partition: self.partition.clone(),
            tree: self.tree.clone(),
        }))
    }
}
