use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::points::dist2;
use crate::schema::FeaturePartition;

/// Product of closed Euclidean balls, one per disjoint block `D̂_i` for
/// `i` in the index set, all with the same radius.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PseudoCube {
    /// Strictly ascending table indices.
    pub index_set: Vec<usize>,
    /// Concatenated block centers, in index-set order.
    pub center: Vec<f64>,
    pub radius: f64,
}

impl PseudoCube {
    pub fn new(index_set: Vec<usize>, center: Vec<f64>, radius: f64) -> Self {
        Self {
            index_set,
            center,
            radius,
        }
    }

    /// Cube over all tables centered at a full-dimensional point.
    pub fn full(partition: &FeaturePartition, center: &[f64], radius: f64) -> Self {
        Self::new(
            (0..partition.tables()).collect(),
            center.to_vec(),
            radius,
        )
    }

    pub fn validate(&self, partition: &FeaturePartition) -> Result<()> {
        if self.index_set.is_empty() {
            return Err(Error::contract("pseudo-cube index set is empty"));
        }
        if !self.index_set.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::contract(
                "pseudo-cube index set must be strictly ascending",
            ));
        }
        if let Some(&bad) = self.index_set.iter().find(|&&i| i >= partition.tables()) {
            return Err(Error::contract(format!(
                "pseudo-cube references table {bad}, join has {}",
                partition.tables()
            )));
        }
        let want: usize = self.index_set.iter().map(|&i| partition.block_dim(i)).sum();
        if want != self.center.len() {
            return Err(Error::contract(format!(
                "pseudo-cube center has dimension {}, index set needs {want}",
                self.center.len()
            )));
        }
        if !(self.radius >= 0.0) {
            return Err(Error::contract("pseudo-cube radius must be nonnegative"));
        }
        Ok(())
    }

    /// `(table, block center)` pairs.
    pub fn blocks<'a>(
        &'a self,
        partition: &'a FeaturePartition,
    ) -> impl Iterator<Item = (usize, &'a [f64])> + 'a {
        let mut offset = 0;
        self.index_set.iter().map(move |&t| {
            let w = partition.block_dim(t);
            let b = &self.center[offset..offset + w];
            offset += w;
            (t, b)
        })
    }

    /// Membership of a full-dimensional point.
    pub fn contains(&self, partition: &FeaturePartition, point: &[f64]) -> bool {
        let r2 = self.radius * self.radius;
        self.blocks(partition)
            .all(|(t, c)| dist2(partition.block(point, t), c) <= r2)
    }
}
