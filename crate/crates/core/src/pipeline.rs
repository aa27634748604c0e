//! End-to-end construction: aggregation tree, then weights, optionally once
//! per class of a label feature.

use serde::Serialize;

use crate::aggtree::{build_tree, AggTree, BuildOptions, RadiusRule};
use crate::count::JoinIndex;
use crate::error::{Error, Result};
use crate::instance::JoinInstance;
use crate::points::Points;
use crate::seed;
use crate::weights::{assign_weights, Coreset, WeightParams, DEFAULT_M_CAP};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoresetConfig {
    pub k: usize,
    pub seed: u64,
    pub eps1: f64,
    pub beta: f64,
    pub lambda: f64,
    pub m_cap: u64,
    pub radius_rule: RadiusRule,
    /// Build one coreset per value of this feature and take the union.
    pub label: Option<String>,
}

impl CoresetConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            seed,
            eps1: 0.5,
            beta: 0.0,
            lambda: 0.05,
            m_cap: DEFAULT_M_CAP,
            radius_rule: RadiusRule::Doubling,
            label: None,
        }
    }
}

/// The part of the join a tree was built for.
pub struct Part {
    pub class: Option<f64>,
    pub instance: JoinInstance,
    pub index: JoinIndex,
}

impl Part {
    /// Splits by `label` when given; classes with an empty join are skipped.
    pub fn split(instance: &JoinInstance, label: Option<&str>) -> Result<Vec<Part>> {
        let Some(label) = label else {
            let index = JoinIndex::new(instance)?;
            return Ok(vec![Part {
                class: None,
                instance: instance.clone(),
                index,
            }]);
        };
        let mut parts = Vec::new();
        for class in instance.label_classes(label)? {
            let Some(sub) = instance.restrict_label(label, class)? else {
                continue;
            };
            let index = JoinIndex::new(&sub)?;
            if index.join_size() == 0 {
                continue;
            }
            parts.push(Part {
                class: Some(class),
                instance: sub,
                index,
            });
        }
        if parts.is_empty() {
            return Err(Error::Build("the join is empty".into()));
        }
        Ok(parts)
    }
}

fn part_seed(seed: u64, label: &str, i: usize, split: bool) -> u64 {
    if split {
        seed::derive(seed, label, i as u64)
    } else {
        seed
    }
}

/// One aggregation tree per part.
pub fn build_trees(parts: &[Part], config: &CoresetConfig) -> Result<Vec<AggTree>> {
    let split = parts.len() > 1 || parts[0].class.is_some();
    parts
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let options = BuildOptions {
                k: config.k,
                seed: part_seed(config.seed, "class-tree", i, split),
                radius_rule: config.radius_rule,
            };
            build_tree(&p.index, &options)
        })
        .collect()
}

/// Weights for every part's root cubes, and their union.
pub fn weigh_trees(parts: &[Part], trees: &[AggTree], config: &CoresetConfig) -> Result<(Vec<Coreset>, Coreset)> {
    let split = parts.len() > 1 || parts[0].class.is_some();
    let mut pieces = Vec::with_capacity(parts.len());
    for (i, (p, tree)) in parts.iter().zip(trees).enumerate() {
        let params = WeightParams::new(
            config.eps1,
            config.beta,
            config.lambda,
            tree.summary.cubes.len(),
            config.m_cap,
            seed::derive(part_seed(config.seed, "class-weights", i, split), "weights", 0),
        )?;
        pieces.push(assign_weights(&p.index, &tree.summary, &params)?);
    }
    let union = union(&pieces);
    Ok((pieces, union))
}

/// Concatenation of per-part coresets. Constants are those of the first
/// part; the radius is the largest.
pub fn union(pieces: &[Coreset]) -> Coreset {
    let first = &pieces[0];
    let mut points = Points::with_capacity(first.points.dim(), 0);
    let mut weights = Vec::new();
    let mut cubes = Vec::new();
    for p in pieces {
        for row in p.points.iter() {
            points.push(row);
        }
        weights.extend_from_slice(&p.weights);
        cubes.extend_from_slice(&p.cubes);
    }
    Coreset {
        features: first.features.clone(),
        points,
        weights,
        final_radius: pieces.iter().map(|p| p.final_radius).fold(0.0, f64::max),
        params: first.params,
        cubes,
    }
}

pub struct CoresetRun {
    pub parts: Vec<Part>,
    pub trees: Vec<AggTree>,
    pub pieces: Vec<Coreset>,
    pub coreset: Coreset,
}

pub fn run(instance: &JoinInstance, config: &CoresetConfig) -> Result<CoresetRun> {
    let parts = Part::split(instance, config.label.as_deref())?;
    let trees = build_trees(&parts, config)?;
    let (pieces, coreset) = weigh_trees(&parts, &trees, config)?;
    Ok(CoresetRun {
        parts,
        trees,
        pieces,
        coreset,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::Table;

    fn table1() -> JoinInstance {
        let t1 = Table::from_rows(
            "T1",
            &["d1", "d2"],
            &[[1.0, 1.0], [2.0, 1.0], [2.0, 2.0], [3.0, 3.0]],
        )
        .unwrap();
        let t2 = Table::from_rows(
            "T2",
            &["d2", "d3"],
            &[[1.0, 1.0], [1.0, 4.0], [3.0, 1.0], [3.0, 3.0]],
        )
        .unwrap();
        JoinInstance::new(vec![t1, t2]).unwrap()
    }

    #[test]
    fn table1_exact_coreset() {
        let run = run(&table1(), &CoresetConfig::new(6, 1)).unwrap();
        assert_eq!(run.coreset.weights, vec![1.0; 6]);
        assert_eq!(run.coreset.final_radius, 0.0);
    }

    #[test]
    fn per_class_union_covers_each_class() {
        // Label d3 splits the join into classes 1, 3 and 4.
        let cfg = CoresetConfig {
            label: Some("d3".into()),
            ..CoresetConfig::new(6, 1)
        };
        let run = run(&table1(), &cfg).unwrap();
        assert_eq!(run.parts.len(), 3);
        assert_eq!(run.coreset.total_weight(), 6.0);
    }
}
