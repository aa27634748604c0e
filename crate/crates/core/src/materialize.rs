//! Full join materialization. Only used as a ground-truth oracle.

use crate::count::JoinIndex;
use crate::error::{Error, Result};
use crate::points::{lex_cmp, Points};
use crate::sample::JoinSampler;

pub const DEFAULT_CAP: u128 = 10_000_000;

/// The `n × d` design matrix, rows sorted lexicographically.
#[derive(Clone, Debug, PartialEq)]
pub struct DesignMatrix {
    pub points: Points,
    pub features: Vec<String>,
}

impl DesignMatrix {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f == name)
    }
}

/// Every join tuple as its per-table row indices (`n × s`, row-major, in
/// enumeration order).
pub fn join_tuples(index: &JoinIndex, cap: u128) -> Result<Vec<u32>> {
    let n = index.join_size();
    if n > cap {
        return Err(Error::CapExceeded { estimated: n, cap });
    }
    let sampler = JoinSampler::new(index, &vec![None; index.tables()])?;
    let s = index.tables();
    let mut out = Vec::with_capacity(n as usize * s);
    let mut current = vec![0u32; s];
    enumerate(index, &sampler, 0, &mut current, &mut out);
    debug_assert_eq!(out.len(), n as usize * s);
    Ok(out)
}

fn enumerate(
    ix: &JoinIndex,
    sampler: &JoinSampler<'_>,
    depth: usize,
    current: &mut [u32],
    out: &mut Vec<u32>,
) {
    if depth == ix.pre_order.len() {
        out.extend_from_slice(current);
        return;
    }
    let v = ix.pre_order[depth];
    let candidates: Vec<u32> = match ix.parent[v] {
        None => (0..ix.rows[v] as u32).collect(),
        Some(p) => ix.child_groups[v]
            .get(ix.down_key[v][current[p] as usize])
            .to_vec(),
    };
    for r in candidates {
        if sampler.row_weight(v, r as usize) == 0 {
            continue;
        }
        current[v] = r;
        enumerate(ix, sampler, depth + 1, current, out);
    }
}

/// The design matrix of the join, refusing when it has more than `cap` rows.
pub fn materialize(index: &JoinIndex, cap: u128) -> Result<DesignMatrix> {
    let tuples = join_tuples(index, cap)?;
    let s = index.tables();
    let mut rows: Vec<Vec<f64>> = tuples.chunks(s.max(1)).map(|t| index.point(t)).collect();
    rows.sort_by(|a, b| lex_cmp(a, b));
    Ok(DesignMatrix {
        points: Points::from_rows(index.partition.dim(), &rows),
        features: index.partition.full.clone(),
    })
}
