//! Acyclicity check by GYO ear removal and the resulting join tree.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::schema::Table;

/// Rooted tree over tables witnessing acyclicity. Every edge joins a table
/// with its parent on the features the two tables share.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JoinTree {
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    /// Features shared with the parent, in the child table's column order.
    shared: Vec<Vec<String>>,
    root: usize,
}

impl JoinTree {
    pub fn root(&self) -> usize {
        self.root
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn parent(&self, node: usize) -> Option<usize> {
        self.parent[node]
    }

    pub fn children(&self, node: usize) -> &[usize] {
        &self.children[node]
    }

    pub fn shared_with_parent(&self, node: usize) -> &[String] {
        &self.shared[node]
    }

    /// Children before parents; the root comes last.
    pub fn post_order(&self) -> Vec<usize> {
        let mut out = self.pre_order();
        out.reverse();
        out
    }

    /// Parents before children; the root comes first.
    pub fn pre_order(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.len());
        let mut stack = vec![self.root];
        while let Some(v) = stack.pop() {
            out.push(v);
            stack.extend(self.children[v].iter().rev());
        }
        out
    }

    /// For any feature, the tables containing it form a connected subtree,
    /// and every table is reachable from the root.
    pub fn satisfies_running_intersection(&self, tables: &[Table]) -> bool {
        if self.pre_order().len() != tables.len() {
            return false;
        }
        let features: BTreeSet<&str> = tables.iter().flat_map(|t| t.feature_names()).collect();
        features.iter().all(|f| {
            let holders: Vec<usize> = (0..tables.len())
                .filter(|&i| tables[i].column_index(f).is_some())
                .collect();
            // A node set in a tree is connected iff exactly one member has
            // its parent outside the set.
            let tops = holders
                .iter()
                .filter(|&&v| match self.parent[v] {
                    None => true,
                    Some(p) => tables[p].column_index(f).is_none(),
                })
                .count();
            tops == 1
        })
    }
}

/// GYO reduction. An alive hyperedge is an ear when the features it shares
/// with the other alive hyperedges all lie inside one of them; ears are
/// removed lowest index first, each attached to the lowest-index witness.
/// The last surviving table is the root.
pub fn check_acyclic(tables: &[Table]) -> Result<JoinTree> {
    let s = tables.len();
    if s == 0 {
        return Err(Error::contract("join needs at least one table"));
    }
    let edges: Vec<BTreeSet<&str>> = tables.iter().map(|t| t.feature_names().collect()).collect();
    let mut alive: Vec<usize> = (0..s).collect();
    let mut parent = vec![None; s];

    while alive.len() > 1 {
        let mut ear = None;
        'search: for &e in &alive {
            let shared: Vec<&str> = edges[e]
                .iter()
                .copied()
                .filter(|v| alive.iter().any(|&f| f != e && edges[f].contains(v)))
                .collect();
            for &f in &alive {
                if f != e && shared.iter().all(|v| edges[f].contains(v)) {
                    ear = Some((e, f));
                    break 'search;
                }
            }
        }
        match ear {
            Some((e, f)) => {
                parent[e] = Some(f);
                alive.retain(|&x| x != e);
            }
            None => {
                let residual = alive
                    .iter()
                    .map(|&e| {
                        edges[e]
                            .iter()
                            .filter(|v| alive.iter().any(|&f| f != e && edges[f].contains(*v)))
                            .map(|v| v.to_string())
                            .collect()
                    })
                    .collect();
                return Err(Error::Cyclic { residual });
            }
        }
    }

    let root = alive[0];
    let mut children = vec![Vec::new(); s];
    let mut shared = vec![Vec::new(); s];
    for v in 0..s {
        if let Some(p) = parent[v] {
            children[p].push(v);
            shared[v] = tables[v]
                .feature_names()
                .filter(|f| tables[p].column_index(f).is_some())
                .map(str::to_string)
                .collect();
        }
    }
    Ok(JoinTree {
        parent,
        children,
        shared,
        root,
    })
}
