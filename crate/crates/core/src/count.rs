//! Counting join tuples inside pseudo-cubes without materializing the join.
//!
//! A pseudo-cube constrains each table only through its own `D̂_i` block, so
//! the predicate becomes a per-table row filter. The count is then a
//! bottom-up pass over the join tree: every row carries the product of the
//! partial counts its children report for its join key, and each node sends
//! its parent the per-key sums of those products.

use std::collections::HashMap;

use crate::cube::PseudoCube;
use crate::error::{Error, Result};
use crate::instance::JoinInstance;
use crate::points::{dist2, Points};
use crate::schema::FeaturePartition;

/// Rows of one side of a join-tree edge, bucketed by key id.
#[derive(Clone, Debug, Default)]
pub(crate) struct Groups {
    offsets: Vec<u32>,
    rows: Vec<u32>,
}

impl Groups {
    fn build(keys: &[u32], key_count: usize) -> Self {
        let mut offsets = vec![0u32; key_count + 1];
        for &k in keys {
            offsets[k as usize + 1] += 1;
        }
        for i in 0..key_count {
            offsets[i + 1] += offsets[i];
        }
        let mut fill = offsets.clone();
        let mut rows = vec![0u32; keys.len()];
        for (r, &k) in keys.iter().enumerate() {
            rows[fill[k as usize] as usize] = r as u32;
            fill[k as usize] += 1;
        }
        Self { offsets, rows }
    }

    /// `[start, end)` of the bucket for `key` in the flattened row list.
    #[inline]
    pub(crate) fn offsets_of(&self, key: u32) -> (usize, usize) {
        let k = key as usize;
        (self.offsets[k] as usize, self.offsets[k + 1] as usize)
    }

    #[inline]
    pub(crate) fn get(&self, key: u32) -> &[u32] {
        let k = key as usize;
        &self.rows[self.offsets[k] as usize..self.offsets[k + 1] as usize]
    }
}

/// Precomputed join-key encoding of an acyclic join: the shared context for
/// counting, sampling and materialization.
#[derive(Clone, Debug)]
pub struct JoinIndex {
    pub(crate) partition: FeaturePartition,
    pub(crate) root: usize,
    pub(crate) parent: Vec<Option<usize>>,
    pub(crate) children: Vec<Vec<usize>>,
    pub(crate) post_order: Vec<usize>,
    pub(crate) pre_order: Vec<usize>,
    pub(crate) rows: Vec<usize>,
    /// Per table, its rows projected onto `D̂_t`.
    pub(crate) blocks: Vec<Points>,
    /// `up_key[t][r]`: key id of row `r` of `t` on the edge to its parent.
    pub(crate) up_key: Vec<Vec<u32>>,
    /// `down_key[t][r]`: key id of row `r` of `parent(t)` on the same edge.
    pub(crate) down_key: Vec<Vec<u32>>,
    pub(crate) key_count: Vec<usize>,
    /// Rows of `parent(t)` bucketed by the key of edge `t`.
    pub(crate) parent_groups: Vec<Groups>,
    /// Rows of `t` bucketed by the key of its parent edge.
    pub(crate) child_groups: Vec<Groups>,
    /// Message each subtree sends upward when nothing is filtered.
    pub(crate) const_msg: Vec<Vec<u128>>,
    join_size: u128,
}

impl JoinIndex {
    pub fn new(instance: &JoinInstance) -> Result<Self> {
        let tables = &instance.tables;
        let tree = &instance.tree;
        let partition = instance.partition.clone();
        let s = tables.len();
        let parent: Vec<Option<usize>> = (0..s).map(|v| tree.parent(v)).collect();
        let children: Vec<Vec<usize>> = (0..s).map(|v| tree.children(v).to_vec()).collect();
        let rows: Vec<usize> = tables.iter().map(|t| t.rows()).collect();

        let blocks = tables
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let cols = &partition.block_columns[i];
                let mut p = Points::with_capacity(cols.len(), t.rows());
                let mut buf = vec![0.0; cols.len()];
                for r in 0..t.rows() {
                    for (slot, &c) in buf.iter_mut().zip(cols) {
                        *slot = t.value(r, c);
                    }
                    p.push(&buf);
                }
                p
            })
            .collect();

        let mut up_key = vec![Vec::new(); s];
        let mut down_key = vec![Vec::new(); s];
        let mut key_count = vec![0; s];
        let mut parent_groups = vec![Groups::default(); s];
        let mut child_groups = vec![Groups::default(); s];
        for v in 0..s {
            let Some(p) = parent[v] else { continue };
            let shared = tree.shared_with_parent(v);
            let cols_v: Vec<usize> = shared
                .iter()
                .map(|f| tables[v].column_index(f).expect("shared feature in child"))
                .collect();
            let cols_p: Vec<usize> = shared
                .iter()
                .map(|f| tables[p].column_index(f).expect("shared feature in parent"))
                .collect();
            let mut ids: HashMap<Vec<u64>, u32> = HashMap::new();
            let mut intern = |t: &crate::schema::Table, cols: &[usize], r: usize| -> u32 {
                let key: Vec<u64> = cols.iter().map(|&c| t.value(r, c).to_bits()).collect();
                let next = ids.len() as u32;
                *ids.entry(key).or_insert(next)
            };
            up_key[v] = (0..rows[v]).map(|r| intern(&tables[v], &cols_v, r)).collect();
            down_key[v] = (0..rows[p]).map(|r| intern(&tables[p], &cols_p, r)).collect();
            key_count[v] = ids.len();
            parent_groups[v] = Groups::build(&down_key[v], key_count[v]);
            child_groups[v] = Groups::build(&up_key[v], key_count[v]);
        }

        let post_order = tree.post_order();
        let pre_order = tree.pre_order();
        let mut index = Self {
            partition,
            root: tree.root(),
            parent,
            children,
            post_order,
            pre_order,
            rows,
            blocks,
            up_key,
            down_key,
            key_count,
            parent_groups,
            child_groups,
            const_msg: vec![Vec::new(); s],
            join_size: 0,
        };
        index.compute_const_messages()?;
        Ok(index)
    }

    fn compute_const_messages(&mut self) -> Result<()> {
        for &v in &self.post_order.clone() {
            let mut msg = vec![0u128; if v == self.root { 0 } else { self.key_count[v] }];
            let mut total = 0u128;
            for r in 0..self.rows[v] {
                let mut w = 1u128;
                for &c in &self.children[v] {
                    let m = self.const_msg[c][self.down_key[c][r] as usize];
                    w = w.checked_mul(m).ok_or(Error::Overflow)?;
                    if w == 0 {
                        break;
                    }
                }
                if v == self.root {
                    total = total.checked_add(w).ok_or(Error::Overflow)?;
                } else {
                    let slot = &mut msg[self.up_key[v][r] as usize];
                    *slot = slot.checked_add(w).ok_or(Error::Overflow)?;
                }
            }
            if v == self.root {
                self.join_size = total;
            } else {
                self.const_msg[v] = msg;
            }
        }
        Ok(())
    }

    pub fn partition(&self) -> &FeaturePartition {
        &self.partition
    }

    pub fn tables(&self) -> usize {
        self.rows.len()
    }

    pub fn table_rows(&self, table: usize) -> usize {
        self.rows[table]
    }

    /// Rows of `table` projected onto its own block `D̂_table`.
    pub fn block(&self, table: usize) -> &Points {
        &self.blocks[table]
    }

    /// Exact size of the unfiltered join.
    pub fn join_size(&self) -> u128 {
        self.join_size
    }

    /// Full point of the join tuple formed by one row per table.
    pub fn point(&self, rows: &[u32]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.partition.dim());
        self.write_point(rows, &mut out);
        out
    }

    pub(crate) fn write_point(&self, rows: &[u32], out: &mut Vec<f64>) {
        out.clear();
        for (t, &r) in rows.iter().enumerate() {
            out.extend_from_slice(self.blocks[t].row(r as usize));
        }
    }

    /// Rows of `table` whose block lies in the closed ball `B(center, radius)`.
    pub fn ball_rows(&self, table: usize, center: &[f64], radius: f64) -> Vec<u32> {
        let block = &self.blocks[table];
        assert_eq!(center.len(), block.dim(), "ball center dimension mismatch");
        let r2 = radius * radius;
        (0..block.len())
            .filter(|&r| dist2(block.row(r), center) <= r2)
            .map(|r| r as u32)
            .collect()
    }

    /// Per-table row filters realizing the conjunction of `cubes`.
    pub fn cube_filters(&self, cubes: &[PseudoCube]) -> Result<Vec<Option<Vec<u32>>>> {
        let mut filters: Vec<Option<Vec<u32>>> = vec![None; self.tables()];
        for cube in cubes {
            cube.validate(&self.partition)?;
            for (t, c) in cube.blocks(&self.partition) {
                if filters[t].is_some() {
                    return Err(Error::contract(format!(
                        "table {t} appears in more than one pseudo-cube"
                    )));
                }
                filters[t] = Some(self.ball_rows(t, c, cube.radius));
            }
        }
        Ok(filters)
    }

    pub fn counter(&self) -> Counter<'_> {
        Counter::new(self)
    }
}

/// Reusable scratch space for repeated counts over one index.
pub struct Counter<'a> {
    index: &'a JoinIndex,
    msg: Vec<Vec<u128>>,
    stamp: Vec<Vec<u32>>,
    touched: Vec<Vec<u32>>,
    active: Vec<bool>,
    generation: u32,
}

impl<'a> Counter<'a> {
    fn new(index: &'a JoinIndex) -> Self {
        let s = index.tables();
        Self {
            index,
            msg: (0..s).map(|v| vec![0; index.key_count[v]]).collect(),
            stamp: (0..s).map(|v| vec![0; index.key_count[v]]).collect(),
            touched: vec![Vec::new(); s],
            active: vec![false; s],
            generation: 0,
        }
    }

    fn next_generation(&mut self) {
        if self.generation == u32::MAX {
            for st in &mut self.stamp {
                st.fill(0);
            }
            self.generation = 0;
        }
        self.generation += 1;
    }

    #[inline]
    fn message(&self, child: usize, key: u32) -> u128 {
        if self.active[child] {
            if self.stamp[child][key as usize] == self.generation {
                self.msg[child][key as usize]
            } else {
                0
            }
        } else {
            self.index.const_msg[child][key as usize]
        }
    }

    /// Number of join tuples whose row in table `t` belongs to `filters[t]`
    /// (every row when `None`). Filter lists must not repeat rows.
    pub fn count(&mut self, filters: &[Option<&[u32]>]) -> Result<u128> {
        let ix = self.index;
        assert_eq!(filters.len(), ix.tables(), "one filter slot per table");
        self.next_generation();
        let gen = self.generation;
        let mut total = 0u128;
        let mut candidates: Vec<u32> = Vec::new();

        for &v in &ix.post_order {
            let active = filters[v].is_some() || ix.children[v].iter().any(|&c| self.active[c]);
            self.active[v] = active;
            if !active {
                if v == ix.root {
                    return Ok(ix.join_size);
                }
                continue;
            }
            self.touched[v].clear();

            let rows: &[u32] = match filters[v] {
                Some(rows) => rows,
                None => {
                    // Drive from the keys an active child actually reported.
                    let c = *ix.children[v]
                        .iter()
                        .find(|&&c| self.active[c])
                        .expect("active node without filter has an active child");
                    candidates.clear();
                    for &key in &self.touched[c] {
                        if self.msg[c][key as usize] != 0 {
                            candidates.extend_from_slice(ix.parent_groups[c].get(key));
                        }
                    }
                    &candidates
                }
            };

            for &r in rows {
                let mut w = 1u128;
                for &c in &ix.children[v] {
                    let m = self.message(c, ix.down_key[c][r as usize]);
                    if m == 0 {
                        w = 0;
                        break;
                    }
                    w = w.checked_mul(m).ok_or(Error::Overflow)?;
                }
                if w == 0 {
                    continue;
                }
                if v == ix.root {
                    total = total.checked_add(w).ok_or(Error::Overflow)?;
                } else {
                    let k = ix.up_key[v][r as usize];
                    let ku = k as usize;
                    if self.stamp[v][ku] != gen {
                        self.stamp[v][ku] = gen;
                        self.msg[v][ku] = 0;
                        self.touched[v].push(k);
                    }
                    self.msg[v][ku] = self.msg[v][ku].checked_add(w).ok_or(Error::Overflow)?;
                }
            }
        }
        Ok(total)
    }

    /// Count for pseudo-cubes with pairwise-disjoint index sets.
    pub fn count_cubes(&mut self, cubes: &[PseudoCube]) -> Result<u128> {
        let filters = self.index.cube_filters(cubes)?;
        let refs: Vec<Option<&[u32]>> = filters.iter().map(|f| f.as_deref()).collect();
        self.count(&refs)
    }
}

/// Number of join tuples `p` with `Proj_{D̂_i}(p)` inside every ball of every cube.
pub fn pc_count(index: &JoinIndex, cubes: &[PseudoCube]) -> Result<u128> {
    index.counter().count_cubes(cubes)
}

/// `|T_1 ⋈ … ⋈ T_s|`.
pub fn join_size(index: &JoinIndex) -> u128 {
    index.join_size()
}
