//! Exactly uniform sampling from a (filtered) acyclic join.
//!
//! A count pass gives every row the number of join tuples of its subtree it
//! takes part in. A draw then picks the root row with probability
//! proportional to that weight and walks down, choosing each child row
//! among those matching the parent's key, again proportionally. The product
//! of the conditional probabilities telescopes to `1 / total`.

use rand::Rng;
use rayon::prelude::*;

use crate::count::JoinIndex;
use crate::cube::PseudoCube;
use crate::error::{Error, Result};
use crate::points::Points;
use crate::seed;

/// Draws per independent RNG stream. Chunks are the unit of parallelism, so
/// output does not depend on the number of worker threads.
pub const CHUNK: usize = 1024;

/// Count tables for one filter, reusable across any number of draws.
pub struct JoinSampler<'a> {
    index: &'a JoinIndex,
    /// `weight[v][r]`: tuples of the subtree at `v` that use row `r`.
    weight: Vec<Vec<u128>>,
    /// For non-root `v`, running sums of `weight[v]` in `child_groups` order.
    cumulative: Vec<Vec<u128>>,
    /// Running sums of the root weights.
    root_cumulative: Vec<u128>,
    total: u128,
}

impl<'a> JoinSampler<'a> {
    /// Sampler over the tuples whose row in table `t` is in `filters[t]`.
    pub fn new(index: &'a JoinIndex, filters: &[Option<&[u32]>]) -> Result<Self> {
        let s = index.tables();
        assert_eq!(filters.len(), s, "one filter slot per table");
        let mut weight: Vec<Vec<u128>> = vec![Vec::new(); s];
        let mut msg: Vec<Vec<u128>> = vec![Vec::new(); s];
        for &v in &index.post_order {
            let n = index.rows[v];
            let mut w = match filters[v] {
                None => vec![1u128; n],
                Some(rows) => {
                    let mut w = vec![0u128; n];
                    for &r in rows {
                        w[r as usize] = 1;
                    }
                    w
                }
            };
            for &c in &index.children[v] {
                let down = &index.down_key[c];
                for (r, slot) in w.iter_mut().enumerate() {
                    if *slot != 0 {
                        *slot = slot
                            .checked_mul(msg[c][down[r] as usize])
                            .ok_or(Error::Overflow)?;
                    }
                }
            }
            if v != index.root {
                let mut m = vec![0u128; index.key_count[v]];
                for (r, &x) in w.iter().enumerate() {
                    let slot = &mut m[index.up_key[v][r] as usize];
                    *slot = slot.checked_add(x).ok_or(Error::Overflow)?;
                }
                msg[v] = m;
            }
            weight[v] = w;
        }

        let mut cumulative = vec![Vec::new(); s];
        for v in 0..s {
            if v == index.root {
                continue;
            }
            let groups = &index.child_groups[v];
            let mut cum = Vec::with_capacity(index.rows[v]);
            for key in 0..index.key_count[v] as u32 {
                let mut acc = 0u128;
                for &r in groups.get(key) {
                    acc += weight[v][r as usize];
                    cum.push(acc);
                }
            }
            cumulative[v] = cum;
        }
        let mut root_cumulative = Vec::with_capacity(index.rows[index.root]);
        let mut total = 0u128;
        for &x in &weight[index.root] {
            total = total.checked_add(x).ok_or(Error::Overflow)?;
            root_cumulative.push(total);
        }
        Ok(Self {
            index,
            weight,
            cumulative,
            root_cumulative,
            total,
        })
    }

    /// Sampler restricted to the conjunction of `cubes`.
    pub fn for_cubes(index: &'a JoinIndex, cubes: &[PseudoCube]) -> Result<Self> {
        let filters = index.cube_filters(cubes)?;
        let refs: Vec<Option<&[u32]>> = filters.iter().map(|f| f.as_deref()).collect();
        Self::new(index, &refs)
    }

    /// Size of the filtered join.
    pub fn total(&self) -> u128 {
        self.total
    }

    /// Number of filtered tuples that use row `row` of `table` within the
    /// subtree rooted at `table`.
    pub fn row_weight(&self, table: usize, row: usize) -> u128 {
        self.weight[table][row]
    }

    /// One draw: the chosen row of every table.
    pub fn draw_rows<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [u32]) -> Result<()> {
        if self.total == 0 {
            return Err(Error::EmptyRegion);
        }
        let ix = self.index;
        let u = rng.random_range(0..self.total);
        out[ix.root] = self.root_cumulative.partition_point(|&c| c <= u) as u32;
        for &v in &ix.pre_order[1..] {
            let p = ix.parent[v].expect("non-root has a parent");
            let key = ix.down_key[v][out[p] as usize];
            let groups = &ix.child_groups[v];
            let start = groups.offsets_of(key).0;
            let rows = groups.get(key);
            let cum = &self.cumulative[v][start..start + rows.len()];
            let total = *cum.last().expect("matching child rows exist");
            let u = rng.random_range(0..total);
            out[v] = rows[cum.partition_point(|&c| c <= u)];
        }
        Ok(())
    }

    /// `m` independent uniform draws as row tuples (`m × s`, row-major).
    pub fn sample_rows(&self, m: usize, seed: u64) -> Result<Vec<u32>> {
        if self.total == 0 {
            return Err(Error::EmptyRegion);
        }
        let s = self.index.tables();
        let mut out = vec![0u32; m * s];
        out.par_chunks_mut(CHUNK * s.max(1))
            .enumerate()
            .try_for_each(|(chunk, buf)| {
                let mut rng = seed::stream_rng(seed, chunk as u64);
                buf.chunks_mut(s)
                    .try_for_each(|tuple| self.draw_rows(&mut rng, tuple))
            })?;
        Ok(out)
    }

    /// `m` independent uniform draws as points in the full feature space.
    pub fn sample(&self, m: usize, seed: u64) -> Result<Points> {
        let s = self.index.tables();
        let rows = self.sample_rows(m, seed)?;
        let mut pts = Points::with_capacity(self.index.partition.dim(), m);
        let mut buf = Vec::new();
        for tuple in rows.chunks(s) {
            self.index.write_point(tuple, &mut buf);
            pts.push(&buf);
        }
        Ok(pts)
    }

    /// Conditional probabilities `(numerator, denominator)` along the descent
    /// that produces the tuple `rows`, root first then pre-order. Their
    /// product is the probability of drawing exactly this tuple.
    pub fn descent_factors(&self, rows: &[u32]) -> Vec<(u128, u128)> {
        let ix = self.index;
        let mut out = vec![(self.weight[ix.root][rows[ix.root] as usize], self.total)];
        for &v in &ix.pre_order[1..] {
            let p = ix.parent[v].expect("non-root has a parent");
            let key = ix.down_key[v][rows[p] as usize];
            let den: u128 = ix.child_groups[v]
                .get(key)
                .iter()
                .map(|&r| self.weight[v][r as usize])
                .sum();
            out.push((self.weight[v][rows[v] as usize], den));
        }
        out
    }
}

/// `m` uniform samples from the tuples inside every cube of `cubes`.
pub fn uniform_sample(
    index: &JoinIndex,
    cubes: &[PseudoCube],
    m: usize,
    seed: u64,
) -> Result<Points> {
    if m == 0 {
        return Err(Error::contract("sample size must be at least 1"));
    }
    JoinSampler::for_cubes(index, cubes)?.sample(m, seed)
}
