//! The aggregation tree: per-table k-center leaves merged pairwise through
//! pruned Cartesian grids until one node covers every table.
//!
//! Node centers are stored in canonical block order: the `D̂_i` blocks of
//! the node's tables concatenated by ascending table index. For the root
//! this is exactly the coordinate order of a full point.

use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::count::JoinIndex;
use crate::cube::PseudoCube;
use crate::error::{Error, Result};
use crate::kcenter::{gonzalez, greedy};
use crate::points::{dist2, sqrt_up, Points};
use crate::seed;

/// Growth factor applied at each merge level.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RadiusRule {
    /// `√(2^h)` at level `h`.
    #[default]
    Doubling,
    /// `√(max |I_ν|)` over the nodes created at that level.
    SubspaceCount,
}

impl RadiusRule {
    fn factor(self, level: usize, max_tables: usize) -> f64 {
        match self {
            RadiusRule::Doubling => 2f64.powi(level as i32).sqrt(),
            RadiusRule::SubspaceCount => (max_tables as f64).sqrt(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BuildOptions {
    pub k: usize,
    pub seed: u64,
    pub radius_rule: RadiusRule,
}

impl BuildOptions {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            seed,
            radius_rule: RadiusRule::Doubling,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AggNode {
    pub id: usize,
    /// Ascending table indices `I_ν`.
    pub index_set: Vec<usize>,
    /// `C_ν` in `H_ν`, canonical block order.
    pub centers: Points,
    /// Level at which the node was created; leaves are level 0.
    pub level: usize,
    /// Coverage bound `L_level` attached at creation.
    pub bound: f64,
    pub children: Option<[usize; 2]>,
    /// `d(source, C_ν)²`: leaf data projections or surviving grid points.
    pub cover_radius2: f64,
    /// Candidate grid size and number of nonempty grid points (merges only).
    pub grid: usize,
    pub survivors: usize,
}

impl AggNode {
    /// Positions of `H_ν` coordinates inside a full point.
    pub fn columns(&self, index: &JoinIndex) -> Vec<usize> {
        let p = index.partition();
        self.index_set
            .iter()
            .flat_map(|&t| {
                let o = p.block_offsets[t];
                o..o + p.block_dim(t)
            })
            .collect()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct LevelRadii {
    /// `l[0]` is the largest leaf covering radius; `l[h]` for `h ≥ 1` the
    /// largest grid covering radius among merges at level `h`.
    pub l: Vec<f64>,
    /// `L[h]`, the coverage bound at level `h`.
    #[serde(rename = "L")]
    pub big_l: Vec<f64>,
    /// Largest `|I_ν|` among nodes created at each level.
    pub max_tables: Vec<usize>,
    /// `Δ / k^{1/ρ}` when a doubling-dimension guess was supplied.
    pub r0_hint: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RootSummary {
    /// Root centers in full feature order.
    pub centers: Points,
    pub final_radius: f64,
    /// One full-dimensional cube per kept root center, radius `final_radius`.
    pub cubes: Vec<PseudoCube>,
    /// `|P ∩ cube|` for each kept cube.
    pub counts: Vec<u128>,
    /// Root centers dropped because their cube holds no join tuple.
    pub dropped: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Timings {
    pub leaves_secs: f64,
    pub merges_secs: f64,
    pub root_secs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AggTree {
    pub options: BuildOptions,
    pub nodes: Vec<AggNode>,
    pub root: usize,
    pub radii: LevelRadii,
    pub summary: RootSummary,
    #[serde(skip)]
    pub timings: Timings,
}

impl AggTree {
    pub fn root_node(&self) -> &AggNode {
        &self.nodes[self.root]
    }
}

/// One leaf per table: k-center over the table's distinct `D̂_i` rows.
pub fn build_leaves(index: &JoinIndex, k: usize, seed: u64) -> Result<(Vec<AggNode>, f64)> {
    if k == 0 {
        return Err(Error::contract("k must be at least 1"));
    }
    let mut leaves = Vec::with_capacity(index.tables());
    for t in 0..index.tables() {
        let block = index.block(t);
        if block.is_empty() {
            return Err(Error::contract(format!("table {t} is empty")));
        }
        let cs = gonzalez(block, k, seed::derive(seed, "leaf", t as u64));
        leaves.push(AggNode {
            id: t,
            index_set: vec![t],
            centers: cs.centers,
            level: 0,
            bound: 0.0,
            children: None,
            cover_radius2: cs.cover_radius2,
            grid: 0,
            survivors: 0,
        });
    }
    let l0 = leaves
        .iter()
        .map(|n| sqrt_up(n.cover_radius2))
        .fold(0.0, f64::max);
    for leaf in &mut leaves {
        leaf.bound = l0;
    }
    Ok((leaves, l0))
}

/// For each center of `node`, for each of its tables, the rows whose block
/// lies within `radius` of the center's block.
fn ball_lists(index: &JoinIndex, node: &AggNode, radius: f64) -> Vec<Vec<Vec<u32>>> {
    let p = index.partition();
    (0..node.centers.len())
        .map(|c| {
            let center = node.centers.row(c);
            let mut off = 0;
            node.index_set
                .iter()
                .map(|&t| {
                    let w = p.block_dim(t);
                    let rows = index.ball_rows(t, &center[off..off + w], radius);
                    off += w;
                    rows
                })
                .collect()
        })
        .collect()
}

fn pairwise_dist2(points: &Points) -> Vec<f64> {
    let n = points.len();
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let d = dist2(points.row(i), points.row(j));
            out[i * n + j] = d;
            out[j * n + i] = d;
        }
    }
    out
}

/// Concatenates a left and a right center into canonical block order.
fn interleave(index: &JoinIndex, left: &AggNode, a: &[f64], right: &AggNode, b: &[f64]) -> Vec<f64> {
    let p = index.partition();
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j, mut oa, mut ob) = (0, 0, 0, 0);
    while i < left.index_set.len() || j < right.index_set.len() {
        let take_left = j == right.index_set.len()
            || (i < left.index_set.len() && left.index_set[i] < right.index_set[j]);
        if take_left {
            let w = p.block_dim(left.index_set[i]);
            out.extend_from_slice(&a[oa..oa + w]);
            oa += w;
            i += 1;
        } else {
            let w = p.block_dim(right.index_set[j]);
            out.extend_from_slice(&b[ob..ob + w]);
            ob += w;
            j += 1;
        }
    }
    out
}

/// Merges two nodes: keeps grid points whose combined pseudo-cube of radius
/// `radius` is nonempty and runs k-center over them. Returns the new node
/// (bound not yet set) and its grid covering radius.
#[allow(clippy::too_many_arguments)]
pub fn merge_nodes(
    index: &JoinIndex,
    left: &AggNode,
    right: &AggNode,
    k: usize,
    radius: f64,
    id: usize,
    level: usize,
    seed: u64,
) -> Result<(AggNode, f64)> {
    if left.index_set.iter().any(|t| right.index_set.contains(t)) {
        return Err(Error::contract("merged nodes must have disjoint index sets"));
    }
    let s = index.tables();
    let (kl, kr) = (left.centers.len(), right.centers.len());
    let left_balls = ball_lists(index, left, radius);
    let right_balls = ball_lists(index, right, radius);

    let alive: Vec<bool> = (0..kl * kr)
        .into_par_iter()
        .map_init(
            || index.counter(),
            |counter, g| -> Result<bool> {
                let (a, b) = (g / kr, g % kr);
                let mut filters: Vec<Option<&[u32]>> = vec![None; s];
                for (slot, &t) in left.index_set.iter().enumerate() {
                    let rows = left_balls[a][slot].as_slice();
                    if rows.is_empty() {
                        return Ok(false);
                    }
                    filters[t] = Some(rows);
                }
                for (slot, &t) in right.index_set.iter().enumerate() {
                    let rows = right_balls[b][slot].as_slice();
                    if rows.is_empty() {
                        return Ok(false);
                    }
                    filters[t] = Some(rows);
                }
                Ok(counter.count(&filters)? > 0)
            },
        )
        .collect::<Result<Vec<bool>>>()?;
    let survivors: Vec<(usize, usize)> = alive
        .iter()
        .enumerate()
        .filter(|(_, &ok)| ok)
        .map(|(g, _)| (g / kr, g % kr))
        .collect();
    if survivors.is_empty() {
        return Err(Error::Build(format!(
            "every grid point of merge {id} is empty at radius {radius}"
        )));
    }

    let dl = pairwise_dist2(&left.centers);
    let dr = pairwise_dist2(&right.centers);
    let first = seed::rng(seed::derive(seed, "merge", id as u64)).random_range(0..survivors.len());
    let (picked, worst) = greedy(survivors.len(), k, first, |x, y| {
        let (a, b) = survivors[x];
        let (a2, b2) = survivors[y];
        dl[a * kl + a2] + dr[b * kr + b2]
    });

    let mut index_set: Vec<usize> = left.index_set.iter().chain(&right.index_set).copied().collect();
    index_set.sort_unstable();
    let dim = left.centers.dim() + right.centers.dim();
    let mut centers = Points::with_capacity(dim, picked.len());
    for &g in &picked {
        let (a, b) = survivors[g];
        centers.push(&interleave(index, left, left.centers.row(a), right, right.centers.row(b)));
    }
    let node = AggNode {
        id,
        index_set,
        centers,
        level,
        bound: 0.0,
        children: Some([left.id, right.id]),
        cover_radius2: worst,
        grid: kl * kr,
        survivors: survivors.len(),
    };
    Ok((node, sqrt_up(worst)))
}

/// Runs the full construction: leaves, merge levels, root cubes.
pub fn build_tree(index: &JoinIndex, options: &BuildOptions) -> Result<AggTree> {
    let k = options.k;
    if index.join_size() == 0 {
        return Err(Error::Build("the join is empty".into()));
    }
    let t0 = Instant::now();
    let (leaves, l0) = build_leaves(index, k, options.seed)?;
    let leaves_secs = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let mut nodes = leaves;
    let mut radii = LevelRadii {
        l: vec![l0],
        big_l: vec![l0],
        max_tables: vec![1],
        r0_hint: None,
    };
    let mut current: Vec<usize> = (0..nodes.len()).collect();
    let mut level = 0;
    while current.len() >= 2 {
        level += 1;
        let mut next = Vec::with_capacity(current.len() / 2 + 1);
        if current.len() % 2 == 1 {
            next.push(*current.last().expect("odd level is nonempty"));
        }
        let mut l_h: f64 = 0.0;
        let mut widest = 0;
        let mut created = Vec::new();
        for pair in current.chunks_exact(2) {
            let (left, right) = (&nodes[pair[0]], &nodes[pair[1]]);
            let radius = left.bound.max(right.bound);
            let id = nodes.len() + created.len();
            let (node, l) = merge_nodes(index, left, right, k, radius, id, level, options.seed)?;
            l_h = l_h.max(l);
            widest = widest.max(node.index_set.len());
            created.push(node);
        }
        let prev = radii.big_l[level - 1];
        let big_l = options.radius_rule.factor(level, widest) * (l_h + 2f64.sqrt() * prev);
        for mut node in created {
            node.bound = big_l;
            next.push(node.id);
            nodes.push(node);
        }
        radii.l.push(l_h);
        radii.big_l.push(big_l);
        radii.max_tables.push(widest);
        current = next;
    }
    let merges_secs = t1.elapsed().as_secs_f64();

    let t2 = Instant::now();
    let root = current[0];
    let final_radius = *radii.big_l.last().expect("at least the leaf level");
    let root_centers = &nodes[root].centers;
    let mut cubes = Vec::with_capacity(root_centers.len());
    let mut counts = Vec::with_capacity(root_centers.len());
    let mut kept = Points::with_capacity(root_centers.dim(), root_centers.len());
    let mut dropped = 0;
    let mut counter = index.counter();
    for c in root_centers.iter() {
        let cube = PseudoCube::full(index.partition(), c, final_radius);
        let n = counter.count_cubes(std::slice::from_ref(&cube))?;
        if n == 0 {
            dropped += 1;
            continue;
        }
        kept.push(c);
        cubes.push(cube);
        counts.push(n);
    }
    let root_secs = t2.elapsed().as_secs_f64();

    Ok(AggTree {
        options: *options,
        nodes,
        root,
        radii,
        summary: RootSummary {
            centers: kept,
            final_radius,
            cubes,
            counts,
            dropped,
        },
        timings: Timings {
            leaves_secs,
            merges_secs,
            root_secs,
        },
    })
}

/// `Δ / k^{1/ρ}` for a guessed doubling dimension `ρ`.
pub fn r0_hint(diameter: f64, k: usize, rho: f64) -> f64 {
    diameter / (k as f64).powf(1.0 / rho)
}

/// Outcome of a doubling search over `k`.
#[derive(Clone, Debug, Serialize)]
pub struct KSearch {
    /// `(k, estimated d(P, C))` for every attempt, in order.
    pub attempts: Vec<(usize, f64)>,
    pub chosen_k: usize,
}

/// Tries `k0, 2k0, 4k0, …` up to `k_max`, stopping at the first `k` whose
/// root centers are within `target` of every one of `samples` uniformly
/// drawn join tuples.
pub fn doubling_search(
    index: &JoinIndex,
    k0: usize,
    k_max: usize,
    target: f64,
    samples: usize,
    options: &BuildOptions,
) -> Result<(AggTree, KSearch)> {
    if k0 == 0 || k_max < k0 {
        return Err(Error::contract("doubling search needs 1 ≤ k0 ≤ k_max"));
    }
    let probe = crate::sample::uniform_sample(
        index,
        &[],
        samples.max(1),
        seed::derive(options.seed, "k-search", 0),
    )?;
    let mut attempts = Vec::new();
    let mut k = k0;
    loop {
        let tree = build_tree(index, &BuildOptions { k, ..*options })?;
        let centers = &tree.summary.centers;
        let worst = probe
            .iter()
            .map(|p| centers.iter().map(|c| dist2(p, c)).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
            .sqrt();
        attempts.push((k, worst));
        if worst <= target || k >= k_max {
            return Ok((tree, KSearch { attempts, chosen_k: k }));
        }
        k = (2 * k).min(k_max);
    }
}
