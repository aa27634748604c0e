//! Brute-force oracles and random instance generators shared by the
//! integration tests. Nothing here goes through the join index.

#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relcoreset::{JoinInstance, Points, PseudoCube, Table};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random acyclic instance: table `i > 0` shares up to two features with
/// an earlier table and adds fresh ones. Values are small integers so
/// keys collide often.
pub fn random_instance(rng: &mut impl Rng, max_tables: usize, max_rows: usize, max_dim: usize) -> JoinInstance {
    let s = rng.random_range(1..=max_tables);
    random_instance_with(rng, s, max_rows, max_dim)
}

/// Like [`random_instance`] with exactly `s` tables.
pub fn random_instance_with(rng: &mut impl Rng, s: usize, max_rows: usize, max_dim: usize) -> JoinInstance {
    loop {
        let mut schemas: Vec<Vec<String>> = Vec::new();
        let mut next = 0;
        let mut total = 0;
        for i in 0..s {
            let mut cols: Vec<String> = Vec::new();
            if i > 0 {
                let p = rng.random_range(0..i);
                let parent = schemas[p].clone();
                let shared = rng.random_range(0..=parent.len().min(2));
                let mut pool = parent;
                for _ in 0..shared {
                    let j = rng.random_range(0..pool.len());
                    cols.push(pool.swap_remove(j));
                }
            }
            let fresh = rng.random_range(usize::from(cols.is_empty())..=2);
            for _ in 0..fresh {
                cols.push(format!("f{next}"));
                next += 1;
                total += 1;
            }
            schemas.push(cols);
        }
        if total == 0 || total > max_dim {
            continue;
        }
        let domain = rng.random_range(2..=5);
        let tables: Vec<Table> = schemas
            .iter()
            .enumerate()
            .map(|(i, cols)| {
                let n = rng.random_range(1..=max_rows);
                let rows: Vec<Vec<f64>> = (0..n)
                    .map(|_| cols.iter().map(|_| rng.random_range(0..domain) as f64).collect())
                    .collect();
                let names: Vec<&str> = cols.iter().map(String::as_str).collect();
                Table::from_rows(format!("T{}", i + 1), &names, &rows).unwrap()
            })
            .collect();
        return JoinInstance::new(tables).unwrap();
    }
}

/// Nested-loop join in full feature order, one entry per tuple combination.
pub fn brute_join(instance: &JoinInstance) -> Vec<Vec<f64>> {
    let full = &instance.partition.full;
    let mut out = Vec::new();
    let mut assigned: Vec<Option<f64>> = vec![None; full.len()];
    fn go(
        t: usize,
        instance: &JoinInstance,
        assigned: &mut Vec<Option<f64>>,
        out: &mut Vec<Vec<f64>>,
    ) {
        if t == instance.tables.len() {
            out.push(assigned.iter().map(|v| v.unwrap()).collect());
            return;
        }
        let table = &instance.tables[t];
        let pos: Vec<usize> = table
            .feature_names()
            .map(|f| instance.partition.full.iter().position(|g| g == f).unwrap())
            .collect();
        for r in 0..table.rows() {
            let row = table.row(r);
            let ok = pos
                .iter()
                .zip(&row)
                .all(|(&p, &v)| assigned[p].is_none_or(|a| a.to_bits() == v.to_bits()));
            if !ok {
                continue;
            }
            let newly: Vec<usize> = pos.iter().copied().filter(|&p| assigned[p].is_none()).collect();
            for (&p, &v) in pos.iter().zip(&row) {
                assigned[p] = Some(v);
            }
            go(t + 1, instance, assigned, out);
            for p in newly {
                assigned[p] = None;
            }
        }
    }
    go(0, instance, &mut assigned, &mut out);
    out
}

/// Membership computed from feature names, independent of the block layout.
pub fn in_cube(instance: &JoinInstance, cube: &PseudoCube, point: &[f64]) -> bool {
    let p = &instance.partition;
    let mut offset = 0;
    for &t in &cube.index_set {
        let mut d2 = 0.0;
        for name in &p.disjoint[t] {
            let full = p.full.iter().position(|g| g == name).unwrap();
            let diff = point[full] - cube.center[offset];
            d2 += diff * diff;
            offset += 1;
        }
        if d2 > cube.radius * cube.radius {
            return false;
        }
    }
    true
}

pub fn brute_count(instance: &JoinInstance, rows: &[Vec<f64>], cubes: &[PseudoCube]) -> u128 {
    rows.iter()
        .filter(|p| cubes.iter().all(|c| in_cube(instance, c, p)))
        .count() as u128
}

/// Random cube whose center is drawn near the data range.
pub fn random_cube(rng: &mut impl Rng, instance: &JoinInstance, index_set: Vec<usize>) -> PseudoCube {
    let dim: usize = index_set.iter().map(|&t| instance.partition.block_dim(t)).sum();
    let center = (0..dim).map(|_| rng.random_range(-0.5..4.5)).collect();
    let radius = if rng.random_bool(0.2) { 0.0 } else { rng.random_range(0.0..3.0) };
    PseudoCube::new(index_set, center, radius)
}

/// Random nonempty ascending subset of `0..s`.
pub fn random_subset(rng: &mut impl Rng, s: usize) -> Vec<usize> {
    loop {
        let v: Vec<usize> = (0..s).filter(|_| rng.random_bool(0.5)).collect();
        if !v.is_empty() {
            return v;
        }
    }
}

pub fn d2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Optimal k-center radius by trying every center subset.
pub fn exhaustive_kcenter(points: &Points, k: usize) -> f64 {
    let n = points.len();
    let k = k.min(n);
    let mut best = f64::INFINITY;
    let mut chosen = Vec::with_capacity(k);
    fn rec(
        start: usize,
        k: usize,
        points: &Points,
        chosen: &mut Vec<usize>,
        best: &mut f64,
    ) {
        if chosen.len() == k {
            let r = points
                .iter()
                .map(|p| chosen.iter().map(|&c| d2(p, points.row(c))).fold(f64::INFINITY, f64::min))
                .fold(0.0, f64::max);
            *best = best.min(r);
            return;
        }
        for i in start..points.len() {
            chosen.push(i);
            rec(i + 1, k, points, chosen, best);
            chosen.pop();
        }
    }
    rec(0, k, points, &mut chosen, &mut best);
    best.sqrt()
}

/// Directed Hausdorff distance by definition.
pub fn hausdorff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .map(|p| b.iter().map(|c| d2(p, c)).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max)
        .sqrt()
}

/// True iff some labeled tree over the hyperedges has the running
/// intersection property. Enumerates all trees through Prüfer codes.
pub fn has_join_tree(edges: &[BTreeSet<String>]) -> bool {
    let s = edges.len();
    if s <= 2 {
        return true;
    }
    let total = s.pow((s - 2) as u32);
    (0..total).any(|mut code| {
        let mut seq = Vec::with_capacity(s - 2);
        for _ in 0..s - 2 {
            seq.push(code % s);
            code /= s;
        }
        let adj = prufer_tree(&seq, s);
        running_intersection(edges, &adj)
    })
}

fn prufer_tree(seq: &[usize], n: usize) -> Vec<Vec<usize>> {
    let mut degree = vec![1; n];
    for &v in seq {
        degree[v] += 1;
    }
    let mut adj = vec![Vec::new(); n];
    for &v in seq {
        let leaf = (0..n).find(|&u| degree[u] == 1).unwrap();
        adj[leaf].push(v);
        adj[v].push(leaf);
        degree[leaf] -= 1;
        degree[v] -= 1;
    }
    let rest: Vec<usize> = (0..n).filter(|&u| degree[u] == 1).collect();
    adj[rest[0]].push(rest[1]);
    adj[rest[1]].push(rest[0]);
    adj
}

fn running_intersection(edges: &[BTreeSet<String>], adj: &[Vec<usize>]) -> bool {
    let features: BTreeSet<&String> = edges.iter().flatten().collect();
    features.iter().all(|f| {
        let holders: Vec<usize> = (0..edges.len()).filter(|&i| edges[i].contains(*f)).collect();
        // Connected within the induced subgraph?
        let mut seen = vec![false; edges.len()];
        let mut stack = vec![holders[0]];
        seen[holders[0]] = true;
        while let Some(v) = stack.pop() {
            for &u in &adj[v] {
                if !seen[u] && edges[u].contains(*f) {
                    seen[u] = true;
                    stack.push(u);
                }
            }
        }
        holders.iter().all(|&h| seen[h])
    })
}

/// Tables with the given schemas and a single all-zero row each.
pub fn schema_tables(edges: &[BTreeSet<String>]) -> Vec<Table> {
    edges
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let names: Vec<&str> = e.iter().map(String::as_str).collect();
            Table::from_rows(format!("T{i}"), &names, &[vec![0.0; names.len()]]).unwrap()
        })
        .collect()
}

pub fn sorted(mut rows: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    rows.sort_by(|a, b| relcoreset::points::lex_cmp(a, b));
    rows
}
