//! Weights for the root centers.
//!
//! Root pseudo-cubes may overlap, and the exact size of each cube minus the
//! union of the earlier ones is out of reach without materializing the
//! join. Cubes are therefore processed in order: the first gets its exact
//! count, every later one gets its count scaled by the sampled fraction of
//! its tuples that no earlier heavy cube already holds. Cubes whose fresh
//! fraction falls below `2τ` are light and get weight zero.

use rayon::prelude::*;
use serde::Serialize;

use crate::aggtree::RootSummary;
use crate::count::JoinIndex;
use crate::cube::PseudoCube;
use crate::error::{Error, Result};
use crate::materialize::DesignMatrix;
use crate::points::{dist2, Points};
use crate::sample::{JoinSampler, CHUNK};
use crate::schema::FeaturePartition;
use crate::seed;

pub const DEFAULT_M_CAP: u64 = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct WeightParams {
    pub eps1: f64,
    pub beta: f64,
    pub lambda: f64,
    /// Number of root cubes the constants were derived for.
    pub k: usize,
    pub delta: f64,
    pub tau: f64,
    /// Sample size actually used per cube.
    pub m: u64,
    /// Sample size the formula asks for, before capping.
    pub m_formula: u64,
    pub m_capped: bool,
    pub seed: u64,
}

impl WeightParams {
    pub fn new(eps1: f64, beta: f64, lambda: f64, k: usize, m_cap: u64, seed: u64) -> Result<Self> {
        if !(eps1 > 0.0 && eps1 < 1.0) {
            return Err(Error::contract(format!("eps1 must lie in (0,1), got {eps1}")));
        }
        if !(beta >= 0.0 && beta < 1.0) {
            return Err(Error::contract(format!("beta must lie in [0,1), got {beta}")));
        }
        if eps1 <= beta {
            return Err(Error::contract(format!(
                "eps1 ({eps1}) must exceed the loss constant beta ({beta})"
            )));
        }
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(Error::contract(format!("lambda must lie in (0,1), got {lambda}")));
        }
        if k == 0 {
            return Err(Error::contract("weights need at least one cube"));
        }
        if m_cap == 0 {
            return Err(Error::contract("sample cap must be positive"));
        }
        let kf = k as f64;
        let delta = (eps1 - beta) / (2.0 * (1.0 + beta));
        let tau = eps1 * (1.0 - delta) / (8.0 * kf * kf * (1.0 + beta));
        if 2.0 * tau / (1.0 - delta) >= 1.0 / kf {
            return Err(Error::contract("threshold 2τ/(1-δ) must stay below 1/k"));
        }
        let m_real = (3.0 / (delta * delta * tau) * (2.0 * kf / lambda).ln()).ceil();
        let m_formula = if m_real >= u64::MAX as f64 { u64::MAX } else { m_real.max(1.0) as u64 };
        let m_capped = m_formula > m_cap;
        if m_capped {
            log::warn!("sample size {m_formula} exceeds the cap; using {m_cap} per cube");
        }
        Ok(Self {
            eps1,
            beta,
            lambda,
            k,
            delta,
            tau,
            m: m_formula.min(m_cap),
            m_formula,
            m_capped,
            seed,
        })
    }

    /// Heavy iff `g/m ≥ 2τ`; equality counts as heavy.
    pub fn is_heavy(&self, g: u64, m: u64) -> bool {
        g as f64 / m as f64 >= 2.0 * self.tau
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CubeDiagnostics {
    /// Exact `|P ∩ PC_i|`.
    pub count: u128,
    /// Earlier heavy cubes close enough to share tuples with this one.
    pub overlapping_heavy: usize,
    /// False when no earlier heavy cube can overlap, so `g = m` is certain.
    pub sampled: bool,
    pub g: u64,
    pub m: u64,
    pub ratio: f64,
    pub heavy: bool,
    pub weight: f64,
}

/// Weighted root centers. Light cubes stay listed with weight zero.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Coreset {
    pub features: Vec<String>,
    pub points: Points,
    pub weights: Vec<f64>,
    pub final_radius: f64,
    pub params: WeightParams,
    pub cubes: Vec<CubeDiagnostics>,
}

impl Coreset {
    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Points with positive weight and their weights.
    pub fn heavy(&self) -> (Points, Vec<f64>) {
        let keep: Vec<usize> = (0..self.weights.len()).filter(|&i| self.weights[i] > 0.0).collect();
        (
            self.points.select(&keep),
            keep.iter().map(|&i| self.weights[i]).collect(),
        )
    }

    pub fn heavy_flags(&self) -> Vec<bool> {
        self.cubes.iter().map(|c| c.heavy).collect()
    }

    /// CSV with the feature header plus `weight`; light cubes omitted.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = self.features.clone();
        header.push("weight".into());
        w.write_record(&header)?;
        let (points, weights) = self.heavy();
        for (p, wt) in points.iter().zip(&weights) {
            let mut rec: Vec<String> = p.iter().map(|v| format_num(*v)).collect();
            rec.push(format_num(*wt));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<coreset>", e))?;
        Ok(())
    }
}

/// Shortest decimal that reads back to the same float.
pub fn format_num(v: f64) -> String {
    format!("{v:?}")
}

/// Largest blockwise center distance between two full cubes. Two cubes of
/// radius `r` can share a point only if this is at most `2r`.
pub fn block_distance(partition: &FeaturePartition, a: &[f64], b: &[f64]) -> f64 {
    (0..partition.tables())
        .map(|t| dist2(partition.block(a, t), partition.block(b, t)))
        .fold(0.0, f64::max)
        .sqrt()
}

/// Per-table row membership for one cube.
struct RowMask {
    /// `(table, bitset)` for tables with a nonempty block.
    tables: Vec<(usize, Vec<u64>)>,
}

impl RowMask {
    fn new(index: &JoinIndex, cube: &PseudoCube) -> Self {
        let tables = cube
            .blocks(index.partition())
            .filter(|(_, c)| !c.is_empty())
            .map(|(t, c)| {
                let mut bits = vec![0u64; index.table_rows(t).div_ceil(64)];
                for r in index.ball_rows(t, c, cube.radius) {
                    bits[r as usize / 64] |= 1 << (r % 64);
                }
                (t, bits)
            })
            .collect();
        Self { tables }
    }

    #[inline]
    fn contains(&self, rows: &[u32]) -> bool {
        self.tables.iter().all(|(t, bits)| {
            let r = rows[*t] as usize;
            bits[r / 64] >> (r % 64) & 1 == 1
        })
    }
}

/// Sequential overlap resolution over the root cubes, in order.
pub fn assign_weights(index: &JoinIndex, summary: &RootSummary, params: &WeightParams) -> Result<Coreset> {
    let partition = index.partition();
    let s = index.tables();
    let n_cubes = summary.cubes.len();
    let two_l = 2.0 * summary.final_radius;
    let mut masks: Vec<Option<RowMask>> = (0..n_cubes).map(|_| None).collect();
    let mut heavy_ids: Vec<usize> = Vec::new();
    let mut weights = Vec::with_capacity(n_cubes);
    let mut diags = Vec::with_capacity(n_cubes);

    for (i, cube) in summary.cubes.iter().enumerate() {
        let count = summary.counts[i];
        if count == 0 {
            return Err(Error::contract(format!("root cube {i} is empty")));
        }
        let near: Vec<usize> = heavy_ids
            .iter()
            .copied()
            .filter(|&j| block_distance(partition, &summary.cubes[j].center, &cube.center) <= two_l)
            .collect();
        let (g, m, sampled) = if near.is_empty() {
            (params.m, params.m, false)
        } else {
            for &j in &near {
                if masks[j].is_none() {
                    masks[j] = Some(RowMask::new(index, &summary.cubes[j]));
                }
            }
            let near_masks: Vec<&RowMask> = near.iter().map(|&j| masks[j].as_ref().unwrap()).collect();
            let sampler = JoinSampler::for_cubes(index, std::slice::from_ref(cube))?;
            if sampler.total() == 0 {
                return Err(Error::contract(format!("root cube {i} is empty")));
            }
            let m = params.m as usize;
            let cube_seed = seed::derive(params.seed, "weights", i as u64);
            let chunks = m.div_ceil(CHUNK);
            let g: u64 = (0..chunks)
                .into_par_iter()
                .map(|c| -> Result<u64> {
                    let mut rng = seed::stream_rng(cube_seed, c as u64);
                    let mut rows = vec![0u32; s];
                    let draws = CHUNK.min(m - c * CHUNK);
                    let mut fresh = 0;
                    for _ in 0..draws {
                        sampler.draw_rows(&mut rng, &mut rows)?;
                        if !near_masks.iter().any(|mask| mask.contains(&rows)) {
                            fresh += 1;
                        }
                    }
                    Ok(fresh)
                })
                .try_reduce(|| 0, |a, b| Ok(a + b))?;
            (g, params.m, true)
        };
        let heavy = i == 0 || params.is_heavy(g, m);
        let ratio = g as f64 / m as f64;
        let weight = if i == 0 {
            count as f64
        } else if heavy {
            ratio * count as f64
        } else {
            0.0
        };
        if heavy {
            heavy_ids.push(i);
        }
        weights.push(weight);
        diags.push(CubeDiagnostics {
            count,
            overlapping_heavy: near.len(),
            sampled,
            g,
            m,
            ratio,
            heavy,
            weight,
        });
    }

    Ok(Coreset {
        features: partition.full.clone(),
        points: summary.centers.clone(),
        weights,
        final_radius: summary.final_radius,
        params: *params,
        cubes: diags,
    })
}

/// First-covering weights: every join row is charged to the lowest-index
/// cube among those flagged heavy that contains it.
pub fn exact_weights(
    partition: &FeaturePartition,
    cubes: &[PseudoCube],
    heavy: &[bool],
    design: &DesignMatrix,
) -> Vec<u128> {
    let mut w = vec![0u128; cubes.len()];
    for p in design.points.iter() {
        if let Some(i) = (0..cubes.len()).find(|&i| heavy[i] && cubes[i].contains(partition, p)) {
            w[i] += 1;
        }
    }
    w
}

/// Exact weights with heavy/light decided from the exact fresh fractions
/// `τ_i` instead of sampled ones. Returns weights, flags and fractions.
pub fn exact_weights_by_ratio(
    partition: &FeaturePartition,
    cubes: &[PseudoCube],
    tau: f64,
    design: &DesignMatrix,
) -> (Vec<u128>, Vec<bool>, Vec<f64>) {
    let mut heavy = vec![false; cubes.len()];
    let mut weights = vec![0u128; cubes.len()];
    let mut ratios = vec![0.0; cubes.len()];
    for i in 0..cubes.len() {
        let mut inside = 0u128;
        let mut fresh = 0u128;
        for p in design.points.iter() {
            if cubes[i].contains(partition, p) {
                inside += 1;
                if !(0..i).any(|j| heavy[j] && cubes[j].contains(partition, p)) {
                    fresh += 1;
                }
            }
        }
        let ratio = if inside == 0 { 0.0 } else { fresh as f64 / inside as f64 };
        ratios[i] = ratio;
        heavy[i] = inside > 0 && (i == 0 || ratio >= 2.0 * tau);
        if heavy[i] {
            weights[i] = fresh;
        }
    }
    (weights, heavy, ratios)
}

/// Light cubes with no earlier heavy cube whose center is within `2L`
/// under `distance`.
pub fn lonely_light_cubes<F>(coreset: &Coreset, distance: F) -> Vec<usize>
where
    F: Fn(&[f64], &[f64]) -> f64,
{
    let two_l = 2.0 * coreset.final_radius;
    (0..coreset.cubes.len())
        .filter(|&i| !coreset.cubes[i].heavy)
        .filter(|&i| {
            !(0..i).any(|j| {
                coreset.cubes[j].heavy
                    && distance(coreset.points.row(i), coreset.points.row(j)) <= two_l
            })
        })
        .collect()
}
