//! Seeded synthetic multi-table instances.
//!
//! Every table row belongs to an anchor entity. Anchors carry a latent
//! position in the plane drawn from a skewed cluster mixture, and every
//! numeric feature is a fixed smooth function of that position plus small
//! noise, so the joined points lie close to a 2-dimensional manifold. Join
//! keys are coordinates of the anchor itself: rows join exactly when they
//! belong to the same anchor.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::{Column, Table};
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    /// Every table carries the same key column.
    Star,
    /// Table `i` shares key `key{i}` with table `i+1`.
    Chain,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub tables: usize,
    /// Rows per table.
    pub rows: usize,
    pub anchors: usize,
    /// Non-key, non-label features, spread over the tables.
    pub features: usize,
    pub shape: Shape,
    /// Ordinary clusters of anchors.
    pub clusters: usize,
    /// Zipf exponent of the cluster masses.
    pub cluster_skew: f64,
    /// Extra clusters holding a single anchor each, placed far away.
    pub far_clusters: usize,
    /// Zipf exponent of the number of rows per anchor.
    pub key_skew: f64,
    /// Latent spread of anchors around their cluster center.
    pub spread: f64,
    /// Latent spread of rows around their anchor.
    pub jitter: f64,
    /// Feature noise.
    pub noise: f64,
    /// Adds a 0/1 column `y` to the first table.
    pub label: bool,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            tables: 3,
            rows: 200,
            anchors: 20,
            features: 6,
            shape: Shape::Star,
            clusters: 4,
            cluster_skew: 1.0,
            far_clusters: 1,
            key_skew: 0.0,
            spread: 0.15,
            jitter: 0.05,
            noise: 0.01,
            label: false,
            seed: 0,
        }
    }
}

fn normal<R: Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Splits `total` into parts proportional to `mass`, each at least 1.
fn allocate(total: usize, mass: &[f64]) -> Vec<usize> {
    let n = mass.len();
    let spare = total - n;
    let sum: f64 = mass.iter().sum();
    let exact: Vec<f64> = mass.iter().map(|m| m / sum * spare as f64).collect();
    let mut out: Vec<usize> = exact.iter().map(|e| 1 + e.floor() as usize).collect();
    let mut left = total - out.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        out[i] += 1;
        left -= 1;
    }
    out
}

/// A random smooth map from the plane to `R^dim`.
struct Embedding {
    linear: Vec<[f64; 2]>,
    wave: Vec<[f64; 2]>,
    phase: Vec<f64>,
    amplitude: Vec<f64>,
}

impl Embedding {
    fn new<R: Rng>(dim: usize, rng: &mut R) -> Self {
        let mut e = Embedding {
            linear: Vec::with_capacity(dim),
            wave: Vec::with_capacity(dim),
            phase: Vec::with_capacity(dim),
            amplitude: Vec::with_capacity(dim),
        };
        for _ in 0..dim {
            e.linear.push([normal(rng), normal(rng)]);
            e.wave.push([2.0 * normal(rng), 2.0 * normal(rng)]);
            e.phase.push(rng.random::<f64>() * std::f64::consts::TAU);
            e.amplitude.push(0.3 + 0.4 * rng.random::<f64>());
        }
        e
    }

    fn eval(&self, j: usize, z: [f64; 2]) -> f64 {
        let [a, b] = self.linear[j];
        let [u, v] = self.wave[j];
        a * z[0] + b * z[1] + self.amplitude[j] * (u * z[0] + v * z[1] + self.phase[j]).sin()
    }
}

/// Generates the tables; table `i` is named `T{i+1}`.
pub fn generate(config: &SynthConfig) -> Result<Vec<Table>> {
    let c = config;
    if c.tables == 0 || c.anchors == 0 || c.clusters == 0 {
        return Err(Error::contract("need at least one table, anchor and cluster"));
    }
    if c.anchors < c.clusters + c.far_clusters {
        return Err(Error::contract("every cluster needs at least one anchor"));
    }
    if c.rows < c.anchors {
        return Err(Error::contract("every anchor needs at least one row per table"));
    }
    if c.features < c.tables && c.shape == Shape::Star && c.tables > 1 {
        return Err(Error::contract("every table beyond the key needs a feature"));
    }
    let mut rng = seed::rng(seed::derive(c.seed, "synth", 0));

    // Cluster centers and anchor latents.
    let mut centers: Vec<[f64; 2]> = (0..c.clusters)
        .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
        .collect();
    for i in 0..c.far_clusters {
        let angle = std::f64::consts::TAU * (i as f64 + rng.random::<f64>()) / c.far_clusters as f64;
        centers.push([3.0 * angle.cos(), 3.0 * angle.sin()]);
    }
    let masses: Vec<f64> = (0..c.clusters).map(|j| 1.0 / ((j + 1) as f64).powf(c.cluster_skew)).collect();
    let mut members = allocate(c.anchors - c.far_clusters, &masses);
    members.extend(std::iter::repeat_n(1, c.far_clusters));
    let mut latent: Vec<[f64; 2]> = Vec::with_capacity(c.anchors);
    for (j, &count) in members.iter().enumerate() {
        for _ in 0..count {
            latent.push([
                centers[j][0] + c.spread * normal(&mut rng),
                centers[j][1] + c.spread * normal(&mut rng),
            ]);
        }
    }

    // Key values: latent coordinates, nudged until distinct.
    let key_values = |axis: usize| -> Vec<f64> {
        let mut vals: Vec<f64> = latent.iter().map(|z| z[axis]).collect();
        for i in 0..vals.len() {
            while vals[..i].iter().any(|v| v.to_bits() == vals[i].to_bits()) {
                vals[i] = vals[i].next_up();
            }
        }
        vals
    };
    let keys = [key_values(0), key_values(1)];

    // Rows per anchor, with a random popularity order per table.
    let rank_mass: Vec<f64> = (0..c.anchors).map(|r| 1.0 / ((r + 1) as f64).powf(c.key_skew)).collect();
    let embed = Embedding::new(c.features, &mut rng);
    let label_dir = [normal(&mut rng), normal(&mut rng)];
    let label_offset = 0.2 * normal(&mut rng);

    let mut tables = Vec::with_capacity(c.tables);
    let per_table = c.features / c.tables;
    let extra = c.features % c.tables;
    let mut feature = 0;
    for t in 0..c.tables {
        let mut order: Vec<usize> = (0..c.anchors).collect();
        order.shuffle(&mut rng);
        let alloc = allocate(c.rows, &rank_mass);
        let mut owner = Vec::with_capacity(c.rows);
        for (rank, &a) in order.iter().enumerate() {
            owner.extend(std::iter::repeat_n(a, alloc[rank]));
        }
        owner.sort_unstable();

        let mut columns = Vec::new();
        let key_cols: Vec<(String, usize)> = match c.shape {
            Shape::Star => vec![("key".into(), 0)],
            Shape::Chain => {
                let mut k = Vec::new();
                if t > 0 {
                    k.push((format!("key{t}"), t % 2));
                }
                if t + 1 < c.tables {
                    k.push((format!("key{}", t + 1), (t + 1) % 2));
                }
                k
            }
        };
        for (name, axis) in key_cols {
            columns.push(Column {
                name,
                values: owner.iter().map(|&a| keys[axis][a]).collect(),
            });
        }
        let own = per_table + usize::from(t < extra);
        let row_latent: Vec<[f64; 2]> = owner
            .iter()
            .map(|&a| {
                [
                    latent[a][0] + c.jitter * normal(&mut rng),
                    latent[a][1] + c.jitter * normal(&mut rng),
                ]
            })
            .collect();
        for j in feature..feature + own {
            columns.push(Column {
                name: format!("x{j}"),
                values: row_latent
                    .iter()
                    .map(|&z| embed.eval(j, z) + c.noise * normal(&mut rng))
                    .collect(),
            });
        }
        feature += own;
        if c.label && t == 0 {
            columns.push(Column {
                name: "y".into(),
                values: row_latent
                    .iter()
                    .map(|z| {
                        let s = label_dir[0] * z[0] + label_dir[1] * z[1] + label_offset;
                        if s + 0.1 * normal(&mut rng) > 0.0 { 1.0 } else { 0.0 }
                    })
                    .collect(),
            });
        }
        if columns.is_empty() {
            return Err(Error::contract(format!("table {t} would have no columns")));
        }
        tables.push(Table::new(format!("T{}", t + 1), columns)?);
    }
    Ok(tables)
}

/// Writes each table as `dir/T{i}.csv` plus a `join.toml` listing them.
pub fn write_instance(tables: &[Table], dir: &std::path::Path, label: Option<&str>) -> Result<std::path::PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut spec = String::new();
    if let Some(l) = label {
        spec.push_str(&format!("label = \"{l}\"\n\n"));
    }
    for t in tables {
        let file = format!("{}.csv", t.name());
        let path = dir.join(&file);
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(t.feature_names())?;
        for r in 0..t.rows() {
            w.write_record(t.row(r).iter().map(|v| format!("{v:?}")))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        spec.push_str(&format!("[[table]]\nname = \"{}\"\npath = \"{file}\"\n\n", t.name()));
    }
    let spec_path = dir.join("join.toml");
    std::fs::write(&spec_path, spec).map_err(|e| Error::io(&spec_path, e))?;
    Ok(spec_path)
}
