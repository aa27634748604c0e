//! Greedy farthest-point k-center and directed Hausdorff distance.

use rand::Rng;

use crate::error::{Error, Result};
use crate::points::{dist2, sqrt_up, Points};
use crate::seed;

/// Selected centers together with how well they cover their source set.
#[derive(Clone, Debug, PartialEq)]
pub struct CenterSet {
    pub centers: Points,
    /// Source indices of the centers, in selection order.
    pub indices: Vec<usize>,
    /// Largest squared distance from a source point to its nearest center.
    pub cover_radius2: f64,
}

impl CenterSet {
    /// Covering radius, rounded up so that `radius² ≥ cover_radius2`.
    pub fn cover_radius(&self) -> f64 {
        sqrt_up(self.cover_radius2)
    }
}

/// Farthest-point greedy over `n` abstract items with squared distance
/// `d2`. Starts at `first`, adds the farthest item (lowest index on ties)
/// until `k` items are chosen or everything is at distance zero.
/// Returns the chosen items and the final max squared distance.
pub fn greedy<F>(n: usize, k: usize, first: usize, d2: F) -> (Vec<usize>, f64)
where
    F: Fn(usize, usize) -> f64,
{
    assert!(n > 0 && k > 0 && first < n);
    let mut chosen = vec![first];
    let mut near: Vec<f64> = (0..n).map(|i| d2(first, i)).collect();
    loop {
        let (far, worst) = near
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
                if v > bv {
                    (i, v)
                } else {
                    (bi, bv)
                }
            });
        if chosen.len() >= k || worst <= 0.0 {
            return (chosen, worst.max(0.0));
        }
        chosen.push(far);
        for (i, slot) in near.iter_mut().enumerate() {
            let d = d2(far, i);
            if d < *slot {
                *slot = d;
            }
        }
    }
}

/// Gonzalez's 2-approximate k-center over the distinct points of `points`.
/// The first center is drawn uniformly by `seed`.
pub fn gonzalez(points: &Points, k: usize, seed: u64) -> CenterSet {
    assert!(!points.is_empty(), "k-center needs at least one point");
    assert!(k >= 1, "k must be at least 1");
    let distinct = points.distinct_indices();
    let first = seed::rng(seed).random_range(0..distinct.len());
    let (picked, worst) = greedy(distinct.len(), k, first, |a, b| {
        dist2(points.row(distinct[a]), points.row(distinct[b]))
    });
    let indices: Vec<usize> = picked.iter().map(|&i| distinct[i]).collect();
    CenterSet {
        centers: points.select(&indices),
        indices,
        cover_radius2: worst,
    }
}

/// Squared directed Hausdorff distance `max_{a∈A} min_{b∈B} ‖a−b‖²`.
pub fn directed_hausdorff2(a: &Points, b: &Points) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::contract(format!(
            "directed Hausdorff distance between dimensions {} and {}",
            a.dim(),
            b.dim()
        )));
    }
    if a.is_empty() || b.is_empty() {
        return Err(Error::contract("directed Hausdorff distance of an empty set"));
    }
    Ok(a.iter()
        .map(|p| b.iter().map(|q| dist2(p, q)).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max))
}

/// `d(A, B) = max_{a∈A} min_{b∈B} ‖a−b‖`.
pub fn directed_hausdorff(a: &Points, b: &Points) -> Result<f64> {
    directed_hausdorff2(a, b).map(f64::sqrt)
}
