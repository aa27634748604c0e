//! Coreset quality against the full data.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::loss::{Dataset, LossModel, Theta};
use crate::points::{dist2, Points};

/// Point sets up to this size get an exact diameter.
pub const EXACT_DIAMETER_LIMIT: usize = 5000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DiameterMethod {
    Exact,
    /// Two farthest-point passes; the true diameter is at most twice the
    /// reported eccentricity and at least the reported value.
    FarthestPoint,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Diameter {
    pub value: f64,
    pub method: DiameterMethod,
}

/// Exact maximum pairwise distance.
pub fn exact_diameter(points: &Points) -> f64 {
    let mut best = 0.0f64;
    for i in 0..points.len() {
        let p = points.row(i);
        for j in i + 1..points.len() {
            best = best.max(dist2(p, points.row(j)));
        }
    }
    best.sqrt()
}

fn farthest(points: &Points, from: &[f64]) -> (usize, f64) {
    points
        .iter()
        .enumerate()
        .map(|(i, p)| (i, dist2(p, from)))
        .fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a })
}

/// Lower bound on the diameter: from the first point go to the farthest
/// point `a`, then report the distance from `a` to its farthest point.
pub fn farthest_point_diameter(points: &Points) -> f64 {
    assert!(!points.is_empty());
    let (a, _) = farthest(points, points.row(0));
    farthest(points, points.row(a)).1.sqrt()
}

/// Exact for small sets, farthest-point estimate otherwise.
pub fn estimate_diameter(points: &Points) -> Diameter {
    if points.len() <= EXACT_DIAMETER_LIMIT {
        Diameter {
            value: exact_diameter(points),
            method: DiameterMethod::Exact,
        }
    } else {
        Diameter {
            value: farthest_point_diameter(points),
            method: DiameterMethod::FarthestPoint,
        }
    }
}

/// Additive error allowance `ε₂Δ^z` implied by a final radius `L`: the
/// covering term `αL^z` plus the light-cube term `α(2L)^z·ε₁/(4(1+β))`.
pub fn additive_budget(alpha: f64, beta: f64, z: f64, radius: f64, eps1: f64) -> f64 {
    alpha * radius.powf(z) * (1.0 + eps1 * 2f64.powf(z) / (4.0 * (1.0 + beta)))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub loss: &'static str,
    /// `F(θ)` on the full data.
    pub full_objective: f64,
    /// `F̃(θ)` on the coreset.
    pub coreset_objective: f64,
    pub diameter: Diameter,
    /// `|F̃ − F| / F`.
    pub multiplicative_gap: f64,
    /// `|F̃ − F| / Δ^z`.
    pub additive_gap: f64,
    /// `ε₁F + ε₂Δ^z`.
    pub budget: f64,
    pub within_budget: bool,
    /// `(|F̃ − F| − budget) / budget`, positive when over budget.
    pub excess: f64,
}

/// Compares full and coreset risks at `theta` against the allowance for
/// final radius `radius` and multiplicative target `eps1`.
#[allow(clippy::too_many_arguments)]
pub fn evaluate(
    model: &LossModel,
    theta: &Theta,
    full: &Dataset,
    coreset: &Dataset,
    weights: &[f64],
    diameter: Diameter,
    radius: f64,
    eps1: f64,
) -> Result<EvalReport> {
    if weights.len() != coreset.len() {
        return Err(Error::contract("one weight per coreset point required"));
    }
    let f = model.weighted_risk(theta, full, None)?;
    let ft = model.weighted_risk(theta, coreset, Some(weights))?;
    let c = model.continuity(theta);
    let gap = (ft - f).abs();
    let budget = eps1 * f + additive_budget(c.alpha, c.beta, c.z, radius, eps1);
    let dz = diameter.value.powf(c.z);
    Ok(EvalReport {
        loss: model.name(),
        full_objective: f,
        coreset_objective: ft,
        diameter,
        multiplicative_gap: if f > 0.0 { gap / f } else { 0.0 },
        additive_gap: if dz > 0.0 { gap / dz } else { 0.0 },
        budget,
        within_budget: gap <= budget,
        excess: if budget > 0.0 { (gap - budget) / budget } else if gap > 0.0 { f64::INFINITY } else { 0.0 },
    })
}

/// `(F(θ) − F(θ*)) / F(θ*)` with `F` the full training objective.
pub fn approx_metric(model: &LossModel, full: &Dataset, theta: &Theta, theta_star: &Theta) -> Result<f64> {
    let f = model.weighted_objective(theta, full, None)?;
    let f_star = model.weighted_objective(theta_star, full, None)?;
    if !(f_star > 0.0) {
        return Err(Error::contract("reference objective must be positive"));
    }
    Ok((f - f_star) / f_star)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diameter_of_a_pair() {
        let p = Points::from_rows(1, &[[0.0], [7.0]]);
        assert_eq!(exact_diameter(&p), 7.0);
        assert_eq!(farthest_point_diameter(&p), 7.0);
    }

    #[test]
    fn farthest_point_is_a_lower_bound() {
        let p = Points::from_rows(2, &[[0.0, 0.0], [1.0, 0.0], [0.5, 0.9], [3.0, 3.0], [-2.0, 1.0]]);
        let exact = exact_diameter(&p);
        let est = farthest_point_diameter(&p);
        assert!(est <= exact && exact <= 2.0 * est);
    }

    #[test]
    fn budget_vanishes_at_zero_radius() {
        assert_eq!(additive_budget(3.0, 0.5, 2.0, 0.0, 0.2), 0.0);
        let b = additive_budget(2.0, 0.0, 1.0, 1.5, 0.2);
        assert!((b - 2.0 * 1.5 * (1.0 + 0.2 * 2.0 / 4.0)).abs() < 1e-15);
    }
}
