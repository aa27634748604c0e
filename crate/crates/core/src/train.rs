//! Small deterministic trainers for weighted data.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::loss::{sigmoid, Dataset, LossModel, Theta};
use crate::points::dist2;
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TrainOptions {
    pub max_iter: usize,
    /// Stop once the gradient norm (or center movement) falls below this.
    pub tol: f64,
    /// Consecutive objective increases tolerated before giving up.
    pub divergence_streak: usize,
    /// Initial step of the SVM subgradient schedule `η₀/√(t+1)`.
    pub svm_step: f64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            max_iter: 300,
            tol: 1e-9,
            divergence_streak: 10,
            svm_step: 1.0,
        }
    }
}

fn weight_of(weights: Option<&[f64]>, i: usize) -> f64 {
    weights.map_or(1.0, |w| w[i])
}

fn check_weights(data: &Dataset, weights: Option<&[f64]>) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::contract("cannot train on an empty data set"));
    }
    let total = match weights {
        None => data.len() as f64,
        Some(w) => {
            if w.len() != data.len() {
                return Err(Error::contract("one weight per point required"));
            }
            w.iter().sum()
        }
    };
    if !(total > 0.0) {
        return Err(Error::contract("total weight must be positive"));
    }
    Ok(total)
}

/// Tracks consecutive objective increases.
struct Divergence {
    last: f64,
    streak: usize,
    limit: usize,
}

impl Divergence {
    fn new(limit: usize) -> Self {
        Self {
            last: f64::INFINITY,
            streak: 0,
            limit,
        }
    }

    fn observe(&mut self, iteration: usize, objective: f64) -> Result<()> {
        if !objective.is_finite() {
            return Err(Error::Diverged {
                iteration,
                streak: self.streak + 1,
            });
        }
        if objective > self.last {
            self.streak += 1;
            if self.streak >= self.limit {
                return Err(Error::Diverged {
                    iteration,
                    streak: self.streak,
                });
            }
        } else {
            self.streak = 0;
        }
        self.last = objective;
        Ok(())
    }
}

pub fn train(
    model: &LossModel,
    data: &Dataset,
    weights: Option<&[f64]>,
    options: &TrainOptions,
    seed: u64,
) -> Result<Theta> {
    check_weights(data, weights)?;
    match *model {
        LossModel::KMeans { centers, .. } => kmeans(data, weights, centers, options, seed),
        LossModel::Logistic { l2 } => logistic(data, weights, l2, options),
        LossModel::Svm { lambda_reg } => svm(data, weights, lambda_reg, options),
    }
}

/// Weighted k-means++ seeding followed by weighted Lloyd iterations.
fn kmeans(data: &Dataset, weights: Option<&[f64]>, k: usize, options: &TrainOptions, seed: u64) -> Result<Theta> {
    if k == 0 {
        return Err(Error::contract("k-means needs at least one center"));
    }
    let x = &data.x;
    let n = x.len();
    let d = x.dim();
    let mut rng = seed::rng(seed::derive(seed, "kmeans++", 0));
    let pick = |rng: &mut rand_chacha::ChaCha8Rng, mass: &dyn Fn(usize) -> f64| -> Option<usize> {
        let total: f64 = (0..n).map(mass).sum();
        if !(total > 0.0) {
            return None;
        }
        let u = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut last = None;
        for i in 0..n {
            let m = mass(i);
            if m > 0.0 {
                acc += m;
                last = Some(i);
                if u < acc {
                    return Some(i);
                }
            }
        }
        last
    };

    let first = pick(&mut rng, &|i| weight_of(weights, i)).expect("positive total weight");
    let mut centers: Vec<Vec<f64>> = vec![x.row(first).to_vec()];
    let mut near: Vec<f64> = (0..n).map(|i| dist2(x.row(i), &centers[0])).collect();
    while centers.len() < k {
        let next = pick(&mut rng, &|i| weight_of(weights, i) * near[i])
            .unwrap_or_else(|| centers.len() % n.max(1));
        let c = x.row(next).to_vec();
        for (i, slot) in near.iter_mut().enumerate() {
            *slot = slot.min(dist2(x.row(i), &c));
        }
        centers.push(c);
    }

    let mut assign = vec![usize::MAX; n];
    let mut div = Divergence::new(options.divergence_streak);
    for iter in 0..options.max_iter {
        let mut changed = false;
        let mut cost = 0.0;
        for i in 0..n {
            let (best, d2) = centers
                .iter()
                .enumerate()
                .map(|(j, c)| (j, dist2(x.row(i), c)))
                .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
            cost += weight_of(weights, i) * d2;
            if assign[i] != best {
                assign[i] = best;
                changed = true;
            }
        }
        div.observe(iter, cost)?;
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; d]; k];
        let mut mass = vec![0.0; k];
        for i in 0..n {
            let w = weight_of(weights, i);
            if w == 0.0 {
                continue;
            }
            mass[assign[i]] += w;
            for (s, v) in sums[assign[i]].iter_mut().zip(x.row(i)) {
                *s += w * v;
            }
        }
        for j in 0..k {
            if mass[j] > 0.0 {
                centers[j] = sums[j].iter().map(|s| s / mass[j]).collect();
            }
        }
    }
    Ok(Theta::Centers(centers))
}

/// Value and gradient of the weighted logistic objective.
fn logistic_grad(data: &Dataset, weights: Option<&[f64]>, total: f64, l2: f64, w: &[f64], b: f64) -> (f64, Vec<f64>, f64) {
    let y = data.y.as_ref().expect("labels checked");
    let mut gw = vec![0.0; w.len()];
    let mut gb = 0.0;
    let mut value = 0.0;
    for i in 0..data.len() {
        let wt = weight_of(weights, i);
        if wt == 0.0 {
            continue;
        }
        let x = data.x.row(i);
        let t = w.iter().zip(x).map(|(a, c)| a * c).sum::<f64>() + b;
        let yi = if y[i] { 1.0 } else { 0.0 };
        value += wt * (t.max(0.0) + (-t.abs()).exp().ln_1p() - yi * t);
        let r = wt * (sigmoid(t) - yi);
        for (g, v) in gw.iter_mut().zip(x) {
            *g += r * v;
        }
        gb += r;
    }
    value /= total;
    for (g, wi) in gw.iter_mut().zip(w) {
        *g = *g / total + l2 * wi;
    }
    value += 0.5 * l2 * w.iter().map(|v| v * v).sum::<f64>();
    (value, gw, gb / total)
}

/// Largest eigenvalue of the weighted second moment of `(x, 1)`, by power
/// iteration, inflated slightly so the step stays on the safe side.
fn second_moment_norm(data: &Dataset, weights: Option<&[f64]>, total: f64) -> f64 {
    let d = data.x.dim() + 1;
    let mut v = vec![1.0 / (d as f64).sqrt(); d];
    let mut lambda = 0.0;
    for _ in 0..50 {
        let mut next = vec![0.0; d];
        for i in 0..data.len() {
            let wt = weight_of(weights, i);
            if wt == 0.0 {
                continue;
            }
            let x = data.x.row(i);
            let dot = x.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() + v[d - 1];
            for (n, a) in next.iter_mut().zip(x) {
                *n += wt * dot * a;
            }
            next[d - 1] += wt * dot;
        }
        let norm = next.iter().map(|a| a * a).sum::<f64>().sqrt() / total;
        if norm == 0.0 {
            break;
        }
        let converged = (norm - lambda).abs() <= 1e-6 * norm;
        lambda = norm;
        v = next.iter().map(|a| a / (norm * total)).collect();
        if converged {
            break;
        }
    }
    lambda * 1.05
}

/// Gradient descent with constant step `1/L` for the smoothness constant
/// `L = ¼·λ_max(E[(x,1)(x,1)ᵀ]) + l2`.
fn logistic(data: &Dataset, weights: Option<&[f64]>, l2: f64, options: &TrainOptions) -> Result<Theta> {
    if data.y.is_none() {
        return Err(Error::contract("logistic regression needs labels"));
    }
    let total = check_weights(data, weights)?;
    let d = data.x.dim();
    let step = 1.0 / (0.25 * second_moment_norm(data, weights, total) + l2);
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut div = Divergence::new(options.divergence_streak);
    for iter in 0..options.max_iter {
        let (value, gw, gb) = logistic_grad(data, weights, total, l2, &w, b);
        div.observe(iter, value)?;
        let norm = (gw.iter().map(|g| g * g).sum::<f64>() + gb * gb).sqrt();
        if norm < options.tol {
            break;
        }
        for (wi, g) in w.iter_mut().zip(&gw) {
            *wi -= step * g;
        }
        b -= step * gb;
    }
    Ok(Theta::Linear { w, b })
}

/// Value and a subgradient of `½‖ω‖² + λ · mean hinge`.
fn svm_grad(data: &Dataset, weights: Option<&[f64]>, total: f64, lambda: f64, w: &[f64], b: f64) -> (f64, Vec<f64>, f64) {
    let y = data.y.as_ref().expect("labels checked");
    let mut gw = vec![0.0; w.len()];
    let mut gb = 0.0;
    let mut hinge = 0.0;
    for i in 0..data.len() {
        let wt = weight_of(weights, i);
        if wt == 0.0 {
            continue;
        }
        let x = data.x.row(i);
        let yi = if y[i] { 1.0 } else { -1.0 };
        let margin = yi * (w.iter().zip(x).map(|(a, c)| a * c).sum::<f64>() + b);
        if margin < 1.0 {
            hinge += wt * (1.0 - margin);
            for (g, v) in gw.iter_mut().zip(x) {
                *g -= wt * yi * v;
            }
            gb -= wt * yi;
        }
    }
    let scale = lambda / total;
    for (g, wi) in gw.iter_mut().zip(w) {
        *g = *g * scale + wi;
    }
    let value = 0.5 * w.iter().map(|v| v * v).sum::<f64>() + scale * hinge;
    (value, gw, gb * scale)
}

/// Subgradient descent with step `η₀/(G·√(t+1))`, `G` the norm of the
/// initial subgradient; the best iterate is returned.
fn svm(data: &Dataset, weights: Option<&[f64]>, lambda: f64, options: &TrainOptions) -> Result<Theta> {
    if data.y.is_none() {
        return Err(Error::contract("SVM needs labels"));
    }
    if !(lambda > 0.0) {
        return Err(Error::contract("SVM regularization weight must be positive"));
    }
    let total = check_weights(data, weights)?;
    let d = data.x.dim();
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut best = (f64::INFINITY, w.clone(), b);
    let mut div = Divergence::new(options.divergence_streak);
    let mut scale = None;
    for iter in 0..options.max_iter {
        let (value, gw, gb) = svm_grad(data, weights, total, lambda, &w, b);
        div.observe(iter, value)?;
        if value < best.0 {
            best = (value, w.clone(), b);
        }
        let norm = (gw.iter().map(|g| g * g).sum::<f64>() + gb * gb).sqrt();
        if norm < options.tol {
            break;
        }
        let g0 = *scale.get_or_insert(norm.max(1.0));
        let step = options.svm_step / (g0 * ((iter + 1) as f64).sqrt());
        for (wi, g) in w.iter_mut().zip(&gw) {
            *wi -= step * g;
        }
        b -= step * gb;
    }
    Ok(Theta::Linear { w: best.1, b: best.2 })
}

/// Gradient of the smooth objectives, exposed for finite-difference checks.
pub fn objective_gradient(model: &LossModel, data: &Dataset, weights: Option<&[f64]>, theta: &Theta) -> Result<(f64, Vec<f64>, f64)> {
    let total = check_weights(data, weights)?;
    let (w, b) = theta
        .linear()
        .ok_or_else(|| Error::contract("gradient is defined for linear models"))?;
    if data.y.is_none() {
        return Err(Error::contract("this loss needs labels"));
    }
    match *model {
        LossModel::Logistic { l2 } => Ok(logistic_grad(data, weights, total, l2, w, b)),
        LossModel::Svm { lambda_reg } => Ok(svm_grad(data, weights, total, lambda_reg, w, b)),
        LossModel::KMeans { .. } => Err(Error::contract("k-means has no gradient trainer")),
    }
}
