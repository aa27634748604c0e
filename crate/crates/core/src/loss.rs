//! Loss families, their continuity constants, and weighted risks.
//!
//! Data are full join points. For supervised models one coordinate is the
//! class label: values `> 0` are the positive class, the rest negative.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::points::{dist2, Points};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossModel {
    /// `k_c`-means; `eps` sets the continuity trade-off `(1 + 1/ε, ε, 2)`.
    KMeans { centers: usize, eps: f64 },
    /// Cross-entropy with a bias term and optional `l2/2 · ‖ω‖²` penalty.
    Logistic { l2: f64 },
    /// Soft-margin objective `½‖ω‖² + λ_reg · mean hinge`.
    Svm { lambda_reg: f64 },
}

/// Model parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Theta {
    Centers(Vec<Vec<f64>>),
    Linear { w: Vec<f64>, b: f64 },
}

impl Theta {
    pub fn linear(&self) -> Option<(&[f64], f64)> {
        match self {
            Theta::Linear { w, b } => Some((w, *b)),
            Theta::Centers(_) => None,
        }
    }

    pub fn centers(&self) -> Option<&[Vec<f64>]> {
        match self {
            Theta::Centers(c) => Some(c),
            Theta::Linear { .. } => None,
        }
    }

    /// Euclidean norm of all parameters, bias included.
    pub fn norm(&self) -> f64 {
        match self {
            Theta::Linear { w, b } => (w.iter().map(|x| x * x).sum::<f64>() + b * b).sqrt(),
            Theta::Centers(c) => c.iter().flatten().map(|x| x * x).sum::<f64>().sqrt(),
        }
    }
}

/// Points split into model inputs and (optionally) labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: Points,
    /// `true` for the positive class.
    pub y: Option<Vec<bool>>,
}

impl Dataset {
    pub fn unlabeled(x: Points) -> Self {
        Self { x, y: None }
    }

    /// Moves coordinate `label` of every point into the label vector.
    pub fn with_label_column(points: &Points, label: usize) -> Result<Self> {
        if label >= points.dim() {
            return Err(Error::contract(format!(
                "label column {label} outside dimension {}",
                points.dim()
            )));
        }
        let keep: Vec<usize> = (0..points.dim()).filter(|&c| c != label).collect();
        Ok(Self {
            x: points.select_columns(&keep),
            y: Some(points.iter().map(|p| p[label] > 0.0).collect()),
        })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

/// Constants `(α, β, z)` with `|f(θ,p) − f(θ,q)| ≤ α‖p−q‖^z + β|f(θ,q)|`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Continuity {
    pub alpha: f64,
    pub beta: f64,
    pub z: f64,
}

#[inline]
fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

#[inline]
pub(crate) fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn affine(w: &[f64], b: f64, x: &[f64]) -> f64 {
    w.iter().zip(x).map(|(a, c)| a * c).sum::<f64>() + b
}

impl LossModel {
    pub fn needs_labels(&self) -> bool {
        !matches!(self, LossModel::KMeans { .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            LossModel::KMeans { .. } => "kmeans",
            LossModel::Logistic { .. } => "logistic",
            LossModel::Svm { .. } => "svm",
        }
    }

    pub fn continuity(&self, theta: &Theta) -> Continuity {
        match *self {
            LossModel::KMeans { eps, .. } => Continuity {
                alpha: 1.0 + 1.0 / eps,
                beta: eps,
                z: 2.0,
            },
            LossModel::Logistic { .. } | LossModel::Svm { .. } => Continuity {
                alpha: theta.norm(),
                beta: 0.0,
                z: 1.0,
            },
        }
    }

    /// `β` for the weight constants; does not depend on `θ`.
    pub fn beta(&self) -> f64 {
        match *self {
            LossModel::KMeans { eps, .. } => eps,
            _ => 0.0,
        }
    }

    fn check(&self, theta: &Theta, x: &[f64], y: Option<bool>) -> Result<()> {
        match (self, theta) {
            (LossModel::KMeans { .. }, Theta::Centers(c)) => {
                if c.is_empty() || c.iter().any(|c| c.len() != x.len()) {
                    return Err(Error::contract("k-means centers do not match point dimension"));
                }
            }
            (LossModel::KMeans { .. }, _) => {
                return Err(Error::contract("k-means needs centers"));
            }
            (_, Theta::Linear { w, .. }) => {
                if w.len() != x.len() {
                    return Err(Error::contract("weight vector does not match point dimension"));
                }
                if y.is_none() {
                    return Err(Error::contract("this loss needs a label"));
                }
            }
            (_, Theta::Centers(_)) => {
                return Err(Error::contract("linear model needs a weight vector"));
            }
        }
        Ok(())
    }

    /// Per-point loss `f(θ, p)`. The SVM regularizer is not included.
    pub fn loss(&self, theta: &Theta, x: &[f64], y: Option<bool>) -> Result<f64> {
        self.check(theta, x, y)?;
        Ok(self.loss_unchecked(theta, x, y))
    }

    #[inline]
    fn loss_unchecked(&self, theta: &Theta, x: &[f64], y: Option<bool>) -> f64 {
        match (self, theta) {
            (LossModel::KMeans { .. }, Theta::Centers(c)) => {
                c.iter().map(|c| dist2(x, c)).fold(f64::INFINITY, f64::min)
            }
            (LossModel::Logistic { .. }, Theta::Linear { w, b }) => {
                let t = affine(w, *b, x);
                let y = if y.unwrap_or(false) { 1.0 } else { 0.0 };
                softplus(t) - y * t
            }
            (LossModel::Svm { .. }, Theta::Linear { w, b }) => {
                let t = affine(w, *b, x);
                let y = if y.unwrap_or(false) { 1.0 } else { -1.0 };
                (1.0 - y * t).max(0.0)
            }
            _ => unreachable!("checked by LossModel::check"),
        }
    }

    /// Penalty that depends on `θ` only.
    pub fn regularizer(&self, theta: &Theta) -> f64 {
        match (self, theta) {
            (LossModel::Logistic { l2 }, Theta::Linear { w, .. }) => {
                0.5 * l2 * w.iter().map(|x| x * x).sum::<f64>()
            }
            (LossModel::Svm { .. }, Theta::Linear { w, .. }) => {
                0.5 * w.iter().map(|x| x * x).sum::<f64>()
            }
            _ => 0.0,
        }
    }

    /// Weight of the mean loss inside the training objective.
    pub fn loss_scale(&self) -> f64 {
        match *self {
            LossModel::Svm { lambda_reg } => lambda_reg,
            _ => 1.0,
        }
    }

    /// `(1/Σw) Σ w_i f(θ, p_i)`; uniform weights when `weights` is `None`.
    pub fn weighted_risk(&self, theta: &Theta, data: &Dataset, weights: Option<&[f64]>) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::contract("risk over an empty data set"));
        }
        if self.needs_labels() && data.y.is_none() {
            return Err(Error::contract("this loss needs labels"));
        }
        if let Some(w) = weights {
            if w.len() != data.len() {
                return Err(Error::contract("one weight per point required"));
            }
            if w.iter().any(|&v| !(v >= 0.0)) {
                return Err(Error::contract("weights must be nonnegative"));
            }
        }
        self.check(theta, data.x.row(0), data.y.as_ref().map(|y| y[0]))?;
        let mut num = Kahan::default();
        let mut den = Kahan::default();
        for i in 0..data.len() {
            let w = weights.map_or(1.0, |w| w[i]);
            if w == 0.0 {
                continue;
            }
            let f = self.loss_unchecked(theta, data.x.row(i), data.y.as_ref().map(|y| y[i]));
            num.add(w * f);
            den.add(w);
        }
        if den.sum() <= 0.0 {
            return Err(Error::contract("all weights are zero"));
        }
        Ok(num.sum() / den.sum())
    }

    /// Training objective: scaled weighted risk plus regularizer.
    pub fn weighted_objective(&self, theta: &Theta, data: &Dataset, weights: Option<&[f64]>) -> Result<f64> {
        Ok(self.loss_scale() * self.weighted_risk(theta, data, weights)? + self.regularizer(theta))
    }

    /// Largest `|f(θ,p) − f(θ,q)| − (α‖p−q‖^z + β|f(θ,q)|)` over the pairs.
    /// Points are full inputs; labels travel alongside.
    pub fn continuity_violation(
        &self,
        theta: &Theta,
        pairs: &[(&[f64], &[f64])],
        label: Option<bool>,
    ) -> Result<f64> {
        let c = self.continuity(theta);
        let mut worst = f64::NEG_INFINITY;
        for &(p, q) in pairs {
            let fp = self.loss(theta, p, label)?;
            let fq = self.loss(theta, q, label)?;
            let bound = c.alpha * dist2(p, q).sqrt().powf(c.z) + c.beta * fq.abs();
            worst = worst.max((fp - fq).abs() - bound);
        }
        Ok(worst)
    }
}

/// Compensated summation.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct Kahan {
    sum: f64,
    comp: f64,
}

impl Kahan {
    #[inline]
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn sum(&self) -> f64 {
        self.sum + self.comp
    }
}
