//! Bradley-Terry preference math over dot-product similarities.
//!
//! Given a query embedding `x` and a preference `y_w ≻ y_l`, the model
//! scores each item by `s = τ·xᵀy` and assigns
//! `P(y_w ≻ y_l) = σ(τ·(xᵀy_w − xᵀy_l))`. The negative log-likelihood is
//! linear in `x` inside the logistic, so its gradient has the closed form
//! `(p − 1)·τ·(y_w − y_l)`, and adaptation is plain gradient descent on `x`
//! with the item embeddings held fixed.
//!
//! All functions here are pure.

use serde::{Deserialize, Serialize};

use crate::embedding::{check_dims, dot, l2_norm, normalize, Embedding};
use crate::error::{Error, Result};

/// Largest `f64` strictly below 1.
const P_MAX: f64 = 1.0 - f64::EPSILON / 2.0;
const P_MIN: f64 = f64::MIN_POSITIVE;

/// Optimizer settings for preference adaptation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptConfig {
    /// Learning rate. Zero is accepted and turns every update into the identity.
    pub epsilon: f64,
    /// Gradient steps per adaptation call.
    pub steps: usize,
    /// Multiplier applied to similarities before the logistic. `1.0` uses raw dot products.
    pub temperature: f64,
    /// Project back onto the unit sphere after every step.
    pub renormalize: bool,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            steps: 1,
            temperature: 1.0,
            renormalize: true,
        }
    }
}

impl AdaptConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "epsilon must be finite and non-negative, got {}",
                self.epsilon
            )));
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "temperature must be finite and positive, got {}",
                self.temperature
            )));
        }
        if self.steps == 0 {
            return Err(Error::InvalidConfig("steps must be at least 1".into()));
        }
        Ok(())
    }

    pub fn with_steps(mut self, steps: usize) -> Self {
        self.steps = steps;
        self
    }
}

/// An observed preference: `winner ≻ loser`.
#[derive(Debug, Clone, Copy)]
pub struct PreferencePair<'a> {
    pub winner: &'a Embedding,
    pub loser: &'a Embedding,
}

impl<'a> PreferencePair<'a> {
    pub fn new(winner: &'a Embedding, loser: &'a Embedding) -> Result<Self> {
        check_dims(winner.dim(), loser.dim())?;
        Ok(Self { winner, loser })
    }

    pub fn dim(&self) -> usize {
        self.winner.dim()
    }
}

/// Probability, loss and gradient for one pair.
#[derive(Debug, Clone, PartialEq)]
pub struct BtOutcome {
    pub p1: f64,
    pub loss: f64,
    pub gradient: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub loss_before: f64,
    pub gradient_norm: f64,
    pub norm_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptTrace {
    pub steps: Vec<StepRecord>,
    pub adapted: Embedding,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Choice {
    First,
    Second,
}

/// `σ(t)` without overflow for any finite or infinite `t`.
#[inline]
fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)`, finite for every finite `z`.
#[inline]
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Dot-product similarity.
pub fn similarity(x: &Embedding, y: &Embedding) -> Result<f64> {
    x.dot(y)
}

/// `exp(τ·s1) / (exp(τ·s1) + exp(τ·s2))`, clamped strictly inside `(0, 1)`.
pub fn bt_probability(s1: f64, s2: f64, temperature: f64) -> Result<f64> {
    if !s1.is_finite() {
        return Err(Error::NonFinite { id: None, index: 0 });
    }
    if !s2.is_finite() {
        return Err(Error::NonFinite { id: None, index: 1 });
    }
    Ok(logistic(temperature * (s1 - s2)).clamp(P_MIN, P_MAX))
}

/// Per-pair margin `τ·(xᵀy_w − xᵀy_l)`.
#[inline]
fn scaled_margin(x: &[f64], pair: &PreferencePair<'_>, temperature: f64) -> f64 {
    temperature * (dot(x, pair.winner.as_slice()) - dot(x, pair.loser.as_slice()))
}

pub fn pair_outcome(x: &Embedding, pair: &PreferencePair<'_>, cfg: &AdaptConfig) -> Result<BtOutcome> {
    check_dims(x.dim(), pair.dim())?;
    let s1 = dot(x.as_slice(), pair.winner.as_slice());
    let s2 = dot(x.as_slice(), pair.loser.as_slice());
    let p1 = bt_probability(s1, s2, cfg.temperature)?;
    let t = cfg.temperature * (s1 - s2);
    let coef = -logistic(-t) * cfg.temperature;
    let gradient = pair
        .winner
        .as_slice()
        .iter()
        .zip(pair.loser.as_slice())
        .map(|(w, l)| coef * (w - l))
        .collect();
    Ok(BtOutcome {
        p1,
        loss: softplus(-t),
        gradient,
    })
}

fn check_batch(x_dim: usize, pairs: &[PreferencePair<'_>]) -> Result<()> {
    if pairs.is_empty() {
        return Err(Error::Empty("preference pair list"));
    }
    for p in pairs {
        check_dims(x_dim, p.winner.dim())?;
        check_dims(x_dim, p.loser.dim())?;
    }
    Ok(())
}

/// Mean loss over `pairs` at the raw point `x`. Dimensions must be checked by the caller.
fn mean_loss(x: &[f64], pairs: &[PreferencePair<'_>], temperature: f64) -> f64 {
    let total: f64 = pairs.iter().map(|p| softplus(-scaled_margin(x, p, temperature))).sum();
    total / pairs.len() as f64
}

/// Mean loss and its gradient in one pass.
fn loss_and_gradient(x: &[f64], pairs: &[PreferencePair<'_>], temperature: f64) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; x.len()];
    let mut loss = 0.0;
    for p in pairs {
        let t = scaled_margin(x, p, temperature);
        loss += softplus(-t);
        let coef = -logistic(-t) * temperature;
        for ((g, w), l) in grad.iter_mut().zip(p.winner.as_slice()).zip(p.loser.as_slice()) {
            *g += coef * (w - l);
        }
    }
    let n = pairs.len() as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    (loss / n, grad)
}

pub fn batch_loss(x: &Embedding, pairs: &[PreferencePair<'_>], cfg: &AdaptConfig) -> Result<f64> {
    check_batch(x.dim(), pairs)?;
    Ok(mean_loss(x.as_slice(), pairs, cfg.temperature))
}

pub fn batch_gradient(x: &Embedding, pairs: &[PreferencePair<'_>], cfg: &AdaptConfig) -> Result<Vec<f64>> {
    check_batch(x.dim(), pairs)?;
    Ok(loss_and_gradient(x.as_slice(), pairs, cfg.temperature).1)
}

/// Applies `x + scale·direction`, then the optional unit-sphere projection.
///
/// An exactly-zero update leaves `x` untouched when no projection is needed,
/// so zero learning rates and zero gradients are bitwise identities.
fn apply_update(x: &Embedding, direction: &[f64], scale: f64, renormalize: bool) -> Result<Embedding> {
    let zero_step = scale == 0.0 || direction.iter().all(|&g| g == 0.0);
    if zero_step && (!renormalize || x.is_unit()) {
        return Ok(x.clone());
    }
    let next: Vec<f64> = x
        .as_slice()
        .iter()
        .zip(direction)
        .map(|(xi, gi)| xi + scale * gi)
        .collect();
    if renormalize {
        normalize(&next).map_err(|e| match e {
            Error::ZeroNorm => Error::DegenerateStep,
            other => other,
        })
    } else {
        Embedding::new(next)
    }
}

/// One full-batch gradient-descent step: `x − ε·∇L(x)`.
pub fn adapt_step(x: &Embedding, pairs: &[PreferencePair<'_>], cfg: &AdaptConfig) -> Result<Embedding> {
    cfg.validate()?;
    let grad = batch_gradient(x, pairs, cfg)?;
    apply_update(x, &grad, -cfg.epsilon, cfg.renormalize)
}

/// Runs `cfg.steps` full-batch steps and records the trajectory.
pub fn adapt(x: &Embedding, pairs: &[PreferencePair<'_>], cfg: &AdaptConfig) -> Result<(Embedding, AdaptTrace)> {
    cfg.validate()?;
    check_batch(x.dim(), pairs)?;
    let mut current = x.clone();
    let mut steps = Vec::with_capacity(cfg.steps);
    for _ in 0..cfg.steps {
        let (loss_before, grad) = loss_and_gradient(current.as_slice(), pairs, cfg.temperature);
        current = apply_update(&current, &grad, -cfg.epsilon, cfg.renormalize)?;
        steps.push(StepRecord {
            loss_before,
            gradient_norm: l2_norm(&grad),
            norm_after: current.norm(),
        });
    }
    let trace = AdaptTrace {
        steps,
        adapted: current.clone(),
    };
    Ok((current, trace))
}

/// Baseline that only sees preferred items: `x + ε·mean(positives)`, repeated `cfg.steps` times.
pub fn positive_adapt(x: &Embedding, positives: &[&Embedding], cfg: &AdaptConfig) -> Result<Embedding> {
    cfg.validate()?;
    if positives.is_empty() {
        return Err(Error::Empty("positive example list"));
    }
    let mut mean = vec![0.0; x.dim()];
    for y in positives {
        check_dims(x.dim(), y.dim())?;
        mean.iter_mut().zip(y.as_slice()).for_each(|(m, v)| *m += v);
    }
    let n = positives.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);

    let mut current = x.clone();
    for _ in 0..cfg.steps {
        current = apply_update(&current, &mean, cfg.epsilon, cfg.renormalize)?;
    }
    Ok(current)
}

/// Which of two items the query prefers. Exact ties go to the first item.
///
/// The BT temperature is a positive scale on both scores, so it never
/// changes the outcome and is not an input here.
pub fn predict_preferred(x: &Embedding, y1: &Embedding, y2: &Embedding) -> Result<Choice> {
    let s1 = x.dot(y1)?;
    let s2 = x.dot(y2)?;
    Ok(if s1 >= s2 { Choice::First } else { Choice::Second })
}

/// Scores every candidate against `x`, best first; equal scores sort by ascending id.
pub fn rank_candidates<I: Ord + Clone>(x: &Embedding, candidates: &[(I, &Embedding)]) -> Result<Vec<(I, f64)>> {
    let mut scored = candidates
        .iter()
        .map(|(id, y)| Ok((id.clone(), x.dot(y)?)))
        .collect::<Result<Vec<_>>>()?;
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(scored)
}

/// Central-difference gradient of the unconstrained mean loss.
pub fn finite_diff_grad(x: &Embedding, pairs: &[PreferencePair<'_>], cfg: &AdaptConfig, h: f64) -> Result<Vec<f64>> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::InvalidConfig(format!("step h must be positive, got {h}")));
    }
    check_batch(x.dim(), pairs)?;
    let mut probe = x.as_slice().to_vec();
    let grad = (0..probe.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = mean_loss(&probe, pairs, cfg.temperature);
            probe[i] = orig - h;
            let down = mean_loss(&probe, pairs, cfg.temperature);
            probe[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect();
    Ok(grad)
}
