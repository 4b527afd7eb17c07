//! Objective terms: soft dice, cross-entropy, the hierarchical supervised
//! loss, the hierarchical consistency loss, the Gaussian ramp-up weight and
//! the combined objective.
//!
//! Every loss has a `*_with_grad` form returning the gradient with respect
//! to the probability maps it consumes; the trainer feeds those gradients
//! straight into [`Network::backward`](crate::backbone::Network::backward).
//!
//! Conventions:
//! * dice uses the squared denominator `sum p^2 + sum g^2` and smoothing
//!   [`DICE_EPS`] on numerator and denominator, on the foreground channel
//!   (class 1);
//! * cross-entropy averages `-ln p_target` over voxels with probabilities
//!   clamped to [`CE_FLOOR`];
//! * consistency is the mean squared difference of probabilities over
//!   voxels and classes.

use serde::{Deserialize, Serialize};

use crate::backbone::PredictionPyramid;
use crate::error::{Error, Result};
use crate::tensor::{FeatureMap, Real};

pub const DICE_EPS: f64 = 1e-5;
pub const CE_FLOOR: f64 = 1e-12;
/// Index of the foreground class.
pub const FOREGROUND: usize = 1;

/// Per-scale weights, index-aligned with [`PredictionPyramid`] scales.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleWeights(Vec<f64>);

impl ScaleWeights {
    pub fn new(alphas: Vec<f64>) -> Result<Self> {
        if alphas.is_empty() {
            return Err(Error::Config("scale weights must not be empty".into()));
        }
        if alphas.iter().any(|a| !a.is_finite() || *a < 0.0) {
            return Err(Error::Config(format!("scale weights must be finite and >= 0: {alphas:?}")));
        }
        if !alphas.iter().any(|a| *a > 0.0) {
            return Err(Error::Config("at least one scale weight must be positive".into()));
        }
        Ok(ScaleWeights(alphas))
    }

    /// `{1, 0, ..., 0}`: only the final output counts.
    pub fn final_only(scales: usize) -> Self {
        let mut a = vec![0.0; scales.max(1)];
        a[0] = 1.0;
        ScaleWeights(a)
    }

    pub fn alphas(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Gaussian ramp-up `lambda(t) = lambda_max * exp(-5 (1 - t / t_max)^2)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RampSchedule {
    pub lambda_max: f64,
    pub t_max: usize,
}

impl RampSchedule {
    /// Steps beyond `t_max` are clamped to `lambda_max`.
    pub fn weight(&self, t: usize) -> f64 {
        rampup_weight(self.lambda_max, t, self.t_max)
    }
}

pub fn rampup_weight(lambda_max: f64, t: usize, t_max: usize) -> f64 {
    if t_max == 0 || t >= t_max {
        return lambda_max;
    }
    let phase = 1.0 - t as f64 / t_max as f64;
    lambda_max * (-5.0 * phase * phase).exp()
}

/// `sup + lambda(t) * unsup`.
pub fn total_objective(sup: f64, unsup: f64, schedule: &RampSchedule, t: usize) -> Result<f64> {
    if !sup.is_finite() || !unsup.is_finite() {
        return Err(Error::Numeric(format!("non-finite objective terms sup={sup} unsup={unsup}")));
    }
    Ok(sup + schedule.weight(t) * unsup)
}

fn check_finite<T: Real>(values: &[T], what: &str) -> Result<()> {
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::Numeric(format!("NaN in {what}")));
    }
    Ok(())
}

/// Soft dice loss of foreground probabilities against a binary mask, with
/// its gradient with respect to the probabilities.
pub fn dice_loss_with_grad<T: Real>(pred: &[T], target: &[u8]) -> Result<(f64, Vec<f64>)> {
    if pred.len() != target.len() {
        return Err(Error::Shape(format!(
            "dice: {} predictions for {} labels",
            pred.len(),
            target.len()
        )));
    }
    check_finite(pred, "dice prediction")?;
    let (mut inter, mut pp, mut gg) = (0.0, 0.0, 0.0);
    for (&p, &g) in pred.iter().zip(target) {
        let (p, g) = (p.to_f64_lossy(), (g != 0) as u8 as f64);
        inter += p * g;
        pp += p * p;
        gg += g * g;
    }
    let num = 2.0 * inter + DICE_EPS;
    let den = pp + gg + DICE_EPS;
    let loss = 1.0 - num / den;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(&p, &g)| {
            let (p, g) = (p.to_f64_lossy(), (g != 0) as u8 as f64);
            -(2.0 * g * den - num * 2.0 * p) / (den * den)
        })
        .collect();
    Ok((loss, grad))
}

pub fn dice_loss<T: Real>(pred: &[T], target: &[u8]) -> Result<f64> {
    dice_loss_with_grad(pred, target).map(|(l, _)| l)
}

/// Mean `-ln p_target` over voxels, with the gradient with respect to every
/// class probability.
pub fn cross_entropy_with_grad<T: Real>(
    probs: &FeatureMap<T>,
    target: &[u8],
) -> Result<(f64, FeatureMap<T>)> {
    let k = probs.channels();
    let n = probs.voxels();
    if n != target.len() {
        return Err(Error::Shape(format!(
            "cross-entropy: {n} voxels for {} labels",
            target.len()
        )));
    }
    check_finite(probs.data(), "cross-entropy prediction")?;
    let mut grad = FeatureMap::zeros(probs.dims(), k);
    let mut total = 0.0;
    let inv_n = 1.0 / n as f64;
    for (v, &t) in target.iter().enumerate() {
        let t = t as usize;
        if t >= k {
            return Err(Error::Index(format!("target class {t} out of range for {k} classes")));
        }
        let p = probs.data()[v * k + t].to_f64_lossy();
        if p > CE_FLOOR {
            total -= p.ln();
            grad.data_mut()[v * k + t] = T::of(-inv_n / p);
        } else {
            total -= CE_FLOOR.ln();
        }
    }
    Ok((total * inv_n, grad))
}

pub fn cross_entropy_loss<T: Real>(probs: &FeatureMap<T>, target: &[u8]) -> Result<f64> {
    cross_entropy_with_grad(probs, target).map(|(l, _)| l)
}

fn foreground<T: Real>(map: &FeatureMap<T>) -> Vec<T> {
    map.data()
        .chunks_exact(map.channels())
        .map(|row| row[FOREGROUND])
        .collect()
}

/// `(dice + ce) / 2` of one map, with gradient.
pub fn segmentation_term_with_grad<T: Real>(
    map: &FeatureMap<T>,
    target: &[u8],
) -> Result<(f64, FeatureMap<T>)> {
    let (dice, d_dice) = dice_loss_with_grad(&foreground(map), target)?;
    let (ce, mut grad) = cross_entropy_with_grad(map, target)?;
    let k = map.channels();
    for (row, dd) in grad.data_mut().chunks_exact_mut(k).zip(&d_dice) {
        row[FOREGROUND] = row[FOREGROUND] + T::of(*dd);
    }
    for v in grad.data_mut() {
        *v = *v * T::of(0.5);
    }
    Ok(((dice + ce) / 2.0, grad))
}

fn check_scales<T: Real>(pyr: &PredictionPyramid<T>, weights: &ScaleWeights) -> Result<()> {
    if pyr.scales() != weights.len() {
        return Err(Error::Config(format!(
            "pyramid has {} scales but {} weights were given",
            pyr.scales(),
            weights.len()
        )));
    }
    Ok(())
}

/// Hierarchical supervised loss of one labeled item,
/// `sum_s alpha_s (dice_s + ce_s) / 2`, with per-scale gradients.
/// Scales with zero weight are skipped entirely.
pub fn supervised_with_grad<T: Real>(
    pyr: &PredictionPyramid<T>,
    target: &[u8],
    weights: &ScaleWeights,
) -> Result<(f64, Vec<FeatureMap<T>>)> {
    check_scales(pyr, weights)?;
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(pyr.scales());
    for (map, &alpha) in pyr.maps().iter().zip(weights.alphas()) {
        if alpha == 0.0 {
            grads.push(FeatureMap::zeros(map.dims(), map.channels()));
            continue;
        }
        let (term, mut g) = segmentation_term_with_grad(map, target)?;
        total += alpha * term;
        let a = T::of(alpha);
        for v in g.data_mut() {
            *v = *v * a;
        }
        grads.push(g);
    }
    Ok((total, grads))
}

/// Hierarchical supervised loss averaged over labeled items.
pub fn hierarchical_supervised_loss<T: Real>(
    pyramids: &[PredictionPyramid<T>],
    targets: &[&[u8]],
    weights: &ScaleWeights,
) -> Result<f64> {
    if pyramids.len() != targets.len() || pyramids.is_empty() {
        return Err(Error::Shape(format!(
            "{} pyramids for {} targets",
            pyramids.len(),
            targets.len()
        )));
    }
    let mut sum = 0.0;
    for (p, t) in pyramids.iter().zip(targets) {
        sum += supervised_with_grad(p, t, weights)?.0;
    }
    Ok(sum / pyramids.len() as f64)
}

/// Hierarchical consistency loss of one item,
/// `sum_s alpha_s mean((teacher_s - student_s)^2)`, with the gradient with
/// respect to the student maps only; the teacher is a constant target.
pub fn consistency_with_grad<T: Real>(
    student: &PredictionPyramid<T>,
    teacher: &PredictionPyramid<T>,
    weights: &ScaleWeights,
) -> Result<(f64, Vec<FeatureMap<T>>)> {
    check_scales(student, weights)?;
    if !student.same_shape(teacher) {
        return Err(Error::Shape("student and teacher pyramids differ in shape".into()));
    }
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(student.scales());
    for ((s, t), &alpha) in student.maps().iter().zip(teacher.maps()).zip(weights.alphas()) {
        check_finite(s.data(), "student prediction")?;
        check_finite(t.data(), "teacher prediction")?;
        let count = s.data().len() as f64;
        let mut g = FeatureMap::zeros(s.dims(), s.channels());
        if alpha != 0.0 {
            let mut sq = 0.0;
            let scale = 2.0 * alpha / count;
            for ((gv, &sv), &tv) in g.data_mut().iter_mut().zip(s.data()).zip(t.data()) {
                let d = sv.to_f64_lossy() - tv.to_f64_lossy();
                sq += d * d;
                *gv = T::of(scale * d);
            }
            total += alpha * sq / count;
        }
        grads.push(g);
    }
    Ok((total, grads))
}

/// Hierarchical consistency loss averaged over items.
pub fn hierarchical_consistency_loss<T: Real>(
    student: &[PredictionPyramid<T>],
    teacher: &[PredictionPyramid<T>],
    weights: &ScaleWeights,
) -> Result<f64> {
    if student.len() != teacher.len() || student.is_empty() {
        return Err(Error::Shape(format!(
            "{} student pyramids for {} teacher pyramids",
            student.len(),
            teacher.len()
        )));
    }
    let mut sum = 0.0;
    for (s, t) in student.iter().zip(teacher) {
        sum += consistency_with_grad(s, t, weights)?.0;
    }
    Ok(sum / student.len() as f64)
}
