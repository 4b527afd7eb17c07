use serde::{Deserialize, Serialize};

use super::batch::Batch;
use super::config::TrainConfig;
use crate::backbone::{Network, ParameterVector};
use crate::error::{Error, Result};
use crate::losses::{consistency_with_grad, supervised_with_grad};
use crate::mean_teacher::{perturb_batch, PerturbationSpec, TeacherState};
use crate::rng::purpose;
use crate::tensor::{FeatureMap, Real};

/// `initial_lr * decay_factor ^ floor(t / decay_every)`.
pub fn learning_rate(t: usize, config: &TrainConfig) -> f64 {
    config.initial_lr * config.lr_decay_factor.powi((t / config.lr_decay_every) as i32)
}

/// SGD with momentum and L2 weight decay:
/// `g += wd * theta; v = mu * v + g; theta -= lr * v`.
#[derive(Clone, Debug, PartialEq)]
pub struct Sgd<T> {
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: ParameterVector<T>,
}

impl<T: Real> Sgd<T> {
    pub fn new(params: &ParameterVector<T>, momentum: f64, weight_decay: f64) -> Self {
        Sgd {
            momentum,
            weight_decay,
            velocity: params.zeros_like(),
        }
    }

    pub fn with_velocity(velocity: ParameterVector<T>, momentum: f64, weight_decay: f64) -> Self {
        Sgd {
            momentum,
            weight_decay,
            velocity,
        }
    }

    pub fn velocity(&self) -> &ParameterVector<T> {
        &self.velocity
    }

    pub fn step(&mut self, params: &mut ParameterVector<T>, grads: &ParameterVector<T>, lr: f64) -> Result<()> {
        params.ensure_same_structure(grads)?;
        params.ensure_same_structure(&self.velocity)?;
        let (mu, wd, lr) = (T::of(self.momentum), T::of(self.weight_decay), T::of(lr));
        for ((p, g), v) in params
            .tensors_mut()
            .iter_mut()
            .zip(grads.tensors())
            .zip(self.velocity.tensors_mut())
        {
            for ((pv, &gv), vv) in p.data.iter_mut().zip(&g.data).zip(v.data.iter_mut()) {
                let d = gv + wd * *pv;
                *vv = mu * *vv + d;
                *pv = *pv - lr * *vv;
            }
        }
        Ok(())
    }
}

/// Losses and bookkeeping of one iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub lr: f64,
    pub lambda: f64,
    pub l_sup: f64,
    pub l_unsup: f64,
    pub total: f64,
    pub labeled_ids: Vec<String>,
    pub unlabeled_ids: Vec<String>,
}

/// Noise specs for iteration `t`, independent for student and teacher.
pub fn perturbations(config: &TrainConfig, t: usize) -> (PerturbationSpec, PerturbationSpec) {
    let base = PerturbationSpec {
        kind: config.noise,
        sigma: config.noise_sigma,
        clip: config.noise_clip,
        seed: config.seed,
        stream: 0,
    };
    (
        base.with_stream(crate::rng::derive_seed(purpose::STUDENT_NOISE, &[t as u64])),
        base.with_stream(crate::rng::derive_seed(purpose::TEACHER_NOISE, &[t as u64])),
    )
}

/// Objective value and student gradient on `batch` without updating
/// anything. The teacher, if given, only supplies targets.
pub fn objective_and_gradient<T: Real>(
    student: &Network<T>,
    teacher: Option<&TeacherState<T>>,
    batch: &Batch,
    t: usize,
    config: &TrainConfig,
) -> Result<(StepRecord, ParameterVector<T>)> {
    if batch.labeled.is_empty() {
        return Err(Error::Data("batch has no labeled items".into()));
    }
    let sup_w = config.supervised_weights()?;
    let cons_w = config.consistency_weights()?;
    let lambda = config.ramp().weight(t);
    let inputs: Vec<FeatureMap<T>> = batch.items().map(|i| i.input.cast::<T>()).collect();
    let (student_noise, teacher_noise) = perturbations(config, t);

    // Noise enters only through the consistency branch's perturbation pair.
    let student_inputs = if cons_w.is_some() {
        perturb_batch(&inputs, &student_noise)
    } else {
        inputs.clone()
    };
    let passes = student.forward_batch(&student_inputs)?;
    // Losses reject non-finite predictions; report those as divergence.
    let diverged = |e: Error| match e {
        Error::Numeric(detail) => Error::NonFinite { iteration: t, detail },
        other => other,
    };

    let nl = batch.labeled.len();
    let n = passes.len();
    let mut d_maps: Vec<Vec<FeatureMap<T>>> = passes
        .iter()
        .map(|p| p.pyramid.maps().iter().map(|m| FeatureMap::zeros(m.dims(), m.channels())).collect())
        .collect();

    let mut l_sup = 0.0;
    for (i, item) in batch.labeled.iter().enumerate() {
        let label = item.label.as_ref().ok_or_else(|| Error::Data(format!("labeled item {} has no label", item.id)))?;
        let (loss, grads) = supervised_with_grad(&passes[i].pyramid, label, &sup_w).map_err(diverged)?;
        l_sup += loss / nl as f64;
        let scale = T::of(1.0 / nl as f64);
        for (dst, g) in d_maps[i].iter_mut().zip(grads) {
            for (a, b) in dst.data_mut().iter_mut().zip(g.data()) {
                *a = *a + *b * scale;
            }
        }
    }

    let mut l_unsup = 0.0;
    let total = match (&cons_w, teacher) {
        (Some(w), Some(teacher)) => {
            let targets = teacher.predict(&inputs, &teacher_noise).map_err(diverged)?;
            let scale = T::of(lambda / n as f64);
            for (i, target) in targets.iter().enumerate() {
                let (loss, grads) = consistency_with_grad(&passes[i].pyramid, target, w).map_err(diverged)?;
                l_unsup += loss / n as f64;
                for (dst, g) in d_maps[i].iter_mut().zip(grads) {
                    for (a, b) in dst.data_mut().iter_mut().zip(g.data()) {
                        *a = *a + *b * scale;
                    }
                }
            }
            l_sup + lambda * l_unsup
        }
        (Some(_), None) => return Err(Error::State("consistency requested without a teacher".into())),
        (None, _) => l_sup,
    };

    let ids = |items: &[super::batch::BatchItem]| items.iter().map(|i| i.id.clone()).collect();
    let record = StepRecord {
        t,
        lr: learning_rate(t, config),
        lambda,
        l_sup,
        l_unsup,
        total,
        labeled_ids: ids(&batch.labeled),
        unlabeled_ids: ids(&batch.unlabeled),
    };
    if !(l_sup.is_finite() && l_unsup.is_finite() && total.is_finite()) {
        return Err(Error::NonFinite {
            iteration: t,
            detail: serde_json::to_string(&record).unwrap_or_default(),
        });
    }

    let mut grads = student.params().zeros_like();
    for (pass, d) in passes.iter().zip(&d_maps) {
        student.backward(&pass.tape, d, &mut grads)?;
    }
    if !grads.is_finite() {
        return Err(Error::NonFinite {
            iteration: t,
            detail: format!("non-finite gradient; {}", serde_json::to_string(&record).unwrap_or_default()),
        });
    }
    Ok((record, grads))
}

/// One iteration: losses, backward, SGD on the student, EMA on the teacher.
pub fn train_step<T: Real>(
    student: &mut Network<T>,
    teacher: Option<&mut TeacherState<T>>,
    optimizer: &mut Sgd<T>,
    batch: &Batch,
    t: usize,
    config: &TrainConfig,
) -> Result<StepRecord> {
    let (record, grads) = objective_and_gradient(student, teacher.as_deref(), batch, t, config)?;
    match teacher {
        Some(teacher) if config.flags.use_teacher => {
            if !config.ema_after_step {
                teacher.ema_update(student.params())?;
            }
            optimizer.step(student.params_mut(), &grads, record.lr)?;
            if config.ema_after_step {
                teacher.ema_update(student.params())?;
            }
        }
        _ => optimizer.step(student.params_mut(), &grads, record.lr)?,
    }
    if !student.params().is_finite() {
        return Err(Error::NonFinite {
            iteration: t,
            detail: "student parameters became non-finite after the update".into(),
        });
    }
    Ok(record)
}
