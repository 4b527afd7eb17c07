//! Teacher network maintained as an exponential moving average of the
//! student, and the input perturbations fed to both.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::backbone::{Network, ParameterVector, PredictionPyramid};
use crate::error::{Error, Result};
use crate::rng::keyed_rng;
use crate::tensor::{FeatureMap, Real};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    None,
    Gaussian,
}

impl NoiseKind {
    pub fn name(self) -> &'static str {
        match self {
            NoiseKind::None => "none",
            NoiseKind::Gaussian => "gaussian",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "none" => Some(NoiseKind::None),
            "gaussian" => Some(NoiseKind::Gaussian),
            _ => None,
        }
    }
}

/// Input perturbation: `x + clamp(sigma * n, -clip, clip)` with `n`
/// standard normal, drawn from the stream `(seed, stream)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub kind: NoiseKind,
    pub sigma: f64,
    pub clip: f64,
    pub seed: u64,
    pub stream: u64,
}

impl PerturbationSpec {
    pub fn identity() -> Self {
        PerturbationSpec {
            kind: NoiseKind::None,
            sigma: 0.0,
            clip: 1.0,
            seed: 0,
            stream: 0,
        }
    }

    pub fn gaussian(sigma: f64, clip: f64, seed: u64, stream: u64) -> Self {
        PerturbationSpec {
            kind: NoiseKind::Gaussian,
            sigma,
            clip,
            seed,
            stream,
        }
    }

    pub fn with_stream(self, stream: u64) -> Self {
        PerturbationSpec { stream, ..self }
    }

    pub fn is_identity(&self) -> bool {
        self.kind == NoiseKind::None || self.sigma == 0.0
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0) {
            return Err(Error::Config(format!("noise sigma must be >= 0, got {}", self.sigma)));
        }
        if self.kind == NoiseKind::Gaussian && !(self.clip > 0.0) {
            return Err(Error::Config(format!("noise clip must be > 0, got {}", self.clip)));
        }
        Ok(())
    }
}

/// Applies `spec` to one item. Item `i` of a batch should use
/// [`perturb_batch`], which gives every item its own sub-stream.
pub fn perturb<T: Real>(x: &FeatureMap<T>, spec: &PerturbationSpec) -> FeatureMap<T> {
    if spec.is_identity() {
        return x.clone();
    }
    let mut rng = keyed_rng(spec.seed, &[spec.stream]);
    let mut out = x.clone();
    for v in out.data_mut() {
        let n: f64 = StandardNormal.sample(&mut rng);
        let noise = (spec.sigma * n).clamp(-spec.clip, spec.clip);
        *v = *v + T::of(noise);
    }
    out
}

pub fn perturb_batch<T: Real>(batch: &[FeatureMap<T>], spec: &PerturbationSpec) -> Vec<FeatureMap<T>> {
    batch
        .iter()
        .enumerate()
        .map(|(i, x)| perturb(x, &spec.with_stream(crate::rng::derive_seed(spec.stream, &[i as u64]))))
        .collect()
}

/// Teacher parameters, EMA rate and update counter.
#[derive(Clone, Debug)]
pub struct TeacherState<T> {
    network: Option<Network<T>>,
    eta: f64,
    /// When set, the effective rate is `min(1 - 1/(step + 1), eta)`.
    pub warmup: bool,
    step: usize,
}

impl<T: Real> TeacherState<T> {
    /// A teacher with no parameters yet.
    pub fn uninitialized(eta: f64) -> Self {
        TeacherState {
            network: None,
            eta,
            warmup: false,
            step: 0,
        }
    }

    /// Teacher initialized as an exact copy of the student.
    pub fn from_student(student: &Network<T>, eta: f64) -> Self {
        TeacherState {
            network: Some(student.clone()),
            eta,
            warmup: false,
            step: 0,
        }
    }

    /// Restores a teacher from saved parameters.
    pub fn restore(network: Network<T>, eta: f64, step: usize) -> Self {
        TeacherState {
            network: Some(network),
            eta,
            warmup: false,
            step,
        }
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn network(&self) -> Result<&Network<T>> {
        self.network
            .as_ref()
            .ok_or_else(|| Error::State("teacher has not been initialized".into()))
    }

    pub fn params(&self) -> Result<&ParameterVector<T>> {
        self.network().map(Network::params)
    }

    fn effective_rate(&self) -> f64 {
        if self.warmup {
            (1.0 - 1.0 / (self.step as f64 + 1.0)).min(self.eta)
        } else {
            self.eta
        }
    }

    /// `teacher <- eta * teacher + (1 - eta) * student`, then `step += 1`.
    pub fn ema_update(&mut self, student: &ParameterVector<T>) -> Result<()> {
        let eta = self.effective_rate();
        let net = self
            .network
            .as_mut()
            .ok_or_else(|| Error::State("teacher has not been initialized".into()))?;
        net.params().ensure_same_structure(student)?;
        let keep = T::of(eta);
        let take = T::of(1.0 - eta);
        for (t, s) in net.params_mut().tensors_mut().iter_mut().zip(student.tensors()) {
            for (tv, &sv) in t.data.iter_mut().zip(&s.data) {
                *tv = keep * *tv + take * sv;
            }
        }
        self.step += 1;
        Ok(())
    }

    /// Teacher forward pass on a perturbed copy of `batch`. No tape is kept,
    /// so nothing can propagate gradient into the teacher.
    pub fn predict(
        &self,
        batch: &[FeatureMap<T>],
        perturbation: &PerturbationSpec,
    ) -> Result<Vec<PredictionPyramid<T>>> {
        let net = self.network()?;
        let inputs = perturb_batch(batch, perturbation);
        use rayon::prelude::*;
        inputs.par_iter().map(|x| net.predict(x)).collect()
    }
}
