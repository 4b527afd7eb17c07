//! Multi-scale deeply supervised 3D encoder-decoder.
//!
//! A V-Net style network: residual convolution stages, 2x2x2 strided
//! down/up convolutions, additive skip connections, and one auxiliary head
//! (1x1x1 conv, trilinear upsampling to input resolution, softmax) on each
//! of the first `num_scales` decoder levels.

mod network;
mod params;
mod pyramid;
mod spec;

pub use network::{ForwardPass, Network, Tape};
pub use params::{ParamTensor, ParameterVector};
pub use pyramid::PredictionPyramid;
pub use spec::{NetworkSpec, Normalization};

use rayon::prelude::*;

use crate::error::Result;
use crate::mean_teacher::{perturb_batch, PerturbationSpec};
use crate::tensor::{FeatureMap, Real};

/// Builds a network from `spec` with parameters drawn from `seed`.
pub fn build_network<T: Real>(spec: &NetworkSpec, seed: u64) -> Result<Network<T>> {
    Network::build(spec, seed)
}

/// Perturbs every item of `batch` and returns one prediction pyramid each.
pub fn forward_multiscale<T: Real>(
    network: &Network<T>,
    batch: &[FeatureMap<T>],
    perturbation: &PerturbationSpec,
) -> Result<Vec<PredictionPyramid<T>>> {
    let inputs = perturb_batch(batch, perturbation);
    inputs.par_iter().map(|x| network.predict(x)).collect()
}
