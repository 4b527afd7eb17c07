//! Differentiable building blocks of the backbone. Every forward function
//! has a matching backward (adjoint) function; none of them allocate
//! gradient state of their own.

pub mod activation;
pub mod conv;
pub mod norm;
pub mod resample;

pub use activation::Activation;
pub use conv::{ConvGrads, DownConv, PointwiseConv, SameConv, UpConv};
pub use norm::GroupNorm;
pub use resample::{upsample_trilinear, upsample_trilinear_adjoint};

use crate::tensor::{FeatureMap, Real};

/// Per-voxel softmax over channels.
pub fn softmax<T: Real>(logits: &FeatureMap<T>) -> FeatureMap<T> {
    let c = logits.channels();
    let mut out = logits.clone();
    for row in out.data_mut().chunks_exact_mut(c) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum = sum + *v;
        }
        for v in row.iter_mut() {
            *v = *v / sum;
        }
    }
    out
}

/// Gradient through softmax given its output `p` and upstream `dp`.
pub fn softmax_backward<T: Real>(p: &FeatureMap<T>, dp: &FeatureMap<T>) -> FeatureMap<T> {
    let c = p.channels();
    let mut dz = FeatureMap::zeros(p.dims(), c);
    for ((out, pr), gr) in dz
        .data_mut()
        .chunks_exact_mut(c)
        .zip(p.data().chunks_exact(c))
        .zip(dp.data().chunks_exact(c))
    {
        let dot: T = pr.iter().zip(gr).map(|(&a, &b)| a * b).sum();
        for k in 0..c {
            out[k] = pr[k] * (gr[k] - dot);
        }
    }
    dz
}
