use ndarray::Array3;

use crate::backbone::Network;
use crate::data::{LabelMask, Volume};
use crate::error::{Error, Result};
use crate::tensor::{FeatureMap, Real};

/// Anything that maps a single-channel patch to per-voxel class
/// probabilities of the same spatial shape.
pub trait PatchPredictor {
    fn num_classes(&self) -> usize;
    fn predict_patch(&self, patch: &FeatureMap<f32>) -> Result<FeatureMap<f32>>;
}

impl<T: Real> PatchPredictor for Network<T> {
    fn num_classes(&self) -> usize {
        self.spec().num_classes
    }

    /// Final full-resolution output (scale 0).
    fn predict_patch(&self, patch: &FeatureMap<f32>) -> Result<FeatureMap<f32>> {
        let pyramid = self.predict(&patch.cast::<T>())?;
        Ok(pyramid.map(0).cast::<f32>())
    }
}

#[derive(Clone, Debug)]
pub struct SlidingWindowOutput {
    pub mask: LabelMask,
    /// Averaged class probabilities, channels-last.
    pub probabilities: FeatureMap<f32>,
    /// The volume was smaller than the patch on some axis and was
    /// reflection-padded.
    pub padded: bool,
}

/// Half the patch per axis, at least 1.
pub fn default_stride(patch: [usize; 3]) -> [usize; 3] {
    patch.map(|p| (p / 2).max(1))
}

fn window_starts(n: usize, patch: usize, stride: usize) -> Vec<usize> {
    if n <= patch {
        return vec![0];
    }
    let mut starts: Vec<usize> = (0..).map(|i| i * stride).take_while(|&s| s + patch < n).collect();
    starts.push(n - patch);
    starts.dedup();
    starts
}

/// Mirror index into `0..n` without repeating the edge sample.
fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    (if m < n as isize { m } else { period - m }) as usize
}

/// Tiles `volume` with overlapping patches, averages the predicted
/// probabilities where windows overlap and takes the per-voxel argmax.
pub fn sliding_window_predict<P: PatchPredictor + ?Sized>(
    predictor: &P,
    volume: &Volume,
    patch: [usize; 3],
    stride: [usize; 3],
) -> Result<SlidingWindowOutput> {
    for a in 0..3 {
        if patch[a] == 0 || stride[a] == 0 || stride[a] > patch[a] {
            return Err(Error::Config(format!(
                "sliding window needs 0 < stride <= patch per axis, got stride {stride:?} patch {patch:?}"
            )));
        }
    }
    let shape = volume.shape();
    let padded_shape: [usize; 3] = std::array::from_fn(|a| shape[a].max(patch[a]));
    let padded = padded_shape != shape;
    let off: [usize; 3] = std::array::from_fn(|a| (padded_shape[a] - shape[a]) / 2);
    let src = volume.data();
    let grid = if padded {
        Array3::from_shape_fn(padded_shape, |(i, j, k)| {
            let q = [i, j, k];
            let idx: [usize; 3] = std::array::from_fn(|a| reflect(q[a] as isize - off[a] as isize, shape[a]));
            src[idx]
        })
    } else {
        src.clone()
    };

    let classes = predictor.num_classes();
    let voxels = padded_shape.iter().product::<usize>();
    let mut sums = vec![0.0f64; voxels * classes];
    let mut counts = vec![0u32; voxels];
    let starts: Vec<Vec<usize>> = (0..3)
        .map(|a| window_starts(padded_shape[a], patch[a], stride[a]))
        .collect();
    let [_, n1, n2] = padded_shape;
    for &s0 in &starts[0] {
        for &s1 in &starts[1] {
            for &s2 in &starts[2] {
                let mut input = Vec::with_capacity(patch.iter().product());
                for i in 0..patch[0] {
                    for j in 0..patch[1] {
                        for k in 0..patch[2] {
                            input.push(grid[[s0 + i, s1 + j, s2 + k]]);
                        }
                    }
                }
                let probs = predictor.predict_patch(&FeatureMap::from_vec(patch, 1, input))?;
                if probs.dims() != patch || probs.channels() != classes {
                    return Err(Error::Shape(format!(
                        "predictor returned {:?}x{} for a {:?} patch",
                        probs.dims(),
                        probs.channels(),
                        patch
                    )));
                }
                let pd = probs.data();
                let mut p = 0;
                for i in 0..patch[0] {
                    for j in 0..patch[1] {
                        for k in 0..patch[2] {
                            let v = ((s0 + i) * n1 + s1 + j) * n2 + s2 + k;
                            counts[v] += 1;
                            for c in 0..classes {
                                sums[v * classes + c] += pd[p * classes + c] as f64;
                            }
                            p += 1;
                        }
                    }
                }
            }
        }
    }

    let mut probabilities = Vec::with_capacity(volume.len() * classes);
    let mut labels = Array3::<u8>::zeros(shape);
    for ((i, j, k), l) in labels.indexed_iter_mut() {
        let v = ((i + off[0]) * n1 + j + off[1]) * n2 + k + off[2];
        let n = counts[v] as f64;
        let mut best = (0, f64::NEG_INFINITY);
        for c in 0..classes {
            let pc = sums[v * classes + c] / n;
            probabilities.push(pc as f32);
            if pc > best.1 {
                best = (c, pc);
            }
        }
        *l = u8::from(best.0 != 0);
    }
    Ok(SlidingWindowOutput {
        mask: LabelMask::new(labels)?,
        probabilities: FeatureMap::from_vec(shape, classes, probabilities),
        padded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Foreground probability equal to the intensity, clamped to [0, 1].
    struct Identity;

    impl PatchPredictor for Identity {
        fn num_classes(&self) -> usize {
            2
        }
        fn predict_patch(&self, patch: &FeatureMap<f32>) -> Result<FeatureMap<f32>> {
            let data = patch
                .data()
                .iter()
                .flat_map(|&v| {
                    let p = v.clamp(0.0, 1.0);
                    [1.0 - p, p]
                })
                .collect();
            Ok(FeatureMap::from_vec(patch.dims(), 2, data))
        }
    }

    /// Predicts a fixed foreground probability that depends on where the
    /// patch starts, so overlaps are visible.
    struct ByFirstValue;

    impl PatchPredictor for ByFirstValue {
        fn num_classes(&self) -> usize {
            2
        }
        fn predict_patch(&self, patch: &FeatureMap<f32>) -> Result<FeatureMap<f32>> {
            let p = if patch.data()[0] == 0.0 { 0.4 } else { 0.8 };
            Ok(FeatureMap::from_vec(
                patch.dims(),
                2,
                (0..patch.voxels()).flat_map(|_| [1.0 - p, p]).collect(),
            ))
        }
    }

    fn volume(shape: [usize; 3], f: impl Fn(usize, usize, usize) -> f32) -> Volume {
        Volume::new("v", Array3::from_shape_fn(shape, |(i, j, k)| f(i, j, k)), [1.0; 3]).unwrap()
    }

    #[test]
    fn starts_cover_the_axis() {
        assert_eq!(window_starts(10, 4, 2), vec![0, 2, 4, 6]);
        assert_eq!(window_starts(9, 4, 4), vec![0, 4, 5]);
        assert_eq!(window_starts(3, 4, 2), vec![0]);
        assert_eq!(reflect(-1, 4), 1);
        assert_eq!(reflect(4, 4), 2);
    }

    #[test]
    fn identity_tiling_reproduces_thresholded_input() {
        let v = volume([8, 6, 4], |i, j, k| ((i * 7 + j * 3 + k) % 5) as f32 / 4.0);
        for stride in [[4, 3, 2], [2, 1, 1]] {
            let out = sliding_window_predict(&Identity, &v, [4, 3, 2], stride).unwrap();
            assert!(!out.padded);
            for ((idx, &l), &x) in out.mask.data().indexed_iter().zip(v.data().iter()) {
                assert_eq!(l, u8::from(x > 0.5), "{idx:?}");
            }
        }
    }

    #[test]
    fn overlaps_are_averaged() {
        // Windows start at 0 and 2 on a length-6 axis; voxels 2..4 see both.
        let v = volume([6, 1, 1], |i, _, _| if i == 0 { 0.0 } else { 1.0 });
        let out = sliding_window_predict(&ByFirstValue, &v, [4, 1, 1], [2, 1, 1]).unwrap();
        let fg: Vec<f32> = out.probabilities.data().chunks(2).map(|c| c[1]).collect();
        for (i, expect) in [0.4, 0.4, 0.6, 0.6, 0.8, 0.8].iter().enumerate() {
            assert!((fg[i] - expect).abs() < 1e-6, "{i}: {}", fg[i]);
        }
    }

    #[test]
    fn small_volume_is_reflection_padded() {
        let v = volume([3, 2, 2], |i, _, _| i as f32 / 2.0);
        let out = sliding_window_predict(&Identity, &v, [4, 4, 4], [2, 2, 2]).unwrap();
        assert!(out.padded);
        assert_eq!(out.mask.shape(), [3, 2, 2]);
        assert_eq!(out.mask.data()[[2, 0, 0]], 1);
        assert_eq!(out.mask.data()[[0, 1, 1]], 0);
    }

    #[test]
    fn constant_predictor_gives_constant_mask() {
        let ones = volume([10, 7, 5], |_, _, _| 1.0);
        for stride in [[4, 4, 4], [3, 1, 2], [1, 1, 1]] {
            let m = sliding_window_predict(&ByFirstValue, &ones, [4, 4, 4], stride).unwrap().mask;
            assert_eq!(m.foreground_count(), 350);
        }
    }
}
