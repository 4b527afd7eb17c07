//! Integer-factor trilinear upsampling (half-pixel centres, edge clamped)
//! and its adjoint.

use crate::tensor::{FeatureMap, Real};

/// `(i0, i1, w0, w1)` for every output index along one axis.
fn axis_table(n_in: usize, factor: usize) -> Vec<(usize, usize, f64, f64)> {
    (0..n_in * factor)
        .map(|o| {
            let src = ((o as f64 + 0.5) / factor as f64 - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(n_in - 1);
            let i1 = (i0 + 1).min(n_in - 1);
            let w1 = src - i0 as f64;
            (i0, i1, 1.0 - w1, w1)
        })
        .collect()
}

fn layout(dims: [usize; 3], channels: usize, axis: usize) -> (usize, usize) {
    let outer: usize = dims[..axis].iter().product();
    let inner: usize = dims[axis + 1..].iter().product::<usize>() * channels;
    (outer, inner)
}

fn upsample_axis<T: Real>(x: &FeatureMap<T>, axis: usize, factor: usize) -> FeatureMap<T> {
    let dims = x.dims();
    let n = dims[axis];
    let (outer, inner) = layout(dims, x.channels(), axis);
    let table = axis_table(n, factor);
    let mut out_dims = dims;
    out_dims[axis] = n * factor;
    let mut out = FeatureMap::zeros(out_dims, x.channels());
    let src = x.data();
    let dst = out.data_mut();
    for o in 0..outer {
        for (t, &(i0, i1, w0, w1)) in table.iter().enumerate() {
            let (w0, w1) = (T::of(w0), T::of(w1));
            let d = &mut dst[(o * n * factor + t) * inner..(o * n * factor + t + 1) * inner];
            let a = &src[(o * n + i0) * inner..(o * n + i0 + 1) * inner];
            let b = &src[(o * n + i1) * inner..(o * n + i1 + 1) * inner];
            for ((d, &a), &b) in d.iter_mut().zip(a).zip(b) {
                *d = a * w0 + b * w1;
            }
        }
    }
    out
}

fn upsample_axis_adjoint<T: Real>(dy: &FeatureMap<T>, axis: usize, factor: usize) -> FeatureMap<T> {
    let mut dims = dy.dims();
    let n = dims[axis] / factor;
    dims[axis] = n;
    let (outer, inner) = layout(dims, dy.channels(), axis);
    let table = axis_table(n, factor);
    let mut dx = FeatureMap::zeros(dims, dy.channels());
    let src = dy.data();
    let dst = dx.data_mut();
    for o in 0..outer {
        for (t, &(i0, i1, w0, w1)) in table.iter().enumerate() {
            let (w0, w1) = (T::of(w0), T::of(w1));
            let g = &src[(o * n * factor + t) * inner..(o * n * factor + t + 1) * inner];
            for (c, &gv) in g.iter().enumerate() {
                dst[(o * n + i0) * inner + c] = dst[(o * n + i0) * inner + c] + gv * w0;
                dst[(o * n + i1) * inner + c] = dst[(o * n + i1) * inner + c] + gv * w1;
            }
        }
    }
    dx
}

pub fn upsample_trilinear<T: Real>(x: &FeatureMap<T>, factor: usize) -> FeatureMap<T> {
    if factor == 1 {
        return x.clone();
    }
    let a = upsample_axis(x, 0, factor);
    let b = upsample_axis(&a, 1, factor);
    upsample_axis(&b, 2, factor)
}

pub fn upsample_trilinear_adjoint<T: Real>(dy: &FeatureMap<T>, factor: usize) -> FeatureMap<T> {
    if factor == 1 {
        return dy.clone();
    }
    let a = upsample_axis_adjoint(dy, 2, factor);
    let b = upsample_axis_adjoint(&a, 1, factor);
    upsample_axis_adjoint(&b, 0, factor)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_half_pixel_linear_interpolation_in_1d() {
        // [0, 1] upsampled x2 with half-pixel centres: 0, 0.25, 0.75, 1.
        let x = FeatureMap::from_vec([1, 1, 2], 1, vec![0.0f64, 1.0]);
        let y = upsample_trilinear(&x, 2);
        assert_eq!(y.dims(), [2, 2, 4]);
        assert_eq!(&y.data()[..4], &[0.0, 0.25, 0.75, 1.0]);
    }

    #[test]
    fn constant_stays_constant_and_weights_sum_to_one() {
        let x = FeatureMap::filled([2, 3, 1], 2, 0.7f64);
        let y = upsample_trilinear(&x, 4);
        assert!(y.data().iter().all(|v| (v - 0.7).abs() < 1e-15));
    }

    #[test]
    fn adjoint_identity() {
        let x = FeatureMap::from_vec(
            [2, 3, 2],
            2,
            (0..24).map(|v| ((v * 7) % 5) as f64 - 2.0).collect(),
        );
        let y = upsample_trilinear(&x, 4);
        let g = FeatureMap::from_vec(
            y.dims(),
            2,
            (0..y.data().len()).map(|v| ((v * 3) % 11) as f64 * 0.1).collect(),
        );
        let dx = upsample_trilinear_adjoint(&g, 4);
        let lhs: f64 = y.data().iter().zip(g.data()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data().iter().zip(dx.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-9);
    }
}
