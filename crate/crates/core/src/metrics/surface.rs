use ndarray::Array3;

use crate::data::LabelMask;
use crate::error::{Error, Result};

/// Foreground voxels with at least one 6-neighbour that is background or
/// outside the grid.
pub fn extract_surface(mask: &LabelMask) -> Array3<bool> {
    let data = mask.data();
    let shape = mask.shape();
    Array3::from_shape_fn(shape, |(i, j, k)| {
        if data[[i, j, k]] == 0 {
            return false;
        }
        let p = [i, j, k];
        (0..3).any(|a| {
            [-1isize, 1].into_iter().any(|d| {
                let c = p[a] as isize + d;
                if c < 0 || c as usize >= shape[a] {
                    return true;
                }
                let mut q = p;
                q[a] = c as usize;
                data[q] == 0
            })
        })
    })
}

/// Squared Euclidean distance to the nearest `true` voxel of `features`,
/// with per-axis `spacing`. Infinite everywhere if there are none.
pub fn squared_distance_transform(features: &Array3<bool>, spacing: [f64; 3]) -> Array3<f64> {
    let mut d = features.mapv(|f| if f { 0.0 } else { f64::INFINITY });
    let shape = [d.shape()[0], d.shape()[1], d.shape()[2]];
    for axis in 0..3 {
        let n = shape[axis];
        let w = spacing[axis] * spacing[axis];
        let mut f = vec![0.0; n];
        let mut out = vec![0.0; n];
        let mut v = vec![0usize; n];
        let mut z = vec![0.0; n + 1];
        for mut lane in d.lanes_mut(ndarray::Axis(axis)) {
            for (dst, src) in f.iter_mut().zip(lane.iter()) {
                *dst = *src;
            }
            lower_envelope(&f, w, &mut out, &mut v, &mut z);
            for (dst, src) in lane.iter_mut().zip(&out) {
                *dst = *src;
            }
        }
    }
    d
}

/// One-dimensional exact transform: `out[q] = min_p f[p] + w (q - p)^2`.
fn lower_envelope(f: &[f64], w: f64, out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let Some(first) = f.iter().position(|x| x.is_finite()) else {
        out.fill(f64::INFINITY);
        return;
    };
    let intersect = |q: usize, p: usize| -> f64 {
        let (qf, pf) = (q as f64, p as f64);
        ((f[q] + w * qf * qf) - (f[p] + w * pf * pf)) / (2.0 * w * (qf - pf))
    };
    let mut k = 0;
    v[0] = first;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in first + 1..n {
        if !f[q].is_finite() {
            continue;
        }
        let mut s = intersect(q, v[k]);
        while s <= z[k] {
            k -= 1;
            s = intersect(q, v[k]);
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        *o = w * d * d + f[v[k]];
    }
}

/// Distances from every surface voxel of `from` to the nearest surface voxel
/// of `to`, in spacing units. Errors if either surface is empty.
pub fn directed_surface_distances(from: &LabelMask, to: &LabelMask, spacing: [f64; 3]) -> Result<Vec<f64>> {
    let sf = extract_surface(from);
    let st = extract_surface(to);
    if !sf.iter().any(|&b| b) || !st.iter().any(|&b| b) {
        return Err(Error::Shape("surface distance needs two non-empty masks".into()));
    }
    let edt = squared_distance_transform(&st, spacing);
    Ok(sf
        .iter()
        .zip(edt.iter())
        .filter(|(s, _)| **s)
        .map(|(_, d)| d.sqrt())
        .collect())
}
