//! 3D convolutions on channels-last feature maps, each with its adjoint.
//!
//! Four kernels cover the whole backbone:
//!
//! * [`SameConv`]: odd cubic kernel, zero padding, stride 1.
//! * [`DownConv`]: 2x2x2 kernel, stride 2 (halves every axis).
//! * [`UpConv`]: 2x2x2 transposed kernel, stride 2 (doubles every axis).
//! * [`PointwiseConv`]: 1x1x1 channel mixing.
//!
//! Forward passes lower to im2col + GEMM over row chunks. Chunks write
//! disjoint output rows and are processed in parallel; weight gradients are
//! reduced over a fixed number of groups so results do not depend on the
//! thread count.

use rayon::prelude::*;

use crate::tensor::{gemm, FeatureMap, Mat, Real};

/// Upper bound on the number of elements in one im2col scratch buffer.
const COLS_BUDGET: usize = 1 << 17;
/// Fixed fan-in of weight-gradient reductions.
const REDUCE_GROUPS: usize = 8;

pub struct ConvGrads<T> {
    pub d_input: Option<FeatureMap<T>>,
    pub d_weight: Vec<T>,
    pub d_bias: Vec<T>,
}

fn chunk_rows(k: usize) -> usize {
    (COLS_BUDGET / k.max(1)).clamp(32, 4096)
}

fn bias_grad<T: Real>(d_out: &FeatureMap<T>) -> Vec<T> {
    let c = d_out.channels();
    let mut db = vec![T::zero(); c];
    for row in d_out.data().chunks_exact(c) {
        for (acc, v) in db.iter_mut().zip(row) {
            *acc = *acc + *v;
        }
    }
    db
}

fn add_bias<T: Real>(rows: &mut [T], bias: &[T]) {
    for row in rows.chunks_exact_mut(bias.len()) {
        for (v, b) in row.iter_mut().zip(bias) {
            *v = *v + *b;
        }
    }
}

/// Sums `f(range)` over `groups` contiguous pieces of `0..n`, in order.
fn reduce_in_groups<T, F>(n: usize, len: usize, f: F) -> Vec<T>
where
    T: Real,
    F: Fn(std::ops::Range<usize>, &mut [T]) + Sync,
{
    let groups = REDUCE_GROUPS.min(n.max(1));
    let per = n.div_ceil(groups);
    let partials: Vec<Vec<T>> = (0..groups)
        .into_par_iter()
        .map(|g| {
            let mut acc = vec![T::zero(); len];
            let lo = (g * per).min(n);
            let hi = ((g + 1) * per).min(n);
            if lo < hi {
                f(lo..hi, &mut acc);
            }
            acc
        })
        .collect();
    let mut total = vec![T::zero(); len];
    for p in partials {
        for (t, v) in total.iter_mut().zip(p) {
            *t = *t + v;
        }
    }
    total
}

/// Fills `cols` (rows x k^3*C) with zero-padded neighbourhoods of the voxels
/// `rows`. With `mirror`, offsets are reflected through the kernel centre,
/// which turns the gather into the adjoint of the forward gather.
fn im2col_same<T: Real>(
    src: &FeatureMap<T>,
    kernel: usize,
    rows: std::ops::Range<usize>,
    mirror: bool,
    cols: &mut [T],
) {
    let [d0, d1, d2] = src.dims();
    let c = src.channels();
    let pad = (kernel / 2) as isize;
    let k3 = kernel * kernel * kernel;
    let width = k3 * c;
    let data = src.data();
    for (r, v) in rows.enumerate() {
        let i = (v / (d1 * d2)) as isize;
        let j = ((v / d2) % d1) as isize;
        let l = (v % d2) as isize;
        let row = &mut cols[r * width..(r + 1) * width];
        for a in 0..kernel {
            for b in 0..kernel {
                for e in 0..kernel {
                    let off = (a * kernel + b) * kernel + e;
                    let (sa, sb, se) = if mirror {
                        (kernel - 1 - a, kernel - 1 - b, kernel - 1 - e)
                    } else {
                        (a, b, e)
                    };
                    let si = i + sa as isize - pad;
                    let sj = j + sb as isize - pad;
                    let sl = l + se as isize - pad;
                    let dst = &mut row[off * c..(off + 1) * c];
                    if si < 0
                        || sj < 0
                        || sl < 0
                        || si >= d0 as isize
                        || sj >= d1 as isize
                        || sl >= d2 as isize
                    {
                        dst.fill(T::zero());
                    } else {
                        let s = ((si as usize * d1 + sj as usize) * d2 + sl as usize) * c;
                        dst.copy_from_slice(&data[s..s + c]);
                    }
                }
            }
        }
    }
}

/// Stride-1 convolution with an odd cubic kernel and zero "same" padding.
/// Weight layout: `[c_out][kernel^3][c_in]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SameConv {
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: usize,
}

impl SameConv {
    pub fn weight_len(&self) -> usize {
        self.c_out * self.kernel.pow(3) * self.c_in
    }

    pub fn forward<T: Real>(&self, x: &FeatureMap<T>, w: &[T], b: &[T]) -> FeatureMap<T> {
        assert_eq!(x.channels(), self.c_in);
        let k = self.kernel.pow(3) * self.c_in;
        let rows = chunk_rows(k);
        let mut out = FeatureMap::zeros(x.dims(), self.c_out);
        out.data_mut()
            .par_chunks_mut(rows * self.c_out)
            .enumerate()
            .for_each(|(ci, chunk)| {
                let n = chunk.len() / self.c_out;
                let start = ci * rows;
                let mut cols = vec![T::zero(); n * k];
                im2col_same(x, self.kernel, start..start + n, false, &mut cols);
                gemm(
                    T::one(),
                    Mat::new(&cols, n, k),
                    Mat::new(w, self.c_out, k).t(),
                    T::zero(),
                    chunk,
                );
                add_bias(chunk, b);
            });
        out
    }

    pub fn backward<T: Real>(
        &self,
        x: &FeatureMap<T>,
        w: &[T],
        d_out: &FeatureMap<T>,
        need_input: bool,
    ) -> ConvGrads<T> {
        let k3 = self.kernel.pow(3);
        let k = k3 * self.c_in;
        let n = x.voxels();
        let rows = chunk_rows(k);
        let d_weight = reduce_in_groups(n, self.c_out * k, |range, acc| {
            let mut cols = vec![T::zero(); rows.min(range.len()) * k];
            let mut lo = range.start;
            while lo < range.end {
                let hi = (lo + rows).min(range.end);
                let m = hi - lo;
                im2col_same(x, self.kernel, lo..hi, false, &mut cols[..m * k]);
                let g = &d_out.data()[lo * self.c_out..hi * self.c_out];
                gemm(
                    T::one(),
                    Mat::new(g, m, self.c_out).t(),
                    Mat::new(&cols[..m * k], m, k),
                    T::one(),
                    acc,
                );
                lo = hi;
            }
        });
        let d_bias = bias_grad(d_out);

        let d_input = need_input.then(|| {
            // Adjoint: correlate d_out with the spatially mirrored kernel,
            // swapping the roles of input and output channels.
            let k2 = k3 * self.c_out;
            let mut w2 = vec![T::zero(); self.c_in * k2];
            for co in 0..self.c_out {
                for off in 0..k3 {
                    for ci in 0..self.c_in {
                        w2[ci * k2 + off * self.c_out + co] = w[(co * k3 + off) * self.c_in + ci];
                    }
                }
            }
            let rows2 = chunk_rows(k2);
            let mut dx = FeatureMap::zeros(x.dims(), self.c_in);
            dx.data_mut()
                .par_chunks_mut(rows2 * self.c_in)
                .enumerate()
                .for_each(|(ci, chunk)| {
                    let m = chunk.len() / self.c_in;
                    let start = ci * rows2;
                    let mut cols = vec![T::zero(); m * k2];
                    im2col_same(d_out, self.kernel, start..start + m, true, &mut cols);
                    gemm(
                        T::one(),
                        Mat::new(&cols, m, k2),
                        Mat::new(&w2, self.c_in, k2).t(),
                        T::zero(),
                        chunk,
                    );
                });
            dx
        });
        ConvGrads {
            d_input,
            d_weight,
            d_bias,
        }
    }
}

/// 2x2x2 stride-2 convolution. Weight layout: `[c_out][8][c_in]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DownConv {
    pub c_in: usize,
    pub c_out: usize,
}

fn gather_down<T: Real>(x: &FeatureMap<T>, out_slab: usize, cols: &mut [T]) {
    let [_, d1, d2] = x.dims();
    let c = x.channels();
    let (h1, h2) = (d1 / 2, d2 / 2);
    let data = x.data();
    let width = 8 * c;
    for j in 0..h1 {
        for l in 0..h2 {
            let row = &mut cols[(j * h2 + l) * width..(j * h2 + l + 1) * width];
            for a in 0..2 {
                for b in 0..2 {
                    for e in 0..2 {
                        let off = (a * 2 + b) * 2 + e;
                        let s = (((2 * out_slab + a) * d1 + 2 * j + b) * d2 + 2 * l + e) * c;
                        row[off * c..(off + 1) * c].copy_from_slice(&data[s..s + c]);
                    }
                }
            }
        }
    }
}

impl DownConv {
    pub fn weight_len(&self) -> usize {
        self.c_out * 8 * self.c_in
    }

    pub fn forward<T: Real>(&self, x: &FeatureMap<T>, w: &[T], b: &[T]) -> FeatureMap<T> {
        let [d0, d1, d2] = x.dims();
        let out_dims = [d0 / 2, d1 / 2, d2 / 2];
        let slab = out_dims[1] * out_dims[2];
        let k = 8 * self.c_in;
        let mut out = FeatureMap::zeros(out_dims, self.c_out);
        if slab == 0 {
            return out;
        }
        out.data_mut()
            .par_chunks_mut(slab * self.c_out)
            .enumerate()
            .for_each(|(i, chunk)| {
                let mut cols = vec![T::zero(); slab * k];
                gather_down(x, i, &mut cols);
                gemm(
                    T::one(),
                    Mat::new(&cols, slab, k),
                    Mat::new(w, self.c_out, k).t(),
                    T::zero(),
                    chunk,
                );
                add_bias(chunk, b);
            });
        out
    }

    pub fn backward<T: Real>(
        &self,
        x: &FeatureMap<T>,
        w: &[T],
        d_out: &FeatureMap<T>,
        need_input: bool,
    ) -> ConvGrads<T> {
        let [o0, o1, o2] = d_out.dims();
        let slab = o1 * o2;
        let k = 8 * self.c_in;
        let d_weight = reduce_in_groups(o0, self.c_out * k, |range, acc| {
            let mut cols = vec![T::zero(); slab * k];
            for i in range {
                gather_down(x, i, &mut cols);
                let g = &d_out.data()[i * slab * self.c_out..(i + 1) * slab * self.c_out];
                gemm(
                    T::one(),
                    Mat::new(g, slab, self.c_out).t(),
                    Mat::new(&cols, slab, k),
                    T::one(),
                    acc,
                );
            }
        });
        let d_bias = bias_grad(d_out);
        let d_input = need_input.then(|| {
            let [_, d1, d2] = x.dims();
            let c = self.c_in;
            let mut dx = FeatureMap::zeros(x.dims(), c);
            if slab == 0 {
                return dx;
            }
            dx.data_mut()
                .par_chunks_mut(2 * d1 * d2 * c)
                .enumerate()
                .for_each(|(i, chunk)| {
                    let g = &d_out.data()[i * slab * self.c_out..(i + 1) * slab * self.c_out];
                    let mut dcols = vec![T::zero(); slab * k];
                    gemm(
                        T::one(),
                        Mat::new(g, slab, self.c_out),
                        Mat::new(w, self.c_out, k),
                        T::zero(),
                        &mut dcols,
                    );
                    for j in 0..o1 {
                        for l in 0..o2 {
                            let row = &dcols[(j * o2 + l) * k..(j * o2 + l + 1) * k];
                            for a in 0..2 {
                                for b in 0..2 {
                                    for e in 0..2 {
                                        let off = (a * 2 + b) * 2 + e;
                                        let s = ((a * d1 + 2 * j + b) * d2 + 2 * l + e) * c;
                                        chunk[s..s + c].copy_from_slice(&row[off * c..(off + 1) * c]);
                                    }
                                }
                            }
                        }
                    }
                });
            dx
        });
        ConvGrads {
            d_input,
            d_weight,
            d_bias,
        }
    }
}

/// 2x2x2 stride-2 transposed convolution. Weight layout: `[c_in][8][c_out]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct UpConv {
    pub c_in: usize,
    pub c_out: usize,
}

impl UpConv {
    pub fn weight_len(&self) -> usize {
        self.c_in * 8 * self.c_out
    }

    pub fn forward<T: Real>(&self, x: &FeatureMap<T>, w: &[T], b: &[T]) -> FeatureMap<T> {
        let [d0, d1, d2] = x.dims();
        let out_dims = [2 * d0, 2 * d1, 2 * d2];
        let (o1, o2) = (out_dims[1], out_dims[2]);
        let slab = d1 * d2;
        let co = self.c_out;
        let k = 8 * co;
        let mut out = FeatureMap::zeros(out_dims, co);
        if slab == 0 {
            return out;
        }
        out.data_mut()
            .par_chunks_mut(2 * o1 * o2 * co)
            .enumerate()
            .for_each(|(i, chunk)| {
                let xs = &x.data()[i * slab * self.c_in..(i + 1) * slab * self.c_in];
                let mut y = vec![T::zero(); slab * k];
                gemm(
                    T::one(),
                    Mat::new(xs, slab, self.c_in),
                    Mat::new(w, self.c_in, k),
                    T::zero(),
                    &mut y,
                );
                for j in 0..d1 {
                    for l in 0..d2 {
                        let row = &y[(j * d2 + l) * k..(j * d2 + l + 1) * k];
                        for a in 0..2 {
                            for bb in 0..2 {
                                for e in 0..2 {
                                    let off = (a * 2 + bb) * 2 + e;
                                    let s = ((a * o1 + 2 * j + bb) * o2 + 2 * l + e) * co;
                                    for c in 0..co {
                                        chunk[s + c] = row[off * co + c] + b[c];
                                    }
                                }
                            }
                        }
                    }
                }
            });
        out
    }

    fn gather_grad<T: Real>(&self, d_out: &FeatureMap<T>, i: usize, dy: &mut [T]) {
        let [_, o1, o2] = d_out.dims();
        let (d1, d2) = (o1 / 2, o2 / 2);
        let co = self.c_out;
        let k = 8 * co;
        let g = d_out.data();
        for j in 0..d1 {
            for l in 0..d2 {
                let row = &mut dy[(j * d2 + l) * k..(j * d2 + l + 1) * k];
                for a in 0..2 {
                    for b in 0..2 {
                        for e in 0..2 {
                            let off = (a * 2 + b) * 2 + e;
                            let s = (((2 * i + a) * o1 + 2 * j + b) * o2 + 2 * l + e) * co;
                            row[off * co..(off + 1) * co].copy_from_slice(&g[s..s + co]);
                        }
                    }
                }
            }
        }
    }

    pub fn backward<T: Real>(
        &self,
        x: &FeatureMap<T>,
        w: &[T],
        d_out: &FeatureMap<T>,
        need_input: bool,
    ) -> ConvGrads<T> {
        let [d0, d1, d2] = x.dims();
        let slab = d1 * d2;
        let k = 8 * self.c_out;
        let ci = self.c_in;
        let d_weight = reduce_in_groups(d0, ci * k, |range, acc| {
            let mut dy = vec![T::zero(); slab * k];
            for i in range {
                self.gather_grad(d_out, i, &mut dy);
                let xs = &x.data()[i * slab * ci..(i + 1) * slab * ci];
                gemm(
                    T::one(),
                    Mat::new(xs, slab, ci).t(),
                    Mat::new(&dy, slab, k),
                    T::one(),
                    acc,
                );
            }
        });
        let d_bias = bias_grad(d_out);
        let d_input = need_input.then(|| {
            let mut dx = FeatureMap::zeros(x.dims(), ci);
            if slab == 0 {
                return dx;
            }
            dx.data_mut()
                .par_chunks_mut(slab * ci)
                .enumerate()
                .for_each(|(i, chunk)| {
                    let mut dy = vec![T::zero(); slab * k];
                    self.gather_grad(d_out, i, &mut dy);
                    gemm(
                        T::one(),
                        Mat::new(&dy, slab, k),
                        Mat::new(w, ci, k).t(),
                        T::zero(),
                        chunk,
                    );
                });
            dx
        });
        ConvGrads {
            d_input,
            d_weight,
            d_bias,
        }
    }
}

/// 1x1x1 convolution. Weight layout: `[c_out][c_in]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PointwiseConv {
    pub c_in: usize,
    pub c_out: usize,
}

impl PointwiseConv {
    pub fn weight_len(&self) -> usize {
        self.c_out * self.c_in
    }

    pub fn forward<T: Real>(&self, x: &FeatureMap<T>, w: &[T], b: &[T]) -> FeatureMap<T> {
        let rows = chunk_rows(self.c_in).max(1024);
        let mut out = FeatureMap::zeros(x.dims(), self.c_out);
        out.data_mut()
            .par_chunks_mut(rows * self.c_out)
            .enumerate()
            .for_each(|(ci, chunk)| {
                let n = chunk.len() / self.c_out;
                let xs = &x.data()[ci * rows * self.c_in..(ci * rows + n) * self.c_in];
                gemm(
                    T::one(),
                    Mat::new(xs, n, self.c_in),
                    Mat::new(w, self.c_out, self.c_in).t(),
                    T::zero(),
                    chunk,
                );
                add_bias(chunk, b);
            });
        out
    }

    pub fn backward<T: Real>(
        &self,
        x: &FeatureMap<T>,
        w: &[T],
        d_out: &FeatureMap<T>,
        need_input: bool,
    ) -> ConvGrads<T> {
        let n = x.voxels();
        let d_weight = reduce_in_groups(n, self.c_out * self.c_in, |range, acc| {
            let m = range.len();
            gemm(
                T::one(),
                Mat::new(&d_out.data()[range.start * self.c_out..range.end * self.c_out], m, self.c_out).t(),
                Mat::new(&x.data()[range.start * self.c_in..range.end * self.c_in], m, self.c_in),
                T::one(),
                acc,
            );
        });
        let d_bias = bias_grad(d_out);
        let d_input = need_input.then(|| {
            let mut dx = FeatureMap::zeros(x.dims(), self.c_in);
            gemm(
                T::one(),
                Mat::new(d_out.data(), n, self.c_out),
                Mat::new(w, self.c_out, self.c_in),
                T::zero(),
                dx.data_mut(),
            );
            dx
        });
        ConvGrads {
            d_input,
            d_weight,
            d_bias,
        }
    }
}
