use crate::tensor::{FeatureMap, Real};

pub const NORM_EPS: f64 = 1e-5;

/// Group normalization over (voxels x channels-in-group) of one item.
/// `groups == channels` is instance normalization.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GroupNorm {
    pub channels: usize,
    pub groups: usize,
}

/// Per-group `(mean, 1/std)` saved by the forward pass.
pub type GroupStats = Vec<(f64, f64)>;

impl GroupNorm {
    fn group_size(&self) -> usize {
        self.channels / self.groups
    }

    pub fn forward<T: Real>(
        &self,
        x: &FeatureMap<T>,
        gamma: &[T],
        beta: &[T],
    ) -> (FeatureMap<T>, GroupStats) {
        let c = self.channels;
        let cg = self.group_size();
        let count = (x.voxels() * cg) as f64;
        let mut stats = Vec::with_capacity(self.groups);
        for g in 0..self.groups {
            let mut sum = 0.0;
            for row in x.data().chunks_exact(c) {
                for v in &row[g * cg..(g + 1) * cg] {
                    sum += v.to_f64_lossy();
                }
            }
            let mean = sum / count;
            let mut sq = 0.0;
            for row in x.data().chunks_exact(c) {
                for v in &row[g * cg..(g + 1) * cg] {
                    let d = v.to_f64_lossy() - mean;
                    sq += d * d;
                }
            }
            let rstd = 1.0 / (sq / count + NORM_EPS).sqrt();
            stats.push((mean, rstd));
        }
        let mut y = FeatureMap::zeros(x.dims(), c);
        let scale: Vec<T> = (0..c)
            .map(|ch| T::of(stats[ch / cg].1) * gamma[ch])
            .collect();
        let shift: Vec<T> = (0..c)
            .map(|ch| beta[ch] - T::of(stats[ch / cg].0 * stats[ch / cg].1) * gamma[ch])
            .collect();
        for (out, inp) in y.data_mut().chunks_exact_mut(c).zip(x.data().chunks_exact(c)) {
            for ch in 0..c {
                out[ch] = inp[ch] * scale[ch] + shift[ch];
            }
        }
        (y, stats)
    }

    /// Returns `(d_input, d_gamma, d_beta)`.
    pub fn backward<T: Real>(
        &self,
        x: &FeatureMap<T>,
        gamma: &[T],
        stats: &GroupStats,
        dy: &FeatureMap<T>,
    ) -> (FeatureMap<T>, Vec<T>, Vec<T>) {
        let c = self.channels;
        let cg = self.group_size();
        let count = (x.voxels() * cg) as f64;
        let mut dgamma = vec![0.0f64; c];
        let mut dbeta = vec![0.0f64; c];
        // Per group: mean of dxhat and mean of dxhat * xhat.
        let mut m1 = vec![0.0f64; self.groups];
        let mut m2 = vec![0.0f64; self.groups];
        for (xr, gr) in x.data().chunks_exact(c).zip(dy.data().chunks_exact(c)) {
            for ch in 0..c {
                let (mean, rstd) = stats[ch / cg];
                let xhat = (xr[ch].to_f64_lossy() - mean) * rstd;
                let g = gr[ch].to_f64_lossy();
                dgamma[ch] += g * xhat;
                dbeta[ch] += g;
                let dxhat = g * gamma[ch].to_f64_lossy();
                m1[ch / cg] += dxhat;
                m2[ch / cg] += dxhat * xhat;
            }
        }
        for g in 0..self.groups {
            m1[g] /= count;
            m2[g] /= count;
        }
        let mut dx = FeatureMap::zeros(x.dims(), c);
        for ((out, xr), gr) in dx
            .data_mut()
            .chunks_exact_mut(c)
            .zip(x.data().chunks_exact(c))
            .zip(dy.data().chunks_exact(c))
        {
            for ch in 0..c {
                let grp = ch / cg;
                let (mean, rstd) = stats[grp];
                let xhat = (xr[ch].to_f64_lossy() - mean) * rstd;
                let dxhat = gr[ch].to_f64_lossy() * gamma[ch].to_f64_lossy();
                out[ch] = T::of(rstd * (dxhat - m1[grp] - xhat * m2[grp]));
            }
        }
        (
            dx,
            dgamma.into_iter().map(T::of).collect(),
            dbeta.into_iter().map(T::of).collect(),
        )
    }
}
