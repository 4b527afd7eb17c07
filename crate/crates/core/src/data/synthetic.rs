//! Seeded synthetic volumes: a rotated ellipsoid with attached lobes as the
//! labeled organ, unlabeled bright tubes and blobs as distractors, a smooth
//! multiplicative bias field and Gaussian noise.

use std::collections::VecDeque;

use ndarray::Array3;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::volume::{LabelMask, Sample, Volume};
use crate::error::{Error, Result};
use crate::rng::{keyed_rng, purpose};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub grid: [usize; 3],
    pub spacing: [f64; 3],
    /// Standard deviation of additive noise, in units of organ contrast.
    pub noise_sigma: f64,
    /// Peak relative amplitude of the multiplicative bias field.
    pub bias_strength: f64,
    /// Number of unlabeled bright structures per volume.
    pub distractors: usize,
    /// Distractor brightness relative to the organ, as a range.
    pub distractor_contrast: [f64; 2],
    /// Width of the blurred intensity transition at boundaries, relative to
    /// the shape radius.
    pub edge_softness: f64,
    pub min_fraction: f64,
    pub max_fraction: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            grid: [64, 64, 64],
            spacing: [1.0; 3],
            noise_sigma: 0.35,
            bias_strength: 0.3,
            distractors: 3,
            distractor_contrast: [0.7, 1.0],
            edge_softness: 0.25,
            min_fraction: 0.02,
            max_fraction: 0.40,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid.iter().any(|&g| g < 4) {
            return Err(Error::Config(format!("synthetic grid {:?} must be at least 4 per axis", self.grid)));
        }
        if !(self.noise_sigma >= 0.0) || !(self.bias_strength >= 0.0) || !(self.bias_strength < 1.0) {
            return Err(Error::Config("synthetic noise must be >= 0 and bias in [0, 1)".into()));
        }
        if !(self.edge_softness > 0.0) {
            return Err(Error::Config("synthetic edge softness must be > 0".into()));
        }
        if !(0.0 <= self.min_fraction && self.min_fraction < self.max_fraction && self.max_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "synthetic foreground fraction range [{}, {}] is invalid",
                self.min_fraction, self.max_fraction
            )));
        }
        if self.distractor_contrast[0] > self.distractor_contrast[1] {
            return Err(Error::Config("synthetic distractor contrast range is reversed".into()));
        }
        Ok(())
    }
}

const MAX_ATTEMPTS: usize = 200;

type V3 = [f64; 3];

fn sub(a: V3, b: V3) -> V3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: V3, b: V3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn unit_vector(rng: &mut ChaCha8Rng) -> V3 {
    loop {
        let v: V3 = std::array::from_fn(|_| StandardNormal.sample(rng));
        let n = dot(v, v).sqrt();
        if n > 1e-6 {
            return v.map(|x| x / n);
        }
    }
}

/// Rows of a uniformly random rotation.
fn rotation(rng: &mut ChaCha8Rng) -> [V3; 3] {
    let (u1, u2, u3): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
    let tau = std::f64::consts::TAU;
    let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
    let (w, x, y, z) = (a * (tau * u2).sin(), a * (tau * u2).cos(), b * (tau * u3).sin(), b * (tau * u3).cos());
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - z * w), 2.0 * (x * z + y * w)],
        [2.0 * (x * y + z * w), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - x * w)],
        [2.0 * (x * z - y * w), 2.0 * (y * z + x * w), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

/// Primitive returning a normalized radius: < 1 inside, 1 on the surface.
enum Shape {
    Ellipsoid { centre: V3, axes: [V3; 3], radii: V3 },
    Capsule { a: V3, b: V3, radius: f64 },
}

impl Shape {
    fn rho(&self, p: V3) -> f64 {
        match self {
            Shape::Ellipsoid { centre, axes, radii } => {
                let d = sub(p, *centre);
                (0..3).map(|i| (dot(d, axes[i]) / radii[i]).powi(2)).sum::<f64>().sqrt()
            }
            Shape::Capsule { a, b, radius } => {
                let ab = sub(*b, *a);
                let t = (dot(sub(p, *a), ab) / dot(ab, ab)).clamp(0.0, 1.0);
                let q = [a[0] + t * ab[0], a[1] + t * ab[1], a[2] + t * ab[2]];
                let d = sub(p, q);
                dot(d, d).sqrt() / radius
            }
        }
    }

    /// Conservative bounding radius, for skipping far voxels.
    fn reach(&self) -> (V3, f64) {
        match self {
            Shape::Ellipsoid { centre, radii, .. } => (*centre, radii.iter().cloned().fold(0.0, f64::max)),
            Shape::Capsule { a, b, radius } => {
                let m = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0, (a[2] + b[2]) / 2.0];
                let h = dot(sub(*b, *a), sub(*b, *a)).sqrt() / 2.0;
                (m, h + radius)
            }
        }
    }
}

fn organ(rng: &mut ChaCha8Rng, g: V3) -> Vec<Shape> {
    let gm = (g[0] + g[1] + g[2]) / 3.0;
    let centre: V3 = std::array::from_fn(|i| g[i] * (0.5 + rng.random_range(-0.08..0.08)));
    let axes = rotation(rng);
    let radii: V3 = std::array::from_fn(|i| g[i] * rng.random_range(0.14..0.26));
    let mut shapes = vec![Shape::Ellipsoid { centre, axes, radii }];
    let lobes = rng.random_range(1..=3);
    for _ in 0..lobes {
        let u = unit_vector(rng);
        // Point on the main surface along u, in the rotated frame.
        let local: V3 = std::array::from_fn(|i| u[i] * radii[i]);
        let surface: V3 = std::array::from_fn(|j| centre[j] + (0..3).map(|i| axes[i][j] * local[i]).sum::<f64>());
        let r = gm * rng.random_range(0.06..0.12);
        let lobe_centre: V3 = std::array::from_fn(|j| centre[j] + (surface[j] - centre[j]) * rng.random_range(0.8..1.0));
        let lax = rotation(rng);
        let lr: V3 = std::array::from_fn(|_| r * rng.random_range(0.7..1.4));
        shapes.push(Shape::Ellipsoid {
            centre: lobe_centre,
            axes: lax,
            radii: lr,
        });
    }
    shapes
}

fn distractors(rng: &mut ChaCha8Rng, g: V3, organ: &[Shape], count: usize, contrast: [f64; 2]) -> Vec<(Shape, f64)> {
    let gm = (g[0] + g[1] + g[2]) / 3.0;
    let (centre, reach) = organ[0].reach();
    (0..count)
        .map(|n| {
            let level = if contrast[0] < contrast[1] {
                rng.random_range(contrast[0]..contrast[1])
            } else {
                contrast[0]
            };
            let shape = if n % 2 == 0 {
                // Vessel leaving the organ surface.
                let u = unit_vector(rng);
                let start: V3 = std::array::from_fn(|j| centre[j] + u[j] * reach * 0.9);
                let end: V3 = std::array::from_fn(|j| start[j] + u[j] * gm * rng.random_range(0.2..0.45));
                Shape::Capsule {
                    a: start,
                    b: end,
                    radius: gm * rng.random_range(0.035..0.06),
                }
            } else {
                // Detached blob elsewhere in the field of view.
                let c: V3 = std::array::from_fn(|j| g[j] * rng.random_range(0.1..0.9));
                let r = gm * rng.random_range(0.05..0.1);
                Shape::Ellipsoid {
                    centre: c,
                    axes: rotation(rng),
                    radii: std::array::from_fn(|_| r * rng.random_range(0.7..1.3)),
                }
            };
            (shape, level)
        })
        .collect()
}

/// 6-connected component count of the foreground.
pub fn count_components(mask: &Array3<u8>) -> usize {
    let (nx, ny, nz) = mask.dim();
    let mut seen = Array3::<bool>::from_elem((nx, ny, nz), false);
    let mut count = 0;
    let mut queue = VecDeque::new();
    for ((i, j, k), &v) in mask.indexed_iter() {
        if v == 0 || seen[[i, j, k]] {
            continue;
        }
        count += 1;
        seen[[i, j, k]] = true;
        queue.push_back([i, j, k]);
        while let Some(p) = queue.pop_front() {
            for a in 0..3 {
                for step in [-1isize, 1] {
                    let mut q = p;
                    let c = q[a] as isize + step;
                    if c < 0 || c as usize >= mask.shape()[a] {
                        continue;
                    }
                    q[a] = c as usize;
                    if mask[q] != 0 && !seen[q] {
                        seen[q] = true;
                        queue.push_back(q);
                    }
                }
            }
        }
    }
    count
}

/// Soft occupancy in [0, 1] for normalized radius `rho`.
fn occupancy(rho: f64, softness: f64) -> f64 {
    (0.5 + (1.0 - rho) / softness).clamp(0.0, 1.0)
}

fn render(config: &SyntheticConfig, rng: &mut ChaCha8Rng) -> Option<(Array3<f32>, Array3<u8>)> {
    let grid = config.grid;
    let g: V3 = grid.map(|v| v as f64);
    let shapes = organ(rng, g);
    let extras = distractors(rng, g, &shapes, config.distractors, config.distractor_contrast);

    let mut mask = Array3::<u8>::zeros(grid);
    for ((i, j, k), m) in mask.indexed_iter_mut() {
        let p = [i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5];
        if shapes.iter().any(|s| s.rho(p) < 1.0) {
            *m = 1;
        }
    }
    let fraction = mask.iter().filter(|&&v| v != 0).count() as f64 / mask.len() as f64;
    if fraction < config.min_fraction || fraction > config.max_fraction || count_components(&mask) != 1 {
        return None;
    }

    // Smooth bias field: a few random low-frequency cosines.
    let waves: Vec<(V3, f64)> = (0..3)
        .map(|_| {
            let u = unit_vector(rng);
            let f = rng.random_range(0.5..1.5) * std::f64::consts::TAU / g.iter().cloned().fold(0.0, f64::max);
            (u.map(|x| x * f), rng.random_range(0.0..std::f64::consts::TAU))
        })
        .collect();
    let texture: Vec<(V3, f64)> = (0..4)
        .map(|_| {
            let u = unit_vector(rng);
            let f = rng.random_range(3.0..6.0) * std::f64::consts::TAU / g.iter().cloned().fold(0.0, f64::max);
            (u.map(|x| x * f), rng.random_range(0.0..std::f64::consts::TAU))
        })
        .collect();

    let soft = config.edge_softness;
    let mut image = Array3::<f32>::zeros(grid);
    for ((i, j, k), v) in image.indexed_iter_mut() {
        let p = [i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5];
        let mut organ_w: f64 = 0.0;
        let mut inner: f64 = 0.0;
        for s in &shapes {
            let rho = s.rho(p);
            organ_w = organ_w.max(occupancy(rho, soft));
            inner = inner.max(1.0 - rho.min(1.0).powi(2));
        }
        let mut fg = organ_w * (0.85 + 0.3 * inner);
        for (s, level) in &extras {
            let (c, reach) = s.reach();
            let d = sub(p, c);
            if dot(d, d).sqrt() > reach * (1.0 + soft) + 2.0 {
                continue;
            }
            fg = fg.max(occupancy(s.rho(p), soft) * level);
        }
        let tex = texture.iter().map(|(w, ph)| (dot(*w, p) + ph).cos()).sum::<f64>() / texture.len() as f64;
        let background = 0.15 * tex;
        let bias = 1.0 + config.bias_strength * waves.iter().map(|(w, ph)| (dot(*w, p) + ph).cos()).sum::<f64>() / 3.0;
        let n: f64 = StandardNormal.sample(rng);
        *v = ((background + fg) * bias + config.noise_sigma * n) as f32;
    }
    Some((image, mask))
}

/// Case `index` of the synthetic set identified by `seed`. Identical inputs
/// give bitwise identical output.
pub fn synthetic_case(config: &SyntheticConfig, seed: u64, index: usize) -> Result<Sample> {
    config.validate()?;
    let mut rng = keyed_rng(seed, &[purpose::SYNTHETIC, index as u64]);
    for _ in 0..MAX_ATTEMPTS {
        if let Some((image, mask)) = render(config, &mut rng) {
            let volume = Volume::new(format!("synth_{index:04}"), image, config.spacing)?;
            return Sample::new(volume, Some(LabelMask::new(mask)?));
        }
    }
    Err(Error::Data(format!(
        "could not draw a connected shape with foreground fraction in [{}, {}] on grid {:?}",
        config.min_fraction, config.max_fraction, config.grid
    )))
}

pub fn generate_synthetic(config: &SyntheticConfig, seed: u64, count: usize) -> Result<Vec<Sample>> {
    use rayon::prelude::*;
    (0..count).into_par_iter().map(|i| synthetic_case(config, seed, i)).collect()
}
