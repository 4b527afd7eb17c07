use serde::{Deserialize, Serialize};

use super::overlap::check_same_shape;
use super::surface::directed_surface_distances;
use crate::data::LabelMask;
use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurfaceDistances {
    pub asd: f64,
    pub hd95: f64,
}

/// Percentile `q` in [0, 100] with linear interpolation between order
/// statistics. Sorts `values`.
pub fn percentile(values: &mut [f64], q: f64) -> f64 {
    assert!(!values.is_empty(), "percentile of an empty set");
    values.sort_by(|a, b| a.total_cmp(b));
    let pos = q / 100.0 * (values.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    values[lo] + (values[hi] - values[lo]) * frac
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Symmetric ASD (average of the two directed means) and 95HD (larger of
/// the two directed 95th percentiles). `None` when either mask is empty.
/// `spacing` of `[1.0; 3]` measures in voxels.
pub fn surface_distances(pred: &LabelMask, gt: &LabelMask, spacing: [f64; 3]) -> Result<Option<SurfaceDistances>> {
    check_same_shape(pred, gt)?;
    if pred.foreground_count() == 0 || gt.foreground_count() == 0 {
        return Ok(None);
    }
    let mut pg = directed_surface_distances(pred, gt, spacing)?;
    let mut gp = directed_surface_distances(gt, pred, spacing)?;
    let asd = (mean(&pg) + mean(&gp)) / 2.0;
    let hd95 = percentile(&mut pg, 95.0).max(percentile(&mut gp, 95.0));
    Ok(Some(SurfaceDistances { asd, hd95 }))
}
