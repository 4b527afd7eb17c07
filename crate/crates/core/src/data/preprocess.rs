use std::ops::Range;

use ndarray::{s, Array3};

use super::volume::{LabelMask, Sample, Volume};
use crate::error::{Error, Result};

/// Crop margin around the foreground bounding box, in voxels per side.
pub const DEFAULT_CROP_MARGIN: usize = 25;

/// Standard deviation below which a volume counts as constant.
const CONSTANT_STD: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct Preprocessed {
    pub sample: Sample,
    /// Region of the input that was kept, per axis.
    pub region: [Range<usize>; 3],
    /// The cropped intensities had zero variance and were set to 0.
    pub constant_intensity: bool,
}

/// Foreground bounding box grown by `margin` and clipped to the grid.
pub fn foreground_region(mask: &LabelMask, margin: usize) -> Result<[Range<usize>; 3]> {
    let shape = mask.shape();
    let mut lo = shape;
    let mut hi = [0usize; 3];
    let mut any = false;
    for ((i, j, k), &v) in mask.data().indexed_iter() {
        if v != 0 {
            any = true;
            for (a, idx) in [i, j, k].into_iter().enumerate() {
                lo[a] = lo[a].min(idx);
                hi[a] = hi[a].max(idx + 1);
            }
        }
    }
    if !any {
        return Err(Error::Data("mask has no foreground; cannot crop around it".into()));
    }
    Ok(std::array::from_fn(|a| {
        lo[a].saturating_sub(margin)..(hi[a] + margin).min(shape[a])
    }))
}

/// Z-scores intensities in place. Returns true if the input was constant.
pub fn zscore(data: &mut Array3<f32>) -> bool {
    let n = data.len() as f64;
    if n == 0.0 {
        return false;
    }
    let mean = data.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = data.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < CONSTANT_STD {
        data.fill(0.0);
        return true;
    }
    data.mapv_inplace(|v| ((v as f64 - mean) / std) as f32);
    false
}

/// Optionally crops to the mask foreground (`margin` per side), then
/// z-scores the kept intensities. `crop_mask` only drives the crop; the
/// returned sample keeps `sample.mask`.
pub fn preprocess(sample: &Sample, crop_mask: Option<&LabelMask>, margin: usize) -> Result<Preprocessed> {
    let shape = sample.volume.shape();
    let region = match crop_mask {
        Some(m) => {
            m.check_aligned(&sample.volume)?;
            foreground_region(m, margin).map_err(|e| match e {
                Error::Data(msg) => Error::Data(format!("{}: {msg}", sample.id())),
                other => other,
            })?
        }
        None => [0..shape[0], 0..shape[1], 0..shape[2]],
    };
    let view = s![region[0].clone(), region[1].clone(), region[2].clone()];
    let mut data = sample.volume.data().slice(view).to_owned();
    let constant_intensity = zscore(&mut data);
    let volume = Volume::new(sample.volume.id.clone(), data, sample.volume.spacing())?;
    let mask = match &sample.mask {
        Some(m) => Some(LabelMask::new(m.data().slice(view).to_owned())?),
        None => None,
    };
    Ok(Preprocessed {
        sample: Sample::new(volume, mask)?,
        region,
        constant_intensity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blob() -> Sample {
        let data = Array3::from_shape_fn((60, 70, 40), |(i, j, k)| (i + 2 * j + 3 * k) as f32);
        let mask = Array3::from_shape_fn((60, 70, 40), |(i, j, k)| {
            u8::from((30..35).contains(&i) && (10..20).contains(&j) && (5..6).contains(&k))
        });
        Sample::new(Volume::new("b", data, [1.0; 3]).unwrap(), Some(LabelMask::new(mask).unwrap())).unwrap()
    }

    #[test]
    fn crop_region_is_clipped_box_plus_margin() {
        let s = blob();
        let p = preprocess(&s, s.mask.as_ref(), DEFAULT_CROP_MARGIN).unwrap();
        assert_eq!(p.region, [5..60, 0..45, 0..31]);
        assert_eq!(p.sample.volume.shape(), [55, 45, 31]);
        assert_eq!(p.sample.mask.as_ref().unwrap().foreground_count(), 50);
        assert!(!p.constant_intensity);
        let d = p.sample.volume.data();
        let mean = d.iter().map(|&v| v as f64).sum::<f64>() / d.len() as f64;
        let var = d.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / d.len() as f64;
        assert!(mean.abs() < 1e-5 && (var - 1.0).abs() < 1e-4);
    }

    #[test]
    fn idempotent() {
        let s = blob();
        let once = preprocess(&s, None, 0).unwrap().sample;
        let twice = preprocess(&once, None, 0).unwrap().sample;
        let rms = (once
            .volume
            .data()
            .iter()
            .zip(twice.volume.data())
            .map(|(a, b)| ((a - b) as f64).powi(2))
            .sum::<f64>()
            / once.volume.len() as f64)
            .sqrt();
        assert!(rms < 1e-6, "{rms}");
    }

    #[test]
    fn constant_and_empty_inputs() {
        let v = Volume::new("c", Array3::from_elem((4, 4, 4), 3.0), [1.0; 3]).unwrap();
        let p = preprocess(&Sample::new(v.clone(), None).unwrap(), None, 0).unwrap();
        assert!(p.constant_intensity);
        assert!(p.sample.volume.data().iter().all(|&x| x == 0.0));
        let empty = LabelMask::empty([4, 4, 4]);
        let err = preprocess(&Sample::new(v, None).unwrap(), Some(&empty), 2).unwrap_err();
        assert!(matches!(err, Error::Data(ref m) if m.contains('c')));
    }
}
