use ndarray::{s, Array3};
use rand::Rng;

use super::volume::{LabelMask, Sample, Volume};
use crate::error::{Error, Result};

/// Extracts the `patch`-sized block whose lowest corner is `corner`.
pub fn crop(sample: &Sample, corner: [usize; 3], patch: [usize; 3]) -> Result<Sample> {
    let shape = sample.volume.shape();
    for a in 0..3 {
        if corner[a] + patch[a] > shape[a] {
            return Err(Error::Shape(format!(
                "patch {patch:?} at {corner:?} exceeds volume {} of shape {shape:?} on axis {a}",
                sample.id()
            )));
        }
    }
    let view = s![
        corner[0]..corner[0] + patch[0],
        corner[1]..corner[1] + patch[1],
        corner[2]..corner[2] + patch[2]
    ];
    let volume = Volume::new(
        sample.volume.id.clone(),
        sample.volume.data().slice(view).to_owned(),
        sample.volume.spacing(),
    )?;
    let mask = match &sample.mask {
        Some(m) => Some(LabelMask::new(m.data().slice(view).to_owned())?),
        None => None,
    };
    Sample::new(volume, mask)
}

/// Uniformly placed patch. Fails with a shape error when the patch does
/// not fit; see [`pad_to_at_least`].
pub fn random_crop<R: Rng + ?Sized>(sample: &Sample, patch: [usize; 3], rng: &mut R) -> Result<Sample> {
    let shape = sample.volume.shape();
    let mut corner = [0; 3];
    for a in 0..3 {
        if patch[a] == 0 || patch[a] > shape[a] {
            return Err(Error::Shape(format!(
                "patch {patch:?} does not fit volume {} of shape {shape:?} on axis {a}",
                sample.id()
            )));
        }
        corner[a] = rng.random_range(0..=shape[a] - patch[a]);
    }
    crop(sample, corner, patch)
}

/// Pads symmetrically with `fill` (mask with background) so every axis is at
/// least `min_shape`.
pub fn pad_to_at_least(sample: &Sample, min_shape: [usize; 3], fill: f32) -> Result<Sample> {
    let shape = sample.volume.shape();
    if (0..3).all(|a| shape[a] >= min_shape[a]) {
        return Ok(sample.clone());
    }
    let out: [usize; 3] = std::array::from_fn(|a| shape[a].max(min_shape[a]));
    let off: [usize; 3] = std::array::from_fn(|a| (out[a] - shape[a]) / 2);
    let view = s![
        off[0]..off[0] + shape[0],
        off[1]..off[1] + shape[1],
        off[2]..off[2] + shape[2]
    ];
    let mut data = Array3::from_elem(out, fill);
    data.slice_mut(view).assign(sample.volume.data());
    let volume = Volume::new(sample.volume.id.clone(), data, sample.volume.spacing())?;
    let mask = match &sample.mask {
        Some(m) => {
            let mut d = Array3::zeros(out);
            d.slice_mut(view).assign(m.data());
            Some(LabelMask::new(d)?)
        }
        None => None,
    };
    Sample::new(volume, mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ramp(shape: [usize; 3]) -> Sample {
        let data = Array3::from_shape_fn(shape, |(i, j, k)| (i * 100 + j * 10 + k) as f32);
        let mask = Array3::from_shape_fn(shape, |(i, _, _)| u8::from(i % 2 == 0));
        Sample::new(Volume::new("r", data, [1.0; 3]).unwrap(), Some(LabelMask::new(mask).unwrap())).unwrap()
    }

    #[test]
    fn crops_stay_aligned_and_in_bounds() {
        let s = ramp([9, 7, 5]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let c = random_crop(&s, [4, 3, 5], &mut rng).unwrap();
            assert_eq!(c.volume.shape(), [4, 3, 5]);
            let v0 = c.volume.data()[[0, 0, 0]] as usize;
            let i0 = v0 / 100;
            assert_eq!(c.mask.unwrap().data()[[0, 0, 0]], u8::from(i0 % 2 == 0));
        }
        assert!(matches!(random_crop(&s, [10, 1, 1], &mut rng), Err(Error::Shape(_))));
    }

    #[test]
    fn padding_centres_original() {
        let s = ramp([2, 3, 4]);
        let p = pad_to_at_least(&s, [4, 3, 1], -1.0).unwrap();
        assert_eq!(p.volume.shape(), [4, 3, 4]);
        assert_eq!(p.volume.data()[[0, 0, 0]], -1.0);
        assert_eq!(p.volume.data()[[1, 2, 3]], 23.0);
        assert_eq!(p.mask.unwrap().foreground_count(), 12);
    }
}
