use ndarray::Array3;

use crate::error::{Error, Result};
use crate::tensor::{FeatureMap, Real};

/// A scalar intensity grid with per-axis voxel spacing (mm).
#[derive(Clone, Debug, PartialEq)]
pub struct Volume {
    pub id: String,
    data: Array3<f32>,
    spacing: [f64; 3],
}

impl Volume {
    pub fn new(id: impl Into<String>, data: Array3<f32>, spacing: [f64; 3]) -> Result<Self> {
        let id = id.into();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data(format!("volume {id} contains non-finite intensities")));
        }
        if spacing.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::Data(format!("volume {id} has non-positive spacing {spacing:?}")));
        }
        Ok(Volume {
            id,
            data: data.as_standard_layout().into_owned(),
            spacing,
        })
    }

    pub fn data(&self) -> &Array3<f32> {
        &self.data
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn shape(&self) -> [usize; 3] {
        let s = self.data.shape();
        [s[0], s[1], s[2]]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Single-channel network input.
    pub fn to_feature_map<T: Real>(&self) -> FeatureMap<T> {
        FeatureMap::from_vec(
            self.shape(),
            1,
            self.data.iter().map(|&v| T::of(v as f64)).collect(),
        )
    }
}

/// A binary ground-truth grid aligned to a [`Volume`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMask {
    data: Array3<u8>,
}

impl LabelMask {
    pub fn new(data: Array3<u8>) -> Result<Self> {
        if let Some(bad) = data.iter().find(|&&v| v > 1) {
            return Err(Error::Alignment(format!("label mask holds non-binary value {bad}")));
        }
        Ok(LabelMask {
            data: data.as_standard_layout().into_owned(),
        })
    }

    pub fn empty(shape: [usize; 3]) -> Self {
        LabelMask {
            data: Array3::zeros(shape),
        }
    }

    pub fn data(&self) -> &Array3<u8> {
        &self.data
    }

    pub fn shape(&self) -> [usize; 3] {
        let s = self.data.shape();
        [s[0], s[1], s[2]]
    }

    /// Labels in the same voxel order as [`Volume::to_feature_map`].
    pub fn labels(&self) -> &[u8] {
        self.data.as_slice().expect("standard layout")
    }

    pub fn foreground_count(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    pub fn check_aligned(&self, volume: &Volume) -> Result<()> {
        if self.shape() != volume.shape() {
            return Err(Error::Alignment(format!(
                "mask shape {:?} does not match volume {} shape {:?}",
                self.shape(),
                volume.id,
                volume.shape()
            )));
        }
        Ok(())
    }
}

/// A volume with an optional aligned mask.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub volume: Volume,
    pub mask: Option<LabelMask>,
}

impl Sample {
    pub fn new(volume: Volume, mask: Option<LabelMask>) -> Result<Self> {
        if let Some(m) = &mask {
            m.check_aligned(&volume)?;
        }
        Ok(Sample { volume, mask })
    }

    pub fn id(&self) -> &str {
        &self.volume.id
    }
}
