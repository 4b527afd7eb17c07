use crate::error::{Error, Result};
use crate::tensor::{FeatureMap, Real};

/// Per-scale class probabilities of one item, every map at input
/// resolution. Index 0 is the final full-resolution output; higher indices
/// come from deeper, coarser decoder blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionPyramid<T> {
    maps: Vec<FeatureMap<T>>,
}

impl<T: Real> PredictionPyramid<T> {
    pub fn new(maps: Vec<FeatureMap<T>>) -> Result<Self> {
        if let Some(first) = maps.first() {
            if maps.iter().any(|m| !m.same_shape(first)) {
                return Err(Error::Shape(
                    "pyramid maps must share one spatial shape and class count".into(),
                ));
            }
        }
        Ok(PredictionPyramid { maps })
    }

    pub fn scales(&self) -> usize {
        self.maps.len()
    }

    pub fn map(&self, scale: usize) -> &FeatureMap<T> {
        &self.maps[scale]
    }

    pub fn maps(&self) -> &[FeatureMap<T>] {
        &self.maps
    }

    pub fn into_maps(self) -> Vec<FeatureMap<T>> {
        self.maps
    }

    pub fn dims(&self) -> Option<[usize; 3]> {
        self.maps.first().map(FeatureMap::dims)
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.maps.len() == other.maps.len()
            && self.maps.iter().zip(&other.maps).all(|(a, b)| a.same_shape(b))
    }

    /// Largest deviation from 1 of any per-voxel class sum, over all scales.
    pub fn max_normalization_error(&self) -> f64 {
        self.maps
            .iter()
            .flat_map(|m| m.data().chunks_exact(m.channels()))
            .map(|row| (row.iter().map(|v| v.to_f64_lossy()).sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}
