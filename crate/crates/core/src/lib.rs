//! Semi-supervised volumetric segmentation with a hierarchical consistency
//! regularized mean teacher.
//!
//! The student is a multi-scale deeply supervised 3D encoder-decoder
//! ([`backbone`]). It is trained on labeled volumes with a weighted
//! dice + cross-entropy loss at every scale, and on all volumes with a
//! weighted per-scale consistency loss against a teacher that tracks the
//! student by exponential moving average ([`mean_teacher`]). The consistency
//! weight follows a Gaussian ramp-up ([`losses`]). [`trainer`] runs the SGD
//! loop, [`data`] handles volumes and synthetic data, and [`metrics`]
//! scores predictions with Dice, Jaccard, ASD and 95HD.

pub mod backbone;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod losses;
pub mod mean_teacher;
pub mod metrics;
pub mod ops;
pub mod rng;
pub mod tensor;
pub mod trainer;

pub use backbone::{Network, NetworkSpec, ParameterVector, PredictionPyramid};
pub use error::{Error, Result};
pub use losses::{RampSchedule, ScaleWeights};
pub use mean_teacher::{PerturbationSpec, TeacherState};
pub use tensor::{FeatureMap, Real};
pub use trainer::{Mode, TrainConfig, TrainReport};
