use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ops::Activation;

/// Normalization applied after every convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Normalization {
    None,
    /// Per-channel statistics (group norm with one channel per group).
    Instance,
    /// Group norm with the given number of groups.
    Group(usize),
}

impl fmt::Display for Normalization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Normalization::None => f.write_str("none"),
            Normalization::Instance => f.write_str("instance"),
            Normalization::Group(g) => write!(f, "group:{g}"),
        }
    }
}

impl FromStr for Normalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Normalization::None),
            "instance" => Ok(Normalization::Instance),
            _ => s
                .strip_prefix("group:")
                .and_then(|g| g.parse().ok())
                .map(Normalization::Group)
                .ok_or_else(|| Error::Config(format!("unknown normalization `{s}`"))),
        }
    }
}

impl TryFrom<String> for Normalization {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Normalization> for String {
    fn from(n: Normalization) -> String {
        n.to_string()
    }
}

/// Architecture of the encoder-decoder backbone.
///
/// `encoder_depths[l]` is the number of convolution units at resolution
/// level `l` (level 0 is full resolution). There are
/// `encoder_depths.len() - 1` downsampling steps and as many decoder
/// blocks; decoder block `l` mirrors encoder level `l`. Auxiliary heads
/// sit on decoder levels `0..num_scales`, so scale `s` is predicted from
/// features at `1 / 2^s` resolution.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub in_channels: usize,
    pub num_classes: usize,
    pub num_scales: usize,
    pub base_channels: usize,
    pub encoder_depths: Vec<usize>,
    pub kernel_size: usize,
    pub norm: Normalization,
    pub activation: Activation,
    pub residual: bool,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        NetworkSpec {
            in_channels: 1,
            num_classes: 2,
            num_scales: 4,
            base_channels: 16,
            encoder_depths: vec![1, 2, 3, 3, 3],
            kernel_size: 3,
            norm: Normalization::Instance,
            activation: Activation::Relu,
            residual: true,
        }
    }
}

impl NetworkSpec {
    pub fn levels(&self) -> usize {
        self.encoder_depths.len()
    }

    pub fn decoder_blocks(&self) -> usize {
        self.levels().saturating_sub(1)
    }

    /// Every spatial axis of an input must be a multiple of this.
    pub fn required_divisor(&self) -> usize {
        1 << self.decoder_blocks()
    }

    pub fn channels_at(&self, level: usize) -> usize {
        self.base_channels << level
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.in_channels == 0 {
            return fail("in_channels must be positive".into());
        }
        if self.base_channels == 0 {
            return fail("base_channels must be positive".into());
        }
        if self.num_classes < 2 {
            return fail(format!("num_classes must be at least 2, got {}", self.num_classes));
        }
        if self.levels() < 2 {
            return fail("at least two encoder levels are required".into());
        }
        if self.encoder_depths.contains(&0) {
            return fail("every encoder level needs at least one convolution".into());
        }
        if self.num_scales == 0 {
            return fail("num_scales must be at least 1".into());
        }
        if self.num_scales > self.decoder_blocks() {
            return fail(format!(
                "num_scales {} exceeds the {} decoder blocks",
                self.num_scales,
                self.decoder_blocks()
            ));
        }
        if self.kernel_size % 2 == 0 {
            return fail(format!("kernel_size must be odd, got {}", self.kernel_size));
        }
        if let Normalization::Group(g) = self.norm {
            if g == 0 || (0..self.levels()).any(|l| self.channels_at(l) % g != 0) {
                return fail(format!("group count {g} does not divide every level width"));
            }
        }
        Ok(())
    }
}
