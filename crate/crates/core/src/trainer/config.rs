//! Training configuration as flat `key = value` text.
//!
//! Unknown keys are errors. [`TrainConfig::to_text`] writes every key, so a
//! saved snapshot reproduces a run without relying on defaults.

use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::backbone::{NetworkSpec, Normalization};
use crate::data::{DataConfig, DataSource};
use crate::error::{Error, Result};
use crate::losses::{RampSchedule, ScaleWeights};
use crate::mean_teacher::NoiseKind;
use crate::metrics::EmptyPolicy;
use crate::ops::Activation;

/// Which loss components are active.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModeFlags {
    /// Supervise every scale, weighted by the scale weights.
    pub use_hs: bool,
    /// Consistency on every scale, weighted by the scale weights.
    pub use_hu: bool,
    /// Train against an EMA teacher; without it there is no consistency term.
    pub use_teacher: bool,
}

/// Named flag presets, one per ablation row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Vnet,
    VnetHs,
    Mt,
    MtHu,
    MtHs,
    MtHuHs,
}

impl Mode {
    pub const ALL: [Mode; 6] = [Mode::Vnet, Mode::VnetHs, Mode::Mt, Mode::MtHu, Mode::MtHs, Mode::MtHuHs];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Vnet => "vnet",
            Mode::VnetHs => "vnet_hs",
            Mode::Mt => "mt",
            Mode::MtHu => "mt_hu",
            Mode::MtHs => "mt_hs",
            Mode::MtHuHs => "mt_hu_hs",
        }
    }

    /// Row label in the style of an ablation table.
    pub fn label(self) -> &'static str {
        match self {
            Mode::Vnet => "V-Net",
            Mode::VnetHs => "V-Net + HS",
            Mode::Mt => "MT",
            Mode::MtHu => "MT + HU",
            Mode::MtHs => "MT + HS",
            Mode::MtHuHs => "MT + HU + HS",
        }
    }

    pub fn flags(self) -> ModeFlags {
        let (use_hs, use_hu, use_teacher) = match self {
            Mode::Vnet => (false, false, false),
            Mode::VnetHs => (true, false, false),
            Mode::Mt => (false, false, true),
            Mode::MtHu => (false, true, true),
            Mode::MtHs => (true, false, true),
            Mode::MtHuHs => (true, true, true),
        };
        ModeFlags {
            use_hs,
            use_hu,
            use_teacher,
        }
    }

    pub fn from_flags(flags: ModeFlags) -> Option<Mode> {
        Mode::ALL.into_iter().find(|m| m.flags() == flags)
    }

    /// Comma-separated list; `all` expands to every mode.
    pub fn parse_list(s: &str) -> Result<Vec<Mode>> {
        if s.trim() == "all" {
            return Ok(Mode::ALL.to_vec());
        }
        let modes: Vec<Mode> = s
            .split(',')
            .filter(|p| !p.trim().is_empty())
            .map(|p| p.trim().parse())
            .collect::<Result<_>>()?;
        if modes.is_empty() {
            return Err(Error::Config("mode list is empty".into()));
        }
        Ok(modes)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| {
            Error::Config(format!(
                "unknown mode {s:?} (expected one of vnet, vnet_hs, mt, mt_hu, mt_hs, mt_hu_hs)"
            ))
        })
    }
}

/// Network evaluated at test time.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalNetwork {
    Student,
    Teacher,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub total_iterations: usize,
    pub initial_lr: f64,
    pub lr_decay_factor: f64,
    pub lr_decay_every: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub labeled_per_batch: usize,
    pub eta: f64,
    /// Apply the EMA update after the SGD step (otherwise before it).
    pub ema_after_step: bool,
    /// Use `min(1 - 1/(step + 1), eta)` instead of a constant rate.
    pub eta_warmup: bool,
    pub lambda_max: f64,
    /// Ramp length; `None` means `total_iterations`.
    pub rampup_iterations: Option<usize>,
    pub scale_weights: Vec<f64>,
    pub flags: ModeFlags,
    pub network: NetworkSpec,
    pub data: DataConfig,
    pub noise: NoiseKind,
    pub noise_sigma: f64,
    pub noise_clip: f64,
    /// Seeds network initialization, batch sampling, crops and noise.
    pub seed: u64,
    /// Iterations between checkpoints; 0 keeps only the final one.
    pub checkpoint_every: usize,
    /// Sliding-window stride; `None` means half the patch.
    pub eval_stride: Option<[usize; 3]>,
    pub eval_network: EvalNetwork,
    pub eval_spacing_aware: bool,
    pub eval_empty_policy: EmptyPolicy,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            total_iterations: 6000,
            initial_lr: 0.01,
            lr_decay_factor: 0.1,
            lr_decay_every: 2500,
            momentum: 0.9,
            weight_decay: 1e-4,
            batch_size: 4,
            labeled_per_batch: 2,
            eta: 0.99,
            ema_after_step: true,
            eta_warmup: false,
            lambda_max: 0.1,
            rampup_iterations: None,
            scale_weights: vec![0.5, 0.4, 0.05, 0.05],
            flags: Mode::MtHuHs.flags(),
            network: NetworkSpec::default(),
            data: DataConfig::default(),
            noise: NoiseKind::Gaussian,
            noise_sigma: 0.1,
            noise_clip: 0.2,
            seed: 1337,
            checkpoint_every: 1000,
            eval_stride: None,
            eval_network: EvalNetwork::Student,
            eval_spacing_aware: false,
            eval_empty_policy: EmptyPolicy::Exclude,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(|v| parse_value(key, v.trim()))
        .collect()
}

fn parse_triple(key: &str, value: &str) -> Result<[usize; 3]> {
    let v: Vec<usize> = parse_list(key, value)?;
    v.try_into()
        .map_err(|_| Error::Config(format!("{key} needs three comma-separated values, got {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::Config(format!("invalid boolean {value:?} for {key}"))),
    }
}

fn join<T: fmt::Display>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl TrainConfig {
    /// Preset for a named ablation mode on top of the defaults.
    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.flags = mode.flags();
        self
    }

    pub fn mode(&self) -> Option<Mode> {
        Mode::from_flags(self.flags)
    }

    pub fn patch(&self) -> [usize; 3] {
        self.data.patch()
    }

    pub fn ramp(&self) -> RampSchedule {
        RampSchedule {
            lambda_max: self.lambda_max,
            t_max: self.rampup_iterations.unwrap_or(self.total_iterations),
        }
    }

    /// Weights for the supervised loss under the current flags.
    pub fn supervised_weights(&self) -> Result<ScaleWeights> {
        if self.flags.use_hs {
            ScaleWeights::new(self.scale_weights.clone())
        } else {
            Ok(ScaleWeights::final_only(self.network.num_scales))
        }
    }

    /// Weights for the consistency loss, `None` without a teacher.
    pub fn consistency_weights(&self) -> Result<Option<ScaleWeights>> {
        if !self.flags.use_teacher {
            return Ok(None);
        }
        if self.flags.use_hu {
            ScaleWeights::new(self.scale_weights.clone()).map(Some)
        } else {
            Ok(Some(ScaleWeights::final_only(self.network.num_scales)))
        }
    }

    /// Items per batch that are actually used: unlabeled slots are dropped
    /// when there is no teacher.
    pub fn unlabeled_per_batch(&self) -> usize {
        if self.flags.use_teacher {
            self.batch_size - self.labeled_per_batch
        } else {
            0
        }
    }

    pub fn eval_stride(&self) -> [usize; 3] {
        self.eval_stride.unwrap_or_else(|| crate::metrics::default_stride(self.patch()))
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let k = key.trim();
        let d = &mut self.data;
        let n = &mut self.network;
        match k {
            "total_iterations" => self.total_iterations = parse_value(k, value)?,
            "optim.lr" => self.initial_lr = parse_value(k, value)?,
            "optim.lr_decay_factor" => self.lr_decay_factor = parse_value(k, value)?,
            "optim.lr_decay_every" => self.lr_decay_every = parse_value(k, value)?,
            "optim.momentum" => self.momentum = parse_value(k, value)?,
            "optim.weight_decay" => self.weight_decay = parse_value(k, value)?,
            "batch.size" => self.batch_size = parse_value(k, value)?,
            "batch.labeled" => self.labeled_per_batch = parse_value(k, value)?,
            "teacher.eta" => self.eta = parse_value(k, value)?,
            "teacher.ema_after_step" => self.ema_after_step = parse_bool(k, value)?,
            "teacher.eta_warmup" => self.eta_warmup = parse_bool(k, value)?,
            "loss.lambda_max" => self.lambda_max = parse_value(k, value)?,
            "loss.rampup_iterations" => {
                self.rampup_iterations = if value == "auto" { None } else { Some(parse_value(k, value)?) }
            }
            "loss.scale_weights" => self.scale_weights = parse_list(k, value)?,
            "mode" => self.flags = value.parse::<Mode>()?.flags(),
            "mode.use_hs" => self.flags.use_hs = parse_bool(k, value)?,
            "mode.use_hu" => self.flags.use_hu = parse_bool(k, value)?,
            "mode.use_teacher" => self.flags.use_teacher = parse_bool(k, value)?,
            "net.in_channels" => n.in_channels = parse_value(k, value)?,
            "net.num_classes" => n.num_classes = parse_value(k, value)?,
            "net.num_scales" => n.num_scales = parse_value(k, value)?,
            "net.base_channels" => n.base_channels = parse_value(k, value)?,
            "net.encoder_depths" => n.encoder_depths = parse_list(k, value)?,
            "net.kernel_size" => n.kernel_size = parse_value(k, value)?,
            "net.norm" => n.norm = value.parse::<Normalization>()?,
            "net.activation" => {
                n.activation = Activation::parse(value)
                    .ok_or_else(|| Error::Config(format!("unknown activation {value:?}")))?
            }
            "net.residual" => n.residual = parse_bool(k, value)?,
            "data.source" => {
                d.source = DataSource::parse(value)
                    .ok_or_else(|| Error::Config(format!("unknown data source {value:?}")))?
            }
            "data.synthetic" => {
                d.source = if parse_bool(k, value)? {
                    DataSource::Synthetic
                } else {
                    DataSource::Directory
                }
            }
            "data.root" => d.root = PathBuf::from(value),
            "data.split_file" => d.split_file = (!value.is_empty()).then(|| PathBuf::from(value)),
            "data.image_pattern" => d.image_pattern = value.to_string(),
            "data.label_pattern" => d.label_pattern = value.to_string(),
            "data.labeled" => d.labeled = parse_value(k, value)?,
            "data.unlabeled" => d.unlabeled = parse_value(k, value)?,
            "data.test" => d.test = parse_value(k, value)?,
            "data.split_seed" => d.split_seed = parse_value(k, value)?,
            "data.crop_margin" => d.crop_margin = parse_value(k, value)?,
            "data.patch" => d.patch = parse_triple(k, value)?,
            "data.synthetic.grid" => d.synthetic.grid = parse_triple(k, value)?,
            "data.synthetic.patch" => d.synthetic_patch = parse_triple(k, value)?,
            "data.synthetic.seed" => d.synthetic_seed = parse_value(k, value)?,
            "data.synthetic.noise" => d.synthetic.noise_sigma = parse_value(k, value)?,
            "data.synthetic.bias" => d.synthetic.bias_strength = parse_value(k, value)?,
            "data.synthetic.distractors" => d.synthetic.distractors = parse_value(k, value)?,
            "data.synthetic.distractor_contrast" => {
                let v: Vec<f64> = parse_list(k, value)?;
                d.synthetic.distractor_contrast = v
                    .try_into()
                    .map_err(|_| Error::Config(format!("{k} needs two values, got {value:?}")))?;
            }
            "data.synthetic.edge_softness" => d.synthetic.edge_softness = parse_value(k, value)?,
            "data.synthetic.min_fraction" => d.synthetic.min_fraction = parse_value(k, value)?,
            "data.synthetic.max_fraction" => d.synthetic.max_fraction = parse_value(k, value)?,
            "data.synthetic.spacing" => {
                let v: Vec<f64> = parse_list(k, value)?;
                d.synthetic.spacing = v
                    .try_into()
                    .map_err(|_| Error::Config(format!("{k} needs three values, got {value:?}")))?;
            }
            "perturb.kind" => {
                self.noise = NoiseKind::parse(value)
                    .ok_or_else(|| Error::Config(format!("unknown perturbation {value:?}")))?
            }
            "perturb.sigma" => self.noise_sigma = parse_value(k, value)?,
            "perturb.clip" => self.noise_clip = parse_value(k, value)?,
            "seed" => self.seed = parse_value(k, value)?,
            "checkpoint.every" => self.checkpoint_every = parse_value(k, value)?,
            "eval.stride" => {
                self.eval_stride = if value == "half" { None } else { Some(parse_triple(k, value)?) }
            }
            "eval.network" => {
                self.eval_network = match value {
                    "student" => EvalNetwork::Student,
                    "teacher" => EvalNetwork::Teacher,
                    _ => return Err(Error::Config(format!("eval.network must be student or teacher, got {value:?}"))),
                }
            }
            "eval.spacing_aware" => self.eval_spacing_aware = parse_bool(k, value)?,
            "eval.empty_policy" => {
                self.eval_empty_policy = EmptyPolicy::parse(value)
                    .ok_or_else(|| Error::Config(format!("eval.empty_policy must be exclude or propagate, got {value:?}")))?
            }
            _ => return Err(Error::Config(format!("unknown configuration key {k:?}"))),
        }
        Ok(())
    }

    /// Applies `key=value` (or `key = value`) assignments.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
        self.set(k, v)
    }

    /// Parses config text on top of the defaults. `#` starts a comment.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or_default().trim();
            if line.is_empty() {
                continue;
            }
            self.apply_override(line).map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("line {}: {m}", n + 1)),
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let d = &self.data;
        let n = &self.network;
        let s = &d.synthetic;
        let mut o = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(o, "{k} = {v}");
        };
        kv("total_iterations", self.total_iterations.to_string());
        kv("optim.lr", self.initial_lr.to_string());
        kv("optim.lr_decay_factor", self.lr_decay_factor.to_string());
        kv("optim.lr_decay_every", self.lr_decay_every.to_string());
        kv("optim.momentum", self.momentum.to_string());
        kv("optim.weight_decay", self.weight_decay.to_string());
        kv("batch.size", self.batch_size.to_string());
        kv("batch.labeled", self.labeled_per_batch.to_string());
        kv("teacher.eta", self.eta.to_string());
        kv("teacher.ema_after_step", self.ema_after_step.to_string());
        kv("teacher.eta_warmup", self.eta_warmup.to_string());
        kv("loss.lambda_max", self.lambda_max.to_string());
        kv(
            "loss.rampup_iterations",
            self.rampup_iterations.map_or("auto".into(), |v| v.to_string()),
        );
        kv("loss.scale_weights", join(&self.scale_weights));
        kv("mode.use_hs", self.flags.use_hs.to_string());
        kv("mode.use_hu", self.flags.use_hu.to_string());
        kv("mode.use_teacher", self.flags.use_teacher.to_string());
        kv("net.in_channels", n.in_channels.to_string());
        kv("net.num_classes", n.num_classes.to_string());
        kv("net.num_scales", n.num_scales.to_string());
        kv("net.base_channels", n.base_channels.to_string());
        kv("net.encoder_depths", join(&n.encoder_depths));
        kv("net.kernel_size", n.kernel_size.to_string());
        kv("net.norm", n.norm.to_string());
        kv("net.activation", n.activation.name().to_string());
        kv("net.residual", n.residual.to_string());
        kv("data.source", d.source.name().to_string());
        kv("data.root", d.root.display().to_string());
        kv(
            "data.split_file",
            d.split_file.as_ref().map_or(String::new(), |p| p.display().to_string()),
        );
        kv("data.image_pattern", d.image_pattern.clone());
        kv("data.label_pattern", d.label_pattern.clone());
        kv("data.labeled", d.labeled.to_string());
        kv("data.unlabeled", d.unlabeled.to_string());
        kv("data.test", d.test.to_string());
        kv("data.split_seed", d.split_seed.to_string());
        kv("data.crop_margin", d.crop_margin.to_string());
        kv("data.patch", join(&d.patch));
        kv("data.synthetic.grid", join(&s.grid));
        kv("data.synthetic.patch", join(&d.synthetic_patch));
        kv("data.synthetic.seed", d.synthetic_seed.to_string());
        kv("data.synthetic.noise", s.noise_sigma.to_string());
        kv("data.synthetic.bias", s.bias_strength.to_string());
        kv("data.synthetic.distractors", s.distractors.to_string());
        kv("data.synthetic.distractor_contrast", join(&s.distractor_contrast));
        kv("data.synthetic.edge_softness", s.edge_softness.to_string());
        kv("data.synthetic.min_fraction", s.min_fraction.to_string());
        kv("data.synthetic.max_fraction", s.max_fraction.to_string());
        kv("data.synthetic.spacing", join(&s.spacing));
        kv("perturb.kind", self.noise.name().to_string());
        kv("perturb.sigma", self.noise_sigma.to_string());
        kv("perturb.clip", self.noise_clip.to_string());
        kv("seed", self.seed.to_string());
        kv("checkpoint.every", self.checkpoint_every.to_string());
        kv("eval.stride", self.eval_stride.map_or("half".into(), |v| join(&v)));
        kv(
            "eval.network",
            match self.eval_network {
                EvalNetwork::Student => "student",
                EvalNetwork::Teacher => "teacher",
            }
            .into(),
        );
        kv("eval.spacing_aware", self.eval_spacing_aware.to_string());
        kv("eval.empty_policy", self.eval_empty_policy.name().to_string());
        o
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        self.network.validate()?;
        self.data.validate()?;
        if self.total_iterations == 0 {
            return fail("total_iterations must be positive".into());
        }
        if !(self.initial_lr > 0.0) || !self.initial_lr.is_finite() {
            return fail(format!("optim.lr must be positive, got {}", self.initial_lr));
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor <= 1.0) {
            return fail(format!("optim.lr_decay_factor must be in (0, 1], got {}", self.lr_decay_factor));
        }
        if self.lr_decay_every == 0 {
            return fail("optim.lr_decay_every must be positive".into());
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return fail(format!("optim.momentum must be in [0, 1), got {}", self.momentum));
        }
        if !(self.weight_decay >= 0.0) {
            return fail(format!("optim.weight_decay must be >= 0, got {}", self.weight_decay));
        }
        if self.batch_size == 0 || self.labeled_per_batch == 0 {
            return fail("batch.size and batch.labeled must be positive".into());
        }
        if self.labeled_per_batch > self.batch_size {
            return fail(format!(
                "batch.labeled ({}) exceeds batch.size ({})",
                self.labeled_per_batch, self.batch_size
            ));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return fail(format!("teacher.eta must be in [0, 1], got {}", self.eta));
        }
        if !(self.lambda_max >= 0.0) || !self.lambda_max.is_finite() {
            return fail(format!("loss.lambda_max must be >= 0, got {}", self.lambda_max));
        }
        if self.scale_weights.len() != self.network.num_scales {
            return fail(format!(
                "loss.scale_weights has {} entries but net.num_scales is {}",
                self.scale_weights.len(),
                self.network.num_scales
            ));
        }
        ScaleWeights::new(self.scale_weights.clone())?;
        if self.flags.use_hu && !self.flags.use_teacher {
            return fail("mode.use_hu requires mode.use_teacher".into());
        }
        if self.noise == NoiseKind::Gaussian && (!(self.noise_sigma >= 0.0) || !(self.noise_clip > 0.0)) {
            return fail("perturb.sigma must be >= 0 and perturb.clip > 0".into());
        }
        let div = self.network.required_divisor();
        let patch = self.patch();
        if let Some(a) = (0..3).find(|&a| patch[a] % div != 0) {
            return fail(format!(
                "training patch {patch:?} axis {a} is not a multiple of {div} required by the network depth"
            ));
        }
        let stride = self.eval_stride();
        if (0..3).any(|a| stride[a] == 0 || stride[a] > patch[a]) {
            return fail(format!("eval.stride {stride:?} must be in 1..=patch {patch:?}"));
        }
        if self.data.source == DataSource::Synthetic {
            let grid = self.data.synthetic.grid;
            if let Some(a) = (0..3).find(|&a| grid[a] % div != 0) {
                return fail(format!("synthetic grid {grid:?} axis {a} is not a multiple of {div}"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn defaults_match_the_published_protocol() {
        let c = TrainConfig::default();
        assert_eq!((c.total_iterations, c.initial_lr, c.lr_decay_factor, c.lr_decay_every), (6000, 0.01, 0.1, 2500));
        assert_eq!((c.batch_size, c.labeled_per_batch, c.eta, c.lambda_max), (4, 2, 0.99, 0.1));
        assert_eq!(c.scale_weights, vec![0.5, 0.4, 0.05, 0.05]);
        assert_eq!(c.network.num_scales, 4);
        assert_eq!(c.patch(), [112, 112, 80]);
        assert_eq!(c.mode(), Some(Mode::MtHuHs));
        c.validate().unwrap();
    }

    #[test]
    fn modes_are_flag_presets() {
        for m in Mode::ALL {
            assert_eq!(Mode::from_flags(m.flags()), Some(m));
            assert_eq!(m.name().parse::<Mode>().unwrap(), m);
        }
        let mut c = TrainConfig::default();
        c.set("mode", "mt_hs").unwrap();
        assert_eq!(c.flags, Mode::MtHs.flags());
        assert!(matches!(c.set("mode", "mt_xx"), Err(Error::Config(_))));
        assert_eq!(Mode::parse_list("all").unwrap().len(), 6);
        c.set("mode", "vnet").unwrap();
        c.set("mode.use_hu", "true").unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn text_round_trip_and_errors() {
        let mut c = TrainConfig::default();
        for kv in [
            "data.synthetic=true",
            "data.split_file=/tmp/s.txt",
            "eval.stride=8,8,4",
            "loss.rampup_iterations=40",
            "net.norm=group:4",
            "net.activation=elu",
            "optim.lr = 0.0123456789012345",
            "teacher.eta=0.999",
        ] {
            c.apply_override(kv).unwrap();
        }
        assert_eq!(TrainConfig::from_text(&c.to_text()).unwrap(), c);
        assert_eq!(TrainConfig::from_text(&TrainConfig::default().to_text()).unwrap(), TrainConfig::default());
        let err = TrainConfig::from_text("seed = 1\nnot.a.key = 3\n").unwrap_err().to_string();
        assert!(err.contains("line 2") && err.contains("not.a.key"), "{err}");
        assert!(c.apply_override("batch.size").is_err());
        assert!(c.set("batch.size", "four").is_err());
    }

    #[test]
    fn flag_dependent_weights() {
        let c = TrainConfig::default().with_mode(Mode::Mt);
        assert_eq!(c.supervised_weights().unwrap().alphas(), &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(c.consistency_weights().unwrap().unwrap().alphas(), &[1.0, 0.0, 0.0, 0.0]);
        let full = TrainConfig::default();
        assert_eq!(full.consistency_weights().unwrap().unwrap().alphas(), &[0.5, 0.4, 0.05, 0.05]);
        assert!(TrainConfig::default().with_mode(Mode::VnetHs).consistency_weights().unwrap().is_none());
        assert_eq!(TrainConfig::default().with_mode(Mode::Vnet).unlabeled_per_batch(), 0);
    }

    proptest! {
        #[test]
        fn round_trip_random_values(
            lr in 1e-6f64..1.0, eta in 0.0f64..=1.0, seed in any::<u64>(), iters in 1usize..100_000,
            hs in any::<bool>(), teacher in any::<bool>(), sigma in 0.0f64..1.0,
            w in proptest::collection::vec(0.0f64..1.0, 4),
        ) {
            let mut c = TrainConfig {
                initial_lr: lr, eta, seed, total_iterations: iters, noise_sigma: sigma,
                scale_weights: w, ..TrainConfig::default()
            };
            c.flags.use_hs = hs;
            c.flags.use_teacher = teacher;
            prop_assert_eq!(TrainConfig::from_text(&c.to_text()).unwrap(), c);
        }
    }
}
