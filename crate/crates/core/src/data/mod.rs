//! Volumes, label masks, file formats, preprocessing, patch sampling and the
//! synthetic generator.

mod crop;
mod io;
mod preprocess;
mod split;
mod synthetic;
mod volume;

pub use crop::{crop, pad_to_at_least, random_crop};
pub use io::{load_mask, load_volume, save_mask, save_volume, Format};
pub use preprocess::{foreground_region, preprocess, zscore, Preprocessed, DEFAULT_CROP_MARGIN};
pub use split::DatasetSplit;
pub use synthetic::{count_components, generate_synthetic, synthetic_case, SyntheticConfig};
pub use volume::{LabelMask, Sample, Volume};

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Synthetic,
    Directory,
}

impl DataSource {
    pub fn name(self) -> &'static str {
        match self {
            DataSource::Synthetic => "synthetic",
            DataSource::Directory => "directory",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "synthetic" => Some(DataSource::Synthetic),
            "directory" => Some(DataSource::Directory),
            _ => None,
        }
    }
}

/// Where cases come from and how they are split and prepared.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    pub source: DataSource,
    /// Case directory root for [`DataSource::Directory`].
    pub root: PathBuf,
    /// Explicit split; otherwise one is drawn from the case list.
    pub split_file: Option<PathBuf>,
    /// Image path under `root`; `{id}` is replaced by the case id.
    pub image_pattern: String,
    pub label_pattern: String,
    pub labeled: usize,
    pub unlabeled: usize,
    pub test: usize,
    pub split_seed: u64,
    pub crop_margin: usize,
    /// Training patch for directory data.
    pub patch: [usize; 3],
    pub synthetic: SyntheticConfig,
    pub synthetic_seed: u64,
    /// Training patch for synthetic data.
    pub synthetic_patch: [usize; 3],
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            source: DataSource::Directory,
            root: PathBuf::new(),
            split_file: None,
            image_pattern: "{id}/lgemri.nrrd".into(),
            label_pattern: "{id}/laendo.nrrd".into(),
            labeled: 16,
            unlabeled: 64,
            test: 20,
            split_seed: 0,
            crop_margin: DEFAULT_CROP_MARGIN,
            patch: [112, 112, 80],
            synthetic: SyntheticConfig::default(),
            synthetic_seed: 0,
            synthetic_patch: [64, 64, 64],
        }
    }
}

impl DataConfig {
    pub fn patch(&self) -> [usize; 3] {
        match self.source {
            DataSource::Synthetic => self.synthetic_patch,
            DataSource::Directory => self.patch,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.labeled == 0 {
            return Err(Error::Config("data.labeled must be at least 1".into()));
        }
        if self.patch().contains(&0) {
            return Err(Error::Config(format!("training patch {:?} has a zero extent", self.patch())));
        }
        if self.source == DataSource::Synthetic {
            self.synthetic.validate()?;
        }
        Ok(())
    }

    fn case_path(&self, pattern: &str, id: &str) -> PathBuf {
        self.root.join(pattern.replace("{id}", id))
    }
}

/// Preprocessed cases. Unlabeled cases never carry a mask.
#[derive(Clone, Debug, Default)]
pub struct Dataset {
    pub labeled: Vec<Sample>,
    pub unlabeled: Vec<Sample>,
    pub test: Vec<Sample>,
}

impl Dataset {
    pub fn split(&self) -> DatasetSplit {
        let ids = |v: &[Sample]| v.iter().map(|s| s.id().to_string()).collect();
        DatasetSplit {
            labeled: ids(&self.labeled),
            unlabeled: ids(&self.unlabeled),
            test: ids(&self.test),
        }
    }
}

/// Case ids under `root`: subdirectories that contain an image.
fn discover(config: &DataConfig) -> Result<Vec<String>> {
    let entries = std::fs::read_dir(&config.root).map_err(|e| Error::io(&config.root, e))?;
    let mut ids: Vec<String> = entries
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().into_string().ok())
        .filter(|id| config.case_path(&config.image_pattern, id).is_file())
        .collect();
    ids.sort();
    if ids.is_empty() {
        return Err(Error::Data(format!(
            "no cases matching {:?} under {}",
            config.image_pattern,
            config.root.display()
        )));
    }
    Ok(ids)
}

fn read_split(path: &Path) -> Result<DatasetSplit> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    DatasetSplit::parse(&text)
}

fn finish(p: Preprocessed, patch: [usize; 3]) -> Result<Sample> {
    pad_to_at_least(&p.sample, patch, 0.0)
}

/// Loads and preprocesses every case named by the split.
pub fn load_dataset(config: &DataConfig) -> Result<Dataset> {
    config.validate()?;
    let patch = config.patch();
    match config.source {
        DataSource::Synthetic => {
            let total = config.labeled + config.unlabeled + config.test;
            let cases = generate_synthetic(&config.synthetic, config.synthetic_seed, total)?;
            let ids: Vec<String> = cases.iter().map(|c| c.id().to_string()).collect();
            let split = match &config.split_file {
                Some(p) => read_split(p)?,
                None => DatasetSplit::random(&ids, config.labeled, config.unlabeled, config.test, config.split_seed)?,
            };
            let pick = |names: &[String], keep_mask: bool| -> Result<Vec<Sample>> {
                names
                    .iter()
                    .map(|n| {
                        let c = cases
                            .iter()
                            .find(|c| c.id() == n)
                            .ok_or_else(|| Error::Data(format!("split names unknown synthetic case {n:?}")))?;
                        let mut p = preprocess(c, None, 0)?;
                        if !keep_mask {
                            p.sample.mask = None;
                        }
                        finish(p, patch)
                    })
                    .collect()
            };
            Ok(Dataset {
                labeled: pick(&split.labeled, true)?,
                unlabeled: pick(&split.unlabeled, false)?,
                test: pick(&split.test, true)?,
            })
        }
        DataSource::Directory => {
            let split = match &config.split_file {
                Some(p) => read_split(p)?,
                None => DatasetSplit::random(
                    &discover(config)?,
                    config.labeled,
                    config.unlabeled,
                    config.test,
                    config.split_seed,
                )?,
            };
            let load = |names: &[String], labeled: bool| -> Result<Vec<Sample>> {
                names
                    .par_iter()
                    .map(|id| {
                        let volume = load_volume(&config.case_path(&config.image_pattern, id), id.clone())?;
                        let label_path = config.case_path(&config.label_pattern, id);
                        let mask = if labeled || label_path.is_file() {
                            let m = load_mask(&label_path)?;
                            m.check_aligned(&volume)?;
                            Some(m)
                        } else {
                            None
                        };
                        let sample = Sample::new(volume, if labeled { mask.clone() } else { None })?;
                        finish(preprocess(&sample, mask.as_ref(), config.crop_margin)?, patch)
                    })
                    .collect()
            };
            Ok(Dataset {
                labeled: load(&split.labeled, true)?,
                unlabeled: load(&split.unlabeled, false)?,
                test: load(&split.test, true)?,
            })
        }
    }
}
