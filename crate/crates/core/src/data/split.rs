use std::collections::HashSet;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{keyed_rng, purpose};

/// Case ids partitioned into labeled, unlabeled and test sets.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub labeled: Vec<String>,
    pub unlabeled: Vec<String>,
    pub test: Vec<String>,
}

impl DatasetSplit {
    /// Shuffles `ids` with `seed` and takes the three sets in order.
    pub fn random(ids: &[String], labeled: usize, unlabeled: usize, test: usize, seed: u64) -> Result<Self> {
        let need = labeled + unlabeled + test;
        if need > ids.len() {
            return Err(Error::Data(format!(
                "split needs {need} cases ({labeled} labeled, {unlabeled} unlabeled, {test} test) but only {} exist",
                ids.len()
            )));
        }
        let mut order = ids.to_vec();
        order.shuffle(&mut keyed_rng(seed, &[purpose::SPLIT]));
        let split = DatasetSplit {
            labeled: order[..labeled].to_vec(),
            unlabeled: order[labeled..labeled + unlabeled].to_vec(),
            test: order[labeled + unlabeled..need].to_vec(),
        };
        split.validate()?;
        Ok(split)
    }

    pub fn validate(&self) -> Result<()> {
        if self.labeled.is_empty() {
            return Err(Error::Data("split has no labeled cases".into()));
        }
        let mut seen = HashSet::new();
        for id in self.labeled.iter().chain(&self.unlabeled).chain(&self.test) {
            if !seen.insert(id) {
                return Err(Error::Data(format!("case {id:?} appears more than once in the split")));
            }
        }
        Ok(())
    }

    /// Sectioned text: `[labeled]`, `[unlabeled]`, `[test]`, one id per
    /// line, `#` comments.
    pub fn parse(text: &str) -> Result<Self> {
        let mut split = DatasetSplit::default();
        let mut section: Option<&mut Vec<String>> = None;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or_default().trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = Some(match name.trim() {
                    "labeled" => &mut split.labeled,
                    "unlabeled" => &mut split.unlabeled,
                    "test" => &mut split.test,
                    other => return Err(Error::Data(format!("split line {}: unknown section [{other}]", n + 1))),
                });
                continue;
            }
            match section.as_deref_mut() {
                Some(list) => list.push(line.to_string()),
                None => return Err(Error::Data(format!("split line {}: id {line:?} before any section", n + 1))),
            }
        }
        split.validate()?;
        Ok(split)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (name, ids) in [("labeled", &self.labeled), ("unlabeled", &self.unlabeled), ("test", &self.test)] {
            let _ = writeln!(out, "[{name}]");
            for id in ids {
                let _ = writeln!(out, "{id}");
            }
            out.push('\n');
        }
        out
    }
}
