use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::distance::surface_distances;
use super::overlap::dice_jaccard;
use super::sliding::{sliding_window_predict, PatchPredictor};
use crate::data::{LabelMask, Sample};
use crate::error::{Error, Result};

/// Written in place of a surface distance that is undefined.
pub const UNDEFINED: &str = "undefined";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Dice,
    Jaccard,
    Asd,
    Hd95,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Dice, Metric::Jaccard, Metric::Asd, Metric::Hd95];

    pub fn key(self) -> &'static str {
        match self {
            Metric::Dice => "dice",
            Metric::Jaccard => "jaccard",
            Metric::Asd => "asd",
            Metric::Hd95 => "hd95",
        }
    }

    fn heading(self) -> &'static str {
        match self {
            Metric::Dice => "Dice (%)",
            Metric::Jaccard => "Jaccard (%)",
            Metric::Asd => "ASD (voxel)",
            Metric::Hd95 => "95HD (voxel)",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Metric::ALL.into_iter().find(|m| m.key() == s.trim().to_ascii_lowercase())
    }

    /// Comma-separated list such as `dice,jaccard`.
    pub fn parse_list(s: &str) -> Result<Vec<Metric>> {
        let list: Vec<Metric> = s
            .split(',')
            .filter(|p| !p.trim().is_empty())
            .map(|p| Metric::parse(p).ok_or_else(|| Error::Config(format!("unknown metric {p:?}"))))
            .collect::<Result<_>>()?;
        if list.is_empty() {
            return Err(Error::Config("metric list is empty".into()));
        }
        Ok(list)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseScore {
    pub id: String,
    pub dice: f64,
    pub jaccard: f64,
    /// `None` when either mask is empty.
    pub asd: Option<f64>,
    pub hd95: Option<f64>,
    pub empty_prediction: bool,
    pub empty_ground_truth: bool,
    /// The case was smaller than the inference patch.
    pub padded: bool,
}

impl CaseScore {
    fn value(&self, m: Metric) -> Option<f64> {
        match m {
            Metric::Dice => Some(self.dice),
            Metric::Jaccard => Some(self.jaccard),
            Metric::Asd => self.asd,
            Metric::Hd95 => self.hd95,
        }
    }

    fn flags(&self) -> String {
        let mut f = Vec::new();
        if self.empty_prediction {
            f.push("empty_prediction");
        }
        if self.empty_ground_truth {
            f.push("empty_ground_truth");
        }
        if self.padded {
            f.push("padded");
        }
        f.join(";")
    }
}

pub fn score_case(id: &str, pred: &LabelMask, gt: &LabelMask, spacing: [f64; 3]) -> Result<CaseScore> {
    let (dice, jaccard) = dice_jaccard(pred, gt)?;
    let sd = surface_distances(pred, gt, spacing)?;
    Ok(CaseScore {
        id: id.to_string(),
        dice,
        jaccard,
        asd: sd.map(|d| d.asd),
        hd95: sd.map(|d| d.hd95),
        empty_prediction: pred.foreground_count() == 0,
        empty_ground_truth: gt.foreground_count() == 0,
        padded: false,
    })
}

/// How undefined surface distances enter the mean.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmptyPolicy {
    /// Average over the cases where the metric is defined.
    Exclude,
    /// Any undefined case makes the mean undefined.
    Propagate,
}

impl EmptyPolicy {
    pub fn name(self) -> &'static str {
        match self {
            EmptyPolicy::Exclude => "exclude",
            EmptyPolicy::Propagate => "propagate",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "exclude" => Some(EmptyPolicy::Exclude),
            "propagate" => Some(EmptyPolicy::Propagate),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanScores {
    pub dice: f64,
    pub jaccard: f64,
    pub asd: Option<f64>,
    pub hd95: Option<f64>,
    pub cases: usize,
    /// Cases with undefined surface distances.
    pub undefined: usize,
}

impl MeanScores {
    fn value(&self, m: Metric) -> Option<f64> {
        match m {
            Metric::Dice => Some(self.dice),
            Metric::Jaccard => Some(self.jaccard),
            Metric::Asd => self.asd,
            Metric::Hd95 => self.hd95,
        }
    }
}

pub fn aggregate(scores: &[CaseScore], policy: EmptyPolicy) -> Result<MeanScores> {
    if scores.is_empty() {
        return Err(Error::Data("no cases to aggregate".into()));
    }
    let n = scores.len() as f64;
    let defined: Vec<&CaseScore> = scores.iter().filter(|s| s.asd.is_some()).collect();
    let mean_of = |f: fn(&CaseScore) -> Option<f64>| -> Option<f64> {
        if defined.is_empty() || (policy == EmptyPolicy::Propagate && defined.len() < scores.len()) {
            None
        } else {
            Some(defined.iter().filter_map(|s| f(s)).sum::<f64>() / defined.len() as f64)
        }
    };
    Ok(MeanScores {
        dice: scores.iter().map(|s| s.dice).sum::<f64>() / n,
        jaccard: scores.iter().map(|s| s.jaccard).sum::<f64>() / n,
        asd: mean_of(|s| s.asd),
        hd95: mean_of(|s| s.hd95),
        cases: scores.len(),
        undefined: scores.len() - defined.len(),
    })
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| UNDEFINED.to_string(), |x| format!("{x:.6}"))
}

/// One row per case: id, the selected metrics, then flags.
pub fn write_case_csv<W: Write>(out: W, scores: &[CaseScore], metrics: &[Metric]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["case_id"];
    header.extend(metrics.iter().map(|m| m.key()));
    header.push("flags");
    w.write_record(&header).map_err(csv_err)?;
    for s in scores {
        let mut row = vec![s.id.clone()];
        row.extend(metrics.iter().map(|&m| cell(s.value(m))));
        row.push(s.flags());
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Data(format!("writing CSV: {e}")))?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Data(format!("writing CSV: {e}"))
}

/// Markdown table with one row per method, columns in the usual
/// Dice / Jaccard / ASD / 95HD order.
pub fn format_table(rows: &[(String, MeanScores)], metrics: &[Metric]) -> String {
    let mut out = String::from("| Method |");
    for m in metrics {
        let _ = write!(out, " {} |", m.heading());
    }
    out.push_str("\n|---|");
    for _ in metrics {
        out.push_str("---|");
    }
    out.push('\n');
    for (name, s) in rows {
        let _ = write!(out, "| {name} |");
        for &m in metrics {
            match s.value(m) {
                Some(v) => {
                    let _ = write!(out, " {v:.2} |");
                }
                None => {
                    let _ = write!(out, " {UNDEFINED} |");
                }
            }
        }
        out.push('\n');
    }
    out
}

/// Sliding-window inference and scoring for every case with a mask.
/// Distances are in voxels unless `spacing_aware`.
pub fn evaluate_cases<P: PatchPredictor + ?Sized>(
    predictor: &P,
    cases: &[Sample],
    patch: [usize; 3],
    stride: [usize; 3],
    spacing_aware: bool,
) -> Result<Vec<CaseScore>> {
    cases
        .iter()
        .map(|c| {
            let gt = c
                .mask
                .as_ref()
                .ok_or_else(|| Error::Data(format!("test case {} has no ground truth", c.id())))?;
            let out = sliding_window_predict(predictor, &c.volume, patch, stride)?;
            let spacing = if spacing_aware { c.volume.spacing() } else { [1.0; 3] };
            let mut score = score_case(c.id(), &out.mask, gt, spacing)?;
            score.padded = out.padded;
            Ok(score)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;

    fn score(id: &str, dice: f64, asd: Option<f64>) -> CaseScore {
        CaseScore {
            id: id.into(),
            dice,
            jaccard: dice / (200.0 - dice) * 100.0,
            asd,
            hd95: asd.map(|a| a * 2.0),
            empty_prediction: asd.is_none(),
            empty_ground_truth: false,
            padded: false,
        }
    }

    #[test]
    fn empty_prediction_flows_through_as_sentinel() {
        let gt = LabelMask::new(Array3::from_shape_fn((4, 4, 4), |(i, _, _)| u8::from(i < 2))).unwrap();
        let s = score_case("c", &LabelMask::empty([4, 4, 4]), &gt, [1.0; 3]).unwrap();
        assert_eq!((s.dice, s.asd, s.empty_prediction), (0.0, None, true));
        let mut buf = Vec::new();
        write_case_csv(&mut buf, &[s], &Metric::ALL).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("c,0.000000,0.000000,undefined,undefined,empty_prediction"), "{text}");
    }

    #[test]
    fn policies() {
        let scores = [score("a", 80.0, Some(2.0)), score("b", 0.0, None), score("c", 90.0, Some(4.0))];
        let ex = aggregate(&scores, EmptyPolicy::Exclude).unwrap();
        assert!((ex.dice - 170.0 / 3.0).abs() < 1e-12);
        assert_eq!((ex.asd, ex.hd95, ex.undefined), (Some(3.0), Some(6.0), 1));
        let pr = aggregate(&scores, EmptyPolicy::Propagate).unwrap();
        assert_eq!(pr.asd, None);
    }

    #[test]
    fn column_filter_and_table() {
        let scores = [score("a", 80.0, Some(2.0))];
        let m = Metric::parse_list("dice, jaccard").unwrap();
        let mut buf = Vec::new();
        write_case_csv(&mut buf, &scores, &m).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("case_id,dice,jaccard,flags\n"));
        assert!(Metric::parse_list("dice,volume").is_err());
        let table = format_table(&[("MT".into(), aggregate(&scores, EmptyPolicy::Exclude).unwrap())], &Metric::ALL);
        assert!(table.contains("| Method | Dice (%) | Jaccard (%) | ASD (voxel) | 95HD (voxel) |"));
        assert!(table.contains("| MT | 80.00 | 66.67 | 2.00 | 4.00 |"), "{table}");
    }
}
