use serde::{Deserialize, Serialize};

use super::config::{Mode, TrainConfig};
use super::run::{TrainReport, Trainer};
use crate::backbone::Network;
use crate::data::{Dataset, Sample};
use crate::error::Result;
use crate::metrics::{aggregate, evaluate_cases, CaseScore, MeanScores};

/// Sliding-window scores of `network` on `cases` under the evaluation
/// settings of `config`.
pub fn evaluate_network(network: &Network<f32>, cases: &[Sample], config: &TrainConfig) -> Result<Vec<CaseScore>> {
    evaluate_cases(network, cases, config.patch(), config.eval_stride(), config.eval_spacing_aware)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModeOutcome {
    pub mode: Mode,
    pub report: TrainReport,
    pub scores: Vec<CaseScore>,
    pub mean: MeanScores,
}

/// Trains `mode` on top of `base` (same seeds and data) and scores it on
/// the test split.
pub fn run_mode(
    base: &TrainConfig,
    mode: Mode,
    data: &Dataset,
    checkpoint_dir: Option<&std::path::Path>,
    on_step: impl FnMut(&super::step::StepRecord),
) -> Result<ModeOutcome> {
    let config = base.clone().with_mode(mode);
    let mut trainer = Trainer::new(&config)?;
    let report = trainer.run(data, checkpoint_dir, on_step)?;
    let scores = evaluate_network(trainer.eval_network(), &data.test, &config)?;
    let mean = aggregate(&scores, config.eval_empty_policy)?;
    Ok(ModeOutcome {
        mode,
        report,
        scores,
        mean,
    })
}
