use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::batch::compose_batch;
use super::config::{EvalNetwork, TrainConfig};
use super::step::{train_step, Sgd, StepRecord};
use crate::backbone::Network;
use crate::checkpoint::Checkpoint;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::mean_teacher::TeacherState;
use crate::rng::{derive_seed, purpose};

/// Every iteration's losses plus run metadata.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub records: Vec<StepRecord>,
    pub wall_clock_seconds: f64,
    pub final_checkpoint: Option<PathBuf>,
}

impl TrainReport {
    /// Per-iteration CSV; ids are `;`-separated.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(file);
        let bad = |e: csv::Error| Error::Data(format!("writing {}: {e}", path.display()));
        w.write_record(["t", "lr", "lambda", "l_sup", "l_unsup", "total", "labeled_ids", "unlabeled_ids"])
            .map_err(bad)?;
        for r in &self.records {
            w.write_record([
                r.t.to_string(),
                r.lr.to_string(),
                r.lambda.to_string(),
                r.l_sup.to_string(),
                r.l_unsup.to_string(),
                r.total.to_string(),
                r.labeled_ids.join(";"),
                r.unlabeled_ids.join(";"),
            ])
            .map_err(bad)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Summary without the per-iteration records.
    pub fn summary(&self) -> serde_json::Value {
        let last = self.records.last();
        serde_json::json!({
            "iterations": self.records.len(),
            "first_iteration": self.records.first().map(|r| r.t),
            "last_iteration": last.map(|r| r.t),
            "final_l_sup": last.map(|r| r.l_sup),
            "final_l_unsup": last.map(|r| r.l_unsup),
            "final_total": last.map(|r| r.total),
            "wall_clock_seconds": self.wall_clock_seconds,
            "final_checkpoint": self.final_checkpoint,
        })
    }
}

/// Student, teacher and optimizer state between iterations.
#[derive(Clone, Debug)]
pub struct Trainer {
    config: TrainConfig,
    student: Network<f32>,
    teacher: Option<TeacherState<f32>>,
    optimizer: Sgd<f32>,
    t: usize,
}

impl Trainer {
    pub fn new(config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        let student = Network::build(&config.network, derive_seed(config.seed, &[purpose::INIT]))?;
        let teacher = config.flags.use_teacher.then(|| {
            let mut t = TeacherState::from_student(&student, config.eta);
            t.warmup = config.eta_warmup;
            t
        });
        let optimizer = Sgd::new(student.params(), config.momentum, config.weight_decay);
        Ok(Trainer {
            config: config.clone(),
            student,
            teacher,
            optimizer,
            t: 0,
        })
    }

    /// Continues from a checkpoint written by [`Trainer::checkpoint`].
    pub fn resume(config: &TrainConfig, checkpoint: Checkpoint<f32>) -> Result<Self> {
        config.validate()?;
        if checkpoint.spec != config.network {
            return Err(Error::Config("checkpoint network spec differs from the configuration".into()));
        }
        let student = Network::from_parameters(&config.network, checkpoint.student)?;
        let teacher = match (config.flags.use_teacher, checkpoint.teacher) {
            (true, Some(p)) => {
                let mut t = TeacherState::restore(
                    Network::from_parameters(&config.network, p)?,
                    config.eta,
                    checkpoint.teacher_step,
                );
                t.warmup = config.eta_warmup;
                Some(t)
            }
            (true, None) => return Err(Error::Config("mode needs a teacher but the checkpoint has none".into())),
            (false, _) => None,
        };
        let optimizer = match checkpoint.momentum {
            Some(v) => {
                student.params().ensure_same_structure(&v)?;
                Sgd::with_velocity(v, config.momentum, config.weight_decay)
            }
            None => Sgd::new(student.params(), config.momentum, config.weight_decay),
        };
        Ok(Trainer {
            config: config.clone(),
            student,
            teacher,
            optimizer,
            t: checkpoint.iteration,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    /// Completed iterations.
    pub fn iteration(&self) -> usize {
        self.t
    }

    pub fn student(&self) -> &Network<f32> {
        &self.student
    }

    pub fn teacher(&self) -> Option<&TeacherState<f32>> {
        self.teacher.as_ref()
    }

    /// Network selected by `eval.network`; the student if there is no teacher.
    pub fn eval_network(&self) -> &Network<f32> {
        match (self.config.eval_network, &self.teacher) {
            (EvalNetwork::Teacher, Some(t)) => t.network().unwrap_or(&self.student),
            _ => &self.student,
        }
    }

    pub fn checkpoint(&self) -> Checkpoint<f32> {
        Checkpoint {
            spec: self.config.network.clone(),
            iteration: self.t,
            student: self.student.params().clone(),
            teacher: self.teacher.as_ref().and_then(|t| t.params().ok().cloned()),
            teacher_step: self.teacher.as_ref().map_or(0, |t| t.step()),
            momentum: Some(self.optimizer.velocity().clone()),
            config: Some(self.config.to_text()),
        }
    }

    pub fn step(&mut self, data: &Dataset) -> Result<StepRecord> {
        let batch = compose_batch(&data.labeled, &data.unlabeled, &self.config, self.t)?;
        let record = train_step(
            &mut self.student,
            self.teacher.as_mut(),
            &mut self.optimizer,
            &batch,
            self.t,
            &self.config,
        )?;
        self.t += 1;
        Ok(record)
    }

    /// Runs until `total_iterations`, checkpointing into `checkpoint_dir`
    /// every `checkpoint.every` iterations and at the end. `on_step` sees
    /// every record as it is produced.
    pub fn run(
        &mut self,
        data: &Dataset,
        checkpoint_dir: Option<&Path>,
        mut on_step: impl FnMut(&StepRecord),
    ) -> Result<TrainReport> {
        let start = Instant::now();
        let mut report = TrainReport::default();
        while self.t < self.config.total_iterations {
            let record = self.step(data)?;
            on_step(&record);
            report.records.push(record);
            let every = self.config.checkpoint_every;
            if let Some(dir) = checkpoint_dir {
                if every > 0 && self.t % every == 0 && self.t < self.config.total_iterations {
                    self.save(dir, &format!("iter_{:06}.ckpt", self.t))?;
                }
            }
        }
        if let Some(dir) = checkpoint_dir {
            report.final_checkpoint = Some(self.save(dir, "final.ckpt")?);
        }
        report.wall_clock_seconds = start.elapsed().as_secs_f64();
        Ok(report)
    }

    fn save(&self, dir: &Path, name: &str) -> Result<PathBuf> {
        let path = dir.join(name);
        std::fs::create_dir_all(dir)
            .map_err(|e| Error::io(dir, e))
            .and_then(|_| self.checkpoint().save(&path))
            .map_err(|e| Error::IterationIo {
                iteration: self.t,
                source: Box::new(e),
            })?;
        Ok(path)
    }
}

/// Trains from scratch for `config.total_iterations`.
pub fn train(config: &TrainConfig, data: &Dataset, checkpoint_dir: Option<&Path>) -> Result<(TrainReport, Trainer)> {
    let mut trainer = Trainer::new(config)?;
    let report = trainer.run(data, checkpoint_dir, |_| {})?;
    Ok((report, trainer))
}
