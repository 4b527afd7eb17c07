//! The SGD loop: batch composition, stepped learning-rate decay, the
//! combined supervised + ramped consistency objective, teacher EMA updates,
//! checkpoints and ablation modes.

mod batch;
mod config;
mod experiment;
mod run;
mod step;

pub use batch::{compose_batch, epoch_index, Batch, BatchItem};
pub use config::{EvalNetwork, Mode, ModeFlags, TrainConfig};
pub use experiment::{evaluate_network, run_mode, ModeOutcome};
pub use run::{train, TrainReport, Trainer};
pub use step::{learning_rate, objective_and_gradient, perturbations, train_step, Sgd, StepRecord};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{load_dataset, DataSource, Dataset};

    fn desk_config() -> TrainConfig {
        let mut c = TrainConfig::default();
        for kv in [
            "data.synthetic=true",
            "data.synthetic.grid=16,16,16",
            "data.synthetic.patch=16,16,16",
            "data.labeled=2",
            "data.unlabeled=3",
            "data.test=1",
            "net.base_channels=2",
            "net.encoder_depths=1,1,1",
            "net.num_scales=2",
            "loss.scale_weights=0.7,0.3",
            "total_iterations=6",
            "checkpoint.every=3",
        ] {
            c.apply_override(kv).unwrap();
        }
        c
    }

    fn data(c: &TrainConfig) -> Dataset {
        assert_eq!(c.data.source, DataSource::Synthetic);
        load_dataset(&c.data).unwrap()
    }

    #[test]
    fn resume_reproduces_the_uninterrupted_run() {
        let c = desk_config();
        let d = data(&c);
        let dir = tempfile::tempdir().unwrap();
        let (full, _) = train(&c, &d, Some(dir.path())).unwrap();
        assert_eq!(full.records.len(), 6);
        let ckpt = crate::checkpoint::Checkpoint::load(&dir.path().join("iter_000003.ckpt")).unwrap();
        let mut resumed = Trainer::resume(&c, ckpt).unwrap();
        let tail = resumed.run(&d, None, |_| {}).unwrap();
        assert_eq!(tail.records, full.records[3..]);
    }

    #[test]
    fn test_cases_never_enter_a_batch() {
        let c = desk_config();
        let d = data(&c);
        let (report, _) = train(&c, &d, None).unwrap();
        let test_ids: Vec<&str> = d.test.iter().map(|s| s.id()).collect();
        for r in &report.records {
            assert!(r.labeled_ids.iter().chain(&r.unlabeled_ids).all(|id| !test_ids.contains(&id.as_str())));
            assert!(r.labeled_ids.iter().all(|id| d.labeled.iter().any(|s| s.id() == id)));
        }
    }

    #[test]
    fn teacher_is_untouched_without_use_teacher() {
        let c = desk_config().with_mode(Mode::VnetHs);
        let d = data(&c);
        let (report, trainer) = train(&c, &d, None).unwrap();
        assert!(trainer.teacher().is_none());
        assert!(report.records.iter().all(|r| r.total == r.l_sup && r.l_unsup == 0.0));
        assert!(report.records.iter().all(|r| r.unlabeled_ids.is_empty()));
    }

    #[test]
    fn ema_follows_the_post_step_student() {
        let c = desk_config();
        let d = data(&c);
        let mut trainer = Trainer::new(&c).unwrap();
        let teacher_before = trainer.teacher().unwrap().params().unwrap().clone();
        trainer.step(&d).unwrap();
        let student_after = trainer.student().params().clone();
        let mut expect = teacher_before;
        for (t, s) in expect.tensors_mut().iter_mut().zip(student_after.tensors()) {
            for (a, &b) in t.data.iter_mut().zip(&s.data) {
                *a = 0.99f32 * *a + (1.0f64 - 0.99) as f32 * b;
            }
        }
        assert_eq!(trainer.teacher().unwrap().params().unwrap(), &expect);
    }
}
