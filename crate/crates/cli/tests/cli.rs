use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY: &[&str] = &[
    "data.synthetic=true",
    "data.synthetic.grid=16,16,16",
    "data.synthetic.patch=16,16,16",
    "data.labeled=2",
    "data.unlabeled=3",
    "data.test=2",
    "net.base_channels=2",
    "net.encoder_depths=1,1,1",
    "net.num_scales=2",
    "loss.scale_weights=0.7,0.3",
    "total_iterations=6",
    "checkpoint.every=3",
];

fn hcmt(args: &[&str], extra_sets: &[&str], root: &Path) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_hcmt"));
    cmd.args(args).env("HCMT_RUN_ROOT", root).env("RUST_LOG", "warn");
    for kv in TINY.iter().chain(extra_sets) {
        cmd.args(["--set", kv]);
    }
    cmd.output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn train_writes_a_complete_run_directory() {
    let root = tempfile::tempdir().unwrap();
    let o = hcmt(&["train", "--out", "full"], &["mode=mt_hu_hs"], root.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let run = root.path().join("full");
    for f in [
        "config.cfg",
        "split.txt",
        "steps.jsonl",
        "report.csv",
        "summary.json",
        "metrics.csv",
        "metrics.md",
        "log.txt",
        "checkpoints/iter_000003.ckpt",
        "checkpoints/final.ckpt",
    ] {
        assert!(run.join(f).is_file(), "missing {f}");
    }
    let report = fs::read_to_string(run.join("report.csv")).unwrap();
    assert_eq!(report.lines().count(), 7);
    assert!(report.starts_with("t,lr,lambda,l_sup,l_unsup,total,labeled_ids,unlabeled_ids"));
    let snapshot = fs::read_to_string(run.join("config.cfg")).unwrap();
    assert!(snapshot.contains("mode.use_hu = true"), "{snapshot}");
    assert!(snapshot.contains("teacher.eta = 0.99"), "{snapshot}");
}

#[test]
fn snapshot_rerun_reproduces_losses() {
    let root = tempfile::tempdir().unwrap();
    assert_eq!(code(&hcmt(&["train", "--out", "a"], &["mode=mt"], root.path())), 0);
    let snap = root.path().join("a/config.cfg");
    let o = Command::new(env!("CARGO_BIN_EXE_hcmt"))
        .args(["train", "--config", snap.to_str().unwrap(), "--out"])
        .arg(root.path().join("b"))
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let losses = |d: &str| -> Vec<String> {
        fs::read_to_string(root.path().join(d).join("report.csv"))
            .unwrap()
            .lines()
            .map(|l| l.split(',').take(6).collect::<Vec<_>>().join(","))
            .collect()
    };
    assert_eq!(losses("a"), losses("b"));
}

#[test]
fn resume_matches_the_uninterrupted_run() {
    let root = tempfile::tempdir().unwrap();
    assert_eq!(code(&hcmt(&["train", "--out", "r"], &[], root.path())), 0);
    let run = root.path().join("r");
    let full = fs::read_to_string(run.join("report.csv")).unwrap();
    fs::remove_file(run.join("checkpoints/final.ckpt")).unwrap();
    fs::remove_file(run.join("report.csv")).unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_hcmt"))
        .args(["train", "--resume", "--out"])
        .arg(&run)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(fs::read_to_string(run.join("report.csv")).unwrap(), full);
}

#[test]
fn missing_data_exits_3_without_a_run_directory() {
    let root = tempfile::tempdir().unwrap();
    let o = hcmt(
        &["train", "--out", "x"],
        &["data.synthetic=false", "data.root=/nonexistent/cases"],
        root.path(),
    );
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(!root.path().join("x").exists());
}

#[test]
fn config_errors_exit_2() {
    let root = tempfile::tempdir().unwrap();
    let o = hcmt(&["train", "--out", "x"], &["no.such.key=1"], root.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("no.such.key"));
    let o = hcmt(&["train", "--out", "x"], &["mode=mt_hu_sh"], root.path());
    assert_eq!(code(&o), 2);
    let o = hcmt(&["ablate", "--modes", "vnet,bogus", "--out", "x"], &[], root.path());
    assert_eq!(code(&o), 2);
    assert!(!root.path().join("x").exists());
}

#[test]
fn divergence_exits_4_with_a_dump() {
    let root = tempfile::tempdir().unwrap();
    let o = hcmt(&["train", "--out", "nan"], &["optim.lr=1e30", "mode=vnet"], root.path());
    assert_eq!(code(&o), 4, "{}", stderr(&o));
    let dump = fs::read_to_string(root.path().join("nan/nonfinite.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&dump).unwrap();
    assert!(v["iteration"].is_u64());
    assert!(root.path().join("nan/config.cfg").is_file());
}

#[test]
fn evaluate_restricts_columns_and_rejects_mismatched_specs() {
    let root = tempfile::tempdir().unwrap();
    assert_eq!(code(&hcmt(&["train", "--out", "t"], &["mode=vnet"], root.path())), 0);
    let ckpt = root.path().join("t/checkpoints/final.ckpt");
    let ckpt = ckpt.to_str().unwrap();
    let o = hcmt(
        &["evaluate", "--checkpoint", ckpt, "--metrics", "dice,jaccard", "--out", "e"],
        &[],
        root.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(root.path().join("e/metrics.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "case_id,dice,jaccard,flags");
    assert_eq!(csv.lines().count(), 3);
    let table = String::from_utf8(o.stdout).unwrap();
    assert!(table.starts_with("| Method | Dice (%) | Jaccard (%) |"), "{table}");
    assert!(table.contains("| V-Net |"), "{table}");

    let o = hcmt(
        &["evaluate", "--checkpoint", ckpt, "--out", "bad"],
        &["net.base_channels=4"],
        root.path(),
    );
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(!root.path().join("bad").exists());
    let o = hcmt(
        &["evaluate", "--checkpoint", ckpt, "--network", "teacher", "--out", "bad"],
        &[],
        root.path(),
    );
    assert_eq!(code(&o), 2);
}

#[test]
fn ablate_emits_one_row_per_mode_on_shared_data() {
    let root = tempfile::tempdir().unwrap();
    let o = hcmt(&["ablate", "--modes", "vnet,vnet_hs", "--out", "ab"], &[], root.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let table = String::from_utf8(o.stdout).unwrap();
    let rows: Vec<&str> = table.lines().skip(2).collect();
    assert_eq!(rows.len(), 2, "{table}");
    assert!(rows[0].starts_with("| V-Net |") && rows[1].starts_with("| V-Net + HS |"));
    let cases = |m: &str| -> Vec<String> {
        fs::read_to_string(root.path().join(format!("ab/{m}/seed_1337/metrics.csv")))
            .unwrap()
            .lines()
            .skip(1)
            .map(|l| l.split(',').next().unwrap().to_string())
            .collect()
    };
    assert_eq!(cases("vnet"), cases("vnet_hs"));

    let again = hcmt(&["ablate", "--modes", "vnet,vnet_hs", "--out", "ab2"], &[], root.path());
    assert_eq!(String::from_utf8(again.stdout).unwrap(), table);
}

#[test]
fn synthesized_directory_trains_back() {
    let root = tempfile::tempdir().unwrap();
    let o = hcmt(&["synth", "--count", "7", "--format", "nii.gz", "--out", "syn"], &[], root.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let syn = root.path().join("syn");
    assert!(syn.join("synth_0000/image.nii.gz").is_file());
    assert!(syn.join("synth_0006/label.nii.gz").is_file());
    let data_cfg = syn.join("data.cfg");
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_hcmt"));
    cmd.args(["train", "--out"]).arg(root.path().join("fromdisk"));
    for kv in TINY.iter().filter(|k| !k.starts_with("data.synthetic")) {
        cmd.args(["--set", kv]);
    }
    cmd.args(["--config", data_cfg.to_str().unwrap(), "--set", "data.crop_margin=2"]);
    let o = cmd.output().unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(root.path().join("fromdisk/summary.json").is_file());
}

#[test]
fn occupied_output_directory_is_refused() {
    let root = tempfile::tempdir().unwrap();
    fs::create_dir_all(root.path().join("busy")).unwrap();
    fs::write(root.path().join("busy/keep.txt"), "x").unwrap();
    let o = hcmt(&["train", "--out", "busy"], &[], root.path());
    assert_eq!(code(&o), 2);
    assert_eq!(fs::read_to_string(root.path().join("busy/keep.txt")).unwrap(), "x");
}
