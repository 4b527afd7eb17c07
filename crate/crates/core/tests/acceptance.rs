//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! non-zero if a gating criterion fails.
//!
//! The semi-supervised ordering check (7) trains nine models. By default it
//! runs at a reduced CPU scale and is reported without gating; set
//! `HCMT_ACCEPT_FULL=1` for the 64^3 protocol and `HCMT_ACCEPT_STRICT=1` to
//! make it gate. `HCMT_ACCEPT_ONLY=1,2,5` runs a subset.

use std::time::Instant;

use hcmt_core::backbone::{NetworkSpec, PredictionPyramid};
use hcmt_core::data::{load_dataset, save_mask, save_volume, DataSource, LabelMask};
use hcmt_core::losses::{
    consistency_with_grad, hierarchical_consistency_loss, hierarchical_supervised_loss, rampup_weight,
    supervised_with_grad, total_objective, RampSchedule, ScaleWeights, CE_FLOOR, DICE_EPS,
};
use hcmt_core::mean_teacher::TeacherState;
use hcmt_core::metrics::{dice_jaccard, surface_distances};
use hcmt_core::trainer::{
    compose_batch, objective_and_gradient, run_mode, train, Batch, BatchItem, Mode, TrainConfig,
};
use hcmt_core::{FeatureMap, Network};
use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, ok: impl Into<String>, fail: impl Into<String>) -> Outcome {
    if cond {
        Ok(ok.into())
    } else {
        Err(fail.into())
    }
}

fn env_flag(name: &str) -> bool {
    std::env::var(name).is_ok_and(|v| v == "1" || v.eq_ignore_ascii_case("true"))
}

// ---------------------------------------------------------------- 1

/// Parameter count of `spec` from a layer-by-layer walk: every 3D conv has
/// `c_out * k^3 * c_in + c_out` parameters, every normalized conv adds a
/// scale and shift per output channel, heads are 1x1x1 convs.
fn tally(spec: &NetworkSpec) -> usize {
    let k3 = spec.kernel_size.pow(3);
    let norm = |c: usize| if spec.norm == hcmt_core::backbone::Normalization::None { 0 } else { 2 * c };
    let conv = |cin: usize, cout: usize, taps: usize| cout * taps * cin + cout + norm(cout);
    let ch = |l: usize| spec.base_channels * 2usize.pow(l as u32);
    let mut n = 0;
    for (l, &depth) in spec.encoder_depths.iter().enumerate() {
        let c = ch(l);
        let first_in = if l == 0 { spec.in_channels } else { c };
        if l > 0 {
            n += conv(ch(l - 1), c, 8);
        }
        n += conv(first_in, c, k3) + (depth - 1) * conv(c, c, k3);
    }
    for (l, &depth) in spec.encoder_depths.iter().enumerate().take(spec.encoder_depths.len() - 1) {
        let c = ch(l);
        n += conv(ch(l + 1), c, 8);
        n += depth * conv(c, c, k3);
    }
    for s in 0..spec.num_scales {
        n += ch(s) * spec.num_classes + spec.num_classes;
    }
    n
}

fn write_case_dir(root: &std::path::Path, cfg: &TrainConfig, ids: usize) {
    let syn = hcmt_core::data::SyntheticConfig {
        grid: [48, 40, 24],
        ..Default::default()
    };
    for c in hcmt_core::data::generate_synthetic(&syn, 5, ids).unwrap() {
        let dir = root.join(c.id());
        std::fs::create_dir_all(&dir).unwrap();
        let img = cfg.data.image_pattern.replace("{id}/", "");
        let lab = cfg.data.label_pattern.replace("{id}/", "");
        save_volume(&dir.join(img), &c.volume).unwrap();
        save_mask(&dir.join(lab), c.mask.as_ref().unwrap(), c.volume.spacing()).unwrap();
    }
}

fn criterion_1() -> Outcome {
    let cfg = TrainConfig::default();
    cfg.validate().map_err(|e| e.to_string())?;
    let spec = &cfg.network;
    let net = Network::<f32>::build(spec, 0).map_err(|e| e.to_string())?;
    let (got, want) = (net.params().num_scalars(), tally(spec));
    if got != want {
        return Err(format!("default network has {got} parameters, layer walk gives {want}"));
    }

    // Full-size patch through the default architecture with narrow channels.
    let narrow = NetworkSpec {
        base_channels: 2,
        ..spec.clone()
    };
    let small = Network::<f32>::build(&narrow, 0).map_err(|e| e.to_string())?;
    let x = FeatureMap::<f32>::filled([112, 112, 80], 1, 0.5);
    let pyr = small.predict(&x).map_err(|e| e.to_string())?;
    if pyr.scales() != 4 || pyr.maps().iter().any(|m| m.dims() != [112, 112, 80] || m.channels() != 2) {
        return Err("112x112x80 input did not give four 2-channel full-resolution maps".into());
    }

    // The unchanged configuration picks up a directory laid out like the
    // challenge data and builds full-size batches.
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    write_case_dir(tmp.path(), &cfg, 6);
    let mut c = cfg.clone();
    c.data.root = tmp.path().to_path_buf();
    c.data.labeled = 2;
    c.data.unlabeled = 3;
    c.data.test = 1;
    let data = load_dataset(&c.data).map_err(|e| e.to_string())?;
    let batch = compose_batch(&data.labeled, &data.unlabeled, &c, 0).map_err(|e| e.to_string())?;
    check(
        batch.len() == 4 && batch.items().all(|i| i.input.dims() == [112, 112, 80]),
        format!("defaults validate; {got} parameters match the layer walk; 112x112x80 batches from a case directory"),
        "default batch composition is wrong",
    )
}

// ---------------------------------------------------------------- 2

fn criterion_2() -> Outcome {
    let t_max = TrainConfig::default().total_iterations;
    let want = [0.1 * (-5.0f64).exp(), 0.1 * (-1.25f64).exp(), 0.1];
    let got = [
        rampup_weight(0.1, 0, t_max),
        rampup_weight(0.1, t_max / 2, t_max),
        rampup_weight(0.1, t_max, t_max),
    ];
    let sched = TrainConfig::default().ramp();
    let err = got
        .iter()
        .chain(&[sched.weight(0), sched.weight(t_max / 2), sched.weight(t_max)])
        .zip(want.iter().cycle())
        .map(|(g, w)| (g - w).abs())
        .fold(0.0, f64::max);
    check(
        err < 1e-9,
        format!("lambda(0, t_max/2, t_max) = {got:.9?}, max error {err:.1e}"),
        format!("ramp error {err:e}: {got:?} vs {want:?}"),
    )
}

// ---------------------------------------------------------------- 3

fn criterion_3() -> Outcome {
    let spec = NetworkSpec {
        base_channels: 2,
        encoder_depths: vec![1, 1],
        num_scales: 1,
        ..NetworkSpec::default()
    };
    let net = Network::<f64>::build(&spec, 11).map_err(|e| e.to_string())?;
    let start = net.params().flatten();
    let mut teacher = TeacherState::from_student(&net, 0.99);
    let frozen = net.params().zeros_like();
    // Independent scalar simulation of the same recurrence.
    let mut sim = start.clone();
    for _ in 0..1000 {
        teacher.ema_update(&frozen).map_err(|e| e.to_string())?;
        for v in &mut sim {
            *v = 0.99 * *v + (1.0 - 0.99) * 0.0;
        }
    }
    let got = teacher.params().map_err(|e| e.to_string())?.flatten();
    let exact = got == sim;
    let decay = 0.99f64.powi(1000);
    let rel = got
        .iter()
        .zip(&start)
        .filter(|(_, s)| s.abs() > 0.0)
        .map(|(g, s)| (g / s - decay).abs() / decay)
        .fold(0.0, f64::max);
    check(
        exact && rel < 1e-10 && teacher.step() == 1000,
        format!("teacher equals the scalar simulation bit for bit; max |ratio / 0.99^1000 - 1| = {rel:.1e}"),
        format!("exact match {exact}, ratio error {rel:e}"),
    )
}

// ---------------------------------------------------------------- 4

fn oracle_dice(p: &[f64], g: &[u8]) -> f64 {
    let mut inter = 0.0;
    let mut pp = 0.0;
    let mut gg = 0.0;
    for i in 0..p.len() {
        let gi = if g[i] == 1 { 1.0 } else { 0.0 };
        inter += p[i] * gi;
        pp += p[i] * p[i];
        gg += gi;
    }
    1.0 - (2.0 * inter + DICE_EPS) / (pp + gg + DICE_EPS)
}

fn oracle_ce(map: &[f64], k: usize, g: &[u8]) -> f64 {
    let n = g.len();
    (0..n).map(|v| -map[v * k + g[v] as usize].max(CE_FLOOR).ln()).sum::<f64>() / n as f64
}

fn oracle_supervised(maps: &[Vec<f64>], k: usize, g: &[u8], alpha: &[f64]) -> f64 {
    maps.iter()
        .zip(alpha)
        .map(|(m, a)| {
            let fg: Vec<f64> = m.chunks(k).map(|r| r[1]).collect();
            a * (oracle_dice(&fg, g) + oracle_ce(m, k, g)) / 2.0
        })
        .sum()
}

fn oracle_consistency(s: &[Vec<f64>], t: &[Vec<f64>], alpha: &[f64]) -> f64 {
    s.iter()
        .zip(t)
        .zip(alpha)
        .map(|((a, b), w)| w * a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64)
        .sum()
}

fn random_probs(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<f64> {
    let mut v = Vec::with_capacity(n * k);
    for _ in 0..n {
        let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.01..1.0)).collect();
        let s: f64 = raw.iter().sum();
        v.extend(raw.iter().map(|r| r / s));
    }
    v
}

fn pyramid(maps: &[Vec<f64>], dims: [usize; 3], k: usize) -> PredictionPyramid<f64> {
    PredictionPyramid::new(maps.iter().map(|m| FeatureMap::from_vec(dims, k, m.clone())).collect()).unwrap()
}

/// Two-class map with foreground probability `p` everywhere.
fn uniform(n: usize, p: f64) -> Vec<f64> {
    (0..n).flat_map(|_| [1.0 - p, p]).collect()
}

/// Two-class map giving probability `q` to the true class of every voxel.
fn confident(g: &[u8], q: f64) -> Vec<f64> {
    g.iter().flat_map(|&c| if c == 1 { [1.0 - q, q] } else { [q, 1.0 - q] }).collect()
}

/// Confidence `q` in [0.5, 1) whose `(dice + ce) / 2` against `g` is
/// `target`, by bisection on the oracle (the term falls as `q` grows).
fn solve_term(g: &[u8], target: f64) -> f64 {
    let f = |q: f64| {
        let m = confident(g, q);
        let fg: Vec<f64> = m.chunks(2).map(|r| r[1]).collect();
        (oracle_dice(&fg, g) + oracle_ce(&m, 2, g)) / 2.0 - target
    };
    let (mut lo, mut hi) = (0.5, 1.0 - 1e-12);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for trial in 0..100 {
        let side = rng.random_range(1..=4usize);
        let dims = [side, rng.random_range(1..=4), rng.random_range(1..=4)];
        let n = dims.iter().product();
        let k = if trial % 3 == 0 { 3 } else { 2 };
        let scales = rng.random_range(1..=4usize);
        let raw: Vec<f64> = (0..scales).map(|_| rng.random_range(0.0..1.0)).collect();
        let alpha: Vec<f64> = raw.iter().map(|r| r / raw.iter().sum::<f64>()).collect();
        let w = ScaleWeights::new(alpha.clone()).map_err(|e| e.to_string())?;
        let batch = rng.random_range(1..=3usize);
        let mut sup_lib = Vec::new();
        let mut sup_oracle = 0.0;
        let mut targets = Vec::new();
        let (mut st, mut te) = (Vec::new(), Vec::new());
        let mut cons_oracle = 0.0;
        for _ in 0..batch {
            let g: Vec<u8> = (0..n).map(|_| rng.random_range(0..k) as u8).collect();
            let g = if k == 2 { g } else { g.iter().map(|&c| u8::from(c == 1)).collect() };
            let s: Vec<Vec<f64>> = (0..scales).map(|_| random_probs(&mut rng, n, k)).collect();
            let t: Vec<Vec<f64>> = (0..scales).map(|_| random_probs(&mut rng, n, k)).collect();
            sup_oracle += oracle_supervised(&s, k, &g, &alpha) / batch as f64;
            cons_oracle += oracle_consistency(&s, &t, &alpha) / batch as f64;
            sup_lib.push(pyramid(&s, dims, k));
            st.push(pyramid(&s, dims, k));
            te.push(pyramid(&t, dims, k));
            targets.push(g);
        }
        let refs: Vec<&[u8]> = targets.iter().map(Vec::as_slice).collect();
        let sup = hierarchical_supervised_loss(&sup_lib, &refs, &w).map_err(|e| e.to_string())?;
        let cons = hierarchical_consistency_loss(&st, &te, &w).map_err(|e| e.to_string())?;
        worst = worst.max((sup - sup_oracle).abs()).max((cons - cons_oracle).abs());
    }

    // Worked examples: per-scale terms {0.2, 0.3, 0.4, 0.4} and MSEs
    // {0.01, 0.02, 0.04, 0.04} under weights {0.5, 0.4, 0.05, 0.05}.
    let default_weights = ScaleWeights::new(vec![0.5, 0.4, 0.05, 0.05]).map_err(|e| e.to_string())?;
    let dims = [4, 4, 4];
    let g: Vec<u8> = (0..64).map(|v| u8::from(v % 2 == 0)).collect();
    let sup_maps: Vec<Vec<f64>> = [0.2, 0.3, 0.4, 0.4].iter().map(|&t| confident(&g, solve_term(&g, t))).collect();
    let (sup, _) = supervised_with_grad(&pyramid(&sup_maps, dims, 2), &g, &default_weights).map_err(|e| e.to_string())?;
    let base = uniform(64, 0.5);
    let shifted: Vec<Vec<f64>> = [0.01f64, 0.02, 0.04, 0.04]
        .iter()
        .map(|mse| uniform(64, 0.5 + mse.sqrt()))
        .collect();
    let (cons, _) = consistency_with_grad(
        &pyramid(&shifted, dims, 2),
        &pyramid(&vec![base; 4], dims, 2),
        &default_weights,
    )
    .map_err(|e| e.to_string())?;
    let total = total_objective(sup, cons, &RampSchedule { lambda_max: 0.1, t_max: 10 }, 10).map_err(|e| e.to_string())?;
    let examples = (sup - 0.26).abs().max((cons - 0.017).abs()).max((total - 0.2617).abs());
    check(
        worst < 1e-9 && examples < 1e-9,
        format!(
            "100 random batches match brute force (max error {worst:.1e}); worked examples give {sup:.6}, {cons:.6}, {total:.6}"
        ),
        format!("oracle error {worst:e}, worked-example error {examples:e} ({sup}, {cons}, {total})"),
    )
}

// ---------------------------------------------------------------- 5

fn criterion_5() -> Outcome {
    let mut cfg = TrainConfig::default().with_mode(Mode::MtHuHs);
    cfg.network = NetworkSpec {
        base_channels: 2,
        encoder_depths: vec![1, 1, 1, 1],
        num_scales: 3,
        ..NetworkSpec::default()
    };
    cfg.scale_weights = vec![0.5, 0.4, 0.1];
    cfg.total_iterations = 10;
    cfg.lambda_max = 1.0;
    let t = 7;
    let item = |id: &str, phase: f64, label: bool| {
        let x: Vec<f32> = (0..512)
            .map(|v| {
                let (i, j, k) = ((v / 64) as f64, ((v / 8) % 8) as f64, (v % 8) as f64);
                ((i * 0.9 + phase).sin() + (j * 0.7).cos() * 0.5 + k * 0.1 - 0.3) as f32
            })
            .collect();
        let y: Vec<u8> = x.iter().map(|&v| u8::from(v > 0.2)).collect();
        BatchItem {
            id: id.into(),
            input: FeatureMap::from_vec([8, 8, 8], 1, x),
            label: label.then_some(y),
        }
    };
    let batch = Batch {
        labeled: vec![item("a", 0.0, true)],
        unlabeled: vec![item("b", 1.3, false)],
    };
    let student = Network::<f64>::build(&cfg.network, 21).map_err(|e| e.to_string())?;
    let teacher_net = Network::<f64>::build(&cfg.network, 22).map_err(|e| e.to_string())?;
    let teacher = TeacherState::from_student(&teacher_net, cfg.eta);
    let objective = |net: &Network<f64>| {
        objective_and_gradient(net, Some(&teacher), &batch, t, &cfg).map(|(r, _)| r.total)
    };
    let (record, grads) =
        objective_and_gradient(&student, Some(&teacher), &batch, t, &cfg).map_err(|e| e.to_string())?;
    if record.l_unsup <= 0.0 || record.lambda <= 0.0 {
        return Err("consistency term is inactive".into());
    }
    let analytic = grads.flatten();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let h = 1e-6;
    let samples = 60;
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let idx = rng.random_range(0..analytic.len());
        let mut plus = student.clone();
        *plus.params_mut().scalar_mut(idx) += h;
        let mut minus = student.clone();
        *minus.params_mut().scalar_mut(idx) -= h;
        let numeric = (objective(&plus).map_err(|e| e.to_string())? - objective(&minus).map_err(|e| e.to_string())?)
            / (2.0 * h);
        let a = analytic[idx];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    check(
        worst < 1e-3,
        format!("{samples} sampled parameters of {}, max relative error {worst:.1e}", analytic.len()),
        format!("max relative error {worst:e}"),
    )
}

// ---------------------------------------------------------------- 6

fn oracle_surface(m: &Array3<u8>) -> Vec<[usize; 3]> {
    let (nx, ny, nz) = m.dim();
    let mut out = Vec::new();
    for ((x, y, z), &v) in m.indexed_iter() {
        if v == 0 {
            continue;
        }
        let on_border = x == 0 || y == 0 || z == 0 || x + 1 == nx || y + 1 == ny || z + 1 == nz;
        let bg_neighbour = !on_border
            && (m[[x - 1, y, z]] == 0
                || m[[x + 1, y, z]] == 0
                || m[[x, y - 1, z]] == 0
                || m[[x, y + 1, z]] == 0
                || m[[x, y, z - 1]] == 0
                || m[[x, y, z + 1]] == 0);
        if on_border || bg_neighbour {
            out.push([x, y, z]);
        }
    }
    out
}

fn oracle_directed(a: &[[usize; 3]], b: &[[usize; 3]], sp: [f64; 3]) -> Vec<f64> {
    a.iter()
        .map(|p| {
            b.iter()
                .map(|q| {
                    (0..3)
                        .map(|i| ((p[i] as f64 - q[i] as f64) * sp[i]).powi(2))
                        .sum::<f64>()
                        .sqrt()
                })
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

fn oracle_p95(mut d: Vec<f64>) -> f64 {
    d.sort_by(f64::total_cmp);
    let pos = 0.95 * (d.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    d[lo] + (d[hi] - d[lo]) * (pos - lo as f64)
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut worst_dist, mut worst_rel): (f64, f64) = (0.0, 0.0);
    for trial in 0..200 {
        let shape = (rng.random_range(1..=12), rng.random_range(1..=12), rng.random_range(1..=12));
        let density = rng.random_range(0.05..0.7);
        let mut make = || {
            let mut a = Array3::from_shape_fn(shape, |_| u8::from(rng.random_bool(density)));
            if a.iter().all(|&v| v == 0) {
                a[[0, 0, 0]] = 1;
            }
            a
        };
        let (p, g) = (make(), make());
        let sp = if trial % 2 == 0 {
            [1.0; 3]
        } else {
            [rng.random_range(0.5..2.0), rng.random_range(0.5..2.0), rng.random_range(0.5..3.0)]
        };
        let (sp_, sg) = (oracle_surface(&p), oracle_surface(&g));
        let (pg, gp) = (oracle_directed(&sp_, &sg, sp), oracle_directed(&sg, &sp_, sp));
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let asd = (mean(&pg) + mean(&gp)) / 2.0;
        let hd95 = oracle_p95(pg).max(oracle_p95(gp));
        let pm = LabelMask::new(p.clone()).map_err(|e| e.to_string())?;
        let gm = LabelMask::new(g.clone()).map_err(|e| e.to_string())?;
        let got = surface_distances(&pm, &gm, sp)
            .map_err(|e| e.to_string())?
            .ok_or("distances undefined for non-empty masks")?;
        worst_dist = worst_dist.max((got.asd - asd).abs()).max((got.hd95 - hd95).abs());
        let (d, j) = dice_jaccard(&pm, &gm).map_err(|e| e.to_string())?;
        let df = d / 100.0;
        worst_rel = worst_rel.max((j / 100.0 - df / (2.0 - df)).abs());
    }
    check(
        worst_dist < 1e-9 && worst_rel < 1e-9,
        format!("200 random pairs: max ASD/95HD error {worst_dist:.1e}, max |J - D/(2-D)| {worst_rel:.1e}"),
        format!("distance error {worst_dist:e}, Jaccard relation error {worst_rel:e}"),
    )
}

// ---------------------------------------------------------------- 7

struct Protocol {
    grid: usize,
    base: usize,
    iterations: usize,
    seeds: Vec<u64>,
}

fn criterion_7() -> Outcome {
    let full = env_flag("HCMT_ACCEPT_FULL");
    let p = if full {
        Protocol {
            grid: 64,
            base: 16,
            iterations: 1000,
            seeds: vec![1, 2, 3],
        }
    } else {
        Protocol {
            grid: 32,
            base: 4,
            iterations: 300,
            seeds: vec![1, 2, 3],
        }
    };
    let mut base = TrainConfig::default();
    let g = p.grid;
    for kv in [
        "data.synthetic=true".to_string(),
        format!("data.synthetic.grid={g},{g},{g}"),
        format!("data.synthetic.patch={g},{g},{g}"),
        "data.labeled=8".into(),
        "data.unlabeled=32".into(),
        "data.test=20".into(),
        format!("net.base_channels={}", p.base),
        "net.encoder_depths=1,2,2,2,2".into(),
        format!("total_iterations={}", p.iterations),
        "checkpoint.every=0".into(),
    ] {
        base.apply_override(&kv).map_err(|e| e.to_string())?;
    }
    let modes = [Mode::Vnet, Mode::Mt, Mode::MtHuHs];
    let mut dice = [0.0f64; 3];
    let mut per_seed = Vec::new();
    for &seed in &p.seeds {
        let mut c = base.clone();
        c.seed = seed;
        c.data.split_seed = seed;
        c.data.synthetic_seed = seed;
        let data = load_dataset(&c.data).map_err(|e| e.to_string())?;
        let mut row = Vec::new();
        for (k, &m) in modes.iter().enumerate() {
            let o = run_mode(&c, m, &data, None, |_| {}).map_err(|e| e.to_string())?;
            dice[k] += o.mean.dice / p.seeds.len() as f64;
            row.push(format!("{:.2}", o.mean.dice));
        }
        per_seed.push(format!("seed {seed}: {}", row.join("/")));
    }
    let [vnet, mt, full_method] = dice;
    let detail = format!(
        "{}^3, base {}, {} iterations, seeds {:?}: mean Dice V-Net {vnet:.2}, MT {mt:.2}, MT+HU+HS {full_method:.2} ({})",
        p.grid,
        p.base,
        p.iterations,
        p.seeds,
        per_seed.join("; ")
    );
    check(
        full_method >= mt && mt >= vnet && full_method - vnet >= 1.0,
        detail.clone(),
        detail,
    )
}

// ---------------------------------------------------------------- 8, 9

fn desk_config() -> TrainConfig {
    let mut c = TrainConfig::default();
    for kv in [
        "data.synthetic=true",
        "data.synthetic.grid=16,16,16",
        "data.synthetic.patch=16,16,16",
        "data.labeled=3",
        "data.unlabeled=4",
        "data.test=2",
        "net.base_channels=4",
        "net.encoder_depths=1,1,1,1",
        "net.num_scales=3",
        "loss.scale_weights=0.5,0.4,0.1",
        "total_iterations=20",
    ] {
        c.apply_override(kv).unwrap();
    }
    c
}

fn criterion_8() -> Outcome {
    let base = desk_config();
    let data = load_dataset(&base.data).map_err(|e| e.to_string())?;
    let vnet = base.clone().with_mode(Mode::Vnet);
    let mut off = base.clone().with_mode(Mode::MtHuHs);
    for kv in ["mode.use_hu=false", "mode.use_hs=false", "mode.use_teacher=false"] {
        off.apply_override(kv).map_err(|e| e.to_string())?;
    }
    let (a, _) = train(&vnet, &data, None).map_err(|e| e.to_string())?;
    let (b, _) = train(&off, &data, None).map_err(|e| e.to_string())?;
    check(
        !a.records.is_empty() && a.records == b.records,
        format!("{} iterations with identical loss traces", a.records.len()),
        "loss traces differ",
    )
}

fn criterion_9() -> Outcome {
    let cfg = desk_config().with_mode(Mode::MtHuHs);
    let snapshot = cfg.to_text();
    let run = || -> Result<(Vec<_>, Vec<u8>), String> {
        let c = TrainConfig::from_text(&snapshot).map_err(|e| e.to_string())?;
        assert_eq!(c.data.source, DataSource::Synthetic);
        let data = load_dataset(&c.data).map_err(|e| e.to_string())?;
        let (report, trainer) = train(&c, &data, None).map_err(|e| e.to_string())?;
        Ok((report.records, trainer.checkpoint().to_bytes()))
    };
    let (r1, s1) = run()?;
    let (r2, s2) = run()?;
    check(
        r1 == r2 && s1 == s2,
        format!("two runs from one snapshot: identical {} records and final state", r1.len()),
        "runs diverged",
    )
}

fn main() {
    let criteria: [(usize, &str, fn() -> Outcome, bool); 9] = [
        (1, "full configuration runnable", criterion_1, true),
        (2, "ramp-up schedule", criterion_2, true),
        (3, "EMA geometric decay", criterion_3, true),
        (4, "loss oracles", criterion_4, true),
        (5, "gradient check", criterion_5, true),
        (6, "metrics oracle", criterion_6, true),
        (7, "semi-supervised ordering", criterion_7, env_flag("HCMT_ACCEPT_STRICT")),
        (8, "ablation degeneracy", criterion_8, true),
        (9, "determinism", criterion_9, true),
    ];
    let only: Option<Vec<usize>> = std::env::var("HCMT_ACCEPT_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let mut gating_failures = 0;
    for (n, name, f, gating) in criteria {
        if only.as_ref().map_or(false, |o| !o.contains(&n)) {
            println!("criterion {n} SKIP: {name} - not selected by HCMT_ACCEPT_ONLY");
            continue;
        }
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        let (status, detail) = match &outcome {
            Ok(d) => ("PASS", d.as_str()),
            Err(d) => ("FAIL", d.as_str()),
        };
        let note = if !gating && outcome.is_err() { " [reported, not gating]" } else { "" };
        println!("criterion {n} {status}: {name} - {detail} ({secs:.1}s){note}");
        if gating && outcome.is_err() {
            gating_failures += 1;
        }
    }
    if gating_failures > 0 {
        println!("{gating_failures} gating criteria failed");
        std::process::exit(1);
    }
}
