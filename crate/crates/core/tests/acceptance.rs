//! Acceptance gate. Each criterion prints one `PASS`/`FAIL` line; the
//! binary exits nonzero if any criterion fails.
//!
//! Every tolerance and time budget is a named constant below.

use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use biatrium_core::geometry::{crop_window, paste, standardize, window_placement};
use biatrium_core::image::{Image, LEFT_ATRIUM, RIGHT_ATRIUM, WALL};
use biatrium_core::io::{read_nifti, read_volume, write_label_map, write_volume_as, Dtype};
use biatrium_core::loss::{asym_loss, grad_check, AsymLossParams};
use biatrium_core::mclahe::{mclahe, tile_mappings, MclaheParams};
use biatrium_core::metrics::report::{MetricReport, MetricRow};
use biatrium_core::metrics::{confusion_counts, dice, hausdorff, hd95, surface_points, ConfusionCounts};
use biatrium_core::phantom::{generate, PhantomSpec};
use biatrium_core::pipeline::{run_pipeline, BackendSpec, CaseSpec, MclaheSetting, PipelineConfig};
use biatrium_core::{LabelMap, Volume};

const LOSS_TOL: f64 = 1e-12;
const LOSS_GRID: usize = 200;
const LOSS_BUDGET: Duration = Duration::from_secs(1);

const GRAD_SAMPLES: usize = 1000;
const GRAD_REL_TOL: f64 = 1e-5;
const GRAD_BUDGET: Duration = Duration::from_secs(1);

const METRIC_CASES: usize = 100;
const METRIC_MAX_DIM: usize = 24;
const METRIC_DIST_TOL: f64 = 1e-9;
const METRIC_BUDGET: Duration = Duration::from_secs(60);

const HAND_DICE_TOL: f64 = 1e-12;

const MCLAHE_RANDOM_VOLUMES: usize = 50;
const MCLAHE_GLOBAL_TOL: f64 = 1.0 / 128.0;
const MCLAHE_BUDGET: Duration = Duration::from_secs(30);

const GEOMETRY_CASES: usize = 50;

const E2E_MIN_DICE: f64 = 0.9;
const E2E_BUDGET: Duration = Duration::from_secs(120);

const NIFTI_VOLUMES: usize = 20;

const PERF_MCLAHE_BUDGET: Duration = Duration::from_secs(30);
const PERF_PIPELINE_BUDGET: Duration = Duration::from_secs(60);

struct Outcome {
    ok: bool,
    detail: String,
}

fn outcome(ok: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        ok,
        detail: detail.into(),
    }
}

fn within(elapsed: Duration, budget: Duration) -> (bool, String) {
    (elapsed < budget, format!("{:.3} s of {:.0} s", elapsed.as_secs_f64(), budget.as_secs_f64()))
}

// 1 -------------------------------------------------------------------------

fn bce(y: u8, p: f64) -> f64 {
    if y == 1 { -p.ln() } else { -(1.0 - p).ln() }
}

fn focal2(y: u8, p: f64) -> f64 {
    if y == 1 {
        -(1.0 - p) * (1.0 - p) * p.ln()
    } else {
        -p * p * (1.0 - p).ln()
    }
}

fn loss_identities() -> Outcome {
    let start = Instant::now();
    let plain = AsymLossParams::new(0.0, 0.0, 0.0).unwrap();
    let focal = AsymLossParams::new(2.0, 2.0, 0.0).unwrap();
    let mut worst = 0f64;
    let per_class = LOSS_GRID / 2;
    for y in [0u8, 1] {
        for i in 0..per_class {
            let p = 0.005 + 0.99 * i as f64 / (per_class - 1) as f64;
            worst = worst.max((asym_loss(y, p, &plain).unwrap() - bce(y, p)).abs());
            worst = worst.max((asym_loss(y, p, &focal).unwrap() - focal2(y, p)).abs());
        }
    }
    let (fast, t) = within(start.elapsed(), LOSS_BUDGET);
    outcome(
        worst <= LOSS_TOL && fast,
        format!("{LOSS_GRID} points, max |err| {worst:.2e} (tol {LOSS_TOL:.0e}), {t}"),
    )
}

// 2 -------------------------------------------------------------------------

fn gradient_check() -> Outcome {
    let start = Instant::now();
    let r = grad_check(GRAD_SAMPLES, 20_240_917).unwrap();
    let (fast, t) = within(start.elapsed(), GRAD_BUDGET);
    let worst = r.worst().unwrap();
    let all = r.samples.iter().all(|s| s.rel_error < GRAD_REL_TOL);
    outcome(
        all && r.samples.len() == GRAD_SAMPLES && fast,
        format!(
            "{} samples, worst rel err {:.2e} at y={} p={:.4} (tol {GRAD_REL_TOL:.0e}), {t}",
            r.samples.len(),
            worst.rel_error,
            worst.y,
            worst.p
        ),
    )
}

// 3 -------------------------------------------------------------------------

fn random_labels(rng: &mut ChaCha8Rng, shape: [usize; 3], spacing: [f64; 3]) -> LabelMap {
    let mut m = LabelMap::filled(shape, spacing, 0).unwrap();
    for class in 1..=3u8 {
        if rng.random_bool(0.1) {
            continue;
        }
        let c: [f64; 3] = std::array::from_fn(|k| rng.random_range(0.0..shape[k] as f64));
        let r: [f64; 3] = std::array::from_fn(|k| rng.random_range(0.5..(shape[k] as f64 / 2.0).max(1.0)));
        for z in 0..shape[2] {
            for y in 0..shape[1] {
                for x in 0..shape[0] {
                    let p = [x as f64, y as f64, z as f64];
                    let d: f64 = (0..3).map(|k| ((p[k] - c[k]) / r[k]).powi(2)).sum();
                    if d <= 1.0 {
                        m.set(x, y, z, class);
                    }
                }
            }
        }
    }
    let flips = rng.random_range(0..8);
    for _ in 0..flips {
        let p: [usize; 3] = std::array::from_fn(|k| rng.random_range(0..shape[k]));
        m.set(p[0], p[1], p[2], rng.random_range(0..=3));
    }
    m
}

fn oracle_counts(pred: &LabelMap, gt: &LabelMap, class: u8) -> (u64, u64, u64) {
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (&a, &b) in pred.data().iter().zip(gt.data()) {
        match (a == class, b == class) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    (tp, fp, fn_)
}

fn oracle_surface(m: &LabelMap, class: u8) -> Vec<[f64; 3]> {
    let shape = m.shape();
    let s = m.spacing();
    let at = |p: [i64; 3]| -> u8 {
        if (0..3).any(|k| p[k] < 0 || p[k] >= shape[k] as i64) {
            u8::MAX
        } else {
            m.get(p[0] as usize, p[1] as usize, p[2] as usize)
        }
    };
    let mut out = Vec::new();
    for z in 0..shape[2] {
        for y in 0..shape[1] {
            for x in 0..shape[0] {
                if m.get(x, y, z) != class {
                    continue;
                }
                let c = [x as i64, y as i64, z as i64];
                let mut edge = false;
                for k in 0..3 {
                    for d in [-1, 1] {
                        let mut n = c;
                        n[k] += d;
                        let v = at(n);
                        edge |= v != class;
                    }
                }
                if edge {
                    out.push([x as f64 * s[0], y as f64 * s[1], z as f64 * s[2]]);
                }
            }
        }
    }
    out
}

fn all_pairs(a: &[[f64; 3]], b: &[[f64; 3]]) -> Vec<f64> {
    let directed = |from: &[[f64; 3]], to: &[[f64; 3]]| -> Vec<f64> {
        from.iter()
            .map(|p| {
                to.iter()
                    .map(|q| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt())
                    .fold(f64::INFINITY, f64::min)
            })
            .collect()
    };
    let mut d = directed(a, b);
    d.extend(directed(b, a));
    d.sort_by(f64::total_cmp);
    d
}

fn metric_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut compared = 0usize;
    let mut worst = 0f64;
    let mut mismatches = Vec::new();
    for case in 0..METRIC_CASES {
        let shape: [usize; 3] = std::array::from_fn(|_| rng.random_range(1..=METRIC_MAX_DIM));
        let spacing: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.3..3.0));
        let pred = random_labels(&mut rng, shape, spacing);
        let gt = random_labels(&mut rng, shape, spacing);
        for class in 1..=3u8 {
            let c = confusion_counts(&pred, &gt, class).unwrap();
            let (tp, fp, fn_) = oracle_counts(&pred, &gt, class);
            if (c.tp, c.fp, c.fn_) != (tp, fp, fn_) {
                mismatches.push(format!("case {case} class {class}: counts"));
            }
            let want_dice = if tp + fp + fn_ == 0 {
                1.0
            } else {
                2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
            };
            if dice(c).value.to_bits() != want_dice.to_bits() {
                mismatches.push(format!("case {case} class {class}: dice"));
            }
            let (a, b) = (surface_points(&pred, class), surface_points(&gt, class));
            let (oa, ob) = (oracle_surface(&pred, class), oracle_surface(&gt, class));
            if a != oa || b != ob {
                mismatches.push(format!("case {case} class {class}: surface"));
                continue;
            }
            let (h95, h) = (hd95(&a, &b).mm, hausdorff(&a, &b).mm);
            let (w95, w) = match (a.is_empty(), b.is_empty()) {
                (true, true) => (0.0, 0.0),
                (true, false) | (false, true) => (f64::INFINITY, f64::INFINITY),
                _ => {
                    let d = all_pairs(&a, &b);
                    let rank = (95 * d.len()).div_ceil(100);
                    (d[rank - 1], d[d.len() - 1])
                }
            };
            for (got, want, what) in [(h95, w95, "hd95"), (h, w, "hd")] {
                if got.is_infinite() || want.is_infinite() {
                    if got != want {
                        mismatches.push(format!("case {case} class {class}: {what}"));
                    }
                    continue;
                }
                let e = (got - want).abs();
                worst = worst.max(e);
                if e > METRIC_DIST_TOL {
                    mismatches.push(format!("case {case} class {class}: {what} {got} vs {want}"));
                }
            }
            compared += 1;
        }
    }
    let (fast, t) = within(start.elapsed(), METRIC_BUDGET);
    outcome(
        mismatches.is_empty() && fast,
        format!(
            "{METRIC_CASES} volume pairs, {compared} class comparisons, max distance err {worst:.1e} mm, {} mismatches{}, {t}",
            mismatches.len(),
            mismatches.first().map(|m| format!(" (first: {m})")).unwrap_or_default()
        ),
    )
}

// 4 -------------------------------------------------------------------------

fn hand_values() -> Outcome {
    let d = dice(ConfusionCounts { tp: 2, fp: 1, fn_: 1 }).value;
    let h = hd95(&[[0.0, 0.0, 0.0]], &[[3.0, 4.0, 0.0]]).mm;
    outcome(
        (d - 2.0 / 3.0).abs() <= HAND_DICE_TOL && h == 5.0,
        format!("dice {d}, hd95 {h} mm"),
    )
}

// 5 -------------------------------------------------------------------------

fn global_he_oracle(values: &[f32]) -> Vec<f64> {
    let n = values.len() as f64;
    let cdf = |v: f32| values.iter().filter(|&&x| x <= v).count() as f64;
    let min = values.iter().copied().fold(f32::INFINITY, f32::min);
    let cdf_min = cdf(min);
    values.iter().map(|&v| (cdf(v) - cdf_min) / (n - cdf_min)).collect()
}

fn mclahe_checks() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut failures = Vec::new();

    // (a) constant input
    let flat = Volume::filled([17, 12, 5], [1.0; 3], 0.37).unwrap();
    let out = mclahe(&flat, &MclaheParams::default()).unwrap();
    let first = out.data()[0];
    if !out.data().iter().all(|&v| v == first) {
        failures.push("(a) constant volume not constant".to_string());
    }

    // (b) single tile without clipping equals global equalization; levels sit
    // on distinct bin centres and span [0, 1] so binning is exact
    let mut worst_b = 0f64;
    for _ in 0..10 {
        let shape: [usize; 3] = std::array::from_fn(|_| rng.random_range(4..20));
        let mut bins: Vec<usize> = (1..127).collect();
        for i in 0..bins.len() {
            let j = rng.random_range(i..bins.len());
            bins.swap(i, j);
        }
        let mut levels: Vec<f32> = bins[..rng.random_range(2..40)]
            .iter()
            .map(|&b| ((b as f64 + 0.5) / 128.0) as f32)
            .collect();
        levels.extend([0.0, 1.0]);
        let v = Volume::from_fn(shape, [1.0; 3], |_, _, _| levels[rng.random_range(0..levels.len())]).unwrap();
        let mut data = v.into_data();
        data[0] = 0.0;
        data[1] = 1.0;
        let v = Volume::from_vec(shape, [1.0; 3], data).unwrap();
        let p = MclaheParams {
            kernel_size: Some(shape),
            n_bins: 128,
            clip_limit: 1.0,
        };
        let got = mclahe(&v, &p).unwrap();
        for (g, w) in got.data().iter().zip(global_he_oracle(v.data())) {
            worst_b = worst_b.max((*g as f64 - w).abs());
        }
    }
    if worst_b > MCLAHE_GLOBAL_TOL {
        failures.push(format!("(b) max deviation {worst_b}"));
    }

    // (c) monotone tile mappings, (d) output range
    let mut mappings = 0usize;
    for i in 0..MCLAHE_RANDOM_VOLUMES {
        let shape: [usize; 3] = std::array::from_fn(|_| rng.random_range(2..40));
        let scale = rng.random_range(0.1..1000.0f32);
        let v = Volume::from_fn(shape, [1.0; 3], |_, _, _| rng.random::<f32>() * scale - 3.0).unwrap();
        let p = MclaheParams {
            kernel_size: Some(std::array::from_fn(|k| rng.random_range(1..=shape[k]))),
            n_bins: rng.random_range(2..=256),
            clip_limit: rng.random_range(0.001..=1.0),
        };
        let grid = tile_mappings(&v, &p).unwrap();
        mappings += grid.mappings.len();
        if !grid.mappings.iter().all(|m| m.is_monotone()) {
            failures.push(format!("(c) volume {i} has a decreasing mapping"));
        }
        let out = mclahe(&v, &p).unwrap();
        if !out.data().iter().all(|x| (0.0..=1.0).contains(x)) {
            failures.push(format!("(d) volume {i} leaves [0, 1]"));
        }
    }
    let (fast, t) = within(start.elapsed(), MCLAHE_BUDGET);
    outcome(
        failures.is_empty() && fast,
        format!(
            "(b) max dev {worst_b:.2e} (tol 1/128), {mappings} mappings checked, {MCLAHE_RANDOM_VOLUMES} volumes, {t}{}",
            failures.first().map(|f| format!("; {f}")).unwrap_or_default()
        ),
    )
}

// 6 -------------------------------------------------------------------------

fn geometry_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    const HOLE: u32 = u32::MAX;
    let mut survivors = 0usize;
    let mut failures = Vec::new();
    for case in 0..GEOMETRY_CASES {
        let shape: [usize; 3] = std::array::from_fn(|_| rng.random_range(1..40));
        let target: [usize; 3] = std::array::from_fn(|_| rng.random_range(1..40));
        let window: [usize; 3] = std::array::from_fn(|_| rng.random_range(1..40));
        let img = Image::<u32>::from_fn(shape, [1.0; 3], |x, y, z| (x + shape[0] * (y + shape[1] * z)) as u32).unwrap();
        let (std_img, p1) = standardize(&img, target, HOLE).unwrap();
        let center: [i64; 3] = std::array::from_fn(|k| rng.random_range(-5..target[k] as i64 + 5));
        let (crop, p2) = crop_window(&std_img, center, window, HOLE).unwrap();
        let back = paste(&paste(&crop, &p2, HOLE).unwrap(), &p1, HOLE).unwrap();
        if back.shape() != shape {
            failures.push(format!("case {case}: shape {:?}", back.shape()));
            continue;
        }
        for (i, &v) in back.data().iter().enumerate() {
            let [x, y, z] = img.coords(i);
            let kept = p1
                .to_child([x, y, z])
                .and_then(|c| p2.to_child(c))
                .is_some();
            let want = if kept { i as u32 } else { HOLE };
            if v != want {
                failures.push(format!("case {case}: voxel {i}"));
                break;
            }
            survivors += kept as usize;
        }
    }
    let probe = Image::<u8>::filled([640, 640, 44], [0.625, 0.625, 2.5], 0).unwrap();
    let (_, p) = standardize(&probe, [576, 576, 48], 0).unwrap();
    if p.offset != [32, 32, -2] {
        failures.push(format!("640x640x44 offset {:?}", p.offset));
    }
    let w = window_placement([576, 576, 48], [288, 288, 24], [256, 256, 48]).unwrap();
    if w.offset != [160, 160, 0] {
        failures.push(format!("centred window offset {:?}", w.offset));
    }
    outcome(
        failures.is_empty(),
        format!(
            "{GEOMETRY_CASES} round trips, {survivors} surviving voxels exact, 640x640x44 offset {:?}{}",
            p.offset,
            failures.first().map(|f| format!("; {f}")).unwrap_or_default()
        ),
    )
}

// 7, 9 ----------------------------------------------------------------------

struct E2e {
    seven: Outcome,
    pipeline_time: Duration,
}

fn write_phantom(dir: &Path, spec: &PhantomSpec) -> (LabelMap, std::path::PathBuf, std::path::PathBuf) {
    let (img, gt) = generate(spec).unwrap();
    let img_path = dir.join("phantom.nii.gz");
    let gt_path = dir.join("phantom_gt.nii.gz");
    write_volume_as(&img, &img_path, Dtype::F32, true).unwrap();
    write_label_map(&gt, &gt_path, true).unwrap();
    (gt, img_path, gt_path)
}

fn end_to_end() -> E2e {
    let start = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let spec = PhantomSpec::challenge_like(7);
    let (gt, img_path, gt_path) = write_phantom(tmp.path(), &spec);
    let case = CaseSpec {
        id: Some("phantom".into()),
        image: img_path,
        gt: Some(gt_path.clone()),
    };
    let oracle = BackendSpec::CopyFile {
        source_path: gt_path.to_string_lossy().into_owned(),
    };
    let mut failures = Vec::new();
    let classes = [WALL, RIGHT_ATRIUM, LEFT_ATRIUM];

    // oracle backends, MCLAHE on
    let cfg = PipelineConfig::new(vec![case.clone()], tmp.path().join("oracle"), oracle.clone(), oracle.clone());
    let t0 = Instant::now();
    let res = run_pipeline(&cfg).unwrap();
    let pipeline_time = t0.elapsed();
    let r = &res.cases[0];
    let mut oracle_scores = Vec::new();
    match &r.metrics {
        Some(m) if res.all_ok() => {
            for c in classes {
                let row = m.row("phantom", c).unwrap();
                oracle_scores.push(format!("{c} {}/{}", row.dice, row.hd95_mm));
                if row.dice != 1.0 || row.hd95_mm != 0.0 {
                    failures.push(format!("oracle {c}: dice {} hd95 {}", row.dice, row.hd95_mm));
                }
            }
        }
        _ => failures.push(format!("oracle run failed: {:?}", r.error)),
    }

    // threshold coarse stage on the raw phantom
    let mut cfg = PipelineConfig::new(
        vec![case],
        tmp.path().join("threshold"),
        BackendSpec::Threshold { threshold: 0.5 },
        oracle,
    );
    cfg.mclahe = MclaheSetting::Enabled(false);
    let res = run_pipeline(&cfg).unwrap();
    let r = &res.cases[0];
    let mut contained = (0usize, 0usize);
    let mut tight_held = 0usize;
    let mut min_dice = f64::NAN;
    if res.all_ok() {
        let place = r.standardize.unwrap();
        let roi = r.roi_bbox.unwrap();
        let tight = r.coarse_bbox.unwrap().scale(cfg.coarse_factors);
        for (i, &v) in gt.data().iter().enumerate() {
            if v != 0 {
                contained.1 += 1;
                if let Some(c) = place.to_child(gt.coords(i)) {
                    contained.0 += roi.contains(c) as usize;
                    tight_held += tight.contains(c) as usize;
                }
            }
        }
        if contained.0 != contained.1 {
            failures.push(format!("bbox holds {}/{} foreground voxels", contained.0, contained.1));
        }
        let m = r.metrics.as_ref().unwrap();
        min_dice = classes
            .iter()
            .map(|c| m.row("phantom", c).unwrap().dice)
            .fold(f64::INFINITY, f64::min);
        if !(min_dice > E2E_MIN_DICE) {
            failures.push(format!("threshold run min dice {min_dice}"));
        }
    } else {
        failures.push(format!("threshold run failed: {:?}", r.error));
    }
    let (fast, t) = within(start.elapsed(), E2E_BUDGET);
    E2e {
        seven: outcome(
            failures.is_empty() && fast,
            format!(
                "oracle [{}]; threshold ROI box holds {}/{} GT voxels ({tight_held} before margin), min dice {min_dice:.4}; {t}{}",
                oracle_scores.join(", "),
                contained.0,
                contained.1,
                failures.first().map(|f| format!("; {f}")).unwrap_or_default()
            ),
        ),
        pipeline_time,
    }
}

fn performance(pipeline_time: Duration) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let v = Volume::from_fn([576, 576, 48], [0.625, 0.625, 2.5], |_, _, _| rng.random()).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let start = Instant::now();
    pool.install(|| mclahe(&v, &MclaheParams::default())).unwrap();
    let (m_ok, m_t) = within(start.elapsed(), PERF_MCLAHE_BUDGET);
    let (p_ok, p_t) = within(pipeline_time, PERF_PIPELINE_BUDGET);
    outcome(
        m_ok && p_ok,
        format!("single-thread MCLAHE 576x576x48 {m_t}; full case with builtin backends {p_t}"),
    )
}

// 8 -------------------------------------------------------------------------

fn nifti_round_trip() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut files = 0usize;
    let mut failures = Vec::new();
    for i in 0..NIFTI_VOLUMES {
        let shape: [usize; 3] = std::array::from_fn(|_| rng.random_range(1..30));
        let spacing: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.2..4.0f32) as f64);
        for dtype in [Dtype::U8, Dtype::I16, Dtype::F32] {
            let v = Volume::from_fn(shape, spacing, |_, _, _| match dtype {
                Dtype::U8 => rng.random_range(0..=255u8) as f32,
                Dtype::I16 => rng.random_range(i16::MIN..=i16::MAX) as f32,
                Dtype::F32 => f32::from_bits(rng.random_range(0..0x7f80_0000u32)) * if rng.random() { 1.0 } else { -1.0 },
            })
            .unwrap();
            for gz in [false, true] {
                let path = tmp.path().join(format!("v{i}_{dtype:?}.nii{}", if gz { ".gz" } else { "" }));
                write_volume_as(&v, &path, dtype, gz).unwrap();
                let raw = read_nifti(&path).unwrap();
                let back = read_volume(&path).unwrap();
                let same = raw.dtype() == dtype
                    && back.shape() == v.shape()
                    && back.spacing() == v.spacing()
                    && back.data().iter().zip(v.data()).all(|(a, b)| a.to_bits() == b.to_bits());
                if !same {
                    failures.push(format!("volume {i} {dtype:?} gz={gz}"));
                }
                files += 1;
            }
        }
    }
    outcome(
        failures.is_empty(),
        format!(
            "{files} files bit-exact (uint8/int16/float32, plain and gzip){}",
            failures.first().map(|f| format!("; {f}")).unwrap_or_default()
        ),
    )
}

// 10 ------------------------------------------------------------------------

fn report_fidelity() -> Outcome {
    let fixture = [(WALL, "55.91", "5.10"), (RIGHT_ATRIUM, "86.12", "6.77"), (LEFT_ATRIUM, "88.15", "5.81")];
    let report = MetricReport {
        rows: fixture
            .iter()
            .map(|&(c, d, h)| MetricRow {
                case_id: "vnet_mclahe".into(),
                class_name: c.into(),
                dice: d.parse::<f64>().unwrap() / 100.0,
                hd95_mm: h.parse().unwrap(),
                hd_mm: h.parse().unwrap(),
                flag: None,
            })
            .collect(),
    };
    let csv = report.to_csv(true).unwrap();
    let mut ok = csv.lines().next() == Some("case_id,class,dice,hd95_mm,flags");
    for (line, &(c, d, h)) in csv.lines().skip(1).zip(&fixture) {
        let f: Vec<&str> = line.split(',').collect();
        ok &= f.len() == 5
            && f[1] == c
            && f[2].parse::<f64>().ok() == d.parse().ok()
            && f[3].parse::<f64>().ok() == h.parse().ok();
    }
    ok &= csv.lines().count() == 4;
    outcome(ok, format!("percent rows: {}", csv.lines().skip(1).collect::<Vec<_>>().join(" | ")))
}

fn main() -> ExitCode {
    let e2e = end_to_end();
    let results = [
        ("loss identities", loss_identities()),
        ("gradient check", gradient_check()),
        ("metric oracle equivalence", metric_oracle()),
        ("hand values", hand_values()),
        ("MCLAHE properties", mclahe_checks()),
        ("geometry round trip", geometry_round_trip()),
        ("end-to-end phantom", e2e.seven),
        ("NIfTI round trip", nifti_round_trip()),
        ("performance", performance(e2e.pipeline_time)),
        ("report fidelity", report_fidelity()),
    ];
    let mut failed = 0;
    for (i, (name, o)) in results.iter().enumerate() {
        println!(
            "acceptance {:>2} {:<26} {}  {}",
            i + 1,
            name,
            if o.ok { "PASS" } else { "FAIL" },
            o.detail
        );
        failed += !o.ok as usize;
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE }
}
