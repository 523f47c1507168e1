//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Pass criterion numbers or name fragments to run a subset.

use std::time::{Duration, Instant};

use grbm_core::checkpoint::{decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, MemoryCheckpoints};
use grbm_core::data::{
    contrast_normalize, extract_patches, fit_preprocess, read_cifar_batch, synthetic_edge_images, zca_apply,
    CIFAR_RECORDS, CIFAR_RECORD_BYTES, CONTRAST_EPSILON, ZCA_EPSILON,
};
use grbm_core::encode::{EncoderConfig, EncodingScheme};
use grbm_core::infomax::{early_stop_index, unit_mutual_information};
use grbm_core::oracle::{exact_joint_mutual_information, ExactModel};
use grbm_core::pipeline::{run_pipeline, PipelineConfig, PipelineReport, UnsupervisedRun};
use grbm_core::rng;
use grbm_core::toy::{run_toy, ToyConfig};
use grbm_core::train::{cd_gradient, evaluation_rows, pcd_gradient, train, PersistentChains};
use grbm_core::verify::{gradient_check, random_tiny_model, FD_STEP, GRADIENT_REL_TOLERANCE, UPPER_BOUND_SLACK};
use grbm_core::{AmiTrace, GradientEstimate, GrbmParams, StopCriterion, TrainConfig};
use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{s, Array1, Array2, Axis};
use rand::Rng as _;
use rand_distr::{Distribution, Normal};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within(start: Instant, budget: Duration) -> bool {
    start.elapsed() < budget
}

fn c1_ami_upper_bound() -> Outcome {
    let start = Instant::now();
    let mut worst_gap = f64::NEG_INFINITY;
    let mut failures = 0;
    for seed in 0..50 {
        let (params, data) = random_tiny_model(seed).unwrap();
        assert!(params.n_hidden() <= 8 && params.n_visible() <= 4 && data.nrows() <= 200);
        let exact = exact_joint_mutual_information(&params, data.view()).unwrap();
        let ami = unit_mutual_information(&params, data.view()).unwrap().ami;
        worst_gap = worst_gap.max(exact - ami);
        if exact > ami + UPPER_BOUND_SLACK {
            failures += 1;
        }
    }
    outcome(
        failures == 0 && within(start, Duration::from_secs(60)),
        format!("50 models, {failures} violations, max(I - AMI) = {worst_gap:.3e}, {:.1?}", start.elapsed()),
    )
}

fn c2_exact_gradient() -> Outcome {
    let start = Instant::now();
    let errors: Vec<f64> = (100..125)
        .map(|seed| {
            let (params, data) = random_tiny_model(seed).unwrap();
            gradient_check(&params, &data, FD_STEP).unwrap()
        })
        .collect();
    let worst = errors.iter().cloned().fold(0.0, f64::max);
    outcome(
        worst <= GRADIENT_REL_TOLERANCE && within(start, Duration::from_secs(60)),
        format!("{} models, worst relative error {worst:.3e} (step {FD_STEP}), {:.1?}", errors.len(), start.elapsed()),
    )
}

/// Largest |mean| / SE over all gradient entries, from per-batch estimates.
fn worst_z(batches: &[GradientEstimate]) -> f64 {
    let n = batches.len() as f64;
    let flat: Vec<Vec<f64>> = batches
        .iter()
        .map(|g| g.dw.iter().chain(g.da.iter()).chain(g.db.iter()).copied().collect())
        .collect();
    (0..flat[0].len())
        .map(|j| {
            let mean = flat.iter().map(|f| f[j]).sum::<f64>() / n;
            let var = flat.iter().map(|f| (f[j] - mean).powi(2)).sum::<f64>() / (n - 1.0);
            mean.abs() / (var / n).sqrt()
        })
        .fold(0.0, f64::max)
}

fn c3_equilibrium_gradients() -> Outcome {
    let start = Instant::now();
    let mut rng = rng::seeded(3);
    let normal = Normal::new(0.0, 0.8).unwrap();
    let params = GrbmParams::new(
        Array2::from_shape_fn((3, 2), |_| normal.sample(&mut rng)),
        Array1::from_shape_fn(3, |_| normal.sample(&mut rng)),
        Array1::from_shape_fn(2, |_| normal.sample(&mut rng)),
        Array1::from_elem(2, 1.0),
    )
    .unwrap();
    let data = ExactModel::new(params.clone()).unwrap().sample(10_000, &mut rng);
    let (batch, k) = (100, 100);
    let cd: Vec<GradientEstimate> = data
        .axis_chunks_iter(Axis(0), batch)
        .map(|b| cd_gradient(&params, b, k, &mut rng).unwrap())
        .collect();
    let mut chains = PersistentChains::from_data(data.slice(s![..batch, ..]), batch, 7).unwrap();
    let pcd: Vec<GradientEstimate> = data
        .axis_chunks_iter(Axis(0), batch)
        .map(|b| pcd_gradient(&params, b, &mut chains, k).unwrap())
        .collect();
    let (zc, zp) = (worst_z(&cd), worst_z(&pcd));
    outcome(
        zc <= 5.0 && zp <= 5.0 && within(start, Duration::from_secs(120)),
        format!("10^4 exact samples, k={k}: worst |mean|/SE CD {zc:.2}, PCD {zp:.2} (bound 5), {:.1?}", start.elapsed()),
    )
}

fn c4_toy() -> Outcome {
    let start = Instant::now();
    let cfg = ToyConfig::default();
    let run = run_toy(&cfg).unwrap();
    let last = run.log.last().unwrap();
    assert_eq!(last.epoch, 2000);
    let big = |norms: &[f64], frac: f64| {
        let max = norms.iter().cloned().fold(0.0, f64::max);
        norms.iter().filter(|&&n| n >= frac * max).count()
    };
    let inner = &run.log[1..run.log.len() - 1];
    let spread = inner.iter().map(|e| big(&e.filter_norms, 0.5)).max().unwrap_or(0);
    let max_final = last.filter_norms.iter().cloned().fold(0.0, f64::max);
    let surviving = last.filter_norms.iter().filter(|&&n| n > 0.1 * max_final).count();
    let peak = run.log.iter().fold(&run.log[0], |p, e| if e.ami > p.ami { e } else { p });
    let drop = 1.0 - last.ami / peak.ami;
    let a = spread >= 3;
    let b = surviving <= 2;
    let c = peak.epoch > 0 && peak.epoch < 2000 && drop >= 0.05;
    outcome(
        a && b && c && within(start, Duration::from_secs(300)),
        format!(
            "(a) {spread} filters >= 50% of max mid-run [{}]; (b) {surviving} filters > 10% at epoch 2000 [{}]; \
             (c) AMI peak {:.4} at epoch {}, final {:.4}, drop {:.1}% [{}]; {:.1?}",
            if a { "ok" } else { "no" },
            if b { "ok" } else { "no" },
            peak.ami,
            peak.epoch,
            last.ami,
            100.0 * drop,
            if c { "ok" } else { "no" },
            start.elapsed()
        ),
    )
}

fn c5_stop_selector() -> Outcome {
    let start = Instant::now();
    let hand = AmiTrace::from_values(&[1.0, 3.0, 5.0, 4.0, 2.0]).unwrap();
    let at = |trace: &AmiTrace, theta: f64| early_stop_index(trace, StopCriterion::new(theta).unwrap()).unwrap().epoch;
    let hand_ok = at(&hand, 0.0) == 2 && at(&hand, -1.5) == 1 && at(&hand, 1.5) == 3;

    let mut rng = rng::seeded(5);
    let mut violations = 0;
    for _ in 0..1000 {
        let len = rng.random_range(1..60);
        let peak = rng.random_range(0..len);
        let mut values = vec![0.0; len];
        values[peak] = rng.random_range(1.0..10.0);
        for t in (0..peak).rev() {
            values[t] = values[t + 1] - rng.random_range(0.01..1.0);
        }
        for t in peak + 1..len {
            values[t] = values[t - 1] - rng.random_range(0.01..1.0);
        }
        let trace = AmiTrace::from_values(&values).unwrap();
        let theta: f64 = rng.random_range(0.01..3.0);
        let ok = at(&trace, 0.0) == peak && at(&trace, -theta) <= peak && at(&trace, theta) >= peak;
        violations += usize::from(!ok);
    }
    outcome(
        hand_ok && violations == 0,
        format!(
            "hand trace [1,3,5,4,2] -> 2/1/3 for theta 0/-1.5/1.5 [{}]; {violations} violations on 1000 random unimodal traces; {:.1?}",
            if hand_ok { "ok" } else { "no" },
            start.elapsed()
        ),
    )
}

const IMAGE_SEEDS: u64 = 5;

/// The scaled-down image run: 5000 synthetic images, M = 64, 6x6x3 patches, 20 epochs.
fn image_config(seed: u64) -> PipelineConfig {
    PipelineConfig {
        rf_size: 6,
        patches: 20_000,
        hidden: 64,
        train: TrainConfig {
            epochs: 20,
            seed,
            eval_subset: 5_000,
            ..TrainConfig::default()
        },
        encoder: EncoderConfig {
            scheme: EncodingScheme::SoftThreshold(0.25),
            stride: 2,
        },
        svm_c: 35.0,
        classifier_images: 2_000,
        thetas: vec![0.0],
        ..PipelineConfig::default()
    }
}

struct ImageRuns {
    runs: Vec<(UnsupervisedRun, PipelineReport)>,
    elapsed: Duration,
}

fn image_runs() -> ImageRuns {
    let start = Instant::now();
    let train_images = synthetic_edge_images(5_000, 1);
    let test_images = synthetic_edge_images(1_000, 2);
    let runs = (0..IMAGE_SEEDS)
        .map(|seed| {
            run_pipeline(&train_images, &test_images, &image_config(seed), &mut MemoryCheckpoints::default()).unwrap()
        })
        .collect();
    ImageRuns { runs, elapsed: start.elapsed() }
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s[s.len() / 2]
}

fn c6_mi_threshold(runs: &ImageRuns) -> Outcome {
    const THRESHOLD: f64 = 0.02;
    let (mut cases, mut below, mut above_total, mut units_total) = (0, 0, 0, 0);
    let mut sorted = true;
    for (run, _) in &runs.runs {
        let r = &run.final_report;
        sorted &= r.unit_order.windows(2).all(|w| r.per_unit_mi[w[0]] <= r.per_unit_mi[w[1]]);
        let above = r.units_above(THRESHOLD);
        sorted &= r.threshold_rank(THRESHOLD) + above.len() == r.unit_order.len();
        above_total += above.len();
        units_total += r.unit_order.len();
        let norms = run.final_params.filter_norms();
        let med = median(&norms);
        for (i, &n) in norms.iter().enumerate() {
            if n < 0.1 * med {
                cases += 1;
                below += usize::from(r.per_unit_mi[i] < THRESHOLD);
            }
        }
    }
    // Near-uniform filters planted into a trained model, scored on its own patches.
    let (run, _) = &runs.runs[0];
    let cfg = image_config(0);
    let patches = extract_patches(&synthetic_edge_images(5_000, 1), cfg.rf_size, cfg.patches, cfg.train.seed).unwrap();
    let white = run.preprocess.transform(&patches).unwrap();
    let eval = white.rows.select(Axis(0), &evaluation_rows(white.len(), cfg.train.eval_subset, cfg.train.seed));
    let mut rng = rng::seeded(6);
    let tiny = Normal::new(0.0, grbm_core::params::INIT_WEIGHT_STD).unwrap();
    let mut planted = run.final_params.clone();
    let (first, count) = (planted.n_hidden(), 8);
    for _ in 0..count {
        let filter = Array1::from_shape_fn(planted.n_visible(), |_| tiny.sample(&mut rng));
        planted = planted.with_hidden_unit(filter.view(), 0.0).unwrap();
    }
    let report = unit_mutual_information(&planted, eval.view()).unwrap();
    let planted_below = (first..first + count).filter(|&i| report.per_unit_mi[i] < THRESHOLD).count();
    let trained_ok = cases == 0 || below as f64 >= 0.9 * cases as f64;
    let planted_ok = planted_below as f64 >= 0.9 * count as f64;
    outcome(
        sorted && trained_ok && planted_ok && runs.elapsed < Duration::from_secs(30 * 60),
        format!(
            "{} runs: {above_total}/{units_total} units above {THRESHOLD} nat; near-uniform trained filters below \
             threshold {below}/{cases}{}; planted init-scale filters below threshold {planted_below}/{count}",
            runs.runs.len(),
            if cases == 0 { " (none occur)" } else { "" }
        ),
    )
}

fn c7_table_direction(runs: &ImageRuns) -> Outcome {
    let n = runs.runs.len() as f64;
    let theta0: Vec<f64> = runs.runs.iter().map(|(_, r)| r.selections[0].test_accuracy).collect();
    let last: Vec<f64> = runs.runs.iter().map(|(_, r)| r.final_accuracy).collect();
    let stops: Vec<usize> = runs.runs.iter().map(|(_, r)| r.selections[0].decision.epoch).collect();
    let (m0, mf) = (theta0.iter().sum::<f64>() / n, last.iter().sum::<f64>() / n);
    outcome(
        runs.runs.len() >= 5 && m0 >= mf && runs.elapsed < Duration::from_secs(2 * 3600),
        format!(
            "{} seeds: mean accuracy at theta=0 {m0:.2}% vs final epoch {mf:.2}% (theta=0 stops at epochs {stops:?}; \
             per seed {theta0:?} vs {last:?}); image runs took {:.1?}",
            runs.runs.len(),
            runs.elapsed
        ),
    )
}

fn c8_formats() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let good = CIFAR_RECORDS * CIFAR_RECORD_BYTES;
    let mut rejects = 0;
    for size in [0, CIFAR_RECORD_BYTES, good - 1, good + 1] {
        let path = dir.path().join(format!("batch_{size}.bin"));
        std::fs::write(&path, vec![0u8; size]).unwrap();
        rejects += usize::from(read_cifar_batch(&path).is_err());
    }
    let path = dir.path().join("batch_ok.bin");
    std::fs::write(&path, vec![0u8; good]).unwrap();
    let accepts = read_cifar_batch(&path).map(|s| s.len() == CIFAR_RECORDS).unwrap_or(false);

    let params = GrbmParams::initialize(16, 27, 8).unwrap();
    let path = dir.path().join("p.grbm");
    write_checkpoint(&path, &params, 12).unwrap();
    let (back, epoch) = read_checkpoint(&path).unwrap();
    let bits = |p: &GrbmParams| -> Vec<u64> {
        p.weights()
            .iter()
            .chain(p.hidden_bias().iter())
            .chain(p.visible_bias().iter())
            .chain(p.sigma().iter())
            .map(|x| x.to_bits())
            .collect()
    };
    let bytes = encode_checkpoint(&params, 12);
    let round_trip = epoch == 12
        && bits(&back) == bits(&params)
        && encode_checkpoint(&back, 12) == bytes
        && decode_checkpoint(&bytes, &path).is_ok();

    let images = synthetic_edge_images(200, 9);
    let (_, white) = fit_preprocess(&extract_patches(&images, 6, 2_000, 9).unwrap(), CONTRAST_EPSILON, ZCA_EPSILON).unwrap();
    let cfg = TrainConfig { epochs: 3, seed: 9, eval_subset: 500, ..TrainConfig::default() };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let trajectory = || {
        pool.install(|| {
            let mut store = MemoryCheckpoints::default();
            let init = GrbmParams::initialize(12, white.dim(), 9).unwrap();
            let out = train(init, white.view(), &cfg, &mut store).unwrap();
            let epochs: Vec<Vec<u64>> =
                (0..=3).map(|e| bits(&grbm_core::train::memory_checkpoint(&store, e).unwrap())).collect();
            (epochs, out.trace.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>())
        })
    };
    let deterministic = trajectory() == trajectory();
    outcome(
        rejects == 4 && accepts && round_trip && deterministic,
        format!(
            "CIFAR size check rejects {rejects}/4 wrong sizes, accepts exact size [{}]; checkpoint bit-identical [{}]; \
             single-threaded trajectory bit-identical [{}]; {:.1?}",
            if accepts { "ok" } else { "no" },
            if round_trip { "ok" } else { "no" },
            if deterministic { "ok" } else { "no" },
            start.elapsed()
        ),
    )
}

fn c9_zca() -> Outcome {
    let start = Instant::now();
    let images = synthetic_edge_images(2_000, 11);
    let patches = extract_patches(&images, 6, 20_000, 11).unwrap();
    let (model, white) = fit_preprocess(&patches, CONTRAST_EPSILON, ZCA_EPSILON).unwrap();
    let cov = |x: &Array2<f64>| {
        let c = x - &x.mean_axis(Axis(0)).unwrap();
        c.t().dot(&c) / x.nrows() as f64
    };
    let normalized = contrast_normalize(&patches, CONTRAST_EPSILON).unwrap();
    assert_eq!(zca_apply(&model, &normalized).unwrap(), white);
    let d = white.dim();
    let c_in = cov(&normalized.rows);
    let eig = SymmetricEigen::new(DMatrix::from_fn(d, d, |i, j| c_in[[i, j]]));
    let c_out = cov(&white.rows);
    let c_out = DMatrix::from_fn(d, d, |i, j| c_out[[i, j]]);
    let rotated = eig.eigenvectors.transpose() * &c_out * &eig.eigenvectors;
    let mut off = 0.0f64;
    let mut diag = 0.0f64;
    let mut strong = 0;
    for i in 0..d {
        for j in 0..d {
            if i != j {
                off = off.max(rotated[(i, j)].abs());
            }
        }
        if eig.eigenvalues[i] >= 1000.0 * ZCA_EPSILON {
            strong += 1;
            diag = diag.max((rotated[(i, i)] - 1.0).abs());
        }
    }
    let standard_off = (0..d)
        .flat_map(|i| (0..d).filter(move |&j| j != i).map(move |j| (i, j)))
        .map(|(i, j)| c_out[(i, j)].abs())
        .fold(0.0, f64::max);
    outcome(
        off <= 1e-6 && diag <= 1e-3 && strong > 0 && within(start, Duration::from_secs(60)),
        format!(
            "eigenbasis off-diagonal max {off:.2e} (<= 1e-6); {strong} high-variance directions, max |var - 1| {diag:.2e} \
             (<= 1e-3); standard-basis off-diagonal max {standard_off:.2e}; {:.1?}",
            start.elapsed()
        ),
    )
}

fn main() {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let names = [
        "1_ami_upper_bound",
        "2_exact_gradient",
        "3_equilibrium_gradients",
        "4_toy_experiment",
        "5_stop_selector",
        "6_mi_threshold",
        "7_table_direction",
        "8_format_bit_exactness",
        "9_zca",
    ];
    let selected: Vec<bool> = names
        .iter()
        .map(|n| filters.is_empty() || filters.iter().any(|f| n.contains(f.as_str()) || "acceptance".contains(f.as_str())))
        .collect();
    let mut images = None;
    let mut failed = 0;
    for (k, name) in names.iter().enumerate() {
        if !selected[k] {
            continue;
        }
        let result = match k + 1 {
            1 => c1_ami_upper_bound(),
            2 => c2_exact_gradient(),
            3 => c3_equilibrium_gradients(),
            4 => c4_toy(),
            5 => c5_stop_selector(),
            6 => c6_mi_threshold(images.get_or_insert_with(image_runs)),
            7 => c7_table_direction(images.get_or_insert_with(image_runs)),
            8 => c8_formats(),
            _ => c9_zca(),
        };
        failed += usize::from(!result.pass);
        println!("criterion {name}: {} - {}", if result.pass { "PASS" } else { "FAIL" }, result.detail);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
