//! Acceptance criteria 1 to 10. Runs as a plain binary so criteria execute
//! one at a time (wall-clock budgets are meaningful on a single core) and
//! each prints one PASS/FAIL line. Positional arguments select criteria by
//! number, e.g. `cargo test --test acceptance -- 4 8`.

#[path = "../../core/tests/support/mod.rs"]
mod core_support;
#[path = "../../stats/tests/support/mod.rs"]
mod stats_support;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use selftaught_core::{set_parallel, Tape, Tensor};
use selftaught_curation::{fetch_metadata_pages, filter_pretraining_maps, Criterion, DatasetManifest, LabelKey, ManifestRow, PageSource, RetryPolicy};
use selftaught_harness::{benchmark_recipe, benchmark_spec, generate_synthetic, run_recipe, SyntheticSpec, BENCH_SMALL_N, DESK_DIMS};
use selftaught_models::{plan_shapes, ArchId, ArchitecturePlan, Network, PlanOptions, TransferMode, FULL_INPUT_DIMS};
use selftaught_splits::{build_fold_plan, build_small_brainpedia, nested_subsample, stratified_study_split, study_of_key, Half};
use selftaught_stats::{classification_metrics, paired_ttest, pearson_r};
use selftaught_train::{evaluate_cae, evaluate_classifier, train_cae, train_classifier, TrainConfig};
use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn within(start: Instant, budget: Duration, detail: String) -> Outcome {
    let t = start.elapsed();
    ensure!(t < budget, "{detail}; took {:.1}s, budget {:.0}s", t.as_secs_f64(), budget.as_secs_f64());
    Ok(format!("{detail} in {:.1}s", t.as_secs_f64()))
}

fn c1_shapes() -> Outcome {
    let start = Instant::now();
    let mut parts = Vec::new();
    for (depth, spatial, numel) in [(4, [3, 4, 3], 18_432), (5, [2, 2, 2], 4_096)] {
        let plan = ArchitecturePlan::cae(depth, PlanOptions::with_dims(FULL_INPUT_DIMS)).map_err(|e| e.to_string())?;
        let latent = plan.latent_shape().map_err(|e| e.to_string())?;
        ensure!(latent.channels == 512 && latent.spatial == spatial, "cae{depth} latent {latent:?}");
        ensure!(latent.numel() == numel, "cae{depth} latent has {} values", latent.numel());
        let chain = plan_shapes(&plan).map_err(|e| e.to_string())?;
        ensure!(chain.last().map(|s| s.spatial) == Some(FULL_INPUT_DIMS), "cae{depth} output {:?}", chain.last());
        parts.push(format!("cae{depth} 512x{}x{}x{}={numel}", spatial[0], spatial[1], spatial[2]));
    }
    within(start, Duration::from_secs(1), parts.join(", "))
}

fn c2_gradients() -> Outcome {
    let start = Instant::now();
    let reports = core_support::gradient_suite(20, 2024);
    let worst = reports.iter().map(|r| r.max_rel_error).fold(0.0, f64::max);
    for r in &reports {
        ensure!(r.cases >= 20, "{} ran {} cases", r.op, r.cases);
        ensure!(r.max_rel_error < 1e-3, "{} max relative error {:.2e}", r.op, r.max_rel_error);
    }
    within(start, Duration::from_secs(120), format!("{} ops x 20 cases, worst {worst:.1e}", reports.len()))
}

fn c3_kernels() -> Outcome {
    use core_support::*;
    let start = Instant::now();
    let mut r = rng(31);
    let mut worst = 0.0f64;
    let mut adjoints = 0;
    let cases = 40;
    for _ in 0..cases {
        let dims = [r.random_range(1..=6), r.random_range(1..=6), r.random_range(1..=6)];
        let g = random_geometry(&mut r, dims);
        let (n, ci, co) = (r.random_range(1..3), r.random_range(1..4), r.random_range(1..4));
        let [k0, k1, k2] = g.kernel;
        let x = random_tensor(&mut r, &[n, ci, dims[0], dims[1], dims[2]], 1.0);
        let w = random_tensor(&mut r, &[co, ci, k0, k1, k2], 1.0);
        let b = random_tensor(&mut r, &[co], 1.0);
        let (want, od) = naive_conv3d(x.data(), n, ci, dims, w.data(), co, b.data(), g);
        let mut t = Tape::<f64>::new();
        let xv = t.param(x).map_err(|e| e.to_string())?;
        let wv = t.constant(w.clone()).map_err(|e| e.to_string())?;
        let bv = t.constant(b.clone()).map_err(|e| e.to_string())?;
        let y = t.conv3d(xv, wv, Some(bv), g).map_err(|e| e.to_string())?;
        let err = max_abs_diff(t.value(y).data(), &want);
        ensure!(err < 1e-6, "conv3d {dims:?} {g:?}: {err:.2e}");
        worst = worst.max(err);

        // Adjoint: the input gradient of <conv(x), u> is tconv(u).
        let u = random_tensor(&mut r, &[n, co, od[0], od[1], od[2]], 1.0);
        let uv = t.constant(u.clone()).map_err(|e| e.to_string())?;
        let p = t.mul(y, uv).map_err(|e| e.to_string())?;
        let l = t.reduce_sum(p).map_err(|e| e.to_string())?;
        t.backward(l).map_err(|e| e.to_string())?;
        let adjoint = t.grad(xv).ok_or("missing input gradient")?.clone();
        let mut t2 = Tape::<f64>::new();
        let uv = t2.constant(u.clone()).map_err(|e| e.to_string())?;
        let wv = t2.constant(w.clone()).map_err(|e| e.to_string())?;
        if let Ok(z) = t2.tconv3d(uv, wv, None, g) {
            // Output sizes agree unless stride leaves a ragged border.
            if t2.shape(z) == adjoint.shape() {
                let err = max_abs_diff(t2.value(z).data(), adjoint.data());
                ensure!(err < 1e-6, "tconv3d is not the adjoint of conv3d for {dims:?} {g:?}: {err:.2e}");
                adjoints += 1;
            }
        }
        let (tw, _) = naive_tconv3d(u.data(), n, co, od, w.data(), ci, &vec![0.0; ci], g);
        if tw.len() == adjoint.numel() {
            let err = max_abs_diff(&tw, adjoint.data());
            ensure!(err < 1e-6, "scatter reference vs conv adjoint for {dims:?} {g:?}: {err:.2e}");
        }

        let tdims = [r.random_range(1..=4), r.random_range(1..=4), r.random_range(1..=4)];
        let tg = loop {
            let g = random_geometry(&mut r, [4, 4, 4]);
            if g.tconv_output(tdims).is_some_and(|o| o.iter().all(|&d| d <= 6)) {
                break g;
            }
        };
        let x = random_tensor(&mut r, &[n, ci, tdims[0], tdims[1], tdims[2]], 1.0);
        let [k0, k1, k2] = tg.kernel;
        let w = random_tensor(&mut r, &[ci, co, k0, k1, k2], 1.0);
        let (want, _) = naive_tconv3d(x.data(), n, ci, tdims, w.data(), co, b.data(), tg);
        let mut t = Tape::<f64>::new();
        let xv = t.constant(x).map_err(|e| e.to_string())?;
        let wv = t.constant(w).map_err(|e| e.to_string())?;
        let bv = t.constant(b).map_err(|e| e.to_string())?;
        let y = t.tconv3d(xv, wv, Some(bv), tg).map_err(|e| e.to_string())?;
        let err = max_abs_diff(t.value(y).data(), &want);
        ensure!(err < 1e-6, "tconv3d {tdims:?} {tg:?}: {err:.2e}");
        worst = worst.max(err);
    }
    ensure!(adjoints >= cases / 2, "only {adjoints} adjoint comparisons ran");
    within(
        start,
        Duration::from_secs(60),
        format!("{cases} conv + {cases} tconv cases, worst {worst:.1e}, adjoint identity on {adjoints}"),
    )
}

/// Full-width cae4 on the desk grid, at the default Adam lr.
const OVERFIT_CAE_BATCH: usize = 2;
const OVERFIT_CAE_EPOCHS: usize = 200;
const OVERFIT_CNN_EPOCHS: usize = 50;

fn c4_overfit() -> Outcome {
    let start = Instant::now();
    set_parallel(false);
    let spec = SyntheticSpec {
        subjects_per_study: 2,
        classes: 4,
        dims: DESK_DIMS,
        seed: 41,
        ..SyntheticSpec::default()
    };
    let data = generate_synthetic(&spec).map_err(|e| e.to_string())?;
    ensure!(data.maps.len() == 8, "{} maps", data.maps.len());
    let cfg = TrainConfig {
        arch_id: ArchId::Cae4,
        input_dims: DESK_DIMS,
        batch_size: OVERFIT_CAE_BATCH,
        epochs: OVERFIT_CAE_EPOCHS,
        seed: 41,
        ..TrainConfig::default()
    };
    let mut run = train_cae(&data.maps, &cfg).map_err(|e| e.to_string())?;
    let eval = evaluate_cae(&mut run.network, &data.maps).map_err(|e| e.to_string())?;
    let cae_time = start.elapsed().as_secs_f64();
    ensure!(eval.undefined == 0, "{} maps had undefined r", eval.undefined);
    ensure!(eval.mean > 0.99, "cae4 mean r {:.4} after {OVERFIT_CAE_EPOCHS} epochs", eval.mean);

    let spec = SyntheticSpec {
        subjects_per_study: 4,
        classes: 4,
        dims: DESK_DIMS,
        noise_sigma: 0.1,
        subject_amplitude: 0.2,
        seed: 42,
        ..SyntheticSpec::default()
    };
    let data = generate_synthetic(&spec).map_err(|e| e.to_string())?;
    ensure!(data.maps.len() == 16, "{} maps", data.maps.len());
    let cfg = TrainConfig {
        arch_id: ArchId::Cnn4,
        input_dims: DESK_DIMS,
        batch_size: 4,
        epochs: OVERFIT_CNN_EPOCHS,
        seed: 42,
        ..TrainConfig::default()
    };
    let mut cnn = train_classifier(&data.maps, &cfg, None, None).map_err(|e| e.to_string())?;
    let (_, m) = evaluate_classifier(&mut cnn.network, &data.maps).map_err(|e| e.to_string())?;
    set_parallel(true);
    ensure!(m.accuracy == 1.0, "cnn4 train accuracy {:.3} after {OVERFIT_CNN_EPOCHS} epochs", m.accuracy);
    within(
        start,
        Duration::from_secs(600),
        format!("cae4 mean r {:.4} ({cae_time:.0}s), cnn4 train accuracy 1.0 on 16 maps", eval.mean),
    )
}

fn c5_transfer() -> Outcome {
    let mut opts = PlanOptions::with_dims(DESK_DIMS);
    opts.width_divisor = 4;
    let spec = SyntheticSpec {
        subjects_per_study: 2,
        classes: 2,
        dims: DESK_DIMS,
        seed: 51,
        ..SyntheticSpec::default()
    };
    let data = generate_synthetic(&spec).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut checked = 0;
    for depth in [4, 5] {
        let cfg = TrainConfig {
            arch_id: if depth == 4 { ArchId::Cae4 } else { ArchId::Cae5 },
            input_dims: DESK_DIMS,
            width_divisor: 4,
            batch_size: 2,
            epochs: 2,
            seed: 50 + depth as u64,
            ..TrainConfig::default()
        };
        // A briefly trained CAE, so normalization buffers are not at defaults.
        let mut cae = train_cae(&data.maps, &cfg).map_err(|e| e.to_string())?.network;
        let ck = cae.to_checkpoint().map_err(|e| e.to_string())?;
        let plan = ArchitecturePlan::cnn(depth, 3, opts.clone()).map_err(|e| e.to_string())?;
        let mut cnn = Network::<f32>::from_cae(plan, &ck, TransferMode::WithNorm, &mut rng).map_err(|e| e.to_string())?;
        cae.set_training(false);
        cnn.set_training(false);
        let n: usize = DESK_DIMS.iter().product();
        for _ in 0..4 {
            let values: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let x = Tensor::from_f64(&[1, 1, DESK_DIMS[0], DESK_DIMS[1], DESK_DIMS[2]], &values).map_err(|e| e.to_string())?;
            let latent = cae.infer(&x).map_err(|e| e.to_string())?.1;
            let mut tape = Tape::new();
            let xv = tape.constant(x).map_err(|e| e.to_string())?;
            let fp = cnn.forward(&mut tape, xv).map_err(|e| e.to_string())?;
            let enc = tape.value(fp.encoder_output);
            ensure!(enc.shape() == latent.shape(), "cae{depth}: shapes {:?} vs {:?}", enc.shape(), latent.shape());
            let same = enc.data().iter().zip(latent.data()).all(|(a, b)| a.to_bits() == b.to_bits());
            ensure!(same, "cae{depth}: encoder activations differ");
            checked += 1;
        }
    }
    Ok(format!("{checked} inputs across cae4/cae5 bit-identical in eval mode"))
}

fn manifest(studies: &[usize], maps_per_subject: usize, rng: &mut impl Rng) -> DatasetManifest {
    let mut rows = Vec::new();
    for (st, &subjects) in studies.iter().enumerate() {
        for s in 0..subjects {
            for m in 0..maps_per_subject {
                rows.push(ManifestRow {
                    image_id: format!("st{st}-s{s}-m{m}"),
                    subject_id: Some(format!("sub{s:04}")),
                    study_id: Some(format!("study{st:02}")),
                    label: Some(format!("c{}", rng.random_range(0..4))),
                    file_path: None,
                });
            }
        }
    }
    DatasetManifest::new(Some(LabelKey::Concept), (0..4).map(|c| format!("c{c}")).collect(), rows)
}

/// Subject keys on each side, computed straight from rows.
fn subjects_of(m: &DatasetManifest, rows: &[usize], by_study: bool) -> BTreeSet<String> {
    rows.iter()
        .map(|&i| {
            let r = &m.rows[i];
            let s = r.subject_id.clone().unwrap_or_default();
            if by_study {
                format!("{}/{s}", r.study_id.clone().unwrap_or_default())
            } else {
                s
            }
        })
        .collect()
}

fn c6_splits() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let k = 5;
    for trial in 0..100 {
        let seed: u64 = rng.random();
        // Single-study corpus large enough for the 200/100/50 chain.
        let m = manifest(&[rng.random_range(400..600)], rng.random_range(1..4), &mut rng);
        let plan = build_fold_plan(&m, seed, k).map_err(|e| e.to_string())?;
        let all: Vec<usize> = (0..k).collect();
        let val = plan.rows(&m, Half::Validation, &all).map_err(|e| e.to_string())?;
        let test = plan.rows(&m, Half::Test, &all).map_err(|e| e.to_string())?;
        ensure!(val.len() + test.len() == m.len(), "trial {trial}: halves drop rows");
        ensure!(subjects_of(&m, &val, false).is_disjoint(&subjects_of(&m, &test, false)), "trial {trial}: halves share subjects");
        for half in Half::BOTH {
            for held in 0..k {
                let train: Vec<usize> = (0..k).filter(|&f| f != held).collect();
                let tr = plan.rows(&m, half, &train).map_err(|e| e.to_string())?;
                let te = plan.rows(&m, half, &[held]).map_err(|e| e.to_string())?;
                ensure!(subjects_of(&m, &tr, false).is_disjoint(&subjects_of(&m, &te, false)), "trial {trial}: fold {held} leaks");
            }
        }
        let chain = nested_subsample(&plan, Half::Test, &[200, 100, 50], seed).map_err(|e| e.to_string())?;
        let sizes: Vec<usize> = chain.iter().map(|p| p.len()).collect();
        ensure!(sizes == [200, 100, 50], "trial {trial}: chain sizes {sizes:?}");
        let parents = [&plan, &chain[0], &chain[1]];
        for (child, parent) in chain.iter().zip(parents) {
            for (s, a) in &child.assignments {
                ensure!(parent.assignments.get(s) == Some(a), "trial {trial}: {s} changes fold or half when nested");
            }
        }

        // Multi-study corpus: every eligible study in every fold of both halves.
        let n_studies = rng.random_range(2..6);
        let studies: Vec<usize> = (0..n_studies).map(|_| rng.random_range(10..30)).collect();
        let sm = manifest(&studies, 1, &mut rng);
        let strat = stratified_study_split(&sm, seed, k).map_err(|e| e.to_string())?;
        for half in Half::BOTH {
            for f in 0..k {
                let present: BTreeSet<String> = strat.fold(half, f).iter().map(|key| study_of_key(key).to_string()).collect();
                ensure!(present.len() == n_studies, "trial {trial}: {half:?} fold {f} has {} of {n_studies} studies", present.len());
            }
            for held in 0..k {
                let train: Vec<usize> = (0..k).filter(|&f| f != held).collect();
                let tr = strat.rows(&sm, half, &train).map_err(|e| e.to_string())?;
                let te = strat.rows(&sm, half, &[held]).map_err(|e| e.to_string())?;
                ensure!(subjects_of(&sm, &tr, true).is_disjoint(&subjects_of(&sm, &te, true)), "trial {trial}: stratified fold {held} leaks");
            }
        }
    }

    // 11 studies with at least 20 subjects among 18 smaller ones.
    let mut studies = vec![24; 11];
    studies.extend([12; 18]);
    let m = manifest(&studies, 1, &mut rng);
    let full = stratified_study_split(&m, 60, k).map_err(|e| e.to_string())?;
    let (small, plan) = build_small_brainpedia(&full, &m, 60).map_err(|e| e.to_string())?;
    ensure!(plan.len() == 220 && small.len() == 220, "small corpus has {} subjects", plan.len());
    for st in 0..11 {
        for half in Half::BOTH {
            let n = plan.subjects(half).iter().filter(|key| study_of_key(key) == format!("study{st:02}")).count();
            ensure!(n == 10, "study{st:02} has {n} subjects in {half:?}");
        }
    }
    within(start, Duration::from_secs(60), "100 manifests leak-free, 200/100/50 nested, strata complete, 220-subject corpus".into())
}

fn c7_metrics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for i in 0..1000 {
        let k = rng.random_range(2..6);
        let n = rng.random_range(1..30);
        let preds: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let truths: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let m = classification_metrics(&preds, &truths, k).map_err(|e| e.to_string())?;
        let o = stats_support::brute_metrics(&preds, &truths, k);
        let same = m.accuracy == o.accuracy && m.precision_macro == o.precision_macro && m.recall_macro == o.recall_macro && m.f1_macro == o.f1_macro;
        ensure!(same, "instance {i} differs from the confusion-matrix reference");
    }
    let r = pearson_r(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).map_err(|e| e.to_string())?;
    ensure!((r - 0.5).abs() < 1e-12, "pearson_r = {r}");
    let a = [2.0, 4.0, 6.0, 8.0, 10.0];
    let b = [1.0, 2.0, 3.0, 4.0, 5.0];
    let t = paired_ttest(&a, &b).map_err(|e| e.to_string())?;
    ensure!(t.dof == 4, "dof {}", t.dof);
    ensure!((t.t_statistic - 4.2426).abs() < 1e-4, "t = {}", t.t_statistic);
    ensure!((t.p_value - 0.0132).abs() < 5e-4, "p = {}", t.p_value);
    let q = stats_support::t_two_tailed_by_quadrature(t.t_statistic, 4.0);
    ensure!((t.p_value - q).abs() < 1e-6, "p = {} but quadrature gives {q}", t.p_value);
    Ok(format!("1000 instances exact, r = {r}, t = {:.4}, p = {:.4}", t.t_statistic, t.p_value))
}

const BENCH_SEEDS: u64 = 5;

fn c8_effect() -> Outcome {
    let start = Instant::now();
    let mut wins = 0;
    let mut shrinks = 0;
    let mut lines = Vec::new();
    for seed in 0..BENCH_SEEDS {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let res = run_recipe(&benchmark_recipe(seed), &benchmark_spec(seed), dir.path()).map_err(|e| e.to_string())?;
        let gap = |label: &str| -> Result<f64, String> {
            let s = res.sizes.iter().find(|s| s.label == label).ok_or(format!("no size {label}"))?;
            Ok(s.runs["pretrained"].mean("accuracy") - s.runs["default"].mean("accuracy"))
        };
        let small = gap(&BENCH_SMALL_N.to_string())?;
        let large = gap("global")?;
        wins += usize::from(small > 0.0);
        shrinks += usize::from(small >= large);
        lines.push(format!("seed {seed}: gap {small:+.3} at N={BENCH_SMALL_N}, {large:+.3} at global"));
    }
    let detail = format!("{}; pretrained ahead at smallest N in {wins}/5, gap shrinks in {shrinks}/5", lines.join("; "));
    ensure!(wins >= 4 && shrinks >= 4, "{detail}");
    within(start, Duration::from_secs(45 * 60), detail)
}

fn volume_fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../volume/tests/fixtures").join(name)
}

fn c9_parser() -> Outcome {
    use selftaught_volume::{load_volume, parse_nifti1, read_volb, write_volb, VolumeError};
    let read = |n: &str| std::fs::read(volume_fixture(n)).map_err(|e| format!("{n}: {e}"));
    let native = parse_nifti1(&read("f32_4x4x4.nii")?).map_err(|e| e.to_string())?;
    for name in ["f32_4x4x4_be.nii", "f32_4x4x4.nii.gz", "f64_4x4x4.nii", "f32_4x4x4x1.nii"] {
        let v = parse_nifti1(&read(name)?).map_err(|e| format!("{name}: {e}"))?;
        ensure!(v == native, "{name} parses differently from the native fixture");
    }
    let expected: serde_json::Value = serde_json::from_slice(&read("expected.json")?).map_err(|e| e.to_string())?;
    let raw: Vec<f64> = expected["i16_raw"].as_array().ok_or("no i16_raw")?.iter().filter_map(|v| v.as_f64()).collect();
    let scaled = parse_nifti1(&read("i16_2x3x5_scaled.nii")?).map_err(|e| e.to_string())?;
    ensure!(scaled.data().iter().zip(&raw).all(|(&g, &r)| g as f64 == 2.0 * r + 1.0), "scl_slope/scl_inter not applied");

    let good = read("f32_4x4x4.nii")?;
    let mut bad_magic = good.clone();
    bad_magic[344..348].copy_from_slice(b"abc\0");
    ensure!(matches!(parse_nifti1(&bad_magic), Err(VolumeError::BadMagic(_))), "bad magic not reported");
    let mut bad_type = good.clone();
    bad_type[70..72].copy_from_slice(&2i16.to_le_bytes());
    ensure!(matches!(parse_nifti1(&bad_type), Err(VolumeError::UnsupportedDatatype(2))), "datatype 2 not reported");
    ensure!(matches!(parse_nifti1(&good[..good.len() - 4]), Err(VolumeError::Truncated { .. })), "truncation not reported");

    for name in ["f32_4x4x4.nii", "f64_4x4x4.nii", "i16_2x3x5_scaled.nii", "f32_4x4x4_be.nii"] {
        let v = load_volume(volume_fixture(name)).map_err(|e| e.to_string())?;
        let bytes = write_volb(&v);
        let back = read_volb(&bytes).map_err(|e| e.to_string())?;
        let exact = back.dims() == v.dims() && back.affine() == v.affine() && back.data().iter().zip(v.data()).all(|(a, b)| a.to_bits() == b.to_bits());
        ensure!(exact && write_volb(&back) == bytes, "{name}: container round trip not bit-exact");
    }
    Ok("5 encodings identical, scaling applied, BadMagic/UnsupportedDatatype/Truncated raised, VOLB bit-exact".into())
}

fn curation_fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/curation50")
}

/// Serves the fixture pages over HTTP, rewriting `next` to point back here.
fn serve_pages(pages: Vec<serde_json::Value>) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").expect("bind");
    let base = format!("http://{}", listener.local_addr().expect("addr"));
    let b = base.clone();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut s) = stream else { break };
            let mut buf = Vec::new();
            let mut chunk = [0u8; 1024];
            while !buf.windows(4).any(|w| w == b"\r\n\r\n") {
                match s.read(&mut chunk) {
                    Ok(0) | Err(_) => break,
                    Ok(n) => buf.extend_from_slice(&chunk[..n]),
                }
            }
            let req = String::from_utf8_lossy(&buf);
            let target = req.split_whitespace().nth(1).unwrap_or("/");
            let offset: usize = target.split("offset=").nth(1).and_then(|o| o.parse().ok()).unwrap_or(0);
            let (status, body) = match pages.get(offset / 10) {
                Some(p) => {
                    let mut p = p.clone();
                    if !p["next"].is_null() {
                        p["next"] = format!("{b}/api/images/?limit=10&offset={}", offset + 10).into();
                    }
                    (200, p.to_string())
                }
                None => (404, String::from("{}")),
            };
            let resp = format!("HTTP/1.1 {status} X\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}", body.len());
            let _ = s.write_all(resp.as_bytes());
        }
    });
    base
}

fn c10_curation() -> Outcome {
    let dir = curation_fixture();
    let expected: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.join("expected.json")).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let offline = fetch_metadata_pages(&PageSource::Offline { dir: dir.clone() }, 10).map_err(|e| e.to_string())?;
    let (manifest, report) = filter_pretraining_maps(offline.records);
    ensure!(report.total == 50, "{} records read", report.total);
    let kept: Vec<String> = manifest.rows.iter().map(|r| r.image_id.clone()).collect();
    let want: Vec<String> = expected["kept_ids"].as_array().ok_or("no kept_ids")?.iter().filter_map(|v| v.as_str().map(String::from)).collect();
    ensure!(kept == want, "kept {kept:?}");
    let counts: BTreeMap<&str, usize> = Criterion::ALL.iter().map(|&c| (c.name(), report.count(c))).filter(|(_, n)| *n > 0).collect();
    for (name, n) in expected["rejections"].as_object().ok_or("no rejections")? {
        ensure!(counts.get(name.as_str()).copied() == n.as_u64().map(|n| n as usize), "{name}: {:?} vs expected {n}", counts.get(name.as_str()));
    }
    ensure!(counts.len() == expected["rejections"].as_object().map_or(0, |o| o.len()), "unexpected rejection classes {counts:?}");
    ensure!(report.kept + report.rejected() == report.total, "counts do not partition the input");

    // Live fetch with recording, then offline replay of the recording.
    let pages: Vec<serde_json::Value> = (0..5)
        .map(|i| serde_json::from_slice(&std::fs::read(dir.join(format!("page_{i:04}.json"))).unwrap_or_default()).unwrap_or_default())
        .collect();
    let base = serve_pages(pages);
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let rec = tmp.path().join("recorded");
    let live = PageSource::Live {
        endpoint: format!("{base}/api/images/"),
        retry: RetryPolicy {
            max_retries: 2,
            initial_backoff: Duration::from_millis(1),
            max_backoff: Duration::from_millis(2),
            timeout: Duration::from_secs(10),
        },
        record_to: Some(rec.clone()),
    };
    let outcome = fetch_metadata_pages(&live, 10).map_err(|e| e.to_string())?;
    ensure!(outcome.pages == 5, "live fetch read {} pages", outcome.pages);
    let (live_manifest, live_report) = filter_pretraining_maps(outcome.records);
    let replay = fetch_metadata_pages(&PageSource::Offline { dir: rec }, 10).map_err(|e| e.to_string())?;
    let (replay_manifest, replay_report) = filter_pretraining_maps(replay.records);
    ensure!(live_report == replay_report && live_report.rejections == report.rejections, "reports differ between modes");
    let save = |m: &DatasetManifest, name: &str| -> Result<Vec<u8>, String> {
        let p = tmp.path().join(name);
        m.save(&p).map_err(|e| e.to_string())?;
        std::fs::read(&p).map_err(|e| e.to_string())
    };
    let a = save(&manifest, "offline.csv")?;
    let b = save(&live_manifest, "live.csv")?;
    let c = save(&replay_manifest, "replay.csv")?;
    ensure!(a == b && b == c, "manifests differ between offline, live and replay");
    Ok(format!("{} kept, {} rejected across {} criteria, offline/live/replay manifests byte-identical", report.kept, report.rejected(), counts.len()))
}

const CRITERIA: [(&str, fn() -> Outcome); 10] = [
    ("shape fidelity", c1_shapes),
    ("gradient suite", c2_gradients),
    ("kernel oracle", c3_kernels),
    ("overfit checks", c4_overfit),
    ("transfer invariant", c5_transfer),
    ("split invariants", c6_splits),
    ("metric oracles", c7_metrics),
    ("effect reproduction", c8_effect),
    ("NIfTI parser", c9_parser),
    ("curation filter", c10_curation),
];

fn main() {
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, check)) in CRITERIA.iter().enumerate() {
        let n = i + 1;
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match outcome {
            Ok(detail) => println!("criterion {n:>2} {name}: PASS ({detail})"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n:>2} {name}: FAIL ({detail})");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
