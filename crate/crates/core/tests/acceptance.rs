//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits nonzero if any binding criterion fails.
//!
//! The dataset-dependent reproduction check runs only when
//! `SACLOC_HCXY_DIR` points at a directory with `inventory.csv`,
//! `fingerprints.csv` and `test.csv`; it is advisory either way.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sacloc::autodiff::{EdgeIndex, Tape, Tensor};
use sacloc::conformal::{
    calibrate, calibrate_with_regions, conformal_rank, AssignmentMode, ConformalRank,
};
use sacloc::dataset::{
    generate_scans, generate_synthetic, load_fingerprints, load_inventory, split_train_calibration,
    ApInventory, CoordNormalizer, FingerprintSample, Point, SyntheticConfig,
};
use sacloc::evalreport::{
    alpha_sweep, coverage_by_region, point_metrics, weighted_centroid_baseline, BaselineConfig,
};
use sacloc::graphbuild::{GraphBuilder, GraphConfig, LocGraph};
use sacloc::gtmodel::{
    mae_loss, train, train_samples, ForwardMode, GraphBatch, GtModel, Linear, ModelConfig,
    TrainConfig, TransformerConvLayer,
};
use sacloc::regions::{kmeans_fit, KMeansConfig};

type Outcome = Result<String, String>;
type Criterion = (u32, &'static str, fn() -> Outcome);

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, limit: Duration, detail: String) -> Outcome {
    if elapsed > limit {
        Err(format!("{detail}; took {elapsed:.1?} (limit {limit:?})"))
    } else {
        Ok(format!("{detail}; {elapsed:.1?}"))
    }
}

fn synthetic_env(ap_count: usize, samples: usize, seed: u64) -> (ApInventory, Vec<FingerprintSample>) {
    generate_synthetic(&SyntheticConfig {
        ap_count,
        width_m: 40.0,
        height_m: 20.0,
        samples,
        seed,
        ..SyntheticConfig::default()
    })
    .unwrap()
}

/// MAE in meters of a batch, recomputed through plain inference.
fn batch_loss(model: &GtModel, graphs: &[&LocGraph], truths: &[Point]) -> f64 {
    let preds: Vec<Point> = model
        .predict_normalized(graphs)
        .unwrap()
        .into_iter()
        .map(|p| model.normalizer().denormalize(p))
        .collect();
    mae_loss(&preds, truths).unwrap()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let (inv, samples) = synthetic_env(4, 2, 17);
    let builder = GraphBuilder::new(
        &inv,
        GraphConfig {
            ap_distance_m: 30.0,
            min_rssi_dbm: -95.0,
        },
    )
    .unwrap();
    // One graph of 4 APs plus the user: 5 nodes.
    let graphs = builder.build_all(&samples[..1]).unwrap();
    let refs: Vec<&LocGraph> = graphs.iter().collect();
    assert_eq!(refs[0].node_count(), 5);
    let truths = vec![samples[0].truth];
    let model = GtModel::new(ModelConfig::new(4, 8, 2), CoordNormalizer::from_inventory(&inv), 3).unwrap();

    let batch = GraphBatch::new(&refs).unwrap();
    let mut tape = Tape::new();
    let vars = model.bind(&mut tape);
    let out = model.forward(&mut tape, &vars, &batch, ForwardMode::Eval).unwrap();
    let meters = model.denormalize_on_tape(&mut tape, out.normalized).unwrap();
    let neg = tape.constant(Tensor::new(vec![1, 2], vec![-truths[0][0], -truths[0][1]]).unwrap());
    let diff = tape.add(meters, neg).unwrap();
    let loss = tape.abs_sum(diff);
    tape.backward(loss).unwrap();
    let analytic: Vec<Vec<f64>> = vars.all().iter().map(|&v| tape.grad(v)).collect();

    let step = 1e-5;
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for (pi, grad) in analytic.iter().enumerate() {
        for (j, &g) in grad.iter().enumerate() {
            let mut plus = model.clone();
            plus.params_mut()[pi].data_mut()[j] += step;
            let mut minus = model.clone();
            minus.params_mut()[pi].data_mut()[j] -= step;
            let numeric = (batch_loss(&plus, &refs, &truths) - batch_loss(&minus, &refs, &truths)) / (2.0 * step);
            let rel = (numeric - g).abs() / numeric.abs().max(g.abs()).max(1e-8);
            worst = worst.max(rel);
            checked += 1;
        }
    }
    let detail = format!("{checked} parameters, max relative error {worst:.2e}");
    check(worst < 1e-4, detail.clone())?;
    within(start.elapsed(), Duration::from_secs(10), detail)
}

fn run_layer(layer: &TransformerConvLayer, x: &Tensor, edges: &EdgeIndex) -> Tensor {
    let mut tape = Tape::new();
    let vars = layer.bind(&mut tape);
    let xv = tape.constant(x.clone());
    let out = layer.forward(&mut tape, &vars, xv, edges).unwrap();
    tape.value(out.output).clone()
}

fn criterion_2() -> Outcome {
    let (h, heads) = (8, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    // Merge is the identity so the layer output is the head average itself.
    let mut layer = TransformerConvLayer::new(h, heads, h, h, &mut rng);
    layer.merge = Linear {
        weight: Tensor::identity(h),
        bias: Tensor::zeros(&[1, h]),
    };
    let x = Tensor::new(vec![3, h], (0..3 * h).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let edges = EdgeIndex::new(vec![1], vec![0], 3).unwrap();
    let out = run_layer(&layer, &x, &edges);
    let width = heads * h;
    let proj = |w: &Tensor, r: usize, c: usize| -> f64 { (0..h).map(|k| x.get2(r, k) * w.data()[k * width + c]).sum() };
    let mut singleton_err: f64 = 0.0;
    for j in 0..h {
        let expected = (0..heads)
            .map(|e| proj(&layer.w_root, 0, e * h + j) + proj(&layer.w_value, 1, e * h + j))
            .sum::<f64>()
            / heads as f64;
        singleton_err = singleton_err.max((out.get2(0, j) - expected).abs());
    }

    let (inv, samples) = synthetic_env(8, 5, 21);
    let builder = GraphBuilder::new(
        &inv,
        GraphConfig {
            ap_distance_m: 25.0,
            min_rssi_dbm: -90.0,
        },
    )
    .unwrap();
    let model = GtModel::new(ModelConfig::new(8, 16, 4), CoordNormalizer::from_inventory(&inv), 5).unwrap();
    let mut row_err: f64 = 0.0;
    for s in &samples {
        let g = builder.build(s).unwrap();
        let (edges, attention) = model.attention_trace(&g).unwrap();
        for att in &attention {
            for head in 0..att.cols() {
                let mut sums = vec![0.0; g.node_count()];
                let mut has = vec![false; g.node_count()];
                for (e, &(_, dst)) in edges.iter().enumerate() {
                    sums[dst] += att.get2(e, head);
                    has[dst] = true;
                }
                for (s, h) in sums.iter().zip(&has) {
                    if *h {
                        row_err = row_err.max((s - 1.0).abs());
                    }
                }
            }
        }
    }

    let order = [3, 0, 5, 1, 7, 4, 2, 6];
    let mut permuted_model = model.clone();
    let rows: Vec<&[f64]> = order.iter().map(|&i| model.user_encoder.weight.row(i)).collect();
    permuted_model.user_encoder.weight = Tensor::from_rows(&rows).unwrap();
    let mut perm_err: f64 = 0.0;
    for s in &samples {
        let g = builder.build(s).unwrap();
        let a = model.predict(&g).unwrap();
        let b = permuted_model.predict(&g.permuted(&order)).unwrap();
        perm_err = perm_err.max((a[0] - b[0]).abs()).max((a[1] - b[1]).abs());
    }
    check(
        singleton_err <= 1e-12 && row_err <= 1e-12 && perm_err <= 1e-9,
        format!("singleton {singleton_err:.1e}, attention rows {row_err:.1e}, permutation {perm_err:.1e}"),
    )
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let n: usize = rng.random_range(0..300);
        let scores: Vec<f64> = (0..n).map(|_| (rng.random_range(0..50) as f64) * 0.25).collect();
        // alpha = a/1000 keeps the oracle in exact integer arithmetic.
        let a: usize = rng.random_range(1..1000);
        let alpha = a as f64 / 1000.0;
        let p_oracle = ((1000 - a) * (n + 1)).div_ceil(1000);
        let mut sorted = scores.clone();
        sorted.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let oracle = if p_oracle > n { f64::INFINITY } else { sorted[p_oracle - 1] };
        let mut ours = scores.clone();
        ours.sort_by(f64::total_cmp);
        let got = match conformal_rank(n, alpha) {
            ConformalRank::Infinite => f64::INFINITY,
            ConformalRank::Finite(p) => ours[p - 1],
        };
        if got != oracle {
            mismatches += 1;
        }
    }
    check(mismatches == 0, format!("{mismatches} mismatches over 1000 instances"))
}

/// Calibration and test pools drawn i.i.d. from one environment, scored by
/// the fixed weighted-centroid predictor.
fn exchangeable_pool(inv: &ApInventory, env: &SyntheticConfig, seed: u64, n: usize) -> (Vec<Point>, Vec<Point>) {
    let scans = generate_scans(inv, env, n, seed).unwrap();
    let cfg = BaselineConfig::default();
    let preds = scans.iter().map(|s| weighted_centroid_baseline(s, inv, &cfg)).collect();
    (preds, scans.iter().map(|s| s.truth).collect())
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let env = SyntheticConfig::default();
    let (inv, _) = generate_synthetic(&SyntheticConfig { samples: 0, ..env.clone() }).unwrap();
    let trials = 200;
    let mut total = 0.0;
    for t in 0..trials {
        let (cp, ct) = exchangeable_pool(&inv, &env, 1000 + 2 * t, 1000);
        let (tp, tt) = exchangeable_pool(&inv, &env, 1001 + 2 * t, 1000);
        let regions = KMeansConfig {
            k: 1,
            seed: t,
            ..KMeansConfig::default()
        };
        let cal = calibrate(&cp, &ct, 0.1, &regions, AssignmentMode::Mixed).unwrap();
        total += coverage_by_region(&tp, &tt, &cal, AssignmentMode::Mixed).unwrap().global.coverage;
    }
    let mean = total / trials as f64;
    let detail = format!("mean coverage {mean:.4} over {trials} trials");
    check((0.895..=0.915).contains(&mean), detail.clone())?;
    within(start.elapsed(), Duration::from_secs(60), detail)
}

fn criterion_5() -> Outcome {
    let env = SyntheticConfig::default();
    let (inv, _) = generate_synthetic(&SyntheticConfig { samples: 0, ..env.clone() }).unwrap();
    // Five fixed regions fitted once on an independent reference draw.
    let (_, reference) = exchangeable_pool(&inv, &env, 99, 5000);
    let regions = kmeans_fit(&reference, 5, 0).unwrap();
    let trials = 200;
    let mut sums = [0.0; 5];
    let mut counts = [0usize; 5];
    for t in 0..trials {
        let (cp, ct) = exchangeable_pool(&inv, &env, 5000 + 2 * t, 1000);
        let (tp, tt) = exchangeable_pool(&inv, &env, 5001 + 2 * t, 1000);
        let cal = calibrate_with_regions(&cp, &ct, 0.1, &regions, AssignmentMode::GroundTruth).unwrap();
        let rep = coverage_by_region(&tp, &tt, &cal, AssignmentMode::GroundTruth).unwrap();
        for row in rep.rows {
            if let Some(c) = row.coverage {
                sums[row.region] += c;
                counts[row.region] += 1;
            }
        }
    }
    let means: Vec<f64> = sums.iter().zip(&counts).map(|(s, &c)| s / c as f64).collect();
    let worst = means.iter().cloned().fold(f64::INFINITY, f64::min);
    check(
        worst >= 0.89,
        format!("per-region mean coverage {:?}", means.iter().map(|m| format!("{m:.4}")).collect::<Vec<_>>()),
    )
}

fn criterion_6() -> Outcome {
    let env = SyntheticConfig {
        samples: 1500,
        seed: 61,
        ..SyntheticConfig::default()
    };
    let (inv, pool) = generate_synthetic(&env).unwrap();
    let test = generate_scans(&inv, &env, 500, 62).unwrap();
    let (train_set, cal_set) = split_train_calibration(&pool, 0.8, 0).unwrap();
    let graph_cfg = GraphConfig::default();
    let mut model = GtModel::new(ModelConfig::new(inv.len(), 32, 4), CoordNormalizer::from_inventory(&inv), 0).unwrap();
    let cfg = TrainConfig {
        epochs: 10,
        ..TrainConfig::default()
    };
    train_samples(&mut model, &train_set, &cfg, &graph_cfg, &inv).unwrap();
    let builder = GraphBuilder::new(&inv, graph_cfg).unwrap();
    let cal_preds = model.predict_all(&builder.build_all(&cal_set).unwrap()).unwrap();
    let test_preds = model.predict_all(&builder.build_all(&test).unwrap()).unwrap();
    let cal_truths: Vec<Point> = cal_set.iter().map(|s| s.truth).collect();
    let test_truths: Vec<Point> = test.iter().map(|s| s.truth).collect();
    let regions = kmeans_fit(&cal_truths, 5, 0).unwrap();
    let grid = [0.01, 0.05, 0.10, 0.15, 0.20];
    let sweep = alpha_sweep(&cal_preds, &cal_truths, &test_preds, &test_truths, &grid, &regions, AssignmentMode::Mixed).unwrap();
    let globals: Vec<String> = sweep.points.iter().map(|p| format!("{:.2}", p.global.radius)).collect();
    check(sweep.radii_monotone(), format!("global radii over grid {globals:?}"))
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let env = SyntheticConfig {
        samples: 3750,
        seed: 7,
        ..SyntheticConfig::default()
    };
    let (inv, pool) = generate_synthetic(&env).unwrap();
    let test = generate_scans(&inv, &env, 750, 8).unwrap();
    let (train_set, cal_set) = split_train_calibration(&pool, 0.8, 0).unwrap();
    assert_eq!((train_set.len(), cal_set.len()), (3000, 750));
    let graph_cfg = GraphConfig::default();
    let mut model = GtModel::new(ModelConfig::new(20, 64, 4), CoordNormalizer::from_inventory(&inv), 0).unwrap();
    let cfg = TrainConfig {
        epochs: 30,
        ..TrainConfig::default()
    };
    train_samples(&mut model, &train_set, &cfg, &graph_cfg, &inv).unwrap();

    let builder = GraphBuilder::new(&inv, graph_cfg).unwrap();
    let cal_preds = model.predict_all(&builder.build_all(&cal_set).unwrap()).unwrap();
    let test_preds = model.predict_all(&builder.build_all(&test).unwrap()).unwrap();
    let cal_truths: Vec<Point> = cal_set.iter().map(|s| s.truth).collect();
    let test_truths: Vec<Point> = test.iter().map(|s| s.truth).collect();
    let base_cfg = BaselineConfig::default();
    let baseline: Vec<Point> = test.iter().map(|s| weighted_centroid_baseline(s, &inv, &base_cfg)).collect();

    let ours = point_metrics(&test_preds, &test_truths).unwrap();
    let base = point_metrics(&baseline, &test_truths).unwrap();
    let cal = calibrate(&cal_preds, &cal_truths, 0.1, &KMeansConfig::default(), AssignmentMode::Mixed).unwrap();
    let cov = coverage_by_region(&test_preds, &test_truths, &cal, AssignmentMode::Mixed).unwrap();
    let detail = format!(
        "median {:.2} m vs baseline {:.2} m ({:.0}% lower), global coverage {:.3} (adaptive {:.3})",
        ours.median,
        base.median,
        100.0 * (1.0 - ours.median / base.median),
        cov.global.coverage,
        cov.global.adaptive_coverage
    );
    check(
        ours.median <= 0.8 * base.median && (0.85..=0.95).contains(&cov.global.coverage),
        detail.clone(),
    )?;
    within(start.elapsed(), Duration::from_secs(600), detail)
}

/// Advisory: never fails the suite. `Ok(None)` means skipped.
fn criterion_8() -> Result<Option<String>, String> {
    let Some(dir) = std::env::var_os("SACLOC_HCXY_DIR") else {
        return Ok(None);
    };
    let dir = Path::new(&dir);
    let reduced = std::env::var("SACLOC_HCXY_PROFILE").is_ok_and(|v| v == "reduced");
    let inv = load_inventory(&dir.join("inventory.csv")).map_err(|e| e.to_string())?;
    let pool = load_fingerprints(&dir.join("fingerprints.csv"), &inv).map_err(|e| e.to_string())?;
    let test = load_fingerprints(&dir.join("test.csv"), &inv).map_err(|e| e.to_string())?;
    let (train_set, cal_set) = split_train_calibration(&pool, 0.8, 0).map_err(|e| e.to_string())?;
    let graph_cfg = GraphConfig::default();
    let (hidden, epochs) = if reduced { (64, 20) } else { (500, 100) };
    let mut model = GtModel::new(ModelConfig::new(inv.len(), hidden, 4), CoordNormalizer::from_inventory(&inv), 0)
        .map_err(|e| e.to_string())?;
    let cfg = TrainConfig {
        epochs,
        ..TrainConfig::default()
    };
    train_samples(&mut model, &train_set, &cfg, &graph_cfg, &inv).map_err(|e| e.to_string())?;
    let builder = GraphBuilder::new(&inv, graph_cfg).map_err(|e| e.to_string())?;
    let predict = |s: &[FingerprintSample]| model.predict_all(&builder.build_all(s).unwrap()).unwrap();
    let truths = |s: &[FingerprintSample]| s.iter().map(|x| x.truth).collect::<Vec<Point>>();
    let test_preds = predict(&test);
    let ours = point_metrics(&test_preds, &truths(&test)).map_err(|e| e.to_string())?;
    let base_cfg = BaselineConfig::default();
    let baseline: Vec<Point> = test.iter().map(|s| weighted_centroid_baseline(s, &inv, &base_cfg)).collect();
    let base = point_metrics(&baseline, &truths(&test)).map_err(|e| e.to_string())?;
    let cal = calibrate(&predict(&cal_set), &truths(&cal_set), 0.1, &KMeansConfig::default(), AssignmentMode::Mixed)
        .map_err(|e| e.to_string())?;
    let cov = coverage_by_region(&test_preds, &truths(&test), &cal, AssignmentMode::Mixed).map_err(|e| e.to_string())?;
    let detail = format!(
        "MAE {:.2} median {:.2} p95 {:.2} m, coverage {:.1}% (baseline median {:.2} m)",
        ours.mae_l1,
        ours.median,
        ours.p95,
        100.0 * cov.global.adaptive_coverage,
        base.median
    );
    let ok = if reduced {
        ours.median < base.median
    } else {
        ours.mae_l1 <= 1.76 * 1.4
            && ours.median <= 1.37 * 1.4
            && ours.p95 <= 4.40 * 1.4
            && (100.0 * cov.global.adaptive_coverage - 84.8).abs() <= 5.0
    };
    if ok {
        Ok(Some(detail))
    } else {
        Err(detail)
    }
}

fn criterion_9() -> Outcome {
    let (inv, samples) = synthetic_env(6, 1, 30);
    let graph_cfg = GraphConfig::default();
    let mut model = GtModel::new(ModelConfig::new(6, 16, 2), CoordNormalizer::from_inventory(&inv), 6).unwrap();
    let cfg = TrainConfig {
        epochs: 200,
        batch_size: 1,
        base_lr: 0.01,
        weight_decay: 0.0,
        dropout: 0.0,
        ..TrainConfig::default()
    };
    let out = train_samples(&mut model, &samples, &cfg, &graph_cfg, &inv).unwrap();
    let best = out.log.iter().map(|e| e.train_mae).fold(f64::INFINITY, f64::min);
    let g = GraphBuilder::new(&inv, graph_cfg).unwrap().build(&samples[0]).unwrap();
    let final_mae = mae_loss(&[model.predict(&g).unwrap()], &[samples[0].truth]).unwrap();

    let (inv2, pool) = synthetic_env(6, 40, 31);
    let graphs = GraphBuilder::new(&inv2, graph_cfg).unwrap().build_all(&pool).unwrap();
    let truths: Vec<Point> = pool.iter().map(|s| s.truth).collect();
    let mut frozen = GtModel::new(ModelConfig::new(6, 16, 2), CoordNormalizer::from_inventory(&inv2), 7).unwrap();
    let before = frozen.clone();
    let zero = TrainConfig {
        epochs: 3,
        batch_size: 8,
        base_lr: 0.0,
        weight_decay: 0.0,
        ..TrainConfig::default()
    };
    train(&mut frozen, &graphs, &truths, &zero).unwrap();
    let unchanged = frozen
        .named_params()
        .iter()
        .zip(before.named_params())
        .all(|((_, a), (_, b))| a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
    check(
        best < 0.1 && final_mae < 0.1 && unchanged,
        format!("best train MAE {best:.4} m, final {final_mae:.4} m; lr = 0 parameters unchanged: {unchanged}"),
    )
}

fn run_cli(args: &[&str], dir: &Path) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_sacloc"))
        .args(args)
        .current_dir(dir)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("`{}` failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr).trim()))
    }
}

fn criterion_10() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dir = tmp.path();
    std::fs::write(
        dir.join("cfg.json"),
        r#"{"synthetic": {"environment": {"samples": 500}, "test_samples": 150},
            "model": {"hidden": 16, "heads": 2}, "train": {"epochs": 3, "workers": 2}}"#,
    )
    .map_err(|e| e.to_string())?;
    run_cli(&["--config", "cfg.json", "synth"], dir)?;
    for out in ["run_a", "run_b"] {
        for cmd in ["train", "calibrate", "evaluate"] {
            run_cli(&["--config", "cfg.json", "--out", out, cmd], dir)?;
        }
    }
    let files = [
        "checkpoint.json",
        "calibration.json",
        "report.json",
        "report.txt",
        "fig_error_map.csv",
    ];
    let mut differing = Vec::new();
    for f in files {
        let a = std::fs::read(dir.join("run_a").join(f)).map_err(|e| format!("{f}: {e}"))?;
        let b = std::fs::read(dir.join("run_b").join(f)).map_err(|e| format!("{f}: {e}"))?;
        if a != b {
            differing.push(f);
        }
    }
    check(
        differing.is_empty(),
        format!("{} artifacts compared, differing: {differing:?}", files.len()),
    )
}

fn guarded<T>(f: impl FnOnce() -> Result<T, String>) -> Result<T, String> {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(r) => r,
        Err(p) => Err(format!(
            "panicked: {}",
            p.downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default()
        )),
    }
}

fn main() {
    let binding: [Criterion; 9] = [
        (1, "full-model gradient check", criterion_1),
        (2, "TransformerConv identities", criterion_2),
        (3, "conformal rank oracle", criterion_3),
        (4, "marginal coverage", criterion_4),
        (5, "per-region coverage, ground-truth assignment", criterion_5),
        (6, "radius monotonicity sweep", criterion_6),
        (7, "desk-scale end-to-end", criterion_7),
        (9, "trainer sanity", criterion_9),
        (10, "pipeline determinism", criterion_10),
    ];
    let mut failed = 0;
    for (n, name, f) in binding {
        match guarded(f) {
            Ok(d) => println!("PASS criterion {n} ({name}): {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL criterion {n} ({name}): {d}");
            }
        }
        if n == 7 {
            match guarded(criterion_8) {
                Ok(Some(d)) => println!("PASS criterion 8 (dataset reproduction, advisory): {d}"),
                Ok(None) => println!("SKIP criterion 8 (dataset reproduction, advisory): SACLOC_HCXY_DIR not set"),
                Err(d) => println!("FAIL criterion 8 (dataset reproduction, advisory, not counted): {d}"),
            }
        }
    }
    println!("acceptance: {} binding criteria, {failed} failed", binding.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
