//! End-to-end acceptance checks. Prints one line per criterion and exits
//! non-zero if any fails.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use spatialprobe::interventions::{normalize_vision, NormCalibration};
use spatialprobe::probes::{
    attention_entropy, attention_share, cmb_heatmap, entropy_table, norm_profile, psi, rope_sensitivity_curve,
    EntropyMode, StepAggregation, VisionOrder,
};
use spatialprobe::rope::{attention_logits, rope_rotate};
use spatialprobe::scene2ds::lite::{generate_lite, LiteConfig};
use spatialprobe::scene2ds::{
    evaluate_answers, generate_dataset, mirror_query_horizontal, mirror_query_vertical, oracle_answer, oracle_query,
    write_dataset, GenConfig,
};
use spatialprobe::toy::{evaluate, exact_scorer, GridReadout, Tokenizer, ToyConfig, ToyModel, ToyPipeline};
use spatialprobe::trace_io::{Dtype, TraceFile};
use spatialprobe::verify::{factorization_suite, identity_suite, suppression_suite, FACTORIZATION_DELTAS};
use spatialprobe::{AttentionRow, Pairing, RopeConfig, TokenPartition};

type Outcome = Result<(bool, String), Box<dyn std::error::Error>>;
type FileHashes = Vec<(String, Vec<u8>)>;
type Criterion = (&'static str, fn() -> Outcome, Option<Duration>);

fn identity() -> Outcome {
    let r = identity_suite(1000, 20240601, 1e-5)?;
    Ok((
        r.max_rel_error < 1e-5,
        format!(
            "{} instances, max rel err {:.3e} (trial {}), smallest |derivative| {:.3e}",
            r.trials, r.max_rel_error, r.worst_trial, r.smallest_derivative
        ),
    ))
}

fn factorization() -> Outcome {
    let r = factorization_suite(100, 20240601, &FACTORIZATION_DELTAS)?;
    Ok((
        (r.aggregate_slope - 2.0).abs() <= 0.2,
        format!(
            "{} instances, slope {:.4} (per-instance median {:.4}, range {:.4}..{:.4})",
            r.instances, r.aggregate_slope, r.median_slope, r.min_slope, r.max_slope
        ),
    ))
}

fn suppression() -> Outcome {
    let r = suppression_suite(100, 20240601, 100.0)?;
    Ok((
        r.min_ratio >= 0.009 && r.max_ratio <= 0.011,
        format!("{} instances, ratio in [{:.6}, {:.6}]", r.instances, r.min_ratio, r.max_ratio),
    ))
}

fn rope_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut norm, mut add, mut shift) = (0.0f64, 0.0f64, 0.0f64);
    for trial in 0..400 {
        let d = 2 * rng.random_range(1..=64usize);
        let pairing = if trial % 2 == 0 { Pairing::Interleaved } else { Pairing::HalfSplit };
        let cfg = RopeConfig::with_pairing(d, 10_000.0, pairing)?;
        let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let k: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (a, b) = (rng.random_range(-5e3..5e3), rng.random_range(-5e3..5e3));
        let vn = spatialprobe::tensor::l2_norm(&v);

        let r = rope_rotate(&v, a, &cfg)?;
        norm = norm.max((spatialprobe::tensor::l2_norm(&r) - vn).abs() / vn);

        let twice = rope_rotate(&r, b, &cfg)?;
        let once = rope_rotate(&v, a + b, &cfg)?;
        let err = twice.iter().zip(&once).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        add = add.max(err / vn);

        let keys = spatialprobe::Matrix::from_rows(std::slice::from_ref(&k))?;
        let (qp, kp) = (rng.random_range(0.0..100.0), rng.random_range(0.0..100.0));
        let base = attention_logits(&v, &keys, qp, &[kp], &cfg)?[0];
        let s = rng.random_range(-1e4..1e4);
        let moved = attention_logits(&v, &keys, qp + s, &[kp + s], &cfg)?[0];
        let scale = vn * spatialprobe::tensor::l2_norm(&k) / (d as f64).sqrt();
        shift = shift.max((moved - base).abs() / scale);
    }
    Ok((
        norm < 1e-12 && add < 1e-10 && shift < 1e-9,
        format!("norm {norm:.2e}, additivity {add:.2e}, relative shift {shift:.2e}"),
    ))
}

fn psi_arithmetic() -> Outcome {
    let pairs = [(78.20, 77.35, 1.09), (61.36, 58.62, 4.47), (56.63, 33.37, 41.07)];
    let mut ok = true;
    let mut parts = Vec::new();
    for (orig, perm, want) in pairs {
        let got = 100.0 * psi(orig, perm)?;
        // the published values carry two decimals
        ok &= (got - want).abs() <= 0.01;
        parts.push(format!("{got:.4}"));
    }
    Ok((ok, format!("psi = {} %", parts.join(", "))))
}

fn toy_sensitivity(seed: u64) -> Result<[f64; 3], Box<dyn std::error::Error>> {
    let lite = generate_lite(&LiteConfig {
        seed,
        questions: 1,
        ..LiteConfig::default()
    })?;
    let item = &lite.items[0];
    let base = ToyConfig {
        seed,
        n_vision: item.features.rows(),
        vision_feature_dim: item.features.cols(),
        ..ToyConfig::default()
    };
    let text = Tokenizer::default().encode_padded(&item.question.text, base.n_text);
    let mut out = [0.0; 3];
    for (k, (skew, normalize)) in [(1.0, false), (100.0, false), (100.0, true)].into_iter().enumerate() {
        let model = ToyModel::build(&ToyConfig {
            vision_norm_skew: skew,
            ..base.clone()
        })?;
        let (mut emb, partition) = model.embed(&item.features, &text)?;
        if normalize {
            emb = normalize_vision(&emb, &partition, &NormCalibration::default())?;
        }
        let rec = model.forward(&emb, &partition)?;
        let curve = rope_sensitivity_curve(&rec.final_trace()?, &partition, 1.0, model.rope(), StepAggregation::FirstStep)?;
        out[k] = curve.mean_abs_delta_alpha(0..2);
    }
    Ok(out)
}

fn toy_mechanism() -> Outcome {
    let seeds = 20u64;
    let runs = (0..seeds).map(toy_sensitivity).collect::<Result<Vec<_>, _>>()?;
    let mean = |k: usize| runs.iter().map(|r| r[k]).sum::<f64>() / seeds as f64;
    let (s1, s100, norm) = (mean(0), mean(1), mean(2));
    let recovery = (norm - s100) / (s1 - s100);
    let lower = runs.iter().filter(|r| r[1] < r[0]).count();
    Ok((
        s100 < s1 && recovery >= 0.5,
        format!(
            "{seeds} seeds: mean |dalpha_V| layers 0-1 skew1 {s1:.4e}, skew100 {s100:.4e}, normalized {norm:.4e}; \
             recovery {:.1}%, skew100 lower in {lower}/{seeds} seeds",
            100.0 * recovery
        ),
    ))
}

fn permutation_invariance() -> Outcome {
    let ds = generate_lite(&LiteConfig {
        questions: 200,
        ..LiteConfig::default()
    })?;
    let model = ToyModel::build(&ToyConfig {
        n_vision: 1,
        vision_feature_dim: ds.config.feature_dim(),
        vision_norm_skew: 10.0,
        ..ToyConfig::default()
    })?;
    let pooled = ToyPipeline {
        compress: Some(1),
        ..ToyPipeline::new(&model)
    };
    let shuffled = VisionOrder::Permuted { seed: 17 };
    let (po, pp) = (
        evaluate(&pooled, &ds, exact_scorer, VisionOrder::Original)?,
        evaluate(&pooled, &ds, exact_scorer, shuffled)?,
    );
    let pooled_psi = psi(po, pp)?;
    let readout = GridReadout::new(&ds.config)?;
    let (ro, rp) = (
        evaluate(&readout, &ds, exact_scorer, VisionOrder::Original)?,
        evaluate(&readout, &ds, exact_scorer, shuffled)?,
    );
    let readout_psi = psi(ro, rp)?;
    Ok((
        pooled_psi == 0.0 && readout_psi > 0.3,
        format!(
            "{} questions: pooled toy acc {po:.3}/{pp:.3} psi {pooled_psi}; readout acc {ro:.3}/{rp:.3} psi {readout_psi:.3}",
            ds.items.len()
        ),
    ))
}

fn dir_digest(dir: &std::path::Path) -> Result<FileHashes, Box<dyn std::error::Error>> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(d)? {
            let p = e?.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir)?.to_string_lossy().into_owned();
                files.push((rel, Sha256::digest(std::fs::read(&p)?).to_vec()));
            }
        }
    }
    files.sort();
    Ok(files)
}

fn corpus() -> Outcome {
    let cfg = GenConfig::default();
    let ds = generate_dataset(&cfg)?;
    let c = &ds.manifest.counts;
    let mut fails = Vec::new();
    if c.scenes != 500 || c.questions != 3000 || ds.questions.len() != 3000 {
        fails.push(format!("counts {}/{}", c.scenes, c.questions));
    }
    if c.per_meta_category.len() != 5 || c.per_meta_category.iter().any(|m| m.scenes != 100 || m.questions != 600) {
        fails.push("per-meta-category counts".to_string());
    }

    let mut oracle_ok = 0;
    let mut mirror_ok = 0;
    for q in &ds.questions {
        let scene = ds.manifest.scene(q.scene_id).ok_or("question without scene")?;
        if oracle_answer(scene, q)? == q.gold {
            oracle_ok += 1;
        }
        let h = oracle_query(&scene.flip_horizontal(), &mirror_query_horizontal(&q.query))?;
        let v = oracle_query(&scene.flip_vertical(), &mirror_query_vertical(&q.query))?;
        if h == q.gold && v == q.gold {
            mirror_ok += 1;
        }
    }

    let gold: HashMap<String, String> = ds.questions.iter().map(|q| (q.id.clone(), q.gold.clone())).collect();
    let report = evaluate_answers(&gold, &ds.questions);
    let perfect = report.table().iter().all(|r| r.accuracy == Some(100.0));

    let (a, b) = (tempfile::tempdir()?, tempfile::tempdir()?);
    write_dataset(&ds, a.path(), Some(256))?;
    write_dataset(&generate_dataset(&cfg)?, b.path(), Some(256))?;
    let (da, db) = (dir_digest(a.path())?, dir_digest(b.path())?);
    let identical = da == db && da.len() == 502;

    let ok = fails.is_empty() && oracle_ok == 3000 && mirror_ok == 3000 && perfect && identical;
    Ok((
        ok,
        format!(
            "{} scenes / {} questions{}; oracle {oracle_ok}/3000; mirror {mirror_ok}/3000; gold eval {}; rebuild {} ({} files)",
            c.scenes,
            c.questions,
            if fails.is_empty() { String::new() } else { format!(" [{}]", fails.join("; ")) },
            if perfect { "100.00% every cell" } else { "NOT perfect" },
            if identical { "hash-identical" } else { "DIFFERS" },
            da.len()
        ),
    ))
}

fn entropy_endpoints() -> Outcome {
    let p = TokenPartition::contiguous(0, 4, 0);
    let e = |w: Vec<f64>| attention_entropy(&AttentionRow::from_weights(w, 3), &p);
    let uniform = e(vec![0.25; 4])?;
    let one_hot = e(vec![0.0, 1.0, 0.0, 0.0])?;
    let two = e(vec![0.5, 0.0, 0.5, 0.0])?;
    Ok((
        (uniform - 1.0).abs() <= 1e-9 && one_hot == 0.0 && two == 0.5,
        format!("uniform {uniform}, one-hot {one_hot}, two-of-four {two}"),
    ))
}

fn trace_roundtrip() -> Outcome {
    let cfg = ToyConfig {
        layers: 4,
        vision_norm_skew: 20.0,
        seed: 9,
        ..ToyConfig::default()
    };
    let model = ToyModel::build(&cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let feats = spatialprobe::Matrix::from_fn(cfg.n_vision, cfg.vision_feature_dim, |_, _| rng.random_range(0.0..1.0));
    let text = Tokenizer::default().encode_padded("is the red circle above the blue square", cfg.n_text);
    let (emb, partition) = model.embed(&feats, &text)?;
    let rec = model.forward(&emb, &partition)?;
    let n = partition.seq_len();
    let steps: Vec<usize> = (n - cfg.n_text..n).collect();
    let file = TraceFile::from_record("toy", &rec, &steps, &partition, model.rope(), true)?;
    let bytes = file.to_bytes()?;
    let (back, report) = TraceFile::from_bytes(&bytes)?;
    let exact = back == file && back.to_bytes()? == bytes && report.renormalized_rows == 0 && back.dtype == Dtype::F64;

    let (t0, t1) = (&file.trace, &back.trace);
    let mut diff = 0.0f64;
    let mut track = |a: f64, b: f64| diff = diff.max((a - b).abs());
    for agg in [StepAggregation::FirstStep, StepAggregation::AllSteps] {
        let (a, b) = (cmb_heatmap(t0, &partition, false, agg)?, cmb_heatmap(t1, &back.partition, false, agg)?);
        a.values.as_slice().iter().zip(b.values.as_slice()).for_each(|(x, y)| track(*x, *y));
        let (a, b) = (
            rope_sensitivity_curve(t0, &partition, 1.0, model.rope(), agg)?,
            rope_sensitivity_curve(t1, &back.partition, 1.0, &back.rope, agg)?,
        );
        a.layers.iter().zip(&b.layers).for_each(|(x, y)| {
            track(x.abs_delta_alpha_v, y.abs_delta_alpha_v);
            track(x.delta_g_v, y.delta_g_v);
        });
    }
    let (a, b) = (
        entropy_table(t0, &partition, EntropyMode::AveragedRows)?,
        entropy_table(t1, &back.partition, EntropyMode::AveragedRows)?,
    );
    a.per_head.iter().flatten().zip(b.per_head.iter().flatten()).for_each(|(x, y)| track(*x, *y));
    let (a, b) = (attention_share(t0, &partition)?, attention_share(t1, &back.partition)?);
    track(a.vision, b.vision);
    track(a.system, b.system);
    let (a, b) = (
        norm_profile(&rec.hidden, &partition)?,
        norm_profile(back.hidden.as_deref().ok_or("hidden states lost")?, &back.partition)?,
    );
    a.layers.iter().zip(&b.layers).for_each(|(x, y)| track(x.vision_mean, y.vision_mean));

    Ok((
        exact && diff <= 1e-12,
        format!("{} bytes, bit-exact {exact}, max probe difference {diff:e}", bytes.len()),
    ))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("phase-derivative identity", identity, Some(Duration::from_secs(30))),
        ("factorization convergence", factorization, None),
        ("residual-scale suppression", suppression, None),
        ("rope invariants", rope_invariants, None),
        ("psi arithmetic", psi_arithmetic, None),
        ("toy norm-skew mechanism", toy_mechanism, Some(Duration::from_secs(120))),
        ("permutation invariance", permutation_invariance, None),
        ("2ds corpus", corpus, Some(Duration::from_secs(60))),
        ("entropy endpoints", entropy_endpoints, None),
        ("trace file roundtrip", trace_roundtrip, None),
    ];
    let mut failed = 0;
    for (i, (name, run, budget)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let (ok, detail) = match run() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        let took = start.elapsed();
        let in_time = budget.is_none_or(|b| took <= b);
        let pass = ok && in_time;
        failed += usize::from(!pass);
        println!(
            "criterion {}: {} {name}: {detail} [{:.2}s{}]",
            i + 1,
            if pass { "PASS" } else { "FAIL" },
            took.as_secs_f64(),
            if in_time { "" } else { ", over budget" }
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
