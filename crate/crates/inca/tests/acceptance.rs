//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line per
//! criterion straight to stdout (visible without `--nocapture`) and fails
//! if any criterion fails.

#[path = "../../core/tests/fixtures/reference.rs"]
mod reference;

use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::Instant;

use inca::harness::{self, BufferSize, CilOptions};
use inca::store;
use inca::synthetic::{SyntheticConfig, SyntheticWorld};
use inca_core::ecl::{ClassId, ClassProfile, Registry, Regularization};
use inca_core::embed::deterministic_embed;
use inca_core::eval::split_tasks;
use inca_core::linalg::Matrix;
use inca_core::llm::MockLlm;
use inca_core::prompt::{
    default_few_shot, render_prediction_prompt, render_summary_prompt, render_tag_prompt,
    PromptCandidate, PromptWording,
};
use inca_core::{ChatClient, DeterministicEmbedder, Embedder, InCASystem, PipelineConfig};
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Generator seed of the separable world, fixed after checking the
/// brute-force oracle clears both recall thresholds on it.
const PINNED_SEED: u64 = 0;

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| {
        Distribution::<f64>::sample(&StandardNormal, rng)
    })
}

fn random_classes(rng: &mut ChaCha8Rng, classes: usize, h: usize) -> Vec<Vec<Vec<f64>>> {
    (0..classes)
        .map(|_| {
            let center: Vec<f64> = (0..h).map(|_| rng.random_range(-4.0..4.0)).collect();
            let n = rng.random_range(3..16);
            (0..n)
                .map(|_| {
                    center
                        .iter()
                        .map(|c| c + 0.7 * Distribution::<f64>::sample(&StandardNormal, rng))
                        .collect()
                })
                .collect()
        })
        .collect()
}

fn batch_covariance(classes: &[Vec<Vec<f64>>], h: usize) -> DMatrix<f64> {
    let mut total = DMatrix::zeros(h, h);
    for class in classes {
        let r = class.len() as f64;
        let mean = class.iter().fold(DVector::zeros(h), |acc, z| {
            acc + DVector::from_column_slice(z)
        }) / r;
        let mut delta = DMatrix::zeros(h, h);
        for z in class {
            let d = DVector::from_column_slice(z) - &mean;
            delta += &d * d.transpose();
        }
        total += delta / r;
    }
    total / classes.len() as f64
}

fn registry_from(
    classes: &[Vec<Vec<f64>>],
    h: usize,
    order: &[usize],
    reg: Regularization,
) -> Registry {
    let mut r = Registry::with_regularization(h, reg);
    for &i in order {
        r.finalize_class(ClassId(i as u32), &format!("c{i}"), &classes[i])
            .unwrap();
    }
    r
}

fn as_dmatrix(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.dim(), m.dim(), m.as_slice())
}

fn rel_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax() / b.amax().max(f64::MIN_POSITIVE)
}

fn covariance_equivalence() -> Outcome {
    let (h, j) = (8, 10);
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let classes = random_classes(&mut rng, j, h);
    let started = Instant::now();
    let reg = registry_from(
        &classes,
        h,
        &(0..j).collect::<Vec<_>>(),
        Regularization::default(),
    );
    let elapsed = started.elapsed();
    let err = rel_diff(
        &as_dmatrix(reg.shared().matrix()),
        &batch_covariance(&classes, h),
    );
    check(err <= 1e-10, || {
        format!("relative difference {err:e} > 1e-10")
    })?;
    check(elapsed.as_secs_f64() < 1.0, || format!("took {elapsed:?}"))?;
    Ok(format!(
        "relative difference {err:.2e}, {:.1} ms",
        elapsed.as_secs_f64() * 1e3
    ))
}

fn permutation_invariance() -> Outcome {
    let (h, j) = (8, 10);
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let classes = random_classes(&mut rng, j, h);
    let base_order: Vec<usize> = (0..j).collect();
    let base = as_dmatrix(
        registry_from(&classes, h, &base_order, Regularization::default())
            .shared()
            .matrix(),
    );
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let mut order = base_order.clone();
        order.shuffle(&mut rng);
        let m = as_dmatrix(
            registry_from(&classes, h, &order, Regularization::default())
                .shared()
                .matrix(),
        );
        worst = worst.max(rel_diff(&m, &base));
    }
    check(worst <= 1e-10, || {
        format!("worst relative difference {worst:e}")
    })?;
    Ok(format!(
        "20 permutations, worst relative difference {worst:.2e}"
    ))
}

fn mahalanobis_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst = 0.0f64;
    let mut cases = 0;
    for h in [2usize, 8, 32] {
        for _ in 0..100 {
            let b = gaussian_matrix(&mut rng, h, h);
            let sigma = &b * b.transpose() / h as f64 + DMatrix::identity(h, h) * 0.05;
            let mu: Vec<f64> = (0..h).map(|_| rng.random_range(-3.0..3.0)).collect();
            let z: Vec<f64> = (0..h).map(|_| rng.random_range(-3.0..3.0)).collect();
            let profile = ClassProfile {
                class_id: ClassId(0),
                name: "c".into(),
                mean: mu.clone(),
                tag_count: 1,
                insertion_index: 0,
                summary: String::new(),
            };
            let matrix = Matrix::from_row_major(h, sigma.transpose().as_slice().to_vec()).unwrap();
            let mut reg = Registry::from_parts(h, vec![profile], matrix, 1, Regularization::NONE)
                .map_err(|e| e.to_string())?;
            reg.regularized_precision().map_err(|e| e.to_string())?;
            let got = reg
                .score_instance(std::slice::from_ref(&z))
                .map_err(|e| e.to_string())?[0]
                .distance;
            let inverse = sigma.clone().try_inverse().ok_or("oracle inverse failed")?;
            let d = DVector::from_column_slice(&z) - DVector::from_column_slice(&mu);
            let expected = (d.transpose() * inverse * &d)[(0, 0)].sqrt();
            worst = worst.max((got - expected).abs() / expected);
            cases += 1;
        }
    }
    check(worst <= 1e-8, || format!("worst relative error {worst:e}"))?;
    Ok(format!(
        "{cases} SPD cases over h in {{2, 8, 32}}, worst relative error {worst:.2e}"
    ))
}

fn transform_invariance() -> Outcome {
    let (h, classes_n) = (6, 12);
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let classes: Vec<Vec<Vec<f64>>> = (0..classes_n)
        .map(|_| {
            let center: Vec<f64> = (0..h).map(|_| rng.random_range(-3.0..3.0)).collect();
            (0..20)
                .map(|_| {
                    center
                        .iter()
                        .map(|c| c + Distribution::<f64>::sample(&StandardNormal, &mut rng))
                        .collect()
                })
                .collect()
        })
        .collect();
    let order: Vec<usize> = (0..classes_n).collect();
    let base = registry_from(&classes, h, &order, Regularization::NONE);
    let cond = {
        let eig = as_dmatrix(base.shared().matrix()).symmetric_eigenvalues();
        eig.max() / eig.min()
    };
    check(cond < 100.0, || {
        format!("registry covariance condition number {cond}")
    })?;
    let queries: Vec<Vec<Vec<f64>>> = (0..200)
        .map(|_| {
            (0..3)
                .map(|_| (0..h).map(|_| rng.random_range(-4.0..4.0)).collect())
                .collect()
        })
        .collect();

    let mut transforms = 0;
    let mut compared = 0;
    while transforms < 10 {
        let a = gaussian_matrix(&mut rng, h, h);
        let sv = a.singular_values();
        if sv.max() / sv.min() > 50.0 {
            continue;
        }
        transforms += 1;
        let apply =
            |v: &Vec<f64>| -> Vec<f64> { (&a * DVector::from_column_slice(v)).as_slice().to_vec() };
        let moved: Vec<Vec<Vec<f64>>> = classes
            .iter()
            .map(|c| c.iter().map(apply).collect())
            .collect();
        let transformed = registry_from(&moved, h, &order, Regularization::NONE);
        for q in &queries {
            let scores = base.score_instance(q).map_err(|e| e.to_string())?;
            // skip queries whose top-6 distances are tied to within rounding
            let tied = scores
                .windows(2)
                .take(6)
                .any(|w| (w[1].distance - w[0].distance) <= 1e-9 * w[1].distance);
            if tied {
                continue;
            }
            let qt: Vec<Vec<f64>> = q.iter().map(apply).collect();
            for k in [1, 3, 5] {
                let x = base.top_k(q, k).map_err(|e| e.to_string())?;
                let y = transformed.top_k(&qt, k).map_err(|e| e.to_string())?;
                check(x == y, || format!("k={k}: {x:?} vs {y:?}"))?;
                compared += 1;
            }
        }
    }
    Ok(format!(
        "10 transforms, {compared} top-k comparisons for k in {{1, 3, 5}}, all identical"
    ))
}

fn cil(
    world: &SyntheticWorld,
    k: usize,
    tasks: usize,
    seed: u64,
) -> Result<(InCASystem, harness::EvalReport), String> {
    let config = PipelineConfig {
        k,
        seed,
        ..PipelineConfig::default()
    };
    let mut system = world.system(config).map_err(|e| e.to_string())?;
    let split = split_tasks(&world.labels, tasks, seed).map_err(|e| e.to_string())?;
    let report = harness::run_cil(&mut system, &world.dataset, &split, &CilOptions::default())
        .map_err(|e| e.to_string())?;
    Ok((system, report))
}

fn oracle_equality() -> Outcome {
    let mut runs = 0;
    let mut detail = Vec::new();
    for seed in [1u64, 2, 3] {
        let mut cfg = SyntheticConfig::separable(seed);
        cfg.classes = 20;
        cfg.dimension = 8;
        cfg.train_per_class = 10;
        cfg.test_per_class = 10;
        cfg.tags_per_text = 3;
        cfg.noise_sigma = 0.8;
        cfg.min_separation = 0.0;
        let world = SyntheticWorld::generate(cfg).map_err(|e| e.to_string())?;
        for k in [1usize, 3, 5] {
            let (_, report) = cil(&world, k, 4, seed)?;
            let recall = report.recall_at_k[&k];
            check(report.final_accuracy == recall, || {
                format!(
                    "seed {seed}, k={k}: accuracy {} != recall {recall}",
                    report.final_accuracy
                )
            })?;
            runs += 1;
            if seed == 1 {
                detail.push(format!("k={k}: {recall:.3}"));
            }
        }
    }
    // a separable world too
    let mut cfg = SyntheticConfig::separable(9);
    cfg.classes = 15;
    let world = SyntheticWorld::generate(cfg).map_err(|e| e.to_string())?;
    let (_, report) = cil(&world, 3, 3, 0)?;
    check(report.final_accuracy == report.recall_at_k[&3], || {
        "separable world differs".into()
    })?;
    runs += 1;
    Ok(format!(
        "{runs} runs exact; noisy seed 1 accuracy = recall@k at {}",
        detail.join(", ")
    ))
}

/// Brute-force ECL ranks straight from the world's tables.
fn brute_force_recall(world: &SyntheticWorld, ks: &[usize]) -> Vec<f64> {
    let h = world.config.dimension;
    let embed = |t: &str| DVector::from_vec(world.embedder.embed_batch(&[t]).unwrap().remove(0));
    let examples = world.dataset.training_examples();
    let mut means = Vec::new();
    let mut sigma = DMatrix::zeros(h, h);
    for label in &world.labels {
        let tags: Vec<DVector<f64>> = examples[label.as_str()]
            .iter()
            .flat_map(|text| world.tag_table[*text].iter().map(|t| embed(t)))
            .collect();
        let n = tags.len() as f64;
        let mean = tags.iter().fold(DVector::zeros(h), |a, t| a + t) / n;
        let delta = tags.iter().fold(DMatrix::zeros(h, h), |a, t| {
            let d = t - &mean;
            a + &d * d.transpose()
        }) / n;
        sigma += delta;
        means.push(mean);
    }
    sigma /= world.labels.len() as f64;
    let eps = (1e-4 * sigma.trace() / h as f64).max(1e-10);
    let inverse = (sigma + DMatrix::identity(h, h) * eps)
        .try_inverse()
        .unwrap();
    let test: Vec<_> = world.dataset.split(inca::dataset::Split::Test).collect();
    let mut hits = vec![0usize; ks.len()];
    for r in &test {
        let tags: Vec<DVector<f64>> = world.tag_table[&r.text].iter().map(|t| embed(t)).collect();
        let mut scored: Vec<(f64, &str)> = means
            .iter()
            .zip(&world.labels)
            .map(|(m, l)| {
                let d: f64 = tags
                    .iter()
                    .map(|z| {
                        let d = z - m;
                        (d.transpose() * &inverse * &d)[(0, 0)].max(0.0).sqrt()
                    })
                    .sum::<f64>()
                    / tags.len() as f64;
                (d, l.as_str())
            })
            .collect();
        scored.sort_by(|a, b| a.0.total_cmp(&b.0));
        let rank = scored.iter().position(|s| s.1 == r.label).unwrap() + 1;
        for (hit, &k) in hits.iter_mut().zip(ks) {
            *hit += usize::from(rank <= k);
        }
    }
    hits.iter().map(|&h| h as f64 / test.len() as f64).collect()
}

struct PinnedRun {
    world: SyntheticWorld,
    system: InCASystem,
    report: harness::EvalReport,
    seconds: f64,
}

fn pinned_run() -> Result<PinnedRun, String> {
    let started = Instant::now();
    let world = SyntheticWorld::generate(SyntheticConfig::separable(PINNED_SEED))
        .map_err(|e| e.to_string())?;
    let (system, report) = cil(&world, 3, 5, 0)?;
    Ok(PinnedRun {
        world,
        system,
        report,
        seconds: started.elapsed().as_secs_f64(),
    })
}

fn separable_recall(run: &PinnedRun) -> Outcome {
    let cfg = &run.world.config;
    check(cfg.classes == 50 && cfg.dimension == 16, || {
        "wrong world shape".into()
    })?;
    let ratio = run.world.min_mean_distance() / cfg.spread();
    check(ratio >= 10.0, || {
        format!("separation only {ratio:.2} spreads")
    })?;
    let oracle = brute_force_recall(&run.world, &[1, 3]);
    check(oracle[0] >= 0.95 && oracle[1] >= 0.99, || {
        format!("brute-force oracle recall {oracle:?}")
    })?;
    let (r1, r3) = (run.report.recall_at_k[&1], run.report.recall_at_k[&3]);
    check(r1 == oracle[0] && r3 == oracle[1], || {
        format!("pipeline recall ({r1}, {r3}) differs from brute force {oracle:?}")
    })?;
    check(r1 >= 0.95, || format!("recall@1 {r1} < 0.95"))?;
    check(r3 >= 0.99, || format!("recall@3 {r3} < 0.99"))?;
    check(run.seconds < 30.0, || {
        format!("full run took {:.1} s", run.seconds)
    })?;
    Ok(format!(
        "seed {PINNED_SEED}, separation {ratio:.1}x spread, recall@1 {r1:.4}, recall@3 {r3:.4} (brute force agrees), {:.2} s",
        run.seconds
    ))
}

fn ecl_beats_tr(run: &PinnedRun) -> Outcome {
    let split = &run.report.config.split;
    let ks = [1usize, 3, 5];
    let tr = harness::run_tr_baseline(
        &run.world.dataset,
        split,
        BufferSize::Summaries,
        &ks,
        0,
        &run.world.embedder,
        &harness::learned_summaries(&run.system),
    )
    .map_err(|e| e.to_string())?;
    let mut parts = Vec::new();
    for k in ks {
        let ecl = run.report.recall_at_k[&k];
        check(ecl >= tr[&k], || {
            format!("k={k}: ECL {ecl} < TR {}", tr[&k])
        })?;
        parts.push(format!("k={k} {ecl:.3}>={:.3}", tr[&k]));
    }
    Ok(parts.join(", "))
}

fn persistence(run: &PinnedRun) -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    store::save(&run.system, &a).map_err(|e| e.to_string())?;
    let doc = store::load_for(&a, run.system.embedder()).map_err(|e| e.to_string())?;
    store::save_document(&doc, &b).map_err(|e| e.to_string())?;
    let (x, y) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    check(x == y, || "re-serialization differs".into())?;

    let llm: Arc<dyn ChatClient> = Arc::new(run.world.llm());
    let embedder: Arc<dyn Embedder> = Arc::new(run.world.embedder.clone());
    let reloaded = doc
        .into_system(embedder, llm.clone(), llm)
        .map_err(|e| e.to_string())?;
    let h = run.world.config.dimension;
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    for _ in 0..1000 {
        let m = rng.random_range(1..5);
        let center = &run.world.means[rng.random_range(0..run.world.means.len())];
        let q: Vec<Vec<f64>> = (0..m)
            .map(|_| {
                (0..h)
                    .map(|i| center[i] + rng.random_range(-0.6..0.6))
                    .collect()
            })
            .collect();
        let before = run
            .system
            .registry()
            .top_k(&q, 3)
            .map_err(|e| e.to_string())?;
        let after = reloaded
            .registry()
            .top_k(&q, 3)
            .map_err(|e| e.to_string())?;
        check(before == after, || {
            format!("top-3 differs: {before:?} vs {after:?}")
        })?;
    }
    Ok(format!(
        "{} bytes, byte-identical re-save, 1000 queries with identical top-3",
        x.len()
    ))
}

fn prompt_goldens() -> Outcome {
    let golden = |name: &str| {
        let path = format!("{}/../core/tests/golden/{name}", env!("CARGO_MANIFEST_DIR"));
        std::fs::read_to_string(&path).map_err(|e| format!("{path}: {e}"))
    };
    let wording = PromptWording::default();
    let summary = render_summary_prompt(&wording, &reference::CREDIT_CARD_QUERIES);
    check(summary == golden("summarization_prompt.txt")?, || {
        "summarization prompt differs".into()
    })?;
    let tags = render_tag_prompt(reference::TAG_QUERY, &default_few_shot());
    check(tags == golden("tag_generation_prompt.txt")?, || {
        "tag generation prompt differs".into()
    })?;
    let candidates = [
        PromptCandidate {
            name: "direct_deposit",
            summary: reference::DIRECT_DEPOSIT,
        },
        PromptCandidate {
            name: "income",
            summary: reference::INCOME,
        },
        PromptCandidate {
            name: "payday",
            summary: reference::PAYDAY,
        },
    ];
    let prediction = render_prediction_prompt(&wording, reference::PREDICTION_QUERY, &candidates);
    check(prediction == golden("prediction_prompt.txt")?, || {
        "prediction prompt differs".into()
    })?;
    Ok("summarization, tag generation and prediction prompts byte-identical".into())
}

fn token_limit() -> Outcome {
    let (classes, summary_tokens, window) = (150usize, 256usize, 32_768usize);
    check(classes * summary_tokens > window, || {
        "fixture arithmetic".into()
    })?;
    let h = 16;
    let mut reg = Registry::new(h);
    for c in 0..classes {
        let tags: Vec<Vec<f64>> = (0..4)
            .map(|t| deterministic_embed(5, &format!("class {c} tag {t}"), h).unwrap())
            .collect();
        reg.finalize_class(ClassId(c as u32), &format!("intent_{c:03}"), &tags)
            .map_err(|e| e.to_string())?;
        let summary = vec![format!("summary{c}"); summary_tokens].join(" ");
        reg.set_summary(ClassId(c as u32), summary)
            .map_err(|e| e.to_string())?;
    }
    let llm: Arc<dyn ChatClient> = Arc::new(MockLlm::new().with_context_window(window));
    let embedder: Arc<dyn Embedder> = Arc::new(DeterministicEmbedder::new(5, h).unwrap());
    let mut system =
        InCASystem::from_registry(reg, embedder, llm.clone(), llm, PipelineConfig::default())
            .map_err(|e| e.to_string())?;
    let query = reference::PREDICTION_QUERY;
    system.set_long_context(true);
    let prompt_tokens = match system.classify(query) {
        Err(inca_core::Error::TokenLimitExceeded {
            prompt_tokens,
            context_window,
        }) if context_window == window && prompt_tokens > window => prompt_tokens,
        other => return Err(format!("long-context mode returned {other:?}")),
    };
    system.set_long_context(false);
    let prediction = system
        .classify(query)
        .map_err(|e| format!("ECL mode failed: {e}"))?;
    check(prediction.candidates.len() == 3, || {
        "ECL prompt did not use k=3".into()
    })?;
    let ecl_tokens =
        inca_core::llm::estimate_tokens(prediction.prompt.as_deref().unwrap_or_default());
    Ok(format!(
        "long context: TokenLimitExceeded at {prompt_tokens} > {window} tokens; ECL k=3 prompt {ecl_tokens} tokens succeeds"
    ))
}

#[test]
fn acceptance_criteria() {
    let pinned = catch_unwind(pinned_run).unwrap_or_else(|_| Err("pinned run panicked".into()));
    let with_pinned = |f: fn(&PinnedRun) -> Outcome| -> Outcome {
        match &pinned {
            Ok(run) => f(run),
            Err(e) => Err(format!("pinned run failed: {e}")),
        }
    };
    let criteria: Vec<Criterion> = vec![
        ("covariance equivalence", Box::new(covariance_equivalence)),
        ("permutation invariance", Box::new(permutation_invariance)),
        ("Mahalanobis oracle", Box::new(mahalanobis_oracle)),
        (
            "linear-transform ranking invariance",
            Box::new(transform_invariance),
        ),
        ("oracle equality", Box::new(oracle_equality)),
        (
            "separable-cluster recall",
            Box::new(move || with_pinned(separable_recall)),
        ),
        (
            "ECL >= TR at buffer 0",
            Box::new(move || with_pinned(ecl_beats_tr)),
        ),
        ("persistence", Box::new(move || with_pinned(persistence))),
        ("prompt goldens", Box::new(prompt_goldens)),
        ("token-limit behavior", Box::new(token_limit)),
    ];
    let mut failed = Vec::new();
    let mut out = std::io::stdout().lock();
    writeln!(out).unwrap();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let line = match &outcome {
            Ok(detail) => format!("PASS {:>2}. {name}: {detail}", i + 1),
            Err(why) => {
                failed.push(i + 1);
                format!("FAIL {:>2}. {name}: {why}", i + 1)
            }
        };
        writeln!(out, "{line}").unwrap();
    }
    writeln!(
        out,
        "acceptance: {}/{} criteria passed",
        criteria.len() - failed.len(),
        criteria.len()
    )
    .unwrap();
    drop(out);
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
