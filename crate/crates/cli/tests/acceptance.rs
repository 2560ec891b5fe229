//! Acceptance suite P1-P9. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion outside `KNOWN_FAILURES` fails. Run with
//! `cargo test --test acceptance`.

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::Instant;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use blurrank::datasets::{
    build_corpus, derive_oracle_label, derive_seed, effective_sigma, generate_synthetic_images,
    make_quadruplet, sample_pairs, CorpusPlan, Family, Manifest, Split, SyntheticSpec,
    DEFAULT_DEGRADATION_RANGE,
};
use blurrank::evaluation::{run_benchmark, srocc, BenchmarkReport};
use blurrank::features::FeatureVector;
use blurrank::imaging::laplacian_variance;
use blurrank::losses::{
    lsep_loss, pairwise_degradation_loss, pairwise_ranking_loss, pseudo_label, qrc_loss, Delta,
    LossOutput,
};
use blurrank::scorer::{accumulate_backward, forward, ScorerParams};
use blurrank::trainer::{train, LabelSet, Mode, TrainConfig, TrainingData};
use blurrank_annotate::campaign::{Export, NextPair};
use blurrank_annotate::{router, AppState, Campaign};
use http_body_util::BodyExt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use tower::ServiceExt;

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

/// Criteria that fail on this corpus and are documented in the README.
/// They still print FAIL; only their effect on the exit status is waived.
const KNOWN_FAILURES: &[&str] = &["P6"];

struct Verdict {
    id: &'static str,
    title: &'static str,
    pass: bool,
    detail: String,
}

fn verdict(id: &'static str, title: &'static str, pass: bool, detail: String) -> Verdict {
    Verdict {
        id,
        title,
        pass,
        detail,
    }
}

// ---------------------------------------------------------------- P1

fn rel_error(a: &[f64], n: &[f64]) -> f64 {
    let diff: f64 = a
        .iter()
        .zip(n)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    let scale = a
        .iter()
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
        .max(n.iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

fn random_features(rng: &mut ChaCha8Rng) -> FeatureVector {
    FeatureVector(std::array::from_fn(|_| rng.gen_range(-2.0..2.0)))
}

fn random_params(rng: &mut ChaCha8Rng) -> ScorerParams {
    let mut p = ScorerParams::init(rng.gen());
    for v in p.iter_mut() {
        *v *= rng.gen_range(1.0..3.0);
    }
    p
}

/// Loss over `K` feature vectors scored by the shared network: returns the loss
/// value and its gradient with respect to each score, or `None` near a kink.
type ScoreLoss<const K: usize> = dyn Fn(&[f64; K]) -> Option<LossOutput<K>>;

fn check_param_gradients<const K: usize>(
    loss: &ScoreLoss<K>,
    rng: &mut ChaCha8Rng,
    h: f64,
) -> (usize, f64) {
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    let mut attempts = 0;
    while checked < 100 {
        attempts += 1;
        assert!(
            attempts < 100_000,
            "could not find enough off-kink instances"
        );
        let params = random_params(rng);
        let feats: [FeatureVector; K] = std::array::from_fn(|_| random_features(rng));
        let fwd: Vec<_> = feats.iter().map(|f| forward(&params, f).unwrap()).collect();
        let scores: [f64; K] = std::array::from_fn(|i| fwd[i].0.value());
        let Some(out) = loss(&scores) else { continue };
        if out.score_grads.iter().all(|g| *g == 0.0) {
            continue;
        }
        let mut analytic = ScorerParams::zeros();
        for (cache, g) in fwd.iter().map(|f| &f.1).zip(out.score_grads) {
            accumulate_backward(&params, cache, g, &mut analytic);
        }
        let value_at = |p: &ScorerParams| -> Option<f64> {
            let s: [f64; K] = std::array::from_fn(|i| forward(p, &feats[i]).unwrap().0.value());
            loss(&s).map(|o| o.value)
        };
        let mut numeric = Vec::with_capacity(ScorerParams::LEN);
        let mut crossed = false;
        for i in 0..ScorerParams::LEN {
            let mut plus = params.clone();
            *plus.iter_mut().nth(i).unwrap() += h;
            let mut minus = params.clone();
            *minus.iter_mut().nth(i).unwrap() -= h;
            match (value_at(&plus), value_at(&minus)) {
                (Some(a), Some(b)) => numeric.push((a - b) / (2.0 * h)),
                _ => {
                    crossed = true;
                    break;
                }
            }
        }
        if crossed {
            continue;
        }
        let a: Vec<f64> = analytic.iter().copied().collect();
        worst = worst.max(rel_error(&a, &numeric));
        checked += 1;
    }
    (checked, worst)
}

fn p1() -> Verdict {
    const KINK: f64 = 1e-3;
    const H: f64 = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let eps = 0.05;

    let ranking = move |s: &[f64; 2], d: Delta| {
        let arg = (s[1] - s[0]) * d.sign() + eps;
        (arg.abs() >= KINK).then(|| pairwise_ranking_loss(s[0], s[1], d, eps).unwrap())
    };
    let rank_first = move |s: &[f64; 2]| ranking(s, Delta::FirstBlurrier);
    let rank_second = move |s: &[f64; 2]| ranking(s, Delta::SecondBlurrier);
    let qrc = move |s: &[f64; 4]| {
        if (s[0] - s[1]).abs() < KINK {
            return None;
        }
        let label = pseudo_label(s[0], s[1])?;
        let arg = (s[3] - s[2]) * label.sign() + eps;
        if arg.abs() < KINK {
            return None;
        }
        qrc_loss(s[0], s[1], s[2], s[3], eps).unwrap()
    };
    let rankiqa = move |s: &[f64; 2]| {
        let arg = s[1] - s[0] + eps;
        (arg.abs() >= KINK).then(|| pairwise_degradation_loss(s[0], s[1], eps).unwrap())
    };
    let lsep = |s: &[f64; 2]| Some(lsep_loss(s[0], s[1]).unwrap());

    let mut results = Vec::new();
    let (n1, e1) = check_param_gradients(&rank_first, &mut rng, H);
    let (n2, e2) = check_param_gradients(&rank_second, &mut rng, H);
    results.push(("ranking", n1 + n2, e1.max(e2)));
    let (n, e) = check_param_gradients(&qrc, &mut rng, H);
    results.push(("qrc", n, e));
    let (n, e) = check_param_gradients(&rankiqa, &mut rng, H);
    results.push(("rankiqa", n, e));
    let (n, e) = check_param_gradients(&lsep, &mut rng, H);
    results.push(("lsep", n, e));

    let pass = results.iter().all(|(_, n, e)| *n >= 100 && *e < 1e-4);
    let detail = results
        .iter()
        .map(|(name, n, e)| format!("{name} n={n} max-rel={e:.2e}"))
        .collect::<Vec<_>>()
        .join(", ");
    verdict("P1", "gradient fidelity", pass, detail)
}

// ---------------------------------------------------------------- P2

fn brute_ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|&v| {
            let below = x.iter().filter(|&&u| u < v).count() as f64;
            let equal = x.iter().filter(|&&u| u == v).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

fn brute_pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn p2() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst_brute: f64 = 0.0;
    let mut worst_shortcut: f64 = 0.0;
    let (mut tied, mut tie_free) = (0, 0);
    let mut cases = 0;
    while cases < 1000 {
        let n = rng.gen_range(2..=20);
        let with_ties = cases % 2 == 0;
        let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            if with_ties {
                (0..n).map(|_| rng.gen_range(0..5) as f64).collect()
            } else {
                (0..n).map(|_| rng.gen::<f64>()).collect()
            }
        };
        let (x, y) = (draw(&mut rng), draw(&mut rng));
        if x.iter().all(|v| *v == x[0]) || y.iter().all(|v| *v == y[0]) {
            continue;
        }
        cases += 1;
        let got = srocc(&x, &y).unwrap();
        worst_brute =
            worst_brute.max((got - brute_pearson(&brute_ranks(&x), &brute_ranks(&y))).abs());
        let distinct = |v: &[f64]| {
            let mut s = v.to_vec();
            s.sort_by(f64::total_cmp);
            s.windows(2).all(|w| w[0] != w[1])
        };
        if distinct(&x) && distinct(&y) {
            tie_free += 1;
            let (rx, ry) = (brute_ranks(&x), brute_ranks(&y));
            let d2: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - b).powi(2)).sum();
            let nf = n as f64;
            let shortcut = 1.0 - 6.0 * d2 / (nf * (nf * nf - 1.0));
            worst_shortcut = worst_shortcut.max((got - shortcut).abs());
        } else {
            tied += 1;
        }
    }
    let pass = worst_brute <= 1e-12 && worst_shortcut <= 1e-12 && tied > 0 && tie_free > 0;
    verdict(
        "P2",
        "SROCC oracle equivalence",
        pass,
        format!(
            "{cases} cases ({tied} tied): max |diff| brute {worst_brute:.1e}, shortcut ({tie_free} tie-free) {worst_shortcut:.1e}"
        ),
    )
}

// ---------------------------------------------------------------- P3

fn p3() -> Verdict {
    let grid: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
    let mut failures = Vec::new();
    let mut checks = 0usize;
    for &eps in &[0.0, 0.05, 0.1] {
        for &a in &grid {
            for &b in &grid {
                for d in [Delta::FirstBlurrier, Delta::SecondBlurrier] {
                    checks += 1;
                    let l = pairwise_ranking_loss(a, b, d, eps).unwrap().value;
                    let r = pairwise_ranking_loss(b, a, d.flipped(), eps).unwrap().value;
                    if l != r {
                        failures.push(format!("swap({a},{b},{d:?},{eps})"));
                    }
                    if a == b && l != eps {
                        failures.push(format!("tie({a},{d:?},{eps})={l}"));
                    }
                    // Correct order by more than the margin: the sharper image leads.
                    let (blurrier, sharper) = if d == Delta::FirstBlurrier {
                        (a, b)
                    } else {
                        (b, a)
                    };
                    if sharper - blurrier > eps + 1e-9 && l != 0.0 {
                        failures.push(format!("beyond-margin({a},{b},{d:?},{eps})={l}"));
                    }
                }
            }
        }
    }
    for &y1 in &grid {
        for &y2 in &grid {
            for &y1d in &grid {
                for &y2d in &grid {
                    checks += 1;
                    let l = qrc_loss(y1, y2, y1d, y2d, 0.05).unwrap().map(|o| o.value);
                    let r = qrc_loss(y2, y1, y2d, y1d, 0.05).unwrap().map(|o| o.value);
                    if l != r || (y1 == y2) != l.is_none() {
                        failures.push(format!("qrc({y1},{y2},{y1d},{y2d})"));
                    }
                }
            }
        }
    }
    let detail = if failures.is_empty() {
        format!("{checks} grid points exact")
    } else {
        format!(
            "{} of {checks} failed, first: {}",
            failures.len(),
            failures[0]
        )
    };
    verdict("P3", "loss identities", failures.is_empty(), detail)
}

// ---------------------------------------------------------------- P4

fn p4() -> Verdict {
    let sa: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
    let sd: Vec<f64> = (0..20).map(|i| i as f64 * 0.25).collect();
    let mut formal_violations = 0;
    let mut formal_checked = 0;
    for &a in &sa {
        for &b in &sa {
            if a >= b {
                continue;
            }
            for &d in &sd {
                formal_checked += 1;
                if effective_sigma(a, d) >= effective_sigma(b, d) {
                    formal_violations += 1;
                }
            }
        }
    }

    // Two blurred instances of one base: their ground-truth order is exact.
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let families = [
        Family::GradientBlobs,
        Family::Geometric,
        Family::NoiseTexture,
    ];
    let mut same_base = (0usize, 0usize);
    let mut cross_content = (0usize, 0usize);
    for (k, family) in families.iter().enumerate() {
        let count = if k == 0 { 334 } else { 333 };
        let images = generate_synthetic_images(&SyntheticSpec {
            family: *family,
            base_count: count,
            instances_per_base: 2,
            sigma_range: [0.0, 3.0],
            width: 48,
            height: 48,
            seed: 4040 + k as u64,
            label_noise_prob: 0.0,
        })
        .unwrap();
        for pair in images.chunks(2) {
            let q = make_quadruplet(
                &pair[0].image,
                &pair[1].image,
                DEFAULT_DEGRADATION_RANGE,
                &mut rng,
            )
            .unwrap();
            let lv1 = laplacian_variance(&q.x1d).unwrap();
            let lv2 = laplacian_variance(&q.x2d).unwrap();
            same_base.0 += 1;
            if (pair[0].sigma < pair[1].sigma) == (lv1 > lv2) {
                same_base.1 += 1;
            }
        }
        // Different bases, for reference only: content differences also move lv.
        for w in images.chunks(4).filter(|c| c.len() == 4) {
            let (x, y) = (&w[0], &w[2]);
            let q =
                make_quadruplet(&x.image, &y.image, DEFAULT_DEGRADATION_RANGE, &mut rng).unwrap();
            let clean =
                laplacian_variance(&x.image).unwrap() > laplacian_variance(&y.image).unwrap();
            let degraded =
                laplacian_variance(&q.x1d).unwrap() > laplacian_variance(&q.x2d).unwrap();
            cross_content.0 += 1;
            if clean == degraded {
                cross_content.1 += 1;
            }
        }
    }
    let rate = same_base.1 as f64 / same_base.0 as f64;
    let pass = formal_violations == 0 && same_base.0 == 1000 && rate >= 0.99;
    verdict(
        "P4",
        "quadruplet consistency",
        pass,
        format!(
            "formal {formal_checked} triples, {formal_violations} violations; empirical {}/{} = {:.3} preserved \
             (cross-content lv order kept {}/{}, informational)",
            same_base.1, same_base.0, rate, cross_content.1, cross_content.0
        ),
    )
}

// ---------------------------------------------------------------- P5-P8

fn acceptance_config(mode: Mode, label_set: LabelSet, seed: u64) -> TrainConfig {
    TrainConfig {
        mode,
        label_set,
        seed,
        lr0: 0.01,
        ..TrainConfig::default()
    }
}

struct Runs {
    /// Test-split SROCC per (mode, label set), one entry per seed.
    srocc: BTreeMap<(Mode, LabelSet), Vec<[f64; 3]>>,
    first_report: BTreeMap<(Mode, LabelSet), BenchmarkReport>,
    first_checkpoint_json: String,
}

fn run_grid(manifest: &Manifest, data: &TrainingData) -> Runs {
    let cells = [
        (Mode::Qrc, LabelSet::Full),
        (Mode::Baseline, LabelSet::Full),
        (Mode::Rankiqa, LabelSet::Full),
        (Mode::Qrc, LabelSet::Half),
        (Mode::Baseline, LabelSet::Half),
    ];
    let mut runs = Runs {
        srocc: BTreeMap::new(),
        first_report: BTreeMap::new(),
        first_checkpoint_json: String::new(),
    };
    for (mode, set) in cells {
        let t = Instant::now();
        for seed in SEEDS {
            let outcome = train(&acceptance_config(mode, set, seed), data).unwrap();
            let report = run_benchmark(&outcome.final_checkpoint, manifest, &Split::TESTS).unwrap();
            let row: [f64; 3] =
                std::array::from_fn(|i| report.results[i].srocc.unwrap_or(f64::NAN));
            runs.srocc.entry((mode, set)).or_default().push(row);
            if seed == SEEDS[0] {
                if (mode, set) == (Mode::Qrc, LabelSet::Full) {
                    runs.first_checkpoint_json = outcome.final_checkpoint.to_json().unwrap();
                }
                runs.first_report.insert((mode, set), report);
            }
        }
        let m = mean_row(&runs.srocc[&(mode, set)]);
        println!(
            "    {:<8} {:<4}  test1 {:.4}  test2 {:.4}  test3 {:.4}  ({:.0}s for {} seeds)",
            mode.name(),
            set.name(),
            m[0],
            m[1],
            m[2],
            t.elapsed().as_secs_f64(),
            SEEDS.len()
        );
    }
    runs
}

fn mean_row(rows: &[[f64; 3]]) -> [f64; 3] {
    std::array::from_fn(|i| rows.iter().map(|r| r[i]).sum::<f64>() / rows.len() as f64)
}

fn p5(runs: &Runs) -> Verdict {
    let t1 = mean_row(&runs.srocc[&(Mode::Qrc, LabelSet::Full)])[0];
    verdict(
        "P5",
        "intra-domain learning",
        t1 >= 0.95,
        format!(
            "qrc/full test1 mean SROCC {t1:.4} over {} seeds (need >= 0.95)",
            SEEDS.len()
        ),
    )
}

fn p6(runs: &Runs) -> Verdict {
    let t3 = |m, s| mean_row(&runs.srocc[&(m, s)])[2];
    let (q, b, r) = (
        t3(Mode::Qrc, LabelSet::Full),
        t3(Mode::Baseline, LabelSet::Full),
        t3(Mode::Rankiqa, LabelSet::Full),
    );
    verdict(
        "P6",
        "semi-supervised gain",
        q - b > 0.0 && q >= r,
        format!(
            "test3 mean SROCC qrc {q:.4}, baseline {b:.4}, rankiqa {r:.4}; gain {:+.4}",
            q - b
        ),
    )
}

fn p7(runs: &Runs) -> Verdict {
    let t3 = |m, s| mean_row(&runs.srocc[&(m, s)])[2];
    let drop_q = t3(Mode::Qrc, LabelSet::Full) - t3(Mode::Qrc, LabelSet::Half);
    let drop_b = t3(Mode::Baseline, LabelSet::Full) - t3(Mode::Baseline, LabelSet::Half);
    verdict(
        "P7",
        "label efficiency",
        drop_q <= drop_b,
        format!("test3 drop full->half: qrc {drop_q:+.4}, baseline {drop_b:+.4}"),
    )
}

fn p8(runs: &Runs, manifest: &Manifest, data: &TrainingData, data_again: &TrainingData) -> Verdict {
    let outcome = train(
        &acceptance_config(Mode::Qrc, LabelSet::Full, SEEDS[0]),
        data_again,
    )
    .unwrap();
    let ckpt_same = outcome.final_checkpoint.to_json().unwrap() == runs.first_checkpoint_json;
    let report = run_benchmark(&outcome.final_checkpoint, manifest, &Split::TESTS).unwrap();
    let first = &runs.first_report[&(Mode::Qrc, LabelSet::Full)];
    let report_same = report.to_json().unwrap() == first.to_json().unwrap();
    let baseline = train(
        &acceptance_config(Mode::Baseline, LabelSet::Half, SEEDS[0]),
        data,
    )
    .unwrap();
    let rb = run_benchmark(&baseline.final_checkpoint, manifest, &Split::TESTS).unwrap();
    let baseline_same = rb.to_json().unwrap()
        == runs.first_report[&(Mode::Baseline, LabelSet::Half)]
            .to_json()
            .unwrap();
    verdict(
        "P8",
        "determinism",
        ckpt_same && report_same && baseline_same,
        format!(
            "qrc checkpoint identical: {ckpt_same}, qrc report identical: {report_same}, baseline/half report identical: {baseline_same}"
        ),
    )
}

// ---------------------------------------------------------------- P9

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(v) => req
            .header("content-type", "application/json")
            .body(Body::from(v.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap())
}

async fn p9_async(manifest: &Manifest) -> Verdict {
    let pool: Vec<(&str, f64)> = manifest
        .images_in(Split::TrainLabeled)
        .map(|r| (r.id.as_str(), r.ground_truth_sigma.unwrap()))
        .collect();
    let sigma: BTreeMap<&str, f64> = pool.iter().copied().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let pairs: Vec<(String, String)> = sample_pairs(pool.len(), 1000, &mut rng)
        .unwrap()
        .into_iter()
        .map(|(i, j)| (pool[i].0.to_string(), pool[j].0.to_string()))
        .collect();

    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("judgments.jsonl");
    let app = router(
        AppState::new(
            Campaign::new(pairs.clone(), 9, 3)
                .unwrap()
                .with_log(&log)
                .unwrap(),
            None,
        ),
        None,
    );
    let mut http_errors = 0;
    for (k, annotator) in ["ann-a", "ann-b", "ann-c"].into_iter().enumerate() {
        let mut annotator_rng = ChaCha8Rng::seed_from_u64(derive_seed(909, k as u64));
        loop {
            let (status, next) = call(
                &app,
                "GET",
                &format!("/api/pairs/next?annotator={annotator}"),
                None,
            )
            .await;
            if status != StatusCode::OK {
                http_errors += 1;
                break;
            }
            let NextPair::Pair {
                pair_id,
                left,
                right,
                ..
            } = serde_json::from_value(next).unwrap()
            else {
                break;
            };
            let choice = match derive_oracle_label(
                sigma[left.as_str()],
                sigma[right.as_str()],
                0.1,
                &mut annotator_rng,
            ) {
                Some(Delta::FirstBlurrier) => "left_blurrier",
                Some(Delta::SecondBlurrier) => "right_blurrier",
                None => "skip",
            };
            let body = json!({"annotator_id": annotator, "pair_id": pair_id, "choice": choice});
            if call(&app, "POST", "/api/judgments", Some(body)).await.0 != StatusCode::OK {
                http_errors += 1;
            }
        }
    }
    let (_, exported) = call(&app, "POST", "/api/export", None).await;
    let export: Export = serde_json::from_value(exported.clone()).unwrap();
    let agree = export
        .pairs
        .iter()
        .filter(|p| {
            let noiseless = if sigma[p.id1.as_str()] > sigma[p.id2.as_str()] {
                Delta::FirstBlurrier
            } else {
                Delta::SecondBlurrier
            };
            p.delta == noiseless
        })
        .count();
    let rate = agree as f64 / pairs.len() as f64;

    let replayed = Campaign::new(pairs, 9, 3).unwrap().with_log(&log).unwrap();
    let replay_same = serde_json::to_value(replayed.export()).unwrap() == exported;
    verdict(
        "P9",
        "aggregation correctness",
        rate >= 0.95 && replay_same && http_errors == 0,
        format!(
            "{agree}/1000 = {rate:.3} agree with noiseless oracle (labeled {}, excluded {}, pending {}); replay identical: {replay_same}",
            export.counts.labeled, export.counts.excluded, export.counts.pending
        ),
    )
}

fn p9(manifest: &Manifest) -> Verdict {
    tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .build()
        .unwrap()
        .block_on(p9_async(manifest))
}

// ----------------------------------------------------------------

fn report(v: &Verdict, started: Instant) {
    println!(
        "{} {} {}: {} [{:.1}s]",
        v.id,
        if v.pass { "PASS" } else { "FAIL" },
        v.title,
        v.detail,
        started.elapsed().as_secs_f64()
    );
}

fn main() -> ExitCode {
    let started = Instant::now();
    let mut verdicts = Vec::new();
    for check in [p1 as fn() -> Verdict, p2, p3, p4] {
        let v = check();
        report(&v, started);
        verdicts.push(v);
    }

    let dir = tempfile::tempdir().unwrap();
    let manifest = build_corpus(&CorpusPlan::fib_desk(0), dir.path()).unwrap();
    let data = TrainingData::from_manifest(&manifest).unwrap();
    println!(
        "    fib-desk corpus ready [{:.1}s]",
        started.elapsed().as_secs_f64()
    );

    let runs = run_grid(&manifest, &data);
    for v in [p5(&runs), p6(&runs), p7(&runs)] {
        report(&v, started);
        verdicts.push(v);
    }
    let reloaded = Manifest::load_dir(dir.path()).unwrap();
    let data_again = TrainingData::from_manifest(&reloaded).unwrap();
    let v = p8(&runs, &reloaded, &data, &data_again);
    report(&v, started);
    verdicts.push(v);
    let v = p9(&manifest);
    report(&v, started);
    verdicts.push(v);

    let failed: Vec<_> = verdicts.iter().filter(|v| !v.pass).map(|v| v.id).collect();
    println!(
        "acceptance: {}/{} passed{}",
        verdicts.len() - failed.len(),
        verdicts.len(),
        if failed.is_empty() {
            String::new()
        } else {
            let tagged: Vec<_> = failed
                .iter()
                .map(|id| {
                    if KNOWN_FAILURES.contains(id) {
                        format!("{id} (known)")
                    } else {
                        id.to_string()
                    }
                })
                .collect();
            format!("; failed {}", tagged.join(", "))
        }
    );
    let unexpected: Vec<_> = failed
        .iter()
        .filter(|id| !KNOWN_FAILURES.contains(id))
        .collect();
    for id in KNOWN_FAILURES.iter().filter(|id| !failed.contains(id)) {
        println!("acceptance: {id} is listed as a known failure but passed");
    }
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
