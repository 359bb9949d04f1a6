//! Acceptance suite: one PASS/FAIL line per criterion.

mod common;

use std::collections::{BTreeMap, HashSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::{Arc, OnceLock};
use std::time::Instant;

use mentionlink::corpus::{parse_corpus, Annotation, ExtractionFlag, MentionGroup, N_CONTEXT};
use mentionlink::eval::{score, Labeled, MacroPolicy};
use mentionlink::extension::{extend_corpus, ExtendOptions};
use mentionlink::features::{similarity, ContextVector, FeatureSettings, RankedWord};
use mentionlink::pipeline::prune_samples;
use mentionlink::pruner::{fit_all, fit_threshold, PruneStrategy, ThresholdPruning};
use mentionlink::regression::{argmax, objective, objective_and_gradient, softmax, TrainConfig};
use mentionlink::rng::{fnv1a, SplitMix64};
use mentionlink::store::{thread_pool, train_all, train_models, MemoryModels, ModelSource, ModelStore};
use mentionlink::synth::SynthConfig;
use mentionlink::text::TokenSpan;

use common::Bench;

struct Verdict {
    pass: bool,
    detail: String,
}

type Criterion = (&'static str, fn() -> Verdict);

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn bench() -> &'static Bench {
    static BENCH: OnceLock<Bench> = OnceLock::new();
    BENCH.get_or_init(|| common::bench(&SynthConfig::default()))
}

// (context tokens, part, L, numerators of wo, ws, to, ts)
type SimFixture = (&'static str, &'static [(&'static str, f64)], usize, [f64; 4]);

const SIM_FIXTURES: [SimFixture; 25] = [
    (
        "java java coffee",
        &[("java", 0.5), ("bean", 0.2)],
        3,
        [1.0, 2.0, 0.5, 1.0],
    ),
    ("", &[("a", 1.0)], 0, [0.0; 4]),
    ("a b c", &[], 3, [0.0; 4]),
    ("a b c", &[("a", 1.0), ("b", 1.0), ("c", 1.0)], 3, [3.0, 3.0, 3.0, 3.0]),
    ("a", &[("a", 1.0)], 1, [1.0, 1.0, 1.0, 1.0]),
    ("a b", &[("a", 1.0), ("b", 1.0)], 2, [2.0, 2.0, 2.0, 2.0]),
    ("a a a b", &[("a", 0.25)], 4, [1.0, 3.0, 0.25, 0.75]),
    ("x y z", &[("a", 2.0)], 3, [0.0; 4]),
    (
        "a b b c c c",
        &[("a", 1.5), ("b", 0.25), ("c", 0.125)],
        6,
        [3.0, 6.0, 1.875, 2.375],
    ),
    ("d d d d", &[("d", 7.0)], 4, [1.0, 4.0, 7.0, 28.0]),
    (
        "a b c d e",
        &[("a", 0.5), ("e", 0.5), ("z", 9.0)],
        5,
        [2.0, 2.0, 1.0, 1.0],
    ),
    (
        "m n m n m",
        &[("m", 1.0 / 3.0), ("n", 2.0 / 3.0)],
        5,
        [2.0, 5.0, 1.0, 7.0 / 3.0],
    ),
    ("p", &[("q", 1.0)], 1, [0.0; 4]),
    ("p q r s t u v w", &[("p", 0.1), ("w", 0.9)], 8, [2.0, 2.0, 1.0, 1.0]),
    ("k k", &[("k", 0.75), ("j", 0.5)], 2, [1.0, 2.0, 0.75, 1.5]),
    ("a b c a b c", &[("a", 2.0), ("b", 3.0)], 6, [2.0, 4.0, 5.0, 10.0]),
    ("u v w", &[("v", 1.0 / 16.0)], 3, [1.0, 1.0, 1.0 / 16.0, 1.0 / 16.0]),
    ("z", &[("z", 0.001)], 1, [1.0, 1.0, 0.001, 0.001]),
    (
        "a a b b c c d d",
        &[("a", 1.0), ("b", 2.0), ("c", 3.0), ("d", 4.0)],
        8,
        [4.0, 8.0, 10.0, 20.0],
    ),
    (
        "e f g h i j k l m",
        &[("e", 1.0), ("m", 1.0), ("q", 5.0)],
        9,
        [2.0, 2.0, 2.0, 2.0],
    ),
    ("r r r r r r r r r r", &[("r", 0.5)], 10, [1.0, 10.0, 0.5, 5.0]),
    ("s t", &[("t", 3.0), ("s", 5.0)], 2, [2.0, 2.0, 8.0, 8.0]),
    ("b a", &[("a", 1.0), ("b", 1.0)], 2, [2.0, 2.0, 2.0, 2.0]),
    ("c c c d", &[("d", 0.5), ("c", 0.5)], 4, [2.0, 4.0, 1.0, 2.0]),
    (
        "x y x y x y x",
        &[("x", 0.25), ("y", 0.5), ("w", 1.0)],
        7,
        [2.0, 7.0, 0.75, 2.5],
    ),
];

fn criterion_1() -> Verdict {
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    for (ctx, part, len, num) in SIM_FIXTURES {
        let tokens: Vec<&str> = ctx.split_whitespace().collect();
        let cv = ContextVector::from_tokens(&tokens);
        assert_eq!(cv.length, len);
        let part: Vec<RankedWord> = part
            .iter()
            .map(|&(w, v)| RankedWord {
                word: w.to_string(),
                tfidf: v,
            })
            .collect();
        let got = similarity(&cv, &part).as_array();
        let denom = ((len + 1) as f64).ln();
        for (g, n) in got.iter().zip(num) {
            let want = if len == 0 { 0.0 } else { n / denom };
            worst = worst.max((g - want).abs());
        }
    }
    let secs = t.elapsed().as_secs_f64();
    verdict(
        worst <= 1e-12 && secs < 1.0,
        format!("25 fixtures, max abs error {worst:.1e} (tol 1e-12), {secs:.3}s (limit 1s)"),
    )
}

fn criterion_2() -> Verdict {
    let t = Instant::now();
    let mut rng = SplitMix64::new(2024);
    let mut worst: f64 = 0.0;
    let h = 1e-5;
    for _ in 0..20 {
        let classes = 2 + rng.below(4);
        let dim = 1 + rng.below(40);
        let n = 5 + rng.below(20);
        let mut data = mentionlink::regression::Samples::new(dim);
        for _ in 0..n {
            data.push((0..dim).map(|_| rng.unit() * 2.0).collect(), rng.below(classes));
        }
        let w: Vec<f64> = (0..classes * (dim + 1)).map(|_| rng.unit() - 0.5).collect();
        let l2 = 1e-4;
        let (_, g) = objective_and_gradient(&w, classes, &data, l2);
        for i in 0..w.len() {
            let mut a = w.clone();
            let mut b = w.clone();
            a[i] += h;
            b[i] -= h;
            let fd = (objective(&a, classes, &data, l2) - objective(&b, classes, &data, l2)) / (2.0 * h);
            let rel = (fd - g[i]).abs() / fd.abs().max(g[i].abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    let secs = t.elapsed().as_secs_f64();
    verdict(
        worst <= 1e-5 && secs < 10.0,
        format!("20 instances, max relative error {worst:.2e} (tol 1e-5), {secs:.2}s (limit 10s)"),
    )
}

fn criterion_3() -> Verdict {
    let mut rng = SplitMix64::new(33);
    let (mut sum_err, mut drift): (f64, f64) = (0.0, 0.0);
    let mut argmax_ok = true;
    for i in 0..1000 {
        let k = 2 + rng.below(15);
        let scale = if i % 2 == 0 { 1e4 } else { 10.0 };
        let mu: Vec<f64> = (0..k).map(|_| (rng.unit() * 2.0 - 1.0) * scale).collect();
        let c = (rng.unit() * 2.0 - 1.0) * 1e4;
        let p = softmax(&mu);
        let shifted: Vec<f64> = mu.iter().map(|m| m + c).collect();
        let q = softmax(&shifted);
        sum_err = sum_err.max((p.iter().sum::<f64>() - 1.0).abs());
        argmax_ok &= argmax(&p) == argmax(&q) && argmax(&p) == argmax(&mu);
        drift = drift.max(p.iter().zip(&q).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
    }
    verdict(
        sum_err <= 1e-9 && drift <= 1e-12 && argmax_ok,
        format!("1000 draws, max |sum-1| {sum_err:.1e} (tol 1e-9), max shift drift {drift:.1e} (tol 1e-12), argmax stable {argmax_ok}"),
    )
}

fn criterion_4() -> Verdict {
    let t = Instant::now();
    let pool = thread_pool(1).unwrap();
    let p = pool.install(|| {
        let b = bench();
        b.evaluate(&b.held_out(), None).micro_precision
    });
    let secs = t.elapsed().as_secs_f64();
    verdict(
        p >= 0.95 && secs < 300.0,
        format!("A2 micro precision {p:.4} (min 0.95), {secs:.1}s single-threaded (limit 300s)"),
    )
}

fn scramble_precision(b: &Bench, keep: f64, noise: f64, seed: u64) -> f64 {
    b.evaluate(&b.scrambled(&b.held, keep, noise, seed), None)
        .micro_precision
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn criterion_5() -> Verdict {
    let b = bench();
    let mut per_seed_ok = true;
    let (mut cs, mut ds, mut es) = (vec![], vec![], vec![]);
    let mut rows = vec![];
    for seed in 1..=5 {
        let c = scramble_precision(b, 0.6, 0.0, seed);
        let d = scramble_precision(b, 0.4, 0.0, seed);
        let e = scramble_precision(b, 0.2, 0.0, seed);
        let ordered = c >= d && d >= e;
        let non_strict = (c == d) as usize + (d == e) as usize;
        per_seed_ok &= ordered && non_strict <= 1;
        rows.push(format!("{c:.3}/{d:.3}/{e:.3}"));
        cs.push(c);
        ds.push(d);
        es.push(e);
    }
    let (mc, md, me) = (median(cs), median(ds), median(es));
    verdict(
        per_seed_ok && mc > md && md > me,
        format!(
            "C/D/E per seed [{}], medians {mc:.4} > {md:.4} > {me:.4}",
            rows.join(", ")
        ),
    )
}

fn criterion_6() -> Verdict {
    let b = bench();
    let a2 = b.evaluate(&b.held_out(), None).micro_precision;
    let pb = scramble_precision(b, 0.8, 0.2, 1);
    let pc = scramble_precision(b, 0.6, 0.0, 1);
    verdict(
        (pb - pc).abs() < 0.05 && pb < a2 && pc < a2,
        format!(
            "P(B) {pb:.4}, P(C) {pc:.4}, |diff| {:.4} (max 0.05), P(A2) {a2:.4}",
            (pb - pc).abs()
        ),
    )
}

fn criterion_7() -> Verdict {
    let b = bench();
    let f = b.scrambled(&b.train, 0.8, 0.0, 0xF);
    let samples = prune_samples(b.models.as_ref(), &b.kb, &f, 1).unwrap();
    let mut models = MemoryModels {
        models: b.models.models.clone(),
        pruners: Default::default(),
    };
    let mild = ThresholdPruning {
        beta0: -0.05,
        beta1: -0.02,
    };
    let strong = ThresholdPruning {
        beta0: -0.15,
        beta1: -0.05,
    };
    for s in [&mild, &strong] {
        models.set_pruners(&s.key(), fit_all(s, &samples));
    }
    let pruned = Bench {
        corpus: b.corpus.clone(),
        kb: b.kb.clone(),
        train: Vec::new(),
        held: Vec::new(),
        models: Arc::new(models),
        settings: b.settings,
    };
    let a2 = b.held_out();
    let base = pruned.evaluate(&a2, None);
    let m = pruned.evaluate(&a2, Some(&mild.key()));
    let s = pruned.evaluate(&a2, Some(&strong.key()));
    verdict(
        m.micro_precision >= base.micro_precision
            && m.micro_recall <= base.micro_recall
            && s.micro_precision >= m.micro_precision,
        format!(
            "P/R unpruned {:.4}/{:.4}, (-0.05,-0.02) {:.4}/{:.4}, (-0.15,-0.05) {:.4}/{:.4}",
            base.micro_precision,
            base.micro_recall,
            m.micro_precision,
            m.micro_recall,
            s.micro_precision,
            s.micro_recall
        ),
    )
}

fn criterion_8() -> Verdict {
    let a = fit_threshold(&[0.9, 0.4], &[true, false], -0.05, -0.02);
    let b = fit_threshold(&[0.9, 0.4], &[false, true], -0.05, -0.02);
    verdict(
        a == Some(0.9) && b == Some(0.4),
        format!("thresholds {a:?} (want 0.9) and {b:?} (want 0.4)"),
    )
}

fn brute_force(gold: &[Labeled], pred: &[Labeled]) -> (f64, f64, f64, f64) {
    let matched = gold
        .iter()
        .filter(|g| {
            pred.iter()
                .any(|p| p.doc == g.doc && p.span == g.span && p.sense == g.sense)
        })
        .count();
    let non_nil = pred.iter().filter(|p| p.sense.is_some()).count();
    let mentions: Vec<&String> = {
        let mut m: Vec<&String> = gold.iter().map(|g| &g.mention).collect();
        m.sort();
        m.dedup();
        m
    };
    let (mut pm, mut rm) = (0.0, 0.0);
    for m in &mentions {
        let g: Vec<&Labeled> = gold.iter().filter(|g| &g.mention == *m).collect();
        let p: Vec<&Labeled> = pred.iter().filter(|p| &p.mention == *m && p.sense.is_some()).collect();
        let hit = g
            .iter()
            .filter(|g| {
                p.iter()
                    .any(|p| p.doc == g.doc && p.span == g.span && p.sense == g.sense)
            })
            .count();
        if !p.is_empty() {
            pm += hit as f64 / p.len() as f64;
        }
        rm += hit as f64 / g.len() as f64;
    }
    let n = mentions.len() as f64;
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    (ratio(matched, non_nil), ratio(matched, gold.len()), pm / n, rm / n)
}

fn criterion_9() -> Verdict {
    let mut rng = SplitMix64::new(99);
    let mut agree = 0;
    for _ in 0..10 {
        let mut seen = HashSet::new();
        let (mut gold, mut pred) = (vec![], vec![]);
        for _ in 0..(5 + rng.below(30)) {
            let doc = rng.below(4) as u64;
            let start = rng.below(10);
            if !seen.insert((doc, start)) {
                continue;
            }
            let mention = ["alpha", "beta", "gamma", "delta"][rng.below(4)].to_string();
            let span = TokenSpan { start, len: 1 };
            let sense = 1 + rng.below(3) as u64;
            gold.push(Labeled {
                doc,
                span,
                mention: mention.clone(),
                sense: Some(sense),
            });
            let p = match rng.below(4) {
                0 => None,
                1 => Some(1 + rng.below(3) as u64),
                _ => Some(sense),
            };
            pred.push(Labeled {
                doc,
                span,
                mention,
                sense: p,
            });
        }
        let r = score(&gold, &pred, &BTreeMap::new(), MacroPolicy::Exclude);
        if (r.micro_precision, r.micro_recall, r.macro_precision, r.macro_recall) == brute_force(&gold, &pred) {
            agree += 1;
        }
    }
    let (mut gold, mut pred) = (vec![], vec![]);
    for (doc, mention, n, correct) in [(1, "a", 2, 2), (2, "b", 18, 9)] {
        for i in 0..n {
            let span = TokenSpan { start: i, len: 1 };
            gold.push(Labeled {
                doc,
                span,
                mention: mention.into(),
                sense: Some(1),
            });
            pred.push(Labeled {
                doc,
                span,
                mention: mention.into(),
                sense: Some(if i < correct { 1 } else { 2 }),
            });
        }
    }
    let gap = score(&gold, &pred, &BTreeMap::new(), MacroPolicy::Exclude);
    verdict(
        agree == 10 && gap.micro_precision == 0.55 && gap.macro_precision == 0.75,
        format!(
            "{agree}/10 fixtures equal the counting oracle; gap fixture micro P {} (want 0.55), macro P {} (want 0.75)",
            gap.micro_precision, gap.macro_precision
        ),
    )
}

fn criterion_10() -> Verdict {
    let raw = std::fs::read(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/extension.jsonl")).unwrap();
    let parsed = parse_corpus(raw.as_slice(), N_CONTEXT).unwrap();
    let out = extend_corpus(&parsed.corpus, parsed.annotations, ExtendOptions::default());
    let got: Vec<(u64, String, u64, u8, usize, usize)> = out
        .iter()
        .map(|a: &Annotation| {
            (
                a.containing_id,
                a.mention.clone(),
                a.sense,
                a.extraction_flag.code(),
                a.position.start,
                a.position.len,
            )
        })
        .collect();
    let want: Vec<(u64, String, u64, u8, usize, usize)> = [
        (1, "biomedical engineering", 1, 2, 0, 2),
        (1, "engineering", 2, 0, 3, 1),
        (1, "java", 3, 0, 14, 1),
        (1, "java", 3, 1, 15, 1),
        (2, "biomedical engineering", 1, 0, 4, 2),
        (2, "java", 3, 0, 13, 1),
        (3, "engineering", 2, 0, 6, 1),
    ]
    .into_iter()
    .map(|(d, m, s, f, st, l)| (d, m.to_string(), s, f, st, l))
    .collect();
    let self_titles = out
        .iter()
        .filter(|a| a.extraction_flag == ExtractionFlag::SelfTitle)
        .count();
    let unfiltered = extend_corpus(
        &parsed.corpus,
        out.iter()
            .filter(|a| a.extraction_flag == ExtractionFlag::Link)
            .cloned()
            .collect(),
        ExtendOptions {
            generality_filter: false,
            ..Default::default()
        },
    );
    let removed = unfiltered.len() - out.len();
    verdict(
        got == want && self_titles == 1 && removed == 1,
        format!(
            "{} annotations (want {}), exact match {}, self-title {self_titles}, generality removals {removed}",
            got.len(),
            want.len(),
            got == want
        ),
    )
}

fn r_squared(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    sxy * sxy / (sxx * syy)
}

fn latency_per_prediction(senses: usize) -> f64 {
    let cfg = SynthConfig {
        mentions: 1,
        min_senses: senses,
        max_senses: senses,
        annotations_per_sense: 10,
        seed: 5,
        ..Default::default()
    };
    let (corpus, _, train, held) = common::prepare(&cfg);
    let group: &MentionGroup = &train[0];
    let model = &train_models(
        &train,
        &corpus,
        FeatureSettings::new(100, 1),
        &TrainConfig::default(),
        1,
    )
    .unwrap()[0];
    let ctx = held
        .first()
        .and_then(|g| g.annotations.first())
        .unwrap_or(&group.annotations[0])
        .context
        .clone();
    model.predict(&group.mention, &ctx).unwrap();
    let reps = 4000;
    let mut best = f64::INFINITY;
    for _ in 0..7 {
        let t = Instant::now();
        for _ in 0..reps {
            std::hint::black_box(model.predict(&group.mention, std::hint::black_box(&ctx)).unwrap());
        }
        best = best.min(t.elapsed().as_secs_f64() / reps as f64);
    }
    best
}

fn criterion_11() -> Verdict {
    let sizes = [2.0, 4.0, 8.0, 16.0];
    let lat: Vec<f64> = sizes.iter().map(|&e| latency_per_prediction(e as usize)).collect();
    let r2 = r_squared(&sizes, &lat);

    let b = bench();
    let time_with = |workers| {
        let t = Instant::now();
        train_models(&b.train, &b.corpus, b.settings, &TrainConfig::default(), workers).unwrap();
        t.elapsed().as_secs_f64()
    };
    let one = time_with(1);
    let eight = time_with(8);
    let speedup = one / eight;
    let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let lat_us: Vec<String> = lat.iter().map(|s| format!("{:.1}", s * 1e6)).collect();
    verdict(
        r2 > 0.95 && speedup > 2.0,
        format!(
            "latency us at |e|=2,4,8,16 [{}], R^2 {r2:.4} (min 0.95); training 1 worker {one:.2}s, 8 workers {eight:.2}s, speedup {speedup:.2}x (min 2x) on {cores} available core(s)",
            lat_us.join(", ")
        ),
    )
}

fn criterion_12() -> Verdict {
    let b = bench();
    let dir = tempfile::tempdir().unwrap();
    let store = ModelStore::create(dir.path()).unwrap();
    let cfg = TrainConfig::default();
    let first = train_all(&store, &b.train, &b.corpus, b.settings, &cfg, 1, None).unwrap();
    let checksums = |store: &ModelStore| -> BTreeMap<String, u64> {
        b.train
            .iter()
            .map(|g| {
                (
                    g.mention.clone(),
                    fnv1a(&std::fs::read(store.model_path(&g.mention)).unwrap()),
                )
            })
            .collect()
    };
    let before = checksums(&store);
    let victim = b.train[b.train.len() / 2].mention.clone();
    std::fs::remove_file(store.model_path(&victim)).unwrap();
    let second = train_all(&store, &b.train, &b.corpus, b.settings, &cfg, 1, None).unwrap();
    let after = checksums(&store);
    let others_same = before
        .iter()
        .filter(|(m, _)| **m != victim)
        .all(|(m, c)| after[m] == *c);
    let reloaded = store.load_model(&victim).unwrap().is_some();
    let cache_ok = {
        let cache = mentionlink::store::ModelCache::new(store.clone());
        cache.model(&victim).unwrap();
        let reads = cache.store_reads();
        cache.model(&victim).unwrap();
        cache.store_reads() == reads
    };
    verdict(
        first.trained.len() == b.train.len()
            && second.trained == vec![victim.clone()]
            && second.up_to_date == b.train.len() - 1
            && others_same
            && reloaded
            && cache_ok,
        format!(
            "first run {} trained; after deleting {victim:?}: retrained {:?}, {} untouched, other checksums identical {others_same}",
            first.trained.len(),
            second.trained,
            second.up_to_date
        ),
    )
}

fn main() {
    let criteria: [Criterion; 12] = [
        ("similarity oracle", criterion_1),
        ("gradient check", criterion_2),
        ("softmax invariants", criterion_3),
        ("synthetic end-to-end precision", criterion_4),
        ("scramble monotonicity", criterion_5),
        ("noise effect", criterion_6),
        ("pruning trade-off", criterion_7),
        ("threshold fitting oracle", criterion_8),
        ("metric oracle", criterion_9),
        ("extension fixture", criterion_10),
        ("scaling", criterion_11),
        ("incremental training", criterion_12),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let v = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            verdict(false, format!("panicked: {msg}"))
        });
        failed += !v.pass as usize;
        println!(
            "{} criterion {:>2} {}: {}",
            if v.pass { "PASS" } else { "FAIL" },
            i + 1,
            name,
            v.detail
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
