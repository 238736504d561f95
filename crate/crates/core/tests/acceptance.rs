//! Acceptance gate. One test per criterion, each printing a PASS line once
//! its assertions hold; a failed criterion shows up as a failed test named
//! after it. Values and tolerances are pinned: a failure means a promised
//! property broke, not that a tolerance was too tight.
//!
//! Criterion 8 (end-to-end pipeline determinism through the binary) lives
//! in the CLI crate's own acceptance test.

use std::sync::OnceLock;
use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use pgrec_core::aggregation::pgusa_weight;
use pgrec_core::analysis::{
    chi_square_test, price_bucket_tests, t_test_two_sample, InfluenceRecord,
};
use pgrec_core::data::{
    generate_synthetic, CatalogItem, Dataset, FeedbackKind, GenConfig, GroupDef, Interaction,
    InteractionSet, PlantedSource, UserProfile,
};
use pgrec_core::evaluation::{
    evaluate_ranking, evaluate_regression, hr_ndcg_from_ranks, rank_of_first,
};
use pgrec_core::nn::grad_check;
use pgrec_core::predictors::{
    popularity_counts, popularity_rank, AggregatorKind, GroupPredictor, ModelKind, NcfModel,
    PredictorDims, TrainedModel,
};
use pgrec_core::training::{
    pairwise_loss, sweep_beta, train, train_grouped, write_sweep_table, TrainConfig, TrainLog,
};

#[test]
fn acceptance_1_chi_square_reproduction() {
    let start = Instant::now();
    let strong = chi_square_test(629, 350).unwrap();
    let weak = chi_square_test(14, 19).unwrap();
    let elapsed = start.elapsed();

    assert!((strong.statistic - 79.51).abs() <= 0.01, "statistic {}", strong.statistic);
    assert!(strong.reject_equal_split);
    assert_eq!(strong.critical, 3.84);

    assert!((weak.statistic - 0.76).abs() <= 0.01, "statistic {}", weak.statistic);
    assert!(!weak.reject_equal_split);
    assert_eq!(weak.critical, 3.84);

    assert!(elapsed.as_micros() < 1000, "took {elapsed:?}, promised under 1 ms");
    println!("ACCEPTANCE 1 chi_square_reproduction: PASS");
}

#[test]
fn acceptance_2_adaptive_sigmoid_unit_suite() {
    let grid = 50;
    let alphas: Vec<f64> = (0..grid).map(|i| 0.01 + 0.99 * i as f64 / (grid - 1) as f64).collect();
    let freqs: Vec<f64> = (0..grid).map(|j| 5.0 * j as f64 / (grid - 1) as f64).collect();

    // Zero frequency pins the weight to exactly half the ceiling.
    for &alpha in &alphas {
        for beta in [1.0, 5.0, 10.0] {
            assert_eq!(pgusa_weight(alpha, 0.0, beta), beta / 2.0);
        }
    }

    // Monotone in frequency at every grid alpha.
    for &alpha in &alphas {
        for w in freqs.windows(2) {
            assert!(
                pgusa_weight(alpha, w[1], 5.0) > pgusa_weight(alpha, w[0], 5.0),
                "not increasing at alpha {alpha}, freqs {w:?}"
            );
        }
    }

    // Slope ordering: the separation a frequency advantage buys grows with
    // cheapness. Against the freq-0 baseline this holds across the whole
    // grid; between two active frequencies it holds while the larger scaled
    // frequency stays below the knee of x * sigmoid'(x) near x = 1.543.
    for &f in freqs.iter().filter(|&&f| f > 0.0) {
        let mut prev = f64::NEG_INFINITY;
        for &alpha in &alphas {
            let gap = pgusa_weight(alpha, f, 5.0) - pgusa_weight(alpha, 0.0, 5.0);
            assert!(gap > prev, "freq-0 anchored gap shrank at alpha {alpha}, freq {f}");
            prev = gap;
        }
    }
    for pair in freqs.windows(2) {
        let (f_lo, f_hi) = (pair[0], pair[1]);
        if f_hi == 0.0 || f_hi * alphas.last().unwrap() > 1.5 {
            continue;
        }
        let mut prev = f64::NEG_INFINITY;
        for &alpha in &alphas {
            let gap = pgusa_weight(alpha, f_hi, 5.0) - pgusa_weight(alpha, f_lo, 5.0);
            assert!(gap > prev, "below-knee gap shrank at alpha {alpha}, pair {pair:?}");
            prev = gap;
        }
    }

    // Pinned values at the ceiling 5: a maximally frequent buyer of the
    // cheapest item gets nearly the full ceiling, of the priciest item
    // barely more than half.
    assert!((pgusa_weight(1.0, 5.0, 5.0) - 4.9665).abs() < 1e-3);
    assert!((pgusa_weight(0.01, 5.0, 5.0) - 2.5625).abs() < 1e-3);

    println!("ACCEPTANCE 2 adaptive_sigmoid_unit_suite: PASS");
}

/// Three users with distinct frequencies in one group, plus a cheap and an
/// expensive item: the gradient-integrity fixture.
fn grad_fixture() -> (Dataset, GroupPredictor) {
    let ds = Dataset {
        users: vec![
            UserProfile { user_id: 0, purchase_count: 40, freq: 5.0 },
            UserProfile { user_id: 1, purchase_count: 12, freq: 1.5 },
            UserProfile { user_id: 2, purchase_count: 2, freq: 0.25 },
        ],
        items: vec![
            CatalogItem { item_id: 0, raw_price: 12.5, alpha: 1.0 },
            CatalogItem { item_id: 1, raw_price: 480.0, alpha: 0.026 },
        ],
        groups: vec![GroupDef { group_id: 0, members: vec![0, 1, 2] }],
        user_item: InteractionSet::empty(),
        group_item: InteractionSet::empty(),
        user_item_test: InteractionSet::empty(),
        group_item_test: InteractionSet::empty(),
        feedback: FeedbackKind::Implicit,
    };
    let dims = PredictorDims { n_users: 3, n_items: 2, n_groups: 1, d: 2 };
    let model = GroupPredictor::new(dims, AggregatorKind::PriceAdaptive { beta: 5.0 });
    (ds, model)
}

#[test]
fn acceptance_3_gradient_integrity() {
    let start = Instant::now();
    let (ds, model) = grad_fixture();

    let mut store = model.init_params(23);
    // Hidden ReLU units near their kinks break central differences; push
    // the head biases into the linear region first.
    for k in 0..2 {
        store.value_mut("head.b0").values_mut()[k] = 0.25 + 0.05 * k as f64;
    }

    let report = grad_check(
        &mut store,
        |store| {
            let mut loss = 0.0;
            for item in 0..2 {
                let (y, _, cache) = model.predict_group(store, &ds, 0, item).unwrap();
                model.backward_group(store, &ds, 0, item, &cache, 2.0 * y).unwrap();
                loss += y * y;
            }
            loss
        },
        1e-4,
    );
    assert!(
        report.passes(1e-3),
        "worst {:?} rel {}",
        report.worst,
        report.max_rel_err
    );

    // Negative control: the same forward pass with one tampered gradient
    // must be caught.
    let mut store = model.init_params(23);
    for k in 0..2 {
        store.value_mut("head.b0").values_mut()[k] = 0.25 + 0.05 * k as f64;
    }
    let corrupted = grad_check(
        &mut store,
        |store| {
            let mut loss = 0.0;
            for item in 0..2 {
                let (y, _, cache) = model.predict_group(store, &ds, 0, item).unwrap();
                model.backward_group(store, &ds, 0, item, &cache, 2.0 * y).unwrap();
                loss += y * y;
            }
            store.grad_mut("head.w0").values_mut()[0] += 0.75;
            loss
        },
        1e-4,
    );
    assert!(
        !corrupted.passes(1e-3),
        "corrupted backward slipped through with rel {}",
        corrupted.max_rel_err
    );

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}, promised under 5 s");
    println!("ACCEPTANCE 3 gradient_integrity: PASS");
}

#[test]
fn acceptance_4_metric_oracles() {
    // 200 cases of 20 candidates. Quantized scores force ties so the
    // id tie-break is exercised, not just strict orderings.
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let ks = [1, 3, 5, 10, 20];
    let n_cases = 200;
    let mut module_ranks = Vec::with_capacity(n_cases);
    let mut oracle_ranks = Vec::with_capacity(n_cases);
    let mut tied_positives = 0;
    for _ in 0..n_cases {
        let mut pool: Vec<u32> = (0..100).collect();
        pool.shuffle(&mut rng);
        let ids: Vec<u32> = pool[..20].to_vec();
        let scores: Vec<f64> = (0..20).map(|_| rng.gen_range(0..12) as f64 / 12.0).collect();
        if scores[1..].contains(&scores[0]) {
            tied_positives += 1;
        }

        module_ranks.push(rank_of_first(&scores, &ids));

        // Oracle: materialize the full ordering by (score desc, id asc)
        // and look the positive up in it.
        let mut order: Vec<usize> = (0..20).collect();
        order.sort_by(|&a, &b| {
            scores[b].partial_cmp(&scores[a]).unwrap().then(ids[a].cmp(&ids[b]))
        });
        oracle_ranks.push(order.iter().position(|&c| c == 0).unwrap() + 1);
    }
    assert!(tied_positives > 0, "score quantization failed to produce ties");
    assert_eq!(module_ranks, oracle_ranks, "rank disagreement");

    let (hr, ndcg) = hr_ndcg_from_ranks(&module_ranks, &ks);
    for &k in &ks {
        let mut hits = 0usize;
        let mut gain = 0.0;
        for &r in &oracle_ranks {
            if r <= k {
                hits += 1;
                gain += 1.0 / ((r + 1) as f64).log2();
            }
        }
        assert_eq!(hr[&k], hits as f64 / n_cases as f64, "hr@{k}");
        assert_eq!(ndcg[&k], gain / n_cases as f64, "ndcg@{k}");
    }

    // One relevant item at rank r scores exactly the closed form.
    for r in 1..=20 {
        let (_, ndcg) = hr_ndcg_from_ranks(&[r], &[20]);
        let closed_form = 1.0 / ((r + 1) as f64).log2();
        assert!((ndcg[&20] - closed_form).abs() < 1e-12, "rank {r}");
    }

    // Regression metrics on a worked example: truths [2, 4] against
    // predictions [1, 5] give MSE (1 + 1) / 2 and MAPE (1/2 + 1/4) / 2.
    let ds = regression_dataset();
    let test = InteractionSet::new(vec![
        Interaction { row: 0, col: 0, value: 2.0, timestamp: None },
        Interaction { row: 0, col: 1, value: 4.0, timestamp: None },
    ])
    .unwrap();
    let model = TrainedModel::Popularity { counts: vec![1, 5] };
    let report = evaluate_regression(&model, &ds, &test).unwrap();
    assert_eq!(report.mse, Some(1.0));
    assert_eq!(report.mape, Some(0.375));

    let perfect = TrainedModel::Popularity { counts: vec![2, 4] };
    let report = evaluate_regression(&perfect, &ds, &test).unwrap();
    assert_eq!(report.mse, Some(0.0));
    assert_eq!(report.mape, Some(0.0));

    println!("ACCEPTANCE 4 metric_oracles: PASS");
}

fn regression_dataset() -> Dataset {
    Dataset {
        users: vec![UserProfile { user_id: 0, purchase_count: 0, freq: 0.0 }],
        items: vec![
            CatalogItem { item_id: 0, raw_price: 10.0, alpha: 1.0 },
            CatalogItem { item_id: 1, raw_price: 100.0, alpha: 0.1 },
        ],
        groups: vec![GroupDef { group_id: 0, members: vec![0] }],
        user_item: InteractionSet::empty(),
        group_item: InteractionSet::empty(),
        user_item_test: InteractionSet::empty(),
        group_item_test: InteractionSet::empty(),
        feedback: FeedbackKind::Explicit,
    }
}

/// The planted-signal benchmark: one pinned dataset, the price-adaptive
/// model and its uniform-average ablation trained on three seeds each.
/// Built once and shared, so the recovery and loss-behavior criteria
/// measure the same runs.
struct PlantedFixture {
    sources: Vec<PlantedSource>,
    item_prices: Vec<f64>,
    pgusa_hr: Vec<f64>,
    uniform_hr: Vec<f64>,
    pgusa_logs: Vec<TrainLog>,
    build_seconds: f64,
}

const ACCEPTANCE_SEEDS: [u64; 3] = [11, 12, 13];

fn planted_fixture() -> &'static PlantedFixture {
    static FIXTURE: OnceLock<PlantedFixture> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let start = Instant::now();
        let gen = GenConfig {
            n_users: 500,
            n_items: 300,
            n_groups: 8,
            group_size: 8,
            heavy_fraction: 0.35,
            heavy_purchases: (48, 55),
            light_purchases: (4, 9),
            taste_focus: 0.95,
            decoy_focus: 0.8,
            positives_per_group: 60,
            test_fraction: 0.3,
            rho: 0.9,
            ..GenConfig::default()
        };
        let synth = generate_synthetic(&gen, 40).unwrap();
        let ds = synth.dataset;

        let mut pgusa_hr = Vec::new();
        let mut uniform_hr = Vec::new();
        let mut pgusa_logs = Vec::new();
        for seed in ACCEPTANCE_SEEDS {
            let cfg = TrainConfig {
                d: 8,
                epochs: 30,
                learning_rate: 1e-3,
                patience: 30,
                negatives_per_positive: 4,
                batch_size: 128,
                val_fraction: 0.2,
                seed,
                ..TrainConfig::default()
            };
            let (pgusa, log) = train(&ds, ModelKind::Pgusa, &cfg).unwrap();
            let (report, _) =
                evaluate_ranking(&pgusa, &ds, &ds.group_item_test, &[10], 5, false).unwrap();
            pgusa_hr.push(report.hr_at[&10]);
            pgusa_logs.push(log);

            let (uniform, _) = train_grouped(&ds, AggregatorKind::Uniform, &cfg).unwrap();
            let (report, _) =
                evaluate_ranking(&uniform, &ds, &ds.group_item_test, &[10], 5, false).unwrap();
            uniform_hr.push(report.hr_at[&10]);
        }

        PlantedFixture {
            sources: synth.sources,
            item_prices: ds.items.iter().map(|i| i.raw_price).collect(),
            pgusa_hr,
            uniform_hr,
            pgusa_logs,
            build_seconds: start.elapsed().as_secs_f64(),
        }
    })
}

#[test]
fn acceptance_5_planted_signal_recovery() {
    let fx = planted_fixture();

    // (a) The generator's own ground-truth influence labels: every held-out
    // positive knows which member sourced it and whether that member is a
    // frequent buyer. Cheap-tail sourcing is frequency-biased by
    // construction, expensive-tail sourcing is uniform.
    let records: Vec<InfluenceRecord> = fx
        .sources
        .iter()
        .filter(|s| s.in_test)
        .map(|s| InfluenceRecord {
            group_id: s.group_id,
            item_id: s.item_id,
            user_id: s.source_user,
            weight: 1.0,
            raw_price: fx.item_prices[s.item_id as usize],
            is_frequent: s.source_is_frequent,
        })
        .collect();
    let (cheap, expensive) = price_bucket_tests(&records).unwrap();

    assert_eq!((cheap.count_a, cheap.count_b), (12, 3), "cheap-tail counts moved");
    assert!((cheap.statistic - 5.40).abs() <= 0.01, "cheap statistic {}", cheap.statistic);
    assert!(cheap.reject_equal_split, "cheap tail must reject the even split");

    assert_eq!((expensive.count_a, expensive.count_b), (4, 11), "expensive-tail counts moved");
    assert!(
        (expensive.statistic - 3.27).abs() <= 0.01,
        "expensive statistic {}",
        expensive.statistic
    );
    assert!(
        !expensive.reject_equal_split,
        "expensive tail must fail to reject the even split"
    );

    // (b) Price-adaptive weighting beats the uniform-average ablation on
    // HR@10 by at least 0.05 averaged over the three training seeds, and
    // the Welch test marks the gap significant at the 0.1 level.
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let gap = mean(&fx.pgusa_hr) - mean(&fx.uniform_hr);
    assert!(
        gap >= 0.05,
        "mean HR@10 gap {gap:.4} (pgusa {:?} vs uniform {:?})",
        fx.pgusa_hr,
        fx.uniform_hr
    );
    let tt = t_test_two_sample(&fx.pgusa_hr, &fx.uniform_hr, 0.1).unwrap();
    assert!(tt.t > 0.0, "t statistic {}", tt.t);
    assert!(tt.significant, "p {} at alpha 0.1", tt.p_value);

    assert!(
        fx.build_seconds < 300.0,
        "fixture took {:.1} s, promised under 5 min",
        fx.build_seconds
    );
    println!("ACCEPTANCE 5 planted_signal_recovery: PASS");
}

#[test]
fn acceptance_6_baseline_sanity() {
    // Popularity ranking equals an independently coded counting oracle on
    // every synthetic dataset tried.
    let variants: [(GenConfig, u64); 3] = [
        (GenConfig::default(), 1),
        (
            GenConfig {
                n_users: 120,
                n_items: 60,
                n_groups: 3,
                group_size: 10,
                positives_per_group: 30,
                ..GenConfig::default()
            },
            2,
        ),
        (
            GenConfig {
                n_users: 80,
                n_items: 40,
                n_groups: 2,
                group_size: 6,
                heavy_purchases: (10, 14),
                light_purchases: (2, 5),
                positives_per_group: 12,
                feedback: FeedbackKind::Explicit,
                ..GenConfig::default()
            },
            3,
        ),
    ];
    for (gen, seed) in &variants {
        let ds = generate_synthetic(gen, *seed).unwrap().dataset;
        let counts = popularity_counts(&[&ds.user_item, &ds.group_item], ds.items.len());

        let mut oracle_counts = vec![0u64; ds.items.len()];
        for e in ds.user_item.iter().chain(ds.group_item.iter()) {
            oracle_counts[e.col as usize] += 1;
        }
        // Two stable passes (id ascending, then count descending) give the
        // same order as one sort by (count desc, id asc).
        let mut oracle_rank: Vec<u32> = (0..ds.items.len() as u32).collect();
        oracle_rank.sort_by_key(|&i| std::cmp::Reverse(oracle_counts[i as usize]));

        let all_items: Vec<u32> = (0..ds.items.len() as u32).collect();
        assert_eq!(counts, oracle_counts, "counts diverged at seed {seed}");
        assert_eq!(
            popularity_rank(&counts, &all_items),
            oracle_rank,
            "ranking diverged at seed {seed}"
        );
    }

    // The virtual-user table holds every user plus one row per group.
    assert_eq!(NcfModel::new(500, 8, 300, 8, true).n_rows(), 508);
    assert_eq!(NcfModel::new(80, 2, 40, 4, false).n_rows(), 82);

    // Separate GMF and MLP tables roughly double the embedding budget of
    // the shared-table group predictor at equal width.
    let dims = PredictorDims { n_users: 500, n_items: 300, n_groups: 8, d: 8 };
    let shared = GroupPredictor::new(dims, AggregatorKind::PriceAdaptive { beta: 5.0 })
        .embedding_param_count();
    let ncf = NcfModel::new(500, 8, 300, 8, true).init_params(1).scalar_count();
    let ratio = ncf as f64 / (2.0 * shared as f64);
    assert!(
        (ratio - 1.0).abs() <= 0.05,
        "ncf {ncf} vs 2x shared embeddings {} (ratio {ratio:.4})",
        2 * shared
    );

    println!("ACCEPTANCE 6 baseline_sanity: PASS");
}

/// Small planted dataset for the fast training criteria.
fn small_dataset() -> Dataset {
    let gen = GenConfig {
        n_users: 200,
        n_items: 120,
        n_groups: 4,
        group_size: 8,
        heavy_fraction: 0.35,
        heavy_purchases: (30, 40),
        light_purchases: (4, 9),
        taste_focus: 0.95,
        decoy_focus: 0.8,
        positives_per_group: 40,
        test_fraction: 0.3,
        ..GenConfig::default()
    };
    generate_synthetic(&gen, 40).unwrap().dataset
}

#[test]
fn acceptance_7_loss_behavior() {
    // Exactly at the unit margin the pairwise loss and both gradients
    // vanish. Dyadic inputs keep the subtraction exact.
    for (pos, neg) in [(1.5, 0.5), (0.25, -0.75), (-1.0, -2.0)] {
        let (loss, dpos, dneg) = pairwise_loss(pos, neg);
        assert_eq!(loss, 0.0);
        assert_eq!(dpos, 0.0);
        assert_eq!(dneg, 0.0);
    }

    // A zero learning rate leaves every parameter bitwise where
    // initialization put it; an epochs=0 run is that initialization.
    let ds = small_dataset();
    let frozen_cfg = TrainConfig {
        d: 8,
        epochs: 3,
        learning_rate: 0.0,
        patience: 3,
        negatives_per_positive: 4,
        batch_size: 128,
        val_fraction: 0.2,
        seed: 2,
        ..TrainConfig::default()
    };
    let (frozen, _) = train(&ds, ModelKind::Pgusa, &frozen_cfg).unwrap();
    let initial_cfg = TrainConfig { epochs: 0, ..frozen_cfg };
    let (initial, _) = train(&ds, ModelKind::Pgusa, &initial_cfg).unwrap();
    let (TrainedModel::Grouped { store: frozen_store, .. },
         TrainedModel::Grouped { store: initial_store, .. }) = (&frozen, &initial)
    else {
        panic!("grouped training must produce grouped models");
    };
    let names: Vec<&String> = frozen_store.names().collect();
    assert_eq!(names.len(), initial_store.names().count());
    for name in names {
        let (a, b) = (frozen_store.value(name).values(), initial_store.value(name).values());
        assert_eq!(a.len(), b.len(), "{name}");
        for (x, y) in a.iter().zip(b) {
            assert_eq!(x.to_bits(), y.to_bits(), "{name} drifted under lr 0");
        }
    }

    // Real training reduces the epoch-mean loss from the first epoch to the
    // last on every acceptance seed.
    let fx = planted_fixture();
    for (seed, log) in ACCEPTANCE_SEEDS.iter().zip(&fx.pgusa_logs) {
        let first = log.epochs.first().expect("trained at least one epoch").train_loss;
        let last = log.epochs.last().unwrap().train_loss;
        assert!(
            last < first,
            "seed {seed}: epoch-mean loss rose from {first} to {last}"
        );
    }

    println!("ACCEPTANCE 7 loss_behavior: PASS");
}

#[test]
fn acceptance_9_beta_sweep_shape() {
    let ds = small_dataset();
    let cfg = TrainConfig {
        d: 8,
        epochs: 2,
        learning_rate: 1e-3,
        patience: 2,
        negatives_per_positive: 4,
        batch_size: 128,
        val_fraction: 0.2,
        seed: 7,
        ..TrainConfig::default()
    };
    let betas = [1.0, 5.0, 10.0];
    let ks = [1, 5, 10];
    let rows = sweep_beta(&ds, &betas, &cfg, &ks, 5).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sweep.tsv");
    write_sweep_table(&path, &rows).unwrap();
    let table = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = table.lines().collect();

    assert_eq!(
        lines[0], "beta\thr@1\thr@5\thr@10\tndcg@1\tndcg@5\tndcg@10",
        "header must carry every metric column"
    );
    assert_eq!(lines.len(), 4, "one header plus one row per ceiling:\n{table}");
    for (line, beta) in lines[1..].iter().zip(&betas) {
        let cells: Vec<&str> = line.split('\t').collect();
        assert_eq!(cells.len(), 7, "short row: {line}");
        assert_eq!(cells[0], beta.to_string());
        for cell in &cells[1..] {
            let v: f64 = cell.parse().expect("metric cells are numbers");
            assert!((0.0..=1.0).contains(&v), "metric out of range in {line}");
        }
    }

    println!("ACCEPTANCE 9 beta_sweep_shape: PASS");
}
