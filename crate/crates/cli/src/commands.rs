//! Subcommand bodies. Each function does the work for one subcommand and
//! returns a `CliResult`; `main` maps failures to exit codes. Human-facing
//! progress goes to the log (stderr); stdout carries only TSV.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::info;

use pgrec_core::analysis::{
    decile_bucket_report, extract_influence, gmv_curve, price_bucket_tests, t_test_two_sample,
    write_bucket_report, write_chi_results, write_gmv, write_influence,
};
use pgrec_core::data::{
    generate_synthetic, load_dataset_dir, write_dataset, write_planted_sources, Dataset,
    FeedbackKind, GenConfig,
};
use pgrec_core::evaluation::{
    evaluate_ranking, evaluate_regression, write_eval_report, write_member_weights,
    write_rankings,
};
use pgrec_core::nn::grad_check;
use pgrec_core::predictors::{
    AggregatorKind, GroupPredictor, ModelKind, PredictorDims, TrainedModel,
};
use pgrec_core::training::{
    sweep_beta, train, write_sweep_table, write_timings, write_trainlog, TrainConfig,
};

use crate::config::{apply_gen_overrides, apply_train_overrides, parse_loss};
use crate::exit::{CliError, CliResult};
use crate::manifest::Manifest;

fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| {
        CliError::from(pgrec_core::Error::Io { path: dir.to_path_buf(), source: e })
    })
}

/// Parse `--k 1,5,10` into sorted distinct cutoffs.
pub fn parse_ks(s: &str) -> CliResult<Vec<usize>> {
    let mut ks = Vec::new();
    for part in s.split(',') {
        let k: usize = part
            .trim()
            .parse()
            .map_err(|_| CliError::usage(format!("--k expects positive integers, got {part:?}")))?;
        if k == 0 {
            return Err(CliError::usage("--k cutoffs must be at least 1"));
        }
        ks.push(k);
    }
    if ks.is_empty() {
        return Err(CliError::usage("--k needs at least one cutoff"));
    }
    ks.sort_unstable();
    ks.dedup();
    Ok(ks)
}

/// Parse `--betas 1,5,10` into positive finite ceilings.
pub fn parse_betas(s: &str) -> CliResult<Vec<f64>> {
    let mut betas = Vec::new();
    for part in s.split(',') {
        let b: f64 = part
            .trim()
            .parse()
            .map_err(|_| CliError::usage(format!("--betas expects numbers, got {part:?}")))?;
        if !b.is_finite() || b <= 0.0 {
            return Err(CliError::usage(format!("--betas values must be positive, got {b}")));
        }
        betas.push(b);
    }
    if betas.is_empty() {
        return Err(CliError::usage("--betas needs at least one value"));
    }
    Ok(betas)
}

fn load_data(dir: &Path) -> CliResult<Dataset> {
    let (ds, _) = load_dataset_dir(dir)?;
    info!(
        "loaded {} users, {} items, {} groups from {}",
        ds.users.len(),
        ds.items.len(),
        ds.groups.len(),
        dir.display()
    );
    Ok(ds)
}

pub fn synth(argv: &[String], out: &Path, seed: u64, config_path: Option<&Path>) -> CliResult<()> {
    let mut gen = GenConfig::default();
    if let Some(p) = config_path {
        apply_gen_overrides(&mut gen, p)?;
    }
    let synth = generate_synthetic(&gen, seed)?;
    ensure_dir(out)?;
    write_dataset(out, &synth.dataset, &synth.id_maps)?;
    write_planted_sources(&out.join("planted_sources.tsv"), &synth.sources)?;
    let hash = synth.dataset.hash_hex();
    Manifest::new(argv, Some(seed), Some(hash.clone())).write(out)?;
    info!("dataset written to {}", out.display());

    let ds = &synth.dataset;
    print!(
        "key\tvalue\nusers\t{}\nitems\t{}\ngroups\t{}\nuser_train_rows\t{}\nuser_test_rows\t{}\ngroup_train_rows\t{}\ngroup_test_rows\t{}\ndataset_hash\t{hash}\n",
        ds.users.len(),
        ds.items.len(),
        ds.groups.len(),
        ds.user_item.len(),
        ds.user_item_test.len(),
        ds.group_item.len(),
        ds.group_item_test.len(),
    );
    Ok(())
}

pub fn validate(data: &Path) -> CliResult<()> {
    let ds = load_data(data)?;
    print!(
        "key\tvalue\nstatus\tok\nusers\t{}\nitems\t{}\ngroups\t{}\nfeedback\t{}\nuser_train_rows\t{}\nuser_test_rows\t{}\ngroup_train_rows\t{}\ngroup_test_rows\t{}\ndataset_hash\t{}\n",
        ds.users.len(),
        ds.items.len(),
        ds.groups.len(),
        match ds.feedback {
            FeedbackKind::Implicit => "implicit",
            FeedbackKind::Explicit => "explicit",
        },
        ds.user_item.len(),
        ds.user_item_test.len(),
        ds.group_item.len(),
        ds.group_item_test.len(),
        ds.hash_hex(),
    );
    Ok(())
}

pub struct TrainArgs {
    pub data: PathBuf,
    pub model: ModelKind,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub loss: Option<String>,
    pub beta: Option<f64>,
    pub config: Option<PathBuf>,
}

pub fn train_cmd(argv: &[String], args: &TrainArgs) -> CliResult<()> {
    let ds = load_data(&args.data)?;
    let mut cfg = TrainConfig::for_model(args.model, ds.feedback);
    if let Some(p) = &args.config {
        apply_train_overrides(&mut cfg, p)?;
    }
    // Explicit flags win over the config file.
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(loss) = &args.loss {
        cfg.loss = parse_loss(loss)
            .ok_or_else(|| CliError::usage(format!("--loss expects pairwise|mse|bce, got {loss:?}")))?;
    }
    if let Some(beta) = args.beta {
        if !beta.is_finite() || beta <= 0.0 {
            return Err(CliError::usage(format!("--beta must be positive, got {beta}")));
        }
        cfg.beta = beta;
    }

    info!("training {} with seed {}", args.model.as_str(), cfg.seed);
    let (model, log) = train(&ds, args.model, &cfg)?;
    let hash = ds.hash_hex();
    ensure_dir(&args.out)?;
    model.save(&args.out.join("checkpoint.ckpt"), &hash)?;
    model.write_model_card(&args.out.join("model_card.tsv"), &hash)?;
    write_trainlog(&args.out.join("trainlog.tsv"), &log)?;
    write_timings(&args.out.join("timings.log"), &log)?;
    Manifest::new(argv, Some(cfg.seed), Some(hash)).write(&args.out)?;
    info!("checkpoint written to {}", args.out.join("checkpoint.ckpt").display());

    let (best_val, final_loss) = match log.epochs.last() {
        Some(last) => (
            log.epochs
                .get(log.best_epoch.wrapping_sub(1))
                .map(|e| e.val_metric.to_string())
                .unwrap_or_else(|| "-".to_string()),
            last.train_loss.to_string(),
        ),
        None => ("-".to_string(), "-".to_string()),
    };
    print!(
        "key\tvalue\nkind\t{}\nepochs_run\t{}\nbest_epoch\t{}\nval_metric\t{}\nbest_val\t{best_val}\nfinal_train_loss\t{final_loss}\n",
        args.model.as_str(),
        log.epochs.len(),
        log.best_epoch,
        log.val_metric_name,
    );
    Ok(())
}

pub struct EvaluateArgs {
    pub data: PathBuf,
    pub model: PathBuf,
    pub k: String,
    pub seed: u64,
    pub out: PathBuf,
    pub dump_rankings: bool,
    pub dump_weights: bool,
}

pub fn evaluate(argv: &[String], args: &EvaluateArgs) -> CliResult<()> {
    let ds = load_data(&args.data)?;
    let model = TrainedModel::load(&args.model, &ds)?;
    let ks = parse_ks(&args.k)?;

    let (report, ranked) = match ds.feedback {
        FeedbackKind::Implicit => {
            if args.dump_weights && !model.exposes_member_weights() {
                return Err(CliError::usage(format!(
                    "--dump-weights needs per-member weights, which a {} model does not expose",
                    model.kind_str()
                )));
            }
            evaluate_ranking(&model, &ds, &ds.group_item_test, &ks, args.seed, args.dump_weights)?
        }
        FeedbackKind::Explicit => {
            if args.dump_rankings || args.dump_weights {
                return Err(CliError::usage(
                    "--dump-rankings/--dump-weights apply only to implicit-feedback ranking",
                ));
            }
            (evaluate_regression(&model, &ds, &ds.group_item_test)?, Vec::new())
        }
    };

    ensure_dir(&args.out)?;
    let report_path = args.out.join(format!("eval_report_seed{}.tsv", args.seed));
    write_eval_report(&report_path, &report)?;
    if args.dump_rankings {
        write_rankings(&args.out.join(format!("rankings_seed{}.tsv", args.seed)), &ranked)?;
    }
    if args.dump_weights {
        let weights: Vec<_> = ranked.iter().filter_map(|r| r.weights.clone()).collect();
        write_member_weights(&args.out.join(format!("weights_seed{}.tsv", args.seed)), &weights)?;
    }
    Manifest::new(argv, Some(args.seed), Some(ds.hash_hex())).write(&args.out)?;
    info!("report written to {}", report_path.display());

    print!("{}", report.to_tsv());
    Ok(())
}

pub struct SweepArgs {
    pub data: PathBuf,
    pub betas: String,
    pub k: String,
    pub seed: u64,
    pub out: PathBuf,
    pub config: Option<PathBuf>,
}

pub fn sweep(argv: &[String], args: &SweepArgs) -> CliResult<()> {
    let ds = load_data(&args.data)?;
    let betas = parse_betas(&args.betas)?;
    let ks = parse_ks(&args.k)?;
    let mut cfg = TrainConfig::for_model(ModelKind::Pgusa, ds.feedback);
    if let Some(p) = &args.config {
        apply_train_overrides(&mut cfg, p)?;
    }
    cfg.seed = args.seed;

    let rows = sweep_beta(&ds, &betas, &cfg, &ks, args.seed)?;
    ensure_dir(&args.out)?;
    let table_path = args.out.join("sweep.tsv");
    write_sweep_table(&table_path, &rows)?;
    Manifest::new(argv, Some(args.seed), Some(ds.hash_hex())).write(&args.out)?;

    let table = std::fs::read_to_string(&table_path)
        .map_err(|e| CliError::from(pgrec_core::Error::Io { path: table_path, source: e }))?;
    print!("{table}");
    Ok(())
}

pub fn analyze_influence(
    argv: &[String],
    data: &Path,
    model_path: &Path,
    seed: u64,
    out: &Path,
) -> CliResult<()> {
    let ds = load_data(data)?;
    let model = TrainedModel::load(model_path, &ds)?;
    let records = extract_influence(&model, &ds, &ds.group_item_test, seed)?;
    info!("{} rank-1 positives attributed", records.len());
    let (cheap, expensive) = price_bucket_tests(&records)?;
    let buckets = decile_bucket_report(&records)?;

    ensure_dir(out)?;
    write_influence(&out.join("influence.tsv"), &records)?;
    let chi_path = out.join("chi_results.tsv");
    write_chi_results(&chi_path, &[("cheap_tail", cheap), ("expensive_tail", expensive)])?;
    write_bucket_report(&out.join("bucket_report.tsv"), &buckets)?;
    Manifest::new(argv, Some(seed), Some(ds.hash_hex())).write(out)?;

    let chi = std::fs::read_to_string(&chi_path)
        .map_err(|e| CliError::from(pgrec_core::Error::Io { path: chi_path, source: e }))?;
    print!("{chi}");
    Ok(())
}

pub fn analyze_gmv(argv: &[String], data: &Path, model_path: &Path, out: &Path) -> CliResult<()> {
    let ds = load_data(data)?;
    let model = TrainedModel::load(model_path, &ds)?;
    let max_rank = ds.items.len();
    let curves = (0..ds.groups.len() as u32)
        .map(|g| gmv_curve(&model, &ds, g, max_rank))
        .collect::<pgrec_core::Result<Vec<_>>>()?;

    ensure_dir(out)?;
    write_gmv(&out.join("gmv.tsv"), &curves)?;
    Manifest::new(argv, None, Some(ds.hash_hex())).write(out)?;

    let mut summary = String::from("group_id\ttotal_gmv\n");
    for c in &curves {
        let total = c.cumulative.last().copied().unwrap_or(0.0);
        summary.push_str(&format!("{}\t{total}\n", c.group_id));
    }
    print!("{summary}");
    Ok(())
}

/// Check analytic gradients of the full group predictor against central
/// finite differences on a tiny hand-built dataset, for every aggregator
/// and both branches. Any failure exits with the numeric code.
pub fn grad_check_cmd(seed: u64, beta: f64) -> CliResult<()> {
    if !beta.is_finite() || beta <= 0.0 {
        return Err(CliError::usage(format!("--beta must be positive, got {beta}")));
    }
    let ds = tiny_dataset();
    let dims = PredictorDims { n_users: 3, n_items: 2, n_groups: 1, d: 2 };
    let aggregators = [
        AggregatorKind::PriceAdaptive { beta },
        AggregatorKind::Attention,
        AggregatorKind::AttentionWithPrice { beta },
        AggregatorKind::Uniform,
    ];

    let mut out = String::from("aggregator\tbranch\tchecked\tmax_rel_err\tstatus\n");
    let mut all_pass = true;
    for agg in aggregators {
        let model = GroupPredictor::new(dims, agg);
        let mut store = model.init_params(seed);
        nudge_off_kinks(&mut store, agg.uses_attention());
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
        let pass = report.passes(1e-3);
        all_pass &= pass;
        out.push_str(&format!(
            "{}\tgroup\t{}\t{:e}\t{}\n",
            agg.label(),
            report.checked,
            report.max_rel_err,
            if pass { "pass" } else { "fail" }
        ));
    }

    // The user branch shares the head; one aggregator-free pass covers it.
    let model = GroupPredictor::new(dims, AggregatorKind::Uniform);
    let mut store = model.init_params(seed);
    nudge_off_kinks(&mut store, false);
    let report = grad_check(
        &mut store,
        |store| {
            let mut loss = 0.0;
            for (user, item) in [(0u32, 0u32), (1, 1), (2, 0)] {
                let (y, cache) = model.predict_user(store, user, item).unwrap();
                model.backward_user(store, user, item, &cache, 2.0 * y).unwrap();
                loss += y * y;
            }
            loss
        },
        1e-4,
    );
    let pass = report.passes(1e-3);
    all_pass &= pass;
    out.push_str(&format!(
        "-\tuser\t{}\t{:e}\t{}\n",
        report.checked,
        report.max_rel_err,
        if pass { "pass" } else { "fail" }
    ));

    print!("{out}");
    if all_pass {
        Ok(())
    } else {
        Err(CliError::numeric("gradient check failed, see report above"))
    }
}

/// Three users with distinct purchase frequencies in one group, plus a cheap
/// and an expensive item, so every aggregation path gets exercised.
fn tiny_dataset() -> Dataset {
    use pgrec_core::data::{CatalogItem, GroupDef, InteractionSet, UserProfile};
    Dataset {
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
    }
}

/// Central differences break at ReLU kinks; push hidden biases into the
/// linear region before checking.
fn nudge_off_kinks(store: &mut pgrec_core::nn::ParamStore, attention: bool) {
    for k in 0..2 {
        store.value_mut("head.b0").values_mut()[k] = 0.25 + 0.05 * k as f64;
    }
    if attention {
        for k in 0..2 {
            store.value_mut("attn.b").values_mut()[k] = 0.03 * (k as f64 + 1.0);
        }
    }
}

/// Per-directory metric samples pulled from `eval_report_seed*.tsv` files.
#[derive(Debug)]
struct RunDir {
    name: String,
    /// metric name -> one value per report file, in filename order.
    samples: BTreeMap<String, Vec<f64>>,
    n_reports: usize,
}

pub fn compare(dirs: &[PathBuf], metric: &str, alpha: f64) -> CliResult<()> {
    if !(0.0..=1.0).contains(&alpha) || !alpha.is_finite() {
        return Err(CliError::usage(format!("--alpha must lie in [0, 1], got {alpha}")));
    }
    if dirs.is_empty() {
        return Err(CliError::usage("compare needs at least one run directory"));
    }
    let runs: Vec<RunDir> = dirs.iter().map(|d| read_run_dir(d)).collect::<CliResult<_>>()?;

    // Every report in every directory must expose the same metric set.
    let reference: Vec<String> = runs[0].samples.keys().cloned().collect();
    for run in &runs[1..] {
        let names: Vec<String> = run.samples.keys().cloned().collect();
        if names != reference {
            return Err(CliError::from(pgrec_core::Error::invalid(
                "compare",
                format!(
                    "mismatched metric sets: {} has [{}], {} has [{}]",
                    runs[0].name,
                    reference.join(", "),
                    run.name,
                    names.join(", ")
                ),
            )));
        }
    }
    if !reference.iter().any(|m| m == metric) {
        return Err(CliError::usage(format!(
            "metric {metric:?} not present in the reports; available: {}",
            reference.join(", ")
        )));
    }

    let means: Vec<f64> = runs
        .iter()
        .map(|r| {
            let xs = &r.samples[metric];
            xs.iter().sum::<f64>() / xs.len() as f64
        })
        .collect();

    let mut out = format!("run\tn\tmean_{metric}\tbaseline\tt\tp\tsignificant\n");
    for (i, run) in runs.iter().enumerate() {
        // Best competitor by mean among the other runs; a lone run is its
        // own baseline and never earns an asterisk.
        let competitor = (0..runs.len())
            .filter(|&j| j != i)
            .max_by(|&a, &b| means[a].partial_cmp(&means[b]).unwrap())
            .unwrap_or(i);
        let tt = t_test_two_sample(&run.samples[metric], &runs[competitor].samples[metric], alpha)?;
        let better = competitor != i && means[i] > means[competitor] && tt.significant;
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            run.name,
            run.n_reports,
            means[i],
            runs[competitor].name,
            tt.t,
            tt.p_value,
            if better { "*" } else { "-" }
        ));
    }
    print!("{out}");
    Ok(())
}

/// Read every `eval_report_seed*.tsv` in `dir`, in filename order.
fn read_run_dir(dir: &Path) -> CliResult<RunDir> {
    let name = dir.display().to_string();
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CliError::from(pgrec_core::Error::Io { path: dir.to_path_buf(), source: e }))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .map(|n| n.starts_with("eval_report_seed") && n.ends_with(".tsv"))
                .unwrap_or(false)
        })
        .collect();
    files.sort();
    if files.len() < 2 {
        return Err(CliError::from(pgrec_core::Error::invalid(
            "compare",
            format!(
                "{name} holds {} eval report(s); need at least 2 seeds per run",
                files.len()
            ),
        )));
    }

    let mut samples: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut metric_sets: Vec<Vec<String>> = Vec::new();
    for file in &files {
        let mut names = Vec::new();
        for (metric, value) in read_report_rows(file)? {
            samples.entry(metric.clone()).or_default().push(value);
            names.push(metric);
        }
        metric_sets.push(names);
    }
    if metric_sets.windows(2).any(|w| w[0] != w[1]) {
        return Err(CliError::from(pgrec_core::Error::invalid(
            "compare",
            format!("{name}: reports disagree on their metric sets"),
        )));
    }
    Ok(RunDir { name, samples, n_reports: files.len() })
}

/// Parse one eval report: `metric\tvalue` rows under a header. Bookkeeping
/// rows such as the test-case count are not comparison metrics.
fn read_report_rows(path: &Path) -> CliResult<Vec<(String, f64)>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::from(pgrec_core::Error::Io { path: path.to_path_buf(), source: e }))?;
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if idx == 0 || line.is_empty() || line.starts_with("n_test_cases") {
            continue;
        }
        let Some((name, value)) = line.split_once('\t') else {
            return Err(CliError::from(pgrec_core::Error::Parse {
                file: path.to_path_buf(),
                line: idx + 1,
                msg: format!("expected `metric\\tvalue`, got {line:?}"),
            }));
        };
        let value: f64 = value.parse().map_err(|_| {
            CliError::from(pgrec_core::Error::Parse {
                file: path.to_path_buf(),
                line: idx + 1,
                msg: format!("bad metric value {value:?}"),
            })
        })?;
        rows.push((name.to_string(), value));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k_list_parses_sorted_and_distinct() {
        assert_eq!(parse_ks("10,1,5,10").unwrap(), vec![1, 5, 10]);
        assert!(parse_ks("0").is_err());
        assert!(parse_ks("1,x").is_err());
    }

    #[test]
    fn beta_list_rejects_nonpositive() {
        assert_eq!(parse_betas("1,5,10").unwrap(), vec![1.0, 5.0, 10.0]);
        assert!(parse_betas("5,-1").is_err());
        assert!(parse_betas("").is_err());
    }

    #[test]
    fn report_rows_skip_header_and_case_count() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("eval_report_seed1.tsv");
        std::fs::write(&p, "metric\tvalue\nhr@10\t0.5\nndcg@10\t0.3\nn_test_cases\t40\n").unwrap();
        let rows = read_report_rows(&p).unwrap();
        assert_eq!(rows, vec![("hr@10".to_string(), 0.5), ("ndcg@10".to_string(), 0.3)]);
    }

    #[test]
    fn single_report_directory_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("eval_report_seed1.tsv"), "metric\tvalue\nhr@10\t0.5\n")
            .unwrap();
        let err = read_run_dir(dir.path()).unwrap_err();
        assert_eq!(err.code, crate::exit::DATA);
        assert!(err.message.contains("at least 2"), "{}", err.message);
    }

    #[test]
    fn grad_check_command_passes_on_the_tiny_fixture() {
        grad_check_cmd(23, 5.0).unwrap();
    }
}
