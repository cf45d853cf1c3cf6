use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write as _};
use std::path::Path;

use mcclk::checkpoint::Checkpoint;
use mcclk::config::{ModelConfig, SWEEP_KEYS};
use mcclk::dataset::{preprocess as run_preprocess, write_atomic, Dataset, PreprocessInput};
use mcclk::eval::{recall_at_k, svd_project_2d};
use mcclk::ingest::Interaction;
use mcclk::toy::check_toy_gradients;
use mcclk::train::{evaluate_ctr, graphs_for, representations, train as run_train, user_positive_lists, TrainOutcome};
use mcclk::Error;

use crate::manifest::RunManifest;
use crate::{
    EvaluateArgs, ExportVizArgs, Failure, GradcheckArgs, MetricArg, ModelArgs, PreprocessArgs, SplitArg, SweepArgs,
    TrainArgs, UsageError,
};

type CmdResult = Result<(), Failure>;

pub const CHECKPOINT_FILE: &str = "best.ckpt";
pub const METRICS_FILE: &str = "metrics.jsonl";
pub const CONFIG_FILE: &str = "config.toml";
pub const REPORT_FILE: &str = "report.txt";
pub const VIZ_FILE: &str = "items_2d.txt";
pub const GRADCHECK_FILE: &str = "gradcheck.txt";
pub const SWEEP_FILE: &str = "sweep.tsv";

fn io(path: &Path, e: std::io::Error) -> Failure {
    Failure::Run(Error::Config(format!("{}: {e}", path.display())))
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| io(dir, e))
}

fn write_output(manifest: &mut RunManifest, path: &Path, text: &str) -> CmdResult {
    write_atomic(path, text.as_bytes())?;
    manifest.output(path);
    Ok(())
}

/// Preset, then config file (or a manifest's `config` table), then flags.
fn resolve_config(args: &ModelArgs) -> mcclk::Result<ModelConfig> {
    let base = match &args.preset {
        Some(p) => ModelConfig::preset(p)?,
        None => ModelConfig::default(),
    };
    let mut cfg = match &args.config {
        None => base,
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
            match table.get("config") {
                Some(toml::Value::Table(snapshot)) => ModelConfig::from_toml(&snapshot.to_string())?,
                _ => ModelConfig::from_toml_over(&text, &base)?,
            }
        }
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(a) = args.ablation {
        cfg.ablation = a.into();
    }
    if let Some(e) = args.epochs {
        cfg.epochs = e;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_data(dir: &Path, cfg: &ModelConfig, manifest: &mut RunManifest) -> mcclk::Result<Dataset> {
    let data = Dataset::load(dir, cfg.split, cfg.seed)?;
    manifest.data_dir = Some(dir.display().to_string());
    manifest.dataset_hash = Some(data.hash());
    manifest.split_seed = Some(data.split.seed);
    log::info!(
        "data {}: {} users, {} items, {} extra entities, {} relations, {}/{}/{} records",
        dir.display(),
        data.graph.n_users,
        data.graph.n_items,
        data.n_extra_entities,
        data.n_relations,
        data.split.train.len(),
        data.split.eval.len(),
        data.split.test.len()
    );
    Ok(data)
}

pub fn preprocess(args: PreprocessArgs, manifest: &mut RunManifest) -> CmdResult {
    let input = PreprocessInput {
        interactions: &args.interactions,
        kg: &args.kg,
        alignment: args.alignment.as_deref(),
        kind: args.kind.into(),
        threshold: args.threshold,
        seed: args.seed,
        ratios: mcclk::ingest::DEFAULT_RATIOS,
    };
    let start = std::time::Instant::now();
    let out = run_preprocess(&input)?;
    for p in out.write(&args.out)? {
        manifest.output(&p);
    }
    manifest.split_seed = Some(args.seed);
    manifest.data_dir = Some(args.out.display().to_string());
    print!("{}", out.stats.to_toml());
    log::info!("preprocessed in {:.2}s", start.elapsed().as_secs_f64());
    Ok(())
}

/// Trains into `dir`, streaming metrics lines to `dir/metrics.jsonl`.
fn train_into(cfg: &ModelConfig, data: &Dataset, dir: &Path, manifest: &mut RunManifest) -> Result<TrainOutcome, Failure> {
    create_dir(dir)?;
    let metrics_path = dir.join(METRICS_FILE);
    let mut log_file = BufWriter::new(File::create(&metrics_path).map_err(|e| io(&metrics_path, e))?);
    let mut write_err = None;
    let outcome = run_train(cfg, data, |m| {
        if write_err.is_none() {
            if let Err(e) = writeln!(log_file, "{}", m.to_line()).and_then(|_| log_file.flush()) {
                write_err = Some(e);
            }
        }
    })?;
    if let Some(e) = write_err {
        return Err(io(&metrics_path, e));
    }
    manifest.output(&metrics_path);
    let ckpt = dir.join(CHECKPOINT_FILE);
    outcome.best.save(&ckpt)?;
    manifest.output(&ckpt);
    write_output(manifest, &dir.join(CONFIG_FILE), &cfg.to_toml())?;
    Ok(outcome)
}

pub fn train(args: TrainArgs, manifest: &mut RunManifest) -> CmdResult {
    let cfg = resolve_config(&args.model)?;
    manifest.config = Some(cfg.clone());
    println!("# config");
    print!("{}", cfg.to_toml());
    let data = load_data(&args.model.data, &cfg, manifest)?;
    let outcome = train_into(&cfg, &data, &args.out, manifest)?;
    manifest.checkpoint_hash = Some(outcome.best.hash());
    println!("# result");
    println!("epochs_run = {}", outcome.metrics.len());
    println!("best_epoch = {}", outcome.best_epoch);
    println!("stopped_early = {}", outcome.stopped_early);
    if let Some(t) = outcome.test {
        println!("test_auc = {:?}", t.auc);
        println!("test_f1 = {:?}", t.f1);
    }
    Ok(())
}

fn split_records(data: &Dataset, split: SplitArg) -> (&'static str, &[Interaction]) {
    match split {
        SplitArg::Eval => ("eval", &data.split.eval),
        SplitArg::Test => ("test", &data.split.test),
    }
}

pub fn evaluate(args: EvaluateArgs, manifest: &mut RunManifest) -> CmdResult {
    if args.metrics.contains(&MetricArg::Topk) && (args.k_list.is_empty() || args.k_list.contains(&0)) {
        return Err(Failure::Usage(UsageError("--k-list needs positive cutoffs".into())));
    }
    let ck = Checkpoint::load(&args.checkpoint)?;
    let hash = ck.hash();
    manifest.checkpoint_hash = Some(hash.clone());
    manifest.config = Some(ck.config.clone());
    let data = load_data(&args.data, &ck.config, manifest)?;
    let graphs = graphs_for(&ck, &data)?;
    let reps = representations(&graphs, &ck.params, &ck.config)?;
    let (split_name, records) = split_records(&data, args.split);

    let mut report = String::new();
    let _ = writeln!(report, "{:<12} {:<6} {:<22} checkpoint", "metric", "split", "value");
    let mut row = |metric: &str, value: f64| {
        let _ = writeln!(report, "{metric:<12} {split_name:<6} {:<22} {hash}", format!("{value:?}"));
    };
    if args.metrics.contains(&MetricArg::Ctr) {
        let r = evaluate_ctr(&reps, records)?;
        row("auc", r.auc);
        row("f1", r.f1);
    }
    if args.metrics.contains(&MetricArg::Topk) {
        let n_users = data.graph.n_users;
        let train = user_positive_lists(n_users, &data.split.train_positives());
        let targets = {
            let pos: Vec<(usize, usize)> = records.iter().filter(|r| r.label).map(|r| (r.user, r.item)).collect();
            user_positive_lists(n_users, &pos)
        };
        for &k in &args.k_list {
            let r = recall_at_k(data.graph.n_items, &train, &targets, k, |u| reps.user_scores(u).to_vec());
            row(&format!("recall@{k}"), r.recall);
        }
    }
    print!("{report}");
    create_dir(&args.out)?;
    write_output(manifest, &args.out.join(REPORT_FILE), &report)
}

pub fn gradcheck(args: GradcheckArgs, manifest: &mut RunManifest) -> CmdResult {
    let report = check_toy_gradients(args.eps, args.tol)?;
    let mut text = report.table();
    let _ = writeln!(
        text,
        "{} blocks, max rel_err {:.3e}, tolerance {:.1e}: {}",
        report.checks.len(),
        report.max_rel_err(),
        report.tolerance,
        if report.passed() { "pass" } else { "FAIL" }
    );
    print!("{text}");
    create_dir(&args.out)?;
    write_output(manifest, &args.out.join(GRADCHECK_FILE), &text)?;
    report.into_result()?;
    Ok(())
}

pub fn export_viz(args: ExportVizArgs, manifest: &mut RunManifest) -> CmdResult {
    let ck = Checkpoint::load(&args.checkpoint)?;
    manifest.checkpoint_hash = Some(ck.hash());
    manifest.config = Some(ck.config.clone());
    let proj = svd_project_2d(ck.params.emb.items.view())?;
    create_dir(&args.out)?;
    let path = args.out.join(VIZ_FILE);
    write_output(manifest, &path, &proj.to_text())?;
    println!(
        "{} items, singular values {:?} {:?}, {} iterations -> {}",
        proj.coords.nrows(),
        proj.singular[0],
        proj.singular[1],
        proj.iterations,
        path.display()
    );
    Ok(())
}

pub fn sweep(args: SweepArgs, manifest: &mut RunManifest) -> CmdResult {
    let values: Vec<&str> = args.values.iter().map(|v| v.trim()).filter(|v| !v.is_empty()).collect();
    if values.is_empty() {
        return Err(Failure::Usage(UsageError("--values must list at least one value".into())));
    }
    if !SWEEP_KEYS.contains(&args.param.as_str()) {
        return Err(Failure::Usage(UsageError(format!(
            "unknown sweep parameter {:?} (one of {})",
            args.param,
            SWEEP_KEYS.join(", ")
        ))));
    }
    let base = resolve_config(&args.model)?;
    let mut configs = Vec::with_capacity(values.len());
    for v in &values {
        let mut cfg = base.clone();
        cfg.set(&args.param, v).map_err(|e| Failure::Usage(UsageError(e.to_string())))?;
        configs.push(cfg);
    }
    manifest.config = Some(base.clone());
    let data = load_data(&args.model.data, &base, manifest)?;

    let mut table = String::new();
    let _ = writeln!(table, "{}\tbest_epoch\teval_auc\ttest_auc\ttest_f1", args.param);
    for (idx, (v, cfg)) in values.iter().zip(&configs).enumerate() {
        log::info!("sweep {}={v} ({}/{})", args.param, idx + 1, values.len());
        let outcome = train_into(cfg, &data, &args.out.join(format!("run-{idx:02}")), manifest)?;
        let eval_auc = outcome
            .metrics
            .iter()
            .find(|m| m.epoch == outcome.best_epoch)
            .map_or(f64::NAN, |m| m.eval_auc);
        let (test_auc, test_f1) = outcome.test.map_or((f64::NAN, f64::NAN), |t| (t.auc, t.f1));
        let _ = writeln!(
            table,
            "{v}\t{}\t{eval_auc:.4}\t{test_auc:.4}\t{test_f1:.4}",
            outcome.best_epoch
        );
    }
    print!("{table}");
    write_output(manifest, &args.out.join(SWEEP_FILE), &table)
}
