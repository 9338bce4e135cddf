use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::autograd::op_suite;
use crate::data::{
    load_interactions, load_side_info, synth_generate, write_interactions, write_side_info, Dataset,
    DomainSet, Schema, Vocabularies,
};
use crate::evaluation::{evaluate, EvalReport, EvalRow, Metrics, SplitInfo};
use crate::experiment::{prepare, run_variant, AnyModel, Prepared, Variant};
use crate::model::{composed_suite, Checkpoint, Dacdr, Network, Sizes};
use crate::training::{finetune, TrainReport};

use super::{CliError, Output, RunConfig};

const OP_TOLERANCE: f64 = 1e-6;
const COMPOSED_TOLERANCE: f64 = 1e-4;

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Usage(format!("cannot create {}: {e}", dir.display())))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

fn metric_line(label: &str, m: &Metrics) -> String {
    let f = |v: Option<f64>| v.map_or_else(|| "undefined".to_string(), |x| format!("{x:.4}"));
    match (m.auc, m.mae) {
        (_, Some(_)) => format!("{label}: mae {} rmse {}", f(m.mae), f(m.rmse)),
        _ => format!("{label}: auc {}", f(m.auc)),
    }
}

/// Loads interactions and optional side info under `cfg`, binarizing ratings
/// for logit-mode runs.
fn load_data(cfg: &RunConfig, domains: &DomainSet, vocab: Vocabularies) -> Result<Dataset, CliError> {
    let path = cfg
        .path("interactions")
        .ok_or_else(|| CliError::Usage("`interactions` is not set".into()))?;
    let schema = cfg.input_schema()?;
    let mode_schema = crate::experiment::schema_for(cfg.output_mode()?);
    if schema == Schema::Logit && mode_schema == Schema::Rating {
        return Err(CliError::Usage("rating-mode models need rating input".into()));
    }
    let mut data = load_interactions(path, schema, domains, vocab, cfg.get("max_malformed_frac")?)?;
    if schema != mode_schema {
        data = data.binarized(cfg.get("binarize_threshold")?);
    }
    if let Some(side) = cfg.path("side_info") {
        if side.exists() {
            load_side_info(side, &mut data)?;
        } else if cfg.is_explicit("side_info") {
            return Err(CliError::Data(format!("side info file {} not found", side.display())));
        }
    }
    Ok(data)
}

fn prepare_split(cfg: &RunConfig, data: Dataset, beta: f64) -> Result<Prepared, CliError> {
    let target = cfg.str("target");
    let index = data
        .target_index(target)
        .ok_or_else(|| CliError::Usage(format!("target domain `{target}` is not in the data")))?;
    Ok(prepare(
        data,
        index,
        beta,
        cfg.get("split_seed")?,
        cfg.get("max_seq_len")?,
        cfg.get("causal")?,
    )?)
}

fn read_checkpoint(cfg: &RunConfig, key: &str) -> Result<(PathBuf, Checkpoint), CliError> {
    let path = cfg
        .path(key)
        .ok_or_else(|| CliError::Usage(format!("`--{key}` is required")))?;
    if !path.is_file() {
        return Err(CliError::Usage(format!("checkpoint {} not found", path.display())));
    }
    Ok((path.to_path_buf(), Checkpoint::read(path)?))
}

pub fn cmd_gen_data(cfg: &RunConfig) -> Result<Output, CliError> {
    let spec = cfg.synth()?;
    let synth = synth_generate(&spec)?;
    let out = PathBuf::from(cfg.str("out"));
    let mut lines = Vec::new();
    for (j, target) in synth.domains.targets.iter().enumerate() {
        let name = if j == 0 {
            "interactions.tsv".to_string()
        } else {
            format!("interactions_{target}.tsv")
        };
        let path = out.join(name);
        let records = synth.records_for(target);
        std::fs::create_dir_all(&out)
            .map_err(|e| CliError::Usage(format!("cannot create {}: {e}", out.display())))?;
        write_interactions(&path, &records)?;
        let tgt: Vec<_> = records.iter().filter(|r| &r.domain_id == target).collect();
        let mean = tgt.iter().map(|r| r.signal).sum::<f64>() / tgt.len().max(1) as f64;
        lines.push(format!(
            "{}: {} source + {} {target} interactions, mean signal {mean:.4}",
            path.display(),
            records.len() - tgt.len(),
            tgt.len()
        ));
    }
    let side = out.join("side_info.tsv");
    write_side_info(&side, &synth.side_info)?;
    lines.push(format!("{}: {} items", side.display(), synth.side_info.len()));
    let echo = out.join("synth.cfg");
    write_file(&echo, &cfg.to_text())?;
    lines.push(format!("{}: effective config", echo.display()));
    Ok(lines)
}

#[derive(Serialize)]
struct TrainOutput<'a> {
    command: &'a str,
    variant: String,
    split: SplitInfo,
    train_metrics: Metrics,
    test_metrics: Metrics,
    report: TrainReport,
    config: BTreeMap<String, String>,
}

/// Keys that describe one invocation rather than the trained model.
const PER_RUN: [&str; 5] = ["report", "base", "sweep", "sweep_beta", "op"];

fn checkpoint_of(variant: &str, cfg: &RunConfig, vocab: &Vocabularies, model: &AnyModel) -> Checkpoint {
    let mut meta = cfg.to_pairs();
    meta.retain(|k, _| !PER_RUN.contains(&k.as_str()));
    Checkpoint {
        variant: variant.to_string(),
        meta,
        vocab: vocab.clone(),
        params: model.params().clone(),
    }
}

pub fn cmd_train(cfg: &RunConfig) -> Result<Output, CliError> {
    let variant = cfg.variant()?;
    let model_cfg = cfg.model()?;
    let train_cfg = cfg.train()?;
    let ckpt_path = cfg
        .path("checkpoint")
        .ok_or_else(|| CliError::Usage("`--checkpoint` is required".into()))?
        .to_path_buf();
    let domains = DomainSet::new(cfg.str("source"), &[cfg.str("target")]);
    let data = load_data(cfg, &domains, Vocabularies::default())?;
    let prep = prepare_split(cfg, data, cfg.get("beta")?)?;
    let mut run = run_variant(&prep, variant, &model_cfg, &train_cfg, cfg.get("seed")?)?;
    run.model.params_mut().set_all_trainable(true);
    checkpoint_of(variant.name(), cfg, &prep.data.vocab, &run.model).write(&ckpt_path)?;
    run.report.checkpoint = Some(ckpt_path.display().to_string());

    let mut lines = vec![
        format!(
            "trained {variant} on {} samples ({} epochs, {} steps)",
            run.report.samples, run.report.epochs, run.report.steps
        ),
        format!("epoch losses: {:?}", run.report.epoch_losses),
        metric_line("train", &run.train_metrics),
        metric_line("test", &run.test_metrics),
        format!("checkpoint: {}", ckpt_path.display()),
    ];
    if let Some(path) = cfg.path("report") {
        let out = TrainOutput {
            command: "train",
            variant: variant.name().into(),
            split: prep.split_info(),
            train_metrics: run.train_metrics,
            test_metrics: run.test_metrics,
            report: run.report,
            config: cfg.to_pairs(),
        };
        write_file(path, &to_json(&out))?;
        lines.push(format!("report: {}", path.display()));
    }
    Ok(lines)
}

fn sweep_list(cfg: &RunConfig) -> Result<Vec<Variant>, CliError> {
    match cfg.str("sweep") {
        "none" | "" => Ok(Vec::new()),
        "ablation" => Ok(Variant::ABLATIONS.to_vec()),
        "variants" => Ok(Variant::ALL.to_vec()),
        other => Err(CliError::Usage(format!(
            "bad value `{other}` for `sweep` (expected none, ablation or variants)"
        ))),
    }
}

fn report_path(base: &Path, beta: f64, several: bool) -> PathBuf {
    if !several {
        return base.to_path_buf();
    }
    let stem = base.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
    let ext = base.extension().and_then(|s| s.to_str()).unwrap_or("json");
    base.with_file_name(format!("{stem}.beta{beta}.{ext}"))
}

pub fn cmd_eval(flags: &RunConfig) -> Result<Output, CliError> {
    let (_, ckpt) = read_checkpoint(flags, "checkpoint")?;
    let stored = RunConfig::from_pairs(&ckpt.meta);
    let cfg = flags.over(stored.clone());
    let variant: Variant = ckpt
        .variant
        .parse()
        .map_err(|e| CliError::Usage(format!("checkpoint: {e}")))?;
    let model_cfg = cfg.model()?;
    let train_cfg = cfg.train()?;
    let seed: u64 = cfg.get("seed")?;
    let sweep_betas: Vec<f64> = cfg.list("sweep_beta")?;
    let retrain = !sweep_betas.is_empty();
    if !retrain && (cfg.str("beta") != stored.str("beta") || cfg.str("split_seed") != stored.str("split_seed")) {
        return Err(CliError::Usage(format!(
            "checkpoint was trained on the beta={} split_seed={} split; use --sweep-beta to retrain on other splits",
            stored.str("beta"),
            stored.str("split_seed")
        )));
    }
    let betas = if retrain { sweep_betas } else { vec![cfg.get("beta")?] };
    let sweep = sweep_list(&cfg)?;

    let targets: Vec<&str> = ckpt.vocab.domains.ids().iter().map(String::as_str).collect();
    let domains = DomainSet::new(cfg.str("source"), &targets);
    let base = load_data(&cfg, &domains, ckpt.vocab.clone())?;
    let (have, want) = (Sizes::of(&base.vocab), Sizes::of(&ckpt.vocab));
    if have.users != want.users || have.tgt_items != want.tgt_items {
        return Err(CliError::Usage(
            "data holds users or target items unknown to the checkpoint".into(),
        ));
    }
    let stored_model = AnyModel::from_params(variant, &model_cfg, ckpt.params.clone())?;

    let mut lines = Vec::new();
    for &beta in &betas {
        let prep = prepare_split(&cfg, base.clone(), beta)?;
        let metrics = if retrain {
            run_variant(&prep, variant, &model_cfg, &train_cfg, seed)?.test_metrics
        } else {
            evaluate(&stored_model, &prep.sets.test)?
        };
        let mut table = Vec::new();
        for &v in &sweep {
            let m = if v == variant {
                metrics.clone()
            } else {
                run_variant(&prep, v, &model_cfg, &train_cfg, seed)?.test_metrics
            };
            table.push(EvalRow {
                variant: v.name().into(),
                split: prep.split_info(),
                metrics: m,
                samples: prep.sets.test.len(),
            });
        }
        let mut echo = cfg.clone();
        echo.set("beta", &beta.to_string())?;
        let report = EvalReport {
            dataset: cfg.str("interactions").to_string(),
            variant: variant.name().into(),
            mode: model_cfg.output_mode,
            split: prep.split_info(),
            metrics,
            samples: prep.sets.test.len(),
            table,
            config: echo.to_pairs(),
        };
        lines.extend(report.to_table().lines().map(String::from));
        if let Some(path) = cfg.path("report") {
            let path = report_path(path, beta, retrain);
            write_file(&path, &(report.to_json() + "\n"))?;
            lines.push(format!("report: {}", path.display()));
        }
    }
    Ok(lines)
}

#[derive(Serialize)]
struct FinetuneOutput<'a> {
    command: &'a str,
    base: String,
    split: SplitInfo,
    zero_shot: Metrics,
    finetuned: Metrics,
    report: TrainReport,
    config: BTreeMap<String, String>,
}

pub fn cmd_finetune(flags: &RunConfig) -> Result<Output, CliError> {
    let (base_path, ckpt) = read_checkpoint(flags, "base")?;
    let cfg = flags.over(RunConfig::from_pairs(&ckpt.meta));
    let variant: Variant = ckpt
        .variant
        .parse()
        .map_err(|e| CliError::Usage(format!("checkpoint: {e}")))?;
    if variant.ablation().is_none() {
        return Err(CliError::Usage(format!("fine-tuning needs a DACDR checkpoint, found {variant}")));
    }
    let target = cfg.str("target").to_string();
    if ckpt.vocab.domains.get(&target).is_some() {
        return Err(CliError::Usage(format!(
            "domain `{target}` is already in the base checkpoint; pass the new domain with --target"
        )));
    }
    let out_path = cfg
        .path("checkpoint")
        .ok_or_else(|| CliError::Usage("`--checkpoint` is required".into()))?
        .to_path_buf();
    if out_path == base_path {
        return Err(CliError::Usage("refusing to overwrite the base checkpoint".into()));
    }
    let model_cfg = cfg.model()?;
    let train_cfg = cfg.train()?;

    let mut targets: Vec<&str> = ckpt.vocab.domains.ids().iter().map(String::as_str).collect();
    targets.push(&target);
    let domains = DomainSet::new(cfg.str("source"), &targets);
    let data = load_data(&cfg, &domains, ckpt.vocab.clone())?;
    let new_items = data.vocab.tgt_items.len() - ckpt.vocab.tgt_items.len();

    let mut model = Dacdr::from_params(model_cfg, ckpt.params.clone())?;
    let index = model.extend_target(new_items, cfg.get("seed")?)?;
    debug_assert_eq!(Some(index), data.target_index(&target));
    let prep = prepare_split(&cfg, data, cfg.get("beta")?)?;

    let zero_shot = evaluate(&model, &prep.sets.test)?;
    let mut report = finetune(&mut model, &prep.sets.train, &train_cfg)?;
    let finetuned = evaluate(&model, &prep.sets.test)?;

    let model = AnyModel::Dacdr(model);
    checkpoint_of(variant.name(), &cfg, &prep.data.vocab, &model).write(&out_path)?;
    report.checkpoint = Some(out_path.display().to_string());
    let mut lines = vec![
        format!("fine-tuned {variant} onto `{target}` from {}", base_path.display()),
        metric_line("zero-shot test", &zero_shot),
        metric_line("fine-tuned test", &finetuned),
        format!("checkpoint: {}", out_path.display()),
    ];
    if let Some(path) = cfg.path("report") {
        let out = FinetuneOutput {
            command: "finetune",
            base: base_path.display().to_string(),
            split: prep.split_info(),
            zero_shot,
            finetuned,
            report,
            config: cfg.to_pairs(),
        };
        write_file(path, &to_json(&out))?;
        lines.push(format!("report: {}", path.display()));
    }
    Ok(lines)
}

pub fn cmd_gradcheck(cfg: &RunConfig) -> Result<Output, CliError> {
    let eps: f64 = cfg.get("eps")?;
    let op = cfg.str("op");
    let wants = |name: &str| op.is_empty() || name == op || name.starts_with(&format!("{op}/"));
    let mut rows: Vec<(String, f64, f64)> = op_suite(cfg.get("seed")?, eps)
        .map_err(|e| CliError::Usage(e.to_string()))?
        .into_iter()
        .filter(|(name, _)| wants(name))
        .map(|(name, err)| (name.to_string(), err, OP_TOLERANCE))
        .collect();
    if op.is_empty() || op == "end_to_end" || op.starts_with("end_to_end/") {
        for (name, check) in composed_suite(eps)? {
            let name = format!("end_to_end/{name}");
            if wants(&name) || op == "end_to_end" {
                rows.push((name, check.max_rel_error, COMPOSED_TOLERANCE));
            }
        }
    }
    if rows.is_empty() {
        return Err(CliError::Usage(format!("no gradient check named `{op}`")));
    }
    let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(2).max(2);
    let mut lines = vec![format!("{:<width$}  {:>12}  {:>9}  result", "op", "max_rel_err", "tolerance")];
    let mut failed = Vec::new();
    for (name, err, tol) in &rows {
        let ok = *err < *tol;
        if !ok {
            failed.push(name.clone());
        }
        lines.push(format!(
            "{name:<width$}  {err:>12.3e}  {tol:>9.0e}  {}",
            if ok { "pass" } else { "FAIL" }
        ));
    }
    if failed.is_empty() {
        lines.push(format!("all {} checks passed", rows.len()));
        Ok(lines)
    } else {
        lines.push(format!("{} of {} checks failed: {}", failed.len(), rows.len(), failed.join(", ")));
        Err(CliError::GradCheck(lines.join("\n")))
    }
}
