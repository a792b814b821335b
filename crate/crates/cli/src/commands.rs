use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde_json::{json, Value};
use teamdims::baseline::train_baseline;
use teamdims::corpus::{
    agreement_report, generate_synthetic_corpus, load_corpus, save_corpus, split_corpus, with_second_annotator, Corpus,
    CorpusFormat, Dimension, LabelVector, SynthSpec,
};
use teamdims::evaluation::{compare, evaluate_model, unseen_agreement, GridEntry, Provenance};
use teamdims::features::{featurize_corpus, FeatureRules, LexiconTagger};
use teamdims::model::{ModelArtifact, Prediction};
use teamdims::pipeline::{record_rules, strip_features, Pipeline, PipelineFingerprint};
use teamdims::preprocess::{preprocess_corpus, Lexicon};
use teamdims::transformer::train_transformer_with;

use crate::config::ProjectConfig;
use crate::manifest::{hash_path, sha256_hex, DirLock, RunManifest, MANIFEST_FILE};
use crate::{
    AgreementArgs, Cli, Command, CompareArgs, EvaluateArgs, FeaturizeArgs, ModelChoice, PredictArgs, PreprocessArgs,
    SplitArgs, SynthArgs, TrainArgs,
};

/// Marks failures that are not the caller's fault (exit status 2).
#[derive(Debug)]
pub struct Internal(pub String);

impl std::fmt::Display for Internal {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Internal {}

/// Writes to stdout; a closed pipe (`| head`) is not an error.
fn out(text: &str) -> Result<()> {
    let mut stdout = std::io::stdout().lock();
    match stdout.write_all(text.as_bytes()).and_then(|_| stdout.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(internal(e)),
        _ => Ok(()),
    }
}

fn internal(e: impl std::fmt::Display) -> anyhow::Error {
    anyhow!(Internal(e.to_string()))
}

pub fn exit_code(e: &anyhow::Error) -> u8 {
    if e.chain().any(|c| c.is::<Internal>()) {
        2
    } else {
        1
    }
}

struct Ctx<'a> {
    cli: &'a Cli,
    cfg: ProjectConfig,
}

impl Ctx<'_> {
    fn emit(&self, summary: &Value, human: impl FnOnce() -> String) -> Result<()> {
        if self.cli.json {
            out(&format!("{}\n", serde_json::to_string_pretty(summary)?))
        } else if !self.cli.quiet {
            out(&format!("{}\n", human()))
        } else {
            Ok(())
        }
    }

    fn progress(&self, msg: impl FnOnce() -> String) {
        if self.cli.verbose {
            eprintln!("{}", msg());
        }
    }

    fn manifest(&self) -> RunManifest {
        RunManifest::new(self.cfg.hash())
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => ProjectConfig::load(p)?,
        None => ProjectConfig::default(),
    };
    let ctx = Ctx { cli, cfg };
    match &cli.command {
        Command::Preprocess(a) => preprocess(&ctx, a),
        Command::Featurize(a) => featurize(&ctx, a),
        Command::Split(a) => split(&ctx, a),
        Command::Train(a) => train(&ctx, a),
        Command::Evaluate(a) => evaluate(&ctx, a),
        Command::Compare(a) => compare_cmd(&ctx, a),
        Command::Predict(a) => predict(&ctx, a),
        Command::Agreement(a) => agreement(&ctx, a),
        Command::Synth(a) => synth(&ctx, a),
    }
}

fn read_corpus(path: &Path) -> Result<Corpus> {
    load_corpus(path, CorpusFormat::from_path(path)).with_context(|| format!("cannot load corpus {}", path.display()))
}

fn absolute(p: &Path) -> PathBuf {
    fs::canonicalize(p).unwrap_or_else(|_| {
        std::env::current_dir()
            .map(|d| d.join(p))
            .unwrap_or_else(|_| p.to_path_buf())
    })
}

fn ensure_not_input(out: &Path, inputs: &[&Path]) -> Result<()> {
    let o = absolute(out);
    for i in inputs {
        if absolute(i) == o {
            bail!("output {} would overwrite an input file", out.display());
        }
    }
    Ok(())
}

/// Writes a corpus and records it (and its metadata sidecar) as output.
fn write_corpus(corpus: &Corpus, path: &Path, manifest: &mut RunManifest) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(internal)?;
    }
    save_corpus(corpus, path, CorpusFormat::from_path(path)).map_err(internal)?;
    manifest.output(path)?;
    let meta = teamdims::corpus::meta_path(path);
    if meta.exists() {
        manifest.output(&meta)?;
    }
    Ok(())
}

fn corpus_input(manifest: &mut RunManifest, path: &Path) -> Result<()> {
    manifest.input(path)?;
    let meta = teamdims::corpus::meta_path(path);
    if meta.exists() {
        manifest.input(&meta)?;
    }
    Ok(())
}

fn write_manifest(m: &RunManifest, output: &Path) -> Result<()> {
    m.write_for(output).map_err(internal)?;
    Ok(())
}

fn preprocess(ctx: &Ctx, a: &PreprocessArgs) -> Result<()> {
    let input = a
        .input
        .clone()
        .or_else(|| ctx.cfg.paths.corpus.clone())
        .ok_or_else(|| anyhow!("--in is required (or set paths.corpus in the config)"))?;
    ensure_not_input(&a.out, &[&input])?;
    let mut m = ctx.manifest();
    let lex_path = a.lexicon.clone().or_else(|| ctx.cfg.paths.lexicon.clone());
    let mut lexicon = match &lex_path {
        Some(p) => {
            m.input(p)?;
            Lexicon::load(p)?
        }
        None => Lexicon::default_pack(),
    };
    if let Some(p) = a.roster.clone().or_else(|| ctx.cfg.paths.roster.clone()) {
        m.input(&p)?;
        lexicon = lexicon.with_roster(Lexicon::load_roster(&p)?);
    }
    let corpus = read_corpus(&input)?;
    corpus_input(&mut m, &input)?;
    let out = preprocess_corpus(&corpus, &lexicon);
    write_corpus(&out, &a.out, &mut m)?;
    write_manifest(&m, &a.out)?;
    let fp = lexicon.fingerprint();
    ctx.emit(
        &json!({"command": "preprocess", "messages": out.len(), "out": a.out, "lexicon_fingerprint": fp}),
        || {
            format!(
                "pre-processed {} messages -> {} (lexicon {})",
                out.len(),
                a.out.display(),
                &fp[..12]
            )
        },
    )?;
    Ok(())
}

fn featurize(ctx: &Ctx, a: &FeaturizeArgs) -> Result<()> {
    ensure_not_input(&a.out, &[&a.input])?;
    let mut m = ctx.manifest();
    let corpus = read_corpus(&a.input)?;
    corpus_input(&mut m, &a.input)?;
    if PipelineFingerprint::from_meta(&corpus.meta).is_none() {
        bail!(
            "{} has not been pre-processed; run `teamdims preprocess` first",
            a.input.display()
        );
    }
    let rules = match a.rules.clone().or_else(|| ctx.cfg.paths.feature_rules.clone()) {
        Some(p) => {
            m.input(&p)?;
            FeatureRules::load(&p)?
        }
        None => FeatureRules::default_pack(),
    };
    let out = record_rules(
        featurize_corpus(&strip_features(&corpus), &rules, &LexiconTagger),
        &rules,
    );
    let counts: BTreeMap<String, usize> = teamdims::features::FeatureName::ALL
        .iter()
        .map(|f| {
            (
                f.code().to_string(),
                out.messages
                    .iter()
                    .filter(|x| x.features.is_some_and(|v| v.get(*f)))
                    .count(),
            )
        })
        .collect();
    write_corpus(&out, &a.out, &mut m)?;
    write_manifest(&m, &a.out)?;
    ctx.emit(
        &json!({"command": "featurize", "messages": out.len(), "out": a.out, "feature_counts": counts}),
        || {
            let parts: Vec<String> = counts.iter().map(|(k, v)| format!("{k}={v}")).collect();
            format!(
                "featurized {} messages -> {} ({})",
                out.len(),
                a.out.display(),
                parts.join(" ")
            )
        },
    )?;
    Ok(())
}

fn split(ctx: &Ctx, a: &SplitArgs) -> Result<()> {
    let input = a
        .input
        .clone()
        .or_else(|| ctx.cfg.paths.corpus.clone())
        .ok_or_else(|| anyhow!("--in is required (or set paths.corpus in the config)"))?;
    let mut spec = ctx.cfg.split;
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    if let Some(r) = &a.ratios {
        spec.ratios = [r[0], r[1], r[2]];
    }
    if let Some(u) = &a.unit {
        spec.unit = u.parse()?;
    }
    let mut m = ctx.manifest();
    let corpus = read_corpus(&input)?;
    corpus_input(&mut m, &input)?;
    let (train, val, test) = split_corpus(&corpus, &spec)?;
    let dir = a
        .out_dir
        .clone()
        .unwrap_or_else(|| input.parent().map(Path::to_path_buf).unwrap_or_default());
    let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("corpus");
    let ext = input.extension().and_then(|s| s.to_str()).unwrap_or("jsonl");
    let mut paths = BTreeMap::new();
    for (name, part) in [("train", &train), ("val", &val), ("test", &test)] {
        let p = dir.join(format!("{stem}.{name}.{ext}"));
        ensure_not_input(&p, &[&input])?;
        write_corpus(part, &p, &mut m)?;
        paths.insert(name, (p, part.len()));
    }
    write_manifest(&m, &dir.join(format!("{stem}.split")))?;
    let summary = json!({
        "command": "split",
        "seed": spec.seed,
        "ratios": spec.ratios,
        "sizes": {"train": train.len(), "val": val.len(), "test": test.len()},
        "files": paths.iter().map(|(k, (p, _))| (k.to_string(), json!(p))).collect::<serde_json::Map<_, _>>(),
    });
    ctx.emit(&summary, || {
        paths
            .iter()
            .map(|(k, (p, n))| format!("{k}: {n} messages -> {}", p.display()))
            .collect::<Vec<_>>()
            .join("\n")
    })?;
    Ok(())
}

const ARTIFACT_FILES: &[&str] = &[
    "config.json",
    "tfidf.json",
    "forest_COD.json",
    "forest_MPM.json",
    "forest_CCF.json",
    "forest_TES.json",
    "head.json",
    "training_log.jsonl",
    "lexicon.tsv",
    "features.tsv",
    "pipeline_fingerprint.json",
    MANIFEST_FILE,
];

fn clear_artifact(dir: &Path) -> Result<()> {
    for f in ARTIFACT_FILES {
        let p = dir.join(f);
        if p.exists() {
            fs::remove_file(&p).map_err(internal)?;
        }
    }
    let enc = dir.join("encoder");
    if enc.is_dir() {
        fs::remove_dir_all(&enc).map_err(internal)?;
    }
    Ok(())
}

fn train(ctx: &Ctx, a: &TrainArgs) -> Result<()> {
    let mut m = ctx.manifest();
    let train_raw = read_corpus(&a.input)?;
    corpus_input(&mut m, &a.input)?;
    let val_raw = match &a.val {
        Some(p) => {
            corpus_input(&mut m, p)?;
            Some(read_corpus(p)?)
        }
        None => None,
    };
    let features = a.features.or(ctx.cfg.features).map(|f| f.is_on());
    let rules = match a.rules.clone().or_else(|| ctx.cfg.paths.feature_rules.clone()) {
        Some(p) if features == Some(true) => {
            m.input(&p)?;
            Some(FeatureRules::load(&p)?)
        }
        _ => None,
    };
    let pipeline = Pipeline::from_corpus(&train_raw, features, rules)
        .with_context(|| format!("{} cannot be used for training", a.input.display()))?;
    let train_c = pipeline.adapt(&train_raw)?;
    let val_c = val_raw
        .as_ref()
        .map(|v| pipeline.adapt(v))
        .transpose()
        .context("validation split")?;

    let _lock = DirLock::acquire(&a.out)?;
    clear_artifact(&a.out)?;
    let (artifact, details) = match a.model {
        ModelChoice::Rf => {
            let mut c = ctx.cfg.baseline.clone();
            c.seed = a.seed.unwrap_or(c.seed);
            c.n_trees = a.n_trees.unwrap_or(c.n_trees);
            c.max_depth = a.max_depth.or(c.max_depth);
            c.min_leaf = a.min_leaf.unwrap_or(c.min_leaf);
            c.threshold = a.threshold.unwrap_or(c.threshold);
            m.config_hash = sha256_hex(serde_json::to_string(&c)?.as_bytes());
            ctx.progress(|| {
                format!(
                    "training {} trees per dimension on {} messages",
                    c.n_trees,
                    train_c.len()
                )
            });
            let model = train_baseline(&train_c, &c)?;
            let constant = model.constant_dimensions();
            (
                ModelArtifact::Rf(model),
                json!({"baseline": c, "constant_dimensions": constant}),
            )
        }
        ModelChoice::Transformer => {
            let val_c = val_c.ok_or_else(|| anyhow!("--val is required for the transformer (early stopping)"))?;
            let mut spec = ctx.cfg.transformer.encoder.clone();
            if let Some(e) = &a.encoder {
                spec.encoder_id = e.clone();
            }
            spec.max_seq_len = a.max_seq_len.unwrap_or(spec.max_seq_len);
            let mut c = ctx.cfg.transformer.train.clone();
            c.seed = a.seed.unwrap_or(c.seed);
            c.peak_lr = a.lr.unwrap_or(c.peak_lr);
            c.max_epochs = a.epochs.unwrap_or(c.max_epochs);
            c.batch_size = a.batch_size.unwrap_or(c.batch_size);
            c.early_stop_patience = a.patience.unwrap_or(c.early_stop_patience);
            c.threshold = a.threshold.unwrap_or(c.threshold);
            c.tune_thresholds |= a.tune_thresholds;
            m.config_hash = sha256_hex(serde_json::to_string(&(&spec, &c, a.offline))?.as_bytes());
            let model = train_transformer_with(&train_c, &val_c, &spec, &c, &mut |e| {
                ctx.progress(|| {
                    format!(
                        "epoch {:>3} step {:>5} lr {:.3e} train_loss {:.4} val_loss {:.4} val_macro_f1 {:.3}",
                        e.epoch,
                        e.step,
                        e.learning_rate,
                        e.train_loss,
                        e.val_loss.unwrap_or(f64::NAN),
                        e.val_macro_f1.unwrap_or(f64::NAN)
                    )
                })
            })?;
            let d = json!({
                "encoder": model.spec,
                "train": c,
                "epochs_run": model.log.epochs_run,
                "best_epoch": model.log.best_epoch,
                "stopped_early": model.log.stopped_early,
                "thresholds": model.thresholds,
            });
            (ModelArtifact::Transformer(model), d)
        }
    };
    artifact.save(&a.out).map_err(internal)?;
    m.output(&a.out)?;
    write_manifest(&m, &a.out)?;
    let fp = artifact.classifier().fingerprint();
    let summary = json!({
        "command": "train",
        "model": artifact.kind(),
        "features": artifact.features_on(),
        "out": a.out,
        "train_messages": train_c.len(),
        "pipeline_fingerprint": fp,
        "details": details,
    });
    ctx.emit(&summary, || {
        format!(
            "trained {} (features {}) on {} messages -> {}",
            artifact.kind(),
            if artifact.features_on() { "on" } else { "off" },
            train_c.len(),
            a.out.display()
        )
    })?;
    Ok(())
}

fn load_artifact(dir: &Path) -> Result<ModelArtifact> {
    ModelArtifact::load(dir).with_context(|| format!("cannot load model artifact {}", dir.display()))
}

fn artifact_provenance(dir: &Path, art: &ModelArtifact) -> Provenance {
    let mut p = Provenance::new();
    p.insert("artifact".into(), json!(dir));
    p.insert("model".into(), json!(art.kind()));
    p.insert("features".into(), json!(art.features_on()));
    p.insert("seed".into(), json!(art.seed()));
    p.insert("pipeline_fingerprint".into(), json!(art.classifier().fingerprint()));
    if let Ok(text) = fs::read_to_string(dir.join(MANIFEST_FILE)) {
        if let Ok(v) = serde_json::from_str::<Value>(&text) {
            p.insert("training_inputs".into(), v["inputs"].clone());
            p.insert("training_config_hash".into(), v["config_hash"].clone());
        }
    }
    p
}

fn test_provenance(path: &Path, corpus: &Corpus) -> Result<Provenance> {
    let mut p = Provenance::new();
    p.insert("test".into(), json!(path));
    p.insert("test_sha256".into(), json!(hash_path(path)?.into_values().next()));
    p.insert("n_test".into(), json!(corpus.len()));
    let split: BTreeMap<&String, &String> = corpus.meta.iter().filter(|(k, _)| k.starts_with("split.")).collect();
    p.insert("split".into(), json!(split));
    Ok(p)
}

fn write_json_output(ctx: &Ctx, path: &Path, value: &Value, inputs: &[&Path]) -> Result<()> {
    ensure_not_input(path, inputs)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(internal)?;
    }
    fs::write(path, serde_json::to_string_pretty(value)?).map_err(internal)?;
    let mut m = ctx.manifest();
    for i in inputs {
        m.input(i)?;
    }
    m.output(path)?;
    write_manifest(&m, path)
}

fn metrics_line(r: &teamdims::evaluation::MetricsReport) -> String {
    format!(
        "macro P {:.3}  R {:.3}  F1 {:.3}  Hamming {:.3}",
        r.macro_precision, r.macro_recall, r.macro_f1, r.hamming_loss
    )
}

fn evaluate(ctx: &Ctx, a: &EvaluateArgs) -> Result<()> {
    let art = load_artifact(&a.model)?;
    let test = read_corpus(&a.test)?;
    let mut prov = artifact_provenance(&a.model, &art);
    prov.extend(test_provenance(&a.test, &test)?);
    let report = evaluate_model(art.classifier(), &test, prov)?;
    let value = serde_json::to_value(&report)?;
    if let Some(out) = &a.out {
        write_json_output(ctx, out, &value, &[&a.test])?;
    }
    ctx.emit(&value, || {
        let mut s = format!(
            "{} on {} messages: {}\n",
            art.kind(),
            test.len(),
            metrics_line(&report.metrics)
        );
        for d in Dimension::ALL {
            let x = report.metrics.dimension(d);
            s.push_str(&format!(
                "  {d}: P {:.3} R {:.3} F1 {:.3}{}\n",
                x.precision,
                x.recall,
                x.f1,
                if x.degenerate { " (0/0)" } else { "" }
            ));
        }
        s.push_str(&format!("pooled kappa {:.3}", report.kappa_pooled));
        s
    })?;
    Ok(())
}

fn compare_cmd(ctx: &Ctx, a: &CompareArgs) -> Result<()> {
    let root = ctx.cfg.paths.artifact_root.clone();
    let dirs: Vec<PathBuf> = a
        .grid
        .iter()
        .map(|p| match &root {
            Some(r) if !p.exists() && p.is_relative() => r.join(p),
            _ => p.clone(),
        })
        .collect();
    let arts = dirs.iter().map(|d| load_artifact(d)).collect::<Result<Vec<_>>>()?;
    let test = read_corpus(&a.test)?;
    let entries = arts
        .iter()
        .zip(&dirs)
        .map(|(art, d)| GridEntry {
            model: art.kind(),
            features: art.features_on(),
            classifier: art.classifier(),
            provenance: artifact_provenance(d, art),
        })
        .collect();
    let report = compare(entries, &test, test_provenance(&a.test, &test)?)?;
    let table = report.render();
    let mut value = serde_json::to_value(&report)?;
    value["table"] = json!(table);
    if let Some(out) = &a.out {
        write_json_output(ctx, out, &value, &[&a.test])?;
        fs::write(out.with_extension("txt"), &table).map_err(internal)?;
    }
    ctx.emit(&value, || table.trim_end().to_string())?;
    Ok(())
}

fn prediction_json(p: &Prediction) -> Value {
    let scores: serde_json::Map<String, Value> = Dimension::ALL
        .iter()
        .map(|d| (d.code().to_string(), json!(p.scores[d.index()])))
        .collect();
    json!({"scores": scores, "labels": p.labels})
}

fn predict(ctx: &Ctx, a: &PredictArgs) -> Result<()> {
    let art = load_artifact(&a.model)?;
    let clf = art.classifier();
    if let Some(text) = &a.text {
        let prepared = clf.pipeline().map_or_else(|| text.clone(), |p| p.prepare(text));
        let p = clf.predict_unchecked(&prepared);
        let mut v = prediction_json(&p);
        v["text"] = json!(text);
        v["prepared"] = json!(prepared);
        v["model"] = json!(art.kind());
        if !ctx.cli.quiet || ctx.cli.json {
            out(&format!("{}\n", serde_json::to_string_pretty(&v)?))?;
        }
        return Ok(());
    }
    let input = a.input.as_ref().expect("clap enforces --text or --in");
    let corpus = read_corpus(input)?;
    let preds = clf.predict_corpus(&corpus)?;
    let mut lines = String::new();
    for (msg, p) in corpus.messages.iter().zip(&preds) {
        let mut v = prediction_json(p);
        v["id"] = json!(msg.id);
        lines.push_str(&serde_json::to_string(&v)?);
        lines.push('\n');
    }
    match &a.out {
        Some(out) => {
            ensure_not_input(out, &[input])?;
            fs::write(out, &lines).map_err(internal)?;
            let mut m = ctx.manifest();
            corpus_input(&mut m, input)?;
            m.output(out)?;
            write_manifest(&m, out)?;
            ctx.emit(
                &json!({"command": "predict", "messages": preds.len(), "out": out}),
                || format!("predicted {} messages -> {}", preds.len(), out.display()),
            )?;
        }
        None => {
            out(&lines)?;
        }
    }
    Ok(())
}

fn kappa_map(m: &BTreeMap<Dimension, f64>) -> Value {
    json!(m
        .iter()
        .map(|(d, k)| (d.code().to_string(), json!(k)))
        .collect::<serde_json::Map<_, _>>())
}

fn agreement(ctx: &Ctx, a: &AgreementArgs) -> Result<()> {
    let corpus = read_corpus(&a.unseen)?;
    let value = match &a.model {
        Some(dir) => {
            let art = load_artifact(dir)?;
            let mut prov = artifact_provenance(dir, &art);
            prov.extend(test_provenance(&a.unseen, &corpus)?);
            let u = unseen_agreement(art.classifier(), &corpus, prov)?;
            json!({
                "mode": "model",
                "n_messages": corpus.len(),
                "kappa_pooled": u.kappa_pooled,
                "kappa_per_dimension": kappa_map(&u.kappa_per_dimension),
                "metrics": u.metrics,
                "provenance": u.provenance,
            })
        }
        None => {
            if corpus.messages.iter().any(|m| m.labels_b.is_none()) {
                bail!(
                    "{} lacks a second label set (COD_b..TES_b); pass --model to score a model instead",
                    a.unseen.display()
                );
            }
            let r = agreement_report(&corpus)?;
            let per: BTreeMap<Dimension, f64> = r.kappa_per_dimension.iter().map(|(d, s)| (*d, s.kappa)).collect();
            let golds: Vec<LabelVector> = corpus.labels();
            let seconds: Vec<LabelVector> = corpus.messages.iter().filter_map(|m| m.labels_b).collect();
            let metrics = teamdims::evaluation::evaluate(&seconds, &golds)?;
            json!({
                "mode": "annotators",
                "n_messages": r.n_messages,
                "kappa_pooled": r.kappa_pooled.kappa,
                "kappa_pooled_detail": r.kappa_pooled,
                "kappa_mean": r.kappa_mean(),
                "kappa_per_dimension": kappa_map(&per),
                "metrics": metrics,
            })
        }
    };
    if let Some(out) = &a.out {
        write_json_output(ctx, out, &value, &[&a.unseen])?;
    }
    ctx.emit(&value, || {
        let per: Vec<String> = Dimension::ALL
            .iter()
            .map(|d| {
                format!(
                    "{d} {:.3}",
                    value["kappa_per_dimension"][d.code()].as_f64().unwrap_or(f64::NAN)
                )
            })
            .collect();
        format!(
            "{} messages: pooled kappa {:.3} ({})",
            value["n_messages"],
            value["kappa_pooled"].as_f64().unwrap_or(f64::NAN),
            per.join(", ")
        )
    })?;
    Ok(())
}

fn synth(ctx: &Ctx, a: &SynthArgs) -> Result<()> {
    let spec = SynthSpec::parse(&a.spec)?;
    let mut corpus = generate_synthetic_corpus(&spec, a.seed);
    if let Some(p) = a.flip_b {
        if !(0.0..=1.0).contains(&p) {
            bail!("--flip-b must be a probability, got {p}");
        }
        corpus = with_second_annotator(&corpus, p, a.seed.wrapping_add(1));
    }
    let mut m = ctx.manifest();
    write_corpus(&corpus, &a.out, &mut m)?;
    write_manifest(&m, &a.out)?;
    ctx.emit(
        &json!({"command": "synth", "messages": corpus.len(), "seed": a.seed, "out": a.out}),
        || format!("generated {} messages -> {}", corpus.len(), a.out.display()),
    )?;
    Ok(())
}
