//! Multilabel classifier on a BERT-style encoder: first-token pooled output,
//! a 4-way linear head, sigmoid outputs and binary cross-entropy.
//!
//! The encoder runs in f64 with a hand-written backward pass. It is either
//! loaded from a local checkpoint directory (`config.json`, `vocab.txt`,
//! `model.safetensors`) or built fresh as the small `tiny-random` encoder.

pub mod checkpoint;
pub mod encoder;
pub mod optim;
pub mod tokenizer;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Dimension, LabelVector};
use crate::error::{Error, Result};
use crate::evaluation::evaluate;
use crate::model::{Classifier, Prediction};
use crate::pipeline::{Pipeline, PipelineFingerprint, LEXICON_TSV_KEY};

pub use encoder::{BertConfig, Encoder, Network, Params};
pub use optim::{AdamW, AdamWConfig, LinearSchedule};
pub use tokenizer::WordPiece;

/// Encoder id for a small encoder initialized from scratch, with a
/// vocabulary built from the training texts.
pub const TINY_RANDOM: &str = "tiny-random";
/// Directory searched for named checkpoints.
pub const CACHE_ENV: &str = "TEAMDIMS_CACHE";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderSpec {
    pub encoder_id: String,
    pub max_seq_len: usize,
    /// Filled in from the checkpoint; 0 before resolution.
    #[serde(default)]
    pub hidden_size: usize,
}

impl Default for EncoderSpec {
    fn default() -> Self {
        EncoderSpec {
            encoder_id: TINY_RANDOM.into(),
            max_seq_len: 200,
            hidden_size: 0,
        }
    }
}

impl EncoderSpec {
    pub fn new(encoder_id: impl Into<String>) -> Self {
        EncoderSpec {
            encoder_id: encoder_id.into(),
            ..Default::default()
        }
    }
}

pub fn tiny_random_config(vocab_size: usize) -> BertConfig {
    BertConfig {
        vocab_size,
        hidden_size: 64,
        num_hidden_layers: 2,
        num_attention_heads: 4,
        intermediate_size: 128,
        max_position_embeddings: 256,
        type_vocab_size: 2,
        layer_norm_eps: 1e-12,
        hidden_act: "gelu".into(),
        model_type: "bert".into(),
    }
}

/// Finds a checkpoint directory for `encoder_id`: the id itself as a path,
/// then `$TEAMDIMS_CACHE/<id>`. Nothing is downloaded.
pub fn locate_checkpoint(encoder_id: &str) -> Result<PathBuf> {
    let direct = PathBuf::from(encoder_id);
    if direct.join(checkpoint::CONFIG_FILE).is_file() {
        return Ok(direct);
    }
    if let Some(cache) = std::env::var_os(CACHE_ENV) {
        let cached = PathBuf::from(cache).join(encoder_id);
        if cached.join(checkpoint::CONFIG_FILE).is_file() {
            return Ok(cached);
        }
    }
    Err(Error::Checkpoint(format!(
        "encoder `{encoder_id}` not found: expected a directory with config.json, vocab.txt and model.safetensors \
         at that path or under ${CACHE_ENV}/{encoder_id}; checkpoints are never downloaded (use `{TINY_RANDOM}` for a \
         from-scratch encoder)"
    )))
}

/// Builds or loads the encoder named by `spec` and fills in its hidden size.
pub fn resolve_encoder<S: AsRef<str>>(
    spec: &mut EncoderSpec,
    train_texts: &[S],
    rng: &mut ChaCha8Rng,
) -> Result<(Encoder, WordPiece)> {
    let (encoder, tokenizer) = if spec.encoder_id == TINY_RANDOM {
        let tokenizer = WordPiece::build(train_texts, 1, 8000);
        let encoder = Encoder::init(tiny_random_config(tokenizer.vocab_size()), rng);
        (encoder, tokenizer)
    } else {
        checkpoint::load_encoder(&locate_checkpoint(&spec.encoder_id)?)?
    };
    let c = &encoder.config;
    if spec.max_seq_len < 2 || spec.max_seq_len > c.max_position_embeddings {
        return Err(Error::Invalid(format!(
            "max_seq_len {} must be between 2 and the encoder's {} positions",
            spec.max_seq_len, c.max_position_embeddings
        )));
    }
    if spec.hidden_size != 0 && spec.hidden_size != c.hidden_size {
        return Err(Error::Invalid(format!(
            "hidden size {} requested but encoder has {}",
            spec.hidden_size, c.hidden_size
        )));
    }
    spec.hidden_size = c.hidden_size;
    Ok((encoder, tokenizer))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    #[default]
    LinearDecay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub peak_lr: f64,
    /// Warmup length as a fraction of one epoch.
    pub warmup: f64,
    pub schedule: ScheduleKind,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub threshold: f64,
    pub early_stop_patience: usize,
    pub optimizer: AdamWConfig,
    /// Global gradient-norm clip; `None` disables clipping.
    pub max_grad_norm: Option<f64>,
    /// Choose a per-dimension threshold on the validation set instead of
    /// using `threshold` for all four.
    pub tune_thresholds: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            peak_lr: 2e-5,
            warmup: 1.0 / 3.0,
            schedule: ScheduleKind::LinearDecay,
            max_epochs: 100,
            batch_size: 32,
            seed: 0,
            threshold: 0.5,
            early_stop_patience: 5,
            optimizer: AdamWConfig::default(),
            max_grad_norm: Some(1.0),
            tune_thresholds: false,
        }
    }
}

impl TrainConfig {
    // negated comparisons so that NaN is rejected
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Invalid(m));
        if !(self.peak_lr > 0.0) {
            return bad(format!("peak_lr must be positive, got {}", self.peak_lr));
        }
        if !(self.warmup > 0.0 && self.warmup <= 1.0) {
            return bad(format!("warmup must be in (0, 1], got {}", self.warmup));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return bad("batch_size and max_epochs must be at least 1".into());
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return bad(format!("threshold {} not in (0, 1)", self.threshold));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLogEntry {
    pub epoch: usize,
    pub step: usize,
    pub learning_rate: f64,
    pub train_loss: f64,
    /// Set on the last step of each epoch.
    pub val_loss: Option<f64>,
    pub val_macro_f1: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub entries: Vec<TrainingLogEntry>,
    pub schedule: Option<LinearSchedule>,
    pub epochs_run: usize,
    /// Epoch whose weights were kept (lowest validation loss).
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl TrainingLog {
    /// Mean training loss of each epoch.
    pub fn epoch_train_loss(&self) -> Vec<f64> {
        (1..=self.epochs_run)
            .map(|e| {
                let xs: Vec<f64> = self
                    .entries
                    .iter()
                    .filter(|x| x.epoch == e)
                    .map(|x| x.train_loss)
                    .collect();
                xs.iter().sum::<f64>() / xs.len() as f64
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct TransformerModel {
    pub spec: EncoderSpec,
    pub config: TrainConfig,
    pub network: Network,
    pub tokenizer: WordPiece,
    pub thresholds: [f64; 4],
    pub pipeline: Option<Pipeline>,
    pub log: TrainingLog,
}

fn targets(l: &LabelVector) -> [f64; 4] {
    l.as_array().map(|b| if b { 1.0 } else { 0.0 })
}

fn pipeline_of(train: &Corpus, val: &Corpus) -> Result<Option<Pipeline>> {
    let (ft, fv) = (
        PipelineFingerprint::from_meta(&train.meta),
        PipelineFingerprint::from_meta(&val.meta),
    );
    if ft != fv {
        let show = |f: &Option<PipelineFingerprint>| f.as_ref().map_or("unprepared".to_string(), |f| f.to_string());
        return Err(Error::FingerprintMismatch {
            expected: show(&ft),
            found: show(&fv),
        });
    }
    if train.meta.contains_key(LEXICON_TSV_KEY) {
        Ok(Some(Pipeline::from_corpus(train, None, None)?))
    } else {
        Ok(None)
    }
}

/// Called after each epoch with the last log entry of that epoch.
pub type EpochObserver<'a> = dyn FnMut(&TrainingLogEntry) + 'a;

pub fn train_transformer(
    train: &Corpus,
    val: &Corpus,
    spec: &EncoderSpec,
    config: &TrainConfig,
) -> Result<TransformerModel> {
    train_transformer_with(train, val, spec, config, &mut |_| {})
}

/// Fine-tunes the whole network with AdamW under the warmup/decay schedule,
/// keeping the weights of the epoch with the lowest validation loss and
/// stopping after `early_stop_patience` epochs without improvement.
pub fn train_transformer_with(
    train: &Corpus,
    val: &Corpus,
    spec: &EncoderSpec,
    config: &TrainConfig,
    observe: &mut EpochObserver<'_>,
) -> Result<TransformerModel> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::Empty("training split"));
    }
    if val.is_empty() {
        return Err(Error::Empty("validation split"));
    }
    let pipeline = pipeline_of(train, val)?;
    let mut spec = spec.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (encoder, tokenizer) = resolve_encoder(&mut spec, &train.texts(), &mut rng)?;
    let mut net = Network::new(encoder, &mut rng);

    let encode = |c: &Corpus| -> Vec<(Vec<u32>, [f64; 4])> {
        c.messages
            .iter()
            .map(|m| (tokenizer.encode(&m.text, spec.max_seq_len), targets(&m.labels)))
            .collect()
    };
    let train_data = encode(train);
    let val_data = encode(val);
    let val_refs: Vec<(&[u32], [f64; 4])> = val_data.iter().map(|(i, y)| (i.as_slice(), *y)).collect();
    let val_golds = val.labels();

    let steps_per_epoch = train_data.len().div_ceil(config.batch_size);
    let schedule = LinearSchedule::from_epochs(config.peak_lr, config.warmup, steps_per_epoch, config.max_epochs);
    let mut opt = AdamW::new(config.optimizer, net.n_params());
    let mut grad = net.zeros_like();
    let mut log = TrainingLog {
        schedule: Some(schedule),
        ..Default::default()
    };
    let mut best: Option<(f64, Network)> = None;
    let mut since_best = 0usize;
    let mut order: Vec<usize> = (0..train_data.len()).collect();
    let mut step = 0usize;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            step += 1;
            grad.visit_mut("", &mut |_, v| v.fill(0.0));
            let batch: Vec<(&[u32], [f64; 4])> = chunk
                .iter()
                .map(|&i| (train_data[i].0.as_slice(), train_data[i].1))
                .collect();
            let loss = net.loss_and_grad(&batch, &mut grad, true);
            if let Some(max) = config.max_grad_norm {
                optim::clip_grad_norm(&mut grad, max);
            }
            let lr = schedule.lr(step);
            opt.step(&mut net, &grad, lr);
            log.entries.push(TrainingLogEntry {
                epoch,
                step,
                learning_rate: lr,
                train_loss: loss,
                val_loss: None,
                val_macro_f1: None,
            });
        }
        let val_loss = net.loss(&val_refs);
        let preds: Vec<LabelVector> = val_refs
            .iter()
            .map(|(ids, _)| Prediction::from_scores(net.probs(ids), [config.threshold; 4]).labels)
            .collect();
        let f1 = evaluate(&preds, &val_golds)?.macro_f1;
        let last = log.entries.last_mut().expect("every epoch has a step");
        last.val_loss = Some(val_loss);
        last.val_macro_f1 = Some(f1);
        observe(last);
        log.epochs_run = epoch;
        if best.as_ref().is_none_or(|(b, _)| val_loss < *b) {
            best = Some((val_loss, net.clone()));
            log.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.early_stop_patience {
                log.stopped_early = true;
                break;
            }
        }
    }
    let network = best.map(|(_, n)| n).unwrap_or(net);
    let thresholds = if config.tune_thresholds {
        let probs: Vec<[f64; 4]> = val_refs.iter().map(|(ids, _)| network.probs(ids)).collect();
        tune_thresholds(&probs, &val_golds)
    } else {
        [config.threshold; 4]
    };
    Ok(TransformerModel {
        spec,
        config: config.clone(),
        network,
        tokenizer,
        thresholds,
        pipeline,
        log,
    })
}

/// Per dimension, the threshold on a 0.05 grid with the best F1; ties go to
/// the value closest to 0.5.
pub fn tune_thresholds(probs: &[[f64; 4]], golds: &[LabelVector]) -> [f64; 4] {
    let grid: Vec<f64> = (1..20).map(|i| i as f64 * 0.05).collect();
    std::array::from_fn(|k| {
        let d = Dimension::ALL[k];
        let f1 = |t: f64| {
            let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
            for (p, g) in probs.iter().zip(golds) {
                match (p[k] >= t, g.get(d)) {
                    (true, true) => tp += 1.0,
                    (true, false) => fp += 1.0,
                    (false, true) => fn_ += 1.0,
                    _ => {}
                }
            }
            if tp == 0.0 {
                0.0
            } else {
                2.0 * tp / (2.0 * tp + fp + fn_)
            }
        };
        let mut best = (f1(0.5), 0.5);
        for &t in &grid {
            let v = f1(t);
            if v > best.0 || (v == best.0 && (t - 0.5).abs() < (best.1 - 0.5f64).abs()) {
                best = (v, t);
            }
        }
        best.1
    })
}

#[derive(Serialize, Deserialize)]
struct ArtifactConfig {
    model: String,
    encoder: EncoderSpec,
    train: TrainConfig,
    thresholds: [f64; 4],
    best_epoch: usize,
    epochs_run: usize,
    stopped_early: bool,
    schedule: Option<LinearSchedule>,
}

#[derive(Serialize, Deserialize)]
struct HeadFile {
    dimensions: Vec<Dimension>,
    weight: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

impl TransformerModel {
    pub fn encode(&self, text: &str) -> Vec<u32> {
        self.tokenizer.encode(text, self.spec.max_seq_len)
    }

    pub fn probs(&self, text: &str) -> [f64; 4] {
        self.network.probs(&self.encode(text))
    }

    /// Mean per-label BCE of the model on a prepared corpus.
    pub fn loss_on(&self, corpus: &Corpus) -> f64 {
        let data: Vec<(Vec<u32>, [f64; 4])> = corpus
            .messages
            .iter()
            .map(|m| (self.encode(&m.text), targets(&m.labels)))
            .collect();
        let refs: Vec<(&[u32], [f64; 4])> = data.iter().map(|(i, y)| (i.as_slice(), *y)).collect();
        self.network.loss(&refs)
    }

    /// Artifact layout: `encoder/` in the checkpoint format, `head.json`,
    /// `config.json`, `training_log.jsonl` and the pipeline files.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        checkpoint::save_encoder(&self.network.encoder, &self.tokenizer, &dir.join("encoder"))?;
        let write = |name: &str, body: String| {
            let path = dir.join(name);
            fs::write(&path, body).map_err(|e| Error::io(path, e))
        };
        let head = HeadFile {
            dimensions: Dimension::ALL.to_vec(),
            weight: self.network.head.w.rows().into_iter().map(|r| r.to_vec()).collect(),
            bias: self.network.head.b.to_vec(),
        };
        write("head.json", serde_json::to_string_pretty(&head)?)?;
        let cfg = ArtifactConfig {
            model: "transformer".into(),
            encoder: self.spec.clone(),
            train: self.config.clone(),
            thresholds: self.thresholds,
            best_epoch: self.log.best_epoch,
            epochs_run: self.log.epochs_run,
            stopped_early: self.log.stopped_early,
            schedule: self.log.schedule,
        };
        write("config.json", serde_json::to_string_pretty(&cfg)?)?;
        let log_path = dir.join("training_log.jsonl");
        let mut f = fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
        for e in &self.log.entries {
            writeln!(f, "{}", serde_json::to_string(e)?).map_err(|e| Error::io(&log_path, e))?;
        }
        if let Some(p) = &self.pipeline {
            p.save(dir)?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<TransformerModel> {
        let read = |name: &str| {
            let path = dir.join(name);
            fs::read_to_string(&path).map_err(|e| Error::io(path, e))
        };
        let cfg: ArtifactConfig = serde_json::from_str(&read("config.json")?)?;
        if cfg.model != "transformer" {
            return Err(Error::Invalid(format!("{}: not a transformer artifact", dir.display())));
        }
        let (encoder, tokenizer) = checkpoint::load_encoder(&dir.join("encoder"))?;
        let head: HeadFile = serde_json::from_str(&read("head.json")?)?;
        let h = encoder.config.hidden_size;
        if head.dimensions != Dimension::ALL
            || head.weight.len() != 4
            || head.weight.iter().any(|r| r.len() != h)
            || head.bias.len() != 4
        {
            return Err(Error::Checkpoint(format!(
                "{}: head.json must be 4 x {h} in COD, MPM, CCF, TES order",
                dir.display()
            )));
        }
        let w = ndarray::Array2::from_shape_vec((4, h), head.weight.concat()).expect("checked shape");
        let network = Network {
            encoder,
            head: encoder::Linear { w, b: head.bias.into() },
        };
        let entries = read("training_log.jsonl")?
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(Error::from))
            .collect::<Result<Vec<TrainingLogEntry>>>()?;
        let pipeline = if dir.join("pipeline_fingerprint.json").exists() {
            Some(Pipeline::load(dir)?)
        } else {
            None
        };
        let log = TrainingLog {
            entries,
            schedule: cfg.schedule,
            epochs_run: cfg.epochs_run,
            best_epoch: cfg.best_epoch,
            stopped_early: cfg.stopped_early,
        };
        Ok(TransformerModel {
            spec: cfg.encoder,
            config: cfg.train,
            network,
            tokenizer,
            thresholds: cfg.thresholds,
            pipeline,
            log,
        })
    }
}

impl Classifier for TransformerModel {
    fn pipeline(&self) -> Option<&Pipeline> {
        self.pipeline.as_ref()
    }

    fn thresholds(&self) -> [f64; 4] {
        self.thresholds
    }

    fn score_prepared(&self, texts: &[&str]) -> Vec<[f64; 4]> {
        texts.iter().map(|t| self.probs(t)).collect()
    }
}

pub fn predict_transformer(
    model: &TransformerModel,
    text: &str,
    prepared_with: &PipelineFingerprint,
) -> Result<Prediction> {
    model.predict_prepared(text, prepared_with)
}

/// Predicts a prepared corpus in batches of `batch_size`. Every sequence is
/// encoded on its own (no padding), so results do not depend on the batch
/// size.
pub fn batch_predict(model: &TransformerModel, corpus: &Corpus, batch_size: usize) -> Result<Vec<Prediction>> {
    if batch_size == 0 {
        return Err(Error::Invalid("batch_size must be at least 1".into()));
    }
    let adapted = match &model.pipeline {
        Some(p) => p.adapt(corpus)?,
        None => corpus.clone(),
    };
    let texts = adapted.texts();
    let mut out = Vec::with_capacity(texts.len());
    for chunk in texts.chunks(batch_size) {
        out.extend(
            model
                .score_prepared(chunk)
                .into_iter()
                .map(|s| Prediction::from_scores(s, model.thresholds)),
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
