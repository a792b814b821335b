//! Behaviour shared by the trained classifiers.

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Dimension, LabelVector};
use crate::error::Result;
use crate::pipeline::{Pipeline, PipelineFingerprint};

/// The two classifier families compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Rf,
    Transformer,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Rf => "rf",
            ModelKind::Transformer => "transformer",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ModelKind::Rf => "RF",
            ModelKind::Transformer => "Transformer",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rf" | "baseline" => Ok(ModelKind::Rf),
            "transformer" | "tx" | "bert" => Ok(ModelKind::Transformer),
            _ => Err(crate::Error::Invalid(format!(
                "unknown model kind `{s}` (expected rf or transformer)"
            ))),
        }
    }
}

/// Per-dimension scores in canonical order and the thresholded labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub scores: [f64; 4],
    pub labels: LabelVector,
}

impl Prediction {
    pub fn from_scores(scores: [f64; 4], thresholds: [f64; 4]) -> Self {
        let mut labels = LabelVector::NONE;
        for d in Dimension::ALL {
            labels.set(d, scores[d.index()] >= thresholds[d.index()]);
        }
        Prediction { scores, labels }
    }
}

pub trait Classifier {
    /// Preparation the model was trained behind, when known.
    fn pipeline(&self) -> Option<&Pipeline>;

    /// Decision threshold per dimension.
    fn thresholds(&self) -> [f64; 4];

    /// Scores texts that are already prepared. No fingerprint check.
    fn score_prepared(&self, texts: &[&str]) -> Vec<[f64; 4]>;

    fn fingerprint(&self) -> Option<PipelineFingerprint> {
        self.pipeline().map(Pipeline::fingerprint)
    }

    /// Predicts one prepared text, refusing text prepared differently from
    /// the training data.
    fn predict_prepared(&self, text: &str, prepared_with: &PipelineFingerprint) -> Result<Prediction> {
        if let Some(fp) = self.fingerprint() {
            fp.ensure_matches(prepared_with)?;
        }
        Ok(self.predict_unchecked(text))
    }

    fn predict_unchecked(&self, text: &str) -> Prediction {
        Prediction::from_scores(self.score_prepared(&[text])[0], self.thresholds())
    }

    /// Runs the model's own preparation before predicting.
    fn predict_raw(&self, raw: &str) -> Prediction {
        match self.pipeline() {
            Some(p) => self.predict_unchecked(&p.prepare(raw)),
            None => self.predict_unchecked(raw),
        }
    }

    /// Brings the corpus to the model's preparation stage, then predicts
    /// every message in order.
    fn predict_corpus(&self, corpus: &Corpus) -> Result<Vec<Prediction>> {
        let adapted;
        let corpus = match self.pipeline() {
            Some(p) => {
                adapted = p.adapt(corpus)?;
                &adapted
            }
            None => corpus,
        };
        let texts: Vec<&str> = corpus.messages.iter().map(|m| m.text.as_str()).collect();
        let t = self.thresholds();
        Ok(self
            .score_prepared(&texts)
            .into_iter()
            .map(|s| Prediction::from_scores(s, t))
            .collect())
    }
}

/// A trained model loaded from its artifact directory.
#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum ModelArtifact {
    Rf(crate::baseline::BaselineModel),
    Transformer(crate::transformer::TransformerModel),
}

impl ModelArtifact {
    /// Dispatches on the `model` key of the artifact's `config.json`.
    pub fn load(dir: &std::path::Path) -> Result<ModelArtifact> {
        let path = dir.join("config.json");
        let text = std::fs::read_to_string(&path).map_err(|e| crate::Error::io(&path, e))?;
        let v: serde_json::Value = serde_json::from_str(&text)?;
        match v.get("model").and_then(|m| m.as_str()) {
            Some("rf") => Ok(ModelArtifact::Rf(crate::baseline::BaselineModel::load(dir)?)),
            Some("transformer") => Ok(ModelArtifact::Transformer(crate::transformer::TransformerModel::load(
                dir,
            )?)),
            _ => Err(crate::Error::Invalid(format!(
                "{}: not a model artifact (config.json lacks a known `model`)",
                dir.display()
            ))),
        }
    }

    pub fn save(&self, dir: &std::path::Path) -> Result<()> {
        match self {
            ModelArtifact::Rf(m) => m.save(dir),
            ModelArtifact::Transformer(m) => m.save(dir),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            ModelArtifact::Rf(_) => ModelKind::Rf,
            ModelArtifact::Transformer(_) => ModelKind::Transformer,
        }
    }

    pub fn classifier(&self) -> &dyn Classifier {
        match self {
            ModelArtifact::Rf(m) => m,
            ModelArtifact::Transformer(m) => m,
        }
    }

    pub fn features_on(&self) -> bool {
        self.classifier().pipeline().is_some_and(Pipeline::features_on)
    }

    pub fn seed(&self) -> u64 {
        match self {
            ModelArtifact::Rf(m) => m.config.seed,
            ModelArtifact::Transformer(m) => m.config.seed,
        }
    }
}
