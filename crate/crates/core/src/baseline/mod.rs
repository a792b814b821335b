//! TF-IDF vectors fed to one random forest per dimension.

mod forest;
mod tfidf;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use forest::{BinaryForest, Node, Tree, TreeParams};
pub use tfidf::{SparseVec, TfidfModel};

use crate::corpus::{Corpus, Dimension};
use crate::error::{Error, Result};
use crate::model::{Classifier, Prediction};
use crate::pipeline::{Pipeline, PipelineFingerprint, LEXICON_TSV_KEY};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    pub seed: u64,
    pub threshold: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            n_trees: 100,
            max_depth: None,
            min_leaf: 1,
            seed: 0,
            threshold: 0.5,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::Invalid("baseline: n_trees must be at least 1".into()));
        }
        if self.min_leaf == 0 {
            return Err(Error::Invalid("baseline: min_leaf must be at least 1".into()));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Invalid(format!(
                "baseline: threshold {} not in (0, 1)",
                self.threshold
            )));
        }
        Ok(())
    }

    fn params(&self) -> TreeParams {
        TreeParams {
            max_depth: self.max_depth,
            min_leaf: self.min_leaf,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BaselineModel {
    pub tfidf: TfidfModel,
    /// One forest per dimension in canonical order.
    pub forests: Vec<BinaryForest>,
    pub config: BaselineConfig,
    pub pipeline: Option<Pipeline>,
}

#[derive(Serialize, Deserialize)]
struct ArtifactConfig {
    model: String,
    baseline: BaselineConfig,
    constant_dimensions: Vec<Dimension>,
    n_features: usize,
    n_train: usize,
}

/// Trains the four forests on a shared TF-IDF matrix. Forest `d` only draws
/// from its own random stream, so each is reproducible in isolation.
pub fn train_baseline(train: &Corpus, config: &BaselineConfig) -> Result<BaselineModel> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::Empty("training corpus"));
    }
    let pipeline = if train.meta.contains_key(LEXICON_TSV_KEY) {
        Some(Pipeline::from_corpus(train, None, None)?)
    } else {
        None
    };
    let texts = train.texts();
    let tfidf = TfidfModel::fit(&texts)?;
    let rows: Vec<SparseVec> = texts.iter().map(|t| tfidf.transform(t)).collect();
    let forests = Dimension::ALL
        .iter()
        .map(|&d| train_dimension(&rows, train, d, tfidf.n_features(), config))
        .collect();
    Ok(BaselineModel {
        tfidf,
        forests,
        config: config.clone(),
        pipeline,
    })
}

/// Trains the forest of a single dimension.
pub fn train_dimension(
    rows: &[SparseVec],
    train: &Corpus,
    d: Dimension,
    n_features: usize,
    config: &BaselineConfig,
) -> BinaryForest {
    let labels: Vec<bool> = train.messages.iter().map(|m| m.labels.get(d)).collect();
    BinaryForest::train(
        rows,
        &labels,
        n_features,
        config.n_trees,
        config.params(),
        config.seed,
        d.index() as u64,
    )
}

impl BaselineModel {
    pub fn constant_dimensions(&self) -> Vec<Dimension> {
        Dimension::ALL
            .into_iter()
            .filter(|d| self.forests[d.index()].constant)
            .collect()
    }

    pub fn scores(&self, text: &str) -> [f64; 4] {
        let x = self.tfidf.transform(text);
        std::array::from_fn(|i| self.forests[i].score(&x))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let write_json = |name: &str, body: String| {
            let path = dir.join(name);
            fs::write(&path, body).map_err(|e| Error::io(path, e))
        };
        write_json("tfidf.json", serde_json::to_string(&self.tfidf)?)?;
        for d in Dimension::ALL {
            write_json(
                &format!("forest_{d}.json"),
                serde_json::to_string(&self.forests[d.index()])?,
            )?;
        }
        let cfg = ArtifactConfig {
            model: "rf".into(),
            baseline: self.config.clone(),
            constant_dimensions: self.constant_dimensions(),
            n_features: self.tfidf.n_features(),
            n_train: self.tfidf.doc_count,
        };
        write_json("config.json", serde_json::to_string_pretty(&cfg)?)?;
        if let Some(p) = &self.pipeline {
            p.save(dir)?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<BaselineModel> {
        let read = |name: &str| {
            let path = dir.join(name);
            fs::read_to_string(&path).map_err(|e| Error::io(path, e))
        };
        let cfg: ArtifactConfig = serde_json::from_str(&read("config.json")?)?;
        if cfg.model != "rf" {
            return Err(Error::Invalid(format!(
                "{}: not a random-forest artifact",
                dir.display()
            )));
        }
        let tfidf: TfidfModel = serde_json::from_str(&read("tfidf.json")?)?;
        tfidf.validate()?;
        let forests = Dimension::ALL
            .iter()
            .map(|d| Ok(serde_json::from_str(&read(&format!("forest_{d}.json"))?)?))
            .collect::<Result<Vec<BinaryForest>>>()?;
        let pipeline = if dir.join("pipeline_fingerprint.json").exists() {
            Some(Pipeline::load(dir)?)
        } else {
            None
        };
        Ok(BaselineModel {
            tfidf,
            forests,
            config: cfg.baseline,
            pipeline,
        })
    }
}

impl Classifier for BaselineModel {
    fn pipeline(&self) -> Option<&Pipeline> {
        self.pipeline.as_ref()
    }

    fn thresholds(&self) -> [f64; 4] {
        [self.config.threshold; 4]
    }

    fn score_prepared(&self, texts: &[&str]) -> Vec<[f64; 4]> {
        texts.iter().map(|t| self.scores(t)).collect()
    }
}

/// Predicts one prepared text; `prepared_with` must match the training
/// preparation.
pub fn predict_baseline(model: &BaselineModel, text: &str, prepared_with: &PipelineFingerprint) -> Result<Prediction> {
    model.predict_prepared(text, prepared_with)
}
