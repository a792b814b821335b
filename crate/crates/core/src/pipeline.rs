//! Binds text preparation (lexicon plus optional feature rules) to the
//! models trained on it.
//!
//! Corpora carry their preparation in metadata: the lexicon and rule pack
//! in TSV form and their content hashes. A model stores the same and refuses
//! inputs prepared differently.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::features::{
    extract_features, featurize_corpus, inject_features, FeatureRules, FeatureVector, LexiconTagger, FEATURES_FLAG_KEY,
    RULES_FINGERPRINT_KEY,
};
use crate::preprocess::{preprocess_corpus, preprocess_message, Lexicon, LEXICON_FINGERPRINT_KEY};

pub const LEXICON_TSV_KEY: &str = "pipeline.lexicon_tsv";
pub const RULES_TSV_KEY: &str = "pipeline.feature_rules_tsv";

/// Hashes identifying how a text was prepared.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineFingerprint {
    pub lexicon: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_rules: Option<String>,
    pub features: bool,
}

impl fmt::Display for PipelineFingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let short = |s: &str| s.chars().take(12).collect::<String>();
        write!(f, "lexicon={}", short(&self.lexicon))?;
        match &self.feature_rules {
            Some(r) if self.features => write!(f, " features=on rules={}", short(r)),
            _ => write!(f, " features=off"),
        }
    }
}

impl PipelineFingerprint {
    /// Reads the fingerprint recorded in corpus metadata, if the corpus was
    /// pre-processed.
    pub fn from_meta(meta: &BTreeMap<String, String>) -> Option<PipelineFingerprint> {
        let lexicon = meta.get(LEXICON_FINGERPRINT_KEY)?.clone();
        let features = meta.get(FEATURES_FLAG_KEY).is_some_and(|v| v == "on");
        Some(PipelineFingerprint {
            lexicon,
            feature_rules: if features {
                meta.get(RULES_FINGERPRINT_KEY).cloned()
            } else {
                None
            },
            features,
        })
    }

    pub fn ensure_matches(&self, found: &PipelineFingerprint) -> Result<()> {
        if self == found {
            Ok(())
        } else {
            Err(Error::FingerprintMismatch {
                expected: self.to_string(),
                found: found.to_string(),
            })
        }
    }
}

/// The preparation steps a model was trained behind.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub lexicon: Lexicon,
    /// `Some` when rule features are injected into the text.
    pub rules: Option<FeatureRules>,
}

impl Pipeline {
    pub fn new(lexicon: Lexicon, rules: Option<FeatureRules>) -> Self {
        Pipeline { lexicon, rules }
    }

    pub fn features_on(&self) -> bool {
        self.rules.is_some()
    }

    pub fn fingerprint(&self) -> PipelineFingerprint {
        PipelineFingerprint {
            lexicon: self.lexicon.fingerprint(),
            feature_rules: self.rules.as_ref().map(FeatureRules::fingerprint),
            features: self.rules.is_some(),
        }
    }

    /// Recovers the pipeline recorded in a prepared corpus. When
    /// `features` is given it overrides the corpus's own feature setting;
    /// turning features on for an unfeaturized corpus uses `rules` or the
    /// bundled pack.
    pub fn from_corpus(corpus: &Corpus, features: Option<bool>, rules: Option<FeatureRules>) -> Result<Pipeline> {
        let tsv = corpus.meta.get(LEXICON_TSV_KEY).ok_or_else(|| {
            Error::Invalid("corpus has not been pre-processed (no lexicon recorded in its metadata)".into())
        })?;
        let lexicon = Lexicon::parse(tsv, "corpus metadata")?;
        let recorded = match (
            corpus.meta.get(FEATURES_FLAG_KEY).map(String::as_str),
            corpus.meta.get(RULES_TSV_KEY),
        ) {
            (Some("on"), Some(tsv)) => Some(FeatureRules::parse(tsv, "corpus metadata")?),
            _ => None,
        };
        let rules = match features {
            None => recorded,
            Some(false) => None,
            Some(true) => Some(rules.or(recorded).unwrap_or_else(FeatureRules::default_pack)),
        };
        Ok(Pipeline { lexicon, rules })
    }

    /// Prepares one raw message.
    pub fn prepare(&self, raw: &str) -> String {
        let text = preprocess_message(raw, &self.lexicon);
        match &self.rules {
            Some(rules) => {
                let fv = extract_features(&text, rules, &LexiconTagger);
                inject_features(&text, &fv)
            }
            None => text,
        }
    }

    /// Brings a corpus to this pipeline's stage: raw corpora are
    /// pre-processed, features are injected or stripped as needed. A corpus
    /// prepared with a different lexicon or rule pack is refused.
    pub fn adapt(&self, corpus: &Corpus) -> Result<Corpus> {
        let lexicon_fp = self.lexicon.fingerprint();
        let mut c = match corpus.meta.get(LEXICON_FINGERPRINT_KEY) {
            Some(found) if *found != lexicon_fp => {
                return Err(Error::FingerprintMismatch {
                    expected: format!("lexicon={}", &lexicon_fp[..12]),
                    found: format!("lexicon={}", found.chars().take(12).collect::<String>()),
                })
            }
            Some(_) => corpus.clone(),
            None => record_lexicon(preprocess_corpus(corpus, &self.lexicon), &self.lexicon),
        };
        let featurized = c.meta.get(FEATURES_FLAG_KEY).is_some_and(|v| v == "on");
        match (&self.rules, featurized) {
            (Some(rules), true) => {
                let found = c.meta.get(RULES_FINGERPRINT_KEY).cloned().unwrap_or_default();
                if found != rules.fingerprint() {
                    return Err(Error::FingerprintMismatch {
                        expected: format!("rules={}", &rules.fingerprint()[..12]),
                        found: format!("rules={}", found.chars().take(12).collect::<String>()),
                    });
                }
            }
            (Some(rules), false) => c = record_rules(featurize_corpus(&c, rules, &LexiconTagger), rules),
            (None, true) => c = strip_features(&c),
            (None, false) => {}
        }
        Ok(c)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let write = |name: &str, body: String| {
            let path = dir.join(name);
            fs::write(&path, body).map_err(|e| Error::io(path, e))
        };
        write("lexicon.tsv", self.lexicon.to_tsv())?;
        if let Some(rules) = &self.rules {
            write("features.tsv", rules.to_tsv())?;
        }
        write(
            "pipeline_fingerprint.json",
            serde_json::to_string_pretty(&self.fingerprint())?,
        )
    }

    /// Loads a saved pipeline and checks it against the stored fingerprint.
    pub fn load(dir: &Path) -> Result<Pipeline> {
        let lexicon = Lexicon::load(&dir.join("lexicon.tsv"))?;
        let rules_path = dir.join("features.tsv");
        let rules = if rules_path.exists() {
            Some(FeatureRules::load(&rules_path)?)
        } else {
            None
        };
        let pipeline = Pipeline { lexicon, rules };
        let fp_path = dir.join("pipeline_fingerprint.json");
        let stored: PipelineFingerprint =
            serde_json::from_str(&fs::read_to_string(&fp_path).map_err(|e| Error::io(&fp_path, e))?)?;
        stored.ensure_matches(&pipeline.fingerprint())?;
        Ok(pipeline)
    }
}

/// Adds the lexicon's TSV to a pre-processed corpus so later stages can
/// recover it.
pub fn record_lexicon(mut corpus: Corpus, lexicon: &Lexicon) -> Corpus {
    corpus
        .meta
        .insert(LEXICON_FINGERPRINT_KEY.into(), lexicon.fingerprint());
    corpus.meta.insert(LEXICON_TSV_KEY.into(), lexicon.to_tsv());
    corpus
}

pub fn record_rules(mut corpus: Corpus, rules: &FeatureRules) -> Corpus {
    corpus.meta.insert(RULES_FINGERPRINT_KEY.into(), rules.fingerprint());
    corpus.meta.insert(RULES_TSV_KEY.into(), rules.to_tsv());
    corpus.meta.insert(FEATURES_FLAG_KEY.into(), "on".into());
    corpus
}

/// Removes injected feature tokens, returning the corpus to its
/// pre-processed form.
pub fn strip_features(corpus: &Corpus) -> Corpus {
    let messages = corpus
        .messages
        .iter()
        .map(|m| {
            let mut m = m.clone();
            m.text = inject_features(&m.text, &FeatureVector::default());
            m.features = None;
            m
        })
        .collect();
    let mut out = corpus.with_messages(messages);
    out.meta.remove(RULES_FINGERPRINT_KEY);
    out.meta.remove(RULES_TSV_KEY);
    out.meta.insert(FEATURES_FLAG_KEY.into(), "off".into());
    out
}
