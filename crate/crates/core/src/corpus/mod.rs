//! Annotated chat corpora: the label schema, loading and saving, splitting,
//! synthetic generation and inter-annotator agreement.

mod agreement;
mod io;
mod split;
mod synth;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::de::{self, MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::features::FeatureVector;

pub use agreement::{agreement_report, cohen_kappa, kappa_stats, pooled_kappa, AgreementReport, KappaStats};
pub use io::{load_corpus, meta_path, save_corpus, CorpusFormat};
pub use split::{split_corpus, split_sizes, SplitSpec, SplitUnit};
pub use synth::{generate_synthetic_corpus, with_second_annotator, SynthSpec, SYNTH_ROSTER};

/// The four teamwork dimensions, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Dimension {
    /// Coordination: organizing timely completion of the task.
    #[serde(rename = "COD")]
    Cod,
    /// Mutual performance monitoring: keeping the performance of others in check.
    #[serde(rename = "MPM")]
    Mpm,
    /// Constructive conflict: resolving disagreement through discussion.
    #[serde(rename = "CCF")]
    Ccf,
    /// Team emotional support.
    #[serde(rename = "TES")]
    Tes,
}

impl Dimension {
    pub const ALL: [Dimension; 4] = [Dimension::Cod, Dimension::Mpm, Dimension::Ccf, Dimension::Tes];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn code(self) -> &'static str {
        match self {
            Dimension::Cod => "COD",
            Dimension::Mpm => "MPM",
            Dimension::Ccf => "CCF",
            Dimension::Tes => "TES",
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Dimension {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "COD" => Ok(Dimension::Cod),
            "MPM" => Ok(Dimension::Mpm),
            "CCF" => Ok(Dimension::Ccf),
            "TES" => Ok(Dimension::Tes),
            other => Err(Error::Invalid(format!("unknown dimension `{other}`"))),
        }
    }
}

/// One bit per dimension. All-zero is a legal value.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct LabelVector([bool; 4]);

impl LabelVector {
    pub const NONE: LabelVector = LabelVector([false; 4]);

    pub fn new(cod: bool, mpm: bool, ccf: bool, tes: bool) -> Self {
        LabelVector([cod, mpm, ccf, tes])
    }

    /// Builds a vector from 0/1 integers, rejecting anything else.
    pub fn from_bits(bits: [u8; 4]) -> Result<Self> {
        let mut out = [false; 4];
        for (i, b) in bits.iter().enumerate() {
            out[i] = match b {
                0 => false,
                1 => true,
                v => {
                    return Err(Error::Invalid(format!(
                        "label {} must be 0 or 1, got {v}",
                        Dimension::ALL[i]
                    )))
                }
            };
        }
        Ok(LabelVector(out))
    }

    pub fn only(dim: Dimension) -> Self {
        let mut v = LabelVector::NONE;
        v.set(dim, true);
        v
    }

    pub fn get(&self, dim: Dimension) -> bool {
        self.0[dim.index()]
    }

    pub fn set(&mut self, dim: Dimension, value: bool) {
        self.0[dim.index()] = value;
    }

    pub fn bits(&self) -> [u8; 4] {
        self.0.map(u8::from)
    }

    pub fn as_array(&self) -> [bool; 4] {
        self.0
    }

    pub fn count_ones(&self) -> usize {
        self.0.iter().filter(|b| **b).count()
    }
}

impl From<[bool; 4]> for LabelVector {
    fn from(bits: [bool; 4]) -> Self {
        LabelVector(bits)
    }
}

impl fmt::Display for LabelVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [a, b, c, d] = self.bits();
        write!(f, "({a},{b},{c},{d})")
    }
}

impl Serialize for LabelVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(4))?;
        for dim in Dimension::ALL {
            map.serialize_entry(dim.code(), &u8::from(self.get(dim)))?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for LabelVector {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct LabelVisitor;

        impl<'de> Visitor<'de> for LabelVisitor {
            type Value = LabelVector;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("an object with 0/1 values for COD, MPM, CCF and TES")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> std::result::Result<LabelVector, A::Error> {
                let mut bits: [Option<u8>; 4] = [None; 4];
                while let Some(key) = map.next_key::<String>()? {
                    let dim = Dimension::from_str(&key).map_err(de::Error::custom)?;
                    let value: u64 = map.next_value()?;
                    if value > 1 {
                        return Err(de::Error::custom(format!("label {dim} must be 0 or 1, got {value}")));
                    }
                    bits[dim.index()] = Some(value as u8);
                }
                let mut out = [0u8; 4];
                for (i, b) in bits.iter().enumerate() {
                    out[i] = b.ok_or_else(|| de::Error::missing_field(Dimension::ALL[i].code()))?;
                }
                LabelVector::from_bits(out).map_err(de::Error::custom)
            }
        }

        deserializer.deserialize_map(LabelVisitor)
    }
}

/// One chat line with its annotation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedMessage {
    pub id: String,
    #[serde(default)]
    pub team_id: String,
    #[serde(default)]
    pub user: String,
    pub text: String,
    /// Adjudicated (or first-annotator) labels; the only labels used for training.
    pub labels: LabelVector,
    /// Second annotator, present only on doubly-annotated subsets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels_b: Option<LabelVector>,
    /// Rule features recorded by featurization, kept for audit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<FeatureVector>,
}

impl AnnotatedMessage {
    pub fn new(id: impl Into<String>, text: impl Into<String>, labels: LabelVector) -> Self {
        AnnotatedMessage {
            id: id.into(),
            team_id: String::new(),
            user: String::new(),
            text: text.into(),
            labels,
            labels_b: None,
            features: None,
        }
    }

    pub fn with_team(mut self, team_id: impl Into<String>) -> Self {
        self.team_id = team_id.into();
        self
    }

    pub fn with_user(mut self, user: impl Into<String>) -> Self {
        self.user = user.into();
        self
    }
}

/// An ordered collection of annotated messages plus free-form metadata.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    pub messages: Vec<AnnotatedMessage>,
    pub meta: BTreeMap<String, String>,
}

impl Corpus {
    /// Validates id uniqueness and non-blank text.
    pub fn new(messages: Vec<AnnotatedMessage>) -> Result<Self> {
        let corpus = Corpus {
            messages,
            meta: BTreeMap::new(),
        };
        corpus.validate()?;
        Ok(corpus)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::with_capacity(self.messages.len());
        for m in &self.messages {
            if !seen.insert(m.id.as_str()) {
                return Err(Error::DuplicateId(m.id.clone()));
            }
            if m.text.trim().is_empty() {
                return Err(Error::Invalid(format!("message `{}` has blank text", m.id)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    pub fn labels(&self) -> Vec<LabelVector> {
        self.messages.iter().map(|m| m.labels).collect()
    }

    pub fn texts(&self) -> Vec<&str> {
        self.messages.iter().map(|m| m.text.as_str()).collect()
    }

    /// Concatenates two corpora; metadata of `self` wins on key clashes.
    pub fn concat(&self, other: &Corpus) -> Result<Corpus> {
        let mut messages = self.messages.clone();
        messages.extend(other.messages.iter().cloned());
        let mut out = Corpus::new(messages)?;
        out.meta = other.meta.clone();
        out.meta.extend(self.meta.clone());
        Ok(out)
    }

    /// Same metadata, different messages.
    pub(crate) fn with_messages(&self, messages: Vec<AnnotatedMessage>) -> Corpus {
        Corpus {
            messages,
            meta: self.meta.clone(),
        }
    }
}

/// Number of positive messages per dimension. Counts overlap: a message with
/// several bits set contributes to each.
pub fn label_counts(corpus: &Corpus) -> BTreeMap<Dimension, usize> {
    let mut counts: BTreeMap<Dimension, usize> = Dimension::ALL.iter().map(|d| (*d, 0)).collect();
    for m in &corpus.messages {
        for dim in Dimension::ALL {
            if m.labels.get(dim) {
                *counts.get_mut(&dim).unwrap() += 1;
            }
        }
    }
    counts
}
