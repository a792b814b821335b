//! Template-based synthetic corpora for desk-scale testing.
//!
//! Each dimension has its own phrase bank, modeled on the kind of chat lines
//! that carry it (time pressure for coordination, check-ins for monitoring,
//! reasoned disagreement for conflict, affirmation for emotional support).
//! Every phrase holds at least one word that appears in no other bank, so a
//! generated corpus is separable by vocabulary.

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{label_counts, AnnotatedMessage, Corpus, Dimension, LabelVector};

/// Names used by templates with a `{name}` slot. Pass them as a roster to
/// the pre-processor to exercise name masking.
pub const SYNTH_ROSTER: [&str; 4] = ["Bob", "Mei", "Ahmad", "Priya"];

const COD: &[&str] = &[
    "faster lah",
    "we have like {n} mins left",
    "hurry up we need to submit soon",
    "only {n} minutes more",
    "quick the deadline is near",
    "time is running out",
    "{name} faster type the answer",
    "lets finish before the bell",
];

const MPM: &[&str] = &[
    "{name} are you okay with it",
    "{name} did you check your part",
    "who has not replied yet",
    "did everyone read the question",
    "{name} you have not typed anything",
    "check your spelling first",
    "is your section correct",
    "{name} are you still there",
];

const CCF: &[&str] = &[
    "plants dont reduce smoke",
    "the teacher should be kind because students learn better",
    "but why would recycling work",
    "i disagree because trees absorb carbon",
    "what do you mean by attentive",
    "maybe we should consider cleaner energy instead",
    "ideal teacher can listen to students ideas",
    "so caring attentive and humourous",
];

const TES: &[&str] = &[
    "yes",
    "ok",
    "humour yes",
    "haha nice one",
    "good job",
    "thank you so much",
    "you are awesome",
    "just kidding",
];

const NONE: &[&str] = &[
    "sup",
    "good morning guys",
    "my internet is slow",
    "brb",
    "can see the url",
    "hello",
    "what number are we",
    "testing testing",
];

const PREFIXES: &[&str] = &["", "", "", "guys", "eh", "hmm"];
const SUFFIXES: &[&str] = &["", "", "", "lah", "leh", "ya"];

/// Phrase bank for a dimension, or for unlabeled chatter when `None`.
pub fn phrase_bank(dim: Option<Dimension>) -> &'static [&'static str] {
    match dim {
        Some(Dimension::Cod) => COD,
        Some(Dimension::Mpm) => MPM,
        Some(Dimension::Ccf) => CCF,
        Some(Dimension::Tes) => TES,
        None => NONE,
    }
}

/// Per-dimension message quotas plus a count of unlabeled messages.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SynthSpec {
    pub counts: BTreeMap<Dimension, usize>,
    pub none_count: usize,
}

impl SynthSpec {
    pub fn uniform(per_dimension: usize, none_count: usize) -> Self {
        SynthSpec {
            counts: Dimension::ALL.iter().map(|d| (*d, per_dimension)).collect(),
            none_count,
        }
    }

    /// Parses `COD=50,MPM=50,CCF=50,TES=50,NONE=50`. Missing keys count as 0.
    pub fn parse(s: &str) -> crate::Result<Self> {
        let mut spec = SynthSpec::default();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| crate::Error::Invalid(format!("expected KEY=COUNT, got `{part}`")))?;
            let count: usize = value
                .trim()
                .parse()
                .map_err(|_| crate::Error::Invalid(format!("bad count in `{part}`")))?;
            if key.trim().eq_ignore_ascii_case("none") {
                spec.none_count = count;
            } else {
                spec.counts.insert(key.parse()?, count);
            }
        }
        Ok(spec)
    }

    pub fn total(&self) -> usize {
        self.counts.values().sum::<usize>() + self.none_count
    }
}

fn render(template: &str, rng: &mut ChaCha8Rng) -> String {
    let mut text = template.to_string();
    if text.contains("{n}") {
        text = text.replace("{n}", &rng.random_range(2..=30).to_string());
    }
    if text.contains("{name}") {
        text = text.replace("{name}", SYNTH_ROSTER.choose(rng).unwrap());
    }
    let prefix = PREFIXES.choose(rng).unwrap();
    let suffix = SUFFIXES.choose(rng).unwrap();
    [*prefix, text.as_str(), *suffix]
        .iter()
        .filter(|s| !s.is_empty())
        .copied()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Generates `spec.total()` single-label (or unlabeled) messages in shuffled
/// order. Deterministic in `seed`.
pub fn generate_synthetic_corpus(spec: &SynthSpec, seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut drafts: Vec<(String, LabelVector)> = Vec::with_capacity(spec.total());
    for (dim, count) in &spec.counts {
        for _ in 0..*count {
            let template = phrase_bank(Some(*dim)).choose(&mut rng).unwrap();
            drafts.push((render(template, &mut rng), LabelVector::only(*dim)));
        }
    }
    for _ in 0..spec.none_count {
        let template = NONE.choose(&mut rng).unwrap();
        drafts.push((render(template, &mut rng), LabelVector::NONE));
    }
    let order = super::split::shuffled_indices(drafts.len(), rng.random());
    let messages = order
        .iter()
        .enumerate()
        .map(|(i, j)| {
            let (text, labels) = &drafts[*j];
            let user = (b'A' + rng.random_range(0..4u8)) as char;
            AnnotatedMessage::new(format!("syn-{:05}", i + 1), text.clone(), *labels)
                .with_team(format!("team-{:02}", i / 10 + 1))
                .with_user(format!("Student {user}"))
        })
        .collect();
    let mut corpus = Corpus::new(messages).expect("generated ids are unique and texts non-empty");
    corpus.meta.insert("source".into(), "synthetic".into());
    corpus.meta.insert("synth.seed".into(), seed.to_string());
    for (dim, count) in label_counts(&corpus) {
        corpus.meta.insert(format!("synth.quota.{dim}"), count.to_string());
    }
    corpus
        .meta
        .insert("synth.quota.NONE".into(), spec.none_count.to_string());
    corpus
}

/// Adds a second annotator that copies `labels` and flips each bit
/// independently with probability `flip_prob`.
pub fn with_second_annotator(corpus: &Corpus, flip_prob: f64, seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = corpus.clone();
    for m in &mut out.messages {
        let mut b = m.labels;
        for dim in Dimension::ALL {
            if rng.random_bool(flip_prob) {
                b.set(dim, !b.get(dim));
            }
        }
        m.labels_b = Some(b);
    }
    out.meta.insert("labels_b.flip_prob".into(), flip_prob.to_string());
    out
}
