//! Rule-derived binary message features.
//!
//! Seven features, each fired by any of its rules: indicative terms matched
//! on token boundaries, regular expressions over the normalized text, and
//! part-of-speech sequences. Set features are delivered to classifiers as
//! `{{f_*}}` tokens appended to the text.

mod tagger;

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use regex::{Regex, RegexBuilder};
use serde::de::{self, MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

pub use tagger::{LexiconTagger, PosTag, PosTagger};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::preprocess::placeholder_regex;

/// Corpus metadata keys written by featurization.
pub const RULES_FINGERPRINT_KEY: &str = "pipeline.feature_rules";
pub const FEATURES_FLAG_KEY: &str = "pipeline.features";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FeatureName {
    Time,
    Instruction,
    Progress,
    Elaboration,
    Greeting,
    Posemo,
    Agreement,
}

impl FeatureName {
    pub const ALL: [FeatureName; 7] = [
        FeatureName::Time,
        FeatureName::Instruction,
        FeatureName::Progress,
        FeatureName::Elaboration,
        FeatureName::Greeting,
        FeatureName::Posemo,
        FeatureName::Agreement,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn code(self) -> &'static str {
        match self {
            FeatureName::Time => "F_TIME",
            FeatureName::Instruction => "F_INSTRUCTION",
            FeatureName::Progress => "F_PROGRESS",
            FeatureName::Elaboration => "F_ELABORATION",
            FeatureName::Greeting => "F_GREETING",
            FeatureName::Posemo => "F_POSEMO",
            FeatureName::Agreement => "F_AGREEMENT",
        }
    }

    /// The token appended to texts that carry this feature, e.g. `{{f_time}}`.
    pub fn placeholder(self) -> String {
        format!("{{{{{}}}}}", self.code().to_lowercase())
    }
}

impl fmt::Display for FeatureName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for FeatureName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FeatureName::ALL
            .into_iter()
            .find(|f| f.code() == s.trim())
            .ok_or_else(|| Error::Invalid(format!("unknown feature `{}`", s.trim())))
    }
}

/// One bit per feature.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct FeatureVector([bool; 7]);

impl FeatureVector {
    pub fn from_bits(bits: [u8; 7]) -> Self {
        FeatureVector(bits.map(|b| b != 0))
    }

    pub fn get(&self, f: FeatureName) -> bool {
        self.0[f.index()]
    }

    pub fn set(&mut self, f: FeatureName, value: bool) {
        self.0[f.index()] = value;
    }

    pub fn is_empty(&self) -> bool {
        !self.0.iter().any(|b| *b)
    }

    pub fn active(&self) -> impl Iterator<Item = FeatureName> + '_ {
        FeatureName::ALL.into_iter().filter(|f| self.get(*f))
    }

    pub fn bits(&self) -> [u8; 7] {
        self.0.map(u8::from)
    }
}

impl Serialize for FeatureVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(7))?;
        for f in FeatureName::ALL {
            map.serialize_entry(f.code(), &u8::from(self.get(f)))?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for FeatureVector {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct FvVisitor;

        impl<'de> Visitor<'de> for FvVisitor {
            type Value = FeatureVector;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("an object mapping feature names to 0/1")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> std::result::Result<FeatureVector, A::Error> {
                let mut fv = FeatureVector::default();
                while let Some(key) = map.next_key::<String>()? {
                    let name = FeatureName::from_str(&key).map_err(de::Error::custom)?;
                    let v: u64 = map.next_value()?;
                    if v > 1 {
                        return Err(de::Error::custom(format!("{name} must be 0 or 1, got {v}")));
                    }
                    fv.set(name, v == 1);
                }
                Ok(fv)
            }
        }

        deserializer.deserialize_map(FvVisitor)
    }
}

#[derive(Debug, Clone)]
pub enum RuleKind {
    /// Lowercase token sequence.
    Term(Vec<String>),
    Regex(Regex),
    /// Each position accepts any of the listed tags.
    PosPattern(Vec<Vec<PosTag>>),
}

#[derive(Debug, Clone)]
pub struct FeatureRule {
    pub feature: FeatureName,
    pub kind: RuleKind,
    /// Position in the rule file; rules are OR-ed, so this only orders audits.
    pub priority: usize,
    source: String,
}

impl FeatureRule {
    pub fn new(feature: FeatureName, kind: &str, pattern: &str, priority: usize) -> Result<Self> {
        let pattern = pattern.trim();
        if pattern.is_empty() {
            return Err(Error::Invalid("empty pattern".into()));
        }
        let kind = match kind.trim() {
            "term" => RuleKind::Term(pattern.split_whitespace().map(str::to_lowercase).collect()),
            "regex" => RuleKind::Regex(
                RegexBuilder::new(pattern)
                    .case_insensitive(true)
                    .build()
                    .map_err(|e| Error::Invalid(format!("invalid regex `{pattern}`: {e}")))?,
            ),
            "pos_pattern" => RuleKind::PosPattern(
                pattern
                    .split_whitespace()
                    .map(|slot| {
                        slot.split('|')
                            .map(|t| PosTag::from_str(t.trim()).map_err(Error::Invalid))
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()?,
            ),
            other => return Err(Error::Invalid(format!("unknown rule kind `{other}`"))),
        };
        Ok(FeatureRule {
            feature,
            kind,
            priority,
            source: pattern.to_string(),
        })
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            RuleKind::Term(_) => "term",
            RuleKind::Regex(_) => "regex",
            RuleKind::PosPattern(_) => "pos_pattern",
        }
    }

    pub fn pattern(&self) -> &str {
        &self.source
    }
}

/// An ordered feature rule pack.
#[derive(Debug, Clone, Default)]
pub struct FeatureRules {
    pub rules: Vec<FeatureRule>,
}

const DEFAULT_RULES: &str = include_str!("../../data/default_features.tsv");

impl FeatureRules {
    pub fn default_pack() -> FeatureRules {
        FeatureRules::parse(DEFAULT_RULES, "default_features.tsv").expect("bundled rule pack parses")
    }

    pub fn load(path: &Path) -> Result<FeatureRules> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        FeatureRules::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, file: &str) -> Result<FeatureRules> {
        let mut rules = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.splitn(3, '\t').collect();
            if cols.len() != 3 {
                return Err(Error::parse(file, i + 1, "expected feature<TAB>kind<TAB>pattern"));
            }
            let feature = FeatureName::from_str(cols[0]).map_err(|e| Error::parse(file, i + 1, e.to_string()))?;
            let rule = FeatureRule::new(feature, cols[1], cols[2], rules.len())
                .map_err(|e| Error::parse(file, i + 1, e.to_string()))?;
            rules.push(rule);
        }
        Ok(FeatureRules { rules })
    }

    pub fn for_feature(&self, f: FeatureName) -> impl Iterator<Item = &FeatureRule> {
        self.rules.iter().filter(move |r| r.feature == f)
    }

    pub fn push(&mut self, rule: FeatureRule) {
        self.rules.push(rule);
    }

    pub fn to_tsv(&self) -> String {
        self.rules
            .iter()
            .map(|r| format!("{}\t{}\t{}\n", r.feature, r.kind_name(), r.source))
            .collect()
    }

    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(b"feature-rules/v1\n");
        h.update(self.to_tsv().as_bytes());
        hex::encode(h.finalize())
    }
}

/// A token for matching: `None` marks a placeholder, which breaks sequences.
fn match_tokens(text: &str) -> Vec<Option<String>> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let mut last = 0;
        let push_plain = |s: &str, out: &mut Vec<Option<String>>| {
            let core = s.trim_matches(|c: char| !c.is_alphanumeric());
            if !core.is_empty() {
                out.push(Some(core.to_lowercase()));
            }
        };
        for m in placeholder_regex().find_iter(chunk) {
            push_plain(&chunk[last..m.start()], &mut out);
            out.push(None);
            last = m.end();
        }
        push_plain(&chunk[last..], &mut out);
    }
    out
}

fn contains_sequence<T: PartialEq>(haystack: &[Option<T>], accepts: impl Fn(usize, &T) -> bool, len: usize) -> bool {
    if len == 0 || haystack.len() < len {
        return false;
    }
    (0..=haystack.len() - len)
        .any(|start| (0..len).all(|j| haystack[start + j].as_ref().is_some_and(|t| accepts(j, t))))
}

/// Fires each feature whose rules match the (pre-processed) text.
pub fn extract_features(text: &str, rules: &FeatureRules, tagger: &dyn PosTagger) -> FeatureVector {
    let tokens = match_tokens(text);
    let normalized = text.split_whitespace().collect::<Vec<_>>().join(" ");
    let mut tags: Option<Vec<Option<PosTag>>> = None;
    let mut fv = FeatureVector::default();

    for rule in &rules.rules {
        if fv.get(rule.feature) {
            continue;
        }
        let fired = match &rule.kind {
            RuleKind::Term(words) => contains_sequence(&tokens, |j, t| *t == words[j], words.len()),
            RuleKind::Regex(re) => re.is_match(&normalized),
            RuleKind::PosPattern(slots) => {
                let tags = tags.get_or_insert_with(|| {
                    let words: Vec<&str> = tokens.iter().flatten().map(String::as_str).collect();
                    let mut tagged = tagger.tag(&words).into_iter();
                    tokens.iter().map(|t| t.as_ref().and_then(|_| tagged.next())).collect()
                });
                contains_sequence(tags, |j, tag| slots[j].contains(tag), slots.len())
            }
        };
        if fired {
            fv.set(rule.feature, true);
        }
    }
    fv
}

fn is_feature_placeholder(token: &str) -> bool {
    FeatureName::ALL.iter().any(|f| f.placeholder() == token)
}

/// Appends one placeholder per set feature, in canonical order. Feature
/// placeholders already trailing the text are replaced, so injecting twice
/// gives the same text as injecting once.
pub fn inject_features(text: &str, fv: &FeatureVector) -> String {
    let mut base = text;
    loop {
        let trimmed = base.trim_end();
        match trimmed.rsplit_once(char::is_whitespace) {
            Some((head, last)) if is_feature_placeholder(last) => base = head,
            None if is_feature_placeholder(trimmed) => base = "",
            _ => break,
        }
    }
    let mut out = if base.len() == text.len() {
        text.to_string()
    } else {
        base.trim_end().to_string()
    };
    for f in fv.active() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(&f.placeholder());
    }
    out
}

/// Replaces each text by its feature-injected form and keeps the vector on
/// the message for audit.
pub fn featurize_corpus(corpus: &Corpus, rules: &FeatureRules, tagger: &dyn PosTagger) -> Corpus {
    let messages = corpus
        .messages
        .iter()
        .map(|m| {
            let mut m = m.clone();
            let fv = extract_features(&m.text, rules, tagger);
            m.text = inject_features(&m.text, &fv);
            m.features = Some(fv);
            m
        })
        .collect();
    crate::pipeline::record_rules(corpus.with_messages(messages), rules)
}

/// Tokens of `text` that are not placeholders, lowercased; handy for audits.
pub fn content_tokens(text: &str) -> Vec<String> {
    match_tokens(text).into_iter().flatten().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::{preprocess_message, Lexicon};
    use proptest::prelude::*;

    /// Reference phrases, two per feature.
    pub(crate) const EXAMPLES: [(FeatureName, [&str; 2]); 7] = [
        (FeatureName::Time, ["faster lah", "we have like 15 mins left"]),
        (FeatureName::Instruction, ["see the url", "guys can we discuss now"]),
        (FeatureName::Progress, ["we r done", "we completed"]),
        (
            FeatureName::Elaboration,
            ["plants dont reduce smoke", "the teacher should be kind"],
        ),
        (FeatureName::Greeting, ["sup", "good morning guys"]),
        (FeatureName::Posemo, ["just kidding", "LOL"]),
        (FeatureName::Agreement, ["yes ok", "yes thats possible"]),
    ];

    fn extract(text: &str) -> FeatureVector {
        extract_features(text, &FeatureRules::default_pack(), &LexiconTagger)
    }

    #[test]
    fn golden_examples_fire_exactly_their_feature() {
        let lex = Lexicon::default_pack();
        for (feature, phrases) in EXAMPLES {
            for phrase in phrases {
                for text in [phrase.to_string(), preprocess_message(phrase, &lex)] {
                    let fv = extract(&text);
                    let active: Vec<_> = fv.active().collect();
                    assert_eq!(active, vec![feature], "`{text}`");
                }
            }
        }
    }

    #[test]
    fn default_pack_time_rules() {
        let pack = FeatureRules::default_pack();
        assert!(pack
            .for_feature(FeatureName::Time)
            .any(|r| matches!(&r.kind, RuleKind::Term(w) if w == &["faster"])));
        assert!(pack
            .for_feature(FeatureName::Time)
            .any(|r| matches!(&r.kind, RuleKind::Regex(re) if re.is_match("15 mins"))));
    }

    #[test]
    fn empty_inputs() {
        assert!(extract("").is_empty());
        let empty = FeatureRules::parse("", "e").unwrap();
        assert!(extract_features("faster lah", &empty, &LexiconTagger).is_empty());
    }

    #[test]
    fn rule_file_errors() {
        assert!(matches!(
            FeatureRules::parse("F_BOGUS\tterm\tx\n", "f"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(FeatureRules::parse("F_TIME\tregex\t(unclosed\n", "f").is_err());
        assert!(FeatureRules::parse("F_TIME\tpos_pattern\tnoun gerund\n", "f").is_err());
        assert!(FeatureRules::parse("F_TIME\tfuzzy\tx\n", "f").is_err());
        assert!(FeatureRules::parse("F_TIME\tterm\n", "f").is_err());
    }

    #[test]
    fn inject_appends_in_canonical_order() {
        let progress = FeatureVector::from_bits([0, 0, 1, 0, 0, 0, 0]);
        assert_eq!(inject_features("we r done", &progress), "we r done {{f_progress}}");
        assert_eq!(inject_features("we r  done ", &FeatureVector::default()), "we r  done ");
        let all = FeatureVector::from_bits([1; 7]);
        assert_eq!(
            inject_features("t", &all),
            "t {{f_time}} {{f_instruction}} {{f_progress}} {{f_elaboration}} {{f_greeting}} {{f_posemo}} {{f_agreement}}"
        );
        let twice = inject_features(&inject_features("t", &all), &all);
        assert_eq!(twice, inject_features("t", &all));
    }

    #[test]
    fn placeholders_do_not_match_terms_or_tags() {
        let pack = FeatureRules::parse("F_GREETING\tterm\tname\nF_ELABORATION\tpos_pattern\tnoun noun\n", "p").unwrap();
        assert!(extract_features("{{NAME}}", &pack, &LexiconTagger).is_empty());
        assert!(extract_features("table {{NAME}} chair", &pack, &LexiconTagger).is_empty());
        // the placeholder breaks the noun-noun run
        let only_pos = FeatureRules::parse("F_ELABORATION\tpos_pattern\tnoun noun\n", "p").unwrap();
        assert!(extract_features("table {{NAME}} chair", &only_pos, &LexiconTagger).is_empty());
        assert!(!extract_features("table chair", &only_pos, &LexiconTagger).is_empty());
    }

    #[test]
    fn featurize_marks_corpus() {
        let mut c = crate::corpus::fixtures::sample_messages();
        let pack = FeatureRules::default_pack();
        c = featurize_corpus(&c, &pack, &LexiconTagger);
        assert_eq!(c.messages[2].text, "yes {{f_agreement}}");
        assert_eq!(
            c.messages[2].features.unwrap().active().collect::<Vec<_>>(),
            vec![FeatureName::Agreement]
        );
        assert_eq!(c.meta[RULES_FINGERPRINT_KEY], pack.fingerprint());
        let again = featurize_corpus(&c, &pack, &LexiconTagger);
        assert_eq!(again.messages, c.messages);
    }

    fn fuzz_text() -> impl Strategy<Value = String> {
        let words = prop::sample::select(vec![
            "faster",
            "lah",
            "we",
            "have",
            "15",
            "mins",
            "left",
            "see",
            "the",
            "url",
            "can",
            "discuss",
            "done",
            "r",
            "plants",
            "dont",
            "reduce",
            "smoke",
            "teacher",
            "should",
            "be",
            "kind",
            "sup",
            "good",
            "morning",
            "guys",
            "just",
            "kidding",
            "LOL",
            "yes",
            "ok",
            "thats",
            "possible",
            "{{NAME}}",
            "{{pos_emo}}",
            "{{f_time}}",
            "?",
            "because",
            "hello",
        ]);
        proptest::collection::vec((words, prop::sample::select(vec![" ", "  ", " \t"])), 0..12)
            .prop_map(|v| v.into_iter().map(|(w, g)| format!("{w}{g}")).collect())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(300))]
        #[test]
        fn adding_rules_never_clears_bits(text in fuzz_text(), extra in 0usize..90) {
            let pack = FeatureRules::default_pack();
            let before = extract_features(&text, &pack, &LexiconTagger);
            let mut bigger = pack.clone();
            let donor = FeatureRules::default_pack();
            let rule = donor.rules[extra % donor.rules.len()].clone();
            let mut rule = rule;
            rule.feature = FeatureName::ALL[extra % 7];
            bigger.push(rule);
            let after = extract_features(&text, &bigger, &LexiconTagger);
            for f in FeatureName::ALL {
                prop_assert!(!before.get(f) || after.get(f));
            }
        }

        #[test]
        fn whitespace_insensitive(text in fuzz_text()) {
            let squeezed = text.split_whitespace().collect::<Vec<_>>().join(" ");
            prop_assert_eq!(extract(&text), extract(&squeezed));
            prop_assert_eq!(extract(&text), extract(&format!("{text}   ")));
        }

        #[test]
        fn extract_inject_extract(text in fuzz_text()) {
            let fv = extract(&text);
            let injected = inject_features(&text, &fv);
            prop_assert_eq!(extract(&injected), fv);
        }
    }
}
