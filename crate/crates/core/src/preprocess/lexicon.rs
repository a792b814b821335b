use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use regex::Regex;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// The four rewrite families, listed in the order they are applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RuleCategory {
    NameMask,
    Abbreviation,
    LocalTerm,
    EmotionPunctTag,
}

impl RuleCategory {
    pub const APPLICATION_ORDER: [RuleCategory; 4] = [
        RuleCategory::NameMask,
        RuleCategory::Abbreviation,
        RuleCategory::LocalTerm,
        RuleCategory::EmotionPunctTag,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RuleCategory::NameMask => "name_mask",
            RuleCategory::Abbreviation => "abbreviation",
            RuleCategory::LocalTerm => "local_term",
            RuleCategory::EmotionPunctTag => "emotion_punct_tag",
        }
    }
}

impl fmt::Display for RuleCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RuleCategory {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "name_mask" => Ok(RuleCategory::NameMask),
            "abbreviation" => Ok(RuleCategory::Abbreviation),
            "local_term" => Ok(RuleCategory::LocalTerm),
            "emotion_punct_tag" => Ok(RuleCategory::EmotionPunctTag),
            other => Err(format!("unknown category `{other}`")),
        }
    }
}

/// How a rule finds its target.
#[derive(Debug, Clone)]
pub enum Pattern {
    /// Substring match; alphanumeric pattern edges need a non-alphanumeric neighbour.
    Literal(String),
    /// Sequence of whole tokens, compared lowercase.
    Tokens(Vec<String>),
    /// Regular expression. Whole-token match in token categories (the
    /// compiled form is anchored), substring match for emotion and
    /// punctuation tagging.
    Regex { source: String, re: Regex },
}

impl Pattern {
    /// Text form as written in a lexicon file.
    pub fn source(&self) -> String {
        match self {
            Pattern::Literal(s) => s.clone(),
            Pattern::Tokens(t) => t.join(" "),
            Pattern::Regex { source, .. } => format!("/{source}/"),
        }
    }
}

impl PartialEq for Pattern {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Pattern::Literal(a), Pattern::Literal(b)) => a == b,
            (Pattern::Tokens(a), Pattern::Tokens(b)) => a == b,
            (Pattern::Regex { source: a, .. }, Pattern::Regex { source: b, .. }) => a == b,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessRule {
    pub category: RuleCategory,
    pub pattern: Pattern,
    pub replacement: String,
}

impl PreprocessRule {
    /// Parses a pattern the way a lexicon file does.
    pub fn new(category: RuleCategory, pattern: &str, replacement: &str) -> Result<Self> {
        let pattern = pattern.trim();
        if pattern.is_empty() {
            return Err(Error::Invalid("empty pattern".into()));
        }
        let compiled = if pattern.len() > 2 && pattern.starts_with('/') && pattern.ends_with('/') {
            let body = &pattern[1..pattern.len() - 1];
            let anchored = match category {
                RuleCategory::EmotionPunctTag => body.to_string(),
                _ => format!("^(?:{body})$"),
            };
            let re = Regex::new(&anchored).map_err(|e| Error::Invalid(format!("bad regex `{body}`: {e}")))?;
            Pattern::Regex {
                source: body.to_string(),
                re,
            }
        } else {
            match category {
                RuleCategory::EmotionPunctTag => Pattern::Literal(pattern.to_lowercase()),
                _ => Pattern::Tokens(pattern.split_whitespace().map(str::to_lowercase).collect()),
            }
        };
        if !placeholders_are_well_formed(replacement) {
            return Err(Error::Invalid(format!("malformed placeholder in `{replacement}`")));
        }
        Ok(PreprocessRule {
            category,
            pattern: compiled,
            replacement: replacement.trim().to_string(),
        })
    }
}

fn placeholders_are_well_formed(s: &str) -> bool {
    let stripped = super::placeholder_regex().replace_all(s, "");
    !stripped.contains("{{") && !stripped.contains("}}")
}

/// An ordered rule list. Roster names become `name_mask` rules.
#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    pub rules: Vec<PreprocessRule>,
    /// Also mask capitalized tokens that are not sentence-initial.
    pub mask_capitalized: bool,
}

pub const NAME_PLACEHOLDER: &str = "{{NAME}}";

const DEFAULT_LEXICON: &str = include_str!("../../data/default_lexicon.tsv");

impl Lexicon {
    /// The bundled lexicon.
    pub fn default_pack() -> Lexicon {
        Lexicon::parse(DEFAULT_LEXICON, "default_lexicon.tsv").expect("bundled lexicon parses")
    }

    pub fn load(path: &Path) -> Result<Lexicon> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Lexicon::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, file: &str) -> Result<Lexicon> {
        let mut lex = Lexicon::default();
        let mut seen: HashSet<(RuleCategory, String)> = HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.trim() == "#!mask_capitalized" {
                lex.mask_capitalized = true;
                continue;
            }
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 {
                return Err(Error::parse(
                    file,
                    i + 1,
                    format!("expected 3 tab-separated columns, got {}", cols.len()),
                ));
            }
            let category = RuleCategory::from_str(cols[0].trim()).map_err(|m| Error::parse(file, i + 1, m))?;
            let rule = PreprocessRule::new(category, cols[1], cols[2])
                .map_err(|e| Error::parse(file, i + 1, e.to_string()))?;
            if !seen.insert((category, rule.pattern.source())) {
                return Err(Error::parse(
                    file,
                    i + 1,
                    format!("duplicate pattern `{}` in category {category}", cols[1].trim()),
                ));
            }
            lex.rules.push(rule);
        }
        Ok(lex)
    }

    /// Adds one `name_mask` rule per roster name; names already present are skipped.
    pub fn with_roster<I, S>(mut self, names: I) -> Lexicon
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        for name in names {
            let name = name.as_ref().trim();
            if name.is_empty() {
                continue;
            }
            let rule = PreprocessRule {
                category: RuleCategory::NameMask,
                pattern: Pattern::Tokens(name.split_whitespace().map(str::to_lowercase).collect()),
                replacement: NAME_PLACEHOLDER.into(),
            };
            if !self
                .rules
                .iter()
                .any(|r| r.category == RuleCategory::NameMask && r.pattern == rule.pattern)
            {
                self.rules.push(rule);
            }
        }
        self
    }

    /// Reads a one-name-per-line roster file (`#` comments allowed).
    pub fn load_roster(path: &Path) -> Result<Vec<String>> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_string)
            .collect())
    }

    pub fn roster(&self) -> Vec<String> {
        self.rules_in(RuleCategory::NameMask)
            .filter(|r| r.replacement == NAME_PLACEHOLDER)
            .map(|r| r.pattern.source())
            .collect()
    }

    pub fn rules_in(&self, category: RuleCategory) -> impl Iterator<Item = &PreprocessRule> {
        self.rules.iter().filter(move |r| r.category == category)
    }

    /// Serializes back to the TSV format; `parse(to_tsv())` gives the same rules.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        if self.mask_capitalized {
            out.push_str("#!mask_capitalized\n");
        }
        for r in &self.rules {
            out.push_str(&format!("{}\t{}\t{}\n", r.category, r.pattern.source(), r.replacement));
        }
        out
    }

    /// Content hash over the effective rule list and flags.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(b"lexicon/v1\n");
        h.update(if self.mask_capitalized {
            b"caps:1\n"
        } else {
            b"caps:0\n"
        });
        for r in &self.rules {
            h.update(format!("{}\t{}\t{}\n", r.category, r.pattern.source(), r.replacement).as_bytes());
        }
        hex::encode(h.finalize())
    }
}
