//! Rule-based normalization of raw chat text.
//!
//! Four rule families run in a fixed order: name masking, then (after
//! lowercasing) abbreviation expansion, local-term replacement and finally
//! emoticon and punctuation tagging. Every `{{placeholder}}` emitted along
//! the way is opaque to later rules, which makes the whole transformation
//! idempotent for lexicons whose replacements are not themselves patterns.

mod lexicon;

use std::sync::OnceLock;

use regex::Regex;

pub use lexicon::{Lexicon, Pattern, PreprocessRule, RuleCategory, NAME_PLACEHOLDER};

use crate::corpus::Corpus;

/// Corpus metadata key holding the lexicon fingerprint.
pub const LEXICON_FINGERPRINT_KEY: &str = "pipeline.lexicon";

pub(crate) fn placeholder_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{\{[A-Za-z_]+\}\}").unwrap())
}

pub fn is_placeholder(s: &str) -> bool {
    placeholder_regex()
        .find(s)
        .is_some_and(|m| m.start() == 0 && m.end() == s.len())
}

/// Lowercases characters whose lowercase form is one char of the same width,
/// so byte offsets stay valid between the folded and the original string.
fn fold(s: &str) -> String {
    s.chars()
        .map(|c| {
            let mut lower = c.to_lowercase();
            match (lower.next(), lower.next()) {
                (Some(l), None) if l.len_utf8() == c.len_utf8() => l,
                _ => c,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Word,
    Punct,
    Emoticon,
    Placeholder,
}

#[derive(Debug, Clone)]
struct Tok {
    gap: String,
    text: String,
    kind: Kind,
}

/// Length of a literal or regex match of `rule` starting exactly at `pos`.
fn match_at(rule: &PreprocessRule, folded: &str, pos: usize) -> Option<usize> {
    match &rule.pattern {
        Pattern::Literal(lit) => {
            if !folded[pos..].starts_with(lit.as_str()) {
                return None;
            }
            let end = pos + lit.len();
            let first_alnum = lit.chars().next().is_some_and(char::is_alphanumeric);
            let last_alnum = lit.chars().last().is_some_and(char::is_alphanumeric);
            let before_ok = !first_alnum || !folded[..pos].chars().last().is_some_and(char::is_alphanumeric);
            let after_ok = !last_alnum || !folded[end..].chars().next().is_some_and(char::is_alphanumeric);
            (before_ok && after_ok).then_some(lit.len())
        }
        Pattern::Regex { re, .. } => re
            .find_at(folded, pos)
            .filter(|m| m.start() == pos && m.end() > pos)
            .map(|m| m.end() - pos),
        Pattern::Tokens(_) => None,
    }
}

/// Longest match among `rules` at `pos`; earlier rules win ties.
fn best_match<'a>(rules: &[&'a PreprocessRule], folded: &str, pos: usize) -> Option<(usize, &'a PreprocessRule)> {
    let mut best: Option<(usize, &PreprocessRule)> = None;
    for rule in rules {
        if let Some(len) = match_at(rule, folded, pos) {
            if best.is_none_or(|(l, _)| len > l) {
                best = Some((len, rule));
            }
        }
    }
    best
}

fn push_piece(out: &mut Vec<Tok>, gap: &mut String, text: &str, kind: Kind) {
    out.push(Tok {
        gap: std::mem::take(gap),
        text: text.to_string(),
        kind,
    });
}

/// Splits a segment free of whitespace and placeholders into emoticons,
/// punctuation characters and word cores.
fn split_segment(seg: &str, emoticons: &[&PreprocessRule], gap: &mut String, out: &mut Vec<Tok>) {
    let folded = fold(seg);
    let mut plain_start = 0;
    let mut pos = 0;
    let flush_plain = |plain: &str, gap: &mut String, out: &mut Vec<Tok>| {
        if plain.is_empty() {
            return;
        }
        let core_start = plain.find(is_word_char_alnum).unwrap_or(plain.len());
        let core_end = plain
            .rfind(is_word_char_alnum)
            .map(|i| i + plain[i..].chars().next().unwrap().len_utf8())
            .unwrap_or(core_start);
        for c in plain[..core_start].chars() {
            push_piece(out, gap, &c.to_string(), Kind::Punct);
        }
        if core_end > core_start {
            push_piece(out, gap, &plain[core_start..core_end], Kind::Word);
        }
        for c in plain[core_end.max(core_start)..].chars() {
            push_piece(out, gap, &c.to_string(), Kind::Punct);
        }
    };
    while pos < seg.len() {
        if let Some((len, _)) = best_match(emoticons, &folded, pos) {
            flush_plain(&seg[plain_start..pos], gap, out);
            push_piece(out, gap, &seg[pos..pos + len], Kind::Emoticon);
            pos += len;
            plain_start = pos;
        } else {
            pos += seg[pos..].chars().next().unwrap().len_utf8();
        }
    }
    flush_plain(&seg[plain_start..], gap, out);
}

/// Word cores start and end on an alphanumeric character; apostrophes and
/// underscores are kept only inside a word.
fn is_word_char_alnum(c: char) -> bool {
    c.is_alphanumeric()
}

fn tokenize(text: &str, emoticons: &[&PreprocessRule]) -> (Vec<Tok>, String) {
    let mut out = Vec::new();
    let mut gap = String::new();
    let mut rest = text;
    while !rest.is_empty() {
        let ws_end = rest.find(|c: char| !c.is_whitespace()).unwrap_or(rest.len());
        gap.push_str(&rest[..ws_end]);
        rest = &rest[ws_end..];
        if rest.is_empty() {
            break;
        }
        let chunk_end = rest.find(char::is_whitespace).unwrap_or(rest.len());
        let chunk = &rest[..chunk_end];
        rest = &rest[chunk_end..];

        let mut last = 0;
        for m in placeholder_regex().find_iter(chunk) {
            split_segment(&chunk[last..m.start()], emoticons, &mut gap, &mut out);
            push_piece(&mut out, &mut gap, m.as_str(), Kind::Placeholder);
            last = m.end();
        }
        split_segment(&chunk[last..], emoticons, &mut gap, &mut out);
    }
    (out, gap)
}

fn render(tokens: &[Tok], trailing: &str) -> String {
    let mut s = String::new();
    for t in tokens {
        s.push_str(&t.gap);
        s.push_str(&t.text);
    }
    s.push_str(trailing);
    s
}

/// Number of tokens a token-category rule consumes at `i`, if it matches.
fn token_match(rule: &PreprocessRule, tokens: &[Tok], i: usize) -> Option<usize> {
    match &rule.pattern {
        Pattern::Tokens(words) => {
            if i + words.len() > tokens.len() {
                return None;
            }
            for (j, w) in words.iter().enumerate() {
                let t = &tokens[i + j];
                if t.kind != Kind::Word || (j > 0 && t.gap.is_empty()) || fold(&t.text) != *w {
                    return None;
                }
            }
            Some(words.len())
        }
        Pattern::Regex { re, .. } => {
            let t = &tokens[i];
            (t.kind == Kind::Word && re.is_match(&fold(&t.text))).then_some(1)
        }
        Pattern::Literal(_) => None,
    }
}

fn replacement_for(rule: &PreprocessRule, matched: &str) -> String {
    match &rule.pattern {
        Pattern::Regex { re, .. } => re.replace(matched, rule.replacement.as_str()).into_owned(),
        _ => rule.replacement.clone(),
    }
}

fn is_sentence_start(tokens: &[Tok], i: usize) -> bool {
    tokens[..i]
        .iter()
        .rev()
        .find(|t| t.kind != Kind::Emoticon)
        .is_none_or(|t| t.kind == Kind::Punct && matches!(t.text.as_str(), "." | "!" | "?"))
}

fn looks_like_name(tok: &Tok) -> bool {
    let mut chars = tok.text.chars();
    let first_upper = chars.next().is_some_and(char::is_uppercase);
    first_upper && tok.text != "I" && !tok.text.starts_with("I'")
}

/// Runs one token category left to right over `tokens`.
fn apply_token_rules(tokens: Vec<Tok>, rules: &[&PreprocessRule], mask_capitalized: bool) -> Vec<Tok> {
    let mut out: Vec<Tok> = Vec::with_capacity(tokens.len());
    let mut pad_next = false;
    let mut i = 0;
    while i < tokens.len() {
        let mut best: Option<(usize, &PreprocessRule)> = None;
        if tokens[i].kind == Kind::Word {
            for rule in rules {
                if let Some(n) = token_match(rule, &tokens, i) {
                    if best.is_none_or(|(b, _)| n > b) {
                        best = Some((n, rule));
                    }
                }
            }
        }
        let replacement = match best {
            Some((n, rule)) => {
                let matched: Vec<&str> = tokens[i..i + n].iter().map(|t| t.text.as_str()).collect();
                Some((n, replacement_for(rule, &matched.join(" "))))
            }
            None if mask_capitalized
                && tokens[i].kind == Kind::Word
                && looks_like_name(&tokens[i])
                && !is_sentence_start(&tokens, i) =>
            {
                Some((1, NAME_PLACEHOLDER.to_string()))
            }
            None => None,
        };
        match replacement {
            Some((n, rep)) => {
                let mut gap = tokens[i].gap.clone();
                let pieces: Vec<&str> = rep.split_whitespace().collect();
                for (k, piece) in pieces.iter().enumerate() {
                    let kind = if is_placeholder(piece) {
                        Kind::Placeholder
                    } else {
                        Kind::Word
                    };
                    if k > 0
                        || (gap.is_empty()
                            && (pad_next || kind == Kind::Placeholder)
                            && out
                                .last()
                                .is_some_and(|t: &Tok| matches!(t.kind, Kind::Word | Kind::Placeholder)))
                    {
                        gap = " ".into();
                    }
                    out.push(Tok {
                        gap: std::mem::take(&mut gap),
                        text: piece.to_string(),
                        kind,
                    });
                    pad_next = kind == Kind::Placeholder;
                }
                i += n;
            }
            None => {
                let mut t = tokens[i].clone();
                if pad_next && t.gap.is_empty() && matches!(t.kind, Kind::Word | Kind::Placeholder) {
                    t.gap = " ".into();
                }
                pad_next = false;
                out.push(t);
                i += 1;
            }
        }
    }
    out
}

/// Literal/regex tagging over the free text between placeholders; repeated
/// matches of the same rule collapse into one replacement.
fn apply_tagging(text: &str, rules: &[&PreprocessRule]) -> String {
    if rules.is_empty() {
        return text.to_string();
    }
    let mut out = String::with_capacity(text.len() + 16);
    let mut pad_next = false;
    let push_str = |out: &mut String, s: &str, pad_next: &mut bool| {
        if *pad_next && s.chars().next().is_some_and(|c| !c.is_whitespace()) {
            out.push(' ');
        }
        *pad_next = false;
        out.push_str(s);
    };

    let mut last = 0;
    let mut segments: Vec<(bool, &str)> = Vec::new();
    for m in placeholder_regex().find_iter(text) {
        segments.push((false, &text[last..m.start()]));
        segments.push((true, m.as_str()));
        last = m.end();
    }
    segments.push((false, &text[last..]));

    for (is_ph, seg) in segments {
        if is_ph {
            push_str(&mut out, seg, &mut pad_next);
            continue;
        }
        let folded = fold(seg);
        let mut pos = 0;
        while pos < seg.len() {
            match best_match(rules, &folded, pos) {
                Some((len, rule)) => {
                    let rep = replacement_for(rule, &folded[pos..pos + len]);
                    pos += len;
                    while let Some(l) = match_at(rule, &folded, pos) {
                        pos += l;
                    }
                    let tag = is_placeholder(&rep);
                    if tag {
                        if out.chars().last().is_some_and(|c| !c.is_whitespace()) {
                            out.push(' ');
                        }
                        pad_next = false;
                    }
                    push_str(&mut out, &rep, &mut pad_next);
                    pad_next = tag;
                }
                None => {
                    let c = seg[pos..].chars().next().unwrap();
                    push_str(&mut out, &seg[pos..pos + c.len_utf8()], &mut pad_next);
                    pos += c.len_utf8();
                }
            }
        }
    }
    out
}

/// Normalizes one message. Total and deterministic.
pub fn preprocess_message(text: &str, lexicon: &Lexicon) -> String {
    let emoticons: Vec<&PreprocessRule> = lexicon.rules_in(RuleCategory::EmotionPunctTag).collect();
    let (mut tokens, trailing) = tokenize(text, &emoticons);

    let names: Vec<&PreprocessRule> = lexicon.rules_in(RuleCategory::NameMask).collect();
    tokens = apply_token_rules(tokens, &names, lexicon.mask_capitalized);

    for t in &mut tokens {
        if t.kind != Kind::Placeholder {
            t.text = t.text.to_lowercase();
        }
    }

    for category in [RuleCategory::Abbreviation, RuleCategory::LocalTerm] {
        let rules: Vec<&PreprocessRule> = lexicon.rules_in(category).collect();
        if !rules.is_empty() {
            tokens = apply_token_rules(tokens, &rules, false);
        }
    }

    apply_tagging(&render(&tokens, &trailing), &emoticons)
}

/// Normalizes every message text and records the lexicon fingerprint in
/// the corpus metadata along with the lexicon itself. Labels are left alone.
pub fn preprocess_corpus(corpus: &Corpus, lexicon: &Lexicon) -> Corpus {
    let messages = corpus
        .messages
        .iter()
        .map(|m| {
            let mut m = m.clone();
            m.text = preprocess_message(&m.text, lexicon);
            m
        })
        .collect();
    crate::pipeline::record_lexicon(corpus.with_messages(messages), lexicon)
}
