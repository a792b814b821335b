use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const MASK: &str = "[MASK]";

const MAX_WORD_CHARS: usize = 100;

/// Cased WordPiece tokenizer following the BERT basic-tokenizer rules:
/// whitespace split, punctuation and CJK characters as their own words,
/// then greedy longest-match subwords with `##` continuations.
#[derive(Debug, Clone, PartialEq)]
pub struct WordPiece {
    vocab: Vec<String>,
    index: HashMap<String, u32>,
    unk: u32,
    cls: u32,
    sep: u32,
}

fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(c as u32, 0x00A1..=0x00BF | 0x2010..=0x2027 | 0x2030..=0x205E | 0x3001..=0x3003 | 0x3008..=0x3011 | 0xFF01..=0xFF0F)
}

fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x4E00..=0x9FFF | 0x3400..=0x4DBF | 0x20000..=0x2A6DF | 0x2A700..=0x2B73F
        | 0x2B740..=0x2B81F | 0x2B820..=0x2CEAF | 0xF900..=0xFAFF | 0x2F800..=0x2FA1F)
}

/// Splits text into words the way the BERT basic tokenizer does for cased
/// checkpoints.
pub fn basic_tokenize(text: &str) -> Vec<String> {
    let mut words = Vec::new();
    let mut cur = String::new();
    let flush = |cur: &mut String, words: &mut Vec<String>| {
        if !cur.is_empty() {
            words.push(std::mem::take(cur));
        }
    };
    for c in text.chars() {
        if c == '\0' || c == '\u{FFFD}' || (c.is_control() && !c.is_whitespace()) {
            continue;
        }
        if c.is_whitespace() {
            flush(&mut cur, &mut words);
        } else if is_punct(c) || is_cjk(c) {
            flush(&mut cur, &mut words);
            words.push(c.to_string());
        } else {
            cur.push(c);
        }
    }
    flush(&mut cur, &mut words);
    words
}

impl WordPiece {
    pub fn new(vocab: Vec<String>) -> Result<WordPiece> {
        let mut index = HashMap::with_capacity(vocab.len());
        for (i, tok) in vocab.iter().enumerate() {
            index.entry(tok.clone()).or_insert(i as u32);
        }
        let id = |t: &str| {
            index
                .get(t)
                .copied()
                .ok_or_else(|| Error::Checkpoint(format!("vocabulary lacks the special token {t}")))
        };
        let (unk, cls, sep) = (id(UNK)?, id(CLS)?, id(SEP)?);
        Ok(WordPiece {
            vocab,
            index,
            unk,
            cls,
            sep,
        })
    }

    /// Reads a `vocab.txt` with one token per line.
    pub fn load(path: &Path) -> Result<WordPiece> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        WordPiece::new(text.lines().map(|l| l.trim_end_matches('\r').to_string()).collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut body = self.vocab.join("\n");
        body.push('\n');
        fs::write(path, body).map_err(|e| Error::io(path, e))
    }

    /// Builds a vocabulary from training texts: special tokens, every word
    /// seen at least `min_count` times (most frequent first, capped at
    /// `max_words`), then every character alone and as a `##` continuation so
    /// that nothing seen in training maps to `[UNK]`.
    pub fn build<S: AsRef<str>>(texts: &[S], min_count: usize, max_words: usize) -> WordPiece {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        let mut chars: BTreeMap<char, ()> = BTreeMap::new();
        for t in texts {
            for w in basic_tokenize(t.as_ref()) {
                chars.extend(w.chars().map(|c| (c, ())));
                *counts.entry(w).or_default() += 1;
            }
        }
        let mut words: Vec<(String, usize)> = counts.into_iter().filter(|(_, n)| *n >= min_count).collect();
        words.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        words.truncate(max_words);
        let mut vocab: Vec<String> = [PAD, UNK, CLS, SEP, MASK].iter().map(|s| s.to_string()).collect();
        vocab.extend(words.into_iter().map(|(w, _)| w));
        for &c in chars.keys() {
            vocab.push(c.to_string());
            vocab.push(format!("##{c}"));
        }
        let mut seen = std::collections::HashSet::new();
        vocab.retain(|t| seen.insert(t.clone()));
        WordPiece::new(vocab).expect("specials present")
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn token(&self, id: u32) -> &str {
        &self.vocab[id as usize]
    }

    fn word_pieces(&self, word: &str, out: &mut Vec<u32>) {
        let chars: Vec<char> = word.chars().collect();
        if chars.len() > MAX_WORD_CHARS {
            out.push(self.unk);
            return;
        }
        let mut pieces = Vec::new();
        let mut start = 0;
        while start < chars.len() {
            let mut end = chars.len();
            let mut found = None;
            while start < end {
                let mut sub: String = chars[start..end].iter().collect();
                if start > 0 {
                    sub.insert_str(0, "##");
                }
                if let Some(&id) = self.index.get(&sub) {
                    found = Some(id);
                    break;
                }
                end -= 1;
            }
            match found {
                Some(id) => pieces.push(id),
                None => {
                    out.push(self.unk);
                    return;
                }
            }
            start = end;
        }
        out.extend(pieces);
    }

    /// Subword ids without special markers.
    pub fn tokenize(&self, text: &str) -> Vec<u32> {
        let mut out = Vec::new();
        for w in basic_tokenize(text) {
            self.word_pieces(&w, &mut out);
        }
        out
    }

    /// `[CLS] pieces [SEP]`, keeping the leading pieces when longer than
    /// `max_len`.
    pub fn encode(&self, text: &str, max_len: usize) -> Vec<u32> {
        let mut ids = vec![self.cls];
        let mut pieces = self.tokenize(text);
        pieces.truncate(max_len.saturating_sub(2));
        ids.extend(pieces);
        ids.push(self.sep);
        ids
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> WordPiece {
        let v = [
            PAD, UNK, CLS, SEP, MASK, "un", "##aff", "##able", "hello", "!", "a", "##b",
        ];
        WordPiece::new(v.iter().map(|s| s.to_string()).collect()).unwrap()
    }

    #[test]
    fn basic_split() {
        assert_eq!(
            basic_tokenize("Hi, {{NAME}}!\tok"),
            ["Hi", ",", "{", "{", "NAME", "}", "}", "!", "ok"]
        );
        assert_eq!(basic_tokenize("  "), Vec::<String>::new());
        assert_eq!(basic_tokenize("a\u{0007}b 中文"), ["ab", "中", "文"]);
    }

    #[test]
    fn greedy_longest_match() {
        let t = tiny();
        assert_eq!(t.tokenize("unaffable hello!"), vec![5, 6, 7, 8, 9]);
        assert_eq!(t.tokenize("abb"), vec![10, 11, 11]);
        assert_eq!(t.tokenize("unx hello"), vec![1, 8]);
    }

    #[test]
    fn markers_and_truncation() {
        let t = tiny();
        assert_eq!(t.encode("", 200), vec![2, 3]);
        let long = "hello ".repeat(300);
        let ids = t.encode(&long, 200);
        assert_eq!(ids.len(), 200);
        assert_eq!((ids[0], ids[199]), (2, 3));
        assert_eq!(t.encode(&long, 200), ids);
    }

    #[test]
    fn built_vocab_covers_training_text() {
        let texts = ["we have like 15 mins left", "{{NAME}} ok?"];
        let t = WordPiece::build(&texts, 1, 1000);
        for s in texts {
            assert!(!t.tokenize(s).contains(&t.unk));
        }
        assert!(!t.tokenize("lefts").contains(&t.unk));
        assert!(WordPiece::new(vec!["x".into()]).is_err());
    }
}
