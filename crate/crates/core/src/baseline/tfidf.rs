use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sparse document vector: `(column, weight)` sorted by column.
pub type SparseVec = Vec<(u32, f64)>;

/// Smoothed-idf TF-IDF over whitespace tokens with L2-normalized rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfidfModel {
    pub vocabulary: BTreeMap<String, u32>,
    pub idf: Vec<f64>,
    pub doc_count: usize,
}

impl TfidfModel {
    /// Columns are assigned in lexicographic token order.
    pub fn fit<S: AsRef<str>>(texts: &[S]) -> Result<TfidfModel> {
        if texts.is_empty() {
            return Err(Error::Empty("training corpus"));
        }
        let mut df: BTreeMap<&str, usize> = BTreeMap::new();
        for text in texts {
            let mut seen: Vec<&str> = text.as_ref().split_whitespace().collect();
            seen.sort_unstable();
            seen.dedup();
            for tok in seen {
                *df.entry(tok).or_default() += 1;
            }
        }
        let n = texts.len() as f64;
        let mut vocabulary = BTreeMap::new();
        let mut idf = Vec::with_capacity(df.len());
        for (i, (tok, d)) in df.into_iter().enumerate() {
            vocabulary.insert(tok.to_string(), i as u32);
            idf.push(((1.0 + n) / (1.0 + d as f64)).ln() + 1.0);
        }
        Ok(TfidfModel {
            vocabulary,
            idf,
            doc_count: texts.len(),
        })
    }

    pub fn n_features(&self) -> usize {
        self.idf.len()
    }

    /// Out-of-vocabulary tokens are ignored; a text with no known token maps
    /// to the zero vector.
    pub fn transform(&self, text: &str) -> SparseVec {
        let mut tf: HashMap<u32, f64> = HashMap::new();
        for tok in text.split_whitespace() {
            if let Some(&col) = self.vocabulary.get(tok) {
                *tf.entry(col).or_default() += 1.0;
            }
        }
        let mut v: SparseVec = tf.into_iter().map(|(c, t)| (c, t * self.idf[c as usize])).collect();
        v.sort_unstable_by_key(|&(c, _)| c);
        let norm = v.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
        if norm > 0.0 {
            for (_, w) in &mut v {
                *w /= norm;
            }
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        if self.idf.len() != self.vocabulary.len() {
            return Err(Error::Invalid("tfidf: idf length differs from vocabulary size".into()));
        }
        if self.vocabulary.values().any(|&c| c as usize >= self.idf.len()) {
            return Err(Error::Invalid("tfidf: column index out of range".into()));
        }
        Ok(())
    }
}
