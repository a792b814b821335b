use std::collections::HashMap;
use std::str::FromStr;

use rand::{RngCore, SeedableRng};
use rand_pcg::Pcg64;
use serde::{Deserialize, Serialize};

use super::Corpus;
use crate::error::{Error, Result};

/// What gets shuffled and allocated to partitions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitUnit {
    #[default]
    Message,
    /// Whole teams go to one partition, so no team leaks across splits.
    Team,
}

impl FromStr for SplitUnit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "message" => Ok(SplitUnit::Message),
            "team" => Ok(SplitUnit::Team),
            other => Err(Error::Invalid(format!("unknown split unit `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    /// Train, validation, test.
    pub ratios: [f64; 3],
    pub seed: u64,
    #[serde(default)]
    pub unit: SplitUnit,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            ratios: [0.6, 0.2, 0.2],
            seed: 0,
            unit: SplitUnit::Message,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if self.ratios.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(Error::Invalid(format!(
                "split ratios must be non-negative, got {:?}",
                self.ratios
            )));
        }
        let sum: f64 = self.ratios.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Invalid(format!("split ratios must sum to 1, got {sum}")));
        }
        Ok(())
    }
}

fn round_half_away(x: f64) -> usize {
    let floor = x.floor();
    // 0.35 * 10 is 3.4999999999999996 in binary; treat it as the tie it denotes
    if (x - floor - 0.5).abs() < 1e-9 {
        (floor + 1.0) as usize
    } else {
        x.round() as usize
    }
}

/// Partition sizes for `n` units: validation and test are rounded half away
/// from zero, train takes the remainder, and any empty partition with a
/// non-zero ratio borrows one unit from the currently largest partition.
pub fn split_sizes(n: usize, spec: &SplitSpec) -> Result<[usize; 3]> {
    spec.validate()?;
    let needed = spec.ratios.iter().filter(|r| **r > 0.0).count();
    if n < needed {
        return Err(Error::Invalid(format!(
            "cannot split {n} units into {needed} non-empty partitions"
        )));
    }
    let mut val = round_half_away(spec.ratios[1] * n as f64);
    let mut test = round_half_away(spec.ratios[2] * n as f64);
    while val + test > n {
        if test >= val {
            test -= 1;
        } else {
            val -= 1;
        }
    }
    let mut sizes = [n - val - test, val, test];
    for i in 0..3 {
        if spec.ratios[i] > 0.0 && sizes[i] == 0 {
            // first index wins ties, so train is raided before val and test
            let donor = (0..3).fold(0, |best, j| if sizes[j] > sizes[best] { j } else { best });
            sizes[donor] -= 1;
            sizes[i] += 1;
        }
    }
    Ok(sizes)
}

/// Fisher-Yates driven by PCG-XSL-RR-128/64 (`rand_pcg::Pcg64`) seeded with
/// `seed_from_u64`. Index `j` for position `i` is `(next_u64 · (i+1)) >> 64`.
pub(crate) fn shuffled_indices(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = Pcg64::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = ((rng.next_u64() as u128 * (i as u128 + 1)) >> 64) as usize;
        order.swap(i, j);
    }
    order
}

/// Splits into (train, val, test). Each output keeps the input's message order
/// and metadata.
pub fn split_corpus(corpus: &Corpus, spec: &SplitSpec) -> Result<(Corpus, Corpus, Corpus)> {
    // unit index for every message
    let (unit_of, n_units) = match spec.unit {
        SplitUnit::Message => ((0..corpus.len()).collect::<Vec<_>>(), corpus.len()),
        SplitUnit::Team => {
            let mut ids: HashMap<&str, usize> = HashMap::new();
            let unit_of = corpus
                .messages
                .iter()
                .map(|m| {
                    let next = ids.len();
                    *ids.entry(m.team_id.as_str()).or_insert(next)
                })
                .collect::<Vec<_>>();
            (unit_of, ids.len())
        }
    };
    let sizes = split_sizes(n_units, spec)?;
    let order = shuffled_indices(n_units, spec.seed);
    let mut part_of_unit = vec![0usize; n_units];
    for (rank, unit) in order.iter().enumerate() {
        part_of_unit[*unit] = if rank < sizes[0] {
            0
        } else if rank < sizes[0] + sizes[1] {
            1
        } else {
            2
        };
    }
    let mut parts: [Vec<_>; 3] = Default::default();
    for (m, unit) in corpus.messages.iter().zip(&unit_of) {
        parts[part_of_unit[*unit]].push(m.clone());
    }
    let [train, val, test] = parts;
    let mut out = (
        corpus.with_messages(train),
        corpus.with_messages(val),
        corpus.with_messages(test),
    );
    for (name, c) in [("train", &mut out.0), ("val", &mut out.1), ("test", &mut out.2)] {
        c.meta.insert("split.partition".into(), name.into());
        c.meta.insert("split.seed".into(), spec.seed.to_string());
        c.meta.insert(
            "split.ratios".into(),
            format!("{}/{}/{}", spec.ratios[0], spec.ratios[1], spec.ratios[2]),
        );
    }
    Ok(out)
}
