use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Corpus, Dimension, LabelVector};
use crate::error::{Error, Result};

/// Cohen's kappa with the quantities it is built from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaStats {
    pub kappa: f64,
    /// Observed agreement.
    pub p_o: f64,
    /// Chance agreement from the two marginals.
    pub p_e: f64,
    /// Chance agreement is 1 (both raters constant and identical); kappa is
    /// then set by convention rather than computed.
    pub degenerate: bool,
}

/// Kappa over two binary sequences.
///
/// Computed from integer counts so that hand-checkable cases come out exact:
/// `kappa = (n·agree − m) / (n² − m)` where `m = a₁b₁ + a₀b₀` is the
/// chance-agreement numerator. When `p_e = 1` the value is 1.0 if the raters
/// agree everywhere and 0.0 otherwise.
pub fn kappa_stats(a: &[bool], b: &[bool]) -> Result<KappaStats> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::Empty("kappa needs at least one decision"));
    }
    let n = a.len() as u128;
    let agree = a.iter().zip(b).filter(|(x, y)| x == y).count() as u128;
    let a1 = a.iter().filter(|x| **x).count() as u128;
    let b1 = b.iter().filter(|x| **x).count() as u128;
    let chance = a1 * b1 + (n - a1) * (n - b1);
    let nn = n * n;
    let p_o = agree as f64 / n as f64;
    let p_e = chance as f64 / nn as f64;
    if chance == nn {
        let kappa = if agree == n { 1.0 } else { 0.0 };
        return Ok(KappaStats {
            kappa,
            p_o,
            p_e,
            degenerate: true,
        });
    }
    let num = (n * agree) as f64 - chance as f64;
    let den = (nn - chance) as f64;
    Ok(KappaStats {
        kappa: num / den,
        p_o,
        p_e,
        degenerate: false,
    })
}

pub fn cohen_kappa(a: &[bool], b: &[bool]) -> Result<f64> {
    kappa_stats(a, b).map(|s| s.kappa)
}

/// Kappa over all `4·N` binary decisions flattened together.
pub fn pooled_kappa(a: &[LabelVector], b: &[LabelVector]) -> Result<KappaStats> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let flat = |v: &[LabelVector]| v.iter().flat_map(|l| l.as_array()).collect::<Vec<bool>>();
    kappa_stats(&flat(a), &flat(b))
}

/// Per-dimension and pooled agreement between two label sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub n_messages: usize,
    pub kappa_pooled: KappaStats,
    pub kappa_per_dimension: BTreeMap<Dimension, KappaStats>,
}

impl AgreementReport {
    pub fn between(a: &[LabelVector], b: &[LabelVector]) -> Result<Self> {
        let kappa_pooled = pooled_kappa(a, b)?;
        let mut kappa_per_dimension = BTreeMap::new();
        for dim in Dimension::ALL {
            let col = |v: &[LabelVector]| v.iter().map(|l| l.get(dim)).collect::<Vec<bool>>();
            kappa_per_dimension.insert(dim, kappa_stats(&col(a), &col(b))?);
        }
        Ok(AgreementReport {
            n_messages: a.len(),
            kappa_pooled,
            kappa_per_dimension,
        })
    }

    /// Mean of the four per-dimension values, reported next to the pooled one.
    pub fn kappa_mean(&self) -> f64 {
        self.kappa_per_dimension.values().map(|s| s.kappa).sum::<f64>() / 4.0
    }
}

/// Agreement between the primary labels and the second annotator.
pub fn agreement_report(corpus: &Corpus) -> Result<AgreementReport> {
    let mut a = Vec::with_capacity(corpus.len());
    let mut b = Vec::with_capacity(corpus.len());
    for m in &corpus.messages {
        let second = m
            .labels_b
            .ok_or_else(|| Error::Invalid(format!("message `{}` has no second label set", m.id)))?;
        a.push(m.labels);
        b.push(second);
    }
    AgreementReport::between(&a, &b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::AnnotatedMessage;
    use proptest::prelude::*;

    fn bits(v: &[u8]) -> Vec<bool> {
        v.iter().map(|b| *b == 1).collect()
    }

    /// Direct evaluation of the 2x2 contingency-table formula in floating point.
    fn table_oracle(a: &[bool], b: &[bool]) -> f64 {
        let n = a.len() as f64;
        let mut t = [[0.0f64; 2]; 2];
        for (x, y) in a.iter().zip(b) {
            t[*x as usize][*y as usize] += 1.0;
        }
        let po = (t[0][0] + t[1][1]) / n;
        let row1 = (t[1][0] + t[1][1]) / n;
        let col1 = (t[0][1] + t[1][1]) / n;
        let pe = row1 * col1 + (1.0 - row1) * (1.0 - col1);
        if (pe - 1.0).abs() < 1e-15 {
            return if (po - 1.0).abs() < 1e-15 { 1.0 } else { 0.0 };
        }
        (po - pe) / (1.0 - pe)
    }

    #[test]
    fn hand_cases() {
        let s = kappa_stats(&bits(&[1, 1, 0, 0]), &bits(&[1, 0, 0, 0])).unwrap();
        assert_eq!(s.p_o, 0.75);
        assert_eq!(s.p_e, 0.5);
        assert_eq!(s.kappa, 0.5);
        let s = kappa_stats(&bits(&[1, 0]), &bits(&[0, 1])).unwrap();
        assert_eq!((s.p_o, s.p_e, s.kappa), (0.0, 0.5, -1.0));
        assert_eq!(cohen_kappa(&bits(&[1, 0, 1]), &bits(&[1, 0, 1])).unwrap(), 1.0);
    }

    #[test]
    fn degenerate_constant_raters() {
        let s = kappa_stats(&bits(&[1, 1, 1]), &bits(&[1, 1, 1])).unwrap();
        assert!(s.degenerate);
        assert_eq!(s.kappa, 1.0);
        // different constants: p_e = 0, not degenerate
        let s = kappa_stats(&bits(&[1, 1]), &bits(&[0, 0])).unwrap();
        assert!(!s.degenerate);
        assert_eq!(s.kappa, 0.0);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            cohen_kappa(&[true], &[true, false]),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(matches!(cohen_kappa(&[], &[]), Err(Error::Empty(_))));
    }

    #[test]
    fn report_needs_second_labels() {
        let c = Corpus::new(vec![AnnotatedMessage::new("a", "x", LabelVector::NONE)]).unwrap();
        assert!(agreement_report(&c).is_err());
    }

    #[test]
    fn identical_annotators_agree_fully() {
        let mut c = crate::corpus::fixtures::sample_messages();
        for m in &mut c.messages {
            m.labels_b = Some(m.labels);
        }
        let r = agreement_report(&c).unwrap();
        assert_eq!(r.kappa_pooled.kappa, 1.0);
        assert!(r.kappa_per_dimension.values().all(|s| s.kappa == 1.0));
    }

    #[test]
    fn per_dimension_is_columnwise() {
        // COD agrees on both messages, MPM disagrees on both.
        let a = [
            LabelVector::new(true, true, false, false),
            LabelVector::new(false, false, false, true),
        ];
        let b = [
            LabelVector::new(true, false, false, false),
            LabelVector::new(false, true, false, true),
        ];
        let r = AgreementReport::between(&a, &b).unwrap();
        for dim in Dimension::ALL {
            let ca: Vec<bool> = a.iter().map(|l| l.get(dim)).collect();
            let cb: Vec<bool> = b.iter().map(|l| l.get(dim)).collect();
            assert_eq!(r.kappa_per_dimension[&dim].kappa, cohen_kappa(&ca, &cb).unwrap());
        }
        assert_eq!(r.kappa_per_dimension[&Dimension::Cod].kappa, 1.0);
        assert_eq!(r.kappa_per_dimension[&Dimension::Mpm].kappa, -1.0);
    }

    proptest! {
        #[test]
        fn matches_contingency_oracle(pairs in proptest::collection::vec(any::<(bool, bool)>(), 1..=12)) {
            let (a, b): (Vec<bool>, Vec<bool>) = pairs.into_iter().unzip();
            let k = cohen_kappa(&a, &b).unwrap();
            prop_assert!((k - table_oracle(&a, &b)).abs() < 1e-12);
            prop_assert!((-1.0..=1.0).contains(&k));
            prop_assert_eq!(k, cohen_kappa(&b, &a).unwrap());
        }

        #[test]
        fn self_agreement_is_one(a in proptest::collection::vec(any::<bool>(), 2..40)) {
            prop_assume!(a.iter().any(|x| *x) && a.iter().any(|x| !*x));
            prop_assert_eq!(cohen_kappa(&a, &a).unwrap(), 1.0);
        }
    }
}
