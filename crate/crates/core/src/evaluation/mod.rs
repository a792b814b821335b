//! Macro-averaged multilabel metrics, the model-by-feature comparison grid,
//! and model-versus-human agreement.

mod table;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{AgreementReport, Corpus, Dimension, LabelVector};
use crate::error::{Error, Result};
use crate::model::{Classifier, ModelKind};

pub use table::render_table;

/// Free-form provenance stamped into reports (artifact paths, seeds,
/// fingerprints, input hashes).
pub type Provenance = BTreeMap<String, serde_json::Value>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    /// True when any of precision, recall or F1 was 0/0 and set to 0.
    pub degenerate: bool,
}

impl DimensionMetrics {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize, tn: usize) -> Self {
        let ratio = |num: f64, den: f64| if den == 0.0 { (0.0, true) } else { (num / den, false) };
        let (precision, dp) = ratio(tp as f64, (tp + fp) as f64);
        let (recall, dr) = ratio(tp as f64, (tp + fn_) as f64);
        let (f1, df) = ratio(2.0 * precision * recall, precision + recall);
        DimensionMetrics {
            precision,
            recall,
            f1,
            tp,
            fp,
            fn_,
            tn,
            degenerate: dp || dr || df,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n_messages: usize,
    pub per_dimension: BTreeMap<Dimension, DimensionMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    /// Mean of the per-dimension F1 values.
    pub macro_f1: f64,
    /// Mismatched label positions over `4 * n_messages`.
    pub hamming_loss: f64,
}

impl MetricsReport {
    pub fn dimension(&self, d: Dimension) -> &DimensionMetrics {
        &self.per_dimension[&d]
    }
}

pub fn evaluate(preds: &[LabelVector], golds: &[LabelVector]) -> Result<MetricsReport> {
    if preds.len() != golds.len() {
        return Err(Error::LengthMismatch {
            left: preds.len(),
            right: golds.len(),
        });
    }
    if preds.is_empty() {
        return Err(Error::Empty("predictions"));
    }
    let mut per_dimension = BTreeMap::new();
    let mut mismatches = 0usize;
    for d in Dimension::ALL {
        let mut c = [[0usize; 2]; 2];
        for (p, g) in preds.iter().zip(golds) {
            c[p.get(d) as usize][g.get(d) as usize] += 1;
        }
        mismatches += c[1][0] + c[0][1];
        per_dimension.insert(d, DimensionMetrics::from_counts(c[1][1], c[1][0], c[0][1], c[0][0]));
    }
    let mean = |f: fn(&DimensionMetrics) -> f64| per_dimension.values().map(f).sum::<f64>() / 4.0;
    Ok(MetricsReport {
        n_messages: preds.len(),
        macro_precision: mean(|m| m.precision),
        macro_recall: mean(|m| m.recall),
        macro_f1: mean(|m| m.f1),
        hamming_loss: mismatches as f64 / (4 * preds.len()) as f64,
        per_dimension,
    })
}

/// Metrics plus model-versus-gold kappa for one model on one test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    #[serde(flatten)]
    pub metrics: MetricsReport,
    pub kappa_pooled: f64,
    pub kappa_per_dimension: BTreeMap<Dimension, f64>,
    pub provenance: Provenance,
}

impl EvaluationReport {
    pub fn new(preds: &[LabelVector], golds: &[LabelVector], provenance: Provenance) -> Result<Self> {
        let metrics = evaluate(preds, golds)?;
        let agreement = AgreementReport::between(preds, golds)?;
        Ok(EvaluationReport {
            metrics,
            kappa_pooled: agreement.kappa_pooled.kappa,
            kappa_per_dimension: agreement
                .kappa_per_dimension
                .iter()
                .map(|(d, s)| (*d, s.kappa))
                .collect(),
            provenance,
        })
    }
}

/// Scores a trained model against the gold labels of `test`. The test corpus
/// is first brought to the model's preparation stage.
pub fn evaluate_model(model: &dyn Classifier, test: &Corpus, provenance: Provenance) -> Result<EvaluationReport> {
    let preds: Vec<LabelVector> = model.predict_corpus(test)?.into_iter().map(|p| p.labels).collect();
    EvaluationReport::new(&preds, &test.labels(), provenance)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonCell {
    pub model: ModelKind,
    pub features: bool,
    pub report: EvaluationReport,
}

/// The four (model, feature condition) cells evaluated on one test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub n_test: usize,
    pub cells: Vec<ComparisonCell>,
    pub provenance: Provenance,
}

/// One model to place in the comparison grid.
pub struct GridEntry<'a> {
    pub model: ModelKind,
    pub features: bool,
    pub classifier: &'a dyn Classifier,
    pub provenance: Provenance,
}

pub fn compare(entries: Vec<GridEntry<'_>>, test: &Corpus, provenance: Provenance) -> Result<ComparisonReport> {
    let mut seen = Vec::new();
    for e in &entries {
        if seen.contains(&(e.model, e.features)) {
            return Err(Error::Invalid(format!(
                "comparison grid has two {} models with features {}",
                e.model,
                on_off(e.features)
            )));
        }
        seen.push((e.model, e.features));
    }
    for m in [ModelKind::Rf, ModelKind::Transformer] {
        for f in [false, true] {
            if !seen.contains(&(m, f)) {
                return Err(Error::Invalid(format!(
                    "comparison grid lacks a {m} model with features {}",
                    on_off(f)
                )));
            }
        }
    }
    let mut cells = entries
        .into_iter()
        .map(|e| {
            let report = evaluate_model(e.classifier, test, e.provenance)?;
            Ok(ComparisonCell {
                model: e.model,
                features: e.features,
                report,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    cells.sort_by_key(|c| (c.features, c.model));
    Ok(ComparisonReport {
        n_test: test.len(),
        cells,
        provenance,
    })
}

impl ComparisonReport {
    pub fn cell(&self, model: ModelKind, features: bool) -> Option<&ComparisonCell> {
        self.cells.iter().find(|c| c.model == model && c.features == features)
    }

    pub fn render(&self) -> String {
        render_table(self)
    }
}

pub(crate) fn on_off(b: bool) -> &'static str {
    if b {
        "on"
    } else {
        "off"
    }
}

/// Model predictions on a human-labeled corpus, scored as a second rater.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnseenAgreement {
    pub kappa_pooled: f64,
    pub kappa_per_dimension: BTreeMap<Dimension, f64>,
    pub metrics: MetricsReport,
    pub provenance: Provenance,
}

impl From<EvaluationReport> for UnseenAgreement {
    fn from(r: EvaluationReport) -> Self {
        UnseenAgreement {
            kappa_pooled: r.kappa_pooled,
            kappa_per_dimension: r.kappa_per_dimension,
            metrics: r.metrics,
            provenance: r.provenance,
        }
    }
}

/// The unseen corpus is prepared with the model's lexicon and no added
/// features beyond what the model itself was trained with.
pub fn unseen_agreement(model: &dyn Classifier, unseen: &Corpus, provenance: Provenance) -> Result<UnseenAgreement> {
    if unseen.is_empty() {
        return Err(Error::Empty("unseen corpus"));
    }
    Ok(evaluate_model(model, unseen, provenance)?.into())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lv(b: [u8; 4]) -> LabelVector {
        LabelVector::from_bits(b).unwrap()
    }

    #[test]
    fn worked_example() {
        let golds = [lv([1, 0, 1, 0]), lv([0, 1, 0, 1]), lv([1, 1, 0, 0])];
        let preds = [lv([1, 0, 0, 0]), lv([0, 1, 0, 1]), lv([0, 1, 0, 1])];
        let r = evaluate(&preds, &golds).unwrap();
        let f1: Vec<f64> = Dimension::ALL.iter().map(|&d| r.dimension(d).f1).collect();
        for (got, want) in f1.iter().zip([2.0 / 3.0, 1.0, 0.0, 2.0 / 3.0]) {
            assert!((got - want).abs() < 1e-12);
        }
        assert!(r.dimension(Dimension::Ccf).degenerate);
        assert!((r.macro_precision - 0.625).abs() < 1e-12);
        assert!((r.macro_recall - 0.625).abs() < 1e-12);
        assert!((r.macro_f1 - 0.5833).abs() < 1e-4);
        assert_eq!(r.hamming_loss, 0.25);
    }

    #[test]
    fn perfect_and_complement() {
        let golds = [lv([1, 0, 1, 0]), lv([0, 1, 0, 1])];
        let r = evaluate(&golds, &golds).unwrap();
        assert_eq!(
            (r.macro_precision, r.macro_recall, r.macro_f1, r.hamming_loss),
            (1.0, 1.0, 1.0, 0.0)
        );
        let comp = [lv([0, 1, 0, 1]), lv([1, 0, 1, 0])];
        assert_eq!(evaluate(&comp, &golds).unwrap().hamming_loss, 1.0);
    }

    #[test]
    fn errors() {
        assert!(matches!(evaluate(&[], &[]), Err(Error::Empty(_))));
        assert!(matches!(
            evaluate(&[LabelVector::NONE], &[]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn json_keys() {
        let golds = [lv([1, 0, 1, 0])];
        let r = EvaluationReport::new(&golds, &golds, Provenance::new()).unwrap();
        let v = serde_json::to_value(&r).unwrap();
        for k in [
            "macro_precision",
            "macro_recall",
            "macro_f1",
            "hamming_loss",
            "per_dimension",
            "kappa_pooled",
            "kappa_per_dimension",
            "provenance",
        ] {
            assert!(v.get(k).is_some(), "{k}");
        }
        assert!(v["per_dimension"]["COD"].get("fn").is_some());
    }

    struct Fixed(f64);

    impl Classifier for Fixed {
        fn pipeline(&self) -> Option<&crate::pipeline::Pipeline> {
            None
        }
        fn thresholds(&self) -> [f64; 4] {
            [0.5; 4]
        }
        fn score_prepared(&self, texts: &[&str]) -> Vec<[f64; 4]> {
            texts.iter().map(|_| [self.0; 4]).collect()
        }
    }

    #[test]
    fn comparison_grid_shape() {
        let test = crate::corpus::fixtures::sample_messages();
        let (yes, no) = (Fixed(0.9), Fixed(0.1));
        let entry = |model, features, c: &'static str| GridEntry {
            model,
            features,
            classifier: if c == "yes" { &yes as &dyn Classifier } else { &no },
            provenance: Provenance::new(),
        };
        let grid = vec![
            entry(ModelKind::Rf, false, "no"),
            entry(ModelKind::Rf, true, "yes"),
            entry(ModelKind::Transformer, false, "no"),
            entry(ModelKind::Transformer, true, "no"),
        ];
        let r = compare(grid, &test, Provenance::new()).unwrap();
        assert_eq!(r.cells.len(), 4);
        let table = r.render();
        assert_eq!(table.lines().count(), 8);
        assert!(table.contains("Hamming loss"));
        let rf_on = r.cell(ModelKind::Rf, true).unwrap();
        assert_eq!(rf_on.report.metrics.macro_recall, 1.0);
        let missing = vec![entry(ModelKind::Rf, false, "no")];
        assert!(compare(missing, &test, Provenance::new()).is_err());
        let dup = vec![entry(ModelKind::Rf, false, "no"), entry(ModelKind::Rf, false, "yes")];
        assert!(compare(dup, &test, Provenance::new()).is_err());
    }

    #[test]
    fn unseen_agreement_with_itself() {
        let test = crate::corpus::fixtures::sample_messages();
        struct Oracle(Vec<LabelVector>);
        impl Classifier for Oracle {
            fn pipeline(&self) -> Option<&crate::pipeline::Pipeline> {
                None
            }
            fn thresholds(&self) -> [f64; 4] {
                [0.5; 4]
            }
            fn score_prepared(&self, texts: &[&str]) -> Vec<[f64; 4]> {
                self.0[..texts.len()]
                    .iter()
                    .map(|l| l.as_array().map(|b| b as u8 as f64))
                    .collect()
            }
        }
        let u = unseen_agreement(&Oracle(test.labels()), &test, Provenance::new()).unwrap();
        assert_eq!(u.kappa_pooled, 1.0);
        assert!(unseen_agreement(&Oracle(vec![]), &Corpus::default(), Provenance::new()).is_err());
    }

    fn labels(n: usize) -> impl Strategy<Value = Vec<LabelVector>> {
        prop::collection::vec(
            prop::array::uniform4(any::<bool>()).prop_map(|a| LabelVector::new(a[0], a[1], a[2], a[3])),
            n,
        )
    }

    fn pair() -> impl Strategy<Value = (Vec<LabelVector>, Vec<LabelVector>)> {
        (1usize..=10).prop_flat_map(|n| (labels(n), labels(n)))
    }

    proptest! {
        #[test]
        fn permutation_invariant((p, g) in pair(), seed in any::<u64>()) {
            let mut idx: Vec<usize> = (0..p.len()).collect();
            let mut s = seed;
            for i in (1..idx.len()).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                idx.swap(i, (s >> 33) as usize % (i + 1));
            }
            let pp: Vec<_> = idx.iter().map(|&i| p[i]).collect();
            let gg: Vec<_> = idx.iter().map(|&i| g[i]).collect();
            prop_assert_eq!(evaluate(&p, &g).unwrap(), evaluate(&pp, &gg).unwrap());
        }

        #[test]
        fn true_negatives_do_not_move_f1((p, g) in pair(), extra in 1usize..5) {
            let base = evaluate(&p, &g).unwrap();
            let mut pp = p.clone();
            let mut gg = g.clone();
            pp.extend(std::iter::repeat_n(LabelVector::NONE, extra));
            gg.extend(std::iter::repeat_n(LabelVector::NONE, extra));
            let more = evaluate(&pp, &gg).unwrap();
            for d in Dimension::ALL {
                let (a, b) = (base.dimension(d), more.dimension(d));
                prop_assert_eq!((a.precision, a.recall, a.f1), (b.precision, b.recall, b.f1));
            }
        }

        #[test]
        fn hamming_bounds((p, g) in pair()) {
            let r = evaluate(&p, &g).unwrap();
            prop_assert!((0.0..=1.0).contains(&r.hamming_loss));
            prop_assert_eq!(r.hamming_loss == 0.0, p == g);
            let mean = Dimension::ALL.iter().map(|&d| r.dimension(d).f1).sum::<f64>() / 4.0;
            prop_assert!((r.macro_f1 - mean).abs() < 1e-12);
        }
    }
}
