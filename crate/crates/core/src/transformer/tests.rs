use std::path::PathBuf;

use super::*;
use crate::corpus::{generate_synthetic_corpus, SynthSpec};

fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/tiny_bert")
}

fn expected() -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(fixture_dir().join("expected.json")).unwrap()).unwrap()
}

fn as_f64s(v: &serde_json::Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

#[test]
fn reference_checkpoint_tokenizer_ids() {
    let (_, tok) = checkpoint::load_encoder(&fixture_dir()).unwrap();
    let exp = expected();
    for case in exp["cases"].as_array().unwrap() {
        let ids: Vec<u32> = case["ids"]
            .as_array()
            .unwrap()
            .iter()
            .map(|x| x.as_u64().unwrap() as u32)
            .collect();
        assert_eq!(tok.encode(case["text"].as_str().unwrap(), 200), ids, "{}", case["text"]);
    }
    let t = &exp["truncation"];
    let ids: Vec<u32> = t["ids"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_u64().unwrap() as u32)
        .collect();
    assert_eq!(
        tok.encode(t["text"].as_str().unwrap(), t["max_len"].as_u64().unwrap() as usize),
        ids
    );
}

#[test]
fn reference_checkpoint_forward_pass() {
    let (enc, tok) = checkpoint::load_encoder(&fixture_dir()).unwrap();
    for case in expected()["cases"].as_array().unwrap() {
        let trace = enc.forward(&tok.encode(case["text"].as_str().unwrap(), 200));
        for (got, want) in trace.pooled.iter().zip(as_f64s(&case["pooled"])) {
            assert!((got - want).abs() < 1e-5, "pooled {got} vs {want}");
        }
        for (got, want) in trace.first_hidden().iter().zip(as_f64s(&case["first_hidden"])) {
            assert!((got - want).abs() < 1e-5, "hidden {got} vs {want}");
        }
    }
}

#[test]
fn checkpoint_round_trip() {
    let (enc, tok) = checkpoint::load_encoder(&fixture_dir()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    checkpoint::save_encoder(&enc, &tok, dir.path()).unwrap();
    let (back, tok2) = checkpoint::load_encoder(dir.path()).unwrap();
    assert_eq!(back, enc);
    assert_eq!(tok2, tok);
}

#[test]
fn missing_checkpoint_names_the_cache() {
    let err = locate_checkpoint("bert-base-cased-not-here").unwrap_err().to_string();
    assert!(err.contains(CACHE_ENV) && err.contains(TINY_RANDOM), "{err}");
    assert_eq!(
        locate_checkpoint(fixture_dir().to_str().unwrap()).unwrap(),
        fixture_dir()
    );
}

fn small_corpus(n: usize, seed: u64) -> Corpus {
    let spec = SynthSpec::uniform(n / 5, n - 4 * (n / 5));
    generate_synthetic_corpus(&spec, seed)
}

#[test]
fn initial_loss_near_ln2_on_balanced_labels() {
    let c = small_corpus(40, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut spec = EncoderSpec::default();
    let (enc, tok) = resolve_encoder(&mut spec, &c.texts(), &mut rng).unwrap();
    let net = Network::new(enc, &mut rng);
    let data: Vec<(Vec<u32>, [f64; 4])> = c
        .messages
        .iter()
        .enumerate()
        .map(|(i, m)| {
            (
                tok.encode(&m.text, 200),
                std::array::from_fn(|k| ((i * 4 + k) * 7 % 2) as f64),
            )
        })
        .collect();
    let refs: Vec<(&[u32], [f64; 4])> = data.iter().map(|(i, y)| (i.as_slice(), *y)).collect();
    let loss = net.loss(&refs);
    assert!((loss - std::f64::consts::LN_2).abs() < 0.15, "{loss}");
}

fn quick_config() -> TrainConfig {
    TrainConfig {
        peak_lr: 1e-3,
        max_epochs: 3,
        batch_size: 8,
        seed: 4,
        early_stop_patience: 5,
        ..Default::default()
    }
}

#[test]
fn training_log_follows_schedule() {
    let c = small_corpus(20, 1);
    let m = train_transformer(&c, &c, &EncoderSpec::default(), &quick_config()).unwrap();
    let sched = m.log.schedule.unwrap();
    assert_eq!((sched.warmup_steps, sched.total_steps), (1, 9));
    assert_eq!(m.log.entries.len(), 9);
    for e in &m.log.entries {
        assert!((e.learning_rate - sched.lr(e.step)).abs() < 1e-12);
        assert_eq!(e.val_loss.is_some(), e.step % 3 == 0);
    }
    assert_eq!(m.log.entries.last().unwrap().learning_rate, 0.0);
    assert_eq!(m.spec.hidden_size, 64);
}

#[test]
fn training_is_deterministic_and_artifacts_round_trip() {
    let c = small_corpus(15, 2);
    let a = train_transformer(&c, &c, &EncoderSpec::default(), &quick_config()).unwrap();
    let b = train_transformer(&c, &c, &EncoderSpec::default(), &quick_config()).unwrap();
    assert_eq!(a.network, b.network);
    assert_eq!(a.log, b.log);
    let dir = tempfile::tempdir().unwrap();
    a.save(dir.path()).unwrap();
    let back = TransformerModel::load(dir.path()).unwrap();
    assert_eq!(back.log.entries, a.log.entries);
    for t in c.texts() {
        assert_eq!(back.probs(t), a.probs(t));
    }
}

#[test]
fn batch_predict_is_batch_size_invariant() {
    let c = small_corpus(15, 3);
    let m = train_transformer(
        &c,
        &c,
        &EncoderSpec::default(),
        &TrainConfig {
            max_epochs: 1,
            ..quick_config()
        },
    )
    .unwrap();
    let one = batch_predict(&m, &c, 1).unwrap();
    let many = batch_predict(&m, &c, 32).unwrap();
    for (a, b) in one.iter().zip(&many) {
        for k in 0..4 {
            assert!((a.scores[k] - b.scores[k]).abs() < 1e-4);
        }
    }
    let single = Corpus::new(vec![c.messages[0].clone()]).unwrap();
    assert_eq!(
        batch_predict(&m, &single, 4).unwrap()[0],
        m.predict_unchecked(&c.messages[0].text)
    );
    let p = &one[0];
    assert!(p.scores.iter().all(|s| (0.0..=1.0).contains(s)));
    assert!(batch_predict(&m, &c, 0).is_err());
}

#[test]
fn input_errors() {
    let c = small_corpus(10, 1);
    let empty = Corpus::default();
    assert!(matches!(
        train_transformer(&empty, &c, &EncoderSpec::default(), &quick_config()),
        Err(Error::Empty(_))
    ));
    assert!(matches!(
        train_transformer(&c, &empty, &EncoderSpec::default(), &quick_config()),
        Err(Error::Empty(_))
    ));
    let lex = crate::preprocess::Lexicon::default_pack();
    let prepared = crate::preprocess::preprocess_corpus(&c, &lex);
    assert!(matches!(
        train_transformer(&prepared, &c, &EncoderSpec::default(), &quick_config()),
        Err(Error::FingerprintMismatch { .. })
    ));
    let spec = EncoderSpec {
        max_seq_len: 1000,
        ..Default::default()
    };
    assert!(train_transformer(&c, &c, &spec, &quick_config()).is_err());
    assert!(TrainConfig {
        warmup: 0.0,
        ..Default::default()
    }
    .validate()
    .is_err());
}

#[test]
fn threshold_tuning_prefers_separating_values() {
    let golds = vec![LabelVector::only(Dimension::Cod), LabelVector::NONE];
    let probs = vec![[0.3, 0.1, 0.1, 0.1], [0.2, 0.1, 0.1, 0.1]];
    let t = tune_thresholds(&probs, &golds);
    assert_eq!(t[0], 0.25);
    assert_eq!(t[1], 0.5);
}
