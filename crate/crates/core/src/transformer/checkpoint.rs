use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use safetensors::tensor::{Dtype, TensorView};
use safetensors::SafeTensors;

use super::encoder::{BertConfig, Encoder, Params};
use super::tokenizer::WordPiece;
use crate::error::{Error, Result};

pub const CONFIG_FILE: &str = "config.json";
pub const WEIGHTS_FILE: &str = "model.safetensors";
pub const VOCAB_FILE: &str = "vocab.txt";

fn ckpt_err(path: &Path, msg: impl std::fmt::Display) -> Error {
    Error::Checkpoint(format!("{}: {msg}", path.display()))
}

/// Names the same tensor may carry in other exports of the architecture.
fn aliases(name: &str) -> Vec<String> {
    let mut out = vec![name.to_string(), format!("bert.{name}")];
    for (new, old) in [
        ("LayerNorm.weight", "LayerNorm.gamma"),
        ("LayerNorm.bias", "LayerNorm.beta"),
    ] {
        if let Some(stem) = name.strip_suffix(new) {
            out.push(format!("{stem}{old}"));
            out.push(format!("bert.{stem}{old}"));
        }
    }
    out
}

fn to_f64(view: &TensorView<'_>, path: &Path, name: &str) -> Result<Vec<f64>> {
    let data = view.data();
    match view.dtype() {
        Dtype::F32 => Ok(data
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect()),
        Dtype::F64 => Ok(data
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect()),
        other => Err(ckpt_err(path, format!("tensor {name} has unsupported dtype {other:?}"))),
    }
}

/// Loads an encoder directory holding `config.json`, `vocab.txt` and
/// `model.safetensors`.
pub fn load_encoder(dir: &Path) -> Result<(Encoder, WordPiece)> {
    let cfg_path = dir.join(CONFIG_FILE);
    let cfg_text = fs::read_to_string(&cfg_path).map_err(|e| Error::io(&cfg_path, e))?;
    let config: BertConfig = serde_json::from_str(&cfg_text).map_err(|e| ckpt_err(&cfg_path, e))?;
    config.validate().map_err(|e| ckpt_err(&cfg_path, e))?;
    let tokenizer = WordPiece::load(&dir.join(VOCAB_FILE))?;
    if tokenizer.vocab_size() != config.vocab_size {
        return Err(ckpt_err(
            dir,
            format!(
                "vocab.txt has {} entries but config says {}",
                tokenizer.vocab_size(),
                config.vocab_size
            ),
        ));
    }
    let w_path = dir.join(WEIGHTS_FILE);
    let bytes = fs::read(&w_path).map_err(|e| Error::io(&w_path, e))?;
    let st = SafeTensors::deserialize(&bytes).map_err(|e| ckpt_err(&w_path, e))?;
    let mut encoder = Encoder::init(config, &mut ChaCha8Rng::seed_from_u64(0));
    let mut failure = None;
    encoder.visit_mut("", &mut |name, values| {
        if failure.is_some() {
            return;
        }
        let found = aliases(name).into_iter().find_map(|n| st.tensor(&n).ok());
        let result = match found {
            None => Err(ckpt_err(&w_path, format!("missing tensor {name}"))),
            Some(view) => to_f64(&view, &w_path, name).and_then(|v| {
                if v.len() == values.len() {
                    values.copy_from_slice(&v);
                    Ok(())
                } else {
                    Err(ckpt_err(&w_path, format!("tensor {name} has shape {:?}", view.shape())))
                }
            }),
        };
        if let Err(e) = result {
            failure = Some(e);
        }
    });
    match failure {
        Some(e) => Err(e),
        None => Ok((encoder, tokenizer)),
    }
}

/// Writes the encoder in the same layout `load_encoder` reads. Weights are
/// stored as f64 so a reload reproduces predictions exactly.
pub fn save_encoder(encoder: &Encoder, tokenizer: &WordPiece, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut cfg = serde_json::to_value(&encoder.config)?;
    cfg["architectures"] = serde_json::json!(["BertModel"]);
    let cfg_path = dir.join(CONFIG_FILE);
    fs::write(&cfg_path, serde_json::to_string_pretty(&cfg)?).map_err(|e| Error::io(&cfg_path, e))?;
    tokenizer.save(&dir.join(VOCAB_FILE))?;

    let mut tensors: Vec<(String, Vec<usize>, Vec<u8>)> = Vec::new();
    encoder.visit("", &mut |name, shape, values| {
        let bytes = values.iter().flat_map(|v| v.to_le_bytes()).collect();
        tensors.push((name.to_string(), shape.to_vec(), bytes));
    });
    let views = tensors
        .iter()
        .map(|(n, s, b)| {
            Ok((
                n.clone(),
                TensorView::new(Dtype::F64, s.clone(), b).map_err(|e| Error::Checkpoint(e.to_string()))?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let meta: HashMap<String, String> = [("format".to_string(), "pt".to_string())].into();
    let w_path = dir.join(WEIGHTS_FILE);
    safetensors::serialize_to_file(views, &Some(meta), &w_path).map_err(|e| ckpt_err(&w_path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aliases_cover_legacy_names() {
        let a = aliases("embeddings.LayerNorm.weight");
        assert!(a.contains(&"bert.embeddings.LayerNorm.gamma".to_string()));
    }

    #[test]
    fn missing_directory_is_an_error() {
        assert!(load_encoder(Path::new("/nonexistent/encoder")).is_err());
    }
}
