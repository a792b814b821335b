use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use teamdims::baseline::BaselineConfig;
use teamdims::corpus::SplitSpec;
use teamdims::transformer::{EncoderSpec, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OnOff {
    On,
    Off,
}

impl OnOff {
    pub fn is_on(self) -> bool {
        self == OnOff::On
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub corpus: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub roster: Option<PathBuf>,
    pub feature_rules: Option<PathBuf>,
    pub artifact_root: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransformerSection {
    pub encoder: EncoderSpec,
    pub train: TrainConfig,
}

/// One TOML document with a section per pipeline stage. Relative paths are
/// resolved against the file's directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectConfig {
    pub features: Option<OnOff>,
    pub paths: Paths,
    pub split: SplitSpec,
    pub baseline: BaselineConfig,
    pub transformer: TransformerSection,
}

impl ProjectConfig {
    pub fn load(path: &Path) -> Result<ProjectConfig> {
        let text = fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let mut cfg: ProjectConfig =
            toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let p = &mut cfg.paths;
        for slot in [
            &mut p.corpus,
            &mut p.lexicon,
            &mut p.roster,
            &mut p.feature_rules,
            &mut p.artifact_root,
        ] {
            if let Some(rel) = slot.as_ref().filter(|p| p.is_relative()) {
                *slot = Some(base.join(rel));
            }
        }
        for (name, slot) in [
            ("lexicon", &p.lexicon),
            ("roster", &p.roster),
            ("feature_rules", &p.feature_rules),
        ] {
            if let Some(path) = slot {
                if !path.is_file() {
                    bail!("config paths.{name}: {} does not exist", path.display());
                }
            }
        }
        cfg.split.validate()?;
        cfg.baseline.validate()?;
        cfg.transformer.train.validate()?;
        Ok(cfg)
    }

    /// Content hash of the resolved configuration.
    pub fn hash(&self) -> String {
        crate::manifest::sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_and_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("lex.tsv"), "").unwrap();
        let path = dir.path().join("project.toml");
        fs::write(
            &path,
            "features = \"on\"\n[paths]\nlexicon = \"lex.tsv\"\n[split]\nratios = [0.8, 0.1, 0.1]\nseed = 3\n\
             [baseline]\nn_trees = 7\n[transformer.encoder]\nencoder_id = \"tiny-random\"\n[transformer.train]\npeak_lr = 0.001\n",
        )
        .unwrap();
        let cfg = ProjectConfig::load(&path).unwrap();
        assert_eq!(cfg.features, Some(OnOff::On));
        assert_eq!(cfg.paths.lexicon, Some(dir.path().join("lex.tsv")));
        assert_eq!(cfg.split.seed, 3);
        assert_eq!(cfg.baseline.n_trees, 7);
        assert_eq!(cfg.baseline.threshold, 0.5);
        assert_eq!(cfg.transformer.train.peak_lr, 0.001);
        assert_eq!(cfg.transformer.train.batch_size, 32);
        assert_eq!(cfg.transformer.encoder.max_seq_len, 200);
    }

    #[test]
    fn rejects_unknown_keys_and_missing_paths() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.toml");
        fs::write(&path, "colour = 1\n").unwrap();
        assert!(ProjectConfig::load(&path).is_err());
        fs::write(&path, "[paths]\nroster = \"nope.txt\"\n").unwrap();
        assert!(ProjectConfig::load(&path).unwrap_err().to_string().contains("nope.txt"));
    }

    #[test]
    fn book_example_parses() {
        let chapter = include_str!("../../../book/src/cli.md");
        let block = chapter.split("```toml\n").nth(1).unwrap().split("```").next().unwrap();
        let cfg: ProjectConfig = toml::from_str(block).unwrap();
        assert_eq!(cfg.features, Some(OnOff::On));
        assert_eq!(cfg.split.seed, 42);
        assert_eq!(cfg.transformer.train.max_epochs, 30);
    }
}
