use std::path::{Path, PathBuf};

use capsule_re::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// A training run: model hyperparameters plus the files it reads and writes.
/// Relative paths are resolved against the config file's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub train: TrainConfig,
    pub corpus: PathBuf,
    /// Held-out corpus for `sweep`; the training corpus when absent.
    #[serde(default)]
    pub eval_corpus: Option<PathBuf>,
    pub word_embeddings: PathBuf,
    /// One relation name per line, NA first.
    pub relations: PathBuf,
    pub output_dir: PathBuf,
    /// Defaults to `<output_dir>/checkpoint.json`.
    #[serde(default)]
    pub checkpoint: Option<PathBuf>,
}

impl RunConfig {
    pub fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint.clone().unwrap_or_else(|| self.output_dir.join("checkpoint.json"))
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.corpus);
        fix(&mut self.word_embeddings);
        fix(&mut self.relations);
        fix(&mut self.output_dir);
        self.eval_corpus.as_mut().map(fix);
        self.checkpoint.as_mut().map(fix);
    }

    /// Reads, resolves and validates; every failure is a usage error naming
    /// the offending field.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        let mut cfg: RunConfig = serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        cfg.resolve(path.parent().unwrap_or(Path::new(".")));
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.train.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        let inputs = [
            ("corpus", Some(&self.corpus)),
            ("eval_corpus", self.eval_corpus.as_ref()),
            ("word_embeddings", Some(&self.word_embeddings)),
            ("relations", Some(&self.relations)),
        ];
        for (field, path) in inputs {
            if let Some(p) = path {
                if !p.is_file() {
                    return Err(CliError::Usage(format!("{field}: no such file {}", p.display())));
                }
            }
        }
        Ok(())
    }
}
