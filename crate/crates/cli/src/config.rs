use std::path::{Path, PathBuf};

use anyhow::Context;
use aspectlex::rating::RatingConfig;
use aspectlex::{Predictor, TrainConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::UsageError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Unsupervised,
    Semi,
    Supervised,
}

/// Everything a run reads, as written in a `--config` file. Relative paths
/// are resolved against the file's directory; flags override fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schema: Option<PathBuf>,
    pub corpus: Vec<PathBuf>,
    pub labels: Option<PathBuf>,
    pub mode: Mode,
    pub predictor: Option<Predictor>,
    /// Sentence-aspect model used to segment reviews for rating training.
    pub segmenter: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub min_df: usize,
    /// Single source of randomness; copied into `train` and `rating`.
    pub seed: u64,
    pub train: TrainConfig,
    pub rating: RatingConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema: None,
            corpus: Vec::new(),
            labels: None,
            mode: Mode::Unsupervised,
            predictor: None,
            segmenter: None,
            output_dir: None,
            min_df: 5,
            seed: 0,
            train: TrainConfig::default(),
            rating: RatingConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| UsageError(format!("config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        config.schema.as_mut().map(fix);
        config.corpus.iter_mut().for_each(fix);
        config.labels.as_mut().map(fix);
        config.segmenter.as_mut().map(fix);
        config.output_dir.as_mut().map(fix);
        Ok(config)
    }

    /// Copies the run seed into the per-stage configs and validates them.
    pub fn finish(mut self) -> anyhow::Result<Self> {
        self.train.seed = self.seed;
        self.rating.seed = self.seed;
        self.train.validate().map_err(|e| UsageError(e.to_string()))?;
        Ok(self)
    }
}

/// Hex prefix of the SHA-256 of a value's JSON form.
pub fn config_hash(value: &impl Serialize) -> String {
    let bytes = serde_json::to_vec(value).expect("config serializes");
    hex::encode(&Sha256::digest(&bytes)[..8])
}
