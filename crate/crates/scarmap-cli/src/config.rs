//! Flat key=value run configuration, diffable and override-friendly.
//!
//! Recognized keys: `lr`, `batch`, `epochs`, `filters`, `aug`, `seed`,
//! `knn_k`. Unknown keys are rejected so typos fail loudly.

use scarmap::preprocess::DEFAULT_KNN_K;
use scarmap::train::TrainConfig;
use scarmap::{Error, Result};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FileConfig {
    pub train: TrainConfig,
    pub knn_k: usize,
}

impl Default for FileConfig {
    fn default() -> Self {
        FileConfig {
            train: TrainConfig::default(),
            knn_k: DEFAULT_KNN_K,
        }
    }
}

pub fn parse(text: &str, ctx: &str) -> Result<FileConfig> {
    let mut config = FileConfig::default();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |msg: String| Error::format(ctx, format!("line {}: {msg}", lineno + 1));
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| bad(format!("expected key = value, got '{line}'")))?;
        let (key, value) = (key.trim(), value.trim());
        match key {
            "lr" => config.train.learning_rate = value.parse().map_err(|e| bad(format!("lr: {e}")))?,
            "batch" => config.train.batch_size = value.parse().map_err(|e| bad(format!("batch: {e}")))?,
            "epochs" => config.train.epochs = value.parse().map_err(|e| bad(format!("epochs: {e}")))?,
            "filters" => {
                config.train.initial_filters =
                    value.parse().map_err(|e| bad(format!("filters: {e}")))?
            }
            "aug" => {
                config.train.augmentation_factor =
                    value.parse().map_err(|e| bad(format!("aug: {e}")))?
            }
            "seed" => config.train.seed = value.parse().map_err(|e| bad(format!("seed: {e}")))?,
            "knn_k" => config.knn_k = value.parse().map_err(|e| bad(format!("knn_k: {e}")))?,
            other => return Err(bad(format!("unknown key '{other}'"))),
        }
    }
    config.train.validate()?;
    if config.knn_k == 0 {
        return Err(Error::Contract("knn_k must be positive".into()));
    }
    Ok(config)
}

pub fn load(path: Option<&Path>) -> Result<FileConfig> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            if !p.exists() {
                return Err(Error::MissingArtifact(p.display().to_string()));
            }
            let text = std::fs::read_to_string(p)?;
            parse(&text, &p.display().to_string())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_when_empty() {
        let c = parse("", "test").unwrap();
        assert_eq!(c, FileConfig::default());
    }

    #[test]
    fn overrides_and_comments() {
        let c = parse("# run\nlr = 1e-3\nfilters=8\naug = 2\nknn_k = 4\n", "test").unwrap();
        assert_eq!(c.train.learning_rate, 1e-3);
        assert_eq!(c.train.initial_filters, 8);
        assert_eq!(c.train.augmentation_factor, 2);
        assert_eq!(c.knn_k, 4);
        assert_eq!(c.train.batch_size, 16);
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        assert!(parse("bogus = 3", "test").is_err());
        assert!(parse("lr = abc", "test").is_err());
        assert!(parse("epochs = 0", "test").is_err());
        assert!(parse("just a line", "test").is_err());
    }
}
