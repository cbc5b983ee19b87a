//! One-at-a-time hyperparameter study: a named grid of single-field
//! variations around a baseline, each scored by the validation Dice of its
//! best-val-loss epoch.

use std::path::Path;

use serde::Serialize;

use crate::preprocess::TensorSample;
use crate::train::{train, TrainConfig};
use crate::{Error, Result};

/// A named configuration in the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct HpoRow {
    pub name: String,
    pub config: TrainConfig,
}

/// Baseline plus single-field variations.
#[derive(Debug, Clone, PartialEq)]
pub struct HpoGrid {
    pub baseline: HpoRow,
    pub variations: Vec<HpoRow>,
}

/// Number of tunable fields that differ between two configs (seed excluded;
/// it is shared across the grid by design).
fn fields_differing(a: &TrainConfig, b: &TrainConfig) -> usize {
    (a.learning_rate != b.learning_rate) as usize
        + (a.batch_size != b.batch_size) as usize
        + (a.epochs != b.epochs) as usize
        + (a.initial_filters != b.initial_filters) as usize
        + (a.augmentation_factor != b.augmentation_factor) as usize
}

impl HpoGrid {
    /// All rows, baseline first.
    pub fn rows(&self) -> Vec<&HpoRow> {
        std::iter::once(&self.baseline).chain(&self.variations).collect()
    }

    /// Checks the one-at-a-time design: every variation differs from the
    /// baseline in exactly one tunable field.
    pub fn validate(&self) -> Result<()> {
        for v in &self.variations {
            let n = fields_differing(&self.baseline.config, &v.config);
            if n != 1 {
                return Err(Error::Contract(format!(
                    "variation '{}' differs from baseline in {n} fields, expected 1",
                    v.name
                )));
            }
        }
        Ok(())
    }
}

/// The seven-row study grid: baseline (lr 1e-4, batch 16, 25 epochs,
/// 128 initial filters) plus one variation per tested value. The grid runs
/// with augmentation factor 2; final training uses 3.
pub fn default_grid() -> HpoGrid {
    let baseline = TrainConfig {
        augmentation_factor: 2,
        ..TrainConfig::default()
    };
    let vary = |name: &str, f: &dyn Fn(&mut TrainConfig)| {
        let mut config = baseline;
        f(&mut config);
        HpoRow {
            name: name.into(),
            config,
        }
    };
    HpoGrid {
        baseline: HpoRow {
            name: "baseline".into(),
            config: baseline,
        },
        variations: vec![
            vary("filters_32", &|c| c.initial_filters = 32),
            vary("filters_160", &|c| c.initial_filters = 160),
            vary("lr_1e-5", &|c| c.learning_rate = 1e-5),
            vary("lr_1e-3", &|c| c.learning_rate = 1e-3),
            vary("batch_10", &|c| c.batch_size = 10),
            vary("batch_24", &|c| c.batch_size = 24),
        ],
    }
}

/// Outcome of one grid row.
#[derive(Debug, Clone, Serialize)]
pub struct HpoRunResult {
    pub name: String,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub initial_filters: usize,
    /// Validation Dice at the best-val-loss epoch; `None` if the run failed
    /// or the Dice was undefined.
    pub val_dice: Option<f64>,
    pub best_epoch: Option<usize>,
    pub error: Option<String>,
}

/// Results in grid order plus the descending-score ranking.
#[derive(Debug, Clone, Serialize)]
pub struct HpoOutcome {
    pub results: Vec<HpoRunResult>,
    /// Indices into `results`, best first. Scored rows precede failed ones;
    /// ties resolve to the earlier grid row.
    pub ranking: Vec<usize>,
}

impl HpoOutcome {
    pub fn winner(&self) -> Option<&HpoRunResult> {
        self.ranking.first().map(|&i| &self.results[i])
    }
}

/// Trains every row with the shared seed so score differences reflect
/// hyperparameters, not initialization. A failed row is recorded and the
/// grid continues.
pub fn run_grid(
    grid: &HpoGrid,
    seed: u64,
    train_samples: &[TensorSample],
    val_samples: &[TensorSample],
) -> Result<HpoOutcome> {
    grid.validate()?;
    let mut results = Vec::new();
    for row in grid.rows() {
        let config = TrainConfig {
            seed,
            ..row.config
        };
        let mut result = HpoRunResult {
            name: row.name.clone(),
            learning_rate: config.learning_rate,
            batch_size: config.batch_size,
            epochs: config.epochs,
            initial_filters: config.initial_filters,
            val_dice: None,
            best_epoch: None,
            error: None,
        };
        match train(&config, train_samples, val_samples) {
            Ok(outcome) => {
                let best = &outcome.history[outcome.best_epoch - 1];
                result.val_dice = best.val_dice;
                result.best_epoch = Some(outcome.best_epoch);
            }
            Err(e) => result.error = Some(e.to_string()),
        }
        results.push(result);
    }
    let mut ranking: Vec<usize> = (0..results.len()).collect();
    ranking.sort_by(|&a, &b| {
        let score = |i: usize| results[i].val_dice.unwrap_or(f64::NEG_INFINITY);
        score(b)
            .partial_cmp(&score(a))
            .unwrap()
            .then(a.cmp(&b))
    });
    Ok(HpoOutcome { results, ranking })
}

const GRID_KEYS: &str = "lr, batch, epochs, filters, aug";

fn apply_override(config: &mut TrainConfig, key: &str, value: &str, ctx: &str) -> Result<()> {
    let bad = |e: String| Error::format(ctx, e);
    match key {
        "lr" => config.learning_rate = value.parse().map_err(|e| bad(format!("lr: {e}")))?,
        "batch" => config.batch_size = value.parse().map_err(|e| bad(format!("batch: {e}")))?,
        "epochs" => config.epochs = value.parse().map_err(|e| bad(format!("epochs: {e}")))?,
        "filters" => {
            config.initial_filters = value.parse().map_err(|e| bad(format!("filters: {e}")))?
        }
        "aug" => {
            config.augmentation_factor =
                value.parse().map_err(|e| bad(format!("aug: {e}")))?
        }
        other => return Err(bad(format!("unknown key '{other}' (expected {GRID_KEYS})"))),
    }
    Ok(())
}

/// Parses a plain-text grid: the first non-comment line is the baseline
/// with any number of `key=value` overrides of the defaults; each further
/// line is `name key=value` with exactly one override.
pub fn parse_grid(text: &str, ctx: &str) -> Result<HpoGrid> {
    let mut baseline: Option<HpoRow> = None;
    let mut variations = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let name = parts.next().expect("non-empty line").to_string();
        let base = baseline
            .as_ref()
            .map_or_else(TrainConfig::default, |b| b.config);
        let mut config = base;
        for kv in parts {
            let (key, value) = kv
                .split_once('=')
                .ok_or_else(|| Error::format(ctx, format!("expected key=value, got '{kv}'")))?;
            apply_override(&mut config, key, value, ctx)?;
        }
        let row = HpoRow { name, config };
        if baseline.is_none() {
            baseline = Some(row);
        } else {
            variations.push(row);
        }
    }
    let baseline = baseline.ok_or_else(|| Error::format(ctx, "empty grid"))?;
    let grid = HpoGrid {
        baseline,
        variations,
    };
    grid.validate()?;
    Ok(grid)
}

pub fn read_grid(path: impl AsRef<Path>) -> Result<HpoGrid> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingArtifact(path.display().to_string()));
    }
    let text = std::fs::read_to_string(path)?;
    parse_grid(&text, &path.display().to_string())
}

pub fn write_grid(path: impl AsRef<Path>, grid: &HpoGrid) -> Result<()> {
    let mut out = String::from("# name followed by key=value overrides; first line is baseline\n");
    let describe = |c: &TrainConfig| {
        format!(
            "lr={} batch={} epochs={} filters={} aug={}",
            c.learning_rate, c.batch_size, c.epochs, c.initial_filters, c.augmentation_factor
        )
    };
    out.push_str(&format!(
        "{} {}\n",
        grid.baseline.name,
        describe(&grid.baseline.config)
    ));
    for v in &grid.variations {
        let b = &grid.baseline.config;
        let c = &v.config;
        let over = if c.learning_rate != b.learning_rate {
            format!("lr={}", c.learning_rate)
        } else if c.batch_size != b.batch_size {
            format!("batch={}", c.batch_size)
        } else if c.epochs != b.epochs {
            format!("epochs={}", c.epochs)
        } else if c.initial_filters != b.initial_filters {
            format!("filters={}", c.initial_filters)
        } else {
            format!("aug={}", c.augmentation_factor)
        };
        out.push_str(&format!("{} {over}\n", v.name));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Ranked results table: name, configuration, validation Dice.
pub fn write_results_csv(path: impl AsRef<Path>, outcome: &HpoOutcome) -> Result<()> {
    let mut out = String::from("rank,name,configuration,val_dc,best_epoch,status\n");
    for (rank, &i) in outcome.ranking.iter().enumerate() {
        let r = &outcome.results[i];
        out.push_str(&format!(
            "{},{},lr={} batch={} epochs={} filters={},{},{},{}\n",
            rank + 1,
            r.name,
            r.learning_rate,
            r.batch_size,
            r.epochs,
            r.initial_filters,
            r.val_dice.map_or_else(|| "failed".into(), |d| format!("{d:.4}")),
            r.best_epoch.map_or_else(|| "-".into(), |e| e.to_string()),
            r.error.as_deref().unwrap_or("ok"),
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::NUM_CHANNELS;
    use ndarray::{Array2, Array3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn default_grid_has_seven_rows() {
        let grid = default_grid();
        assert_eq!(grid.rows().len(), 7);
        grid.validate().unwrap();
    }

    #[test]
    fn default_grid_values() {
        let grid = default_grid();
        let b = grid.baseline.config;
        assert_eq!(b.learning_rate, 1e-4);
        assert_eq!(b.batch_size, 16);
        assert_eq!(b.epochs, 25);
        assert_eq!(b.initial_filters, 128);
        assert_eq!(b.augmentation_factor, 2);
        let by_name = |n: &str| {
            grid.variations
                .iter()
                .find(|v| v.name == n)
                .unwrap_or_else(|| panic!("missing row {n}"))
                .config
        };
        assert_eq!(by_name("filters_32").initial_filters, 32);
        assert_eq!(by_name("filters_160").initial_filters, 160);
        assert_eq!(by_name("lr_1e-5").learning_rate, 1e-5);
        assert_eq!(by_name("lr_1e-3").learning_rate, 1e-3);
        assert_eq!(by_name("batch_10").batch_size, 10);
        assert_eq!(by_name("batch_24").batch_size, 24);
    }

    #[test]
    fn filters_rows_deepest_width_is_8x() {
        use crate::unet::UNetConfig;
        for (f, deepest) in [(32, 256), (160, 1280)] {
            let widths = UNetConfig::new(NUM_CHANNELS, f).widths();
            assert_eq!(widths[3], deepest);
        }
    }

    #[test]
    fn two_field_variation_rejected() {
        let mut grid = default_grid();
        grid.variations[0].config.batch_size = 99;
        assert!(grid.validate().is_err());
    }

    fn sample(id: &str, seed: u64) -> TensorSample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut label = Array2::zeros((16, 16));
        for r in 4..12 {
            for c in 4..12 {
                label[[r, c]] = 1;
            }
        }
        let mut channels = Array3::from_shape_simple_fn((NUM_CHANNELS, 16, 16), || {
            rng.gen_range(-0.1..0.1)
        });
        for ((r, c), &v) in label.indexed_iter() {
            channels[[0, r, c]] += if v == 1 { 2.0 } else { -2.0 };
        }
        TensorSample {
            channels,
            label,
            record_id: id.into(),
            augmentation_tag: "orig".into(),
        }
    }

    fn desk_grid() -> HpoGrid {
        let baseline = TrainConfig {
            learning_rate: 3e-3,
            batch_size: 4,
            epochs: 2,
            initial_filters: 2,
            augmentation_factor: 1,
            seed: 0,
        };
        HpoGrid {
            baseline: HpoRow {
                name: "f2".into(),
                config: baseline,
            },
            variations: vec![HpoRow {
                name: "f4".into(),
                config: TrainConfig {
                    initial_filters: 4,
                    ..baseline
                },
            }],
        }
    }

    #[test]
    fn singleton_grid_wins() {
        let grid = HpoGrid {
            baseline: HpoRow {
                name: "only".into(),
                config: desk_grid().baseline.config,
            },
            variations: vec![],
        };
        let train_set: Vec<TensorSample> = (0..4).map(|i| sample(&format!("t{i}"), i)).collect();
        let val_set = vec![sample("v", 99)];
        let out = run_grid(&grid, 5, &train_set, &val_set).unwrap();
        assert_eq!(out.results.len(), 1);
        assert_eq!(out.winner().unwrap().name, "only");
    }

    #[test]
    fn desk_grid_is_deterministic_and_complete() {
        let grid = desk_grid();
        let train_set: Vec<TensorSample> = (0..4).map(|i| sample(&format!("t{i}"), i)).collect();
        let val_set = vec![sample("v", 99)];
        let a = run_grid(&grid, 5, &train_set, &val_set).unwrap();
        let b = run_grid(&grid, 5, &train_set, &val_set).unwrap();
        assert_eq!(a.results.len(), 2);
        assert_eq!(a.ranking, b.ranking);
        for (x, y) in a.results.iter().zip(&b.results) {
            assert_eq!(x.val_dice, y.val_dice);
            assert!(x.error.is_none());
        }
    }

    #[test]
    fn failed_row_recorded_and_grid_continues() {
        let mut grid = desk_grid();
        // Invalid epochs makes that row fail while the rest proceed.
        grid.variations[0].config = TrainConfig {
            epochs: 0,
            ..grid.baseline.config
        };
        // epochs differs (2 vs 0): still a one-field variation.
        let train_set: Vec<TensorSample> = (0..4).map(|i| sample(&format!("t{i}"), i)).collect();
        let val_set = vec![sample("v", 99)];
        let out = run_grid(&grid, 5, &train_set, &val_set).unwrap();
        assert!(out.results[0].error.is_none());
        assert!(out.results[1].error.is_some());
        // Failed row ranks last.
        assert_eq!(out.ranking.last(), Some(&1));
    }

    #[test]
    fn grid_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("grid.txt");
        let grid = default_grid();
        write_grid(&path, &grid).unwrap();
        let back = read_grid(&path).unwrap();
        assert_eq!(back, grid);
    }

    #[test]
    fn parse_rejects_garbage() {
        assert!(parse_grid("", "test").is_err());
        assert!(parse_grid("base lr=abc", "test").is_err());
        assert!(parse_grid("base lr=1e-4\nrow nonsense", "test").is_err());
        assert!(parse_grid("base\nrow bogus_key=3", "test").is_err());
    }

    #[test]
    fn results_table_lists_ranked_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("results.csv");
        let outcome = HpoOutcome {
            results: vec![
                HpoRunResult {
                    name: "a".into(),
                    learning_rate: 1e-4,
                    batch_size: 16,
                    epochs: 2,
                    initial_filters: 4,
                    val_dice: Some(0.7),
                    best_epoch: Some(2),
                    error: None,
                },
                HpoRunResult {
                    name: "b".into(),
                    learning_rate: 1e-3,
                    batch_size: 16,
                    epochs: 2,
                    initial_filters: 4,
                    val_dice: Some(0.9),
                    best_epoch: Some(1),
                    error: None,
                },
            ],
            ranking: vec![1, 0],
        };
        write_results_csv(&path, &outcome).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[1].starts_with("1,b,"));
        assert!(lines[2].starts_with("2,a,"));
    }
}
