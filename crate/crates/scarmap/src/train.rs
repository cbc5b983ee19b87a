//! Training loop with best-model selection by validation loss, per-tile test
//! reports, and the band/area diagnostic tables.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::metrics::{bce_grad, bce_loss, Confusion};
use crate::nn::Adam;
use crate::preprocess::{TensorSample, NUM_CHANNELS};
use crate::raster::{BandTile, Phase, ScarLabel, BAND_NAMES, NUM_BANDS};
use crate::unet::{UNet, UNetConfig, UNetGrads};
use crate::{Error, Result};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Baseline training configuration: lr 1e-4, batch 16, 25 epochs,
/// 128 initial filters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub initial_filters: usize,
    /// Total copies per training sample, original included.
    pub augmentation_factor: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            batch_size: 16,
            epochs: 25,
            initial_filters: 128,
            augmentation_factor: 3,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0
            || self.batch_size == 0
            || self.epochs == 0
            || self.initial_filters == 0
            || self.augmentation_factor == 0
        {
            return Err(Error::Contract(format!(
                "training configuration fields must be positive: {self:?}"
            )));
        }
        Ok(())
    }
}

/// One epoch of curve data (epoch numbers are 1-based).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Micro-averaged Dice over the validation split; `None` when both
    /// predictions and references are empty.
    pub val_dice: Option<f64>,
}

/// Result of a full training run: the best checkpoint and the curves.
pub struct TrainOutcome {
    /// Weights from the epoch with minimum validation loss.
    pub model: UNet,
    pub history: Vec<EpochRecord>,
    /// 1-based epoch of the retained checkpoint.
    pub best_epoch: usize,
}

/// Index of the minimum value; ties resolve to the earliest epoch.
pub fn argmin_val_loss(val_losses: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in val_losses.iter().enumerate() {
        if best.map_or(true, |(_, b)| v < b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

fn mean_loss_and_confusion(net: &UNet, samples: &[TensorSample]) -> Result<(f64, Confusion)> {
    let per_sample: Vec<(f64, Confusion)> = samples
        .par_iter()
        .map(|s| {
            let probs = net.forward(&s.channels)?;
            let loss = bce_loss(&probs, &s.label)?;
            let conf = Confusion::from_probs(&probs, &s.label)?;
            Ok((loss, conf))
        })
        .collect::<Result<_>>()?;
    let mut total = Confusion::default();
    let mut loss_sum = 0.0;
    for (loss, conf) in &per_sample {
        loss_sum += loss;
        total.add_assign(conf);
    }
    Ok((loss_sum / samples.len() as f64, total))
}

/// Runs the full fixed-epoch loop with Adam and BCE, evaluating the
/// validation split after each epoch and retaining the weights from the
/// epoch with minimum validation loss.
///
/// Shuffling and initialization derive from `config.seed` alone; per-sample
/// gradients are computed in parallel but reduced in batch order, so a run
/// is bit-reproducible for a fixed seed and thread-independent.
pub fn train(
    config: &TrainConfig,
    train_samples: &[TensorSample],
    val_samples: &[TensorSample],
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_samples.is_empty() || val_samples.is_empty() {
        return Err(Error::Contract(
            "training and validation splits must be non-empty".into(),
        ));
    }
    let net_config = UNetConfig::new(NUM_CHANNELS, config.initial_filters);
    let mut net = UNet::new(net_config, config.seed);
    let mut opt = Adam::new(config.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_5eed);

    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, UNet)> = None;
    let mut order: Vec<usize> = (0..train_samples.len()).collect();

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let results: Vec<(f64, UNetGrads)> = batch
                .par_iter()
                .map(|&i| {
                    let s = &train_samples[i];
                    let cache = net.forward_cached(&s.channels)?;
                    let loss = bce_loss(&cache.probs, &s.label)?;
                    let grad_p = bce_grad(&cache.probs, &s.label)?;
                    Ok((loss, net.backward(&cache, &grad_p)))
                })
                .collect::<Result<_>>()?;
            let mut grads = UNetGrads::zeros_like(&net);
            for (loss, g) in &results {
                epoch_loss += loss;
                grads.add_assign(g);
            }
            grads.scale(1.0 / batch.len() as f64);
            net.apply_grads(&mut opt, &grads);
        }
        let train_loss = epoch_loss / train_samples.len() as f64;
        let (val_loss, val_conf) = mean_loss_and_confusion(&net, val_samples)?;
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(Error::Diverged(format!(
                "non-finite loss at epoch {epoch}: train {train_loss}, val {val_loss}"
            )));
        }
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            val_dice: val_conf.dice(),
        });
        if best.as_ref().map_or(true, |(b, _, _)| val_loss < *b) {
            best = Some((val_loss, epoch, net.clone()));
        }
    }
    let (_, best_epoch, model) = best.expect("epochs >= 1 guarantees a best");
    Ok(TrainOutcome {
        model,
        history,
        best_epoch,
    })
}

/// Per-tile evaluation results.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TileMetrics {
    pub record_id: String,
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
    pub dice: Option<f64>,
    pub omission: Option<f64>,
    /// FP / (TP + FN); may exceed 1 and is flagged, never clipped.
    pub commission: Option<f64>,
    /// Conventional FP / (TP + FP).
    pub commission_of_detected: Option<f64>,
    pub loss: f64,
}

impl TileMetrics {
    pub fn confusion(&self) -> Confusion {
        Confusion {
            tp: self.tp,
            fp: self.fp,
            fn_: self.fn_,
            tn: self.tn,
        }
    }
}

/// Evaluation summary: per-tile rows plus macro (mean of defined per-tile
/// values) and micro (pooled counts) aggregates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub tiles: Vec<TileMetrics>,
    pub mean_loss: f64,
    pub macro_dice: Option<f64>,
    pub macro_omission: Option<f64>,
    pub macro_commission: Option<f64>,
    pub micro_dice: Option<f64>,
    pub micro_omission: Option<f64>,
    pub micro_commission: Option<f64>,
    pub undefined_dice: usize,
    pub undefined_omission: usize,
    pub undefined_commission: usize,
    /// Tiles whose commission exceeds 1.
    pub commission_over_one: Vec<String>,
}

fn mean_of_defined(values: impl Iterator<Item = Option<f64>>) -> (Option<f64>, usize) {
    let mut sum = 0.0;
    let mut n = 0usize;
    let mut undefined = 0usize;
    for v in values {
        match v {
            Some(x) => {
                sum += x;
                n += 1;
            }
            None => undefined += 1,
        }
    }
    (
        if n > 0 { Some(sum / n as f64) } else { None },
        undefined,
    )
}

/// Builds the report from already-computed probability maps. Split out from
/// [`evaluate`] so degenerate predictors can be tested directly.
pub fn report_from_probs(
    ids: &[String],
    probs: &[ndarray::Array3<f64>],
    labels: &[ndarray::Array2<u8>],
) -> Result<MetricsReport> {
    if ids.len() != probs.len() || ids.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} ids, {} probability maps, {} labels",
            ids.len(),
            probs.len(),
            labels.len()
        )));
    }
    let mut tiles = Vec::with_capacity(ids.len());
    let mut pooled = Confusion::default();
    let mut loss_sum = 0.0;
    for ((id, p), label) in ids.iter().zip(probs).zip(labels) {
        let conf = Confusion::from_probs(p, label)?;
        let loss = bce_loss(p, label)?;
        pooled.add_assign(&conf);
        loss_sum += loss;
        tiles.push(TileMetrics {
            record_id: id.clone(),
            tp: conf.tp,
            fp: conf.fp,
            fn_: conf.fn_,
            tn: conf.tn,
            dice: conf.dice(),
            omission: conf.omission(),
            commission: conf.commission(),
            commission_of_detected: conf.commission_of_detected(),
            loss,
        });
    }
    let (macro_dice, undefined_dice) = mean_of_defined(tiles.iter().map(|t| t.dice));
    let (macro_omission, undefined_omission) = mean_of_defined(tiles.iter().map(|t| t.omission));
    let (macro_commission, undefined_commission) =
        mean_of_defined(tiles.iter().map(|t| t.commission));
    let commission_over_one = tiles
        .iter()
        .filter(|t| t.commission.map_or(false, |c| c > 1.0))
        .map(|t| t.record_id.clone())
        .collect();
    Ok(MetricsReport {
        mean_loss: if tiles.is_empty() {
            0.0
        } else {
            loss_sum / tiles.len() as f64
        },
        macro_dice,
        macro_omission,
        macro_commission,
        micro_dice: pooled.dice(),
        micro_omission: pooled.omission(),
        micro_commission: pooled.commission(),
        undefined_dice,
        undefined_omission,
        undefined_commission,
        commission_over_one,
        tiles,
    })
}

/// Evaluates a checkpoint on a split; deterministic for fixed inputs
/// (tiles are processed in parallel, aggregated in input order).
pub fn evaluate(net: &UNet, samples: &[TensorSample]) -> Result<MetricsReport> {
    let probs: Vec<ndarray::Array3<f64>> = samples
        .par_iter()
        .map(|s| net.forward(&s.channels))
        .collect::<Result<_>>()?;
    let ids: Vec<String> = samples.iter().map(|s| s.record_id.clone()).collect();
    let labels: Vec<ndarray::Array2<u8>> = samples.iter().map(|s| s.label.clone()).collect();
    report_from_probs(&ids, &probs, &labels)
}

/// Per-tile band means over reference burned pixels, joined with Dice.
#[derive(Debug, Clone, Serialize)]
pub struct BandDcRow {
    pub record_id: String,
    pub dice: Option<f64>,
    /// Mean pre-fire value over burned reference pixels, per band.
    pub pre_means: [f64; NUM_BANDS],
    pub post_means: [f64; NUM_BANDS],
}

#[derive(Debug, Clone, Serialize)]
pub struct BandDcAnalysis {
    pub rows: Vec<BandDcRow>,
    /// Tiles skipped because the reference mask had no burned pixels.
    pub excluded: usize,
    /// Mean band value in the top Dice quartile minus the bottom quartile,
    /// indexed `[phase][band]` (pre = 0, post = 1).
    pub quartile_delta: [[f64; NUM_BANDS]; 2],
}

fn burned_band_means(tile: &BandTile, label: &ScarLabel, phase: Phase) -> Option<[f64; NUM_BANDS]> {
    let bands = tile.bands(phase);
    let mut sums = [0.0; NUM_BANDS];
    let mut n = 0usize;
    for ((r, c), &v) in label.mask.indexed_iter() {
        if v == 1 {
            n += 1;
            for b in 0..NUM_BANDS {
                sums[b] += bands[[b, r, c]];
            }
        }
    }
    if n == 0 {
        return None;
    }
    for s in &mut sums {
        *s /= n as f64;
    }
    Some(sums)
}

/// Joins per-band burned-pixel means with per-tile Dice and reports the
/// high-vs-low Dice-quartile contrast per band.
pub fn band_dc_analysis(
    tiles: &[BandTile],
    labels: &[ScarLabel],
    dice: &[Option<f64>],
) -> Result<BandDcAnalysis> {
    if tiles.len() != labels.len() || tiles.len() != dice.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} tiles, {} labels, {} dice values",
            tiles.len(),
            labels.len(),
            dice.len()
        )));
    }
    let mut rows = Vec::new();
    let mut excluded = 0usize;
    for ((tile, label), &d) in tiles.iter().zip(labels).zip(dice) {
        match (
            burned_band_means(tile, label, Phase::Pre),
            burned_band_means(tile, label, Phase::Post),
        ) {
            (Some(pre_means), Some(post_means)) => rows.push(BandDcRow {
                record_id: tile.record_id.clone(),
                dice: d,
                pre_means,
                post_means,
            }),
            _ => excluded += 1,
        }
    }
    // Quartile contrast over rows with a defined Dice.
    let mut scored: Vec<&BandDcRow> = rows.iter().filter(|r| r.dice.is_some()).collect();
    scored.sort_by(|a, b| a.dice.partial_cmp(&b.dice).unwrap());
    let mut quartile_delta = [[0.0; NUM_BANDS]; 2];
    if scored.len() >= 2 {
        let q = (scored.len() / 4).max(1);
        let mean_over = |rows: &[&BandDcRow]| {
            let mut m = [[0.0; NUM_BANDS]; 2];
            for r in rows {
                for b in 0..NUM_BANDS {
                    m[0][b] += r.pre_means[b] / rows.len() as f64;
                    m[1][b] += r.post_means[b] / rows.len() as f64;
                }
            }
            m
        };
        let low = mean_over(&scored[..q]);
        let high = mean_over(&scored[scored.len() - q..]);
        for p in 0..2 {
            for b in 0..NUM_BANDS {
                quartile_delta[p][b] = high[p][b] - low[p][b];
            }
        }
    }
    Ok(BandDcAnalysis {
        rows,
        excluded,
        quartile_delta,
    })
}

/// Per-tile class balance joined with Dice.
#[derive(Debug, Clone, Serialize)]
pub struct AreaDcRow {
    pub record_id: String,
    pub burned_fraction: f64,
    /// Tile pixel count (constant 16384 in the fixed-window variant).
    pub total_area: usize,
    pub dice: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AreaDcAnalysis {
    pub rows: Vec<AreaDcRow>,
    /// Spearman rank correlation between burned fraction and Dice; 0 when
    /// undefined (fewer than two defined rows or a constant variable).
    pub burned_fraction_dice_correlation: f64,
    pub correlation_defined: bool,
}

pub fn area_dc_analysis(report: &MetricsReport) -> AreaDcAnalysis {
    let rows: Vec<AreaDcRow> = report
        .tiles
        .iter()
        .map(|t| {
            let total = (t.tp + t.fp + t.fn_ + t.tn) as usize;
            AreaDcRow {
                record_id: t.record_id.clone(),
                burned_fraction: (t.tp + t.fn_) as f64 / total.max(1) as f64,
                total_area: total,
                dice: t.dice,
            }
        })
        .collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter_map(|r| r.dice.map(|d| (r.burned_fraction, d)))
        .unzip();
    let rho = crate::metrics::spearman(&xs, &ys).ok().flatten();
    AreaDcAnalysis {
        rows,
        burned_fraction_dice_correlation: rho.unwrap_or(0.0),
        correlation_defined: rho.is_some(),
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".into(), |x| format!("{x:.6}"))
}

/// Per-tile table as delimiter-separated text.
pub fn write_report_csv(path: impl AsRef<Path>, report: &MetricsReport) -> Result<()> {
    let mut out = String::from(
        "record_id,tp,fp,fn,tn,dice,omission,commission,commission_of_detected,loss\n",
    );
    for t in &report.tiles {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{:.6}\n",
            t.record_id,
            t.tp,
            t.fp,
            t.fn_,
            t.tn,
            fmt_opt(t.dice),
            fmt_opt(t.omission),
            fmt_opt(t.commission),
            fmt_opt(t.commission_of_detected),
            t.loss,
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Machine-readable summary of the whole report.
pub fn write_report_json(path: impl AsRef<Path>, report: &MetricsReport) -> Result<()> {
    let text = serde_json::to_string_pretty(report)
        .map_err(|e| Error::Contract(format!("report serialization: {e}")))?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn write_curves_csv(path: impl AsRef<Path>, history: &[EpochRecord]) -> Result<()> {
    let mut out = String::from("epoch,train_loss,val_loss,val_dice\n");
    for r in history {
        out.push_str(&format!(
            "{},{:.6},{:.6},{}\n",
            r.epoch,
            r.train_loss,
            r.val_loss,
            fmt_opt(r.val_dice)
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_curves_csv(path: impl AsRef<Path>) -> Result<Vec<EpochRecord>> {
    let path = path.as_ref();
    let display = path.display().to_string();
    if !path.exists() {
        return Err(Error::MissingArtifact(display));
    }
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for line in text.lines().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(Error::format(&display, format!("bad row: {line}")));
        }
        let parse = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| Error::format(&display, e.to_string()))
        };
        out.push(EpochRecord {
            epoch: f[0]
                .parse()
                .map_err(|e| Error::format(&display, format!("{e}")))?,
            train_loss: parse(f[1])?,
            val_loss: parse(f[2])?,
            val_dice: if f[3] == "undefined" {
                None
            } else {
                Some(parse(f[3])?)
            },
        });
    }
    Ok(out)
}

/// Band-analysis table as delimiter-separated text.
pub fn write_band_analysis_csv(path: impl AsRef<Path>, analysis: &BandDcAnalysis) -> Result<()> {
    let mut out = String::from("record_id,dice");
    for phase in ["pre", "post"] {
        for name in BAND_NAMES {
            out.push_str(&format!(",{phase}_{name}"));
        }
    }
    out.push('\n');
    for r in &analysis.rows {
        out.push_str(&format!("{},{}", r.record_id, fmt_opt(r.dice)));
        for v in r.pre_means.iter().chain(r.post_means.iter()) {
            out.push_str(&format!(",{v:.6}"));
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn write_area_analysis_csv(path: impl AsRef<Path>, analysis: &AreaDcAnalysis) -> Result<()> {
    let mut out = String::from("record_id,burned_fraction,total_area,dice\n");
    for r in &analysis.rows {
        out.push_str(&format!(
            "{},{:.6},{},{}\n",
            r.record_id,
            r.burned_fraction,
            r.total_area,
            fmt_opt(r.dice)
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}
