//! Turns crop pairs into model-ready 16-channel tensors: IQR outlier
//! imputation, KNN gap fill, standardization, zero padding (AS) and
//! geometric augmentation.
//!
//! Fixed stage order: impute outliers -> KNN fill -> concatenate ->
//! standardize -> zero-pad (AS) -> augment. Labels are only ever
//! geometrically transformed and zero-padded, never standardized or
//! interpolated.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array2, Array3, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{PadSpec, TILE_SIZE};
use crate::raster::{BandTile, Phase, NUM_BANDS, NUM_RAW_BANDS};
use crate::{Error, Result};

/// Channels in a model input tensor: post-fire bands first, then pre-fire.
pub const NUM_CHANNELS: usize = 2 * NUM_BANDS;

/// IQR multiplier for the outlier fences.
pub const IQR_FACTOR: f64 = 1.5;

/// Default neighbor count for KNN gap filling (one ring on a regular grid).
pub const DEFAULT_KNN_K: usize = 8;

/// Model-ready sample: 16 standardized channels plus the aligned label.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorSample {
    /// `(16, h, w)`; channels 0-7 post-fire, 8-15 pre-fire.
    pub channels: Array3<f64>,
    pub label: Array2<u8>,
    pub record_id: String,
    /// "orig" or the name of the geometric transform applied.
    pub augmentation_tag: String,
}

impl TensorSample {
    pub fn burned_pixel_count(&self) -> usize {
        self.label.iter().filter(|&&v| v == 1).count()
    }
}

/// Dataset-level outlier fences and means, per phase and band.
#[derive(Debug, Clone, PartialEq)]
pub struct BandLimits {
    /// `[phase][band]` lower fence Q1 - 1.5 IQR.
    pub lower: [[f64; NUM_BANDS]; 2],
    /// `[phase][band]` upper fence Q3 + 1.5 IQR.
    pub upper: [[f64; NUM_BANDS]; 2],
    /// `[phase][band]` dataset-level mean of in-range values (KNN fallback).
    pub mean: [[f64; NUM_BANDS]; 2],
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// Whether the pixel is zero across every raw band of the phase (sensor
/// noise, treated as missing). Isolated zeros in a single band are kept.
fn zero_noise_mask(bands: &Array3<f64>) -> Array2<bool> {
    let (_, h, w) = bands.dim();
    let mut mask = Array2::from_elem((h, w), true);
    for b in 0..NUM_RAW_BANDS {
        let band = bands.index_axis(Axis(0), b);
        ndarray::Zip::from(&mut mask)
            .and(&band)
            .for_each(|m, &v| *m = *m && v == 0.0);
    }
    mask
}

/// Computes per-band IQR fences and means over the whole dataset.
///
/// NaN and zero-noise pixels are excluded from the distribution.
pub fn fit_band_limits<'a>(tiles: impl IntoIterator<Item = &'a BandTile>) -> BandLimits {
    let mut values: Vec<Vec<Vec<f64>>> = vec![vec![Vec::new(); NUM_BANDS]; 2];
    for tile in tiles {
        for phase in Phase::ALL {
            let bands = tile.bands(phase);
            let noise = zero_noise_mask(bands);
            for b in 0..NUM_BANDS {
                let band = bands.index_axis(Axis(0), b);
                for ((r, c), &v) in band.indexed_iter() {
                    if v.is_finite() && !noise[[r, c]] {
                        values[phase.index()][b].push(v);
                    }
                }
            }
        }
    }
    let mut limits = BandLimits {
        lower: [[f64::NEG_INFINITY; NUM_BANDS]; 2],
        upper: [[f64::INFINITY; NUM_BANDS]; 2],
        mean: [[0.0; NUM_BANDS]; 2],
    };
    for p in 0..2 {
        for b in 0..NUM_BANDS {
            let vals = &mut values[p][b];
            if vals.is_empty() {
                continue;
            }
            vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let q1 = quantile(vals, 0.25);
            let q3 = quantile(vals, 0.75);
            let iqr = q3 - q1;
            limits.lower[p][b] = q1 - IQR_FACTOR * iqr;
            limits.upper[p][b] = q3 + IQR_FACTOR * iqr;
            limits.mean[p][b] = vals.iter().sum::<f64>() / vals.len() as f64;
        }
    }
    limits
}

/// Diagnostics from [`impute_outliers`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ImputeLog {
    pub replaced: usize,
    /// Bands that had no in-range pixels and fell back to the dataset mean.
    pub fallback_bands: Vec<(Phase, usize)>,
}

/// Replaces pixels beyond the dataset-level IQR fences by the mean of the
/// in-range pixels of that band within the same image.
///
/// NaN and zero-noise pixels are left for [`knn_fill`]; a band with no
/// in-range pixels at all falls back to the dataset-level band mean.
pub fn impute_outliers(tile: &BandTile, limits: &BandLimits) -> (BandTile, ImputeLog) {
    let mut out = tile.clone();
    let mut log = ImputeLog::default();
    for phase in Phase::ALL {
        let noise = zero_noise_mask(tile.bands(phase));
        let bands = out.bands_mut(phase);
        for b in 0..NUM_BANDS {
            let (lo, hi) = (
                limits.lower[phase.index()][b],
                limits.upper[phase.index()][b],
            );
            let mut band = bands.index_axis_mut(Axis(0), b);
            let mut sum = 0.0;
            let mut n = 0usize;
            for ((r, c), &v) in band.indexed_iter() {
                if v.is_finite() && !noise[[r, c]] && v >= lo && v <= hi {
                    sum += v;
                    n += 1;
                }
            }
            let image_mean = if n > 0 {
                sum / n as f64
            } else {
                log.fallback_bands.push((phase, b));
                limits.mean[phase.index()][b]
            };
            for ((r, c), v) in band.indexed_iter_mut() {
                if v.is_finite() && !noise[[r, c]] && (*v < lo || *v > hi) {
                    *v = image_mean;
                    log.replaced += 1;
                }
            }
        }
    }
    (out, log)
}

/// Diagnostics from [`knn_fill`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FillLog {
    pub filled: usize,
    /// Bands that were entirely invalid and fell back to the dataset mean.
    pub fallback_bands: Vec<(Phase, usize)>,
}

/// Fills one missing pixel with the mean of its `k` nearest valid pixels
/// (Euclidean pixel distance; ties broken by row-major order).
fn knn_value(valid: &Array2<bool>, band: &Array2<f64>, r: usize, c: usize, k: usize) -> f64 {
    let (h, w) = band.dim();
    // Expand a Chebyshev window until at least k valid pixels are inside,
    // then widen enough that no closer pixel can lie outside it.
    let mut radius = 1usize;
    let count_within = |rad: usize| -> usize {
        let r0 = r.saturating_sub(rad);
        let r1 = (r + rad + 1).min(h);
        let c0 = c.saturating_sub(rad);
        let c1 = (c + rad + 1).min(w);
        let mut n = 0;
        for rr in r0..r1 {
            for cc in c0..c1 {
                if valid[[rr, cc]] {
                    n += 1;
                }
            }
        }
        n
    };
    let max_radius = h.max(w);
    while radius < max_radius && count_within(radius) < k {
        radius += 1;
    }
    // A pixel at Chebyshev radius R can be Euclidean-closer than one at
    // radius r < R only if R <= r * sqrt(2); widen accordingly.
    let safe = ((radius as f64) * std::f64::consts::SQRT_2).ceil() as usize;
    let r0 = r.saturating_sub(safe);
    let r1 = (r + safe + 1).min(h);
    let c0 = c.saturating_sub(safe);
    let c1 = (c + safe + 1).min(w);
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for rr in r0..r1 {
        for cc in c0..c1 {
            if valid[[rr, cc]] {
                let (dr, dc) = (rr as f64 - r as f64, cc as f64 - c as f64);
                candidates.push((dr * dr + dc * dc, rr, cc));
            }
        }
    }
    candidates.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let take = k.min(candidates.len());
    candidates[..take]
        .iter()
        .map(|&(_, rr, cc)| band[[rr, cc]])
        .sum::<f64>()
        / take as f64
}

/// Fills NaN and zero-noise pixels with the mean of the `k` nearest valid
/// pixels in the same band. A band with no valid pixels falls back to the
/// dataset-level band mean.
pub fn knn_fill(tile: &BandTile, k: usize, limits: &BandLimits) -> (BandTile, FillLog) {
    let mut out = tile.clone();
    let mut log = FillLog::default();
    for phase in Phase::ALL {
        let noise = zero_noise_mask(tile.bands(phase));
        let bands = out.bands_mut(phase);
        for b in 0..NUM_BANDS {
            let source = bands.index_axis(Axis(0), b).to_owned();
            let mut valid = Array2::from_elem(source.dim(), false);
            let mut missing = Vec::new();
            for ((r, c), &v) in source.indexed_iter() {
                if v.is_nan() || noise[[r, c]] {
                    missing.push((r, c));
                } else {
                    valid[[r, c]] = true;
                }
            }
            if missing.is_empty() {
                continue;
            }
            let mut band = bands.index_axis_mut(Axis(0), b);
            if valid.iter().all(|&v| !v) {
                log.fallback_bands.push((phase, b));
                band.fill(limits.mean[phase.index()][b]);
                log.filled += missing.len();
                continue;
            }
            for (r, c) in missing {
                band[[r, c]] = knn_value(&valid, &source, r, c, k);
                log.filled += 1;
            }
        }
    }
    (out, log)
}

/// Concatenates a tile into the model channel layout: the eight post-fire
/// bands first, then the eight pre-fire bands.
pub fn concat_channels(tile: &BandTile) -> Array3<f64> {
    let (_, h, w) = tile.pre_bands.dim();
    let mut out = Array3::zeros((NUM_CHANNELS, h, w));
    for b in 0..NUM_BANDS {
        out.index_axis_mut(Axis(0), b)
            .assign(&tile.post_bands.index_axis(Axis(0), b));
        out.index_axis_mut(Axis(0), NUM_BANDS + b)
            .assign(&tile.pre_bands.index_axis(Axis(0), b));
    }
    out
}

/// Per-channel standardization statistics, fitted on the training split only
/// (and, for AS, before zero padding so the padding zeros do not contaminate
/// them).
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub mean: [f64; NUM_CHANNELS],
    pub std: [f64; NUM_CHANNELS],
    /// Channels whose std collapsed to zero and was replaced by 1.
    pub degenerate: Vec<usize>,
}

/// Fits per-channel mean and population standard deviation over the given
/// (training) tensors. Zero standard deviations are replaced by 1.
pub fn fit_norm_stats<'a>(channels: impl IntoIterator<Item = &'a Array3<f64>>) -> NormStats {
    let mut sum = [0.0; NUM_CHANNELS];
    let mut sum_sq = [0.0; NUM_CHANNELS];
    let mut count = [0usize; NUM_CHANNELS];
    for chans in channels {
        for ch in 0..NUM_CHANNELS {
            for &v in chans.index_axis(Axis(0), ch).iter() {
                sum[ch] += v;
                sum_sq[ch] += v * v;
                count[ch] += 1;
            }
        }
    }
    let mut stats = NormStats {
        mean: [0.0; NUM_CHANNELS],
        std: [1.0; NUM_CHANNELS],
        degenerate: Vec::new(),
    };
    for ch in 0..NUM_CHANNELS {
        if count[ch] == 0 {
            stats.degenerate.push(ch);
            continue;
        }
        let n = count[ch] as f64;
        let mean = sum[ch] / n;
        let var = (sum_sq[ch] / n - mean * mean).max(0.0);
        stats.mean[ch] = mean;
        let std = var.sqrt();
        // Constant channels leave rounding noise in the variance; treat
        // anything below machine-level scatter as degenerate.
        if std > 1e-12 * mean.abs().max(1.0) {
            stats.std[ch] = std;
        } else {
            stats.degenerate.push(ch);
        }
    }
    stats
}

/// `(x - mean) / std` per channel.
pub fn standardize(channels: &Array3<f64>, stats: &NormStats) -> Array3<f64> {
    let mut out = channels.clone();
    for ch in 0..NUM_CHANNELS {
        let mut band = out.index_axis_mut(Axis(0), ch);
        band.mapv_inplace(|v| (v - stats.mean[ch]) / stats.std[ch]);
    }
    out
}

/// Inverse of [`standardize`].
pub fn unstandardize(channels: &Array3<f64>, stats: &NormStats) -> Array3<f64> {
    let mut out = channels.clone();
    for ch in 0..NUM_CHANNELS {
        let mut band = out.index_axis_mut(Axis(0), ch);
        band.mapv_inplace(|v| v * stats.std[ch] + stats.mean[ch]);
    }
    out
}

/// Zero-pads channels and label to 128x128, content centered with the same
/// down/right tie-break as the crop geometry.
pub fn zero_pad(channels: &Array3<f64>, label: &Array2<u8>) -> Result<(Array3<f64>, Array2<u8>)> {
    let (c, h, w) = channels.dim();
    if label.dim() != (h, w) {
        return Err(Error::ShapeMismatch(format!(
            "label {:?} vs channels {h}x{w}",
            label.dim()
        )));
    }
    let pad = PadSpec::centered(h, w, TILE_SIZE)?;
    let mut out = Array3::zeros((c, TILE_SIZE, TILE_SIZE));
    out.slice_mut(ndarray::s![
        ..,
        pad.top..pad.top + h,
        pad.left..pad.left + w
    ])
    .assign(channels);
    let mut out_label = Array2::zeros((TILE_SIZE, TILE_SIZE));
    out_label
        .slice_mut(ndarray::s![pad.top..pad.top + h, pad.left..pad.left + w])
        .assign(label);
    Ok((out, out_label))
}

/// The seven non-identity elements of the flip/rotation group, plus identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transform {
    Identity,
    FlipH,
    FlipV,
    Rot90,
    Rot180,
    Rot270,
    /// Horizontal flip followed by a 90 degree rotation.
    FlipRot90,
    /// Horizontal flip followed by a 270 degree rotation.
    FlipRot270,
}

impl Transform {
    /// All transforms available for augmentation, identity excluded.
    pub const AUGMENTING: [Transform; 7] = [
        Transform::FlipH,
        Transform::FlipV,
        Transform::Rot90,
        Transform::Rot180,
        Transform::Rot270,
        Transform::FlipRot90,
        Transform::FlipRot270,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Transform::Identity => "orig",
            Transform::FlipH => "flip_h",
            Transform::FlipV => "flip_v",
            Transform::Rot90 => "rot90",
            Transform::Rot180 => "rot180",
            Transform::Rot270 => "rot270",
            Transform::FlipRot90 => "flip_rot90",
            Transform::FlipRot270 => "flip_rot270",
        }
    }

    /// Output shape for an input of `(h, w)`.
    fn out_shape(self, h: usize, w: usize) -> (usize, usize) {
        match self {
            Transform::Identity | Transform::FlipH | Transform::FlipV | Transform::Rot180 => {
                (h, w)
            }
            _ => (w, h),
        }
    }

    /// Source index for output position `(r, c)`.
    fn source(self, r: usize, c: usize, h: usize, w: usize) -> (usize, usize) {
        match self {
            Transform::Identity => (r, c),
            Transform::FlipH => (r, w - 1 - c),
            Transform::FlipV => (h - 1 - r, c),
            Transform::Rot90 => (c, w - 1 - r),
            Transform::Rot180 => (h - 1 - r, w - 1 - c),
            Transform::Rot270 => (h - 1 - c, r),
            Transform::FlipRot90 => (c, r),
            Transform::FlipRot270 => (h - 1 - c, w - 1 - r),
        }
    }
}

pub fn transform_grid<T: Copy + num_zero::Zero>(grid: &Array2<T>, t: Transform) -> Array2<T> {
    let (h, w) = grid.dim();
    let (oh, ow) = t.out_shape(h, w);
    Array2::from_shape_fn((oh, ow), |(r, c)| {
        let (sr, sc) = t.source(r, c, h, w);
        grid[[sr, sc]]
    })
}

pub fn transform_channels(channels: &Array3<f64>, t: Transform) -> Array3<f64> {
    let (n, h, w) = channels.dim();
    let (oh, ow) = t.out_shape(h, w);
    Array3::from_shape_fn((n, oh, ow), |(ch, r, c)| {
        let (sr, sc) = t.source(r, c, h, w);
        channels[[ch, sr, sc]]
    })
}

/// Returns the original sample plus `factor - 1` distinct geometric
/// transforms drawn without replacement, the same transform applied to
/// channels and label. `factor` counts the original.
pub fn augment(sample: &TensorSample, factor: usize, seed: u64) -> Result<Vec<TensorSample>> {
    if factor < 1 {
        return Err(Error::Contract("augmentation factor must be >= 1".into()));
    }
    if factor > Transform::AUGMENTING.len() + 1 {
        return Err(Error::Contract(format!(
            "augmentation factor {factor} exceeds {} available transforms + original",
            Transform::AUGMENTING.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut transforms = Transform::AUGMENTING.to_vec();
    transforms.shuffle(&mut rng);
    let mut out = Vec::with_capacity(factor);
    out.push(TensorSample {
        augmentation_tag: Transform::Identity.name().into(),
        ..sample.clone()
    });
    for t in transforms.into_iter().take(factor - 1) {
        out.push(TensorSample {
            channels: transform_channels(&sample.channels, t),
            label: transform_grid(&sample.label, t),
            record_id: sample.record_id.clone(),
            augmentation_tag: t.name().into(),
        });
    }
    Ok(out)
}

// Local minimal Zero bound so transform_grid works for u8 and f64 alike.
mod num_zero {
    pub trait Zero {
        fn zero() -> Self;
    }
    impl Zero for u8 {
        fn zero() -> Self {
            0
        }
    }
    impl Zero for f64 {
        fn zero() -> Self {
            0.0
        }
    }
}

const ARCHIVE_MAGIC: &[u8; 4] = b"SMTS";
const ARCHIVE_VERSION: u32 = 1;

/// Writes samples in the framework-neutral binary layout: header
/// (magic, version, count, channels, height, width, dtype) followed by one
/// record per sample (id, tag, channel-major float64 payload, label bytes).
pub fn write_archive(path: impl AsRef<Path>, samples: &[TensorSample]) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let display = path.display().to_string();
    let (c, h, w) = match samples.first() {
        Some(s) => s.channels.dim(),
        None => (NUM_CHANNELS, TILE_SIZE, TILE_SIZE),
    };
    if samples.iter().any(|s| s.channels.dim() != (c, h, w)) {
        return Err(Error::format(&display, "samples differ in shape"));
    }
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(ARCHIVE_MAGIC)?;
    f.write_all(&ARCHIVE_VERSION.to_le_bytes())?;
    f.write_all(&(samples.len() as u32).to_le_bytes())?;
    f.write_all(&(c as u16).to_le_bytes())?;
    f.write_all(&(h as u16).to_le_bytes())?;
    f.write_all(&(w as u16).to_le_bytes())?;
    f.write_all(&[8u8])?; // dtype: 8-byte IEEE float
    f.write_all(&[0u8])?; // reserved
    for s in samples {
        let write_str = |f: &mut dyn Write, s: &str| -> Result<()> {
            let bytes = s.as_bytes();
            f.write_all(&(bytes.len() as u16).to_le_bytes())?;
            f.write_all(bytes)?;
            Ok(())
        };
        write_str(&mut f, &s.record_id)?;
        write_str(&mut f, &s.augmentation_tag)?;
        for &v in s.channels.iter() {
            f.write_all(&v.to_le_bytes())?;
        }
        let label_bytes: Vec<u8> = s.label.iter().copied().collect();
        f.write_all(&label_bytes)?;
    }
    f.flush()?;
    Ok(())
}

pub fn read_archive(path: impl AsRef<Path>) -> Result<Vec<TensorSample>> {
    let path = path.as_ref();
    let display = path.display().to_string();
    if !path.exists() {
        return Err(Error::MissingArtifact(display));
    }
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    let bad = |reason: &str| Error::format(&display, reason);

    let mut magic = [0u8; 4];
    f.read_exact(&mut magic)?;
    if &magic != ARCHIVE_MAGIC {
        return Err(bad("bad magic"));
    }
    let mut u32buf = [0u8; 4];
    f.read_exact(&mut u32buf)?;
    if u32::from_le_bytes(u32buf) != ARCHIVE_VERSION {
        return Err(bad("unsupported version"));
    }
    f.read_exact(&mut u32buf)?;
    let count = u32::from_le_bytes(u32buf) as usize;
    let mut u16buf = [0u8; 2];
    f.read_exact(&mut u16buf)?;
    let c = u16::from_le_bytes(u16buf) as usize;
    f.read_exact(&mut u16buf)?;
    let h = u16::from_le_bytes(u16buf) as usize;
    f.read_exact(&mut u16buf)?;
    let w = u16::from_le_bytes(u16buf) as usize;
    let mut dtype = [0u8; 2];
    f.read_exact(&mut dtype)?;
    if dtype[0] != 8 {
        return Err(bad("unsupported dtype"));
    }

    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let read_str = |f: &mut dyn Read| -> Result<String> {
            let mut len = [0u8; 2];
            f.read_exact(&mut len)?;
            let mut buf = vec![0u8; u16::from_le_bytes(len) as usize];
            f.read_exact(&mut buf)?;
            String::from_utf8(buf).map_err(|_| Error::format(&display, "invalid utf-8"))
        };
        let record_id = read_str(&mut f)?;
        let augmentation_tag = read_str(&mut f)?;
        let mut payload = vec![0u8; c * h * w * 8];
        f.read_exact(&mut payload)?;
        let values: Vec<f64> = payload
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        let channels = Array3::from_shape_vec((c, h, w), values)
            .map_err(|e| Error::format(&display, e.to_string()))?;
        let mut label_bytes = vec![0u8; h * w];
        f.read_exact(&mut label_bytes)?;
        let label = Array2::from_shape_vec((h, w), label_bytes)
            .map_err(|e| Error::format(&display, e.to_string()))?;
        out.push(TensorSample {
            channels,
            label,
            record_id,
            augmentation_tag,
        });
    }
    Ok(out)
}

/// Persists [`NormStats`] as plain key-value text.
pub fn write_norm_stats(path: impl AsRef<Path>, stats: &NormStats) -> Result<()> {
    let mut out = String::new();
    for ch in 0..NUM_CHANNELS {
        out.push_str(&format!("channel_{ch:02}_mean = {:?}\n", stats.mean[ch]));
        out.push_str(&format!("channel_{ch:02}_std = {:?}\n", stats.std[ch]));
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_norm_stats(path: impl AsRef<Path>) -> Result<NormStats> {
    let path = path.as_ref();
    let display = path.display().to_string();
    if !path.exists() {
        return Err(Error::MissingArtifact(display));
    }
    let text = std::fs::read_to_string(path)?;
    let mut stats = NormStats {
        mean: [0.0; NUM_CHANNELS],
        std: [1.0; NUM_CHANNELS],
        degenerate: Vec::new(),
    };
    for line in text.lines() {
        let Some((key, value)) = line.split_once('=') else {
            continue;
        };
        let key = key.trim();
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|e| Error::format(&display, format!("{key}: {e}")))?;
        let Some(rest) = key.strip_prefix("channel_") else {
            continue;
        };
        let (idx, field) = rest
            .split_once('_')
            .ok_or_else(|| Error::format(&display, format!("bad key {key}")))?;
        let ch: usize = idx
            .parse()
            .map_err(|e| Error::format(&display, format!("{key}: {e}")))?;
        if ch >= NUM_CHANNELS {
            return Err(Error::format(&display, format!("channel {ch} out of range")));
        }
        match field {
            "mean" => stats.mean[ch] = value,
            "std" => stats.std[ch] = value,
            _ => return Err(Error::format(&display, format!("bad key {key}"))),
        }
    }
    Ok(stats)
}
