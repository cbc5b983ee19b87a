//! Deterministic synthetic corpus generator: Landsat-like tiles with a
//! single connected fire scar per tile, controllable class balance, and a
//! defect injector for exercising the cleaning stages.
//!
//! Realism is not a goal; spectral separability and exact reproducibility
//! are. Identical spec and seed produce a bit-identical corpus.

use ndarray::{Array2, Array3, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dataset::label_components;
use crate::raster::{
    compute_nbr, compute_ndvi, BandTile, FireRecord, Phase, Region, ScarLabel, BAND_NIR,
    BAND_RED, BAND_SWIR2, NUM_BANDS, NUM_RAW_BANDS,
};
use crate::{Error, Result};

/// Burned-fraction control tolerance, in fraction units (2 percentage
/// points).
pub const FRACTION_TOLERANCE: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec {
    pub tile_count: usize,
    pub height: usize,
    pub width: usize,
    /// Target scar fraction of the tile, hit to within
    /// [`FRACTION_TOLERANCE`].
    pub burned_fraction: f64,
    /// Scales the NIR drop / SWIR2 rise inside the scar; 0 leaves post-fire
    /// imagery identical to pre-fire.
    pub severity: f64,
    /// Additive per-pixel spectral noise amplitude.
    pub noise_level: f64,
    pub pixel_size_m: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            tile_count: 1,
            height: 128,
            width: 128,
            burned_fraction: 0.33,
            severity: 1.0,
            noise_level: 0.02,
            pixel_size_m: 30.0,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.tile_count == 0
            || self.height < 8
            || self.width < 8
            || !(0.0..1.0).contains(&self.burned_fraction)
            || self.burned_fraction <= 0.0
            || self.severity < 0.0
            || self.noise_level < 0.0
            || self.pixel_size_m <= 0.0
        {
            return Err(Error::Contract(format!("invalid generator spec: {self:?}")));
        }
        Ok(())
    }
}

/// One generated record: imagery, reference mask, and catalogue row.
#[derive(Debug, Clone)]
pub struct SynthTile {
    pub tile: BandTile,
    pub label: ScarLabel,
    pub record: FireRecord,
}

/// Reflectance of the two background classes over the six raw bands
/// (blue, green, red, NIR, SWIR1, SWIR2).
const VEGETATION: [f64; NUM_RAW_BANDS] = [0.05, 0.08, 0.06, 0.45, 0.25, 0.12];
const SOIL: [f64; NUM_RAW_BANDS] = [0.12, 0.16, 0.22, 0.30, 0.35, 0.28];

/// Scar spectral shift at severity 1: NIR drops, SWIR2 rises, red rises
/// slightly, so NBR falls inside the scar.
const BURN_DELTA: [f64; NUM_RAW_BANDS] = [0.01, -0.01, 0.04, -0.25, 0.05, 0.20];

/// Separable box blur with edge clamping, normalized per window.
fn box_blur(field: &Array2<f64>, radius: usize) -> Array2<f64> {
    let (h, w) = field.dim();
    let mut rows = Array2::zeros((h, w));
    for r in 0..h {
        for c in 0..w {
            let c0 = c.saturating_sub(radius);
            let c1 = (c + radius + 1).min(w);
            let mut sum = 0.0;
            for cc in c0..c1 {
                sum += field[[r, cc]];
            }
            rows[[r, c]] = sum / (c1 - c0) as f64;
        }
    }
    let mut out = Array2::zeros((h, w));
    for c in 0..w {
        for r in 0..h {
            let r0 = r.saturating_sub(radius);
            let r1 = (r + radius + 1).min(h);
            let mut sum = 0.0;
            for rr in r0..r1 {
                sum += rows[[rr, c]];
            }
            out[[r, c]] = sum / (r1 - r0) as f64;
        }
    }
    out
}

/// Threshold at the `1 - q` quantile so a fraction `q` of pixels is set.
fn threshold_at_fraction(field: &Array2<f64>, q: f64) -> Array2<u8> {
    let mut values: Vec<f64> = field.iter().copied().collect();
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let k = ((1.0 - q) * values.len() as f64).floor() as usize;
    let t = values[k.min(values.len() - 1)];
    field.mapv(|v| (v > t) as u8)
}

fn largest_component(mask: &Array2<u8>) -> Array2<u8> {
    let (labels, n) = label_components(mask);
    if n == 0 {
        return Array2::zeros(mask.dim());
    }
    let mut sizes = vec![0usize; n + 1];
    for &id in labels.iter() {
        sizes[id as usize] += 1;
    }
    let best = (1..=n).max_by_key(|&id| (sizes[id], usize::MAX - id)).unwrap() as u32;
    labels.mapv(|id| (id == best) as u8)
}

/// Builds a connected scar mask whose burned fraction is within
/// [`FRACTION_TOLERANCE`] of the target: a radial bump plus smoothed noise
/// is thresholded, keeping the largest component, with the quantile level
/// adjusted by bisection until the component alone hits the target.
fn scar_mask(h: usize, w: usize, target: f64, rng: &mut ChaCha8Rng) -> Array2<u8> {
    let noise = Array2::from_shape_simple_fn((h, w), || rng.gen_range(-1.0..1.0));
    let smooth = box_blur(&box_blur(&noise, h.max(w) / 10 + 1), 2);
    // Bump center away from the borders so scars stay interior-ish.
    let cr = rng.gen_range(h / 4..3 * h / 4) as f64;
    let cc = rng.gen_range(w / 4..3 * w / 4) as f64;
    let scale = h.min(w) as f64;
    let field = Array2::from_shape_fn((h, w), |(r, c)| {
        let d = ((r as f64 - cr).powi(2) + (c as f64 - cc).powi(2)).sqrt() / scale;
        -d + 1.5 * smooth[[r, c]]
    });
    let total = (h * w) as f64;
    let measure = |q: f64| {
        let scar = largest_component(&threshold_at_fraction(&field, q));
        let frac = scar.iter().filter(|&&v| v == 1).count() as f64 / total;
        (scar, frac)
    };
    let (mut lo, mut hi) = (target, (4.0 * target).min(0.95));
    let (mut best, mut best_err) = {
        let (scar, frac) = measure(target);
        let err = (frac - target).abs();
        (scar, err)
    };
    for _ in 0..30 {
        if best_err <= FRACTION_TOLERANCE / 4.0 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let (scar, frac) = measure(mid);
        let err = (frac - target).abs();
        if err < best_err {
            best = scar;
            best_err = err;
        }
        if frac < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    best
}

fn generate_one(spec: &SynthSpec, index: usize) -> Result<SynthTile> {
    // Independent stream per tile keeps generation order-free and parallel.
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ (0x9e37_79b9_7f4a_7c15u64.wrapping_mul(index as u64 + 1)));
    let (h, w) = (spec.height, spec.width);
    let scar = scar_mask(h, w, spec.burned_fraction, &mut rng);

    // Land-cover partition from a second smoothed field.
    let cover_noise = Array2::from_shape_simple_fn((h, w), || rng.gen_range(-1.0_f64..1.0));
    let cover = box_blur(&cover_noise, h.max(w) / 8 + 1);

    let mut pre_raw = Array3::zeros((NUM_RAW_BANDS, h, w));
    for r in 0..h {
        for c in 0..w {
            let class = if cover[[r, c]] >= 0.0 { VEGETATION } else { SOIL };
            for b in 0..NUM_RAW_BANDS {
                let noise = rng.gen_range(-spec.noise_level..=spec.noise_level);
                pre_raw[[b, r, c]] = (class[b] + noise).clamp(0.01, 0.99);
            }
        }
    }
    // Post equals pre exactly outside the scar; inside, the severity-scaled
    // burn shift is applied to the same noisy values.
    let mut post_raw = pre_raw.clone();
    for ((r, c), &v) in scar.indexed_iter() {
        if v == 1 {
            for b in 0..NUM_RAW_BANDS {
                post_raw[[b, r, c]] =
                    (post_raw[[b, r, c]] + spec.severity * BURN_DELTA[b]).clamp(0.01, 0.99);
            }
        }
    }

    let stack = |raw: &Array3<f64>| -> Result<Array3<f64>> {
        let mut out = Array3::zeros((NUM_BANDS, h, w));
        for b in 0..NUM_RAW_BANDS {
            out.index_axis_mut(Axis(0), b).assign(&raw.index_axis(Axis(0), b));
        }
        let nir = raw.index_axis(Axis(0), BAND_NIR).to_owned();
        out.index_axis_mut(Axis(0), NUM_BANDS - 2)
            .assign(&compute_ndvi(&nir, &raw.index_axis(Axis(0), BAND_RED).to_owned())?);
        out.index_axis_mut(Axis(0), NUM_BANDS - 1)
            .assign(&compute_nbr(&nir, &raw.index_axis(Axis(0), BAND_SWIR2).to_owned())?);
        Ok(out)
    };

    let record_id = format!("synth_{index:04}");
    let origin = (1000.0 * index as f64, 0.0);
    let tile = BandTile::new(
        &record_id,
        stack(&pre_raw)?,
        stack(&post_raw)?,
        spec.pixel_size_m,
        origin,
    )?;
    let label = ScarLabel::new(scar)?;
    let bbox = label
        .bounding_box()
        .ok_or_else(|| Error::Contract(format!("{record_id}: generated scar is empty")))?;
    let record = FireRecord {
        record_id: record_id.clone(),
        region: Region::Synthetic,
        fire_date: "2017-01-15".into(),
        centroid: (
            origin.0 + (bbox.col0 as f64 + bbox.width as f64 / 2.0) * spec.pixel_size_m,
            origin.1 - (bbox.row0 as f64 + bbox.height as f64 / 2.0) * spec.pixel_size_m,
        ),
        scar_bbox: bbox,
        burned_pixel_count: label.burned_pixel_count(),
    };
    Ok(SynthTile {
        tile,
        label,
        record,
    })
}

/// Generates the full corpus, parallel per tile, deterministically.
pub fn generate(spec: &SynthSpec) -> Result<Vec<SynthTile>> {
    spec.validate()?;
    (0..spec.tile_count)
        .into_par_iter()
        .map(|i| generate_one(spec, i))
        .collect()
}

/// Per-pixel defect probabilities.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DefectRates {
    /// A single band pushed outside the valid reflectance range.
    pub out_of_range: f64,
    /// A single band set to NaN.
    pub invalid: f64,
    /// All six raw bands zeroed (sensor-noise pixel).
    pub zero_pixel: f64,
}

impl DefectRates {
    pub fn uniform(rate: f64) -> DefectRates {
        DefectRates {
            out_of_range: rate,
            invalid: rate,
            zero_pixel: rate,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for r in [self.out_of_range, self.invalid, self.zero_pixel] {
            if !(0.0..1.0).contains(&r) {
                return Err(Error::Contract(format!("defect rates must be in [0,1): {self:?}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DefectKind {
    OutOfRange,
    Invalid,
    ZeroPixel,
}

/// Ground-truth position of one injected defect.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Defect {
    pub record_id: String,
    pub phase: Phase,
    pub kind: DefectKind,
    pub row: usize,
    pub col: usize,
    /// Affected raw band; zero-pixel defects hit all six and store 0 here.
    pub band: usize,
}

/// Sprinkles defects into the raw bands at the given per-pixel rates,
/// recomputing the index bands afterwards so tiles stay self-consistent.
/// Returns the modified tiles and the exact defect positions.
pub fn inject_defects(
    tiles: &[BandTile],
    rates: &DefectRates,
    seed: u64,
) -> Result<(Vec<BandTile>, Vec<Defect>)> {
    rates.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(tiles.len());
    let mut defects = Vec::new();
    for tile in tiles {
        let mut tile = tile.clone();
        let (h, w) = (tile.height(), tile.width());
        for phase in Phase::ALL {
            for r in 0..h {
                for c in 0..w {
                    let draw: f64 = rng.gen();
                    let kind = if draw < rates.zero_pixel {
                        DefectKind::ZeroPixel
                    } else if draw < rates.zero_pixel + rates.invalid {
                        DefectKind::Invalid
                    } else if draw < rates.zero_pixel + rates.invalid + rates.out_of_range {
                        DefectKind::OutOfRange
                    } else {
                        continue;
                    };
                    let band = if kind == DefectKind::ZeroPixel {
                        0
                    } else {
                        rng.gen_range(0..NUM_RAW_BANDS)
                    };
                    let bands = tile.bands_mut(phase);
                    match kind {
                        DefectKind::ZeroPixel => {
                            for b in 0..NUM_RAW_BANDS {
                                bands[[b, r, c]] = 0.0;
                            }
                        }
                        DefectKind::Invalid => bands[[band, r, c]] = f64::NAN,
                        DefectKind::OutOfRange => {
                            bands[[band, r, c]] =
                                if rng.gen() { 2.5 } else { -1.5 }
                        }
                    }
                    defects.push(Defect {
                        record_id: tile.record_id.clone(),
                        phase,
                        kind,
                        row: r,
                        col: c,
                        band,
                    });
                }
            }
            // Recompute the index bands from the (now defective) raw bands.
            let bands = tile.bands_mut(phase);
            let nir = bands.index_axis(Axis(0), BAND_NIR).to_owned();
            let red = bands.index_axis(Axis(0), BAND_RED).to_owned();
            let swir2 = bands.index_axis(Axis(0), BAND_SWIR2).to_owned();
            bands
                .index_axis_mut(Axis(0), NUM_BANDS - 2)
                .assign(&compute_ndvi(&nir, &red)?);
            bands
                .index_axis_mut(Axis(0), NUM_BANDS - 1)
                .assign(&compute_nbr(&nir, &swir2)?);
        }
        out.push(tile);
    }
    Ok((out, defects))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{compute_rdnbr, NbrScale, BAND_NBR};
    use approx::assert_abs_diff_eq;

    fn quick_spec() -> SynthSpec {
        SynthSpec {
            tile_count: 3,
            height: 64,
            width: 64,
            seed: 42,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn spec_validation() {
        assert!(quick_spec().validate().is_ok());
        assert!(SynthSpec { tile_count: 0, ..quick_spec() }.validate().is_err());
        assert!(SynthSpec { burned_fraction: 0.0, ..quick_spec() }.validate().is_err());
        assert!(SynthSpec { burned_fraction: 1.0, ..quick_spec() }.validate().is_err());
        assert!(SynthSpec { severity: -1.0, ..quick_spec() }.validate().is_err());
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let spec = quick_spec();
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.label.mask, y.label.mask);
            for (u, v) in x.tile.pre_bands.iter().zip(y.tile.pre_bands.iter()) {
                assert_eq!(u.to_bits(), v.to_bits());
            }
            assert_eq!(x.record, y.record);
        }
        let c = generate(&SynthSpec { seed: 43, ..spec }).unwrap();
        assert_ne!(a[0].label.mask, c[0].label.mask);
    }

    #[test]
    fn burned_fraction_within_tolerance() {
        for target in [0.034, 0.10, 0.33] {
            let spec = SynthSpec {
                tile_count: 6,
                burned_fraction: target,
                seed: 7,
                ..SynthSpec::default()
            };
            for t in generate(&spec).unwrap() {
                let frac = t.record.burned_pixel_count as f64 / (128.0 * 128.0);
                assert!(
                    (frac - target).abs() <= FRACTION_TOLERANCE,
                    "target {target}, got {frac} on {}",
                    t.record.record_id
                );
            }
        }
    }

    #[test]
    fn scar_is_single_connected_component() {
        for t in generate(&quick_spec()).unwrap() {
            let (_, n) = label_components(&t.label.mask);
            assert_eq!(n, 1, "{}", t.record.record_id);
        }
    }

    #[test]
    fn severity_zero_keeps_post_identical() {
        let spec = SynthSpec {
            severity: 0.0,
            tile_count: 1,
            seed: 5,
            ..SynthSpec::default()
        };
        let t = &generate(&spec).unwrap()[0];
        for (a, b) in t.tile.pre_bands.iter().zip(t.tile.post_bands.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        // RdNBR of identical NBR fields is exactly zero.
        let pre_nbr = t.tile.pre_bands.index_axis(Axis(0), BAND_NBR).to_owned();
        let post_nbr = t.tile.post_bands.index_axis(Axis(0), BAND_NBR).to_owned();
        let rdnbr = compute_rdnbr(&pre_nbr, &post_nbr, NbrScale::Unit).unwrap();
        assert!(rdnbr.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scar_pixels_have_lower_post_nbr() {
        let t = &generate(&SynthSpec { tile_count: 1, seed: 9, ..SynthSpec::default() }).unwrap()[0];
        for ((r, c), &v) in t.label.mask.indexed_iter() {
            let pre = t.tile.pre_bands[[BAND_NBR, r, c]];
            let post = t.tile.post_bands[[BAND_NBR, r, c]];
            if v == 1 {
                assert!(post < pre, "burned pixel ({r},{c}): {post} !< {pre}");
            } else {
                assert_eq!(post.to_bits(), pre.to_bits());
            }
        }
    }

    #[test]
    fn generated_records_are_consistent() {
        for t in generate(&quick_spec()).unwrap() {
            assert_eq!(t.record.burned_pixel_count, t.label.burned_pixel_count());
            assert_eq!(t.record.scar_bbox, t.label.bounding_box().unwrap());
            assert_eq!(t.record.region, Region::Synthetic);
            // Every band value valid and in range except indices in [-1,1].
            for phase in Phase::ALL {
                let bands = t.tile.bands(phase);
                for b in 0..NUM_RAW_BANDS {
                    for &v in bands.index_axis(Axis(0), b).iter() {
                        assert!((0.0..=1.0).contains(&v));
                    }
                }
            }
        }
    }

    #[test]
    fn defect_rate_zero_is_noop() {
        let corpus = generate(&quick_spec()).unwrap();
        let tiles: Vec<BandTile> = corpus.iter().map(|t| t.tile.clone()).collect();
        let (out, defects) = inject_defects(&tiles, &DefectRates::default(), 1).unwrap();
        assert!(defects.is_empty());
        for (a, b) in tiles.iter().zip(&out) {
            for (u, v) in a.pre_bands.iter().zip(b.pre_bands.iter()) {
                assert_eq!(u.to_bits(), v.to_bits());
            }
        }
    }

    #[test]
    fn defect_counts_follow_binomial() {
        let corpus = generate(&SynthSpec { tile_count: 1, seed: 3, ..SynthSpec::default() }).unwrap();
        let tiles: Vec<BandTile> = corpus.iter().map(|t| t.tile.clone()).collect();
        let rate = 0.01;
        let (_, defects) = inject_defects(&tiles, &DefectRates::uniform(rate), 11).unwrap();
        // 128*128 pixels, 2 phases, total rate 3%: ~983 expected.
        let n = (128 * 128 * 2) as f64;
        let p = 3.0 * rate;
        let sigma = (n * p * (1.0 - p)).sqrt();
        let got = defects.len() as f64;
        assert!(
            (got - n * p).abs() < 4.0 * sigma,
            "{got} defects vs expected {}",
            n * p
        );
    }

    #[test]
    fn defects_recorded_at_true_positions() {
        let corpus = generate(&SynthSpec { tile_count: 1, seed: 4, height: 64, width: 64, ..SynthSpec::default() }).unwrap();
        let tiles: Vec<BandTile> = corpus.iter().map(|t| t.tile.clone()).collect();
        let (out, defects) = inject_defects(&tiles, &DefectRates::uniform(0.005), 21).unwrap();
        assert!(!defects.is_empty());
        for d in &defects {
            let bands = out[0].bands(d.phase);
            match d.kind {
                DefectKind::Invalid => assert!(bands[[d.band, d.row, d.col]].is_nan()),
                DefectKind::OutOfRange => {
                    let v = bands[[d.band, d.row, d.col]];
                    assert!(!(0.0..=1.0).contains(&v), "value {v} is in range");
                }
                DefectKind::ZeroPixel => {
                    for b in 0..NUM_RAW_BANDS {
                        assert_eq!(bands[[b, d.row, d.col]], 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn clean_pixels_untouched_by_injection() {
        let corpus = generate(&SynthSpec { tile_count: 1, seed: 6, height: 64, width: 64, ..SynthSpec::default() }).unwrap();
        let tiles: Vec<BandTile> = corpus.iter().map(|t| t.tile.clone()).collect();
        let (out, defects) = inject_defects(&tiles, &DefectRates::uniform(0.005), 8).unwrap();
        let mut hit = std::collections::HashSet::new();
        for d in &defects {
            hit.insert((d.phase.index(), d.row, d.col));
        }
        for phase in Phase::ALL {
            let before = tiles[0].bands(phase);
            let after = out[0].bands(phase);
            for b in 0..NUM_RAW_BANDS {
                for ((r, c), &v) in before.index_axis(Axis(0), b).indexed_iter() {
                    if !hit.contains(&(phase.index(), r, c)) {
                        assert_eq!(v.to_bits(), after[[b, r, c]].to_bits());
                    }
                }
            }
        }
    }

    #[test]
    fn fraction_control_at_tile_sizes_used_end_to_end() {
        // The two class-balance regimes exercised by the pipeline tests.
        for (target, seed) in [(0.329, 100), (0.034, 200)] {
            let spec = SynthSpec {
                tile_count: 2,
                burned_fraction: target,
                seed,
                ..SynthSpec::default()
            };
            let corpus = generate(&spec).unwrap();
            let mean: f64 = corpus
                .iter()
                .map(|t| t.record.burned_pixel_count as f64 / (128.0 * 128.0))
                .sum::<f64>()
                / corpus.len() as f64;
            assert_abs_diff_eq!(mean, target, epsilon = FRACTION_TOLERANCE);
        }
    }
}
