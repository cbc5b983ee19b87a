//! Builds the AS and 128 datasets from raw tiles: crop geometry,
//! secondary-scar distance filtering, size-stratified splits and the
//! manifest.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::raster::{FireRecord, PixelRect, Region, ScarLabel};
use crate::{Error, Result};

/// Side length of the fixed model input window.
pub const TILE_SIZE: usize = 128;

/// Secondary scars farther than this from the central one are dropped.
pub const DISTANCE_THRESHOLD_M: f64 = 500.0;

/// Default number of quantile strata for the size-stratified split.
pub const DEFAULT_STRATA: usize = 5;

/// Train/validation/test proportions.
pub const SPLIT_FRACTIONS: [f64; 3] = [0.7, 0.2, 0.1];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// Crop equals the scar bounding box; zero-padded to 128x128 downstream.
    As,
    /// Fixed 128x128 window centered on the scar bounding box.
    F128,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::As => "AS",
            Variant::F128 => "128",
        }
    }

    pub fn parse(s: &str) -> Result<Variant> {
        match s.to_ascii_lowercase().as_str() {
            "as" | "allsizes" => Ok(Variant::As),
            "128" | "f128" => Ok(Variant::F128),
            other => Err(Error::Contract(format!("unknown variant {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Result<Split> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Contract(format!("unknown split {other:?}"))),
        }
    }
}

/// Zero-padding amounts per side needed to reach 128x128 (AS only).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PadSpec {
    pub top: usize,
    pub bottom: usize,
    pub left: usize,
    pub right: usize,
}

impl PadSpec {
    /// Centered padding from `size` up to `target`, extra pixel down/right.
    pub fn centered(height: usize, width: usize, target: usize) -> Result<PadSpec> {
        if height > target || width > target {
            return Err(Error::Contract(format!(
                "content {height}x{width} exceeds pad target {target}"
            )));
        }
        let (dv, dh) = (target - height, target - width);
        Ok(PadSpec {
            top: dv / 2,
            bottom: dv - dv / 2,
            left: dh / 2,
            right: dh - dh / 2,
        })
    }
}

/// Crop geometry for one record and variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CropSpec {
    pub variant: Variant,
    /// Crop rectangle in source raster coordinates.
    pub crop_rect: PixelRect,
    /// Per-side zero padding to reach 128x128 downstream (AS only; zero for F128).
    pub pad_needed: PadSpec,
}

/// Computes the crop window for a record.
///
/// F128: a 128x128 rectangle centered on the scar bounding box, the extension
/// evenly distributed per axis (extra pixel down/right on odd remainders) and
/// shifted inward where it would exit the source extent. AS: the bounding box
/// itself, with the padding needed to reach 128x128 recorded for the
/// preprocessing stage.
pub fn make_crop(
    record: &FireRecord,
    variant: Variant,
    source_extent: (usize, usize),
) -> Result<CropSpec> {
    record.validate(source_extent)?;
    let bbox = record.scar_bbox;
    match variant {
        Variant::As => Ok(CropSpec {
            variant,
            crop_rect: bbox,
            pad_needed: PadSpec::centered(bbox.height, bbox.width, TILE_SIZE)?,
        }),
        Variant::F128 => {
            if bbox.height >= TILE_SIZE || bbox.width >= TILE_SIZE {
                return Err(Error::Oversize(format!(
                    "record {}: scar bbox {}x{} not under {TILE_SIZE} pixels on both axes",
                    record.record_id, bbox.height, bbox.width
                )));
            }
            let place = |start: usize, len: usize, extent: usize| -> Result<usize> {
                if extent < TILE_SIZE {
                    return Err(Error::Contract(format!(
                        "source extent {extent} smaller than tile size {TILE_SIZE}"
                    )));
                }
                let ext = TILE_SIZE - len;
                let before = ext / 2;
                let ideal = start as isize - before as isize;
                // Clamp into the raster, shifting the deficit to the other side.
                let max_start = (extent - TILE_SIZE) as isize;
                Ok(ideal.clamp(0, max_start) as usize)
            };
            let row0 = place(bbox.row0, bbox.height, source_extent.0)?;
            let col0 = place(bbox.col0, bbox.width, source_extent.1)?;
            Ok(CropSpec {
                variant,
                crop_rect: PixelRect::new(row0, col0, TILE_SIZE, TILE_SIZE),
                pad_needed: PadSpec::default(),
            })
        }
    }
}

/// Outcome of [`filter_distant_components`].
#[derive(Debug, Clone)]
pub struct FilterOutcome {
    pub label: ScarLabel,
    /// Number of connected components removed.
    pub removed: usize,
    /// Set when the input mask had no burned pixels.
    pub empty_warning: bool,
}

/// 8-connected component labeling; returns (component map, component count).
/// Component ids start at 1; 0 is background.
pub fn label_components(mask: &Array2<u8>) -> (Array2<u32>, usize) {
    let (h, w) = mask.dim();
    let mut labels = Array2::<u32>::zeros((h, w));
    let mut next = 0u32;
    let mut queue = Vec::new();
    for r in 0..h {
        for c in 0..w {
            if mask[[r, c]] == 1 && labels[[r, c]] == 0 {
                next += 1;
                labels[[r, c]] = next;
                queue.push((r, c));
                while let Some((qr, qc)) = queue.pop() {
                    for dr in -1i64..=1 {
                        for dc in -1i64..=1 {
                            let (nr, nc) = (qr as i64 + dr, qc as i64 + dc);
                            if nr < 0 || nc < 0 || nr >= h as i64 || nc >= w as i64 {
                                continue;
                            }
                            let (nr, nc) = (nr as usize, nc as usize);
                            if mask[[nr, nc]] == 1 && labels[[nr, nc]] == 0 {
                                labels[[nr, nc]] = next;
                                queue.push((nr, nc));
                            }
                        }
                    }
                }
            }
        }
    }
    (labels, next as usize)
}

/// Removes connected components whose minimum pixel-to-pixel Euclidean
/// distance from the central component exceeds 500 m.
///
/// The central component is the one nearest the tile center, ties broken by
/// larger area then smaller label id. Distance is edge-to-edge between
/// component pixels (the definition is not fixed upstream; centroid distance
/// would keep strictly more components).
pub fn filter_distant_components(label: &ScarLabel, pixel_size_m: f64) -> FilterOutcome {
    let (h, w) = label.mask.dim();
    let (components, n) = label_components(&label.mask);
    if n <= 1 {
        return FilterOutcome {
            label: label.clone(),
            removed: 0,
            empty_warning: n == 0,
        };
    }

    let mut pixels: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for ((r, c), &id) in components.indexed_iter() {
        if id > 0 {
            pixels[id as usize - 1].push((r, c));
        }
    }

    let center = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let dist2_to_center = |px: &[(usize, usize)]| -> f64 {
        px.iter()
            .map(|&(r, c)| {
                let (dr, dc) = (r as f64 - center.0, c as f64 - center.1);
                dr * dr + dc * dc
            })
            .fold(f64::INFINITY, f64::min)
    };
    let central = (0..n)
        .min_by(|&a, &b| {
            dist2_to_center(&pixels[a])
                .partial_cmp(&dist2_to_center(&pixels[b]))
                .unwrap()
                .then(pixels[b].len().cmp(&pixels[a].len()))
                .then(a.cmp(&b))
        })
        .unwrap();

    let threshold_px2 = (DISTANCE_THRESHOLD_M / pixel_size_m).powi(2);
    let min_dist2 = |a: &[(usize, usize)], b: &[(usize, usize)]| -> f64 {
        let mut best = f64::INFINITY;
        for &(r1, c1) in a {
            for &(r2, c2) in b {
                let (dr, dc) = (r1 as f64 - r2 as f64, c1 as f64 - c2 as f64);
                let d2 = dr * dr + dc * dc;
                if d2 < best {
                    best = d2;
                    if best <= threshold_px2 {
                        return best;
                    }
                }
            }
        }
        best
    };

    let mut mask = label.mask.clone();
    let mut removed = 0;
    for comp in 0..n {
        if comp == central {
            continue;
        }
        if min_dist2(&pixels[comp], &pixels[central]) > threshold_px2 {
            for &(r, c) in &pixels[comp] {
                mask[[r, c]] = 0;
            }
            removed += 1;
        }
    }
    FilterOutcome {
        label: ScarLabel { mask },
        removed,
        empty_warning: false,
    }
}

/// One row of the dataset manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub record_id: String,
    pub region: Region,
    pub variant: Variant,
    pub split: Split,
    pub stratum: usize,
    pub burned_pixel_count: usize,
    /// Burned pixels over crop area.
    pub burned_fraction: f64,
    pub crop: PixelRect,
    pub pad: PadSpec,
}

/// Per-record split assignment, stratum and crop geometry for one variant.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetManifest {
    pub rows: Vec<ManifestRow>,
}

impl DatasetManifest {
    pub fn rows_for(&self, split: Split) -> impl Iterator<Item = &ManifestRow> {
        self.rows.iter().filter(move |r| r.split == split)
    }

    /// Mean burned fraction over all rows (the dataset balance figure).
    pub fn mean_burned_fraction(&self) -> f64 {
        if self.rows.is_empty() {
            return 0.0;
        }
        self.rows.iter().map(|r| r.burned_fraction).sum::<f64>() / self.rows.len() as f64
    }
}

/// Split assignment produced by [`stratified_split`] before crop geometry is
/// attached.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitAssignment {
    pub record_id: String,
    pub region: Region,
    pub stratum: usize,
    pub split: Split,
}

/// Warnings raised while splitting (empty regions are skipped, not fatal).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SplitWarnings {
    pub empty_regions: Vec<Region>,
}

/// Allocates `n` records to train/val/test by largest remainder, then makes
/// sure every split is inhabited once `n >= 3`.
fn allocate(n: usize) -> [usize; 3] {
    let mut counts = [0usize; 3];
    let mut remainders: Vec<(f64, usize)> = Vec::with_capacity(3);
    let mut assigned = 0;
    for (i, f) in SPLIT_FRACTIONS.iter().enumerate() {
        let exact = f * n as f64;
        counts[i] = exact.floor() as usize;
        assigned += counts[i];
        remainders.push((exact - exact.floor(), i));
    }
    remainders.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    for k in 0..n - assigned {
        counts[remainders[k % 3].1] += 1;
    }
    if n >= 3 {
        while let Some(empty) = counts.iter().position(|&c| c == 0) {
            let donor = (0..3).max_by_key(|&i| counts[i]).unwrap();
            counts[donor] -= 1;
            counts[empty] += 1;
        }
    }
    counts
}

/// Bins records by burned pixel count into quantile strata (per region),
/// shuffles each stratum with the given seed and assigns 70/20/10.
///
/// Regions are processed independently; a region with no records is reported
/// in the warnings and omitted. Deterministic for a fixed seed.
pub fn stratified_split(
    records: &[FireRecord],
    seed: u64,
    n_strata: usize,
) -> (Vec<SplitAssignment>, SplitWarnings) {
    let mut by_region: BTreeMap<Region, Vec<&FireRecord>> = BTreeMap::new();
    for r in records {
        by_region.entry(r.region).or_default().push(r);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(records.len());
    let warnings = SplitWarnings::default();

    for (_region, mut recs) in by_region {
        // Quantile strata over burned area, deterministic ordering.
        recs.sort_by(|a, b| {
            a.burned_pixel_count
                .cmp(&b.burned_pixel_count)
                .then_with(|| a.record_id.cmp(&b.record_id))
        });
        let total = recs.len();
        let k = n_strata.max(1).min(total.max(1));
        let mut strata: Vec<Vec<&FireRecord>> = vec![Vec::new(); k];
        for (i, rec) in recs.into_iter().enumerate() {
            strata[i * k / total].push(rec);
        }

        for (stratum, members) in strata.into_iter().enumerate() {
            let mut members = members;
            members.shuffle(&mut rng);
            let counts = allocate(members.len());
            let mut idx = 0;
            for (split, &count) in Split::ALL.iter().zip(&counts) {
                for rec in &members[idx..idx + count] {
                    out.push(SplitAssignment {
                        record_id: rec.record_id.clone(),
                        region: rec.region,
                        stratum,
                        split: *split,
                    });
                }
                idx += count;
            }
        }
    }
    (out, warnings)
}

const MANIFEST_HEADER: &str = "record_id,region,variant,split,stratum,burned_pixel_count,burned_fraction,crop_row0,crop_col0,crop_height,crop_width,pad_top,pad_bottom,pad_left,pad_right";

pub fn write_manifest(path: impl AsRef<Path>, manifest: &DatasetManifest) -> Result<()> {
    let mut out = String::from(MANIFEST_HEADER);
    out.push('\n');
    for r in &manifest.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.record_id,
            r.region.name(),
            r.variant.name(),
            r.split.name(),
            r.stratum,
            r.burned_pixel_count,
            r.burned_fraction,
            r.crop.row0,
            r.crop.col0,
            r.crop.height,
            r.crop.width,
            r.pad.top,
            r.pad.bottom,
            r.pad.left,
            r.pad.right,
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let display = path.display().to_string();
    if !path.exists() {
        return Err(Error::MissingArtifact(display));
    }
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == MANIFEST_HEADER => {}
        _ => return Err(Error::format(&display, "bad or missing header")),
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 15 {
            return Err(Error::format(
                &display,
                format!("line {}: expected 15 fields, got {}", i + 2, f.len()),
            ));
        }
        let pu = |s: &str| {
            s.parse::<usize>()
                .map_err(|e| Error::format(&display, format!("line {}: {e}", i + 2)))
        };
        rows.push(ManifestRow {
            record_id: f[0].to_string(),
            region: Region::parse(f[1])?,
            variant: Variant::parse(f[2])?,
            split: Split::parse(f[3])?,
            stratum: pu(f[4])?,
            burned_pixel_count: pu(f[5])?,
            burned_fraction: f[6]
                .parse::<f64>()
                .map_err(|e| Error::format(&display, format!("line {}: {e}", i + 2)))?,
            crop: PixelRect::new(pu(f[7])?, pu(f[8])?, pu(f[9])?, pu(f[10])?),
            pad: PadSpec {
                top: pu(f[11])?,
                bottom: pu(f[12])?,
                left: pu(f[13])?,
                right: pu(f[14])?,
            },
        });
    }
    Ok(DatasetManifest { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::PixelRect;

    fn record(id: &str, bbox: PixelRect, burned: usize) -> FireRecord {
        FireRecord {
            record_id: id.into(),
            region: Region::Synthetic,
            fire_date: "2017-01-01".into(),
            centroid: (0.0, 0.0),
            scar_bbox: bbox,
            burned_pixel_count: burned,
        }
    }

    #[test]
    fn f128_crop_centered_hand_geometry() {
        // 20x20 bbox centered at (100,100): rows/cols 90..=109.
        let rec = record("r", PixelRect::new(90, 90, 20, 20), 100);
        let crop = make_crop(&rec, Variant::F128, (400, 400)).unwrap();
        assert_eq!(crop.crop_rect, PixelRect::new(36, 36, 128, 128));
        assert_eq!(crop.pad_needed, PadSpec::default());
    }

    #[test]
    fn f128_oversize_rejected() {
        let rec = record("r", PixelRect::new(0, 0, 128, 1), 100);
        let err = make_crop(&rec, Variant::F128, (400, 400)).unwrap_err();
        assert!(matches!(err, Error::Oversize(_)));
        // 127 on both axes is fine.
        let rec = record("r", PixelRect::new(0, 0, 127, 127), 100);
        assert!(make_crop(&rec, Variant::F128, (400, 400)).is_ok());
    }

    #[test]
    fn as_crop_equals_bbox_with_pad() {
        let rec = record("r", PixelRect::new(5, 9, 40, 60), 100);
        let crop = make_crop(&rec, Variant::As, (400, 400)).unwrap();
        assert_eq!(crop.crop_rect, rec.scar_bbox);
        assert_eq!(
            crop.pad_needed,
            PadSpec {
                top: 44,
                bottom: 44,
                left: 34,
                right: 34
            }
        );
    }

    #[test]
    fn odd_padding_extra_pixel_goes_down_right() {
        let rec = record("r", PixelRect::new(0, 0, 127, 125), 10);
        let crop = make_crop(&rec, Variant::As, (400, 400)).unwrap();
        assert_eq!(
            crop.pad_needed,
            PadSpec {
                top: 0,
                bottom: 1,
                left: 1,
                right: 2
            }
        );
    }

    #[test]
    fn f128_window_clamped_at_edges() {
        let rec = record("r", PixelRect::new(0, 190, 10, 10), 50);
        let crop = make_crop(&rec, Variant::F128, (200, 200)).unwrap();
        assert_eq!(crop.crop_rect, PixelRect::new(0, 72, 128, 128));
        // bbox still contained
        assert!(crop.crop_rect.contains(&rec.scar_bbox));
    }

    #[test]
    fn bbox_outside_extent_is_contract_violation() {
        let rec = record("r", PixelRect::new(390, 0, 20, 20), 100);
        let err = make_crop(&rec, Variant::F128, (400, 400)).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    fn mask_with_components(spans: &[(usize, usize, usize, usize)], size: usize) -> ScarLabel {
        let mut m = Array2::<u8>::zeros((size, size));
        for &(r0, c0, h, w) in spans {
            for r in r0..r0 + h {
                for c in c0..c0 + w {
                    m[[r, c]] = 1;
                }
            }
        }
        ScarLabel::new(m).unwrap()
    }

    #[test]
    fn single_component_unchanged() {
        let label = mask_with_components(&[(30, 30, 5, 5)], 64);
        let out = filter_distant_components(&label, 30.0);
        assert_eq!(out.label, label);
        assert_eq!(out.removed, 0);
        assert!(!out.empty_warning);
    }

    #[test]
    fn component_600m_away_removed() {
        // Central blob near (32,32); second blob with nearest pixel 20 px
        // away along the row axis: 20 px * 30 m = 600 m > 500 m.
        let label = mask_with_components(&[(30, 28, 4, 4), (30, 51, 3, 3)], 64);
        // nearest pixels: col 31 vs col 51 -> 20 px apart.
        let out = filter_distant_components(&label, 30.0);
        assert_eq!(out.removed, 1);
        assert_eq!(out.label.burned_pixel_count(), 16);
    }

    #[test]
    fn component_480m_away_kept() {
        // 16 px * 30 m = 480 m <= 500 m.
        let label = mask_with_components(&[(30, 28, 4, 4), (30, 47, 3, 3)], 64);
        let out = filter_distant_components(&label, 30.0);
        assert_eq!(out.removed, 0);
        assert_eq!(out.label, label);
    }

    #[test]
    fn empty_label_warns_and_passes_through() {
        let label = ScarLabel::new(Array2::zeros((8, 8))).unwrap();
        let out = filter_distant_components(&label, 30.0);
        assert!(out.empty_warning);
        assert_eq!(out.label, label);
    }

    #[test]
    fn filter_is_idempotent() {
        let label = mask_with_components(&[(30, 28, 4, 4), (30, 51, 3, 3), (2, 2, 2, 2)], 64);
        let once = filter_distant_components(&label, 30.0);
        let twice = filter_distant_components(&once.label, 30.0);
        assert_eq!(once.label, twice.label);
        assert_eq!(twice.removed, 0);
    }

    #[test]
    fn diagonal_components_are_one_component_under_8_connectivity() {
        let mut m = Array2::<u8>::zeros((4, 4));
        m[[0, 0]] = 1;
        m[[1, 1]] = 1;
        let (_, n) = label_components(&m);
        assert_eq!(n, 1);
    }

    fn uniform_records(n: usize, region: Region) -> Vec<FireRecord> {
        (0..n)
            .map(|i| {
                let mut r = record(
                    &format!("{}_{i:04}", region.name()),
                    PixelRect::new(10, 10, 20, 20),
                    (i + 1) * 10,
                );
                r.region = region;
                r
            })
            .collect()
    }

    #[test]
    fn split_100_records_is_70_20_10() {
        let records = uniform_records(100, Region::Synthetic);
        let (assignments, _) = stratified_split(&records, 7, DEFAULT_STRATA);
        let count =
            |s: Split| assignments.iter().filter(|a| a.split == s).count();
        assert_eq!(count(Split::Train), 70);
        assert_eq!(count(Split::Val), 20);
        assert_eq!(count(Split::Test), 10);
    }

    #[test]
    fn split_preserves_per_region_totals() {
        let mut records = uniform_records(977, Region::Valparaiso);
        records.extend(uniform_records(989, Region::Biobio));
        assert_eq!(records.len(), 1966);
        let (assignments, _) = stratified_split(&records, 1, DEFAULT_STRATA);
        assert_eq!(assignments.len(), 1966);
        let per_region = |reg: Region| assignments.iter().filter(|a| a.region == reg).count();
        assert_eq!(per_region(Region::Valparaiso), 977);
        assert_eq!(per_region(Region::Biobio), 989);
    }

    #[test]
    fn split_is_deterministic_and_a_partition() {
        let records = uniform_records(53, Region::Synthetic);
        let (a, _) = stratified_split(&records, 42, DEFAULT_STRATA);
        let (b, _) = stratified_split(&records, 42, DEFAULT_STRATA);
        assert_eq!(a, b);
        let mut ids: Vec<_> = a.iter().map(|x| x.record_id.clone()).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), records.len());
    }

    #[test]
    fn every_stratum_reaches_every_split_when_big_enough() {
        let records = uniform_records(25, Region::Synthetic);
        let (assignments, _) = stratified_split(&records, 3, DEFAULT_STRATA);
        for stratum in 0..DEFAULT_STRATA {
            for split in Split::ALL {
                assert!(
                    assignments
                        .iter()
                        .any(|a| a.stratum == stratum && a.split == split),
                    "stratum {stratum} missing from {split:?}"
                );
            }
        }
    }

    #[test]
    fn allocate_counts_within_one_of_rounded_ideal() {
        for n in 3..200 {
            let counts = allocate(n);
            assert_eq!(counts.iter().sum::<usize>(), n);
            for (c, f) in counts.iter().zip(SPLIT_FRACTIONS) {
                let ideal = (f * n as f64).round();
                assert!(
                    (*c as f64 - ideal).abs() <= 1.0,
                    "n={n}: count {c} vs ideal {ideal}"
                );
            }
            assert!(counts.iter().all(|&c| c > 0), "n={n}: empty split");
        }
    }

    #[test]
    fn manifest_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.csv");
        let manifest = DatasetManifest {
            rows: vec![ManifestRow {
                record_id: "r1".into(),
                region: Region::Synthetic,
                variant: Variant::As,
                split: Split::Train,
                stratum: 2,
                burned_pixel_count: 123,
                burned_fraction: 0.375,
                crop: PixelRect::new(4, 8, 40, 60),
                pad: PadSpec {
                    top: 44,
                    bottom: 44,
                    left: 34,
                    right: 34,
                },
            }],
        };
        write_manifest(&path, &manifest).unwrap();
        assert_eq!(read_manifest(&path).unwrap(), manifest);
    }

    #[test]
    fn f128_crop_contains_as_crop() {
        let rec = record("r", PixelRect::new(130, 40, 33, 57), 100);
        let as_crop = make_crop(&rec, Variant::As, (400, 400)).unwrap();
        let f_crop = make_crop(&rec, Variant::F128, (400, 400)).unwrap();
        assert!(f_crop.crop_rect.contains(&as_crop.crop_rect));
    }
}
