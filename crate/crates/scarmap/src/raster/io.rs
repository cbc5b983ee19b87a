//! Tile and fire-record persistence: GeoTIFF pairs plus mask per record and
//! a delimiter-separated records table.

use std::path::Path;

use ndarray::{Array2, Array3, Axis};

use super::{
    compute_nbr, compute_ndvi, BandTile, FireRecord, GeoTiff, PixelRect, Region, SampleFormat,
    ScarLabel, BAND_NIR, BAND_RED, BAND_SWIR2, NUM_BANDS, NUM_RAW_BANDS,
};
use crate::{Error, Result};

/// How raw rasters are interpreted on ingest.
#[derive(Debug, Clone, Copy)]
pub struct IngestProfile {
    /// Multiplier applied to raw samples (e.g. 1e-4 for scaled surface
    /// reflectance products). Applied to the six reflectance bands only.
    pub reflectance_scale: f64,
    /// Valid range for reflectance bands after scaling.
    pub reflectance_range: (f64, f64),
}

impl Default for IngestProfile {
    fn default() -> Self {
        IngestProfile {
            reflectance_scale: 1.0,
            reflectance_range: (0.0, 1.0),
        }
    }
}

fn stack_bands(bands: &[Array2<f64>]) -> Array3<f64> {
    let (h, w) = bands[0].dim();
    let mut out = Array3::zeros((bands.len(), h, w));
    for (b, band) in bands.iter().enumerate() {
        out.index_axis_mut(Axis(0), b).assign(band);
    }
    out
}

/// Builds the fixed 8-channel stack for one phase from a raw raster.
///
/// Accepts 6-band rasters (NDVI and NBR computed here) or 8-band rasters
/// (indices taken as stored). Channel order is blue, green, red, NIR,
/// SWIR1, SWIR2, NDVI, NBR and is enforced positionally.
fn ingest_phase(path: &str, raster: &GeoTiff, profile: &IngestProfile) -> Result<Array3<f64>> {
    let n = raster.bands.len();
    if n != NUM_RAW_BANDS && n != NUM_BANDS {
        return Err(Error::format(
            path,
            format!("expected {NUM_RAW_BANDS} or {NUM_BANDS} bands, found {n}"),
        ));
    }
    let mut bands: Vec<Array2<f64>> = raster.bands[..NUM_RAW_BANDS]
        .iter()
        .map(|b| b.mapv(|v| v * profile.reflectance_scale))
        .collect();
    if n == NUM_BANDS {
        bands.push(raster.bands[NUM_BANDS - 2].clone());
        bands.push(raster.bands[NUM_BANDS - 1].clone());
    } else {
        bands.push(compute_ndvi(&bands[BAND_NIR], &bands[BAND_RED])?);
        bands.push(compute_nbr(&bands[BAND_NIR], &bands[BAND_SWIR2])?);
    }
    Ok(stack_bands(&bands))
}

/// Assembles a [`BandTile`] from a pre-fire and a post-fire raster.
pub fn tile_from_rasters(
    record_id: &str,
    pre: &GeoTiff,
    post: &GeoTiff,
    profile: &IngestProfile,
) -> Result<BandTile> {
    let pre_bands = ingest_phase("pre raster", pre, profile)?;
    let post_bands = ingest_phase("post raster", post, profile)?;
    BandTile::new(
        record_id,
        pre_bands,
        post_bands,
        pre.pixel_scale.0,
        pre.origin,
    )
}

fn unstack(bands: &Array3<f64>) -> Vec<Array2<f64>> {
    (0..bands.dim().0)
        .map(|b| bands.index_axis(Axis(0), b).to_owned())
        .collect()
}

pub fn tile_paths(dir: &Path, record_id: &str) -> (std::path::PathBuf, std::path::PathBuf, std::path::PathBuf) {
    (
        dir.join(format!("{record_id}_pre.tif")),
        dir.join(format!("{record_id}_post.tif")),
        dir.join(format!("{record_id}_mask.tif")),
    )
}

/// Writes a tile as a pre/post GeoTIFF pair plus a single-band mask.
pub fn write_tile(dir: impl AsRef<Path>, tile: &BandTile, label: &ScarLabel) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let (pre_path, post_path, mask_path) = tile_paths(dir, &tile.record_id);
    let scale = (tile.pixel_size_m, tile.pixel_size_m);
    GeoTiff::new(unstack(&tile.pre_bands), scale, tile.origin).write(pre_path)?;
    GeoTiff::new(unstack(&tile.post_bands), scale, tile.origin).write(post_path)?;
    let mask = label.mask.mapv(|v| v as f64);
    let mut mask_tif = GeoTiff::new(vec![mask], scale, tile.origin);
    mask_tif.sample_format = SampleFormat::U8;
    mask_tif.write(mask_path)?;
    Ok(())
}

/// Reads a tile written by [`write_tile`] (or any raster pair in the same
/// layout) together with its mask.
pub fn read_tile(
    dir: impl AsRef<Path>,
    record_id: &str,
    profile: &IngestProfile,
) -> Result<(BandTile, ScarLabel)> {
    let dir = dir.as_ref();
    let (pre_path, post_path, mask_path) = tile_paths(dir, record_id);
    for p in [&pre_path, &post_path, &mask_path] {
        if !p.exists() {
            return Err(Error::MissingArtifact(p.display().to_string()));
        }
    }
    let pre = GeoTiff::read(&pre_path)?;
    let post = GeoTiff::read(&post_path)?;
    let mask_tif = GeoTiff::read(&mask_path)?;
    let tile = tile_from_rasters(record_id, &pre, &post, profile)?;
    let mask = mask_tif.bands[0].mapv(|v| v as u8);
    if mask.dim() != (tile.height(), tile.width()) {
        return Err(Error::ShapeMismatch(format!(
            "mask {:?} vs tile {}x{}",
            mask.dim(),
            tile.height(),
            tile.width()
        )));
    }
    Ok((tile, ScarLabel::new(mask)?))
}

const RECORDS_HEADER: &str =
    "record_id,region,fire_date,centroid_x,centroid_y,bbox_row0,bbox_col0,bbox_height,bbox_width,burned_pixel_count";

pub fn write_records_csv(path: impl AsRef<Path>, records: &[FireRecord]) -> Result<()> {
    let mut out = String::from(RECORDS_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.record_id,
            r.region.name(),
            r.fire_date,
            r.centroid.0,
            r.centroid.1,
            r.scar_bbox.row0,
            r.scar_bbox.col0,
            r.scar_bbox.height,
            r.scar_bbox.width,
            r.burned_pixel_count,
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_records_csv(path: impl AsRef<Path>) -> Result<Vec<FireRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let display = path.display().to_string();
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == RECORDS_HEADER => {}
        _ => return Err(Error::format(&display, "bad or missing header")),
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 10 {
            return Err(Error::format(
                &display,
                format!("line {}: expected 10 fields, got {}", i + 2, f.len()),
            ));
        }
        let parse_usize = |s: &str| {
            s.parse::<usize>()
                .map_err(|e| Error::format(&display, format!("line {}: {e}", i + 2)))
        };
        let parse_f64 = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| Error::format(&display, format!("line {}: {e}", i + 2)))
        };
        out.push(FireRecord {
            record_id: f[0].to_string(),
            region: Region::parse(f[1])?,
            fire_date: f[2].to_string(),
            centroid: (parse_f64(f[3])?, parse_f64(f[4])?),
            scar_bbox: PixelRect::new(
                parse_usize(f[5])?,
                parse_usize(f[6])?,
                parse_usize(f[7])?,
                parse_usize(f[8])?,
            ),
            burned_pixel_count: parse_usize(f[9])?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;

    fn sample_tile() -> (BandTile, ScarLabel) {
        let mut pre = Array3::from_elem((NUM_BANDS, 4, 4), 0.3);
        pre.index_axis_mut(Axis(0), BAND_NIR).fill(0.5);
        let post = pre.clone();
        let tile = BandTile::new("r1", pre, post, 30.0, (100.0, 200.0)).unwrap();
        let mut mask = Array2::zeros((4, 4));
        mask[[1, 1]] = 1;
        mask[[1, 2]] = 1;
        (tile, ScarLabel::new(mask).unwrap())
    }

    #[test]
    fn tile_roundtrip_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let (tile, label) = sample_tile();
        write_tile(dir.path(), &tile, &label).unwrap();
        let (back, mask) = read_tile(dir.path(), "r1", &IngestProfile::default()).unwrap();
        assert_eq!(mask, label);
        for (a, b) in tile.pre_bands.iter().zip(back.pre_bands.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(back.origin, tile.origin);
        assert_eq!(back.pixel_size_m, 30.0);
    }

    #[test]
    fn six_band_ingest_computes_indices() {
        let bands: Vec<Array2<f64>> = vec![
            Array2::from_elem((2, 2), 0.1), // blue
            Array2::from_elem((2, 2), 0.1), // green
            Array2::from_elem((2, 2), 0.2), // red
            Array2::from_elem((2, 2), 0.6), // nir
            Array2::from_elem((2, 2), 0.2), // swir1
            Array2::from_elem((2, 2), 0.2), // swir2
        ];
        let tif = GeoTiff::new(bands, (30.0, 30.0), (0.0, 0.0));
        let tile = tile_from_rasters("x", &tif, &tif, &IngestProfile::default()).unwrap();
        let ndvi = tile.pre_bands[[super::super::BAND_NDVI, 0, 0]];
        let nbr = tile.pre_bands[[super::super::BAND_NBR, 0, 0]];
        assert!((ndvi - 0.5).abs() < 1e-12);
        assert!((nbr - 0.5).abs() < 1e-12);
    }

    #[test]
    fn wrong_band_count_rejected() {
        let bands = vec![Array2::<f64>::zeros((2, 2)); 5];
        let tif = GeoTiff::new(bands, (30.0, 30.0), (0.0, 0.0));
        assert!(tile_from_rasters("x", &tif, &tif, &IngestProfile::default()).is_err());
    }

    #[test]
    fn records_csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.csv");
        let recs = vec![FireRecord {
            record_id: "fire_007".into(),
            region: Region::Biobio,
            fire_date: "2017-01-26".into(),
            centroid: (-72.5, -37.2),
            scar_bbox: PixelRect::new(10, 20, 30, 40),
            burned_pixel_count: 512,
        }];
        write_records_csv(&path, &recs).unwrap();
        assert_eq!(read_records_csv(&path).unwrap(), recs);
    }

    #[test]
    fn missing_tile_reports_named_file() {
        let dir = tempfile::tempdir().unwrap();
        let err = read_tile(dir.path(), "nope", &IngestProfile::default()).unwrap_err();
        assert!(matches!(err, Error::MissingArtifact(ref p) if p.contains("nope_pre.tif")));
    }
}
