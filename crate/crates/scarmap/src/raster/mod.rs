//! Domain types for raster tiles, scar labels and fire records, plus the
//! spectral-index math and band validity rules.

mod geotiff;
mod indices;
mod io;

pub use geotiff::{GeoTiff, SampleFormat};
pub use indices::{
    compute_nbr, compute_ndvi, compute_rdnbr, validate_band_ranges, BandViolation, BandViolationKind, NbrScale,
};
pub use io::{
    read_records_csv, read_tile, tile_from_rasters, write_records_csv, write_tile, IngestProfile,
};

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Number of spectral channels per image (six Landsat bands + NDVI + NBR).
pub const NUM_BANDS: usize = 8;

/// Fixed channel order of every tile.
pub const BAND_NAMES: [&str; NUM_BANDS] = [
    "blue", "green", "red", "nir", "swir1", "swir2", "ndvi", "nbr",
];

pub const BAND_BLUE: usize = 0;
pub const BAND_GREEN: usize = 1;
pub const BAND_RED: usize = 2;
pub const BAND_NIR: usize = 3;
pub const BAND_SWIR1: usize = 4;
pub const BAND_SWIR2: usize = 5;
pub const BAND_NDVI: usize = 6;
pub const BAND_NBR: usize = 7;

/// Number of raw (non-derived) reflectance bands.
pub const NUM_RAW_BANDS: usize = 6;

/// Pre-fire or post-fire image of a tile pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Pre,
    Post,
}

impl Phase {
    pub const ALL: [Phase; 2] = [Phase::Pre, Phase::Post];

    pub fn index(self) -> usize {
        match self {
            Phase::Pre => 0,
            Phase::Post => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Phase::Pre => "pre",
            Phase::Post => "post",
        }
    }
}

/// Per-fire raster stack: eight pre-fire and eight post-fire channels plus
/// geospatial metadata. Band grids are `(band, row, col)`.
#[derive(Debug, Clone)]
pub struct BandTile {
    pub record_id: String,
    pub pre_bands: Array3<f64>,
    pub post_bands: Array3<f64>,
    /// Meters per pixel (30 for Landsat).
    pub pixel_size_m: f64,
    /// Map coordinates of the top-left corner.
    pub origin: (f64, f64),
}

impl BandTile {
    pub fn new(
        record_id: impl Into<String>,
        pre_bands: Array3<f64>,
        post_bands: Array3<f64>,
        pixel_size_m: f64,
        origin: (f64, f64),
    ) -> Result<Self> {
        if pre_bands.dim() != post_bands.dim() {
            return Err(Error::ShapeMismatch(format!(
                "pre bands {:?} vs post bands {:?}",
                pre_bands.dim(),
                post_bands.dim()
            )));
        }
        if pre_bands.dim().0 != NUM_BANDS {
            return Err(Error::Contract(format!(
                "expected {} channels, got {}",
                NUM_BANDS,
                pre_bands.dim().0
            )));
        }
        Ok(BandTile {
            record_id: record_id.into(),
            pre_bands,
            post_bands,
            pixel_size_m,
            origin,
        })
    }

    pub fn height(&self) -> usize {
        self.pre_bands.dim().1
    }

    pub fn width(&self) -> usize {
        self.pre_bands.dim().2
    }

    pub fn bands(&self, phase: Phase) -> &Array3<f64> {
        match phase {
            Phase::Pre => &self.pre_bands,
            Phase::Post => &self.post_bands,
        }
    }

    pub fn bands_mut(&mut self, phase: Phase) -> &mut Array3<f64> {
        match phase {
            Phase::Pre => &mut self.pre_bands,
            Phase::Post => &mut self.post_bands,
        }
    }

    /// Crops the tile to `rect`, translating the map origin accordingly.
    pub fn crop(&self, rect: &PixelRect) -> Result<BandTile> {
        if rect.row0 + rect.height > self.height() || rect.col0 + rect.width > self.width() {
            return Err(Error::Contract(format!(
                "crop {:?} exceeds tile extent {}x{}",
                rect,
                self.height(),
                self.width()
            )));
        }
        let slice = ndarray::s![
            ..,
            rect.row0..rect.row0 + rect.height,
            rect.col0..rect.col0 + rect.width
        ];
        Ok(BandTile {
            record_id: self.record_id.clone(),
            pre_bands: self.pre_bands.slice(slice).to_owned(),
            post_bands: self.post_bands.slice(slice).to_owned(),
            pixel_size_m: self.pixel_size_m,
            origin: (
                self.origin.0 + rect.col0 as f64 * self.pixel_size_m,
                self.origin.1 - rect.row0 as f64 * self.pixel_size_m,
            ),
        })
    }
}

/// Binary burned/unburned mask aligned to a [`BandTile`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScarLabel {
    pub mask: Array2<u8>,
}

impl ScarLabel {
    pub fn new(mask: Array2<u8>) -> Result<Self> {
        if mask.iter().any(|&v| v > 1) {
            return Err(Error::Contract(
                "scar mask values must be exactly 0 or 1".into(),
            ));
        }
        Ok(ScarLabel { mask })
    }

    pub fn height(&self) -> usize {
        self.mask.dim().0
    }

    pub fn width(&self) -> usize {
        self.mask.dim().1
    }

    pub fn burned_pixel_count(&self) -> usize {
        self.mask.iter().filter(|&&v| v == 1).count()
    }

    /// Tightest rectangle around the burned pixels, or `None` for an empty mask.
    pub fn bounding_box(&self) -> Option<PixelRect> {
        let (h, w) = self.mask.dim();
        let (mut r0, mut r1, mut c0, mut c1) = (h, 0usize, w, 0usize);
        for ((r, c), &v) in self.mask.indexed_iter() {
            if v == 1 {
                r0 = r0.min(r);
                r1 = r1.max(r);
                c0 = c0.min(c);
                c1 = c1.max(c);
            }
        }
        if r0 == h {
            return None;
        }
        Some(PixelRect {
            row0: r0,
            col0: c0,
            height: r1 - r0 + 1,
            width: c1 - c0 + 1,
        })
    }

    pub fn crop(&self, rect: &PixelRect) -> Result<ScarLabel> {
        if rect.row0 + rect.height > self.height() || rect.col0 + rect.width > self.width() {
            return Err(Error::Contract(format!(
                "crop {:?} exceeds label extent {}x{}",
                rect,
                self.height(),
                self.width()
            )));
        }
        Ok(ScarLabel {
            mask: self
                .mask
                .slice(ndarray::s![
                    rect.row0..rect.row0 + rect.height,
                    rect.col0..rect.col0 + rect.width
                ])
                .to_owned(),
        })
    }
}

/// Axis-aligned rectangle in pixel coordinates (row-major, top-left anchored).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelRect {
    pub row0: usize,
    pub col0: usize,
    pub height: usize,
    pub width: usize,
}

impl PixelRect {
    pub fn new(row0: usize, col0: usize, height: usize, width: usize) -> Self {
        PixelRect {
            row0,
            col0,
            height,
            width,
        }
    }

    pub fn row_end(&self) -> usize {
        self.row0 + self.height
    }

    pub fn col_end(&self) -> usize {
        self.col0 + self.width
    }

    pub fn area(&self) -> usize {
        self.height * self.width
    }

    pub fn contains(&self, other: &PixelRect) -> bool {
        self.row0 <= other.row0
            && self.col0 <= other.col0
            && self.row_end() >= other.row_end()
            && self.col_end() >= other.col_end()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Region {
    Valparaiso,
    Biobio,
    Synthetic,
}

impl Region {
    pub fn name(self) -> &'static str {
        match self {
            Region::Valparaiso => "valparaiso",
            Region::Biobio => "biobio",
            Region::Synthetic => "synthetic",
        }
    }

    pub fn parse(s: &str) -> Result<Region> {
        match s.to_ascii_lowercase().as_str() {
            "valparaiso" => Ok(Region::Valparaiso),
            "biobio" => Ok(Region::Biobio),
            "synthetic" => Ok(Region::Synthetic),
            other => Err(Error::Contract(format!("unknown region {other:?}"))),
        }
    }
}

/// Fire-event metadata keyed by `record_id`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FireRecord {
    pub record_id: String,
    pub region: Region,
    /// ISO calendar date (YYYY-MM-DD) of the fire event.
    pub fire_date: String,
    /// Map coordinates of the fire centroid.
    pub centroid: (f64, f64),
    /// Pixel-space rectangle of the labeled scar in the source raster.
    pub scar_bbox: PixelRect,
    pub burned_pixel_count: usize,
}

impl FireRecord {
    /// Checks that the bbox is non-empty and contained in `extent` (h, w).
    pub fn validate(&self, extent: (usize, usize)) -> Result<()> {
        if self.scar_bbox.area() == 0 {
            return Err(Error::Contract(format!(
                "record {}: empty scar bounding box",
                self.record_id
            )));
        }
        if self.scar_bbox.row_end() > extent.0 || self.scar_bbox.col_end() > extent.1 {
            return Err(Error::Contract(format!(
                "record {}: scar bbox {:?} outside raster extent {:?}",
                self.record_id, self.scar_bbox, extent
            )));
        }
        Ok(())
    }
}
