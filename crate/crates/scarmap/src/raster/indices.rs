//! Spectral index formulas (NDVI, NBR, RdNBR) and band validity checks.
//!
//! Degenerate pixels (zero denominators) map to NaN, the invalid-value
//! sentinel consumed by the imputation stage. Zero is never used as a
//! fallback: all-band zero pixels are sensor noise and must stay
//! distinguishable from computed values.

use ndarray::{Array2, Zip};

use super::{BandTile, Phase, NUM_BANDS, NUM_RAW_BANDS};
use crate::{Error, Result};
use BandViolationKind::{Invalid, OutOfRange, ZeroNoise};

/// Guard added to |NBR_pre| (thousandths domain) before the square root in
/// RdNBR, keeping the denominator finite when NBR_pre = 0.
pub const RDNBR_EPS: f64 = 0.001;

fn check_same_shape(a: &Array2<f64>, b: &Array2<f64>, what: &str) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::ShapeMismatch(format!(
            "{what}: {:?} vs {:?}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(())
}

fn normalized_difference(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(a.dim());
    Zip::from(&mut out).and(a).and(b).for_each(|o, &x, &y| {
        let sum = x + y;
        *o = if sum == 0.0 { f64::NAN } else { (x - y) / sum };
    });
    out
}

/// NDVI = (NIR - Red) / (NIR + Red); NaN where the denominator is zero.
pub fn compute_ndvi(nir: &Array2<f64>, red: &Array2<f64>) -> Result<Array2<f64>> {
    check_same_shape(nir, red, "ndvi")?;
    Ok(normalized_difference(nir, red))
}

/// NBR = (NIR - SWIR2) / (NIR + SWIR2); NaN where the denominator is zero.
pub fn compute_nbr(nir: &Array2<f64>, swir2: &Array2<f64>) -> Result<Array2<f64>> {
    check_same_shape(nir, swir2, "nbr")?;
    Ok(normalized_difference(nir, swir2))
}

/// Encoding of the NBR grids passed to [`compute_rdnbr`].
///
/// The RdNBR formula divides |NBR_pre| by 1000, which implies NBR stored in
/// thousandths; tiles ingested by this crate store NBR in [-1, 1], so both
/// conventions are accepted. `Unit` inputs are rescaled by 1000 first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NbrScale {
    /// NBR encoded in thousandths (values in [-1000, 1000]); formula applied
    /// literally.
    #[default]
    Thousandths,
    /// NBR encoded in [-1, 1]; multiplied by 1000 on entry.
    Unit,
}

/// RdNBR = (NBR_pre - NBR_post) / sqrt(|NBR_pre| / 1000).
///
/// Where NBR_pre = 0 the denominator uses [`RDNBR_EPS`] instead; NaN inputs
/// propagate.
pub fn compute_rdnbr(
    nbr_pre: &Array2<f64>,
    nbr_post: &Array2<f64>,
    scale: NbrScale,
) -> Result<Array2<f64>> {
    check_same_shape(nbr_pre, nbr_post, "rdnbr")?;
    let factor = match scale {
        NbrScale::Thousandths => 1.0,
        NbrScale::Unit => 1000.0,
    };
    let mut out = Array2::zeros(nbr_pre.dim());
    Zip::from(&mut out)
        .and(nbr_pre)
        .and(nbr_post)
        .for_each(|o, &pre, &post| {
            let pre = pre * factor;
            let post = post * factor;
            let denom = (pre.abs().max(RDNBR_EPS) / 1000.0).sqrt();
            *o = (pre - post) / denom;
        });
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BandViolationKind {
    /// Finite value outside the declared valid range for the band.
    OutOfRange,
    /// NaN sentinel.
    Invalid,
    /// Pixel where every raw reflectance band of the phase is exactly zero.
    ZeroNoise,
}

/// One per-band defect summary emitted by [`validate_band_ranges`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BandViolation {
    pub phase: Phase,
    pub band: usize,
    pub kind: BandViolationKind,
    pub count: usize,
}

/// Scans every band of both phases and reports out-of-range, invalid (NaN)
/// and zero-noise pixel counts. A clean tile yields an empty list.
///
/// `reflectance_range` is the valid interval for the six raw bands
/// (configurable per ingestion profile; surface reflectance is nominally
/// [0, 1]). The two index bands are checked against [-1, 1].
pub fn validate_band_ranges(tile: &BandTile, reflectance_range: (f64, f64)) -> Vec<BandViolation> {
    let mut out = Vec::new();
    let (h, w) = (tile.height(), tile.width());
    for phase in Phase::ALL {
        let bands = tile.bands(phase);

        // Zero-noise detection: the whole pixel zero across the raw bands.
        let mut zero_noise = Array2::<bool>::from_elem((h, w), true);
        for b in 0..NUM_RAW_BANDS {
            Zip::from(&mut zero_noise)
                .and(&bands.index_axis(ndarray::Axis(0), b))
                .for_each(|z, &v| *z = *z && v == 0.0);
        }
        let zero_count = zero_noise.iter().filter(|&&z| z).count();

        for band in 0..NUM_BANDS {
            let (lo, hi) = if band < NUM_RAW_BANDS {
                reflectance_range
            } else {
                (-1.0, 1.0)
            };
            let mut oor = 0usize;
            let mut invalid = 0usize;
            for ((r, c), &v) in bands.index_axis(ndarray::Axis(0), band).indexed_iter() {
                if v.is_nan() {
                    invalid += 1;
                } else if (v < lo || v > hi) && !zero_noise[[r, c]] {
                    oor += 1;
                }
            }
            if oor > 0 {
                out.push(BandViolation {
                    phase,
                    band,
                    kind: OutOfRange,
                    count: oor,
                });
            }
            if invalid > 0 {
                out.push(BandViolation {
                    phase,
                    band,
                    kind: Invalid,
                    count: invalid,
                });
            }
            if zero_count > 0 && band < NUM_RAW_BANDS {
                out.push(BandViolation {
                    phase,
                    band,
                    kind: ZeroNoise,
                    count: zero_count,
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::{arr2, Array3};
    use proptest::prelude::*;

    fn grid(v: f64) -> Array2<f64> {
        Array2::from_elem((2, 2), v)
    }

    #[test]
    fn ndvi_hand_values() {
        let out = compute_ndvi(&grid(0.4), &grid(0.4)).unwrap();
        assert_abs_diff_eq!(out[[0, 0]], 0.0, epsilon = 1e-12);
        let out = compute_ndvi(&grid(0.6), &grid(0.2)).unwrap();
        assert_abs_diff_eq!(out[[0, 0]], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn ndvi_zero_denominator_is_nan() {
        let out = compute_ndvi(&grid(0.0), &grid(0.0)).unwrap();
        assert!(out[[0, 0]].is_nan());
    }

    #[test]
    fn ndvi_shape_mismatch() {
        let err = compute_ndvi(&Array2::zeros((2, 2)), &Array2::zeros((2, 3)));
        assert!(matches!(err, Err(crate::Error::ShapeMismatch(_))));
    }

    #[test]
    fn nbr_hand_values() {
        assert_abs_diff_eq!(
            compute_nbr(&grid(0.5), &grid(0.5)).unwrap()[[0, 0]],
            0.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            compute_nbr(&grid(0.45), &grid(0.15)).unwrap()[[0, 0]],
            0.5,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            compute_nbr(&grid(0.1), &grid(0.3)).unwrap()[[0, 0]],
            -0.5,
            epsilon = 1e-12
        );
    }

    #[test]
    fn rdnbr_hand_values_thousandths() {
        let cases = [
            (500.0, 500.0, 0.0),
            (1000.0, 0.0, 1000.0),
            (250.0, -250.0, 1000.0),
        ];
        for (pre, post, expected) in cases {
            let out = compute_rdnbr(&grid(pre), &grid(post), NbrScale::Thousandths).unwrap();
            assert_abs_diff_eq!(out[[0, 0]], expected, epsilon = 1e-9);
        }
    }

    #[test]
    fn rdnbr_unit_scale_matches_thousandths() {
        let a = compute_rdnbr(&grid(0.25), &grid(-0.25), NbrScale::Unit).unwrap();
        let b = compute_rdnbr(&grid(250.0), &grid(-250.0), NbrScale::Thousandths).unwrap();
        assert_abs_diff_eq!(a[[0, 0]], b[[0, 0]], epsilon = 1e-9);
    }

    #[test]
    fn rdnbr_zero_pre_is_finite() {
        let out = compute_rdnbr(&grid(0.0), &grid(100.0), NbrScale::Thousandths).unwrap();
        assert!(out[[0, 0]].is_finite());
    }

    proptest! {
        #[test]
        fn indices_in_unit_interval_for_nonnegative_inputs(
            a in 0.0f64..2.0, b in 0.0f64..2.0,
        ) {
            let out = compute_ndvi(&grid(a), &grid(b)).unwrap();
            let v = out[[0, 0]];
            prop_assert!(v.is_nan() || (-1.0..=1.0).contains(&v));
        }

        #[test]
        fn rdnbr_of_equal_inputs_is_zero(x in -1000.0f64..1000.0) {
            prop_assume!(x != 0.0);
            let out = compute_rdnbr(&grid(x), &grid(x), NbrScale::Thousandths).unwrap();
            prop_assert_eq!(out[[0, 0]], 0.0);
        }
    }

    use crate::raster::{BAND_NBR, BAND_NDVI};

    fn clean_tile() -> BandTile {
        let mut pre = Array3::from_elem((NUM_BANDS, 3, 3), 0.2);
        let mut post = pre.clone();
        for arr in [&mut pre, &mut post] {
            arr.index_axis_mut(ndarray::Axis(0), BAND_NDVI).fill(0.1);
            arr.index_axis_mut(ndarray::Axis(0), BAND_NBR).fill(0.1);
        }
        BandTile::new("t", pre, post, 30.0, (0.0, 0.0)).unwrap()
    }

    #[test]
    fn clean_tile_has_no_violations() {
        assert!(validate_band_ranges(&clean_tile(), (0.0, 1.0)).is_empty());
    }

    #[test]
    fn out_of_range_reflectance_reported() {
        let mut t = clean_tile();
        t.pre_bands[[2, 1, 1]] = 1.7;
        let v = validate_band_ranges(&t, (0.0, 1.0));
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].phase, Phase::Pre);
        assert_eq!(v[0].band, 2);
        assert_eq!(v[0].kind, OutOfRange);
        assert_eq!(v[0].count, 1);
    }

    #[test]
    fn invalid_index_pixel_reported() {
        let mut t = clean_tile();
        t.post_bands[[BAND_NDVI, 0, 0]] = f64::NAN;
        let v = validate_band_ranges(&t, (0.0, 1.0));
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].band, BAND_NDVI);
        assert_eq!(v[0].kind, Invalid);
    }

    #[test]
    fn zero_noise_pixel_reported_per_raw_band() {
        let mut t = clean_tile();
        for b in 0..NUM_RAW_BANDS {
            t.pre_bands[[b, 1, 2]] = 0.0;
        }
        let v = validate_band_ranges(&t, (0.0, 1.0));
        let zero: Vec<_> = v.iter().filter(|x| x.kind == ZeroNoise).collect();
        assert_eq!(zero.len(), NUM_RAW_BANDS);
        assert!(zero.iter().all(|x| x.count == 1 && x.phase == Phase::Pre));
    }

    #[test]
    fn isolated_zero_in_one_band_is_not_noise() {
        let mut t = clean_tile();
        t.pre_bands[[0, 1, 1]] = 0.0;
        assert!(validate_band_ranges(&t, (0.0, 1.0)).is_empty());
    }

    #[test]
    fn arr2_example_nbr_matches_eq_by_pixel() {
        let nir = arr2(&[[0.45, 0.1], [0.5, 0.3]]);
        let swir2 = arr2(&[[0.15, 0.3], [0.5, 0.1]]);
        let nbr = compute_nbr(&nir, &swir2).unwrap();
        for ((r, c), &v) in nbr.indexed_iter() {
            let expect = (nir[[r, c]] - swir2[[r, c]]) / (nir[[r, c]] + swir2[[r, c]]);
            assert_abs_diff_eq!(v, expect, epsilon = 1e-12);
        }
    }
}
