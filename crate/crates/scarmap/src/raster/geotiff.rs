//! Minimal GeoTIFF reader/writer.
//!
//! Covers the subset of the format the pipeline produces and consumes:
//! classic little-endian TIFF, uncompressed strips, band-sequential or
//! pixel-interleaved layout, integer or float samples, plus the
//! ModelPixelScale/ModelTiepoint geo tags. The writer emits band-sequential
//! float64 (or uint8 for masks) so a write/read round trip is bit-identical.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::{Error, Result};

const TAG_IMAGE_WIDTH: u16 = 256;
const TAG_IMAGE_LENGTH: u16 = 257;
const TAG_BITS_PER_SAMPLE: u16 = 258;
const TAG_COMPRESSION: u16 = 259;
const TAG_PHOTOMETRIC: u16 = 262;
const TAG_STRIP_OFFSETS: u16 = 273;
const TAG_SAMPLES_PER_PIXEL: u16 = 277;
const TAG_ROWS_PER_STRIP: u16 = 278;
const TAG_STRIP_BYTE_COUNTS: u16 = 279;
const TAG_PLANAR_CONFIG: u16 = 284;
const TAG_SAMPLE_FORMAT: u16 = 339;
const TAG_MODEL_PIXEL_SCALE: u16 = 33550;
const TAG_MODEL_TIEPOINT: u16 = 33922;

const TYPE_SHORT: u16 = 3;
const TYPE_LONG: u16 = 4;
const TYPE_DOUBLE: u16 = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleFormat {
    U8,
    U16,
    I16,
    F32,
    F64,
}

impl SampleFormat {
    fn bits(self) -> u16 {
        match self {
            SampleFormat::U8 => 8,
            SampleFormat::U16 | SampleFormat::I16 => 16,
            SampleFormat::F32 => 32,
            SampleFormat::F64 => 64,
        }
    }

    fn bytes(self) -> usize {
        self.bits() as usize / 8
    }

    /// TIFF SampleFormat tag value (1 = unsigned, 2 = signed, 3 = IEEE float).
    fn tag_value(self) -> u16 {
        match self {
            SampleFormat::U8 | SampleFormat::U16 => 1,
            SampleFormat::I16 => 2,
            SampleFormat::F32 | SampleFormat::F64 => 3,
        }
    }

    fn from_tags(path: &str, format: u16, bits: u16) -> Result<Self> {
        match (format, bits) {
            (1, 8) => Ok(SampleFormat::U8),
            (1, 16) => Ok(SampleFormat::U16),
            (2, 16) => Ok(SampleFormat::I16),
            (3, 32) => Ok(SampleFormat::F32),
            (3, 64) => Ok(SampleFormat::F64),
            _ => Err(Error::format(
                path,
                format!("unsupported sample format {format} with {bits} bits"),
            )),
        }
    }
}

/// In-memory multi-band raster with geo-referencing.
#[derive(Debug, Clone)]
pub struct GeoTiff {
    pub bands: Vec<Array2<f64>>,
    /// Meters per pixel (x, y).
    pub pixel_scale: (f64, f64),
    /// Map coordinates of the top-left corner.
    pub origin: (f64, f64),
    /// Sample encoding used on write; reads record the source encoding.
    pub sample_format: SampleFormat,
}

impl GeoTiff {
    pub fn new(bands: Vec<Array2<f64>>, pixel_scale: (f64, f64), origin: (f64, f64)) -> Self {
        GeoTiff {
            bands,
            pixel_scale,
            origin,
            sample_format: SampleFormat::F64,
        }
    }

    pub fn height(&self) -> usize {
        self.bands.first().map_or(0, |b| b.dim().0)
    }

    pub fn width(&self) -> usize {
        self.bands.first().map_or(0, |b| b.dim().1)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = self.encode(&path.display().to_string())?;
        fs::write(path, bytes)?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<GeoTiff> {
        let path = path.as_ref();
        let bytes = fs::read(path)?;
        decode(&path.display().to_string(), &bytes)
    }

    fn encode(&self, path: &str) -> Result<Vec<u8>> {
        let spp = self.bands.len();
        if spp == 0 {
            return Err(Error::format(path, "cannot write a raster with no bands"));
        }
        let (h, w) = self.bands[0].dim();
        if self.bands.iter().any(|b| b.dim() != (h, w)) {
            return Err(Error::ShapeMismatch("bands differ in shape".into()));
        }
        let fmt = self.sample_format;

        let mut out = Vec::new();
        out.extend_from_slice(&[0x49, 0x49, 42, 0]); // "II", magic
        out.extend_from_slice(&[0, 0, 0, 0]); // IFD offset patched below

        // One strip per band, band-sequential.
        let strip_len = h * w * fmt.bytes();
        let mut strip_offsets = Vec::with_capacity(spp);
        for band in self.bands.iter() {
            strip_offsets.push(out.len() as u32);
            for &v in band.iter() {
                match fmt {
                    SampleFormat::U8 => out.push(v as u8),
                    SampleFormat::U16 => out.extend_from_slice(&(v as u16).to_le_bytes()),
                    SampleFormat::I16 => out.extend_from_slice(&(v as i16).to_le_bytes()),
                    SampleFormat::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
                    SampleFormat::F64 => out.extend_from_slice(&v.to_le_bytes()),
                }
            }
        }

        // Out-of-line tag payloads.
        let mut extra = Vec::<u8>::new();
        let ifd_offset_guess = |extra_len: usize| out.len() + extra_len;

        // Builder for IFD entries; values wider than 4 bytes go to `extra`,
        // whose final position is only known once its size is, so payload
        // offsets are patched afterwards via placeholders.
        struct Entry {
            tag: u16,
            typ: u16,
            count: u32,
            inline: [u8; 4],
            payload: Option<Vec<u8>>,
        }
        let mut entries: Vec<Entry> = Vec::new();
        let push_short = |entries: &mut Vec<Entry>, tag: u16, value: u16| {
            let mut inline = [0u8; 4];
            inline[..2].copy_from_slice(&value.to_le_bytes());
            entries.push(Entry {
                tag,
                typ: TYPE_SHORT,
                count: 1,
                inline,
                payload: None,
            });
        };
        let push_long = |entries: &mut Vec<Entry>, tag: u16, value: u32| {
            entries.push(Entry {
                tag,
                typ: TYPE_LONG,
                count: 1,
                inline: value.to_le_bytes(),
                payload: None,
            });
        };
        let push_shorts = |entries: &mut Vec<Entry>, tag: u16, values: &[u16]| {
            if values.len() <= 2 {
                let mut inline = [0u8; 4];
                for (i, v) in values.iter().enumerate() {
                    inline[i * 2..i * 2 + 2].copy_from_slice(&v.to_le_bytes());
                }
                entries.push(Entry {
                    tag,
                    typ: TYPE_SHORT,
                    count: values.len() as u32,
                    inline,
                    payload: None,
                });
            } else {
                let payload: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
                entries.push(Entry {
                    tag,
                    typ: TYPE_SHORT,
                    count: values.len() as u32,
                    inline: [0; 4],
                    payload: Some(payload),
                });
            }
        };
        let push_longs = |entries: &mut Vec<Entry>, tag: u16, values: &[u32]| {
            if values.len() == 1 {
                push_long(entries, tag, values[0]);
            } else {
                let payload: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
                entries.push(Entry {
                    tag,
                    typ: TYPE_LONG,
                    count: values.len() as u32,
                    inline: [0; 4],
                    payload: Some(payload),
                });
            }
        };
        let push_doubles = |entries: &mut Vec<Entry>, tag: u16, values: &[f64]| {
            let payload: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
            entries.push(Entry {
                tag,
                typ: TYPE_DOUBLE,
                count: values.len() as u32,
                inline: [0; 4],
                payload: Some(payload),
            });
        };

        push_long(&mut entries, TAG_IMAGE_WIDTH, w as u32);
        push_long(&mut entries, TAG_IMAGE_LENGTH, h as u32);
        push_shorts(
            &mut entries,
            TAG_BITS_PER_SAMPLE,
            &vec![fmt.bits(); spp],
        );
        push_short(&mut entries, TAG_COMPRESSION, 1);
        push_short(&mut entries, TAG_PHOTOMETRIC, 1);
        push_longs(&mut entries, TAG_STRIP_OFFSETS, &strip_offsets);
        push_short(&mut entries, TAG_SAMPLES_PER_PIXEL, spp as u16);
        push_long(&mut entries, TAG_ROWS_PER_STRIP, h as u32);
        push_longs(
            &mut entries,
            TAG_STRIP_BYTE_COUNTS,
            &vec![strip_len as u32; spp],
        );
        push_short(&mut entries, TAG_PLANAR_CONFIG, 2);
        push_shorts(
            &mut entries,
            TAG_SAMPLE_FORMAT,
            &vec![fmt.tag_value(); spp],
        );
        push_doubles(
            &mut entries,
            TAG_MODEL_PIXEL_SCALE,
            &[self.pixel_scale.0, self.pixel_scale.1, 0.0],
        );
        push_doubles(
            &mut entries,
            TAG_MODEL_TIEPOINT,
            &[0.0, 0.0, 0.0, self.origin.0, self.origin.1, 0.0],
        );

        // Lay out payloads directly after the pixel data, then the IFD.
        for e in entries.iter_mut() {
            if let Some(p) = e.payload.take() {
                let offset = ifd_offset_guess(extra.len()) as u32;
                e.inline = offset.to_le_bytes();
                extra.extend_from_slice(&p);
            }
        }
        let ifd_offset = (out.len() + extra.len()) as u32;
        out.extend_from_slice(&extra);
        out[4..8].copy_from_slice(&ifd_offset.to_le_bytes());

        entries.sort_by_key(|e| e.tag);
        out.extend_from_slice(&(entries.len() as u16).to_le_bytes());
        for e in &entries {
            out.extend_from_slice(&e.tag.to_le_bytes());
            out.extend_from_slice(&e.typ.to_le_bytes());
            out.extend_from_slice(&e.count.to_le_bytes());
            out.extend_from_slice(&e.inline);
        }
        out.extend_from_slice(&[0, 0, 0, 0]); // no next IFD

        let _ = path;
        Ok(out)
    }
}

struct Reader<'a> {
    path: &'a str,
    bytes: &'a [u8],
}

impl<'a> Reader<'a> {
    fn err(&self, reason: impl Into<String>) -> Error {
        Error::format(self.path, reason)
    }

    fn u16_at(&self, off: usize) -> Result<u16> {
        let b = self
            .bytes
            .get(off..off + 2)
            .ok_or_else(|| self.err("truncated file"))?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32_at(&self, off: usize) -> Result<u32> {
        let b = self
            .bytes
            .get(off..off + 4)
            .ok_or_else(|| self.err("truncated file"))?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f64_at(&self, off: usize) -> Result<f64> {
        let b = self
            .bytes
            .get(off..off + 8)
            .ok_or_else(|| self.err("truncated file"))?;
        Ok(f64::from_le_bytes(b.try_into().unwrap()))
    }
}

#[derive(Debug, Clone)]
struct IfdEntry {
    typ: u16,
    count: u32,
    value_off: usize,
    inline: bool,
}

fn type_size(typ: u16) -> usize {
    match typ {
        1 | 2 | 6 | 7 => 1,
        TYPE_SHORT | 8 => 2,
        TYPE_LONG | 9 | 11 => 4,
        5 | 10 | TYPE_DOUBLE => 8,
        _ => 0,
    }
}

fn decode(path: &str, bytes: &[u8]) -> Result<GeoTiff> {
    let r = Reader { path, bytes };
    if bytes.len() < 8 || &bytes[0..2] != b"II" || r.u16_at(2)? != 42 {
        return Err(r.err("not a little-endian classic TIFF"));
    }
    let ifd = r.u32_at(4)? as usize;
    let n_entries = r.u16_at(ifd)? as usize;

    let mut tags = std::collections::BTreeMap::<u16, IfdEntry>::new();
    for i in 0..n_entries {
        let base = ifd + 2 + i * 12;
        let tag = r.u16_at(base)?;
        let typ = r.u16_at(base + 2)?;
        let count = r.u32_at(base + 4)?;
        let byte_len = type_size(typ) * count as usize;
        let inline = byte_len <= 4;
        let value_off = if inline {
            base + 8
        } else {
            r.u32_at(base + 8)? as usize
        };
        tags.insert(
            tag,
            IfdEntry {
                typ,
                count,
                value_off,
                inline,
            },
        );
    }

    let get_ints = |tag: u16| -> Result<Vec<u64>> {
        let e = tags
            .get(&tag)
            .ok_or_else(|| r.err(format!("missing required tag {tag}")))?;
        let mut out = Vec::with_capacity(e.count as usize);
        for i in 0..e.count as usize {
            let off = e.value_off + i * type_size(e.typ);
            let v = match e.typ {
                TYPE_SHORT => r.u16_at(off)? as u64,
                TYPE_LONG => r.u32_at(off)? as u64,
                1 => *bytes.get(off).ok_or_else(|| r.err("truncated tag"))? as u64,
                t => return Err(r.err(format!("tag {tag}: unsupported integer type {t}"))),
            };
            out.push(v);
        }
        let _ = e.inline;
        Ok(out)
    };
    let get_int = |tag: u16| -> Result<u64> {
        Ok(*get_ints(tag)?
            .first()
            .ok_or_else(|| r.err(format!("empty tag {tag}")))?)
    };
    let get_doubles = |tag: u16| -> Result<Option<Vec<f64>>> {
        let Some(e) = tags.get(&tag) else {
            return Ok(None);
        };
        if e.typ != TYPE_DOUBLE {
            return Err(r.err(format!("tag {tag}: expected DOUBLE")));
        }
        let mut out = Vec::with_capacity(e.count as usize);
        for i in 0..e.count as usize {
            out.push(r.f64_at(e.value_off + i * 8)?);
        }
        Ok(Some(out))
    };

    let width = get_int(TAG_IMAGE_WIDTH)? as usize;
    let height = get_int(TAG_IMAGE_LENGTH)? as usize;
    let spp = tags
        .get(&TAG_SAMPLES_PER_PIXEL)
        .map_or(Ok(1), |_| get_int(TAG_SAMPLES_PER_PIXEL))? as usize;
    let compression = tags
        .get(&TAG_COMPRESSION)
        .map_or(Ok(1), |_| get_int(TAG_COMPRESSION))?;
    if compression != 1 {
        return Err(r.err(format!("unsupported compression {compression}")));
    }
    let planar = tags
        .get(&TAG_PLANAR_CONFIG)
        .map_or(Ok(1), |_| get_int(TAG_PLANAR_CONFIG))?;
    let bits = get_ints(TAG_BITS_PER_SAMPLE)?;
    if bits.windows(2).any(|w| w[0] != w[1]) {
        return Err(r.err("mixed bits-per-sample not supported"));
    }
    let sample_fmt_tag = tags
        .get(&TAG_SAMPLE_FORMAT)
        .map_or(Ok(1), |_| get_int(TAG_SAMPLE_FORMAT))? as u16;
    let fmt = SampleFormat::from_tags(path, sample_fmt_tag, bits[0] as u16)?;

    let strip_offsets = get_ints(TAG_STRIP_OFFSETS)?;
    let strip_counts = get_ints(TAG_STRIP_BYTE_COUNTS)?;
    if strip_offsets.len() != strip_counts.len() {
        return Err(r.err("strip offsets/byte counts length mismatch"));
    }
    let rows_per_strip = tags
        .get(&TAG_ROWS_PER_STRIP)
        .map_or(Ok(height as u64), |_| get_int(TAG_ROWS_PER_STRIP))?
        as usize;

    // Flatten all strips into one contiguous sample stream per plane group.
    let mut data = Vec::<u8>::with_capacity(height * width * spp * fmt.bytes());
    for (&off, &len) in strip_offsets.iter().zip(&strip_counts) {
        let (off, len) = (off as usize, len as usize);
        let chunk = bytes
            .get(off..off + len)
            .ok_or_else(|| r.err("strip outside file"))?;
        data.extend_from_slice(chunk);
    }
    let expected = height * width * spp * fmt.bytes();
    if data.len() < expected {
        return Err(r.err(format!(
            "pixel data too short: {} < {expected}",
            data.len()
        )));
    }

    let read_sample = |idx: usize| -> f64 {
        let off = idx * fmt.bytes();
        match fmt {
            SampleFormat::U8 => data[off] as f64,
            SampleFormat::U16 => u16::from_le_bytes([data[off], data[off + 1]]) as f64,
            SampleFormat::I16 => i16::from_le_bytes([data[off], data[off + 1]]) as f64,
            SampleFormat::F32 => {
                f32::from_le_bytes(data[off..off + 4].try_into().unwrap()) as f64
            }
            SampleFormat::F64 => f64::from_le_bytes(data[off..off + 8].try_into().unwrap()),
        }
    };

    let mut bands = vec![Array2::<f64>::zeros((height, width)); spp];
    match planar {
        2 => {
            // Band-sequential: strips cover band 0 rows first, then band 1...
            for (b, band) in bands.iter_mut().enumerate() {
                for row in 0..height {
                    for col in 0..width {
                        band[[row, col]] = read_sample((b * height + row) * width + col);
                    }
                }
            }
        }
        1 => {
            for row in 0..height {
                for col in 0..width {
                    for (b, band) in bands.iter_mut().enumerate() {
                        band[[row, col]] = read_sample((row * width + col) * spp + b);
                    }
                }
            }
        }
        p => return Err(r.err(format!("unsupported planar configuration {p}"))),
    }
    let _ = rows_per_strip;

    let pixel_scale = match get_doubles(TAG_MODEL_PIXEL_SCALE)? {
        Some(v) if v.len() >= 2 => (v[0], v[1]),
        _ => (1.0, 1.0),
    };
    let origin = match get_doubles(TAG_MODEL_TIEPOINT)? {
        Some(v) if v.len() >= 6 => (v[3], v[4]),
        _ => (0.0, 0.0),
    };

    Ok(GeoTiff {
        bands,
        pixel_scale,
        origin,
        sample_format: fmt,
    })
}
