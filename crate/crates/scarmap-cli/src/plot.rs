//! Minimal PNG plotting: polyline charts and scatter plots on a white
//! canvas with plain axes. No text rendering; companion tables carry the
//! numbers, the images show the shape.

use image::{Rgb, RgbImage};
use scarmap::Result;
use std::path::Path;

pub const WIDTH: u32 = 800;
pub const HEIGHT: u32 = 500;
const MARGIN: u32 = 50;

pub const BLUE: Rgb<u8> = Rgb([31, 119, 180]);
pub const ORANGE: Rgb<u8> = Rgb([255, 127, 14]);
pub const GREEN: Rgb<u8> = Rgb([44, 160, 44]);

pub struct Series<'a> {
    pub points: &'a [(f64, f64)],
    pub color: Rgb<u8>,
    /// Connect points with line segments (curves) or draw dots (scatter).
    pub line: bool,
}

struct Frame {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn from_series(series: &[Series]) -> Frame {
        let mut f = Frame {
            x_min: f64::INFINITY,
            x_max: f64::NEG_INFINITY,
            y_min: f64::INFINITY,
            y_max: f64::NEG_INFINITY,
        };
        for s in series {
            for &(x, y) in s.points {
                f.x_min = f.x_min.min(x);
                f.x_max = f.x_max.max(x);
                f.y_min = f.y_min.min(y);
                f.y_max = f.y_max.max(y);
            }
        }
        if !f.x_min.is_finite() {
            return Frame {
                x_min: 0.0,
                x_max: 1.0,
                y_min: 0.0,
                y_max: 1.0,
            };
        }
        if f.x_min == f.x_max {
            f.x_min -= 0.5;
            f.x_max += 0.5;
        }
        if f.y_min == f.y_max {
            f.y_min -= 0.5;
            f.y_max += 0.5;
        }
        f
    }

    fn to_pixel(&self, x: f64, y: f64) -> (i64, i64) {
        let px = MARGIN as f64
            + (x - self.x_min) / (self.x_max - self.x_min) * (WIDTH - 2 * MARGIN) as f64;
        let py = (HEIGHT - MARGIN) as f64
            - (y - self.y_min) / (self.y_max - self.y_min) * (HEIGHT - 2 * MARGIN) as f64;
        (px.round() as i64, py.round() as i64)
    }
}

fn put(img: &mut RgbImage, x: i64, y: i64, color: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < WIDTH && (y as u32) < HEIGHT {
        img.put_pixel(x as u32, y as u32, color);
    }
}

fn segment(img: &mut RgbImage, a: (i64, i64), b: (i64, i64), color: Rgb<u8>) {
    let (mut x0, mut y0) = a;
    let (x1, y1) = b;
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        put(img, x0, y0, color);
        if x0 == x1 && y0 == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x0 += sx;
        }
        if e2 <= dx {
            err += dx;
            y0 += sy;
        }
    }
}

fn dot(img: &mut RgbImage, center: (i64, i64), color: Rgb<u8>) {
    for dx in -2i64..=2 {
        for dy in -2i64..=2 {
            if dx * dx + dy * dy <= 4 {
                put(img, center.0 + dx, center.1 + dy, color);
            }
        }
    }
}

/// Renders the series onto a shared frame and writes a PNG.
pub fn render(path: impl AsRef<Path>, series: &[Series]) -> Result<()> {
    let mut img = RgbImage::from_pixel(WIDTH, HEIGHT, Rgb([255, 255, 255]));
    let axis = Rgb([60, 60, 60]);
    let m = MARGIN as i64;
    segment(&mut img, (m, m), (m, HEIGHT as i64 - m), axis);
    segment(
        &mut img,
        (m, HEIGHT as i64 - m),
        (WIDTH as i64 - m, HEIGHT as i64 - m),
        axis,
    );
    let frame = Frame::from_series(series);
    for s in series {
        if s.line {
            for pair in s.points.windows(2) {
                let a = frame.to_pixel(pair[0].0, pair[0].1);
                let b = frame.to_pixel(pair[1].0, pair[1].1);
                segment(&mut img, a, b, s.color);
            }
        }
        for &(x, y) in s.points {
            dot(&mut img, frame.to_pixel(x, y), s.color);
        }
    }
    img.save(path.as_ref())
        .map_err(|e| scarmap::Error::Contract(format!("plot write failed: {e}")))?;
    Ok(())
}
