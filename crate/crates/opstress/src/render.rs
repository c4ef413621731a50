//! Contour images of element fields.
//!
//! `Magnitude` maps `[0, top]` linearly through blue, cyan, green, yellow
//! and red. `Signed` maps `[-top, top]` through blue, white and red. Void
//! elements are drawn light gray. Row 0 of the field is the bottom row of
//! the image.

use std::path::Path;

use image::{Rgb, RgbImage};

use crate::error::Result;

const VOID: Rgb<u8> = Rgb([200, 200, 200]);
const MAGNITUDE_STOPS: [[f64; 3]; 5] =
    [[0.0, 0.0, 255.0], [0.0, 255.0, 255.0], [0.0, 255.0, 0.0], [255.0, 255.0, 0.0], [255.0, 0.0, 0.0]];
const SIGNED_STOPS: [[f64; 3]; 3] = [[0.0, 0.0, 255.0], [255.0, 255.0, 255.0], [255.0, 0.0, 0.0]];
/// Minimum rendered image width in pixels.
const MIN_WIDTH: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Palette {
    Magnitude,
    Signed,
}

fn interpolate(stops: &[[f64; 3]], t: f64) -> Rgb<u8> {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let x = t * (stops.len() - 1) as f64;
    let i = (x.floor() as usize).min(stops.len() - 2);
    let f = x - i as f64;
    let c = |k: usize| (stops[i][k] + f * (stops[i + 1][k] - stops[i][k])).round() as u8;
    Rgb([c(0), c(1), c(2)])
}

impl Palette {
    pub fn color(self, value: f64, top: f64) -> Rgb<u8> {
        let top = if top > 0.0 { top } else { 1.0 };
        match self {
            Palette::Magnitude => interpolate(&MAGNITUDE_STOPS, value / top),
            Palette::Signed => interpolate(&SIGNED_STOPS, 0.5 + 0.5 * value / top),
        }
    }
}

pub fn render_field(nx: usize, ny: usize, values: &[f64], mask: &[u8], palette: Palette, top: f64) -> RgbImage {
    let scale = MIN_WIDTH.div_ceil(nx).max(1);
    RgbImage::from_fn((nx * scale) as u32, (ny * scale) as u32, |x, y| {
        let col = x as usize / scale;
        let row = ny - 1 - y as usize / scale;
        let e = row * nx + col;
        if mask[e] == 0 {
            VOID
        } else {
            palette.color(values[e], top)
        }
    })
}

pub fn write_field_png(path: &Path, nx: usize, ny: usize, values: &[f64], mask: &[u8], palette: Palette, top: f64) -> Result<()> {
    render_field(nx, ny, values, mask, palette, top).save(path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn palette_end_points() {
        assert_eq!(Palette::Magnitude.color(0.0, 10.0), Rgb([0, 0, 255]));
        assert_eq!(Palette::Magnitude.color(10.0, 10.0), Rgb([255, 0, 0]));
        assert_eq!(Palette::Magnitude.color(5.0, 10.0), Rgb([0, 255, 0]));
        assert_eq!(Palette::Signed.color(0.0, 3.0), Rgb([255, 255, 255]));
        assert_eq!(Palette::Signed.color(-3.0, 3.0), Rgb([0, 0, 255]));
    }

    #[test]
    fn bottom_row_is_drawn_last() {
        let img = render_field(2, 2, &[0.0, 0.0, 1.0, 1.0], &[1, 0, 1, 1], Palette::Magnitude, 1.0);
        let s = img.width() / 2;
        assert_eq!(*img.get_pixel(0, 0), Rgb([255, 0, 0]));
        assert_eq!(*img.get_pixel(0, img.height() - 1), Rgb([0, 0, 255]));
        assert_eq!(*img.get_pixel(s, img.height() - 1), VOID);
    }
}
