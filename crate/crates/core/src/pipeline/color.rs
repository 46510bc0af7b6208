//! sRGB pixels to hue/chroma/lightness over the CIELUV chromaticity plane.

use std::f64::consts::TAU;
use std::path::Path;

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::directional::DirLinObservation;
use crate::error::{Error, Result};

/// sRGB (D65) to XYZ.
const RGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.412_456_4, 0.357_576_1, 0.180_437_5],
    [0.212_672_9, 0.715_152_2, 0.072_175_0],
    [0.019_333_9, 0.119_192_0, 0.950_304_1],
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HclPixel {
    /// Radians in `[0, 2π)`; 0 when the chroma is 0.
    pub hue: f64,
    pub chroma: f64,
    pub lightness: f64,
}

fn srgb_to_linear(c: u8) -> f64 {
    let c = c as f64 / 255.0;
    if c <= 0.040_45 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

fn uv_prime(x: f64, y: f64, z: f64) -> (f64, f64) {
    let den = x + 15.0 * y + 3.0 * z;
    if den == 0.0 {
        (0.0, 0.0)
    } else {
        (4.0 * x / den, 9.0 * y / den)
    }
}

pub fn rgb_to_hcl(rgb: [u8; 3]) -> HclPixel {
    let lin = rgb.map(srgb_to_linear);
    let xyz: [f64; 3] = RGB_TO_XYZ.map(|row| row.iter().zip(&lin).map(|(m, c)| m * c).sum());
    // Reference white is the image of (1, 1, 1) so white maps to zero chroma.
    let white: [f64; 3] = RGB_TO_XYZ.map(|row| row.iter().sum());
    let yr = xyz[1] / white[1];
    let eps = (6.0f64 / 29.0).powi(3);
    let lightness = if yr > eps { 116.0 * yr.cbrt() - 16.0 } else { (29.0f64 / 3.0).powi(3) * yr };
    let (up, vp) = uv_prime(xyz[0], xyz[1], xyz[2]);
    let (un, vn) = uv_prime(white[0], white[1], white[2]);
    let (u, v) = if lightness == 0.0 { (0.0, 0.0) } else { (13.0 * lightness * (up - un), 13.0 * lightness * (vp - vn)) };
    let chroma = u.hypot(v);
    let hue = if chroma == 0.0 { 0.0 } else { v.atan2(u).rem_euclid(TAU) };
    HclPixel { hue: if hue >= TAU { 0.0 } else { hue }, chroma, lightness: lightness.clamp(0.0, 100.0) }
}

/// Per-column shift and scale applied to `(chroma, lightness)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: [f64; 2],
    /// A zero-variance column keeps scale 1 and is centred only.
    pub scale: [f64; 2],
}

impl Standardization {
    pub fn identity() -> Self {
        Self { mean: [0.0; 2], scale: [1.0; 2] }
    }

    pub fn fit(pixels: &[HclPixel]) -> Self {
        let n = pixels.len().max(1) as f64;
        let cols = |f: fn(&HclPixel) -> f64| {
            let mean = pixels.iter().map(f).sum::<f64>() / n;
            let var = pixels.iter().map(|p| (f(p) - mean).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            (mean, if sd > 1e-12 { sd } else { 1.0 })
        };
        let (mc, sc) = cols(|p| p.chroma);
        let (ml, sl) = cols(|p| p.lightness);
        Self { mean: [mc, ml], scale: [sc, sl] }
    }

    pub fn apply(&self, p: &HclPixel) -> [f64; 2] {
        [(p.chroma - self.mean[0]) / self.scale[0], (p.lightness - self.mean[1]) / self.scale[1]]
    }
}

/// Pixel coordinates kept when sampling every `stride`-th pixel in each direction.
pub fn stride_grid(width: u32, height: u32, stride: u32) -> Vec<(u32, u32)> {
    let stride = stride.max(1);
    (0..height).step_by(stride as usize).flat_map(|y| (0..width).step_by(stride as usize).map(move |x| (x, y))).collect()
}

/// One observation per listed pixel: direction = hue, linear = (chroma, lightness).
pub fn image_to_observations(
    image: &RgbImage,
    pixels: &[(u32, u32)],
    standardize: bool,
) -> Result<(Vec<DirLinObservation<f64>>, Standardization)> {
    let hcl: Vec<HclPixel> = pixels.iter().map(|&(x, y)| rgb_to_hcl(image.get_pixel(x, y).0)).collect();
    let st = if standardize { Standardization::fit(&hcl) } else { Standardization::identity() };
    let obs = hcl
        .iter()
        .map(|p| DirLinObservation::from_angles(vec![p.hue], st.apply(p).to_vec()))
        .collect::<Result<Vec<_>>>()?;
    Ok((obs, st))
}

/// All pixels in row-major order.
pub fn all_pixels(width: u32, height: u32) -> Vec<(u32, u32)> {
    stride_grid(width, height, 1)
}

pub fn load_png(path: &Path) -> Result<RgbImage> {
    Ok(image::open(path)?.to_rgb8())
}

/// Labels for every pixel, from labels of a stride grid: each pixel takes the
/// label of the grid point at `(⌊x/s⌋·s, ⌊y/s⌋·s)` rounded to the nearest.
pub fn upsample_labels(width: u32, height: u32, stride: u32, grid_labels: &[usize]) -> Result<Vec<usize>> {
    let stride = stride.max(1);
    let gw = width.div_ceil(stride);
    let gh = height.div_ceil(stride);
    if grid_labels.len() != (gw * gh) as usize {
        return Err(Error::domain(format!("expected {} grid labels, got {}", gw * gh, grid_labels.len())));
    }
    let nearest = |c: u32, g: u32| ((c + stride / 2) / stride).min(g - 1);
    Ok((0..height)
        .flat_map(|y| (0..width).map(move |x| (x, y)))
        .map(|(x, y)| grid_labels[(nearest(y, gh) * gw + nearest(x, gw)) as usize])
        .collect())
}

const PALETTE: [[u8; 3]; 12] = [
    [230, 25, 75],
    [60, 180, 75],
    [255, 225, 25],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
    [210, 245, 60],
    [250, 190, 212],
    [0, 128, 128],
    [170, 110, 40],
];

pub fn save_png(image: &RgbImage, path: &Path) -> Result<()> {
    image.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

/// Row-major labels to a palette image.
pub fn label_map(width: u32, height: u32, labels: &[usize]) -> Result<RgbImage> {
    if labels.len() != (width as usize) * (height as usize) {
        return Err(Error::domain(format!("expected {} labels, got {}", width * height, labels.len())));
    }
    Ok(RgbImage::from_fn(width, height, |x, y| Rgb(PALETTE[labels[(y * width + x) as usize] % PALETTE.len()])))
}
