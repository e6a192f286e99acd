//! RGB sky images with linear intensities in [0, 1], plus PNG/TIFF I/O.

use std::path::Path;

use image::{ImageBuffer, Luma, Rgb};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Where an image came from.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: Option<u64>,
    pub instrument: Option<String>,
}

/// H×W×3 grid of linear intensities, interleaved RGB.
#[derive(Clone, Debug, PartialEq)]
pub struct SkyImage {
    width: usize,
    height: usize,
    data: Vec<f32>,
    pub provenance: Provenance,
}

impl SkyImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, [0.0; 3])
    }

    pub fn filled(width: usize, height: usize, rgb: [f32; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(&rgb);
        }
        SkyImage {
            width,
            height,
            data,
            provenance: Provenance::default(),
        }
    }

    pub fn from_raw(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(Error::domain(format!(
                "expected {} samples for {width}x{height} RGB, got {}",
                width * height * 3,
                data.len()
            )));
        }
        Ok(SkyImage {
            width,
            height,
            data,
            provenance: Provenance::default(),
        })
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [f32; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [f32; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    #[inline]
    pub fn add_pixel(&mut self, x: usize, y: usize, rgb: [f32; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i] += rgb[0];
        self.data[i + 1] += rgb[1];
        self.data[i + 2] += rgb[2];
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f32] {
        &mut self.data
    }

    /// Adds `other` pixel-wise; both images must have the same size.
    pub fn add(&mut self, other: &SkyImage) {
        assert_eq!((self.width, self.height), (other.width, other.height));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
    }

    pub fn clip_unit(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
    }

    pub fn max_value(&self) -> f32 {
        self.data.iter().copied().fold(f32::MIN, f32::max)
    }

    /// Channel mean per pixel.
    pub fn luminance(&self) -> Grid<f64> {
        let mut out = Vec::with_capacity(self.width * self.height);
        for px in self.data.chunks_exact(3) {
            out.push((px[0] as f64 + px[1] as f64 + px[2] as f64) / 3.0);
        }
        Grid::from_vec(self.width, self.height, out)
    }

    pub fn channel(&self, c: usize) -> Grid<f64> {
        Grid::from_vec(
            self.width,
            self.height,
            self.data
                .iter()
                .skip(c)
                .step_by(3)
                .map(|&v| v as f64)
                .collect(),
        )
    }

    /// Copies a `w`×`h` window whose origin may lie outside the image; out-of-range
    /// coordinates are mirrored (symmetric reflection, edge pixel repeated).
    pub fn crop_reflect(&self, x0: isize, y0: isize, w: usize, h: usize) -> SkyImage {
        let mut out = SkyImage::new(w, h);
        for y in 0..h {
            let sy = reflect_index(y0 + y as isize, self.height);
            for x in 0..w {
                let sx = reflect_index(x0 + x as isize, self.width);
                out.set_pixel(x, y, self.pixel(sx, sy));
            }
        }
        out.provenance = self.provenance.clone();
        out
    }

    /// Copies a window that lies inside the image.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> SkyImage {
        assert!(
            x0 + w <= self.width && y0 + h <= self.height,
            "crop out of bounds"
        );
        let mut data = Vec::with_capacity(w * h * 3);
        for y in y0..y0 + h {
            let start = (y * self.width + x0) * 3;
            data.extend_from_slice(&self.data[start..start + w * 3]);
        }
        SkyImage {
            width: w,
            height: h,
            data,
            provenance: self.provenance.clone(),
        }
    }

    /// Bilinear resampling to `w`×`h` (pixel-center aligned).
    pub fn resize_bilinear(&self, w: usize, h: usize) -> SkyImage {
        let mut out = SkyImage::new(w, h);
        let sx = self.width as f64 / w as f64;
        let sy = self.height as f64 / h as f64;
        for y in 0..h {
            let (y0, y1, fy) = bilinear_axis(y, sy, self.height);
            for x in 0..w {
                let (x0, x1, fx) = bilinear_axis(x, sx, self.width);
                let mut rgb = [0f32; 3];
                let (a, b, c, d) = (
                    self.pixel(x0, y0),
                    self.pixel(x1, y0),
                    self.pixel(x0, y1),
                    self.pixel(x1, y1),
                );
                for ch in 0..3 {
                    let top = a[ch] as f64 * (1.0 - fx) + b[ch] as f64 * fx;
                    let bot = c[ch] as f64 * (1.0 - fx) + d[ch] as f64 * fx;
                    rgb[ch] = (top * (1.0 - fy) + bot * fy) as f32;
                }
                out.set_pixel(x, y, rgb);
            }
        }
        out.provenance = self.provenance.clone();
        out
    }

    /// Writes a 16-bit RGB PNG.
    pub fn save_png16(&self, path: &Path) -> Result<()> {
        let buf: ImageBuffer<Rgb<u16>, Vec<u16>> = ImageBuffer::from_raw(
            self.width as u32,
            self.height as u32,
            self.data.iter().map(|&v| quantize_u16(v as f64)).collect(),
        )
        .expect("buffer size matches dimensions");
        buf.save(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Reads a PNG or TIFF (8/16-bit, gray or color) and maps it to [0, 1].
    pub fn load(path: &Path) -> Result<SkyImage> {
        let img = image::open(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
        let rgb = img.into_rgb32f();
        let (w, h) = (rgb.width() as usize, rgb.height() as usize);
        let data = rgb
            .into_raw()
            .into_iter()
            .map(|v| v.clamp(0.0, 1.0))
            .collect();
        let mut out = SkyImage::from_raw(w, h, data)?;
        out.provenance.instrument = Some(format!("file:{}", path.display()));
        Ok(out)
    }
}

#[inline]
pub fn quantize_u16(v: f64) -> u16 {
    (v.clamp(0.0, 1.0) * 65535.0).round() as u16
}

/// Mirrors an index into `0..n` (pattern `... 1 0 | 0 1 .. n-1 | n-1 n-2 ...`).
pub fn reflect_index(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m >= n { period - 1 - m } else { m }) as usize
}

fn bilinear_axis(i: usize, scale: f64, n: usize) -> (usize, usize, f64) {
    let src = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (n - 1) as f64);
    let i0 = src.floor() as usize;
    let i1 = (i0 + 1).min(n - 1);
    (i0, i1, src - i0 as f64)
}

/// Bilinear resampling of a scalar grid (pixel-center aligned).
pub fn resize_grid(grid: &Grid<f64>, w: usize, h: usize) -> Grid<f64> {
    let sx = grid.width() as f64 / w as f64;
    let sy = grid.height() as f64 / h as f64;
    Grid::from_fn(w, h, |x, y| {
        let (x0, x1, fx) = bilinear_axis(x, sx, grid.width());
        let (y0, y1, fy) = bilinear_axis(y, sy, grid.height());
        let top = grid.get(x0, y0) * (1.0 - fx) + grid.get(x1, y0) * fx;
        let bot = grid.get(x0, y1) * (1.0 - fx) + grid.get(x1, y1) * fx;
        top * (1.0 - fy) + bot * fy
    })
}

/// Min/max normalization constants written next to a grayscale export.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationSidecar {
    pub width: usize,
    pub height: usize,
    pub min: f64,
    pub max: f64,
}

/// Saves `grid` as a min-max normalized 16-bit grayscale PNG and returns the constants.
pub fn save_gray16_normalized(grid: &Grid<f64>, path: &Path) -> Result<NormalizationSidecar> {
    let (min, max) = grid
        .as_slice()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let (min, max) = if grid.is_empty() {
        (0.0, 0.0)
    } else {
        (min, max)
    };
    let span = max - min;
    let pixels: Vec<u16> = grid
        .as_slice()
        .iter()
        .map(|&v| {
            if span > 0.0 {
                quantize_u16((v - min) / span)
            } else {
                0
            }
        })
        .collect();
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(grid.width() as u32, grid.height() as u32, pixels)
            .expect("buffer size matches dimensions");
    buf.save(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(NormalizationSidecar {
        width: grid.width(),
        height: grid.height(),
        min,
        max,
    })
}
