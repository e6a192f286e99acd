use rand::Rng;
use rand_distr::StandardNormal;

use crate::seed::{derive_seed, rng_for};
use crate::sky_image::SkyImage;

const NOISE_BLOCK: usize = 32;

/// Adds Gaussian read noise to `img`, which holds the frame window whose
/// top-left pixel is (`x0`, `y0`). The noise value at a frame pixel does not
/// depend on the window it is rendered in.
pub(crate) fn add_read_noise(img: &mut SkyImage, x0: usize, y0: usize, sigma: f64, seed: u64) {
    if sigma <= 0.0 {
        return;
    }
    let (w, h) = (img.width(), img.height());
    let bx0 = x0 / NOISE_BLOCK;
    let by0 = y0 / NOISE_BLOCK;
    let bx1 = (x0 + w).div_ceil(NOISE_BLOCK);
    let by1 = (y0 + h).div_ceil(NOISE_BLOCK);
    let mut block = vec![0f32; NOISE_BLOCK * NOISE_BLOCK * 3];
    for by in by0..by1 {
        for bx in bx0..bx1 {
            let key = ((by as u64) << 32) | bx as u64;
            let mut rng = rng_for(seed, "read-noise", key);
            for v in block.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *v = (z * sigma) as f32;
            }
            for ly in 0..NOISE_BLOCK {
                let fy = by * NOISE_BLOCK + ly;
                if fy < y0 || fy >= y0 + h {
                    continue;
                }
                for lx in 0..NOISE_BLOCK {
                    let fx = bx * NOISE_BLOCK + lx;
                    if fx < x0 || fx >= x0 + w {
                        continue;
                    }
                    let i = (ly * NOISE_BLOCK + lx) * 3;
                    img.add_pixel(fx - x0, fy - y0, [block[i], block[i + 1], block[i + 2]]);
                }
            }
        }
    }
}

/// Smooth value noise in [0, 1] summed over octaves (each halving the cell size
/// and the amplitude), defined on the whole plane.
#[derive(Clone, Debug)]
pub(crate) struct OctaveNoise {
    seed: u64,
    cell: f64,
    octaves: u32,
}

impl OctaveNoise {
    pub fn new(seed: u64, cell: f64, octaves: u32) -> Self {
        OctaveNoise {
            seed,
            cell: cell.max(1.0),
            octaves: octaves.max(1),
        }
    }

    fn lattice(&self, octave: u32, ix: i64, iy: i64) -> f64 {
        let key = (ix as u64).wrapping_mul(0x9E37_79B9)
            ^ (iy as u64).wrapping_mul(0x85EB_CA6B).rotate_left(17);
        let h = derive_seed(self.seed, "lattice", key ^ ((octave as u64) << 56));
        (h >> 11) as f64 / (1u64 << 53) as f64
    }

    fn value(&self, octave: u32, x: f64, y: f64) -> f64 {
        let cell = self.cell / (1u64 << octave) as f64;
        let (u, v) = (x / cell, y / cell);
        let (ix, iy) = (u.floor(), v.floor());
        let (fx, fy) = (smoothstep(u - ix), smoothstep(v - iy));
        let (ix, iy) = (ix as i64, iy as i64);
        let a = self.lattice(octave, ix, iy);
        let b = self.lattice(octave, ix + 1, iy);
        let c = self.lattice(octave, ix, iy + 1);
        let d = self.lattice(octave, ix + 1, iy + 1);
        let top = a + (b - a) * fx;
        let bot = c + (d - c) * fx;
        top + (bot - top) * fy
    }

    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let mut sum = 0.0;
        let mut norm = 0.0;
        let mut amp = 1.0;
        for o in 0..self.octaves {
            sum += amp * self.value(o, x, y);
            norm += amp;
            amp *= 0.5;
        }
        sum / norm
    }
}

#[inline]
fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn read_noise_is_window_independent() {
        let mut full = SkyImage::new(100, 80);
        add_read_noise(&mut full, 0, 0, 0.01, 3);
        let mut part = SkyImage::new(30, 25);
        add_read_noise(&mut part, 41, 37, 0.01, 3);
        for y in 0..25 {
            for x in 0..30 {
                assert_eq!(part.pixel(x, y), full.pixel(x + 41, y + 37));
            }
        }
    }

    #[test]
    fn octave_noise_is_bounded_and_continuous() {
        let n = OctaveNoise::new(9, 12.0, 3);
        for i in 0..500 {
            let x = i as f64 * 0.37;
            let v = n.sample(x, 2.0 * x);
            assert!((0.0..=1.0).contains(&v));
            let dv = (n.sample(x + 1e-4, 2.0 * x) - v).abs();
            assert!(dv < 1e-3);
        }
    }
}
