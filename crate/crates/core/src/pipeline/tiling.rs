use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::sky_image::SkyImage;
use crate::synthgen::PATCH_SIZE;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slot {
    pub row: usize,
    pub col: usize,
    /// Top-left corner in image coordinates.
    pub x: usize,
    pub y: usize,
}

/// Patch layout over an image padded (right and bottom, by reflection) to a whole number of patches.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchGrid {
    pub width: usize,
    pub height: usize,
    pub patch_size: usize,
    pub overlap: usize,
    pub padded_width: usize,
    pub padded_height: usize,
    pub rows: usize,
    pub cols: usize,
    /// Row-major.
    pub slots: Vec<Slot>,
}

fn count_along(extent: usize, stride: usize) -> usize {
    if extent <= PATCH_SIZE {
        1
    } else {
        (extent - PATCH_SIZE).div_ceil(stride) + 1
    }
}

impl PatchGrid {
    pub fn new(width: usize, height: usize, overlap: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::domain("cannot tile an empty image"));
        }
        if overlap >= PATCH_SIZE {
            return Err(Error::config(format!(
                "overlap must be in [0, {}], got {overlap}",
                PATCH_SIZE - 1
            )));
        }
        let stride = PATCH_SIZE - overlap;
        let cols = count_along(width, stride);
        let rows = count_along(height, stride);
        let slots = (0..rows)
            .flat_map(|row| {
                (0..cols).map(move |col| Slot {
                    row,
                    col,
                    x: col * stride,
                    y: row * stride,
                })
            })
            .collect();
        Ok(PatchGrid {
            width,
            height,
            patch_size: PATCH_SIZE,
            overlap,
            padded_width: (cols - 1) * stride + PATCH_SIZE,
            padded_height: (rows - 1) * stride + PATCH_SIZE,
            rows,
            cols,
            slots,
        })
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn stride(&self) -> usize {
        self.patch_size - self.overlap
    }

    /// The 224×224 patch under `slot`, reflected past the image edges.
    pub fn patch(&self, image: &SkyImage, slot: usize) -> SkyImage {
        let s = self.slots[slot];
        image.crop_reflect(s.x as isize, s.y as isize, self.patch_size, self.patch_size)
    }

    /// Number of slots covering each padded pixel.
    pub fn coverage(&self) -> Grid<u32> {
        let mut g = Grid::filled(self.padded_width, self.padded_height, 0u32);
        for s in &self.slots {
            for y in s.y..s.y + self.patch_size {
                for x in s.x..s.x + self.patch_size {
                    *g.get_mut(x, y) += 1;
                }
            }
        }
        g
    }
}

pub fn tile(image: &SkyImage, overlap: usize) -> Result<PatchGrid> {
    PatchGrid::new(image.width(), image.height(), overlap)
}

/// Averages slot heatmaps into a frame-sized map. Unselected slots contribute
/// nothing; pixels no selected slot covers are 0.
pub fn stitch(heatmaps: &[(usize, &Grid<f64>)], grid: &PatchGrid) -> Result<Grid<f64>> {
    let ps = grid.patch_size;
    let mut sum = Grid::filled(grid.padded_width, grid.padded_height, 0.0f64);
    let mut count = Grid::filled(grid.padded_width, grid.padded_height, 0u32);
    let mut seen = vec![false; grid.len()];
    for &(slot, h) in heatmaps {
        if slot >= grid.len() {
            return Err(Error::domain(format!(
                "slot {slot} is outside the {}-slot grid",
                grid.len()
            )));
        }
        if seen[slot] {
            return Err(Error::domain(format!(
                "slot {slot} has more than one heatmap"
            )));
        }
        seen[slot] = true;
        if h.width() != ps || h.height() != ps {
            return Err(Error::domain(format!(
                "slot {slot} heatmap is {}x{}, expected {ps}x{ps}",
                h.width(),
                h.height()
            )));
        }
        let s = grid.slots[slot];
        for y in 0..ps {
            for x in 0..ps {
                *sum.get_mut(s.x + x, s.y + y) += h.get(x, y);
                *count.get_mut(s.x + x, s.y + y) += 1;
            }
        }
    }
    Ok(Grid::from_fn(grid.width, grid.height, |x, y| {
        let c = *count.get(x, y);
        if c == 0 {
            0.0
        } else {
            sum.get(x, y) / c as f64
        }
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slot_counts() {
        assert_eq!(PatchGrid::new(3584, 3584, 0).unwrap().len(), 256);
        assert_eq!(PatchGrid::new(224, 224, 0).unwrap().len(), 1);
        let g = PatchGrid::new(300, 300, 0).unwrap();
        assert_eq!((g.padded_width, g.padded_height, g.len()), (448, 448, 4));
        let g = PatchGrid::new(10, 500, 0).unwrap();
        assert_eq!((g.cols, g.rows, g.padded_width), (1, 3, 224));
    }

    #[test]
    fn overlap_shrinks_stride() {
        let g = PatchGrid::new(424, 224, 24).unwrap();
        assert_eq!(g.cols, 2);
        assert_eq!(g.slots[1].x, 200);
        assert_eq!(g.padded_width, 424);
        assert!(PatchGrid::new(100, 100, 224).is_err());
    }

    #[test]
    fn coverage_is_exact_without_overlap() {
        let g = PatchGrid::new(500, 230, 0).unwrap();
        assert!(g.coverage().as_slice().iter().all(|&c| c == 1));
        let g = PatchGrid::new(500, 230, 30).unwrap();
        assert!(g.coverage().as_slice().iter().all(|&c| c >= 1));
    }

    #[test]
    fn overlap_band_is_averaged() {
        let g = PatchGrid::new(424, 224, 24).unwrap();
        let a = Grid::filled(224, 224, 0.2);
        let b = Grid::filled(224, 224, 0.6);
        let s = stitch(&[(0, &a), (1, &b)], &g).unwrap();
        assert_eq!(*s.get(10, 5), 0.2);
        assert!((*s.get(210, 5) - 0.4).abs() < 1e-15);
        assert_eq!(*s.get(300, 5), 0.6);
    }

    #[test]
    fn single_slot_is_cropped() {
        let g = PatchGrid::new(100, 50, 0).unwrap();
        let h = Grid::from_fn(224, 224, |x, y| (x * 1000 + y) as f64);
        let s = stitch(&[(0, &h)], &g).unwrap();
        assert_eq!(s, h.crop(0, 0, 100, 50));
    }

    #[test]
    fn mismatched_heatmaps_are_rejected() {
        let g = PatchGrid::new(300, 300, 0).unwrap();
        let small = Grid::filled(10, 10, 0.0);
        assert!(matches!(stitch(&[(0, &small)], &g), Err(Error::Domain(_))));
        let ok = Grid::filled(224, 224, 0.0);
        assert!(stitch(&[(4, &ok)], &g).is_err());
        assert!(stitch(&[(1, &ok), (1, &ok)], &g).is_err());
    }

    #[test]
    fn patches_reflect_past_the_edge() {
        let img = SkyImage::from_raw(
            300,
            250,
            (0..300 * 250 * 3)
                .map(|i| (i % 251) as f32 / 251.0)
                .collect(),
        )
        .unwrap();
        let g = tile(&img, 0).unwrap();
        let p = g.patch(&img, 3);
        assert_eq!(p.pixel(0, 0), img.pixel(224, 224));
        assert_eq!(p.pixel(76, 0), img.pixel(299, 224));
        assert_eq!(p.pixel(77, 26), img.pixel(298, 249));
    }
}
