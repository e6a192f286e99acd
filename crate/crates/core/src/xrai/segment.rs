//! Felzenszwalb–Huttenlocher graph segmentation on luminance, at several scales.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::sky_image::SkyImage;

/// Luminance is scaled to 0–255 before segmenting, so scales follow the usual FH magnitudes.
const INTENSITY_SCALE: f64 = 255.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub scale_index: usize,
    /// Label within its scale's labeling.
    pub id: u32,
    /// Raster indices of member pixels, ascending.
    pub pixels: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SegmentSet {
    pub scales: Vec<f64>,
    /// One labeling per scale; ids run 0.. in raster order of first appearance.
    pub labelings: Vec<Grid<u32>>,
    /// Every segment of every scale.
    pub pool: Vec<Segment>,
}

impl SegmentSet {
    pub fn width(&self) -> usize {
        self.labelings[0].width()
    }

    pub fn height(&self) -> usize {
        self.labelings[0].height()
    }

    pub fn segment_count(&self, scale_index: usize) -> usize {
        self.pool
            .iter()
            .filter(|s| s.scale_index == scale_index)
            .count()
    }
}

struct DisjointSet {
    parent: Vec<u32>,
    size: Vec<u32>,
    internal: Vec<f64>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet {
            parent: (0..n as u32).collect(),
            size: vec![1; n],
            internal: vec![0.0; n],
        }
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let p = self.parent[x as usize];
            self.parent[x as usize] = self.parent[p as usize];
            x = p;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32, w: f64) -> u32 {
        let (big, small) = if self.size[a as usize] >= self.size[b as usize] {
            (a, b)
        } else {
            (b, a)
        };
        self.parent[small as usize] = big;
        self.size[big as usize] += self.size[small as usize];
        self.internal[big as usize] = w
            .max(self.internal[big as usize])
            .max(self.internal[small as usize]);
        big
    }
}

fn gaussian_blur(g: &Grid<f64>, sigma: f64) -> Grid<f64> {
    if sigma <= 0.0 {
        return g.clone();
    }
    let r = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-r..=r)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let norm: f64 = kernel.iter().sum();
    let (w, h) = (g.width(), g.height());
    let pass = |src: &Grid<f64>, horizontal: bool| {
        Grid::from_fn(w, h, |x, y| {
            let mut s = 0.0;
            for (k, kv) in kernel.iter().enumerate() {
                let d = k as isize - r;
                let (sx, sy) = if horizontal {
                    (crate::sky_image::reflect_index(x as isize + d, w), y)
                } else {
                    (x, crate::sky_image::reflect_index(y as isize + d, h))
                };
                s += kv * src.get(sx, sy);
            }
            s / norm
        })
    };
    pass(&pass(g, true), false)
}

/// FH segmentation of `lum` with threshold function τ(C) = k / |C|; components
/// smaller than `min_size` are then merged across their weakest edges.
pub fn felzenszwalb(lum: &Grid<f64>, k: f64, min_size: usize, sigma: f64) -> Grid<u32> {
    let (w, h) = (lum.width(), lum.height());
    let img = gaussian_blur(lum, sigma);
    let v = |x: usize, y: usize| img.get(x, y) * INTENSITY_SCALE;
    let mut edges: Vec<(f64, u32, u32)> = Vec::with_capacity(2 * w * h);
    for y in 0..h {
        for x in 0..w {
            let i = (y * w + x) as u32;
            if x + 1 < w {
                edges.push(((v(x, y) - v(x + 1, y)).abs(), i, i + 1));
            }
            if y + 1 < h {
                edges.push(((v(x, y) - v(x, y + 1)).abs(), i, i + w as u32));
            }
        }
    }
    edges.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut ds = DisjointSet::new(w * h);
    for &(wt, a, b) in &edges {
        let (ra, rb) = (ds.find(a), ds.find(b));
        if ra == rb {
            continue;
        }
        let ta = ds.internal[ra as usize] + k / ds.size[ra as usize] as f64;
        let tb = ds.internal[rb as usize] + k / ds.size[rb as usize] as f64;
        if wt <= ta.min(tb) {
            ds.union(ra, rb, wt);
        }
    }
    for &(wt, a, b) in &edges {
        let (ra, rb) = (ds.find(a), ds.find(b));
        if ra != rb
            && (ds.size[ra as usize] < min_size as u32 || ds.size[rb as usize] < min_size as u32)
        {
            ds.union(ra, rb, wt);
        }
    }
    let mut relabel = vec![u32::MAX; w * h];
    let mut next = 0u32;
    let mut out = vec![0u32; w * h];
    for (i, o) in out.iter_mut().enumerate() {
        let r = ds.find(i as u32) as usize;
        if relabel[r] == u32::MAX {
            relabel[r] = next;
            next += 1;
        }
        *o = relabel[r];
    }
    Grid::from_vec(w, h, out)
}

/// One FH labeling per scale on the patch luminance, plus the cross-scale segment pool.
pub fn segment_multiscale(
    patch: &SkyImage,
    scales: &[f64],
    area_floor: usize,
    sigma: f64,
) -> Result<SegmentSet> {
    if scales.is_empty() {
        return Err(Error::config("at least one segmentation scale is required"));
    }
    if let Some(s) = scales.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
        return Err(Error::config(format!(
            "segmentation scale must be finite and >= 0, got {s}"
        )));
    }
    if patch.width() == 0 || patch.height() == 0 {
        return Err(Error::domain("cannot segment an empty patch"));
    }
    let lum = patch.luminance();
    let mut labelings = Vec::with_capacity(scales.len());
    let mut pool = Vec::new();
    for (si, &k) in scales.iter().enumerate() {
        let labels = felzenszwalb(&lum, k, area_floor, sigma);
        let n = labels.as_slice().iter().max().map_or(0, |m| m + 1) as usize;
        let mut members: Vec<Vec<u32>> = vec![Vec::new(); n];
        for (i, &l) in labels.as_slice().iter().enumerate() {
            members[l as usize].push(i as u32);
        }
        pool.extend(members.into_iter().enumerate().map(|(id, pixels)| Segment {
            scale_index: si,
            id: id as u32,
            pixels,
        }));
        labelings.push(labels);
    }
    Ok(SegmentSet {
        scales: scales.to_vec(),
        labelings,
        pool,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{connected_components, Mask};

    #[test]
    fn uniform_patch_is_one_segment() {
        let img = SkyImage::filled(40, 30, [0.2, 0.3, 0.4]);
        for k in [1.0, 50.0, 500.0] {
            let s = segment_multiscale(&img, &[k], 20, 0.0).unwrap();
            assert_eq!(s.pool.len(), 1);
        }
    }

    #[test]
    fn half_planes_give_two_segments() {
        let mut img = SkyImage::filled(64, 48, [0.1; 3]);
        for y in 0..48 {
            for x in 32..64 {
                img.set_pixel(x, y, [0.6; 3]);
            }
        }
        for k in [10.0, 50.0, 200.0, 1000.0] {
            let s = segment_multiscale(&img, &[k], 20, 0.0).unwrap();
            assert_eq!(s.pool.len(), 2, "k = {k}");
        }
    }

    #[test]
    fn small_regions_are_merged() {
        let mut img = SkyImage::filled(30, 30, [0.1; 3]);
        img.set_pixel(10, 10, [0.9; 3]);
        let s = segment_multiscale(&img, &[1.0], 20, 0.0).unwrap();
        assert_eq!(s.pool.len(), 1);
        let s = segment_multiscale(&img, &[1.0], 1, 0.0).unwrap();
        assert_eq!(s.pool.len(), 2);
    }

    #[test]
    fn segments_are_connected() {
        let img = SkyImage::from_raw(
            32,
            32,
            (0..32 * 32 * 3)
                .map(|i| ((i / 3 * 7919) % 101) as f32 / 101.0)
                .collect(),
        )
        .unwrap();
        let s = segment_multiscale(&img, &[30.0, 300.0], 5, 0.0).unwrap();
        for seg in &s.pool {
            let l = &s.labelings[seg.scale_index];
            let m = Mask::from_fn(32, 32, |x, y| *l.get(x, y) == seg.id);
            assert_eq!(connected_components(&m).count(), 1);
            assert!(seg.pixels.len() >= 5);
        }
    }

    #[test]
    fn empty_scale_list_is_rejected() {
        assert!(segment_multiscale(&SkyImage::new(4, 4), &[], 1, 0.0).is_err());
    }
}
