//! Polygons on the pixel grid: rasterization, boundary tracing and validity checks.
//!
//! Coordinates follow the image convention: x to the right, y down, and pixel
//! (px, py) covering the unit square [px, px+1] × [py, py+1]. A pixel belongs to
//! a polygon when its center (px + 0.5, py + 0.5) is inside under the even-odd rule.

use serde::{Deserialize, Serialize};

use crate::grid::{Grid, Mask};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Polygon {
    pub points: Vec<[f64; 2]>,
}

impl Polygon {
    pub fn new(points: Vec<[f64; 2]>) -> Self {
        Polygon { points }
    }

    /// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
    pub fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Polygon::new(vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]])
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Unsigned shoelace area.
    pub fn area(&self) -> f64 {
        let n = self.points.len();
        if n < 3 {
            return 0.0;
        }
        let mut s = 0.0;
        for i in 0..n {
            let [x0, y0] = self.points[i];
            let [x1, y1] = self.points[(i + 1) % n];
            s += x0 * y1 - x1 * y0;
        }
        s.abs() / 2.0
    }

    /// (min_x, min_y, max_x, max_y) of the vertices.
    pub fn bounds(&self) -> Option<[f64; 4]> {
        if self.points.is_empty() {
            return None;
        }
        let mut b = [
            f64::INFINITY,
            f64::INFINITY,
            f64::NEG_INFINITY,
            f64::NEG_INFINITY,
        ];
        for &[x, y] in &self.points {
            b[0] = b[0].min(x);
            b[1] = b[1].min(y);
            b[2] = b[2].max(x);
            b[3] = b[3].max(y);
        }
        Some(b)
    }

    /// Even-odd point containment.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let n = self.points.len();
        let mut inside = false;
        for i in 0..n {
            let [x0, y0] = self.points[i];
            let [x1, y1] = self.points[(i + 1) % n];
            if (y0 <= y) != (y1 <= y) {
                let xi = x0 + (y - y0) * (x1 - x0) / (y1 - y0);
                if x < xi {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// Pixel-center scanline rasterization restricted to the window
    /// `[x0, x0+w) × [y0, y0+h)`; returns the mask of that window.
    pub fn rasterize_window(&self, x0: i64, y0: i64, w: usize, h: usize) -> Mask {
        let mut mask = Mask::filled(w, h, false);
        let n = self.points.len();
        if n < 3 {
            return mask;
        }
        let mut xs = Vec::new();
        for row in 0..h {
            let yc = (y0 + row as i64) as f64 + 0.5;
            xs.clear();
            for i in 0..n {
                let [ax, ay] = self.points[i];
                let [bx, by] = self.points[(i + 1) % n];
                if (ay <= yc) != (by <= yc) {
                    xs.push(ax + (yc - ay) * (bx - ax) / (by - ay));
                }
            }
            xs.sort_by(|a, b| a.total_cmp(b));
            for pair in xs.chunks_exact(2) {
                // pixel centers x + 0.5 in [pair[0], pair[1])
                let start = (pair[0] - 0.5).ceil() as i64;
                let end = (pair[1] - 0.5).ceil() as i64;
                let lo = start.max(x0);
                let hi = end.min(x0 + w as i64);
                for x in lo..hi {
                    mask.set((x - x0) as usize, row, true);
                }
            }
        }
        mask
    }

    /// Rasterizes onto a `width`×`height` image grid.
    pub fn rasterize(&self, width: usize, height: usize) -> Mask {
        self.rasterize_window(0, 0, width, height)
    }

    /// Integer pixel window `(x0, y0, w, h)` covering every pixel the polygon can touch.
    pub fn pixel_window(&self) -> Option<(i64, i64, usize, usize)> {
        let [a, b, c, d] = self.bounds()?;
        let x0 = a.floor() as i64;
        let y0 = b.floor() as i64;
        let x1 = c.ceil() as i64;
        let y1 = d.ceil() as i64;
        Some((x0, y0, (x1 - x0).max(0) as usize, (y1 - y0).max(0) as usize))
    }

    /// Rasterized pixel count.
    pub fn pixel_area(&self) -> usize {
        match self.pixel_window() {
            Some((x0, y0, w, h)) => self.rasterize_window(x0, y0, w, h).count(),
            None => 0,
        }
    }

    pub fn is_closed_ring(&self) -> bool {
        self.points.len() >= 3 && self.points.first() != self.points.last()
    }

    /// True when no two non-adjacent edges intersect and no vertex repeats.
    pub fn is_simple(&self) -> bool {
        let n = self.points.len();
        if n < 3 {
            return false;
        }
        for i in 0..n {
            for j in i + 1..n {
                if self.points[i] == self.points[j] {
                    return false;
                }
            }
        }
        for i in 0..n {
            let a = self.points[i];
            let b = self.points[(i + 1) % n];
            for j in i + 1..n {
                if j == i + 1 || (i == 0 && j == n - 1) {
                    continue;
                }
                let c = self.points[j];
                let d = self.points[(j + 1) % n];
                if segments_intersect(a, b, c, d) {
                    return false;
                }
            }
        }
        true
    }

    pub fn within_bounds(&self, width: usize, height: usize) -> bool {
        self.points
            .iter()
            .all(|&[x, y]| x >= 0.0 && y >= 0.0 && x <= width as f64 && y <= height as f64)
    }

    pub fn scaled(&self, sx: f64, sy: f64) -> Polygon {
        Polygon::new(self.points.iter().map(|&[x, y]| [x * sx, y * sy]).collect())
    }
}

fn orient(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn on_segment(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> bool {
    p[0] >= a[0].min(b[0])
        && p[0] <= a[0].max(b[0])
        && p[1] >= a[1].min(b[1])
        && p[1] <= a[1].max(b[1])
}

fn segments_intersect(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    let o1 = orient(a, b, c);
    let o2 = orient(a, b, d);
    let o3 = orient(c, d, a);
    let o4 = orient(c, d, b);
    if ((o1 > 0.0 && o2 < 0.0) || (o1 < 0.0 && o2 > 0.0))
        && ((o3 > 0.0 && o4 < 0.0) || (o3 < 0.0 && o4 > 0.0))
    {
        return true;
    }
    (o1 == 0.0 && on_segment(a, b, c))
        || (o2 == 0.0 && on_segment(a, b, d))
        || (o3 == 0.0 && on_segment(c, d, a))
        || (o4 == 0.0 && on_segment(c, d, b))
}

/// Pixel-count intersection over union of two polygons.
pub fn raster_iou(a: &Polygon, b: &Polygon) -> f64 {
    let (Some(wa), Some(wb)) = (a.pixel_window(), b.pixel_window()) else {
        return 0.0;
    };
    let x0 = wa.0.min(wb.0);
    let y0 = wa.1.min(wb.1);
    let x1 = (wa.0 + wa.2 as i64).max(wb.0 + wb.2 as i64);
    let y1 = (wa.1 + wa.3 as i64).max(wb.1 + wb.3 as i64);
    let (w, h) = ((x1 - x0) as usize, (y1 - y0) as usize);
    let ma = a.rasterize_window(x0, y0, w, h);
    let mb = b.rasterize_window(x0, y0, w, h);
    let mut inter = 0usize;
    let mut union = 0usize;
    for (&p, &q) in ma.as_slice().iter().zip(mb.as_slice()) {
        inter += (p && q) as usize;
        union += (p || q) as usize;
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

// Directions: 0 = east, 1 = south, 2 = west, 3 = north.
const DX: [i64; 4] = [1, 0, -1, 0];
const DY: [i64; 4] = [0, 1, 0, -1];

/// Traces the outer boundary of the 4-connected component `label` along pixel
/// edges. The start pixel must be the first pixel of the component in raster
/// order. Where the component touches itself only through a corner, the shared
/// vertex is pulled 0.25 px toward the pixel being wrapped so that the ring stays
/// simple; pixel-center rasterization of the result equals the filled component.
pub fn trace_outer_boundary(labels: &Grid<u32>, label: u32, start: (usize, usize)) -> Polygon {
    let (w, h) = (labels.width() as i64, labels.height() as i64);
    let inside = |x: i64, y: i64| {
        x >= 0 && y >= 0 && x < w && y < h && *labels.get(x as usize, y as usize) == label
    };

    // Walk with the component on the right-hand side (south of an eastward edge).
    let (sx, sy) = (start.0 as i64, start.1 as i64);
    let mut vx = sx;
    let mut vy = sy;
    let mut dir = 0usize;
    let mut points: Vec<[f64; 2]> = Vec::new();
    loop {
        // advance one edge
        vx += DX[dir];
        vy += DY[dir];
        // pixels ahead-left / ahead-right of vertex (vx, vy) when travelling `dir`
        let (al, ar) = ahead_pixels(vx, vy, dir);
        let al_in = inside(al.0, al.1);
        let ar_in = inside(ar.0, ar.1);
        let new_dir = if al_in && ar_in {
            (dir + 3) % 4
        } else if ar_in {
            dir
        } else {
            (dir + 1) % 4
        };
        if new_dir != dir {
            let mut p = [vx as f64, vy as f64];
            if al_in && !ar_in {
                // pinch: offset toward the pixel on the right (behind-right)
                let (rx, ry) = right_pixel(vx, vy, dir);
                p[0] += 0.25 * ((rx as f64 + 0.5) - vx as f64).signum();
                p[1] += 0.25 * ((ry as f64 + 0.5) - vy as f64).signum();
            }
            points.push(p);
        }
        dir = new_dir;
        if vx == sx && vy == sy && dir == 0 {
            break;
        }
    }
    // The start vertex (top-left corner of start pixel) is always a turn into east.
    Polygon::new(points)
}

/// Pixel cells ahead-left and ahead-right of vertex `(vx, vy)` when moving in `dir`.
fn ahead_pixels(vx: i64, vy: i64, dir: usize) -> ((i64, i64), (i64, i64)) {
    match dir {
        0 => ((vx, vy - 1), (vx, vy)),
        1 => ((vx, vy), (vx - 1, vy)),
        2 => ((vx - 1, vy), (vx - 1, vy - 1)),
        _ => ((vx - 1, vy - 1), (vx, vy - 1)),
    }
}

/// Pixel on the right of the edge that ended at `(vx, vy)` travelling `dir`.
fn right_pixel(vx: i64, vy: i64, dir: usize) -> (i64, i64) {
    match dir {
        0 => (vx - 1, vy),
        1 => (vx - 1, vy - 1),
        2 => (vx, vy - 1),
        _ => (vx, vy),
    }
}

/// One outer-boundary polygon per 4-connected component with at least `min_area` pixels,
/// in raster order of the components' first pixels. Returned with each component's label.
pub fn trace_components(
    labels: &Grid<u32>,
    sizes: &[usize],
    min_area: usize,
) -> Vec<(u32, Polygon)> {
    let mut first: Vec<Option<(usize, usize)>> = vec![None; sizes.len()];
    for y in 0..labels.height() {
        for x in 0..labels.width() {
            let l = *labels.get(x, y);
            if l != 0 && first[l as usize - 1].is_none() {
                first[l as usize - 1] = Some((x, y));
            }
        }
    }
    let mut out = Vec::new();
    for (i, start) in first.into_iter().enumerate() {
        if sizes[i] < min_area {
            continue;
        }
        if let Some(start) = start {
            let label = i as u32 + 1;
            out.push((label, trace_outer_boundary(labels, label, start)));
        }
    }
    out
}
