//! Row-major 2-D grids, binary masks and the morphology used on them.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

pub type Mask = Grid<bool>;

impl<T: Clone> Grid<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Grid {
            width,
            height,
            data: vec![value; width * height],
        }
    }
}

impl<T> Grid<T> {
    /// Wraps `data` laid out row-major. Panics if the length does not match.
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), width * height, "grid data length mismatch");
        Grid {
            width,
            height,
            data,
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Grid {
            width,
            height,
            data,
        }
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
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> &T {
        &self.data[y * self.width + x]
    }

    #[inline]
    pub fn get_mut(&mut self, x: usize, y: usize) -> &mut T {
        &mut self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: T) {
        self.data[y * self.width + x] = value;
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Grid<U> {
        Grid {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(f).collect(),
        }
    }
}

impl<T: Copy + Default> Grid<T> {
    /// Copies the `w`×`h` window at (`x0`, `y0`); the window must lie inside the grid.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Grid<T> {
        assert!(x0 + w <= self.width && y0 + h <= self.height);
        let mut out = Vec::with_capacity(w * h);
        for y in y0..y0 + h {
            out.extend_from_slice(&self.data[y * self.width + x0..y * self.width + x0 + w]);
        }
        Grid::from_vec(w, h, out)
    }
}

impl Mask {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn union_with(&mut self, other: &Mask) {
        assert_eq!((self.width, self.height), (other.width, other.height));
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a |= b;
        }
    }

    /// Bounding box as (x0, y0, x1, y1) with exclusive upper bounds.
    pub fn bounding_box(&self) -> Option<(usize, usize, usize, usize)> {
        let mut bbox: Option<(usize, usize, usize, usize)> = None;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.data[y * self.width + x] {
                    bbox = Some(match bbox {
                        None => (x, y, x + 1, y + 1),
                        Some((a, b, c, d)) => (a.min(x), b.min(y), c.max(x + 1), d.max(y + 1)),
                    });
                }
            }
        }
        bbox
    }

    /// Square erosion with radius `r` (window 2r+1). Pixels outside the grid count as unset.
    pub fn erode(&self, r: usize) -> Mask {
        self.square_filter(r, true)
    }

    /// Square dilation with radius `r` (window 2r+1).
    pub fn dilate(&self, r: usize) -> Mask {
        self.square_filter(r, false)
    }

    /// Morphological opening with a (2r+1)×(2r+1) square.
    pub fn open(&self, r: usize) -> Mask {
        self.erode(r).dilate(r)
    }

    fn square_filter(&self, r: usize, erode: bool) -> Mask {
        if r == 0 {
            return self.clone();
        }
        let (w, h) = (self.width, self.height);
        // Separable: horizontal pass then vertical pass, using running counts.
        let mut tmp = vec![false; w * h];
        for y in 0..h {
            let row = &self.data[y * w..(y + 1) * w];
            let mut prefix = vec![0usize; w + 1];
            for x in 0..w {
                prefix[x + 1] = prefix[x] + row[x] as usize;
            }
            for x in 0..w {
                let lo = x.saturating_sub(r);
                let hi = (x + r + 1).min(w);
                let set = prefix[hi] - prefix[lo];
                tmp[y * w + x] = if erode {
                    // window clipped at the border counts missing pixels as unset
                    set == 2 * r + 1
                } else {
                    set > 0
                };
            }
        }
        let mut out = vec![false; w * h];
        let mut prefix = vec![0usize; h + 1];
        for x in 0..w {
            for y in 0..h {
                prefix[y + 1] = prefix[y] + tmp[y * w + x] as usize;
            }
            for y in 0..h {
                let lo = y.saturating_sub(r);
                let hi = (y + r + 1).min(h);
                let set = prefix[hi] - prefix[lo];
                out[y * w + x] = if erode { set == 2 * r + 1 } else { set > 0 };
            }
        }
        Mask::from_vec(w, h, out)
    }
}

/// Connected-component labeling result: `labels` holds 0 for background and
/// 1..=count for components, numbered in raster order of their first pixel.
#[derive(Clone, Debug)]
pub struct Components {
    pub labels: Grid<u32>,
    pub sizes: Vec<usize>,
}

impl Components {
    pub fn count(&self) -> usize {
        self.sizes.len()
    }

    pub fn size(&self, label: u32) -> usize {
        self.sizes[label as usize - 1]
    }
}

/// 4-connected components of the set pixels.
pub fn connected_components(mask: &Mask) -> Components {
    let (w, h) = (mask.width, mask.height);
    let mut labels = Grid::filled(w, h, 0u32);
    let mut sizes = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !mask.data[start] || labels.data[start] != 0 {
            continue;
        }
        let label = sizes.len() as u32 + 1;
        let mut size = 0usize;
        labels.data[start] = label;
        stack.push(start);
        while let Some(i) = stack.pop() {
            size += 1;
            let (x, y) = (i % w, i / w);
            let mut visit = |j: usize| {
                if mask.data[j] && labels.data[j] == 0 {
                    labels.data[j] = label;
                    stack.push(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
        sizes.push(size);
    }
    Components { labels, sizes }
}

/// Value at fractional rank `p` in [0, 100] of `values` using linear
/// interpolation between order statistics. `values` must be non-empty.
pub fn percentile(values: &mut [f64], p: f64) -> f64 {
    assert!(!values.is_empty());
    values.sort_by(|a, b| a.total_cmp(b));
    let rank = (p / 100.0).clamp(0.0, 1.0) * (values.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    values[lo] + (values[hi] - values[lo]) * frac
}

/// Median of `values` (mean of the middle pair for even lengths).
pub fn median(values: &mut [f64]) -> f64 {
    percentile(values, 50.0)
}
