//! Batched NCHW kernels: convolution via im2col + GEMM, pooling, dense.

use serde::{Deserialize, Serialize};

/// `c = a · b + beta · c` for row-major `a` (m×k, or k×m when `ta`) and `b`
/// (k×n, or n×k when `tb`); `c` is m×n row-major.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    ta: bool,
    b: &[f64],
    tb: bool,
    beta: f64,
    c: &mut [f64],
) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the slices are at least as long as the strided extents checked above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub(crate) struct ConvGeom {
    pub in_c: usize,
    pub out_c: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeom {
    pub fn new(
        in_c: usize,
        out_c: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        in_h: usize,
        in_w: usize,
    ) -> Option<Self> {
        if stride == 0 || kernel == 0 || in_h + 2 * pad < kernel || in_w + 2 * pad < kernel {
            return None;
        }
        Some(ConvGeom {
            in_c,
            out_c,
            kernel,
            stride,
            pad,
            in_h,
            in_w,
            out_h: (in_h + 2 * pad - kernel) / stride + 1,
            out_w: (in_w + 2 * pad - kernel) / stride + 1,
        })
    }

    pub fn in_len(&self) -> usize {
        self.in_c * self.in_h * self.in_w
    }

    pub fn out_len(&self) -> usize {
        self.out_c * self.out_h * self.out_w
    }

    pub fn patch_len(&self) -> usize {
        self.in_c * self.kernel * self.kernel
    }

    pub fn positions(&self) -> usize {
        self.out_h * self.out_w
    }

    fn is_pointwise(&self) -> bool {
        self.kernel == 1 && self.stride == 1 && self.pad == 0
    }

    /// cols[(c·k·k + ky·k + kx) · P + oy·ow + ox] = x[c, oy·s − p + ky, ox·s − p + kx]
    fn im2col(&self, x: &[f64], cols: &mut [f64]) {
        let (k, s, p) = (self.kernel, self.stride, self.pad as isize);
        let (ow, oh) = (self.out_w, self.out_h);
        let npos = ow * oh;
        for c in 0..self.in_c {
            let plane = &x[c * self.in_h * self.in_w..(c + 1) * self.in_h * self.in_w];
            for ky in 0..k {
                for kx in 0..k {
                    let row = (c * k * k + ky * k + kx) * npos;
                    let dst = &mut cols[row..row + npos];
                    for oy in 0..oh {
                        let iy = (oy * s + ky) as isize - p;
                        let line = &mut dst[oy * ow..(oy + 1) * ow];
                        if iy < 0 || iy >= self.in_h as isize {
                            line.fill(0.0);
                            continue;
                        }
                        let src = &plane[iy as usize * self.in_w..(iy as usize + 1) * self.in_w];
                        for (ox, d) in line.iter_mut().enumerate() {
                            let ix = (ox * s + kx) as isize - p;
                            *d = if ix < 0 || ix >= self.in_w as isize {
                                0.0
                            } else {
                                src[ix as usize]
                            };
                        }
                    }
                }
            }
        }
    }

    fn col2im(&self, cols: &[f64], x: &mut [f64]) {
        let (k, s, p) = (self.kernel, self.stride, self.pad as isize);
        let (ow, oh) = (self.out_w, self.out_h);
        let npos = ow * oh;
        for c in 0..self.in_c {
            let plane = &mut x[c * self.in_h * self.in_w..(c + 1) * self.in_h * self.in_w];
            for ky in 0..k {
                for kx in 0..k {
                    let row = (c * k * k + ky * k + kx) * npos;
                    let src = &cols[row..row + npos];
                    for oy in 0..oh {
                        let iy = (oy * s + ky) as isize - p;
                        if iy < 0 || iy >= self.in_h as isize {
                            continue;
                        }
                        let line = &src[oy * ow..(oy + 1) * ow];
                        let dst =
                            &mut plane[iy as usize * self.in_w..(iy as usize + 1) * self.in_w];
                        for (ox, &v) in line.iter().enumerate() {
                            let ix = (ox * s + kx) as isize - p;
                            if ix >= 0 && ix < self.in_w as isize {
                                dst[ix as usize] += v;
                            }
                        }
                    }
                }
            }
        }
    }

    /// out[n] = W · im2col(x[n]) + b
    pub fn forward(
        &self,
        w: &[f64],
        b: &[f64],
        x: &[f64],
        n: usize,
        out: &mut [f64],
        scratch: &mut Vec<f64>,
    ) {
        let (kk, np, oc) = (self.patch_len(), self.positions(), self.out_c);
        for i in 0..n {
            let xi = &x[i * self.in_len()..(i + 1) * self.in_len()];
            let oi = &mut out[i * self.out_len()..(i + 1) * self.out_len()];
            for (o, row) in oi.chunks_exact_mut(np).enumerate() {
                row.fill(b[o]);
            }
            if self.is_pointwise() {
                gemm(oc, kk, np, w, false, xi, false, 1.0, oi);
            } else {
                scratch.resize(kk * np, 0.0);
                self.im2col(xi, scratch);
                gemm(oc, kk, np, w, false, scratch, false, 1.0, oi);
            }
        }
    }

    /// Accumulates weight/bias gradients (when given) and writes the input gradient (when given).
    #[allow(clippy::too_many_arguments)]
    pub fn backward(
        &self,
        w: &[f64],
        x: &[f64],
        grad_out: &[f64],
        n: usize,
        mut grad_in: Option<&mut [f64]>,
        mut grad_wb: Option<(&mut [f64], &mut [f64])>,
        scratch: &mut Vec<f64>,
    ) {
        let (kk, np, oc) = (self.patch_len(), self.positions(), self.out_c);
        for i in 0..n {
            let go = &grad_out[i * self.out_len()..(i + 1) * self.out_len()];
            if let Some((gw, gb)) = grad_wb.as_mut() {
                let xi = &x[i * self.in_len()..(i + 1) * self.in_len()];
                for (o, row) in go.chunks_exact(np).enumerate() {
                    gb[o] += row.iter().sum::<f64>();
                }
                if self.is_pointwise() {
                    gemm(oc, np, kk, go, false, xi, true, 1.0, gw);
                } else {
                    scratch.resize(kk * np, 0.0);
                    self.im2col(xi, scratch);
                    gemm(oc, np, kk, go, false, scratch, true, 1.0, gw);
                }
            }
            if let Some(gi) = grad_in.as_mut() {
                let gi = &mut gi[i * self.in_len()..(i + 1) * self.in_len()];
                if self.is_pointwise() {
                    gemm(kk, oc, np, w, true, go, false, 0.0, gi);
                } else {
                    scratch.resize(kk * np, 0.0);
                    gemm(kk, oc, np, w, true, go, false, 0.0, scratch);
                    gi.fill(0.0);
                    self.col2im(scratch, gi);
                }
            }
        }
    }
}

/// Non-overlapping `size`×`size` mean pooling over all planes.
pub(crate) fn avg_pool_forward(
    x: &[f64],
    planes: usize,
    h: usize,
    w: usize,
    size: usize,
    out: &mut [f64],
) {
    let (oh, ow) = (h / size, w / size);
    let inv = 1.0 / (size * size) as f64;
    for p in 0..planes {
        let src = &x[p * h * w..(p + 1) * h * w];
        let dst = &mut out[p * oh * ow..(p + 1) * oh * ow];
        dst.fill(0.0);
        for y in 0..oh * size {
            let row = &src[y * w..y * w + ow * size];
            let drow = &mut dst[(y / size) * ow..(y / size + 1) * ow];
            for (x, &v) in row.iter().enumerate() {
                drow[x / size] += v;
            }
        }
        for v in dst.iter_mut() {
            *v *= inv;
        }
    }
}

pub(crate) fn avg_pool_backward(
    grad_out: &[f64],
    planes: usize,
    h: usize,
    w: usize,
    size: usize,
    grad_in: &mut [f64],
) {
    let (oh, ow) = (h / size, w / size);
    let inv = 1.0 / (size * size) as f64;
    for p in 0..planes {
        let src = &grad_out[p * oh * ow..(p + 1) * oh * ow];
        let dst = &mut grad_in[p * h * w..(p + 1) * h * w];
        for y in 0..h {
            let drow = &mut dst[y * w..(y + 1) * w];
            if y >= oh * size {
                drow.fill(0.0);
                continue;
            }
            let srow = &src[(y / size) * ow..(y / size + 1) * ow];
            for (x, d) in drow.iter_mut().enumerate() {
                *d = if x < ow * size {
                    srow[x / size] * inv
                } else {
                    0.0
                };
            }
        }
    }
}
