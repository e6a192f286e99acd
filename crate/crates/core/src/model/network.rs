//! Architecture descriptor, parameters, and batched forward/backward passes.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::ops::{avg_pool_backward, avg_pool_forward, gemm, ConvGeom};
use super::TrainingConfig;
use crate::error::{Error, Result};
use crate::seed::rng_for;
use crate::synthgen::{Label, PATCH_SIZE};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv {
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    Relu,
    /// Non-overlapping mean pooling.
    AvgPool {
        size: usize,
    },
    /// Two 3×3 convolutions with a ReLU between, plus an identity or 1×1
    /// projection shortcut, followed by a ReLU.
    Residual {
        out_channels: usize,
        stride: usize,
    },
    GlobalAvgPool,
    /// Fully connected over the flattened input.
    Dense {
        out_features: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    /// (channels, height, width)
    pub input_shape: [usize; 3],
    pub layers: Vec<LayerSpec>,
}

impl Architecture {
    /// Small residual CNN: 3 residual blocks of 16/32/64 channels, GAP, one logit.
    pub fn desk_scale() -> Self {
        Architecture {
            input_shape: [3, PATCH_SIZE, PATCH_SIZE],
            layers: vec![
                LayerSpec::AvgPool { size: 2 },
                LayerSpec::Conv {
                    out_channels: 16,
                    kernel: 3,
                    stride: 2,
                    padding: 1,
                },
                LayerSpec::Relu,
                LayerSpec::Residual {
                    out_channels: 16,
                    stride: 2,
                },
                LayerSpec::Residual {
                    out_channels: 32,
                    stride: 2,
                },
                LayerSpec::Residual {
                    out_channels: 64,
                    stride: 2,
                },
                LayerSpec::GlobalAvgPool,
                LayerSpec::Dense { out_features: 1 },
            ],
        }
    }

    /// A single dense layer: F(x) = w·x + b.
    pub fn linear(input_shape: [usize; 3]) -> Self {
        Architecture {
            input_shape,
            layers: vec![LayerSpec::Dense { out_features: 1 }],
        }
    }

    pub fn input_len(&self) -> usize {
        self.input_shape.iter().product()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Clone, Copy, Debug)]
struct Dense {
    inputs: usize,
    outputs: usize,
}

#[derive(Clone, Copy, Debug)]
enum Op {
    Conv {
        g: ConvGeom,
        w: usize,
    },
    Relu,
    AvgPool {
        size: usize,
        planes: usize,
        h: usize,
        w: usize,
    },
    Residual {
        c1: ConvGeom,
        w1: usize,
        c2: ConvGeom,
        w2: usize,
        short: Option<(ConvGeom, usize)>,
    },
    Gap {
        planes: usize,
        hw: usize,
    },
    Dense {
        d: Dense,
        w: usize,
    },
}

/// Parameter tensors come in (weight, bias) pairs; `w` indexes the weight and `w + 1` the bias.
fn compile(arch: &Architecture) -> Result<(Vec<Op>, Vec<Tensor>, usize)> {
    let [mut c, mut h, mut w] = arch.input_shape;
    if c * h * w == 0 {
        return Err(Error::config("input shape must be non-empty"));
    }
    let mut ops = Vec::new();
    let mut tensors: Vec<Tensor> = Vec::new();
    let push_pair =
        |name: String, wshape: Vec<usize>, outputs: usize, tensors: &mut Vec<Tensor>| {
            let idx = tensors.len();
            let n = wshape.iter().product();
            tensors.push(Tensor {
                name: format!("{name}.weight"),
                shape: wshape,
                data: vec![0.0; n],
            });
            tensors.push(Tensor {
                name: format!("{name}.bias"),
                shape: vec![outputs],
                data: vec![0.0; outputs],
            });
            idx
        };
    for (i, layer) in arch.layers.iter().enumerate() {
        match *layer {
            LayerSpec::Conv {
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                let g = ConvGeom::new(c, out_channels, kernel, stride, padding, h, w)
                    .ok_or_else(|| bad(i, c, h, w))?;
                if out_channels == 0 {
                    return Err(bad(i, c, h, w));
                }
                let wi = push_pair(
                    format!("l{i}.conv"),
                    vec![out_channels, c, kernel, kernel],
                    out_channels,
                    &mut tensors,
                );
                ops.push(Op::Conv { g, w: wi });
                (c, h, w) = (out_channels, g.out_h, g.out_w);
            }
            LayerSpec::Relu => ops.push(Op::Relu),
            LayerSpec::AvgPool { size } => {
                if size == 0 || h < size || w < size {
                    return Err(bad(i, c, h, w));
                }
                ops.push(Op::AvgPool {
                    size,
                    planes: c,
                    h,
                    w,
                });
                (h, w) = (h / size, w / size);
            }
            LayerSpec::Residual {
                out_channels,
                stride,
            } => {
                let c1 = ConvGeom::new(c, out_channels, 3, stride, 1, h, w)
                    .ok_or_else(|| bad(i, c, h, w))?;
                if out_channels == 0 {
                    return Err(bad(i, c, h, w));
                }
                let c2 = ConvGeom::new(out_channels, out_channels, 3, 1, 1, c1.out_h, c1.out_w)
                    .ok_or_else(|| bad(i, c, h, w))?;
                let w1 = push_pair(
                    format!("l{i}.conv1"),
                    vec![out_channels, c, 3, 3],
                    out_channels,
                    &mut tensors,
                );
                let w2 = push_pair(
                    format!("l{i}.conv2"),
                    vec![out_channels, out_channels, 3, 3],
                    out_channels,
                    &mut tensors,
                );
                let short = if out_channels != c || stride != 1 {
                    let g = ConvGeom::new(c, out_channels, 1, stride, 0, h, w)
                        .ok_or_else(|| bad(i, c, h, w))?;
                    debug_assert_eq!((g.out_h, g.out_w), (c1.out_h, c1.out_w));
                    Some((
                        g,
                        push_pair(
                            format!("l{i}.shortcut"),
                            vec![out_channels, c, 1, 1],
                            out_channels,
                            &mut tensors,
                        ),
                    ))
                } else {
                    None
                };
                ops.push(Op::Residual {
                    c1,
                    w1,
                    c2,
                    w2,
                    short,
                });
                (c, h, w) = (out_channels, c1.out_h, c1.out_w);
            }
            LayerSpec::GlobalAvgPool => {
                ops.push(Op::Gap {
                    planes: c,
                    hw: h * w,
                });
                (h, w) = (1, 1);
            }
            LayerSpec::Dense { out_features } => {
                if out_features == 0 {
                    return Err(bad(i, c, h, w));
                }
                let inputs = c * h * w;
                let wi = push_pair(
                    format!("l{i}.dense"),
                    vec![out_features, inputs],
                    out_features,
                    &mut tensors,
                );
                ops.push(Op::Dense {
                    d: Dense {
                        inputs,
                        outputs: out_features,
                    },
                    w: wi,
                });
                (c, h, w) = (out_features, 1, 1);
            }
        }
    }
    let out_len = c * h * w;
    if out_len != 1 {
        return Err(Error::config(format!(
            "architecture must end in a single logit, got {out_len} outputs"
        )));
    }
    Ok((ops, tensors, out_len))
}

fn bad(i: usize, c: usize, h: usize, w: usize) -> Error {
    Error::config(format!("layer {i}: incompatible with input {c}x{h}x{w}"))
}

/// Architecture plus weights. Immutable after training; all inference methods take `&self`.
#[derive(Clone, Debug)]
pub struct ModelParams {
    architecture: Architecture,
    ops: Vec<Op>,
    tensors: Vec<Tensor>,
    pub training: Option<TrainingConfig>,
}

impl PartialEq for ModelParams {
    fn eq(&self, other: &Self) -> bool {
        self.architecture == other.architecture
            && self.tensors == other.tensors
            && self.training == other.training
    }
}

/// Activations recorded by a forward pass. `acts[i]` is the input of stage i.
pub(crate) struct Trace {
    n: usize,
    acts: Vec<Vec<f64>>,
    mids: Vec<Vec<f64>>,
}

impl Trace {
    pub fn logits(&self) -> &[f64] {
        self.acts.last().expect("trace has an output")
    }
}

impl ModelParams {
    /// He-initialized parameters; the final dense layer uses unit-variance fan-in scaling.
    pub fn new(architecture: Architecture, seed: u64) -> Result<Self> {
        let (ops, mut tensors, _) = compile(&architecture)?;
        let mut rng = rng_for(seed, "init", 0);
        let last_dense = ops.iter().rposition(|o| matches!(o, Op::Dense { .. }));
        for (k, op) in ops.iter().enumerate() {
            let mut init = |idx: usize, fan_in: usize, gain: f64| {
                let std = (gain / fan_in as f64).sqrt();
                for v in tensors[idx].data.iter_mut() {
                    let z: f64 = rng.sample(StandardNormal);
                    *v = z * std;
                }
            };
            match *op {
                Op::Conv { g, w } => init(w, g.patch_len(), 2.0),
                Op::Residual {
                    c1,
                    w1,
                    c2,
                    w2,
                    short,
                } => {
                    init(w1, c1.patch_len(), 2.0);
                    init(w2, c2.patch_len(), 2.0);
                    if let Some((g, ws)) = short {
                        init(ws, g.patch_len(), 2.0);
                    }
                }
                Op::Dense { d, w } => {
                    init(w, d.inputs, if Some(k) == last_dense { 1.0 } else { 2.0 })
                }
                _ => {}
            }
        }
        Ok(ModelParams {
            architecture,
            ops,
            tensors,
            training: None,
        })
    }

    /// Rebuilds parameters from stored tensors, checking names and shapes.
    pub fn from_tensors(
        architecture: Architecture,
        tensors: Vec<Tensor>,
        training: Option<TrainingConfig>,
    ) -> Result<Self> {
        let (ops, expected, _) = compile(&architecture)?;
        if expected.len() != tensors.len() {
            return Err(Error::config(format!(
                "expected {} tensors, got {}",
                expected.len(),
                tensors.len()
            )));
        }
        for (e, t) in expected.iter().zip(&tensors) {
            if e.name != t.name || e.shape != t.shape || t.data.len() != e.data.len() {
                return Err(Error::config(format!(
                    "tensor {} does not match the architecture",
                    t.name
                )));
            }
        }
        Ok(ModelParams {
            architecture,
            ops,
            tensors,
            training,
        })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.architecture
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn param_count(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn input_len(&self) -> usize {
        self.architecture.input_len()
    }

    /// Multiplies the last layer's weights and bias by `alpha`, scaling the logit by `alpha`.
    pub fn scale_output(&mut self, alpha: f64) {
        let n = self.tensors.len();
        for t in &mut self.tensors[n - 2..] {
            t.data.iter_mut().for_each(|v| *v *= alpha);
        }
    }

    fn check_batch(&self, x: &[f64], n: usize) -> Result<()> {
        let len = self.input_len();
        if n == 0 || x.len() != n * len {
            let [c, h, w] = self.architecture.input_shape;
            return Err(Error::domain(format!(
                "expected {n} input(s) of shape {c}x{h}x{w} ({} values), got {} values",
                n * len,
                x.len()
            )));
        }
        Ok(())
    }

    fn check_one(&self, x: &[f64]) -> Result<()> {
        self.check_batch(x, 1)
    }

    pub(crate) fn forward_trace(&self, x: &[f64], n: usize) -> Trace {
        let mut acts = Vec::with_capacity(self.ops.len() + 1);
        let mut mids = Vec::with_capacity(self.ops.len());
        acts.push(x.to_vec());
        let mut scratch = Vec::new();
        for op in &self.ops {
            let input = acts.last().expect("input");
            let mut mid = Vec::new();
            let out = match *op {
                Op::Conv { g, w } => {
                    let mut out = vec![0.0; n * g.out_len()];
                    g.forward(
                        &self.tensors[w].data,
                        &self.tensors[w + 1].data,
                        input,
                        n,
                        &mut out,
                        &mut scratch,
                    );
                    out
                }
                Op::Relu => input.iter().map(|&v| v.max(0.0)).collect(),
                Op::AvgPool { size, planes, h, w } => {
                    let mut out = vec![0.0; n * planes * (h / size) * (w / size)];
                    avg_pool_forward(input, n * planes, h, w, size, &mut out);
                    out
                }
                Op::Residual {
                    c1,
                    w1,
                    c2,
                    w2,
                    short,
                } => {
                    let mut h1 = vec![0.0; n * c1.out_len()];
                    c1.forward(
                        &self.tensors[w1].data,
                        &self.tensors[w1 + 1].data,
                        input,
                        n,
                        &mut h1,
                        &mut scratch,
                    );
                    h1.iter_mut().for_each(|v| *v = v.max(0.0));
                    let mut out = vec![0.0; n * c2.out_len()];
                    c2.forward(
                        &self.tensors[w2].data,
                        &self.tensors[w2 + 1].data,
                        &h1,
                        n,
                        &mut out,
                        &mut scratch,
                    );
                    match short {
                        Some((g, ws)) => {
                            let mut s = vec![0.0; n * g.out_len()];
                            g.forward(
                                &self.tensors[ws].data,
                                &self.tensors[ws + 1].data,
                                input,
                                n,
                                &mut s,
                                &mut scratch,
                            );
                            out.iter_mut().zip(&s).for_each(|(o, s)| *o += s);
                        }
                        None => out.iter_mut().zip(input.iter()).for_each(|(o, s)| *o += s),
                    }
                    out.iter_mut().for_each(|v| *v = v.max(0.0));
                    mid = h1;
                    out
                }
                Op::Gap { planes, hw } => input
                    .chunks_exact(hw)
                    .take(n * planes)
                    .map(|p| p.iter().sum::<f64>() / hw as f64)
                    .collect(),
                Op::Dense { d, w } => {
                    let mut out = vec![0.0; n * d.outputs];
                    for row in out.chunks_exact_mut(d.outputs) {
                        row.copy_from_slice(&self.tensors[w + 1].data);
                    }
                    gemm(
                        n,
                        d.inputs,
                        d.outputs,
                        input,
                        false,
                        &self.tensors[w].data,
                        true,
                        1.0,
                        &mut out,
                    );
                    out
                }
            };
            mids.push(mid);
            acts.push(out);
        }
        Trace { n, acts, mids }
    }

    /// Backpropagates `grad_out` (d loss / d logit per sample). Returns parameter
    /// gradients when `param_grads`, and the input gradient when `input_grad`.
    pub(crate) fn backward(
        &self,
        trace: &Trace,
        grad_out: &[f64],
        param_grads: bool,
        input_grad: bool,
    ) -> (Option<Vec<Vec<f64>>>, Option<Vec<f64>>) {
        let n = trace.n;
        let mut pg: Option<Vec<Vec<f64>>> = param_grads.then(|| {
            self.tensors
                .iter()
                .map(|t| vec![0.0; t.data.len()])
                .collect()
        });
        let mut g = grad_out.to_vec();
        let mut scratch = Vec::new();
        for (i, op) in self.ops.iter().enumerate().rev() {
            let x = &trace.acts[i];
            let y = &trace.acts[i + 1];
            let need_in = i > 0 || input_grad;
            if !need_in && pg.is_none() {
                break;
            }
            g = match *op {
                Op::Conv { g: geom, w } => {
                    let mut gi = vec![0.0; if need_in { x.len() } else { 0 }];
                    let wb = pg.as_mut().map(|p| split_pair(p, w));
                    geom.backward(
                        &self.tensors[w].data,
                        x,
                        &g,
                        n,
                        need_in.then_some(&mut gi[..]),
                        wb,
                        &mut scratch,
                    );
                    gi
                }
                Op::Relu => g
                    .iter()
                    .zip(y)
                    .map(|(&g, &y)| if y > 0.0 { g } else { 0.0 })
                    .collect(),
                Op::AvgPool { size, planes, h, w } => {
                    let mut gi = vec![0.0; x.len()];
                    avg_pool_backward(&g, n * planes, h, w, size, &mut gi);
                    gi
                }
                Op::Residual {
                    c1,
                    w1,
                    c2,
                    w2,
                    short,
                } => {
                    let h1 = &trace.mids[i];
                    let gs: Vec<f64> = g
                        .iter()
                        .zip(y)
                        .map(|(&g, &y)| if y > 0.0 { g } else { 0.0 })
                        .collect();
                    let mut gh = vec![0.0; h1.len()];
                    let wb = pg.as_mut().map(|p| split_pair(p, w2));
                    c2.backward(
                        &self.tensors[w2].data,
                        h1,
                        &gs,
                        n,
                        Some(&mut gh),
                        wb,
                        &mut scratch,
                    );
                    gh.iter_mut().zip(h1).for_each(|(g, &h)| {
                        if h <= 0.0 {
                            *g = 0.0
                        }
                    });
                    let mut gi = vec![0.0; if need_in { x.len() } else { 0 }];
                    let wb = pg.as_mut().map(|p| split_pair(p, w1));
                    c1.backward(
                        &self.tensors[w1].data,
                        x,
                        &gh,
                        n,
                        need_in.then_some(&mut gi[..]),
                        wb,
                        &mut scratch,
                    );
                    match short {
                        Some((geom, ws)) => {
                            let mut gsi = vec![0.0; if need_in { x.len() } else { 0 }];
                            let wb = pg.as_mut().map(|p| split_pair(p, ws));
                            geom.backward(
                                &self.tensors[ws].data,
                                x,
                                &gs,
                                n,
                                need_in.then_some(&mut gsi[..]),
                                wb,
                                &mut scratch,
                            );
                            gi.iter_mut().zip(&gsi).for_each(|(a, b)| *a += b);
                        }
                        None => {
                            if need_in {
                                gi.iter_mut().zip(&gs).for_each(|(a, b)| *a += b);
                            }
                        }
                    }
                    gi
                }
                Op::Gap { planes, hw } => {
                    let mut gi = vec![0.0; n * planes * hw];
                    for (plane, &gv) in gi.chunks_exact_mut(hw).zip(&g) {
                        plane.fill(gv / hw as f64);
                    }
                    gi
                }
                Op::Dense { d, w } => {
                    if let Some(p) = pg.as_mut() {
                        let (gw, gb) = split_pair(p, w);
                        gemm(d.outputs, n, d.inputs, &g, true, x, false, 1.0, gw);
                        for row in g.chunks_exact(d.outputs) {
                            gb.iter_mut().zip(row).for_each(|(b, r)| *b += r);
                        }
                    }
                    let mut gi = vec![0.0; if need_in { n * d.inputs } else { 0 }];
                    if need_in {
                        gemm(
                            n,
                            d.outputs,
                            d.inputs,
                            &g,
                            false,
                            &self.tensors[w].data,
                            false,
                            0.0,
                            &mut gi,
                        );
                    }
                    gi
                }
            };
        }
        (pg, input_grad.then_some(g))
    }

    /// Logits of a batch of `n` CHW inputs.
    pub fn logits_batch(&self, x: &[f64], n: usize) -> Result<Vec<f64>> {
        self.check_batch(x, n)?;
        Ok(self.forward_trace(x, n).logits().to_vec())
    }

    /// Logits and d logit / d input for a batch of `n` CHW inputs.
    pub fn logit_gradients_batch(&self, x: &[f64], n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_batch(x, n)?;
        let trace = self.forward_trace(x, n);
        let logits = trace.logits().to_vec();
        let (_, gi) = self.backward(&trace, &vec![1.0; n], false, true);
        Ok((logits, gi.expect("input gradient requested")))
    }

    /// Pre-sigmoid score of one CHW input.
    pub fn logit(&self, x: &[f64]) -> Result<f64> {
        self.check_one(x)?;
        Ok(self.forward_trace(x, 1).logits()[0])
    }

    /// P(dso_present) for one CHW input.
    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        Ok(sigmoid(self.logit(x)?))
    }

    /// Gradient of the target class score with respect to each input value (CHW).
    /// The score is the logit for `DsoPresent` and its negation for `DsoAbsent`.
    pub fn input_gradient(&self, x: &[f64], target: Label) -> Result<Vec<f64>> {
        let (_, mut g) = self.logit_gradients_batch(x, 1)?;
        if target == Label::DsoAbsent {
            g.iter_mut().for_each(|v| *v = -*v);
        }
        Ok(g)
    }

    /// Mean BCE-with-logits over the batch, its parameter gradients, and the logits.
    pub(crate) fn loss_and_grads(
        &self,
        x: &[f64],
        targets: &[f64],
    ) -> (f64, Vec<Vec<f64>>, Vec<f64>) {
        let n = targets.len();
        let trace = self.forward_trace(x, n);
        let z = trace.logits().to_vec();
        let mut loss = 0.0;
        let grad: Vec<f64> = z
            .iter()
            .zip(targets)
            .map(|(&z, &t)| {
                loss += z.max(0.0) - z * t + (-z.abs()).exp().ln_1p();
                (sigmoid(z) - t) / n as f64
            })
            .collect();
        let (pg, _) = self.backward(&trace, &grad, true, false);
        (
            loss / n as f64,
            pg.expect("parameter gradients requested"),
            z,
        )
    }
}

fn split_pair(p: &mut [Vec<f64>], w: usize) -> (&mut [f64], &mut [f64]) {
    let (a, b) = p[w..w + 2].split_at_mut(1);
    (&mut a[0][..], &mut b[0][..])
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Architecture {
        Architecture {
            input_shape: [3, 12, 12],
            layers: vec![
                LayerSpec::AvgPool { size: 2 },
                LayerSpec::Conv {
                    out_channels: 4,
                    kernel: 3,
                    stride: 1,
                    padding: 1,
                },
                LayerSpec::Relu,
                LayerSpec::Residual {
                    out_channels: 4,
                    stride: 1,
                },
                LayerSpec::Residual {
                    out_channels: 6,
                    stride: 2,
                },
                LayerSpec::GlobalAvgPool,
                LayerSpec::Dense { out_features: 3 },
                LayerSpec::Relu,
                LayerSpec::Dense { out_features: 1 },
            ],
        }
    }

    fn input(n: usize, len: usize, k: u64) -> Vec<f64> {
        (0..n * len)
            .map(|i| (((i as u64 + 1) * 2654435761 + k) % 1000) as f64 / 1000.0)
            .collect()
    }

    #[test]
    fn desk_scale_parameter_count_is_stable() {
        let a = ModelParams::new(Architecture::desk_scale(), 1).unwrap();
        let b = ModelParams::new(Architecture::desk_scale(), 2).unwrap();
        assert_eq!(a.param_count(), b.param_count());
        let expect = (16 * 27 + 16)
            + 2 * (16 * 144 + 16)
            + (16 * 16 + 16)
            + (32 * 144 + 32)
            + (32 * 288 + 32)
            + (32 * 16 + 32)
            + (64 * 288 + 64)
            + (64 * 576 + 64)
            + (64 * 32 + 64)
            + 65;
        assert_eq!(a.param_count(), expect);
    }

    #[test]
    fn descriptor_must_end_in_one_logit() {
        let mut arch = tiny();
        arch.layers.pop();
        assert!(ModelParams::new(arch, 0).is_err());
    }

    #[test]
    fn wrong_shape_is_a_domain_error() {
        let m = ModelParams::new(tiny(), 0).unwrap();
        assert!(matches!(m.forward(&[0.5; 10]), Err(Error::Domain(_))));
    }

    #[test]
    fn batch_logits_equal_single_logits() {
        let m = ModelParams::new(tiny(), 3).unwrap();
        let len = m.input_len();
        let x = input(3, len, 7);
        let batch = m.logits_batch(&x, 3).unwrap();
        for i in 0..3 {
            assert_eq!(
                batch[i].to_bits(),
                m.logit(&x[i * len..(i + 1) * len]).unwrap().to_bits()
            );
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let m = ModelParams::new(tiny(), 5).unwrap();
        let len = m.input_len();
        let x = input(1, len, 11);
        let g = m.input_gradient(&x, Label::DsoPresent).unwrap();
        let h = 1e-5;
        for i in (0..len).step_by(17) {
            let mut xp = x.clone();
            xp[i] += h;
            let mut xm = x.clone();
            xm[i] -= h;
            let fd = (m.logit(&xp).unwrap() - m.logit(&xm).unwrap()) / (2.0 * h);
            assert!(
                (fd - g[i]).abs() < 1e-6 * (1.0 + fd.abs()),
                "{i}: {fd} vs {}",
                g[i]
            );
        }
        let neg = m.input_gradient(&x, Label::DsoAbsent).unwrap();
        assert!(neg.iter().zip(&g).all(|(a, b)| *a == -*b));
    }

    #[test]
    fn parameter_gradients_match_finite_differences() {
        let m = ModelParams::new(tiny(), 9).unwrap();
        let len = m.input_len();
        let x = input(2, len, 5);
        let t = [1.0, 0.0];
        let (_, pg, _) = m.loss_and_grads(&x, &t);
        let h = 1e-6;
        for (ti, tensor) in m.tensors.iter().enumerate() {
            for j in (0..tensor.data.len()).step_by(7).take(6) {
                let mut mp = m.clone();
                mp.tensors[ti].data[j] += h;
                let mut mm = m.clone();
                mm.tensors[ti].data[j] -= h;
                let fd = (mp.loss_and_grads(&x, &t).0 - mm.loss_and_grads(&x, &t).0) / (2.0 * h);
                assert!(
                    (fd - pg[ti][j]).abs() < 1e-6 * (1.0 + fd.abs()),
                    "{} {j}: {fd} vs {}",
                    tensor.name,
                    pg[ti][j]
                );
            }
        }
    }

    #[test]
    fn linear_model_gradient_is_its_weights() {
        let m = ModelParams::new(Architecture::linear([3, 8, 8]), 4).unwrap();
        let x = input(1, 192, 1);
        let g = m.input_gradient(&x, Label::DsoPresent).unwrap();
        assert_eq!(g, m.tensors()[0].data);
    }

    #[test]
    fn zero_final_layer_gives_half_and_zero_gradient() {
        let mut m = ModelParams::new(tiny(), 2).unwrap();
        m.scale_output(0.0);
        let x = input(1, m.input_len(), 3);
        assert_eq!(m.forward(&x).unwrap(), 0.5);
        assert!(m
            .input_gradient(&x, Label::DsoPresent)
            .unwrap()
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-1000.0) >= 0.0 && sigmoid(1000.0) <= 1.0);
        assert!((sigmoid(2.0) + sigmoid(-2.0) - 1.0).abs() < 1e-15);
    }
}
