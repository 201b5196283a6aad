use super::gemm::{gemm, MatRef};
use super::params::{Grads, ParamId, ParamStore};
use super::Tensor;
use crate::matte::bilinear_taps;

const NORM_EPS: f64 = 1e-5;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub stride: usize,
    pub padding: usize,
    pub dilation: usize,
}

impl ConvSpec {
    /// Stride 1, "same" padding for an odd kernel `k`.
    pub fn same(k: usize) -> Self {
        Self {
            stride: 1,
            padding: k / 2,
            dilation: 1,
        }
    }

    pub fn dilated(k: usize, rate: usize) -> Self {
        Self {
            stride: 1,
            padding: rate * (k / 2),
            dilation: rate,
        }
    }
}

enum Op {
    Input,
    Conv {
        x: usize,
        w: ParamId,
        b: Option<ParamId>,
        k: usize,
        spec: ConvSpec,
        // None for 1x1 convolutions, which read the input directly
        col: Option<Vec<f64>>,
    },
    GroupNorm {
        x: usize,
        gamma: ParamId,
        beta: ParamId,
        groups: usize,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Relu {
        x: usize,
    },
    AvgPool2 {
        x: usize,
    },
    Upsample {
        x: usize,
    },
    Concat {
        a: usize,
        b: usize,
    },
    Add {
        a: usize,
        b: usize,
    },
    Clamp01 {
        x: usize,
    },
    Select {
        a: usize,
        b: usize,
        mask: Vec<u8>,
    },
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Records one forward pass for reverse-mode differentiation.
pub struct Tape<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Self {
            params,
            nodes: Vec::new(),
        }
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Input)
    }

    pub fn conv2d(&mut self, x: Var, w: ParamId, b: Option<ParamId>, spec: ConvSpec) -> Var {
        let shape = self.params.shape(w);
        let (cout, cin, k) = (shape[0], shape[1], shape[2]);
        let input = &self.nodes[x.0].value;
        assert_eq!(input.channels, cin, "conv input channels for {}", self.params.name(w));
        let (oh, ow) = conv_out_dims(input.height, input.width, k, spec);
        let ohw = oh * ow;
        let ckk = cin * k * k;
        let direct = k == 1 && spec.stride == 1 && spec.padding == 0;
        let col = (!direct).then(|| im2col(input, k, spec, oh, ow));
        let mut out = vec![0.0; cout * ohw];
        let src = col.as_deref().unwrap_or(&input.data);
        gemm(
            cout,
            ckk,
            ohw,
            MatRef::rows(self.params.get(w), ckk),
            MatRef::rows(src, ohw),
            0.0,
            &mut out,
        );
        if let Some(b) = b {
            let bias = self.params.get(b);
            for (co, row) in out.chunks_mut(ohw).enumerate() {
                row.iter_mut().for_each(|v| *v += bias[co]);
            }
        }
        self.push(
            Tensor::new(cout, oh, ow, out),
            Op::Conv {
                x: x.0,
                w,
                b,
                k,
                spec,
                col,
            },
        )
    }

    pub fn group_norm(&mut self, x: Var, gamma: ParamId, beta: ParamId, groups: usize) -> Var {
        let input = &self.nodes[x.0].value;
        let (c, hw) = (input.channels, input.plane_len());
        assert!(groups > 0 && c % groups == 0, "group count {groups} must divide {c}");
        let per = c / groups * hw;
        let (g_w, b_w) = (self.params.get(gamma), self.params.get(beta));
        let mut xhat = vec![0.0; c * hw];
        let mut inv_std = vec![0.0; groups];
        let mut out = vec![0.0; c * hw];
        for g in 0..groups {
            let span = g * per..(g + 1) * per;
            let xs = &input.data[span.clone()];
            let mean = xs.iter().sum::<f64>() / per as f64;
            let var = xs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / per as f64;
            let is = 1.0 / (var + NORM_EPS).sqrt();
            inv_std[g] = is;
            for (i, &v) in xs.iter().enumerate() {
                xhat[g * per + i] = (v - mean) * is;
            }
        }
        for ch in 0..c {
            for i in ch * hw..(ch + 1) * hw {
                out[i] = g_w[ch] * xhat[i] + b_w[ch];
            }
        }
        let t = Tensor::new(c, input.height, input.width, out);
        self.push(
            t,
            Op::GroupNorm {
                x: x.0,
                gamma,
                beta,
                groups,
                xhat,
                inv_std,
            },
        )
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let input = &self.nodes[x.0].value;
        let data = input.data.iter().map(|&v| v.max(0.0)).collect();
        let t = Tensor::new(input.channels, input.height, input.width, data);
        self.push(t, Op::Relu { x: x.0 })
    }

    /// 2x2 average pooling; spatial dims must be even.
    pub fn avg_pool2(&mut self, x: Var) -> Var {
        let input = &self.nodes[x.0].value;
        assert!(
            input.height.is_multiple_of(2) && input.width.is_multiple_of(2),
            "avg_pool2 needs even dims"
        );
        let (oh, ow) = (input.height / 2, input.width / 2);
        let mut out = vec![0.0; input.channels * oh * ow];
        for c in 0..input.channels {
            let src = input.channel(c);
            for y in 0..oh {
                for xx in 0..ow {
                    let i = 2 * y * input.width + 2 * xx;
                    out[(c * oh + y) * ow + xx] =
                        0.25 * (src[i] + src[i + 1] + src[i + input.width] + src[i + input.width + 1]);
                }
            }
        }
        self.push(Tensor::new(input.channels, oh, ow, out), Op::AvgPool2 { x: x.0 })
    }

    /// Half-pixel-centre bilinear resize to `height x width`.
    pub fn upsample(&mut self, x: Var, height: usize, width: usize) -> Var {
        let input = &self.nodes[x.0].value;
        let (ty, tx) = (bilinear_taps(input.height, height), bilinear_taps(input.width, width));
        let mut out = vec![0.0; input.channels * height * width];
        for c in 0..input.channels {
            let src = input.channel(c);
            let dst = &mut out[c * height * width..(c + 1) * height * width];
            for (y, &(y0, y1, ly)) in ty.iter().enumerate() {
                for (xx, &(x0, x1, lx)) in tx.iter().enumerate() {
                    let top = src[y0 * input.width + x0] * (1.0 - lx) + src[y0 * input.width + x1] * lx;
                    let bot = src[y1 * input.width + x0] * (1.0 - lx) + src[y1 * input.width + x1] * lx;
                    dst[y * width + xx] = top * (1.0 - ly) + bot * ly;
                }
            }
        }
        self.push(Tensor::new(input.channels, height, width, out), Op::Upsample { x: x.0 })
    }

    pub fn concat(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert!(ta.height == tb.height && ta.width == tb.width, "concat spatial dims");
        let mut data = Vec::with_capacity(ta.data.len() + tb.data.len());
        data.extend_from_slice(&ta.data);
        data.extend_from_slice(&tb.data);
        let t = Tensor::new(ta.channels + tb.channels, ta.height, ta.width, data);
        self.push(t, Op::Concat { a: a.0, b: b.0 })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert!(ta.same_shape(tb), "add shapes");
        let data = ta.data.iter().zip(&tb.data).map(|(x, y)| x + y).collect();
        let t = Tensor::new(ta.channels, ta.height, ta.width, data);
        self.push(t, Op::Add { a: a.0, b: b.0 })
    }

    /// Hard clamp to `[0, 1]`. Backward passes the gradient through where
    /// the value is inside the interval, and at saturated pixels only when a
    /// descent step would move the value back inside.
    pub fn clamp01(&mut self, x: Var) -> Var {
        let input = &self.nodes[x.0].value;
        let data = input.data.iter().map(|&v| v.clamp(0.0, 1.0)).collect();
        let t = Tensor::new(input.channels, input.height, input.width, data);
        self.push(t, Op::Clamp01 { x: x.0 })
    }

    /// Per-pixel selection: `mask == 1` takes `a`, otherwise `b`. The mask
    /// is a constant spanning one plane and is broadcast over channels.
    pub fn select(&mut self, a: Var, b: Var, mask: &[u8]) -> Var {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert!(ta.same_shape(tb), "select shapes");
        let hw = ta.plane_len();
        assert_eq!(mask.len(), hw, "select mask size");
        let data = ta
            .data
            .iter()
            .zip(&tb.data)
            .enumerate()
            .map(|(i, (&x, &y))| if mask[i % hw] == 1 { x } else { y })
            .collect();
        let t = Tensor::new(ta.channels, ta.height, ta.width, data);
        self.push(
            t,
            Op::Select {
                a: a.0,
                b: b.0,
                mask: mask.to_vec(),
            },
        )
    }

    /// Back-propagates the given seeds (gradients of a scalar objective with
    /// respect to recorded values) and returns parameter gradients.
    pub fn backward(&self, seeds: &[(Var, Vec<f64>)]) -> Grads {
        let mut grads = self.params.zero_grads();
        let mut node_grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        for (v, g) in seeds {
            assert_eq!(g.len(), self.nodes[v.0].value.data.len(), "seed length");
            accumulate(&mut node_grads[v.0], g);
        }
        for idx in (0..self.nodes.len()).rev() {
            let Some(dy) = node_grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Input => {}
                Op::Conv { x, w, b, k, spec, col } => {
                    let input = &self.nodes[*x].value;
                    let out = &node.value;
                    let (cout, cin) = (out.channels, input.channels);
                    let ohw = out.plane_len();
                    let ckk = cin * k * k;
                    let src = col.as_deref().unwrap_or(&input.data);
                    gemm(
                        cout,
                        ohw,
                        ckk,
                        MatRef::rows(&dy, ohw),
                        MatRef::transposed(src, ohw),
                        1.0,
                        &mut grads.0[w.index()],
                    );
                    if let Some(b) = b {
                        let gb = &mut grads.0[b.index()];
                        for (co, row) in dy.chunks(ohw).enumerate() {
                            gb[co] += row.iter().sum::<f64>();
                        }
                    }
                    let mut dcol = vec![0.0; ckk * ohw];
                    let wv = self.params.get(*w);
                    gemm(
                        ckk,
                        cout,
                        ohw,
                        MatRef::transposed(wv, ckk),
                        MatRef::rows(&dy, ohw),
                        0.0,
                        &mut dcol,
                    );
                    let dx = if col.is_some() {
                        col2im(&dcol, input, *k, *spec, out.height, out.width)
                    } else {
                        dcol
                    };
                    accumulate(&mut node_grads[*x], &dx);
                }
                Op::GroupNorm {
                    x,
                    gamma,
                    beta,
                    groups,
                    xhat,
                    inv_std,
                } => {
                    let t = &node.value;
                    let (c, hw) = (t.channels, t.plane_len());
                    let per = c / groups * hw;
                    let gw = self.params.get(*gamma);
                    let mut dxhat = vec![0.0; c * hw];
                    {
                        let (gg, gb) = two_mut(&mut grads.0, gamma.index(), beta.index());
                        for ch in 0..c {
                            for i in ch * hw..(ch + 1) * hw {
                                gg[ch] += dy[i] * xhat[i];
                                gb[ch] += dy[i];
                                dxhat[i] = dy[i] * gw[ch];
                            }
                        }
                    }
                    let mut dx = vec![0.0; c * hw];
                    for g in 0..*groups {
                        let span = g * per..(g + 1) * per;
                        let s1: f64 = dxhat[span.clone()].iter().sum();
                        let s2: f64 = dxhat[span.clone()]
                            .iter()
                            .zip(&xhat[span.clone()])
                            .map(|(a, b)| a * b)
                            .sum();
                        let n = per as f64;
                        for i in span {
                            dx[i] = inv_std[g] / n * (n * dxhat[i] - s1 - xhat[i] * s2);
                        }
                    }
                    accumulate(&mut node_grads[*x], &dx);
                }
                Op::Relu { x } => {
                    let dx: Vec<f64> = dy
                        .iter()
                        .zip(&node.value.data)
                        .map(|(&g, &y)| if y > 0.0 { g } else { 0.0 })
                        .collect();
                    accumulate(&mut node_grads[*x], &dx);
                }
                Op::AvgPool2 { x } => {
                    let input = &self.nodes[*x].value;
                    let (oh, ow) = (node.value.height, node.value.width);
                    let mut dx = vec![0.0; input.data.len()];
                    for c in 0..input.channels {
                        for y in 0..oh {
                            for xx in 0..ow {
                                let g = 0.25 * dy[(c * oh + y) * ow + xx];
                                let i = c * input.plane_len() + 2 * y * input.width + 2 * xx;
                                dx[i] += g;
                                dx[i + 1] += g;
                                dx[i + input.width] += g;
                                dx[i + input.width + 1] += g;
                            }
                        }
                    }
                    accumulate(&mut node_grads[*x], &dx);
                }
                Op::Upsample { x } => {
                    let input = &self.nodes[*x].value;
                    let (h, w) = (node.value.height, node.value.width);
                    let (ty, tx) = (bilinear_taps(input.height, h), bilinear_taps(input.width, w));
                    let mut dx = vec![0.0; input.data.len()];
                    let iw = input.width;
                    for c in 0..input.channels {
                        let d = &mut dx[c * input.plane_len()..(c + 1) * input.plane_len()];
                        let g = &dy[c * h * w..(c + 1) * h * w];
                        for (y, &(y0, y1, ly)) in ty.iter().enumerate() {
                            for (xx, &(x0, x1, lx)) in tx.iter().enumerate() {
                                let v = g[y * w + xx];
                                d[y0 * iw + x0] += v * (1.0 - ly) * (1.0 - lx);
                                d[y0 * iw + x1] += v * (1.0 - ly) * lx;
                                d[y1 * iw + x0] += v * ly * (1.0 - lx);
                                d[y1 * iw + x1] += v * ly * lx;
                            }
                        }
                    }
                    accumulate(&mut node_grads[*x], &dx);
                }
                Op::Concat { a, b } => {
                    let na = self.nodes[*a].value.data.len();
                    accumulate(&mut node_grads[*a], &dy[..na]);
                    accumulate(&mut node_grads[*b], &dy[na..]);
                }
                Op::Add { a, b } => {
                    accumulate(&mut node_grads[*a], &dy);
                    accumulate(&mut node_grads[*b], &dy);
                }
                Op::Clamp01 { x } => {
                    let input = &self.nodes[*x].value;
                    let dx: Vec<f64> = dy
                        .iter()
                        .zip(&input.data)
                        .map(|(&g, &v)| {
                            let inside = v > 0.0 && v < 1.0;
                            let recovers = (v <= 0.0 && g < 0.0) || (v >= 1.0 && g > 0.0);
                            if inside || recovers {
                                g
                            } else {
                                0.0
                            }
                        })
                        .collect();
                    accumulate(&mut node_grads[*x], &dx);
                }
                Op::Select { a, b, mask } => {
                    let hw = node.value.plane_len();
                    let mut da = vec![0.0; dy.len()];
                    let mut db = vec![0.0; dy.len()];
                    for (i, &g) in dy.iter().enumerate() {
                        if mask[i % hw] == 1 {
                            da[i] = g;
                        } else {
                            db[i] = g;
                        }
                    }
                    accumulate(&mut node_grads[*a], &da);
                    accumulate(&mut node_grads[*b], &db);
                }
            }
        }
        grads
    }
}

fn accumulate(slot: &mut Option<Vec<f64>>, g: &[f64]) {
    match slot {
        Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
        None => *slot = Some(g.to_vec()),
    }
}

fn two_mut(v: &mut [Vec<f64>], i: usize, j: usize) -> (&mut Vec<f64>, &mut Vec<f64>) {
    assert_ne!(i, j);
    if i < j {
        let (lo, hi) = v.split_at_mut(j);
        (&mut lo[i], &mut hi[0])
    } else {
        let (lo, hi) = v.split_at_mut(i);
        (&mut hi[0], &mut lo[j])
    }
}

fn conv_out_dims(h: usize, w: usize, k: usize, spec: ConvSpec) -> (usize, usize) {
    let span = spec.dilation * (k - 1) + 1;
    assert!(
        h + 2 * spec.padding >= span && w + 2 * spec.padding >= span,
        "conv kernel larger than input"
    );
    (
        (h + 2 * spec.padding - span) / spec.stride + 1,
        (w + 2 * spec.padding - span) / spec.stride + 1,
    )
}

fn im2col(input: &Tensor, k: usize, spec: ConvSpec, oh: usize, ow: usize) -> Vec<f64> {
    let (h, w) = (input.height as isize, input.width as isize);
    let ohw = oh * ow;
    let mut col = vec![0.0; input.channels * k * k * ohw];
    for c in 0..input.channels {
        let src = input.channel(c);
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut col[((c * k + ky) * k + kx) * ohw..][..ohw];
                for oy in 0..oh {
                    let iy = (oy * spec.stride + ky * spec.dilation) as isize - spec.padding as isize;
                    if iy < 0 || iy >= h {
                        continue;
                    }
                    let srow = &src[iy as usize * input.width..][..input.width];
                    let drow = &mut row[oy * ow..][..ow];
                    for (ox, d) in drow.iter_mut().enumerate() {
                        let ix = (ox * spec.stride + kx * spec.dilation) as isize - spec.padding as isize;
                        if ix >= 0 && ix < w {
                            *d = srow[ix as usize];
                        }
                    }
                }
            }
        }
    }
    col
}

fn col2im(dcol: &[f64], input: &Tensor, k: usize, spec: ConvSpec, oh: usize, ow: usize) -> Vec<f64> {
    let (h, w) = (input.height as isize, input.width as isize);
    let ohw = oh * ow;
    let mut dx = vec![0.0; input.data.len()];
    for c in 0..input.channels {
        let dst = &mut dx[c * input.plane_len()..(c + 1) * input.plane_len()];
        for ky in 0..k {
            for kx in 0..k {
                let row = &dcol[((c * k + ky) * k + kx) * ohw..][..ohw];
                for oy in 0..oh {
                    let iy = (oy * spec.stride + ky * spec.dilation) as isize - spec.padding as isize;
                    if iy < 0 || iy >= h {
                        continue;
                    }
                    let drow = &mut dst[iy as usize * input.width..][..input.width];
                    for (ox, &g) in row[oy * ow..][..ow].iter().enumerate() {
                        let ix = (ox * spec.stride + kx * spec.dilation) as isize - spec.padding as isize;
                        if ix >= 0 && ix < w {
                            drow[ix as usize] += g;
                        }
                    }
                }
            }
        }
    }
    dx
}
