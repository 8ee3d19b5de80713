//! Tape-based reverse-mode automatic differentiation over dense tensors.
//! Just enough ops for the controller: convolution, GroupNorm, elementwise
//! arithmetic and nonlinearities, pooling, and linear layers.

use super::tensor::Tensor;

pub type VarId = usize;

enum Op {
    Leaf,
    Add(VarId, VarId),
    AddMany(Vec<VarId>),
    Mul(VarId, VarId),
    /// Elementwise product with a constant (dropout masks).
    MulConst(VarId, Tensor),
    Scale(VarId, f64),
    Sigmoid(VarId),
    Tanh(VarId),
    /// x (C,H,W) + b (C), broadcast over spatial dims.
    AddChannelBias(VarId, VarId),
    Conv2d {
        input: VarId,
        kernel: VarId,
    },
    GroupNorm {
        input: VarId,
        gamma: VarId,
        beta: VarId,
        groups: usize,
        /// Normalized pre-affine values, cached at forward time.
        normalized: Tensor,
        /// Per-group 1/sqrt(var + eps).
        inv_std: Vec<f64>,
    },
    AvgPool2(VarId),
    GlobalAvgPool(VarId),
    Linear {
        input: VarId,
        weight: VarId,
        bias: VarId,
    },
    /// Mean of squared differences against a constant target; scalar out.
    MseLoss(VarId, Tensor),
    /// Sum of an explicit list of scalars, divided by the count.
    MeanScalars(Vec<VarId>),
    /// Extract one element of a vector as a scalar.
    Index(VarId, usize),
    /// Sum of squares, scalar out (test losses).
    SumSquares(VarId),
}

struct Node {
    value: Tensor,
    grad: Tensor,
    op: Op,
}

pub struct Tape {
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Tape {
        Tape { nodes: Vec::new() }
    }

    fn push(&mut self, value: Tensor, op: Op) -> VarId {
        let grad = Tensor::zeros(&value.shape);
        self.nodes.push(Node { value, grad, op });
        self.nodes.len() - 1
    }

    pub fn leaf(&mut self, value: Tensor) -> VarId {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, id: VarId) -> &Tensor {
        &self.nodes[id].value
    }

    pub fn grad(&self, id: VarId) -> &Tensor {
        &self.nodes[id].grad
    }

    pub fn add(&mut self, a: VarId, b: VarId) -> VarId {
        assert_eq!(self.nodes[a].value.shape, self.nodes[b].value.shape);
        let data = self.nodes[a]
            .value
            .data
            .iter()
            .zip(&self.nodes[b].value.data)
            .map(|(x, y)| x + y)
            .collect();
        let t = Tensor::from_vec(&self.nodes[a].value.shape.clone(), data);
        self.push(t, Op::Add(a, b))
    }

    pub fn add_many(&mut self, terms: &[VarId]) -> VarId {
        assert!(!terms.is_empty());
        let shape = self.nodes[terms[0]].value.shape.clone();
        let mut data = vec![0.0; self.nodes[terms[0]].value.len()];
        for &t in terms {
            assert_eq!(self.nodes[t].value.shape, shape);
            for (d, v) in data.iter_mut().zip(&self.nodes[t].value.data) {
                *d += v;
            }
        }
        self.push(Tensor::from_vec(&shape, data), Op::AddMany(terms.to_vec()))
    }

    pub fn mul(&mut self, a: VarId, b: VarId) -> VarId {
        assert_eq!(self.nodes[a].value.shape, self.nodes[b].value.shape);
        let data = self.nodes[a]
            .value
            .data
            .iter()
            .zip(&self.nodes[b].value.data)
            .map(|(x, y)| x * y)
            .collect();
        let t = Tensor::from_vec(&self.nodes[a].value.shape.clone(), data);
        self.push(t, Op::Mul(a, b))
    }

    pub fn mul_const(&mut self, a: VarId, mask: &Tensor) -> VarId {
        assert_eq!(self.nodes[a].value.shape, mask.shape);
        let data = self.nodes[a]
            .value
            .data
            .iter()
            .zip(&mask.data)
            .map(|(x, m)| x * m)
            .collect();
        let t = Tensor::from_vec(&mask.shape, data);
        self.push(t, Op::MulConst(a, mask.clone()))
    }

    pub fn scale(&mut self, a: VarId, k: f64) -> VarId {
        let data = self.nodes[a].value.data.iter().map(|x| x * k).collect();
        let t = Tensor::from_vec(&self.nodes[a].value.shape.clone(), data);
        self.push(t, Op::Scale(a, k))
    }

    pub fn sigmoid(&mut self, a: VarId) -> VarId {
        let data = self.nodes[a]
            .value
            .data
            .iter()
            .map(|x| 1.0 / (1.0 + (-x).exp()))
            .collect();
        let t = Tensor::from_vec(&self.nodes[a].value.shape.clone(), data);
        self.push(t, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: VarId) -> VarId {
        let data = self.nodes[a].value.data.iter().map(|x| x.tanh()).collect();
        let t = Tensor::from_vec(&self.nodes[a].value.shape.clone(), data);
        self.push(t, Op::Tanh(a))
    }

    pub fn add_channel_bias(&mut self, x: VarId, b: VarId) -> VarId {
        let (c, h, w) = self.nodes[x].value.chw();
        assert_eq!(self.nodes[b].value.shape, vec![c]);
        let mut data = self.nodes[x].value.data.clone();
        for ci in 0..c {
            let bias = self.nodes[b].value.data[ci];
            for v in &mut data[ci * h * w..(ci + 1) * h * w] {
                *v += bias;
            }
        }
        let t = Tensor::from_vec(&[c, h, w], data);
        self.push(t, Op::AddChannelBias(x, b))
    }

    /// Same-padding stride-1 convolution; kernel (Cout, Cin, kh, kw) with
    /// odd kh, kw.
    pub fn conv2d(&mut self, input: VarId, kernel: VarId) -> VarId {
        let (cin, h, w) = self.nodes[input].value.chw();
        let ks = &self.nodes[kernel].value.shape;
        assert_eq!(ks.len(), 4, "conv kernel must be rank 4");
        let (cout, kcin, kh, kw) = (ks[0], ks[1], ks[2], ks[3]);
        assert_eq!(cin, kcin, "conv channel mismatch");
        assert!(kh % 2 == 1 && kw % 2 == 1);
        let (ph, pw) = (kh / 2, kw / 2);
        let mut out = vec![0.0; cout * h * w];
        let x = &self.nodes[input].value.data;
        let k = &self.nodes[kernel].value.data;
        for co in 0..cout {
            for ci in 0..cin {
                for ky in 0..kh {
                    for kx in 0..kw {
                        let kv = k[((co * cin + ci) * kh + ky) * kw + kx];
                        if kv == 0.0 {
                            continue;
                        }
                        let dy = ky as isize - ph as isize;
                        let dx = kx as isize - pw as isize;
                        let y0 = (-dy).max(0) as usize;
                        let y1 = (h as isize - dy).min(h as isize) as usize;
                        for y in y0..y1 {
                            let iy = (y as isize + dy) as usize;
                            let x0 = (-dx).max(0) as usize;
                            let x1 = (w as isize - dx).min(w as isize) as usize;
                            let orow = (co * h + y) * w;
                            let irow = (ci * h + iy) * w;
                            for xx in x0..x1 {
                                let ix = (xx as isize + dx) as usize;
                                out[orow + xx] += kv * x[irow + ix];
                            }
                        }
                    }
                }
            }
        }
        let t = Tensor::from_vec(&[cout, h, w], out);
        self.push(t, Op::Conv2d { input, kernel })
    }

    /// GroupNorm with per-channel affine; statistics per (group x spatial).
    pub fn group_norm(
        &mut self,
        input: VarId,
        gamma: VarId,
        beta: VarId,
        groups: usize,
        eps: f64,
    ) -> VarId {
        let (c, h, w) = self.nodes[input].value.chw();
        assert!(c % groups == 0, "channels {c} not divisible by groups {groups}");
        assert_eq!(self.nodes[gamma].value.shape, vec![c]);
        assert_eq!(self.nodes[beta].value.shape, vec![c]);
        let per = c / groups * h * w;
        let x = &self.nodes[input].value.data;
        let mut normalized = vec![0.0; x.len()];
        let mut inv_std = vec![0.0; groups];
        for g in 0..groups {
            let slice = &x[g * per..(g + 1) * per];
            let mean = slice.iter().sum::<f64>() / per as f64;
            let var = slice.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / per as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std[g] = is;
            for (o, v) in normalized[g * per..(g + 1) * per].iter_mut().zip(slice) {
                *o = (v - mean) * is;
            }
        }
        let mut out = vec![0.0; x.len()];
        let gam = &self.nodes[gamma].value.data;
        let bet = &self.nodes[beta].value.data;
        for ci in 0..c {
            for i in 0..h * w {
                out[ci * h * w + i] = normalized[ci * h * w + i] * gam[ci] + bet[ci];
            }
        }
        let norm_t = Tensor::from_vec(&[c, h, w], normalized);
        let t = Tensor::from_vec(&[c, h, w], out);
        self.push(
            t,
            Op::GroupNorm {
                input,
                gamma,
                beta,
                groups,
                normalized: norm_t,
                inv_std,
            },
        )
    }

    /// 2x2 average pooling, stride 2; H and W must be even.
    pub fn avg_pool2(&mut self, input: VarId) -> VarId {
        let (c, h, w) = self.nodes[input].value.chw();
        assert!(h % 2 == 0 && w % 2 == 0, "avg_pool2 needs even dims");
        let (oh, ow) = (h / 2, w / 2);
        let x = &self.nodes[input].value.data;
        let mut out = vec![0.0; c * oh * ow];
        for ci in 0..c {
            for y in 0..oh {
                for xx in 0..ow {
                    let mut s = 0.0;
                    for dy in 0..2 {
                        for dx in 0..2 {
                            s += x[(ci * h + 2 * y + dy) * w + 2 * xx + dx];
                        }
                    }
                    out[(ci * oh + y) * ow + xx] = s / 4.0;
                }
            }
        }
        let t = Tensor::from_vec(&[c, oh, ow], out);
        self.push(t, Op::AvgPool2(input))
    }

    /// (C,H,W) -> (C) spatial mean.
    pub fn global_avg_pool(&mut self, input: VarId) -> VarId {
        let (c, h, w) = self.nodes[input].value.chw();
        let x = &self.nodes[input].value.data;
        let out: Vec<f64> = (0..c)
            .map(|ci| x[ci * h * w..(ci + 1) * h * w].iter().sum::<f64>() / (h * w) as f64)
            .collect();
        let t = Tensor::from_vec(&[c], out);
        self.push(t, Op::GlobalAvgPool(input))
    }

    /// out = W x + b for a rank-1 input; W is (out_dim, in_dim).
    pub fn linear(&mut self, input: VarId, weight: VarId, bias: VarId) -> VarId {
        let x = &self.nodes[input].value;
        assert_eq!(x.shape.len(), 1);
        let ws = &self.nodes[weight].value.shape;
        assert_eq!(ws.len(), 2);
        let (od, id) = (ws[0], ws[1]);
        assert_eq!(id, x.shape[0], "linear shape mismatch");
        assert_eq!(self.nodes[bias].value.shape, vec![od]);
        let wd = &self.nodes[weight].value.data;
        let bd = &self.nodes[bias].value.data;
        let out: Vec<f64> = (0..od)
            .map(|o| {
                bd[o]
                    + wd[o * id..(o + 1) * id]
                        .iter()
                        .zip(&x.data)
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
            })
            .collect();
        let t = Tensor::from_vec(&[od], out);
        self.push(t, Op::Linear { input, weight, bias })
    }

    pub fn mse_loss(&mut self, pred: VarId, target: &Tensor) -> VarId {
        assert_eq!(self.nodes[pred].value.shape, target.shape);
        let n = target.len() as f64;
        let loss = self.nodes[pred]
            .value
            .data
            .iter()
            .zip(&target.data)
            .map(|(p, t)| (p - t).powi(2))
            .sum::<f64>()
            / n;
        self.push(
            Tensor::from_vec(&[1], vec![loss]),
            Op::MseLoss(pred, target.clone()),
        )
    }

    pub fn mean_scalars(&mut self, terms: &[VarId]) -> VarId {
        assert!(!terms.is_empty());
        let s: f64 = terms
            .iter()
            .map(|&t| {
                assert_eq!(self.nodes[t].value.len(), 1);
                self.nodes[t].value.data[0]
            })
            .sum();
        self.push(
            Tensor::from_vec(&[1], vec![s / terms.len() as f64]),
            Op::MeanScalars(terms.to_vec()),
        )
    }

    pub fn index(&mut self, input: VarId, i: usize) -> VarId {
        let v = self.nodes[input].value.data[i];
        self.push(Tensor::from_vec(&[1], vec![v]), Op::Index(input, i))
    }

    pub fn sum_squares(&mut self, input: VarId) -> VarId {
        let s: f64 = self.nodes[input].value.data.iter().map(|v| v * v).sum();
        self.push(Tensor::from_vec(&[1], vec![s]), Op::SumSquares(input))
    }

    /// Reverse pass from a scalar output; accumulates into `grad` slots.
    pub fn backward(&mut self, output: VarId) {
        assert_eq!(self.nodes[output].value.len(), 1, "backward needs a scalar");
        for n in &mut self.nodes {
            for g in &mut n.grad.data {
                *g = 0.0;
            }
        }
        self.nodes[output].grad.data[0] = 1.0;
        for id in (0..=output).rev() {
            // Split borrows: take the grad out, write into earlier nodes.
            let placeholder = Tensor::zeros(&self.nodes[id].value.shape);
            let grad = std::mem::replace(&mut self.nodes[id].grad, placeholder);
            if grad.data.iter().all(|&g| g == 0.0) {
                self.nodes[id].grad = grad;
                continue;
            }
            match &self.nodes[id].op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    let (a, b) = (*a, *b);
                    for (i, g) in grad.data.iter().enumerate() {
                        self.nodes[a].grad.data[i] += g;
                    }
                    for (i, g) in grad.data.iter().enumerate() {
                        self.nodes[b].grad.data[i] += g;
                    }
                }
                Op::AddMany(terms) => {
                    for &t in &terms.clone() {
                        for (i, g) in grad.data.iter().enumerate() {
                            self.nodes[t].grad.data[i] += g;
                        }
                    }
                }
                Op::Mul(a, b) => {
                    let (a, b) = (*a, *b);
                    let bv = self.nodes[b].value.data.clone();
                    let av = self.nodes[a].value.data.clone();
                    for (i, g) in grad.data.iter().enumerate() {
                        self.nodes[a].grad.data[i] += g * bv[i];
                    }
                    for (i, g) in grad.data.iter().enumerate() {
                        self.nodes[b].grad.data[i] += g * av[i];
                    }
                }
                Op::MulConst(a, mask) => {
                    let a = *a;
                    let mask = mask.data.clone();
                    for (i, g) in grad.data.iter().enumerate() {
                        self.nodes[a].grad.data[i] += g * mask[i];
                    }
                }
                Op::Scale(a, k) => {
                    let (a, k) = (*a, *k);
                    for (i, g) in grad.data.iter().enumerate() {
                        self.nodes[a].grad.data[i] += g * k;
                    }
                }
                Op::Sigmoid(a) => {
                    let a = *a;
                    let y = self.nodes[id].value.data.clone();
                    for (i, g) in grad.data.iter().enumerate() {
                        self.nodes[a].grad.data[i] += g * y[i] * (1.0 - y[i]);
                    }
                }
                Op::Tanh(a) => {
                    let a = *a;
                    let y = self.nodes[id].value.data.clone();
                    for (i, g) in grad.data.iter().enumerate() {
                        self.nodes[a].grad.data[i] += g * (1.0 - y[i] * y[i]);
                    }
                }
                Op::AddChannelBias(x, b) => {
                    let (x, b) = (*x, *b);
                    let (c, h, w) = self.nodes[x].value.chw();
                    for (i, g) in grad.data.iter().enumerate() {
                        self.nodes[x].grad.data[i] += g;
                    }
                    for ci in 0..c {
                        let s: f64 = grad.data[ci * h * w..(ci + 1) * h * w].iter().sum();
                        self.nodes[b].grad.data[ci] += s;
                    }
                }
                Op::Conv2d { input, kernel } => {
                    let (input, kernel) = (*input, *kernel);
                    let (cin, h, w) = self.nodes[input].value.chw();
                    let ks = self.nodes[kernel].value.shape.clone();
                    let (cout, kh, kw) = (ks[0], ks[2], ks[3]);
                    let (ph, pw) = (kh / 2, kw / 2);
                    let xval = self.nodes[input].value.data.clone();
                    let kval = self.nodes[kernel].value.data.clone();
                    let mut dx = vec![0.0; xval.len()];
                    let mut dk = vec![0.0; kval.len()];
                    for co in 0..cout {
                        for y in 0..h {
                            for xx in 0..w {
                                let g = grad.data[(co * h + y) * w + xx];
                                if g == 0.0 {
                                    continue;
                                }
                                for ci in 0..cin {
                                    for ky in 0..kh {
                                        let iy = y as isize + ky as isize - ph as isize;
                                        if iy < 0 || iy >= h as isize {
                                            continue;
                                        }
                                        for kx in 0..kw {
                                            let ix = xx as isize + kx as isize - pw as isize;
                                            if ix < 0 || ix >= w as isize {
                                                continue;
                                            }
                                            let xi = (ci * h + iy as usize) * w + ix as usize;
                                            let kidx = ((co * cin + ci) * kh + ky) * kw + kx;
                                            dx[xi] += g * kval[kidx];
                                            dk[kidx] += g * xval[xi];
                                        }
                                    }
                                }
                            }
                        }
                    }
                    for (i, v) in dx.iter().enumerate() {
                        self.nodes[input].grad.data[i] += v;
                    }
                    for (i, v) in dk.iter().enumerate() {
                        self.nodes[kernel].grad.data[i] += v;
                    }
                }
                Op::GroupNorm {
                    input,
                    gamma,
                    beta,
                    groups,
                    normalized,
                    inv_std,
                } => {
                    let (input, gamma, beta, groups) = (*input, *gamma, *beta, *groups);
                    let normalized = normalized.data.clone();
                    let inv_std = inv_std.clone();
                    let (c, h, w) = self.nodes[input].value.chw();
                    let per = c / groups * h * w;
                    let gam = self.nodes[gamma].value.data.clone();
                    // d gamma, d beta.
                    for ci in 0..c {
                        let mut dg = 0.0;
                        let mut db = 0.0;
                        for i in 0..h * w {
                            let idx = ci * h * w + i;
                            dg += grad.data[idx] * normalized[idx];
                            db += grad.data[idx];
                        }
                        self.nodes[gamma].grad.data[ci] += dg;
                        self.nodes[beta].grad.data[ci] += db;
                    }
                    // d input: dy = grad * gamma (per channel); then the
                    // standard normalization backward per group.
                    let mut dy = vec![0.0; grad.data.len()];
                    for ci in 0..c {
                        for i in 0..h * w {
                            let idx = ci * h * w + i;
                            dy[idx] = grad.data[idx] * gam[ci];
                        }
                    }
                    for g in 0..groups {
                        let lo = g * per;
                        let hi = lo + per;
                        let mean_dy = dy[lo..hi].iter().sum::<f64>() / per as f64;
                        let mean_dy_y = dy[lo..hi]
                            .iter()
                            .zip(&normalized[lo..hi])
                            .map(|(a, b)| a * b)
                            .sum::<f64>()
                            / per as f64;
                        for i in lo..hi {
                            let v =
                                inv_std[g] * (dy[i] - mean_dy - normalized[i] * mean_dy_y);
                            self.nodes[input].grad.data[i] += v;
                        }
                    }
                }
                Op::AvgPool2(input) => {
                    let input = *input;
                    let (c, h, w) = self.nodes[input].value.chw();
                    let (oh, ow) = (h / 2, w / 2);
                    for ci in 0..c {
                        for y in 0..oh {
                            for xx in 0..ow {
                                let g = grad.data[(ci * oh + y) * ow + xx] / 4.0;
                                for dy in 0..2 {
                                    for dx in 0..2 {
                                        self.nodes[input].grad.data
                                            [(ci * h + 2 * y + dy) * w + 2 * xx + dx] += g;
                                    }
                                }
                            }
                        }
                    }
                }
                Op::GlobalAvgPool(input) => {
                    let input = *input;
                    let (c, h, w) = self.nodes[input].value.chw();
                    for ci in 0..c {
                        let g = grad.data[ci] / (h * w) as f64;
                        for i in 0..h * w {
                            self.nodes[input].grad.data[ci * h * w + i] += g;
                        }
                    }
                }
                Op::Linear {
                    input,
                    weight,
                    bias,
                } => {
                    let (input, weight, bias) = (*input, *weight, *bias);
                    let ws = self.nodes[weight].value.shape.clone();
                    let (od, idim) = (ws[0], ws[1]);
                    let xv = self.nodes[input].value.data.clone();
                    let wv = self.nodes[weight].value.data.clone();
                    for o in 0..od {
                        let g = grad.data[o];
                        if g == 0.0 {
                            continue;
                        }
                        self.nodes[bias].grad.data[o] += g;
                        for i in 0..idim {
                            self.nodes[weight].grad.data[o * idim + i] += g * xv[i];
                            self.nodes[input].grad.data[i] += g * wv[o * idim + i];
                        }
                    }
                }
                Op::MseLoss(pred, target) => {
                    let pred = *pred;
                    let target = target.data.clone();
                    let n = target.len() as f64;
                    let g = grad.data[0];
                    let pv = self.nodes[pred].value.data.clone();
                    for i in 0..target.len() {
                        self.nodes[pred].grad.data[i] += g * 2.0 * (pv[i] - target[i]) / n;
                    }
                }
                Op::MeanScalars(terms) => {
                    let terms = terms.clone();
                    let g = grad.data[0] / terms.len() as f64;
                    for t in terms {
                        self.nodes[t].grad.data[0] += g;
                    }
                }
                Op::Index(input, i) => {
                    let (input, i) = (*input, *i);
                    self.nodes[input].grad.data[i] += grad.data[0];
                }
                Op::SumSquares(input) => {
                    let input = *input;
                    let g = grad.data[0];
                    let xv = self.nodes[input].value.data.clone();
                    for (i, x) in xv.iter().enumerate() {
                        self.nodes[input].grad.data[i] += g * 2.0 * x;
                    }
                }
            }
            self.nodes[id].grad = grad;
        }
    }
}
