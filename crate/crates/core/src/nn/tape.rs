//! Reverse-mode differentiation over NCHW tensors.
//!
//! A [`Tape`] records one forward evaluation; [`Tape::backward`] walks it in
//! reverse. Dense activations are carried as `(N, F, 1, 1)` so every node has
//! the same rank. All loops run in a fixed order, so results are bit-for-bit
//! reproducible.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, Array4, ArrayView2, ArrayViewMut2, Zip};

use super::params::{ParamId, ParamStore};
use crate::imageops::{bilinear_taps, Tap};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Input,
    Param(ParamId),
    Conv2d {
        x: Var,
        w: Var,
        b: Var,
        pad: usize,
        cols: Vec<Array2<f64>>,
    },
    MaxPool2 {
        x: Var,
        argmax: Vec<usize>,
    },
    Relu(Var),
    Tanh(Var),
    Sigmoid(Var),
    Softplus(Var),
    Offset(Var),
    Add(Var, Var),
    AttentionCombine {
        trunk: Var,
        mask: Var,
    },
    Resize {
        x: Var,
        rows: Vec<Tap>,
        cols: Vec<Tap>,
    },
    Flatten(Var),
    Linear {
        x: Var,
        w: Var,
        b: Var,
    },
    SoftmaxCrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        probs: Array2<f64>,
        per_sample: Vec<f64>,
    },
}

struct Node {
    value: Array4<f64>,
    op: Op,
    requires_grad: bool,
}

pub struct Tape<'a> {
    store: &'a ParamStore,
    train_params: bool,
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`].
pub struct Gradients {
    nodes: Vec<Option<Array4<f64>>>,
    params: Vec<Option<Array4<f64>>>,
}

impl Gradients {
    pub fn wrt(&self, v: Var) -> Option<&Array4<f64>> {
        self.nodes[v.0].as_ref()
    }

    pub fn take_wrt(&mut self, v: Var) -> Option<Array4<f64>> {
        self.nodes[v.0].take()
    }

    pub fn param(&self, id: ParamId) -> Option<&Array4<f64>> {
        self.params.get(id.0).and_then(|g| g.as_ref())
    }
}

fn accumulate(slot: &mut Option<Array4<f64>>, g: Array4<f64>) {
    match slot {
        Some(acc) => *acc += &g,
        None => *slot = Some(g),
    }
}

fn as_matrix(a: &Array4<f64>, rows: usize, cols: usize) -> ArrayView2<'_, f64> {
    a.view()
        .into_shape_with_order((rows, cols))
        .expect("tensor is in standard layout")
}

fn as_matrix_mut(a: &mut Array4<f64>, rows: usize, cols: usize) -> ArrayViewMut2<'_, f64> {
    a.view_mut()
        .into_shape_with_order((rows, cols))
        .expect("tensor is in standard layout")
}

/// Unfolds one `(C, H, W)` sample into `(C*k*k, Ho*Wo)` patch columns.
fn im2col(src: &[f64], c: usize, h: usize, w: usize, k: usize, pad: usize, cols: &mut Array2<f64>) {
    let ho = h + 2 * pad + 1 - k;
    let wo = w + 2 * pad + 1 - k;
    let dst = cols.as_slice_mut().expect("contiguous columns");
    for ch in 0..c {
        let plane = &src[ch * h * w..(ch + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ch * k + ky) * k + kx;
                let out = &mut dst[row * ho * wo..(row + 1) * ho * wo];
                for oy in 0..ho {
                    let iy = oy as isize + ky as isize - pad as isize;
                    let seg = &mut out[oy * wo..(oy + 1) * wo];
                    if iy < 0 || iy >= h as isize {
                        seg.fill(0.0);
                        continue;
                    }
                    let line = &plane[iy as usize * w..(iy as usize + 1) * w];
                    for (ox, v) in seg.iter_mut().enumerate() {
                        let ix = ox as isize + kx as isize - pad as isize;
                        *v = if ix < 0 || ix >= w as isize { 0.0 } else { line[ix as usize] };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters patch columns back onto a `(C, H, W)` sample.
fn col2im(cols: &Array2<f64>, c: usize, h: usize, w: usize, k: usize, pad: usize, dst: &mut [f64]) {
    let ho = h + 2 * pad + 1 - k;
    let wo = w + 2 * pad + 1 - k;
    let src = cols.as_slice().expect("contiguous columns");
    for ch in 0..c {
        let plane = &mut dst[ch * h * w..(ch + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ch * k + ky) * k + kx;
                let col = &src[row * ho * wo..(row + 1) * ho * wo];
                for oy in 0..ho {
                    let iy = oy as isize + ky as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let line = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                    for ox in 0..wo {
                        let ix = ox as isize + kx as isize - pad as isize;
                        if ix >= 0 && ix < w as isize {
                            line[ix as usize] += col[oy * wo + ox];
                        }
                    }
                }
            }
        }
    }
}

impl<'a> Tape<'a> {
    /// `train_params` controls whether parameter gradients are produced.
    pub fn new(store: &'a ParamStore, train_params: bool) -> Self {
        Self {
            store,
            train_params,
            nodes: Vec::new(),
        }
    }

    fn push(&mut self, value: Array4<f64>, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &Array4<f64> {
        &self.nodes[v.0].value
    }

    pub fn input(&mut self, x: Array4<f64>, requires_grad: bool) -> Var {
        let x = if x.is_standard_layout() { x } else { x.as_standard_layout().into_owned() };
        self.push(x, Op::Input, requires_grad)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        let value = self.store.get(id).clone();
        let rg = self.train_params;
        self.push(value, Op::Param(id), rg)
    }

    /// Stride-1 convolution with zero padding `pad`. Weights are `(Cout, Cin, k, k)`,
    /// bias `(Cout, 1, 1, 1)`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, pad: usize) -> Var {
        let (n, cin, h, wd) = self.value(x).dim();
        let (cout, wcin, k, k2) = self.value(w).dim();
        assert_eq!(cin, wcin, "conv input channels");
        assert_eq!(k, k2, "square kernels only");
        let ho = h + 2 * pad + 1 - k;
        let wo = wd + 2 * pad + 1 - k;
        let keep_cols = self.needs(w);

        let xs = self.value(x).as_slice().expect("standard layout");
        let wmat = as_matrix(self.value(w), cout, cin * k * k);
        let bias = self.value(b);
        let mut out = Array4::<f64>::zeros((n, cout, ho, wo));
        let mut cols_cache = Vec::new();
        let mut cols = Array2::<f64>::zeros((cin * k * k, ho * wo));
        for i in 0..n {
            im2col(&xs[i * cin * h * wd..(i + 1) * cin * h * wd], cin, h, wd, k, pad, &mut cols);
            let mut o = out.slice_mut(s![i, .., .., ..]);
            let mut o = o
                .view_mut()
                .into_shape_with_order((cout, ho * wo))
                .expect("standard layout");
            general_mat_mul(1.0, &wmat, &cols, 0.0, &mut o);
            for (c, mut row) in o.outer_iter_mut().enumerate() {
                let bc = bias[(c, 0, 0, 0)];
                row.mapv_inplace(|v| v + bc);
            }
            if keep_cols {
                cols_cache.push(cols.clone());
            }
        }
        let rg = self.needs(x) || self.needs(w) || self.needs(b);
        self.push(
            out,
            Op::Conv2d {
                x,
                w,
                b,
                pad,
                cols: cols_cache,
            },
            rg,
        )
    }

    /// 2x2 max pooling with stride 2 (odd trailing rows/columns are dropped).
    pub fn max_pool2(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let (n, c, h, w) = xv.dim();
        let (ho, wo) = (h / 2, w / 2);
        let xs = xv.as_slice().expect("standard layout");
        let mut out = Array4::<f64>::zeros((n, c, ho, wo));
        let mut argmax = Vec::with_capacity(n * c * ho * wo);
        {
            let os = out.as_slice_mut().expect("standard layout");
            let mut idx = 0;
            for plane in 0..n * c {
                let base = plane * h * w;
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut best = base + 2 * oy * w + 2 * ox;
                        for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                            let cand = base + (2 * oy + dy) * w + 2 * ox + dx;
                            if xs[cand] > xs[best] {
                                best = cand;
                            }
                        }
                        os[idx] = xs[best];
                        argmax.push(best);
                        idx += 1;
                    }
                }
            }
        }
        let rg = self.needs(x);
        self.push(out, Op::MaxPool2 { x, argmax }, rg)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).mapv(|v| v.max(0.0));
        let rg = self.needs(x);
        self.push(out, Op::Relu(x), rg)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out = self.value(x).mapv(f64::tanh);
        let rg = self.needs(x);
        self.push(out, Op::Tanh(x), rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).mapv(|v| 1.0 / (1.0 + (-v).exp()));
        let rg = self.needs(x);
        self.push(out, Op::Sigmoid(x), rg)
    }

    /// Adds the constant `c` to every element.
    pub fn offset(&mut self, x: Var, c: f64) -> Var {
        let out = self.value(x).mapv(|v| v + c);
        let rg = self.needs(x);
        self.push(out, Op::Offset(x), rg)
    }

    /// `ln(1 + e^x)`, computed without overflow.
    pub fn softplus(&mut self, x: Var) -> Var {
        let out = self.value(x).mapv(|v| v.max(0.0) + (-v.abs()).exp().ln_1p());
        let rg = self.needs(x);
        self.push(out, Op::Softplus(x), rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).dim(), self.value(b).dim(), "add operands");
        let out = self.value(a) + self.value(b);
        let rg = self.needs(a) || self.needs(b);
        self.push(out, Op::Add(a, b), rg)
    }

    /// Attention residual learning: `(1 + mask) * trunk`, elementwise.
    pub fn attention_combine(&mut self, trunk: Var, mask: Var) -> Var {
        assert_eq!(self.value(trunk).dim(), self.value(mask).dim(), "trunk/mask shape");
        let mut out = self.value(trunk).clone();
        Zip::from(&mut out)
            .and(self.value(mask))
            .for_each(|t, &m| *t *= 1.0 + m);
        let rg = self.needs(trunk) || self.needs(mask);
        self.push(out, Op::AttentionCombine { trunk, mask }, rg)
    }

    /// Bilinear resize of the spatial axes.
    pub fn resize(&mut self, x: Var, rows: usize, cols: usize) -> Var {
        let xv = self.value(x);
        let (n, c, h, w) = xv.dim();
        let ty = bilinear_taps(h, rows);
        let tx = bilinear_taps(w, cols);
        let mut out = Array4::<f64>::zeros((n, c, rows, cols));
        for i in 0..n {
            for ch in 0..c {
                let src = xv.slice(s![i, ch, .., ..]);
                let mut dst = out.slice_mut(s![i, ch, .., ..]);
                for (r, y) in ty.iter().enumerate() {
                    for (q, xt) in tx.iter().enumerate() {
                        let top = src[(y.lo, xt.lo)] + xt.frac * (src[(y.lo, xt.hi)] - src[(y.lo, xt.lo)]);
                        let bot = src[(y.hi, xt.lo)] + xt.frac * (src[(y.hi, xt.hi)] - src[(y.hi, xt.lo)]);
                        dst[(r, q)] = top + y.frac * (bot - top);
                    }
                }
            }
        }
        let rg = self.needs(x);
        self.push(out, Op::Resize { x, rows: ty, cols: tx }, rg)
    }

    pub fn flatten(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let n = xv.dim().0;
        let f = xv.len() / n.max(1);
        let out = xv
            .clone()
            .into_shape_with_order((n, f, 1, 1))
            .expect("standard layout");
        let rg = self.needs(x);
        self.push(out, Op::Flatten(x), rg)
    }

    /// Dense layer on `(N, F, 1, 1)`; weights `(Out, F, 1, 1)`, bias `(Out, 1, 1, 1)`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let (n, f, _, _) = self.value(x).dim();
        let out_dim = self.value(w).dim().0;
        assert_eq!(self.value(w).dim().1, f, "linear fan-in");
        let x2 = as_matrix(self.value(x), n, f);
        let w2 = as_matrix(self.value(w), out_dim, f);
        let mut out = Array4::<f64>::zeros((n, out_dim, 1, 1));
        {
            let mut o = as_matrix_mut(&mut out, n, out_dim);
            general_mat_mul(1.0, &x2, &w2.t(), 0.0, &mut o);
            let bias = self.value(b);
            for mut row in o.outer_iter_mut() {
                for (j, v) in row.iter_mut().enumerate() {
                    *v += bias[(j, 0, 0, 0)];
                }
            }
        }
        let rg = self.needs(x) || self.needs(w) || self.needs(b);
        self.push(out, Op::Linear { x, w, b }, rg)
    }

    /// Mean cross-entropy of softmax(logits) against integer targets.
    pub fn softmax_cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Var {
        let (n, l, _, _) = self.value(logits).dim();
        assert_eq!(targets.len(), n, "one target per sample");
        let z = as_matrix(self.value(logits), n, l);
        let probs = softmax_rows(z);
        let per_sample: Vec<f64> = targets
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                let row = z.row(i);
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
                lse - row[t]
            })
            .collect();
        let mean = per_sample.iter().sum::<f64>() / n as f64;
        let rg = self.needs(logits);
        self.push(
            Array4::from_elem((1, 1, 1, 1), mean),
            Op::SoftmaxCrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
                per_sample,
            },
            rg,
        )
    }

    /// Softmax probabilities recorded by a cross-entropy node.
    pub fn probabilities(&self, loss: Var) -> &Array2<f64> {
        match &self.nodes[loss.0].op {
            Op::SoftmaxCrossEntropy { probs, .. } => probs,
            _ => panic!("not a cross-entropy node"),
        }
    }

    /// Per-sample losses recorded by a cross-entropy node.
    pub fn per_sample_losses(&self, loss: Var) -> &[f64] {
        match &self.nodes[loss.0].op {
            Op::SoftmaxCrossEntropy { per_sample, .. } => per_sample,
            _ => panic!("not a cross-entropy node"),
        }
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v)[(0, 0, 0, 0)]
    }

    /// Back-propagates from the scalar node `loss`.
    pub fn backward(&self, loss: Var) -> Gradients {
        let mut grads: Vec<Option<Array4<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        let mut params: Vec<Option<Array4<f64>>> = (0..self.store.len()).map(|_| None).collect();
        grads[loss.0] = Some(Array4::ones(self.value(loss).raw_dim()));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let g = match grads[idx].take() {
                Some(g) => g,
                None => continue,
            };
            match &node.op {
                Op::Input => {
                    grads[idx] = Some(g);
                }
                Op::Param(id) => {
                    accumulate(&mut params[id.0], g.clone());
                    grads[idx] = Some(g);
                }
                Op::Conv2d { x, w, b, pad, cols } => {
                    let (n, cin, h, wd) = self.value(*x).dim();
                    let (cout, _, k, _) = self.value(*w).dim();
                    let (ho, wo) = (g.dim().2, g.dim().3);
                    if self.needs(*b) {
                        let mut db = Array4::<f64>::zeros((cout, 1, 1, 1));
                        for i in 0..n {
                            for c in 0..cout {
                                db[(c, 0, 0, 0)] += g.slice(s![i, c, .., ..]).sum();
                            }
                        }
                        accumulate(&mut grads[b.0], db);
                    }
                    if self.needs(*w) {
                        let mut dw = Array4::<f64>::zeros((cout, cin, k, k));
                        {
                            let mut dwm = as_matrix_mut(&mut dw, cout, cin * k * k);
                            for (i, col) in cols.iter().enumerate() {
                                let gi = g.slice(s![i, .., .., ..]);
                                let gi = gi.into_shape_with_order((cout, ho * wo)).expect("layout");
                                general_mat_mul(1.0, &gi, &col.t(), 1.0, &mut dwm);
                            }
                        }
                        accumulate(&mut grads[w.0], dw);
                    }
                    if self.needs(*x) {
                        let wmat = as_matrix(self.value(*w), cout, cin * k * k);
                        let mut dx = Array4::<f64>::zeros((n, cin, h, wd));
                        let mut dcols = Array2::<f64>::zeros((cin * k * k, ho * wo));
                        let dxs = dx.as_slice_mut().expect("layout");
                        for i in 0..n {
                            let gi = g.slice(s![i, .., .., ..]);
                            let gi = gi.into_shape_with_order((cout, ho * wo)).expect("layout");
                            general_mat_mul(1.0, &wmat.t(), &gi, 0.0, &mut dcols);
                            col2im(
                                &dcols,
                                cin,
                                h,
                                wd,
                                k,
                                *pad,
                                &mut dxs[i * cin * h * wd..(i + 1) * cin * h * wd],
                            );
                        }
                        accumulate(&mut grads[x.0], dx);
                    }
                }
                Op::MaxPool2 { x, argmax } => {
                    let mut dx = Array4::<f64>::zeros(self.value(*x).raw_dim());
                    let dxs = dx.as_slice_mut().expect("layout");
                    for (gv, &src) in g.iter().zip(argmax) {
                        dxs[src] += gv;
                    }
                    accumulate(&mut grads[x.0], dx);
                }
                Op::Relu(x) => {
                    let mut dx = g;
                    Zip::from(&mut dx)
                        .and(&node.value)
                        .for_each(|d, &y| if y <= 0.0 { *d = 0.0 });
                    accumulate(&mut grads[x.0], dx);
                }
                Op::Tanh(x) => {
                    let mut dx = g;
                    Zip::from(&mut dx).and(&node.value).for_each(|d, &y| *d *= 1.0 - y * y);
                    accumulate(&mut grads[x.0], dx);
                }
                Op::Sigmoid(x) => {
                    let mut dx = g;
                    Zip::from(&mut dx).and(&node.value).for_each(|d, &y| *d *= y * (1.0 - y));
                    accumulate(&mut grads[x.0], dx);
                }
                Op::Offset(x) => accumulate(&mut grads[x.0], g),
                Op::Softplus(x) => {
                    let mut dx = g;
                    Zip::from(&mut dx)
                        .and(&self.nodes[x.0].value)
                        .for_each(|d, &v| *d *= 1.0 / (1.0 + (-v).exp()));
                    accumulate(&mut grads[x.0], dx);
                }
                Op::Add(a, b) => {
                    if self.needs(*b) {
                        accumulate(&mut grads[b.0], g.clone());
                    }
                    if self.needs(*a) {
                        accumulate(&mut grads[a.0], g);
                    }
                }
                Op::AttentionCombine { trunk, mask } => {
                    if self.needs(*mask) {
                        let mut dm = g.clone();
                        dm *= self.value(*trunk);
                        accumulate(&mut grads[mask.0], dm);
                    }
                    if self.needs(*trunk) {
                        let mut dt = g;
                        Zip::from(&mut dt).and(self.value(*mask)).for_each(|d, &m| *d *= 1.0 + m);
                        accumulate(&mut grads[trunk.0], dt);
                    }
                }
                Op::Resize { x, rows, cols } => {
                    let (n, c, h, w) = self.value(*x).dim();
                    let mut dx = Array4::<f64>::zeros((n, c, h, w));
                    for i in 0..n {
                        for ch in 0..c {
                            let gs = g.slice(s![i, ch, .., ..]);
                            let mut d = dx.slice_mut(s![i, ch, .., ..]);
                            for (r, y) in rows.iter().enumerate() {
                                for (q, xt) in cols.iter().enumerate() {
                                    let v = gs[(r, q)];
                                    let top = v * (1.0 - y.frac);
                                    let bot = v * y.frac;
                                    d[(y.lo, xt.lo)] += top * (1.0 - xt.frac);
                                    d[(y.lo, xt.hi)] += top * xt.frac;
                                    d[(y.hi, xt.lo)] += bot * (1.0 - xt.frac);
                                    d[(y.hi, xt.hi)] += bot * xt.frac;
                                }
                            }
                        }
                    }
                    accumulate(&mut grads[x.0], dx);
                }
                Op::Flatten(x) => {
                    let dx = g
                        .into_shape_with_order(self.value(*x).raw_dim())
                        .expect("standard layout");
                    accumulate(&mut grads[x.0], dx);
                }
                Op::Linear { x, w, b } => {
                    let (n, f, _, _) = self.value(*x).dim();
                    let out_dim = self.value(*w).dim().0;
                    let g2 = as_matrix(&g, n, out_dim);
                    if self.needs(*b) {
                        let mut db = Array4::<f64>::zeros((out_dim, 1, 1, 1));
                        for row in g2.outer_iter() {
                            for (j, v) in row.iter().enumerate() {
                                db[(j, 0, 0, 0)] += v;
                            }
                        }
                        accumulate(&mut grads[b.0], db);
                    }
                    if self.needs(*w) {
                        let x2 = as_matrix(self.value(*x), n, f);
                        let mut dw = Array4::<f64>::zeros((out_dim, f, 1, 1));
                        general_mat_mul(1.0, &g2.t(), &x2, 0.0, &mut as_matrix_mut(&mut dw, out_dim, f));
                        accumulate(&mut grads[w.0], dw);
                    }
                    if self.needs(*x) {
                        let w2 = as_matrix(self.value(*w), out_dim, f);
                        let mut dx = Array4::<f64>::zeros((n, f, 1, 1));
                        general_mat_mul(1.0, &g2, &w2, 0.0, &mut as_matrix_mut(&mut dx, n, f));
                        accumulate(&mut grads[x.0], dx);
                    }
                }
                Op::SoftmaxCrossEntropy {
                    logits,
                    targets,
                    probs,
                    ..
                } => {
                    let (n, l) = probs.dim();
                    let scale = g[(0, 0, 0, 0)] / n as f64;
                    let mut dz = Array4::<f64>::zeros((n, l, 1, 1));
                    for i in 0..n {
                        for j in 0..l {
                            let onehot = if targets[i] == j { 1.0 } else { 0.0 };
                            dz[(i, j, 0, 0)] = scale * (probs[(i, j)] - onehot);
                        }
                    }
                    accumulate(&mut grads[logits.0], dz);
                }
            }
        }
        Gradients { nodes: grads, params }
    }
}

/// Row-wise numerically stable softmax.
pub fn softmax_rows(z: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = z.to_owned();
    for mut row in out.outer_iter_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let total = row.sum();
        row.mapv_inplace(|v| v / total);
    }
    out
}

/// Index of the largest entry; the lowest index wins exact ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
