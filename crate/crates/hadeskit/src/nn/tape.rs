//! Reverse-mode automatic differentiation over dense 2-D arrays.
//!
//! Every tensor in the model graph is a row-major `Array2<f64>`; vectors are
//! 1×n rows, scalars are 1×1. A [`Tape`] records operations in topological
//! order (parents always precede children), so a single reverse sweep
//! propagates gradients. The op set is exactly what the encoders, the fusion
//! module, and the detection head need — nothing speculative.
//!
//! Convolutions are expressed as an `UnfoldCausal` gather followed by a
//! matmul against a `(c_out, k·c_in)` weight, which keeps the whole engine
//! rank-2 and gives causality by construction (out-of-range taps read zero).

use ndarray::{s, Array2, Axis};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

enum Op {
    Leaf,
    /// a · b
    MatMul(usize, usize),
    /// a · bᵀ
    MatMulNT(usize, usize),
    Add(usize, usize),
    /// matrix + broadcast 1×n bias row
    AddBiasRow(usize, usize),
    Scale(usize, f64),
    Tanh(usize),
    Relu(usize),
    Ln(usize),
    Clamp(usize, f64, f64),
    /// Row-wise softmax; `false` mask entries get probability zero.
    /// A fully masked row becomes all-zero.
    SoftmaxRows(usize, Option<Vec<bool>>),
    /// Row-wise layer norm with learnable gain/shift (1×n each).
    LayerNorm {
        x: usize,
        gamma: usize,
        beta: usize,
        eps: f64,
    },
    ConcatCols(usize, usize),
    ConcatRows(usize, usize),
    SliceCols(usize, usize, usize),
    /// 1×n mean over rows.
    MeanRows(usize),
    /// r×1 max over columns; ties resolve to the lowest column index.
    RowMax(usize),
    /// Causal gather: out[t, j·c + ch] = x[t − (k−1−j)·dil, ch], zero when negative.
    UnfoldCausal {
        x: usize,
        k: usize,
        dilation: usize,
    },
    /// Zero out rows whose mask entry is `false`.
    ZeroRows(usize, Vec<bool>),
    /// 1×1 element extraction.
    Get(usize, usize, usize),
}

struct Node {
    value: Array2<f64>,
    op: Op,
    needs_grad: bool,
}

/// Gradient buffers produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Array2<f64>>>,
}

impl Gradients {
    /// Gradient of the loss w.r.t. `v`, zero-shaped if the node was never touched.
    pub fn take(&mut self, v: Var) -> Option<Array2<f64>> {
        self.grads[v.0].take()
    }

    pub fn get(&self, v: Var) -> Option<&Array2<f64>> {
        self.grads[v.0].as_ref()
    }
}

/// Operation recorder. Build one per forward pass; drop it afterwards.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self { nodes: Vec::with_capacity(256) }
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Array2<f64>, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, i: usize) -> bool {
        self.nodes[i].needs_grad
    }

    /// Trainable leaf.
    pub fn leaf(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Non-trainable input (data, positional tables, masks-as-values).
    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (ar, ac) = self.dim(a);
        let (br, bc) = self.dim(b);
        assert_eq!(ac, br, "matmul: {}x{} . {}x{}", ar, ac, br, bc);
        let value = self.nodes[a.0].value.dot(&self.nodes[b.0].value);
        let ng = self.needs(a.0) || self.needs(b.0);
        self.push(value, Op::MatMul(a.0, b.0), ng)
    }

    /// `a · bᵀ` without materializing the transpose as a node.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Var {
        let (ar, ac) = self.dim(a);
        let (br, bc) = self.dim(b);
        assert_eq!(ac, bc, "matmul_nt: {}x{} . ({}x{})ᵀ", ar, ac, br, bc);
        let value = self.nodes[a.0].value.dot(&self.nodes[b.0].value.t());
        let ng = self.needs(a.0) || self.needs(b.0);
        self.push(value, Op::MatMulNT(a.0, b.0), ng)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.dim(a), self.dim(b), "add: shape mismatch");
        let value = &self.nodes[a.0].value + &self.nodes[b.0].value;
        let ng = self.needs(a.0) || self.needs(b.0);
        self.push(value, Op::Add(a.0, b.0), ng)
    }

    /// `a + bias` where `bias` is a 1×n row broadcast over all rows of `a`.
    pub fn add_bias_row(&mut self, a: Var, bias: Var) -> Var {
        let (_, ac) = self.dim(a);
        let (br, bc) = self.dim(bias);
        assert_eq!((br, bc), (1, ac), "add_bias_row: bias must be 1x{}", ac);
        let value = &self.nodes[a.0].value + &self.nodes[bias.0].value.row(0);
        let ng = self.needs(a.0) || self.needs(bias.0);
        self.push(value, Op::AddBiasRow(a.0, bias.0), ng)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = &self.nodes[a.0].value * c;
        let ng = self.needs(a.0);
        self.push(value, Op::Scale(a.0, c), ng)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.nodes[a.0].value.mapv(f64::tanh);
        let ng = self.needs(a.0);
        self.push(value, Op::Tanh(a.0), ng)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.nodes[a.0].value.mapv(|x| x.max(0.0));
        let ng = self.needs(a.0);
        self.push(value, Op::Relu(a.0), ng)
    }

    pub fn ln(&mut self, a: Var) -> Var {
        let value = self.nodes[a.0].value.mapv(f64::ln);
        let ng = self.needs(a.0);
        self.push(value, Op::Ln(a.0), ng)
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let value = self.nodes[a.0].value.mapv(|x| x.clamp(lo, hi));
        let ng = self.needs(a.0);
        self.push(value, Op::Clamp(a.0, lo, hi), ng)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        self.softmax_rows_masked(a, None)
    }

    /// Row softmax where `key_mask[j] == false` forces probability zero in
    /// column j. Rows with no unmasked key come out all-zero rather than NaN.
    pub fn softmax_rows_masked(&mut self, a: Var, key_mask: Option<&[bool]>) -> Var {
        let x = &self.nodes[a.0].value;
        if let Some(m) = key_mask {
            assert_eq!(m.len(), x.ncols(), "softmax mask length");
        }
        let mut out = Array2::zeros(x.raw_dim());
        for (i, row) in x.outer_iter().enumerate() {
            let mut max = f64::NEG_INFINITY;
            for (j, &v) in row.iter().enumerate() {
                if key_mask.map_or(true, |m| m[j]) && v > max {
                    max = v;
                }
            }
            if max == f64::NEG_INFINITY {
                continue; // fully masked row stays zero
            }
            let mut denom = 0.0;
            for (j, &v) in row.iter().enumerate() {
                if key_mask.map_or(true, |m| m[j]) {
                    let e = (v - max).exp();
                    out[[i, j]] = e;
                    denom += e;
                }
            }
            for j in 0..row.len() {
                out[[i, j]] /= denom;
            }
        }
        let ng = self.needs(a.0);
        self.push(out, Op::SoftmaxRows(a.0, key_mask.map(|m| m.to_vec())), ng)
    }

    /// Row-wise layer normalization: `(x − μ)/√(var + eps) · γ + β`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Var {
        let (_, n) = self.dim(x);
        assert_eq!(self.dim(gamma), (1, n), "layer_norm gamma");
        assert_eq!(self.dim(beta), (1, n), "layer_norm beta");
        let xv = &self.nodes[x.0].value;
        let g = self.nodes[gamma.0].value.row(0).to_owned();
        let b = self.nodes[beta.0].value.row(0).to_owned();
        let mut out = Array2::zeros(xv.raw_dim());
        for (i, row) in xv.outer_iter().enumerate() {
            let mu = row.mean().unwrap();
            let var = row.mapv(|v| (v - mu) * (v - mu)).mean().unwrap();
            let inv = 1.0 / (var + eps).sqrt();
            for j in 0..n {
                out[[i, j]] = (row[j] - mu) * inv * g[j] + b[j];
            }
        }
        let ng = self.needs(x.0) || self.needs(gamma.0) || self.needs(beta.0);
        self.push(out, Op::LayerNorm { x: x.0, gamma: gamma.0, beta: beta.0, eps }, ng)
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let (ar, _) = self.dim(a);
        let (br, _) = self.dim(b);
        assert_eq!(ar, br, "concat_cols: row mismatch");
        let value = ndarray::concatenate(
            Axis(1),
            &[self.nodes[a.0].value.view(), self.nodes[b.0].value.view()],
        )
        .expect("concat_cols");
        let ng = self.needs(a.0) || self.needs(b.0);
        self.push(value, Op::ConcatCols(a.0, b.0), ng)
    }

    pub fn concat_rows(&mut self, a: Var, b: Var) -> Var {
        let (_, ac) = self.dim(a);
        let (_, bc) = self.dim(b);
        assert_eq!(ac, bc, "concat_rows: col mismatch");
        let value = ndarray::concatenate(
            Axis(0),
            &[self.nodes[a.0].value.view(), self.nodes[b.0].value.view()],
        )
        .expect("concat_rows");
        let ng = self.needs(a.0) || self.needs(b.0);
        self.push(value, Op::ConcatRows(a.0, b.0), ng)
    }

    pub fn slice_cols(&mut self, a: Var, lo: usize, hi: usize) -> Var {
        let (_, ac) = self.dim(a);
        assert!(lo < hi && hi <= ac, "slice_cols out of range");
        let value = self.nodes[a.0].value.slice(s![.., lo..hi]).to_owned();
        let ng = self.needs(a.0);
        self.push(value, Op::SliceCols(a.0, lo, hi), ng)
    }

    pub fn mean_rows(&mut self, a: Var) -> Var {
        let value = self.nodes[a.0]
            .value
            .mean_axis(Axis(0))
            .expect("mean_rows on empty")
            .insert_axis(Axis(0));
        let ng = self.needs(a.0);
        self.push(value, Op::MeanRows(a.0), ng)
    }

    /// Max over the column (feature/channel) dimension, r×1 output.
    pub fn row_max(&mut self, a: Var) -> Var {
        let x = &self.nodes[a.0].value;
        let mut out = Array2::zeros((x.nrows(), 1));
        for (i, row) in x.outer_iter().enumerate() {
            let mut best = f64::NEG_INFINITY;
            for &v in row.iter() {
                if v > best {
                    best = v;
                }
            }
            out[[i, 0]] = best;
        }
        let ng = self.needs(a.0);
        self.push(out, Op::RowMax(a.0), ng)
    }

    /// Gather the causal receptive field of a width-`k`, dilation-`dilation`
    /// convolution: output row t holds taps t−(k−1)·dil … t (oldest first),
    /// zero-padded on the left. Shape T×c → T×(k·c).
    pub fn unfold_causal(&mut self, x: Var, k: usize, dilation: usize) -> Var {
        assert!(k >= 1 && dilation >= 1);
        let xv = &self.nodes[x.0].value;
        let (t, c) = xv.dim();
        let mut out = Array2::zeros((t, k * c));
        for row in 0..t {
            for j in 0..k {
                let offset = (k - 1 - j) * dilation;
                if offset <= row {
                    let src = row - offset;
                    for ch in 0..c {
                        out[[row, j * c + ch]] = xv[[src, ch]];
                    }
                }
            }
        }
        let ng = self.needs(x.0);
        self.push(out, Op::UnfoldCausal { x: x.0, k, dilation }, ng)
    }

    /// Zero the rows where `mask` is false (padding removal).
    pub fn zero_rows(&mut self, a: Var, mask: &[bool]) -> Var {
        let xv = &self.nodes[a.0].value;
        assert_eq!(mask.len(), xv.nrows(), "zero_rows mask length");
        let mut out = xv.clone();
        for (i, &keep) in mask.iter().enumerate() {
            if !keep {
                out.row_mut(i).fill(0.0);
            }
        }
        let ng = self.needs(a.0);
        self.push(out, Op::ZeroRows(a.0, mask.to_vec()), ng)
    }

    pub fn get(&mut self, a: Var, r: usize, c: usize) -> Var {
        let v = self.nodes[a.0].value[[r, c]];
        let ng = self.needs(a.0);
        self.push(Array2::from_elem((1, 1), v), Op::Get(a.0, r, c), ng)
    }

    pub fn dim(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.dim()
    }

    /// Reverse sweep from a 1×1 scalar node.
    pub fn backward(&self, root: Var) -> Gradients {
        assert_eq!(self.dim(root), (1, 1), "backward root must be scalar");
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(Array2::from_elem((1, 1), 1.0));

        for i in (0..self.nodes.len()).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let g = match grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            self.backprop_node(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Gradients { grads }
    }

    fn accum(grads: &mut [Option<Array2<f64>>], idx: usize, delta: Array2<f64>) {
        match &mut grads[idx] {
            Some(g) => *g += &delta,
            slot @ None => *slot = Some(delta),
        }
    }

    fn backprop_node(&self, i: usize, g: &Array2<f64>, grads: &mut Vec<Option<Array2<f64>>>) {
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.needs(*a) {
                    let d = g.dot(&self.nodes[*b].value.t());
                    Self::accum(grads, *a, d);
                }
                if self.needs(*b) {
                    let d = self.nodes[*a].value.t().dot(g);
                    Self::accum(grads, *b, d);
                }
            }
            Op::MatMulNT(a, b) => {
                if self.needs(*a) {
                    let d = g.dot(&self.nodes[*b].value);
                    Self::accum(grads, *a, d);
                }
                if self.needs(*b) {
                    let d = g.t().dot(&self.nodes[*a].value);
                    Self::accum(grads, *b, d);
                }
            }
            Op::Add(a, b) => {
                if self.needs(*a) {
                    Self::accum(grads, *a, g.clone());
                }
                if self.needs(*b) {
                    Self::accum(grads, *b, g.clone());
                }
            }
            Op::AddBiasRow(a, bias) => {
                if self.needs(*a) {
                    Self::accum(grads, *a, g.clone());
                }
                if self.needs(*bias) {
                    let d = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    Self::accum(grads, *bias, d);
                }
            }
            Op::Scale(a, c) => {
                if self.needs(*a) {
                    Self::accum(grads, *a, g * *c);
                }
            }
            Op::Tanh(a) => {
                if self.needs(*a) {
                    let y = &self.nodes[i].value;
                    Self::accum(grads, *a, g * &y.mapv(|v| 1.0 - v * v));
                }
            }
            Op::Relu(a) => {
                if self.needs(*a) {
                    let x = &self.nodes[*a].value;
                    Self::accum(grads, *a, g * &x.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 }));
                }
            }
            Op::Ln(a) => {
                if self.needs(*a) {
                    let x = &self.nodes[*a].value;
                    Self::accum(grads, *a, g * &x.mapv(|v| 1.0 / v));
                }
            }
            Op::Clamp(a, lo, hi) => {
                if self.needs(*a) {
                    let x = &self.nodes[*a].value;
                    let pass = x.mapv(|v| if v > *lo && v < *hi { 1.0 } else { 0.0 });
                    Self::accum(grads, *a, g * &pass);
                }
            }
            Op::SoftmaxRows(a, mask) => {
                if self.needs(*a) {
                    let y = &self.nodes[i].value;
                    let mut d = Array2::zeros(y.raw_dim());
                    for r in 0..y.nrows() {
                        let mut dot = 0.0;
                        for c in 0..y.ncols() {
                            dot += g[[r, c]] * y[[r, c]];
                        }
                        for c in 0..y.ncols() {
                            if mask.as_ref().map_or(true, |m| m[c]) {
                                d[[r, c]] = y[[r, c]] * (g[[r, c]] - dot);
                            }
                        }
                    }
                    Self::accum(grads, *a, d);
                }
            }
            Op::LayerNorm { x, gamma, beta, eps } => {
                let xv = &self.nodes[*x].value;
                let gv = self.nodes[*gamma].value.row(0).to_owned();
                let n = xv.ncols() as f64;
                let mut dx = Array2::zeros(xv.raw_dim());
                let mut dgamma = Array2::zeros((1, xv.ncols()));
                let mut dbeta = Array2::zeros((1, xv.ncols()));
                for (r, row) in xv.outer_iter().enumerate() {
                    let mu = row.mean().unwrap();
                    let var = row.mapv(|v| (v - mu) * (v - mu)).mean().unwrap();
                    let inv = 1.0 / (var + eps).sqrt();
                    // h = dy ⊙ γ; dx = inv · (h − mean(h) − x̂ · mean(h ⊙ x̂))
                    let mut mean_h = 0.0;
                    let mut mean_hx = 0.0;
                    for c in 0..xv.ncols() {
                        let xhat = (row[c] - mu) * inv;
                        let h = g[[r, c]] * gv[c];
                        mean_h += h;
                        mean_hx += h * xhat;
                        dgamma[[0, c]] += g[[r, c]] * xhat;
                        dbeta[[0, c]] += g[[r, c]];
                    }
                    mean_h /= n;
                    mean_hx /= n;
                    for c in 0..xv.ncols() {
                        let xhat = (row[c] - mu) * inv;
                        let h = g[[r, c]] * gv[c];
                        dx[[r, c]] = inv * (h - mean_h - xhat * mean_hx);
                    }
                }
                if self.needs(*x) {
                    Self::accum(grads, *x, dx);
                }
                if self.needs(*gamma) {
                    Self::accum(grads, *gamma, dgamma);
                }
                if self.needs(*beta) {
                    Self::accum(grads, *beta, dbeta);
                }
            }
            Op::ConcatCols(a, b) => {
                let na = self.nodes[*a].value.ncols();
                if self.needs(*a) {
                    Self::accum(grads, *a, g.slice(s![.., ..na]).to_owned());
                }
                if self.needs(*b) {
                    Self::accum(grads, *b, g.slice(s![.., na..]).to_owned());
                }
            }
            Op::ConcatRows(a, b) => {
                let na = self.nodes[*a].value.nrows();
                if self.needs(*a) {
                    Self::accum(grads, *a, g.slice(s![..na, ..]).to_owned());
                }
                if self.needs(*b) {
                    Self::accum(grads, *b, g.slice(s![na.., ..]).to_owned());
                }
            }
            Op::SliceCols(a, lo, _hi) => {
                if self.needs(*a) {
                    let mut d = Array2::zeros(self.nodes[*a].value.raw_dim());
                    d.slice_mut(s![.., *lo..*lo + g.ncols()]).assign(g);
                    Self::accum(grads, *a, d);
                }
            }
            Op::MeanRows(a) => {
                if self.needs(*a) {
                    let r = self.nodes[*a].value.nrows();
                    let mut d = Array2::zeros(self.nodes[*a].value.raw_dim());
                    let scale = 1.0 / r as f64;
                    for row in 0..r {
                        for c in 0..d.ncols() {
                            d[[row, c]] = g[[0, c]] * scale;
                        }
                    }
                    Self::accum(grads, *a, d);
                }
            }
            Op::RowMax(a) => {
                if self.needs(*a) {
                    let x = &self.nodes[*a].value;
                    let mut d = Array2::zeros(x.raw_dim());
                    for (r, row) in x.outer_iter().enumerate() {
                        let mut best = f64::NEG_INFINITY;
                        let mut arg = 0;
                        for (c, &v) in row.iter().enumerate() {
                            if v > best {
                                best = v;
                                arg = c;
                            }
                        }
                        d[[r, arg]] = g[[r, 0]];
                    }
                    Self::accum(grads, *a, d);
                }
            }
            Op::UnfoldCausal { x, k, dilation } => {
                if self.needs(*x) {
                    let (t, c) = self.nodes[*x].value.dim();
                    let mut d = Array2::zeros((t, c));
                    for row in 0..t {
                        for j in 0..*k {
                            let offset = (*k - 1 - j) * *dilation;
                            if offset <= row {
                                let src = row - offset;
                                for ch in 0..c {
                                    d[[src, ch]] += g[[row, j * c + ch]];
                                }
                            }
                        }
                    }
                    Self::accum(grads, *x, d);
                }
            }
            Op::ZeroRows(a, mask) => {
                if self.needs(*a) {
                    let mut d = g.clone();
                    for (r, &keep) in mask.iter().enumerate() {
                        if !keep {
                            d.row_mut(r).fill(0.0);
                        }
                    }
                    Self::accum(grads, *a, d);
                }
            }
            Op::Get(a, r, c) => {
                if self.needs(*a) {
                    let mut d = Array2::zeros(self.nodes[*a].value.raw_dim());
                    d[[*r, *c]] = g[[0, 0]];
                    Self::accum(grads, *a, d);
                }
            }
        }
    }
}
