//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! Nodes are appended in evaluation order, so walking the tape backwards is a
//! valid reverse topological order. `backward` takes a `floor`: nodes below it
//! receive no gradient, which lets one tape serve a loss whose upstream part
//! must be treated as constant.

use super::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Conv1d {
        x: Var,
        w: Var,
        b: Option<Var>,
        kernel: usize,
        stride: usize,
        pad: usize,
    },
    InstanceNorm {
        x: Var,
        inv_std: Vec<f64>,
    },
    GroupNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        groups: usize,
        xhat: Tensor,
        inv_std: Vec<f64>,
    },
    LeakyRelu {
        x: Var,
        slope: f64,
    },
    Upsample {
        x: Var,
        factor: usize,
    },
    Concat {
        parts: Vec<Var>,
    },
    Embedding {
        table: Var,
        ids: Vec<usize>,
    },
    Clamp {
        x: Var,
        lo: f64,
        hi: f64,
    },
    MeanAbsDiff {
        a: Var,
        b: Var,
    },
    Linear {
        terms: Vec<(Var, f64)>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Output length of a 1-D convolution.
pub fn conv_out_len(len: usize, kernel: usize, stride: usize, pad: usize) -> usize {
    (len + 2 * pad - kernel) / stride + 1
}

/// Valid output positions `[lo, hi)` for kernel tap `j`: those `t` with
/// `0 <= t*stride + j - pad < len`.
fn tap_range(len: usize, out_len: usize, j: usize, stride: usize, pad: usize) -> (usize, usize) {
    let lo = if j >= pad { 0 } else { (pad - j).div_ceil(stride) };
    let hi = if len + pad <= j {
        0
    } else {
        ((len - 1 + pad - j) / stride + 1).min(out_len)
    };
    (lo, hi.max(lo))
}

const NORM_EPS: f64 = 1e-5;

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    /// `w` is `out x (in * kernel)` with tap `j` of input channel `i` at
    /// column `i * kernel + j`; `b` is `1 x out`.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Option<Var>, kernel: usize, stride: usize, pad: usize) -> Var {
        let xv = self.value(x);
        let wv = self.value(w);
        let (cin, len) = xv.shape();
        let cout = wv.rows();
        assert_eq!(wv.cols(), cin * kernel, "conv weight does not match input channels");
        let out_len = conv_out_len(len, kernel, stride, pad);
        let mut y = Tensor::zeros(cout, out_len);
        for o in 0..cout {
            let bias = b.map_or(0.0, |b| self.value(b).get(0, o));
            let wrow = wv.row(o);
            let yrow = y.row_mut(o);
            yrow.iter_mut().for_each(|v| *v = bias);
            for i in 0..cin {
                let xrow = xv.row(i);
                for j in 0..kernel {
                    let wij = wrow[i * kernel + j];
                    let (lo, hi) = tap_range(len, out_len, j, stride, pad);
                    if stride == 1 {
                        let src = &xrow[lo + j - pad..hi + j - pad];
                        for (yv, xv) in yrow[lo..hi].iter_mut().zip(src) {
                            *yv += wij * xv;
                        }
                    } else {
                        for t in lo..hi {
                            yrow[t] += wij * xrow[t * stride + j - pad];
                        }
                    }
                }
            }
        }
        self.push(
            y,
            Op::Conv1d {
                x,
                w,
                b,
                kernel,
                stride,
                pad,
            },
        )
    }

    /// Per-channel normalization over time, no affine parameters.
    pub fn instance_norm(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let (c, t) = xv.shape();
        let mut y = Tensor::zeros(c, t);
        let mut inv_std = Vec::with_capacity(c);
        for r in 0..c {
            let row = xv.row(r);
            let mean = row.iter().sum::<f64>() / t as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / t as f64;
            let inv = 1.0 / (var + NORM_EPS).sqrt();
            for (o, v) in y.row_mut(r).iter_mut().zip(row) {
                *o = (v - mean) * inv;
            }
            inv_std.push(inv);
        }
        self.push(y, Op::InstanceNorm { x, inv_std })
    }

    /// Group normalization with per-channel affine `gamma`, `beta` (`1 x C`).
    pub fn group_norm(&mut self, x: Var, gamma: Var, beta: Var, groups: usize) -> Var {
        let xv = self.value(x);
        let (c, t) = xv.shape();
        assert!(groups > 0 && c % groups == 0, "channels must divide into groups");
        let per = c / groups;
        let n = (per * t) as f64;
        let gv = self.value(gamma);
        let bv = self.value(beta);
        let mut xhat = Tensor::zeros(c, t);
        let mut y = Tensor::zeros(c, t);
        let mut inv_std = Vec::with_capacity(groups);
        for g in 0..groups {
            let block = &xv.data()[g * per * t..(g + 1) * per * t];
            let mean = block.iter().sum::<f64>() / n;
            let var = block.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let inv = 1.0 / (var + NORM_EPS).sqrt();
            inv_std.push(inv);
            for r in g * per..(g + 1) * per {
                let (ga, be) = (gv.get(0, r), bv.get(0, r));
                for k in 0..t {
                    let h = (xv.get(r, k) - mean) * inv;
                    xhat.row_mut(r)[k] = h;
                    y.row_mut(r)[k] = ga * h + be;
                }
            }
        }
        self.push(
            y,
            Op::GroupNorm {
                x,
                gamma,
                beta,
                groups,
                xhat,
                inv_std,
            },
        )
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let mut y = self.value(x).clone();
        y.data_mut().iter_mut().for_each(|v| {
            if *v <= 0.0 {
                *v *= slope
            }
        });
        self.push(y, Op::LeakyRelu { x, slope })
    }

    /// Nearest-neighbour repeat along time.
    pub fn upsample(&mut self, x: Var, factor: usize) -> Var {
        let xv = self.value(x);
        let (c, t) = xv.shape();
        let mut y = Tensor::zeros(c, t * factor);
        for r in 0..c {
            let src = xv.row(r);
            for (k, v) in y.row_mut(r).iter_mut().enumerate() {
                *v = src[k / factor];
            }
        }
        self.push(y, Op::Upsample { x, factor })
    }

    /// Stacks along the channel axis.
    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let t = self.value(parts[0]).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let v = self.value(p);
            assert_eq!(v.cols(), t, "concat requires equal lengths");
            data.extend_from_slice(v.data());
            rows += v.rows();
        }
        self.push(Tensor::from_vec(rows, t, data), Op::Concat { parts: parts.to_vec() })
    }

    /// Looks up rows of `table` (`n x dim`); output is `dim x ids.len()`.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Var {
        let tv = self.value(table);
        let dim = tv.cols();
        let mut y = Tensor::zeros(dim, ids.len());
        for (k, &id) in ids.iter().enumerate() {
            for e in 0..dim {
                y.row_mut(e)[k] = tv.get(id, e);
            }
        }
        self.push(
            y,
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
        )
    }

    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        let mut y = self.value(x).clone();
        y.data_mut().iter_mut().for_each(|v| *v = v.clamp(lo, hi));
        self.push(y, Op::Clamp { x, lo, hi })
    }

    /// Scalar `mean |a - b|`.
    pub fn mean_abs_diff(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.shape(), bv.shape(), "mean_abs_diff shape mismatch");
        let s = av.data().iter().zip(bv.data()).map(|(x, y)| (x - y).abs()).sum::<f64>() / av.len() as f64;
        self.push(Tensor::scalar(s), Op::MeanAbsDiff { a, b })
    }

    /// `sum_i c_i * x_i` over equally shaped inputs.
    pub fn linear(&mut self, terms: &[(Var, f64)]) -> Var {
        let (r, c) = self.value(terms[0].0).shape();
        let mut y = Tensor::zeros(r, c);
        for &(v, coef) in terms {
            let xv = self.value(v);
            assert_eq!(xv.shape(), (r, c), "linear combination shape mismatch");
            for (o, x) in y.data_mut().iter_mut().zip(xv.data()) {
                *o += coef * x;
            }
        }
        self.push(y, Op::Linear { terms: terms.to_vec() })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.linear(&[(a, 1.0), (b, 1.0)])
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        self.linear(&[(x, factor)])
    }

    /// Gradients of the scalar `root` with respect to every node at index
    /// `>= floor`.
    pub fn backward(&self, root: Var, floor: usize) -> Gradients {
        assert_eq!(self.value(root).len(), 1, "backward needs a scalar root");
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Tensor::scalar(1.0));
        for idx in (floor..=root.0).rev() {
            let Some(dy) = grads[idx].take() else { continue };
            self.propagate(idx, &dy, floor, &mut grads);
            grads[idx] = Some(dy);
        }
        Gradients { grads }
    }

    fn propagate(&self, idx: usize, dy: &Tensor, floor: usize, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[idx];
        let wants = |v: Var| v.0 >= floor;
        match &node.op {
            Op::Leaf => {}
            Op::Conv1d {
                x,
                w,
                b,
                kernel,
                stride,
                pad,
            } => {
                let (kernel, stride, pad) = (*kernel, *stride, *pad);
                let xv = self.value(*x);
                let wv = self.value(*w);
                let (cin, len) = xv.shape();
                let (cout, out_len) = dy.shape();
                if let Some(b) = b.filter(|b| wants(*b)) {
                    let mut db = Tensor::zeros(1, cout);
                    for o in 0..cout {
                        db.data_mut()[o] = dy.row(o).iter().sum();
                    }
                    accumulate(grads, b, db);
                }
                if wants(*w) {
                    let mut dw = Tensor::zeros(cout, cin * kernel);
                    for o in 0..cout {
                        let dyrow = dy.row(o);
                        let dwrow = dw.row_mut(o);
                        for i in 0..cin {
                            let xrow = xv.row(i);
                            for j in 0..kernel {
                                let (lo, hi) = tap_range(len, out_len, j, stride, pad);
                                let mut s = 0.0;
                                for t in lo..hi {
                                    s += dyrow[t] * xrow[t * stride + j - pad];
                                }
                                dwrow[i * kernel + j] = s;
                            }
                        }
                    }
                    accumulate(grads, *w, dw);
                }
                if wants(*x) {
                    let mut dx = Tensor::zeros(cin, len);
                    for o in 0..cout {
                        let dyrow = dy.row(o);
                        let wrow = wv.row(o);
                        for i in 0..cin {
                            let dxrow = dx.row_mut(i);
                            for j in 0..kernel {
                                let wij = wrow[i * kernel + j];
                                let (lo, hi) = tap_range(len, out_len, j, stride, pad);
                                for t in lo..hi {
                                    dxrow[t * stride + j - pad] += wij * dyrow[t];
                                }
                            }
                        }
                    }
                    accumulate(grads, *x, dx);
                }
            }
            Op::InstanceNorm { x, inv_std } => {
                if !wants(*x) {
                    return;
                }
                let y = &node.value;
                let (c, t) = y.shape();
                let n = t as f64;
                let mut dx = Tensor::zeros(c, t);
                for r in 0..c {
                    let (dyr, yr) = (dy.row(r), y.row(r));
                    let sum: f64 = dyr.iter().sum();
                    let dot: f64 = dyr.iter().zip(yr).map(|(a, b)| a * b).sum();
                    let k = inv_std[r] / n;
                    for (o, (d, h)) in dx.row_mut(r).iter_mut().zip(dyr.iter().zip(yr)) {
                        *o = k * (n * d - sum - h * dot);
                    }
                }
                accumulate(grads, *x, dx);
            }
            Op::GroupNorm {
                x,
                gamma,
                beta,
                groups,
                xhat,
                inv_std,
            } => {
                let (c, t) = xhat.shape();
                let gv = self.value(*gamma);
                if wants(*gamma) || wants(*beta) {
                    let mut dg = Tensor::zeros(1, c);
                    let mut db = Tensor::zeros(1, c);
                    for r in 0..c {
                        dg.data_mut()[r] = dy.row(r).iter().zip(xhat.row(r)).map(|(a, b)| a * b).sum();
                        db.data_mut()[r] = dy.row(r).iter().sum();
                    }
                    if wants(*gamma) {
                        accumulate(grads, *gamma, dg);
                    }
                    if wants(*beta) {
                        accumulate(grads, *beta, db);
                    }
                }
                if wants(*x) {
                    let per = c / groups;
                    let n = (per * t) as f64;
                    let mut dx = Tensor::zeros(c, t);
                    for g in 0..*groups {
                        let rows = g * per..(g + 1) * per;
                        let mut sum = 0.0;
                        let mut dot = 0.0;
                        for r in rows.clone() {
                            let ga = gv.get(0, r);
                            for k in 0..t {
                                let d = dy.get(r, k) * ga;
                                sum += d;
                                dot += d * xhat.get(r, k);
                            }
                        }
                        let kf = inv_std[g] / n;
                        for r in rows {
                            let ga = gv.get(0, r);
                            for k in 0..t {
                                let d = dy.get(r, k) * ga;
                                dx.row_mut(r)[k] = kf * (n * d - sum - xhat.get(r, k) * dot);
                            }
                        }
                    }
                    accumulate(grads, *x, dx);
                }
            }
            Op::LeakyRelu { x, slope } => {
                if !wants(*x) {
                    return;
                }
                let xv = self.value(*x);
                let mut dx = dy.clone();
                for (d, v) in dx.data_mut().iter_mut().zip(xv.data()) {
                    if *v <= 0.0 {
                        *d *= slope;
                    }
                }
                accumulate(grads, *x, dx);
            }
            Op::Upsample { x, factor } => {
                if !wants(*x) {
                    return;
                }
                let (c, t) = self.value(*x).shape();
                let mut dx = Tensor::zeros(c, t);
                for r in 0..c {
                    let src = dy.row(r);
                    for (k, o) in dx.row_mut(r).iter_mut().enumerate() {
                        *o = src[k * factor..(k + 1) * factor].iter().sum();
                    }
                }
                accumulate(grads, *x, dx);
            }
            Op::Concat { parts } => {
                let t = dy.cols();
                let mut row = 0;
                for &p in parts {
                    let rows = self.value(p).rows();
                    if wants(p) {
                        let d = Tensor::from_vec(rows, t, dy.data()[row * t..(row + rows) * t].to_vec());
                        accumulate(grads, p, d);
                    }
                    row += rows;
                }
            }
            Op::Embedding { table, ids } => {
                if !wants(*table) {
                    return;
                }
                let (n, dim) = self.value(*table).shape();
                let mut dt = Tensor::zeros(n, dim);
                for (k, &id) in ids.iter().enumerate() {
                    for e in 0..dim {
                        dt.row_mut(id)[e] += dy.get(e, k);
                    }
                }
                accumulate(grads, *table, dt);
            }
            Op::Clamp { x, lo, hi } => {
                if !wants(*x) {
                    return;
                }
                let xv = self.value(*x);
                let mut dx = dy.clone();
                for (d, v) in dx.data_mut().iter_mut().zip(xv.data()) {
                    if *v < *lo || *v > *hi {
                        *d = 0.0;
                    }
                }
                accumulate(grads, *x, dx);
            }
            Op::MeanAbsDiff { a, b } => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let k = dy.item() / av.len() as f64;
                let mut da = Tensor::zeros(av.rows(), av.cols());
                for (o, (x, y)) in da.data_mut().iter_mut().zip(av.data().iter().zip(bv.data())) {
                    let d = x - y;
                    *o = if d > 0.0 {
                        k
                    } else if d < 0.0 {
                        -k
                    } else {
                        0.0
                    };
                }
                if wants(*b) {
                    let mut db = da.clone();
                    db.scale(-1.0);
                    accumulate(grads, *b, db);
                }
                if wants(*a) {
                    accumulate(grads, *a, da);
                }
            }
            Op::Linear { terms } => {
                for &(v, coef) in terms {
                    if wants(v) {
                        let mut d = dy.clone();
                        d.scale(coef);
                        accumulate(grads, v, d);
                    }
                }
            }
        }
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, d: Tensor) {
    match &mut grads[v.0] {
        Some(g) => g.add_assign(&d),
        slot => *slot = Some(d),
    }
}

#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient of `v`, or zeros of the given shape if nothing reached it.
    pub fn get_or_zeros(&self, v: Var, shape: (usize, usize)) -> Tensor {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(shape.0, shape.1))
    }
}
