//! Reverse-mode automatic differentiation over dense `f64` matrices.
//!
//! A [`Tape`] records every operation of one forward pass. Values are
//! always two-dimensional; scalars are `1 x 1` and vectors are single rows
//! or columns. Binary element-wise operations broadcast their *second*
//! operand when it is a row (`1 x m`), a column (`n x 1`) or a scalar.

use ndarray::{s, Array2, Axis, Zip};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    MatMul(Var, Var),
    Transpose(Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Exp(Var),
    Ln(Var, f64),
    Recip(Var),
    Square(Var),
    Sqrt(Var),
    Sum(Var),
    SumRows(Var),
    SumCols(Var),
    MaskedSoftmax(Var),
    LogSoftmax(Var),
    LayerNorm { x: Var, eps: f64 },
    SliceCols(Var, usize, usize),
    ConcatCols(Vec<Var>),
    GatherRows(Var, Vec<usize>),
    GatherSub(Var, Vec<usize>),
    ScatterRows { base: Var, src: Var, idx: Vec<usize> },
    Pick(Var, Vec<(usize, usize)>),
    PairwiseSqDist(Var),
}

#[derive(Debug)]
struct Node {
    value: Array2<f64>,
    op: Op,
    needs_grad: bool,
}

/// Records a computation and replays it backwards.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Grads {
    grads: Vec<Option<Array2<f64>>>,
}

impl Grads {
    pub fn get(&self, v: Var) -> Option<&Array2<f64>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Array2<f64>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

fn broadcast_kind(a: (usize, usize), b: (usize, usize)) -> Broadcast {
    if a == b {
        Broadcast::Same
    } else if b == (1, 1) {
        Broadcast::Scalar
    } else if b.0 == 1 && b.1 == a.1 {
        Broadcast::Row
    } else if b.1 == 1 && b.0 == a.0 {
        Broadcast::Col
    } else {
        panic!("incompatible shapes for broadcast: {a:?} and {b:?}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Broadcast {
    Same,
    Scalar,
    Row,
    Col,
}

/// Sums `g` back down to the shape of a broadcast operand.
fn reduce_to(g: &Array2<f64>, kind: Broadcast) -> Array2<f64> {
    match kind {
        Broadcast::Same => g.clone(),
        Broadcast::Scalar => Array2::from_elem((1, 1), g.sum()),
        Broadcast::Row => g.sum_axis(Axis(0)).insert_axis(Axis(0)),
        Broadcast::Col => g.sum_axis(Axis(1)).insert_axis(Axis(1)),
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Array2<f64>, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// A value that does not receive gradients.
    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn scalar(&mut self, x: f64) -> Var {
        self.constant(Array2::from_elem((1, 1), x))
    }

    /// A leaf that receives gradients.
    pub fn leaf(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.dim()
    }

    /// Value of a `1 x 1` variable.
    pub fn item(&self, v: Var) -> f64 {
        let val = self.value(v);
        debug_assert_eq!(val.dim(), (1, 1));
        val[[0, 0]]
    }

    fn binary_value(
        &self,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
    ) -> Array2<f64> {
        let av = self.value(a);
        let bv = self.value(b);
        let mut out = av.clone();
        match broadcast_kind(av.dim(), bv.dim()) {
            Broadcast::Same => Zip::from(&mut out).and(bv).for_each(|o, &y| *o = f(*o, y)),
            Broadcast::Scalar => {
                let y = bv[[0, 0]];
                out.mapv_inplace(|x| f(x, y));
            }
            Broadcast::Row => {
                for mut row in out.rows_mut() {
                    Zip::from(&mut row).and(bv.row(0)).for_each(|o, &y| *o = f(*o, y));
                }
            }
            Broadcast::Col => {
                for (mut row, &y) in out.rows_mut().into_iter().zip(bv.column(0)) {
                    row.mapv_inplace(|x| f(x, y));
                }
            }
        }
        out
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.binary_value(a, b, |x, y| x + y);
        let ng = self.ng(a) || self.ng(b);
        self.push(v, Op::Add(a, b), ng)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.binary_value(a, b, |x, y| x - y);
        let ng = self.ng(a) || self.ng(b);
        self.push(v, Op::Sub(a, b), ng)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.binary_value(a, b, |x, y| x * y);
        let ng = self.ng(a) || self.ng(b);
        self.push(v, Op::Mul(a, b), ng)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a) * c;
        let ng = self.ng(a);
        self.push(v, Op::Scale(a, c), ng)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a) + c;
        let ng = self.ng(a);
        self.push(v, Op::AddScalar(a), ng)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        let ng = self.ng(a) || self.ng(b);
        self.push(v, Op::MatMul(a, b), ng)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).t().to_owned();
        let ng = self.ng(a);
        self.push(v, Op::Transpose(a), ng)
    }

    /// `x W + b` with `b` a row vector.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Var {
        let xw = self.matmul(x, w);
        self.add(xw, b)
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let v = self.value(a).mapv(f);
        let ng = self.ng(a);
        self.push(v, op, ng)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.max(0.0), Op::Relu(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, f64::exp, Op::Exp(a))
    }

    /// `ln(x + eps)`.
    pub fn ln(&mut self, a: Var, eps: f64) -> Var {
        self.unary(a, move |x| (x + eps).ln(), Op::Ln(a, eps))
    }

    /// `1 / (x + eps)`.
    pub fn recip(&mut self, a: Var, eps: f64) -> Var {
        self.unary(a, move |x| 1.0 / (x + eps), Op::Recip(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, |x| x * x, Op::Square(a))
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        self.unary(a, f64::sqrt, Op::Sqrt(a))
    }

    /// Sum of all entries, as a scalar.
    pub fn sum(&mut self, a: Var) -> Var {
        let v = Array2::from_elem((1, 1), self.value(a).sum());
        let ng = self.ng(a);
        self.push(v, Op::Sum(a), ng)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len() as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    /// Row sums, `n x 1`.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let v = self.value(a).sum_axis(Axis(1)).insert_axis(Axis(1));
        let ng = self.ng(a);
        self.push(v, Op::SumRows(a), ng)
    }

    /// Column sums, `1 x m`.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let v = self.value(a).sum_axis(Axis(0)).insert_axis(Axis(0));
        let ng = self.ng(a);
        self.push(v, Op::SumCols(a), ng)
    }

    /// Row-wise softmax restricted to entries where `mask` is true.
    /// Masked-out entries are exactly zero. Every row needs at least one
    /// unmasked entry.
    pub fn masked_softmax(&mut self, a: Var, mask: Array2<bool>) -> Var {
        let av = self.value(a);
        assert_eq!(av.dim(), mask.dim(), "mask shape mismatch");
        let (n, m) = av.dim();
        let src = av.as_standard_layout();
        let mask = mask.as_standard_layout();
        let (src, msk) = (src.as_slice().expect("standard layout"), mask.as_slice().expect("standard layout"));
        let mut out = vec![0.0; n * m];
        for r in 0..n {
            let (x, mk, o) = (&src[r * m..(r + 1) * m], &msk[r * m..(r + 1) * m], &mut out[r * m..(r + 1) * m]);
            assert!(mk.iter().any(|&a| a), "masked softmax row has no active entries");
            let max = (0..m).filter(|&k| mk[k]).map(|k| x[k]).fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for k in 0..m {
                if mk[k] {
                    o[k] = (x[k] - max).exp();
                    total += o[k];
                }
            }
            let inv = 1.0 / total;
            for v in o.iter_mut() {
                *v *= inv;
            }
        }
        let out = Array2::from_shape_vec((n, m), out).expect("shape matches");
        let ng = self.ng(a);
        self.push(out, Op::MaskedSoftmax(a), ng)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let mask = Array2::from_elem(self.shape(a), true);
        self.masked_softmax(a, mask)
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        for mut row in out.rows_mut() {
            let max = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
            let lse = max + row.iter().map(|&x| (x - max).exp()).sum::<f64>().ln();
            row.mapv_inplace(|x| x - lse);
        }
        let ng = self.ng(a);
        self.push(out, Op::LogSoftmax(a), ng)
    }

    /// Per-row standardisation (no affine part).
    pub fn layer_norm(&mut self, x: Var, eps: f64) -> Var {
        let mut out = self.value(x).clone();
        for mut row in out.rows_mut() {
            let m = row.len() as f64;
            let mean = row.sum() / m;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / m;
            let inv = 1.0 / (var + eps).sqrt();
            row.mapv_inplace(|v| (v - mean) * inv);
        }
        let ng = self.ng(x);
        self.push(out, Op::LayerNorm { x, eps }, ng)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let v = self.value(a).slice(s![.., start..end]).to_owned();
        let ng = self.ng(a);
        self.push(v, Op::SliceCols(a, start, end), ng)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let v = ndarray::concatenate(Axis(1), &views).expect("row counts must agree");
        let ng = parts.iter().any(|&p| self.ng(p));
        self.push(v, Op::ConcatCols(parts.to_vec()), ng)
    }

    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Var {
        let v = self.value(a).select(Axis(0), idx);
        let ng = self.ng(a);
        self.push(v, Op::GatherRows(a, idx.to_vec()), ng)
    }

    /// `a[idx, idx]`.
    pub fn gather_sub(&mut self, a: Var, idx: &[usize]) -> Var {
        let v = self.value(a).select(Axis(0), idx).select(Axis(1), idx);
        let ng = self.ng(a);
        self.push(v, Op::GatherSub(a, idx.to_vec()), ng)
    }

    /// Copy of `base` with row `idx[k]` replaced by row `k` of `src`.
    pub fn scatter_rows(&mut self, base: Var, src: Var, idx: &[usize]) -> Var {
        let mut v = self.value(base).clone();
        let sv = self.value(src);
        assert_eq!(sv.nrows(), idx.len(), "scatter source rows must match index count");
        for (k, &i) in idx.iter().enumerate() {
            v.row_mut(i).assign(&sv.row(k));
        }
        let ng = self.ng(base) || self.ng(src);
        self.push(
            v,
            Op::ScatterRows {
                base,
                src,
                idx: idx.to_vec(),
            },
            ng,
        )
    }

    /// Selected entries as a `k x 1` column.
    pub fn pick(&mut self, a: Var, at: &[(usize, usize)]) -> Var {
        let av = self.value(a);
        let v = Array2::from_shape_fn((at.len(), 1), |(k, _)| av[at[k]]);
        let ng = self.ng(a);
        self.push(v, Op::Pick(a, at.to_vec()), ng)
    }

    /// `D[i, j] = |z_i - z_j|^2` over rows of `z`.
    pub fn pairwise_sq_dist(&mut self, z: Var) -> Var {
        let zv = self.value(z);
        let sq: Vec<f64> = zv.rows().into_iter().map(|r| r.dot(&r)).collect();
        let mut d = zv.dot(&zv.t()) * -2.0;
        for ((i, j), v) in d.indexed_iter_mut() {
            *v = if i == j { 0.0 } else { *v + sq[i] + sq[j] };
        }
        let ng = self.ng(z);
        self.push(d, Op::PairwiseSqDist(z), ng)
    }

    /// Gradients of the scalar `loss` with respect to every recorded value
    /// that depends on a gradient-carrying leaf.
    pub fn backward(&self, loss: Var) -> Grads {
        assert_eq!(self.value(loss).dim(), (1, 1), "loss must be a scalar");
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Array2::ones((1, 1)));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Grads { grads }
    }

    fn propagate(&self, idx: usize, g: &Array2<f64>, grads: &mut [Option<Array2<f64>>]) {
        let node = &self.nodes[idx];
        let out = &node.value;
        let mut acc = |v: Var, delta: Array2<f64>| {
            if !self.nodes[v.0].needs_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => *existing += &delta,
                slot @ None => *slot = Some(delta),
            }
        };

        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                let kind = broadcast_kind(self.shape(*a), self.shape(*b));
                acc(*a, g.clone());
                acc(*b, reduce_to(g, kind));
            }
            Op::Sub(a, b) => {
                let kind = broadcast_kind(self.shape(*a), self.shape(*b));
                acc(*a, g.clone());
                acc(*b, -reduce_to(g, kind));
            }
            Op::Mul(a, b) => {
                let av = self.value(*a);
                let bv = self.value(*b);
                let kind = broadcast_kind(av.dim(), bv.dim());
                if self.ng(*a) {
                    let ga = match kind {
                        Broadcast::Same => g * bv,
                        Broadcast::Scalar => g * bv[[0, 0]],
                        Broadcast::Row | Broadcast::Col => g * bv,
                    };
                    acc(*a, ga);
                }
                if self.ng(*b) {
                    acc(*b, reduce_to(&(g * av), kind));
                }
            }
            Op::Scale(a, c) => acc(*a, g * *c),
            Op::AddScalar(a) => acc(*a, g.clone()),
            Op::MatMul(a, b) => {
                if self.ng(*a) {
                    acc(*a, g.dot(&self.value(*b).t()));
                }
                if self.ng(*b) {
                    acc(*b, self.value(*a).t().dot(g));
                }
            }
            Op::Transpose(a) => acc(*a, g.t().to_owned()),
            Op::Sigmoid(a) => acc(*a, Zip::from(g).and(out).map_collect(|&g, &y| g * y * (1.0 - y))),
            Op::Tanh(a) => acc(*a, Zip::from(g).and(out).map_collect(|&g, &y| g * (1.0 - y * y))),
            Op::Relu(a) => acc(
                *a,
                Zip::from(g)
                    .and(self.value(*a))
                    .map_collect(|&g, &x| if x > 0.0 { g } else { 0.0 }),
            ),
            Op::Exp(a) => acc(*a, g * out),
            Op::Ln(a, eps) => acc(*a, Zip::from(g).and(self.value(*a)).map_collect(|&g, &x| g / (x + eps))),
            Op::Recip(a) => acc(*a, Zip::from(g).and(out).map_collect(|&g, &y| -g * y * y)),
            Op::Square(a) => acc(*a, Zip::from(g).and(self.value(*a)).map_collect(|&g, &x| 2.0 * g * x)),
            Op::Sqrt(a) => acc(*a, Zip::from(g).and(out).map_collect(|&g, &y| 0.5 * g / y)),
            Op::Sum(a) => acc(*a, Array2::from_elem(self.shape(*a), g[[0, 0]])),
            Op::SumRows(a) => {
                let (n, m) = self.shape(*a);
                acc(*a, Array2::from_shape_fn((n, m), |(i, _)| g[[i, 0]]));
            }
            Op::SumCols(a) => {
                let (n, m) = self.shape(*a);
                acc(*a, Array2::from_shape_fn((n, m), |(_, j)| g[[0, j]]));
            }
            Op::MaskedSoftmax(a) => {
                // dx = y * (g - sum(g * y)) row-wise; masked entries have y = 0.
                let (n, m) = out.dim();
                let (gs, ys) = (g.as_standard_layout(), out.as_standard_layout());
                let (gs, ys) = (gs.as_slice().expect("standard layout"), ys.as_slice().expect("standard layout"));
                let mut dx = vec![0.0; n * m];
                for r in 0..n {
                    let (gr, yr) = (&gs[r * m..(r + 1) * m], &ys[r * m..(r + 1) * m]);
                    let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                    for (d, (&gv, &y)) in dx[r * m..(r + 1) * m].iter_mut().zip(gr.iter().zip(yr)) {
                        *d = y * (gv - dot);
                    }
                }
                acc(*a, Array2::from_shape_vec((n, m), dx).expect("shape matches"));
            }
            Op::LogSoftmax(a) => {
                let mut dx = g.clone();
                for ((mut row, grow), yrow) in dx.rows_mut().into_iter().zip(g.rows()).zip(out.rows()) {
                    let total = grow.sum();
                    Zip::from(&mut row).and(yrow).for_each(|d, &y| *d -= y.exp() * total);
                }
                acc(*a, dx);
            }
            Op::LayerNorm { x, eps } => {
                let xv = self.value(*x);
                let mut dx = Array2::zeros(xv.dim());
                for ((mut drow, xrow), (grow, yrow)) in dx
                    .rows_mut()
                    .into_iter()
                    .zip(xv.rows())
                    .zip(g.rows().into_iter().zip(out.rows()))
                {
                    let m = xrow.len() as f64;
                    let mean = xrow.sum() / m;
                    let var = xrow.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / m;
                    let inv = 1.0 / (var + eps).sqrt();
                    let g_mean = grow.sum() / m;
                    let gy_mean = grow.iter().zip(yrow).map(|(a, b)| a * b).sum::<f64>() / m;
                    for ((d, &gi), &yi) in drow.iter_mut().zip(grow).zip(yrow) {
                        *d = inv * (gi - g_mean - yi * gy_mean);
                    }
                }
                acc(*x, dx);
            }
            Op::SliceCols(a, start, end) => {
                let mut da = Array2::zeros(self.shape(*a));
                da.slice_mut(s![.., *start..*end]).assign(g);
                acc(*a, da);
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let w = self.shape(p).1;
                    acc(p, g.slice(s![.., offset..offset + w]).to_owned());
                    offset += w;
                }
            }
            Op::GatherRows(a, idx) => {
                let mut da = Array2::zeros(self.shape(*a));
                for (k, &i) in idx.iter().enumerate() {
                    let mut row = da.row_mut(i);
                    row += &g.row(k);
                }
                acc(*a, da);
            }
            Op::GatherSub(a, idx) => {
                let mut da = Array2::zeros(self.shape(*a));
                for (r, &i) in idx.iter().enumerate() {
                    for (c, &j) in idx.iter().enumerate() {
                        da[[i, j]] += g[[r, c]];
                    }
                }
                acc(*a, da);
            }
            Op::ScatterRows { base, src, idx } => {
                if self.ng(*base) {
                    let mut db = g.clone();
                    for &i in idx {
                        db.row_mut(i).fill(0.0);
                    }
                    acc(*base, db);
                }
                if self.ng(*src) {
                    acc(*src, g.select(Axis(0), idx));
                }
            }
            Op::Pick(a, at) => {
                let mut da = Array2::zeros(self.shape(*a));
                for (k, &pos) in at.iter().enumerate() {
                    da[pos] += g[[k, 0]];
                }
                acc(*a, da);
            }
            Op::PairwiseSqDist(z) => {
                // dz = 2 (diag(S 1) z - S z) with S = g + g^T off the diagonal
                let zv = self.value(*z);
                let mut sym = g + &g.t();
                sym.diag_mut().fill(0.0);
                let deg = sym.sum_axis(Axis(1)).insert_axis(Axis(1));
                let dz = (zv * &deg - sym.dot(zv)) * 2.0;
                acc(*z, dz);
            }
        }
    }
}
