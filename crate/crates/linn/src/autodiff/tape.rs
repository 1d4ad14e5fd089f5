use rand::rngs::SmallRng;
use rand::Rng;

use crate::autodiff::params::{GradBuffer, ParamId, ParamStore};
use crate::autodiff::tensor::Tensor;
use crate::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    /// Leaf with no gradient.
    Const,
    /// Leaf that mirrors a whole parameter tensor.
    Param(ParamId),
    /// Leaf that mirrors one row of a parameter matrix, seen as a column
    /// vector. Gradients flow back into just that row.
    Row(ParamId, usize),
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    /// Elementwise product.
    Mul(NodeId, NodeId),
    /// Matrix plus a column vector broadcast across all columns.
    AddColVec(NodeId, NodeId),
    /// Vertical concatenation: rows of the first operand, then the second's.
    ConcatRows(NodeId, NodeId),
    /// Column vectors gathered into a matrix, one column per input.
    StackCols(Vec<NodeId>),
    Relu(NodeId),
    Sigmoid(NodeId),
    Scale(NodeId, f64),
    /// Constant shift; the constant is only needed at record time.
    AddScalar(NodeId),
    Log(NodeId),
    Dot(NodeId, NodeId),
    /// Sum of squared entries.
    L2NormSq(NodeId),
    /// Cosine of two equal-length vectors.
    Cosine(NodeId, NodeId),
    /// Per-column cosine of two equal-shape matrices; yields a 1 x k row.
    ColwiseCosine(NodeId, NodeId),
    SumAll(NodeId),
    Mean(NodeId),
    /// Inverted dropout; the stored mask holds 0 or 1/(1-rate) per element.
    Dropout(NodeId, Vec<f64>),
}

struct Node {
    op: Op,
    value: Tensor,
}

/// Records a forward computation so gradients can be propagated backwards.
///
/// Tapes are cheap and short-lived: training builds one per chunk of a batch,
/// runs [`Tape::backward`] into a shared [`GradBuffer`], and drops it.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    consumed: bool,
}

/// Norms are clamped to this when forming cosine denominators, so that
/// nearly-zero vectors degrade gracefully instead of producing inf/NaN.
/// Exactly-zero vectors are still rejected: their cosine is undefined.
const NORM_FLOOR: f64 = 1e-12;

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

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: Op, value: Tensor) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Const, value)
    }

    pub fn scalar_const(&mut self, v: f64) -> NodeId {
        self.constant(Tensor::scalar(v))
    }

    /// Leaf mirroring the current value of a parameter.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> NodeId {
        self.push(Op::Param(id), store.get(id).clone())
    }

    /// Leaf mirroring row `row` of a parameter matrix, as a column vector.
    pub fn row(&mut self, store: &ParamStore, id: ParamId, row: usize) -> NodeId {
        let value = Tensor::vector(store.get(id).row(row).to_vec());
        self.push(Op::Row(id, row), value)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(Op::MatMul(a, b), value))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (self.value(a), self.value(b));
        if !ta.same_shape(tb) {
            return Err(shape_err("add", ta, tb));
        }
        let mut value = ta.clone();
        value.add_assign(tb);
        Ok(self.push(Op::Add(a, b), value))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (self.value(a), self.value(b));
        if !ta.same_shape(tb) {
            return Err(shape_err("sub", ta, tb));
        }
        let mut value = ta.clone();
        value.add_scaled(tb, -1.0);
        Ok(self.push(Op::Sub(a, b), value))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (self.value(a), self.value(b));
        if !ta.same_shape(tb) {
            return Err(shape_err("mul", ta, tb));
        }
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(x, y)| x * y)
            .collect();
        let value = Tensor::from_vec(ta.rows(), ta.cols(), data)?;
        Ok(self.push(Op::Mul(a, b), value))
    }

    /// `matrix + column` with the column broadcast across all columns.
    pub fn add_col_vec(&mut self, m: NodeId, v: NodeId) -> Result<NodeId> {
        let (tm, tv) = (self.value(m), self.value(v));
        if !tv.is_vector() || tv.rows() != tm.rows() {
            return Err(shape_err("add_col_vec", tm, tv));
        }
        let mut value = tm.clone();
        for r in 0..value.rows() {
            let add = tv.data()[r];
            for x in value.row_mut(r) {
                *x += add;
            }
        }
        Ok(self.push(Op::AddColVec(m, v), value))
    }

    pub fn concat_rows(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.cols() != tb.cols() {
            return Err(shape_err("concat_rows", ta, tb));
        }
        let mut data = Vec::with_capacity(ta.len() + tb.len());
        data.extend_from_slice(ta.data());
        data.extend_from_slice(tb.data());
        let value = Tensor::from_vec(ta.rows() + tb.rows(), ta.cols(), data)?;
        Ok(self.push(Op::ConcatRows(a, b), value))
    }

    /// Gathers equal-length column vectors into a matrix, one per column.
    pub fn stack_cols(&mut self, ids: &[NodeId]) -> Result<NodeId> {
        if ids.is_empty() {
            return Err(Error::Shape {
                op: "stack_cols",
                detail: "no columns".into(),
            });
        }
        let rows = self.value(ids[0]).rows();
        for &id in ids {
            let t = self.value(id);
            if !t.is_vector() || t.rows() != rows {
                return Err(Error::Shape {
                    op: "stack_cols",
                    detail: format!("expected {}x1 columns, got {}x{}", rows, t.rows(), t.cols()),
                });
            }
        }
        let mut value = Tensor::zeros(rows, ids.len());
        for (j, &id) in ids.iter().enumerate() {
            let col = self.value(id).data();
            for r in 0..rows {
                value.set(r, j, col[r]);
            }
        }
        Ok(self.push(Op::StackCols(ids.to_vec()), value))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).map(|v| v.max(0.0));
        self.push(Op::Relu(x), value)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).map(sigmoid);
        self.push(Op::Sigmoid(x), value)
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> NodeId {
        let value = self.value(x).map(|v| c * v);
        self.push(Op::Scale(x, c), value)
    }

    pub fn add_scalar(&mut self, x: NodeId, c: f64) -> NodeId {
        let value = self.value(x).map(|v| v + c);
        self.push(Op::AddScalar(x), value)
    }

    pub fn log(&mut self, x: NodeId) -> Result<NodeId> {
        if let Some(&bad) = self.value(x).data().iter().find(|v| **v <= 0.0) {
            return Err(Error::LogDomain(bad));
        }
        let value = self.value(x).map(f64::ln);
        Ok(self.push(Op::Log(x), value))
    }

    pub fn dot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (self.value(a), self.value(b));
        if !ta.is_vector() || !tb.is_vector() || ta.rows() != tb.rows() {
            return Err(shape_err("dot", ta, tb));
        }
        let v = dot(ta.data(), tb.data());
        Ok(self.push(Op::Dot(a, b), Tensor::scalar(v)))
    }

    pub fn l2_norm_sq(&mut self, x: NodeId) -> NodeId {
        let value = Tensor::scalar(self.value(x).frob_sq());
        self.push(Op::L2NormSq(x), value)
    }

    pub fn cosine(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (self.value(a), self.value(b));
        if !ta.is_vector() || !tb.is_vector() || ta.rows() != tb.rows() {
            return Err(shape_err("cosine", ta, tb));
        }
        let v = cosine(ta.data(), tb.data())?;
        Ok(self.push(Op::Cosine(a, b), Tensor::scalar(v)))
    }

    /// Cosine of corresponding columns; `a` and `b` are d x k, result 1 x k.
    pub fn colwise_cosine(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (self.value(a), self.value(b));
        if !ta.same_shape(tb) {
            return Err(shape_err("colwise_cosine", ta, tb));
        }
        let k = ta.cols();
        let mut out = Tensor::zeros(1, k);
        for j in 0..k {
            let (ca, cb) = (ta.col_vector(j), tb.col_vector(j));
            out.set(0, j, cosine(ca.data(), cb.data())?);
        }
        Ok(self.push(Op::ColwiseCosine(a, b), out))
    }

    pub fn sum_all(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).data().iter().sum();
        self.push(Op::SumAll(x), Tensor::scalar(v))
    }

    pub fn mean(&mut self, x: NodeId) -> NodeId {
        let t = self.value(x);
        let v = t.data().iter().sum::<f64>() / t.len() as f64;
        self.push(Op::Mean(x), Tensor::scalar(v))
    }

    /// Inverted dropout: keeps each element with probability `1 - rate` and
    /// rescales kept elements by `1/(1 - rate)`, so the expectation matches
    /// the undropped value. `rate == 0` records nothing and returns `x`.
    pub fn dropout(&mut self, x: NodeId, rate: f64, rng: &mut SmallRng) -> Result<NodeId> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::DropoutRate(rate));
        }
        if rate == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 - rate;
        let scale = 1.0 / keep;
        let t = self.value(x);
        let mask: Vec<f64> = (0..t.len())
            .map(|_| if rng.random::<f64>() < keep { scale } else { 0.0 })
            .collect();
        let data = t.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let value = Tensor::from_vec(t.rows(), t.cols(), data)?;
        Ok(self.push(Op::Dropout(x, mask), value))
    }

    /// Propagates d(loss)/d(param) for every parameter reachable from `loss`,
    /// accumulating into `grads`. `loss` must be scalar-valued. A tape can be
    /// walked backwards only once.
    pub fn backward(&mut self, loss: NodeId, grads: &mut GradBuffer) -> Result<()> {
        if self.consumed {
            return Err(Error::BackwardConsumed);
        }
        self.consumed = true;
        let lt = self.value(loss);
        if !lt.is_scalar() {
            return Err(Error::NonScalarLoss {
                rows: lt.rows(),
                cols: lt.cols(),
            });
        }

        let mut adj: Vec<Option<Tensor>> = (0..=loss.0).map(|_| None).collect();
        adj[loss.0] = Some(Tensor::scalar(1.0));

        for i in (0..=loss.0).rev() {
            let Some(up) = adj[i].take() else { continue };
            match &self.nodes[i].op {
                Op::Const => {}
                Op::Param(pid) => grads.accumulate(*pid, &up),
                Op::Row(pid, row) => grads.accumulate_row(*pid, *row, up.data()),
                Op::MatMul(a, b) => {
                    let da = up.matmul_nt(self.value(*b))?;
                    let db = self.value(*a).matmul_tn(&up)?;
                    add_adj(&mut adj, *a, da);
                    add_adj(&mut adj, *b, db);
                }
                Op::Add(a, b) => {
                    add_adj(&mut adj, *a, up.clone());
                    add_adj(&mut adj, *b, up);
                }
                Op::Sub(a, b) => {
                    add_adj(&mut adj, *a, up.clone());
                    add_adj(&mut adj, *b, up.map(|v| -v));
                }
                Op::Mul(a, b) => {
                    let da = elementwise(&up, self.value(*b), |u, y| u * y);
                    let db = elementwise(&up, self.value(*a), |u, x| u * x);
                    add_adj(&mut adj, *a, da);
                    add_adj(&mut adj, *b, db);
                }
                Op::AddColVec(m, v) => {
                    let mut dv = Tensor::zeros(up.rows(), 1);
                    for r in 0..up.rows() {
                        dv.data_mut()[r] = up.row(r).iter().sum();
                    }
                    add_adj(&mut adj, *m, up);
                    add_adj(&mut adj, *v, dv);
                }
                Op::ConcatRows(a, b) => {
                    let ra = self.value(*a).rows();
                    let cols = up.cols();
                    let split = ra * cols;
                    let da = Tensor::from_vec(ra, cols, up.data()[..split].to_vec())?;
                    let db =
                        Tensor::from_vec(up.rows() - ra, cols, up.data()[split..].to_vec())?;
                    add_adj(&mut adj, *a, da);
                    add_adj(&mut adj, *b, db);
                }
                Op::StackCols(ids) => {
                    let ids = ids.clone();
                    for (j, id) in ids.iter().enumerate() {
                        add_adj(&mut adj, *id, up.col_vector(j));
                    }
                }
                Op::Relu(x) => {
                    let dx = elementwise(&up, self.value(*x), |u, v| if v > 0.0 { u } else { 0.0 });
                    add_adj(&mut adj, *x, dx);
                }
                Op::Sigmoid(x) => {
                    let dx = elementwise(&up, &self.nodes[i].value, |u, s| u * s * (1.0 - s));
                    add_adj(&mut adj, *x, dx);
                }
                Op::Scale(x, c) => {
                    let c = *c;
                    add_adj(&mut adj, *x, up.map(|v| c * v));
                }
                Op::AddScalar(x) => add_adj(&mut adj, *x, up),
                Op::Log(x) => {
                    let dx = elementwise(&up, self.value(*x), |u, v| u / v);
                    add_adj(&mut adj, *x, dx);
                }
                Op::Dot(a, b) => {
                    let s = up.scalar_value()?;
                    let da = self.value(*b).map(|v| s * v);
                    let db = self.value(*a).map(|v| s * v);
                    add_adj(&mut adj, *a, da);
                    add_adj(&mut adj, *b, db);
                }
                Op::L2NormSq(x) => {
                    let s = up.scalar_value()?;
                    add_adj(&mut adj, *x, self.value(*x).map(|v| 2.0 * s * v));
                }
                Op::Cosine(a, b) => {
                    let s = up.scalar_value()?;
                    let (da, db) =
                        cosine_backward(self.value(*a).data(), self.value(*b).data(), s);
                    add_adj(&mut adj, *a, Tensor::vector(da));
                    add_adj(&mut adj, *b, Tensor::vector(db));
                }
                Op::ColwiseCosine(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let mut da = Tensor::zeros(ta.rows(), ta.cols());
                    let mut db = Tensor::zeros(ta.rows(), ta.cols());
                    for j in 0..ta.cols() {
                        let (ca, cb) = (ta.col_vector(j), tb.col_vector(j));
                        let (ga, gb) = cosine_backward(ca.data(), cb.data(), up.get(0, j));
                        for r in 0..ta.rows() {
                            da.set(r, j, ga[r]);
                            db.set(r, j, gb[r]);
                        }
                    }
                    add_adj(&mut adj, *a, da);
                    add_adj(&mut adj, *b, db);
                }
                Op::SumAll(x) => {
                    let s = up.scalar_value()?;
                    let t = self.value(*x);
                    let mut dx = Tensor::zeros(t.rows(), t.cols());
                    dx.fill(s);
                    add_adj(&mut adj, *x, dx);
                }
                Op::Mean(x) => {
                    let t = self.value(*x);
                    let s = up.scalar_value()? / t.len() as f64;
                    let mut dx = Tensor::zeros(t.rows(), t.cols());
                    dx.fill(s);
                    add_adj(&mut adj, *x, dx);
                }
                Op::Dropout(x, mask) => {
                    let data = up.data().iter().zip(mask).map(|(u, m)| u * m).collect();
                    let dx = Tensor::from_vec(up.rows(), up.cols(), data)?;
                    add_adj(&mut adj, *x, dx);
                }
            }
        }
        Ok(())
    }
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::Shape {
        op,
        detail: format!("{}x{} vs {}x{}", a.rows(), a.cols(), b.rows(), b.cols()),
    }
}

fn add_adj(adj: &mut [Option<Tensor>], id: NodeId, delta: Tensor) {
    match &mut adj[id.0] {
        Some(t) => t.add_assign(&delta),
        slot @ None => *slot = Some(delta),
    }
}

fn elementwise(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    debug_assert!(a.same_shape(b));
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::from_vec(a.rows(), a.cols(), data).expect("same shape")
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok(dot(a, b) / (na.max(NORM_FLOOR) * nb.max(NORM_FLOOR)))
}

/// Gradients of `s * cos(a, b)` with respect to `a` and `b`.
fn cosine_backward(a: &[f64], b: &[f64], s: f64) -> (Vec<f64>, Vec<f64>) {
    let na = dot(a, a).sqrt().max(NORM_FLOOR);
    let nb = dot(b, b).sqrt().max(NORM_FLOOR);
    let ab = dot(a, b);
    let c = ab / (na * nb);
    let da = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| s * (y / (na * nb) - c * x / (na * na)))
        .collect();
    let db = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| s * (x / (na * nb) - c * y / (nb * nb)))
        .collect();
    (da, db)
}
