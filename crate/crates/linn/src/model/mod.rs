//! The reasoning model: variable embeddings, learned AND/OR/NOT modules, a
//! fixed "true" anchor vector, and similarity-based truth prediction.
//!
//! Training-time computation graphs live in [`graph`]; this module owns the
//! parameters plus a tape-free inference path that is bit-identical to an
//! evaluation-mode tape forward pass.

mod graph;

pub use graph::GraphBuilder;

use std::path::Path;

use rand::rngs::SmallRng;
use rand::Rng;

use crate::autodiff::checkpoint::Checkpoint;
use crate::autodiff::params::{ParamId, ParamStore};
use crate::autodiff::tape::{cosine, sigmoid};
use crate::autodiff::tensor::Tensor;
use crate::logic::Expr;
use crate::seeds;
use crate::{Error, Result};

/// Similarity sharpness: predictions are sigmoid(ALPHA * cosine), so they
/// live in (sigmoid(-ALPHA), sigmoid(ALPHA)). Fixed, not trained.
pub const ALPHA: f64 = 10.0;

/// Names of the trainable tensors, in registration order.
const MODULE_NAMES: [&str; 9] = [
    "and_h1", "and_h2", "and_b", "or_h1", "or_h2", "or_b", "not_h1", "not_h2", "not_b",
];
const ANCHOR_NAME: &str = "t_anchor";
const EMBEDDING_NAME: &str = "embeddings";

#[derive(Clone, Copy, Debug)]
pub struct ModelConfig {
    /// Embedding width; every module maps d-vectors to d-vectors.
    pub d: usize,
    /// Dropout rate on module hidden activations during training.
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig { d: 64, dropout: 0.0 }
    }
}

/// Parameter ids for one two-layer module: out = h2 * relu(h1 * x + b).
#[derive(Clone, Copy, Debug)]
pub struct ModuleParams {
    pub h1: ParamId,
    pub h2: ParamId,
    pub b: ParamId,
}

pub struct LinnModel {
    pub cfg: ModelConfig,
    store: ParamStore,
    embeddings: ParamId,
    and_params: ModuleParams,
    or_params: ModuleParams,
    not_params: ModuleParams,
    /// The "true" anchor: unit norm, never updated, deliberately kept out of
    /// the parameter store so no optimizer or penalty can touch it.
    t_anchor: Tensor,
}

impl LinnModel {
    /// Fresh model over `n_vars` variables. All randomness (embeddings,
    /// module weights, anchor direction) comes from the init stream of
    /// `master_seed`.
    pub fn new(cfg: ModelConfig, n_vars: usize, master_seed: u64) -> Result<Self> {
        if cfg.d == 0 || n_vars == 0 {
            return Err(Error::Config(format!(
                "model needs d >= 1 and at least one variable, got d={} n={}",
                cfg.d, n_vars
            )));
        }
        if !(0.0..1.0).contains(&cfg.dropout) {
            return Err(Error::DropoutRate(cfg.dropout));
        }
        let d = cfg.d;
        let mut rng = seeds::rng(master_seed, seeds::INIT, &[]);
        let mut store = ParamStore::new();

        let emb_scale = 1.0 / (d as f64).sqrt();
        let embeddings = store.register(
            EMBEDDING_NAME,
            uniform_tensor(n_vars, d, emb_scale, &mut rng),
        );

        // Small positive bias keeps hidden units alive at the start; a fully
        // dead relu layer would emit an exactly-zero vector, whose cosine
        // against anything is undefined.
        let mut bias0 = Tensor::zeros(d, 1);
        bias0.fill(0.1);
        let mut register_module = |store: &mut ParamStore, prefix: &str, in_width: usize| {
            let h1 = store.register(
                &format!("{prefix}_h1"),
                uniform_tensor(d, in_width, xavier(in_width, d), &mut rng),
            );
            let h2 = store.register(
                &format!("{prefix}_h2"),
                uniform_tensor(d, d, xavier(d, d), &mut rng),
            );
            let b = store.register(&format!("{prefix}_b"), bias0.clone());
            ModuleParams { h1, h2, b }
        };
        let and_params = register_module(&mut store, "and", 2 * d);
        let or_params = register_module(&mut store, "or", 2 * d);
        let not_params = register_module(&mut store, "not", d);

        let t_anchor = random_unit_vector(d, &mut rng);

        Ok(LinnModel {
            cfg,
            store,
            embeddings,
            and_params,
            or_params,
            not_params,
            t_anchor,
        })
    }

    pub fn d(&self) -> usize {
        self.cfg.d
    }

    pub fn n_vars(&self) -> usize {
        self.store.get(self.embeddings).rows()
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn embeddings(&self) -> ParamId {
        self.embeddings
    }

    pub fn and_params(&self) -> ModuleParams {
        self.and_params
    }

    pub fn or_params(&self) -> ModuleParams {
        self.or_params
    }

    pub fn not_params(&self) -> ModuleParams {
        self.not_params
    }

    pub fn anchor(&self) -> &Tensor {
        &self.t_anchor
    }

    /// One variable's embedding as a column vector.
    pub fn embedding_vector(&self, id: u32) -> Result<Tensor> {
        let emb = self.store.get(self.embeddings);
        if id as usize >= emb.rows() {
            return Err(Error::UnboundVariable(id));
        }
        Ok(Tensor::vector(emb.row(id as usize).to_vec()))
    }

    pub fn set_dropout(&mut self, rate: f64) -> Result<()> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::DropoutRate(rate));
        }
        self.cfg.dropout = rate;
        Ok(())
    }

    // ---- inference path (no tape, no dropout) ----

    fn infer_module(&self, m: ModuleParams, x: &Tensor) -> Result<Tensor> {
        let mut pre = self.store.get(m.h1).matmul(x)?;
        let bias = self.store.get(m.b);
        for r in 0..pre.rows() {
            let add = bias.data()[r];
            for v in pre.row_mut(r) {
                *v += add;
            }
        }
        let act = pre.map(|v| v.max(0.0));
        self.store.get(m.h2).matmul(&act)
    }

    /// AND of two columns, or column-for-column AND of two stacks.
    pub fn infer_and(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        self.infer_module(self.and_params, &concat_rows(a, b)?)
    }

    pub fn infer_or(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        self.infer_module(self.or_params, &concat_rows(a, b)?)
    }

    pub fn infer_not(&self, x: &Tensor) -> Result<Tensor> {
        self.infer_module(self.not_params, x)
    }

    /// The "false" vector: NOT applied to the anchor under current weights.
    /// Recomputed on every call, so it tracks the NOT module as it trains.
    pub fn infer_false(&self) -> Result<Tensor> {
        self.infer_not(&self.t_anchor)
    }

    /// sigmoid(ALPHA * cos) similarity of two vectors, in (0, 1).
    pub fn infer_sim(&self, a: &Tensor, b: &Tensor) -> Result<f64> {
        Ok(sigmoid(ALPHA * cosine(a.data(), b.data())?))
    }

    /// Similarity of every column of a d×k stack against the true anchor.
    pub fn infer_sim_cols(&self, stack: &Tensor) -> Result<Vec<f64>> {
        if stack.rows() != self.cfg.d {
            return Err(Error::Shape {
                op: "infer_sim_cols",
                detail: format!("expected {} rows, got {}", self.cfg.d, stack.rows()),
            });
        }
        let mut out = Vec::with_capacity(stack.cols());
        for j in 0..stack.cols() {
            let col = stack.col_vector(j);
            out.push(self.infer_sim(&col, &self.t_anchor)?);
        }
        Ok(out)
    }

    /// Evaluates an expression tree bottom-up. Returns the expression vector
    /// and every materialized vector (leaves, intermediates, root) in
    /// traversal order.
    pub fn infer_assemble(&self, expr: &Expr) -> Result<(Tensor, Vec<Tensor>)> {
        let mut w = Vec::with_capacity(expr.node_count());
        let e = self.infer_node(expr, &mut w)?;
        Ok((e, w))
    }

    fn infer_node(&self, expr: &Expr, w: &mut Vec<Tensor>) -> Result<Tensor> {
        let out = match expr {
            Expr::Var(id) => self.embedding_vector(*id)?,
            Expr::Not(c) => {
                let cv = self.infer_node(c, w)?;
                self.infer_not(&cv)?
            }
            Expr::And(l, r) => {
                let lv = self.infer_node(l, w)?;
                let rv = self.infer_node(r, w)?;
                self.infer_and(&lv, &rv)?
            }
            Expr::Or(l, r) => {
                let lv = self.infer_node(l, w)?;
                let rv = self.infer_node(r, w)?;
                self.infer_or(&lv, &rv)?
            }
        };
        w.push(out.clone());
        Ok(out)
    }

    /// Truth prediction for an expression: similarity of its vector to the
    /// anchor.
    pub fn infer_prediction(&self, expr: &Expr) -> Result<f64> {
        let (e, _) = self.infer_assemble(expr)?;
        self.infer_sim(&e, &self.t_anchor)
    }

    /// The ten rule penalties over a set of vectors, without a tape.
    /// Mirrors the training-graph computation exactly (modulo dropout, which
    /// is off here); `coins` drives the operand-order randomization of the
    /// binary-module rules and must be drawn from the same stream to
    /// reproduce a particular evaluation.
    pub fn infer_regularizers(
        &self,
        w: &[Tensor],
        coins: &mut SmallRng,
        include_anchor: bool,
    ) -> Result<[f64; 10]> {
        if w.is_empty() {
            return Err(Error::Shape {
                op: "infer_regularizers",
                detail: "empty vector set".into(),
            });
        }
        let d = self.cfg.d;
        let k = w.len();
        let w_stack = stack(d, w)?;
        let t_k = tile(&self.t_anchor, k);
        let f_col = self.infer_false()?;
        let f_k = tile(&f_col, k);
        let wt_stack = {
            let mut cols: Vec<&Tensor> = w.iter().collect();
            if include_anchor {
                cols.push(&self.t_anchor);
            }
            stack_refs(d, &cols)?
        };

        let not_wt = self.infer_not(&wt_stack)?;
        let r1 = sum_sims(&not_wt, &wt_stack)?;

        let not_w = self.infer_not(&w_stack)?;
        let not_not_w = self.infer_not(&not_w)?;
        let r2 = sum_one_minus_sims(&not_not_w, &w_stack)?;

        let mut flip = |a: &Tensor, b: &Tensor| -> (Tensor, Tensor) {
            if coins.random::<bool>() {
                (b.clone(), a.clone())
            } else {
                (a.clone(), b.clone())
            }
        };

        let (x, y) = flip(&w_stack, &t_k);
        let r3 = sum_one_minus_sims(&self.infer_and(&x, &y)?, &w_stack)?;
        let (x, y) = flip(&w_stack, &f_k);
        let r4 = sum_one_minus_sims(&self.infer_and(&x, &y)?, &f_k)?;
        let (x, y) = flip(&w_stack, &w_stack);
        let r5 = sum_one_minus_sims(&self.infer_and(&x, &y)?, &w_stack)?;
        let (x, y) = flip(&w_stack, &not_w);
        let r6 = sum_one_minus_sims(&self.infer_and(&x, &y)?, &f_k)?;

        let (x, y) = flip(&w_stack, &f_k);
        let r7 = sum_one_minus_sims(&self.infer_or(&x, &y)?, &w_stack)?;
        let (x, y) = flip(&w_stack, &t_k);
        let r8 = sum_one_minus_sims(&self.infer_or(&x, &y)?, &t_k)?;
        let (x, y) = flip(&w_stack, &w_stack);
        let r9 = sum_one_minus_sims(&self.infer_or(&x, &y)?, &w_stack)?;
        let (x, y) = flip(&w_stack, &not_w);
        let r10 = sum_one_minus_sims(&self.infer_or(&x, &y)?, &t_k)?;

        Ok([r1, r2, r3, r4, r5, r6, r7, r8, r9, r10])
    }

    // ---- persistence ----

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut arrays: Vec<(String, Tensor)> = self
            .store
            .iter()
            .map(|(_, name, t)| (name.to_string(), t.clone()))
            .collect();
        arrays.push((ANCHOR_NAME.to_string(), self.t_anchor.clone()));
        Checkpoint {
            d: self.cfg.d as u32,
            variable_count: self.n_vars() as u32,
            arrays,
        }
        .save(path)
    }

    pub fn load(path: &Path) -> Result<LinnModel> {
        let ck = Checkpoint::load(path)?;
        let d = ck.d as usize;
        let n = ck.variable_count as usize;
        let bad = |msg: String| Error::Checkpoint(format!("{}: {msg}", path.display()));
        if d == 0 || n == 0 {
            return Err(bad(format!("degenerate header d={d} n={n}")));
        }

        let fetch = |name: &str, rows: usize, cols: usize| -> Result<Tensor> {
            let t = ck
                .array(name)
                .ok_or_else(|| bad(format!("missing array {name:?}")))?;
            if t.rows() != rows || t.cols() != cols {
                return Err(bad(format!(
                    "array {name:?} is {}x{}, expected {rows}x{cols}",
                    t.rows(),
                    t.cols()
                )));
            }
            Ok(t.clone())
        };

        let mut store = ParamStore::new();
        let embeddings = store.register(EMBEDDING_NAME, fetch(EMBEDDING_NAME, n, d)?);
        let load_module = |store: &mut ParamStore, prefix: &str, in_width: usize| {
            Ok::<ModuleParams, Error>(ModuleParams {
                h1: store.register(&format!("{prefix}_h1"), fetch(&format!("{prefix}_h1"), d, in_width)?),
                h2: store.register(&format!("{prefix}_h2"), fetch(&format!("{prefix}_h2"), d, d)?),
                b: store.register(&format!("{prefix}_b"), fetch(&format!("{prefix}_b"), d, 1)?),
            })
        };
        let and_params = load_module(&mut store, "and", 2 * d)?;
        let or_params = load_module(&mut store, "or", 2 * d)?;
        let not_params = load_module(&mut store, "not", d)?;
        let t_anchor = fetch(ANCHOR_NAME, d, 1)?;

        let expected = 1 + MODULE_NAMES.len() + 1;
        if ck.arrays.len() != expected {
            return Err(bad(format!(
                "expected {expected} arrays, found {}",
                ck.arrays.len()
            )));
        }

        Ok(LinnModel {
            cfg: ModelConfig { d, dropout: 0.0 },
            store,
            embeddings,
            and_params,
            or_params,
            not_params,
            t_anchor,
        })
    }
}

/// Central finite-difference check of a model-level loss. `f` must be a
/// deterministic function of the parameters: freeze any coins or dropout by
/// seeding them identically on every call. Compares against `analytic`
/// gradients for every element of every trainable tensor.
pub fn gradcheck_model(
    model: &mut LinnModel,
    analytic: &crate::autodiff::params::GradBuffer,
    mut f: impl FnMut(&LinnModel) -> Result<f64>,
) -> Result<crate::autodiff::gradcheck::GradCheckReport> {
    let (h, tol) = (1e-5, 1e-4);
    let mut max_rel: f64 = 0.0;
    let mut checked = 0;
    let ids: Vec<ParamId> = model.store().iter().map(|(id, _, _)| id).collect();
    for id in ids {
        for k in 0..model.store().get(id).len() {
            let orig = model.store().get(id).data()[k];
            model.store_mut().get_mut(id).data_mut()[k] = orig + h;
            let fp = f(model);
            model.store_mut().get_mut(id).data_mut()[k] = orig - h;
            let fm = f(model);
            model.store_mut().get_mut(id).data_mut()[k] = orig;
            let fd = (fp? - fm?) / (2.0 * h);
            let an = analytic.get(id).data()[k];
            let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-4);
            max_rel = max_rel.max(rel);
            checked += 1;
        }
    }
    if max_rel >= tol {
        return Err(Error::GradCheck { max_rel, tol });
    }
    Ok(crate::autodiff::gradcheck::GradCheckReport { max_rel, checked })
}

/// End-to-end finite-difference check of the complete training objective
/// (cross-entropy + logic/length/L2 regularizers) on a fixed three-variable
/// expression pair. Dropout stays off and the commutativity coins are frozen
/// so the loss is a pure function of the parameters.
pub fn gradcheck_full_loss(
    d: usize,
    master_seed: u64,
) -> Result<crate::autodiff::gradcheck::GradCheckReport> {
    use crate::autodiff::params::GradBuffer;
    use crate::logic::Expr;
    use rand::SeedableRng;

    let exprs = [
        (
            Expr::or(
                Expr::and(Expr::var(0), Expr::var(1)),
                Expr::not(Expr::var(2)),
            ),
            true,
        ),
        (Expr::and(Expr::var(1), Expr::not(Expr::var(0))), false),
    ];
    let coin_seed = master_seed ^ 0x9e37_79b9_7f4a_7c15;
    let weights = (0.1, 0.001, 1e-4);

    let loss = |m: &LinnModel| -> Result<f64> {
        let mut g = GraphBuilder::new(m, false);
        let mut dr = SmallRng::seed_from_u64(0);
        let mut preds = Vec::new();
        let mut labels = Vec::new();
        for (e, y) in &exprs {
            let node = g.assemble(e, &mut dr)?;
            preds.push(g.prediction(node)?);
            labels.push(*y);
        }
        let ce = g.loss_ce(&preds, &labels)?;
        let mut coins = SmallRng::seed_from_u64(coin_seed);
        let (r_l, _) = g.logic_regularizer(&mut coins, &mut dr, true)?;
        let r_len = g.length_regularizer()?;
        let theta = g.theta_penalty()?;
        let total = g.weighted_sum(ce, &[(r_l, weights.0), (r_len, weights.1), (theta, weights.2)])?;
        g.scalar(total)
    };

    let mut model = LinnModel::new(ModelConfig { d, dropout: 0.0 }, 3, master_seed)?;
    let mut grads = GradBuffer::zeros_like(model.store());
    {
        let mut g = GraphBuilder::new(&model, false);
        let mut dr = SmallRng::seed_from_u64(0);
        let mut preds = Vec::new();
        let mut labels = Vec::new();
        for (e, y) in &exprs {
            let node = g.assemble(e, &mut dr)?;
            preds.push(g.prediction(node)?);
            labels.push(*y);
        }
        let ce = g.loss_ce(&preds, &labels)?;
        let mut coins = SmallRng::seed_from_u64(coin_seed);
        let (r_l, _) = g.logic_regularizer(&mut coins, &mut dr, true)?;
        let r_len = g.length_regularizer()?;
        let theta = g.theta_penalty()?;
        let total =
            g.weighted_sum(ce, &[(r_l, weights.0), (r_len, weights.1), (theta, weights.2)])?;
        g.backward(total, &mut grads)?;
    }
    gradcheck_model(&mut model, &grads, loss)
}

fn xavier(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

fn uniform_tensor(rows: usize, cols: usize, scale: f64, rng: &mut SmallRng) -> Tensor {
    let data = (0..rows * cols)
        .map(|_| (rng.random::<f64>() * 2.0 - 1.0) * scale)
        .collect();
    Tensor::from_vec(rows, cols, data).expect("sized by construction")
}

fn random_unit_vector(d: usize, rng: &mut SmallRng) -> Tensor {
    loop {
        let v = uniform_tensor(d, 1, 1.0, rng);
        let norm = v.frob_sq().sqrt();
        if norm > 1e-3 {
            return v.map(|x| x / norm);
        }
    }
}

fn concat_rows(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.cols() != b.cols() {
        return Err(Error::Shape {
            op: "concat_rows",
            detail: format!("{}x{} vs {}x{}", a.rows(), a.cols(), b.rows(), b.cols()),
        });
    }
    let mut data = Vec::with_capacity(a.len() + b.len());
    data.extend_from_slice(a.data());
    data.extend_from_slice(b.data());
    Tensor::from_vec(a.rows() + b.rows(), a.cols(), data)
}

pub(crate) fn stack(d: usize, cols: &[Tensor]) -> Result<Tensor> {
    let refs: Vec<&Tensor> = cols.iter().collect();
    stack_refs(d, &refs)
}

fn stack_refs(d: usize, cols: &[&Tensor]) -> Result<Tensor> {
    let mut out = Tensor::zeros(d, cols.len());
    for (j, c) in cols.iter().enumerate() {
        if !c.is_vector() || c.rows() != d {
            return Err(Error::Shape {
                op: "stack",
                detail: format!("expected {}x1 columns, got {}x{}", d, c.rows(), c.cols()),
            });
        }
        for r in 0..d {
            out.set(r, j, c.data()[r]);
        }
    }
    Ok(out)
}

pub(crate) fn tile(col: &Tensor, k: usize) -> Tensor {
    let mut out = Tensor::zeros(col.rows(), k);
    for r in 0..col.rows() {
        let v = col.data()[r];
        for j in 0..k {
            out.set(r, j, v);
        }
    }
    out
}

/// Sum over columns of sigmoid(ALPHA * cos(a_j, b_j)).
fn sum_sims(a: &Tensor, b: &Tensor) -> Result<f64> {
    let mut total = 0.0;
    for j in 0..a.cols() {
        let (ca, cb) = (a.col_vector(j), b.col_vector(j));
        let c = cosine(ca.data(), cb.data())?;
        total += sigmoid(ALPHA * c);
    }
    Ok(total)
}

/// Sum over columns of 1 - sigmoid(ALPHA * cos(a_j, b_j)).
fn sum_one_minus_sims(a: &Tensor, b: &Tensor) -> Result<f64> {
    let mut total = 0.0;
    for j in 0..a.cols() {
        let (ca, cb) = (a.col_vector(j), b.col_vector(j));
        let c = cosine(ca.data(), cb.data())?;
        total += (-sigmoid(ALPHA * c)) + 1.0;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn test_model(d: usize, n: usize) -> LinnModel {
        LinnModel::new(ModelConfig { d, dropout: 0.0 }, n, 42).unwrap()
    }

    fn set(model: &mut LinnModel, id: ParamId, rows: usize, cols: usize, v: &[f64]) {
        *model.store_mut().get_mut(id) = Tensor::from_vec(rows, cols, v.to_vec()).unwrap();
    }

    #[test]
    fn and_matches_hand_computation() {
        let mut m = test_model(2, 3);
        let p = m.and_params();
        // h1 = [[1,0,1,0],[0,1,0,-1]], b = [0.5,-0.5], h2 = [[2,0],[0,3]]
        set(&mut m, p.h1, 2, 4, &[1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, -1.0]);
        set(&mut m, p.b, 2, 1, &[0.5, -0.5]);
        set(&mut m, p.h2, 2, 2, &[2.0, 0.0, 0.0, 3.0]);
        let wi = Tensor::vector(vec![1.0, 2.0]);
        let wj = Tensor::vector(vec![3.0, 4.0]);
        // cat = [1,2,3,4]; h1*cat = [4,-2]; +b = [4.5,-2.5]; relu = [4.5,0];
        // h2*act = [9,0]
        let out = m.infer_and(&wi, &wj).unwrap();
        assert_eq!(out.data(), &[9.0, 0.0]);
    }

    #[test]
    fn not_matches_hand_computation() {
        let mut m = test_model(2, 3);
        let p = m.not_params();
        set(&mut m, p.h1, 2, 2, &[0.0, 1.0, -1.0, 0.0]);
        set(&mut m, p.b, 2, 1, &[0.0, 2.0]);
        set(&mut m, p.h2, 2, 2, &[1.0, 1.0, 0.0, 1.0]);
        let w = Tensor::vector(vec![3.0, -1.0]);
        // h1*w = [-1,-3]; +b = [-1,-1]; relu = [0,0]... use other input
        let out = m.infer_not(&w).unwrap();
        assert_eq!(out.data(), &[0.0, 0.0]);
        let w = Tensor::vector(vec![-3.0, 1.0]);
        // h1*w = [1,3]; +b = [1,5]; relu = [1,5]; h2*act = [6,5]
        let out = m.infer_not(&w).unwrap();
        assert_eq!(out.data(), &[6.0, 5.0]);
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let mut m = test_model(3, 2);
        for p in [m.and_params(), m.or_params(), m.not_params()] {
            let h1_cols = m.store().get(p.h1).cols();
            set(&mut m, p.h1, 3, h1_cols, &vec![0.0; 3 * h1_cols]);
            set(&mut m, p.h2, 3, 3, &vec![0.0; 9]);
            set(&mut m, p.b, 3, 1, &vec![0.0; 3]);
        }
        let a = Tensor::vector(vec![1.0, 2.0, 3.0]);
        let b = Tensor::vector(vec![-1.0, 0.5, 2.0]);
        assert_eq!(m.infer_and(&a, &b).unwrap().data(), &[0.0, 0.0, 0.0]);
        assert_eq!(m.infer_or(&a, &b).unwrap().data(), &[0.0, 0.0, 0.0]);
        assert_eq!(m.infer_not(&a).unwrap().data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn module_output_dimension_is_d() {
        let m = test_model(5, 4);
        let a = Tensor::vector(vec![0.1; 5]);
        let b = Tensor::vector(vec![0.2; 5]);
        assert_eq!(m.infer_and(&a, &b).unwrap().rows(), 5);
        assert_eq!(m.infer_or(&a, &b).unwrap().rows(), 5);
        assert_eq!(m.infer_not(&a).unwrap().rows(), 5);
        // Stacked inputs keep their column count.
        let stack_a = tile(&a, 7);
        let stack_b = tile(&b, 7);
        let out = m.infer_and(&stack_a, &stack_b).unwrap();
        assert_eq!((out.rows(), out.cols()), (5, 7));
    }

    #[test]
    fn similarity_closed_forms() {
        let m = test_model(4, 2);
        let x = Tensor::vector(vec![0.3, -0.7, 0.2, 0.9]);
        let neg: Tensor = x.map(|v| -v);
        let same = m.infer_sim(&x, &x).unwrap();
        let opposite = m.infer_sim(&x, &neg).unwrap();
        assert!((same - sigmoid(10.0)).abs() < 1e-12);
        assert!((same - 0.999_954_6).abs() < 1e-7);
        assert!((opposite - sigmoid(-10.0)).abs() < 1e-12);
        assert!((opposite - 4.5398e-5).abs() < 1e-9);

        let e1 = Tensor::vector(vec![1.0, 0.0]);
        let e2 = Tensor::vector(vec![0.0, 1.0]);
        let m2 = test_model(2, 2);
        assert_eq!(m2.infer_sim(&e1, &e2).unwrap(), 0.5);

        let zero = Tensor::vector(vec![0.0, 0.0]);
        assert!(matches!(m2.infer_sim(&zero, &e1), Err(Error::ZeroNorm)));
    }

    #[test]
    fn anchor_is_unit_norm_and_outside_store() {
        let m = test_model(16, 5);
        assert!((m.anchor().frob_sq() - 1.0).abs() < 1e-12);
        assert!(m.store().id(ANCHOR_NAME).is_none());
        // Every registered tensor is trainable; the anchor is not among them.
        assert_eq!(m.store().len(), 10);
    }

    #[test]
    fn false_vector_is_not_of_anchor() {
        let m = test_model(8, 3);
        let f = m.infer_false().unwrap();
        let direct = m.infer_not(m.anchor()).unwrap();
        assert_eq!(f, direct);
    }

    #[test]
    fn assemble_collects_every_node_vector() {
        let m = test_model(6, 10);
        // (v1 & v2) | ~v3 -> six vectors: three leaves, two intermediates,
        // the root.
        let e = Expr::or(
            Expr::and(Expr::var(1), Expr::var(2)),
            Expr::not(Expr::var(3)),
        );
        let (root, w) = m.infer_assemble(&e).unwrap();
        assert_eq!(w.len(), 6);
        assert_eq!(w.len(), e.node_count());
        assert_eq!(w[0], m.embedding_vector(1).unwrap());
        assert_eq!(w[1], m.embedding_vector(2).unwrap());
        let and_12 = m
            .infer_and(&w[0], &w[1])
            .unwrap();
        assert_eq!(w[2], and_12);
        assert_eq!(w[3], m.embedding_vector(3).unwrap());
        assert_eq!(w[4], m.infer_not(&w[3]).unwrap());
        assert_eq!(w[5], root);

        let (root, w) = m.infer_assemble(&Expr::var(7)).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(root, m.embedding_vector(7).unwrap());
    }

    #[test]
    fn unknown_variable_rejected() {
        let m = test_model(4, 3);
        assert!(matches!(
            m.infer_prediction(&Expr::var(3)),
            Err(Error::UnboundVariable(3))
        ));
    }

    #[test]
    fn predictions_stay_in_sigmoid_range() {
        let m = test_model(8, 20);
        let mut rng = SmallRng::seed_from_u64(1);
        let cfg = crate::logic::GenConfig {
            var_pool_size: 20,
            ..Default::default()
        };
        let (lo, hi) = (sigmoid(-ALPHA), sigmoid(ALPHA));
        for _ in 0..50 {
            let dnf = crate::logic::generate_dnf(&mut rng, &cfg).unwrap();
            let p = m.infer_prediction(&dnf.to_tree()).unwrap();
            assert!((lo..=hi).contains(&p), "p = {p}");
        }
    }

    #[test]
    fn all_ten_rules_are_nonzero_on_random_params() {
        let m = test_model(8, 6);
        let w: Vec<Tensor> = (0..4)
            .map(|i| m.embedding_vector(i).unwrap())
            .collect();
        let mut coins = SmallRng::seed_from_u64(3);
        let r = m.infer_regularizers(&w, &mut coins, true).unwrap();
        for (i, v) in r.iter().enumerate() {
            assert!(*v > 0.0, "r{} is zero", i + 1);
        }
        // Bounds: each per-element similarity is within (sigmoid(-10),
        // sigmoid(10)), so rule sums are within |set| times those bounds.
        let k = w.len() as f64;
        assert!(r[0] > (k + 1.0) * sigmoid(-ALPHA) && r[0] < (k + 1.0) * sigmoid(ALPHA));
        for v in &r[1..] {
            assert!(*v > k * (1.0 - sigmoid(ALPHA)) && *v < k * (1.0 - sigmoid(-ALPHA)));
        }
    }

    #[test]
    fn anchor_term_only_in_rule_one() {
        let m = test_model(8, 6);
        let w = vec![m.embedding_vector(0).unwrap()];
        let with = m
            .infer_regularizers(&w, &mut SmallRng::seed_from_u64(5), true)
            .unwrap();
        let without = m
            .infer_regularizers(&w, &mut SmallRng::seed_from_u64(5), false)
            .unwrap();
        assert!(with[0] != without[0]);
        assert_eq!(with[1..], without[1..]);
    }

    #[test]
    fn commutativity_coins_change_binary_rule_values() {
        let m = test_model(8, 6);
        let w: Vec<Tensor> = (0..3).map(|i| m.embedding_vector(i).unwrap()).collect();
        let mut seen_r3 = std::collections::BTreeSet::new();
        for seed in 0..64 {
            let mut coins = SmallRng::seed_from_u64(seed);
            let r = m.infer_regularizers(&w, &mut coins, true).unwrap();
            seen_r3.insert(r[2].to_bits());
        }
        // Both operand orders of AND(w, T) must occur across evaluations.
        assert_eq!(seen_r3.len(), 2, "expected both argument orders");
    }

    #[test]
    fn checkpoint_round_trip_preserves_everything() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        let m = test_model(6, 9);
        m.save(&path).unwrap();
        let back = LinnModel::load(&path).unwrap();
        assert_eq!(back.d(), 6);
        assert_eq!(back.n_vars(), 9);
        assert_eq!(back.anchor(), m.anchor());
        for (id, name, t) in m.store().iter() {
            let other = back.store().id(name).unwrap();
            assert_eq!(back.store().get(other), t, "array {name} differs");
            assert_eq!(other.index(), id.index());
        }
        // Same inference behavior on a nontrivial expression.
        let e = Expr::or(Expr::not(Expr::var(0)), Expr::and(Expr::var(4), Expr::var(8)));
        assert_eq!(
            m.infer_prediction(&e).unwrap().to_bits(),
            back.infer_prediction(&e).unwrap().to_bits()
        );
    }

    #[test]
    fn load_rejects_missing_arrays() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        let m = test_model(4, 3);
        let mut arrays: Vec<(String, Tensor)> = m
            .store()
            .iter()
            .map(|(_, n, t)| (n.to_string(), t.clone()))
            .collect();
        arrays.pop(); // drop not_b
        arrays.push((ANCHOR_NAME.to_string(), m.anchor().clone()));
        Checkpoint {
            d: 4,
            variable_count: 3,
            arrays,
        }
        .save(&path)
        .unwrap();
        assert!(matches!(
            LinnModel::load(&path),
            Err(Error::Checkpoint(_))
        ));
    }
}
