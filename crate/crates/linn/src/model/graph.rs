use rand::rngs::SmallRng;
use rand::Rng;

use crate::autodiff::params::GradBuffer;
use crate::autodiff::tape::{NodeId, Tape};
use crate::autodiff::tensor::Tensor;
use crate::logic::Expr;
use crate::model::{LinnModel, ModuleParams, ALPHA};
use crate::{Error, Result};

/// Builds the differentiable computation graph for one chunk of a batch:
/// expression assembly, predictions, task losses, and the regularizers.
///
/// In evaluation mode (`training = false`) the recorded forward pass is
/// bit-identical to the tape-free inference path on [`LinnModel`]; tests pin
/// that equivalence.
pub struct GraphBuilder<'m> {
    model: &'m LinnModel,
    tape: Tape,
    training: bool,
    /// Every vector materialized while assembling expressions: variable
    /// embeddings, intermediate module outputs, and expression roots, in
    /// traversal order. The regularizers range over exactly this multiset.
    w_nodes: Vec<NodeId>,
    and_nodes: (NodeId, NodeId, NodeId),
    or_nodes: (NodeId, NodeId, NodeId),
    not_nodes: (NodeId, NodeId, NodeId),
    t_node: NodeId,
    w_stack: Option<(usize, NodeId)>,
}

impl<'m> GraphBuilder<'m> {
    pub fn new(model: &'m LinnModel, training: bool) -> Self {
        let mut tape = Tape::new();
        let store = model.store();
        let leaf = |tape: &mut Tape, m: ModuleParams| {
            (
                tape.param(store, m.h1),
                tape.param(store, m.h2),
                tape.param(store, m.b),
            )
        };
        let and_nodes = leaf(&mut tape, model.and_params());
        let or_nodes = leaf(&mut tape, model.or_params());
        let not_nodes = leaf(&mut tape, model.not_params());
        let t_node = tape.constant(model.anchor().clone());
        GraphBuilder {
            model,
            tape,
            training,
            w_nodes: Vec::new(),
            and_nodes,
            or_nodes,
            not_nodes,
            t_node,
            w_stack: None,
        }
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        self.tape.value(id)
    }

    pub fn scalar(&self, id: NodeId) -> Result<f64> {
        self.tape.value(id).scalar_value()
    }

    pub fn w_nodes(&self) -> &[NodeId] {
        &self.w_nodes
    }

    /// Snapshot of the regularized vectors (for tape-free recomputation).
    pub fn w_values(&self) -> Vec<Tensor> {
        self.w_nodes
            .iter()
            .map(|&id| self.tape.value(id).clone())
            .collect()
    }

    pub fn backward(&mut self, loss: NodeId, grads: &mut GradBuffer) -> Result<()> {
        self.tape.backward(loss, grads)
    }

    fn apply_module(
        &mut self,
        nodes: (NodeId, NodeId, NodeId),
        x: NodeId,
        dropout_rng: &mut SmallRng,
    ) -> Result<NodeId> {
        let (h1, h2, b) = nodes;
        let pre = self.tape.matmul(h1, x)?;
        let pre = self.tape.add_col_vec(pre, b)?;
        let mut act = self.tape.relu(pre);
        if self.training {
            act = self.tape.dropout(act, self.model.cfg.dropout, dropout_rng)?;
        }
        self.tape.matmul(h2, act)
    }

    pub fn apply_and(
        &mut self,
        a: NodeId,
        b: NodeId,
        dropout_rng: &mut SmallRng,
    ) -> Result<NodeId> {
        let cat = self.tape.concat_rows(a, b)?;
        self.apply_module(self.and_nodes, cat, dropout_rng)
    }

    pub fn apply_or(&mut self, a: NodeId, b: NodeId, dropout_rng: &mut SmallRng) -> Result<NodeId> {
        let cat = self.tape.concat_rows(a, b)?;
        self.apply_module(self.or_nodes, cat, dropout_rng)
    }

    pub fn apply_not(&mut self, x: NodeId, dropout_rng: &mut SmallRng) -> Result<NodeId> {
        self.apply_module(self.not_nodes, x, dropout_rng)
    }

    /// Recursively maps an expression to its vector, recording every node
    /// vector (leaves, intermediates, root) for the regularizers.
    pub fn assemble(&mut self, expr: &Expr, dropout_rng: &mut SmallRng) -> Result<NodeId> {
        let node = match expr {
            Expr::Var(id) => {
                if *id as usize >= self.model.n_vars() {
                    return Err(Error::UnboundVariable(*id));
                }
                self.tape
                    .row(self.model.store(), self.model.embeddings(), *id as usize)
            }
            Expr::Not(c) => {
                let cv = self.assemble(c, dropout_rng)?;
                self.apply_not(cv, dropout_rng)?
            }
            Expr::And(l, r) => {
                let lv = self.assemble(l, dropout_rng)?;
                let rv = self.assemble(r, dropout_rng)?;
                self.apply_and(lv, rv, dropout_rng)?
            }
            Expr::Or(l, r) => {
                let lv = self.assemble(l, dropout_rng)?;
                let rv = self.assemble(r, dropout_rng)?;
                self.apply_or(lv, rv, dropout_rng)?
            }
        };
        self.w_nodes.push(node);
        self.w_stack = None;
        Ok(node)
    }

    /// Truth prediction: sigmoid(ALPHA * cos(e, anchor)), a scalar node.
    pub fn prediction(&mut self, e: NodeId) -> Result<NodeId> {
        let cos = self.tape.cosine(e, self.t_node)?;
        let scaled = self.tape.scale(cos, ALPHA);
        Ok(self.tape.sigmoid(scaled))
    }

    /// Cross-entropy over a batch: -sum_i [y log p + (1-y) log(1-p)].
    pub fn loss_ce(&mut self, preds: &[NodeId], labels: &[bool]) -> Result<NodeId> {
        if preds.is_empty() || preds.len() != labels.len() {
            return Err(Error::Shape {
                op: "loss_ce",
                detail: format!("{} predictions vs {} labels", preds.len(), labels.len()),
            });
        }
        let p_row = self.tape.stack_cols(preds)?;
        let y: Vec<f64> = labels.iter().map(|&b| f64::from(u8::from(b))).collect();
        let y_row = self
            .tape
            .constant(Tensor::from_vec(1, y.len(), y.clone())?);
        let ym1_row = self
            .tape
            .constant(Tensor::from_vec(1, y.len(), y.iter().map(|v| 1.0 - v).collect())?);
        let log_p = self.tape.log(p_row)?;
        let neg_p = self.tape.scale(p_row, -1.0);
        let one_minus_p = self.tape.add_scalar(neg_p, 1.0);
        let log_1mp = self.tape.log(one_minus_p)?;
        let pos_term = self.tape.mul(y_row, log_p)?;
        let neg_term = self.tape.mul(ym1_row, log_1mp)?;
        let per_item = self.tape.add(pos_term, neg_term)?;
        let total = self.tape.sum_all(per_item);
        Ok(self.tape.scale(total, -1.0))
    }

    /// Pairwise ranking loss: -sum log sigmoid(p_pos - p_neg).
    pub fn loss_bpr(&mut self, pairs: &[(NodeId, NodeId)]) -> Result<NodeId> {
        if pairs.is_empty() {
            return Err(Error::Shape {
                op: "loss_bpr",
                detail: "no pairs".into(),
            });
        }
        let diffs: Vec<NodeId> = pairs
            .iter()
            .map(|&(pos, neg)| self.tape.sub(pos, neg))
            .collect::<Result<_>>()?;
        let diff_row = self.tape.stack_cols(&diffs)?;
        let sig = self.tape.sigmoid(diff_row);
        let lg = self.tape.log(sig)?;
        let total = self.tape.sum_all(lg);
        Ok(self.tape.scale(total, -1.0))
    }

    fn w_stack(&mut self) -> Result<NodeId> {
        if let Some((len, id)) = self.w_stack {
            if len == self.w_nodes.len() {
                return Ok(id);
            }
        }
        let id = self.tape.stack_cols(&self.w_nodes)?;
        self.w_stack = Some((self.w_nodes.len(), id));
        Ok(id)
    }

    /// 1 x k row of sigmoid(ALPHA * cos) over corresponding columns.
    fn sims(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let cos = self.tape.colwise_cosine(a, b)?;
        let scaled = self.tape.scale(cos, ALPHA);
        Ok(self.tape.sigmoid(scaled))
    }

    fn sum_sims(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let s = self.sims(a, b)?;
        Ok(self.tape.sum_all(s))
    }

    fn sum_one_minus_sims(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let s = self.sims(a, b)?;
        let neg = self.tape.scale(s, -1.0);
        let om = self.tape.add_scalar(neg, 1.0);
        Ok(self.tape.sum_all(om))
    }

    /// The ten logical-rule penalties over the recorded vector set, plus
    /// their sum. Operand order of each binary-module rule is drawn fresh
    /// from `coins` (commutativity is encouraged by randomization rather
    /// than by symmetric architecture). The anchor participates in the first
    /// rule only when `include_anchor` is set, so chunked batches can count
    /// its term exactly once.
    pub fn logic_regularizer(
        &mut self,
        coins: &mut SmallRng,
        dropout_rng: &mut SmallRng,
        include_anchor: bool,
    ) -> Result<(NodeId, [NodeId; 10])> {
        if self.w_nodes.is_empty() {
            return Err(Error::Shape {
                op: "logic_regularizer",
                detail: "no vectors recorded; assemble expressions first".into(),
            });
        }
        let k = self.w_nodes.len();
        let w_stack = self.w_stack()?;
        let t_k = {
            let cols = vec![self.t_node; k];
            self.tape.stack_cols(&cols)?
        };
        let f_col = self.apply_not(self.t_node, dropout_rng)?;
        let f_k = {
            let cols = vec![f_col; k];
            self.tape.stack_cols(&cols)?
        };
        let wt_stack = if include_anchor {
            let mut cols = self.w_nodes.clone();
            cols.push(self.t_node);
            self.tape.stack_cols(&cols)?
        } else {
            w_stack
        };

        let not_wt = self.apply_not(wt_stack, dropout_rng)?;
        let r1 = self.sum_sims(not_wt, wt_stack)?;

        let not_w = self.apply_not(w_stack, dropout_rng)?;
        let not_not_w = self.apply_not(not_w, dropout_rng)?;
        let r2 = self.sum_one_minus_sims(not_not_w, w_stack)?;

        let flip = |coins: &mut SmallRng, a: NodeId, b: NodeId| {
            if coins.random::<bool>() {
                (b, a)
            } else {
                (a, b)
            }
        };

        let (x, y) = flip(coins, w_stack, t_k);
        let and_wt = self.apply_and(x, y, dropout_rng)?;
        let r3 = self.sum_one_minus_sims(and_wt, w_stack)?;

        let (x, y) = flip(coins, w_stack, f_k);
        let and_wf = self.apply_and(x, y, dropout_rng)?;
        let r4 = self.sum_one_minus_sims(and_wf, f_k)?;

        let (x, y) = flip(coins, w_stack, w_stack);
        let and_ww = self.apply_and(x, y, dropout_rng)?;
        let r5 = self.sum_one_minus_sims(and_ww, w_stack)?;

        let (x, y) = flip(coins, w_stack, not_w);
        let and_wn = self.apply_and(x, y, dropout_rng)?;
        let r6 = self.sum_one_minus_sims(and_wn, f_k)?;

        let (x, y) = flip(coins, w_stack, f_k);
        let or_wf = self.apply_or(x, y, dropout_rng)?;
        let r7 = self.sum_one_minus_sims(or_wf, w_stack)?;

        let (x, y) = flip(coins, w_stack, t_k);
        let or_wt = self.apply_or(x, y, dropout_rng)?;
        let r8 = self.sum_one_minus_sims(or_wt, t_k)?;

        let (x, y) = flip(coins, w_stack, w_stack);
        let or_ww = self.apply_or(x, y, dropout_rng)?;
        let r9 = self.sum_one_minus_sims(or_ww, w_stack)?;

        let (x, y) = flip(coins, w_stack, not_w);
        let or_wn = self.apply_or(x, y, dropout_rng)?;
        let r10 = self.sum_one_minus_sims(or_wn, t_k)?;

        let rules = [r1, r2, r3, r4, r5, r6, r7, r8, r9, r10];
        let mut total = r1;
        for r in &rules[1..] {
            total = self.tape.add(total, *r)?;
        }
        Ok((total, rules))
    }

    /// Sum of squared entries of every recorded vector.
    pub fn length_regularizer(&mut self) -> Result<NodeId> {
        if self.w_nodes.is_empty() {
            return Err(Error::Shape {
                op: "length_regularizer",
                detail: "no vectors recorded".into(),
            });
        }
        let stack = self.w_stack()?;
        Ok(self.tape.l2_norm_sq(stack))
    }

    /// Sum of squared entries of every trainable parameter (embeddings and
    /// module weights; the anchor is not a parameter).
    pub fn theta_penalty(&mut self) -> Result<NodeId> {
        let ids: Vec<_> = self.model.store().iter().map(|(id, _, _)| id).collect();
        let mut total: Option<NodeId> = None;
        for id in ids {
            let p = self.tape.param(self.model.store(), id);
            let sq = self.tape.l2_norm_sq(p);
            total = Some(match total {
                Some(t) => self.tape.add(t, sq)?,
                None => sq,
            });
        }
        total.ok_or(Error::Shape {
            op: "theta_penalty",
            detail: "model has no parameters".into(),
        })
    }

    /// base + sum of coeff * term, skipping zero coefficients so that a
    /// disabled regularizer adds no graph nodes at all.
    pub fn weighted_sum(&mut self, base: NodeId, terms: &[(NodeId, f64)]) -> Result<NodeId> {
        let mut total = base;
        for &(node, coeff) in terms {
            if coeff != 0.0 {
                let scaled = self.tape.scale(node, coeff);
                total = self.tape.add(total, scaled)?;
            }
        }
        Ok(total)
    }
}
