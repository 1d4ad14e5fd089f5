//! Synthetic logical-equation dataset.
//!
//! A hidden truth assignment over `n` variables is sampled once, then `m`
//! random DNF expressions are generated and labeled by exact evaluation
//! against that assignment. The trainer only ever sees the expressions and
//! their labels; the assignment itself is kept aside as the answer key for
//! the variable-solving probe.

use std::path::Path;

use rand::seq::SliceRandom;

use crate::logic::{
    generate_dnf, load_assignment, load_expressions, save_assignment, save_expressions,
    Assignment, DnfExpression, GenConfig,
};
use crate::seeds;
use crate::{Error, Result, Split};

/// Labeled expressions plus the hidden assignment that produced the labels.
#[derive(Clone, Debug)]
pub struct SimDataset {
    n: usize,
    hidden: Assignment,
    expressions: Vec<DnfExpression>,
    train: Vec<usize>,
    valid: Vec<usize>,
    test: Vec<usize>,
}

impl SimDataset {
    /// Samples an assignment, generates `m` labeled DNFs over `n` variables,
    /// and splits them 80/10/10 (valid and test each get `floor(m/10)`, the
    /// remainder trains). Fully determined by `master_seed`.
    pub fn generate(n: usize, m: usize, master_seed: u64) -> Result<SimDataset> {
        if n == 0 || m == 0 {
            return Err(Error::Generate(format!(
                "need at least one variable and one expression, got n={n}, m={m}"
            )));
        }
        let mut assign_rng = seeds::rng(master_seed, seeds::DATA, &[0]);
        let hidden = Assignment::random(n, &mut assign_rng);

        let cfg = GenConfig {
            var_pool_size: n,
            ..GenConfig::default()
        };
        let mut gen_rng = seeds::rng(master_seed, seeds::DATA, &[1]);
        let mut expressions = Vec::with_capacity(m);
        for _ in 0..m {
            let expr = generate_dnf(&mut gen_rng, &cfg)?;
            let label = expr.evaluate(&hidden)?;
            expressions.push(expr.with_label(label));
        }

        let mut order: Vec<usize> = (0..m).collect();
        let mut split_rng = seeds::rng(master_seed, seeds::DATA, &[2]);
        order.shuffle(&mut split_rng);
        let holdout = m / 10;
        let train_end = m - 2 * holdout;
        let train = order[..train_end].to_vec();
        let valid = order[train_end..train_end + holdout].to_vec();
        let test = order[train_end + holdout..].to_vec();

        Ok(SimDataset {
            n,
            hidden,
            expressions,
            train,
            valid,
            test,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// The answer key. Training code must not read this; it exists for the
    /// variable-solving probe and for label verification.
    pub fn hidden(&self) -> &Assignment {
        &self.hidden
    }

    pub fn expressions(&self) -> &[DnfExpression] {
        &self.expressions
    }

    pub fn expression(&self, ix: usize) -> &DnfExpression {
        &self.expressions[ix]
    }

    /// Label of expression `ix`; generation and loading guarantee presence.
    pub fn label(&self, ix: usize) -> bool {
        self.expressions[ix]
            .label
            .expect("dataset expressions are always labeled")
    }

    pub fn split(&self, which: Split) -> &[usize] {
        match which {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Test => &self.test,
        }
    }

    /// Writes `train.tsv`, `valid.tsv`, `test.tsv`, and `assignment.tsv`
    /// under `dir` (created if missing).
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for which in Split::ALL {
            let exprs: Vec<DnfExpression> = self
                .split(which)
                .iter()
                .map(|&ix| self.expressions[ix].clone())
                .collect();
            save_expressions(&dir.join(format!("{}.tsv", which.name())), &exprs)?;
        }
        save_assignment(&dir.join("assignment.tsv"), &self.hidden)
    }

    /// Reads a directory written by [`SimDataset::save`] and re-verifies
    /// every label against the stored assignment.
    pub fn load(dir: &Path) -> Result<SimDataset> {
        let hidden = load_assignment(&dir.join("assignment.tsv"))?;
        let n = hidden.len();
        let mut expressions = Vec::new();
        let mut bounds = Vec::new();
        for which in Split::ALL {
            let path = dir.join(format!("{}.tsv", which.name()));
            let part = load_expressions(&path)?;
            for (line, expr) in part.iter().enumerate() {
                let label = expr.label.ok_or_else(|| Error::Data {
                    path: path.clone(),
                    line: line + 1,
                    message: "expression is missing its label".into(),
                })?;
                if expr.evaluate(&hidden)? != label {
                    return Err(Error::Data {
                        path: path.clone(),
                        line: line + 1,
                        message: "stored label contradicts the stored assignment".into(),
                    });
                }
            }
            let start = expressions.len();
            expressions.extend(part);
            bounds.push(start..expressions.len());
        }
        Ok(SimDataset {
            n,
            hidden,
            expressions,
            train: bounds[0].clone().collect(),
            valid: bounds[1].clone().collect(),
            test: bounds[2].clone().collect(),
        })
    }
}
