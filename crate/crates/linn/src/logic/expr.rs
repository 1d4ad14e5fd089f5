use std::collections::BTreeSet;
use std::fmt;

use crate::{Error, Result};

/// Propositional formula over non-negative variable ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Expr {
    Var(u32),
    Not(Box<Expr>),
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
}

/// Total truth assignment for variables `0..len`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Assignment {
    values: Vec<bool>,
}

impl Expr {
    pub fn var(id: u32) -> Expr {
        Expr::Var(id)
    }

    pub fn not(e: Expr) -> Expr {
        Expr::Not(Box::new(e))
    }

    pub fn and(a: Expr, b: Expr) -> Expr {
        Expr::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Expr, b: Expr) -> Expr {
        Expr::Or(Box::new(a), Box::new(b))
    }

    /// Standard propositional semantics under a total assignment.
    pub fn evaluate(&self, a: &Assignment) -> Result<bool> {
        Ok(match self {
            Expr::Var(id) => a.get(*id)?,
            Expr::Not(c) => !c.evaluate(a)?,
            Expr::And(l, r) => l.evaluate(a)? & r.evaluate(a)?,
            Expr::Or(l, r) => l.evaluate(a)? | r.evaluate(a)?,
        })
    }

    /// Canonical text: fully parenthesized binary form, `~`/`&`/`|`.
    /// `parse(render(e)) == e` for every expression.
    pub fn render(&self) -> String {
        let mut out = String::new();
        self.render_into(&mut out);
        out
    }

    fn render_into(&self, out: &mut String) {
        match self {
            Expr::Var(id) => {
                out.push('v');
                out.push_str(&id.to_string());
            }
            Expr::Not(c) => {
                out.push_str("(~");
                c.render_into(out);
                out.push(')');
            }
            Expr::And(l, r) => {
                out.push('(');
                l.render_into(out);
                out.push_str(" & ");
                r.render_into(out);
                out.push(')');
            }
            Expr::Or(l, r) => {
                out.push('(');
                l.render_into(out);
                out.push_str(" | ");
                r.render_into(out);
                out.push(')');
            }
        }
    }

    /// Distinct variable ids, ascending.
    pub fn variables(&self) -> Vec<u32> {
        let mut set = BTreeSet::new();
        self.collect_vars(&mut set);
        set.into_iter().collect()
    }

    fn collect_vars(&self, set: &mut BTreeSet<u32>) {
        match self {
            Expr::Var(id) => {
                set.insert(*id);
            }
            Expr::Not(c) => c.collect_vars(set),
            Expr::And(l, r) | Expr::Or(l, r) => {
                l.collect_vars(set);
                r.collect_vars(set);
            }
        }
    }

    /// Total node count (leaves plus internal operators).
    pub fn node_count(&self) -> usize {
        match self {
            Expr::Var(_) => 1,
            Expr::Not(c) => 1 + c.node_count(),
            Expr::And(l, r) | Expr::Or(l, r) => 1 + l.node_count() + r.node_count(),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

impl Assignment {
    pub fn new(values: Vec<bool>) -> Self {
        Assignment { values }
    }

    /// Uniform random truth value per variable.
    pub fn random(n: usize, rng: &mut impl rand::Rng) -> Self {
        Assignment {
            values: (0..n).map(|_| rng.random::<bool>()).collect(),
        }
    }

    pub fn get(&self, id: u32) -> Result<bool> {
        self.values
            .get(id as usize)
            .copied()
            .ok_or(Error::UnboundVariable(id))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[bool] {
        &self.values
    }
}
