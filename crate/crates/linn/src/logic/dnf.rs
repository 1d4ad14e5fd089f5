use rand::seq::SliceRandom;
use rand::Rng;

use crate::logic::expr::{Assignment, Expr};
use crate::{Error, Result};

/// One conjunction: an ordered list of (variable id, negated) literals.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DnfClause {
    pub literals: Vec<(u32, bool)>,
}

/// A disjunction of clauses, optionally carrying its oracle truth value.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DnfExpression {
    pub clauses: Vec<DnfClause>,
    pub label: Option<bool>,
}

/// Knobs for random DNF generation.
#[derive(Clone, Debug)]
pub struct GenConfig {
    pub var_pool_size: usize,
    /// Inclusive bounds on the number of clauses.
    pub clause_range: (usize, usize),
    /// Inclusive bounds on literals per clause.
    pub literal_range: (usize, usize),
    pub negation_prob: f64,
    /// When false (the default), variable ids within a clause are distinct.
    pub allow_duplicate_vars: bool,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            var_pool_size: 1000,
            clause_range: (1, 5),
            literal_range: (1, 5),
            negation_prob: 0.5,
            allow_duplicate_vars: false,
        }
    }
}

impl GenConfig {
    fn validate(&self) -> Result<()> {
        if self.var_pool_size == 0 {
            return Err(Error::Generate("variable pool is empty".into()));
        }
        let ok_range = |(lo, hi): (usize, usize)| lo >= 1 && lo <= hi;
        if !ok_range(self.clause_range) {
            return Err(Error::Generate(format!(
                "bad clause range {:?}",
                self.clause_range
            )));
        }
        if !ok_range(self.literal_range) {
            return Err(Error::Generate(format!(
                "bad literal range {:?}",
                self.literal_range
            )));
        }
        if !self.allow_duplicate_vars && self.literal_range.1 > self.var_pool_size {
            return Err(Error::Generate(format!(
                "clauses of up to {} distinct variables need a pool of at least that size, got {}",
                self.literal_range.1, self.var_pool_size
            )));
        }
        if !(0.0..=1.0).contains(&self.negation_prob) {
            return Err(Error::Generate(format!(
                "negation probability {} outside [0, 1]",
                self.negation_prob
            )));
        }
        Ok(())
    }
}

/// Draws a random DNF: clause count uniform in `clause_range`, literal count
/// per clause uniform in `literal_range`, variable ids uniform (without
/// replacement within a clause unless duplicates are allowed), each literal
/// negated with `negation_prob`. Deterministic given the rng state.
pub fn generate_dnf(rng: &mut impl Rng, cfg: &GenConfig) -> Result<DnfExpression> {
    cfg.validate()?;
    let n_clauses = rng.random_range(cfg.clause_range.0..=cfg.clause_range.1);
    let mut clauses = Vec::with_capacity(n_clauses);
    for _ in 0..n_clauses {
        let n_lits = rng.random_range(cfg.literal_range.0..=cfg.literal_range.1);
        let ids: Vec<u32> = if cfg.allow_duplicate_vars {
            (0..n_lits)
                .map(|_| rng.random_range(0..cfg.var_pool_size) as u32)
                .collect()
        } else {
            rand::seq::index::sample(rng, cfg.var_pool_size, n_lits)
                .into_iter()
                .map(|i| i as u32)
                .collect()
        };
        let literals = ids
            .into_iter()
            .map(|id| (id, rng.random_bool(cfg.negation_prob)))
            .collect();
        clauses.push(DnfClause { literals });
    }
    Ok(DnfExpression {
        clauses,
        label: None,
    })
}

impl DnfClause {
    fn literal_expr(&self, i: usize) -> Expr {
        let (id, negated) = self.literals[i];
        if negated {
            Expr::not(Expr::var(id))
        } else {
            Expr::var(id)
        }
    }

    /// Left-fold of the literals in their stored order.
    pub fn to_tree(&self) -> Expr {
        let mut e = self.literal_expr(0);
        for i in 1..self.literals.len() {
            e = Expr::and(e, self.literal_expr(i));
        }
        e
    }

    /// True iff every literal is satisfied. Evaluates flat, without building
    /// a tree, so it can serve as an independent oracle for the tree path.
    pub fn evaluate(&self, a: &Assignment) -> Result<bool> {
        for &(id, negated) in &self.literals {
            if a.get(id)? == negated {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

impl DnfExpression {
    /// Canonical binary tree: clauses and literals in stored order,
    /// left-folded.
    pub fn to_tree(&self) -> Expr {
        let mut e = self.clauses[0].to_tree();
        for c in &self.clauses[1..] {
            e = Expr::or(e, c.to_tree());
        }
        e
    }

    /// Tree with literal order within each clause and clause order both
    /// independently permuted. Truth value is invariant under any such
    /// permutation, so this only changes the shape the model sees.
    pub fn to_shuffled_tree(&self, rng: &mut impl Rng) -> Expr {
        let mut shuffled = self.clone();
        for c in &mut shuffled.clauses {
            c.literals.shuffle(rng);
        }
        shuffled.clauses.shuffle(rng);
        shuffled.to_tree()
    }

    /// Flat clause-by-clause evaluation: true iff some clause is satisfied.
    pub fn evaluate(&self, a: &Assignment) -> Result<bool> {
        for c in &self.clauses {
            if c.evaluate(a)? {
                return Ok(true);
            }
        }
        Ok(false)
    }

    pub fn with_label(mut self, label: bool) -> Self {
        self.label = Some(label);
        self
    }

    /// Distinct variable ids, ascending.
    pub fn variables(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self
            .clauses
            .iter()
            .flat_map(|c| c.literals.iter().map(|&(id, _)| id))
            .collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Recovers clause/literal structure from a tree, accepting exactly the
    /// shapes `to_tree` and `to_shuffled_tree` produce: disjunctions of
    /// conjunctions of (possibly negated) variables.
    pub fn from_tree(expr: &Expr) -> Result<DnfExpression> {
        let mut clauses = Vec::new();
        collect_clauses(expr, &mut clauses)?;
        Ok(DnfExpression {
            clauses,
            label: None,
        })
    }
}

fn collect_clauses(e: &Expr, out: &mut Vec<DnfClause>) -> Result<()> {
    match e {
        Expr::Or(l, r) => {
            collect_clauses(l, out)?;
            collect_clauses(r, out)?;
            Ok(())
        }
        _ => {
            let mut literals = Vec::new();
            collect_literals(e, &mut literals)?;
            out.push(DnfClause { literals });
            Ok(())
        }
    }
}

fn collect_literals(e: &Expr, out: &mut Vec<(u32, bool)>) -> Result<()> {
    match e {
        Expr::And(l, r) => {
            collect_literals(l, out)?;
            collect_literals(r, out)?;
            Ok(())
        }
        Expr::Var(id) => {
            out.push((*id, false));
            Ok(())
        }
        Expr::Not(c) => match c.as_ref() {
            Expr::Var(id) => {
                out.push((*id, true));
                Ok(())
            }
            other => Err(Error::NotDnf(format!(
                "negation applied to non-variable {other}"
            ))),
        },
        Expr::Or(_, _) => Err(Error::NotDnf(
            "disjunction nested inside a clause".to_string(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::SmallRng;
    use rand::SeedableRng;

    fn cfg(n: usize) -> GenConfig {
        GenConfig {
            var_pool_size: n,
            ..GenConfig::default()
        }
    }

    #[test]
    fn generated_shape_respects_ranges() {
        let mut rng = SmallRng::seed_from_u64(3);
        for _ in 0..200 {
            let d = generate_dnf(&mut rng, &cfg(50)).unwrap();
            assert!((1..=5).contains(&d.clauses.len()));
            for c in &d.clauses {
                assert!((1..=5).contains(&c.literals.len()));
                let mut ids: Vec<u32> = c.literals.iter().map(|l| l.0).collect();
                ids.sort_unstable();
                let before = ids.len();
                ids.dedup();
                assert_eq!(ids.len(), before, "duplicate variable in clause");
                assert!(ids.iter().all(|&id| (id as usize) < 50));
            }
        }
    }

    #[test]
    fn generation_is_deterministic_per_seed() {
        let a = generate_dnf(&mut SmallRng::seed_from_u64(9), &cfg(100)).unwrap();
        let b = generate_dnf(&mut SmallRng::seed_from_u64(9), &cfg(100)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn pool_smaller_than_clause_is_rejected() {
        let mut rng = SmallRng::seed_from_u64(0);
        let c = cfg(3);
        assert!(matches!(
            generate_dnf(&mut rng, &c),
            Err(Error::Generate(_))
        ));
    }

    #[test]
    fn tree_round_trip_recovers_structure() {
        let mut rng = SmallRng::seed_from_u64(11);
        for _ in 0..100 {
            let d = generate_dnf(&mut rng, &cfg(30)).unwrap();
            let back = DnfExpression::from_tree(&d.to_tree()).unwrap();
            assert_eq!(back.clauses, d.clauses);
        }
    }

    #[test]
    fn from_tree_rejects_non_dnf() {
        // ~(a & b) is not a literal.
        let e = Expr::not(Expr::and(Expr::var(0), Expr::var(1)));
        assert!(matches!(
            DnfExpression::from_tree(&e),
            Err(Error::NotDnf(_))
        ));
        // (a | b) & c nests a disjunction inside a conjunction.
        let e = Expr::and(Expr::or(Expr::var(0), Expr::var(1)), Expr::var(2));
        assert!(matches!(
            DnfExpression::from_tree(&e),
            Err(Error::NotDnf(_))
        ));
    }

    #[test]
    fn shuffled_tree_preserves_truth_value() {
        let mut rng = SmallRng::seed_from_u64(21);
        for _ in 0..300 {
            let d = generate_dnf(&mut rng, &cfg(12)).unwrap();
            let a = Assignment::random(12, &mut rng);
            let base = d.to_tree().evaluate(&a).unwrap();
            let shuffled = d.to_shuffled_tree(&mut rng).evaluate(&a).unwrap();
            assert_eq!(base, shuffled);
            assert_eq!(base, d.evaluate(&a).unwrap());
        }
    }

    #[test]
    fn single_literal_tree_is_the_literal() {
        let d = DnfExpression {
            clauses: vec![DnfClause {
                literals: vec![(4, true)],
            }],
            label: None,
        };
        assert_eq!(d.to_tree(), Expr::not(Expr::var(4)));
        let mut rng = SmallRng::seed_from_u64(0);
        assert_eq!(d.to_shuffled_tree(&mut rng), Expr::not(Expr::var(4)));
    }

    #[test]
    fn both_clause_orders_appear_across_seeds() {
        let d = DnfExpression {
            clauses: vec![
                DnfClause {
                    literals: vec![(0, false)],
                },
                DnfClause {
                    literals: vec![(1, false)],
                },
            ],
            label: None,
        };
        let mut seen = [false, false];
        for seed in 0..32 {
            let mut rng = SmallRng::seed_from_u64(seed);
            match d.to_shuffled_tree(&mut rng) {
                Expr::Or(l, _) if *l == Expr::var(0) => seen[0] = true,
                Expr::Or(l, _) if *l == Expr::var(1) => seen[1] = true,
                other => panic!("unexpected shape {other:?}"),
            }
        }
        assert!(seen[0] && seen[1], "only one order observed: {seen:?}");
    }

    #[test]
    fn clause_count_roughly_uniform() {
        let mut rng = SmallRng::seed_from_u64(123);
        let mut hist = [0usize; 5];
        let samples = 10_000;
        for _ in 0..samples {
            let d = generate_dnf(&mut rng, &cfg(100)).unwrap();
            hist[d.clauses.len() - 1] += 1;
        }
        // 3 sigma around the multinomial expectation n/5.
        let expect = samples as f64 / 5.0;
        let sigma = (samples as f64 * 0.2 * 0.8).sqrt();
        for (i, &count) in hist.iter().enumerate() {
            assert!(
                (count as f64 - expect).abs() < 3.0 * sigma,
                "clause count {} seen {} times, expected ~{}",
                i + 1,
                count,
                expect
            );
        }
    }
}
