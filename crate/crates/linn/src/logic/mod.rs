//! Propositional logic: expression trees, a small text grammar, random DNF
//! generation, and exact evaluation. This is the ground-truth oracle the
//! learned model is measured against.

mod dnf;
mod expr;
mod io;
mod parse;

pub use dnf::{generate_dnf, DnfClause, DnfExpression, GenConfig};
pub use expr::{Assignment, Expr};
pub use io::{load_assignment, load_expressions, save_assignment, save_expressions};
pub use parse::parse;
