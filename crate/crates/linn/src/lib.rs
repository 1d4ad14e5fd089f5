//! Logic-integrated neural networks.
//!
//! Propositional logic variables are embedded as vectors and the basic
//! operations (AND, OR, NOT) are learned as small neural modules. For every
//! input expression the computation graph is assembled dynamically from the
//! expression tree, and a set of logic regularizers pushes the modules toward
//! the propositional laws they are named after.
//!
//! The crate is organized around five pieces:
//!
//! * [`logic`] — expression trees, a DNF generator, parsing/rendering, and an
//!   exact boolean evaluator used as the ground-truth oracle;
//! * [`autodiff`] — a dense-tensor reverse-mode tape with the operation set
//!   the model needs, the Adam optimizer, and finite-difference checking;
//! * [`model`] — embeddings, the AND/OR/NOT/Sim modules, dynamic graph
//!   assembly, the logic/length/L2 regularizers, and the task losses;
//! * [`sim`] — the logical-equation experiment: synthetic dataset generation,
//!   cross-entropy training, accuracy/RMSE evaluation, weight sweeps, and
//!   variable solving;
//! * [`rec`] — the Top-K recommendation experiment: interaction-log loading,
//!   binarization, leave-one-out splitting, pairwise-ranking training, and
//!   nDCG/Hit evaluation.

pub mod autodiff;
pub mod config;
pub mod logic;
pub mod model;
pub mod rec;
pub mod seeds;
pub mod sim;

mod error;

pub use error::{Error, Result};

/// Which partition of a dataset to address.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

/// Why a training run ended. Runs always restore the best-validation
/// parameters, so every reason yields a usable model; the reason records how
/// far the optimizer got.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    /// The full epoch budget ran out.
    MaxEpochs,
    /// Validation stopped improving for `patience` epochs.
    Patience,
    /// A training step produced an exactly zero vector — under dropout a
    /// mask can zero a module's entire hidden layer — so the step's
    /// similarity is undefined and no further updates are possible. The run
    /// keeps everything learned up to the collapse.
    ZeroCollapse { epoch: usize },
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StopReason::MaxEpochs => write!(f, "epoch budget exhausted"),
            StopReason::Patience => write!(f, "validation patience exhausted"),
            StopReason::ZeroCollapse { epoch } => {
                write!(f, "module activation collapsed to zero at epoch {epoch}")
            }
        }
    }
}
