//! Qualitative analysis of ordered branching Markov decision processes (OBMDPs)
//! with multiple reachability targets.
//!
//! A model is a controlled stochastic context-free grammar. Plays are ordered
//! derivation trees; a strategy picks actions at controlled nodes based on the
//! labels on the path from the root. The crate decides, for a set of targets,
//! which start symbols can reach all of them with positive probability, with
//! probability one, or with probability arbitrarily close to one, and
//! synthesizes strategies that achieve this.

pub mod dsl;
pub mod error;
pub mod graph;
pub mod instances;
pub mod model;
pub mod multi;
pub mod normalize;
pub mod prob;
pub mod queries;
pub mod sets;
pub mod simulate;
pub mod single;
pub mod strategy;
pub mod synth;

pub use error::{Diagnostic, Error};
pub use model::{Dir, FormKind, NtId, Obmdp, Origin, SnfForm, SnfObmdp, TargetSet};
pub use prob::Probability;
pub use sets::{NodeSet, Subset};

/// Exact rational probabilities, the default scalar.
pub type Rational = num_rational::BigRational;
/// Model with exact rational probabilities.
pub type ExactObmdp = Obmdp<Rational>;
/// SNF model with exact rational probabilities.
pub type ExactSnf = SnfObmdp<Rational>;
/// Model with floating-point probabilities.
pub type FloatObmdp = Obmdp<f64>;
/// SNF model with floating-point probabilities.
pub type FloatSnf = SnfObmdp<f64>;
