//! Entity linking toolkit.
//!
//! Three stages turn detected mentions into KB links:
//!
//! 1. [`candidates`]: extend each mention's surface, query the [`kb`] by exact name,
//!    redirect/disambiguation tables and an n-gram fuzzy index, then distill each mention's
//!    candidates to the top `tau` by co-occurrence on the document candidate graph.
//! 2. [`ranker`]: score each `(mention, candidate)` pair with a feedforward network over
//!    mention bag-of-words, dual-FOFE ([`fofe`]) context codes and candidate description
//!    TF-IDF features; a softmax over the list picks the link (possibly NIL).
//! 3. [`nil`]: group NIL mentions by case-folded surface.
//!
//! [`eval`] scores the output, [`synth`] generates desk-scale test data, and [`pipeline`]
//! wires everything together.

pub mod binio;
pub mod candidates;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod fofe;
pub mod kb;
pub mod nil;
pub mod par;
pub mod pipeline;
pub mod ranker;
pub mod synth;
pub mod tensor;
pub mod text;

pub use error::{Error, ErrorClass, Result};
