//! Feedforward ranking of `(mention, candidate)` pairs.
//!
//! Each pair is turned into a fixed-width feature vector (mention surface, dual-FOFE
//! context, candidate description), passed through three ReLU layers and scored by a
//! two-way output. At inference the correct-link logits of a mention's candidates are
//! normalised with a softmax over the list.

mod config;
mod features;
mod gradcheck;
mod io;
mod model;
mod train;

pub use config::{RankerDims, TrainConfig};
pub use features::{FeatureExtractor, MentionInput, MentionInputs, SparseVec};
pub use gradcheck::{compare_gradients, gradient_check, GradEntry, FD_STEP, ZERO_TOLERANCE};
pub use io::{decode_model, encode_model, read_model, write_model, MODEL_MAGIC, MODEL_VERSION};
pub use model::{
    pair_loss, softmax, EmbeddingCache, FeatureVector, ForwardCache, Gradients, Label, LayerGrad,
    Linear, RankerModel, HIDDEN_LAYERS,
};
pub use train::{train, Prediction, Ranking};
