//! Log pipeline: tokenization, template mining, and event embeddings.

pub mod drain;
pub mod embed;
pub mod tokenize;

pub use drain::{EventId, Template, TemplateStore};
pub use embed::{char_ngrams, cosine, train_embeddings, EmbeddingConfig, EmbeddingTable};
pub use tokenize::tokenize;
