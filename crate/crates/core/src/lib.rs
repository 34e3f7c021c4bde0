//! First-order meta-learning for few-shot cross-lingual dependency parsing.
pub mod numeric;
pub mod conllu;
pub mod decoder;
pub mod vocab;
pub mod model;
pub mod evaluate;
pub mod meta;
pub mod typology;
pub mod synthlang;
pub mod experiment;

#[cfg(test)]
pub(crate) mod testutil;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
