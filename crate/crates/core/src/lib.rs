//! Disfluency annotation, insertion and evaluation.
//!
//! [`annotation`] defines annotated utterances and their markup and BIO
//! forms, [`corpus`] loads and pairs corpora, [`inserter`] learns and
//! applies a statistical insertion model, [`llm_backend`] talks to an
//! external completion service, [`render`] produces TTS-ready text and
//! [`eval`] scores the results.

pub mod annotation;
pub mod corpus;
pub mod eval;
pub mod inserter;
pub mod llm_backend;
pub mod render;
