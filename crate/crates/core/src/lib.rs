//! Radical-based decipherment of ancient glyphs.

pub mod annotator;
pub mod config;
pub mod decomposer;
pub mod embedder;
pub mod evaluator;
pub mod glyph_data;
pub mod ids;
pub mod predictor;
pub mod reconstructor;
