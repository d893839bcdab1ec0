//! Glyph ingestion, normalization, corpus manifests and synthetic glyphs.

mod atlas;
mod bitmap;
mod compose;
mod manifest;
mod raster;

use thiserror::Error;

pub use atlas::{RadicalAtlas, STAMP_SIZE};
pub use bitmap::{BBox, Bitmap};
pub use compose::{
    compose_synthetic, leaf_boxes, synthetic_dictionary, synthetic_radicals, Jitter, PeriodSpec, SynthDictSpec,
    SyntheticCorpus, LEAF_MARGIN,
};
pub use manifest::{load_manifest, Manifest, ManifestRecord, PeriodCounts};
pub use raster::{
    load_glyph_bitmap, load_raster, normalize, normalize_bitmap, pgm_p2, write_pgm, Glyph, GrayRaster, Period, CANVAS,
    DEFAULT_THRESHOLD, MAX_INPUT_SIDE,
};

#[derive(Debug, Error)]
pub enum GlyphError {
    #[error("image has no foreground pixels")]
    BlankImage,
    #[error("raster {width}x{height} exceeds 512x512")]
    TooLarge { width: usize, height: usize },
    #[error("bad raster: {0}")]
    BadRaster(String),
    #[error("image decode: {0}")]
    Image(String),
    #[error("unknown period {0:?}")]
    UnknownPeriod(String),
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("duplicate id {id:?} at line {line}")]
    DuplicateId { id: String, line: usize },
    #[error("radical {0} missing from atlas")]
    MissingRadical(String),
    #[error("stamp {label}: {reason}")]
    BadStamp { label: String, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
