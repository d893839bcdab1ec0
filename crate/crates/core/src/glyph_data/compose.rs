//! Synthetic glyphs rendered from IDS trees, plus generators for synthetic
//! dictionaries and multi-period corpora used in end-to-end tests.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::atlas::RadicalAtlas;
use super::bitmap::{BBox, Bitmap};
use super::manifest::{Manifest, ManifestRecord};
use super::raster::{write_pgm, Glyph, Period, CANVAS};
use super::GlyphError;
use crate::ids::{serialize_ids, CharDict, CharEntry, IdsTree, Radical, StructOp};

/// Inset applied to every leaf rectangle so neighbouring radicals never touch.
pub const LEAF_MARGIN: f64 = 3.0;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Jitter {
    /// Maximum per-leaf translation in pixels, each axis.
    pub max_shift: i64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Rect {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
}

/// Pixel rectangle assigned to each leaf, in prefix order, before jitter.
pub fn leaf_boxes(tree: &IdsTree) -> Vec<(Radical, BBox)> {
    let mut out = Vec::new();
    let full = Rect {
        x: 0.0,
        y: 0.0,
        w: CANVAS as f64,
        h: CANVAS as f64,
    };
    layout(tree, full, &mut out);
    out
}

fn layout(tree: &IdsTree, r: Rect, out: &mut Vec<(Radical, BBox)>) {
    match tree {
        IdsTree::Leaf(label) => out.push((label.clone(), to_pixels(r))),
        IdsTree::Node { op, children } => {
            for (child, sub) in children.iter().zip(split(*op, r, children.len())) {
                layout(child, sub, out);
            }
        }
    }
}

fn split(op: StructOp, r: Rect, n: usize) -> Vec<Rect> {
    let half = |fx: f64, fy: f64| Rect {
        x: r.x + fx * r.w,
        y: r.y + fy * r.h,
        w: r.w / 2.0,
        h: r.h / 2.0,
    };
    match op {
        StructOp::LeftRight | StructOp::LeftMidRight => (0..n)
            .map(|i| Rect {
                x: r.x + r.w * i as f64 / n as f64,
                w: r.w / n as f64,
                ..r
            })
            .collect(),
        StructOp::TopBottom | StructOp::TopMidBottom => (0..n)
            .map(|i| Rect {
                y: r.y + r.h * i as f64 / n as f64,
                h: r.h / n as f64,
                ..r
            })
            .collect(),
        // outer component takes the whole box, the inner one a half-scale box
        StructOp::SurroundFull | StructOp::Overlaid => vec![r, half(0.25, 0.25)],
        StructOp::SurroundAbove => vec![r, half(0.25, 0.5)],
        StructOp::SurroundBelow => vec![r, half(0.25, 0.0)],
        StructOp::SurroundLeft => vec![r, half(0.5, 0.25)],
        StructOp::SurroundUpperLeft => vec![r, half(0.5, 0.5)],
        StructOp::SurroundUpperRight => vec![r, half(0.0, 0.5)],
        StructOp::SurroundLowerLeft => vec![r, half(0.5, 0.0)],
    }
}

fn to_pixels(r: Rect) -> BBox {
    let max = CANVAS as f64 - 1.0;
    let x0 = (r.x.round() + LEAF_MARGIN).min(max);
    let y0 = (r.y.round() + LEAF_MARGIN).min(max);
    let x1 = ((r.x + r.w).round() - 1.0 - LEAF_MARGIN).clamp(x0, max);
    let y1 = ((r.y + r.h).round() - 1.0 - LEAF_MARGIN).clamp(y0, max);
    BBox::new(x0 as usize, y0 as usize, x1 as usize, y1 as usize)
}

/// Crops a stamp to its ink and scales it to exactly `w`×`h`.
pub fn fit_stamp(stamp: &Bitmap, w: usize, h: usize) -> Bitmap {
    match stamp.bbox() {
        Some(b) => stamp.crop(&b).resample(w, h),
        None => Bitmap::new(w, h),
    }
}

/// Renders a character by stamping scaled radicals into its layout boxes.
pub fn compose_synthetic(
    entry: &CharEntry,
    atlas: &RadicalAtlas,
    jitter: Jitter,
    seed: u64,
) -> Result<Bitmap, GlyphError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (entry.ch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let mut canvas = Bitmap::new(CANVAS, CANVAS);
    for (label, b) in leaf_boxes(&entry.ids) {
        let stamp = atlas
            .get(&label)
            .ok_or_else(|| GlyphError::MissingRadical(label.to_string()))?;
        let scaled = fit_stamp(stamp, b.width(), b.height());
        let (mut x, mut y) = (b.x0 as i64, b.y0 as i64);
        if jitter.max_shift > 0 {
            let j = jitter.max_shift;
            x = (x + rng.gen_range(-j..=j)).clamp(0, (CANVAS - b.width()) as i64);
            y = (y + rng.gen_range(-j..=j)).clamp(0, (CANVAS - b.height()) as i64);
        }
        canvas.blit_or(&scaled, x, y);
    }
    Ok(canvas)
}

/// Shape of a generated dictionary.
#[derive(Debug, Clone)]
pub struct SynthDictSpec {
    pub n_radicals: usize,
    pub n_compounds: usize,
    pub ops: Vec<StructOp>,
    /// Allow one level of nesting inside a binary operator.
    pub nested: bool,
    /// Add a single-radical character for every radical.
    pub singletons: bool,
}

impl Default for SynthDictSpec {
    fn default() -> Self {
        SynthDictSpec {
            n_radicals: 16,
            n_compounds: 44,
            ops: vec![
                StructOp::LeftRight,
                StructOp::TopBottom,
                StructOp::LeftMidRight,
                StructOp::TopMidBottom,
            ],
            nested: false,
            singletons: true,
        }
    }
}

/// Radical labels drawn from the Kangxi radicals block.
pub fn synthetic_radicals(n: usize) -> Vec<Radical> {
    assert!(n <= 214, "at most 214 synthetic radicals");
    (0..n)
        .map(|i| {
            Radical::new(char::from_u32(0x2F00 + i as u32).expect("kangxi block").to_string()).expect("valid label")
        })
        .collect()
}

/// Builds a dictionary of distinct IDS trees; characters are assigned
/// consecutive codepoints from U+4E00.
pub fn synthetic_dictionary(spec: &SynthDictSpec, seed: u64) -> CharDict {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let radicals = synthetic_radicals(spec.n_radicals);
    let mut trees: Vec<IdsTree> = Vec::new();
    let mut seen = HashSet::new();
    if spec.singletons {
        for r in &radicals {
            seen.insert(r.to_string());
            trees.push(IdsTree::Leaf(r.clone()));
        }
    }
    let binary: Vec<StructOp> = spec.ops.iter().copied().filter(|o| o.arity() == 2).collect();
    let mut attempts = 0;
    let mut compounds = 0;
    while compounds < spec.n_compounds {
        attempts += 1;
        assert!(
            attempts < 1_000_000,
            "dictionary spec too small for {} compounds",
            spec.n_compounds
        );
        let op = *spec.ops.choose(&mut rng).expect("at least one operator");
        let children = (0..op.arity())
            .map(|_| {
                if spec.nested && op.arity() == 2 && !binary.is_empty() && rng.gen_bool(0.2) {
                    let inner = *binary.choose(&mut rng).expect("binary op");
                    IdsTree::Node {
                        op: inner,
                        children: (0..2)
                            .map(|_| IdsTree::Leaf(radicals.choose(&mut rng).unwrap().clone()))
                            .collect(),
                    }
                } else {
                    IdsTree::Leaf(radicals.choose(&mut rng).expect("radicals").clone())
                }
            })
            .collect();
        let tree = IdsTree::Node { op, children };
        if seen.insert(serialize_ids(&tree)) {
            trees.push(tree);
            compounds += 1;
        }
    }
    CharDict::from_entries(
        trees
            .into_iter()
            .enumerate()
            .map(|(i, t)| CharEntry::new(char::from_u32(0x4E00 + i as u32).expect("CJK block"), t)),
    )
}

/// One period of a synthetic corpus.
#[derive(Debug, Clone)]
pub struct PeriodSpec {
    pub period: Period,
    pub atlas: RadicalAtlas,
    /// Restrict to these characters; `None` renders the whole dictionary.
    pub categories: Option<BTreeSet<char>>,
    pub samples_per_category: usize,
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub glyphs: Vec<Glyph>,
    pub manifest: Manifest,
}

impl SyntheticCorpus {
    pub fn build(dict: &CharDict, periods: &[PeriodSpec], jitter: Jitter, seed: u64) -> Result<Self, GlyphError> {
        let mut glyphs = Vec::new();
        let mut records = Vec::new();
        for (pi, spec) in periods.iter().enumerate() {
            for entry in dict.entries() {
                if spec.categories.as_ref().is_some_and(|c| !c.contains(&entry.ch)) {
                    continue;
                }
                for k in 0..spec.samples_per_category {
                    let id = format!("{}-{:04X}-{k}", spec.period, entry.ch as u32);
                    let sample_seed = seed.wrapping_add((pi as u64) << 40).wrapping_add((k as u64) << 32);
                    let bitmap = compose_synthetic(entry, &spec.atlas, jitter, sample_seed)?;
                    records.push(ManifestRecord {
                        id: id.clone(),
                        period: spec.period,
                        category: Some(entry.ch),
                        image_path: PathBuf::from(format!("{id}.pgm")),
                    });
                    glyphs.push(Glyph {
                        id,
                        period: spec.period,
                        category: Some(entry.ch),
                        bitmap,
                    });
                }
            }
        }
        Ok(SyntheticCorpus {
            glyphs,
            manifest: Manifest::from_records(records)?,
        })
    }

    /// Writes every glyph as PGM plus `manifest.jsonl`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<PathBuf, GlyphError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        for g in &self.glyphs {
            write_pgm(dir.join(format!("{}.pgm", g.id)), &g.bitmap)?;
        }
        let path = dir.join("manifest.jsonl");
        fs::write(&path, self.manifest.to_jsonl())?;
        Ok(path)
    }

    pub fn by_id(&self) -> BTreeMap<&str, &Glyph> {
        self.glyphs.iter().map(|g| (g.id.as_str(), g)).collect()
    }
}
