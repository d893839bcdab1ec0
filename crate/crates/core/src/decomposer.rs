//! Splitting a glyph into candidate radical masks.
//!
//! Three mask sources exist per glyph: coarse (connected components merged
//! across small gaps), fine (components cut further until small), and masks
//! imported from an external segmenter. Every [`MaskSet`] partitions the
//! glyph foreground.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::glyph_data::{BBox, Bitmap, Glyph};

pub const DEFAULT_MERGE_DIST: f64 = 4.0;
pub const DEFAULT_MAX_PIECE_AREA: usize = 400;

#[derive(Debug, Error)]
pub enum SegmentError {
    #[error("glyph has no foreground pixels")]
    BlankImage,
    #[error("mask file is for glyph {found:?}, expected {expected:?}")]
    IdMismatch { expected: String, found: String },
    #[error("no imported mask overlaps the glyph foreground")]
    EmptyMaskError,
    #[error("invalid RLE: {0}")]
    InvalidRle(String),
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("mask file: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MaskSource {
    Coarse,
    Fine,
    Imported,
}

impl MaskSource {
    /// Filter priority, higher wins.
    pub fn priority(self) -> u8 {
        match self {
            MaskSource::Imported => 2,
            MaskSource::Coarse => 1,
            MaskSource::Fine => 0,
        }
    }

    pub fn tag(self) -> char {
        match self {
            MaskSource::Coarse => 'c',
            MaskSource::Fine => 'f',
            MaskSource::Imported => 'i',
        }
    }
}

impl fmt::Display for MaskSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentMask {
    pub mask: Bitmap,
    pub bbox: BBox,
    pub area: usize,
    pub source: MaskSource,
}

impl ComponentMask {
    /// `None` when the mask is empty.
    pub fn new(mask: Bitmap, source: MaskSource) -> Option<Self> {
        let bbox = mask.bbox()?;
        let area = mask.count();
        Some(ComponentMask {
            mask,
            bbox,
            area,
            source,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskSet {
    pub glyph_id: String,
    pub source: MaskSource,
    pub masks: Vec<ComponentMask>,
}

impl MaskSet {
    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    /// Stable component ids: `<glyph>#<source tag><index>`.
    pub fn component_id(&self, index: usize) -> String {
        format!("{}#{}{}", self.glyph_id, self.source.tag(), index)
    }

    /// True when masks are pairwise disjoint and cover exactly `foreground`.
    pub fn is_partition_of(&self, foreground: &Bitmap) -> bool {
        let mut seen = Bitmap::new(foreground.width(), foreground.height());
        for m in &self.masks {
            for (x, y) in m.mask.foreground() {
                if seen.get(x, y) || !foreground.get(x, y) {
                    return false;
                }
                seen.set(x, y, true);
            }
        }
        seen == *foreground
    }
}

/// 8-connected components in raster order of their first pixel.
pub fn connected_components(b: &Bitmap) -> Vec<Bitmap> {
    let (w, h) = (b.width(), b.height());
    let mut label = vec![usize::MAX; w * h];
    let mut comps = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !b.data()[start] || label[start] != usize::MAX {
            continue;
        }
        let id = comps.len();
        let mut comp = Bitmap::new(w, h);
        label[start] = id;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (x, y) = ((i % w) as i64, (i / w) as i64);
            comp.set(x as usize, y as usize, true);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if b.data()[j] && label[j] == usize::MAX {
                        label[j] = id;
                        stack.push(j);
                    }
                }
            }
        }
        comps.push(comp);
    }
    comps
}

/// Pixels with at least one 8-neighbour outside the set.
fn boundary(b: &Bitmap) -> Vec<(i64, i64)> {
    b.foreground()
        .map(|(x, y)| (x as i64, y as i64))
        .filter(|&(x, y)| (-1..=1).any(|dy| (-1..=1).any(|dx| (dx, dy) != (0, 0) && !b.get_signed(x + dx, y + dy))))
        .collect()
}

/// Exact minimum squared Euclidean distance between two pixel sets, given
/// their boundaries (the minimum is always attained on boundary pixels).
/// Minimum Euclidean distance between the pixels of two non-empty masks.
pub fn mask_distance(a: &Bitmap, b: &Bitmap) -> f64 {
    (min_dist2(&boundary(a), &boundary(b)) as f64).sqrt()
}

fn min_dist2(a: &[(i64, i64)], b: &[(i64, i64)]) -> i64 {
    let mut best = i64::MAX;
    for &(ax, ay) in a {
        for &(bx, by) in b {
            let d = (ax - bx).pow(2) + (ay - by).pow(2);
            if d < best {
                best = d;
            }
        }
    }
    best
}

fn bbox_gap2(a: &BBox, b: &BBox) -> i64 {
    let gx = (a.x0.max(b.x0) as i64 - a.x1.min(b.x1) as i64).max(0);
    let gy = (a.y0.max(b.y0) as i64 - a.y1.min(b.y1) as i64).max(0);
    gx * gx + gy * gy
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind((0..n).collect())
    }

    fn find(&mut self, i: usize) -> usize {
        let mut r = i;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut c = i;
        while self.0[c] != r {
            let next = self.0[c];
            self.0[c] = r;
            c = next;
        }
        r
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // keep the smaller index as root so output order follows raster order
            let (lo, hi) = (ra.min(rb), ra.max(rb));
            self.0[hi] = lo;
        }
    }
}

/// Merges masks transitively whenever their pixel distance is `<= merge_dist`.
pub fn merge_close(parts: Vec<Bitmap>, merge_dist: f64) -> Vec<Bitmap> {
    let n = parts.len();
    if n < 2 {
        return parts;
    }
    let limit2 = merge_dist * merge_dist;
    let bounds: Vec<_> = parts.iter().map(boundary).collect();
    let boxes: Vec<_> = parts.iter().map(|p| p.bbox().expect("nonempty part")).collect();
    let mut uf = UnionFind::new(n);
    for i in 0..n {
        for j in i + 1..n {
            if bbox_gap2(&boxes[i], &boxes[j]) as f64 > limit2 {
                continue;
            }
            if min_dist2(&bounds[i], &bounds[j]) as f64 <= limit2 {
                uf.union(i, j);
            }
        }
    }
    let mut merged: Vec<Option<Bitmap>> = vec![None; n];
    for (i, p) in parts.into_iter().enumerate() {
        let root = uf.find(i);
        merged[root] = Some(match merged[root].take() {
            Some(acc) => acc.or(&p),
            None => p,
        });
    }
    merged.into_iter().flatten().collect()
}

/// Connected components merged across gaps of at most `merge_dist` pixels.
pub fn segment_coarse(glyph: &Glyph, merge_dist: f64) -> Result<MaskSet, SegmentError> {
    if merge_dist.is_nan() || merge_dist < 0.0 {
        return Err(SegmentError::InvalidParam(format!("merge_dist {merge_dist}")));
    }
    let comps = connected_components(&glyph.bitmap);
    if comps.is_empty() {
        return Err(SegmentError::BlankImage);
    }
    Ok(MaskSet {
        glyph_id: glyph.id.clone(),
        source: MaskSource::Coarse,
        masks: merge_close(comps, merge_dist)
            .into_iter()
            .filter_map(|m| ComponentMask::new(m, MaskSource::Coarse))
            .collect(),
    })
}

/// Deliberate oversegmentation: components are cut along their thinnest
/// central row or column until every piece has at most `max_piece_area` pixels.
pub fn segment_fine(glyph: &Glyph, max_piece_area: usize) -> Result<MaskSet, SegmentError> {
    if max_piece_area == 0 {
        return Err(SegmentError::InvalidParam("max_piece_area must be at least 1".into()));
    }
    let comps = connected_components(&glyph.bitmap);
    if comps.is_empty() {
        return Err(SegmentError::BlankImage);
    }
    let mut pieces = Vec::new();
    let mut work = comps;
    work.reverse();
    while let Some(p) = work.pop() {
        if p.count() <= max_piece_area {
            pieces.push(p);
            continue;
        }
        match cut(&p) {
            Some((a, b)) => {
                let mut parts = connected_components(&a);
                parts.extend(connected_components(&b));
                parts.reverse();
                work.extend(parts);
            }
            // a 1×1 piece cannot be cut; it is within any positive limit anyway
            None => pieces.push(p),
        }
    }
    pieces.sort_by_key(first_pixel);
    Ok(MaskSet {
        glyph_id: glyph.id.clone(),
        source: MaskSource::Fine,
        masks: pieces
            .into_iter()
            .filter_map(|m| ComponentMask::new(m, MaskSource::Fine))
            .collect(),
    })
}

fn first_pixel(b: &Bitmap) -> (usize, usize) {
    b.foreground()
        .next()
        .map(|(x, y)| (y, x))
        .unwrap_or((usize::MAX, usize::MAX))
}

/// Splits along the cut line with the fewest foreground pixels, searching the
/// middle half of the bounding box; ties go to the line nearest the centre,
/// then to columns.
fn cut(p: &Bitmap) -> Option<(Bitmap, Bitmap)> {
    let bb = p.bbox()?;
    let mut best: Option<(usize, usize, u8, usize)> = None; // (count, dist, axis, pos)
    let mut consider = |count: usize, dist: usize, axis: u8, pos: usize| {
        let key = (count, dist, axis, pos);
        if best.is_none_or(|b| key < b) {
            best = Some(key);
        }
    };
    for (axis, lo, hi) in [(0u8, bb.x0, bb.x1), (1u8, bb.y0, bb.y1)] {
        let extent = hi - lo + 1;
        if extent < 2 {
            continue;
        }
        let center2 = lo * 2 + extent; // twice the midpoint between lines
        let from = lo + (extent / 4).max(1);
        let to = (lo + extent - extent / 4).min(hi);
        for pos in from..=to.max(from) {
            if pos > hi {
                break;
            }
            // cut line sits just before `pos`
            let count = if axis == 0 {
                (bb.y0..=bb.y1).filter(|&y| p.get(pos, y)).count()
            } else {
                (bb.x0..=bb.x1).filter(|&x| p.get(x, pos)).count()
            };
            consider(count, (pos * 2).abs_diff(center2), axis, pos);
        }
    }
    let (_, _, axis, pos) = best?;
    let w = p.width();
    let h = p.height();
    let side = |first: bool| {
        Bitmap::from_fn(w, h, |x, y| {
            let before = if axis == 0 { x < pos } else { y < pos };
            p.get(x, y) && before == first
        })
    };
    Some((side(true), side(false)))
}

/// On-disk mask file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskFile {
    pub glyph_id: String,
    pub masks: Vec<RleMask>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RleMask {
    /// Alternating run lengths over the row-major canvas, background first.
    pub rle: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<BBox>,
}

pub fn rle_encode(b: &Bitmap) -> Vec<usize> {
    let mut runs = Vec::new();
    let mut current = false;
    let mut len = 0;
    for &v in b.data() {
        if v == current {
            len += 1;
        } else {
            runs.push(len);
            current = v;
            len = 1;
        }
    }
    runs.push(len);
    runs
}

pub fn rle_decode(runs: &[usize], width: usize, height: usize) -> Result<Bitmap, SegmentError> {
    let total: usize = runs.iter().sum();
    if total != width * height {
        return Err(SegmentError::InvalidRle(format!(
            "runs cover {total} pixels, canvas has {}",
            width * height
        )));
    }
    let mut data = Vec::with_capacity(total);
    for (i, &r) in runs.iter().enumerate() {
        data.extend(std::iter::repeat_n(i % 2 == 1, r));
    }
    Ok(Bitmap::from_vec(width, height, data))
}

impl MaskFile {
    pub fn from_maskset(set: &MaskSet) -> Self {
        MaskFile {
            glyph_id: set.glyph_id.clone(),
            masks: set
                .masks
                .iter()
                .map(|m| RleMask {
                    rle: rle_encode(&m.mask),
                    bbox: Some(m.bbox),
                })
                .collect(),
        }
    }
}

pub fn import_masks(glyph: &Glyph, path: impl AsRef<Path>) -> Result<MaskSet, SegmentError> {
    let file: MaskFile = serde_json::from_str(&fs::read_to_string(path)?)?;
    masks_from_file(glyph, &file)
}

/// Clips imported masks to the foreground, gives contested pixels to the
/// smaller mask, and hands any uncovered ink to the nearest mask so the
/// result is a partition.
pub fn masks_from_file(glyph: &Glyph, file: &MaskFile) -> Result<MaskSet, SegmentError> {
    if file.glyph_id != glyph.id {
        return Err(SegmentError::IdMismatch {
            expected: glyph.id.clone(),
            found: file.glyph_id.clone(),
        });
    }
    let fg = &glyph.bitmap;
    if fg.is_empty() {
        return Err(SegmentError::BlankImage);
    }
    let (w, h) = (fg.width(), fg.height());
    let mut clipped = Vec::new();
    for m in &file.masks {
        let b = rle_decode(&m.rle, w, h)?.and(fg);
        if !b.is_empty() {
            clipped.push(b);
        }
    }
    if clipped.is_empty() {
        return Err(SegmentError::EmptyMaskError);
    }
    let areas: Vec<usize> = clipped.iter().map(Bitmap::count).collect();
    let mut owner: Vec<Option<usize>> = vec![None; w * h];
    for (i, m) in clipped.iter().enumerate() {
        for (x, y) in m.foreground() {
            let slot = &mut owner[y * w + x];
            match *slot {
                Some(j) if (areas[j], j) <= (areas[i], i) => {}
                _ => *slot = Some(i),
            }
        }
    }
    let claimed: Vec<Vec<(i64, i64)>> = (0..clipped.len())
        .map(|i| {
            owner
                .iter()
                .enumerate()
                .filter(|(_, o)| **o == Some(i))
                .map(|(p, _)| ((p % w) as i64, (p / w) as i64))
                .collect()
        })
        .collect();
    for (x, y) in fg.foreground() {
        let p = y * w + x;
        if owner[p].is_some() {
            continue;
        }
        let (xi, yi) = (x as i64, y as i64);
        let nearest = claimed
            .iter()
            .enumerate()
            .filter(|(_, px)| !px.is_empty())
            .map(|(i, px)| {
                let d = px
                    .iter()
                    .map(|&(a, b)| (a - xi).pow(2) + (b - yi).pow(2))
                    .min()
                    .unwrap();
                (d, i)
            })
            .min()
            .map(|(_, i)| i);
        owner[p] = nearest;
    }
    let masks = (0..clipped.len())
        .filter_map(|i| {
            let b = Bitmap::from_vec(w, h, owner.iter().map(|o| *o == Some(i)).collect());
            ComponentMask::new(b, MaskSource::Imported)
        })
        .collect();
    Ok(MaskSet {
        glyph_id: glyph.id.clone(),
        source: MaskSource::Imported,
        masks,
    })
}
