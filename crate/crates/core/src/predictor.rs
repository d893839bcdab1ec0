//! Radical-sequence prediction: the token contract, a KNN-composition
//! predictor, import of externally produced predictions, corpus annotation
//! with the reconstruction filter, and radical augmentation samples.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotator::{
    assign_label, knn_query, refine_confidence, seed_confidence, AnnotateError, AnnotationStore, ConfidenceDict,
    Status, StoreItem, WeightMode, DEFAULT_K,
};
use crate::decomposer::{
    mask_distance, segment_coarse, segment_fine, ComponentMask, MaskSet, SegmentError, DEFAULT_MERGE_DIST,
};
use crate::embedder::{embed_mask, EmbedError, FeatureVec, Projection};
use crate::glyph_data::{normalize_bitmap, write_pgm, BBox, Bitmap, Glyph, GlyphError, ManifestRecord, Period};
use crate::ids::{parse_tokens, CharDict, IdsError, IdsTree, Radical, RadicalMultiset, StructOp, Token};
use crate::reconstructor::{filter_masksets, FilterRecord, LabelledMaskSet, QueryForm, ReconstructError};

pub const EOS: &str = "<eos>";

/// Fraction of the smaller box that must lie inside the larger for a surround.
pub const CONTAINMENT: f64 = 0.9;
/// Overlap ratio below which two boxes count as side by side.
pub const SIDE_OVERLAP: f64 = 0.25;
/// Gap, as a fraction of the outer box, at which the inner box touches a side.
pub const TOUCH_GAP: f64 = 0.1;
/// Piece area for the fine fallback: half the canvas, so a single radical
/// drawn at full size is left whole.
pub const DEFAULT_FALLBACK_PIECE_AREA: usize = 2048;

#[derive(Debug, Error)]
pub enum PredictError {
    #[error("layout needs 2 or 3 boxes, got {0}")]
    BadArity(usize),
    #[error("line {line}: unknown token {token:?}")]
    UnknownToken { line: usize, token: String },
    #[error("line {line}: {message}")]
    Json { line: usize, message: String },
    #[error(transparent)]
    Ids(#[from] IdsError),
    #[error(transparent)]
    Segment(#[from] SegmentError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Annotate(#[from] AnnotateError),
    #[error(transparent)]
    Reconstruct(#[from] ReconstructError),
    #[error(transparent)]
    Glyph(#[from] GlyphError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum SeqToken {
    Op(StructOp),
    Radical(Radical),
    Eos,
}

impl fmt::Display for SeqToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SeqToken::Op(op) => write!(f, "{op}"),
            SeqToken::Radical(r) => f.write_str(r.as_str()),
            SeqToken::Eos => f.write_str(EOS),
        }
    }
}

impl FromStr for SeqToken {
    type Err = IdsError;

    fn from_str(s: &str) -> Result<Self, IdsError> {
        if s == EOS {
            return Ok(SeqToken::Eos);
        }
        let mut chars = s.chars();
        if let (Some(c), None) = (chars.next(), chars.next()) {
            if let Some(op) = StructOp::from_char(c) {
                return Ok(SeqToken::Op(op));
            }
        }
        Radical::from_token(s).map(SeqToken::Radical)
    }
}

impl From<Token> for SeqToken {
    fn from(t: Token) -> Self {
        match t {
            Token::Op(op) => SeqToken::Op(op),
            Token::Radical(r) => SeqToken::Radical(r),
        }
    }
}

/// Predicted token sequence for one glyph.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSeq {
    pub glyph_id: String,
    pub tokens: Vec<SeqToken>,
}

#[derive(Serialize, Deserialize)]
struct SeqLine {
    glyph_id: String,
    tokens: Vec<String>,
}

impl TokenSeq {
    pub fn from_tree(glyph_id: impl Into<String>, tree: &IdsTree) -> Self {
        let mut tokens: Vec<SeqToken> = tree.tokens().into_iter().map(SeqToken::from).collect();
        tokens.push(SeqToken::Eos);
        TokenSeq {
            glyph_id: glyph_id.into(),
            tokens,
        }
    }

    /// IDS tokens up to the first EOS.
    pub fn ids_tokens(&self) -> Option<Vec<Token>> {
        self.tokens
            .iter()
            .take_while(|t| **t != SeqToken::Eos)
            .map(|t| match t {
                SeqToken::Op(op) => Some(Token::Op(*op)),
                SeqToken::Radical(r) => Some(Token::Radical(r.clone())),
                SeqToken::Eos => None,
            })
            .collect()
    }

    pub fn tree(&self) -> Option<IdsTree> {
        parse_tokens(&self.ids_tokens()?).ok()
    }

    pub fn is_valid(&self) -> bool {
        self.tree().is_some()
    }

    pub fn query(&self) -> Option<QueryForm> {
        self.tree().map(|t| QueryForm::Sequence(t.tokens()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&SeqLine {
            glyph_id: self.glyph_id.clone(),
            tokens: self.tokens.iter().map(ToString::to_string).collect(),
        })
        .expect("plain strings serialize")
    }
}

impl fmt::Display for TokenSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.tokens.iter().map(ToString::to_string).collect();
        write!(f, "{}\t{}", self.glyph_id, parts.join(" "))
    }
}

/// A loaded prediction; `valid` is false when the tokens do not parse.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportedSeq {
    pub seq: TokenSeq,
    pub valid: bool,
}

/// Reads prediction JSONL. Tokens must be an operator, `<eos>`, or a radical
/// from `vocab`; sequences that fail to parse are kept and flagged.
pub fn parse_predictions(text: &str, vocab: &BTreeSet<Radical>) -> Result<Vec<ImportedSeq>, PredictError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let parsed: SeqLine = serde_json::from_str(raw).map_err(|e| PredictError::Json {
            line,
            message: e.to_string(),
        })?;
        let mut tokens = Vec::with_capacity(parsed.tokens.len());
        for t in &parsed.tokens {
            let tok = t.parse::<SeqToken>().ok().filter(|tok| match tok {
                SeqToken::Radical(r) => vocab.contains(r),
                _ => true,
            });
            tokens.push(tok.ok_or_else(|| PredictError::UnknownToken { line, token: t.clone() })?);
        }
        let seq = TokenSeq {
            glyph_id: parsed.glyph_id,
            tokens,
        };
        let valid = seq.is_valid();
        out.push(ImportedSeq { seq, valid });
    }
    Ok(out)
}

pub fn import_predictions(path: impl AsRef<Path>, vocab: &BTreeSet<Radical>) -> Result<Vec<ImportedSeq>, PredictError> {
    parse_predictions(&fs::read_to_string(path)?, vocab)
}

pub fn predictions_jsonl(seqs: &[TokenSeq]) -> String {
    seqs.iter().map(|s| s.to_json() + "\n").collect()
}

/// Spatial relation between component boxes; one per structure operator.
pub type LayoutRelation = StructOp;

fn containment(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection(b).map_or(0, |i| i.area());
    inter as f64 / a.area().min(b.area()) as f64
}

fn side_by_side_x(a: &BBox, b: &BBox) -> bool {
    (a.x_overlap(b) as f64) < SIDE_OVERLAP * a.width().min(b.width()) as f64
}

fn side_by_side_y(a: &BBox, b: &BBox) -> bool {
    (a.y_overlap(b) as f64) < SIDE_OVERLAP * a.height().min(b.height()) as f64
}

fn surround_kind(outer: &BBox, inner: &BBox) -> StructOp {
    let tx = TOUCH_GAP * outer.width() as f64;
    let ty = TOUCH_GAP * outer.height() as f64;
    let gap = |a: usize, b: usize| a.saturating_sub(b) as f64;
    let left = gap(inner.x0, outer.x0) <= tx;
    let right = gap(outer.x1, inner.x1) <= tx;
    let top = gap(inner.y0, outer.y0) <= ty;
    let bottom = gap(outer.y1, inner.y1) <= ty;
    match (top, bottom, left, right) {
        (false, false, false, false) => StructOp::SurroundFull,
        (false, true, false, false) => StructOp::SurroundAbove,
        (true, false, false, false) => StructOp::SurroundBelow,
        (false, false, false, true) => StructOp::SurroundLeft,
        (false, true, false, true) => StructOp::SurroundUpperLeft,
        (false, true, true, false) => StructOp::SurroundUpperRight,
        (true, false, false, true) => StructOp::SurroundLowerLeft,
        _ => StructOp::Overlaid,
    }
}

fn outer_first(a: &BBox, b: &BBox) -> bool {
    (b.area(), b.x0, b.y0) <= (a.area(), a.x0, a.y0)
}

fn relation2(a: &BBox, b: &BBox) -> StructOp {
    if containment(a, b) >= CONTAINMENT {
        let (outer, inner) = if outer_first(a, b) { (a, b) } else { (b, a) };
        surround_kind(outer, inner)
    } else if side_by_side_x(a, b) {
        StructOp::LeftRight
    } else if side_by_side_y(a, b) {
        StructOp::TopBottom
    } else {
        StructOp::Overlaid
    }
}

fn pairwise(boxes: &[BBox], f: impl Fn(&BBox, &BBox) -> bool) -> bool {
    (0..boxes.len()).all(|i| (i + 1..boxes.len()).all(|j| f(&boxes[i], &boxes[j])))
}

/// Structure operator relating 2 or 3 component boxes.
pub fn infer_structure(boxes: &[BBox]) -> Result<StructOp, PredictError> {
    match boxes.len() {
        2 => Ok(relation2(&boxes[0], &boxes[1])),
        3 => {
            if pairwise(boxes, side_by_side_x) && !any_contained(boxes) {
                Ok(StructOp::LeftMidRight)
            } else if pairwise(boxes, side_by_side_y) && !any_contained(boxes) {
                Ok(StructOp::TopMidBottom)
            } else {
                Ok(group3(boxes).0)
            }
        }
        n => Err(PredictError::BadArity(n)),
    }
}

fn any_contained(boxes: &[BBox]) -> bool {
    !pairwise(boxes, |a, b| containment(a, b) < CONTAINMENT)
}

fn gap2(a: &BBox, b: &BBox) -> i64 {
    let gx = (a.x0.max(b.x0) as i64 - a.x1.min(b.x1) as i64).max(0);
    let gy = (a.y0.max(b.y0) as i64 - a.y1.min(b.y1) as i64).max(0);
    gx * gx + gy * gy
}

/// Groups the pair of three boxes whose union stays clear of the third,
/// closest pair first; returns the root operator, the
/// paired indices and the lone index.
fn group3(boxes: &[BBox]) -> (StructOp, (usize, usize), usize) {
    let pairs = [((0, 1), 2), ((0, 2), 1), ((1, 2), 0)];
    let ((i, j), k) = *pairs
        .iter()
        .min_by_key(|((i, j), k)| {
            let merged = boxes[*i].union(&boxes[*j]);
            let clash = merged.intersection(&boxes[*k]).map_or(0, |b| b.area());
            (clash, gap2(&boxes[*i], &boxes[*j]))
        })
        .expect("three pairs");
    let merged = boxes[i].union(&boxes[j]);
    (relation2(&merged, &boxes[k]), (i, j), k)
}

fn order_children<T>(op: StructOp, mut items: Vec<(BBox, T)>) -> Vec<(BBox, T)> {
    match op {
        StructOp::LeftRight | StructOp::LeftMidRight => items.sort_by(|a, b| a.0.center().0.total_cmp(&b.0.center().0)),
        StructOp::TopBottom | StructOp::TopMidBottom => items.sort_by(|a, b| a.0.center().1.total_cmp(&b.0.center().1)),
        StructOp::Overlaid => items.sort_by(|a, b| {
            let (ca, cb) = (a.0.center(), b.0.center());
            ca.0.total_cmp(&cb.0).then(ca.1.total_cmp(&cb.1))
        }),
        _ => {
            if !outer_first(&items[0].0, &items[1].0) {
                items.swap(0, 1);
            }
        }
    }
    items
}

/// Builds an IDS tree from 1 to 3 labelled boxes.
pub fn infer_layout(items: &[(BBox, Radical)]) -> Result<IdsTree, PredictError> {
    match items.len() {
        1 => Ok(IdsTree::leaf(items[0].1.clone())),
        2 => {
            let op = infer_structure(&[items[0].0, items[1].0])?;
            node(op, items.iter().map(|(b, r)| (*b, IdsTree::leaf(r.clone()))).collect())
        }
        3 => {
            let boxes: Vec<BBox> = items.iter().map(|i| i.0).collect();
            let op = infer_structure(&boxes)?;
            if matches!(op, StructOp::LeftMidRight | StructOp::TopMidBottom) {
                return node(op, items.iter().map(|(b, r)| (*b, IdsTree::leaf(r.clone()))).collect());
            }
            let (_, (i, j), k) = group3(&boxes);
            let inner = infer_layout(&[items[i].clone(), items[j].clone()])?;
            node(
                op,
                vec![
                    (boxes[i].union(&boxes[j]), inner),
                    (boxes[k], IdsTree::leaf(items[k].1.clone())),
                ],
            )
        }
        n => Err(PredictError::BadArity(n)),
    }
}

fn node(op: StructOp, children: Vec<(BBox, IdsTree)>) -> Result<IdsTree, PredictError> {
    let ordered = order_children(op, children);
    Ok(IdsTree::node(op, ordered.into_iter().map(|(_, t)| t).collect())?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictParams {
    pub merge_dist: f64,
    pub max_piece_area: usize,
    pub k: usize,
    pub mode: WeightMode,
    /// Retry rejected training glyphs with labels restricted to the target.
    pub relabel: bool,
}

impl Default for PredictParams {
    fn default() -> Self {
        PredictParams {
            merge_dist: DEFAULT_MERGE_DIST,
            max_piece_area: DEFAULT_FALLBACK_PIECE_AREA,
            k: DEFAULT_K,
            mode: WeightMode::default(),
            relabel: true,
        }
    }
}

/// Coarse masks, replaced by fine ones when coarse finds a single component
/// and fine finds 2 or 3; more than 3 are merged closest-first down to 3.
pub fn choose_masks(glyph: &Glyph, params: &PredictParams) -> Result<Vec<ComponentMask>, PredictError> {
    let coarse = segment_coarse(glyph, params.merge_dist)?;
    let mut masks = coarse.masks;
    if masks.len() == 1 {
        let fine = segment_fine(glyph, params.max_piece_area)?;
        if (2..=3).contains(&fine.masks.len()) {
            masks = fine.masks;
        }
    }
    while masks.len() > 3 {
        let mut best = (f64::INFINITY, 0, 1);
        for i in 0..masks.len() {
            for j in i + 1..masks.len() {
                let d = mask_distance(&masks[i].mask, &masks[j].mask);
                if d < best.0 {
                    best = (d, i, j);
                }
            }
        }
        let (_, i, j) = best;
        let b = masks.remove(j);
        let merged = masks[i].mask.or(&b.mask);
        masks[i] = ComponentMask::new(merged, b.source).expect("union of nonempty masks");
    }
    Ok(masks)
}

/// Labels one mask from the store.
pub fn label_mask(
    mask: &Bitmap,
    store: &AnnotationStore,
    proj: &Projection,
    params: &PredictParams,
) -> Result<Radical, PredictError> {
    let feature = embed_mask(mask, proj)?;
    let neighbors = knn_query(&feature, store, params.k)?;
    Ok(assign_label(&refine_confidence(&neighbors, params.mode)?)?)
}

/// Segment, label each component by KNN, infer the layout, and emit the
/// linearized IDS followed by EOS.
pub fn predict_knn_compose(
    glyph: &Glyph,
    store: &AnnotationStore,
    proj: &Projection,
    params: &PredictParams,
) -> Result<TokenSeq, PredictError> {
    let masks = choose_masks(glyph, params)?;
    let mut items = Vec::with_capacity(masks.len());
    for m in &masks {
        items.push((m.bbox, label_mask(&m.mask, store, proj, params)?));
    }
    Ok(TokenSeq::from_tree(glyph.id.clone(), &infer_layout(&items)?))
}

/// Predicts every glyph in parallel; output follows input order.
pub fn predict_all(
    glyphs: &[Glyph],
    store: &AnnotationStore,
    proj: &Projection,
    params: &PredictParams,
) -> Result<Vec<TokenSeq>, PredictError> {
    glyphs
        .par_iter()
        .map(|g| predict_knn_compose(g, store, proj, params))
        .collect()
}

/// A mask set that passed the reconstruction filter.
#[derive(Debug, Clone)]
pub struct AcceptedSet {
    pub glyph_id: String,
    pub period: Period,
    pub labelled: LabelledMaskSet,
}

#[derive(Debug, Clone)]
pub struct CorpusAnnotation {
    pub store: AnnotationStore,
    pub log: Vec<FilterRecord>,
    pub accepted: Vec<AcceptedSet>,
}

impl CorpusAnnotation {
    pub fn log_jsonl(&self) -> String {
        self.log
            .iter()
            .map(|r| serde_json::to_string(r).expect("log serializes") + "\n")
            .collect()
    }
}

struct Prepared {
    glyph: usize,
    sets: Vec<MaskSet>,
    features: Vec<Vec<FeatureVec>>,
}

fn glyph_of(component_id: &str) -> &str {
    component_id.rsplit_once('#').map_or(component_id, |(g, _)| g)
}

/// Assigns the target's radicals to components so that the summed log
/// confidence is maximal; `None` when the counts differ or exceed 6.
pub fn constrained_labels(dicts: &[ConfidenceDict], target: &RadicalMultiset) -> Option<Vec<Radical>> {
    if dicts.len() != target.len() || dicts.len() > 6 {
        return None;
    }
    let mut pool: Vec<(Radical, usize)> = target.distinct().map(|(r, n)| (r.clone(), n)).collect();
    let mut current = Vec::with_capacity(dicts.len());
    let mut best: Option<(f64, Vec<Radical>)> = None;
    assign(dicts, &mut pool, &mut current, 0.0, &mut best);
    best.map(|(_, labels)| labels)
}

fn assign(
    dicts: &[ConfidenceDict],
    pool: &mut [(Radical, usize)],
    current: &mut Vec<Radical>,
    score: f64,
    best: &mut Option<(f64, Vec<Radical>)>,
) {
    let j = current.len();
    if j == dicts.len() {
        if best.as_ref().is_none_or(|(b, _)| score > *b) {
            *best = Some((score, current.clone()));
        }
        return;
    }
    for i in 0..pool.len() {
        if pool[i].1 == 0 {
            continue;
        }
        pool[i].1 -= 1;
        let label = pool[i].0.clone();
        let s = score + dicts[j].get(&label).max(1e-12).ln();
        current.push(label);
        assign(dicts, pool, current, s, best);
        current.pop();
        pool[i].1 += 1;
    }
}

/// Seeds every coarse and fine component of the deciphered `glyphs` with its
/// character's uniform radical distribution, labels each component from
/// components of other categories, and keeps the mask set whose labels
/// reassemble the known character. When no set verifies and `relabel` is on,
/// sets with the right component count are relabelled with the character's
/// own radicals (best confidence assignment) and filtered again. Accepted
/// components become one-hot propagated items and the glyph's other mask
/// sets are dropped from the store; rejected glyphs stay seeded.
pub fn annotate_corpus(
    glyphs: &[Glyph],
    dict: &CharDict,
    proj: &Projection,
    params: &PredictParams,
) -> Result<CorpusAnnotation, PredictError> {
    let usable: Vec<usize> = (0..glyphs.len())
        .filter(|&i| glyphs[i].category.is_some_and(|c| dict.contains(c)))
        .collect();
    let prepared: Vec<Prepared> = usable
        .par_iter()
        .map(|&gi| -> Result<Prepared, PredictError> {
            let g = &glyphs[gi];
            let coarse = segment_coarse(g, params.merge_dist)?;
            let fine = segment_fine(g, params.max_piece_area)?;
            let same = fine.masks.len() == coarse.masks.len()
                && fine.masks.iter().zip(&coarse.masks).all(|(a, b)| a.mask == b.mask);
            // a fine pass that splits nothing is not a second candidate
            let sets = if same { vec![coarse] } else { vec![coarse, fine] };
            let features = sets
                .iter()
                .map(|s| {
                    s.masks
                        .iter()
                        .map(|m| embed_mask(&m.mask, proj))
                        .collect::<Result<Vec<_>, _>>()
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(Prepared {
                glyph: gi,
                sets,
                features,
            })
        })
        .collect::<Result<_, _>>()?;

    let mut store = AnnotationStore::new();
    let mut category: HashMap<&str, char> = HashMap::new();
    for p in &prepared {
        let g = &glyphs[p.glyph];
        let c = g.category.expect("filtered above");
        category.insert(&g.id, c);
        let seed = seed_confidence(dict.get(c).expect("filtered above"));
        for (set, feats) in p.sets.iter().zip(&p.features) {
            for (i, f) in feats.iter().enumerate() {
                store.insert_seeded(set.component_id(i), f.clone(), seed.clone());
            }
        }
    }

    struct Labelled {
        sets: Vec<LabelledMaskSet>,
        dicts: Vec<Vec<ConfidenceDict>>,
        neighbor_ids: Vec<Vec<Vec<String>>>,
    }
    let labelled: Vec<Labelled> = prepared
        .par_iter()
        .map(|p| -> Result<Labelled, PredictError> {
            let own = glyphs[p.glyph].category;
            let keep = |id: &str| category.get(glyph_of(id)).copied() != own;
            let mut out = Labelled {
                sets: Vec::new(),
                dicts: Vec::new(),
                neighbor_ids: Vec::new(),
            };
            for (set, feats) in p.sets.iter().zip(&p.features) {
                let mut labels = Vec::new();
                let mut dicts = Vec::new();
                let mut ids = Vec::new();
                for f in feats {
                    let nb = store.knn_filtered(f, params.k, keep)?;
                    let d = refine_confidence(&nb, params.mode)?;
                    labels.push(assign_label(&d)?);
                    dicts.push(d);
                    ids.push(nb.ids());
                }
                out.sets.push(LabelledMaskSet {
                    set: set.clone(),
                    labels,
                });
                out.dicts.push(dicts);
                out.neighbor_ids.push(ids);
            }
            Ok(out)
        })
        .collect::<Result<_, _>>()?;

    let mut log = Vec::new();
    let mut accepted = Vec::new();
    for (p, lab) in prepared.iter().zip(labelled) {
        let g = &glyphs[p.glyph];
        let target = g.category.expect("filtered above");
        let mut rec = filter_masksets(&g.id, &lab.sets, target, dict)?;
        let mut chosen = rec.accepted.map(|i| (i, lab.sets[i].clone()));
        if chosen.is_none() && params.relabel {
            let radicals = &dict.get(target).expect("filtered above").radicals;
            let (origin, retry): (Vec<usize>, Vec<LabelledMaskSet>) = lab
                .sets
                .iter()
                .enumerate()
                .filter_map(|(i, s)| {
                    constrained_labels(&lab.dicts[i], radicals).map(|labels| {
                        (
                            i,
                            LabelledMaskSet {
                                set: s.set.clone(),
                                labels,
                            },
                        )
                    })
                })
                .unzip();
            let second = filter_masksets(&g.id, &retry, target, dict)?;
            let offset = rec.attempts.len();
            rec.attempts.extend(second.attempts);
            if let Some(ci) = second.accepted {
                rec.accepted = Some(offset + ci);
                rec.accepted_source = second.accepted_source;
                rec.tie = second.tie;
                rec.relabelled = true;
                chosen = Some((origin[ci], retry[ci].clone()));
            }
        }
        if let Some((i, set)) = chosen {
            for (_, other) in p.sets.iter().enumerate().filter(|(k, _)| *k != i) {
                for j in 0..other.masks.len() {
                    store.remove(&other.component_id(j));
                }
            }
            for (j, label) in set.labels.iter().enumerate() {
                store.insert(
                    set.set.component_id(j),
                    StoreItem {
                        feature: p.features[i][j].clone(),
                        dict: ConfidenceDict::one_hot(label.clone()),
                        status: Status::Propagated,
                        neighbor_ids: Some(lab.neighbor_ids[i][j].clone()),
                    },
                );
            }
            accepted.push(AcceptedSet {
                glyph_id: g.id.clone(),
                period: g.period,
                labelled: set,
            });
        }
        log.push(rec);
    }
    Ok(CorpusAnnotation { store, log, accepted })
}

/// Standalone single-radical training sample.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentSample {
    pub record: ManifestRecord,
    pub mask: Bitmap,
    pub target: TokenSeq,
}

/// One sample per accepted component: the normalized mask with target
/// `[label, EOS]`, inheriting the parent glyph's period.
pub fn augment_radicals(accepted: &[AcceptedSet]) -> Result<Vec<AugmentSample>, PredictError> {
    let mut out = Vec::new();
    for a in accepted {
        for (i, (m, label)) in a.labelled.set.masks.iter().zip(&a.labelled.labels).enumerate() {
            let id = a.labelled.set.component_id(i);
            let mut chars = label.as_str().chars();
            let category = match (chars.next(), chars.next()) {
                (Some(c), None) => Some(c),
                _ => None,
            };
            out.push(AugmentSample {
                record: ManifestRecord {
                    id: id.clone(),
                    period: a.period,
                    category,
                    image_path: format!("{}.pgm", id.replace('#', "_")).into(),
                },
                mask: normalize_bitmap(&m.mask)?,
                target: TokenSeq {
                    glyph_id: id,
                    tokens: vec![SeqToken::Radical(label.clone()), SeqToken::Eos],
                },
            });
        }
    }
    Ok(out)
}

/// Writes sample PGMs, `manifest.jsonl` and `targets.jsonl` into `dir`.
pub fn write_augmented(samples: &[AugmentSample], dir: impl AsRef<Path>) -> Result<(), PredictError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut manifest = String::new();
    let mut targets = String::new();
    for s in samples {
        write_pgm(dir.join(&s.record.image_path), &s.mask)?;
        manifest.push_str(&serde_json::to_string(&s.record).expect("record serializes"));
        manifest.push('\n');
        targets.push_str(&s.target.to_json());
        targets.push('\n');
    }
    fs::write(dir.join("manifest.jsonl"), manifest)?;
    fs::write(dir.join("targets.jsonl"), targets)?;
    Ok(())
}
