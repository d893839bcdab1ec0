//! Component descriptors, the linear projection to 128-d unit features, and
//! the InfoNCE-style contrastive objective used to train that projection.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::decomposer::ComponentMask;
use crate::glyph_data::{Bitmap, CANVAS};
use crate::ids::Radical;

pub const FEATURE_DIM: usize = 128;
pub const DENSITY_DIM: usize = 16;
pub const GRADIENT_DIM: usize = 128;
pub const GEOMETRY_DIM: usize = 4;
pub const RAW_DIM: usize = DENSITY_DIM + GRADIENT_DIM + GEOMETRY_DIM;
pub const DEFAULT_TAU: f64 = 0.07;
pub const CHECKPOINT_MAGIC: &[u8; 7] = b"P3PROJ1";

/// Side of the canonical crop gradient histograms are computed on.
const SHAPE_SIDE: usize = 32;
const DENSITY_SCALE: f64 = 0.125;
const GEOMETRY_SCALE: f64 = 0.25;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("mask is empty")]
    EmptyMaskError,
    #[error("projection output is the zero vector")]
    ZeroVector,
    #[error("descriptor has {0} values, expected {RAW_DIM}")]
    BadDescriptor(usize),
    #[error("training needs at least two labels with two samples each (or augmentation): {0}")]
    InsufficientData(String),
    #[error("bad checkpoint: {0}")]
    BadCheckpoint(String),
    #[error("temperature must be positive, got {0}")]
    BadTemperature(f64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A unit-length 128-d feature.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVec(Vec<f64>);

impl FeatureVec {
    /// Normalizes `values` to unit length.
    pub fn normalized(values: Vec<f64>) -> Result<Self, EmbedError> {
        let norm = l2(&values);
        if norm.is_nan() || norm <= 1e-12 {
            return Err(EmbedError::ZeroVector);
        }
        Ok(FeatureVec(values.into_iter().map(|v| v / norm).collect()))
    }

    /// Wraps stored values without renormalizing (used when importing stores).
    pub fn from_raw(values: Vec<f64>) -> Self {
        FeatureVec(values)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        l2(&self.0)
    }

    pub fn distance(&self, other: &FeatureVec) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Raw hand-crafted descriptor of a component mask.
///
/// Layout: 4×4 zoned ink density over the 64×64 canvas (16 values), 4×4
/// zoned 8-bin gradient orientation histograms over the mask's bounding box
/// resampled to 32×32 (128 values, L2-normalized as a block), and the
/// normalized bounding box `x0, y0, w, h` (4 values).
pub fn describe(mask: &ComponentMask) -> Result<Vec<f64>, EmbedError> {
    describe_bitmap(&mask.mask)
}

pub fn describe_bitmap(mask: &Bitmap) -> Result<Vec<f64>, EmbedError> {
    let bb = mask.bbox().ok_or(EmbedError::EmptyMaskError)?;
    let mut out = Vec::with_capacity(RAW_DIM);

    let (zw, zh) = (mask.width() / 4, mask.height() / 4);
    for zy in 0..4 {
        for zx in 0..4 {
            let mut n = 0usize;
            for y in zy * zh..(zy + 1) * zh {
                for x in zx * zw..(zx + 1) * zw {
                    n += mask.get(x, y) as usize;
                }
            }
            out.push(DENSITY_SCALE * n as f64 / (zw * zh) as f64);
        }
    }

    let shape = mask.crop(&bb).resample(SHAPE_SIDE, SHAPE_SIDE);
    let mut hist = vec![0.0; GRADIENT_DIM];
    let px = |x: i64, y: i64| shape.get_signed(x, y) as u8 as f64;
    let zone = SHAPE_SIDE / 4;
    for y in 0..SHAPE_SIDE as i64 {
        for x in 0..SHAPE_SIDE as i64 {
            let gx = px(x + 1, y - 1) + 2.0 * px(x + 1, y) + px(x + 1, y + 1)
                - px(x - 1, y - 1)
                - 2.0 * px(x - 1, y)
                - px(x - 1, y + 1);
            let gy = px(x - 1, y + 1) + 2.0 * px(x, y + 1) + px(x + 1, y + 1)
                - px(x - 1, y - 1)
                - 2.0 * px(x, y - 1)
                - px(x + 1, y - 1);
            let mag = (gx * gx + gy * gy).sqrt();
            if mag == 0.0 {
                continue;
            }
            let angle = gy.atan2(gx).rem_euclid(std::f64::consts::TAU);
            let bin = ((angle / std::f64::consts::TAU * 8.0) as usize).min(7);
            let z = (y as usize / zone) * 4 + x as usize / zone;
            hist[z * 8 + bin] += mag;
        }
    }
    let hn = l2(&hist);
    if hn > 0.0 {
        hist.iter_mut().for_each(|v| *v /= hn);
    }
    out.extend(hist);

    let c = CANVAS as f64;
    out.extend(
        [
            bb.x0 as f64 / c,
            bb.y0 as f64 / c,
            bb.width() as f64 / c,
            bb.height() as f64 / c,
        ]
        .map(|v| v * GEOMETRY_SCALE),
    );
    Ok(out)
}

/// Affine map from raw descriptors to the feature space.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    /// Row-major `FEATURE_DIM × RAW_DIM`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Projection {
    pub fn zeros() -> Self {
        Projection {
            weights: vec![0.0; FEATURE_DIM * RAW_DIM],
            bias: vec![0.0; FEATURE_DIM],
        }
    }

    /// Copies the first 128 descriptor values through unchanged.
    pub fn identity() -> Self {
        let mut p = Projection::zeros();
        for i in 0..FEATURE_DIM {
            p.weights[i * RAW_DIM + i] = 1.0;
        }
        p
    }

    /// Gaussian random projection scaled to roughly preserve distances.
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = 1.0 / (FEATURE_DIM as f64).sqrt();
        Projection {
            weights: (0..FEATURE_DIM * RAW_DIM)
                .map(|_| rng.sample::<f64, _>(StandardNormal) * s)
                .collect(),
            bias: vec![0.0; FEATURE_DIM],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.bias).all(|v| v.is_finite())
    }

    fn apply(&self, desc: &[f64]) -> Vec<f64> {
        (0..FEATURE_DIM)
            .map(|i| self.bias[i] + dot(&self.weights[i * RAW_DIM..(i + 1) * RAW_DIM], desc))
            .collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(7 + 8 * (self.weights.len() + self.bias.len()));
        out.extend_from_slice(CHECKPOINT_MAGIC);
        for v in self.weights.iter().chain(&self.bias) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, EmbedError> {
        let body = bytes
            .strip_prefix(CHECKPOINT_MAGIC.as_slice())
            .ok_or_else(|| EmbedError::BadCheckpoint("missing magic".into()))?;
        let expected = 8 * (FEATURE_DIM * RAW_DIM + FEATURE_DIM);
        if body.len() != expected {
            return Err(EmbedError::BadCheckpoint(format!(
                "{} payload bytes, expected {expected}",
                body.len()
            )));
        }
        let vals: Vec<f64> = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let (w, b) = vals.split_at(FEATURE_DIM * RAW_DIM);
        let p = Projection {
            weights: w.to_vec(),
            bias: b.to_vec(),
        };
        if !p.is_finite() {
            return Err(EmbedError::BadCheckpoint("non-finite entries".into()));
        }
        Ok(p)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), EmbedError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EmbedError> {
        Projection::from_bytes(&fs::read(path)?)
    }
}

pub fn embed(desc: &[f64], proj: &Projection) -> Result<FeatureVec, EmbedError> {
    if desc.len() != RAW_DIM {
        return Err(EmbedError::BadDescriptor(desc.len()));
    }
    FeatureVec::normalized(proj.apply(desc))
}

pub fn embed_mask(mask: &Bitmap, proj: &Projection) -> Result<FeatureVec, EmbedError> {
    embed(&describe_bitmap(mask)?, proj)
}

/// Positive temperature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tau(f64);

impl Tau {
    pub fn new(t: f64) -> Result<Self, EmbedError> {
        if t > 0.0 && t.is_finite() {
            Ok(Tau(t))
        } else {
            Err(EmbedError::BadTemperature(t))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl Default for Tau {
    fn default() -> Self {
        Tau(DEFAULT_TAU)
    }
}

/// Query, its positive key and the negative keys. The positive counts as one
/// of the K keys in the normalizer, so K = 1 + negatives.
#[derive(Debug, Clone)]
pub struct ContrastiveBatch {
    pub q: Vec<f64>,
    pub k_pos: Vec<f64>,
    pub k_neg: Vec<Vec<f64>>,
    pub tau: Tau,
}

impl ContrastiveBatch {
    pub fn k(&self) -> usize {
        1 + self.k_neg.len()
    }
}

#[derive(Debug, Clone)]
pub struct ContrastiveGrad {
    pub loss: f64,
    pub d_q: Vec<f64>,
    pub d_pos: Vec<f64>,
    pub d_neg: Vec<Vec<f64>>,
}

/// Loss `-log(exp(q·k₊/τ) / Σᵢ exp(q·kᵢ/τ))` and its gradient w.r.t. `q`.
pub fn contrastive_loss(batch: &ContrastiveBatch) -> (f64, Vec<f64>) {
    let g = contrastive_loss_full(batch);
    (g.loss, g.d_q)
}

/// Loss plus gradients w.r.t. the query and every key.
pub fn contrastive_loss_full(batch: &ContrastiveBatch) -> ContrastiveGrad {
    let t = batch.tau.get();
    let keys: Vec<&[f64]> = std::iter::once(batch.k_pos.as_slice())
        .chain(batch.k_neg.iter().map(Vec::as_slice))
        .collect();
    let logits: Vec<f64> = keys.iter().map(|k| dot(&batch.q, k) / t).collect();
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = (max + sum.ln()) - logits[0];
    let probs: Vec<f64> = exps.iter().map(|e| e / sum).collect();

    let dim = batch.q.len();
    let mut d_q = vec![0.0; dim];
    for (i, k) in keys.iter().enumerate() {
        let coeff = (probs[i] - if i == 0 { 1.0 } else { 0.0 }) / t;
        for d in 0..dim {
            d_q[d] += coeff * k[d];
        }
    }
    let key_grad = |i: usize| -> Vec<f64> {
        let coeff = (probs[i] - if i == 0 { 1.0 } else { 0.0 }) / t;
        batch.q.iter().map(|v| coeff * v).collect()
    };
    ContrastiveGrad {
        loss: loss.max(0.0),
        d_q,
        d_pos: key_grad(0),
        d_neg: (1..keys.len()).map(key_grad).collect(),
    }
}

/// Learning-rate schedule over epochs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LrSchedule {
    Constant(f64),
    /// Cosine decay from `base` to zero over the run.
    Cosine(f64),
}

impl LrSchedule {
    pub fn at(&self, epoch: usize, epochs: usize) -> f64 {
        match *self {
            LrSchedule::Constant(lr) => lr,
            LrSchedule::Cosine(base) => {
                let t = epoch as f64 / epochs.max(1) as f64;
                0.5 * base * (1.0 + (std::f64::consts::PI * t).cos())
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: LrSchedule,
    pub tau: Tau,
    pub batch_size: usize,
    /// Maximum shift in pixels for positive-pair jitter; `None` disables it.
    pub jitter: Option<i64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            lr: LrSchedule::Cosine(0.05),
            tau: Tau::default(),
            batch_size: 16,
            jitter: Some(2),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub projection: Projection,
    /// Mean loss per epoch.
    pub loss_curve: Vec<f64>,
}

impl TrainOutcome {
    pub fn curve_csv(&self) -> String {
        let mut s = String::from("epoch,loss\n");
        for (i, l) in self.loss_curve.iter().enumerate() {
            s.push_str(&format!("{i},{l:.12}\n"));
        }
        s
    }
}

struct Sample {
    label: usize,
    desc: Vec<f64>,
    /// Descriptors of jittered copies.
    variants: Vec<Vec<f64>>,
}

/// SGD on the contrastive objective. Each anchor is paired with a jittered
/// copy or another sample of the same label; the batch's other-label anchors
/// are its negatives.
pub fn train_projection(samples: &[(Radical, Bitmap)], cfg: &TrainConfig) -> Result<TrainOutcome, EmbedError> {
    let mut label_ids: BTreeMap<&Radical, usize> = BTreeMap::new();
    for (l, _) in samples {
        let n = label_ids.len();
        label_ids.entry(l).or_insert(n);
    }
    if label_ids.len() < 2 {
        return Err(EmbedError::InsufficientData(format!(
            "{} distinct labels",
            label_ids.len()
        )));
    }
    let mut per_label = vec![0usize; label_ids.len()];
    let mut prepared = Vec::with_capacity(samples.len());
    for (label, mask) in samples {
        let id = label_ids[label];
        per_label[id] += 1;
        let mut variants = Vec::new();
        if let Some(j) = cfg.jitter.filter(|&j| j > 0) {
            for (dx, dy) in [(j, 0), (-j, 0), (0, j), (0, -j)] {
                let shifted = mask.shifted(dx, dy);
                if !shifted.is_empty() {
                    variants.push(describe_bitmap(&shifted)?);
                }
            }
        }
        prepared.push(Sample {
            label: id,
            desc: describe_bitmap(mask)?,
            variants,
        });
    }
    for (label, &id) in &label_ids {
        let has_variants = prepared.iter().any(|s| s.label == id && !s.variants.is_empty());
        if per_label[id] < 2 && !has_variants {
            return Err(EmbedError::InsufficientData(format!(
                "label {label} has a single sample"
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut proj = Projection::random(rng.gen());
    let mut order: Vec<usize> = (0..prepared.len()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);
    let bs = cfg.batch_size.max(2);
    for epoch in 0..cfg.epochs {
        let lr = cfg.lr.at(epoch, cfg.epochs);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut count = 0usize;
        for chunk in order.chunks(bs) {
            let mut grad_w = vec![0.0; proj.weights.len()];
            let mut grad_b = vec![0.0; proj.bias.len()];
            let mut batch_terms = 0usize;
            // anchors and their positives, embedded once per batch
            let anchors: Vec<(usize, Vec<f64>)> = chunk.iter().map(|&i| (i, prepared[i].desc.clone())).collect();
            let positives: Vec<Vec<f64>> = chunk.iter().map(|&i| pick_positive(&prepared, i, &mut rng)).collect();
            let a_emb: Vec<Option<UnitState>> = anchors.iter().map(|(_, d)| UnitState::of(&proj, d)).collect();
            let p_emb: Vec<Option<UnitState>> = positives.iter().map(|d| UnitState::of(&proj, d)).collect();
            for (ai, &(si, _)) in anchors.iter().enumerate() {
                let negs: Vec<usize> = anchors
                    .iter()
                    .enumerate()
                    .filter(|(_, (sj, _))| prepared[*sj].label != prepared[si].label)
                    .map(|(j, _)| j)
                    .collect();
                if negs.is_empty()
                    || a_emb[ai].is_none()
                    || p_emb[ai].is_none()
                    || negs.iter().any(|&j| a_emb[j].is_none())
                {
                    continue;
                }
                let q = a_emb[ai].as_ref().unwrap();
                let kp = p_emb[ai].as_ref().unwrap();
                let batch = ContrastiveBatch {
                    q: q.f.clone(),
                    k_pos: kp.f.clone(),
                    k_neg: negs.iter().map(|&j| a_emb[j].as_ref().unwrap().f.clone()).collect(),
                    tau: cfg.tau,
                };
                let g = contrastive_loss_full(&batch);
                total += g.loss;
                count += 1;
                batch_terms += 1;
                q.backprop(&g.d_q, &anchors[ai].1, &mut grad_w, &mut grad_b);
                kp.backprop(&g.d_pos, &positives[ai], &mut grad_w, &mut grad_b);
                for (dn, &j) in g.d_neg.iter().zip(&negs) {
                    a_emb[j]
                        .as_ref()
                        .unwrap()
                        .backprop(dn, &anchors[j].1, &mut grad_w, &mut grad_b);
                }
            }
            if batch_terms == 0 {
                continue;
            }
            let scale = lr / batch_terms as f64;
            proj.weights.iter_mut().zip(&grad_w).for_each(|(w, g)| *w -= scale * g);
            proj.bias.iter_mut().zip(&grad_b).for_each(|(b, g)| *b -= scale * g);
        }
        curve.push(if count > 0 { total / count as f64 } else { 0.0 });
    }
    Ok(TrainOutcome {
        projection: proj,
        loss_curve: curve,
    })
}

fn pick_positive(samples: &[Sample], i: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let s = &samples[i];
    let same: Vec<usize> = samples
        .iter()
        .enumerate()
        .filter(|(j, o)| *j != i && o.label == s.label)
        .map(|(j, _)| j)
        .collect();
    // exact duplicates teach nothing; use them only when nothing else exists
    let distinct: Vec<usize> = same.iter().copied().filter(|&j| samples[j].desc != s.desc).collect();
    let peers = if distinct.is_empty() { same } else { distinct };
    let options = peers.len() + s.variants.len();
    let pick = rng.gen_range(0..options);
    if pick < peers.len() {
        samples[peers[pick]].desc.clone()
    } else {
        s.variants[pick - peers.len()].clone()
    }
}

/// Forward state of one embedded descriptor, kept for backprop.
struct UnitState {
    f: Vec<f64>,
    norm: f64,
}

impl UnitState {
    fn of(proj: &Projection, desc: &[f64]) -> Option<Self> {
        let z = proj.apply(desc);
        let norm = l2(&z);
        (norm > 1e-12).then(|| UnitState {
            f: z.iter().map(|v| v / norm).collect(),
            norm,
        })
    }

    /// Chains `d_f` through `f = z/‖z‖`, `z = W x + b`.
    fn backprop(&self, d_f: &[f64], x: &[f64], grad_w: &mut [f64], grad_b: &mut [f64]) {
        let proj_len = dot(&self.f, d_f);
        for i in 0..FEATURE_DIM {
            let dz = (d_f[i] - self.f[i] * proj_len) / self.norm;
            grad_b[i] += dz;
            let row = &mut grad_w[i * RAW_DIM..(i + 1) * RAW_DIM];
            for (w, xv) in row.iter_mut().zip(x) {
                *w += dz * xv;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomposer::MaskSource;

    fn mask(b: Bitmap) -> ComponentMask {
        ComponentMask::new(b, MaskSource::Coarse).unwrap()
    }

    fn batch(q: Vec<f64>, pos: Vec<f64>, neg: Vec<Vec<f64>>, tau: f64) -> ContrastiveBatch {
        ContrastiveBatch {
            q,
            k_pos: pos,
            k_neg: neg,
            tau: Tau::new(tau).unwrap(),
        }
    }

    #[test]
    fn descriptor_shape_and_determinism() {
        let m = mask(Bitmap::from_fn(64, 64, |x, y| {
            (10..30).contains(&x) && (5..50).contains(&y) && (x + y) % 3 != 0
        }));
        let a = describe(&m).unwrap();
        assert_eq!(a.len(), RAW_DIM);
        assert_eq!(a, describe(&m).unwrap());
    }

    #[test]
    fn full_mask_has_uniform_density() {
        let d = describe(&mask(Bitmap::from_fn(64, 64, |_, _| true))).unwrap();
        assert!(d[..16].iter().all(|v| (v - d[0]).abs() < 1e-15));
    }

    #[test]
    fn translation_by_zone_permutes_density() {
        let base = Bitmap::from_fn(64, 64, |x, y| x < 16 && y < 32 && (x * y) % 5 != 1);
        let moved = base.shifted(16, 16);
        let a = describe_bitmap(&base).unwrap();
        let b = describe_bitmap(&moved).unwrap();
        for zy in 0..4 {
            for zx in 0..4 {
                let src = if zx >= 1 && zy >= 1 {
                    a[(zy - 1) * 4 + zx - 1]
                } else {
                    0.0
                };
                assert_eq!(b[zy * 4 + zx], src);
            }
        }
        // shape block unaffected by translation
        assert_eq!(a[16..144], b[16..144]);
    }

    #[test]
    fn empty_mask_rejected() {
        assert!(matches!(
            describe_bitmap(&Bitmap::new(64, 64)),
            Err(EmbedError::EmptyMaskError)
        ));
    }

    #[test]
    fn embed_identity_and_zero() {
        let mut d = vec![0.0; RAW_DIM];
        d[3] = 0.6;
        d[7] = 0.8;
        let f = embed(&d, &Projection::identity()).unwrap();
        assert!((f.norm() - 1.0).abs() < 1e-12);
        assert!((f.as_slice()[3] - 0.6).abs() < 1e-12 && (f.as_slice()[7] - 0.8).abs() < 1e-12);
        assert!(matches!(embed(&d, &Projection::zeros()), Err(EmbedError::ZeroVector)));
        assert!(matches!(
            embed(&[1.0], &Projection::identity()),
            Err(EmbedError::BadDescriptor(1))
        ));
    }

    #[test]
    fn loss_examples() {
        let k = vec![1.0, 0.0];
        let (l, _) = contrastive_loss(&batch(vec![0.3, 0.4], k.clone(), vec![], 0.07));
        assert_eq!(l, 0.0);

        let same = vec![0.5, 0.5];
        let (l, _) = contrastive_loss(&batch(vec![1.0, 0.0], same.clone(), vec![same.clone(); 3], 0.5));
        assert!((l - 4f64.ln()).abs() < 1e-12);

        // q·k₊/τ = 2, q·k₋/τ = 0
        let (l, _) = contrastive_loss(&batch(vec![1.0, 0.0], vec![2.0, 0.0], vec![vec![0.0, 1.0]], 1.0));
        let oracle = -(2f64.exp() / (2f64.exp() + 1.0)).ln();
        assert!((l - oracle).abs() < 1e-12);
        assert!((l - 0.1269).abs() < 1e-4);
    }

    #[test]
    fn tau_must_be_positive() {
        assert!(Tau::new(0.0).is_err());
        assert!(Tau::new(-1.0).is_err());
        assert!(Tau::new(f64::NAN).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let p = Projection::random(9);
        let bytes = p.to_bytes();
        assert_eq!(&bytes[..7], b"P3PROJ1");
        assert_eq!(bytes.len(), 7 + 8 * (128 * 148 + 128));
        assert_eq!(f64::from_le_bytes(bytes[7..15].try_into().unwrap()), p.weights[0]);
        assert_eq!(Projection::from_bytes(&bytes).unwrap(), p);
        assert!(Projection::from_bytes(&bytes[..100]).is_err());
        assert!(Projection::from_bytes(b"XXXXXXX").is_err());
    }

    #[test]
    fn single_sample_per_label_without_jitter() {
        let a = Radical::new("a").unwrap();
        let b = Radical::new("b").unwrap();
        let m = Bitmap::from_fn(64, 64, |x, y| x > 10 && x < 20 && y > 10 && y < 40);
        let samples = vec![(a, m.clone()), (b, m.shifted(20, 0))];
        let cfg = TrainConfig {
            jitter: None,
            ..Default::default()
        };
        assert!(matches!(
            train_projection(&samples, &cfg),
            Err(EmbedError::InsufficientData(_))
        ));
        let one_label = vec![samples[0].clone(), samples[0].clone()];
        assert!(matches!(
            train_projection(&one_label, &TrainConfig::default()),
            Err(EmbedError::InsufficientData(_))
        ));
    }
}
