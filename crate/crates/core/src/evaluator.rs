//! Hold-out construction, decipherment scoring and the cross-period ablation.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::IteratorRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedder::Projection;
use crate::glyph_data::{Glyph, Manifest, ManifestRecord, Period};
use crate::ids::CharDict;
use crate::predictor::{annotate_corpus, predict_knn_compose, PredictError, PredictParams, TokenSeq};
use crate::reconstructor::match_sequence;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("manifest has no labelled samples")]
    EmptyManifest,
    #[error("{period} has {available} categories, {requested} requested")]
    TooFewCategories {
        period: Period,
        available: usize,
        requested: usize,
    },
    #[error("prediction for {0:?}, which is not a held-out sample")]
    UnknownGlyphId(String),
    #[error("two predictions for {0:?}")]
    DuplicatePrediction(String),
    #[error("period subset {0:?} lacks the target period")]
    MissingTargetPeriod(Vec<Period>),
    #[error(transparent)]
    Predict(#[from] PredictError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HoldoutPlan {
    pub seed: u64,
    pub n_target: usize,
    /// Period the held-out categories were drawn from.
    pub source_period: Period,
    pub undeciphered: BTreeMap<Period, BTreeSet<char>>,
    pub train: BTreeMap<Period, BTreeSet<char>>,
}

impl HoldoutPlan {
    pub fn is_test(&self, r: &ManifestRecord) -> bool {
        r.category
            .is_some_and(|c| self.undeciphered.get(&r.period).is_some_and(|s| s.contains(&c)))
    }

    pub fn is_train(&self, r: &ManifestRecord) -> bool {
        r.category
            .is_some_and(|c| self.train.get(&r.period).is_some_and(|s| s.contains(&c)))
    }

    pub fn test_records<'a>(&self, manifest: &'a Manifest) -> Vec<&'a ManifestRecord> {
        manifest.records().iter().filter(|r| self.is_test(r)).collect()
    }

    /// Training records, optionally restricted to `periods`.
    pub fn train_records<'a>(
        &self,
        manifest: &'a Manifest,
        periods: Option<&BTreeSet<Period>>,
    ) -> Vec<&'a ManifestRecord> {
        manifest
            .records()
            .iter()
            .filter(|r| self.is_train(r) && periods.is_none_or(|p| p.contains(&r.period)))
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), EvalError> {
        Ok(fs::write(path, self.to_json() + "\n")?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EvalError> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

/// Draws `n_target` categories from the period with the fewest samples
/// (earliest period on ties) and mirrors them into every other period.
pub fn build_holdout(manifest: &Manifest, n_target: usize, seed: u64) -> Result<HoldoutPlan, EvalError> {
    let counts = manifest.counts();
    let (&source, _) = counts
        .iter()
        .filter(|(_, c)| c.samples > 0)
        .min_by_key(|(p, c)| (c.samples, **p))
        .ok_or(EvalError::EmptyManifest)?;
    let pool = manifest.categories(source);
    if n_target > pool.len() {
        return Err(EvalError::TooFewCategories {
            period: source,
            available: pool.len(),
            requested: n_target,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let held: BTreeSet<char> = pool
        .iter()
        .copied()
        .choose_multiple(&mut rng, n_target)
        .into_iter()
        .collect();
    let mut undeciphered = BTreeMap::new();
    let mut train = BTreeMap::new();
    for p in manifest.periods() {
        let cats = manifest.categories(p);
        undeciphered.insert(p, cats.intersection(&held).copied().collect());
        train.insert(p, cats.difference(&held).copied().collect());
    }
    Ok(HoldoutPlan {
        seed,
        n_target,
        source_period: source,
        undeciphered,
        train,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodReport {
    pub undeciphered: usize,
    pub success: usize,
    pub samples: usize,
    pub correct_samples: usize,
    pub sample_acc: f64,
    pub category_acc: f64,
    /// Rank-k hit rates; equal to the top-1 rates when k = 1.
    pub topk_sample_acc: f64,
    pub topk_category_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecipherReport {
    pub topk: usize,
    pub periods: BTreeMap<Period, PeriodReport>,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

fn pct(x: f64) -> String {
    format!("{:.1}%", 100.0 * x)
}

impl DecipherReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::from("period\t#undeciphered\t#success\tsample_acc\tcategory_acc");
        if self.topk > 1 {
            let _ = write!(s, "\ttop{k}_sample_acc\ttop{k}_category_acc", k = self.topk);
        }
        s.push('\n');
        for (p, r) in &self.periods {
            let _ = write!(
                s,
                "{p}\t{}\t{}\t{}\t{}",
                r.undeciphered,
                r.success,
                pct(r.sample_acc),
                pct(r.category_acc)
            );
            if self.topk > 1 {
                let _ = write!(s, "\t{}\t{}", pct(r.topk_sample_acc), pct(r.topk_category_acc));
            }
            s.push('\n');
        }
        s
    }
}

#[derive(Default)]
struct Tally {
    samples: usize,
    correct: usize,
    topk: usize,
    hit: BTreeSet<char>,
    hit_k: BTreeSet<char>,
}

/// Scores predictions against the held-out samples. A sample is correct when
/// its sequence parses and the top reconstruction candidate is its category;
/// samples without a prediction count as incorrect.
pub fn score(
    predictions: &[TokenSeq],
    manifest: &Manifest,
    dict: &CharDict,
    plan: &HoldoutPlan,
    fuzz: f64,
    topk: usize,
) -> Result<DecipherReport, EvalError> {
    let topk = topk.max(1);
    let tests = plan.test_records(manifest);
    let test_ids: BTreeSet<&str> = tests.iter().map(|r| r.id.as_str()).collect();
    let mut by_id: HashMap<&str, &TokenSeq> = HashMap::new();
    for p in predictions {
        if !test_ids.contains(p.glyph_id.as_str()) {
            return Err(EvalError::UnknownGlyphId(p.glyph_id.clone()));
        }
        if by_id.insert(&p.glyph_id, p).is_some() {
            return Err(EvalError::DuplicatePrediction(p.glyph_id.clone()));
        }
    }
    let mut tallies: BTreeMap<Period, Tally> = plan.undeciphered.keys().map(|p| (*p, Tally::default())).collect();
    for r in tests {
        let truth = r.category.expect("test records are labelled");
        let ranked: Vec<char> = by_id
            .get(r.id.as_str())
            .and_then(|s| s.query())
            .map(|q| {
                match_sequence(&q, dict, fuzz)
                    .expect("parsed queries are valid")
                    .candidates
                    .into_iter()
                    .take(topk)
                    .map(|c| c.ch)
                    .collect()
            })
            .unwrap_or_default();
        let t = tallies.entry(r.period).or_default();
        t.samples += 1;
        if ranked.first() == Some(&truth) {
            t.correct += 1;
            t.hit.insert(truth);
        }
        if ranked.contains(&truth) {
            t.topk += 1;
            t.hit_k.insert(truth);
        }
    }
    let periods = tallies
        .into_iter()
        .map(|(p, t)| {
            let n = plan.undeciphered.get(&p).map_or(0, BTreeSet::len);
            let rep = PeriodReport {
                undeciphered: n,
                success: t.hit.len(),
                samples: t.samples,
                correct_samples: t.correct,
                sample_acc: ratio(t.correct, t.samples),
                category_acc: ratio(t.hit.len(), n),
                topk_sample_acc: ratio(t.topk, t.samples),
                topk_category_acc: ratio(t.hit_k.len(), n),
            };
            (p, rep)
        })
        .collect();
    Ok(DecipherReport { topk, periods })
}

/// Produces predictions for `test` using only `train` as deciphered data.
pub trait AblationRunner: Sync {
    fn predict(&self, train: &[&ManifestRecord], test: &[&ManifestRecord]) -> Result<Vec<TokenSeq>, EvalError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub periods: BTreeSet<Period>,
    pub train_samples: usize,
    pub sample_acc: f64,
    pub category_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub target: Period,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn to_tsv(&self) -> String {
        let cols: BTreeSet<Period> = self.rows.iter().flat_map(|r| r.periods.iter().copied()).collect();
        let mut s = String::new();
        for p in &cols {
            let _ = write!(s, "{p}\t");
        }
        s.push_str("sample_acc\tcategory_acc\n");
        for r in &self.rows {
            for p in &cols {
                s.push_str(if r.periods.contains(p) { "✓\t" } else { "\t" });
            }
            let _ = writeln!(s, "{}\t{}", pct(r.sample_acc), pct(r.category_acc));
        }
        s
    }
}

/// One evaluation per period subset on the target period's held-out samples,
/// with the training pool restricted to the subset.
pub fn ablation_matrix(
    manifest: &Manifest,
    dict: &CharDict,
    plan: &HoldoutPlan,
    subsets: &[BTreeSet<Period>],
    runner: &dyn AblationRunner,
    fuzz: f64,
) -> Result<AblationTable, EvalError> {
    let target = plan.source_period;
    if let Some(bad) = subsets.iter().find(|s| !s.contains(&target)) {
        return Err(EvalError::MissingTargetPeriod(bad.iter().copied().collect()));
    }
    let test: Vec<&ManifestRecord> = plan
        .test_records(manifest)
        .into_iter()
        .filter(|r| r.period == target)
        .collect();
    let rows = subsets
        .par_iter()
        .map(|subset| {
            let train = plan.train_records(manifest, Some(subset));
            let preds = runner.predict(&train, &test)?;
            let report = score(&preds, manifest, dict, plan, fuzz, 1)?;
            let r = report.periods.get(&target).copied().expect("target period is scored");
            Ok(AblationRow {
                periods: subset.clone(),
                train_samples: train.len(),
                sample_acc: r.sample_acc,
                category_acc: r.category_acc,
            })
        })
        .collect::<Result<_, EvalError>>()?;
    Ok(AblationTable { target, rows })
}

/// Annotates the training glyphs, then predicts with KNN composition.
/// A glyph whose prediction fails gets an empty, invalid sequence.
pub struct KnnComposeRunner<'a> {
    pub glyphs: HashMap<String, &'a Glyph>,
    pub dict: &'a CharDict,
    pub proj: &'a Projection,
    pub params: PredictParams,
}

impl<'a> KnnComposeRunner<'a> {
    pub fn new(glyphs: &'a [Glyph], dict: &'a CharDict, proj: &'a Projection, params: PredictParams) -> Self {
        KnnComposeRunner {
            glyphs: glyphs.iter().map(|g| (g.id.clone(), g)).collect(),
            dict,
            proj,
            params,
        }
    }

    fn lookup(&self, records: &[&ManifestRecord]) -> Vec<Glyph> {
        records
            .iter()
            .filter_map(|r| self.glyphs.get(&r.id).map(|g| (*g).clone()))
            .collect()
    }
}

impl AblationRunner for KnnComposeRunner<'_> {
    fn predict(&self, train: &[&ManifestRecord], test: &[&ManifestRecord]) -> Result<Vec<TokenSeq>, EvalError> {
        let annotated = annotate_corpus(&self.lookup(train), self.dict, self.proj, &self.params)?;
        Ok(self
            .lookup(test)
            .par_iter()
            .map(|g| {
                predict_knn_compose(g, &annotated.store, self.proj, &self.params).unwrap_or_else(|_| TokenSeq {
                    glyph_id: g.id.clone(),
                    tokens: Vec::new(),
                })
            })
            .collect())
    }
}
