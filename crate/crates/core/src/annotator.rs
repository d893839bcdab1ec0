//! KNN labelling of component features with confidence-dictionary refinement.
//!
//! Deciphered characters seed their components with a confidence of
//! multiplicity/n per radical. An unlabelled component gathers its K nearest
//! labelled neighbours, weights their dictionaries by distance, and takes a
//! softmax over the summed per-key scores.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedder::FeatureVec;
use crate::ids::{CharEntry, Radical};

pub const DEFAULT_K: usize = 15;
pub const WEIGHT_EPS: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum AnnotateError {
    #[error("store has {available} labelled items, {requested} neighbours requested")]
    NotEnoughNeighbors { requested: usize, available: usize },
    #[error("no neighbour carries any key")]
    NoKeys,
    #[error("confidence dictionary is empty")]
    EmptyDict,
    #[error("K must be at least 1")]
    ZeroK,
    #[error("store line {line}: {message}")]
    Store { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Radical label → confidence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConfidenceDict(BTreeMap<Radical, f64>);

impl ConfidenceDict {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn one_hot(label: Radical) -> Self {
        ConfidenceDict(BTreeMap::from([(label, 1.0)]))
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (Radical, f64)>) -> Self {
        ConfidenceDict(pairs.into_iter().collect())
    }

    /// Confidence of `label`, zero when absent.
    pub fn get(&self, label: &Radical) -> f64 {
        self.0.get(label).copied().unwrap_or(0.0)
    }

    pub fn keys(&self) -> impl Iterator<Item = &Radical> {
        self.0.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Radical, f64)> {
        self.0.iter().map(|(k, v)| (k, *v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.0.values().sum()
    }
}

/// Confidence per distinct radical = multiplicity / n.
pub fn seed_confidence(entry: &CharEntry) -> ConfidenceDict {
    let n = entry.n() as f64;
    ConfidenceDict(
        entry
            .radicals
            .distinct()
            .map(|(r, m)| (r.clone(), m as f64 / n))
            .collect(),
    )
}

/// How a neighbour's distance turns into its weight.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightMode {
    /// `1/(d+ε)`: nearer neighbours count more.
    #[default]
    Inverse,
    /// The distance itself.
    Literal,
    /// `-d`.
    Neg,
}

impl WeightMode {
    pub fn weight(self, d: f64) -> f64 {
        match self {
            WeightMode::Inverse => 1.0 / (d + WEIGHT_EPS),
            WeightMode::Literal => d,
            WeightMode::Neg => -d,
        }
    }
}

impl FromStr for WeightMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "inverse" => Ok(WeightMode::Inverse),
            "literal" => Ok(WeightMode::Literal),
            "neg" => Ok(WeightMode::Neg),
            other => Err(format!("unknown weight mode {other:?} (inverse|literal|neg)")),
        }
    }
}

impl fmt::Display for WeightMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WeightMode::Inverse => "inverse",
            WeightMode::Literal => "literal",
            WeightMode::Neg => "neg",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Neighbor {
    pub id: String,
    pub distance: f64,
    pub dict: ConfidenceDict,
}

/// K nearest labelled items, ascending by distance.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborSet(Vec<Neighbor>);

impl NeighborSet {
    pub fn new(mut neighbors: Vec<Neighbor>) -> Self {
        neighbors.sort_by(|a, b| a.distance.total_cmp(&b.distance).then_with(|| a.id.cmp(&b.id)));
        NeighborSet(neighbors)
    }

    pub fn as_slice(&self) -> &[Neighbor] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn ids(&self) -> Vec<String> {
        self.0.iter().map(|n| n.id.clone()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Seeded,
    Propagated,
    Unlabeled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoreItem {
    pub feature: FeatureVec,
    pub dict: ConfidenceDict,
    pub status: Status,
    /// Neighbours that produced a propagated dictionary.
    pub neighbor_ids: Option<Vec<String>>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AnnotationStore {
    items: BTreeMap<String, StoreItem>,
}

#[derive(Serialize, Deserialize)]
struct StoreLine {
    component_id: String,
    feature: Vec<f64>,
    dict: ConfidenceDict,
    status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    neighbor_ids: Option<Vec<String>>,
}

impl AnnotationStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert_seeded(&mut self, id: impl Into<String>, feature: FeatureVec, dict: ConfidenceDict) {
        self.items.insert(
            id.into(),
            StoreItem {
                feature,
                dict,
                status: Status::Seeded,
                neighbor_ids: None,
            },
        );
    }

    pub fn insert_unlabeled(&mut self, id: impl Into<String>, feature: FeatureVec) {
        self.items.insert(
            id.into(),
            StoreItem {
                feature,
                dict: ConfidenceDict::new(),
                status: Status::Unlabeled,
                neighbor_ids: None,
            },
        );
    }

    pub fn insert(&mut self, id: impl Into<String>, item: StoreItem) {
        self.items.insert(id.into(), item);
    }

    pub fn remove(&mut self, id: &str) -> Option<StoreItem> {
        self.items.remove(id)
    }

    pub fn get(&self, id: &str) -> Option<&StoreItem> {
        self.items.get(id)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &StoreItem)> {
        self.items.iter()
    }

    pub fn labelled_count(&self) -> usize {
        self.items.values().filter(|i| i.status != Status::Unlabeled).count()
    }

    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for (id, item) in &self.items {
            let line = StoreLine {
                component_id: id.clone(),
                feature: item.feature.as_slice().to_vec(),
                dict: item.dict.clone(),
                status: item.status,
                neighbor_ids: item.neighbor_ids.clone(),
            };
            s.push_str(&serde_json::to_string(&line).expect("store line serializes"));
            s.push('\n');
        }
        s
    }

    pub fn from_jsonl(text: &str) -> Result<Self, AnnotateError> {
        let mut store = AnnotationStore::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let l: StoreLine = serde_json::from_str(line).map_err(|e| AnnotateError::Store {
                line: i + 1,
                message: e.to_string(),
            })?;
            if l.feature.len() != crate::embedder::FEATURE_DIM {
                return Err(AnnotateError::Store {
                    line: i + 1,
                    message: format!("feature has {} values", l.feature.len()),
                });
            }
            store.items.insert(
                l.component_id,
                StoreItem {
                    feature: FeatureVec::from_raw(l.feature),
                    dict: l.dict,
                    status: l.status,
                    neighbor_ids: l.neighbor_ids,
                },
            );
        }
        Ok(store)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), AnnotateError> {
        fs::write(path, self.to_jsonl())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, AnnotateError> {
        Self::from_jsonl(&fs::read_to_string(path)?)
    }

    /// Exact K nearest labelled items, skipping ids rejected by `keep`.
    pub fn knn_filtered(
        &self,
        target: &FeatureVec,
        k: usize,
        keep: impl Fn(&str) -> bool,
    ) -> Result<NeighborSet, AnnotateError> {
        if k == 0 {
            return Err(AnnotateError::ZeroK);
        }
        let mut all: Vec<(f64, &String, &StoreItem)> = self
            .items
            .iter()
            .filter(|(id, it)| it.status != Status::Unlabeled && keep(id))
            .map(|(id, it)| (target.distance(&it.feature), id, it))
            .collect();
        if all.len() < k {
            return Err(AnnotateError::NotEnoughNeighbors {
                requested: k,
                available: all.len(),
            });
        }
        let by_key = |a: &(f64, &String, &StoreItem), b: &(f64, &String, &StoreItem)| {
            a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1))
        };
        if all.len() > k {
            all.select_nth_unstable_by(k - 1, by_key);
            all.truncate(k);
        }
        all.sort_by(by_key);
        Ok(NeighborSet(
            all.into_iter()
                .map(|(d, id, it)| Neighbor {
                    id: id.clone(),
                    distance: d,
                    dict: it.dict.clone(),
                })
                .collect(),
        ))
    }

    /// Labels every `Unlabeled` item from its neighbours. Without `chain`, all
    /// queries read the labelled snapshot taken before the pass and results
    /// are committed together; with `chain`, each result is committed at once
    /// and later items (in id order) may use it.
    pub fn propagate(&mut self, k: usize, mode: WeightMode, chain: bool) -> Result<usize, AnnotateError> {
        let pending: Vec<String> = self
            .items
            .iter()
            .filter(|(_, it)| it.status == Status::Unlabeled)
            .map(|(id, _)| id.clone())
            .collect();
        let mut staged = Vec::new();
        for id in &pending {
            let feature = self.items[id].feature.clone();
            let neighbors = knn_query(&feature, self, k)?;
            let dict = refine_confidence(&neighbors, mode)?;
            let update = (id.clone(), dict, neighbors.ids());
            if chain {
                self.commit(update);
            } else {
                staged.push(update);
            }
        }
        for u in staged {
            self.commit(u);
        }
        Ok(pending.len())
    }

    fn commit(&mut self, (id, dict, neighbor_ids): (String, ConfidenceDict, Vec<String>)) {
        let item = self.items.get_mut(&id).expect("pending id exists");
        item.dict = dict;
        item.status = Status::Propagated;
        item.neighbor_ids = Some(neighbor_ids);
    }
}

/// Exact K nearest labelled items by Euclidean distance; ties by id.
pub fn knn_query(target: &FeatureVec, store: &AnnotationStore, k: usize) -> Result<NeighborSet, AnnotateError> {
    store.knn_filtered(target, k, |_| true)
}

/// Softmax over keys of `Σᵢ w(dᵢ)·fᵢ(key)`, missing keys contributing 0.
pub fn refine_confidence(neighbors: &NeighborSet, mode: WeightMode) -> Result<ConfidenceDict, AnnotateError> {
    let keys: BTreeSet<&Radical> = neighbors.0.iter().flat_map(|n| n.dict.keys()).collect();
    if keys.is_empty() {
        return Err(AnnotateError::NoKeys);
    }
    let scores: Vec<(Radical, f64)> = keys
        .into_iter()
        .map(|k| {
            let s = neighbors
                .0
                .iter()
                .map(|n| mode.weight(n.distance) * n.dict.get(k))
                .sum();
            (k.clone(), s)
        })
        .collect();
    let max = scores.iter().map(|(_, s)| *s).fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|(_, s)| (s - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(ConfidenceDict(
        scores.into_iter().zip(exps).map(|((k, _), e)| (k, e / sum)).collect(),
    ))
}

/// Highest-confidence key; ties go to the smallest label.
pub fn assign_label(dict: &ConfidenceDict) -> Result<Radical, AnnotateError> {
    dict.0
        .iter()
        .fold(None::<(&Radical, f64)>, |best, (k, &v)| match best {
            Some((_, bv)) if bv >= v => best,
            _ => Some((k, v)),
        })
        .map(|(k, _)| k.clone())
        .ok_or(AnnotateError::EmptyDict)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::parse_ids;

    fn r(s: &str) -> Radical {
        Radical::new(s).unwrap()
    }

    fn nb(id: &str, d: f64, pairs: &[(&str, f64)]) -> Neighbor {
        Neighbor {
            id: id.into(),
            distance: d,
            dict: ConfidenceDict::from_pairs(pairs.iter().map(|(k, v)| (r(k), *v))),
        }
    }

    fn unit(i: usize) -> FeatureVec {
        let mut v = vec![0.0; 128];
        v[i] = 1.0;
        FeatureVec::normalized(v).unwrap()
    }

    #[test]
    fn seeding() {
        let an = CharEntry::new('安', parse_ids("⿱宀女").unwrap());
        let d = seed_confidence(&an);
        assert_eq!((d.get(&r("宀")), d.get(&r("女"))), (0.5, 0.5));
        let single = CharEntry::new('女', parse_ids("女").unwrap());
        assert_eq!(seed_confidence(&single).get(&r("女")), 1.0);
        let rep = CharEntry::new('x', parse_ids("⿱宀⿰女女").unwrap());
        let d = seed_confidence(&rep);
        assert!((d.get(&r("女")) - 2.0 / 3.0).abs() < 1e-15);
        assert!((d.get(&r("宀")) - 1.0 / 3.0).abs() < 1e-15);
        assert!((d.total() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn refine_examples() {
        let one = NeighborSet::new(vec![nb("a", 0.3, &[("A", 1.0)])]);
        let d = refine_confidence(&one, WeightMode::Inverse).unwrap();
        assert_eq!(d.get(&r("A")), 1.0);

        let sym = NeighborSet::new(vec![nb("a", 1.0, &[("A", 1.0)]), nb("b", 1.0, &[("B", 1.0)])]);
        let d = refine_confidence(&sym, WeightMode::Inverse).unwrap();
        assert!((d.get(&r("A")) - 0.5).abs() < 1e-12 && (d.get(&r("B")) - 0.5).abs() < 1e-12);

        let worked = NeighborSet::new(vec![nb("a", 0.5, &[("A", 1.0)]), nb("b", 2.0, &[("B", 1.0)])]);
        let d = refine_confidence(&worked, WeightMode::Inverse).unwrap();
        // weights 1/(0.5+ε) ≈ 2 and 1/(2+ε) ≈ 0.5
        let oracle = 2f64.exp() / (2f64.exp() + 0.5f64.exp());
        assert!((d.get(&r("A")) - oracle).abs() < 1e-4);
        assert!((d.get(&r("A")) - 0.8176).abs() < 1e-4);
        assert!((d.get(&r("B")) - 0.1824).abs() < 1e-4);
        assert_eq!(assign_label(&d).unwrap(), r("A"));
    }

    #[test]
    fn literal_mode_prefers_far_neighbours() {
        let worked = NeighborSet::new(vec![nb("a", 0.5, &[("A", 1.0)]), nb("b", 2.0, &[("B", 1.0)])]);
        let d = refine_confidence(&worked, WeightMode::Literal).unwrap();
        assert_eq!(assign_label(&d).unwrap(), r("B"));
    }

    #[test]
    fn no_keys() {
        let empty = NeighborSet::new(vec![nb("a", 0.5, &[])]);
        assert!(matches!(
            refine_confidence(&empty, WeightMode::Inverse),
            Err(AnnotateError::NoKeys)
        ));
    }

    #[test]
    fn assign_ties_and_empty() {
        let d = ConfidenceDict::from_pairs([(r("B"), 0.5), (r("A"), 0.5)]);
        assert_eq!(assign_label(&d).unwrap(), r("A"));
        let d = ConfidenceDict::from_pairs([(r("A"), 0.8), (r("B"), 0.2)]);
        assert_eq!(assign_label(&d).unwrap(), r("A"));
        assert!(matches!(
            assign_label(&ConfidenceDict::new()),
            Err(AnnotateError::EmptyDict)
        ));
    }

    #[test]
    fn knn_basics() {
        let mut s = AnnotationStore::new();
        s.insert_seeded("x", unit(0), ConfidenceDict::one_hot(r("A")));
        let n = knn_query(&unit(1), &s, 1).unwrap();
        assert_eq!(n.ids(), vec!["x"]);
        s.insert_seeded("y", unit(1), ConfidenceDict::one_hot(r("B")));
        let n = knn_query(&unit(1), &s, 2).unwrap();
        assert_eq!(n.as_slice()[0].distance, 0.0);
        assert_eq!(n.ids(), vec!["y", "x"]);
        assert!(matches!(
            knn_query(&unit(1), &s, 3),
            Err(AnnotateError::NotEnoughNeighbors { .. })
        ));
        s.insert_unlabeled("z", unit(2));
        assert!(matches!(
            knn_query(&unit(1), &s, 3),
            Err(AnnotateError::NotEnoughNeighbors { available: 2, .. })
        ));
    }

    #[test]
    fn ties_break_by_id() {
        let mut s = AnnotationStore::new();
        s.insert_seeded("b", unit(0), ConfidenceDict::one_hot(r("A")));
        s.insert_seeded("a", unit(1), ConfidenceDict::one_hot(r("B")));
        let n = knn_query(&unit(2), &s, 1).unwrap();
        assert_eq!(n.ids(), vec!["a"]);
    }

    #[test]
    fn propagation_records_audit_trail() {
        let mut s = AnnotationStore::new();
        s.insert_seeded("s0", unit(0), ConfidenceDict::one_hot(r("A")));
        s.insert_seeded("s1", unit(1), ConfidenceDict::one_hot(r("B")));
        let mut near0 = vec![0.0; 128];
        near0[0] = 1.0;
        near0[5] = 0.1;
        s.insert_unlabeled("u0", FeatureVec::normalized(near0).unwrap());
        assert_eq!(s.propagate(1, WeightMode::Inverse, false).unwrap(), 1);
        let it = s.get("u0").unwrap();
        assert_eq!(it.status, Status::Propagated);
        assert_eq!(it.neighbor_ids.as_deref(), Some(&["s0".to_string()][..]));
        assert_eq!(assign_label(&it.dict).unwrap(), r("A"));
    }

    #[test]
    fn chaining_changes_visibility() {
        // u1 sits on top of u0; u0 is nearest s0. With chaining, u1 sees u0.
        let mut base = AnnotationStore::new();
        base.insert_seeded("s0", unit(0), ConfidenceDict::one_hot(r("A")));
        base.insert_unlabeled("u0", unit(3));
        base.insert_unlabeled("u1", unit(3));
        let mut plain = base.clone();
        plain.propagate(1, WeightMode::Inverse, false).unwrap();
        assert_eq!(
            plain.get("u1").unwrap().neighbor_ids.as_deref(),
            Some(&["s0".to_string()][..])
        );
        let mut chained = base;
        chained.propagate(1, WeightMode::Inverse, true).unwrap();
        assert_eq!(
            chained.get("u1").unwrap().neighbor_ids.as_deref(),
            Some(&["u0".to_string()][..])
        );
    }

    #[test]
    fn store_jsonl_round_trip() {
        let mut s = AnnotationStore::new();
        s.insert_seeded(
            "s0",
            unit(0),
            ConfidenceDict::from_pairs([(r("宀"), 0.5), (r("女"), 0.5)]),
        );
        s.insert_unlabeled("u0", unit(1));
        let text = s.to_jsonl();
        assert!(text.contains("\"component_id\":\"s0\""));
        assert_eq!(AnnotationStore::from_jsonl(&text).unwrap(), s);
        assert!(AnnotationStore::from_jsonl(
            "{\"component_id\":\"a\",\"feature\":[1.0],\"dict\":{},\"status\":\"Seeded\"}"
        )
        .is_err());
    }
}
