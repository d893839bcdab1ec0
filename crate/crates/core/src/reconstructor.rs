//! Reassembling labelled radicals into dictionary characters.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decomposer::{MaskSet, MaskSource};
use crate::ids::{parse_tokens, serialize_ids, CharDict, IdsError, Radical, RadicalMultiset, Token};

pub const DEFAULT_FUZZ: f64 = 0.34;

#[derive(Debug, Error)]
pub enum ReconstructError {
    #[error("target {0} is not in the dictionary")]
    UnknownTarget(char),
    #[error("invalid query: {0}")]
    InvalidQuery(#[from] IdsError),
    #[error("mask set has {masks} masks but {labels} labels")]
    LabelCount { masks: usize, labels: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MatchKind {
    ExactIds,
    ExactMultiset,
    Fuzzy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    #[serde(rename = "char")]
    pub ch: char,
    pub score: f64,
    pub kind: MatchKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionResult {
    pub candidates: Vec<Candidate>,
    /// Whether the top candidate equals the target, when one was given.
    pub accepted: Option<bool>,
}

impl ReconstructionResult {
    pub fn top(&self) -> Option<char> {
        self.candidates.first().map(|c| c.ch)
    }

    pub fn with_target(mut self, target: char) -> Self {
        self.accepted = Some(self.top() == Some(target));
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum QueryForm {
    Sequence(Vec<Token>),
    Multiset(RadicalMultiset),
}

/// True iff `labels` equals the target's radical multiset, multiplicity included.
pub fn verify_against(target: char, labels: &RadicalMultiset, dict: &CharDict) -> Result<bool, ReconstructError> {
    let entry = dict.get(target).ok_or(ReconstructError::UnknownTarget(target))?;
    Ok(&entry.radicals == labels)
}

/// Token-level Levenshtein distance.
pub fn token_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `1 - distance / max(len)`; identical sequences score 1.
pub fn token_similarity<T: PartialEq>(a: &[T], b: &[T]) -> f64 {
    let longest = a.len().max(b.len());
    if longest == 0 {
        return 1.0;
    }
    1.0 - token_distance(a, b) as f64 / longest as f64
}

/// Ranks dictionary characters for a query.
///
/// Exact IDS matches (canonical or variant) score 1 and come first. Exact
/// radical-multiset matches are added only when no exact IDS match exists;
/// they also score 1 but rank below exact IDS. Remaining entries within `fuzz`
/// normalized token edit distance follow as fuzzy candidates. Bare multiset
/// queries have no token sequence, so they produce no fuzzy candidates.
pub fn match_sequence(query: &QueryForm, dict: &CharDict, fuzz: f64) -> Result<ReconstructionResult, ReconstructError> {
    let mut out: Vec<Candidate> = Vec::new();
    let mut taken = BTreeSet::new();
    let (tokens, multiset) = match query {
        QueryForm::Sequence(tokens) => {
            let tree = parse_tokens(tokens)?;
            let key = serialize_ids(&tree);
            for ch in dict.lookup_any(&key) {
                taken.insert(ch);
                out.push(Candidate {
                    ch,
                    score: 1.0,
                    kind: MatchKind::ExactIds,
                });
            }
            (Some(tree.tokens()), crate::ids::radical_multiset(&tree))
        }
        QueryForm::Multiset(m) => (None, m.clone()),
    };
    if out.is_empty() {
        for e in dict.entries() {
            if e.radicals == multiset && taken.insert(e.ch) {
                out.push(Candidate {
                    ch: e.ch,
                    score: 1.0,
                    kind: MatchKind::ExactMultiset,
                });
            }
        }
    }
    if let Some(tokens) = tokens {
        let floor = 1.0 - fuzz;
        let mut fuzzy: Vec<Candidate> = dict
            .entries()
            .filter(|e| !taken.contains(&e.ch))
            .filter_map(|e| {
                let s = token_similarity(&tokens, &e.ids.tokens());
                (s >= floor - 1e-12).then_some(Candidate {
                    ch: e.ch,
                    score: s,
                    kind: MatchKind::Fuzzy,
                })
            })
            .collect();
        fuzzy.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.ch.cmp(&b.ch)));
        out.extend(fuzzy);
    }
    // exact groups were pushed in codepoint order already
    Ok(ReconstructionResult {
        candidates: out,
        accepted: None,
    })
}

/// One mask set proposed for a deciphered glyph, with a label per mask.
#[derive(Debug, Clone)]
pub struct LabelledMaskSet {
    pub set: MaskSet,
    pub labels: Vec<Radical>,
}

impl LabelledMaskSet {
    pub fn multiset(&self) -> RadicalMultiset {
        self.labels.iter().cloned().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Attempt {
    pub source: MaskSource,
    pub labels: Vec<String>,
    pub verified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FilterRecord {
    pub glyph_id: String,
    pub target: char,
    /// Index into the candidate list of the accepted set.
    pub accepted: Option<usize>,
    pub accepted_source: Option<MaskSource>,
    /// More than one set verified; priority decided.
    pub tie: bool,
    /// Accepted only after relabelling with the target's own radicals.
    pub relabelled: bool,
    pub attempts: Vec<Attempt>,
}

/// Keeps the highest-priority mask set (Imported > Coarse > Fine) whose labels
/// reassemble the target; rejects the glyph when none does.
pub fn filter_masksets(
    glyph_id: &str,
    candidates: &[LabelledMaskSet],
    target: char,
    dict: &CharDict,
) -> Result<FilterRecord, ReconstructError> {
    if !dict.contains(target) {
        return Err(ReconstructError::UnknownTarget(target));
    }
    let mut attempts = Vec::with_capacity(candidates.len());
    let mut verified = Vec::new();
    for (i, c) in candidates.iter().enumerate() {
        if c.labels.len() != c.set.masks.len() {
            return Err(ReconstructError::LabelCount {
                masks: c.set.masks.len(),
                labels: c.labels.len(),
            });
        }
        let ok = verify_against(target, &c.multiset(), dict)?;
        if ok {
            verified.push(i);
        }
        attempts.push(Attempt {
            source: c.set.source,
            labels: c.labels.iter().map(|l| l.as_str().to_string()).collect(),
            verified: ok,
        });
    }
    let best = verified
        .iter()
        .copied()
        .max_by_key(|&i| (candidates[i].set.source.priority(), std::cmp::Reverse(i)));
    Ok(FilterRecord {
        glyph_id: glyph_id.to_string(),
        target,
        accepted: best,
        accepted_source: best.map(|i| candidates[i].set.source),
        tie: verified.len() > 1,
        relabelled: false,
        attempts,
    })
}

/// JSONL line of the candidate output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidateLine {
    pub glyph_id: String,
    pub candidates: Vec<Candidate>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomposer::ComponentMask;
    use crate::glyph_data::Bitmap;
    use crate::ids::{parse_dict, tokenize};

    fn dict() -> CharDict {
        parse_dict("U+5B89\t安\t⿱宀女\nU+5B57\t字\t⿱宀子\nU+597D\t好\t⿰女子\nU+5973\t女\t女\n")
            .unwrap()
            .0
    }

    fn ms(labels: &[&str]) -> RadicalMultiset {
        labels.iter().map(|l| Radical::new(*l).unwrap()).collect()
    }

    #[test]
    fn verify_examples() {
        let d = dict();
        assert!(verify_against('安', &ms(&["宀", "女"]), &d).unwrap());
        assert!(!verify_against('安', &ms(&["女"]), &d).unwrap());
        assert!(!verify_against('安', &ms(&["宀", "女", "女"]), &d).unwrap());
        assert!(matches!(
            verify_against('x', &ms(&["女"]), &d),
            Err(ReconstructError::UnknownTarget('x'))
        ));
    }

    #[test]
    fn exact_ids_match() {
        let d = dict();
        let r = match_sequence(&QueryForm::Sequence(tokenize("⿱宀女").unwrap()), &d, DEFAULT_FUZZ).unwrap();
        assert_eq!(
            r.candidates[0],
            Candidate {
                ch: '安',
                score: 1.0,
                kind: MatchKind::ExactIds
            }
        );
        assert_eq!(r.with_target('安').accepted, Some(true));
    }

    #[test]
    fn multiset_ties_by_codepoint() {
        let d = parse_dict("U+674F\t杏\t⿱木口\nU+5446\t呆\t⿱口木\n").unwrap().0;
        let r = match_sequence(&QueryForm::Multiset(ms(&["木", "口"])), &d, DEFAULT_FUZZ).unwrap();
        let chars: Vec<char> = r.candidates.iter().map(|c| c.ch).collect();
        assert_eq!(chars, vec!['呆', '杏']);
        assert!(r.candidates.iter().all(|c| c.kind == MatchKind::ExactMultiset));
    }

    #[test]
    fn fuzzy_one_substitution() {
        let d = parse_dict("U+5B89\t安\t⿱宀女\n").unwrap().0;
        let r = match_sequence(&QueryForm::Sequence(tokenize("⿱宀犬").unwrap()), &d, 0.34).unwrap();
        assert_eq!(r.candidates.len(), 1);
        assert_eq!(r.candidates[0].kind, MatchKind::Fuzzy);
        assert!((r.candidates[0].score - 2.0 / 3.0).abs() < 1e-12);
        let strict = match_sequence(&QueryForm::Sequence(tokenize("⿱宀犬").unwrap()), &d, 0.3).unwrap();
        assert!(strict.candidates.is_empty());
    }

    #[test]
    fn invalid_query_errors() {
        let d = dict();
        assert!(matches!(
            match_sequence(&QueryForm::Sequence(tokenize("⿱宀").unwrap()), &d, 0.3),
            Err(ReconstructError::InvalidQuery(_))
        ));
    }

    #[test]
    fn levenshtein_oracle_cases() {
        assert_eq!(token_distance(&['a', 'b', 'c'], &['a', 'b', 'c']), 0);
        assert_eq!(token_distance::<char>(&[], &['a', 'b']), 2);
        assert_eq!(
            token_distance(&['k', 'i', 't', 't', 'e', 'n'], &['s', 'i', 't', 't', 'i', 'n', 'g']),
            3
        );
        assert_eq!(token_similarity(&[1, 2], &[2, 1]), 0.0);
    }

    fn set(source: MaskSource, n: usize) -> MaskSet {
        let m = ComponentMask::new(Bitmap::from_fn(4, 4, |_, _| true), source).unwrap();
        MaskSet {
            glyph_id: "g".into(),
            source,
            masks: vec![m; n],
        }
    }

    fn lab(source: MaskSource, labels: &[&str]) -> LabelledMaskSet {
        LabelledMaskSet {
            set: set(source, labels.len()),
            labels: labels.iter().map(|l| Radical::new(*l).unwrap()).collect(),
        }
    }

    #[test]
    fn filter_prefers_verified_then_priority() {
        let d = dict();
        let rec = filter_masksets(
            "g",
            &[
                lab(MaskSource::Fine, &["宀", "子"]),
                lab(MaskSource::Coarse, &["宀", "女"]),
            ],
            '安',
            &d,
        )
        .unwrap();
        assert_eq!(rec.accepted, Some(1));
        assert_eq!(rec.accepted_source, Some(MaskSource::Coarse));
        assert!(!rec.tie);

        let rec = filter_masksets(
            "g",
            &[lab(MaskSource::Coarse, &["女"]), lab(MaskSource::Fine, &["宀"])],
            '安',
            &d,
        )
        .unwrap();
        assert_eq!(rec.accepted, None);
        assert_eq!(rec.attempts.len(), 2);
        assert_eq!(rec.attempts[0].labels, vec!["女"]);

        let rec = filter_masksets(
            "g",
            &[
                lab(MaskSource::Fine, &["宀", "女"]),
                lab(MaskSource::Coarse, &["女", "宀"]),
                lab(MaskSource::Imported, &["宀", "女"]),
            ],
            '安',
            &d,
        )
        .unwrap();
        assert_eq!(rec.accepted_source, Some(MaskSource::Imported));
        assert!(rec.tie);
    }

    #[test]
    fn filter_unknown_target() {
        assert!(matches!(
            filter_masksets("g", &[], 'x', &dict()),
            Err(ReconstructError::UnknownTarget('x'))
        ));
    }
}
