use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::raster::{load_glyph_bitmap, Glyph, Period};
use super::GlyphError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub id: String,
    pub period: Period,
    #[serde(with = "opt_char")]
    pub category: Option<char>,
    pub image_path: PathBuf,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct PeriodCounts {
    pub categories: usize,
    pub samples: usize,
}

#[derive(Debug, Clone, Default)]
pub struct Manifest {
    records: Vec<ManifestRecord>,
    /// Directory relative image paths resolve against.
    base_dir: PathBuf,
}

impl Manifest {
    /// Builds a manifest from in-memory records; ids must be unique.
    pub fn from_records(records: Vec<ManifestRecord>) -> Result<Self, GlyphError> {
        let mut seen = HashSet::new();
        for (i, r) in records.iter().enumerate() {
            if !seen.insert(r.id.as_str()) {
                return Err(GlyphError::DuplicateId {
                    id: r.id.clone(),
                    line: i + 1,
                });
            }
        }
        Ok(Manifest {
            records,
            base_dir: PathBuf::new(),
        })
    }

    pub fn with_base_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.base_dir = dir.into();
        self
    }

    pub fn records(&self) -> &[ManifestRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&ManifestRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    pub fn resolve(&self, r: &ManifestRecord) -> PathBuf {
        if r.image_path.is_absolute() {
            r.image_path.clone()
        } else {
            self.base_dir.join(&r.image_path)
        }
    }

    /// Reads and normalizes the record's image.
    pub fn load_glyph(&self, r: &ManifestRecord, threshold: u8) -> Result<Glyph, GlyphError> {
        Ok(Glyph {
            id: r.id.clone(),
            period: r.period,
            category: r.category,
            bitmap: load_glyph_bitmap(self.resolve(r), threshold)?,
        })
    }

    pub fn periods(&self) -> BTreeSet<Period> {
        self.records.iter().map(|r| r.period).collect()
    }

    /// Distinct known categories observed in one period.
    pub fn categories(&self, period: Period) -> BTreeSet<char> {
        self.records
            .iter()
            .filter(|r| r.period == period)
            .filter_map(|r| r.category)
            .collect()
    }

    pub fn counts(&self) -> BTreeMap<Period, PeriodCounts> {
        let mut cats: BTreeMap<Period, BTreeSet<char>> = BTreeMap::new();
        let mut out: BTreeMap<Period, PeriodCounts> = BTreeMap::new();
        for r in &self.records {
            out.entry(r.period).or_default().samples += 1;
            let set = cats.entry(r.period).or_default();
            if let Some(c) = r.category {
                set.insert(c);
            }
        }
        for (p, set) in cats {
            out.get_mut(&p).expect("period counted").categories = set.len();
        }
        out
    }

    /// Per-period category/sample table in TSV form, with a total row.
    pub fn stats_tsv(&self) -> String {
        let mut s = String::from("period\tcategories\tsamples\n");
        let counts = self.counts();
        let mut all_cats = BTreeSet::new();
        for (p, c) in &counts {
            s.push_str(&format!("{p}\t{}\t{}\n", c.categories, c.samples));
        }
        for r in &self.records {
            if let Some(c) = r.category {
                all_cats.insert(c);
            }
        }
        s.push_str(&format!("Total\t{}\t{}\n", all_cats.len(), self.records.len()));
        s
    }

    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for r in &self.records {
            s.push_str(&serde_json::to_string(r).expect("record serializes"));
            s.push('\n');
        }
        s
    }
}

/// Reads a JSONL manifest. Relative image paths resolve against the
/// manifest's directory and must exist.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest, GlyphError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ManifestRecord = serde_json::from_str(line).map_err(|e| GlyphError::Schema {
            line: line_no,
            message: e.to_string(),
        })?;
        if !seen.insert(rec.id.clone()) {
            return Err(GlyphError::DuplicateId {
                id: rec.id,
                line: line_no,
            });
        }
        let resolved = if rec.image_path.is_absolute() {
            rec.image_path.clone()
        } else {
            base.join(&rec.image_path)
        };
        if !resolved.exists() {
            return Err(GlyphError::Schema {
                line: line_no,
                message: format!("image {} not found", resolved.display()),
            });
        }
        records.push(rec);
    }
    Ok(Manifest {
        records,
        base_dir: base,
    })
}

mod opt_char {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<char>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(c) => s.serialize_str(&c.to_string()),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<char>, D::Error> {
        let v: Option<String> = Option::deserialize(d)?;
        match v {
            None => Ok(None),
            Some(s) => {
                let mut it = s.chars();
                match (it.next(), it.next()) {
                    (Some(c), None) => Ok(Some(c)),
                    _ => Err(D::Error::custom(format!("category {s:?} is not a single character"))),
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, lines: &[&str]) -> PathBuf {
        fs::write(dir.join("img.pgm"), "P2\n1 1\n255\n0\n").unwrap();
        let p = dir.join("m.jsonl");
        fs::write(&p, lines.join("\n")).unwrap();
        p
    }

    #[test]
    fn obi_sized_counts() {
        // 1,781 categories; 77,064 samples spread 43 or 44 per category
        let records: Vec<ManifestRecord> = (0..77_064u32)
            .map(|i| {
                let c = char::from_u32(0x4E00 + i % 1781).unwrap();
                ManifestRecord {
                    id: format!("OBI-{i}"),
                    period: Period::Obi,
                    category: Some(c),
                    image_path: format!("{i}.png").into(),
                }
            })
            .collect();
        let m = Manifest::from_records(records).unwrap();
        let c = m.counts()[&Period::Obi];
        assert_eq!((c.categories, c.samples), (1781, 77_064));
        assert!(m.stats_tsv().lines().any(|l| l == "OBI\t1781\t77064"));
    }

    #[test]
    fn three_valid_lines() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            &[
                r#"{"id":"a","period":"OBI","category":"安","image_path":"img.pgm"}"#,
                r#"{"id":"b","period":"Bronze","category":null,"image_path":"img.pgm"}"#,
                r#"{"id":"c","period":"OBI","category":"字","image_path":"img.pgm"}"#,
            ],
        );
        let m = load_manifest(&p).unwrap();
        assert_eq!(m.len(), 3);
        let counts = m.counts();
        assert_eq!(
            counts[&Period::Obi],
            PeriodCounts {
                categories: 2,
                samples: 2
            }
        );
        assert_eq!(
            counts[&Period::Bronze],
            PeriodCounts {
                categories: 0,
                samples: 1
            }
        );
        assert_eq!(counts.values().map(|c| c.samples).sum::<usize>(), m.len());
    }

    #[test]
    fn unknown_period_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            &[
                r#"{"id":"a","period":"OBI","category":"安","image_path":"img.pgm"}"#,
                r#"{"id":"b","period":"Tang","category":"安","image_path":"img.pgm"}"#,
            ],
        );
        assert!(matches!(load_manifest(&p), Err(GlyphError::Schema { line: 2, .. })));
    }

    #[test]
    fn duplicate_and_missing_image() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            &[
                r#"{"id":"a","period":"OBI","category":"安","image_path":"img.pgm"}"#,
                r#"{"id":"a","period":"OBI","category":"安","image_path":"img.pgm"}"#,
            ],
        );
        assert!(matches!(
            load_manifest(&p),
            Err(GlyphError::DuplicateId { line: 2, .. })
        ));
        let p = write(
            dir.path(),
            &[r#"{"id":"a","period":"OBI","category":"安","image_path":"nope.pgm"}"#],
        );
        assert!(matches!(load_manifest(&p), Err(GlyphError::Schema { line: 1, .. })));
    }
}
