use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::bitmap::Bitmap;
use super::raster::{load_raster, write_pgm, DEFAULT_THRESHOLD};
use super::GlyphError;
use crate::decomposer::connected_components;
use crate::ids::Radical;

pub const STAMP_SIZE: usize = 32;

/// Radical stamps for one period style.
#[derive(Debug, Clone, PartialEq)]
pub struct RadicalAtlas {
    pub style: String,
    stamps: BTreeMap<Radical, Bitmap>,
}

impl RadicalAtlas {
    pub fn new(style: impl Into<String>) -> Self {
        RadicalAtlas {
            style: style.into(),
            stamps: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, label: Radical, stamp: Bitmap) -> Result<(), GlyphError> {
        if stamp.width() != STAMP_SIZE || stamp.height() != STAMP_SIZE {
            return Err(GlyphError::BadStamp {
                label: label.to_string(),
                reason: format!(
                    "{}x{} instead of {STAMP_SIZE}x{STAMP_SIZE}",
                    stamp.width(),
                    stamp.height()
                ),
            });
        }
        if stamp.is_empty() {
            return Err(GlyphError::BadStamp {
                label: label.to_string(),
                reason: "empty stamp".into(),
            });
        }
        self.stamps.insert(label, stamp);
        Ok(())
    }

    pub fn get(&self, label: &Radical) -> Option<&Bitmap> {
        self.stamps.get(label)
    }

    pub fn labels(&self) -> impl Iterator<Item = &Radical> {
        self.stamps.keys()
    }

    pub fn len(&self) -> usize {
        self.stamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stamps.is_empty()
    }

    /// Procedural stamps: a few thick, mutually connected strokes per label.
    pub fn generate<'a>(style: &str, labels: impl IntoIterator<Item = &'a Radical>, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut atlas = RadicalAtlas::new(style);
        for label in labels {
            let stamp = random_stamp(&mut rng);
            atlas.stamps.insert(label.clone(), stamp);
        }
        atlas
    }

    /// A later/earlier script style: every stamp gets a small random shear
    /// and offset, keeping the identity of each radical recognisable.
    pub fn evolve(&self, style: &str, strength: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = RadicalAtlas::new(style);
        for (label, stamp) in &self.stamps {
            let a = rng.gen_range(-strength..=strength);
            let b = rng.gen_range(-strength..=strength);
            let dx = rng.gen_range(-1i64..=1);
            let dy = rng.gen_range(-1i64..=1);
            let c = (STAMP_SIZE as f64 - 1.0) / 2.0;
            // halve the shear until the stroke stays in one piece
            let chosen = (0..4)
                .map(|k| {
                    let f = 0.5f64.powi(k);
                    Bitmap::from_fn(STAMP_SIZE, STAMP_SIZE, |x, y| {
                        let (xf, yf) = (x as f64, y as f64);
                        let sx = (xf - f * a * (yf - c)).round() as i64 - dx;
                        let sy = (yf - f * b * (xf - c)).round() as i64 - dy;
                        stamp.get_signed(sx, sy)
                    })
                })
                .find(|w| connected_components(w).len() == 1)
                .unwrap_or_else(|| stamp.clone());
            out.stamps.insert(label.clone(), chosen);
        }
        out
    }

    /// Loads `<dir>/index.tsv` (`label<TAB>file`) and the PGM stamps it names.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self, GlyphError> {
        let dir = dir.as_ref();
        let index = fs::read_to_string(dir.join("index.tsv"))?;
        let style = dir
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let mut atlas = RadicalAtlas::new(style);
        for (i, line) in index.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (label, file) = line.split_once('\t').ok_or_else(|| GlyphError::Schema {
                line: i + 1,
                message: "expected label<TAB>file".into(),
            })?;
            let label = Radical::from_token(label).map_err(|e| GlyphError::Schema {
                line: i + 1,
                message: e.to_string(),
            })?;
            let stamp = load_raster(dir.join(file))?.binarize(DEFAULT_THRESHOLD);
            atlas.insert(label, stamp)?;
        }
        Ok(atlas)
    }

    /// Writes stamps as `<n>.pgm` plus the index; labels live in the index
    /// since not every label is a safe file name.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(), GlyphError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let mut index = String::new();
        for (i, (label, stamp)) in self.stamps.iter().enumerate() {
            let file = format!("{i:04}.pgm");
            write_pgm(dir.join(&file), stamp)?;
            index.push_str(&format!("{}\t{file}\n", label.as_str()));
        }
        fs::write(dir.join("index.tsv"), index)?;
        Ok(())
    }
}

fn random_stamp(rng: &mut ChaCha8Rng) -> Bitmap {
    let mut b = Bitmap::new(STAMP_SIZE, STAMP_SIZE);
    let lo = 4i64;
    let hi = STAMP_SIZE as i64 - 5;
    let strokes = rng.gen_range(3..=4);
    let mut points: Vec<(i64, i64)> = Vec::new();
    for s in 0..strokes {
        let start = if s == 0 {
            (rng.gen_range(lo..=hi), rng.gen_range(lo..=hi))
        } else {
            points[rng.gen_range(0..points.len())]
        };
        let end = loop {
            let p = (rng.gen_range(lo..=hi), rng.gen_range(lo..=hi));
            if (p.0 - start.0).abs().max((p.1 - start.1).abs()) >= 10 {
                break p;
            }
        };
        for p in line_points(start, end) {
            points.push(p);
            for oy in -1..=1 {
                for ox in -1..=1 {
                    b.set((p.0 + ox) as usize, (p.1 + oy) as usize, true);
                }
            }
        }
    }
    b
}

/// Bresenham line, endpoints included.
fn line_points((x0, y0): (i64, i64), (x1, y1): (i64, i64)) -> Vec<(i64, i64)> {
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    let mut out = vec![(x, y)];
    while (x, y) != (x1, y1) {
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
        out.push((x, y));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(n: usize) -> Vec<Radical> {
        (0..n)
            .map(|i| Radical::new(char::from_u32(0x2F00 + i as u32).unwrap().to_string()).unwrap())
            .collect()
    }

    #[test]
    fn generated_stamps_are_connected_and_nonempty() {
        let ls = labels(20);
        let atlas = RadicalAtlas::generate("base", &ls, 7);
        assert_eq!(atlas.len(), 20);
        for l in &ls {
            let s = atlas.get(l).unwrap();
            assert!(!s.is_empty());
            assert_eq!(connected_components(s).len(), 1, "stamp {l} split");
        }
        assert_eq!(atlas, RadicalAtlas::generate("base", &ls, 7));
    }

    #[test]
    fn evolved_atlas_keeps_labels() {
        let ls = labels(5);
        let base = RadicalAtlas::generate("base", &ls, 1);
        let ev = base.evolve("later", 0.15, 2);
        assert_eq!(ev.labels().collect::<Vec<_>>(), base.labels().collect::<Vec<_>>());
        assert_ne!(ev, base);
    }

    #[test]
    fn save_load_round_trip() {
        let ls = labels(3);
        let base = RadicalAtlas::generate("base", &ls, 3);
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path().join("base");
        base.save(&d).unwrap();
        let back = RadicalAtlas::load(&d).unwrap();
        assert_eq!(back, base);
    }

    #[test]
    fn wrong_size_stamp_rejected() {
        let mut a = RadicalAtlas::new("x");
        let r = Radical::new("女").unwrap();
        assert!(a.insert(r.clone(), Bitmap::from_fn(16, 16, |_, _| true)).is_err());
        assert!(a.insert(r, Bitmap::new(32, 32)).is_err());
    }
}
