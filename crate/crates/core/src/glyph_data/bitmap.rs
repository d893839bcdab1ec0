use std::fmt;

use serde::{Deserialize, Serialize};

/// Tight, inclusive pixel bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[usize; 4]", into = "[usize; 4]")]
pub struct BBox {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl BBox {
    pub fn new(x0: usize, y0: usize, x1: usize, y1: usize) -> Self {
        debug_assert!(x0 <= x1 && y0 <= y1);
        BBox { x0, y0, x1, y1 }
    }

    pub fn width(&self) -> usize {
        self.x1 - self.x0 + 1
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0 + 1
    }

    pub fn area(&self) -> usize {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x0 + self.x1) as f64 / 2.0, (self.y0 + self.y1) as f64 / 2.0)
    }

    pub fn contains_point(&self, x: usize, y: usize) -> bool {
        (self.x0..=self.x1).contains(&x) && (self.y0..=self.y1).contains(&y)
    }

    pub fn union(&self, other: &BBox) -> BBox {
        BBox {
            x0: self.x0.min(other.x0),
            y0: self.y0.min(other.y0),
            x1: self.x1.max(other.x1),
            y1: self.y1.max(other.y1),
        }
    }

    pub fn intersection(&self, other: &BBox) -> Option<BBox> {
        let x0 = self.x0.max(other.x0);
        let y0 = self.y0.max(other.y0);
        let x1 = self.x1.min(other.x1);
        let y1 = self.y1.min(other.y1);
        (x0 <= x1 && y0 <= y1).then_some(BBox { x0, y0, x1, y1 })
    }

    /// Overlap of the x-intervals, in pixels.
    pub fn x_overlap(&self, other: &BBox) -> usize {
        (self.x1.min(other.x1) + 1).saturating_sub(self.x0.max(other.x0))
    }

    pub fn y_overlap(&self, other: &BBox) -> usize {
        (self.y1.min(other.y1) + 1).saturating_sub(self.y0.max(other.y0))
    }
}

impl From<[usize; 4]> for BBox {
    fn from(v: [usize; 4]) -> Self {
        BBox {
            x0: v[0],
            y0: v[1],
            x1: v[2],
            y1: v[3],
        }
    }
}

impl From<BBox> for [usize; 4] {
    fn from(b: BBox) -> Self {
        [b.x0, b.y0, b.x1, b.y1]
    }
}

/// Row-major binary raster; `true` is foreground (ink).
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Bitmap {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl Bitmap {
    pub fn new(width: usize, height: usize) -> Self {
        Bitmap {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Bitmap { width, height, data }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<bool>) -> Self {
        assert_eq!(data.len(), width * height, "bitmap data length");
        Bitmap { width, height, data }
    }

    /// Parses rows of `#`/`.` characters; handy in tests.
    pub fn from_ascii(rows: &[&str]) -> Self {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.chars().count());
        let mut data = Vec::with_capacity(width * height);
        for r in rows {
            assert_eq!(r.chars().count(), width, "ragged ascii bitmap");
            data.extend(r.chars().map(|c| c == '#'));
        }
        Bitmap { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    /// Out-of-range coordinates read as background.
    #[inline]
    pub fn get_signed(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height && self.get(x as usize, y as usize)
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    pub fn foreground(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| (i % self.width, i / self.width))
    }

    pub fn bbox(&self) -> Option<BBox> {
        let mut it = self.foreground();
        let (x, y) = it.next()?;
        let mut b = BBox::new(x, y, x, y);
        for (x, y) in it {
            b.x0 = b.x0.min(x);
            b.x1 = b.x1.max(x);
            b.y0 = b.y0.min(y);
            b.y1 = b.y1.max(y);
        }
        Some(b)
    }

    pub fn crop(&self, b: &BBox) -> Bitmap {
        Bitmap::from_fn(b.width(), b.height(), |x, y| self.get(b.x0 + x, b.y0 + y))
    }

    /// Copies `src` with its top-left corner at (x, y), OR-ing into self; clips.
    pub fn blit_or(&mut self, src: &Bitmap, x: i64, y: i64) {
        for (sx, sy) in src.foreground() {
            let tx = x + sx as i64;
            let ty = y + sy as i64;
            if tx >= 0 && ty >= 0 && (tx as usize) < self.width && (ty as usize) < self.height {
                self.set(tx as usize, ty as usize, true);
            }
        }
    }

    /// Translates content; pixels pushed off the canvas are lost.
    pub fn shifted(&self, dx: i64, dy: i64) -> Bitmap {
        Bitmap::from_fn(self.width, self.height, |x, y| {
            self.get_signed(x as i64 - dx, y as i64 - dy)
        })
    }

    pub fn and(&self, other: &Bitmap) -> Bitmap {
        self.zip(other, |a, b| a && b)
    }

    pub fn or(&self, other: &Bitmap) -> Bitmap {
        self.zip(other, |a, b| a || b)
    }

    pub fn and_not(&self, other: &Bitmap) -> Bitmap {
        self.zip(other, |a, b| a && !b)
    }

    fn zip(&self, other: &Bitmap, f: impl Fn(bool, bool) -> bool) -> Bitmap {
        assert_eq!(
            (self.width, self.height),
            (other.width, other.height),
            "bitmap dimensions"
        );
        Bitmap {
            width: self.width,
            height: self.height,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    /// Resizes to `w`×`h`. Axes that grow use nearest-neighbour sampling;
    /// axes that shrink OR together every source pixel landing in a target
    /// cell. Either way each source row/column reaches at least one target
    /// row/column, so the tight bounding box always spans the full output.
    pub fn resample(&self, w: usize, h: usize) -> Bitmap {
        assert!(w > 0 && h > 0, "resample to empty size");
        let xs = axis_sources(self.width, w);
        let ys = axis_sources(self.height, h);
        Bitmap::from_fn(w, h, |x, y| {
            let (xa, xb) = xs[x];
            let (ya, yb) = ys[y];
            (ya..yb).any(|sy| (xa..xb).any(|sx| self.get(sx, sy)))
        })
    }

    pub fn to_ascii(&self) -> String {
        let mut s = String::with_capacity((self.width + 1) * self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                s.push(if self.get(x, y) { '#' } else { '.' });
            }
            s.push('\n');
        }
        s
    }
}

/// Half-open source range feeding each target index along one axis.
fn axis_sources(src: usize, dst: usize) -> Vec<(usize, usize)> {
    if dst >= src {
        (0..dst)
            .map(|x| {
                let s = (((2 * x + 1) * src) / (2 * dst)).min(src - 1);
                (s, s + 1)
            })
            .collect()
    } else {
        let mut ranges = vec![(usize::MAX, 0usize); dst];
        for s in 0..src {
            let t = s * dst / src;
            let r = &mut ranges[t];
            r.0 = r.0.min(s);
            r.1 = r.1.max(s + 1);
        }
        ranges
    }
}

impl fmt::Debug for Bitmap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Bitmap {}x{} ({} fg)", self.width, self.height, self.count())?;
        if self.width * self.height <= 64 * 64 {
            f.write_str(&self.to_ascii())?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn bbox_metrics() {
        let a = BBox::new(0, 0, 30, 63);
        let b = BBox::new(34, 0, 63, 63);
        assert_eq!(a.x_overlap(&b), 0);
        assert_eq!(a.y_overlap(&b), 64);
        assert_eq!(a.width(), 31);
        assert!(a.intersection(&b).is_none());
    }

    #[test]
    fn resample_identity() {
        let b = Bitmap::from_ascii(&["#..", ".#.", "..#"]);
        assert_eq!(b.resample(3, 3), b);
    }

    #[test]
    fn single_pixel_fills_canvas() {
        let b = Bitmap::from_ascii(&["#"]);
        assert_eq!(b.resample(64, 64).count(), 64 * 64);
    }

    proptest! {
        #[test]
        fn resample_keeps_extent(w in 1usize..40, h in 1usize..40, tw in 1usize..70, th in 1usize..70, seed in any::<u64>()) {
            let b = Bitmap::from_fn(w, h, |x, y| (seed >> ((x * 7 + y * 13) % 64)) & 1 == 1 || (x == 0 && y == h - 1) || (x == w - 1 && y == 0));
            let r = b.resample(tw, th);
            prop_assert_eq!(r.bbox(), Some(BBox::new(0, 0, tw - 1, th - 1)));
        }
    }
}
