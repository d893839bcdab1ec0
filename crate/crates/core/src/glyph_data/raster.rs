use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::bitmap::Bitmap;
use super::GlyphError;

/// Working resolution of every normalized glyph.
pub const CANVAS: usize = 64;
/// Largest accepted input raster side.
pub const MAX_INPUT_SIDE: usize = 512;
pub const DEFAULT_THRESHOLD: u8 = 128;

/// Script periods, ordered from oldest to newest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Period {
    #[serde(rename = "OBI")]
    Obi,
    Bronze,
    WarringStates,
    Seal,
    Clerical,
    Kangxi,
    Regular,
}

impl Period {
    pub const ALL: [Period; 7] = [
        Period::Obi,
        Period::Bronze,
        Period::WarringStates,
        Period::Seal,
        Period::Clerical,
        Period::Kangxi,
        Period::Regular,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Period::Obi => "OBI",
            Period::Bronze => "Bronze",
            Period::WarringStates => "WarringStates",
            Period::Seal => "Seal",
            Period::Clerical => "Clerical",
            Period::Kangxi => "Kangxi",
            Period::Regular => "Regular",
        }
    }
}

impl fmt::Display for Period {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Period {
    type Err = GlyphError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Period::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| GlyphError::UnknownPeriod(s.to_string()))
    }
}

/// 8-bit grayscale raster as read from disk; 0 is black ink.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayRaster {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayRaster {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, GlyphError> {
        if width == 0 || height == 0 || pixels.len() != width * height {
            return Err(GlyphError::BadRaster(format!(
                "{}x{} raster with {} pixels",
                width,
                height,
                pixels.len()
            )));
        }
        if width > MAX_INPUT_SIDE || height > MAX_INPUT_SIDE {
            return Err(GlyphError::TooLarge { width, height });
        }
        Ok(GrayRaster { width, height, pixels })
    }

    pub fn blank(width: usize, height: usize) -> Self {
        GrayRaster {
            width,
            height,
            pixels: vec![255; width * height],
        }
    }

    pub fn from_bitmap(b: &Bitmap) -> Self {
        GrayRaster {
            width: b.width(),
            height: b.height(),
            pixels: b.data().iter().map(|&fg| if fg { 0 } else { 255 }).collect(),
        }
    }

    pub fn binarize(&self, threshold: u8) -> Bitmap {
        Bitmap::from_vec(
            self.width,
            self.height,
            self.pixels.iter().map(|&v| v < threshold).collect(),
        )
    }
}

/// One script sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Glyph {
    pub id: String,
    pub period: Period,
    /// Known modern character; `None` for undeciphered samples.
    pub category: Option<char>,
    pub bitmap: Bitmap,
}

/// Binarizes, crops to the ink bounding box, scales the longer side to the
/// canvas, and centres the result on a square 64×64 canvas.
pub fn normalize(raw: &GrayRaster, threshold: u8) -> Result<Bitmap, GlyphError> {
    normalize_bitmap(&raw.binarize(threshold))
}

pub fn normalize_bitmap(bin: &Bitmap) -> Result<Bitmap, GlyphError> {
    let bb = bin.bbox().ok_or(GlyphError::BlankImage)?;
    let cropped = bin.crop(&bb);
    let (w, h) = (cropped.width(), cropped.height());
    let long = w.max(h);
    let scale = |v: usize| ((v * CANVAS + long / 2) / long).clamp(1, CANVAS);
    let (sw, sh) = if w >= h { (CANVAS, scale(h)) } else { (scale(w), CANVAS) };
    let scaled = cropped.resample(sw, sh);
    let mut out = Bitmap::new(CANVAS, CANVAS);
    out.blit_or(&scaled, ((CANVAS - sw) / 2) as i64, ((CANVAS - sh) / 2) as i64);
    Ok(out)
}

pub fn load_raster(path: impl AsRef<Path>) -> Result<GrayRaster, GlyphError> {
    let path = path.as_ref();
    let img = image::open(path)
        .map_err(|e| GlyphError::Image(format!("{}: {e}", path.display())))?
        .to_luma8();
    let (w, h) = img.dimensions();
    GrayRaster::new(w as usize, h as usize, img.into_raw())
}

/// Plain-text PGM (P2), one raster row per line.
pub fn pgm_p2(raster: &GrayRaster) -> String {
    let mut s = format!("P2\n{} {}\n255\n", raster.width, raster.height);
    for row in raster.pixels.chunks(raster.width) {
        let line: Vec<String> = row.iter().map(u8::to_string).collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
    s
}

pub fn write_pgm(path: impl AsRef<Path>, bitmap: &Bitmap) -> Result<(), GlyphError> {
    let mut f = fs::File::create(path)?;
    f.write_all(pgm_p2(&GrayRaster::from_bitmap(bitmap)).as_bytes())?;
    Ok(())
}

/// Reads an image file and normalizes it.
pub fn load_glyph_bitmap(path: impl AsRef<Path>, threshold: u8) -> Result<Bitmap, GlyphError> {
    normalize(&load_raster(path)?, threshold)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blank_image_rejected() {
        let r = GrayRaster::blank(100, 100);
        assert!(matches!(normalize(&r, 128), Err(GlyphError::BlankImage)));
    }

    #[test]
    fn single_pixel_fills() {
        let mut r = GrayRaster::blank(10, 10);
        r.pixels[37] = 0;
        let b = normalize(&r, 128).unwrap();
        assert_eq!((b.width(), b.height()), (64, 64));
        assert_eq!(b.count(), 64 * 64);
    }

    #[test]
    fn wide_content_is_padded() {
        // 200 wide, 100 tall with a 160×40 ink rectangle
        let mut r = GrayRaster::blank(200, 100);
        for y in 30..70 {
            for x in 20..180 {
                r.pixels[y * 200 + x] = 10;
            }
        }
        let b = normalize(&r, 128).unwrap();
        let bb = b.bbox().unwrap();
        assert_eq!((bb.width(), bb.height()), (64, 16));
        assert_eq!(bb.y0, 24);
    }

    #[test]
    fn normalize_idempotent_on_output() {
        let mut r = GrayRaster::blank(37, 91);
        for (i, p) in r.pixels.iter_mut().enumerate() {
            if (i * 2654435761usize).is_multiple_of(7) {
                *p = 0;
            }
        }
        let once = normalize(&r, 128).unwrap();
        let twice = normalize_bitmap(&once).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn oversize_raster_rejected() {
        assert!(matches!(
            GrayRaster::new(513, 2, vec![0; 1026]),
            Err(GlyphError::TooLarge { .. })
        ));
    }

    #[test]
    fn period_order_and_names() {
        assert!(Period::Obi < Period::Bronze && Period::Kangxi < Period::Regular);
        assert_eq!("obi".parse::<Period>().unwrap(), Period::Obi);
        assert!("Tang".parse::<Period>().is_err());
        assert_eq!(serde_json::to_string(&Period::Obi).unwrap(), "\"OBI\"");
    }

    #[test]
    fn pgm_round_trip_via_image() {
        let b = Bitmap::from_fn(64, 64, |x, y| (x + y) % 5 == 0);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.pgm");
        write_pgm(&p, &b).unwrap();
        let back = load_raster(&p).unwrap().binarize(128);
        assert_eq!(back, b);
    }
}
