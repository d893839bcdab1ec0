//! Run configuration: a TOML file whose values command-line flags override.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotator::{WeightMode, DEFAULT_K};
use crate::decomposer::DEFAULT_MERGE_DIST;
use crate::embedder::DEFAULT_TAU;
use crate::glyph_data::{CANVAS, DEFAULT_THRESHOLD};
use crate::predictor::{PredictParams, DEFAULT_FALLBACK_PIECE_AREA};
use crate::reconstructor::DEFAULT_FUZZ;

/// On-disk formats and the schema version each is written with.
pub const SCHEMA_VERSIONS: &[(&str, u32)] = &[
    ("dictionary.tsv", 1),
    ("manifest.jsonl", 1),
    ("atlas index.tsv", 1),
    ("masks.json", 1),
    ("projection.bin", 1),
    ("store.jsonl", 1),
    ("filter_log.jsonl", 1),
    ("predictions.jsonl", 1),
    ("candidates.jsonl", 1),
    ("holdout.json", 1),
    ("report.json", 1),
    ("config.toml", 1),
];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },
    #[error("{field} = {value} is outside {range}")]
    OutOfRange {
        field: &'static str,
        value: String,
        range: &'static str,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub dict: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub atlas: Option<PathBuf>,
    pub store: Option<PathBuf>,
    pub projection: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub merge_dist: f64,
    pub max_piece_area: usize,
    pub tau: f64,
    pub knn_k: usize,
    pub weight_mode: WeightMode,
    pub fuzz: f64,
    pub seed: u64,
    pub threshold: u8,
    pub relabel: bool,
    pub chain: bool,
    pub paths: Paths,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            merge_dist: DEFAULT_MERGE_DIST,
            max_piece_area: DEFAULT_FALLBACK_PIECE_AREA,
            tau: DEFAULT_TAU,
            knn_k: DEFAULT_K,
            weight_mode: WeightMode::default(),
            fuzz: DEFAULT_FUZZ,
            seed: 0,
            threshold: DEFAULT_THRESHOLD,
            relabel: true,
            chain: false,
            paths: Paths::default(),
        }
    }
}

fn check(ok: bool, field: &'static str, value: impl ToString, range: &'static str) -> Result<(), ConfigError> {
    if ok {
        Ok(())
    } else {
        Err(ConfigError::OutOfRange {
            field,
            value: value.to_string(),
            range,
        })
    }
}

impl Config {
    pub fn from_toml(text: &str, path: impl Into<PathBuf>) -> Result<Self, ConfigError> {
        let cfg: Config = toml::from_str(text).map_err(|source| ConfigError::Parse {
            path: path.into(),
            source,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        Self::from_toml(&fs::read_to_string(path)?, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let side = CANVAS as f64;
        check(
            self.merge_dist.is_finite() && (0.0..=side * 2f64.sqrt()).contains(&self.merge_dist),
            "merge_dist",
            self.merge_dist,
            "[0, 90.5]",
        )?;
        check(
            (1..=CANVAS * CANVAS).contains(&self.max_piece_area),
            "max_piece_area",
            self.max_piece_area,
            "[1, 4096]",
        )?;
        check(
            self.tau.is_finite() && self.tau > 0.0 && self.tau <= 10.0,
            "tau",
            self.tau,
            "(0, 10]",
        )?;
        check((1..=10_000).contains(&self.knn_k), "knn_k", self.knn_k, "[1, 10000]")?;
        check(
            self.fuzz.is_finite() && (0.0..=1.0).contains(&self.fuzz),
            "fuzz",
            self.fuzz,
            "[0, 1]",
        )?;
        Ok(())
    }

    pub fn predict_params(&self) -> PredictParams {
        PredictParams {
            merge_dist: self.merge_dist,
            max_piece_area: self.max_piece_area,
            k: self.knn_k,
            mode: self.weight_mode,
            relabel: self.relabel,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        Config::default().validate().unwrap();
        assert_eq!(Config::default().knn_k, 15);
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg = Config::from_toml(
            "knn_k = 5\nweight_mode = \"literal\"\n[paths]\ndict = \"d.tsv\"\n",
            "c.toml",
        )
        .unwrap();
        assert_eq!(cfg.knn_k, 5);
        assert_eq!(cfg.weight_mode, WeightMode::Literal);
        assert_eq!(cfg.paths.dict.as_deref(), Some(Path::new("d.tsv")));
        assert_eq!(cfg.fuzz, DEFAULT_FUZZ);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(
            Config::from_toml("knn = 5\n", "c.toml"),
            Err(ConfigError::Parse { .. })
        ));
        assert!(matches!(
            Config::from_toml("[paths]\nfoo = \"x\"\n", "c.toml"),
            Err(ConfigError::Parse { .. })
        ));
    }

    #[test]
    fn ranges() {
        for bad in [
            "knn_k = 0",
            "fuzz = 1.5",
            "tau = 0.0",
            "merge_dist = -1.0",
            "max_piece_area = 0",
        ] {
            assert!(
                matches!(Config::from_toml(bad, "c.toml"), Err(ConfigError::OutOfRange { .. })),
                "{bad}"
            );
        }
    }

    #[test]
    fn toml_round_trip() {
        let cfg = Config {
            seed: 9,
            paths: Paths {
                out: Some("out".into()),
                ..Default::default()
            },
            ..Default::default()
        };
        assert_eq!(Config::from_toml(&cfg.to_toml(), "c.toml").unwrap(), cfg);
    }
}
