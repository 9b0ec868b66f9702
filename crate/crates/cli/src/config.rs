//! Run configuration: a sectioned `key = value` file (TOML syntax).
//!
//! ```toml
//! [data]
//! split_dir = "split"        # relative to this file
//! edge_attr = "edges.attr"   # only for model.edge_mode = "provided"
//!
//! [encode]
//! k = 512
//! strategy = "random"        # random | min_degree | max_degree
//! seed = 0
//!
//! [model]
//! hidden_dim = 256
//! edge_mode = "learned"      # none | learned | provided
//!
//! [train]
//! epochs = 200
//! seeds = [0, 1, 2]
//!
//! [output]
//! dir = "out"
//! ```
//!
//! Every key is checked; unknown keys and sections are rejected.

use std::fs;
use std::path::{Path, PathBuf};

use gdnn_core::{GdnnConfig, TargetKind, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Directory holding the five split files.
    pub split_dir: PathBuf,
    /// Edge attribute table, one `u v a_1 … a_d` line per training edge.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub edge_attr: Option<PathBuf>,
    /// Feature file read by `train` and written by `encode`; defaults to
    /// `features.txt` in the output directory.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub features: Option<PathBuf>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            split_dir: PathBuf::from("split"),
            edge_attr: None,
            features: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncodeConfig {
    pub k: usize,
    pub strategy: TargetKind,
    /// Seed for random target selection.
    pub seed: u64,
    /// Z-score each feature column.
    pub standardize: bool,
}

impl Default for EncodeConfig {
    fn default() -> Self {
        Self {
            k: gdnn_core::distance::DEFAULT_K,
            strategy: TargetKind::Random,
            seed: 0,
            standardize: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// When false, `wall_time` is written as 0 so that metrics files are
    /// byte-reproducible.
    pub record_wall_time: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            record_wall_time: true,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    pub encode: EncodeConfig,
    pub model: GdnnConfig,
    pub train: TrainConfig,
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let config: RunConfig = toml::from_str(text).map_err(|e| CliError::Config {
            path: origin.to_path_buf(),
            message: e.to_string().trim_end().to_string(),
        })?;
        config.validate().map_err(|e| CliError::Config {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
        Ok(config)
    }

    pub fn validate(&self) -> gdnn_core::Result<()> {
        if self.encode.k == 0 {
            return Err(gdnn_core::GdnnError::Config("encode.k must be at least 1".into()));
        }
        self.model.validate()?;
        self.train.validate()
    }

    /// Canonical text form, as stored in checkpoints.
    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Applies a `--seed` override: one training seed, and the same seed
    /// for target selection.
    pub fn override_seed(&mut self, seed: u64) {
        self.encode.seed = seed;
        self.train.seeds = vec![seed];
    }
}

/// A configuration plus the directory its relative paths refer to.
#[derive(Clone, Debug)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub base: PathBuf,
    pub path: PathBuf,
}

impl LoadedConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let config = RunConfig::parse(&text, path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self {
            config,
            base,
            path: path.to_path_buf(),
        })
    }

    /// Loads `path` (or the defaults, relative to the working directory)
    /// and applies the `--seed` and `--out` overrides.
    pub fn with_overrides(path: Option<&Path>, seed: Option<u64>, out: Option<&Path>) -> Result<Self> {
        let mut loaded = match path {
            Some(p) => Self::load(p)?,
            None => Self {
                config: RunConfig::default(),
                base: PathBuf::new(),
                path: PathBuf::from("<defaults>"),
            },
        };
        if let Some(s) = seed {
            loaded.config.override_seed(s);
        }
        if let Some(o) = out {
            loaded.config.output.dir = std::path::absolute(o).map_err(CliError::io(o))?;
        }
        Ok(loaded)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    pub fn split_dir(&self) -> PathBuf {
        self.resolve(&self.config.data.split_dir)
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.config.output.dir)
    }

    pub fn features_path(&self) -> PathBuf {
        match &self.config.data.features {
            Some(p) => self.resolve(p),
            None => self.output_dir().join("features.txt"),
        }
    }

    pub fn edge_attr_path(&self) -> Option<PathBuf> {
        self.config.data.edge_attr.as_deref().map(|p| self.resolve(p))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig> {
        RunConfig::parse(text, Path::new("test.toml"))
    }

    #[test]
    fn empty_file_gives_defaults() {
        let c = parse("").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.encode.k, 512);
        assert_eq!(c.train.seeds, (0..10).collect::<Vec<u64>>());
    }

    #[test]
    fn sections_override_fields() {
        let c = parse(
            "[encode]\nk = 32\nstrategy = \"min_degree\"\n[model]\nedge_mode = \"none\"\nupdate_rule = \"eq5\"\n[train]\nepochs = 3\n",
        )
        .unwrap();
        assert_eq!(c.encode.k, 32);
        assert_eq!(c.encode.strategy, TargetKind::MinDegree);
        assert_eq!(c.model.edge_mode, gdnn_core::EdgeMode::None);
        assert_eq!(c.model.update_rule, gdnn_core::UpdateRule::GatedSum);
        assert_eq!(c.train.epochs, 3);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for text in [
            "[train]\nepoch = 3\n",
            "[model]\nhiden_dim = 3\n",
            "[encode]\nkk = 3\n",
            "[data]\nsplit = \"x\"\n",
            "[output]\ndirectory = \"x\"\n",
            "[extra]\na = 1\n",
            "top = 1\n",
            "[model]\ninput_dim = 4\n",
        ] {
            let err = parse(text).unwrap_err();
            assert_eq!(err.exit_code(), 1, "{text}");
        }
    }

    #[test]
    fn invalid_values_are_rejected() {
        for text in ["[encode]\nk = 0\n", "[train]\nepochs = 0\n", "[model]\nnum_layers = 0\n", "[model]\ndropout = 1.0\n"] {
            assert!(parse(text).is_err(), "{text}");
        }
    }

    #[test]
    fn canonical_text_round_trips() {
        let mut c = RunConfig::default();
        c.data.edge_attr = Some(PathBuf::from("attr.tsv"));
        c.train.seeds = vec![4, 2];
        let text = c.to_text();
        assert_eq!(parse(&text).unwrap(), c);
        assert_eq!(parse(&text).unwrap().to_text(), text);
    }
}
