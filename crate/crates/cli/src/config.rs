//! TOML run configuration.
//!
//! Every key has a default, unknown keys are rejected, and relative paths
//! are resolved against the directory holding the config file.

use std::fs;
use std::path::{Path, PathBuf};

use exal::data_io::{PairSpec, DEFAULT_IMAGE_SIZE};
use exal::game::GameConfig;
use exal::learner::TrainConfig;
use exal::swarm::{SwarmConfig, Variant};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub data: DataSection,
    pub swarm: SwarmSection,
    pub train: TrainSection,
    pub game: GameSection,
    pub output: OutputSection,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Synthetic,
    Idx,
    ImageDir,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub source: Source,
    /// Pairs as `"positive:negative"`.
    pub pairs: Vec<String>,
    pub samples_per_class: usize,
    pub train_fraction: f64,
    /// IDX image file (optionally gzipped).
    pub images: PathBuf,
    /// IDX label file (optionally gzipped).
    pub labels: PathBuf,
    /// Image-directory root; one subdirectory per class.
    pub root: PathBuf,
    /// Class subdirectories to load; empty means every subdirectory.
    pub classes: Vec<String>,
    pub image_size: usize,
    pub synthetic_per_class: usize,
    pub synthetic_height: usize,
    pub synthetic_width: usize,
    pub synthetic_separation: f64,
    pub synthetic_noise: f64,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            source: Source::Synthetic,
            pairs: vec!["1:0".into()],
            samples_per_class: 1000,
            train_fraction: 0.8,
            images: PathBuf::from("data/mnist/images-idx3-ubyte.gz"),
            labels: PathBuf::from("data/mnist/labels-idx1-ubyte.gz"),
            root: PathBuf::from("data/images"),
            classes: Vec::new(),
            image_size: DEFAULT_IMAGE_SIZE,
            synthetic_per_class: 200,
            synthetic_height: 16,
            synthetic_width: 16,
            synthetic_separation: 0.5,
            synthetic_noise: 0.15,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SwarmSection {
    pub particles: usize,
    pub iterations: usize,
    pub variant: String,
    pub beta: f64,
    pub mu: f64,
    pub c1: f64,
    pub c2: f64,
    pub clip_velocity: bool,
    pub early_stop: bool,
    /// Only read when `early_stop` is set.
    pub early_stop_fitness: f64,
}

impl Default for SwarmSection {
    fn default() -> Self {
        let d = SwarmConfig::default();
        Self {
            particles: d.particles,
            iterations: d.max_iterations,
            variant: d.variant.name().into(),
            beta: d.beta,
            mu: d.mu,
            c1: d.c1,
            c2: d.c2,
            clip_velocity: d.clip_velocity,
            early_stop: false,
            early_stop_fitness: -1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        Self {
            epochs: d.epochs,
            batch_size: d.batch_size,
            learning_rate: d.learning_rate,
            momentum: d.momentum,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GameSection {
    pub bounds_halfwidth: f64,
    pub scale: f64,
}

impl Default for GameSection {
    fn default() -> Self {
        Self {
            bounds_halfwidth: 0.1,
            scale: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Triptychs written per class of each pair.
    pub images_per_class: usize,
    /// Fill the `runtime_seconds` CSV column. Off by default so that reruns
    /// produce identical tables.
    pub record_runtime: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            images_per_class: 1,
            record_runtime: false,
        }
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Reads `path` and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut cfg.data.images,
            &mut cfg.data.labels,
            &mut cfg.data.root,
            &mut cfg.output.dir,
        ] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn variant(&self) -> Result<Variant, CliError> {
        self.swarm
            .variant
            .parse()
            .map_err(|e: exal::Error| CliError::Config(format!("swarm.variant: {e}")))
    }

    pub fn pairs(&self) -> Result<Vec<(String, String)>, CliError> {
        self.data.pairs.iter().map(|p| parse_pair(p)).collect()
    }

    pub fn pair_template(&self) -> PairSpec {
        PairSpec {
            samples_per_class: self.data.samples_per_class,
            train_fraction: self.data.train_fraction,
            ..PairSpec::new(1, 0)
        }
    }

    pub fn game(&self) -> Result<GameConfig, CliError> {
        let s = &self.swarm;
        let t = &self.train;
        let cfg = GameConfig {
            swarm: SwarmConfig {
                particles: s.particles,
                beta: s.beta,
                mu: s.mu,
                c1: s.c1,
                c2: s.c2,
                max_iterations: s.iterations,
                variant: self.variant()?,
                seed: self.seed,
                clip_velocity: s.clip_velocity,
                target_fitness: s.early_stop.then_some(s.early_stop_fitness),
            },
            train: TrainConfig {
                epochs: t.epochs,
                batch_size: t.batch_size,
                learning_rate: t.learning_rate,
                momentum: t.momentum,
                seed: self.seed,
            },
            bounds_halfwidth: self.game.bounds_halfwidth,
            scale: self.game.scale,
            seed: self.seed,
        };
        cfg.validate()?;
        self.pair_template().validate()?;
        Ok(cfg)
    }
}

/// `"a:b"` into `("a", "b")`.
pub fn parse_pair(text: &str) -> Result<(String, String), CliError> {
    match text.split_once(':') {
        Some((p, n)) if !p.trim().is_empty() && !n.trim().is_empty() => {
            Ok((p.trim().to_string(), n.trim().to_string()))
        }
        _ => Err(CliError::Config(format!(
            "data.pairs: {text:?} is not of the form positive:negative"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_all_defaults() {
        let cfg = Config::parse("").unwrap();
        assert_eq!(cfg, Config::default());
        let game = cfg.game().unwrap();
        assert_eq!(game.swarm.particles, 20);
        assert_eq!(game.swarm.target_fitness, None);
        assert_eq!(game.bounds_halfwidth, 0.1);
    }

    #[test]
    fn sections_override_defaults() {
        let cfg = Config::parse(
            "seed = 9\n[swarm]\nparticles = 4\nvariant = \"MPSO\"\n[data]\npairs = [\"2:8\", \"4:9\"]\n",
        )
        .unwrap();
        let game = cfg.game().unwrap();
        assert_eq!(game.seed, 9);
        assert_eq!(game.swarm.particles, 4);
        assert_eq!(game.swarm.variant, Variant::Mpso);
        assert_eq!(cfg.pairs().unwrap()[1], ("4".to_string(), "9".to_string()));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = Config::parse("[swarm]\nparticle = 3\n").unwrap_err().to_string();
        assert!(err.contains("particle"), "{err}");
        assert!(Config::parse("colour = 1\n").is_err());
    }

    #[test]
    fn invalid_values_name_the_key() {
        let cfg = Config::parse("[game]\nscale = -1.0\n").unwrap();
        assert!(cfg.game().unwrap_err().to_string().contains("game.scale"));
        let cfg = Config::parse("[swarm]\nvariant = \"ga\"\n").unwrap();
        assert!(cfg.game().unwrap_err().to_string().contains("swarm.variant"));
    }

    #[test]
    fn pair_syntax() {
        assert_eq!(parse_pair(" VBA : VBKrypt").unwrap(), ("VBA".into(), "VBKrypt".into()));
        assert!(parse_pair("2-8").is_err());
        assert!(parse_pair(":8").is_err());
    }

    #[test]
    fn snapshot_has_no_nulls() {
        let json = serde_json::to_string(&Config::default()).unwrap();
        assert!(!json.contains("null"));
    }
}
