//! Engine configuration, stored as TOML.

use std::path::{Path, PathBuf};

use entri_core::classifier::TrainParams;
use entri_core::ensemble::{EnsembleConfig, LevelConfig, LevelSet, MetaConfig, ALPHA_GRID};
use entri_core::submodel::{Architecture, FeatureConfig};
use entri_core::vteg::heatmap::OcclusionConfig;
use entri_core::world::{reference_world, SyntheticWorldSpec};
use entri_core::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::CLI;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineConfig {
    /// Seeds the synthetic generator; overrides the world's own seed.
    pub rng_seed: u64,
    /// Default destination of `train`.
    pub output_dir: PathBuf,
    pub dataset: DatasetConfig,
    pub ensemble: EnsembleConfig,
    /// Occlusion window and stride; derived from the image size when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub occlusion: Option<OcclusionConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    /// Dataset directory; written by `generate`, read by the other commands.
    pub path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n_per_category: usize,
    /// Train, validation and test fractions.
    pub split: [f64; 3],
    pub world: SyntheticWorldSpec,
}

fn level(seed: u64) -> LevelConfig {
    LevelConfig {
        architectures: vec![Architecture { hidden: vec![64], seed }, Architecture { hidden: vec![128], seed: seed + 1 }],
        train: TrainParams { epochs: 60, batch_size: 16, learning_rate: 0.05, rng_seed: 7, weight_decay: 0.0 },
    }
}

impl EngineConfig {
    /// The shipped reference run: eight categories, 100 scenes each, two
    /// discriminators per level.
    pub fn reference() -> Self {
        let world = reference_world();
        Self {
            rng_seed: world.rng_seed,
            output_dir: "runs/reference/bundle".into(),
            dataset: DatasetConfig {
                path: "runs/reference/dataset".into(),
                synthetic: Some(SyntheticConfig { n_per_category: 100, split: [0.5, 0.3, 0.2], world }),
            },
            ensemble: EnsembleConfig {
                active_levels: LevelSet::ALL,
                features: FeatureConfig::default(),
                low: level(10),
                mid: level(20),
                high: level(30),
                meta: MetaConfig {
                    hidden_multiplier: 4,
                    seed: 99,
                    train: TrainParams { epochs: 300, batch_size: 16, learning_rate: 0.1, rng_seed: 5, weight_decay: 0.0 },
                    alpha_grid: ALPHA_GRID.to_vec(),
                },
            },
            occlusion: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::config(CLI, format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(CLI, format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::config(CLI, format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| Error::config(CLI, format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()?).map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        self.ensemble.validate()?;
        if let Some(o) = self.occlusion {
            if o.window == 0 || o.stride == 0 {
                return Err(Error::config(CLI, "occlusion window and stride must be positive"));
            }
        }
        if let Some(s) = &self.dataset.synthetic {
            self.world_with_seed(s).validate()?;
        }
        Ok(())
    }

    fn world_with_seed(&self, s: &SyntheticConfig) -> SyntheticWorldSpec {
        SyntheticWorldSpec { rng_seed: self.rng_seed, ..s.world.clone() }
    }

    /// Synthetic settings with the engine seed applied.
    pub fn synthetic(&self) -> Result<(SyntheticWorldSpec, usize, [f64; 3])> {
        let s = self
            .dataset
            .synthetic
            .as_ref()
            .ok_or_else(|| Error::config(CLI, "config has no [dataset.synthetic] section to generate from"))?;
        Ok((self.world_with_seed(s), s.n_per_category, s.split))
    }
}
