use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::attacks::{FmConfig, TulConfig, MIN_PTS};
use crate::baselines::{Mechanism, NoiseConfig};
use crate::catcrt::CriticConfig;
use crate::catgen::{GeneratorConfig, MatchCost};
use crate::kama::DEFAULT_K;
use crate::mobility::GridSystem;
use crate::provenance::config_hash;
use crate::train::TrainConfig;
use crate::{Error, Result};

use super::checkins::DEFAULT_DECAY_CELLS;
use super::world::SyntheticWorldSpec;

/// Dataset column names in report order; `raw` comes first.
pub const COLUMNS: [&str; 7] = ["raw", "rp", "gg", "ldp", "tdp", "tka", "cats"];

/// Everything one pipeline run depends on. Parsed from `key = value`
/// lines; `#` starts a comment. Defaults are a desk-scale world.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub grid: GridSystem,
    /// Raw trajectory CSV; the synthetic world is generated when absent.
    pub input: Option<PathBuf>,
    pub world: SyntheticWorldSpec,
    pub k: usize,
    pub clusters: Option<usize>,
    pub sample_size: usize,
    pub mechanisms: Vec<String>,
    pub noise: NoiseConfig,
    pub generator: GeneratorConfig,
    pub critic: CriticConfig,
    pub train: TrainConfig,
    /// Pretrained generator parameters; training is skipped when set.
    pub checkpoint: Option<PathBuf>,
    pub tul: TulConfig,
    pub fm: FmConfig,
    pub hlc_min_pts: usize,
    pub decay_cells: f64,
    pub reconstruct_users: usize,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let hours = 24;
        PipelineConfig {
            grid: GridSystem {
                lat_min: 43.0,
                lat_max: 43.16,
                lon_min: -89.5,
                lon_max: -89.34,
                cells_per_side: 16,
                hours_per_day: hours,
            },
            input: None,
            world: SyntheticWorldSpec::default(),
            k: DEFAULT_K,
            clusters: None,
            sample_size: 40,
            mechanisms: COLUMNS[1..].iter().map(|s| s.to_string()).collect(),
            noise: NoiseConfig::new(Mechanism::Rp, 0),
            generator: GeneratorConfig {
                hours,
                encoding_dim: 16,
                heads: 8,
                sample_size: 40,
                match_cost: MatchCost::Hidden,
                temperature: 1.0,
            },
            critic: CriticConfig {
                hours,
                encoding_dim: 16,
                heads: 8,
                conv_channels: 8,
                cond_dim: 16,
                head_hidden: 32,
            },
            train: TrainConfig {
                batch: 8,
                ..TrainConfig::default()
            },
            checkpoint: None,
            tul: TulConfig {
                embedding_dim: 32,
                hidden: 32,
                ..TulConfig::default()
            },
            fm: FmConfig::default(),
            hlc_min_pts: MIN_PTS,
            decay_cells: DEFAULT_DECAY_CELLS,
            reconstruct_users: 20,
            seed: 0,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::ConfigInvalid(format!("bad value '{value}' for '{key}'")))
}

fn opt_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

impl PipelineConfig {
    pub fn parse_text(source: &str, text: &str) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse {
                path: source.to_string(),
                line: i + 1,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected 'key = value', got '{line}'")))?;
            cfg.set(key.trim(), value.trim()).map_err(|e| err(e.to_string()))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_text(&path.display().to_string(), &text)
    }

    /// Sets one key. Hours and sample size are shared by the generator,
    /// critic and grid.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "grid.lat_min" => self.grid.lat_min = parse(key, value)?,
            "grid.lat_max" => self.grid.lat_max = parse(key, value)?,
            "grid.lon_min" => self.grid.lon_min = parse(key, value)?,
            "grid.lon_max" => self.grid.lon_max = parse(key, value)?,
            "grid.cells" => self.grid.cells_per_side = parse(key, value)?,
            "grid.hours" => {
                let h = parse(key, value)?;
                self.grid.hours_per_day = h;
                self.generator.hours = h;
                self.critic.hours = h;
            }
            "input" => self.input = opt_path(value),
            "world.users" => self.world.users = parse(key, value)?,
            "world.days" => self.world.days = parse(key, value)?,
            "world.noise" => self.world.noise = parse(key, value)?,
            "world.haunts" => self.world.haunts = parse(key, value)?,
            "k" => self.k = parse(key, value)?,
            "clusters" => self.clusters = if value.is_empty() { None } else { Some(parse(key, value)?) },
            "sample_size" => {
                self.sample_size = parse(key, value)?;
                self.generator.sample_size = self.sample_size;
            }
            "mechanisms" => {
                self.mechanisms = value
                    .split(',')
                    .map(|s| s.trim().to_ascii_lowercase())
                    .filter(|s| !s.is_empty())
                    .collect()
            }
            "noise.a" => self.noise.a = parse(key, value)?,
            "noise.b" => self.noise.b = parse(key, value)?,
            "noise.mu" => self.noise.mu = parse(key, value)?,
            "noise.sigma" => self.noise.sigma = parse(key, value)?,
            "noise.epsilon" => self.noise.epsilon = parse(key, value)?,
            "generator.encoding_dim" => self.generator.encoding_dim = parse(key, value)?,
            "generator.heads" => self.generator.heads = parse(key, value)?,
            "generator.match_cost" => self.generator.match_cost = parse(key, value)?,
            "generator.temperature" => self.generator.temperature = parse(key, value)?,
            "critic.encoding_dim" => self.critic.encoding_dim = parse(key, value)?,
            "critic.heads" => self.critic.heads = parse(key, value)?,
            "critic.conv_channels" => self.critic.conv_channels = parse(key, value)?,
            "critic.cond_dim" => self.critic.cond_dim = parse(key, value)?,
            "critic.head_hidden" => self.critic.head_hidden = parse(key, value)?,
            "train.epochs" => self.train.epochs = parse(key, value)?,
            "train.lr" => self.train.lr = parse(key, value)?,
            "train.n_critic" => self.train.n_critic = parse(key, value)?,
            "train.clip" => self.train.clip = parse(key, value)?,
            "train.batch" => self.train.batch = parse(key, value)?,
            "checkpoint" => self.checkpoint = opt_path(value),
            "tul.embedding_dim" => self.tul.embedding_dim = parse(key, value)?,
            "tul.hidden" => self.tul.hidden = parse(key, value)?,
            "tul.epochs" => self.tul.epochs = parse(key, value)?,
            "tul.lr" => self.tul.lr = parse(key, value)?,
            "tul.batch" => self.tul.batch = parse(key, value)?,
            "fm.k" => self.fm.k = parse(key, value)?,
            "fm.epochs" => self.fm.epochs = parse(key, value)?,
            "fm.lr" => self.fm.lr = parse(key, value)?,
            "fm.l2" => self.fm.l2 = parse(key, value)?,
            "hlc.min_pts" => self.hlc_min_pts = parse(key, value)?,
            "reconstruct.decay_cells" => self.decay_cells = parse(key, value)?,
            "reconstruct.users" => self.reconstruct_users = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            _ => return Err(Error::ConfigInvalid(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    /// Every setting as `(key, value)`, in a fixed order. Parsing these
    /// back yields the same configuration.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let p = |o: &Option<PathBuf>| o.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        vec![
            ("seed", self.seed.to_string()),
            ("grid.lat_min", self.grid.lat_min.to_string()),
            ("grid.lat_max", self.grid.lat_max.to_string()),
            ("grid.lon_min", self.grid.lon_min.to_string()),
            ("grid.lon_max", self.grid.lon_max.to_string()),
            ("grid.cells", self.grid.cells_per_side.to_string()),
            ("grid.hours", self.grid.hours_per_day.to_string()),
            ("input", p(&self.input)),
            ("world.users", self.world.users.to_string()),
            ("world.days", self.world.days.to_string()),
            ("world.noise", self.world.noise.to_string()),
            ("world.haunts", self.world.haunts.to_string()),
            ("k", self.k.to_string()),
            ("clusters", self.clusters.map(|c| c.to_string()).unwrap_or_default()),
            ("sample_size", self.sample_size.to_string()),
            ("mechanisms", self.mechanisms.join(",")),
            ("noise.a", self.noise.a.to_string()),
            ("noise.b", self.noise.b.to_string()),
            ("noise.mu", self.noise.mu.to_string()),
            ("noise.sigma", self.noise.sigma.to_string()),
            ("noise.epsilon", self.noise.epsilon.to_string()),
            ("generator.encoding_dim", self.generator.encoding_dim.to_string()),
            ("generator.heads", self.generator.heads.to_string()),
            ("generator.match_cost", self.generator.match_cost.to_string()),
            ("generator.temperature", self.generator.temperature.to_string()),
            ("critic.encoding_dim", self.critic.encoding_dim.to_string()),
            ("critic.heads", self.critic.heads.to_string()),
            ("critic.conv_channels", self.critic.conv_channels.to_string()),
            ("critic.cond_dim", self.critic.cond_dim.to_string()),
            ("critic.head_hidden", self.critic.head_hidden.to_string()),
            ("train.epochs", self.train.epochs.to_string()),
            ("train.lr", self.train.lr.to_string()),
            ("train.n_critic", self.train.n_critic.to_string()),
            ("train.clip", self.train.clip.to_string()),
            ("train.batch", self.train.batch.to_string()),
            ("checkpoint", p(&self.checkpoint)),
            ("tul.embedding_dim", self.tul.embedding_dim.to_string()),
            ("tul.hidden", self.tul.hidden.to_string()),
            ("tul.epochs", self.tul.epochs.to_string()),
            ("tul.lr", self.tul.lr.to_string()),
            ("tul.batch", self.tul.batch.to_string()),
            ("fm.k", self.fm.k.to_string()),
            ("fm.epochs", self.fm.epochs.to_string()),
            ("fm.lr", self.fm.lr.to_string()),
            ("fm.l2", self.fm.l2.to_string()),
            ("hlc.min_pts", self.hlc_min_pts.to_string()),
            ("reconstruct.decay_cells", self.decay_cells.to_string()),
            ("reconstruct.users", self.reconstruct_users.to_string()),
        ]
    }

    pub fn canonical(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn hash(&self) -> String {
        config_hash(&self.canonical())
    }

    pub fn mechanisms(&self) -> Result<Vec<Mechanism>> {
        self.mechanisms
            .iter()
            .filter(|m| m.as_str() != "cats")
            .map(|m| m.parse())
            .collect()
    }

    pub fn includes_cats(&self) -> bool {
        self.mechanisms.iter().any(|m| m == "cats")
    }

    pub fn noise_for(&self, mechanism: Mechanism) -> NoiseConfig {
        NoiseConfig {
            mechanism,
            seed: crate::rng::derive_seed(self.seed, &[crate::rng::hash_str(mechanism.name())]),
            ..self.noise.clone()
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }

    pub fn tul_config(&self) -> TulConfig {
        TulConfig {
            seed: self.seed,
            ..self.tul.clone()
        }
    }

    pub fn fm_config(&self) -> FmConfig {
        FmConfig {
            seed: self.seed,
            ..self.fm.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if self.input.is_none() {
            self.world.validate(&self.grid)?;
        }
        if self.k == 0 {
            return Err(Error::ConfigInvalid("k must be at least 1".into()));
        }
        for m in &self.mechanisms {
            if m != "cats" {
                m.parse::<Mechanism>()?;
            }
        }
        self.noise.validate()?;
        self.generator.validate()?;
        self.critic.validate()?;
        self.train.validate()?;
        self.tul.validate()?;
        if self.fm.k == 0 || !(self.fm.lr > 0.0) {
            return Err(Error::ConfigInvalid("fm needs k > 0 and lr > 0".into()));
        }
        if self.hlc_min_pts == 0 || self.reconstruct_users == 0 || !(self.decay_cells > 0.0) {
            return Err(Error::ConfigInvalid("hlc.min_pts, reconstruct.users and reconstruct.decay_cells must be positive".into()));
        }
        Ok(())
    }
}
