//! Experiment configuration: flat `section.key = value` text files layered
//! over built-in profiles, with command-line overrides on top.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use dmce_core::channel::SystemConfig;
use dmce_core::estimator::EstimatorConfig;
use dmce_core::{SureConfig, TrainConfig};

/// Built-in parameter presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    /// 16x4 antennas, 10k training samples, T = 100; runs on a laptop CPU.
    Desk,
    /// 64x16 antennas, 100k training samples, full-length training.
    Paper,
}

impl std::str::FromStr for Profile {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Profile::Desk),
            "paper" => Ok(Profile::Paper),
            other => bail!("unknown profile {other:?} (expected desk or paper)"),
        }
    }
}

/// Estimation methods the sweep can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Method {
    Dm,
    DmEnhanced,
    Ls,
    Lmmse,
    Lasso,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Dm => "dm",
            Method::DmEnhanced => "dm-enhanced",
            Method::Ls => "ls",
            Method::Lmmse => "lmmse",
            Method::Lasso => "lasso",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dm" => Ok(Method::Dm),
            "dm-enhanced" => Ok(Method::DmEnhanced),
            "ls" => Ok(Method::Ls),
            "lmmse" => Ok(Method::Lmmse),
            "lasso" => Ok(Method::Lasso),
            other => bail!("unknown method {other:?}"),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Fully resolved experiment settings.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    pub t_max: usize,
    pub estimator: EstimatorConfig,
    pub train: TrainConfig,
    pub sure: SureConfig,
    pub sure_sigma_w_sq: f64,
    pub s_init: usize,
    pub s_max: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub sweep_snr_db: Vec<f64>,
    pub sweep_alpha: Vec<f64>,
    /// 0 means full resolution.
    pub sweep_bits: Vec<u32>,
    pub methods: Vec<Method>,
    pub pilot_kind: dmce_core::PilotKind,
    pub realizations: usize,
    pub lasso_iters: usize,
    pub out_dir: PathBuf,
    /// Explicit file locations; default to standard names under `out_dir`.
    pub paths: FilePaths,
}

#[derive(Debug, Clone)]
pub struct FilePaths {
    pub train_data: PathBuf,
    pub val_data: PathBuf,
    pub test_data: PathBuf,
    pub checkpoint: PathBuf,
    pub sure_denoiser_checkpoint: PathBuf,
    pub sure_checkpoint: PathBuf,
    pub train_log: PathBuf,
    pub sure_train_log: PathBuf,
    pub results: PathBuf,
}

impl ExperimentConfig {
    fn profile_defaults(profile: Profile, out_dir: &Path) -> Self {
        let (n_tx, n_rx, n_train, epochs) = match profile {
            Profile::Desk => (16, 4, 10_000, 100),
            Profile::Paper => (64, 16, 100_000, 500),
        };
        let out = out_dir.to_path_buf();
        ExperimentConfig {
            system: SystemConfig::new(n_tx, n_rx, n_tx, 20.0, 0).expect("static dims"),
            t_max: 100,
            estimator: EstimatorConfig::default(),
            train: TrainConfig {
                epochs,
                learning_rate: 1e-3,
                ..TrainConfig::default()
            },
            sure: SureConfig {
                denoiser_epochs: epochs,
                dm_epochs: epochs,
                ..SureConfig::default()
            },
            sure_sigma_w_sq: 1.0,
            s_init: 64,
            s_max: 64,
            n_train,
            n_val: 100,
            n_test: 100,
            sweep_snr_db: vec![0.0, 10.0, 20.0, 30.0],
            sweep_alpha: vec![1.0],
            sweep_bits: vec![0],
            methods: vec![Method::Dm, Method::Ls, Method::Lmmse],
            pilot_kind: dmce_core::PilotKind::QpskRandom,
            realizations: 100,
            lasso_iters: 300,
            paths: FilePaths {
                train_data: out.join("train.dmce"),
                val_data: out.join("val.dmce"),
                test_data: out.join("test.dmce"),
                checkpoint: out.join("model.ckpt"),
                sure_denoiser_checkpoint: out.join("sure_denoiser.ckpt"),
                sure_checkpoint: out.join("sure_model.ckpt"),
                train_log: out.join("train_log.csv"),
                sure_train_log: out.join("sure_train_log.csv"),
                results: out.join("results.csv"),
            },
            out_dir: out,
        }
    }

    /// Layers the config file (when given) over the profile defaults and
    /// applies the seed override.
    pub fn load(
        profile: Profile,
        config_path: Option<&Path>,
        out_dir: &Path,
        seed: Option<u64>,
    ) -> Result<Self> {
        let mut cfg = Self::profile_defaults(profile, out_dir);
        if let Some(path) = config_path {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            let entries = parse_flat(&text).with_context(|| format!("{}", path.display()))?;
            cfg.apply(&entries)?;
        }
        if let Some(seed) = seed {
            cfg.system.seed = seed;
            cfg.train.seed = seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, entries: &BTreeMap<String, String>) -> Result<()> {
        for (key, value) in entries {
            let parse_err = || format!("config key {key} = {value}");
            match key.as_str() {
                "system.n_tx" => self.system.n_tx = value.parse().with_context(parse_err)?,
                "system.n_rx" => self.system.n_rx = value.parse().with_context(parse_err)?,
                "system.n_pilot" => self.system.n_pilot = value.parse().with_context(parse_err)?,
                "system.snr_db" => self.system.snr_db = value.parse().with_context(parse_err)?,
                "seed" => {
                    let seed: u64 = value.parse().with_context(parse_err)?;
                    self.system.seed = seed;
                    self.train.seed = seed;
                }
                "schedule.t_max" => {
                    self.t_max = value.parse().with_context(parse_err)?;
                    self.estimator.t_max = self.t_max;
                }
                "estimator.t_max" => self.estimator.t_max = value.parse().with_context(parse_err)?,
                "estimator.grad_scale" => {
                    self.estimator.grad_scale = value.parse().with_context(parse_err)?
                }
                "estimator.enhanced" => {
                    self.estimator.enhanced = value.parse().with_context(parse_err)?
                }
                "estimator.enhance_rounds" => {
                    self.estimator.enhance_rounds = value.parse().with_context(parse_err)?
                }
                "estimator.enhance_window" => {
                    self.estimator.enhance_window = value.parse().with_context(parse_err)?
                }
                "train.epochs" => self.train.epochs = value.parse().with_context(parse_err)?,
                "train.batch_size" => {
                    self.train.batch_size = value.parse().with_context(parse_err)?
                }
                "train.learning_rate" => {
                    self.train.learning_rate = value.parse().with_context(parse_err)?
                }
                "sure.sigma_w_sq" => {
                    self.sure_sigma_w_sq = value.parse().with_context(parse_err)?
                }
                "sure.mc_epsilon" => self.sure.mc_epsilon = value.parse().with_context(parse_err)?,
                "sure.mc_probes" => self.sure.mc_probes = value.parse().with_context(parse_err)?,
                "sure.denoiser_lr" => {
                    self.sure.denoiser_lr = value.parse().with_context(parse_err)?
                }
                "sure.denoiser_epochs" => {
                    self.sure.denoiser_epochs = value.parse().with_context(parse_err)?
                }
                "sure.dm_epochs" => self.sure.dm_epochs = value.parse().with_context(parse_err)?,
                "model.s_init" => self.s_init = value.parse().with_context(parse_err)?,
                "model.s_max" => self.s_max = value.parse().with_context(parse_err)?,
                "data.n_train" => self.n_train = value.parse().with_context(parse_err)?,
                "data.n_val" => self.n_val = value.parse().with_context(parse_err)?,
                "data.n_test" => self.n_test = value.parse().with_context(parse_err)?,
                "data.train" => self.paths.train_data = self.resolve(value),
                "data.val" => self.paths.val_data = self.resolve(value),
                "data.test" => self.paths.test_data = self.resolve(value),
                "model.checkpoint" => self.paths.checkpoint = self.resolve(value),
                "sure.checkpoint_denoiser" => {
                    self.paths.sure_denoiser_checkpoint = self.resolve(value)
                }
                "sure.checkpoint" => self.paths.sure_checkpoint = self.resolve(value),
                "sweep.results" => self.paths.results = self.resolve(value),
                "sweep.snr_db" => self.sweep_snr_db = parse_list(value).with_context(parse_err)?,
                "sweep.alpha" => self.sweep_alpha = parse_list(value).with_context(parse_err)?,
                "sweep.bits" => {
                    self.sweep_bits = value
                        .split(',')
                        .map(|v| v.trim().parse::<u32>())
                        .collect::<std::result::Result<_, _>>()
                        .with_context(parse_err)?
                }
                "sweep.methods" => {
                    self.methods = value
                        .split(',')
                        .map(|v| v.trim().parse::<Method>())
                        .collect::<Result<_>>()
                        .with_context(parse_err)?
                }
                "sweep.pilot" => {
                    self.pilot_kind = match value.as_str() {
                        "qpsk" => dmce_core::PilotKind::QpskRandom,
                        "zc" => dmce_core::PilotKind::ZadoffChu,
                        other => bail!("unknown pilot kind {other:?} (expected qpsk or zc)"),
                    }
                }
                "sweep.realizations" => {
                    self.realizations = value.parse().with_context(parse_err)?
                }
                "sweep.lasso_iters" => self.lasso_iters = value.parse().with_context(parse_err)?,
                other => bail!("unknown config key {other:?}"),
            }
        }
        Ok(())
    }

    fn resolve(&self, value: &str) -> PathBuf {
        let p = Path::new(value);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.out_dir.join(p)
        }
    }

    fn validate(&self) -> Result<()> {
        if self.sweep_snr_db.is_empty() || self.sweep_alpha.is_empty() || self.sweep_bits.is_empty()
        {
            bail!("sweep axes must be nonempty");
        }
        if self.methods.is_empty() {
            bail!("sweep.methods must be nonempty");
        }
        if self.system.n_tx == 0 || self.system.n_rx == 0 || self.system.n_pilot == 0 {
            bail!("antenna and pilot counts must be positive");
        }
        for bits in &self.sweep_bits {
            if *bits > 8 {
                bail!("sweep.bits entries must be 0 (full resolution) or 1..=8");
            }
        }
        Ok(())
    }
}

fn parse_list(value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(Into::into))
        .collect()
}

/// Parses `key = value` lines; `#` starts a comment, blank lines are
/// skipped, later keys override earlier ones.
pub fn parse_flat(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("line {}: expected `key = value`, got {raw:?}", lineno + 1);
        };
        out.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(out)
}
