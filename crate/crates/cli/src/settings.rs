//! Merges flags, config-file entries and defaults, and records every
//! effective value so a run can be echoed back as a config file.

use std::cell::RefCell;
use std::fmt::{self, Display};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Result};
use tten_core::{LossKind, SyntheticSpec, TrainConfig};

use crate::args::{DataArgs, ModelArgs, SyntheticArgs};
use crate::config_file::ConfigFile;

pub const DEFAULT_P: f64 = 1.0;
pub const DEFAULT_K: usize = 20;
pub const DEFAULT_GROUPS: usize = 5;
pub const DEFAULT_SEED: u64 = 0;
pub const DEFAULT_VALIDATION_FRACTION: f64 = 0.5;
pub const DEFAULT_POPULAR_FRACTION: f64 = 0.2;
pub const DEFAULT_LOSS: LossKind = LossKind::Ssm;

/// `start:stop:step` with `stop` included.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PGrid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Default for PGrid {
    fn default() -> Self {
        PGrid {
            start: 0.0,
            stop: 1.0,
            step: 0.1,
        }
    }
}

impl PGrid {
    pub fn values(&self) -> Result<Vec<f64>> {
        Ok(tten_core::evaluation::p_grid(self.start, self.stop, self.step)?)
    }
}

impl FromStr for PGrid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let [start, stop, step] = parts[..] else {
            return Err(format!("expected start:stop:step, found {s:?}"));
        };
        let num = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}"));
        let grid = PGrid {
            start: num(start)?,
            stop: num(stop)?,
            step: num(step)?,
        };
        tten_core::evaluation::p_grid(grid.start, grid.stop, grid.step).map_err(|e| e.to_string())?;
        Ok(grid)
    }
}

impl Display for PGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.start, self.stop, self.step)
    }
}

/// Flag > config file > default lookup with a record of resolved values.
pub struct Layers<'a> {
    file: Option<&'a ConfigFile>,
    resolved: RefCell<Vec<(&'static str, String)>>,
}

impl<'a> Layers<'a> {
    pub fn new(file: Option<&'a ConfigFile>) -> Self {
        Layers {
            file,
            resolved: RefCell::new(Vec::new()),
        }
    }

    fn from_file<T>(&self, key: &'static str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        let Some(file) = self.file else {
            return Ok(None);
        };
        match file.get(key) {
            None => Ok(None),
            Some(entry) => entry.value.parse::<T>().map(Some).map_err(|e| {
                anyhow!(
                    "{}:{}: invalid value {:?} for {key}: {e}",
                    file.path().display(),
                    entry.line,
                    entry.value
                )
            }),
        }
    }

    fn record(&self, key: &'static str, value: String) {
        let mut resolved = self.resolved.borrow_mut();
        match resolved.iter_mut().find(|(k, _)| *k == key) {
            Some(slot) => slot.1 = value,
            None => resolved.push((key, value)),
        }
    }

    /// Flag or file value, if either is present.
    pub fn get<T>(&self, key: &'static str, flag: Option<T>) -> Result<Option<T>>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let value = match flag {
            Some(v) => Some(v),
            None => self.from_file(key)?,
        };
        if let Some(v) = &value {
            self.record(key, v.to_string());
        }
        Ok(value)
    }

    pub fn or<T>(&self, key: &'static str, flag: Option<T>, default: T) -> Result<T>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let value = match flag {
            Some(v) => v,
            None => self.from_file(key)?.unwrap_or(default),
        };
        self.record(key, value.to_string());
        Ok(value)
    }

    /// Paths from a config file are relative to the file's directory.
    pub fn path(&self, key: &'static str, flag: Option<PathBuf>) -> Result<Option<PathBuf>> {
        let value = match flag {
            Some(p) => Some(p),
            None => match self.file.and_then(|f| f.get(key).map(|e| (f, e))) {
                None => None,
                Some((file, entry)) => {
                    let base = file.path().parent().unwrap_or(Path::new(""));
                    Some(base.join(&entry.value))
                }
            },
        };
        if let Some(p) = &value {
            let shown = std::path::absolute(p).unwrap_or_else(|_| p.clone());
            self.record(key, shown.display().to_string());
        }
        Ok(value)
    }

    pub fn forget(&self, key: &str) {
        self.resolved.borrow_mut().retain(|(k, _)| *k != key);
    }

    /// Resolved values in resolution order, as `key = value` text.
    pub fn render(&self, header: &str) -> String {
        let mut out = format!("# {header}\n");
        for (k, v) in self.resolved.borrow().iter() {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }
}

pub fn synthetic_spec(layers: &Layers, args: &SyntheticArgs, seed: u64) -> Result<SyntheticSpec> {
    let d = SyntheticSpec::default();
    let spec = SyntheticSpec {
        num_users: layers.or("users", args.users, d.num_users)?,
        num_items: layers.or("items", args.items, d.num_items)?,
        latent_dim: layers.or("latent-dim", args.latent_dim, d.latent_dim)?,
        popularity_exponent: layers.or("popularity-exponent", args.popularity_exponent, d.popularity_exponent)?,
        popularity_mix: layers.or("popularity-mix", args.popularity_mix, d.popularity_mix)?,
        interactions_per_user: layers.or(
            "interactions-per-user",
            args.interactions_per_user,
            d.interactions_per_user,
        )?,
        test_items_per_user: layers.or(
            "test-items-per-user",
            args.test_items_per_user,
            d.test_items_per_user,
        )?,
        affinity_temperature: layers.or(
            "affinity-temperature",
            args.affinity_temperature,
            d.affinity_temperature,
        )?,
        seed,
    };
    spec.validate()?;
    Ok(spec)
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Files { train: PathBuf, test: PathBuf },
    Synthetic(SyntheticSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataSettings {
    pub source: DataSource,
    pub validation_fraction: f64,
    pub seed: u64,
}

pub fn data_settings(layers: &Layers, args: &DataArgs, seed: u64) -> Result<DataSettings> {
    let train = layers.path("train-file", args.train_file.clone())?;
    let test = layers.path("test-file", args.test_file.clone())?;
    let synthetic = layers.get("synthetic", args.synthetic.then_some(true))?.unwrap_or(false);
    let source = match (train, test, synthetic) {
        (Some(_), _, true) | (_, Some(_), true) => {
            bail!("give either --synthetic or --train-file/--test-file, not both")
        }
        (None, None, true) => DataSource::Synthetic(synthetic_spec(layers, &args.spec, seed)?),
        (Some(train), Some(test), false) => DataSource::Files { train, test },
        (Some(_), None, false) => bail!("--train-file needs a matching --test-file"),
        (None, Some(_), false) => bail!("--test-file needs a matching --train-file"),
        (None, None, false) => bail!("no data: pass --train-file and --test-file, or --synthetic"),
    };
    let validation_fraction = layers.or(
        "validation-fraction",
        args.validation_fraction,
        DEFAULT_VALIDATION_FRACTION,
    )?;
    if !(0.0..1.0).contains(&validation_fraction) {
        bail!("validation fraction must be in [0, 1), got {validation_fraction}");
    }
    Ok(DataSettings {
        source,
        validation_fraction,
        seed,
    })
}

pub fn train_config(
    layers: &Layers,
    args: &ModelArgs,
    p: Option<f64>,
    k: Option<usize>,
    seed: u64,
) -> Result<TrainConfig> {
    let loss = layers.or("loss", args.loss, DEFAULT_LOSS)?;
    let d = TrainConfig::new(loss);
    let config = TrainConfig {
        loss,
        dim: layers.or("dim", args.dim, d.dim)?,
        num_layers: layers.or("layers", args.layers, d.num_layers)?,
        learning_rate: layers.or("lr", args.lr, d.learning_rate)?,
        batch_size: layers.or("batch-size", args.batch_size, d.batch_size)?,
        max_epochs: layers.or("epochs", args.epochs, d.max_epochs)?,
        early_stop_min_epoch: layers.or("min-epochs", args.min_epochs, d.early_stop_min_epoch)?,
        patience: layers.or("patience", args.patience, d.patience)?,
        eval_every: layers.or("eval-every", args.eval_every, d.eval_every)?,
        temperature: layers.or("temperature", args.temperature, d.temperature)?,
        l2: layers.or("l2", args.l2, d.l2)?,
        eval_p: layers.or("p", p, DEFAULT_P)?,
        eval_k: layers.or("k", k, DEFAULT_K)?,
        seed,
    };
    config.validate()?;
    Ok(config)
}
