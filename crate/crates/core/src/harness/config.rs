//! Training settings and the flat `key = value` run file.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use crate::data_io::Manifest;
use crate::error::{invalid, Result};
use crate::model::{parse_key_values, ModelConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    /// Samples per optimizer step, realized by gradient accumulation.
    pub batch: usize,
    pub seed: u64,
    /// Stop after this many optimizer steps; 0 means no cap.
    pub max_steps: usize,
    /// Validate every this many steps; 0 validates at the end of each epoch.
    pub val_every: usize,
    /// Save the current parameters every this many steps; 0 disables.
    pub checkpoint_every: usize,
}

impl TrainConfig {
    /// 100 epochs; learning rate 1e-3 and batch 50 in two dimensions, 5e-4 and 1 in three.
    pub fn for_dim(dim: usize) -> Self {
        let (lr, batch) = if dim == 3 { (5e-4, 1) } else { (1e-3, 50) };
        Self {
            epochs: 100,
            lr,
            batch,
            seed: 0,
            max_steps: 0,
            val_every: 0,
            checkpoint_every: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 {
            return Err(invalid!("batch must be positive"));
        }
        if self.lr <= 0.0 || !self.lr.is_finite() {
            return Err(invalid!("learning rate must be positive"));
        }
        Ok(())
    }

    /// Apply one `key = value` pair. Returns `false` for keys this type does not own.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        let num = |v: &str| v.parse::<f64>().map_err(|_| invalid!("cannot parse `{v}` for `{key}`"));
        let int = |v: &str| v.parse::<usize>().map_err(|_| invalid!("cannot parse `{v}` for `{key}`"));
        match key {
            "epochs" => self.epochs = int(value)?,
            "lr" => self.lr = num(value)?,
            "batch" => self.batch = int(value)?,
            "seed" => self.seed = value.parse().map_err(|_| invalid!("cannot parse `{value}` for `seed`"))?,
            "max_steps" => self.max_steps = int(value)?,
            "val_every" => self.val_every = int(value)?,
            "checkpoint_every" => self.checkpoint_every = int(value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}

impl fmt::Display for TrainConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "epochs = {}", self.epochs)?;
        writeln!(f, "lr = {}", self.lr)?;
        writeln!(f, "batch = {}", self.batch)?;
        writeln!(f, "seed = {}", self.seed)?;
        writeln!(f, "max_steps = {}", self.max_steps)?;
        writeln!(f, "val_every = {}", self.val_every)?;
        writeln!(f, "checkpoint_every = {}", self.checkpoint_every)
    }
}

/// Model and training settings read from one file.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl RunConfig {
    /// Starts from the preset named by `preset = 2d | 3d | tiny` (default `2d`);
    /// training defaults follow the resulting dimension unless set explicitly.
    pub fn parse(text: &str) -> Result<Self> {
        let pairs = parse_key_values(text)?;
        let preset = pairs
            .iter()
            .find(|(_, k, _)| k == "preset")
            .map(|(_, _, v)| v.as_str())
            .unwrap_or("2d");
        let mut model = match preset {
            "2d" => ModelConfig::default_2d(1, 1),
            "3d" => ModelConfig::default_3d(1, 1),
            "tiny" => ModelConfig::tiny(1, 1),
            other => return Err(invalid!("unknown preset `{other}`")),
        };
        for (line, key, value) in &pairs {
            if key != "preset" && !TrainConfig::default().set(key, value)? && !model.set(key, value)? {
                return Err(invalid!("line {line}: unknown key `{key}`"));
            }
        }
        let mut train = TrainConfig::for_dim(model.dim);
        for (_, key, value) in &pairs {
            train.set(key, value)?;
        }
        train.validate()?;
        Ok(Self { model, train })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    /// Take channel and condition counts from the dataset, then validate.
    pub fn fit_to(&mut self, manifest: &Manifest) -> Result<()> {
        self.model.dim = manifest.dim;
        self.model.fluid_channels = manifest.channels.fluid.len();
        self.model.solid_channels = manifest.channels.solid.len();
        self.model.conditions = manifest.channels.conditions.len();
        if manifest.channels.interface.len() != self.model.interface_channels() {
            return Err(invalid!("dataset interface channels do not equal fluid plus solid"));
        }
        self.model.validate()
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::for_dim(2)
    }
}

impl fmt::Display for RunConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.model, self.train)
    }
}

/// Settings file stored next to a checkpoint.
pub fn sidecar_path(checkpoint: &Path) -> PathBuf {
    let mut s = checkpoint.as_os_str().to_owned();
    s.push(".cfg");
    PathBuf::from(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_and_dimension_defaults() {
        let r = RunConfig::parse("preset = 3d\n").unwrap();
        assert_eq!((r.train.lr, r.train.batch, r.train.epochs), (5e-4, 1, 100));
        let r = RunConfig::parse("").unwrap();
        assert_eq!((r.train.lr, r.train.batch), (1e-3, 50));
        let r = RunConfig::parse("preset = tiny\nlr = 0.01\nbatch = 4\nchannels = 4, 4\n").unwrap();
        assert_eq!((r.train.lr, r.train.batch, r.model.channels.clone()), (0.01, 4, vec![4, 4]));
        assert!(RunConfig::parse("depth = 3\n").is_err());
        assert!(RunConfig::parse("batch = 0\n").is_err());
    }

    #[test]
    fn text_round_trip() {
        let mut r = RunConfig::parse("preset = tiny\nseed = 7\n").unwrap();
        r.model.conditions = 4;
        let back = RunConfig::parse(&r.to_string()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn sidecar_name() {
        assert_eq!(sidecar_path(Path::new("a/b.ckpt")), PathBuf::from("a/b.ckpt.cfg"));
    }
}
