use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::pcm::OrderingSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    SingleStep,
    Rollout,
    SteadyState,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::SingleStep => "single_step",
            Task::Rollout => "rollout",
            Task::SteadyState => "steady_state",
        }
    }
}

impl FromStr for Task {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single_step" => Ok(Task::SingleStep),
            "rollout" => Ok(Task::Rollout),
            "steady_state" => Ok(Task::SteadyState),
            _ => Err(invalid!("unknown task `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Processor {
    Pcm,
    SimpleAttention,
}

impl Processor {
    pub fn name(self) -> &'static str {
        match self {
            Processor::Pcm => "pcm",
            Processor::SimpleAttention => "simple_attention",
        }
    }
}

impl FromStr for Processor {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pcm" => Ok(Processor::Pcm),
            "simple_attention" => Ok(Processor::SimpleAttention),
            _ => Err(invalid!("unknown processor `{s}`")),
        }
    }
}

/// Architecture and task settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Spatial dimension `d`.
    pub dim: usize,
    /// Pathway count `H`.
    pub pathways: usize,
    /// Level count `L`.
    pub levels: usize,
    /// Grid axis counts per pathway.
    pub grid_shapes: Vec<Vec<usize>>,
    /// Feature width per pathway.
    pub channels: Vec<usize>,
    /// Neighbors per latent node.
    pub knn: usize,
    pub ordering: OrderingSpec,
    pub task: Task,
    /// Frames between input and target.
    pub stride: usize,
    pub noise_variance: f64,
    pub processor: Processor,
    /// Hidden width of feed-forward blocks as a multiple of their input width.
    pub ffn_mult: usize,
    /// Add fused features onto the previous level's pathway features.
    pub residual: bool,
    /// Abstract time step of the latent grid update.
    pub grid_dt: f64,
    /// Fluid quantity channels `C_f`.
    pub fluid_channels: usize,
    /// Solid quantity channels `C_s`.
    pub solid_channels: usize,
    /// Length of the condition vector.
    pub conditions: usize,
}

impl ModelConfig {
    /// Two-dimensional time-dependent preset.
    pub fn default_2d(fluid_channels: usize, solid_channels: usize) -> Self {
        Self {
            dim: 2,
            pathways: 2,
            levels: 2,
            grid_shapes: vec![vec![16, 16], vec![8, 8]],
            channels: vec![64, 64],
            knn: 6,
            ordering: OrderingSpec::DEFAULT,
            task: Task::SingleStep,
            stride: 4,
            noise_variance: 0.0,
            processor: Processor::Pcm,
            ffn_mult: 2,
            residual: true,
            grid_dt: 1.0,
            fluid_channels,
            solid_channels,
            conditions: 0,
        }
    }

    /// Three-dimensional steady-state preset.
    pub fn default_3d(fluid_channels: usize, solid_channels: usize) -> Self {
        Self {
            dim: 3,
            levels: 3,
            grid_shapes: vec![vec![5, 5, 5], vec![4, 4, 4]],
            channels: vec![96, 128],
            task: Task::SteadyState,
            stride: 1,
            ..Self::default_2d(fluid_channels, solid_channels)
        }
    }

    /// Smallest configuration used for gradient verification.
    pub fn tiny(fluid_channels: usize, solid_channels: usize) -> Self {
        Self {
            levels: 1,
            grid_shapes: vec![vec![4, 4], vec![2, 2]],
            channels: vec![8, 8],
            knn: 3,
            stride: 1,
            ..Self::default_2d(fluid_channels, solid_channels)
        }
    }

    pub fn interface_channels(&self) -> usize {
        self.fluid_channels + self.solid_channels
    }

    pub fn total_width(&self) -> usize {
        self.channels.iter().sum()
    }

    pub fn grid_nodes(&self, h: usize) -> usize {
        self.grid_shapes[h].iter().product()
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.dim) {
            return Err(invalid!("dim must be 1, 2 or 3"));
        }
        if self.pathways == 0 || self.levels == 0 {
            return Err(invalid!("pathways and levels must be at least 1"));
        }
        if self.grid_shapes.len() != self.pathways || self.channels.len() != self.pathways {
            return Err(invalid!(
                "{} pathways but {} grid shapes and {} channel widths",
                self.pathways,
                self.grid_shapes.len(),
                self.channels.len()
            ));
        }
        for (h, shape) in self.grid_shapes.iter().enumerate() {
            if shape.len() != self.dim {
                return Err(invalid!("grid shape of pathway {h} is not {}-dimensional", self.dim));
            }
            if self.knn == 0 || self.knn >= self.grid_nodes(h) {
                return Err(invalid!(
                    "knn {} must lie in 1..{} for pathway {h}",
                    self.knn,
                    self.grid_nodes(h)
                ));
            }
        }
        if self.channels.contains(&0) || self.ffn_mult == 0 || self.stride == 0 {
            return Err(invalid!("channels, ffn_mult and stride must be positive"));
        }
        if self.fluid_channels == 0 || self.solid_channels == 0 {
            return Err(invalid!("fluid and solid channel counts must be positive"));
        }
        if self.noise_variance < 0.0 || !self.noise_variance.is_finite() {
            return Err(invalid!("noise_variance must be a nonnegative number"));
        }
        Ok(())
    }

    /// Apply one `key = value` pair. Returns `false` for keys this type does not own.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "dim" => self.dim = parse(key, value)?,
            "pathways" => self.pathways = parse(key, value)?,
            "levels" => self.levels = parse(key, value)?,
            "grid_shapes" => self.grid_shapes = parse_shapes(value)?,
            "channels" => self.channels = parse_list(key, value)?,
            "knn" => self.knn = parse(key, value)?,
            "ordering" => self.ordering = value.parse()?,
            "task" => self.task = value.parse()?,
            "stride" => self.stride = parse(key, value)?,
            "noise_variance" => self.noise_variance = parse(key, value)?,
            "processor" => self.processor = value.parse()?,
            "ffn_mult" => self.ffn_mult = parse(key, value)?,
            "residual" => self.residual = parse(key, value)?,
            "grid_dt" => self.grid_dt = parse(key, value)?,
            "fluid_channels" => self.fluid_channels = parse(key, value)?,
            "solid_channels" => self.solid_channels = parse(key, value)?,
            "conditions" => self.conditions = parse(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}

impl FromStr for ModelConfig {
    type Err = Error;
    /// Starts from the 2D preset with one channel per domain; unknown keys are errors.
    fn from_str(text: &str) -> Result<Self> {
        let mut cfg = ModelConfig::default_2d(1, 1);
        for (line, key, value) in parse_key_values(text)? {
            if !cfg.set(&key, &value)? {
                return Err(invalid!("line {line}: unknown key `{key}`"));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl fmt::Display for ModelConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let shapes: Vec<String> = self
            .grid_shapes
            .iter()
            .map(|s| s.iter().map(ToString::to_string).collect::<Vec<_>>().join("x"))
            .collect();
        let chans: Vec<String> = self.channels.iter().map(ToString::to_string).collect();
        writeln!(f, "dim = {}", self.dim)?;
        writeln!(f, "pathways = {}", self.pathways)?;
        writeln!(f, "levels = {}", self.levels)?;
        writeln!(f, "grid_shapes = {}", shapes.join(", "))?;
        writeln!(f, "channels = {}", chans.join(", "))?;
        writeln!(f, "knn = {}", self.knn)?;
        writeln!(f, "ordering = {}", self.ordering)?;
        writeln!(f, "task = {}", self.task.name())?;
        writeln!(f, "stride = {}", self.stride)?;
        writeln!(f, "noise_variance = {}", self.noise_variance)?;
        writeln!(f, "processor = {}", self.processor.name())?;
        writeln!(f, "ffn_mult = {}", self.ffn_mult)?;
        writeln!(f, "residual = {}", self.residual)?;
        writeln!(f, "grid_dt = {}", self.grid_dt)?;
        writeln!(f, "fluid_channels = {}", self.fluid_channels)?;
        writeln!(f, "solid_channels = {}", self.solid_channels)?;
        writeln!(f, "conditions = {}", self.conditions)
    }
}

/// Split flat `key = value` text into `(line, key, value)`; `#` starts a comment.
pub fn parse_key_values(text: &str) -> Result<Vec<(usize, String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| invalid!("line {}: expected `key = value`", i + 1))?;
        out.push((i + 1, k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub(crate) fn parse<V: FromStr>(key: &str, value: &str) -> Result<V> {
    value
        .parse()
        .map_err(|_| invalid!("cannot parse `{value}` for `{key}`"))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>> {
    value
        .split(',')
        .map(|v| parse(key, v.trim()))
        .collect()
}

/// `16x16, 8x8` → `[[16,16],[8,8]]`.
fn parse_shapes(value: &str) -> Result<Vec<Vec<usize>>> {
    value
        .split(',')
        .map(|s| {
            s.trim()
                .split('x')
                .map(|v| parse("grid_shapes", v.trim()))
                .collect()
        })
        .collect()
}
