//! Dataset index, split assignment and normalization statistics as JSON.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::format::{read_trajectory_from, write_trajectory, Trajectory};
use crate::error::{invalid, Error, Result};
use crate::geometry::{ChannelStats, Domain, DomainStats, NormStats};
use crate::model::BoundaryMask;

pub const MANIFEST_VERSION: u32 = 1;
/// Index written next to generated trajectory files.
pub const INDEX_FILE: &str = "trajectories.json";
/// Index plus split and statistics.
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    pub name: String,
    pub unit: String,
}

impl Channel {
    pub fn new(name: &str, unit: &str) -> Self {
        Self {
            name: name.into(),
            unit: unit.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub fluid: Vec<Channel>,
    pub solid: Vec<Channel>,
    pub interface: Vec<Channel>,
    pub conditions: Vec<Channel>,
}

impl ChannelSpec {
    pub fn domain(&self, d: Domain) -> &[Channel] {
        match d {
            Domain::Fluid => &self.fluid,
            Domain::Solid => &self.solid,
            Domain::Interface => &self.interface,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryEntry {
    pub id: String,
    /// File name relative to the dataset directory.
    pub file: String,
    pub frames: usize,
    /// `[N_f, N_s, N_b]`.
    pub points: [usize; 3],
    /// `[C_f, C_s, C_b]`.
    pub channels: [usize; 3],
    pub conditions: Vec<f64>,
    /// Held out as out-of-distribution.
    #[serde(default)]
    pub ood: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
    pub ood: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
    Ood,
}

impl FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            "ood" => Ok(Split::Ood),
            _ => Err(invalid!("unknown split `{s}`")),
        }
    }
}

impl Splits {
    pub fn get(&self, s: Split) -> &[String] {
        match s {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
            Split::Ood => &self.ood,
        }
    }
}

/// Relative split sizes, `8:1:1` by default.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 8.0,
            val: 1.0,
            test: 1.0,
        }
    }
}

impl FromStr for SplitRatios {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<f64> = s
            .split(':')
            .map(|p| p.trim().parse().map_err(|_| invalid!("bad ratio `{p}` in `{s}`")))
            .collect::<Result<_>>()?;
        let [train, val, test] = parts[..] else {
            return Err(invalid!("ratios need three parts, got `{s}`"));
        };
        if parts.iter().any(|&r| r < 0.0 || !r.is_finite()) || train + val + test <= 0.0 {
            return Err(invalid!("ratios must be nonnegative with a positive sum"));
        }
        Ok(Self { train, val, test })
    }
}

impl SplitRatios {
    /// `(train, val, test)` sizes for `n` items; validation and test sizes are rounded.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        let total = self.train + self.val + self.test;
        let val = ((n as f64 * self.val / total).round() as usize).min(n);
        let test = ((n as f64 * self.test / total).round() as usize).min(n - val);
        (n - val - test, val, test)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub dim: usize,
    /// Time between consecutive frames (s); zero for steady samples.
    pub dt: f64,
    pub channels: ChannelSpec,
    pub entries: Vec<TrajectoryEntry>,
    #[serde(default)]
    pub splits: Splits,
    #[serde(default)]
    pub stats: Option<NormStats>,
    /// Points whose positions are prescribed during prediction.
    #[serde(default)]
    pub mask: Option<BoundaryMask>,
}

impl Manifest {
    pub fn new(dim: usize, dt: f64, channels: ChannelSpec) -> Self {
        Self {
            version: MANIFEST_VERSION,
            dim,
            dt,
            channels,
            entries: Vec::new(),
            splits: Splits::default(),
            stats: None,
            mask: None,
        }
    }

    pub fn entry(&self, id: &str) -> Result<&TrajectoryEntry> {
        self.entries
            .iter()
            .find(|e| e.id == id)
            .ok_or_else(|| invalid!("no trajectory `{id}` in the manifest"))
    }

    pub fn stats(&self) -> Result<&NormStats> {
        self.stats
            .as_ref()
            .ok_or_else(|| invalid!("manifest has no normalization statistics; run the split first"))
    }

    /// Read the trajectory `id` from `dir`, checking it against its entry.
    pub fn load(&self, dir: &Path, id: &str) -> Result<Trajectory> {
        let e = self.entry(id)?;
        let f = fs::File::open(dir.join(&e.file))?;
        let traj = read_trajectory_from(std::io::BufReader::new(f), id, &e.conditions, self.dt)?;
        let layout = traj.layout()?;
        if layout.points != e.points || layout.channels != e.channels || traj.len() != e.frames {
            return Err(Error::Format(format!("`{}` does not match its manifest entry", e.file)));
        }
        Ok(traj)
    }

    pub fn load_split(&self, dir: &Path, split: Split) -> Result<Vec<Trajectory>> {
        self.splits.get(split).iter().map(|id| self.load(dir, id)).collect()
    }

    /// Write `traj` into `dir` and record it.
    pub fn add(&mut self, dir: &Path, traj: &Trajectory, ood: bool) -> Result<()> {
        let layout = traj.layout()?;
        if layout.dim != self.dim {
            return Err(invalid!("trajectory is {}-dimensional, dataset {}", layout.dim, self.dim));
        }
        let file = format!("{}.fsl", traj.id);
        write_trajectory(traj, &dir.join(&file))?;
        self.entries.push(TrajectoryEntry {
            id: traj.id.clone(),
            file,
            frames: traj.len(),
            points: layout.points,
            channels: layout.channels,
            conditions: traj.conditions.clone(),
            ood,
        });
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let m: Manifest = serde_json::from_str(&fs::read_to_string(path)?)?;
        if m.version != MANIFEST_VERSION {
            return Err(Error::Format(format!("unsupported manifest version {}", m.version)));
        }
        Ok(m)
    }
}

/// Seeded shuffle of the regular trajectories into train/val/test; flagged
/// trajectories go to the OOD split only.
pub fn assign_splits(entries: &[TrajectoryEntry], ratios: SplitRatios, seed: u64) -> Splits {
    let mut regular: Vec<String> = entries.iter().filter(|e| !e.ood).map(|e| e.id.clone()).collect();
    regular.sort();
    regular.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (n_train, n_val, _) = ratios.sizes(regular.len());
    let mut ood: Vec<String> = entries.iter().filter(|e| e.ood).map(|e| e.id.clone()).collect();
    ood.sort();
    Splits {
        test: regular.split_off(n_train + n_val),
        val: regular.split_off(n_train),
        train: regular,
        ood,
    }
}

/// Per-channel statistics over every frame of `train`. Positions share one
/// set of statistics across the three domains so that normalized points stay
/// in a common frame.
pub fn compute_norm_stats(train: &[Trajectory]) -> Result<NormStats> {
    let first = train
        .first()
        .ok_or_else(|| invalid!("normalization statistics need a nonempty train split"))?;
    let layout = first.layout()?;
    for t in train {
        let l = t.layout()?;
        if l.dim != layout.dim || l.channels != layout.channels {
            return Err(invalid!("`{}` disagrees with `{}` on dimension or channels", t.id, first.id));
        }
    }
    let frames = || train.iter().flat_map(|t| &t.frames);
    let positions = ChannelStats::from_rows(
        layout.dim,
        frames().flat_map(|f| Domain::ALL.into_iter().flat_map(move |d| rows(&f.domain(d).positions))),
    )?;
    let quantities = |d: Domain| ChannelStats::from_rows(layout.channels[d as usize], frames().flat_map(move |f| rows(&f.domain(d).quantities)));
    let domain = |d: Domain| -> Result<DomainStats> {
        Ok(DomainStats {
            positions: positions.clone(),
            quantities: quantities(d)?,
        })
    };
    let conditions = ChannelStats::from_rows(first.conditions.len(), train.iter().map(|t| t.conditions.as_slice()))?;
    Ok(NormStats {
        fluid: domain(Domain::Fluid)?,
        solid: domain(Domain::Solid)?,
        interface: domain(Domain::Interface)?,
        conditions,
    })
}

fn rows(t: &crate::tensor_core::tensor::Tensor<f64>) -> impl Iterator<Item = &[f64]> {
    let c = t.cols().max(1);
    t.data().chunks(c)
}

pub fn index_path(dir: &Path) -> PathBuf {
    dir.join(INDEX_FILE)
}

pub fn manifest_path(dir: &Path) -> PathBuf {
    dir.join(MANIFEST_FILE)
}

/// Split the indexed trajectories in `dir`, compute train statistics and
/// write the manifest.
pub fn build_manifest(dir: &Path, ratios: SplitRatios, seed: u64) -> Result<Manifest> {
    let path = index_path(dir);
    if !path.exists() {
        return Err(invalid!("no {INDEX_FILE} in {}", dir.display()));
    }
    let mut m = Manifest::read(&path)?;
    if m.entries.is_empty() {
        return Err(invalid!("dataset {} has no trajectories", dir.display()));
    }
    m.splits = assign_splits(&m.entries, ratios, seed);
    let train = m.load_split(dir, Split::Train)?;
    m.stats = Some(compute_norm_stats(&train)?);
    m.save(&manifest_path(dir))?;
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entries(n: usize, ood: &[usize]) -> Vec<TrajectoryEntry> {
        (0..n)
            .map(|i| TrajectoryEntry {
                id: format!("t{i:02}"),
                file: format!("t{i:02}.fsl"),
                frames: 1,
                points: [1, 1, 1],
                channels: [1, 1, 2],
                conditions: vec![],
                ood: ood.contains(&i),
            })
            .collect()
    }

    #[test]
    fn ratio_sizes() {
        let r = SplitRatios::default();
        assert_eq!(r.sizes(10), (8, 1, 1));
        assert_eq!(r.sizes(80), (64, 8, 8));
        assert_eq!(r.sizes(4), (4, 0, 0));
        assert_eq!("8:1:1".parse::<SplitRatios>().unwrap(), r);
        assert!("8:1".parse::<SplitRatios>().is_err());
        assert!("0:0:0".parse::<SplitRatios>().is_err());
    }

    #[test]
    fn split_is_deterministic_and_excludes_ood() {
        let e = entries(12, &[3, 7]);
        let a = assign_splits(&e, SplitRatios::default(), 5);
        assert_eq!(a, assign_splits(&e, SplitRatios::default(), 5));
        assert_ne!(a, assign_splits(&e, SplitRatios::default(), 6));
        assert_eq!((a.train.len(), a.val.len(), a.test.len()), (8, 1, 1));
        assert_eq!(a.ood, vec!["t03".to_string(), "t07".to_string()]);
        for id in a.train.iter().chain(&a.val).chain(&a.test) {
            assert!(id != "t03" && id != "t07");
        }
        let mut all: Vec<&String> = a.train.iter().chain(&a.val).chain(&a.test).chain(&a.ood).collect();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 12);
    }
}
