//! `FSL1` trajectory files: magic, nine little-endian u32 header fields
//! (version, d, T, N_f, N_s, N_b, C_f, C_s, C_b), then `T` frames of f32
//! payloads in the order fluid positions, fluid quantities, solid positions,
//! solid quantities, interface positions, interface quantities, row-major.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{invalid, Error, Result};
use crate::geometry::{Domain, DomainObservation, SystemState};
use crate::tensor_core::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"FSL1";
pub const FORMAT_VERSION: u32 = 1;
/// Magic plus nine header words.
pub const HEADER_BYTES: usize = 4 + 9 * 4;

/// An ordered sequence of frames with fixed point counts and channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub id: String,
    pub frames: Vec<SystemState<f64>>,
    /// Condition values shared by every frame.
    pub conditions: Vec<f64>,
}

/// Point counts, channels and dimension shared by all frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameLayout {
    pub dim: usize,
    pub points: [usize; 3],
    pub channels: [usize; 3],
}

impl FrameLayout {
    pub fn of(state: &SystemState<f64>) -> Self {
        Self {
            dim: state.dim(),
            points: Domain::ALL.map(|d| state.domain(d).len()),
            channels: Domain::ALL.map(|d| state.domain(d).channels()),
        }
    }

    /// f32 values per frame.
    pub fn frame_len(&self) -> usize {
        (0..3).map(|i| self.points[i] * (self.dim + self.channels[i])).sum()
    }

    fn check(&self) -> Result<()> {
        let [cf, cs, cb] = self.channels;
        if cb != cf + cs {
            return Err(invalid!("interface has {cb} channels, expected fluid {cf} + solid {cs}"));
        }
        if !(1..=3).contains(&self.dim) {
            return Err(Error::Format(format!("spatial dimension {} not in 1..=3", self.dim)));
        }
        Ok(())
    }
}

impl Trajectory {
    pub fn new(id: impl Into<String>, frames: Vec<SystemState<f64>>, conditions: Vec<f64>) -> Result<Self> {
        let t = Self {
            id: id.into(),
            frames,
            conditions,
        };
        t.layout()?;
        Ok(t)
    }

    /// Shared layout; errors if frames are missing or disagree.
    pub fn layout(&self) -> Result<FrameLayout> {
        let first = self
            .frames
            .first()
            .ok_or_else(|| invalid!("trajectory `{}` has no frames", self.id))?;
        let layout = FrameLayout::of(first);
        layout.check()?;
        for (t, f) in self.frames.iter().enumerate() {
            f.validate()?;
            if FrameLayout::of(f) != layout {
                return Err(invalid!("frame {t} of `{}` changes shape", self.id));
            }
        }
        Ok(layout)
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

fn u32_field(name: &str, v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| invalid!("{name} = {v} does not fit the header"))
}

/// Serialize `traj` as `FSL1`. Values are rounded to f32.
pub fn write_trajectory_to<W: Write>(traj: &Trajectory, mut w: W) -> Result<()> {
    let layout = traj.layout()?;
    w.write_all(MAGIC)?;
    let header = [
        FORMAT_VERSION as usize,
        layout.dim,
        traj.frames.len(),
        layout.points[0],
        layout.points[1],
        layout.points[2],
        layout.channels[0],
        layout.channels[1],
        layout.channels[2],
    ];
    for (i, v) in header.into_iter().enumerate() {
        w.write_all(&u32_field(&format!("header word {i}"), v)?.to_le_bytes())?;
    }
    for frame in &traj.frames {
        for d in Domain::ALL {
            let obs = frame.domain(d);
            for &v in obs.positions.data().iter().chain(obs.quantities.data()) {
                w.write_all(&(v as f32).to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Format("truncated trajectory file".into())
    } else {
        Error::Io(e)
    }
}

/// Parse an `FSL1` stream. Frames carry `conditions` and time `t·dt`.
pub fn read_trajectory_from<R: Read>(mut r: R, id: &str, conditions: &[f64], dt: f64) -> Result<Trajectory> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(truncated)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!("bad trajectory magic {magic:?}")));
    }
    let mut header = [0usize; 9];
    for h in header.iter_mut() {
        let mut b = [0u8; 4];
        r.read_exact(&mut b).map_err(truncated)?;
        *h = u32::from_le_bytes(b) as usize;
    }
    let [version, dim, frames, nf, ns, nb, cf, cs, cb] = header;
    if version != FORMAT_VERSION as usize {
        return Err(Error::Format(format!("unsupported trajectory version {version}")));
    }
    let layout = FrameLayout {
        dim,
        points: [nf, ns, nb],
        channels: [cf, cs, cb],
    };
    layout.check()?;
    if frames == 0 {
        return Err(Error::Format("trajectory declares no frames".into()));
    }
    let mut raw = vec![0u8; layout.frame_len() * 4];
    let mut out = Vec::with_capacity(frames);
    for t in 0..frames {
        r.read_exact(&mut raw).map_err(truncated)?;
        let mut values = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("chunks of four")) as f64);
        let mut take = |rows: usize, cols: usize| Tensor::matrix(rows, cols, values.by_ref().take(rows * cols).collect());
        let mut obs = Vec::with_capacity(3);
        for i in 0..3 {
            let pos = take(layout.points[i], dim)?;
            let q = take(layout.points[i], layout.channels[i])?;
            obs.push(DomainObservation::new(pos, q)?);
        }
        let interface = obs.pop().expect("three domains");
        let solid = obs.pop().expect("three domains");
        let fluid = obs.pop().expect("three domains");
        out.push(SystemState::new(fluid, solid, interface, conditions.to_vec(), t as f64 * dt)?);
    }
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(Error::Format("trailing bytes after the last frame".into()));
    }
    Trajectory::new(id, out, conditions.to_vec())
}

pub fn write_trajectory(traj: &Trajectory, path: &Path) -> Result<()> {
    write_trajectory_to(traj, BufWriter::new(File::create(path)?))
}

/// Read `path` with the file stem as id, no conditions and unit frame spacing.
pub fn read_trajectory(path: &Path) -> Result<Trajectory> {
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    read_trajectory_from(BufReader::new(File::open(path)?), &id, &[], 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(n: usize, d: usize, c: usize, v: f64) -> DomainObservation<f64> {
        DomainObservation::new(Tensor::full(&[n, d], v), Tensor::full(&[n, c], -v)).unwrap()
    }

    fn minimal() -> Trajectory {
        let f = SystemState::new(obs(1, 1, 1, 0.5), obs(1, 1, 1, 1.5), obs(1, 1, 2, 2.5), vec![], 0.0).unwrap();
        Trajectory::new("t", vec![f], vec![]).unwrap()
    }

    #[test]
    fn smallest_file_is_68_bytes() {
        let mut buf = Vec::new();
        write_trajectory_to(&minimal(), &mut buf).unwrap();
        assert_eq!(buf.len(), 4 + 9 * 4 + (1 + 1 + 1 + 1 + 1 + 2) * 4);
        assert_eq!(buf.len(), 68);
        assert_eq!(&buf[..4], b"FSL1");
        let back = read_trajectory_from(buf.as_slice(), "t", &[], 1.0).unwrap();
        assert_eq!(back, minimal());
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let mut buf = Vec::new();
        write_trajectory_to(&minimal(), &mut buf).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_trajectory_from(bad.as_slice(), "t", &[], 1.0), Err(Error::Format(_))));
        let cut = &buf[..buf.len() - 1];
        assert!(matches!(read_trajectory_from(cut, "t", &[], 1.0), Err(Error::Format(_))));
        let mut long = buf.clone();
        long.push(0);
        assert!(read_trajectory_from(long.as_slice(), "t", &[], 1.0).is_err());
    }

    #[test]
    fn rejects_channel_accounting_violation() {
        let mut buf = Vec::new();
        write_trajectory_to(&minimal(), &mut buf).unwrap();
        // C_b is the last header word
        buf[36..40].copy_from_slice(&3u32.to_le_bytes());
        assert!(read_trajectory_from(buf.as_slice(), "t", &[], 1.0).is_err());
    }

    #[test]
    fn rejects_ragged_frames() {
        let a = SystemState::new(obs(1, 1, 1, 0.0), obs(1, 1, 1, 0.0), obs(1, 1, 2, 0.0), vec![], 0.0).unwrap();
        let b = SystemState::new(obs(2, 1, 1, 0.0), obs(1, 1, 1, 0.0), obs(1, 1, 2, 0.0), vec![], 1.0).unwrap();
        assert!(Trajectory::new("r", vec![a, b], vec![]).is_err());
        assert!(Trajectory::new("e", vec![], vec![]).is_err());
    }

    #[test]
    fn frames_carry_conditions_and_times() {
        let mut t = minimal();
        t.frames.push(t.frames[0].clone());
        let mut buf = Vec::new();
        write_trajectory_to(&t, &mut buf).unwrap();
        let back = read_trajectory_from(buf.as_slice(), "t", &[3.0], 0.25).unwrap();
        assert_eq!(back.frames[1].time, 0.25);
        assert_eq!(back.frames[1].conditions, vec![3.0]);
        assert_eq!(back.conditions, vec![3.0]);
    }
}
