use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape_err, Result};
use crate::tensor_core::tensor::{Scalar, Tensor};

/// Floor applied to every standard deviation.
pub const STD_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Fluid,
    Solid,
    Interface,
}

impl Domain {
    pub const ALL: [Domain; 3] = [Domain::Fluid, Domain::Solid, Domain::Interface];

    pub fn name(self) -> &'static str {
        match self {
            Domain::Fluid => "fluid",
            Domain::Solid => "solid",
            Domain::Interface => "interface",
        }
    }
}

impl std::fmt::Display for Domain {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Positions `[N×d]` and physical quantities `[N×C]` of one domain at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainObservation<T> {
    pub positions: Tensor<T>,
    pub quantities: Tensor<T>,
}

impl<T: Scalar> DomainObservation<T> {
    pub fn new(positions: Tensor<T>, quantities: Tensor<T>) -> Result<Self> {
        if positions.rank() != 2 || quantities.rank() != 2 {
            return Err(shape_err!("observation tensors must be rank 2"));
        }
        if positions.rows() != quantities.rows() {
            return Err(shape_err!(
                "{} positions but {} quantity rows",
                positions.rows(),
                quantities.rows()
            ));
        }
        if !(1..=3).contains(&positions.cols()) {
            return Err(invalid!("spatial dimension {} not in 1..=3", positions.cols()));
        }
        Ok(Self {
            positions,
            quantities,
        })
    }

    pub fn len(&self) -> usize {
        self.positions.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.positions.cols()
    }

    pub fn channels(&self) -> usize {
        self.quantities.cols()
    }

    /// `[positions | quantities]` as one `[N×(d+C)]` tensor.
    pub fn stacked(&self) -> Tensor<T> {
        Tensor::concat_cols(&[&self.positions, &self.quantities])
            .expect("row counts agree by construction")
    }

    pub fn from_stacked(t: &Tensor<T>, d: usize) -> Result<Self> {
        if t.cols() <= d {
            return Err(shape_err!("stacked width {} leaves no channels after d={d}", t.cols()));
        }
        Self::new(t.slice_cols(0, d)?, t.slice_cols(d, t.cols() - d)?)
    }

    pub fn cast<U: Scalar>(&self) -> DomainObservation<U> {
        DomainObservation {
            positions: self.positions.cast(),
            quantities: self.quantities.cast(),
        }
    }
}

/// Fluid, solid and interface observations plus condition parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState<T> {
    pub fluid: DomainObservation<T>,
    pub solid: DomainObservation<T>,
    pub interface: DomainObservation<T>,
    pub conditions: Vec<T>,
    pub time: f64,
}

impl<T: Scalar> SystemState<T> {
    pub fn new(
        fluid: DomainObservation<T>,
        solid: DomainObservation<T>,
        interface: DomainObservation<T>,
        conditions: Vec<T>,
        time: f64,
    ) -> Result<Self> {
        let s = Self {
            fluid,
            solid,
            interface,
            conditions,
            time,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.fluid.dim();
        if self.solid.dim() != d || self.interface.dim() != d {
            return Err(shape_err!("domains disagree on spatial dimension"));
        }
        let (cf, cs, cb) = (
            self.fluid.channels(),
            self.solid.channels(),
            self.interface.channels(),
        );
        if cb != cf + cs {
            return Err(invalid!(
                "interface has {cb} channels, expected fluid {cf} + solid {cs}"
            ));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.fluid.dim()
    }

    pub fn domain(&self, d: Domain) -> &DomainObservation<T> {
        match d {
            Domain::Fluid => &self.fluid,
            Domain::Solid => &self.solid,
            Domain::Interface => &self.interface,
        }
    }

    pub fn domain_mut(&mut self, d: Domain) -> &mut DomainObservation<T> {
        match d {
            Domain::Fluid => &mut self.fluid,
            Domain::Solid => &mut self.solid,
            Domain::Interface => &mut self.interface,
        }
    }

    pub fn cast<U: Scalar>(&self) -> SystemState<U> {
        SystemState {
            fluid: self.fluid.cast(),
            solid: self.solid.cast(),
            interface: self.interface.cast(),
            conditions: self.conditions.iter().map(|c| U::of(c.as_f64())).collect(),
            time: self.time,
        }
    }
}

/// Per-channel mean and (floored) standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ChannelStats {
    pub fn identity(channels: usize) -> Self {
        Self {
            mean: vec![0.0; channels],
            std: vec![1.0; channels],
        }
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    /// Population statistics over rows of equal width (Welford).
    pub fn from_rows<'a>(width: usize, rows: impl IntoIterator<Item = &'a [f64]>) -> Result<Self> {
        let mut n = 0usize;
        let mut mean = vec![0.0; width];
        let mut m2 = vec![0.0; width];
        for row in rows {
            if row.len() != width {
                return Err(shape_err!("row of width {} in {width}-channel stats", row.len()));
            }
            n += 1;
            for c in 0..width {
                let delta = row[c] - mean[c];
                mean[c] += delta / n as f64;
                m2[c] += delta * (row[c] - mean[c]);
            }
        }
        if n == 0 && width > 0 {
            return Err(invalid!("statistics over an empty set"));
        }
        let std = m2
            .iter()
            .map(|&s| (s / n.max(1) as f64).sqrt().max(STD_FLOOR))
            .collect();
        Ok(Self { mean, std })
    }

    fn check(&self, width: usize) -> Result<()> {
        if self.mean.len() != width || self.std.len() != width {
            return Err(shape_err!(
                "stats cover {} channels, data has {width}",
                self.mean.len()
            ));
        }
        Ok(())
    }

    pub fn normalize<T: Scalar>(&self, t: &Tensor<T>) -> Result<Tensor<T>> {
        self.check(t.cols())?;
        let c = t.cols();
        let mut out = t.clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            let k = i % c;
            *v = T::of((v.as_f64() - self.mean[k]) / self.std[k]);
        }
        Ok(out)
    }

    pub fn denormalize<T: Scalar>(&self, t: &Tensor<T>) -> Result<Tensor<T>> {
        self.check(t.cols())?;
        let c = t.cols();
        let mut out = t.clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            let k = i % c;
            *v = T::of(v.as_f64() * self.std[k] + self.mean[k]);
        }
        Ok(out)
    }

    pub fn normalize_values<T: Scalar>(&self, v: &[T]) -> Result<Vec<T>> {
        self.check(v.len())?;
        Ok(v
            .iter()
            .enumerate()
            .map(|(k, x)| T::of((x.as_f64() - self.mean[k]) / self.std[k]))
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct DomainStats {
    pub positions: ChannelStats,
    pub quantities: ChannelStats,
}

/// Normalization statistics for all three domains and the condition vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct NormStats {
    pub fluid: DomainStats,
    pub solid: DomainStats,
    pub interface: DomainStats,
    #[serde(default)]
    pub conditions: ChannelStats,
}

impl NormStats {
    /// Zero mean, unit deviation everywhere.
    pub fn identity(d: usize, channels: [usize; 3], conditions: usize) -> Self {
        let dom = |c| DomainStats {
            positions: ChannelStats::identity(d),
            quantities: ChannelStats::identity(c),
        };
        Self {
            fluid: dom(channels[0]),
            solid: dom(channels[1]),
            interface: dom(channels[2]),
            conditions: ChannelStats::identity(conditions),
        }
    }

    pub fn domain(&self, d: Domain) -> &DomainStats {
        match d {
            Domain::Fluid => &self.fluid,
            Domain::Solid => &self.solid,
            Domain::Interface => &self.interface,
        }
    }

    pub fn normalize_state<T: Scalar>(&self, s: &SystemState<T>) -> Result<SystemState<T>> {
        Ok(SystemState {
            fluid: normalize_with_stats(&s.fluid, &self.fluid)?,
            solid: normalize_with_stats(&s.solid, &self.solid)?,
            interface: normalize_with_stats(&s.interface, &self.interface)?,
            conditions: self.conditions.normalize_values(&s.conditions)?,
            time: s.time,
        })
    }

    pub fn denormalize_observation<T: Scalar>(
        &self,
        d: Domain,
        obs: &DomainObservation<T>,
    ) -> Result<DomainObservation<T>> {
        let st = self.domain(d);
        DomainObservation::new(
            st.positions.denormalize(&obs.positions)?,
            st.quantities.denormalize(&obs.quantities)?,
        )
    }
}

/// `(obs − mean) / std` channelwise for positions and quantities.
pub fn normalize_with_stats<T: Scalar>(
    obs: &DomainObservation<T>,
    stats: &DomainStats,
) -> Result<DomainObservation<T>> {
    DomainObservation::new(
        stats.positions.normalize(&obs.positions)?,
        stats.quantities.normalize(&obs.quantities)?,
    )
}
