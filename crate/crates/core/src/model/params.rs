use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::grid::Direction;
use crate::numerics::{Matrix, Real, Rng};

/// Recurrence used inside every direction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Linear recurrence over the sweep order; only valid on `1×N` grids.
    Chain,
    /// Sum over the three adjacent predecessors.
    PlainDag,
    /// Sum over all dense predecessors.
    DenseSum,
    /// Attention-weighted combination of per-predecessor activations.
    DenseAttention,
}

impl Variant {
    pub const ALL: [Variant; 4] =
        [Variant::Chain, Variant::PlainDag, Variant::DenseSum, Variant::DenseAttention];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Chain => "chain",
            Variant::PlainDag => "plain-dag",
            Variant::DenseSum => "dense-sum",
            Variant::DenseAttention => "dense-attention",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "chain" => Ok(Variant::Chain),
            "plain-dag" | "plain" => Ok(Variant::PlainDag),
            "dense-sum" => Ok(Variant::DenseSum),
            "dense-attention" | "attention" => Ok(Variant::DenseAttention),
            other => Err(Error::invalid(format!("unknown variant `{other}`"))),
        }
    }
}

/// Hidden width used at desk scale.
pub const DEFAULT_HIDDEN: usize = 32;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    pub in_channels: usize,
    pub hidden: usize,
    pub classes: usize,
    pub variant: Variant,
    /// Active directions, sorted and without duplicates.
    pub directions: Vec<Direction>,
}

impl ModelConfig {
    pub fn new(
        in_channels: usize,
        hidden: usize,
        classes: usize,
        variant: Variant,
        directions: &[Direction],
    ) -> Result<Self> {
        let mut dirs = directions.to_vec();
        dirs.sort();
        dirs.dedup();
        let cfg = ModelConfig { in_channels, hidden, classes, variant, directions: dirs };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 {
            return Err(Error::invalid("in_channels must be >= 1"));
        }
        if self.hidden == 0 {
            return Err(Error::invalid("hidden dimension must be >= 1"));
        }
        if self.classes < 2 {
            return Err(Error::invalid("need at least two classes"));
        }
        if self.classes > 255 {
            return Err(Error::invalid("at most 255 classes fit next to the ignore label"));
        }
        if self.directions.is_empty() {
            return Err(Error::invalid("at least one direction is required"));
        }
        if self.directions.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("directions must be sorted and unique"));
        }
        Ok(())
    }
}

/// Per-direction weights: input transform `u`, recurrent transform `w`,
/// output transform `v`, bias `b` and attention vector `z`.
#[derive(Clone, Debug, PartialEq)]
pub struct DirectionParams<T> {
    pub u: Matrix<T>,
    pub w: Matrix<T>,
    pub v: Matrix<T>,
    pub b: Vec<T>,
    pub z: Vec<T>,
}

impl<T: Real> DirectionParams<T> {
    pub fn zeros(hidden: usize, classes: usize) -> Self {
        DirectionParams {
            u: Matrix::zeros(hidden, hidden),
            w: Matrix::zeros(hidden, hidden),
            v: Matrix::zeros(classes, hidden),
            b: vec![T::zero(); hidden],
            z: vec![T::zero(); hidden],
        }
    }

    pub fn hidden(&self) -> usize {
        self.b.len()
    }

    pub(crate) fn check(&self, hidden: usize, classes: usize) -> Result<()> {
        let ok = self.u.rows() == hidden
            && self.u.cols() == hidden
            && self.w.rows() == hidden
            && self.w.cols() == hidden
            && self.v.rows() == classes
            && self.v.cols() == hidden
            && self.b.len() == hidden
            && self.z.len() == hidden;
        if ok {
            Ok(())
        } else {
            Err(Error::shape(format!(
                "direction parameters do not match hidden={hidden}, classes={classes}"
            )))
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T> {
    /// `D×C_in` embedding of raw unit channels.
    pub embed: Matrix<T>,
    pub embed_bias: Vec<T>,
    pub dirs: Vec<(Direction, DirectionParams<T>)>,
    /// Output bias shared by all directions.
    pub c: Vec<T>,
}

/// One parameter tensor viewed by name.
pub struct NamedTensor<'a, T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: &'a [T],
}

pub struct NamedTensorMut<'a, T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: &'a mut [T],
}

/// Learning-rate group of a parameter.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamGroup {
    Embedding,
    Recurrent,
}

pub fn param_group(name: &str) -> ParamGroup {
    if name.starts_with("embed") {
        ParamGroup::Embedding
    } else {
        ParamGroup::Recurrent
    }
}

impl<T: Real> ModelParams<T> {
    pub fn zeros(cfg: &ModelConfig) -> Self {
        ModelParams {
            embed: Matrix::zeros(cfg.hidden, cfg.in_channels),
            embed_bias: vec![T::zero(); cfg.hidden],
            dirs: cfg
                .directions
                .iter()
                .map(|&d| (d, DirectionParams::zeros(cfg.hidden, cfg.classes)))
                .collect(),
            c: vec![T::zero(); cfg.classes],
        }
    }

    /// Matrices uniform in `±sqrt(6 / (fan_in + fan_out))`, biases zero.
    /// `z` counts as a `1×D` matrix.
    pub fn init(cfg: &ModelConfig, rng: &mut Rng) -> Self {
        let mut p = Self::zeros(cfg);
        fill_fan_uniform(&mut p.embed, rng);
        for (_, dp) in &mut p.dirs {
            fill_fan_uniform(&mut dp.u, rng);
            fill_fan_uniform(&mut dp.w, rng);
            fill_fan_uniform(&mut dp.v, rng);
            let s = (6.0 / (cfg.hidden as f64 + 1.0)).sqrt();
            for z in &mut dp.z {
                *z = T::from_f64_lossy(rng.uniform(-s, s));
            }
        }
        p
    }

    pub fn hidden(&self) -> usize {
        self.embed.rows()
    }

    pub fn in_channels(&self) -> usize {
        self.embed.cols()
    }

    pub fn classes(&self) -> usize {
        self.c.len()
    }

    pub fn direction(&self, dir: Direction) -> Option<&DirectionParams<T>> {
        self.dirs.iter().find(|(d, _)| *d == dir).map(|(_, p)| p)
    }

    pub fn check(&self, cfg: &ModelConfig) -> Result<()> {
        if self.embed.rows() != cfg.hidden
            || self.embed.cols() != cfg.in_channels
            || self.embed_bias.len() != cfg.hidden
            || self.c.len() != cfg.classes
        {
            return Err(Error::shape(format!(
                "parameters are {}→{} with {} classes, config expects {}→{} with {}",
                self.in_channels(),
                self.hidden(),
                self.classes(),
                cfg.in_channels,
                cfg.hidden,
                cfg.classes
            )));
        }
        let dirs: Vec<Direction> = self.dirs.iter().map(|(d, _)| *d).collect();
        if dirs != cfg.directions {
            return Err(Error::shape(format!(
                "parameters cover directions {dirs:?}, config expects {:?}",
                cfg.directions
            )));
        }
        for (_, dp) in &self.dirs {
            dp.check(cfg.hidden, cfg.classes)?;
        }
        Ok(())
    }

    /// Every tensor in a fixed order: embedding, per-direction blocks in
    /// direction order, output bias.
    pub fn tensors(&self) -> Vec<NamedTensor<'_, T>> {
        let mut out = vec![
            NamedTensor {
                name: "embed".into(),
                shape: vec![self.embed.rows(), self.embed.cols()],
                values: self.embed.as_slice(),
            },
            NamedTensor {
                name: "embed_bias".into(),
                shape: vec![self.embed_bias.len()],
                values: &self.embed_bias,
            },
        ];
        for (d, dp) in &self.dirs {
            out.push(NamedTensor {
                name: format!("{d}.u"),
                shape: vec![dp.u.rows(), dp.u.cols()],
                values: dp.u.as_slice(),
            });
            out.push(NamedTensor {
                name: format!("{d}.w"),
                shape: vec![dp.w.rows(), dp.w.cols()],
                values: dp.w.as_slice(),
            });
            out.push(NamedTensor { name: format!("{d}.b"), shape: vec![dp.b.len()], values: &dp.b });
            out.push(NamedTensor { name: format!("{d}.z"), shape: vec![dp.z.len()], values: &dp.z });
            out.push(NamedTensor {
                name: format!("{d}.v"),
                shape: vec![dp.v.rows(), dp.v.cols()],
                values: dp.v.as_slice(),
            });
        }
        out.push(NamedTensor { name: "c".into(), shape: vec![self.c.len()], values: &self.c });
        out
    }

    /// Mutable counterpart of [`ModelParams::tensors`], same order.
    pub fn tensors_mut(&mut self) -> Vec<NamedTensorMut<'_, T>> {
        let mut out = Vec::with_capacity(3 + 5 * self.dirs.len());
        let shape = vec![self.embed.rows(), self.embed.cols()];
        out.push(NamedTensorMut { name: "embed".into(), shape, values: self.embed.as_mut_slice() });
        let shape = vec![self.embed_bias.len()];
        out.push(NamedTensorMut { name: "embed_bias".into(), shape, values: &mut self.embed_bias });
        for (d, dp) in &mut self.dirs {
            let shape = vec![dp.u.rows(), dp.u.cols()];
            out.push(NamedTensorMut { name: format!("{d}.u"), shape, values: dp.u.as_mut_slice() });
            let shape = vec![dp.w.rows(), dp.w.cols()];
            out.push(NamedTensorMut { name: format!("{d}.w"), shape, values: dp.w.as_mut_slice() });
            let shape = vec![dp.b.len()];
            out.push(NamedTensorMut { name: format!("{d}.b"), shape, values: &mut dp.b });
            let shape = vec![dp.z.len()];
            out.push(NamedTensorMut { name: format!("{d}.z"), shape, values: &mut dp.z });
            let shape = vec![dp.v.rows(), dp.v.cols()];
            out.push(NamedTensorMut { name: format!("{d}.v"), shape, values: dp.v.as_mut_slice() });
        }
        let shape = vec![self.c.len()];
        out.push(NamedTensorMut { name: "c".into(), shape, values: &mut self.c });
        out
    }

    pub fn num_values(&self) -> usize {
        self.tensors().iter().map(|t| t.values.len()).sum()
    }

    pub fn flatten(&self) -> Vec<T> {
        self.tensors().iter().flat_map(|t| t.values.iter().copied()).collect()
    }

    /// Overwrites every value from a flat vector in [`ModelParams::tensors`] order.
    pub fn assign_flat(&mut self, flat: &[T]) -> Result<()> {
        if flat.len() != self.num_values() {
            return Err(Error::shape(format!(
                "flat parameter vector has {} values, model has {}",
                flat.len(),
                self.num_values()
            )));
        }
        let mut offset = 0;
        for t in self.tensors_mut() {
            let n = t.values.len();
            t.values.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    /// Name and in-tensor offset of a flat coordinate.
    pub fn locate(&self, flat_index: usize) -> Option<(String, usize)> {
        let mut offset = 0;
        for t in self.tensors() {
            if flat_index < offset + t.values.len() {
                return Some((t.name, flat_index - offset));
            }
            offset += t.values.len();
        }
        None
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        let cv = |v: &Vec<T>| v.iter().map(|&x| U::from_f64_lossy(x.to_f64().unwrap_or(f64::NAN))).collect();
        ModelParams {
            embed: self.embed.cast(),
            embed_bias: cv(&self.embed_bias),
            dirs: self
                .dirs
                .iter()
                .map(|(d, dp)| {
                    (
                        *d,
                        DirectionParams {
                            u: dp.u.cast(),
                            w: dp.w.cast(),
                            v: dp.v.cast(),
                            b: cv(&dp.b),
                            z: cv(&dp.z),
                        },
                    )
                })
                .collect(),
            c: cv(&self.c),
        }
    }

    pub fn scale(&mut self, factor: T) {
        for t in self.tensors_mut() {
            for v in t.values.iter_mut() {
                *v = *v * factor;
            }
        }
    }

    /// Euclidean norm over all values, accumulated in `f64`.
    pub fn l2_norm(&self) -> f64 {
        let mut acc = 0.0f64;
        for t in self.tensors() {
            for &v in t.values {
                let v = v.to_f64().unwrap_or(f64::NAN);
                acc += v * v;
            }
        }
        acc.sqrt()
    }
}

fn fill_fan_uniform<T: Real>(m: &mut Matrix<T>, rng: &mut Rng) {
    let s = (6.0 / (m.rows() + m.cols()) as f64).sqrt();
    for x in m.as_mut_slice() {
        *x = T::from_f64_lossy(rng.uniform(-s, s));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ModelConfig {
        ModelConfig::new(3, 6, 4, Variant::DenseAttention, &Direction::ALL).unwrap()
    }

    #[test]
    fn init_respects_bounds() {
        let cfg = cfg();
        let p = ModelParams::<f64>::init(&cfg, &mut Rng::new(1));
        let s_embed = (6.0f64 / 9.0).sqrt();
        assert!(p.embed.as_slice().iter().all(|x| x.abs() <= s_embed));
        assert!(p.embed_bias.iter().all(|&x| x == 0.0));
        for (_, dp) in &p.dirs {
            let s = (6.0f64 / 12.0).sqrt();
            assert!(dp.u.as_slice().iter().all(|x| x.abs() <= s));
            assert!(dp.b.iter().all(|&x| x == 0.0));
        }
        assert!(p.c.iter().all(|&x| x == 0.0));
        p.check(&cfg).unwrap();
    }

    #[test]
    fn flatten_roundtrip_and_locate() {
        let cfg = cfg();
        let p = ModelParams::<f64>::init(&cfg, &mut Rng::new(2));
        let flat = p.flatten();
        assert_eq!(flat.len(), 18 + 6 + 4 * (36 + 36 + 6 + 6 + 24) + 4);
        let mut q = ModelParams::zeros(&cfg);
        q.assign_flat(&flat).unwrap();
        assert_eq!(p, q);
        assert_eq!(p.locate(0), Some(("embed".into(), 0)));
        assert_eq!(p.locate(24), Some(("se.u".into(), 0)));
        assert_eq!(p.locate(flat.len() - 1), Some(("c".into(), 3)));
        assert_eq!(p.locate(flat.len()), None);
    }

    #[test]
    fn config_validation() {
        assert!(ModelConfig::new(3, 0, 4, Variant::Chain, &[Direction::SE]).is_err());
        assert!(ModelConfig::new(3, 4, 1, Variant::Chain, &[Direction::SE]).is_err());
        assert!(ModelConfig::new(3, 4, 2, Variant::Chain, &[]).is_err());
        let c = ModelConfig::new(3, 4, 2, Variant::Chain, &[Direction::NW, Direction::SE]).unwrap();
        assert_eq!(c.directions, vec![Direction::SE, Direction::NW]);
        assert_eq!("dense-attention".parse::<Variant>().unwrap(), Variant::DenseAttention);
        assert!("bogus".parse::<Variant>().is_err());
    }
}
