use crate::error::{Error, Result};
use crate::grid::GridDims;
use crate::numerics::Real;

/// Label value excluded from the loss and from every metric.
pub const IGNORE_LABEL: u8 = 255;

/// `H×W×C` array stored unit-major: the `C` channels of a unit are contiguous
/// and units follow global row-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct Field<T> {
    dims: GridDims,
    channels: usize,
    data: Vec<T>,
}

impl<T: Real> Field<T> {
    pub fn zeros(dims: GridDims, channels: usize) -> Self {
        Field { dims, channels, data: vec![T::zero(); dims.len() * channels] }
    }

    pub fn from_vec(dims: GridDims, channels: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != dims.len() * channels {
            return Err(Error::shape(format!(
                "{dims}x{channels} field needs {} values, got {}",
                dims.len() * channels,
                data.len()
            )));
        }
        Ok(Field { dims, channels, data })
    }

    pub fn dims(&self) -> GridDims {
        self.dims
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn unit(&self, index: usize) -> &[T] {
        &self.data[index * self.channels..(index + 1) * self.channels]
    }

    #[inline]
    pub fn unit_mut(&mut self, index: usize) -> &mut [T] {
        &mut self.data[index * self.channels..(index + 1) * self.channels]
    }

    pub fn at(&self, row: usize, col: usize) -> &[T] {
        self.unit(row * self.dims.cols + col)
    }

    pub fn cast<U: Real>(&self) -> Field<U> {
        Field {
            dims: self.dims,
            channels: self.channels,
            data: self
                .data
                .iter()
                .map(|&x| U::from_f64_lossy(x.to_f64().unwrap_or(f64::NAN)))
                .collect(),
        }
    }
}

/// Per-unit class indices, with [`IGNORE_LABEL`] marking excluded units.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMap {
    dims: GridDims,
    labels: Vec<u8>,
}

impl LabelMap {
    pub fn new(dims: GridDims, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != dims.len() {
            return Err(Error::shape(format!(
                "{dims} label map needs {} labels, got {}",
                dims.len(),
                labels.len()
            )));
        }
        Ok(LabelMap { dims, labels })
    }

    pub fn filled(dims: GridDims, label: u8) -> Self {
        LabelMap { dims, labels: vec![label; dims.len()] }
    }

    pub fn dims(&self) -> GridDims {
        self.dims
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.labels
    }

    pub fn as_mut_slice(&mut self) -> &mut [u8] {
        &mut self.labels
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.labels[row * self.dims.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, label: u8) {
        self.labels[row * self.dims.cols + col] = label;
    }

    /// Units that take part in the loss and metrics.
    pub fn valid_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l != IGNORE_LABEL).count()
    }

    /// Fails if any non-ignored label is `>= classes`.
    pub fn check_classes(&self, classes: usize) -> Result<()> {
        match self.labels.iter().find(|&&l| l != IGNORE_LABEL && l as usize >= classes) {
            Some(l) => Err(Error::shape(format!("label {l} out of range for {classes} classes"))),
            None => Ok(()),
        }
    }
}
