//! Seeded synthetic labelling tasks.
//!
//! Every feature value is rounded to `f32` at generation time so that a
//! dataset written to disk as 32-bit floats reloads without change.

use super::Sample;
use crate::error::{Error, Result};
use crate::field::{Field, LabelMap, IGNORE_LABEL};
use crate::grid::GridDims;
use crate::numerics::Rng;

/// Class of marker cells of type A.
pub const MARKER_A: u8 = 0;
/// Class of marker cells of type B.
pub const MARKER_B: u8 = 1;
/// Ambiguous-region class when the marker is of type A.
pub const CONTEXT_A: u8 = 2;
/// Ambiguous-region class when the marker is of type B.
pub const CONTEXT_B: u8 = 3;
pub const MARKER_CLASSES: usize = 4;
/// Channels: marker-A indicator, marker-B indicator, ambiguous-region indicator.
pub const MARKER_CHANNELS: usize = 3;

/// Long-range context task: a small marker patch in one corner decides the
/// label of a distant region whose own features never differ between the
/// two contexts. Background units are unlabelled.
#[derive(Clone, Debug, PartialEq)]
pub struct MarkerSpec {
    pub dims: GridDims,
    pub noise_sigma: f64,
    /// Side of the square marker patch, in units.
    pub marker_extent: usize,
    pub n_samples: usize,
    pub seed: u64,
}

/// Placement of marker and ambiguous region for one corner.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MarkerLayout {
    /// 0 top-left, 1 top-right, 2 bottom-left, 3 bottom-right.
    pub corner: usize,
    pub marker_extent: usize,
    pub region_extent: usize,
}

impl MarkerLayout {
    fn square(dims: GridDims, corner: usize, extent: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let rows = if corner >= 2 { dims.rows - extent..dims.rows } else { 0..extent };
        let cols = if corner % 2 == 1 { dims.cols - extent..dims.cols } else { 0..extent };
        (rows, cols)
    }

    /// Row and column ranges of the marker patch.
    pub fn marker(&self, dims: GridDims) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        Self::square(dims, self.corner, self.marker_extent)
    }

    /// Row and column ranges of the ambiguous region (opposite corner).
    pub fn region(&self, dims: GridDims) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        Self::square(dims, 3 - self.corner, self.region_extent)
    }
}

impl MarkerSpec {
    /// Minimum Chebyshev distance between marker and ambiguous region.
    pub fn min_separation(&self) -> usize {
        self.dims.rows.max(self.dims.cols).div_ceil(2)
    }

    /// Largest ambiguous region that keeps the required separation.
    pub fn region_extent(&self) -> Result<usize> {
        let (h, w, m) = (self.dims.rows, self.dims.cols, self.marker_extent);
        if m == 0 || m >= h.min(w) {
            return Err(Error::invalid(format!("marker extent {m} does not fit a {} grid", self.dims)));
        }
        let need = self.min_separation();
        // Opposite-corner squares of sides m and r are max(h, w) - m - r + 1 apart.
        let reach = (h.max(w) + 1).saturating_sub(m + need);
        let r = reach.min(h.min(w) - m);
        if r == 0 {
            return Err(Error::invalid(format!(
                "no room for an ambiguous region {need} units from a {m}-unit marker on a {} grid",
                self.dims
            )));
        }
        Ok(r)
    }

    pub fn layout(&self, sample_index: usize) -> Result<MarkerLayout> {
        Ok(MarkerLayout {
            corner: sample_index % 4,
            marker_extent: self.marker_extent,
            region_extent: self.region_extent()?,
        })
    }
}

fn round_f32(x: f64) -> f64 {
    x as f32 as f64
}

pub fn gen_marker_task(spec: &MarkerSpec) -> Result<Vec<Sample>> {
    if !(spec.noise_sigma >= 0.0) {
        return Err(Error::invalid("noise sigma must be non-negative"));
    }
    let dims = GridDims::new(spec.dims.rows, spec.dims.cols)?;
    spec.region_extent()?;
    let mut master = Rng::new(spec.seed);
    let mut out = Vec::with_capacity(spec.n_samples);
    for i in 0..spec.n_samples {
        let mut rng = master.fork();
        let is_b = rng.coin();
        let layout = spec.layout(i)?;
        out.push(marker_sample(dims, &layout, is_b, spec.noise_sigma, &mut rng)?);
    }
    Ok(out)
}

/// One marker-task sample with explicit layout and marker type; noise is
/// drawn from `rng` in unit-major order independent of the marker type.
pub fn marker_sample(
    dims: GridDims,
    layout: &MarkerLayout,
    marker_b: bool,
    noise_sigma: f64,
    rng: &mut Rng,
) -> Result<Sample> {
    let c = MARKER_CHANNELS;
    let mut features = vec![0.0; dims.len() * c];
    let mut labels = vec![IGNORE_LABEL; dims.len()];
    let (mr, mc) = layout.marker(dims);
    for r in mr {
        for col in mc.clone() {
            let g = r * dims.cols + col;
            features[g * c + usize::from(marker_b)] = 1.0;
            labels[g] = if marker_b { MARKER_B } else { MARKER_A };
        }
    }
    let (rr, rc) = layout.region(dims);
    for r in rr {
        for col in rc.clone() {
            let g = r * dims.cols + col;
            features[g * c + 2] = 1.0;
            labels[g] = if marker_b { CONTEXT_B } else { CONTEXT_A };
        }
    }
    for f in &mut features {
        let noise = rng.normal();
        *f = round_f32(*f + noise_sigma * noise);
    }
    Ok(Sample { features: Field::from_vec(dims, c, features)?, labels: LabelMap::new(dims, labels)? })
}

/// Voronoi partition task: one site per class at distinct random units,
/// features are the one-hot class mean plus Gaussian noise.
#[derive(Clone, Debug, PartialEq)]
pub struct BlobSpec {
    pub dims: GridDims,
    pub classes: usize,
    pub noise_sigma: f64,
    pub n_samples: usize,
    pub seed: u64,
}

pub fn gen_blob_task(spec: &BlobSpec) -> Result<Vec<Sample>> {
    let dims = GridDims::new(spec.dims.rows, spec.dims.cols)?;
    let k = spec.classes;
    if !(2..=255).contains(&k) {
        return Err(Error::invalid(format!("blob task needs 2..=255 classes, got {k}")));
    }
    if k > dims.len() {
        return Err(Error::invalid(format!("{k} sites do not fit a {dims} grid")));
    }
    if !(spec.noise_sigma >= 0.0) {
        return Err(Error::invalid("noise sigma must be non-negative"));
    }
    let mut master = Rng::new(spec.seed);
    let mut out = Vec::with_capacity(spec.n_samples);
    for _ in 0..spec.n_samples {
        let mut rng = master.fork();
        let mut cells: Vec<usize> = (0..dims.len()).collect();
        rng.shuffle(&mut cells);
        let sites: Vec<(i64, i64)> = cells[..k]
            .iter()
            .map(|&g| ((g / dims.cols) as i64, (g % dims.cols) as i64))
            .collect();
        let mut labels = Vec::with_capacity(dims.len());
        let mut features = Vec::with_capacity(dims.len() * k);
        for g in 0..dims.len() {
            let (r, c) = ((g / dims.cols) as i64, (g % dims.cols) as i64);
            let mut best = 0;
            let mut best_d = i64::MAX;
            for (s, &(sr, sc)) in sites.iter().enumerate() {
                let d = (r - sr).pow(2) + (c - sc).pow(2);
                if d < best_d {
                    best_d = d;
                    best = s;
                }
            }
            labels.push(best as u8);
            for ch in 0..k {
                let mean = if ch == best { 1.0 } else { 0.0 };
                features.push(round_f32(mean + spec.noise_sigma * rng.normal()));
            }
        }
        out.push(Sample { features: Field::from_vec(dims, k, features)?, labels: LabelMap::new(dims, labels)? });
    }
    Ok(out)
}

/// `1×N` copy task: every label equals the class one-hot encoded in the
/// first unit; the other units carry noise only.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainSpec {
    pub len: usize,
    pub classes: usize,
    pub noise_sigma: f64,
    pub n_samples: usize,
    pub seed: u64,
}

pub fn gen_chain_task(spec: &ChainSpec) -> Result<Vec<Sample>> {
    if spec.len < 2 {
        return Err(Error::invalid("chain task needs at least two units"));
    }
    if spec.classes < 2 || spec.classes > 255 {
        return Err(Error::invalid("chain task needs 2..=255 classes"));
    }
    if !(spec.noise_sigma >= 0.0) {
        return Err(Error::invalid("noise sigma must be non-negative"));
    }
    let dims = GridDims::new(1, spec.len)?;
    let k = spec.classes;
    let mut master = Rng::new(spec.seed);
    let mut out = Vec::with_capacity(spec.n_samples);
    for _ in 0..spec.n_samples {
        let mut rng = master.fork();
        let class = rng.below(k);
        let mut features = vec![0.0; dims.len() * k];
        features[class] = 1.0;
        for f in &mut features {
            *f = round_f32(*f + spec.noise_sigma * rng.normal());
        }
        out.push(Sample {
            features: Field::from_vec(dims, k, features)?,
            labels: LabelMap::filled(dims, class as u8),
        });
    }
    Ok(out)
}
