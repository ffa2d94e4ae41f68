//! Samples, synthetic tasks and on-disk formats.
//!
//! A dataset directory holds one features file and one labels file per
//! sample plus a `manifest.txt` listing sample ids, one per line:
//!
//! ```text
//! <root>/manifest.txt
//! <root>/sample_00000.features.ddrt   f32, dims [H, W, C]
//! <root>/sample_00000.labels.ddrt     u8,  dims [H, W]
//! ```

mod image;
mod synth;
mod tensor_file;

use std::fs;
use std::path::Path;

pub use image::{encode_pgm, encode_ppm, export_color_map, export_label_map, palette, read_pgm};
pub use synth::{
    gen_blob_task, gen_chain_task, gen_marker_task, marker_sample, BlobSpec, ChainSpec, MarkerLayout, MarkerSpec,
    CONTEXT_A, CONTEXT_B, MARKER_A, MARKER_B, MARKER_CHANNELS, MARKER_CLASSES,
};
pub use tensor_file::{load_tensor, save_tensor, DType, Tensor, TensorData, MAGIC, MAX_RANK, VERSION};

use crate::error::{Error, Result};
use crate::field::{Field, LabelMap};
use crate::grid::GridDims;

/// One labelled grid: per-unit input features and target labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub features: Field<f64>,
    pub labels: LabelMap,
}

impl Sample {
    pub fn new(features: Field<f64>, labels: LabelMap) -> Result<Self> {
        if features.dims() != labels.dims() {
            return Err(Error::shape(format!(
                "features are {}, labels are {}",
                features.dims(),
                labels.dims()
            )));
        }
        Ok(Sample { features, labels })
    }

    pub fn dims(&self) -> GridDims {
        self.labels.dims()
    }
}

pub const MANIFEST: &str = "manifest.txt";

pub fn sample_id(index: usize) -> String {
    format!("sample_{index:05}")
}

pub fn features_tensor(features: &Field<f64>) -> Tensor {
    let d = features.dims();
    let values = features.as_slice().iter().map(|&x| x as f32).collect();
    Tensor { dims: vec![d.rows, d.cols, features.channels()], data: TensorData::F32(values) }
}

pub fn labels_tensor(labels: &LabelMap) -> Tensor {
    let d = labels.dims();
    Tensor { dims: vec![d.rows, d.cols], data: TensorData::U8(labels.as_slice().to_vec()) }
}

/// Interprets a rank-3 float tensor as an `H×W×C` feature field.
pub fn features_from_tensor(t: &Tensor, origin: &Path) -> Result<Field<f64>> {
    if t.dims.len() != 3 || matches!(t.data, TensorData::U8(_)) {
        return Err(Error::format(origin, format!("features must be a rank-3 float tensor, got {:?} {:?}", t.data.dtype(), t.dims)));
    }
    let dims = GridDims::new(t.dims[0], t.dims[1])?;
    Field::from_vec(dims, t.dims[2], t.data.to_f64())
}

pub fn labels_from_tensor(t: &Tensor, origin: &Path) -> Result<LabelMap> {
    match &t.data {
        TensorData::U8(v) if t.dims.len() == 2 => LabelMap::new(GridDims::new(t.dims[0], t.dims[1])?, v.clone()),
        _ => Err(Error::format(origin, format!("labels must be a rank-2 u8 tensor, got {:?} {:?}", t.data.dtype(), t.dims))),
    }
}

/// Writes samples into `root`, creating it if needed. Features are stored as
/// `f32`; values not representable in `f32` are rounded.
pub fn save_dataset(root: impl AsRef<Path>, samples: &[Sample]) -> Result<()> {
    let root = root.as_ref();
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let mut manifest = String::new();
    for (i, s) in samples.iter().enumerate() {
        let id = sample_id(i);
        save_tensor(root.join(format!("{id}.features.ddrt")), &features_tensor(&s.features))?;
        save_tensor(root.join(format!("{id}.labels.ddrt")), &labels_tensor(&s.labels))?;
        manifest.push_str(&id);
        manifest.push('\n');
    }
    let path = root.join(MANIFEST);
    fs::write(&path, manifest).map_err(|e| Error::io(&path, e))
}

pub fn load_dataset(root: impl AsRef<Path>) -> Result<Vec<Sample>> {
    let root = root.as_ref();
    let path = root.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut out = Vec::new();
    for id in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        if id.contains(['/', '\\']) || id.starts_with('.') {
            return Err(Error::format(&path, format!("invalid sample id `{id}`")));
        }
        let fp = root.join(format!("{id}.features.ddrt"));
        let lp = root.join(format!("{id}.labels.ddrt"));
        let features = features_from_tensor(&load_tensor(&fp)?, &fp)?;
        let labels = labels_from_tensor(&load_tensor(&lp)?, &lp)?;
        out.push(Sample::new(features, labels).map_err(|e| Error::format(&fp, e.to_string()))?);
    }
    Ok(out)
}
