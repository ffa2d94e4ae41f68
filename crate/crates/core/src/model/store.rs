//! Model directories: a `manifest.txt` holding the configuration as
//! `key=value` lines followed by `param <name> <file>` lines, and one DDRT
//! tensor per parameter. Values are stored at the model's own precision so
//! a reload is bit-exact.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{ModelConfig, ModelParams, Variant};
use crate::data::{load_tensor, save_tensor, Tensor, TensorData};
use crate::error::{Error, Result};
use crate::grid::{parse_directions, Direction};
use crate::numerics::Precision;

pub const MODEL_MANIFEST: &str = "manifest.txt";
const FORMAT_TAG: &str = "ddrnn-model";
const FORMAT_VERSION: u32 = 1;

/// Parameters at either supported precision.
#[derive(Clone, Debug, PartialEq)]
pub enum AnyParams {
    Standard(ModelParams<f32>),
    Extended(ModelParams<f64>),
}

impl AnyParams {
    pub fn precision(&self) -> Precision {
        match self {
            AnyParams::Standard(_) => Precision::Standard,
            AnyParams::Extended(_) => Precision::Extended,
        }
    }

    pub fn to_f64(&self) -> ModelParams<f64> {
        match self {
            AnyParams::Standard(p) => p.cast(),
            AnyParams::Extended(p) => p.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SavedModel {
    pub config: ModelConfig,
    pub params: AnyParams,
}

fn directions_text(dirs: &[Direction]) -> String {
    dirs.iter().map(|d| d.as_str()).collect::<Vec<_>>().join(",")
}

fn tensor_file_name(name: &str) -> String {
    format!("{}.ddrt", name.replace('.', "_"))
}

pub fn save_model(dir: impl AsRef<Path>, model: &SavedModel) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let cfg = &model.config;
    let mut manifest = String::new();
    let _ = writeln!(manifest, "format={FORMAT_TAG}");
    let _ = writeln!(manifest, "version={FORMAT_VERSION}");
    let _ = writeln!(manifest, "variant={}", cfg.variant.as_str());
    let _ = writeln!(manifest, "directions={}", directions_text(&cfg.directions));
    let _ = writeln!(manifest, "in_channels={}", cfg.in_channels);
    let _ = writeln!(manifest, "hidden={}", cfg.hidden);
    let _ = writeln!(manifest, "classes={}", cfg.classes);
    let _ = writeln!(manifest, "precision={}", model.params.precision().as_str());

    let mut write_all = |tensors: Vec<(String, Vec<usize>, TensorData)>| -> Result<()> {
        for (name, shape, data) in tensors {
            let file = tensor_file_name(&name);
            save_tensor(dir.join(&file), &Tensor::new(shape, data)?)?;
            let _ = writeln!(manifest, "param {name} {file}");
        }
        Ok(())
    };
    match &model.params {
        AnyParams::Standard(p) => write_all(
            p.tensors().into_iter().map(|t| (t.name, t.shape, TensorData::F32(t.values.to_vec()))).collect(),
        )?,
        AnyParams::Extended(p) => write_all(
            p.tensors().into_iter().map(|t| (t.name, t.shape, TensorData::F64(t.values.to_vec()))).collect(),
        )?,
    }
    let path = dir.join(MODEL_MANIFEST);
    fs::write(&path, manifest).map_err(|e| Error::io(&path, e))
}

pub fn load_model(dir: impl AsRef<Path>) -> Result<SavedModel> {
    let dir = dir.as_ref();
    let path = dir.join(MODEL_MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let bad = |reason: String| Error::format(&path, reason);

    let mut keys = BTreeMap::new();
    let mut files = BTreeMap::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        if let Some(rest) = line.strip_prefix("param ") {
            let mut parts = rest.split_whitespace();
            match (parts.next(), parts.next(), parts.next()) {
                (Some(name), Some(file), None) if !file.contains(['/', '\\']) => {
                    if files.insert(name.to_string(), file.to_string()).is_some() {
                        return Err(bad(format!("parameter `{name}` listed twice")));
                    }
                }
                _ => return Err(bad(format!("malformed parameter line `{line}`"))),
            }
        } else if let Some((k, v)) = line.split_once('=') {
            keys.insert(k.trim().to_string(), v.trim().to_string());
        } else {
            return Err(bad(format!("unrecognised line `{line}`")));
        }
    }
    let get = |k: &str| keys.get(k).map(String::as_str).ok_or_else(|| bad(format!("missing key `{k}`")));
    if get("format")? != FORMAT_TAG {
        return Err(bad("not a model manifest".into()));
    }
    if get("version")? != FORMAT_VERSION.to_string() {
        return Err(bad(format!("unsupported model version {}", get("version")?)));
    }
    let num = |k: &str| get(k)?.parse::<usize>().map_err(|_| bad(format!("`{k}` is not a count")));
    let variant: Variant = get("variant")?.parse().map_err(|e: Error| bad(e.to_string()))?;
    let directions = parse_directions(get("directions")?).map_err(|e| bad(e.to_string()))?;
    let precision: Precision = get("precision")?.parse().map_err(|e: Error| bad(e.to_string()))?;
    let config = ModelConfig::new(num("in_channels")?, num("hidden")?, num("classes")?, variant, &directions)
        .map_err(|e| bad(e.to_string()))?;

    let mut tensors = BTreeMap::new();
    for (name, file) in &files {
        let fp = dir.join(file);
        tensors.insert(name.clone(), (load_tensor(&fp)?, fp));
    }
    let params = match precision {
        Precision::Standard => AnyParams::Standard(fill(&config, &mut tensors, &path, |d| match d {
            TensorData::F32(v) => Some(v),
            _ => None,
        })?),
        Precision::Extended => AnyParams::Extended(fill(&config, &mut tensors, &path, |d| match d {
            TensorData::F64(v) => Some(v),
            _ => None,
        })?),
    };
    if let Some(extra) = tensors.keys().next() {
        return Err(bad(format!("unexpected parameter `{extra}`")));
    }
    Ok(SavedModel { config, params })
}

fn fill<T: crate::numerics::Real>(
    config: &ModelConfig,
    tensors: &mut BTreeMap<String, (Tensor, std::path::PathBuf)>,
    manifest: &Path,
    values: impl Fn(TensorData) -> Option<Vec<T>>,
) -> Result<ModelParams<T>> {
    let mut params = ModelParams::zeros(config);
    for slot in params.tensors_mut() {
        let (tensor, fp) = tensors
            .remove(&slot.name)
            .ok_or_else(|| Error::format(manifest, format!("missing parameter `{}`", slot.name)))?;
        if tensor.dims != slot.shape {
            return Err(Error::format(&fp, format!("shape {:?}, expected {:?}", tensor.dims, slot.shape)));
        }
        let dtype = tensor.data.dtype();
        let v = values(tensor.data)
            .ok_or_else(|| Error::format(&fp, format!("dtype {dtype:?} does not match the model precision")))?;
        slot.values.copy_from_slice(&v);
    }
    Ok(params)
}
