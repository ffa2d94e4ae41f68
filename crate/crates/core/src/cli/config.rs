use std::path::{Path, PathBuf};

use super::{infer_classes, TrainArgs, TrainPlan};
use crate::data::Sample;
use crate::error::{Error, Result};
use crate::grid::{parse_directions, Direction};
use crate::model::{ModelConfig, Variant, DEFAULT_HIDDEN};
use crate::numerics::Precision;
use crate::training::TrainConfig;

/// Every key accepted in a run configuration file, with its meaning.
pub const RUN_CONFIG_KEYS: &[(&str, &str)] = &[
    ("data", "training dataset directory"),
    ("val_data", "validation dataset directory (optional)"),
    ("out", "output model directory"),
    ("variant", "chain | plain-dag | dense-sum | dense-attention (default dense-attention)"),
    ("directions", "comma-separated subset of se,sw,ne,nw or `all` (default all)"),
    ("hidden", "hidden width D (default 32)"),
    ("classes", "class count K (default: largest label in the data plus one)"),
    ("precision", "standard | extended (default standard)"),
    ("lr_rnn", "initial rate of recurrence and output parameters (default 0.01)"),
    ("lr_embed", "initial rate of the embedding (default 0.0001)"),
    ("decay_rate", "per-epoch decay factor once decay starts (default 0.9)"),
    ("decay_start_epoch", "last epoch trained at the initial rates (default 10)"),
    ("epochs", "number of epochs (default 20)"),
    ("batch_size", "samples per update (default 1)"),
    ("seed", "seed of initialisation and shuffling (default 0)"),
    ("clip_threshold", "global gradient-norm ceiling, `none` to disable (default none)"),
];

pub(super) const CONFIG_HELP: &str = "\
Config file keys (key=value, `#` starts a comment, unknown keys are errors):
  data, val_data, out, variant, directions, hidden, classes, precision,
  lr_rnn, lr_embed, decay_rate, decay_start_epoch, epochs, batch_size,
  seed, clip_threshold
Flags given on the command line override values from --config.";

/// Flat `key=value` run configuration. `None` means "not given here".
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub val_data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub variant: Option<Variant>,
    pub directions: Option<Vec<Direction>>,
    pub hidden: Option<usize>,
    pub classes: Option<usize>,
    pub precision: Option<Precision>,
    pub lr_rnn: Option<f64>,
    pub lr_embed: Option<f64>,
    pub decay_rate: Option<f64>,
    pub decay_start_epoch: Option<usize>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub seed: Option<u64>,
    /// `Some(None)` explicitly disables clipping.
    pub clip_threshold: Option<Option<f64>>,
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::invalid(format!("`{key}`: cannot parse `{value}`")))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("line {}: expected key=value", n + 1)))?;
            cfg.set(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "data" => self.data = Some(value.into()),
            "val_data" => self.val_data = Some(value.into()),
            "out" => self.out = Some(value.into()),
            "variant" => self.variant = Some(value.parse()?),
            "directions" => self.directions = Some(parse_directions(value)?),
            "hidden" => self.hidden = Some(num(key, value)?),
            "classes" => self.classes = Some(num(key, value)?),
            "precision" => self.precision = Some(value.parse()?),
            "lr_rnn" => self.lr_rnn = Some(num(key, value)?),
            "lr_embed" => self.lr_embed = Some(num(key, value)?),
            "decay_rate" => self.decay_rate = Some(num(key, value)?),
            "decay_start_epoch" => self.decay_start_epoch = Some(num(key, value)?),
            "epochs" => self.epochs = Some(num(key, value)?),
            "batch_size" => self.batch_size = Some(num(key, value)?),
            "seed" => self.seed = Some(num(key, value)?),
            "clip_threshold" => {
                self.clip_threshold = Some(if value == "none" { None } else { Some(num(key, value)?) })
            }
            _ => return Err(Error::invalid(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    pub(super) fn from_args(a: &TrainArgs) -> Result<Self> {
        let mut cfg = RunConfig {
            data: a.data.clone(),
            val_data: a.val_data.clone(),
            out: a.out.clone(),
            hidden: a.hidden,
            classes: a.classes,
            lr_rnn: a.lr_rnn,
            lr_embed: a.lr_embed,
            decay_rate: a.decay_rate,
            decay_start_epoch: a.decay_start_epoch,
            epochs: a.epochs,
            batch_size: a.batch_size,
            seed: a.seed,
            clip_threshold: a.clip_threshold.map(Some),
            ..RunConfig::default()
        };
        for (key, value) in [("variant", &a.variant), ("directions", &a.directions), ("precision", &a.precision)] {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        Ok(cfg)
    }

    /// Values set in `other` replace those in `self`.
    pub fn override_with(&mut self, other: &RunConfig) {
        macro_rules! take {
            ($($f:ident),*) => { $( if other.$f.is_some() { self.$f = other.$f.clone(); } )* };
        }
        take!(
            data, val_data, out, variant, directions, hidden, classes, precision, lr_rnn, lr_embed, decay_rate,
            decay_start_epoch, epochs, batch_size, seed, clip_threshold
        );
    }

    /// Fills defaults and validates. `train_set` supplies the input width and,
    /// when `classes` is unset, the class count.
    pub fn resolve(&self, train_set: &[Sample]) -> Result<TrainPlan> {
        let first = train_set.first().ok_or_else(|| Error::Empty("training set has no samples".into()))?;
        let classes = self.classes.unwrap_or_else(|| infer_classes(train_set));
        let model = ModelConfig::new(
            first.features.channels(),
            self.hidden.unwrap_or(DEFAULT_HIDDEN),
            classes,
            self.variant.unwrap_or(Variant::DenseAttention),
            self.directions.as_deref().unwrap_or(&Direction::ALL),
        )?;
        for s in train_set {
            if s.features.channels() != model.in_channels {
                return Err(Error::shape("training samples disagree on the channel count"));
            }
            s.labels.check_classes(classes)?;
        }
        let d = TrainConfig::default();
        let train = TrainConfig {
            lr_rnn: self.lr_rnn.unwrap_or(d.lr_rnn),
            lr_embed: self.lr_embed.unwrap_or(d.lr_embed),
            decay_rate: self.decay_rate.unwrap_or(d.decay_rate),
            decay_start_epoch: self.decay_start_epoch.unwrap_or(d.decay_start_epoch),
            epochs: self.epochs.unwrap_or(d.epochs),
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            seed: self.seed.unwrap_or(d.seed),
            clip_threshold: self.clip_threshold.unwrap_or(d.clip_threshold),
        };
        train.validate()?;
        Ok(TrainPlan {
            model,
            train,
            precision: self.precision.unwrap_or(Precision::Standard),
            data: self.data.clone().ok_or_else(|| Error::invalid("missing `data`"))?,
            val_data: self.val_data.clone(),
            out: self.out.clone().ok_or_else(|| Error::invalid("no output directory: pass --out or set `out`"))?,
        })
    }
}
