use std::fmt::Write as _;

use rayon::prelude::*;

use super::metrics::{Confusion, MetricsReport};
use crate::data::Sample;
use crate::error::{Error, Result};
use crate::field::Field;
use crate::model::{model_backward, model_forward, param_group, predict_labels, ModelConfig, ModelParams, ParamGroup};
use crate::numerics::{Real, Rng};

/// Environment variable holding the worker count for evaluation. Unset or
/// `1` means single-threaded.
pub const THREADS_ENV: &str = "DDRNN_THREADS";

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    /// Initial rate of the recurrence and output parameters.
    pub lr_rnn: f64,
    /// Initial rate of the input embedding.
    pub lr_embed: f64,
    pub decay_rate: f64,
    /// Last epoch trained at the initial rates.
    pub decay_start_epoch: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Global gradient-norm ceiling; `None` disables clipping.
    pub clip_threshold: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr_rnn: 1e-2,
            lr_embed: 1e-4,
            decay_rate: 0.9,
            decay_start_epoch: 10,
            epochs: 20,
            batch_size: 1,
            seed: 0,
            clip_threshold: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr_rnn > 0.0) || !(self.lr_embed > 0.0) {
            return Err(Error::invalid("learning rates must be positive"));
        }
        if !(self.decay_rate > 0.0 && self.decay_rate <= 1.0) {
            return Err(Error::invalid("decay rate must lie in (0, 1]"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be >= 1"));
        }
        if let Some(c) = self.clip_threshold {
            if !(c > 0.0) {
                return Err(Error::invalid("clip threshold must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LearningRates {
    pub rnn: f64,
    pub embed: f64,
}

/// Rates for a 1-based epoch: constant through `decay_start_epoch`, then
/// multiplied by `decay_rate` once per epoch.
pub fn lr_schedule(epoch: usize, cfg: &TrainConfig) -> LearningRates {
    let steps = epoch.saturating_sub(cfg.decay_start_epoch);
    let factor = cfg.decay_rate.powi(steps as i32);
    LearningRates { rnn: cfg.lr_rnn * factor, embed: cfg.lr_embed * factor }
}

/// `p ← p − rate·g` per parameter group, after scaling `grads` down to
/// `clip` global norm if it is exceeded.
pub fn sgd_step<T: Real>(
    params: &mut ModelParams<T>,
    grads: &ModelParams<T>,
    rates: LearningRates,
    clip: Option<f64>,
) -> Result<()> {
    let gt = grads.tensors();
    {
        let pt = params.tensors();
        if pt.len() != gt.len() || pt.iter().zip(&gt).any(|(p, g)| p.name != g.name || p.shape != g.shape) {
            return Err(Error::shape("gradient layout differs from parameter layout"));
        }
    }
    let mut factor = 1.0;
    if let Some(limit) = clip {
        let norm = grads.l2_norm();
        if norm > limit {
            factor = limit / norm;
        }
    }
    for (p, g) in params.tensors_mut().into_iter().zip(gt) {
        let rate = match param_group(&p.name) {
            ParamGroup::Embedding => rates.embed,
            ParamGroup::Recurrent => rates.rnn,
        };
        let step = T::from_f64_lossy(rate * factor);
        for (pv, &gv) in p.values.iter_mut().zip(g.values) {
            *pv = *pv - step * gv;
        }
    }
    Ok(())
}

/// Worker count from [`THREADS_ENV`].
pub fn eval_threads() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or(1)
}

fn sample_confusion<T: Real>(
    sample: &Sample,
    config: &ModelConfig,
    params: &ModelParams<T>,
) -> Result<Confusion> {
    let features: Field<T> = sample.features.cast();
    let trace = model_forward(&features, config, params)?;
    let pred = predict_labels(&trace.probs);
    let mut c = Confusion::new(config.classes);
    c.add(&sample.labels, &pred)?;
    Ok(c)
}

/// Metrics over all units of all samples, with the worker count taken from
/// [`THREADS_ENV`].
pub fn evaluate<T: Real>(config: &ModelConfig, params: &ModelParams<T>, samples: &[Sample]) -> Result<MetricsReport> {
    evaluate_with_threads(config, params, samples, eval_threads())
}

/// Results do not depend on `threads`: per-sample confusions are merged in
/// sample order.
pub fn evaluate_with_threads<T: Real>(
    config: &ModelConfig,
    params: &ModelParams<T>,
    samples: &[Sample],
    threads: usize,
) -> Result<MetricsReport> {
    if samples.is_empty() {
        return Err(Error::Empty("evaluation set has no samples".into()));
    }
    let per_sample: Vec<Result<Confusion>> = if threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
        pool.install(|| samples.par_iter().map(|s| sample_confusion(s, config, params)).collect())
    } else {
        samples.iter().map(|s| sample_confusion(s, config, params)).collect()
    };
    let mut confusion = Confusion::new(config.classes);
    for c in per_sample {
        confusion.merge(&c?);
    }
    MetricsReport::from_confusion(confusion)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean training loss over the epoch's samples.
    pub loss: f64,
    pub rates: LearningRates,
    pub validation: Option<MetricsReport>,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    /// Plain-text log: a header and one `epoch loss lr gpa aca miou` row per
    /// epoch. Missing validation metrics print as `nan`.
    pub fn to_text(&self) -> String {
        let mut s = String::from("epoch loss lr gpa aca miou\n");
        for e in &self.epochs {
            let (gpa, aca, miou) = e
                .validation
                .as_ref()
                .map_or((f64::NAN, f64::NAN, f64::NAN), |m| (m.gpa, m.aca, m.mean_iou));
            let _ = writeln!(s, "{} {:.8e} {:.8e} {:.6} {:.6} {:.6}", e.epoch, e.loss, e.rates.rnn, gpa, aca, miou);
        }
        s
    }
}

/// Plain SGD over `train_set`, one shuffled pass per epoch, gradients
/// averaged over `batch_size` samples. Validation metrics are recorded after
/// every epoch when `val_set` is non-empty.
pub fn train<T: Real>(
    config: &ModelConfig,
    mut params: ModelParams<T>,
    train_set: &[Sample],
    val_set: &[Sample],
    cfg: &TrainConfig,
) -> Result<(TrainHistory, ModelParams<T>)> {
    config.validate()?;
    cfg.validate()?;
    params.check(config)?;
    let mut history = TrainHistory::default();
    if cfg.epochs == 0 {
        return Ok((history, params));
    }
    if train_set.is_empty() {
        return Err(Error::Empty("training set has no samples".into()));
    }
    let inputs: Vec<Field<T>> = train_set.iter().map(|s| s.features.cast()).collect();
    let mut rng = Rng::new(cfg.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=cfg.epochs {
        let rates = lr_schedule(epoch, cfg);
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0f64;
        for batch in order.chunks(cfg.batch_size) {
            let mut acc: Option<ModelParams<T>> = None;
            for &i in batch {
                let trace = model_forward(&inputs[i], config, &params)?;
                let (grads, loss) = model_backward(&trace, &train_set[i].labels, config, &params)?;
                let loss = loss.to_f64().unwrap_or(f64::NAN);
                if !loss.is_finite() {
                    return Err(Error::NonFinite(format!("training loss {loss} at epoch {epoch}, sample {i}")));
                }
                loss_sum += loss;
                match acc.as_mut() {
                    None => acc = Some(grads),
                    Some(a) => {
                        for (dst, src) in a.tensors_mut().into_iter().zip(grads.tensors()) {
                            for (d, &s) in dst.values.iter_mut().zip(src.values) {
                                *d = *d + s;
                            }
                        }
                    }
                }
            }
            let mut grads = acc.expect("non-empty batch");
            if batch.len() > 1 {
                grads.scale(T::one() / T::from_usize(batch.len()).expect("small count"));
            }
            sgd_step(&mut params, &grads, rates, cfg.clip_threshold)?;
        }
        if params.tensors().iter().any(|t| t.values.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFinite(format!("parameters diverged at epoch {epoch}")));
        }
        let validation = if val_set.is_empty() { None } else { Some(evaluate(config, &params, val_set)?) };
        history.epochs.push(EpochRecord {
            epoch,
            loss: loss_sum / train_set.len() as f64,
            rates,
            validation,
        });
    }
    Ok((history, params))
}
