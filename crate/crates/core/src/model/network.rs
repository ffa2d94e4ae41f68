use super::params::{DirectionParams, ModelConfig, ModelParams};
use super::recurrence::{accumulate_matvec_field, direction_backward, direction_forward, DirectionTrace, Execution};
use crate::error::{Error, Result};
use crate::field::{Field, LabelMap, IGNORE_LABEL};
use crate::numerics::{add_assign, add_outer, argmax, cross_entropy_logits, matvec_into, matvec_t_acc, softmax, Real};

/// Everything the backward pass needs from one forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace<T> {
    pub raw: Field<T>,
    pub embedded: Field<T>,
    pub directions: Vec<DirectionTrace<T>>,
    pub logits: Field<T>,
    pub probs: Field<T>,
}

/// Per-unit affine map from raw channels to the hidden width.
pub fn embed<T: Real>(features: &Field<T>, params: &ModelParams<T>) -> Result<Field<T>> {
    if features.channels() != params.in_channels() {
        return Err(Error::shape(format!(
            "features have {} channels, embedding expects {}",
            features.channels(),
            params.in_channels()
        )));
    }
    let d = params.hidden();
    let mut out = Field::zeros(features.dims(), d);
    for g in 0..features.dims().len() {
        let unit = out.unit_mut(g);
        matvec_into(&params.embed, features.unit(g), unit);
        add_assign(unit, &params.embed_bias);
    }
    Ok(out)
}

/// Sums `V^l h^l` over directions, adds the shared bias and applies a
/// per-unit softmax. Returns `(logits, probabilities)`.
pub fn aggregate_logits<T: Real>(
    hiddens: &[&Field<T>],
    params: &ModelParams<T>,
) -> Result<(Field<T>, Field<T>)> {
    if hiddens.len() != params.dirs.len() || hiddens.is_empty() {
        return Err(Error::shape(format!(
            "{} hidden fields for {} directions",
            hiddens.len(),
            params.dirs.len()
        )));
    }
    let dims = hiddens[0].dims();
    if hiddens.iter().any(|h| h.dims() != dims || h.channels() != params.hidden()) {
        return Err(Error::shape("hidden fields disagree in shape"));
    }
    let k = params.classes();
    let mut logits = vec![T::zero(); dims.len() * k];
    for (h, (_, dp)) in hiddens.iter().zip(&params.dirs) {
        accumulate_matvec_field(&dp.v, h, &mut logits);
    }
    for unit in logits.chunks_exact_mut(k) {
        add_assign(unit, &params.c);
    }
    let probs: Vec<T> = logits.chunks_exact(k).flat_map(softmax).collect();
    Ok((Field::from_vec(dims, k, logits)?, Field::from_vec(dims, k, probs)?))
}

pub fn model_forward<T: Real>(
    features: &Field<T>,
    config: &ModelConfig,
    params: &ModelParams<T>,
) -> Result<ForwardTrace<T>> {
    model_forward_with(features, config, params, Execution::Sequential)
}

pub fn model_forward_with<T: Real>(
    features: &Field<T>,
    config: &ModelConfig,
    params: &ModelParams<T>,
    exec: Execution,
) -> Result<ForwardTrace<T>> {
    config.validate()?;
    params.check(config)?;
    let embedded = embed(features, params)?;
    let directions = params
        .dirs
        .iter()
        .map(|(dir, dp)| direction_forward(config.variant, &embedded, *dir, dp, exec))
        .collect::<Result<Vec<_>>>()?;
    let hiddens: Vec<&Field<T>> = directions.iter().map(|t| &t.hidden).collect();
    let (logits, probs) = aggregate_logits(&hiddens, params)?;
    Ok(ForwardTrace { raw: features.clone(), embedded, directions, logits, probs })
}

/// Mean cross-entropy over non-ignored units and the gradient of every
/// parameter. With no labelled unit the loss and all gradients are zero.
pub fn model_backward<T: Real>(
    trace: &ForwardTrace<T>,
    labels: &LabelMap,
    config: &ModelConfig,
    params: &ModelParams<T>,
) -> Result<(ModelParams<T>, T)> {
    params.check(config)?;
    let dims = trace.probs.dims();
    if labels.dims() != dims {
        return Err(Error::shape(format!("labels are {}, trace is {dims}", labels.dims())));
    }
    if trace.directions.len() != params.dirs.len()
        || trace.embedded.channels() != params.hidden()
        || trace.probs.channels() != params.classes()
        || trace.raw.channels() != params.in_channels()
        || trace.directions.iter().zip(&params.dirs).any(|(t, (d, _))| t.direction != *d)
    {
        return Err(Error::shape("forward trace does not belong to these parameters"));
    }
    labels.check_classes(params.classes())?;

    let k = params.classes();
    let d = params.hidden();
    let n_valid = labels.valid_count();
    let mut grads = ModelParams::zeros(config);
    if n_valid == 0 {
        return Ok((grads, T::zero()));
    }
    let scale = T::one() / T::from_usize(n_valid).expect("count fits in a float");

    let mut loss = T::zero();
    let mut dlogits = vec![T::zero(); dims.len() * k];
    for (g, &label) in labels.as_slice().iter().enumerate() {
        if label == IGNORE_LABEL {
            continue;
        }
        let (l, grad) = cross_entropy_logits(trace.logits.unit(g), label as usize)?;
        loss = loss + l;
        for (dst, gv) in dlogits[g * k..(g + 1) * k].iter_mut().zip(grad) {
            *dst = gv * scale;
        }
    }
    loss = loss * scale;

    for unit in dlogits.chunks_exact(k) {
        add_assign(&mut grads.c, unit);
    }

    let mut dx = vec![T::zero(); dims.len() * d];
    for ((dir_trace, (_, dp)), (_, dgrad)) in
        trace.directions.iter().zip(&params.dirs).zip(grads.dirs.iter_mut())
    {
        let dh = head_backward(dp, dgrad, &dir_trace.hidden, &dlogits, k);
        direction_backward(dir_trace, &trace.embedded, dp, &dh, dgrad, &mut dx);
    }

    for g in 0..dims.len() {
        let dxv = &dx[g * d..(g + 1) * d];
        add_outer(&mut grads.embed, dxv, trace.raw.unit(g));
        add_assign(&mut grads.embed_bias, dxv);
    }
    Ok((grads, loss))
}

/// Gradient of `V` and of the hidden field for one direction.
fn head_backward<T: Real>(
    dp: &DirectionParams<T>,
    dgrad: &mut DirectionParams<T>,
    hidden: &Field<T>,
    dlogits: &[T],
    k: usize,
) -> Vec<T> {
    let d = dp.hidden();
    let n = hidden.dims().len();
    let mut dh = vec![T::zero(); n * d];
    for g in 0..n {
        let dl = &dlogits[g * k..(g + 1) * k];
        add_outer(&mut dgrad.v, dl, hidden.unit(g));
        matvec_t_acc(&dp.v, dl, &mut dh[g * d..(g + 1) * d]);
    }
    dh
}

/// Per-unit argmax, ties broken toward the lowest class.
pub fn predict_labels<T: Real>(probs: &Field<T>) -> LabelMap {
    let labels = (0..probs.dims().len()).map(|g| argmax(probs.unit(g)) as u8).collect();
    LabelMap::new(probs.dims(), labels).expect("one label per unit")
}

/// Loss of `params` on one sample without keeping the trace.
pub fn sample_loss<T: Real>(
    features: &Field<T>,
    labels: &LabelMap,
    config: &ModelConfig,
    params: &ModelParams<T>,
) -> Result<T> {
    let trace = model_forward(features, config, params)?;
    let n_valid = labels.valid_count();
    if n_valid == 0 {
        return Ok(T::zero());
    }
    let mut loss = T::zero();
    for (g, &label) in labels.as_slice().iter().enumerate() {
        if label != IGNORE_LABEL {
            loss = loss + cross_entropy_logits(trace.logits.unit(g), label as usize)?.0;
        }
    }
    Ok(loss / T::from_usize(n_valid).expect("count fits in a float"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Direction, GridDims};
    use crate::model::Variant;
    use crate::numerics::{Matrix, Rng};

    fn tiny_cfg(variant: Variant, dirs: &[Direction]) -> ModelConfig {
        ModelConfig::new(2, 2, 2, variant, dirs).unwrap()
    }

    #[test]
    fn embed_examples() {
        let cfg = tiny_cfg(Variant::PlainDag, &[Direction::SE]);
        let mut p = ModelParams::<f64>::zeros(&cfg);
        let dims = GridDims::new(1, 1).unwrap();
        let x = Field::from_vec(dims, 2, vec![1.0, 2.0]).unwrap();

        p.embed = Matrix::identity(2);
        assert_eq!(embed(&x, &p).unwrap().as_slice(), &[1.0, 2.0]);

        p.embed = Matrix::zeros(2, 2);
        p.embed_bias = vec![0.5, -1.0];
        assert_eq!(embed(&x, &p).unwrap().as_slice(), &[0.5, -1.0]);

        p.embed = Matrix::from_rows(&[&[1.0, 1.0], &[0.0, 1.0]]).unwrap();
        p.embed_bias = vec![0.0, 0.0];
        assert_eq!(embed(&x, &p).unwrap().as_slice(), &[3.0, 2.0]);

        let bad = Field::from_vec(dims, 3, vec![1.0, 2.0, 3.0]).unwrap();
        assert!(embed(&bad, &p).is_err());
    }

    #[test]
    fn aggregate_examples() {
        let cfg = tiny_cfg(Variant::PlainDag, &[Direction::SE]);
        let mut p = ModelParams::<f64>::zeros(&cfg);
        p.dirs[0].1.v = Matrix::identity(2);
        let dims = GridDims::new(1, 2).unwrap();
        let h = Field::from_vec(dims, 2, vec![0.0, 3f64.ln(), 0.0, 0.0]).unwrap();
        let (_, probs) = aggregate_logits(&[&h], &p).unwrap();
        assert!((probs.unit(0)[1] - 0.75).abs() < 1e-15);
        assert_eq!(probs.unit(1), &[0.5, 0.5]);

        let cfg2 = tiny_cfg(Variant::PlainDag, &[Direction::SE, Direction::NW]);
        let mut p2 = ModelParams::<f64>::init(&cfg2, &mut Rng::new(4));
        p2.dirs[1].1.v = Matrix::zeros(2, 2);
        let other = Field::from_vec(dims, 2, vec![5.0, -3.0, 2.0, 8.0]).unwrap();
        let (a, _) = aggregate_logits(&[&h, &other], &p2).unwrap();
        let (b, _) = aggregate_logits(&[&h, &h], &p2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn predict_examples() {
        let dims = GridDims::new(1, 3).unwrap();
        let probs = Field::from_vec(dims, 3, vec![0.2, 0.5, 0.3, 0.5, 0.5, 0.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(predict_labels(&probs).as_slice(), &[1, 0, 2]);
    }

    #[test]
    fn backward_rejects_foreign_trace() {
        let cfg = tiny_cfg(Variant::DenseSum, &[Direction::SE]);
        let p = ModelParams::<f64>::init(&cfg, &mut Rng::new(1));
        let dims = GridDims::new(2, 2).unwrap();
        let x = Field::from_vec(dims, 2, vec![0.1; 8]).unwrap();
        let trace = model_forward(&x, &cfg, &p).unwrap();
        let cfg_nw = tiny_cfg(Variant::DenseSum, &[Direction::NW]);
        let p_nw = ModelParams::<f64>::init(&cfg_nw, &mut Rng::new(1));
        let labels = LabelMap::filled(dims, 0);
        assert!(model_backward(&trace, &labels, &cfg_nw, &p_nw).is_err());
        let wrong_dims = LabelMap::filled(GridDims::new(1, 4).unwrap(), 0);
        assert!(model_backward(&trace, &wrong_dims, &cfg, &p).is_err());
    }
}
