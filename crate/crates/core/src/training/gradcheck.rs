use std::fmt;

use crate::error::{Error, Result};
use crate::field::{Field, LabelMap, IGNORE_LABEL};
use crate::grid::{Direction, GridDims};
use crate::model::{model_backward, model_forward, sample_loss, ModelConfig, ModelParams, Variant};
use crate::numerics::{finite_difference_grad, Rng};

/// Below this combined magnitude a coordinate is treated as zero on both
/// sides and not compared.
pub const NEGLIGIBLE_GRADIENT: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckSpec {
    pub variant: Variant,
    pub directions: Vec<Direction>,
    pub dims: GridDims,
    pub in_channels: usize,
    pub hidden: usize,
    pub classes: usize,
    pub seed: u64,
    pub eps: f64,
    pub tol: f64,
}

impl GradCheckSpec {
    /// 3×4 grid, D=6, C_in=3, K=4. Chain runs on the 1×12 grid with the same
    /// number of units.
    pub fn standard(variant: Variant, direction: Direction, seed: u64) -> Self {
        let dims = if variant == Variant::Chain {
            GridDims { rows: 1, cols: 12 }
        } else {
            GridDims { rows: 3, cols: 4 }
        };
        GradCheckSpec {
            variant,
            directions: vec![direction],
            dims,
            in_channels: 3,
            hidden: 6,
            classes: 4,
            seed,
            eps: 1e-5,
            tol: 1e-4,
        }
    }
}

/// A coordinate where analytic and numeric gradients disagree the most.
#[derive(Clone, Debug, PartialEq)]
pub struct Offender {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst: Option<Offender>,
    pub compared: usize,
    pub total: usize,
    pub passed: bool,
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} max_rel_err={:.3e} compared={}/{}",
            if self.passed { "PASS" } else { "FAIL" },
            self.max_rel_error,
            self.compared,
            self.total
        )?;
        if let Some(w) = &self.worst {
            write!(
                f,
                " worst={}[{}] analytic={:.6e} numeric={:.6e}",
                w.param, w.index, w.analytic, w.numeric
            )?;
        }
        Ok(())
    }
}

/// Central differences are only meaningful away from ReLU kinks; instances
/// with a ReLU input closer to zero than this are redrawn.
pub const KINK_MARGIN: f64 = 1e-4;

const MAX_REDRAWS: u64 = 64;

/// Random instance for a gradient check: parameters (biases included are
/// non-zero), features and labels with one ignored unit.
pub struct GradCheckInstance {
    pub config: ModelConfig,
    pub params: ModelParams<f64>,
    pub features: Field<f64>,
    pub labels: LabelMap,
}

impl GradCheckInstance {
    /// Draws instances from `spec.seed` until one has no ReLU input within
    /// [`KINK_MARGIN`] of zero.
    pub fn random(spec: &GradCheckSpec) -> Result<Self> {
        let mut seeds = Rng::new(spec.seed);
        let mut seed = spec.seed;
        for _ in 0..MAX_REDRAWS {
            let inst = Self::draw(spec, seed)?;
            if inst.kink_distance()? >= KINK_MARGIN {
                return Ok(inst);
            }
            seed = seeds.next_u64();
        }
        Err(Error::invalid(format!(
            "no kink-free instance found for seed {} after {MAX_REDRAWS} draws",
            spec.seed
        )))
    }

    /// Smallest |ReLU input| over the forward pass.
    pub fn kink_distance(&self) -> Result<f64> {
        let trace = model_forward(&self.features, &self.config, &self.params)?;
        let mut closest = f64::INFINITY;
        for dir in &trace.directions {
            for st in &dir.vertices {
                if st.recurrent.is_empty() || st.preds.is_empty() {
                    closest = st.pre.iter().fold(closest, |m, p| m.min(p.abs()));
                } else {
                    for &u in &st.preds {
                        let r = &dir.vertices[u].recurrent;
                        closest = st.pre.iter().zip(r).fold(closest, |m, (a, r)| m.min((a + r).abs()));
                    }
                }
            }
        }
        Ok(closest)
    }

    fn draw(spec: &GradCheckSpec, seed: u64) -> Result<Self> {
        let config = ModelConfig::new(spec.in_channels, spec.hidden, spec.classes, spec.variant, &spec.directions)?;
        let mut rng = Rng::new(seed);
        let mut params = ModelParams::<f64>::init(&config, &mut rng);
        for t in params.tensors_mut() {
            if t.shape.len() == 1 {
                for v in t.values.iter_mut() {
                    *v = rng.uniform(-0.5, 0.5);
                }
            }
        }
        let dims = GridDims::new(spec.dims.rows, spec.dims.cols)?;
        let features: Vec<f64> = (0..dims.len() * spec.in_channels).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let features = Field::from_vec(dims, spec.in_channels, features)?;
        let mut labels: Vec<u8> = (0..dims.len()).map(|_| rng.below(spec.classes) as u8).collect();
        if labels.len() > 1 {
            let last = labels.len() - 1;
            labels[last] = IGNORE_LABEL;
        }
        let labels = LabelMap::new(dims, labels)?;
        Ok(GradCheckInstance { config, params, features, labels })
    }

    pub fn analytic(&self) -> Result<ModelParams<f64>> {
        let trace = model_forward(&self.features, &self.config, &self.params)?;
        Ok(model_backward(&trace, &self.labels, &self.config, &self.params)?.0)
    }

    pub fn numeric(&self, eps: f64) -> Result<Vec<f64>> {
        let mut probe = self.params.clone();
        let x0 = self.params.flatten();
        finite_difference_grad(
            |x| {
                probe.assign_flat(x).expect("same layout");
                sample_loss(&self.features, &self.labels, &self.config, &probe).unwrap_or(f64::NAN)
            },
            &x0,
            eps,
        )
    }

    /// Compares `analytic` against central differences of the loss.
    pub fn compare(&self, analytic: &ModelParams<f64>, eps: f64, tol: f64) -> Result<GradCheckReport> {
        let numeric = self.numeric(eps)?;
        compare_gradients(&self.params, &analytic.flatten(), &numeric, tol)
    }
}

/// Elementwise relative error `|a − n| / max(|a|, |n|)` over coordinates
/// with `|a| + |n|` above [`NEGLIGIBLE_GRADIENT`].
pub fn compare_gradients(
    layout: &ModelParams<f64>,
    analytic: &[f64],
    numeric: &[f64],
    tol: f64,
) -> Result<GradCheckReport> {
    if analytic.len() != numeric.len() || analytic.len() != layout.num_values() {
        return Err(Error::shape("gradient vectors do not match the parameter layout"));
    }
    let mut worst: Option<Offender> = None;
    let mut compared = 0;
    let mut all_ok = true;
    for (i, (&a, &n)) in analytic.iter().zip(numeric).enumerate() {
        if !a.is_finite() {
            all_ok = false;
        }
        if a.abs() + n.abs() <= NEGLIGIBLE_GRADIENT {
            continue;
        }
        compared += 1;
        let rel = (a - n).abs() / a.abs().max(n.abs());
        if !(rel < tol) {
            all_ok = false;
        }
        if worst.as_ref().is_none_or(|w| rel > w.rel_error || rel.is_nan()) {
            let (param, index) = layout.locate(i).expect("index within layout");
            worst = Some(Offender { param, index, analytic: a, numeric: n, rel_error: rel });
        }
    }
    let max_rel_error = worst.as_ref().map_or(0.0, |w| w.rel_error);
    Ok(GradCheckReport { max_rel_error, worst, compared, total: analytic.len(), passed: all_ok })
}

/// Builds a random instance for `spec` and checks `model_backward` against
/// finite differences.
pub fn gradient_check(spec: &GradCheckSpec) -> Result<GradCheckReport> {
    let inst = GradCheckInstance::random(spec)?;
    let analytic = inst.analytic()?;
    inst.compare(&analytic, spec.eps, spec.tol)
}
