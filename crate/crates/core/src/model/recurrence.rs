//! Single-direction recurrences and their reverse-mode gradients.

use rayon::prelude::*;

use super::params::{DirectionParams, Variant};
use crate::error::{Error, Result};
use crate::field::Field;
use crate::grid::{build_dense_dag, wavefronts, DenseDag, Direction, GridDims, PlainDag};
use crate::numerics::{
    add_assign, add_outer, dot, matvec_into, matvec_t_acc, relu, softmax, Matrix, Real,
};

/// How vertices of one direction are visited during the forward pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Execution {
    /// Canonical topological order, one vertex at a time.
    #[default]
    Sequential,
    /// Anti-diagonal levels in order, vertices of a level one at a time.
    Wavefront,
    /// Anti-diagonal levels in order, vertices of a level on the current
    /// rayon pool.
    ParallelWavefront,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Mode {
    Sum,
    Attention,
}

/// Where each vertex takes its predecessors from.
pub(crate) enum Preds<'a> {
    /// Previous vertex in the sweep order.
    Chain(&'a DenseDag),
    Plain(&'a PlainDag),
    Dense(&'a DenseDag),
}

impl Preds<'_> {
    fn dims(&self) -> GridDims {
        match self {
            Preds::Chain(d) | Preds::Dense(d) => d.dims(),
            Preds::Plain(d) => d.dims(),
        }
    }

    fn direction(&self) -> Direction {
        match self {
            Preds::Chain(d) | Preds::Dense(d) => d.direction(),
            Preds::Plain(d) => d.direction(),
        }
    }

    fn topo(&self) -> &[usize] {
        match self {
            Preds::Chain(d) | Preds::Dense(d) => d.topo(),
            Preds::Plain(d) => d.topo(),
        }
    }

    /// Predecessors of every vertex by global index, in canonical order.
    fn lists(&self) -> Vec<Vec<usize>> {
        let dims = self.dims();
        match self {
            Preds::Chain(d) => {
                let mut lists = vec![Vec::new(); dims.len()];
                for w in d.topo().windows(2) {
                    lists[w[1]].push(w[0]);
                }
                lists
            }
            Preds::Plain(d) => (0..dims.len())
                .map(|g| d.preds_by_index(g).iter().map(|&u| dims.index(u)).collect())
                .collect(),
            Preds::Dense(d) => (0..dims.len()).map(|g| d.pred_indices(dims.vertex(g)).collect()).collect(),
        }
    }
}

/// Cached forward quantities of one vertex.
#[derive(Clone, Debug, PartialEq)]
pub struct VertexState<T> {
    /// Predecessors (global indices) in canonical order.
    pub preds: Vec<usize>,
    pub hidden: Vec<T>,
    /// Sum variants: `U x + W ĥ + b`. Attention: `U x + b`.
    pub pre: Vec<T>,
    /// Sum variants: predecessor sum `ĥ`. Empty for attention.
    pub summed: Vec<T>,
    /// Attention: `W h` of this vertex, reused by every successor.
    pub recurrent: Vec<T>,
    /// Attention: pairwise activations, `D` values per predecessor. A vertex
    /// without predecessors holds one virtual zero-state entry.
    pub pairwise: Vec<T>,
    pub scores: Vec<T>,
    pub weights: Vec<T>,
}

/// Forward trace of one direction.
#[derive(Clone, Debug, PartialEq)]
pub struct DirectionTrace<T> {
    pub direction: Direction,
    pub(crate) mode: Mode,
    pub(crate) topo: Vec<usize>,
    /// Indexed by global vertex index.
    pub vertices: Vec<VertexState<T>>,
    pub hidden: Field<T>,
}

impl<T: Real> DirectionTrace<T> {
    /// Attention weights of a vertex (empty for sum variants).
    pub fn weights(&self, index: usize) -> &[T] {
        &self.vertices[index].weights
    }

    /// Pairwise activation of `index` against its `k`-th predecessor.
    pub fn pairwise(&self, index: usize, k: usize) -> &[T] {
        let d = self.hidden.channels();
        &self.vertices[index].pairwise[k * d..(k + 1) * d]
    }
}

fn check_input<T: Real>(x: &Field<T>, dims: GridDims, p: &DirectionParams<T>) -> Result<()> {
    if x.dims() != dims {
        return Err(Error::shape(format!("input is {}, DAG is {dims}", x.dims())));
    }
    if x.channels() != p.hidden() || p.u.cols() != p.hidden() {
        return Err(Error::shape(format!(
            "input has {} channels, recurrence expects {}",
            x.channels(),
            p.hidden()
        )));
    }
    Ok(())
}

pub(crate) fn run_direction<T: Real>(
    x: &Field<T>,
    preds: &Preds<'_>,
    p: &DirectionParams<T>,
    mode: Mode,
    exec: Execution,
) -> Result<DirectionTrace<T>> {
    let dims = preds.dims();
    check_input(x, dims, p)?;
    let lists = preds.lists();
    let mut states: Vec<Option<VertexState<T>>> = vec![None; dims.len()];

    match exec {
        Execution::Sequential => {
            for &g in preds.topo() {
                let st = compute_vertex(g, &lists[g], x, p, mode, &states);
                states[g] = Some(st);
            }
        }
        Execution::Wavefront | Execution::ParallelWavefront => {
            let dense = build_dense_dag(dims, preds.direction())?;
            for level in wavefronts(&dense).levels {
                let idx: Vec<usize> = level.iter().map(|&v| dims.index(v)).collect();
                let computed: Vec<VertexState<T>> = if exec == Execution::ParallelWavefront {
                    idx.par_iter().map(|&g| compute_vertex(g, &lists[g], x, p, mode, &states)).collect()
                } else {
                    idx.iter().map(|&g| compute_vertex(g, &lists[g], x, p, mode, &states)).collect()
                };
                for (g, st) in idx.into_iter().zip(computed) {
                    states[g] = Some(st);
                }
            }
        }
    }

    let vertices: Vec<VertexState<T>> =
        states.into_iter().map(|s| s.expect("every vertex visited")).collect();
    let hidden = Field::from_vec(
        dims,
        p.hidden(),
        vertices.iter().flat_map(|s| s.hidden.iter().copied()).collect(),
    )?;
    Ok(DirectionTrace {
        direction: preds.direction(),
        mode,
        topo: preds.topo().to_vec(),
        vertices,
        hidden,
    })
}

fn compute_vertex<T: Real>(
    g: usize,
    preds: &[usize],
    x: &Field<T>,
    p: &DirectionParams<T>,
    mode: Mode,
    states: &[Option<VertexState<T>>],
) -> VertexState<T> {
    let d = p.hidden();
    let state = |u: usize| states[u].as_ref().expect("predecessor computed before successor");
    let mut pre = vec![T::zero(); d];
    matvec_into(&p.u, x.unit(g), &mut pre);

    match mode {
        Mode::Sum => {
            let mut summed = vec![T::zero(); d];
            for &u in preds {
                add_assign(&mut summed, &state(u).hidden);
            }
            let mut wh = vec![T::zero(); d];
            matvec_into(&p.w, &summed, &mut wh);
            for k in 0..d {
                pre[k] = pre[k] + wh[k] + p.b[k];
            }
            let hidden = relu(&pre).values;
            VertexState {
                preds: preds.to_vec(),
                hidden,
                pre,
                summed,
                recurrent: Vec::new(),
                pairwise: Vec::new(),
                scores: Vec::new(),
                weights: Vec::new(),
            }
        }
        Mode::Attention => {
            add_assign(&mut pre, &p.b);
            let n = preds.len().max(1);
            let mut pairwise = Vec::with_capacity(n * d);
            let mut scores = Vec::with_capacity(n);
            if preds.is_empty() {
                pairwise.extend(pre.iter().map(|&a| a.max(T::zero())));
            } else {
                for &u in preds {
                    let r = &state(u).recurrent;
                    pairwise.extend(pre.iter().zip(r).map(|(&a, &r)| (a + r).max(T::zero())));
                }
            }
            for k in 0..n {
                scores.push(dot(&p.z, &pairwise[k * d..(k + 1) * d]));
            }
            let weights = softmax(&scores);
            let hidden = combine(&pairwise, &weights, d);
            let mut recurrent = vec![T::zero(); d];
            matvec_into(&p.w, &hidden, &mut recurrent);
            VertexState {
                preds: preds.to_vec(),
                hidden,
                pre,
                summed: Vec::new(),
                recurrent,
                pairwise,
                scores,
                weights,
            }
        }
    }
}

fn combine<T: Real>(pairwise: &[T], weights: &[T], d: usize) -> Vec<T> {
    let mut h = vec![T::zero(); d];
    for (k, &w) in weights.iter().enumerate() {
        for (hi, &pi) in h.iter_mut().zip(&pairwise[k * d..(k + 1) * d]) {
            *hi = *hi + w * pi;
        }
    }
    h
}

/// Textbook chain recurrence `h_t = relu(U x_t + W h_{t-1} + b)` with a zero
/// state before the first step.
pub fn chain_forward<T: Real>(xs: &[Vec<T>], p: &DirectionParams<T>) -> Result<Vec<Vec<T>>> {
    let d = p.hidden();
    let mut out: Vec<Vec<T>> = Vec::with_capacity(xs.len());
    for (t, x) in xs.iter().enumerate() {
        if x.len() != p.u.cols() {
            return Err(Error::shape(format!("step {t} has {} channels, expected {}", x.len(), p.u.cols())));
        }
        let mut pre = vec![T::zero(); d];
        matvec_into(&p.u, x, &mut pre);
        let mut prev = vec![T::zero(); d];
        if let Some(h) = out.last() {
            add_assign(&mut prev, h);
        }
        let mut wh = vec![T::zero(); d];
        matvec_into(&p.w, &prev, &mut wh);
        for k in 0..d {
            pre[k] = pre[k] + wh[k] + p.b[k];
        }
        out.push(relu(&pre).values);
    }
    Ok(out)
}

pub fn plain_dag_forward<T: Real>(
    x: &Field<T>,
    dag: &PlainDag,
    p: &DirectionParams<T>,
) -> Result<DirectionTrace<T>> {
    run_direction(x, &Preds::Plain(dag), p, Mode::Sum, Execution::Sequential)
}

pub fn dense_sum_forward<T: Real>(
    x: &Field<T>,
    dag: &DenseDag,
    p: &DirectionParams<T>,
) -> Result<DirectionTrace<T>> {
    run_direction(x, &Preds::Dense(dag), p, Mode::Sum, Execution::Sequential)
}

pub fn dense_attention_forward<T: Real>(
    x: &Field<T>,
    dag: &DenseDag,
    p: &DirectionParams<T>,
) -> Result<DirectionTrace<T>> {
    run_direction(x, &Preds::Dense(dag), p, Mode::Attention, Execution::Sequential)
}

/// Runs one direction of `variant` with an explicit visiting order.
pub fn direction_forward<T: Real>(
    variant: Variant,
    x: &Field<T>,
    dir: Direction,
    p: &DirectionParams<T>,
    exec: Execution,
) -> Result<DirectionTrace<T>> {
    let dims = x.dims();
    match variant {
        Variant::Chain => {
            if dims.rows != 1 {
                return Err(Error::invalid(format!("chain recurrence needs a 1xN grid, got {dims}")));
            }
            let dag = build_dense_dag(dims, dir)?;
            run_direction(x, &Preds::Chain(&dag), p, Mode::Sum, exec)
        }
        Variant::PlainDag => {
            let dag = crate::grid::build_plain_dag(dims, dir)?;
            run_direction(x, &Preds::Plain(&dag), p, Mode::Sum, exec)
        }
        Variant::DenseSum => {
            let dag = build_dense_dag(dims, dir)?;
            run_direction(x, &Preds::Dense(&dag), p, Mode::Sum, exec)
        }
        Variant::DenseAttention => {
            let dag = build_dense_dag(dims, dir)?;
            run_direction(x, &Preds::Dense(&dag), p, Mode::Attention, exec)
        }
    }
}

/// `relu(U x_v + W h_u + b)`: the activation of `v` against one predecessor.
pub fn attention_pairwise<T: Real>(x_v: &[T], h_u: &[T], p: &DirectionParams<T>) -> Result<Vec<T>> {
    let d = p.hidden();
    if x_v.len() != p.u.cols() || h_u.len() != d {
        return Err(Error::shape("pairwise activation operands do not match the hidden size"));
    }
    let mut a = vec![T::zero(); d];
    matvec_into(&p.u, x_v, &mut a);
    add_assign(&mut a, &p.b);
    let mut r = vec![T::zero(); d];
    matvec_into(&p.w, h_u, &mut r);
    Ok(a.iter().zip(&r).map(|(&a, &r)| (a + r).max(T::zero())).collect())
}

/// Softmax over predecessors of `z · h_{v,u}`.
pub fn attention_weights<T: Real>(pairwise: &[Vec<T>], z: &[T]) -> Result<Vec<T>> {
    if pairwise.is_empty() {
        return Err(Error::invalid("attention needs at least one predecessor"));
    }
    if pairwise.iter().any(|h| h.len() != z.len()) {
        return Err(Error::shape("pairwise activation and attention vector differ in length"));
    }
    let scores: Vec<T> = pairwise.iter().map(|h| dot(z, h)).collect();
    Ok(softmax(&scores))
}

/// `Σ_u w_u · h_{v,u}` in list order.
pub fn attention_combine<T: Real>(pairwise: &[Vec<T>], weights: &[T]) -> Result<Vec<T>> {
    if pairwise.len() != weights.len() || pairwise.is_empty() {
        return Err(Error::shape(format!(
            "{} pairwise activations against {} weights",
            pairwise.len(),
            weights.len()
        )));
    }
    let d = pairwise[0].len();
    if pairwise.iter().any(|h| h.len() != d) {
        return Err(Error::shape("pairwise activations differ in length"));
    }
    let flat: Vec<T> = pairwise.iter().flat_map(|h| h.iter().copied()).collect();
    Ok(combine(&flat, weights, d))
}

/// Accumulates parameter gradients of one direction into `grads` and the
/// gradient w.r.t. the embedded input into `dx`, given `dh`, the gradient of
/// the loss w.r.t. this direction's hidden field arriving from the head.
pub(crate) fn direction_backward<T: Real>(
    trace: &DirectionTrace<T>,
    x: &Field<T>,
    p: &DirectionParams<T>,
    dh: &[T],
    grads: &mut DirectionParams<T>,
    dx: &mut [T],
) {
    let d = p.hidden();
    let n = trace.vertices.len();
    debug_assert_eq!(dh.len(), n * d);
    let mut dh_acc = dh.to_vec();

    match trace.mode {
        Mode::Sum => {
            let mut dpre = vec![T::zero(); d];
            let mut back = vec![T::zero(); d];
            for &g in trace.topo.iter().rev() {
                let st = &trace.vertices[g];
                for k in 0..d {
                    dpre[k] = if st.pre[k] > T::zero() { dh_acc[g * d + k] } else { T::zero() };
                }
                add_outer(&mut grads.u, &dpre, x.unit(g));
                add_assign(&mut grads.b, &dpre);
                matvec_t_acc(&p.u, &dpre, &mut dx[g * d..(g + 1) * d]);
                if st.preds.is_empty() {
                    continue;
                }
                add_outer(&mut grads.w, &dpre, &st.summed);
                back.iter_mut().for_each(|v| *v = T::zero());
                matvec_t_acc(&p.w, &dpre, &mut back);
                for &u in &st.preds {
                    add_assign(&mut dh_acc[u * d..(u + 1) * d], &back);
                }
            }
        }
        Mode::Attention => {
            // Gradient w.r.t. `W h_u`, collected from every successor of u.
            let mut drec = vec![T::zero(); n * d];
            let mut da = vec![T::zero(); d];
            let mut dp = vec![T::zero(); d];
            for &g in trace.topo.iter().rev() {
                let st = &trace.vertices[g];
                let drec_v = &drec[g * d..(g + 1) * d];
                let dhv = &mut dh_acc[g * d..(g + 1) * d];
                add_outer(&mut grads.w, drec_v, &st.hidden);
                matvec_t_acc(&p.w, drec_v, dhv);
                let dhv = dhv.to_vec();

                let m = st.weights.len();
                let dw: Vec<T> = (0..m).map(|k| dot(&st.pairwise[k * d..(k + 1) * d], &dhv)).collect();
                let mean = dot(&st.weights, &dw);
                da.iter_mut().for_each(|v| *v = T::zero());
                for k in 0..m {
                    let w = st.weights[k];
                    let ds = w * (dw[k] - mean);
                    let pk = &st.pairwise[k * d..(k + 1) * d];
                    for i in 0..d {
                        grads.z[i] = grads.z[i] + ds * pk[i];
                        let grad_p = w * dhv[i] + ds * p.z[i];
                        dp[i] = if pk[i] > T::zero() { grad_p } else { T::zero() };
                    }
                    add_assign(&mut da, &dp);
                    if let Some(&u) = st.preds.get(k) {
                        add_assign(&mut drec[u * d..(u + 1) * d], &dp);
                    }
                }
                add_outer(&mut grads.u, &da, x.unit(g));
                add_assign(&mut grads.b, &da);
                matvec_t_acc(&p.u, &da, &mut dx[g * d..(g + 1) * d]);
            }
        }
    }
}

/// `out += M·v` for each unit of a field.
pub(crate) fn accumulate_matvec_field<T: Real>(m: &Matrix<T>, field: &Field<T>, out: &mut [T]) {
    let rows = m.rows();
    let mut tmp = vec![T::zero(); rows];
    for g in 0..field.dims().len() {
        matvec_into(m, field.unit(g), &mut tmp);
        add_assign(&mut out[g * rows..(g + 1) * rows], &tmp);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_plain_dag, GridDims};
    use crate::numerics::Matrix;

    fn scalar_params(u: f64, w: f64, b: f64) -> DirectionParams<f64> {
        DirectionParams {
            u: Matrix::from_vec(1, 1, vec![u]).unwrap(),
            w: Matrix::from_vec(1, 1, vec![w]).unwrap(),
            v: Matrix::from_vec(2, 1, vec![1.0, 0.0]).unwrap(),
            b: vec![b],
            z: vec![0.3],
        }
    }

    fn ones(rows: usize, cols: usize) -> Field<f64> {
        let dims = GridDims::new(rows, cols).unwrap();
        Field::from_vec(dims, 1, vec![1.0; dims.len()]).unwrap()
    }

    #[test]
    fn chain_examples() {
        let p = scalar_params(1.0, 1.0, 0.0);
        let h = chain_forward(&[vec![1.0], vec![1.0]], &p).unwrap();
        assert_eq!(h, vec![vec![1.0], vec![2.0]]);

        let decoupled = scalar_params(2.0, 0.0, -1.0);
        let xs = vec![vec![1.0], vec![0.25], vec![3.0]];
        let h = chain_forward(&xs, &decoupled).unwrap();
        assert_eq!(h, vec![vec![1.0], vec![0.0], vec![5.0]]);
    }

    #[test]
    fn plain_scalar_grid() {
        let x = ones(2, 2);
        let dag = build_plain_dag(x.dims(), Direction::SE).unwrap();
        let t = plain_dag_forward(&x, &dag, &scalar_params(1.0, 1.0, 0.0)).unwrap();
        // (1,1) sees all three neighbours: relu(1 + (1 + 2 + 2)).
        assert_eq!(t.hidden.as_slice(), &[1.0, 2.0, 2.0, 6.0]);
    }

    #[test]
    fn dense_scalar_grid() {
        let x = ones(2, 2);
        let dag = build_dense_dag(x.dims(), Direction::SE).unwrap();
        let t = dense_sum_forward(&x, &dag, &scalar_params(1.0, 1.0, 0.0)).unwrap();
        assert_eq!(t.hidden.as_slice(), &[1.0, 2.0, 2.0, 6.0]);

        // On 3x3 the dense set of (1,2) also contains (0,0): it differs from plain.
        let x = ones(3, 3);
        let dense = dense_sum_forward(&x, &build_dense_dag(x.dims(), Direction::SE).unwrap(), &scalar_params(1.0, 1.0, 0.0)).unwrap();
        let plain = plain_dag_forward(&x, &build_plain_dag(x.dims(), Direction::SE).unwrap(), &scalar_params(1.0, 1.0, 0.0)).unwrap();
        // (0,2): dense = 1 + (1 + 2) = 4, plain = 1 + 2 = 3.
        assert_eq!(dense.hidden.at(0, 2), &[4.0]);
        assert_eq!(plain.hidden.at(0, 2), &[3.0]);
    }

    #[test]
    fn attention_scalar_examples() {
        let p = scalar_params(1.0, 1.0, 0.0);
        assert_eq!(attention_pairwise(&[0.5], &[0.25], &p).unwrap(), vec![0.75]);
        assert_eq!(attention_pairwise(&[0.5], &[0.0], &p).unwrap(), vec![0.5]);
        let neg = scalar_params(1.0, 1.0, -3.0);
        assert_eq!(attention_pairwise(&[0.5], &[0.25], &neg).unwrap(), vec![0.0]);

        let x = ones(1, 2);
        let dag = build_dense_dag(x.dims(), Direction::SE).unwrap();
        let t = dense_attention_forward(&x, &dag, &p).unwrap();
        assert_eq!(t.hidden.as_slice(), &[1.0, 2.0]);
        assert_eq!(t.weights(1), &[1.0]);
    }

    #[test]
    fn weight_and_combine_examples() {
        let w = attention_weights(&[vec![1.0, 2.0], vec![-3.0, 0.5]], &[0.0, 0.0]).unwrap();
        assert_eq!(w, vec![0.5, 0.5]);
        assert_eq!(attention_weights(&[vec![4.0]], &[7.0]).unwrap(), vec![1.0]);
        let w = attention_weights(&[vec![0.0], vec![3.0f64.ln()]], &[1.0]).unwrap();
        assert!((w[0] - 0.25).abs() < 1e-15 && (w[1] - 0.75).abs() < 1e-15);
        assert!(attention_weights::<f64>(&[], &[1.0]).is_err());

        assert_eq!(attention_combine(&[vec![1.0], vec![3.0]], &[0.5, 0.5]).unwrap(), vec![2.0]);
        assert_eq!(attention_combine(&[vec![1.5, -2.0]], &[1.0]).unwrap(), vec![1.5, -2.0]);
        let same = vec![vec![0.25, 4.0]; 3];
        assert_eq!(attention_combine(&same, &[0.125, 0.375, 0.5]).unwrap(), vec![0.25, 4.0]);
        assert!(attention_combine(&[vec![1.0]], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn chain_variant_rejects_2d() {
        let x = ones(2, 2);
        let p = scalar_params(1.0, 1.0, 0.0);
        assert!(direction_forward(Variant::Chain, &x, Direction::SE, &p, Execution::Sequential).is_err());
    }

    #[test]
    fn input_shape_checked() {
        let x = ones(2, 2);
        let dag = build_dense_dag(GridDims::new(2, 3).unwrap(), Direction::SE).unwrap();
        assert!(dense_sum_forward(&x, &dag, &scalar_params(1.0, 1.0, 0.0)).is_err());
    }
}
