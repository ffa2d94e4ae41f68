use std::collections::BTreeSet;

use ddrnn::data::{Tensor, TensorData};
use ddrnn::grid::{build_dense_dag, build_plain_dag, wavefronts};
use ddrnn::model::{dense_attention_forward, direction_forward, DirectionParams, Execution};
use ddrnn::numerics::{matvec, softmax, Matrix};
use ddrnn::{Direction, Field, GridDims, ModelConfig, ModelParams, Rng, Variant, VertexId};
use proptest::prelude::*;

fn direction() -> impl Strategy<Value = Direction> {
    prop::sample::select(Direction::ALL.to_vec())
}

fn random_field(dims: GridDims, channels: usize, rng: &mut Rng) -> Field<f64> {
    let data = (0..dims.len() * channels).map(|_| rng.uniform(-1.0, 1.0)).collect();
    Field::from_vec(dims, channels, data).unwrap()
}

fn random_direction_params(d: usize, rng: &mut Rng) -> DirectionParams<f64> {
    let cfg = ModelConfig::new(d, d, 2, Variant::DenseAttention, &[Direction::SE]).unwrap();
    let mut p = ModelParams::<f64>::init(&cfg, rng).dirs.remove(0).1;
    for b in &mut p.b {
        *b = rng.uniform(-0.3, 0.3);
    }
    p
}

/// Every vertex reachable from `v` by walking plain-DAG predecessor edges.
fn brute_closure(dims: GridDims, dir: Direction, v: VertexId) -> BTreeSet<VertexId> {
    let dag = build_plain_dag(dims, dir).unwrap();
    let mut seen = BTreeSet::new();
    let mut stack = vec![v];
    while let Some(x) = stack.pop() {
        for &u in dag.preds(x) {
            if seen.insert(u) {
                stack.push(u);
            }
        }
    }
    seen
}

proptest! {
    #[test]
    fn softmax_is_a_distribution(v in prop::collection::vec(-50.0f64..50.0, 1..12), shift in -100.0f64..100.0) {
        let p = softmax(&v);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&x| x > 0.0 && x <= 1.0));
        let shifted: Vec<f64> = v.iter().map(|x| x + shift).collect();
        for (a, b) in p.iter().zip(softmax(&shifted)) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn matvec_distributes_over_addition(seed in any::<u64>(), rows in 1usize..6, cols in 1usize..6) {
        let mut rng = Rng::new(seed);
        let m = Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.uniform(-1.0, 1.0)).collect()).unwrap();
        let a: Vec<f64> = (0..cols).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let b: Vec<f64> = (0..cols).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let lhs = matvec(&m, &sum).unwrap();
        let (ma, mb) = (matvec(&m, &a).unwrap(), matvec(&m, &b).unwrap());
        for k in 0..rows {
            prop_assert!((lhs[k] - (ma[k] + mb[k])).abs() < 1e-12);
        }
    }

    #[test]
    fn dense_predecessors_are_the_plain_closure(rows in 1usize..7, cols in 1usize..7, dir in direction()) {
        let dims = GridDims::new(rows, cols).unwrap();
        let dense = build_dense_dag(dims, dir).unwrap();
        for v in dims.vertices() {
            let preds: BTreeSet<VertexId> = dense.preds(v).into_iter().collect();
            prop_assert_eq!(preds.len(), dense.pred_count(v));
            prop_assert_eq!(preds, brute_closure(dims, dir, v));
        }
    }

    #[test]
    fn topological_order_respects_every_edge(rows in 1usize..7, cols in 1usize..7, dir in direction()) {
        let dims = GridDims::new(rows, cols).unwrap();
        let dense = build_dense_dag(dims, dir).unwrap();
        let mut position = vec![0; dims.len()];
        for (k, &g) in dense.topo().iter().enumerate() {
            position[g] = k;
        }
        for v in dims.vertices() {
            for u in dense.pred_indices(v) {
                prop_assert!(position[u] < position[dims.index(v)]);
            }
        }
        let schedule = wavefronts(&dense);
        let mut level = vec![0; dims.len()];
        for (l, vs) in schedule.levels.iter().enumerate() {
            for &v in vs {
                level[dims.index(v)] = l;
            }
        }
        for v in dims.vertices() {
            for u in dense.pred_indices(v) {
                prop_assert!(level[u] < level[dims.index(v)]);
            }
        }
    }

    #[test]
    fn four_dense_dags_cover_every_pair(rows in 1usize..6, cols in 1usize..6) {
        let dims = GridDims::new(rows, cols).unwrap();
        let dags: Vec<_> = Direction::ALL.iter().map(|&d| build_dense_dag(dims, d).unwrap()).collect();
        for a in 0..dims.len() {
            for b in (a + 1)..dims.len() {
                let (va, vb) = (dims.vertex(a), dims.vertex(b));
                let linked = dags.iter().any(|dag| {
                    dag.pred_indices(va).any(|u| u == b) || dag.pred_indices(vb).any(|u| u == a)
                });
                prop_assert!(linked, "{va:?} and {vb:?} are not connected");
            }
        }
    }

    #[test]
    fn reflected_input_gives_reflected_hidden(seed in any::<u64>(), rows in 1usize..5, cols in 1usize..5,
                                             variant in prop::sample::select(vec![Variant::PlainDag, Variant::DenseSum, Variant::DenseAttention])) {
        let dims = GridDims::new(rows, cols).unwrap();
        let mut rng = Rng::new(seed);
        let x = random_field(dims, 3, &mut rng);
        let p = random_direction_params(3, &mut rng);
        let se = direction_forward(variant, &x, Direction::SE, &p, Execution::Sequential).unwrap();
        for dir in Direction::ALL {
            let (flip_r, flip_c) = dir.reflection();
            let map = |v: VertexId| VertexId::new(
                if flip_r { rows - 1 - v.row } else { v.row },
                if flip_c { cols - 1 - v.col } else { v.col },
            );
            let mut data = vec![0.0; dims.len() * 3];
            for v in dims.vertices() {
                let g = dims.index(map(v));
                data[g * 3..g * 3 + 3].copy_from_slice(x.unit(dims.index(v)));
            }
            let reflected = Field::from_vec(dims, 3, data).unwrap();
            let out = direction_forward(variant, &reflected, dir, &p, Execution::Sequential).unwrap();
            for v in dims.vertices() {
                prop_assert_eq!(out.hidden.unit(dims.index(map(v))), se.hidden.unit(dims.index(v)));
            }
        }
    }

    #[test]
    fn schedule_does_not_change_results(seed in any::<u64>(), rows in 1usize..6, cols in 1usize..6, dir in direction(),
                                        variant in prop::sample::select(vec![Variant::PlainDag, Variant::DenseSum, Variant::DenseAttention])) {
        let dims = GridDims::new(rows, cols).unwrap();
        let mut rng = Rng::new(seed);
        let x = random_field(dims, 4, &mut rng);
        let p = random_direction_params(4, &mut rng);
        let seq = direction_forward(variant, &x, dir, &p, Execution::Sequential).unwrap();
        for exec in [Execution::Wavefront, Execution::ParallelWavefront] {
            let other = direction_forward(variant, &x, dir, &p, exec).unwrap();
            prop_assert_eq!(&other.hidden, &seq.hidden);
            prop_assert_eq!(&other.vertices, &seq.vertices);
        }
    }

    #[test]
    fn attention_weights_are_normalised_in_standard_precision(seed in any::<u64>(), rows in 1usize..6, cols in 1usize..6, dir in direction()) {
        let dims = GridDims::new(rows, cols).unwrap();
        let mut rng = Rng::new(seed);
        let x = random_field(dims, 4, &mut rng).cast::<f32>();
        let p = random_direction_params(4, &mut rng);
        let p32 = DirectionParams { u: p.u.cast(), w: p.w.cast(), v: p.v.cast(),
                                    b: p.b.iter().map(|&v| v as f32).collect(), z: p.z.iter().map(|&v| v as f32).collect() };
        let dag = build_dense_dag(dims, dir).unwrap();
        let trace = dense_attention_forward(&x, &dag, &p32).unwrap();
        for g in 0..dims.len() {
            let w = trace.weights(g);
            prop_assert!(w.iter().all(|&x| x > 0.0));
            prop_assert!((w.iter().sum::<f32>() - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn tensor_files_roundtrip(dims in prop::collection::vec(1usize..5, 1..=4), kind in 0u8..3, seed in any::<u64>()) {
        let n: usize = dims.iter().product();
        let mut rng = Rng::new(seed);
        let data = match kind {
            0 => TensorData::F32((0..n).map(|_| rng.normal() as f32).collect()),
            1 => TensorData::F64((0..n).map(|_| rng.normal()).collect()),
            _ => TensorData::U8((0..n).map(|_| rng.below(256) as u8).collect()),
        };
        let t = Tensor::new(dims, data).unwrap();
        let back = Tensor::decode(&t.encode(), std::path::Path::new("mem")).unwrap();
        prop_assert_eq!(back.encode(), t.encode());
        prop_assert_eq!(back, t);
    }
}
