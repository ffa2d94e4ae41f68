//! Recurrent layers over directional grid DAGs and the aggregation head.
//!
//! For a unit `v` with embedded input `x_v` the four recurrences are
//!
//! * chain / plain DAG / dense sum: `h_v = relu(U x_v + W Σ_{u ∈ P(v)} h_u + b)`
//!   with `P(v)` the previous unit, the adjacent predecessors or the whole
//!   dominance set respectively;
//! * dense attention: `h_v = Σ_u w_{v,u} relu(U x_v + W h_u + b)` with
//!   `w_{v,·} = softmax_u(z · relu(U x_v + W h_u + b))`.
//!
//! Directions are combined once at the output:
//! `p_v = softmax(Σ_l V^l h^l_v + c)`.

mod network;
mod params;
mod recurrence;
mod store;

pub use network::{
    aggregate_logits, embed, model_backward, model_forward, model_forward_with, predict_labels,
    sample_loss, ForwardTrace,
};
pub use params::{
    param_group, DirectionParams, ModelConfig, ModelParams, NamedTensor, NamedTensorMut,
    ParamGroup, Variant, DEFAULT_HIDDEN,
};
pub use recurrence::{
    attention_combine, attention_pairwise, attention_weights, chain_forward, dense_attention_forward,
    dense_sum_forward, direction_forward, plain_dag_forward, DirectionTrace, Execution, VertexState,
};
pub use store::{load_model, save_model, AnyParams, SavedModel, MODEL_MANIFEST};
