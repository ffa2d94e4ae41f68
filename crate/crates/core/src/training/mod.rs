//! SGD training, learning-rate schedule, evaluation metrics and the
//! gradient-check harness.

mod gradcheck;
mod metrics;
mod sgd;

pub use gradcheck::{
    compare_gradients, gradient_check, GradCheckInstance, GradCheckReport, GradCheckSpec, Offender,
    KINK_MARGIN, NEGLIGIBLE_GRADIENT,
};
pub use metrics::{Confusion, MetricsReport};
pub use sgd::{
    eval_threads, evaluate, evaluate_with_threads, lr_schedule, sgd_step, train, EpochRecord,
    LearningRates, TrainConfig, TrainHistory, THREADS_ENV,
};
