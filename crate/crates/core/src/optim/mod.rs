//! Training objective, gradients, optimizer, fitting and compression.

pub mod adamw;
pub mod als;
pub mod amortized;
pub mod fit;
pub mod grad;
pub mod loss;

pub use adamw::{adamw_step, AdamState, AdamWConfig, LrSchedule};
pub use als::{cp_als_compress, CpAlsResult};
pub use amortized::{
    extract_global_features, predictor_loss_and_gradients, train_amortized, AmortizedPredictor, AmortizedReport,
    FEATURE_LEN,
};
pub use fit::{default_bases, fit_image_pair, fit_with_bases, FinalMetrics, FitConfig, FitReport, LogEntry};
pub use grad::{backward, loss_and_gradients, Gradients};
pub use loss::{l2_residual, loss_total, mean_l1, tv_loss, LossBreakdown, LossWeights};
