pub mod confusion;
pub mod kid;
pub mod report;

pub use confusion::{
    cohen_kappa, confusion, f1_per_class, macro_f1, macro_precision, macro_recall, mean_accuracy, overall_accuracy,
    precision_per_class, recall_per_class, ConfusionMatrix,
};
pub use kid::{kid, mmd2_unbiased, poly_kernel, KidConfig, KidEstimate};
pub use report::{ClassMetrics, MetricsReport};
