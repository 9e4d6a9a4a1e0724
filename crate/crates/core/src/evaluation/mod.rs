//! Regression metrics, cluster ranking power and invariance audits.

mod audit;
mod metrics;

pub use audit::{audit_csv, invariance_audit, permutation_deviation, AffinityPredictor, AuditRow, AUDIT_HEADER};
pub use metrics::{
    average_ranks, mae, pearson, ranking_power, rmse, sd_regression, spearman, Cluster, ClusterMember, MetricsReport,
};
