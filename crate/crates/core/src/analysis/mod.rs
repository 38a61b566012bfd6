//! Error forensics: discrepant events, feature correlation, clustering and
//! hidden-state outlier checks.

pub mod correlation;
pub mod events;
pub mod kmeans;
pub mod outliers;

pub use correlation::{correlate, pearson, CorrelationReport, FeatureCorrelation};
pub use events::{collect_discrepant, feature_index, feature_names, write_events_csv, ErrorEvent};
pub use kmeans::{cluster_points, kmeans, KMeansResult, CLUSTER_FEATURE_NAMES};
pub use outliers::{outlier_table, OutlierRow, OutlierTable};
