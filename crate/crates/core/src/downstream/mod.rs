//! Multi-label fine-tuning, ranking metrics and triplet similarity evaluation.

mod finetune;
mod metrics;
mod stopping;
mod triplet;

pub use finetune::{
    finetune, finetune_with, Classifier, FinetuneConfig, FinetuneEpochLog, FinetuneOutcome, Phase,
};
pub use metrics::{
    average_precision, macro_average_precision, macro_metrics, macro_roc_auc, roc_auc, MacroMetrics, TagMetrics,
};
pub use stopping::{EarlyStopper, Observation};
pub use triplet::{cosine_distance, evaluate_triplets, TripletReport};

use serde::{Deserialize, Serialize};

/// Evaluation summary emitted by `finetune`, `eval-cls` and `eval-sim`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub macro_roc_auc: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub macro_average_precision: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_tag: Vec<TagMetrics>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub excluded_tags: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub triplet_accuracy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub avg_distance_difference: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_triplets: Option<usize>,
    pub seed: u64,
}

impl MetricReport {
    pub fn with_classification(mut self, m: MacroMetrics) -> Self {
        self.macro_roc_auc = Some(m.roc_auc);
        self.macro_average_precision = Some(m.average_precision);
        self.per_tag = m.per_tag;
        self.excluded_tags = m.excluded;
        self
    }

    pub fn with_triplets(mut self, t: TripletReport) -> Self {
        self.triplet_accuracy = Some(t.accuracy);
        self.avg_distance_difference = Some(t.avg_difference);
        self.n_triplets = Some(t.n);
        self
    }
}
