//! Training report: per-epoch loss traces, pseudo-label flip counts and
//! final metrics, rendered as a structured text document.

use std::fmt::Write as _;

use crate::metrics::MetricsReport;

#[derive(Debug, Clone, PartialEq)]
pub struct EpochTrace {
    pub source_cls: f64,
    pub target_cls: f64,
    pub domain: f64,
    pub cluster: f64,
    pub balance: f64,
    /// Weighted total driving the feature-extractor update.
    pub total_feature: f64,
    pub pseudo_flips: usize,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub mode: String,
    pub seed: u64,
    pub iters_per_epoch: usize,
    pub epochs: Vec<EpochTrace>,
    /// `(dataset tag, metrics)` per labeled dataset seen by the run.
    pub final_metrics: Vec<(String, MetricsReport)>,
    /// Pseudo-labels at the end of training, clustering modes only.
    pub final_pseudo_labels: Option<Vec<usize>>,
}

impl TrainReport {
    pub fn to_display_string(&self) -> String {
        let mut out = String::new();
        writeln!(out, "# dcda training report").unwrap();
        writeln!(out, "mode = {}", self.mode).unwrap();
        writeln!(out, "seed = {}", self.seed).unwrap();
        writeln!(out, "epochs = {}", self.epochs.len()).unwrap();
        writeln!(out, "iters_per_epoch = {}", self.iters_per_epoch).unwrap();
        writeln!(
            out,
            "# epoch  L_src_cls  L_tgt_cls  L_domain  L_cluster  L_balance  L_total_F  flips"
        )
        .unwrap();
        for (i, t) in self.epochs.iter().enumerate() {
            writeln!(
                out,
                "{:>5}  {:>9.6}  {:>9.6}  {:>8.6}  {:>9.6}  {:>9.6}  {:>9.6}  {:>5}",
                i + 1,
                t.source_cls,
                t.target_cls,
                t.domain,
                t.cluster,
                t.balance,
                t.total_feature,
                t.pseudo_flips
            )
            .unwrap();
        }
        for (name, metrics) in &self.final_metrics {
            writeln!(out, "# final metrics: {name}").unwrap();
            for line in metrics.to_kv_string().lines() {
                writeln!(out, "{name}.{line}").unwrap();
            }
        }
        out
    }
}
