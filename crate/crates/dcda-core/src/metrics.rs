//! Presentation-attack-detection metrics and embedding export.
//!
//! APCER counts attacks accepted as bona-fide, BPCER counts bona-fide
//! presentations rejected as attack, ACER is their mean. HTER is computed
//! at the same fixed threshold, which makes it numerically equal to ACER
//! here; no equal-error-rate threshold selection is performed and reports
//! say so.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::losses::AssignmentMatrix;
use crate::model::DcdaModel;
use crate::pca::project_2d;

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub apcer: f64,
    pub bpcer: f64,
    pub acer: f64,
    /// Half total error rate at the same fixed threshold as ACER; equal to
    /// ACER under this protocol (no EER threshold search).
    pub hter: f64,
    pub accuracy: f64,
    pub threshold: f64,
    pub true_attack: usize,
    pub true_bonafide: usize,
    pub false_attack: usize,
    pub false_bonafide: usize,
    /// Set when a class is absent; that class's rate is defined as 0.
    pub empty_class_warning: bool,
}

impl MetricsReport {
    pub fn total(&self) -> usize {
        self.true_attack + self.true_bonafide + self.false_attack + self.false_bonafide
    }

    /// Key-value rendering, one `key = value` per line.
    pub fn to_kv_string(&self) -> String {
        let mut out = String::new();
        writeln!(out, "threshold = {}", self.threshold).unwrap();
        writeln!(out, "apcer = {}", self.apcer).unwrap();
        writeln!(out, "bpcer = {}", self.bpcer).unwrap();
        writeln!(out, "acer = {}", self.acer).unwrap();
        writeln!(out, "hter = {}", self.hter).unwrap();
        writeln!(out, "accuracy = {}", self.accuracy).unwrap();
        writeln!(out, "true_attack = {}", self.true_attack).unwrap();
        writeln!(out, "true_bonafide = {}", self.true_bonafide).unwrap();
        writeln!(out, "false_attack = {}", self.false_attack).unwrap();
        writeln!(out, "false_bonafide = {}", self.false_bonafide).unwrap();
        writeln!(out, "empty_class_warning = {}", self.empty_class_warning).unwrap();
        out
    }

    /// Human-readable rendering.
    pub fn to_display_string(&self) -> String {
        let mut out = String::new();
        writeln!(out, "threshold          {:.4}", self.threshold).unwrap();
        writeln!(out, "APCER              {:.4}", self.apcer).unwrap();
        writeln!(out, "BPCER              {:.4}", self.bpcer).unwrap();
        writeln!(out, "ACER               {:.4}", self.acer).unwrap();
        writeln!(
            out,
            "HTER               {:.4}  (fixed-threshold protocol, equals ACER)",
            self.hter
        )
        .unwrap();
        writeln!(out, "accuracy           {:.4}", self.accuracy).unwrap();
        writeln!(
            out,
            "counts             TA {} / TB {} / FA {} / FB {}",
            self.true_attack, self.true_bonafide, self.false_attack, self.false_bonafide
        )
        .unwrap();
        if self.empty_class_warning {
            writeln!(out, "warning            one class absent; its rate is defined as 0").unwrap();
        }
        out
    }
}

/// Thresholds the attack probability (column 1): predict attack iff
/// `p_attack >= threshold`, so a tie counts as attack.
pub fn classify_at_threshold(probs: &AssignmentMatrix, threshold: f64) -> Vec<usize> {
    (0..probs.rows())
        .map(|r| usize::from(probs.matrix().get(r, 1) >= threshold))
        .collect()
}

/// Confusion counts and error rates against 0/1 labels (0 bona-fide,
/// 1 attack). An absent class yields rate 0 and the warning flag.
pub fn compute_metrics(
    predictions: &[usize],
    labels: &[usize],
    threshold: f64,
) -> Result<MetricsReport> {
    if labels.is_empty() {
        return Err(Error::MissingLabels("compute_metrics needs labels".into()));
    }
    if predictions.len() != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} predictions vs {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let mut true_attack = 0usize;
    let mut true_bonafide = 0usize;
    let mut false_attack = 0usize;
    let mut false_bonafide = 0usize;
    for (&pred, &label) in predictions.iter().zip(labels) {
        if pred > 1 || label > 1 {
            return Err(Error::InvalidLabel {
                value: pred.max(label),
                context: "compute_metrics".into(),
            });
        }
        match (label, pred) {
            (1, 1) => true_attack += 1,
            (1, 0) => false_bonafide += 1,
            (0, 0) => true_bonafide += 1,
            (0, 1) => false_attack += 1,
            _ => unreachable!(),
        }
    }
    let attacks = true_attack + false_bonafide;
    let bonafides = true_bonafide + false_attack;
    let empty_class_warning = attacks == 0 || bonafides == 0;
    let apcer = if attacks == 0 {
        0.0
    } else {
        false_bonafide as f64 / attacks as f64
    };
    let bpcer = if bonafides == 0 {
        0.0
    } else {
        false_attack as f64 / bonafides as f64
    };
    let acer = (apcer + bpcer) / 2.0;
    let accuracy = (true_attack + true_bonafide) as f64 / labels.len() as f64;
    Ok(MetricsReport {
        apcer,
        bpcer,
        acer,
        hter: acer,
        accuracy,
        threshold,
        true_attack,
        true_bonafide,
        false_attack,
        false_bonafide,
        empty_class_warning,
    })
}

/// Classifies a labeled dataset with the model and reports its metrics.
pub fn evaluate_dataset(
    model: &DcdaModel,
    dataset: &Dataset,
    threshold: f64,
) -> Result<MetricsReport> {
    let labels = dataset
        .labels
        .as_ref()
        .ok_or_else(|| Error::MissingLabels(format!("dataset `{}` has no labels", dataset.name)))?;
    let probs = model.classify_probs(&dataset.features)?;
    let predictions = classify_at_threshold(&probs, threshold);
    compute_metrics(&predictions, labels, threshold)
}

/// Companion path for the 2-D PCA projection CSV: `emb.csv -> emb_pca.csv`.
pub fn pca_companion_path(path: &Path) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "embeddings".into());
    let ext = path
        .extension()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "csv".into());
    path.with_file_name(format!("{stem}_pca.{ext}"))
}

/// Writes every dataset's embeddings to `path` with columns
/// `f0..f{h-1},domain,label,split` (label empty when unknown), plus a
/// companion 2-D PCA projection CSV next to it.
///
/// `label_overrides[i]`, when set, replaces dataset `i`'s label column;
/// the trainer uses this to export target pseudo-labels.
pub fn export_embeddings(
    model: &DcdaModel,
    datasets: &[&Dataset],
    label_overrides: &[Option<&[usize]>],
    path: &Path,
) -> Result<()> {
    if datasets.is_empty() {
        return Err(Error::EmptyBatch("export_embeddings".into()));
    }
    if label_overrides.len() != datasets.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} label overrides for {} datasets",
            label_overrides.len(),
            datasets.len()
        )));
    }
    let h = model.embed_dim();
    let mut rows: Vec<(Vec<f64>, String, String, String)> = Vec::new();
    for (i, dataset) in datasets.iter().enumerate() {
        let emb = model.embed(&dataset.features)?;
        let labels: Option<Vec<usize>> = match label_overrides[i] {
            Some(o) => {
                if o.len() != dataset.len() {
                    return Err(Error::DimensionMismatch(format!(
                        "label override for `{}` has {} entries for {} rows",
                        dataset.name,
                        o.len(),
                        dataset.len()
                    )));
                }
                Some(o.to_vec())
            }
            None => dataset.labels.clone(),
        };
        for r in 0..emb.rows() {
            let label = labels
                .as_ref()
                .map(|l| l[r].to_string())
                .unwrap_or_default();
            rows.push((
                emb.row(r).to_vec(),
                dataset.domain.name().to_string(),
                label,
                dataset.split.name().to_string(),
            ));
        }
    }

    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| Error::io(path.display().to_string(), std::io::Error::other(e)))?;
    let mut header: Vec<String> = (0..h).map(|i| format!("f{i}")).collect();
    header.extend(["domain".into(), "label".into(), "split".into()]);
    writer
        .write_record(&header)
        .map_err(|e| Error::io(path.display().to_string(), std::io::Error::other(e)))?;
    for (features, domain, label, split) in &rows {
        let mut record: Vec<String> = features.iter().map(|v| format!("{v}")).collect();
        record.extend([domain.clone(), label.clone(), split.clone()]);
        writer
            .write_record(&record)
            .map_err(|e| Error::io(path.display().to_string(), std::io::Error::other(e)))?;
    }
    writer
        .flush()
        .map_err(|e| Error::io(path.display().to_string(), e))?;

    // companion PCA projection
    let flat: Vec<Vec<f64>> = rows.iter().map(|(f, _, _, _)| f.clone()).collect();
    let points = crate::matrix::Matrix::from_rows(&flat)?;
    let (projected, _) = project_2d(&points)?;
    let pca_path = pca_companion_path(path);
    let mut writer = csv::Writer::from_path(&pca_path)
        .map_err(|e| Error::io(pca_path.display().to_string(), std::io::Error::other(e)))?;
    writer
        .write_record(["p0", "p1", "domain", "label", "split"])
        .map_err(|e| Error::io(pca_path.display().to_string(), std::io::Error::other(e)))?;
    for (r, (_, domain, label, split)) in rows.iter().enumerate() {
        writer
            .write_record([
                format!("{}", projected.get(r, 0)),
                format!("{}", projected.get(r, 1)),
                domain.clone(),
                label.clone(),
                split.clone(),
            ])
            .map_err(|e| Error::io(pca_path.display().to_string(), std::io::Error::other(e)))?;
    }
    writer
        .flush()
        .map_err(|e| Error::io(pca_path.display().to_string(), e))?;
    Ok(())
}
