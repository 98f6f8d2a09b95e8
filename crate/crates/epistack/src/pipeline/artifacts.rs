//! On-disk layout of pipeline stage artifacts. Every stage reads only its
//! predecessors' documented files, so stages can be rerun independently.

use crate::metrics::EvalReport;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Scientific-notation label used in directory names, e.g. `5e-3`.
pub fn threshold_label(threshold: f64) -> String {
    format!("{threshold:e}")
}

pub struct Layout {
    root: PathBuf,
}

impl Layout {
    pub fn new(root: &Path) -> Layout {
        Layout { root: root.to_path_buf() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn lockfile(&self) -> PathBuf {
        self.root.join(".lock")
    }

    pub fn dataset_dir(&self) -> PathBuf {
        self.root.join("dataset")
    }

    pub fn dataset_trio(&self) -> (PathBuf, PathBuf, PathBuf) {
        let d = self.dataset_dir();
        (d.join("sim.bed"), d.join("sim.bim"), d.join("sim.fam"))
    }

    pub fn manifest(&self) -> PathBuf {
        self.dataset_dir().join("manifest.json")
    }

    pub fn qc_dir(&self) -> PathBuf {
        self.root.join("qc")
    }

    pub fn clean_trio(&self) -> (PathBuf, PathBuf, PathBuf) {
        let d = self.qc_dir();
        (d.join("clean.bed"), d.join("clean.bim"), d.join("clean.fam"))
    }

    pub fn qc_report(&self) -> PathBuf {
        self.qc_dir().join("qc_report.json")
    }

    pub fn removed_samples_csv(&self) -> PathBuf {
        self.qc_dir().join("removed_samples.csv")
    }

    pub fn removed_variants_csv(&self) -> PathBuf {
        self.qc_dir().join("removed_variants.csv")
    }

    pub fn splits(&self) -> PathBuf {
        self.qc_dir().join("splits.json")
    }

    pub fn scan_dir(&self) -> PathBuf {
        self.root.join("scan")
    }

    pub fn scan_csv(&self) -> PathBuf {
        self.scan_dir().join("assoc.csv")
    }

    pub fn scan_json(&self) -> PathBuf {
        self.scan_dir().join("assoc.json")
    }

    pub fn baseline_dir(&self, threshold: f64) -> PathBuf {
        self.root
            .join("baseline")
            .join(format!("thr_{}", threshold_label(threshold)))
    }

    pub fn stack_dir(&self) -> PathBuf {
        self.root.join("stack")
    }

    pub fn stack_model(&self) -> PathBuf {
        self.stack_dir().join("stack.bin")
    }

    pub fn stack_rows_used(&self) -> PathBuf {
        self.stack_dir().join("rows_used.json")
    }

    pub fn depth_dir(&self, width: usize) -> PathBuf {
        self.stack_dir().join(format!("depth_{width}"))
    }

    pub fn summary_json(&self) -> PathBuf {
        self.root.join("summary.json")
    }

    pub fn summary_text(&self) -> PathBuf {
        self.root.join("summary.txt")
    }
}

/// Files inside one model directory (a baseline threshold or a stack depth).
pub struct ModelDir(pub PathBuf);

impl ModelDir {
    pub fn model(&self) -> PathBuf {
        self.0.join("model.bin")
    }

    pub fn subset(&self) -> PathBuf {
        self.0.join("subset.json")
    }

    pub fn history_csv(&self) -> PathBuf {
        self.0.join("history.csv")
    }

    pub fn report(&self, split: &str) -> PathBuf {
        self.0.join(format!("report_{split}.json"))
    }

    pub fn roc_csv(&self, split: &str) -> PathBuf {
        self.0.join(format!("roc_{split}.csv"))
    }

    pub fn skipped(&self) -> PathBuf {
        self.0.join("skipped.json")
    }
}

/// Persisted SNP selection for one threshold.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubsetArtifact {
    pub threshold: f64,
    pub variant_ids: Vec<String>,
    pub impute_means: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SkippedRow {
    pub threshold: f64,
    pub reason: String,
}

/// The six reported metric columns plus the decision threshold.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricSix {
    pub threshold: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub gini: f64,
    pub logloss: f64,
    pub auc: f64,
    pub mse: f64,
}

impl From<&EvalReport> for MetricSix {
    fn from(r: &EvalReport) -> Self {
        MetricSix {
            threshold: r.threshold,
            sensitivity: r.sensitivity,
            specificity: r.specificity,
            gini: r.gini,
            logloss: r.logloss,
            auc: r.auc,
            mse: r.mse,
        }
    }
}

/// One line of the final summary: a baseline threshold or a stack depth.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SummaryRow {
    pub label: String,
    pub n_inputs: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub valid: Option<MetricSix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test: Option<MetricSix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QcSummary {
    pub samples_before: usize,
    pub samples_after: usize,
    pub variants_before: usize,
    pub variants_after: usize,
}

/// Collated end-of-run document; deliberately free of timestamps and paths
/// so identical configurations produce identical bytes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Summary {
    pub seed: u64,
    pub config_echo: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qc: Option<QcSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan_counts: Option<Vec<(String, usize)>>,
    pub baseline: Vec<SummaryRow>,
    pub stack: Vec<SummaryRow>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut bytes = serde_json::to_vec_pretty(value).expect("serializable artifact");
    bytes.push(b'\n');
    std::fs::write(path, bytes)
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> std::io::Result<T> {
    let bytes = std::fs::read(path)?;
    serde_json::from_slice(&bytes)
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
}
