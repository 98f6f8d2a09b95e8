//! End-to-end experiment orchestration: simulate or ingest, QC, association
//! scan, per-threshold baseline classifiers, stacked-autoencoder pretraining
//! with per-depth fine-tuned classifiers, and the collated report.
//!
//! Each stage writes its artifacts under the output directory and later
//! stages read only those files, so stages rerun independently. A lockfile
//! gives one pipeline exclusive ownership of the directory.

pub mod artifacts;

use crate::assoc::{self, AssocError, AssocResult, SnpSubset};
use crate::genotype::{orient_minor_allele, Dataset};
use crate::metrics::{self, EvalReport, MetricsError, ScoredLabels};
use crate::net::{
    self, serialize::ModelMetadata, Activation, CostKind, LayerSpec, TrainConfig, TrainOptions,
};
use crate::plink::{self, PlinkError};
use crate::qc::{self, QcError, QcReport, QcThresholds};
use crate::sae::{self, SaeError, SparseAeConfig, StackManifest};
use crate::simdata::{self, SimError, SimSpec, SplitIndices};
use artifacts::{
    read_json, threshold_label, write_json, Layout, MetricSix, ModelDir, QcSummary, SubsetArtifact,
    Summary, SummaryRow,
};
use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("output directory is locked by another run ({0})")]
    Locked(PathBuf),
    #[error("no artifacts found under {0}")]
    NoArtifacts(PathBuf),
    #[error("missing artifact {0} (run the earlier stage first)")]
    MissingArtifact(PathBuf),
    #[error(transparent)]
    Plink(#[from] PlinkError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Qc(#[from] QcError),
    #[error(transparent)]
    Assoc(#[from] AssocError),
    #[error(transparent)]
    Sae(#[from] SaeError),
    #[error(transparent)]
    Train(#[from] net::TrainError),
    #[error(transparent)]
    Net(#[from] net::NetError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    ModelIo(#[from] net::serialize::ModelIoError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl PipelineError {
    /// Process exit code: 2 for validation problems, 3 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Validation(_) => 2,
            _ => 3,
        }
    }
}

/// Where the genotypes come from.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum DataSource {
    /// Generate a synthetic cohort under `dataset/`.
    Simulate(SimSpec),
    /// Existing PLINK trio.
    Plink { bed: PathBuf, bim: PathBuf, fam: PathBuf },
}

/// Sparsity settings for the pretraining stage.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PretrainConfig {
    pub sparsity_target: f64,
    pub sparsity_weight: f64,
    pub train: TrainConfig,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            sparsity_target: 0.05,
            sparsity_weight: 3.0,
            train: TrainConfig {
                learning_rate: 0.05,
                epochs_max: 150,
                hidden_dropout: 0.0,
                input_dropout: 0.0,
                batch_size: None,
                cost: CostKind::SquaredError,
                ..TrainConfig::default()
            },
        }
    }
}

// Classifier settings tuned for the synthetic-scale default experiment
// (a few dozen dosage inputs): steady momentum, mild decay, no dropout, and
// enough patience that early stopping does not fire on the noisy
// misclassification plateau of weak-signal cohorts. `published_preset` swaps in
// the published schedule instead.
fn default_classifier_train() -> TrainConfig {
    TrainConfig {
        learning_rate: 0.05,
        weight_decay: 1e-3,
        momentum_start: 0.9,
        momentum_ramp: 1.0,
        momentum_stable: 0.9,
        epochs_max: 300,
        hidden_dropout: 0.0,
        early_stop_patience: 30,
        batch_size: Some(128),
        cost: CostKind::CrossEntropy,
        ..TrainConfig::default()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub data: DataSource,
    pub qc: QcThresholds,
    /// Descending p-value cut-offs for the baseline sweep.
    pub thresholds: Vec<f64>,
    /// Strictly decreasing stack widths; clipped to the input width at run
    /// time when the selected subset is narrower.
    pub stack_sizes: Vec<usize>,
    /// Hidden widths of the baseline classifier head (output is the 2-unit
    /// sigmoid pair).
    pub baseline_head: Vec<usize>,
    pub stack_head: Vec<usize>,
    pub baseline_train: TrainConfig,
    pub finetune_train: TrainConfig,
    pub pretrain: PretrainConfig,
    /// Per-depth fine-tuning learning rates (outermost stack layer first);
    /// `None` keeps `finetune_train.learning_rate` everywhere.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub finetune_lr_per_depth: Option<Vec<f64>>,
    /// Re-optimise the decision threshold on the test split as well instead
    /// of reusing the validation-selected one.
    pub per_split_f1: bool,
    /// Freeze copied encoder layers during fine-tuning.
    pub freeze_encoders: bool,
    pub split_fractions: (f64, f64, f64),
    pub output_dir: PathBuf,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            data: DataSource::Simulate(SimSpec::default()),
            // single-population synthetic cohorts have no divergent-ancestry
            // outliers; the published preset restores the cohort-specific values
            qc: QcThresholds::default().without_ancestry_filter(),
            thresholds: vec![5e-3, 5e-4, 5e-5, 5e-6, 5e-7, 5e-8],
            stack_sizes: vec![2000, 1000, 500, 200, 100, 50],
            baseline_head: vec![10, 10, 10, 10],
            stack_head: vec![10, 10, 10, 10],
            baseline_train: default_classifier_train(),
            finetune_train: default_classifier_train(),
            pretrain: PretrainConfig::default(),
            finetune_lr_per_depth: None,
            per_split_f1: false,
            freeze_encoders: false,
            split_fractions: (0.8, 0.1, 0.1),
            output_dir: PathBuf::from("out"),
            seed: 1,
        }
    }
}

impl PipelineConfig {
    /// Schedule mirroring the published experiment: learning rate 0.005 with
    /// 1e-6 annealing, momentum 0.5/1e-6/0, one hundred epochs, and the
    /// per-depth fine-tuning rates 1e-3 ... 1e-6.
    pub fn published_preset() -> PipelineConfig {
        let schedule = TrainConfig {
            learning_rate: 0.005,
            rate_annealing: 1e-6,
            rate_decay: 1.0,
            momentum_start: 0.5,
            momentum_ramp: 1e-6,
            momentum_stable: 0.0,
            epochs_max: 100,
            hidden_dropout: 0.5,
            input_dropout: 0.0,
            early_stop_patience: 5,
            batch_size: Some(32),
            cost: CostKind::CrossEntropy,
            ..TrainConfig::default()
        };
        PipelineConfig {
            qc: QcThresholds::default(),
            baseline_train: schedule.clone(),
            finetune_train: schedule,
            finetune_lr_per_depth: Some(vec![1e-3, 1e-3, 1e-4, 1e-5, 1e-5, 1e-6]),
            per_split_f1: true,
            ..PipelineConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.thresholds.is_empty() {
            return Err(PipelineError::Validation("threshold list is empty".into()));
        }
        if self.thresholds.windows(2).any(|w| w[0] <= w[1]) {
            return Err(PipelineError::Validation(
                "thresholds must be strictly descending".into(),
            ));
        }
        if self.stack_sizes.is_empty() || self.stack_sizes.windows(2).any(|w| w[0] <= w[1]) {
            return Err(PipelineError::Validation(
                "stack sizes must be strictly decreasing".into(),
            ));
        }
        if self.baseline_head.is_empty() || self.stack_head.is_empty() {
            return Err(PipelineError::Validation("classifier heads cannot be empty".into()));
        }
        let (a, b, c) = self.split_fractions;
        if (a + b + c - 1.0).abs() > 1e-9 {
            return Err(PipelineError::Validation("split fractions must sum to 1".into()));
        }
        self.qc.validate().map_err(|e| PipelineError::Validation(e.to_string()))?;
        Ok(())
    }

    /// Config echo used in the summary: scientific settings only, no paths.
    pub fn echo(&self) -> serde_json::Value {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(map) = value.as_object_mut() {
            map.remove("output_dir");
        }
        value
    }
}

fn sub_seed(seed: u64, tag: u64) -> u64 {
    // cheap deterministic stream separation
    seed.wrapping_mul(0x9e3779b97f4a7c15).rotate_left(17) ^ tag.wrapping_mul(0xff51afd7ed558ccd)
}

/// Exclusive ownership of an output directory for the duration of a run.
pub struct DirLock {
    path: PathBuf,
}

impl DirLock {
    pub fn acquire(layout: &Layout) -> Result<DirLock, PipelineError> {
        std::fs::create_dir_all(layout.root())?;
        let path = layout.lockfile();
        match std::fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(DirLock { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(PipelineError::Locked(path))
            }
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

/// Generate the synthetic cohort and write it with its manifest.
pub fn simulate_stage(config: &PipelineConfig, out: &Path) -> Result<(), PipelineError> {
    config.validate()?;
    let layout = Layout::new(out);
    let spec = match &config.data {
        DataSource::Simulate(spec) => spec.clone(),
        DataSource::Plink { .. } => {
            return Err(PipelineError::Validation(
                "simulate stage requires a simulation data source".into(),
            ))
        }
    };
    let (ds, truth) = simdata::generate(&spec)?;
    std::fs::create_dir_all(layout.dataset_dir())?;
    let (bed, bim, fam) = layout.dataset_trio();
    plink::write_bed_dataset(&ds, &bed, &bim, &fam)?;
    write_json(&layout.manifest(), &truth)?;
    Ok(())
}

fn load_input_dataset(config: &PipelineConfig, layout: &Layout) -> Result<Dataset, PipelineError> {
    let (bed, bim, fam) = match &config.data {
        DataSource::Simulate(_) => layout.dataset_trio(),
        DataSource::Plink { bed, bim, fam } => (bed.clone(), bim.clone(), fam.clone()),
    };
    if !bed.exists() {
        return Err(PipelineError::MissingArtifact(bed));
    }
    Ok(plink::read_bed_dataset(&bed, &bim, &fam)?)
}

fn load_clean_dataset(layout: &Layout) -> Result<Dataset, PipelineError> {
    let (bed, bim, fam) = layout.clean_trio();
    if !bed.exists() {
        return Err(PipelineError::MissingArtifact(bed));
    }
    Ok(plink::read_bed_dataset(&bed, &bim, &fam)?)
}

/// Orient to minor-allele dosage, run individual then marker QC, write the
/// clean trio, the QC report, and the stratified splits.
pub fn qc_stage(config: &PipelineConfig, out: &Path) -> Result<QcReport, PipelineError> {
    config.validate()?;
    let layout = Layout::new(out);
    let ds = load_input_dataset(config, &layout)?;
    let ds = orient_minor_allele(&ds);
    let (ds, sample_report) = qc::run_individual_qc(&ds, &config.qc)?;
    let (ds, variant_report) = qc::variant_filters(&ds, &config.qc)?;
    let report = sample_report.merged_with(variant_report);

    std::fs::create_dir_all(layout.qc_dir())?;
    let (bed, bim, fam) = layout.clean_trio();
    plink::write_bed_dataset(&ds, &bed, &bim, &fam)?;
    write_json(&layout.qc_report(), &report)?;
    let mut f = std::fs::File::create(layout.removed_samples_csv())?;
    report.write_samples_csv(&mut f)?;
    let mut f = std::fs::File::create(layout.removed_variants_csv())?;
    report.write_variants_csv(&mut f)?;

    let splits = simdata::split(&ds, config.split_fractions, sub_seed(config.seed, 2))?;
    write_json(&layout.splits(), &splits)?;
    Ok(report)
}

/// Logistic scan over the clean cohort; writes the association table CSV and
/// a JSON mirror for downstream stages.
pub fn scan_stage(config: &PipelineConfig, out: &Path) -> Result<Vec<AssocResult>, PipelineError> {
    config.validate()?;
    let layout = Layout::new(out);
    let ds = load_clean_dataset(&layout)?;
    let results = assoc::association_scan(&ds)?;
    std::fs::create_dir_all(layout.scan_dir())?;
    let mut f = std::fs::File::create(layout.scan_csv())?;
    assoc::write_scan_csv(&results, &ds, &mut f)?;
    write_json(&layout.scan_json(), &results)?;
    Ok(results)
}

fn load_scan(layout: &Layout) -> Result<Vec<AssocResult>, PipelineError> {
    let path = layout.scan_json();
    if !path.exists() {
        return Err(PipelineError::MissingArtifact(path));
    }
    Ok(read_json(&path)?)
}

fn load_splits(layout: &Layout) -> Result<SplitIndices, PipelineError> {
    let path = layout.splits();
    if !path.exists() {
        return Err(PipelineError::MissingArtifact(path));
    }
    Ok(read_json(&path)?)
}

fn select_rows(design: &Array2<f64>, rows: &[usize]) -> Array2<f64> {
    design.select(Axis(0), rows)
}

fn labels_for(ds: &Dataset, rows: &[usize]) -> Vec<u8> {
    let labels = ds.labels();
    rows.iter().map(|&i| labels[i].unwrap_or(0)).collect()
}

struct EvaluatedModel {
    params: crate::Network64,
    history: Vec<net::TrainHistory>,
    valid_report: EvalReport,
    test_report: EvalReport,
    decision_threshold: f64,
}

/// Train a classifier on the subset design matrix and evaluate it on the
/// validation and test splits at the F1-optimal threshold (selected on the
/// validation split unless per-split optimisation is requested).
#[allow(clippy::too_many_arguments)]
fn train_and_evaluate(
    design: &Array2<f64>,
    ds: &Dataset,
    splits: &SplitIndices,
    head: &[usize],
    train_config: &TrainConfig,
    init_seed: u64,
    per_split_f1: bool,
    pretrained: Option<(crate::Network64, usize, bool)>,
) -> Result<EvaluatedModel, PipelineError> {
    let train_x = select_rows(design, &splits.train);
    let valid_x = select_rows(design, &splits.valid);
    let test_x = select_rows(design, &splits.test);
    let train_l = labels_for(ds, &splits.train);
    let valid_l = labels_for(ds, &splits.valid);
    let test_l = labels_for(ds, &splits.test);

    let (params, frozen_prefix) = match pretrained {
        Some((params, encoder_layers, freeze)) => {
            (params, if freeze { encoder_layers } else { 0 })
        }
        None => {
            let mut layers: Vec<LayerSpec> = head
                .iter()
                .map(|&s| LayerSpec::new(s, Activation::Rectifier))
                .collect();
            layers.push(LayerSpec::new(2, Activation::Sigmoid));
            (net::init_network(design.ncols(), &layers, init_seed)?, 0)
        }
    };
    let (best, history) = net::train(
        params,
        &train_x,
        &train_l,
        &valid_x,
        &valid_l,
        train_config,
        TrainOptions { frozen_prefix },
    )?;

    let valid_scores = best.predict(&valid_x)?;
    let valid_sl = ScoredLabels::new(valid_scores.to_vec(), valid_l)?;
    let (valid_thr, _) = metrics::optimal_f1_threshold(&valid_sl)?;
    let valid_report = metrics::evaluate(&valid_sl, valid_thr)?;

    let test_scores = best.predict(&test_x)?;
    let test_sl = ScoredLabels::new(test_scores.to_vec(), test_l)?;
    let test_thr = if per_split_f1 {
        metrics::optimal_f1_threshold(&test_sl)?.0
    } else {
        valid_thr
    };
    let test_report = metrics::evaluate(&test_sl, test_thr)?;
    Ok(EvaluatedModel {
        params: best,
        history,
        valid_report,
        test_report,
        decision_threshold: valid_thr,
    })
}

fn write_model_dir(
    dir: &ModelDir,
    evaluated: &EvaluatedModel,
    subset: &SubsetArtifact,
    config: &TrainConfig,
    seed: u64,
) -> Result<(), PipelineError> {
    std::fs::create_dir_all(&dir.0)?;
    write_json(&dir.subset(), subset)?;
    let metadata = ModelMetadata {
        seed,
        input_dim: evaluated.params.input_dim(),
        layer_sizes: evaluated.params.layers().iter().map(|l| l.size).collect(),
        activations: evaluated.params.layers().iter().map(|l| l.activation).collect(),
        config: config.clone(),
        input_ids: subset.variant_ids.clone(),
        impute_means: subset.impute_means.clone(),
        decision_threshold: Some(evaluated.decision_threshold),
    };
    net::serialize::save_model(&evaluated.params, &metadata, &dir.model())?;
    let mut f = std::fs::File::create(dir.history_csv())?;
    net::write_history_csv(&evaluated.history, &mut f)?;
    write_json(&dir.report("valid"), &evaluated.valid_report)?;
    write_json(&dir.report("test"), &evaluated.test_report)?;
    let mut f = std::fs::File::create(dir.roc_csv("valid"))?;
    metrics::write_roc_csv(&evaluated.valid_report.roc_points, &mut f)?;
    let mut f = std::fs::File::create(dir.roc_csv("test"))?;
    metrics::write_roc_csv(&evaluated.test_report.roc_points, &mut f)?;
    Ok(())
}

/// Per-threshold baseline classifiers. Thresholds whose subset is empty are
/// recorded as skipped rows rather than failures.
pub fn baseline_stage(config: &PipelineConfig, out: &Path) -> Result<Vec<SummaryRow>, PipelineError> {
    config.validate()?;
    let layout = Layout::new(out);
    let ds = load_clean_dataset(&layout)?;
    let results = load_scan(&layout)?;
    let splits = load_splits(&layout)?;

    let mut rows = Vec::with_capacity(config.thresholds.len());
    for (t_idx, &threshold) in config.thresholds.iter().enumerate() {
        let dir = ModelDir(layout.baseline_dir(threshold));
        let label = threshold_label(threshold);
        match assoc::threshold_filter(&results, &ds, threshold) {
            Err(AssocError::EmptySubset(_)) => {
                std::fs::create_dir_all(&dir.0)?;
                let skipped = artifacts::SkippedRow {
                    threshold,
                    reason: "no variant passes the threshold".into(),
                };
                write_json(&dir.skipped(), &skipped)?;
                rows.push(SummaryRow {
                    label,
                    n_inputs: 0,
                    valid: None,
                    test: None,
                    skipped: Some(skipped.reason),
                });
            }
            Err(e) => return Err(e.into()),
            Ok(subset) => {
                let mut train_config = config.baseline_train.clone();
                train_config.seed = sub_seed(config.seed, 100 + t_idx as u64);
                let evaluated = train_and_evaluate(
                    &subset.design,
                    &ds,
                    &splits,
                    &config.baseline_head,
                    &train_config,
                    sub_seed(config.seed, 200 + t_idx as u64),
                    config.per_split_f1,
                    None,
                )?;
                let artifact = SubsetArtifact {
                    threshold,
                    variant_ids: subset.variant_ids.clone(),
                    impute_means: subset.impute_means.clone(),
                };
                write_model_dir(&dir, &evaluated, &artifact, &train_config, train_config.seed)?;
                rows.push(SummaryRow {
                    label,
                    n_inputs: subset.variant_ids.len(),
                    valid: Some(MetricSix::from(&evaluated.valid_report)),
                    test: Some(MetricSix::from(&evaluated.test_report)),
                    skipped: None,
                });
            }
        }
    }
    Ok(rows)
}

/// Clip stack widths to the input width, keeping the strictly decreasing
/// shape (duplicates collapse onto their first occurrence).
pub fn clip_stack_sizes(sizes: &[usize], input_width: usize) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::new();
    for &s in sizes {
        let clipped = s.min(input_width);
        if out.last() != Some(&clipped) {
            out.push(clipped);
        }
    }
    out
}

/// Greedy stack pretraining on the loosest-threshold subset (training rows
/// only), then one fine-tuned classifier per stack depth.
pub fn stack_stage(config: &PipelineConfig, out: &Path) -> Result<Vec<SummaryRow>, PipelineError> {
    config.validate()?;
    let layout = Layout::new(out);
    let ds = load_clean_dataset(&layout)?;
    let results = load_scan(&layout)?;
    let splits = load_splits(&layout)?;

    let loosest = config.thresholds[0];
    let subset: SnpSubset = assoc::threshold_filter(&results, &ds, loosest)?;
    let sizes = clip_stack_sizes(&config.stack_sizes, subset.variant_ids.len());

    // pretraining sees training rows only
    let train_x = select_rows(&subset.design, &splits.train);
    write_json(&layout.stack_rows_used(), &splits.train)?;
    let mut ae_config = SparseAeConfig::new(0, config.pretrain.train.clone());
    ae_config.sparsity_target = config.pretrain.sparsity_target;
    ae_config.sparsity_weight = config.pretrain.sparsity_weight;
    ae_config.base.seed = sub_seed(config.seed, 300);
    let stack = sae::stack_train(&train_x, &sizes, &[ae_config])?;

    // persist the encoder chain in the model container
    std::fs::create_dir_all(layout.stack_dir())?;
    let encoder_layers: Vec<LayerSpec> = stack
        .layers
        .iter()
        .map(|l| LayerSpec::new(l.hidden_size, Activation::Sigmoid))
        .collect();
    let encoder_net = crate::Network64::from_parts(
        stack.input_dim,
        encoder_layers,
        stack.layers.iter().map(|l| l.weights.clone()).collect(),
        stack.layers.iter().map(|l| l.biases.clone()).collect(),
    )?;
    let manifest = StackManifest {
        input_dim: stack.input_dim,
        layer_sizes: stack.layer_sizes(),
        sparsity_target: config.pretrain.sparsity_target,
        sparsity_weight: config.pretrain.sparsity_weight,
        mean_activation: stack
            .layers
            .iter()
            .map(|l| l.mean_activation.to_vec())
            .collect(),
    };
    let metadata = ModelMetadata {
        seed: ae_config_seed(config),
        input_dim: stack.input_dim,
        layer_sizes: stack.layer_sizes(),
        activations: vec![Activation::Sigmoid; stack.depth()],
        config: config.pretrain.train.clone(),
        input_ids: subset.variant_ids.clone(),
        impute_means: subset.impute_means.clone(),
        decision_threshold: None,
    };
    net::serialize::save_model(&encoder_net, &metadata, &layout.stack_model())?;
    write_json(&layout.stack_model().with_extension("manifest.json"), &manifest)?;

    let subset_artifact = SubsetArtifact {
        threshold: loosest,
        variant_ids: subset.variant_ids.clone(),
        impute_means: subset.impute_means.clone(),
    };
    let mut rows = Vec::with_capacity(sizes.len());
    for (depth_idx, &width) in sizes.iter().enumerate() {
        let head: Vec<LayerSpec> = config
            .stack_head
            .iter()
            .map(|&s| LayerSpec::new(s, Activation::Rectifier))
            .chain([LayerSpec::new(2, Activation::Sigmoid)])
            .collect();
        let classifier = sae::init_classifier_from_stack(
            &stack,
            depth_idx + 1,
            &head,
            sub_seed(config.seed, 400 + depth_idx as u64),
        )?;
        let mut train_config = config.finetune_train.clone();
        train_config.seed = sub_seed(config.seed, 500 + depth_idx as u64);
        if let Some(rates) = &config.finetune_lr_per_depth {
            if let Some(&lr) = rates.get(depth_idx) {
                train_config.learning_rate = lr;
            }
        }
        let evaluated = train_and_evaluate(
            &subset.design,
            &ds,
            &splits,
            &config.stack_head,
            &train_config,
            0,
            config.per_split_f1,
            Some((classifier, depth_idx + 1, config.freeze_encoders)),
        )?;
        let dir = ModelDir(layout.depth_dir(width));
        write_model_dir(&dir, &evaluated, &subset_artifact, &train_config, train_config.seed)?;
        rows.push(SummaryRow {
            label: width.to_string(),
            n_inputs: subset.variant_ids.len(),
            valid: Some(MetricSix::from(&evaluated.valid_report)),
            test: Some(MetricSix::from(&evaluated.test_report)),
            skipped: None,
        });
    }
    Ok(rows)
}

fn ae_config_seed(config: &PipelineConfig) -> u64 {
    sub_seed(config.seed, 300)
}

/// Re-evaluate a saved model on one split of the clean cohort.
pub fn evaluate_model(
    model_path: &Path,
    out: &Path,
    split_name: &str,
    threshold_override: Option<f64>,
) -> Result<EvalReport, PipelineError> {
    let layout = Layout::new(out);
    let ds = load_clean_dataset(&layout)?;
    let splits = load_splits(&layout)?;
    let rows = match split_name {
        "train" => &splits.train,
        "valid" => &splits.valid,
        "test" => &splits.test,
        other => {
            return Err(PipelineError::Validation(format!(
                "unknown split {other:?} (expected train, valid or test)"
            )))
        }
    };
    let (params, _seed, _config) = net::serialize::load_model::<f64>(model_path)?;
    let metadata = net::serialize::load_metadata(model_path)?;
    let design = assoc::design_for_variants(&ds, &metadata.input_ids, &metadata.impute_means)?;
    let x = select_rows(&design, rows);
    let labels = labels_for(&ds, rows);
    let scores = params.predict(&x)?;
    let sl = ScoredLabels::new(scores.to_vec(), labels)?;
    let threshold = threshold_override
        .or(metadata.decision_threshold)
        .unwrap_or(0.5);
    Ok(metrics::evaluate(&sl, threshold)?)
}

/// Collate every artifact under the output directory into `summary.json` and
/// a human-readable `summary.txt`. Fails with `NoArtifacts` when nothing has
/// run yet.
pub fn report_stage(config: &PipelineConfig, out: &Path) -> Result<Summary, PipelineError> {
    let layout = Layout::new(out);
    let qc: Option<QcSummary> = read_json::<QcReport>(&layout.qc_report())
        .ok()
        .map(|r| QcSummary {
            samples_before: r.samples_before,
            samples_after: r.samples_after,
            variants_before: r.variants_before,
            variants_after: r.variants_after,
        });
    let scan = load_scan(&layout).ok();
    let scan_counts = scan.as_ref().map(|results| {
        config
            .thresholds
            .iter()
            .map(|&t| {
                let count = results
                    .iter()
                    .filter(|r| r.flag == assoc::FitFlag::Clean)
                    .filter(|r| r.p.is_some_and(|p| p < t))
                    .count();
                (threshold_label(t), count)
            })
            .collect::<Vec<_>>()
    });

    let mut baseline = Vec::new();
    for &t in &config.thresholds {
        let dir = ModelDir(layout.baseline_dir(t));
        if let Ok(skipped) = read_json::<artifacts::SkippedRow>(&dir.skipped()) {
            baseline.push(SummaryRow {
                label: threshold_label(t),
                n_inputs: 0,
                valid: None,
                test: None,
                skipped: Some(skipped.reason),
            });
        } else if let (Ok(valid), Ok(test)) = (
            read_json::<EvalReport>(&dir.report("valid")),
            read_json::<EvalReport>(&dir.report("test")),
        ) {
            let subset: SubsetArtifact = read_json(&dir.subset())?;
            baseline.push(SummaryRow {
                label: threshold_label(t),
                n_inputs: subset.variant_ids.len(),
                valid: Some(MetricSix::from(&valid)),
                test: Some(MetricSix::from(&test)),
                skipped: None,
            });
        }
    }

    let mut stack = Vec::new();
    if let Ok(manifest) =
        read_json::<StackManifest>(&layout.stack_model().with_extension("manifest.json"))
    {
        for width in manifest.layer_sizes {
            let dir = ModelDir(layout.depth_dir(width));
            if let (Ok(valid), Ok(test)) = (
                read_json::<EvalReport>(&dir.report("valid")),
                read_json::<EvalReport>(&dir.report("test")),
            ) {
                stack.push(SummaryRow {
                    label: width.to_string(),
                    n_inputs: manifest.input_dim,
                    valid: Some(MetricSix::from(&valid)),
                    test: Some(MetricSix::from(&test)),
                    skipped: None,
                });
            }
        }
    }

    if qc.is_none() && scan_counts.is_none() && baseline.is_empty() && stack.is_empty() {
        return Err(PipelineError::NoArtifacts(out.to_path_buf()));
    }
    let summary = Summary {
        seed: config.seed,
        config_echo: config.echo(),
        qc,
        scan_counts,
        baseline,
        stack,
    };
    write_json(&layout.summary_json(), &summary)?;
    std::fs::write(layout.summary_text(), render_summary_text(&summary))?;
    Ok(summary)
}

fn render_summary_text(summary: &Summary) -> String {
    use std::fmt::Write;
    let mut s = String::new();
    let _ = writeln!(s, "run seed: {}", summary.seed);
    if let Some(qc) = &summary.qc {
        let _ = writeln!(
            s,
            "qc: samples {} -> {}, variants {} -> {}",
            qc.samples_before, qc.samples_after, qc.variants_before, qc.variants_after
        );
    }
    if let Some(counts) = &summary.scan_counts {
        let _ = writeln!(s, "scan hits per threshold:");
        for (label, count) in counts {
            let _ = writeln!(s, "  p < {label}: {count} variants");
        }
    }
    let render_rows = |s: &mut String, title: &str, rows: &[SummaryRow]| {
        if rows.is_empty() {
            return;
        }
        let _ = writeln!(s, "{title}");
        let _ = writeln!(
            s,
            "  {:<10} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}",
            "row", "inputs", "sens", "spec", "gini", "logloss", "auc", "mse"
        );
        for row in rows {
            match &row.test {
                Some(m) => {
                    let _ = writeln!(
                        s,
                        "  {:<10} {:>8} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
                        row.label, row.n_inputs, m.sensitivity, m.specificity, m.gini, m.logloss,
                        m.auc, m.mse
                    );
                }
                None => {
                    let _ = writeln!(
                        s,
                        "  {:<10} skipped: {}",
                        row.label,
                        row.skipped.as_deref().unwrap_or("?")
                    );
                }
            }
        }
    };
    render_rows(&mut s, "baseline classifiers (test split):", &summary.baseline);
    render_rows(&mut s, "stack classifiers (test split):", &summary.stack);
    s
}

/// Run every stage in order and return the collated summary.
pub fn run_full(config: &PipelineConfig, out: &Path) -> Result<Summary, PipelineError> {
    config.validate()?;
    let layout = Layout::new(out);
    let _lock = DirLock::acquire(&layout)?;
    if matches!(config.data, DataSource::Simulate(_)) {
        simulate_stage(config, out)?;
    }
    qc_stage(config, out)?;
    scan_stage(config, out)?;
    baseline_stage(config, out)?;
    stack_stage(config, out)?;
    report_stage(config, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clipping_preserves_strictly_decreasing_shape() {
        assert_eq!(
            clip_stack_sizes(&[2000, 1000, 500, 200, 100, 50], 55),
            vec![55, 50]
        );
        assert_eq!(clip_stack_sizes(&[2000, 1000, 500], 5000), vec![2000, 1000, 500]);
        assert_eq!(clip_stack_sizes(&[2000, 1000, 500, 200, 100, 50], 40), vec![40]);
        assert_eq!(clip_stack_sizes(&[8, 4, 2], 6), vec![6, 4, 2]);
    }

    #[test]
    fn config_validation_catches_bad_lists() {
        let mut config = PipelineConfig::default();
        config.thresholds = vec![5e-3, 5e-3];
        assert!(matches!(
            config.validate(),
            Err(PipelineError::Validation(_))
        ));
        let mut config = PipelineConfig::default();
        config.stack_sizes = vec![100, 200];
        assert!(config.validate().is_err());
        let mut config = PipelineConfig::default();
        config.split_fractions = (0.5, 0.2, 0.2);
        assert!(config.validate().is_err());
        assert!(PipelineConfig::default().validate().is_ok());
    }

    #[test]
    fn config_echo_hides_the_output_path() {
        let config = PipelineConfig::default();
        let echo = config.echo();
        assert!(echo.get("output_dir").is_none());
        assert!(echo.get("thresholds").is_some());
    }

    #[test]
    fn lock_is_exclusive() {
        let dir = tempfile::TempDir::new().unwrap();
        let layout = Layout::new(dir.path());
        let lock = DirLock::acquire(&layout).unwrap();
        assert!(matches!(
            DirLock::acquire(&layout),
            Err(PipelineError::Locked(_))
        ));
        drop(lock);
        assert!(DirLock::acquire(&layout).is_ok());
    }

    #[test]
    fn report_on_empty_directory_is_no_artifacts() {
        let dir = tempfile::TempDir::new().unwrap();
        let config = PipelineConfig::default();
        assert!(matches!(
            report_stage(&config, dir.path()),
            Err(PipelineError::NoArtifacts(_))
        ));
    }
}
