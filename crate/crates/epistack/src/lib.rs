//! GWAS case/control analysis toolkit.
//!
//! The crate covers an end-to-end experiment: PLINK binary genotype I/O,
//! cohort quality control, per-SNP logistic association scans, p-value
//! threshold filtering, greedy layer-wise sparse-autoencoder pretraining,
//! deep-classifier fine-tuning, and binary-classifier evaluation, plus a
//! synthetic genotype simulator with planted marginal and epistatic effects
//! for validating the whole chain.
//!
//! Numeric-core modules ([`net`], [`sae`], [`metrics`], the eigensolver in
//! [`qc`]) are generic over the [`scalar::Scalar`] precision; the pipeline
//! and every p-value-producing statistic run in `f64`.

pub mod assoc;
pub mod genotype;
pub mod metrics;
pub mod net;
pub mod pipeline;
pub mod plink;
pub mod qc;
pub mod sae;
pub mod scalar;
pub mod simdata;
pub mod stats;

/// Precision used by the pipeline and all p-value statistics.
pub type Real = f64;

/// Double-precision network parameters (pipeline default).
pub type Network64 = net::NetworkParams<f64>;
/// Single-precision network parameters.
pub type Network32 = net::NetworkParams<f32>;
/// Double-precision sparse autoencoder.
pub type SparseAutoencoder64 = sae::SparseAutoencoder<f64>;
/// Double-precision autoencoder stack.
pub type AutoencoderStack64 = sae::AutoencoderStack<f64>;

pub use genotype::{Dataset, GenotypeCall, Phenotype, SampleRecord, Sex, VariantRecord};
pub use metrics::EvalReport;
