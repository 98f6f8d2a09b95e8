//! Two-stage cohort quality control: individual filters first (sex
//! concordance, missingness, heterozygosity, relatedness, ancestry), then
//! marker filters (differential missingness, MAF, call rate, Hardy-Weinberg).
//!
//! Individual filters are all computed on the incoming dataset and the union
//! of flagged samples is removed once at the end.

pub mod ibd;
pub mod pca;

pub use ibd::{ibd_estimate, ibd_filter, IbdError};
pub use pca::{pca_ancestry, pca_outlier_filter, PcaError};

use crate::genotype::{Dataset, GenotypeCall};
use crate::stats::chi_square_1df_p;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Cut-offs for every filter in the cascade.
///
/// The ancestry thresholds apply to unit-norm principal-component scores and
/// are cohort-geometry specific; setting them to -1.0 disables ancestry
/// removal (scores always lie in [-1, 1]).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct QcThresholds {
    /// Samples with missing-call fraction at or above this are removed.
    pub sample_missing_max: f64,
    /// Heterozygosity window in population standard deviations.
    pub het_sd_window: f64,
    /// X homozygosity strictly inside (low, high) flags a sample.
    pub sex_homozygosity_low: f64,
    pub sex_homozygosity_high: f64,
    /// Pairs with PI_HAT above this lose a member.
    pub ibd_max: f64,
    pub pc1_min: f64,
    pub pc2_min: f64,
    pub diff_missing_p: f64,
    pub maf_min: f64,
    pub variant_call_rate_min: f64,
    pub hwe_p_min: f64,
    /// Relatedness and ancestry run on every `thin_step`-th polymorphic
    /// autosomal variant, capped at `prune_target` variants.
    pub prune_target: usize,
}

impl Default for QcThresholds {
    fn default() -> Self {
        QcThresholds {
            sample_missing_max: 0.02,
            het_sd_window: 3.0,
            sex_homozygosity_low: 0.2,
            sex_homozygosity_high: 0.8,
            ibd_max: 0.185,
            pc1_min: -0.05,
            pc2_min: 0.00,
            diff_missing_p: 1e-5,
            maf_min: 0.01,
            variant_call_rate_min: 0.98,
            hwe_p_min: 1e-5,
            prune_target: 50_000,
        }
    }
}

impl QcThresholds {
    /// Paper-style ancestry thresholds replaced by the disabled sentinel;
    /// appropriate for single-population synthetic cohorts.
    pub fn without_ancestry_filter(mut self) -> Self {
        self.pc1_min = -1.0;
        self.pc2_min = -1.0;
        self
    }

    pub fn validate(&self) -> Result<(), QcError> {
        let fractions = [
            self.sample_missing_max,
            self.sex_homozygosity_low,
            self.sex_homozygosity_high,
            self.ibd_max,
            self.maf_min,
            self.variant_call_rate_min,
        ];
        if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(QcError::BadThresholds("fractions must lie in [0, 1]".into()));
        }
        let pvals = [self.diff_missing_p, self.hwe_p_min];
        if pvals.iter().any(|p| !(*p > 0.0 && *p <= 1.0)) {
            return Err(QcError::BadThresholds("p-value cut-offs must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum QcError {
    #[error("dataset has no variants")]
    EmptyDataset,
    #[error("need at least two samples with autosomal calls")]
    InsufficientData,
    #[error("dataset has no X-chromosome variants")]
    NoXChromosome,
    #[error("both phenotype classes are required")]
    SingleClass,
    #[error("genotype counts sum to zero")]
    EmptyCounts,
    #[error("invalid thresholds: {0}")]
    BadThresholds(String),
    #[error(transparent)]
    Ibd(#[from] IbdError),
    #[error(transparent)]
    Pca(#[from] PcaError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SampleRemovalReason {
    SexCheck,
    HighMissingness,
    HeterozygosityOutlier,
    Relatedness,
    AncestryOutlier,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VariantRemovalReason {
    DifferentialMissingness,
    LowMaf,
    LowCallRate,
    HweDeviation,
}

/// What was removed and why, with before/after counts.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct QcReport {
    pub removed_samples: Vec<(String, SampleRemovalReason)>,
    pub removed_variants: Vec<(String, VariantRemovalReason)>,
    pub samples_before: usize,
    pub samples_after: usize,
    pub variants_before: usize,
    pub variants_after: usize,
}

impl QcReport {
    /// Merge the variant half of a later stage into this report.
    pub fn merged_with(mut self, other: QcReport) -> QcReport {
        self.removed_variants.extend(other.removed_variants);
        self.variants_before = self.variants_before.max(other.variants_before);
        self.variants_after = other.variants_after;
        self
    }

    pub fn write_samples_csv(&self, w: &mut impl std::io::Write) -> std::io::Result<()> {
        writeln!(w, "id,reason")?;
        for (id, reason) in &self.removed_samples {
            writeln!(w, "{id},{reason:?}")?;
        }
        Ok(())
    }

    pub fn write_variants_csv(&self, w: &mut impl std::io::Write) -> std::io::Result<()> {
        writeln!(w, "id,reason")?;
        for (id, reason) in &self.removed_variants {
            writeln!(w, "{id},{reason:?}")?;
        }
        Ok(())
    }
}

/// Per-sample missing-call fraction over all variants.
pub fn sample_missingness(ds: &Dataset) -> Result<Vec<f64>, QcError> {
    let u = ds.n_variants();
    if u == 0 {
        return Err(QcError::EmptyDataset);
    }
    let mut missing = vec![0usize; ds.n_samples()];
    for v in 0..u {
        for (s, call) in ds.calls().variant_calls(v).enumerate() {
            if call == GenotypeCall::Missing {
                missing[s] += 1;
            }
        }
    }
    Ok(missing.into_iter().map(|m| m as f64 / u as f64).collect())
}

/// Per-sample heterozygosity rate over autosomal non-missing calls; samples
/// without any autosomal call come back as `None`.
pub fn heterozygosity_rates(ds: &Dataset) -> Vec<Option<f64>> {
    let mut het = vec![0usize; ds.n_samples()];
    let mut observed = vec![0usize; ds.n_samples()];
    for (v, var) in ds.variants().iter().enumerate() {
        if !var.is_autosome() {
            continue;
        }
        for (s, call) in ds.calls().variant_calls(v).enumerate() {
            match call {
                GenotypeCall::Het => {
                    het[s] += 1;
                    observed[s] += 1;
                }
                GenotypeCall::Missing => {}
                _ => observed[s] += 1,
            }
        }
    }
    het.into_iter()
        .zip(observed)
        .map(|(h, o)| (o > 0).then(|| h as f64 / o as f64))
        .collect()
}

/// Samples whose autosomal heterozygosity rate sits strictly outside
/// mean +/- `window_sd` population standard deviations.
pub fn heterozygosity_outliers(ds: &Dataset, window_sd: f64) -> Result<Vec<usize>, QcError> {
    let rates = heterozygosity_rates(ds);
    let observed: Vec<f64> = rates.iter().flatten().copied().collect();
    if observed.len() < 2 {
        return Err(QcError::InsufficientData);
    }
    let (mean, sd) = crate::stats::mean_and_pop_sd(&observed);
    Ok(rates
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.map(|r| (i, r)))
        .filter(|(_, r)| (r - mean).abs() > window_sd * sd)
        .map(|(i, _)| i)
        .collect())
}

/// Samples with ambiguous X-chromosome homozygosity, strictly inside the
/// open interval (low, high). Samples without X calls are not flagged.
pub fn sex_check(ds: &Dataset, low: f64, high: f64) -> Result<Vec<usize>, QcError> {
    let x_variants: Vec<usize> = ds
        .variants()
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_x())
        .map(|(i, _)| i)
        .collect();
    if x_variants.is_empty() {
        return Err(QcError::NoXChromosome);
    }
    let mut hom = vec![0usize; ds.n_samples()];
    let mut observed = vec![0usize; ds.n_samples()];
    for &v in &x_variants {
        for (s, call) in ds.calls().variant_calls(v).enumerate() {
            match call {
                GenotypeCall::HomMajor | GenotypeCall::HomMinor => {
                    hom[s] += 1;
                    observed[s] += 1;
                }
                GenotypeCall::Het => observed[s] += 1,
                GenotypeCall::Missing => {}
            }
        }
    }
    Ok(hom
        .into_iter()
        .zip(observed)
        .enumerate()
        .filter(|&(_i, (_h, o))| o > 0).map(|(i, (h, o))| (i, h as f64 / o as f64))
        .filter(|(_, rate)| *rate > low && *rate < high)
        .map(|(i, _)| i)
        .collect())
}

/// Per-variant 2x2 chi-square p-value for missingness differing between
/// cases and controls (1 df, no continuity correction). Degenerate tables
/// return p = 1.
pub fn differential_missingness(ds: &Dataset) -> Result<Vec<f64>, QcError> {
    let labels = ds.labels();
    let n_cases = labels.iter().flatten().filter(|&&l| l == 1).count();
    let n_controls = labels.iter().flatten().filter(|&&l| l == 0).count();
    if n_cases == 0 || n_controls == 0 {
        return Err(QcError::SingleClass);
    }
    let mut out = Vec::with_capacity(ds.n_variants());
    for v in 0..ds.n_variants() {
        let mut missing_cases = 0usize;
        let mut missing_controls = 0usize;
        for (s, call) in ds.calls().variant_calls(v).enumerate() {
            if call == GenotypeCall::Missing {
                match labels[s] {
                    Some(1) => missing_cases += 1,
                    Some(0) => missing_controls += 1,
                    _ => {}
                }
            }
        }
        let a = missing_cases as f64;
        let b = missing_controls as f64;
        let c = (n_cases - missing_cases) as f64;
        let d = (n_controls - missing_controls) as f64;
        let n = a + b + c + d;
        let denom = (a + b) * (c + d) * (a + c) * (b + d);
        if denom == 0.0 {
            out.push(1.0);
            continue;
        }
        let chi = n * (a * d - b * c).powi(2) / denom;
        out.push(chi_square_1df_p(chi));
    }
    Ok(out)
}

/// Hardy-Weinberg chi-square test from genotype counts
/// (hom-major, het, hom-minor). Expected counts follow the estimated
/// major-allele frequency; zero-expectation cells are skipped.
pub fn hwe_test(n_hom_major: usize, n_het: usize, n_hom_minor: usize) -> Result<(f64, f64), QcError> {
    let n = n_hom_major + n_het + n_hom_minor;
    if n == 0 {
        return Err(QcError::EmptyCounts);
    }
    let n_f = n as f64;
    let p = (2 * n_hom_major + n_het) as f64 / (2.0 * n_f);
    let q = 1.0 - p;
    let expected = [n_f * p * p, 2.0 * n_f * p * q, n_f * q * q];
    let observed = [n_hom_major as f64, n_het as f64, n_hom_minor as f64];
    let mut chi = 0.0;
    for (o, e) in observed.iter().zip(&expected) {
        if *e > 0.0 {
            chi += (o - e).powi(2) / e;
        }
    }
    Ok((chi, chi_square_1df_p(chi)))
}

/// Indices of polymorphic autosomal variants thinned to at most
/// `prune_target`, used for relatedness and ancestry.
pub fn pruned_variants(ds: &Dataset, maf_min: f64, prune_target: usize) -> Vec<usize> {
    let candidates: Vec<usize> = ds
        .variants()
        .iter()
        .enumerate()
        .filter(|(i, v)| {
            v.is_autosome() && ds.minor_allele_freq(*i).is_some_and(|maf| maf >= maf_min)
        })
        .map(|(i, _)| i)
        .collect();
    if candidates.len() <= prune_target || prune_target == 0 {
        return candidates;
    }
    let step = candidates.len().div_ceil(prune_target);
    candidates.into_iter().step_by(step).collect()
}

/// Individual-level QC: sex check, missingness, heterozygosity, relatedness,
/// ancestry, in that order; the union of flagged samples is removed once at
/// the end. Datasets without X variants skip the sex check. The removal
/// reason records the first filter (in application order) that flagged each
/// sample.
pub fn run_individual_qc(
    ds: &Dataset,
    thresholds: &QcThresholds,
) -> Result<(Dataset, QcReport), QcError> {
    thresholds.validate()?;
    let mut flagged: Vec<(usize, SampleRemovalReason)> = Vec::new();

    match sex_check(
        ds,
        thresholds.sex_homozygosity_low,
        thresholds.sex_homozygosity_high,
    ) {
        Ok(samples) => {
            flagged.extend(samples.into_iter().map(|s| (s, SampleRemovalReason::SexCheck)))
        }
        Err(QcError::NoXChromosome) => {}
        Err(e) => return Err(e),
    }

    let missing_rates = sample_missingness(ds)?;
    flagged.extend(
        missing_rates
            .iter()
            .enumerate()
            .filter(|(_, r)| **r >= thresholds.sample_missing_max)
            .map(|(i, _)| (i, SampleRemovalReason::HighMissingness)),
    );

    flagged.extend(
        heterozygosity_outliers(ds, thresholds.het_sd_window)?
            .into_iter()
            .map(|s| (s, SampleRemovalReason::HeterozygosityOutlier)),
    );

    let pruned = pruned_variants(ds, thresholds.maf_min, thresholds.prune_target);
    if !pruned.is_empty() {
        let pi_hat = ibd_estimate(ds, &pruned)?;
        let ids: Vec<String> = ds.samples().iter().map(|s| s.individual_id.clone()).collect();
        flagged.extend(
            ibd_filter(&pi_hat, &missing_rates, &ids, thresholds.ibd_max)
                .into_iter()
                .map(|s| (s, SampleRemovalReason::Relatedness)),
        );

        let (scores, _) = pca_ancestry(ds, &pruned, 2)?;
        flagged.extend(
            pca_outlier_filter(&scores, thresholds.pc1_min, thresholds.pc2_min)
                .into_iter()
                .map(|s| (s, SampleRemovalReason::AncestryOutlier)),
        );
    }

    let mut first_reason: std::collections::BTreeMap<usize, SampleRemovalReason> =
        Default::default();
    for (idx, reason) in flagged {
        first_reason.entry(idx).or_insert(reason);
    }
    let keep: Vec<usize> = (0..ds.n_samples())
        .filter(|i| !first_reason.contains_key(i))
        .collect();
    let removed_samples = first_reason
        .iter()
        .map(|(&i, &reason)| (ds.samples()[i].individual_id.clone(), reason))
        .collect();
    let cleaned = ds.subset_samples(&keep);
    let report = QcReport {
        removed_samples,
        removed_variants: Vec::new(),
        samples_before: ds.n_samples(),
        samples_after: cleaned.n_samples(),
        variants_before: ds.n_variants(),
        variants_after: ds.n_variants(),
    };
    Ok((cleaned, report))
}

/// Marker-level QC on a sample-clean dataset. Each variant is tested in the
/// fixed order differential missingness, MAF, call rate, Hardy-Weinberg
/// (controls only); the first failing test names the removal reason.
pub fn variant_filters(
    ds: &Dataset,
    thresholds: &QcThresholds,
) -> Result<(Dataset, QcReport), QcError> {
    thresholds.validate()?;
    let diff_p = differential_missingness(ds)?;
    let labels = ds.labels();
    let n = ds.n_samples();
    let mut keep = Vec::with_capacity(ds.n_variants());
    let mut removed = Vec::new();
    for (v, var) in ds.variants().iter().enumerate() {
        if diff_p[v] < thresholds.diff_missing_p {
            removed.push((var.id.clone(), VariantRemovalReason::DifferentialMissingness));
            continue;
        }
        let maf = ds.minor_allele_freq(v).unwrap_or(0.0);
        if maf < thresholds.maf_min {
            removed.push((var.id.clone(), VariantRemovalReason::LowMaf));
            continue;
        }
        let [_, _, _, missing] = ds.calls().genotype_counts(v);
        let call_rate = (n - missing) as f64 / n as f64;
        if call_rate < thresholds.variant_call_rate_min {
            removed.push((var.id.clone(), VariantRemovalReason::LowCallRate));
            continue;
        }
        // Hardy-Weinberg on controls only
        let (mut aa, mut ab, mut bb) = (0usize, 0usize, 0usize);
        for (s, call) in ds.calls().variant_calls(v).enumerate() {
            if labels[s] != Some(0) {
                continue;
            }
            match call {
                GenotypeCall::HomMajor => aa += 1,
                GenotypeCall::Het => ab += 1,
                GenotypeCall::HomMinor => bb += 1,
                GenotypeCall::Missing => {}
            }
        }
        let hwe_p = if aa + ab + bb == 0 {
            1.0
        } else {
            hwe_test(aa, ab, bb)?.1
        };
        if hwe_p < thresholds.hwe_p_min {
            removed.push((var.id.clone(), VariantRemovalReason::HweDeviation));
            continue;
        }
        keep.push(v);
    }
    let cleaned = ds.subset_variants(&keep);
    let report = QcReport {
        removed_samples: Vec::new(),
        removed_variants: removed,
        samples_before: ds.n_samples(),
        samples_after: ds.n_samples(),
        variants_before: ds.n_variants(),
        variants_after: cleaned.n_variants(),
    };
    Ok((cleaned, report))
}
