//! Per-SNP logistic regression under the additive dosage model and p-value
//! threshold filtering.
//!
//! Each variant is fitted on its own: `logit P(y=1) = b0 + b1 * dosage`,
//! maximum likelihood via iteratively reweighted least squares with
//! step-halving, standard errors from the inverse observed information.
//! Missing dosages are excluded from the fit but mean-imputed in the design
//! matrices handed to the learning stages.

use crate::genotype::Dataset;
use crate::stats::{sigmoid, two_sided_normal_p};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

const IRLS_TOL: f64 = 1e-8;
const IRLS_MAX_ITER: usize = 25;
/// |b1| beyond this marks the fit as separated.
const SEPARATION_BOUND: f64 = 20.0;

#[derive(Debug, Error, PartialEq)]
pub enum AssocError {
    #[error("only one phenotype class among usable samples")]
    SingleClass,
    #[error("no variant passes the threshold {0:e}")]
    EmptySubset(f64),
    #[error("threshold {0} outside (0, 1]")]
    BadThreshold(f64),
    #[error("dosage and phenotype vectors differ in length")]
    LengthMismatch,
}

/// Fit condition attached to each result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FitFlag {
    Clean,
    /// Fitted probabilities reached 0/1 and the slope diverged; the p-value
    /// is not evaluable.
    Separation,
    /// Zero dosage variance; slope pinned to 0 with p = 1.
    Monomorphic,
}

/// Per-variant logistic regression summary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssocResult {
    pub variant_id: String,
    /// Log-odds per minor-allele copy.
    pub beta: f64,
    pub se: Option<f64>,
    pub wald_z: Option<f64>,
    pub p: Option<f64>,
    pub n_used: usize,
    pub flag: FitFlag,
}

/// Log likelihood of the two-parameter logistic model.
fn log_likelihood(dosages: &[f64], labels: &[f64], b0: f64, b1: f64) -> f64 {
    dosages
        .iter()
        .zip(labels)
        .map(|(&x, &y)| {
            let eta = b0 + b1 * x;
            // y*eta - ln(1 + e^eta), rearranged to avoid overflow
            if eta > 0.0 {
                (y - 1.0) * eta - (-eta).exp().ln_1p()
            } else {
                y * eta - eta.exp().ln_1p()
            }
        })
        .sum()
}

/// Maximum-likelihood logistic fit of a single dosage column against 0/1
/// labels. Samples with missing dosage are dropped; `n_used` reflects that.
pub fn fit_logistic_single(
    dosages: &[Option<u8>],
    labels: &[Option<u8>],
    variant_id: &str,
) -> Result<AssocResult, AssocError> {
    if dosages.len() != labels.len() {
        return Err(AssocError::LengthMismatch);
    }
    let mut x = Vec::with_capacity(dosages.len());
    let mut y = Vec::with_capacity(dosages.len());
    for (d, l) in dosages.iter().zip(labels) {
        if let (Some(d), Some(l)) = (d, l) {
            x.push(*d as f64);
            y.push(*l as f64);
        }
    }
    let n_used = x.len();
    let n_cases: f64 = y.iter().sum();
    if n_used == 0 || n_cases == 0.0 || n_cases == n_used as f64 {
        return Err(AssocError::SingleClass);
    }
    if x.iter().all(|&v| v == x[0]) {
        return Ok(AssocResult {
            variant_id: variant_id.to_string(),
            beta: 0.0,
            se: None,
            wald_z: None,
            p: Some(1.0),
            n_used,
            flag: FitFlag::Monomorphic,
        });
    }

    let ybar = n_cases / n_used as f64;
    let mut b0 = (ybar / (1.0 - ybar)).ln();
    let mut b1 = 0.0;
    let mut ll = log_likelihood(&x, &y, b0, b1);
    for _ in 0..IRLS_MAX_ITER {
        // score and observed information of (b0, b1)
        let (mut g0, mut g1) = (0.0, 0.0);
        let (mut h00, mut h01, mut h11) = (0.0, 0.0, 0.0);
        for (&xi, &yi) in x.iter().zip(&y) {
            let mu = sigmoid(b0 + b1 * xi);
            let w = mu * (1.0 - mu);
            let r = yi - mu;
            g0 += r;
            g1 += r * xi;
            h00 += w;
            h01 += w * xi;
            h11 += w * xi * xi;
        }
        let det = h00 * h11 - h01 * h01;
        if det.abs() < 1e-300 || !det.is_finite() {
            break;
        }
        let mut step0 = (h11 * g0 - h01 * g1) / det;
        let mut step1 = (h00 * g1 - h01 * g0) / det;
        // halve overshooting steps so the likelihood never decreases
        let mut accepted = false;
        for _ in 0..16 {
            let cand = log_likelihood(&x, &y, b0 + step0, b1 + step1);
            if cand >= ll - 1e-12 {
                b0 += step0;
                b1 += step1;
                ll = cand;
                accepted = true;
                break;
            }
            step0 /= 2.0;
            step1 /= 2.0;
        }
        if !accepted {
            break;
        }
        if step0.abs().max(step1.abs()) < IRLS_TOL {
            break;
        }
        if b1.abs() > SEPARATION_BOUND {
            break;
        }
    }

    if b1.abs() > SEPARATION_BOUND || !b1.is_finite() {
        return Ok(AssocResult {
            variant_id: variant_id.to_string(),
            beta: b1,
            se: None,
            wald_z: None,
            p: None,
            n_used,
            flag: FitFlag::Separation,
        });
    }

    // observed information at the optimum
    let (mut h00, mut h01, mut h11) = (0.0, 0.0, 0.0);
    for &xi in &x {
        let mu = sigmoid(b0 + b1 * xi);
        let w = mu * (1.0 - mu);
        h00 += w;
        h01 += w * xi;
        h11 += w * xi * xi;
    }
    let det = h00 * h11 - h01 * h01;
    let var_b1 = h00 / det;
    if var_b1 <= 0.0 || !var_b1.is_finite() {
        return Ok(AssocResult {
            variant_id: variant_id.to_string(),
            beta: b1,
            se: None,
            wald_z: None,
            p: None,
            n_used,
            flag: FitFlag::Separation,
        });
    }
    let se = var_b1.sqrt();
    let z = b1 / se;
    Ok(AssocResult {
        variant_id: variant_id.to_string(),
        beta: b1,
        se: Some(se),
        wald_z: Some(z),
        p: Some(two_sided_normal_p(z)),
        n_used,
        flag: FitFlag::Clean,
    })
}

/// Fit every variant in dataset order. Fits run in parallel; the output
/// order is fixed by variant index. Separated and monomorphic variants are
/// carried with their flags rather than dropped.
pub fn association_scan(ds: &Dataset) -> Result<Vec<AssocResult>, AssocError> {
    let labels = ds.labels();
    (0..ds.n_variants())
        .into_par_iter()
        .map(|v| {
            let dosages: Vec<Option<u8>> =
                ds.calls().variant_calls(v).map(|c| c.dosage()).collect();
            fit_logistic_single(&dosages, &labels, &ds.variants()[v].id)
        })
        .collect()
}

/// Variants passing a p-value threshold, with the dense dosage design matrix
/// the learning stages consume.
#[derive(Debug, Clone)]
pub struct SnpSubset {
    pub threshold: f64,
    /// Ascending by p-value, ties broken by variant id.
    pub variant_ids: Vec<String>,
    /// Per-column imputation means (mean dosage over non-missing calls).
    pub impute_means: Vec<f64>,
    /// Samples x variants, missing entries imputed to the column mean.
    pub design: ndarray::Array2<f64>,
}

/// Select flagged-clean variants with `p < threshold` and build their design
/// matrix from the dataset, imputing missing dosages to the column mean.
pub fn threshold_filter(
    results: &[AssocResult],
    ds: &Dataset,
    threshold: f64,
) -> Result<SnpSubset, AssocError> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(AssocError::BadThreshold(threshold));
    }
    let index_of: std::collections::HashMap<&str, usize> = ds
        .variants()
        .iter()
        .enumerate()
        .map(|(i, v)| (v.id.as_str(), i))
        .collect();
    let mut selected: Vec<(&AssocResult, f64)> = results
        .iter()
        .filter(|r| r.flag == FitFlag::Clean)
        .filter_map(|r| r.p.map(|p| (r, p)))
        .filter(|(_, p)| *p < threshold)
        .collect();
    if selected.is_empty() {
        return Err(AssocError::EmptySubset(threshold));
    }
    selected.sort_by(|a, b| {
        a.1.partial_cmp(&b.1)
            .unwrap()
            .then_with(|| a.0.variant_id.cmp(&b.0.variant_id))
    });

    let n = ds.n_samples();
    let m = selected.len();
    let mut design = ndarray::Array2::<f64>::zeros((n, m));
    let mut impute_means = Vec::with_capacity(m);
    let mut variant_ids = Vec::with_capacity(m);
    for (col, (res, _)) in selected.iter().enumerate() {
        let v = index_of[res.variant_id.as_str()];
        let dosages: Vec<Option<u8>> = ds.calls().variant_calls(v).map(|c| c.dosage()).collect();
        let observed: Vec<f64> = dosages.iter().flatten().map(|&d| d as f64).collect();
        let mean = if observed.is_empty() {
            0.0
        } else {
            observed.iter().sum::<f64>() / observed.len() as f64
        };
        for (row, d) in dosages.iter().enumerate() {
            design[(row, col)] = d.map(|v| v as f64).unwrap_or(mean);
        }
        impute_means.push(mean);
        variant_ids.push(res.variant_id.clone());
    }
    Ok(SnpSubset {
        threshold,
        variant_ids,
        impute_means,
        design,
    })
}

/// Rebuild a design matrix for previously selected variants (missing entries
/// take the stored means), e.g. when re-evaluating a saved model.
pub fn design_for_variants(
    ds: &Dataset,
    variant_ids: &[String],
    impute_means: &[f64],
) -> Result<ndarray::Array2<f64>, AssocError> {
    let index_of: std::collections::HashMap<&str, usize> = ds
        .variants()
        .iter()
        .enumerate()
        .map(|(i, v)| (v.id.as_str(), i))
        .collect();
    let mut design = ndarray::Array2::<f64>::zeros((ds.n_samples(), variant_ids.len()));
    for (col, id) in variant_ids.iter().enumerate() {
        let v = *index_of
            .get(id.as_str())
            .ok_or(AssocError::EmptySubset(0.0))?;
        let mean = impute_means.get(col).copied().unwrap_or(0.0);
        for (row, call) in ds.calls().variant_calls(v).enumerate() {
            design[(row, col)] = call.dosage().map(|d| d as f64).unwrap_or(mean);
        }
    }
    Ok(design)
}

/// Write the scan as the pipeline's association table CSV.
pub fn write_scan_csv(
    results: &[AssocResult],
    ds: &Dataset,
    w: &mut impl std::io::Write,
) -> std::io::Result<()> {
    writeln!(w, "variant_id,chrom,pos,beta,se,z,p,n_used,flag")?;
    for (res, var) in results.iter().zip(ds.variants()) {
        let fmt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_else(|| "NA".into());
        let flag = match res.flag {
            FitFlag::Clean => "ok",
            FitFlag::Separation => "separation",
            FitFlag::Monomorphic => "monomorphic",
        };
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            res.variant_id,
            var.chromosome,
            var.position,
            res.beta,
            fmt(res.se),
            fmt(res.wald_z),
            fmt(res.p),
            res.n_used,
            flag
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genotype::{Dataset, GenotypeCall, PackedCalls, Phenotype, SampleRecord, Sex,
        VariantRecord};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn opt(vals: &[u8]) -> Vec<Option<u8>> {
        vals.iter().map(|&v| Some(v)).collect()
    }

    #[test]
    fn matches_independent_irls_reference_fixture_a() {
        // reference values from a separate IRLS implementation
        let dosages = opt(&[0, 0, 1, 1, 2, 2, 1, 0]);
        let labels = opt(&[0, 1, 0, 1, 0, 1, 1, 0]);
        let fit = fit_logistic_single(&dosages, &labels, "rs1").unwrap();
        assert_eq!(fit.flag, FitFlag::Clean);
        assert_eq!(fit.n_used, 8);
        assert_relative_eq!(fit.beta, 0.416266873969934, epsilon = 1e-6);
        assert_relative_eq!(fit.se.unwrap(), 0.925853200496567, epsilon = 1e-6);
        assert_relative_eq!(fit.wald_z.unwrap(), 0.449603537306644, epsilon = 1e-6);
        assert_relative_eq!(fit.p.unwrap(), 0.652996337051862, epsilon = 1e-6);
    }

    #[test]
    fn matches_independent_irls_reference_fixture_b() {
        let dosages = opt(&[0, 1, 2, 0, 1, 2, 2, 1, 0, 2, 1, 1]);
        let labels = opt(&[0, 0, 1, 0, 1, 1, 0, 0, 1, 1, 0, 1]);
        let fit = fit_logistic_single(&dosages, &labels, "rs2").unwrap();
        assert_relative_eq!(fit.beta, 0.929271896480589, epsilon = 1e-6);
        assert_relative_eq!(fit.se.unwrap(), 0.844301012064314, epsilon = 1e-6);
        assert_relative_eq!(fit.p.unwrap(), 0.271053147221094, epsilon = 1e-6);
    }

    #[test]
    fn wald_identity_holds() {
        let dosages = opt(&[0, 0, 1, 1, 2, 2, 1, 0]);
        let labels = opt(&[0, 1, 0, 1, 0, 1, 1, 0]);
        let fit = fit_logistic_single(&dosages, &labels, "rs1").unwrap();
        let z = fit.beta / fit.se.unwrap();
        assert_relative_eq!(fit.wald_z.unwrap(), z, epsilon = 1e-12);
        assert_relative_eq!(
            fit.p.unwrap(),
            crate::stats::two_sided_normal_p(z),
            epsilon = 1e-12
        );
    }

    #[test]
    fn perfect_separation_is_flagged() {
        // label equals the (dosage >= 1) indicator
        let dosages = opt(&[0, 0, 0, 1, 1, 2, 2, 2]);
        let labels = opt(&[0, 0, 0, 1, 1, 1, 1, 1]);
        let fit = fit_logistic_single(&dosages, &labels, "rs1").unwrap();
        assert_eq!(fit.flag, FitFlag::Separation);
        assert_eq!(fit.p, None);
    }

    #[test]
    fn monomorphic_variant_returns_null_result() {
        let dosages = opt(&[1, 1, 1, 1]);
        let labels = opt(&[0, 1, 0, 1]);
        let fit = fit_logistic_single(&dosages, &labels, "rs1").unwrap();
        assert_eq!(fit.flag, FitFlag::Monomorphic);
        assert_eq!(fit.beta, 0.0);
        assert_eq!(fit.p, Some(1.0));
    }

    #[test]
    fn single_class_is_an_error() {
        let dosages = opt(&[0, 1, 2, 1]);
        let labels = opt(&[1, 1, 1, 1]);
        assert_eq!(
            fit_logistic_single(&dosages, &labels, "rs1").unwrap_err(),
            AssocError::SingleClass
        );
    }

    #[test]
    fn missing_dosages_are_excluded_from_n_used() {
        let dosages = vec![Some(0), None, Some(1), Some(2), None, Some(1)];
        let labels = opt(&[0, 1, 1, 1, 0, 0]);
        let fit = fit_logistic_single(&dosages, &labels, "rs1").unwrap();
        assert_eq!(fit.n_used, 4);
    }

    #[test]
    fn null_simulation_p_values_are_calibrated() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 400;
        let mut below = 0usize;
        let trials = 1000;
        for _ in 0..trials {
            let maf = rng.random_range(0.1..0.5);
            let dosages: Vec<Option<u8>> = (0..n)
                .map(|_| {
                    let a = (rng.random::<f64>() < maf) as u8;
                    let b = (rng.random::<f64>() < maf) as u8;
                    Some(a + b)
                })
                .collect();
            let labels: Vec<Option<u8>> =
                (0..n).map(|_| Some((rng.random::<f64>() < 0.5) as u8)).collect();
            let fit = fit_logistic_single(&dosages, &labels, "null").unwrap();
            if fit.flag == FitFlag::Clean && fit.p.unwrap() < 0.05 {
                below += 1;
            }
        }
        let frac = below as f64 / trials as f64;
        assert!((frac - 0.05).abs() <= 0.02, "fraction below 0.05: {frac}");
    }

    #[test]
    fn wald_p_tracks_likelihood_ratio_p_for_moderate_effects() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 1500;
        let mut checked = 0;
        for trial in 0..40 {
            let maf: f64 = rng.random_range(0.2..0.4);
            let beta_true = rng.random_range(-0.25..0.25);
            let mut dosages = Vec::with_capacity(n);
            let mut labels = Vec::with_capacity(n);
            for _ in 0..n {
                let d = (rng.random::<f64>() < maf) as u8 + (rng.random::<f64>() < maf) as u8;
                let p = crate::stats::sigmoid(-0.1 + beta_true * d as f64);
                dosages.push(Some(d));
                labels.push(Some((rng.random::<f64>() < p) as u8));
            }
            let fit = fit_logistic_single(&dosages, &labels, &format!("t{trial}")).unwrap();
            let z = fit.wald_z.unwrap();
            if z.abs() >= 4.0 {
                continue;
            }
            // likelihood-ratio oracle
            let x: Vec<f64> = dosages.iter().map(|d| d.unwrap() as f64).collect();
            let y: Vec<f64> = labels.iter().map(|l| l.unwrap() as f64).collect();
            let ybar = y.iter().sum::<f64>() / y.len() as f64;
            let ll_null = super::log_likelihood(&x, &y, (ybar / (1.0 - ybar)).ln(), 0.0);
            // replicate the fitted optimum
            let se = fit.se.unwrap();
            let b1 = fit.beta;
            // recover b0 by refitting with b1 fixed (1-d Newton)
            let mut b0 = (ybar / (1.0 - ybar)).ln();
            for _ in 0..50 {
                let (mut g, mut h) = (0.0, 0.0);
                for (&xi, &yi) in x.iter().zip(&y) {
                    let mu = crate::stats::sigmoid(b0 + b1 * xi);
                    g += yi - mu;
                    h += mu * (1.0 - mu);
                }
                let step = g / h;
                b0 += step;
                if step.abs() < 1e-12 {
                    break;
                }
            }
            let ll_full = super::log_likelihood(&x, &y, b0, b1);
            let lrt = (2.0 * (ll_full - ll_null)).max(0.0);
            let p_lrt = crate::stats::chi_square_1df_p(lrt);
            let p_wald = fit.p.unwrap();
            let rel = (p_wald - p_lrt).abs() / p_lrt;
            assert!(
                rel < 0.2,
                "wald {p_wald} vs lrt {p_lrt} (rel {rel}, z {z}, se {se})"
            );
            checked += 1;
        }
        assert!(checked >= 10, "only {checked} moderate-z fits exercised");
    }

    fn toy_dataset(columns: &[Vec<Option<u8>>], labels: &[u8]) -> Dataset {
        let n = labels.len();
        let samples: Vec<SampleRecord> = (0..n)
            .map(|i| SampleRecord {
                family_id: format!("F{i}"),
                individual_id: format!("I{i}"),
                reported_sex: Sex::Unknown,
                phenotype: if labels[i] == 1 {
                    Phenotype::Case
                } else {
                    Phenotype::Control
                },
            })
            .collect();
        let variants: Vec<VariantRecord> = (0..columns.len())
            .map(|v| VariantRecord {
                id: format!("rs{v}"),
                chromosome: "1".into(),
                position: v as u64,
                allele1: "A".into(),
                allele2: "G".into(),
                genetic_distance: 0.0,
            })
            .collect();
        let mut calls = PackedCalls::filled(n, columns.len(), GenotypeCall::Missing);
        for (v, col) in columns.iter().enumerate() {
            for (s, d) in col.iter().enumerate() {
                let call = match d {
                    Some(0) => GenotypeCall::HomMajor,
                    Some(1) => GenotypeCall::Het,
                    Some(2) => GenotypeCall::HomMinor,
                    _ => GenotypeCall::Missing,
                };
                calls.set(s, v, call);
            }
        }
        Dataset::new(samples, variants, calls).unwrap()
    }

    #[test]
    fn scan_of_empty_dataset_is_empty() {
        let ds = toy_dataset(&[], &[0, 1]);
        assert!(association_scan(&ds).unwrap().is_empty());
    }

    #[test]
    fn scan_order_is_invariant_under_sample_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let n = 60;
        let labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..2) as u8).collect();
        let columns: Vec<Vec<Option<u8>>> = (0..5)
            .map(|_| (0..n).map(|_| Some(rng.random_range(0..3) as u8)).collect())
            .collect();
        let ds = toy_dataset(&columns, &labels);
        let base = association_scan(&ds).unwrap();

        let mut perm: Vec<usize> = (0..n).collect();
        use rand::seq::SliceRandom;
        perm.shuffle(&mut rng);
        let permuted_cols: Vec<Vec<Option<u8>>> = columns
            .iter()
            .map(|c| perm.iter().map(|&i| c[i]).collect())
            .collect();
        let permuted_labels: Vec<u8> = perm.iter().map(|&i| labels[i]).collect();
        let ds2 = toy_dataset(&permuted_cols, &permuted_labels);
        let shuffled = association_scan(&ds2).unwrap();
        for (a, b) in base.iter().zip(&shuffled) {
            assert_eq!(a.variant_id, b.variant_id);
            assert_relative_eq!(a.beta, b.beta, epsilon = 1e-9);
            match (a.p, b.p) {
                (Some(pa), Some(pb)) => assert_relative_eq!(pa, pb, epsilon = 1e-9),
                (x, y) => assert_eq!(x, y),
            }
        }
    }

    #[test]
    fn planted_effect_lands_in_smallest_percentile() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let n = 2000;
        let n_null = 300;
        // planted causal column with odds ratio 2
        let maf = 0.3;
        let mut causal = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let d = (rng.random::<f64>() < maf) as u8 + (rng.random::<f64>() < maf) as u8;
            let p = crate::stats::sigmoid(-0.4 + (2.0f64).ln() * d as f64);
            causal.push(Some(d));
            labels.push((rng.random::<f64>() < p) as u8);
        }
        let mut columns = vec![causal];
        for _ in 0..n_null {
            let maf = rng.random_range(0.05..0.5);
            columns.push(
                (0..n)
                    .map(|_| {
                        Some((rng.random::<f64>() < maf) as u8 + (rng.random::<f64>() < maf) as u8)
                    })
                    .collect(),
            );
        }
        let ds = toy_dataset(&columns, &labels);
        let results = association_scan(&ds).unwrap();
        let causal_p = results[0].p.unwrap();
        let smaller = results[1..]
            .iter()
            .filter_map(|r| r.p)
            .filter(|&p| p < causal_p)
            .count();
        assert!(
            (smaller as f64) < 0.01 * n_null as f64,
            "{smaller} null variants beat the causal one"
        );
    }

    #[test]
    fn threshold_one_admits_all_clean_variants() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 80;
        let labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..2) as u8).collect();
        let mut columns: Vec<Vec<Option<u8>>> = (0..6)
            .map(|_| (0..n).map(|_| Some(rng.random_range(0..3) as u8)).collect())
            .collect();
        columns.push(vec![Some(1); n]); // monomorphic: flagged, excluded
        let ds = toy_dataset(&columns, &labels);
        let results = association_scan(&ds).unwrap();
        let subset = threshold_filter(&results, &ds, 1.0).unwrap();
        assert_eq!(subset.variant_ids.len(), 6);
    }

    #[test]
    fn subsets_nest_across_thresholds() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let n = 500;
        let mut labels = Vec::with_capacity(n);
        let mut columns: Vec<Vec<Option<u8>>> = Vec::new();
        // a few informative columns with varying strength, centred so both
        // classes stay populated
        let mut effects = vec![0.0; 30];
        for (i, e) in effects.iter_mut().enumerate() {
            *e = i as f64 * 0.02;
        }
        let offset: f64 = effects.iter().map(|e| e * 0.6).sum();
        let mut cols: Vec<Vec<Option<u8>>> = effects.iter().map(|_| Vec::with_capacity(n)).collect();
        for _ in 0..n {
            let mut logit = -offset;
            let mut draws = Vec::with_capacity(effects.len());
            for &e in &effects {
                let d = (rng.random::<f64>() < 0.3) as u8 + (rng.random::<f64>() < 0.3) as u8;
                logit += e * d as f64;
                draws.push(d);
            }
            labels.push((rng.random::<f64>() < crate::stats::sigmoid(logit)) as u8);
            for (c, d) in cols.iter_mut().zip(draws) {
                c.push(Some(d));
            }
        }
        columns.extend(cols);
        let ds = toy_dataset(&columns, &labels);
        let results = association_scan(&ds).unwrap();
        let thresholds = [5e-3, 5e-4, 5e-5, 5e-6, 5e-7, 5e-8];
        let mut previous: Option<std::collections::HashSet<String>> = None;
        for &t in &thresholds {
            let ids: std::collections::HashSet<String> = match threshold_filter(&results, &ds, t) {
                Ok(s) => s.variant_ids.into_iter().collect(),
                Err(AssocError::EmptySubset(_)) => Default::default(),
                Err(e) => panic!("{e}"),
            };
            if let Some(prev) = &previous {
                assert!(ids.is_subset(prev), "threshold {t} not nested");
            }
            previous = Some(ids);
        }
    }

    #[test]
    fn known_p_values_filter_exactly() {
        let results = vec![
            AssocResult {
                variant_id: "a".into(),
                beta: 0.1,
                se: Some(1.0),
                wald_z: Some(0.1),
                p: Some(1e-2),
                n_used: 10,
                flag: FitFlag::Clean,
            },
            AssocResult {
                variant_id: "b".into(),
                beta: 0.2,
                se: Some(1.0),
                wald_z: Some(0.2),
                p: Some(1e-4),
                n_used: 10,
                flag: FitFlag::Clean,
            },
            AssocResult {
                variant_id: "c".into(),
                beta: 0.3,
                se: Some(1.0),
                wald_z: Some(0.3),
                p: Some(1e-9),
                n_used: 10,
                flag: FitFlag::Clean,
            },
        ];
        let ds = toy_dataset(
            &[
                vec![Some(0), Some(1), Some(2), Some(1)],
                vec![Some(1), Some(0), Some(1), Some(2)],
                vec![Some(2), Some(1), Some(0), Some(0)],
            ],
            &[0, 1, 0, 1],
        );
        // ids in the fixture are rs0/rs1/rs2
        let results: Vec<AssocResult> = results
            .into_iter()
            .enumerate()
            .map(|(i, mut r)| {
                r.variant_id = format!("rs{i}");
                r
            })
            .collect();
        let subset = threshold_filter(&results, &ds, 5e-5).unwrap();
        assert_eq!(subset.variant_ids, vec!["rs2".to_string()]);
        assert!(matches!(
            threshold_filter(&results, &ds, 1e-12),
            Err(AssocError::EmptySubset(_))
        ));
    }

    #[test]
    fn mean_imputation_preserves_column_means() {
        let ds = toy_dataset(
            &[vec![Some(0), None, Some(2), Some(1), None, Some(1)]],
            &[0, 1, 0, 1, 0, 1],
        );
        let results = vec![AssocResult {
            variant_id: "rs0".into(),
            beta: 0.0,
            se: Some(1.0),
            wald_z: Some(0.0),
            p: Some(0.5),
            n_used: 4,
            flag: FitFlag::Clean,
        }];
        let subset = threshold_filter(&results, &ds, 1.0).unwrap();
        let observed_mean = (0.0 + 2.0 + 1.0 + 1.0) / 4.0;
        let col = subset.design.column(0);
        let imputed_mean = col.sum() / col.len() as f64;
        assert_relative_eq!(imputed_mean, observed_mean, epsilon = 1e-12);
        assert_relative_eq!(subset.impute_means[0], observed_mean, epsilon = 1e-12);
    }
}
