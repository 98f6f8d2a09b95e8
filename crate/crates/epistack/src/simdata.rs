//! Synthetic case/control genotype generator with planted null, marginal and
//! epistatic effects, plus the stratified train/valid/test split.
//!
//! Genotypes are drawn binomial(2, maf) per sample so null variants sit in
//! Hardy-Weinberg equilibrium by construction. The phenotype comes from a
//! liability logit: baseline prevalence plus additive marginal terms plus
//! pairwise interaction terms. Column generation is keyed by per-column
//! sub-seeds, so output does not depend on generation order.

use crate::genotype::{
    Dataset, GenotypeCall, PackedCalls, Phenotype, SampleRecord, Sex, VariantRecord,
};
use crate::stats::{logit, sigmoid};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("invalid simulation spec: {0}")]
    SpecInvalid(String),
    #[error("too few samples to populate every split")]
    TooFewSamples,
    #[error("split fractions must sum to 1")]
    BadFractions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EpistasisModel {
    /// Effect fires when exactly one member carries a minor allele
    /// (dominance-coded); marginal effects cancel by symmetry.
    Xor,
    /// Effect proportional to the dosage product.
    Multiplicative,
    /// Effect fires when both members carry a minor allele.
    Threshold,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SimSpec {
    pub n_samples: usize,
    pub n_variants: usize,
    pub maf_range: (f64, f64),
    pub n_marginal: usize,
    pub marginal_odds_ratio: f64,
    pub n_epistatic_pairs: usize,
    pub epistasis_model: EpistasisModel,
    pub epistatic_odds_ratio: f64,
    pub base_prevalence: f64,
    pub missing_rate: f64,
    pub seed: u64,
}

impl Default for SimSpec {
    fn default() -> Self {
        SimSpec {
            n_samples: 2000,
            n_variants: 5000,
            maf_range: (0.1, 0.4),
            n_marginal: 10,
            marginal_odds_ratio: 1.5,
            n_epistatic_pairs: 10,
            epistasis_model: EpistasisModel::Xor,
            epistatic_odds_ratio: 3.0,
            base_prevalence: 0.5,
            missing_rate: 0.0,
            seed: 1,
        }
    }
}

impl SimSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.n_samples == 0 || self.n_variants == 0 {
            return Err(SimError::SpecInvalid("empty dimensions".into()));
        }
        if self.n_marginal + 2 * self.n_epistatic_pairs > self.n_variants {
            return Err(SimError::SpecInvalid(
                "causal variants exceed the variant count".into(),
            ));
        }
        let (lo, hi) = self.maf_range;
        if !(0.0 < lo && lo <= hi && hi <= 0.5) {
            return Err(SimError::SpecInvalid("maf range must satisfy 0 < lo <= hi <= 0.5".into()));
        }
        if !(self.base_prevalence > 0.0 && self.base_prevalence < 1.0) {
            return Err(SimError::SpecInvalid("prevalence must lie in (0, 1)".into()));
        }
        if !(0.0..1.0).contains(&self.missing_rate) {
            return Err(SimError::SpecInvalid("missing rate must lie in [0, 1)".into()));
        }
        if self.marginal_odds_ratio <= 0.0 || self.epistatic_odds_ratio <= 0.0 {
            return Err(SimError::SpecInvalid("odds ratios must be positive".into()));
        }
        Ok(())
    }
}

/// Role of a causal variant in the ground-truth manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CausalRole {
    Marginal,
    EpistaticPair {
        partner: String,
        model: EpistasisModel,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CausalVariant {
    pub variant_id: String,
    pub role: CausalRole,
    /// Log odds ratio of the planted term.
    pub effect: f64,
    /// The frequency the column was drawn with.
    pub drawn_maf: f64,
}

/// Manifest tying generated data back to its planted structure.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub causal: Vec<CausalVariant>,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

fn column_rng(seed: u64, column: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(column as u64 + 1)))
}

/// Generate a dataset and its ground-truth manifest. Deterministic per seed.
pub fn generate(spec: &SimSpec) -> Result<(Dataset, GroundTruth), SimError> {
    spec.validate()?;
    let n = spec.n_samples;
    let u = spec.n_variants;

    // causal positions drawn from a dedicated stream
    let mut assign_rng = ChaCha8Rng::seed_from_u64(splitmix64(spec.seed ^ 0xa55e55ed));
    let mut order: Vec<usize> = (0..u).collect();
    order.shuffle(&mut assign_rng);
    let marginal: Vec<usize> = order[..spec.n_marginal].to_vec();
    let pairs: Vec<(usize, usize)> = (0..spec.n_epistatic_pairs)
        .map(|k| {
            (
                order[spec.n_marginal + 2 * k],
                order[spec.n_marginal + 2 * k + 1],
            )
        })
        .collect();

    // genotype columns, one seeded stream each: maf draw, dosages, missing mask
    let mut mafs = vec![0.0f64; u];
    let mut dosages: Vec<Vec<u8>> = vec![Vec::new(); u];
    let mut missing: Vec<Vec<bool>> = vec![Vec::new(); u];
    for v in 0..u {
        let mut rng = column_rng(spec.seed, v);
        let maf = rng.random_range(spec.maf_range.0..=spec.maf_range.1);
        mafs[v] = maf;
        let mut col = Vec::with_capacity(n);
        for _ in 0..n {
            let d = (rng.random::<f64>() < maf) as u8 + (rng.random::<f64>() < maf) as u8;
            col.push(d);
        }
        dosages[v] = col;
        missing[v] = if spec.missing_rate > 0.0 {
            (0..n).map(|_| rng.random::<f64>() < spec.missing_rate).collect()
        } else {
            vec![false; n]
        };
    }

    // liability term sum per sample; the terms are centred at their cohort
    // mean so base_prevalence is the realised prevalence, not just an
    // intercept the planted effects drift away from
    let marginal_effect = spec.marginal_odds_ratio.ln();
    let pair_effect = spec.epistatic_odds_ratio.ln();
    let mut term_sums = vec![0.0f64; n];
    for (s, sum) in term_sums.iter_mut().enumerate() {
        for &v in &marginal {
            *sum += marginal_effect * dosages[v][s] as f64;
        }
        for &(a, b) in &pairs {
            let da = dosages[a][s];
            let db = dosages[b][s];
            let term = match spec.epistasis_model {
                EpistasisModel::Xor => ((da >= 1) ^ (db >= 1)) as u8 as f64,
                EpistasisModel::Multiplicative => (da as f64) * (db as f64),
                EpistasisModel::Threshold => (da >= 1 && db >= 1) as u8 as f64,
            };
            *sum += pair_effect * term;
        }
    }
    let term_mean = term_sums.iter().sum::<f64>() / n as f64;
    let base = logit(spec.base_prevalence);
    let mut pheno_rng = ChaCha8Rng::seed_from_u64(splitmix64(spec.seed ^ 0x000fece5));
    let phenotypes: Vec<Phenotype> = term_sums
        .iter()
        .map(|&t| {
            if pheno_rng.random::<f64>() < sigmoid(base + t - term_mean) {
                Phenotype::Case
            } else {
                Phenotype::Control
            }
        })
        .collect();

    let samples: Vec<SampleRecord> = (0..n)
        .map(|i| SampleRecord {
            family_id: format!("FAM{i:05}"),
            individual_id: format!("IND{i:05}"),
            reported_sex: if i % 2 == 0 { Sex::Female } else { Sex::Male },
            phenotype: phenotypes[i],
        })
        .collect();
    let variants: Vec<VariantRecord> = (0..u)
        .map(|v| VariantRecord {
            id: format!("snp{v:06}"),
            chromosome: "1".into(),
            position: (v as u64 + 1) * 100,
            allele1: "A".into(),
            allele2: "B".into(),
            genetic_distance: 0.0,
        })
        .collect();
    let mut calls = PackedCalls::filled(n, u, GenotypeCall::HomMajor);
    for v in 0..u {
        for s in 0..n {
            let call = if missing[v][s] {
                GenotypeCall::Missing
            } else {
                GenotypeCall::from_code(dosages[v][s])
            };
            calls.set(s, v, call);
        }
    }
    let ds = Dataset::new(samples, variants, calls)
        .map_err(|e| SimError::SpecInvalid(e.to_string()))?;

    let mut causal = Vec::new();
    for &v in &marginal {
        causal.push(CausalVariant {
            variant_id: format!("snp{v:06}"),
            role: CausalRole::Marginal,
            effect: marginal_effect,
            drawn_maf: mafs[v],
        });
    }
    for &(a, b) in &pairs {
        for (this, other) in [(a, b), (b, a)] {
            causal.push(CausalVariant {
                variant_id: format!("snp{this:06}"),
                role: CausalRole::EpistaticPair {
                    partner: format!("snp{other:06}"),
                    model: spec.epistasis_model,
                },
                effect: pair_effect,
                drawn_maf: mafs[this],
            });
        }
    }
    Ok((
        ds,
        GroundTruth {
            seed: spec.seed,
            causal,
        },
    ))
}

/// Disjoint, exhaustive sample index sets, stratified by phenotype.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

/// Stratified split into train/valid/test. Within each phenotype stratum the
/// order is shuffled deterministically and counts are rounded per fraction,
/// so class proportions hold within one sample per split.
pub fn split(ds: &Dataset, fractions: (f64, f64, f64), seed: u64) -> Result<SplitIndices, SimError> {
    let (f_train, f_valid, f_test) = fractions;
    if (f_train + f_valid + f_test - 1.0).abs() > 1e-9 || f_train < 0.0 || f_valid < 0.0 || f_test < 0.0
    {
        return Err(SimError::BadFractions);
    }
    let mut strata: std::collections::BTreeMap<u8, Vec<usize>> = Default::default();
    for (i, s) in ds.samples().iter().enumerate() {
        let key = s.phenotype.label().unwrap_or(2);
        strata.entry(key).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ 0x5b71f));
    let mut out = SplitIndices {
        train: Vec::new(),
        valid: Vec::new(),
        test: Vec::new(),
    };
    for (_, mut members) in strata {
        members.shuffle(&mut rng);
        let n = members.len();
        let n_train = ((f_train * n as f64).round() as usize).min(n);
        let n_valid = ((f_valid * n as f64).round() as usize).min(n - n_train);
        out.train.extend(&members[..n_train]);
        out.valid.extend(&members[n_train..n_train + n_valid]);
        out.test.extend(&members[n_train + n_valid..]);
    }
    out.train.sort_unstable();
    out.valid.sort_unstable();
    out.test.sort_unstable();
    if out.train.is_empty() || out.valid.is_empty() || out.test.is_empty() {
        return Err(SimError::TooFewSamples);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assoc::association_scan;

    #[test]
    fn generation_is_deterministic() {
        let spec = SimSpec {
            n_samples: 50,
            n_variants: 40,
            missing_rate: 0.02,
            ..SimSpec::default()
        };
        let (a, truth_a) = generate(&spec).unwrap();
        let (b, truth_b) = generate(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            serde_json::to_string(&truth_a).unwrap(),
            serde_json::to_string(&truth_b).unwrap()
        );
        let (c, _) = generate(&SimSpec { seed: 2, ..spec }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let spec = SimSpec {
            n_variants: 10,
            n_marginal: 8,
            n_epistatic_pairs: 2,
            ..SimSpec::default()
        };
        assert!(matches!(generate(&spec), Err(SimError::SpecInvalid(_))));
    }

    #[test]
    fn zero_missing_rate_means_no_missing_calls() {
        let spec = SimSpec {
            n_samples: 100,
            n_variants: 60,
            missing_rate: 0.0,
            ..SimSpec::default()
        };
        let (ds, _) = generate(&spec).unwrap();
        for v in 0..ds.n_variants() {
            assert_eq!(ds.calls().genotype_counts(v)[3], 0);
        }
    }

    #[test]
    fn empirical_maf_tracks_drawn_maf() {
        let spec = SimSpec {
            n_samples: 2000,
            n_variants: 100,
            n_marginal: 0,
            n_epistatic_pairs: 0,
            maf_range: (0.1, 0.45),
            ..SimSpec::default()
        };
        let (ds, _) = generate(&spec).unwrap();
        for v in 0..100 {
            let mut rng = super::column_rng(spec.seed, v);
            let drawn: f64 = rng.random_range(spec.maf_range.0..=spec.maf_range.1);
            let maf = ds.minor_allele_freq(v).unwrap();
            assert!(
                (maf - drawn).abs() <= 0.03,
                "variant {v}: drawn {drawn}, observed {maf}"
            );
        }
    }

    #[test]
    fn null_variants_satisfy_hwe_by_construction() {
        let spec = SimSpec {
            n_samples: 500,
            n_variants: 400,
            n_marginal: 0,
            n_epistatic_pairs: 0,
            ..SimSpec::default()
        };
        let (ds, _) = generate(&spec).unwrap();
        let mut passing = 0;
        for v in 0..ds.n_variants() {
            let [aa, ab, bb, _] = ds.calls().genotype_counts(v);
            let (_, p) = crate::qc::hwe_test(aa, ab, bb).unwrap();
            if p >= 1e-5 {
                passing += 1;
            }
        }
        assert!(passing as f64 >= 0.99 * ds.n_variants() as f64);
    }

    #[test]
    fn null_scan_p_values_are_uniform() {
        let spec = SimSpec {
            n_samples: 600,
            n_variants: 5000,
            n_marginal: 0,
            n_epistatic_pairs: 0,
            maf_range: (0.1, 0.5),
            seed: 8,
            ..SimSpec::default()
        };
        let (ds, _) = generate(&spec).unwrap();
        let results = association_scan(&ds).unwrap();
        let mut ps: Vec<f64> = results.iter().filter_map(|r| r.p).collect();
        ps.sort_by(|a, b| a.partial_cmp(b).unwrap());
        // Kolmogorov-Smirnov statistic against the uniform CDF
        let n = ps.len() as f64;
        let mut ks = 0.0f64;
        for (i, &p) in ps.iter().enumerate() {
            let upper = (i + 1) as f64 / n - p;
            let lower = p - i as f64 / n;
            ks = ks.max(upper.max(lower));
        }
        assert!(ks < 0.05, "KS statistic {ks}");
    }

    #[test]
    fn xor_pairs_hide_from_marginal_scans_but_not_joint_fits() {
        let spec = SimSpec {
            n_samples: 2000,
            n_variants: 30,
            n_marginal: 0,
            n_epistatic_pairs: 1,
            epistasis_model: EpistasisModel::Xor,
            epistatic_odds_ratio: 4.0,
            maf_range: (0.28, 0.32),
            seed: 5,
            ..SimSpec::default()
        };
        let (ds, truth) = generate(&spec).unwrap();
        let results = association_scan(&ds).unwrap();
        let causal_ids: Vec<&str> = truth.causal.iter().map(|c| c.variant_id.as_str()).collect();
        let labels = ds.labels();
        let mut joint_indicator = Vec::with_capacity(ds.n_samples());
        let idx: Vec<usize> = causal_ids
            .iter()
            .map(|id| ds.variants().iter().position(|v| v.id == *id).unwrap())
            .collect();
        for s in 0..ds.n_samples() {
            let da = ds.call(s, idx[0]).dosage().unwrap() >= 1;
            let db = ds.call(s, idx[1]).dosage().unwrap() >= 1;
            joint_indicator.push(Some((da ^ db) as u8));
        }
        // each member's marginal p stays above genome-wide significance
        for id in &causal_ids {
            let r = results.iter().find(|r| r.variant_id == *id).unwrap();
            assert!(r.p.unwrap() > 5e-8, "marginal p {:?}", r.p);
        }
        // the interaction-coded fit of the pair is decisive
        let joint = crate::assoc::fit_logistic_single(&joint_indicator, &labels, "xor").unwrap();
        assert!(joint.p.unwrap() < 5e-8, "joint p {:?}", joint.p);
    }

    #[test]
    fn split_sizes_match_the_canonical_protocol() {
        let spec = SimSpec {
            n_samples: 1000,
            n_variants: 10,
            n_marginal: 0,
            n_epistatic_pairs: 0,
            base_prevalence: 0.5,
            seed: 33,
            ..SimSpec::default()
        };
        let (ds, _) = generate(&spec).unwrap();
        let s = split(&ds, (0.8, 0.1, 0.1), 7).unwrap();
        assert_eq!(s.train.len(), 800);
        assert_eq!(s.valid.len(), 100);
        assert_eq!(s.test.len(), 100);
    }

    #[test]
    fn splits_are_disjoint_and_exhaustive() {
        let spec = SimSpec {
            n_samples: 537,
            n_variants: 5,
            n_marginal: 0,
            n_epistatic_pairs: 0,
            seed: 4,
            ..SimSpec::default()
        };
        let (ds, _) = generate(&spec).unwrap();
        let s = split(&ds, (0.8, 0.1, 0.1), 1).unwrap();
        let mut all: Vec<usize> = s
            .train
            .iter()
            .chain(&s.valid)
            .chain(&s.test)
            .copied()
            .collect();
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), 537);
        assert_eq!(all, (0..537).collect::<Vec<_>>());
    }

    #[test]
    fn splits_are_stratified_within_one_sample() {
        let spec = SimSpec {
            n_samples: 1000,
            n_variants: 5,
            n_marginal: 0,
            n_epistatic_pairs: 0,
            base_prevalence: 0.5,
            seed: 12,
            ..SimSpec::default()
        };
        let (ds, _) = generate(&spec).unwrap();
        let labels = ds.labels();
        let total_cases = labels.iter().flatten().filter(|&&l| l == 1).count() as f64;
        let overall = total_cases / 1000.0;
        let s = split(&ds, (0.8, 0.1, 0.1), 3).unwrap();
        for part in [&s.train, &s.valid, &s.test] {
            let cases = part.iter().filter(|&&i| labels[i] == Some(1)).count() as f64;
            let expected = overall * part.len() as f64;
            assert!(
                (cases - expected).abs() <= 1.0,
                "cases {cases} vs expected {expected}"
            );
        }
    }

    #[test]
    fn split_is_deterministic_per_seed() {
        let spec = SimSpec {
            n_samples: 100,
            n_variants: 5,
            n_marginal: 0,
            n_epistatic_pairs: 0,
            ..SimSpec::default()
        };
        let (ds, _) = generate(&spec).unwrap();
        assert_eq!(split(&ds, (0.8, 0.1, 0.1), 9).unwrap(), split(&ds, (0.8, 0.1, 0.1), 9).unwrap());
        assert_ne!(split(&ds, (0.8, 0.1, 0.1), 9).unwrap(), split(&ds, (0.8, 0.1, 0.1), 10).unwrap());
    }

    #[test]
    fn tiny_cohorts_cannot_be_split() {
        let spec = SimSpec {
            n_samples: 2,
            n_variants: 5,
            n_marginal: 0,
            n_epistatic_pairs: 0,
            ..SimSpec::default()
        };
        let (ds, _) = generate(&spec).unwrap();
        assert_eq!(split(&ds, (0.8, 0.1, 0.1), 1).unwrap_err(), SimError::TooFewSamples);
    }
}
