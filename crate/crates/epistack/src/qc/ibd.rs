//! Method-of-moments relatedness estimation from identity-by-state counts.
//!
//! For each sample pair the observed IBS0/IBS1/IBS2 counts over co-observed
//! variants are combined with their expectations under the per-variant allele
//! frequencies to estimate P(IBD=0/1/2); PI_HAT = P(IBD=2) + P(IBD=1)/2.
//! Pair counting runs over packed 2-bit rows with a byte-pair lookup table.

use crate::genotype::Dataset;
use ndarray::Array2;
use rayon::prelude::*;
use std::sync::OnceLock;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum IbdError {
    #[error("samples {0} and {1} share no co-observed variants")]
    NoOverlap(usize, usize),
    #[error("no polymorphic variants available for relatedness estimation")]
    NoVariants,
}

/// Packed counts for one byte pair: valid<<24 | ibs2<<16 | ibs1<<8 | ibs0.
fn ibs_lut() -> &'static [u32; 65536] {
    static LUT: OnceLock<Box<[u32; 65536]>> = OnceLock::new();
    LUT.get_or_init(|| {
        let mut table = vec![0u32; 65536].into_boxed_slice();
        for a in 0..256u32 {
            for b in 0..256u32 {
                let mut packed = 0u32;
                for lane in 0..4 {
                    let ca = (a >> (2 * lane)) & 0b11;
                    let cb = (b >> (2 * lane)) & 0b11;
                    if ca == 3 || cb == 3 {
                        continue;
                    }
                    let ibs = 2 - ca.abs_diff(cb);
                    packed += 1 << 24;
                    packed += 1 << (8 * ibs);
                }
                table[(a as usize) << 8 | b as usize] = packed;
            }
        }
        let boxed: Box<[u32; 65536]> = table.try_into().unwrap();
        boxed
    })
}

/// Sample-major 2-bit rows over a variant subset; pad lanes are missing.
fn pack_rows(ds: &Dataset, variants: &[usize]) -> Vec<Vec<u8>> {
    let n = ds.n_samples();
    let bytes = variants.len().div_ceil(4);
    let mut rows = vec![vec![0xffu8; bytes]; n]; // 0xff = four missing lanes
    for (slot, &v) in variants.iter().enumerate() {
        let (byte, lane) = (slot / 4, slot % 4);
        let clear = !(0b11u8 << (2 * lane));
        for (s, call) in ds.calls().variant_calls(v).enumerate() {
            let row = &mut rows[s];
            row[byte] = row[byte] & clear | (call.code() << (2 * lane));
        }
    }
    rows
}

/// Expected IBS-state rates under the allele frequencies, summed over the
/// variant subset.
struct ExpectedIbs {
    ibs0_given_ibd0: f64,
    ibs1_given_ibd0: f64,
    ibs2_given_ibd0: f64,
    ibs1_given_ibd1: f64,
    ibs2_given_ibd1: f64,
    n_variants: f64,
}

fn expected_ibs(ds: &Dataset, variants: &[usize]) -> ExpectedIbs {
    let mut acc = ExpectedIbs {
        ibs0_given_ibd0: 0.0,
        ibs1_given_ibd0: 0.0,
        ibs2_given_ibd0: 0.0,
        ibs1_given_ibd1: 0.0,
        ibs2_given_ibd1: 0.0,
        n_variants: 0.0,
    };
    for &v in variants {
        let [hom_major, het, hom_minor, _] = ds.calls().genotype_counts(v);
        let n = hom_major + het + hom_minor;
        if n == 0 {
            continue;
        }
        let p = (2 * hom_minor + het) as f64 / (2 * n) as f64;
        let q = 1.0 - p;
        acc.ibs0_given_ibd0 += 2.0 * p * p * q * q;
        acc.ibs1_given_ibd0 += 4.0 * p * q * (p * p + q * q);
        acc.ibs2_given_ibd0 += p.powi(4) + q.powi(4) + 4.0 * p * p * q * q;
        acc.ibs1_given_ibd1 += 2.0 * p * q;
        acc.ibs2_given_ibd1 += p * p + q * q;
        acc.n_variants += 1.0;
    }
    acc
}

/// Pairwise PI_HAT matrix over the given variant subset (already pruned by
/// the caller). Symmetric with unit diagonal.
pub fn ibd_estimate(ds: &Dataset, variants: &[usize]) -> Result<Array2<f64>, IbdError> {
    let expected = expected_ibs(ds, variants);
    if expected.n_variants == 0.0 {
        return Err(IbdError::NoVariants);
    }
    let rows = pack_rows(ds, variants);
    let lut = ibs_lut();
    let n = ds.n_samples();

    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .collect();
    let estimates: Result<Vec<((usize, usize), f64)>, IbdError> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let (mut ibs0, mut ibs1, mut ibs2, mut valid) = (0u64, 0u64, 0u64, 0u64);
            for (&a, &b) in rows[i].iter().zip(&rows[j]) {
                let packed = lut[(a as usize) << 8 | b as usize];
                ibs0 += (packed & 0xff) as u64;
                ibs1 += ((packed >> 8) & 0xff) as u64;
                ibs2 += ((packed >> 16) & 0xff) as u64;
                valid += (packed >> 24) as u64;
            }
            if valid == 0 {
                return Err(IbdError::NoOverlap(i, j));
            }
            // scale the expectations to this pair's co-observed span
            let scale = valid as f64 / expected.n_variants;
            let e0 = expected.ibs0_given_ibd0 * scale;
            let e1_0 = expected.ibs1_given_ibd0 * scale;
            let e2_0 = expected.ibs2_given_ibd0 * scale;
            let e1_1 = expected.ibs1_given_ibd1 * scale;
            let e2_1 = expected.ibs2_given_ibd1 * scale;
            let p0 = if e0 > 0.0 {
                (ibs0 as f64 / e0).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let p1 = if e1_1 > 0.0 {
                ((ibs1 as f64 - p0 * e1_0) / e1_1).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let p2 = ((ibs2 as f64 - p0 * e2_0 - p1 * e2_1) / valid as f64).clamp(0.0, 1.0);
            let pi_hat = (p2 + 0.5 * p1).clamp(0.0, 1.0);
            Ok(((i, j), pi_hat))
        })
        .collect();

    let mut matrix = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        matrix[(i, i)] = 1.0;
    }
    for ((i, j), pi_hat) in estimates? {
        matrix[(i, j)] = pi_hat;
        matrix[(j, i)] = pi_hat;
    }
    Ok(matrix)
}

/// Greedy removal of related pairs. Pairs above the threshold are visited in
/// index order; if both members are still present, the one with the higher
/// missingness rate is dropped (ties drop the lexicographically larger
/// individual id). One pass suffices: every offending pair loses a member.
pub fn ibd_filter(
    pi_hat: &Array2<f64>,
    missing_rates: &[f64],
    individual_ids: &[String],
    threshold: f64,
) -> Vec<usize> {
    let n = pi_hat.nrows();
    let mut removed = vec![false; n];
    let mut out = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if pi_hat[(i, j)] <= threshold || removed[i] || removed[j] {
                continue;
            }
            let drop = match missing_rates[i]
                .partial_cmp(&missing_rates[j])
                .unwrap_or(std::cmp::Ordering::Equal)
            {
                std::cmp::Ordering::Greater => i,
                std::cmp::Ordering::Less => j,
                std::cmp::Ordering::Equal => {
                    if individual_ids[i] > individual_ids[j] {
                        i
                    } else {
                        j
                    }
                }
            };
            removed[drop] = true;
            out.push(drop);
        }
    }
    out.sort_unstable();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genotype::{GenotypeCall, PackedCalls, Phenotype, SampleRecord, Sex, VariantRecord};
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dataset_from_rows(rows: &[Vec<Option<u8>>]) -> Dataset {
        let n = rows.len();
        let u = rows[0].len();
        let samples = (0..n)
            .map(|i| SampleRecord {
                family_id: format!("F{i}"),
                individual_id: format!("I{i:03}"),
                reported_sex: Sex::Unknown,
                phenotype: Phenotype::Control,
            })
            .collect();
        let variants = (0..u)
            .map(|v| VariantRecord {
                id: format!("rs{v}"),
                chromosome: "1".into(),
                position: v as u64,
                allele1: "A".into(),
                allele2: "G".into(),
                genetic_distance: 0.0,
            })
            .collect();
        let mut calls = PackedCalls::filled(n, u, GenotypeCall::Missing);
        for (s, row) in rows.iter().enumerate() {
            for (v, d) in row.iter().enumerate() {
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

    fn draw_genotype(rng: &mut ChaCha8Rng, maf: f64) -> u8 {
        (rng.random::<f64>() < maf) as u8 + (rng.random::<f64>() < maf) as u8
    }

    #[test]
    fn duplicates_unrelated_and_parent_child_recover_their_targets() {
        // allele frequencies are estimated from the cohort itself, so embed
        // the structured quartet in a population of unrelated samples
        let mut rng = ChaCha8Rng::seed_from_u64(60601);
        let u = 10_000;
        let n_background = 96;
        let mafs: Vec<f64> = (0..u).map(|_| rng.random_range(0.1..0.5)).collect();
        let draw_row = |rng: &mut ChaCha8Rng| -> Vec<Option<u8>> {
            mafs.iter().map(|&m| Some(draw_genotype(rng, m))).collect()
        };
        // rows: 0 founder, 1 duplicate of 0, 2 unrelated, 3 child of 0 and 2
        let founder = draw_row(&mut rng);
        let unrelated = draw_row(&mut rng);
        let transmit = |g: u8, rng: &mut ChaCha8Rng| -> u8 {
            match g {
                0 => 0,
                2 => 1,
                _ => (rng.random::<f64>() < 0.5) as u8,
            }
        };
        let child: Vec<Option<u8>> = founder
            .iter()
            .zip(&unrelated)
            .map(|(a, b)| {
                // one allele from each parent
                Some(transmit(a.unwrap(), &mut rng) + transmit(b.unwrap(), &mut rng))
            })
            .collect();
        let mut rows = vec![founder.clone(), founder, unrelated, child];
        for _ in 0..n_background {
            rows.push(draw_row(&mut rng));
        }
        let ds = dataset_from_rows(&rows);
        let variants: Vec<usize> = (0..u).collect();
        let pi = ibd_estimate(&ds, &variants).unwrap();
        assert!((pi[(0, 1)] - 1.0).abs() <= 0.05, "duplicates: {}", pi[(0, 1)]);
        assert!(pi[(0, 2)] <= 0.05, "unrelated: {}", pi[(0, 2)]);
        assert!((pi[(0, 3)] - 0.5).abs() <= 0.05, "parent-child: {}", pi[(0, 3)]);
        assert!((pi[(2, 3)] - 0.5).abs() <= 0.05, "other parent: {}", pi[(2, 3)]);
        // symmetry
        assert_eq!(pi[(0, 3)], pi[(3, 0)]);
    }

    #[test]
    fn no_overlap_pair_is_an_error() {
        let ds = dataset_from_rows(&[
            vec![Some(1), None],
            vec![None, Some(2)],
            vec![Some(0), Some(1)],
        ]);
        match ibd_estimate(&ds, &[0, 1]) {
            Err(IbdError::NoOverlap(0, 1)) => {}
            other => panic!("expected NoOverlap, got {other:?}"),
        }
    }

    #[test]
    fn filter_empty_when_nothing_exceeds_threshold() {
        let pi = array![[1.0, 0.1], [0.1, 1.0]];
        let removed = ibd_filter(&pi, &[0.0, 0.0], &ids(2), 0.185);
        assert!(removed.is_empty());
    }

    #[test]
    fn filter_drops_higher_missingness_member() {
        let pi = array![[1.0, 0.9], [0.9, 1.0]];
        let removed = ibd_filter(&pi, &[0.01, 0.05], &ids(2), 0.185);
        assert_eq!(removed, vec![1]);
        let removed = ibd_filter(&pi, &[0.05, 0.01], &ids(2), 0.185);
        assert_eq!(removed, vec![0]);
        // tie drops the lexicographically larger id
        let removed = ibd_filter(&pi, &[0.02, 0.02], &ids(2), 0.185);
        assert_eq!(removed, vec![1]);
    }

    #[test]
    fn chain_is_resolved_greedily() {
        // 0~1 and 1~2 related; removing 1 settles both pairs
        let pi = array![[1.0, 0.6, 0.0], [0.6, 1.0, 0.6], [0.0, 0.6, 1.0]];
        let removed = ibd_filter(&pi, &[0.0, 0.01, 0.0], &ids(3), 0.185);
        assert_eq!(removed, vec![1]);
        // equal missingness: pair (0,1) drops 1, pair (1,2) already settled
        let removed = ibd_filter(&pi, &[0.0, 0.0, 0.0], &ids(3), 0.185);
        assert_eq!(removed, vec![1]);
    }

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("I{i:03}")).collect()
    }
}
