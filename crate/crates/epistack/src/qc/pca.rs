//! Ancestry principal components via deflated power iteration on the
//! sample-space Gram matrix.
//!
//! Genotype columns are centred on their mean dosage and scaled by
//! `sqrt(2 p (1 - p))`; missing calls impute to the column mean (zero after
//! centring). Score columns are unit-norm per component, signs fixed so the
//! largest-magnitude loading is positive.

use crate::genotype::Dataset;
use crate::scalar::Scalar;
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub const POWER_TOL: f64 = 1e-10;
pub const POWER_MAX_ITER: usize = 1000;

#[derive(Debug, Error, PartialEq)]
pub enum PcaError {
    #[error("matrix has no variance to decompose")]
    DegenerateMatrix,
    #[error("requested {k} components from {n} samples")]
    TooFewSamples { k: usize, n: usize },
}

/// Top-k eigenpairs of a symmetric matrix by power iteration with
/// re-orthogonalisation against already-found components.
pub fn power_eigs<F: Scalar>(
    matrix: &Array2<F>,
    k: usize,
    tol: f64,
    max_iter: usize,
    seed: u64,
) -> Result<(Vec<F>, Vec<Array1<F>>), PcaError> {
    let n = matrix.nrows();
    assert_eq!(n, matrix.ncols(), "matrix must be square");
    if k > n {
        return Err(PcaError::TooFewSamples { k, n });
    }
    let total: F = (0..n).map(|i| matrix[(i, i)].abs()).sum();
    if total.to_f64_lossy() < 1e-12 {
        return Err(PcaError::DegenerateMatrix);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tol = F::from_f64_lossy(tol);
    let mut eigenvalues = Vec::with_capacity(k);
    let mut eigenvectors: Vec<Array1<F>> = Vec::with_capacity(k);
    for _ in 0..k {
        let mut v: Array1<F> =
            Array1::from_shape_fn(n, |_| F::from_f64_lossy(rng.random_range(-1.0..1.0)));
        orthonormalise(&mut v, &eigenvectors);
        let mut lambda = F::zero();
        for _ in 0..max_iter {
            let mut next = matrix.dot(&v);
            orthogonalise(&mut next, &eigenvectors);
            let norm = next.dot(&next).sqrt();
            if norm.to_f64_lossy() < 1e-280 {
                // exhausted the spectrum; remaining eigenvalues are zero
                lambda = F::zero();
                break;
            }
            next.mapv_inplace(|x| x / norm);
            // align signs before measuring the step
            if next.dot(&v) < F::zero() {
                next.mapv_inplace(|x| -x);
            }
            let diff = (&next - &v).mapv(|d| d * d).sum().sqrt();
            v = next;
            lambda = v.dot(&matrix.dot(&v));
            if diff < tol {
                break;
            }
        }
        eigenvalues.push(lambda);
        eigenvectors.push(v);
    }
    Ok((eigenvalues, eigenvectors))
}

fn orthogonalise<F: Scalar>(v: &mut Array1<F>, basis: &[Array1<F>]) {
    for b in basis {
        let proj = v.dot(b);
        ndarray::Zip::from(&mut *v).and(b).for_each(|x, &b| *x = *x - proj * b);
    }
}

fn orthonormalise<F: Scalar>(v: &mut Array1<F>, basis: &[Array1<F>]) {
    orthogonalise(v, basis);
    let norm = v.dot(v).sqrt();
    if norm > F::zero() {
        v.mapv_inplace(|x| x / norm);
    }
}

/// Standardised genotype matrix over a variant subset: centred per column,
/// scaled by `sqrt(2 p (1-p))`, missing as zero. Monomorphic columns zero out.
pub fn standardized_genotypes(ds: &Dataset, variants: &[usize]) -> Array2<f64> {
    let n = ds.n_samples();
    let mut z = Array2::<f64>::zeros((n, variants.len()));
    for (col, &v) in variants.iter().enumerate() {
        let [hom_major, het, hom_minor, _] = ds.calls().genotype_counts(v);
        let observed = hom_major + het + hom_minor;
        if observed == 0 {
            continue;
        }
        let mean = (2 * hom_minor + het) as f64 / observed as f64;
        let p = mean / 2.0;
        let sd = (2.0 * p * (1.0 - p)).sqrt();
        if sd == 0.0 {
            continue;
        }
        for (row, call) in ds.calls().variant_calls(v).enumerate() {
            if let Some(d) = call.dosage() {
                z[(row, col)] = (d as f64 - mean) / sd;
            }
        }
    }
    z
}

/// Top-k ancestry principal components. Scores are one unit-norm column per
/// component; eigenvalues (of the variant-space sample covariance) come back
/// non-increasing.
pub fn pca_ancestry(
    ds: &Dataset,
    variants: &[usize],
    k: usize,
) -> Result<(Array2<f64>, Vec<f64>), PcaError> {
    let n = ds.n_samples();
    if k > n {
        return Err(PcaError::TooFewSamples { k, n });
    }
    let z = standardized_genotypes(ds, variants);
    let denom = (n.max(2) - 1) as f64;
    let gram = z.dot(&z.t()) / denom;
    let (eigenvalues, vectors) = power_eigs(&gram, k, POWER_TOL, POWER_MAX_ITER, 0x9e3779b9)?;
    let mut scores = Array2::<f64>::zeros((n, k));
    for (c, vec) in vectors.iter().enumerate() {
        // sign convention: largest-magnitude entry positive
        let mut flip = false;
        let mut best = 0.0f64;
        for &x in vec.iter() {
            if x.abs() > best {
                best = x.abs();
                flip = x < 0.0;
            }
        }
        for (r, &x) in vec.iter().enumerate() {
            scores[(r, c)] = if flip { -x } else { x };
        }
    }
    Ok((scores, eigenvalues.into_iter().collect()))
}

/// Indices of samples below the component thresholds (PC1 < pc1_min or
/// PC2 < pc2_min).
pub fn pca_outlier_filter(scores: &Array2<f64>, pc1_min: f64, pc2_min: f64) -> Vec<usize> {
    assert!(scores.ncols() >= 2, "outlier filter needs two components");
    (0..scores.nrows())
        .filter(|&i| scores[(i, 0)] < pc1_min || scores[(i, 1)] < pc2_min)
        .collect()
}
