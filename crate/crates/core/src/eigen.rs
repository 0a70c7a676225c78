//! Eigensystem of the trait correlation matrix, variance-explained level
//! selection, and the decorrelating transforms shared by every test.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::corr::{TraitCorrelation, PSD_FLOOR};
use crate::error::{Error, Result};

const EIGEN_MAX_ITER: usize = 10_000;

/// Symmetric eigendecomposition with eigenvalues sorted non-increasing.
///
/// Deterministic: ties keep the decomposition's original column order.
/// No sign convention is applied here.
pub(crate) fn sym_eigen_desc(m: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let eig = SymmetricEigen::try_new(m.clone(), f64::EPSILON, EIGEN_MAX_ITER)
        .ok_or(Error::ConvergenceFailure { max_iter: EIGEN_MAX_ITER })?;
    let t = m.nrows();
    let mut order: Vec<usize> = (0..t).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .expect("finite eigenvalues")
    });
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(t, t);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok((values, vectors))
}

/// Eigenvalues (descending), eigenvectors (columns, sign-normalized), and
/// cumulative variance-explained fractions of a repaired correlation matrix.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: DMatrix<f64>,
    pub cum_var: Vec<f64>,
}

impl EigenSystem {
    pub fn t(&self) -> usize {
        self.eigenvalues.len()
    }
}

/// Full symmetric eigendecomposition of a PSD-repaired correlation matrix.
///
/// Sign convention: each eigenvector's largest-magnitude entry is positive,
/// ties broken by lowest index, so repeated runs are bitwise identical.
pub fn eigendecompose(r: &TraitCorrelation) -> Result<EigenSystem> {
    let (mut values, mut vectors) = sym_eigen_desc(&r.r)?;
    for v in values.iter_mut() {
        *v = v.max(PSD_FLOOR);
    }
    for mut col in vectors.column_iter_mut() {
        let mut best = 0usize;
        let mut best_abs = f64::NEG_INFINITY;
        for (i, &x) in col.iter().enumerate() {
            if x.abs() > best_abs {
                best_abs = x.abs();
                best = i;
            }
        }
        if col[best] < 0.0 {
            col.neg_mut();
        }
    }
    let total: f64 = values.iter().sum();
    let mut cum_var = Vec::with_capacity(values.len());
    let mut running = 0.0;
    for &v in &values {
        running += v;
        cum_var.push(running / total);
    }
    *cum_var.last_mut().expect("T >= 1") = 1.0;
    Ok(EigenSystem { eigenvalues: values, eigenvectors: vectors, cum_var })
}

/// The five eigen-count levels and their Cauchy weights.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSet {
    /// `[2, q1, q2, q3, T]`, non-decreasing.
    pub levels: [usize; 5],
    /// `[v0, v1, v2, v3, 100]` in percent.
    pub variance_targets: [f64; 5],
    /// Deduplicated `(E, weight)` pairs; weights are multiples of 1/5 summing to 1.
    pub effective_levels: Vec<(usize, f64)>,
}

/// Pick the eigen-count levels from the cumulative variance-explained curve.
///
/// `v0` is the percentage explained by the first two eigenvalues; `v1..v3`
/// interpolate evenly between `v0` and 100. Each `q_i` is the smallest
/// count whose cumulative variance reaches `v_i` (ties count as reached).
/// Duplicate counts are merged, accumulating weight in multiples of 1/5.
pub fn select_levels(es: &EigenSystem) -> Result<LevelSet> {
    let t = es.t();
    if t < 2 {
        return Err(Error::DimensionMismatch {
            reason: format!("need at least 2 traits, got {t}"),
        });
    }
    let v0 = 100.0 * es.cum_var[1];
    let mut targets = [v0, 0.0, 0.0, 0.0, 100.0];
    for i in 1..=3 {
        targets[i] = v0 + i as f64 * (100.0 - v0) / 4.0;
    }
    // "Reaches the target for the first time", counting exact ties as
    // reached; the 1e-9 slack keeps knife-edge ties (flat spectra land
    // cumulative variance exactly on a target) from flipping on rounding.
    let q = |target: f64| -> usize {
        for m in 1..=t {
            if 100.0 * es.cum_var[m - 1] >= target - 1e-9 {
                return m;
            }
        }
        t
    };
    let levels = [2, q(targets[1]), q(targets[2]), q(targets[3]), t];
    debug_assert!(levels.windows(2).all(|w| w[0] <= w[1]), "levels {levels:?}");
    let mut effective: Vec<(usize, f64)> = Vec::with_capacity(5);
    for &e in &levels {
        match effective.last_mut() {
            Some((prev, w)) if *prev == e => *w += 0.2,
            _ => effective.push((e, 0.2)),
        }
    }
    Ok(LevelSet { levels, variance_targets: targets, effective_levels: effective })
}

/// One decorrelating transform `W_E = Q_E diag(1/sqrt(lambda_E))` per
/// effective level, in the same order as `LevelSet::effective_levels`.
#[derive(Debug, Clone)]
pub struct DecorrelationTransforms {
    pub per_level: Vec<(usize, DMatrix<f64>)>,
}

impl DecorrelationTransforms {
    pub fn t(&self) -> usize {
        self.per_level.first().map(|(_, w)| w.nrows()).unwrap_or(0)
    }
}

/// Build the transforms once per correlation matrix; reused for all SNPs.
pub fn build_transforms(es: &EigenSystem, ls: &LevelSet) -> DecorrelationTransforms {
    let t = es.t();
    let per_level = ls
        .effective_levels
        .iter()
        .map(|&(e, _)| {
            assert!(e >= 1 && e <= t, "level {e} out of range for T={t}");
            let mut w = DMatrix::zeros(t, e);
            for j in 0..e {
                let scale = 1.0 / es.eigenvalues[j].sqrt();
                for i in 0..t {
                    w[(i, j)] = es.eigenvectors[(i, j)] * scale;
                }
            }
            (e, w)
        })
        .collect();
    DecorrelationTransforms { per_level }
}
