//! Python bindings: the analysis engine plus the scalar building blocks.

use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use mtafs_core::baselines::Method;
use mtafs_core::corr::{CorrAccumulator, CorrelationSource, TraitCorrelation};
use mtafs_core::engine::AnalysisEngine;
use mtafs_core::error::Error;
use mtafs_core::quadform::{tail_auto, QuadFormSpec};
use mtafs_core::sim::default_trait_names;

fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::IntegrationFailure { .. }
        | Error::ConvergenceFailure { .. }
        | Error::RootNotBracketed { .. } => PyRuntimeError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn matrix_from_rows(rows: Vec<Vec<f64>>, what: &str) -> PyResult<DMatrix<f64>> {
    if rows.is_empty() {
        return Err(PyValueError::new_err(format!("{what}: empty matrix")));
    }
    let ncols = rows[0].len();
    if ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(PyValueError::new_err(format!("{what}: ragged or empty rows")));
    }
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Ok(DMatrix::from_row_slice(flat.len() / ncols, ncols, &flat))
}

fn parse_methods(methods: Option<Vec<String>>) -> PyResult<Vec<Method>> {
    match methods {
        None => Ok(Method::ALL.to_vec()),
        Some(names) => names
            .iter()
            .map(|n| Method::parse(n).map_err(to_py_err))
            .collect(),
    }
}

/// Per-SNP multi-trait tests bound to one trait correlation matrix.
#[pyclass]
struct MtafsModel {
    engine: AnalysisEngine,
}

#[pymethods]
impl MtafsModel {
    /// Build from a T x T correlation matrix (PSD repair included).
    #[new]
    fn new(correlation: Vec<Vec<f64>>) -> PyResult<Self> {
        let m = matrix_from_rows(correlation, "correlation")?;
        let raw =
            TraitCorrelation::from_matrix(m, CorrelationSource::External).map_err(to_py_err)?;
        let engine = AnalysisEngine::from_correlation(raw).map_err(to_py_err)?;
        Ok(Self { engine })
    }

    /// Estimate the correlation from z-score rows, then build.
    #[staticmethod]
    fn from_zscores(z: Vec<Vec<f64>>) -> PyResult<Self> {
        let m = matrix_from_rows(z, "z")?;
        let mut acc = CorrAccumulator::new(m.ncols());
        acc.push(&m);
        let est = acc.finish(&default_trait_names(m.ncols())).map_err(to_py_err)?;
        let engine = AnalysisEngine::from_correlation(est).map_err(to_py_err)?;
        Ok(Self { engine })
    }

    /// Number of traits.
    #[getter]
    fn n_traits(&self) -> usize {
        self.engine.t()
    }

    /// The five eigen-count levels `[2, q1, q2, q3, T]`.
    #[getter]
    fn levels(&self) -> [usize; 5] {
        self.engine.levels.levels
    }

    /// Variance-explained targets in percent `[v0, v1, v2, v3, 100]`.
    #[getter]
    fn variance_targets(&self) -> [f64; 5] {
        self.engine.levels.variance_targets
    }

    /// Deduplicated `(E, weight)` pairs used by the omnibus combination.
    #[getter]
    fn effective_levels(&self) -> Vec<(usize, f64)> {
        self.engine.levels.effective_levels.clone()
    }

    /// Eigenvalues of the repaired correlation matrix, descending.
    #[getter]
    fn eigenvalues(&self) -> Vec<f64> {
        self.engine.eigensystem.eigenvalues.clone()
    }

    /// Omnibus p-value for every z-score row.
    fn mtafs_pvalues(&self, z: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        let m = matrix_from_rows(z, "z")?;
        self.check_width(m.ncols())?;
        let mut row = vec![0.0f64; m.ncols()];
        let mut out = Vec::with_capacity(m.nrows());
        for i in 0..m.nrows() {
            for (t, slot) in row.iter_mut().enumerate() {
                *slot = m[(i, t)];
            }
            out.push(self.engine.mtafs.score_row(&row, false).0);
        }
        Ok(out)
    }

    /// Per-method p-value columns; methods default to all six.
    #[pyo3(signature = (z, methods=None))]
    fn test_block(
        &self,
        z: Vec<Vec<f64>>,
        methods: Option<Vec<String>>,
    ) -> PyResult<std::collections::BTreeMap<String, Vec<f64>>> {
        let methods = parse_methods(methods)?;
        let m = matrix_from_rows(z, "z")?;
        self.check_width(m.ncols())?;
        let mut columns: Vec<Vec<f64>> = vec![Vec::with_capacity(m.nrows()); methods.len()];
        let mut row = vec![0.0f64; m.ncols()];
        let mut scratch = Vec::with_capacity(methods.len());
        for i in 0..m.nrows() {
            for (t, slot) in row.iter_mut().enumerate() {
                *slot = m[(i, t)];
            }
            scratch.clear();
            self.engine.score_row_into(&row, &methods, &mut scratch);
            for (c, &p) in scratch.iter().enumerate() {
                columns[c].push(p);
            }
        }
        Ok(methods
            .iter()
            .zip(columns)
            .map(|(m, col)| (m.name().to_string(), col))
            .collect())
    }

    /// Adaptive-Fisher p-value per effective level for one z-score row.
    fn level_pvalues(&self, z: Vec<f64>) -> PyResult<Vec<(usize, f64)>> {
        self.check_width(z.len())?;
        let (_, per_level, _) = self.engine.mtafs.score_row(&z, false);
        Ok(per_level.into_iter().map(|l| (l.level_e, l.p_af)).collect())
    }
}

impl MtafsModel {
    fn check_width(&self, got: usize) -> PyResult<()> {
        if got != self.engine.t() {
            Err(PyValueError::new_err(format!(
                "expected {} traits, got {got}",
                self.engine.t()
            )))
        } else {
            Ok(())
        }
    }
}

/// Two-sided standard-normal p-values, clamped to [1e-300, 1].
#[pyfunction]
fn two_sided_pvalues(u: Vec<f64>) -> Vec<f64> {
    mtafs_core::two_sided_pvalues(&u)
}

/// Weighted Cauchy combination; returns (statistic, p-value).
/// Weights default to equal.
#[pyfunction]
#[pyo3(signature = (pvalues, weights=None))]
fn cauchy_combine(pvalues: Vec<f64>, weights: Option<Vec<f64>>) -> PyResult<(f64, f64)> {
    let w = weights.unwrap_or_else(|| vec![1.0 / pvalues.len() as f64; pvalues.len()]);
    mtafs_core::cauchy_combine(&pvalues, &w).map_err(to_py_err)
}

/// Adaptive-Fisher p-value of a vector of independent p-values.
#[pyfunction]
fn af_pvalue(pvalues: Vec<f64>) -> PyResult<f64> {
    Ok(mtafs_core::af_statistic(&pvalues).map_err(to_py_err)?.p_af)
}

/// Tail probability of `sum_j w_j chi2_{df_j}` past `x`; returns
/// (p, method) with method "davies" or "saddlepoint".
#[pyfunction]
fn weighted_chi2_tail(weights: Vec<f64>, dfs: Vec<u32>, x: f64) -> PyResult<(f64, String)> {
    if weights.len() != dfs.len() {
        return Err(PyValueError::new_err("weights and dfs lengths differ"));
    }
    let spec =
        QuadFormSpec::new(weights.into_iter().zip(dfs)).map_err(to_py_err)?;
    let (p, method) = tail_auto(&spec, x);
    let name = match method {
        mtafs_core::quadform::TailMethod::Davies => "davies",
        mtafs_core::quadform::TailMethod::Saddlepoint => "saddlepoint",
    };
    Ok((p, name.to_string()))
}

/// Null law of the sum of the k largest of E iid Exp(1) draws, as
/// (weight, df) chi-square components.
#[pyfunction]
fn topk_order_weights(e: usize, k: usize) -> PyResult<Vec<(f64, u32)>> {
    let spec = mtafs_core::topk_order_weights(e, k).map_err(to_py_err)?;
    Ok(spec.components().collect())
}

/// Pearson sample correlation across rows.
#[pyfunction]
fn estimate_correlation(z: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    let m = matrix_from_rows(z, "z")?;
    let t = m.ncols();
    let mut acc = CorrAccumulator::new(t);
    acc.push(&m);
    let est = acc.finish(&default_trait_names(t)).map_err(to_py_err)?;
    Ok((0..t).map(|i| (0..t).map(|j| est.r[(i, j)]).collect()).collect())
}

/// Draw `n` rows of `N(mu, R)`; deterministic in `seed`.
#[pyfunction]
fn simulate_zscores(
    mu: Vec<f64>,
    correlation: Vec<Vec<f64>>,
    n: usize,
    seed: u64,
) -> PyResult<Vec<Vec<f64>>> {
    let m = matrix_from_rows(correlation, "correlation")?;
    let raw = TraitCorrelation::from_matrix(m, CorrelationSource::External).map_err(to_py_err)?;
    let r = mtafs_core::regularize_psd(raw, mtafs_core::PSD_FLOOR).map_err(to_py_err)?;
    let block = mtafs_core::sim::simulate_zblock(&DVector::from_vec(mu), &r, n, seed)
        .map_err(to_py_err)?;
    Ok((0..block.n_snps())
        .map(|i| (0..block.n_traits()).map(|j| block.z[(i, j)]).collect())
        .collect())
}

#[pymodule]
fn mtafs(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<MtafsModel>()?;
    m.add_function(wrap_pyfunction!(two_sided_pvalues, m)?)?;
    m.add_function(wrap_pyfunction!(cauchy_combine, m)?)?;
    m.add_function(wrap_pyfunction!(af_pvalue, m)?)?;
    m.add_function(wrap_pyfunction!(weighted_chi2_tail, m)?)?;
    m.add_function(wrap_pyfunction!(topk_order_weights, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_correlation, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_zscores, m)?)?;
    Ok(())
}
