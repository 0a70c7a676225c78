//! Monte-Carlo harness: scenario generation, type-1-error ratio tables,
//! power curves over effect-size grids, and partial ROC curves.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::baselines::Method;
use crate::block::ZScoreBlock;
use crate::corr::{regularize_psd, CorrAccumulator, TraitCorrelation, PSD_FLOOR};
use crate::eigen::{eigendecompose, sym_eigen_desc, EigenSystem};
use crate::engine::AnalysisEngine;
use crate::error::{Error, Result};
use crate::stats::proportion_se;

/// Fixed simulation block size; part of the determinism contract, since
/// RNG streams are split per block.
pub const SIM_BLOCK_ROWS: usize = 4096;

/// Stream offset separating alternative-model draws from null draws.
const ALT_STREAM_OFFSET: u64 = 1 << 32;

/// Exact compound-symmetry correlation matrix.
pub fn cs_matrix(t: usize, rho: f64) -> Result<TraitCorrelation> {
    if t < 2 {
        return Err(Error::InvalidConfig { reason: format!("CS needs T >= 2, got {t}") });
    }
    let bound = -1.0 / (t as f64 - 1.0);
    if !(rho > bound && rho < 1.0 && rho > -1.0) {
        return Err(Error::InvalidRho { kind: "CS".into(), rho, t });
    }
    let mut m = DMatrix::from_element(t, t, rho);
    for i in 0..t {
        m[(i, i)] = 1.0;
    }
    regularize_psd(
        TraitCorrelation::from_matrix(m, crate::corr::CorrelationSource::External)?,
        PSD_FLOOR,
    )
}

/// Exact first-order autoregressive correlation matrix.
pub fn ar_matrix(t: usize, rho: f64) -> Result<TraitCorrelation> {
    if t < 2 {
        return Err(Error::InvalidConfig { reason: format!("AR needs T >= 2, got {t}") });
    }
    if !(rho.abs() < 1.0) {
        return Err(Error::InvalidRho { kind: "AR".into(), rho, t });
    }
    let mut m = DMatrix::zeros(t, t);
    for i in 0..t {
        for j in 0..t {
            m[(i, j)] = rho.powi((i as i32 - j as i32).abs());
        }
    }
    regularize_psd(
        TraitCorrelation::from_matrix(m, crate::corr::CorrelationSource::External)?,
        PSD_FLOOR,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorrKind {
    Cs,
    Ar,
    FromFile,
}

#[derive(Debug, Clone)]
pub struct CorrelationSpec {
    pub kind: CorrKind,
    pub rho: f64,
    pub t: usize,
    pub path: Option<std::path::PathBuf>,
}

impl CorrelationSpec {
    pub fn cs(t: usize, rho: f64) -> Self {
        Self { kind: CorrKind::Cs, rho, t, path: None }
    }

    pub fn ar(t: usize, rho: f64) -> Self {
        Self { kind: CorrKind::Ar, rho, t, path: None }
    }

    pub fn from_file(path: std::path::PathBuf) -> Self {
        Self { kind: CorrKind::FromFile, rho: 0.0, t: 0, path: Some(path) }
    }
}

/// Materialize the scenario's correlation matrix, PSD-repaired.
pub fn make_correlation(spec: &CorrelationSpec) -> Result<TraitCorrelation> {
    match spec.kind {
        CorrKind::Cs => cs_matrix(spec.t, spec.rho),
        CorrKind::Ar => ar_matrix(spec.t, spec.rho),
        CorrKind::FromFile => {
            let path = spec.path.as_ref().ok_or_else(|| Error::InvalidConfig {
                reason: "corr_kind=file requires corr_path".into(),
            })?;
            let parsed = crate::io::parse_corr_file(path)?;
            Ok(parsed.corr)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AssociationModel {
    /// Mean built from the top-J eigenvectors: `mu = sum_{j<=J} c lambda_j u_j`.
    M1 { top_j: usize },
    /// Mean with fixed nonzero components (1-based trait indices).
    M2 { indices: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssociationSpec {
    pub model: AssociationModel,
    pub effect_grid: Vec<f64>,
}

/// `count` evenly spaced effects from `min` to `max`, inclusive.
pub fn effect_grid(min: f64, max: f64, count: usize) -> Vec<f64> {
    assert!(count >= 1);
    if count == 1 {
        return vec![min];
    }
    (0..count)
        .map(|i| min + i as f64 * (max - min) / (count as f64 - 1.0))
        .collect()
}

/// Mean vector for one effect size under the association model.
pub fn make_mu(spec: &AssociationSpec, es: &EigenSystem, effect: f64) -> Result<DVector<f64>> {
    let t = es.t();
    let mut mu = DVector::zeros(t);
    match &spec.model {
        AssociationModel::M1 { top_j } => {
            if *top_j > t {
                return Err(Error::IndexOutOfRange { index: *top_j, t });
            }
            for j in 0..*top_j {
                let scale = effect * es.eigenvalues[j];
                for i in 0..t {
                    mu[i] += scale * es.eigenvectors[(i, j)];
                }
            }
        }
        AssociationModel::M2 { indices } => {
            for &idx in indices {
                if idx < 1 || idx > t {
                    return Err(Error::IndexOutOfRange { index: idx, t });
                }
                mu[idx - 1] = effect;
            }
        }
    }
    Ok(mu)
}

/// Draws rows of `N(mu, R)` through the symmetric eigen-based square root.
pub struct GaussianSampler {
    mu: DVector<f64>,
    sqrt: DMatrix<f64>,
}

impl GaussianSampler {
    pub fn new(mu: DVector<f64>, r: &TraitCorrelation) -> Result<Self> {
        let t = r.t();
        if mu.len() != t {
            return Err(Error::DimensionMismatch {
                reason: format!("mu has {} entries, R is {t}x{t}", mu.len()),
            });
        }
        let (vals, vecs) = sym_eigen_desc(&r.r)?;
        let roots = DVector::from_iterator(t, vals.iter().map(|&v| v.max(0.0).sqrt()));
        let sqrt = &vecs * DMatrix::from_diagonal(&roots) * vecs.transpose();
        Ok(Self { mu, sqrt })
    }

    pub fn t(&self) -> usize {
        self.mu.len()
    }

    /// Sample `rows` draws; row-by-row with explicit loops so the result
    /// is bitwise reproducible for a given RNG state.
    pub fn sample_matrix(&self, rng: &mut ChaCha8Rng, rows: usize) -> DMatrix<f64> {
        let t = self.t();
        let mut z = DMatrix::zeros(rows, t);
        let mut g = vec![0.0f64; t];
        for i in 0..rows {
            for slot in g.iter_mut() {
                *slot = StandardNormal.sample(rng);
            }
            for tt in 0..t {
                let mut acc = self.mu[tt];
                let col = self.sqrt.column(tt);
                for (s, &gs) in g.iter().enumerate() {
                    acc += col[s] * gs;
                }
                z[(i, tt)] = acc;
            }
        }
        z
    }
}

/// `n` iid draws of `N(mu, R)` as a z-score block; deterministic in `seed`.
pub fn simulate_zblock(
    mu: &DVector<f64>,
    r: &TraitCorrelation,
    n: usize,
    seed: u64,
) -> Result<ZScoreBlock> {
    let sampler = GaussianSampler::new(mu.clone(), r)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = sampler.sample_matrix(&mut rng, n);
    let ids = (0..n).map(|i| format!("snp{:08}", i + 1)).collect();
    let names = default_trait_names(r.t());
    ZScoreBlock::new(ids, z, names)
}

pub fn default_trait_names(t: usize) -> Vec<String> {
    (0..t).map(|j| format!("t{}", j + 1)).collect()
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub correlation: CorrelationSpec,
    pub association: Option<AssociationSpec>,
    pub n_replicates: usize,
    pub alpha_levels: Vec<f64>,
    /// Rejection threshold for power and ROC experiments.
    pub power_alpha: f64,
    pub seed: u64,
    pub methods: Vec<Method>,
    pub reestimate_r: bool,
}

impl ExperimentConfig {
    fn validate_common(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::InvalidConfig { reason: "no methods selected".into() });
        }
        if self.n_replicates == 0 {
            return Err(Error::InvalidConfig { reason: "n_replicates must be positive".into() });
        }
        Ok(())
    }

    fn validate_for_ratios(&self) -> Result<()> {
        self.validate_common()?;
        if self.n_replicates < 1000 {
            return Err(Error::InvalidConfig {
                reason: format!(
                    "type-1 ratios need n_replicates >= 1000, got {}",
                    self.n_replicates
                ),
            });
        }
        let floor = 10.0 / self.n_replicates as f64;
        if let Some(&bad) = self.alpha_levels.iter().find(|&&a| a < floor || a > 1.0) {
            return Err(Error::InvalidConfig {
                reason: format!(
                    "alpha {bad} unreportable at {} replicates (need alpha >= {floor} and <= 1)",
                    self.n_replicates
                ),
            });
        }
        Ok(())
    }
}

/// Simulate `n_replicates` rows of `N(mu, R_true)` and score them with
/// every configured method, re-estimating the analysis correlation from
/// the simulated data when asked. Returns per-method p-value vectors in
/// replicate order; identical for any worker count because RNG streams
/// split per block and partials merge in block order.
fn simulate_and_score(
    cfg: &ExperimentConfig,
    r_true: &TraitCorrelation,
    mu: &DVector<f64>,
    stream_offset: u64,
) -> Result<Vec<Vec<f64>>> {
    let t = r_true.t();
    let n = cfg.n_replicates;
    let sampler = GaussianSampler::new(mu.clone(), r_true)?;
    let n_blocks = n.div_ceil(SIM_BLOCK_ROWS);
    let gen_block = |b: usize| -> DMatrix<f64> {
        let start = b * SIM_BLOCK_ROWS;
        let rows = SIM_BLOCK_ROWS.min(n - start);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(stream_offset + b as u64);
        sampler.sample_matrix(&mut rng, rows)
    };

    let analysis_corr = if cfg.reestimate_r {
        let partials: Vec<CorrAccumulator> = (0..n_blocks)
            .into_par_iter()
            .map(|b| {
                let z = gen_block(b);
                let mut acc = CorrAccumulator::new(t);
                acc.push(&z);
                acc
            })
            .collect();
        let mut acc = CorrAccumulator::new(t);
        for p in &partials {
            acc.merge(p);
        }
        acc.finish(&default_trait_names(t))?
    } else {
        r_true.clone()
    };
    let engine = AnalysisEngine::from_correlation(analysis_corr)?;
    let methods = &cfg.methods;

    let per_block: Vec<Vec<Vec<f64>>> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let z = gen_block(b);
            let rows = z.nrows();
            let mut cols: Vec<Vec<f64>> = vec![Vec::with_capacity(rows); methods.len()];
            let mut row = vec![0.0f64; t];
            let mut out = Vec::with_capacity(methods.len());
            for i in 0..rows {
                for (tt, slot) in row.iter_mut().enumerate() {
                    *slot = z[(i, tt)];
                }
                out.clear();
                engine.score_row_into(&row, methods, &mut out);
                for (m, &p) in out.iter().enumerate() {
                    cols[m].push(p);
                }
            }
            cols
        })
        .collect();

    let mut result: Vec<Vec<f64>> = vec![Vec::with_capacity(n); methods.len()];
    for cols in per_block {
        for (m, col) in cols.into_iter().enumerate() {
            result[m].extend(col);
        }
    }
    Ok(result)
}

/// Null-model p-values per configured method, in replicate order.
pub fn null_pvalues(cfg: &ExperimentConfig) -> Result<Vec<Vec<f64>>> {
    cfg.validate_common()?;
    let r_true = make_correlation(&cfg.correlation)?;
    let mu = DVector::zeros(r_true.t());
    simulate_and_score(cfg, &r_true, &mu, 0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatioCell {
    pub rejections: u64,
    pub ratio: f64,
    /// Binomial standard error of the ratio estimate.
    pub se_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatioTable {
    pub methods: Vec<Method>,
    pub alphas: Vec<f64>,
    pub n_replicates: usize,
    pub seed: u64,
    /// `cells[method_index][alpha_index]`.
    pub cells: Vec<Vec<RatioCell>>,
}

/// Empirical type-1-error ratios (rejection rate over alpha) per method.
pub fn type1_experiment(cfg: &ExperimentConfig) -> Result<RatioTable> {
    cfg.validate_for_ratios()?;
    if cfg.association.is_some() {
        return Err(Error::InvalidConfig {
            reason: "type-1 experiments must run with a null association (no model)".into(),
        });
    }
    let pvalues = null_pvalues(cfg)?;
    let n = cfg.n_replicates;
    let cells = pvalues
        .iter()
        .map(|ps| {
            cfg.alpha_levels
                .iter()
                .map(|&alpha| {
                    let rejections = ps.iter().filter(|&&p| p <= alpha).count() as u64;
                    let ratio = rejections as f64 / n as f64 / alpha;
                    let se_ratio = proportion_se(alpha, n) / alpha;
                    RatioCell { rejections, ratio, se_ratio }
                })
                .collect()
        })
        .collect();
    Ok(RatioTable {
        methods: cfg.methods.clone(),
        alphas: cfg.alpha_levels.clone(),
        n_replicates: n,
        seed: cfg.seed,
        cells,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerTable {
    pub methods: Vec<Method>,
    pub effects: Vec<f64>,
    pub alpha: f64,
    pub n_replicates: usize,
    pub seed: u64,
    /// `power[method_index][effect_index]`.
    pub power: Vec<Vec<f64>>,
}

/// Rejection rate at `power_alpha` per method and effect-grid point.
///
/// Effects share RNG streams (common random numbers), which sharpens
/// power differences across the grid without biasing the estimates.
pub fn power_experiment(cfg: &ExperimentConfig) -> Result<PowerTable> {
    cfg.validate_common()?;
    let assoc = cfg.association.as_ref().ok_or_else(|| Error::InvalidConfig {
        reason: "power experiments need an association model".into(),
    })?;
    if assoc.effect_grid.is_empty() {
        return Err(Error::InvalidConfig { reason: "empty effect grid".into() });
    }
    let r_true = make_correlation(&cfg.correlation)?;
    let es_true = eigendecompose(&r_true)?;
    let mut power = vec![Vec::with_capacity(assoc.effect_grid.len()); cfg.methods.len()];
    for &effect in &assoc.effect_grid {
        let mu = make_mu(assoc, &es_true, effect)?;
        let pvalues = simulate_and_score(cfg, &r_true, &mu, ALT_STREAM_OFFSET)?;
        for (m, ps) in pvalues.iter().enumerate() {
            let hits = ps.iter().filter(|&&p| p <= cfg.power_alpha).count();
            power[m].push(hits as f64 / cfg.n_replicates as f64);
        }
    }
    Ok(PowerTable {
        methods: cfg.methods.clone(),
        effects: assoc.effect_grid.clone(),
        alpha: cfg.power_alpha,
        n_replicates: cfg.n_replicates,
        seed: cfg.seed,
        power,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurves {
    pub methods: Vec<Method>,
    pub fpr_max: f64,
    pub effect: f64,
    /// `curves[method_index]` is a list of (FPR, TPR) points.
    pub curves: Vec<Vec<(f64, f64)>>,
}

/// Step-function partial ROC from paired null/alternative runs.
///
/// Thresholds are the observed null p-values up to empirical FPR
/// `fpr_max`, so no interpolation assumptions are made.
pub fn partial_roc(cfg: &ExperimentConfig, fpr_max: f64) -> Result<RocCurves> {
    cfg.validate_common()?;
    let assoc = cfg.association.as_ref().ok_or_else(|| Error::InvalidConfig {
        reason: "ROC experiments need an association model".into(),
    })?;
    if assoc.effect_grid.len() != 1 {
        return Err(Error::InvalidConfig {
            reason: format!(
                "ROC experiments need a single effect size, got a grid of {}",
                assoc.effect_grid.len()
            ),
        });
    }
    let effect = assoc.effect_grid[0];
    let n = cfg.n_replicates;
    let k_max = (fpr_max * n as f64).floor() as usize;
    if k_max < 1 {
        return Err(Error::InsufficientNullReplicates { fpr_max, n_null: n });
    }

    let r_true = make_correlation(&cfg.correlation)?;
    let es_true = eigendecompose(&r_true)?;
    let mu = make_mu(assoc, &es_true, effect)?;
    let null = simulate_and_score(cfg, &r_true, &DVector::zeros(r_true.t()), 0)?;
    let alt = simulate_and_score(cfg, &r_true, &mu, ALT_STREAM_OFFSET)?;

    let curves = null
        .into_iter()
        .zip(alt)
        .map(|(mut null_p, mut alt_p)| {
            null_p.sort_by(|a, b| a.partial_cmp(b).unwrap());
            alt_p.sort_by(|a, b| a.partial_cmp(b).unwrap());
            (0..k_max)
                .map(|k| {
                    let thr = null_p[k];
                    let fpr = null_p.partition_point(|&p| p <= thr) as f64 / n as f64;
                    let tpr = alt_p.partition_point(|&p| p <= thr) as f64 / n as f64;
                    (fpr, tpr)
                })
                .collect()
        })
        .collect();
    Ok(RocCurves { methods: cfg.methods.clone(), fpr_max, effect, curves })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn base_cfg(t: usize, n: usize) -> ExperimentConfig {
        ExperimentConfig {
            correlation: CorrelationSpec::cs(t, 0.3),
            association: None,
            n_replicates: n,
            alpha_levels: vec![0.05, 0.01],
            power_alpha: 0.05,
            seed: 42,
            methods: vec![Method::Mtafs, Method::Sum, Method::Cauchy],
            reestimate_r: true,
        }
    }

    #[test]
    fn correlation_builders() {
        let cs = cs_matrix(3, 0.3).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.3 };
                assert_eq!(cs.r[(i, j)], expect);
            }
        }
        let ar = ar_matrix(3, 0.7).unwrap();
        assert_abs_diff_eq!(ar.r[(0, 0)], 1.0, epsilon = 0.0);
        assert_abs_diff_eq!(ar.r[(0, 1)], 0.7, epsilon = 1e-15);
        assert_abs_diff_eq!(ar.r[(0, 2)], 0.49, epsilon = 1e-15);

        // CS(-0.6) at T=3 violates the PD bound of -0.5.
        assert!(matches!(cs_matrix(3, -0.6), Err(Error::InvalidRho { .. })));
        assert!(matches!(ar_matrix(3, 1.0), Err(Error::InvalidRho { .. })));
    }

    #[test]
    fn mu_construction() {
        let r = cs_matrix(50, 0.3).unwrap();
        let es = eigendecompose(&r).unwrap();

        let m2 = AssociationSpec {
            model: AssociationModel::M2 { indices: vec![1, 2] },
            effect_grid: vec![4.0],
        };
        let mu = make_mu(&m2, &es, 4.0).unwrap();
        assert_eq!(mu[0], 4.0);
        assert_eq!(mu[1], 4.0);
        assert!(mu.iter().skip(2).all(|&v| v == 0.0));
        assert_eq!(make_mu(&m2, &es, 0.0).unwrap().abs().max(), 0.0);

        let m1 = AssociationSpec {
            model: AssociationModel::M1 { top_j: 2 },
            effect_grid: vec![1.0],
        };
        let mu = make_mu(&m1, &es, 1.0).unwrap();
        // mu must lie in the span of the top-2 eigenvectors.
        let q2 = es.eigenvectors.columns(0, 2);
        let proj = &q2 * (q2.transpose() * &mu);
        assert!((&mu - proj).abs().max() < 1e-10);

        let bad = AssociationSpec {
            model: AssociationModel::M2 { indices: vec![51] },
            effect_grid: vec![1.0],
        };
        assert!(matches!(make_mu(&bad, &es, 1.0), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn zblock_simulation_moments_and_determinism() {
        let t = 4;
        let r = cs_matrix(t, 0.5).unwrap();
        let mu = DVector::from_element(t, 0.8);
        let n = 100_000;
        let a = simulate_zblock(&mu, &r, n, 9).unwrap();
        let b = simulate_zblock(&mu, &r, n, 9).unwrap();
        assert_eq!(a.z, b.z);

        for j in 0..t {
            let mean = a.z.column(j).sum() / n as f64;
            assert!((mean - 0.8).abs() < 3.0 / (n as f64).sqrt() + 1e-12, "mean {mean}");
        }
        // Sample covariance close to R.
        let acc = {
            let mut acc = CorrAccumulator::new(t);
            acc.push(&a.z);
            acc
        };
        let est = acc.finish(&default_trait_names(t)).unwrap();
        for i in 0..t {
            for j in 0..t {
                assert!(
                    (est.r[(i, j)] - r.r[(i, j)]).abs() < 0.02,
                    "corr[{i},{j}] = {}",
                    est.r[(i, j)]
                );
            }
        }
    }

    #[test]
    fn type1_degenerate_alpha_one() {
        let mut cfg = base_cfg(5, 1000);
        cfg.alpha_levels = vec![1.0];
        let table = type1_experiment(&cfg).unwrap();
        for row in &table.cells {
            assert_eq!(row[0].ratio, 1.0);
            assert_eq!(row[0].rejections, 1000);
        }
    }

    #[test]
    fn type1_validation() {
        let mut cfg = base_cfg(5, 500);
        assert!(matches!(type1_experiment(&cfg), Err(Error::InvalidConfig { .. })));
        cfg.n_replicates = 1000;
        cfg.alpha_levels = vec![1e-4];
        assert!(matches!(type1_experiment(&cfg), Err(Error::InvalidConfig { .. })));
    }

    #[test]
    fn type1_is_deterministic() {
        let cfg = base_cfg(4, 2000);
        let a = type1_experiment(&cfg).unwrap();
        let b = type1_experiment(&cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn seed_independence_of_ratios() {
        let mut ratios = Vec::new();
        for seed in [1u64, 2, 3, 4, 5] {
            let mut cfg = base_cfg(4, 20_000);
            cfg.methods = vec![Method::MetaManova];
            cfg.alpha_levels = vec![0.05];
            cfg.seed = seed;
            let table = type1_experiment(&cfg).unwrap();
            ratios.push(table.cells[0][0].ratio);
        }
        let se = proportion_se(0.05, 20_000) / 0.05;
        let spread = ratios.iter().cloned().fold(f64::MIN, f64::max)
            - ratios.iter().cloned().fold(f64::MAX, f64::min);
        assert!(spread <= 6.0 * se, "ratios {ratios:?} spread {spread}");
    }

    #[test]
    fn power_null_effect_matches_alpha() {
        let mut cfg = base_cfg(4, 4000);
        cfg.association = Some(AssociationSpec {
            model: AssociationModel::M2 { indices: vec![1] },
            effect_grid: vec![0.0, 3.0],
        });
        cfg.power_alpha = 0.05;
        cfg.methods = vec![Method::Sum, Method::MetaManova];
        let table = power_experiment(&cfg).unwrap();
        for row in &table.power {
            // At effect 0 the rejection rate is alpha up to MC noise.
            assert!(
                (row[0] - 0.05).abs() < 4.0 * proportion_se(0.05, 4000),
                "null power {}",
                row[0]
            );
            // At a strong effect the power is clearly above the null rate.
            assert!(row[1] > row[0] + 0.2, "power row {row:?}");
        }
    }

    #[test]
    fn roc_shapes_and_errors() {
        let mut cfg = base_cfg(4, 2000);
        cfg.association = Some(AssociationSpec {
            model: AssociationModel::M2 { indices: vec![1, 2] },
            effect_grid: vec![2.5],
        });
        cfg.methods = vec![Method::MetaManova, Method::Sum];
        let roc = partial_roc(&cfg, 0.05).unwrap();
        assert_eq!(roc.curves.len(), 2);
        for curve in &roc.curves {
            assert_eq!(curve.len(), 100);
            for w in curve.windows(2) {
                assert!(w[0].0 <= w[1].0);
                assert!(w[0].1 <= w[1].1);
            }
            // Strong signal: detection beats false-positive rate everywhere.
            let (fpr, tpr) = curve[curve.len() - 1];
            assert!(tpr > fpr);
        }
        assert!(matches!(
            partial_roc(&cfg, 1e-5),
            Err(Error::InsufficientNullReplicates { .. })
        ));
    }
}
