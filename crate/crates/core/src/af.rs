//! Adaptive-Fisher statistics per variance-explained level and their
//! Cauchy-combined omnibus p-value, vectorized over SNP blocks.

use std::collections::BTreeMap;

use crate::baselines::Method;
use crate::block::ZScoreBlock;
use crate::clamp_pvalue;
use crate::eigen::{DecorrelationTransforms, LevelSet};
use crate::error::{Error, Result};
use crate::quadform::{tail_auto, topk_order_weights, QuadFormSpec, TailMethod};
use crate::stats::normal_two_sided;

/// Outcome for a single variance-explained level.
#[derive(Debug, Clone)]
pub struct LevelResult {
    pub level_e: usize,
    pub p_af: f64,
    /// Tail probabilities of every cumulative sum; kept for diagnostics only.
    pub per_k_pvalues: Option<Vec<f64>>,
}

/// Per-SNP numeric diagnostics.
#[derive(Debug, Clone, Default)]
pub struct Diagnostics {
    /// How many tail evaluations fell back to the saddlepoint route.
    pub saddlepoint_fallbacks: u32,
    /// The level `E` whose adaptive-Fisher p-value was smallest.
    pub dominant_level: usize,
}

/// Per-SNP test outcome.
#[derive(Debug, Clone)]
pub struct TestResult {
    pub snp_id: String,
    pub p_mtafs: f64,
    pub per_level: Vec<LevelResult>,
    pub baseline_pvalues: BTreeMap<Method, f64>,
    pub diagnostics: Diagnostics,
}

/// Elementwise two-sided standard-normal p-values, clamped to `[1e-300, 1]`.
pub fn two_sided_pvalues(u: &[f64]) -> Vec<f64> {
    u.iter().map(|&z| clamp_pvalue(normal_two_sided(z))).collect()
}

fn cauchy_term(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p <= 1.0, "p={p} outside (0,1]");
    if p < 1e-15 {
        // tan((0.5-p)*pi) -> 1/(p*pi); the naive form overflows.
        1.0 / (p * std::f64::consts::PI)
    } else {
        ((0.5 - p) * std::f64::consts::PI).tan()
    }
}

/// Analytic p-value of a Cauchy combination statistic.
///
/// Computed as `atan(1/stat)/pi` on the significant side so no precision
/// is lost to the `0.5 - atan(stat)/pi` cancellation.
pub fn cauchy_pvalue(stat: f64) -> f64 {
    let p = if stat > 0.0 {
        (1.0 / stat).atan() / std::f64::consts::PI
    } else {
        0.5 - stat.atan() / std::f64::consts::PI
    };
    clamp_pvalue(p)
}

/// Weighted Cauchy combination of p-values: the statistic and its p-value.
pub fn cauchy_combine(pvalues: &[f64], weights: &[f64]) -> Result<(f64, f64)> {
    if pvalues.len() != weights.len() {
        return Err(Error::WeightMismatch {
            reason: format!("{} p-values vs {} weights", pvalues.len(), weights.len()),
        });
    }
    if pvalues.is_empty() {
        return Err(Error::EmptyInput);
    }
    let total: f64 = weights.iter().sum();
    if weights.iter().any(|&w| !(w > 0.0)) || (total - 1.0).abs() > 1e-12 {
        return Err(Error::WeightMismatch {
            reason: format!("weights must be positive and sum to 1, got sum {total}"),
        });
    }
    let stat: f64 = pvalues
        .iter()
        .zip(weights.iter())
        .map(|(&p, &w)| w * cauchy_term(p))
        .sum();
    Ok((stat, cauchy_pvalue(stat)))
}

/// Cached per-level machinery: the `(E,k)` mixture specs recur for every
/// SNP, so they are built once per level and reused.
struct LevelTables {
    level_e: usize,
    specs: Vec<QuadFormSpec>,
    equal_weights: Vec<f64>,
}

impl LevelTables {
    fn new(e: usize) -> Result<Self> {
        let specs = (1..=e).map(|k| topk_order_weights(e, k)).collect::<Result<Vec<_>>>()?;
        Ok(Self { level_e: e, specs, equal_weights: vec![1.0 / e as f64; e] })
    }
}

fn af_with_tables(tables: &LevelTables, p: &[f64], keep_per_k: bool) -> (LevelResult, u32) {
    debug_assert_eq!(p.len(), tables.level_e);
    let mut sorted = p.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("p-values are never NaN"));
    let mut fallbacks = 0u32;
    let mut per_k = Vec::with_capacity(sorted.len());
    let mut s = 0.0f64;
    for (k, &pj) in sorted.iter().enumerate() {
        s += -pj.ln();
        let (tail, method) = tail_auto(&tables.specs[k], s);
        if method == TailMethod::Saddlepoint {
            fallbacks += 1;
        }
        per_k.push(tail);
    }
    let (_, p_af) = cauchy_combine(&per_k, &tables.equal_weights)
        .expect("equal weights are valid by construction");
    let result = LevelResult {
        level_e: tables.level_e,
        p_af,
        per_k_pvalues: keep_per_k.then_some(per_k),
    };
    (result, fallbacks)
}

/// Adaptive-Fisher p-value of a vector of independent p-values.
///
/// Sorts ascending, forms cumulative sums of negative log p-values,
/// scores each sum against its weighted chi-square null, and combines the
/// resulting tail probabilities with an equal-weight Cauchy transform.
pub fn af_statistic(p: &[f64]) -> Result<LevelResult> {
    if p.is_empty() {
        return Err(Error::EmptyInput);
    }
    let tables = LevelTables::new(p.len())?;
    Ok(af_with_tables(&tables, p, true).0)
}

/// Shared per-matrix state for scoring SNP blocks. Owns copies of the
/// transform matrices so it can be held alongside the objects it was
/// built from and shared across worker threads.
pub struct MtafsContext {
    levels: Vec<(nalgebra::DMatrix<f64>, LevelTables)>,
    weights: Vec<f64>,
}

impl MtafsContext {
    pub fn new(transforms: &DecorrelationTransforms, ls: &LevelSet) -> Result<Self> {
        if transforms.per_level.len() != ls.effective_levels.len()
            || transforms
                .per_level
                .iter()
                .zip(ls.effective_levels.iter())
                .any(|((te, _), (le, _))| te != le)
        {
            return Err(Error::DimensionMismatch {
                reason: "transforms do not match the level set".into(),
            });
        }
        let levels = transforms
            .per_level
            .iter()
            .map(|(e, w)| Ok((w.clone(), LevelTables::new(*e)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { levels, weights: ls.effective_levels.iter().map(|&(_, w)| w).collect() })
    }

    pub fn t(&self) -> usize {
        self.levels.first().map(|(w, _)| w.nrows()).unwrap_or(0)
    }

    /// Score one SNP given its raw z-score row.
    pub fn score_row(&self, z_row: &[f64], keep_per_k: bool) -> (f64, Vec<LevelResult>, Diagnostics) {
        let mut per_level = Vec::with_capacity(self.levels.len());
        let mut fallbacks = 0u32;
        let mut u = Vec::new();
        for (w, tables) in &self.levels {
            let e = w.ncols();
            u.clear();
            u.resize(e, 0.0);
            for c in 0..e {
                let col = w.column(c);
                let mut acc = 0.0;
                for t in 0..z_row.len() {
                    acc += z_row[t] * col[t];
                }
                u[c] = acc;
            }
            let p = two_sided_pvalues(&u);
            let (level, fb) = af_with_tables(tables, &p, keep_per_k);
            fallbacks += fb;
            per_level.push(level);
        }
        let p_afs: Vec<f64> = per_level.iter().map(|l| l.p_af).collect();
        let (_, p_mtafs) = cauchy_combine(&p_afs, &self.weights)
            .expect("level weights are valid by construction");
        let dominant = per_level
            .iter()
            .min_by(|a, b| a.p_af.partial_cmp(&b.p_af).unwrap())
            .map(|l| l.level_e)
            .unwrap_or(0);
        (
            p_mtafs,
            per_level,
            Diagnostics { saddlepoint_fallbacks: fallbacks, dominant_level: dominant },
        )
    }
}

/// Score every SNP in a block; output order matches input order.
///
/// One decorrelating product per level feeds per-SNP adaptive-Fisher
/// statistics; the per-level p-values are combined with the level set's
/// effective weights.
pub fn mtafs_block(
    block: &ZScoreBlock,
    transforms: &DecorrelationTransforms,
    ls: &LevelSet,
) -> Result<Vec<TestResult>> {
    if block.n_traits() != transforms.t() {
        return Err(Error::DimensionMismatch {
            reason: format!(
                "block has {} traits, transforms expect {}",
                block.n_traits(),
                transforms.t()
            ),
        });
    }
    let ctx = MtafsContext::new(transforms, ls)?;
    let mut results = Vec::with_capacity(block.n_snps());
    let mut row = vec![0.0f64; block.n_traits()];
    for i in 0..block.n_snps() {
        for (t, slot) in row.iter_mut().enumerate() {
            *slot = block.z[(i, t)];
        }
        let (p_mtafs, per_level, diagnostics) = ctx.score_row(&row, false);
        results.push(TestResult {
            snp_id: block.snp_ids[i].clone(),
            p_mtafs,
            per_level,
            baseline_pvalues: BTreeMap::new(),
            diagnostics,
        });
    }
    Ok(results)
}
