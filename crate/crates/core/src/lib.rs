//! Multi-trait association tests from GWAS summary statistics.
//!
//! Given per-SNP z-scores across `T` correlated traits, this crate computes
//! an omnibus p-value per SNP by decorrelating the z-scores with the
//! eigensystem of the trait correlation matrix, scoring cumulative sums of
//! ordered log p-values against their weighted chi-square null at five
//! variance-explained levels, and combining everything with Cauchy
//! transforms. Classic non-adaptive tests (SUM, SSU, metaMANOVA, HOM,
//! trait-level Cauchy) are included as baselines, along with a Monte-Carlo
//! harness for type-1-error and power experiments and a streaming TSV
//! pipeline for genome-scale inputs.

pub mod af;
pub mod baselines;
pub mod block;
pub mod config;
pub mod corr;
pub mod davies;
pub mod eigen;
pub mod engine;
pub mod error;
pub mod io;
pub mod quadform;
pub mod runner;
pub mod sim;
pub mod stats;

pub use af::{af_statistic, cauchy_combine, mtafs_block, two_sided_pvalues, LevelResult, TestResult};
pub use block::ZScoreBlock;
pub use corr::{estimate_sample_correlation, regularize_psd, CorrelationSource, TraitCorrelation, PSD_FLOOR};
pub use eigen::{build_transforms, eigendecompose, select_levels, DecorrelationTransforms, EigenSystem, LevelSet};
pub use error::Error;
pub use quadform::{davies_tail, saddlepoint_tail, tail_auto, topk_order_weights, QuadFormSpec, TailMethod};

/// Smallest p-value this crate ever reports; protects downstream
/// `log`/`tan` transforms from underflow.
pub const P_MIN: f64 = 1e-300;

/// Clamp a probability to `[P_MIN, 1]`, mapping NaN to 1.
pub fn clamp_pvalue(p: f64) -> f64 {
    if p.is_nan() {
        1.0
    } else {
        p.clamp(P_MIN, 1.0)
    }
}
