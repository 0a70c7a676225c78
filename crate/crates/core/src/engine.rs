//! Everything derived from one correlation matrix, bundled for reuse
//! across SNP blocks and worker threads.

use crate::af::MtafsContext;
use crate::baselines::{BaselineContext, Method};
use crate::corr::{regularize_psd, TraitCorrelation, PSD_FLOOR};
use crate::eigen::{build_transforms, eigendecompose, select_levels, DecorrelationTransforms, EigenSystem, LevelSet};
use crate::error::Result;

pub struct AnalysisEngine {
    pub corr: TraitCorrelation,
    pub eigensystem: EigenSystem,
    pub levels: LevelSet,
    pub transforms: DecorrelationTransforms,
    pub mtafs: MtafsContext,
    pub baselines: BaselineContext,
}

impl AnalysisEngine {
    /// PSD-repairs the matrix, decomposes it, selects levels, and builds
    /// the transform and baseline state in one shot.
    pub fn from_correlation(raw: TraitCorrelation) -> Result<Self> {
        let corr = regularize_psd(raw, PSD_FLOOR)?;
        let eigensystem = eigendecompose(&corr)?;
        let levels = select_levels(&eigensystem)?;
        let transforms = build_transforms(&eigensystem, &levels);
        let mtafs = MtafsContext::new(&transforms, &levels)?;
        let baselines = BaselineContext::new(&corr, &eigensystem)?;
        Ok(Self { corr, eigensystem, levels, transforms, mtafs, baselines })
    }

    pub fn t(&self) -> usize {
        self.corr.t()
    }

    /// p-values for one z-score row, pushed onto `out` in `methods` order.
    pub fn score_row_into(&self, z: &[f64], methods: &[Method], out: &mut Vec<f64>) {
        for &m in methods {
            let p = match m {
                Method::Mtafs => self.mtafs.score_row(z, false).0,
                baseline => self.baselines.run(baseline, z),
            };
            out.push(p);
        }
    }
}
