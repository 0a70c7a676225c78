//! Trait correlation estimation and positive-semidefinite repair.

use nalgebra::{DMatrix, DVector};

use crate::block::ZScoreBlock;
use crate::eigen::sym_eigen_desc;
use crate::error::{Error, Result};

/// Eigenvalue floor applied when repairing indefinite correlation matrices.
pub const PSD_FLOOR: f64 = 1e-8;

/// Elementwise tolerance for symmetry and unit-diagonal checks.
const SYM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorrelationSource {
    SampleCorrelation,
    External,
}

/// A `T x T` trait correlation matrix with repair metadata.
#[derive(Debug, Clone)]
pub struct TraitCorrelation {
    pub r: DMatrix<f64>,
    pub source: CorrelationSource,
    /// True when symmetrization, diagonal reset, or eigenvalue clipping changed the input.
    pub repaired: bool,
    /// Smallest eigenvalue observed before repair; `None` until [`regularize_psd`] ran.
    pub min_eig_before_repair: Option<f64>,
}

impl TraitCorrelation {
    /// Wrap a square matrix of finite entries without touching its values.
    pub fn from_matrix(r: DMatrix<f64>, source: CorrelationSource) -> Result<Self> {
        if r.nrows() != r.ncols() {
            return Err(Error::NotSquare { rows: r.nrows(), cols: r.ncols() });
        }
        for j in 0..r.ncols() {
            for i in 0..r.nrows() {
                if !r[(i, j)].is_finite() {
                    return Err(Error::NonFiniteEntry { row: i, col: j });
                }
            }
        }
        Ok(Self { r, source, repaired: false, min_eig_before_repair: None })
    }

    pub fn t(&self) -> usize {
        self.r.nrows()
    }
}

/// Streaming accumulator for the Pearson sample correlation across SNP rows.
///
/// Keeps only `O(T^2)` state so genome-scale inputs can be folded in block
/// by block. Accumulation is per block; callers that need determinism
/// across worker counts must combine block partials in block order.
#[derive(Debug, Clone)]
pub struct CorrAccumulator {
    n: usize,
    sum: DVector<f64>,
    cross: DMatrix<f64>,
}

impl CorrAccumulator {
    pub fn new(t: usize) -> Self {
        Self { n: 0, sum: DVector::zeros(t), cross: DMatrix::zeros(t, t) }
    }

    pub fn n_rows(&self) -> usize {
        self.n
    }

    pub fn push(&mut self, z: &DMatrix<f64>) {
        assert_eq!(z.ncols(), self.sum.len());
        self.n += z.nrows();
        for (j, col) in z.column_iter().enumerate() {
            self.sum[j] += col.sum();
        }
        self.cross += z.tr_mul(z);
    }

    pub fn merge(&mut self, other: &CorrAccumulator) {
        assert_eq!(self.sum.len(), other.sum.len());
        self.n += other.n;
        self.sum += &other.sum;
        self.cross += &other.cross;
    }

    /// Finish into a Pearson correlation matrix.
    pub fn finish(&self, trait_names: &[String]) -> Result<TraitCorrelation> {
        let t = self.sum.len();
        if self.n < 2 {
            return Err(Error::TooFewRows { n: self.n });
        }
        let n = self.n as f64;
        let mut cov = DMatrix::zeros(t, t);
        for i in 0..t {
            for j in 0..t {
                cov[(i, j)] = (self.cross[(i, j)] - self.sum[i] * self.sum[j] / n) / (n - 1.0);
            }
        }
        for i in 0..t {
            let scale = self.cross[(i, i)] / (n - 1.0);
            if cov[(i, i)] <= 1e-14 * (scale + f64::MIN_POSITIVE) {
                let trait_name = trait_names
                    .get(i)
                    .cloned()
                    .unwrap_or_else(|| format!("trait {i}"));
                return Err(Error::DegenerateTrait { trait_name });
            }
        }
        let mut r = DMatrix::zeros(t, t);
        for i in 0..t {
            for j in 0..t {
                if i == j {
                    r[(i, j)] = 1.0;
                } else {
                    let v = cov[(i, j)] / (cov[(i, i)] * cov[(j, j)]).sqrt();
                    r[(i, j)] = v.clamp(-1.0, 1.0);
                }
            }
        }
        // Exact symmetry: the two off-diagonal routes can differ by an ulp.
        for i in 0..t {
            for j in (i + 1)..t {
                let v = r[(i, j)];
                r[(j, i)] = v;
            }
        }
        Ok(TraitCorrelation {
            r,
            source: CorrelationSource::SampleCorrelation,
            repaired: false,
            min_eig_before_repair: None,
        })
    }
}

/// Pearson sample correlation of a z-score block across its SNP rows.
pub fn estimate_sample_correlation(block: &ZScoreBlock) -> Result<TraitCorrelation> {
    let mut acc = CorrAccumulator::new(block.n_traits());
    acc.push(&block.z);
    acc.finish(&block.trait_names)
}

/// Repair a correlation matrix so every eigenvalue is at least `psd_floor`.
///
/// Symmetrizes and resets the diagonal when violated beyond 1e-12, clips
/// eigenvalues from below, reassembles, and rescales the diagonal back to
/// exactly one. Matrices that already satisfy the floor are returned
/// unchanged apart from the recorded metadata.
pub fn regularize_psd(raw: TraitCorrelation, psd_floor: f64) -> Result<TraitCorrelation> {
    let t = raw.t();
    if raw.r.nrows() != raw.r.ncols() {
        return Err(Error::NotSquare { rows: raw.r.nrows(), cols: raw.r.ncols() });
    }
    for j in 0..t {
        for i in 0..t {
            if !raw.r[(i, j)].is_finite() {
                return Err(Error::NonFiniteEntry { row: i, col: j });
            }
        }
    }

    let mut r = raw.r;
    let mut repaired = raw.repaired;

    let mut sym_err = 0.0f64;
    let mut diag_err = 0.0f64;
    for i in 0..t {
        diag_err = diag_err.max((r[(i, i)] - 1.0).abs());
        for j in (i + 1)..t {
            sym_err = sym_err.max((r[(i, j)] - r[(j, i)]).abs());
        }
    }
    if sym_err > SYM_TOL {
        let rt = r.transpose();
        r = (&r + rt) * 0.5;
        repaired = true;
    }
    if diag_err > SYM_TOL {
        for i in 0..t {
            r[(i, i)] = 1.0;
        }
        repaired = true;
    }

    let (eigenvalues, _) = sym_eigen_desc(&r)?;
    let min_eig_before = *eigenvalues.last().expect("nonempty spectrum");

    if min_eig_before >= psd_floor {
        return Ok(TraitCorrelation {
            r,
            source: raw.source,
            repaired,
            min_eig_before_repair: Some(min_eig_before),
        });
    }

    // Clip-and-rescale can nudge the smallest eigenvalue back below the
    // floor, so iterate; one or two passes suffice in practice.
    repaired = true;
    for _ in 0..16 {
        let (vals, vecs) = sym_eigen_desc(&r)?;
        if *vals.last().unwrap() >= psd_floor {
            break;
        }
        let clipped = DVector::from_iterator(t, vals.iter().map(|&v| v.max(psd_floor)));
        let scaled = &vecs * DMatrix::from_diagonal(&clipped);
        r = scaled * vecs.transpose();
        for i in 0..t {
            let di = 1.0 / r[(i, i)].sqrt();
            for j in 0..t {
                r[(i, j)] *= di;
                r[(j, i)] *= di;
            }
        }
        for i in 0..t {
            r[(i, i)] = 1.0;
        }
        for i in 0..t {
            for j in (i + 1)..t {
                let v = 0.5 * (r[(i, j)] + r[(j, i)]);
                r[(i, j)] = v;
                r[(j, i)] = v;
            }
        }
    }

    Ok(TraitCorrelation {
        r,
        source: raw.source,
        repaired,
        min_eig_before_repair: Some(min_eig_before),
    })
}
