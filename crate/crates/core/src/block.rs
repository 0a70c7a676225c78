//! SNP-block container: the unit of batch work.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// A block of per-SNP z-scores across `T` traits.
///
/// Rows are SNPs, columns are traits. Construction rejects shape
/// mismatches and non-finite entries; ingestion code filters those out
/// before building a block.
#[derive(Debug, Clone, PartialEq)]
pub struct ZScoreBlock {
    pub snp_ids: Vec<String>,
    pub z: DMatrix<f64>,
    pub trait_names: Vec<String>,
}

impl ZScoreBlock {
    pub fn new(snp_ids: Vec<String>, z: DMatrix<f64>, trait_names: Vec<String>) -> Result<Self> {
        if z.nrows() != snp_ids.len() {
            return Err(Error::DimensionMismatch {
                reason: format!("{} z rows vs {} snp ids", z.nrows(), snp_ids.len()),
            });
        }
        if z.ncols() != trait_names.len() {
            return Err(Error::DimensionMismatch {
                reason: format!("{} z columns vs {} trait names", z.ncols(), trait_names.len()),
            });
        }
        for (i, row) in z.row_iter().enumerate() {
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFiniteEntry { row: i, col: j });
            }
        }
        Ok(Self { snp_ids, z, trait_names })
    }

    /// Number of SNP rows.
    pub fn n_snps(&self) -> usize {
        self.z.nrows()
    }

    /// Number of trait columns.
    pub fn n_traits(&self) -> usize {
        self.z.ncols()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize, prefix: &str) -> Vec<String> {
        (0..n).map(|i| format!("{prefix}{i}")).collect()
    }

    #[test]
    fn shape_checks() {
        let z = DMatrix::from_row_slice(2, 3, &[0.0; 6]);
        assert!(ZScoreBlock::new(names(2, "rs"), z.clone(), names(3, "t")).is_ok());
        assert!(matches!(
            ZScoreBlock::new(names(1, "rs"), z.clone(), names(3, "t")),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            ZScoreBlock::new(names(2, "rs"), z, names(2, "t")),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn rejects_non_finite() {
        let z = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, f64::NAN, 0.0]);
        assert!(matches!(
            ZScoreBlock::new(names(2, "rs"), z, names(2, "t")),
            Err(Error::NonFiniteEntry { row: 1, col: 0 })
        ));
    }
}
