//! Non-adaptive comparison tests: SUM, SSU, metaMANOVA, HOM, and the
//! trait-level Cauchy combination.

use nalgebra::{Cholesky, DVector, Dyn};

use crate::af::{cauchy_combine, two_sided_pvalues};
use crate::clamp_pvalue;
use crate::corr::TraitCorrelation;
use crate::eigen::EigenSystem;
use crate::error::{Error, Result};
use crate::quadform::{tail_auto, QuadFormSpec};
use crate::stats::chi2_sf;

/// Every method this crate can run on a z-score row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Mtafs,
    Sum,
    Ssu,
    MetaManova,
    Hom,
    Cauchy,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Mtafs,
        Method::Sum,
        Method::Ssu,
        Method::MetaManova,
        Method::Hom,
        Method::Cauchy,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Mtafs => "mtafs",
            Method::Sum => "sum",
            Method::Ssu => "ssu",
            Method::MetaManova => "metamanova",
            Method::Hom => "hom",
            Method::Cauchy => "cauchy",
        }
    }

    pub fn parse(s: &str) -> Result<Method> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mtafs" => Ok(Method::Mtafs),
            "sum" => Ok(Method::Sum),
            "ssu" => Ok(Method::Ssu),
            "metamanova" => Ok(Method::MetaManova),
            "hom" => Ok(Method::Hom),
            "cauchy" => Ok(Method::Cauchy),
            other => Err(Error::InvalidConfig { reason: format!("unknown method `{other}`") }),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-matrix state shared across SNPs: one Cholesky factorization and the
/// quadratic-form null of the squared-sum statistic.
pub struct BaselineContext {
    t: usize,
    ones_r_ones: f64,
    r_inv_ones: DVector<f64>,
    ones_rinv_ones: f64,
    chol: Cholesky<f64, Dyn>,
    ssu_spec: QuadFormSpec,
}

impl BaselineContext {
    /// Build from a PSD-repaired correlation matrix and its eigensystem.
    pub fn new(r: &TraitCorrelation, es: &EigenSystem) -> Result<Self> {
        let t = r.t();
        if es.t() != t {
            return Err(Error::DimensionMismatch {
                reason: format!("eigensystem T={} vs correlation T={}", es.t(), t),
            });
        }
        let ones = DVector::from_element(t, 1.0);
        let ones_r_ones = (ones.transpose() * &r.r * &ones)[(0, 0)];
        if ones_r_ones <= 0.0 {
            return Err(Error::DegenerateVariance { value: ones_r_ones });
        }
        let chol = Cholesky::new(r.r.clone()).ok_or_else(|| Error::DimensionMismatch {
            reason: "correlation matrix is not positive definite; run regularize_psd first".into(),
        })?;
        let r_inv_ones = chol.solve(&ones);
        let ones_rinv_ones = r_inv_ones.sum();
        let ssu_spec = QuadFormSpec::new(es.eigenvalues.iter().map(|&l| (l, 1u32)))?;
        Ok(Self { t, ones_r_ones, r_inv_ones, ones_rinv_ones, chol, ssu_spec })
    }

    pub fn t(&self) -> usize {
        self.t
    }

    /// `(1'z)^2 / (1'R1)` against chi-square(1).
    pub fn sum_test(&self, z: &[f64]) -> f64 {
        debug_assert_eq!(z.len(), self.t);
        let s: f64 = z.iter().sum();
        clamp_pvalue(chi2_sf(s * s / self.ones_r_ones, 1.0))
    }

    /// `z'z` against its weighted chi-square null under the estimated R.
    pub fn ssu_test(&self, z: &[f64]) -> f64 {
        let q: f64 = z.iter().map(|v| v * v).sum();
        tail_auto(&self.ssu_spec, q).0
    }

    /// `z' R^-1 z` against chi-square(T); solves rather than inverting.
    pub fn metamanova_test(&self, z: &[f64]) -> f64 {
        let zv = DVector::from_column_slice(z);
        let solved = self.chol.solve(&zv);
        let stat = zv.dot(&solved);
        clamp_pvalue(chi2_sf(stat, self.t as f64))
    }

    /// `(1'R^-1 z)^2 / (1'R^-1 1)` against chi-square(1).
    pub fn hom_test(&self, z: &[f64]) -> f64 {
        let num: f64 = self.r_inv_ones.iter().zip(z.iter()).map(|(a, b)| a * b).sum();
        clamp_pvalue(chi2_sf(num * num / self.ones_rinv_ones, 1.0))
    }

    pub fn run(&self, method: Method, z: &[f64]) -> f64 {
        match method {
            Method::Sum => self.sum_test(z),
            Method::Ssu => self.ssu_test(z),
            Method::MetaManova => self.metamanova_test(z),
            Method::Hom => self.hom_test(z),
            Method::Cauchy => trait_cauchy_test(z),
            Method::Mtafs => panic!("mtafs is not a baseline"),
        }
    }
}

/// One-shot SUM test.
pub fn sum_test(z: &[f64], r: &TraitCorrelation, es: &EigenSystem) -> Result<f64> {
    Ok(BaselineContext::new(r, es)?.sum_test(z))
}

/// One-shot SSU test.
pub fn ssu_test(z: &[f64], es: &EigenSystem) -> Result<f64> {
    let spec = QuadFormSpec::new(es.eigenvalues.iter().map(|&l| (l, 1u32)))?;
    let q: f64 = z.iter().map(|v| v * v).sum();
    Ok(tail_auto(&spec, q).0)
}

/// One-shot metaMANOVA test.
pub fn metamanova_test(z: &[f64], r: &TraitCorrelation, es: &EigenSystem) -> Result<f64> {
    Ok(BaselineContext::new(r, es)?.metamanova_test(z))
}

/// One-shot HOM test.
pub fn hom_test(z: &[f64], r: &TraitCorrelation, es: &EigenSystem) -> Result<f64> {
    Ok(BaselineContext::new(r, es)?.hom_test(z))
}

/// Equal-weight Cauchy combination of the per-trait two-sided p-values.
pub fn trait_cauchy_test(z: &[f64]) -> f64 {
    let p = two_sided_pvalues(z);
    let w = vec![1.0 / z.len() as f64; z.len()];
    let (_, combined) = cauchy_combine(&p, &w).expect("equal weights are valid");
    combined
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corr::{regularize_psd, CorrelationSource, PSD_FLOOR};
    use crate::eigen::eigendecompose;
    use crate::sim::cs_matrix;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;

    fn identity_ctx(t: usize) -> BaselineContext {
        let raw =
            TraitCorrelation::from_matrix(DMatrix::identity(t, t), CorrelationSource::External)
                .unwrap();
        let r = regularize_psd(raw, PSD_FLOOR).unwrap();
        let es = eigendecompose(&r).unwrap();
        BaselineContext::new(&r, &es).unwrap()
    }

    #[test]
    fn zero_vector_gives_p_one() {
        let ctx = identity_ctx(4);
        let z = [0.0; 4];
        assert_eq!(ctx.sum_test(&z), 1.0);
        assert_eq!(ctx.ssu_test(&z), 1.0);
        assert_eq!(ctx.metamanova_test(&z), 1.0);
        assert_eq!(ctx.hom_test(&z), 1.0);
        assert_eq!(trait_cauchy_test(&z), 0.5);
    }

    #[test]
    fn sum_analytic_example() {
        let ctx = identity_ctx(4);
        let p = ctx.sum_test(&[1.0, 1.0, 1.0, 1.0]);
        // stat = 16/4 = 4; P(chi2_1 > 4) = 0.0455.
        assert_abs_diff_eq!(p, 0.04550026, epsilon = 1e-7);
    }

    #[test]
    fn ssu_chi2_quantile_at_identity() {
        let ctx = identity_ctx(3);
        // z'z = 7.8147 is the 95th percentile of chi-square(3).
        let z = [7.8147f64.sqrt(), 0.0, 0.0];
        assert_abs_diff_eq!(ctx.ssu_test(&z), 0.05, epsilon = 1e-4);
    }

    #[test]
    fn metamanova_analytic_example() {
        let ctx = identity_ctx(3);
        let p = ctx.metamanova_test(&[2.0, 0.0, 0.0]);
        assert_abs_diff_eq!(p, chi2_sf(4.0, 3.0), epsilon = 1e-12);
        assert_abs_diff_eq!(p, 0.2614641, epsilon = 1e-6);
    }

    #[test]
    fn identity_cross_checks() {
        // With R = I: HOM == SUM, and SSU/metaMANOVA both equal the
        // chi-square(T) tail of z'z.
        let ctx = identity_ctx(5);
        let zs = [
            [0.5, -1.0, 2.0, 0.0, 1.5],
            [3.0, 3.0, 3.0, 3.0, 3.0],
            [0.1, 0.0, -0.2, 0.3, -0.1],
        ];
        for z in &zs {
            assert_abs_diff_eq!(ctx.hom_test(z), ctx.sum_test(z), epsilon = 1e-10);
            let q: f64 = z.iter().map(|v| v * v).sum();
            let chi_t = chi2_sf(q, 5.0);
            assert_abs_diff_eq!(ctx.metamanova_test(z), chi_t, epsilon = 1e-10);
            assert_abs_diff_eq!(ctx.ssu_test(z), chi_t, epsilon = 1e-8);
        }
    }

    #[test]
    fn trait_cauchy_small_p_behavior() {
        let t = 10;
        let mut z = vec![0.0; t];
        z[3] = 12.0;
        let per_trait = crate::stats::normal_two_sided(12.0);
        let p = trait_cauchy_test(&z);
        let expect = per_trait * t as f64;
        assert!((p - expect).abs() / expect < 0.02, "p={p} expect={expect}");
    }

    #[test]
    fn correlated_context_consistency() {
        let r = cs_matrix(6, 0.4).unwrap();
        let es = eigendecompose(&r).unwrap();
        let ctx = BaselineContext::new(&r, &es).unwrap();
        let z = [1.0, -0.5, 0.3, 2.0, 0.0, -1.2];
        assert_abs_diff_eq!(ctx.sum_test(&z), sum_test(&z, &r, &es).unwrap(), epsilon = 0.0);
        assert_abs_diff_eq!(ctx.ssu_test(&z), ssu_test(&z, &es).unwrap(), epsilon = 0.0);
        assert_abs_diff_eq!(
            ctx.metamanova_test(&z),
            metamanova_test(&z, &r, &es).unwrap(),
            epsilon = 0.0
        );
        assert_abs_diff_eq!(ctx.hom_test(&z), hom_test(&z, &r, &es).unwrap(), epsilon = 0.0);
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(Method::parse(m.name()).unwrap(), m);
        }
        assert!(Method::parse("nope").is_err());
    }
}
