//! Shared scalar distribution helpers.

use statrs::function::erf::{erfc, erfc_inv};
use statrs::function::gamma::gamma_ur;

/// Standard normal density.
#[inline]
pub fn normal_pdf(x: f64) -> f64 {
    const INV_SQRT_2PI: f64 = 0.3989422804014327;
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal survival function `P(Z > z)`, accurate in the far tail.
#[inline]
pub fn normal_sf(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

/// Two-sided standard normal p-value `2 P(Z > |z|) = erfc(|z|/sqrt(2))`.
#[inline]
pub fn normal_two_sided(z: f64) -> f64 {
    erfc(z.abs() / std::f64::consts::SQRT_2)
}

/// Inverse of [`normal_two_sided`]: the `z >= 0` with `erfc(z/sqrt(2)) = p`.
///
/// Seeds from `erfc_inv` and polishes with two Newton steps so the
/// round-trip through `normal_two_sided` holds to ~1e-12 relative.
pub fn normal_two_sided_quantile(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p <= 1.0);
    if p >= 1.0 {
        return 0.0;
    }
    let mut z = std::f64::consts::SQRT_2 * erfc_inv(p);
    for _ in 0..2 {
        let f = normal_two_sided(z) - p;
        let df = -2.0 * normal_pdf(z);
        if df == 0.0 {
            break;
        }
        let step = f / df;
        if !step.is_finite() {
            break;
        }
        z -= step;
    }
    z.max(0.0)
}

/// Upper tail of a central chi-square with `df` degrees of freedom.
#[inline]
pub fn chi2_sf(x: f64, df: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    gamma_ur(df / 2.0, x / 2.0)
}

/// Upper tail of Gamma(shape, rate 1).
#[inline]
pub fn gamma_sf(x: f64, shape: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    gamma_ur(shape, x)
}

/// One-sample Kolmogorov-Smirnov test against Uniform(0,1).
///
/// Returns `(d, p)` where `d` is the KS statistic and `p` the asymptotic
/// p-value with Stephens' small-sample correction. Sorts a copy of the data.
pub fn ks_uniform(sample: &[f64]) -> (f64, f64) {
    assert!(!sample.is_empty());
    let mut xs = sample.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).expect("NaN in KS sample"));
    let n = xs.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in xs.iter().enumerate() {
        let hi = (i as f64 + 1.0) / n - x;
        let lo = x - i as f64 / n;
        d = d.max(hi).max(lo);
    }
    let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    (d, kolmogorov_sf(lambda))
}

/// Kolmogorov distribution survival `Q(lambda) = 2 sum (-1)^(k-1) exp(-2 k^2 lambda^2)`.
///
/// For small `lambda` the alternating series converges too slowly, so the
/// dual Jacobi-theta form of the CDF is used there instead.
fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // CDF = sqrt(2 pi)/lambda * sum_{k odd} exp(-k^2 pi^2 / (8 lambda^2))
        let factor = (2.0 * std::f64::consts::PI).sqrt() / lambda;
        let q = (-std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda)).exp();
        let cdf = factor * (q + q.powi(9) + q.powi(25) + q.powi(49));
        (1.0 - cdf).clamp(0.0, 1.0)
    } else {
        let mut sum = 0.0;
        let mut sign = 1.0;
        for k in 1..=100 {
            let term = (-2.0 * (k as f64).powi(2) * lambda * lambda).exp();
            sum += sign * term;
            if term < 1e-16 {
                break;
            }
            sign = -sign;
        }
        (2.0 * sum).clamp(0.0, 1.0)
    }
}

/// Binomial standard error of an empirical proportion.
#[inline]
pub fn proportion_se(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn two_sided_basics() {
        assert_abs_diff_eq!(normal_two_sided(0.0), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(normal_two_sided(1.959964), 0.05, epsilon = 1e-6);
        assert_eq!(normal_two_sided(2.5), normal_two_sided(-2.5));
    }

    #[test]
    fn quantile_round_trip() {
        for &p in &[1.0, 0.5, 0.05, 1e-4, 1e-10, 1e-30, 1e-100, 1e-290] {
            let z = normal_two_sided_quantile(p);
            let back = normal_two_sided(z);
            assert!(
                (back - p).abs() <= 1e-12 * p.max(1e-12),
                "p={p} z={z} back={back}"
            );
        }
        assert_abs_diff_eq!(normal_two_sided_quantile(0.05), 1.959964, epsilon = 1e-6);
    }

    #[test]
    fn chi2_tails() {
        // P(chi2_1 > 3.841459) = 0.05
        assert_abs_diff_eq!(chi2_sf(3.841459, 1.0), 0.05, epsilon = 1e-6);
        // P(chi2_2 > x) = exp(-x/2)
        assert_abs_diff_eq!(chi2_sf(7.0, 2.0), (-3.5f64).exp(), epsilon = 1e-12);
        assert_abs_diff_eq!(chi2_sf(7.8147, 3.0), 0.05, epsilon = 1e-5);
    }

    #[test]
    fn ks_detects_and_accepts() {
        // Uniform grid should be a near-perfect fit.
        let n = 10_000;
        let unif: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let (d, p) = ks_uniform(&unif);
        assert!(d < 1e-3);
        assert!(p > 0.99);

        // A clearly skewed sample should be rejected.
        let skew: Vec<f64> = unif.iter().map(|u| u * u).collect();
        let (_, p) = ks_uniform(&skew);
        assert!(p < 1e-10);
    }
}
