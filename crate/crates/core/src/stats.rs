//! Small descriptive-statistics helpers and distribution tails.

use statrs::distribution::{ChiSquared, ContinuousCDF, FisherSnedecor, Normal};

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n - 1 denominator).
pub fn sd(xs: &[f64]) -> f64 {
    variance(xs).sqrt()
}

pub fn variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64
}

/// Linear-interpolation quantile between order statistics (Hyndman-Fan type 7).
///
/// `xs` need not be sorted. Returns NaN for an empty slice.
pub fn quantile_type7(xs: &[f64], p: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    quantile_type7_sorted(&sorted, p)
}

pub fn quantile_type7_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn median(xs: &[f64]) -> f64 {
    quantile_type7(xs, 0.5)
}

/// Standard-normal quantile function.
pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// Upper-tail probability of a chi-square variate.
pub fn chi2_sf(stat: f64, dof: f64) -> f64 {
    if !stat.is_finite() {
        return 0.0;
    }
    let dist = ChiSquared::new(dof).expect("positive degrees of freedom");
    (1.0 - dist.cdf(stat.max(0.0))).clamp(0.0, 1.0)
}

/// Upper-tail probability of an F variate.
pub fn f_sf(stat: f64, dof1: f64, dof2: f64) -> f64 {
    if !stat.is_finite() {
        return 0.0;
    }
    let dist = FisherSnedecor::new(dof1, dof2).expect("positive degrees of freedom");
    (1.0 - dist.cdf(stat.max(0.0))).clamp(0.0, 1.0)
}

/// Standardises in place to zero mean and unit sample sd; returns `None` when sd is zero.
pub fn standardize(xs: &[f64]) -> Option<Vec<f64>> {
    let m = mean(xs);
    let s = sd(xs);
    if !(s > 0.0) || !s.is_finite() {
        return None;
    }
    Some(xs.iter().map(|x| (x - m) / s).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn type7_quantile_closed_form() {
        assert!((quantile_type7(&[0.01, 0.02, 0.03, 0.04], 0.75) - 0.0325).abs() < 1e-15);
        assert_eq!(quantile_type7(&[5.0], 0.3), 5.0);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
    }

    #[test]
    fn tails_are_sane() {
        assert!((chi2_sf(22.362, 13.0) - 0.05).abs() < 1e-3);
        assert!((normal_quantile(0.975) - 1.959964).abs() < 1e-5);
        assert!((f_sf(1.0, 5.0, 1e6) - 0.4159).abs() < 1e-3);
    }

    #[test]
    fn standardize_rejects_constant() {
        assert!(standardize(&[1.0, 1.0, 1.0]).is_none());
        let z = standardize(&[1.0, 2.0, 3.0]).unwrap();
        assert!(mean(&z).abs() < 1e-15 && (sd(&z) - 1.0).abs() < 1e-15);
    }
}
