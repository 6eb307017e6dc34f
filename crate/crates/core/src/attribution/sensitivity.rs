use crate::error::{Error, Result};

/// Minimum partial R² a confounder needs to explain away an estimate with
/// t statistic `t_stat` on `dof` residual degrees of freedom.
pub fn robustness_value(t_stat: f64, dof: usize) -> Result<f64> {
    if dof == 0 {
        return Err(Error::Domain("robustness value needs dof > 0".into()));
    }
    if !t_stat.is_finite() {
        return Err(Error::Domain(format!("t statistic {t_stat} is not finite")));
    }
    let f = t_stat.abs() / (dof as f64).sqrt();
    let f2 = f * f;
    // stable form of ½(√(f⁴ + 4f²) − f²)
    let rv = 2.0 * f2 / ((f2 * f2 + 4.0 * f2).sqrt() + f2);
    Ok(if f2 == 0.0 { 0.0 } else { rv.clamp(0.0, 1.0) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_points() {
        assert_eq!(robustness_value(0.0, 10).unwrap(), 0.0);
        let golden = (5f64.sqrt() - 1.0) / 2.0;
        assert!((robustness_value(10.0, 100).unwrap() - golden).abs() < 1e-15);
        assert!(robustness_value(1.0, 0).is_err());
    }

    #[test]
    fn increasing_in_t() {
        let mut prev = -1.0;
        for i in 0..400 {
            let rv = robustness_value(i as f64 * 0.05, 250).unwrap();
            assert!(rv > prev);
            prev = rv;
        }
    }
}
