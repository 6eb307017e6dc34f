//! Identification through heteroskedasticity across volatility regimes.

use serde::{Deserialize, Serialize};

use super::sample::LinkSample;
use super::{Method, StructuralEstimate, N_CHANNELS};
use crate::error::{Error, Result};
use crate::ingest::ReturnPanel;
use crate::stats;

pub const MIN_REGIME_ROWS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regime {
    High,
    Low,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegimePartition {
    pub labels: Vec<Regime>,
    pub variance: Vec<f64>,
    /// One regime is empty.
    pub degenerate: bool,
}

impl RegimePartition {
    pub fn count(&self, regime: Regime) -> usize {
        self.labels.iter().filter(|r| **r == regime).count()
    }
}

/// High where the variance is strictly above its median; ties are Low.
pub fn regimes_from_variance(variance: &[f64]) -> RegimePartition {
    let median = stats::median(variance);
    let labels: Vec<Regime> = variance
        .iter()
        .map(|v| if *v > median { Regime::High } else { Regime::Low })
        .collect();
    let highs = labels.iter().filter(|r| **r == Regime::High).count();
    RegimePartition {
        degenerate: highs == 0 || highs == labels.len(),
        labels,
        variance: variance.to_vec(),
    }
}

/// Trailing-window variance of the cross-market mean return, split at its
/// median. The first `window − 1` dates use the available prefix.
pub fn regime_partition(returns: &ReturnPanel, window: usize) -> Result<RegimePartition> {
    let t = returns.n_rows();
    if window < 2 || t <= window {
        return Err(Error::InsufficientData(format!("{t} rows for a {window}-day window")));
    }
    let mean = crate::ingest::global_factor(returns);
    let variance: Vec<f64> = (0..t)
        .map(|i| {
            let lo = (i + 1).saturating_sub(window);
            let w = &mean[lo..=i];
            if w.len() < 2 {
                0.0
            } else {
                stats::variance(w)
            }
        })
        .collect();
    Ok(regimes_from_variance(&variance))
}

fn moments(c: &[f64], x: &[f64]) -> (f64, f64) {
    let mc = stats::mean(c);
    let mx = stats::mean(x);
    let n = c.len() as f64 - 1.0;
    let cov = c.iter().zip(x).map(|(a, b)| (a - mc) * (b - mx)).sum::<f64>() / n;
    let var = x.iter().map(|b| (b - mx) * (b - mx)).sum::<f64>() / n;
    (cov, var)
}

/// `(Cov_H(C, X) − Cov_L(C, X)) / (Var_H(X) − Var_L(X))`
pub fn rigobon_coefficient(c_high: &[f64], x_high: &[f64], c_low: &[f64], x_low: &[f64]) -> Result<f64> {
    if c_high.len() != x_high.len() || c_low.len() != x_low.len() || c_high.len() < 2 || c_low.len() < 2 {
        return Err(Error::InsufficientData("regime samples too short or misaligned".into()));
    }
    let (cov_h, var_h) = moments(c_high, x_high);
    let (cov_l, var_l) = moments(c_low, x_low);
    let dv = var_h - var_l;
    if dv.abs() <= 1e-12 * var_h.abs() || dv == 0.0 {
        return Err(Error::NoVarianceShift(format!("Var_H = {var_h:e}, Var_L = {var_l:e}")));
    }
    Ok((cov_h - cov_l) / dv)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RigobonFit {
    pub estimate: StructuralEstimate,
    /// Channels without a usable variance shift; their θ is 0.
    pub no_shift: [bool; N_CHANNELS],
}

/// Per-channel Rigobon coefficients; `regimes` is aligned with the sample rows.
pub fn fit_rigobon(sample: &LinkSample, regimes: &[Regime]) -> Result<RigobonFit> {
    let n = sample.n_obs();
    if regimes.len() != n {
        return Err(Error::Domain(format!("{} regime labels for {n} rows", regimes.len())));
    }
    let high: Vec<usize> = (0..n).filter(|&t| regimes[t] == Regime::High).collect();
    let low: Vec<usize> = (0..n).filter(|&t| regimes[t] == Regime::Low).collect();
    if high.len() < MIN_REGIME_ROWS || low.len() < MIN_REGIME_ROWS {
        return Err(Error::InsufficientData(format!(
            "regimes have {} high and {} low rows; need {MIN_REGIME_ROWS} each",
            high.len(),
            low.len()
        )));
    }
    let pick = |idx: &[usize], v: &dyn Fn(usize) -> f64| idx.iter().map(|&t| v(t)).collect::<Vec<f64>>();
    let c_h = pick(&high, &|t| sample.comovement[t]);
    let c_l = pick(&low, &|t| sample.comovement[t]);
    let mut theta = [0.0; N_CHANNELS];
    let mut no_shift = [false; N_CHANNELS];
    for c in 0..N_CHANNELS {
        let x_h = pick(&high, &|t| sample.channels[(t, c)]);
        let x_l = pick(&low, &|t| sample.channels[(t, c)]);
        match rigobon_coefficient(&c_h, &x_h, &c_l, &x_l) {
            Ok(v) => theta[c] = v,
            Err(Error::NoVarianceShift(_)) => no_shift[c] = true,
            Err(e) => return Err(e),
        }
    }
    Ok(RigobonFit {
        estimate: StructuralEstimate {
            method: Method::Rigobon,
            theta,
            alpha: None,
            gamma_factor: None,
            gamma_lag: None,
            cov: None,
            n_obs: n,
            n_params: N_CHANNELS,
        },
        no_shift,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn increasing_variance_splits_in_half() {
        let v: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let p = regimes_from_variance(&v);
        assert!(p.labels[..5].iter().all(|r| *r == Regime::Low));
        assert!(p.labels[5..].iter().all(|r| *r == Regime::High));
        assert!(!p.degenerate);
    }

    #[test]
    fn constant_variance_is_degenerate() {
        let p = regimes_from_variance(&[0.0; 40]);
        assert!(p.labels.iter().all(|r| *r == Regime::Low));
        assert!(p.degenerate);
    }

    #[test]
    fn coefficient_edge_cases() {
        let x = [1.0, -1.0, 2.0, -2.0];
        assert!(matches!(
            rigobon_coefficient(&[0.0; 4], &x, &[0.0; 4], &x),
            Err(Error::NoVarianceShift(_))
        ));
        let xh = [2.0, -2.0, 4.0, -4.0];
        // same covariance with C in both regimes
        let ch = [0.5, -0.5, 0.0, 0.0];
        let cl = [1.0, -1.0, 0.0, 0.0];
        assert_eq!(rigobon_coefficient(&ch, &xh, &cl, &x).unwrap(), 0.0);
    }
}
