//! Two-stage least squares and its diagnostics.

use nalgebra::{DMatrix, DVector};

use super::sample::LinkSample;
use super::sensitivity::robustness_value;
use super::{Method, StructuralEstimate, TestStat, N_CHANNELS};
use crate::error::{Error, Result};
use crate::linalg::{self, hstack, QrDesign};
use crate::stats;

/// Numerical ceiling for F statistics of (near-)perfect first stages.
pub const F_CEILING: f64 = 1e12;

/// Generic 2SLS fit; coefficients ordered `[endogenous..., exogenous...]`.
#[derive(Debug, Clone)]
pub struct TwoStageFit {
    pub coef: DVector<f64>,
    pub residuals: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub n_obs: usize,
    pub n_excluded: usize,
}

/// 2SLS of `y` on endogenous `x` and exogenous `w`, instrumenting `x` with
/// `[w, z]`. Covariance is heteroskedasticity-robust (HC1).
pub fn two_stage_least_squares(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    w: &DMatrix<f64>,
    z: &DMatrix<f64>,
) -> Result<TwoStageFit> {
    let m = x.ncols();
    if z.ncols() < m {
        return Err(Error::Identification(format!(
            "{} excluded instruments for {m} endogenous regressors",
            z.ncols()
        )));
    }
    let full_z = hstack(&[w, z]);
    let first = QrDesign::new(&full_z)?;
    let x_hat = first.project(x);
    let second_design = hstack(&[&x_hat, w]);
    let second = QrDesign::new(&second_design)
        .map_err(|e| Error::SingularDesign(format!("second stage: {e}")))?;
    let coef = second.solve_vec(y);
    let structural = hstack(&[x, w]);
    let residuals = y - &structural * &coef;
    let bread = second.xtx_inverse();
    let cov = linalg::hc1_covariance(&second_design, &residuals, &bread);
    Ok(TwoStageFit {
        coef,
        residuals,
        cov,
        n_obs: y.len(),
        n_excluded: z.ncols(),
    })
}

pub(crate) fn estimate_from_fit(method: Method, fit: &TwoStageFit) -> StructuralEstimate {
    let mut theta = [0.0; N_CHANNELS];
    theta.copy_from_slice(&fit.coef.as_slice()[..N_CHANNELS]);
    StructuralEstimate {
        method,
        theta,
        alpha: Some(fit.coef[N_CHANNELS]),
        gamma_factor: Some(fit.coef[N_CHANNELS + 1]),
        gamma_lag: Some(fit.coef[N_CHANNELS + 2]),
        cov: Some(fit.cov.view((0, 0), (N_CHANNELS, N_CHANNELS)).into_owned()),
        n_obs: fit.n_obs,
        n_params: fit.coef.len(),
    }
}

/// Per-link IV diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsRecord {
    pub first_stage_f: [f64; N_CHANNELS],
    /// Missing when the model is exactly identified.
    pub sargan: Option<TestStat>,
    pub dwh: Option<TestStat>,
    pub robustness_value: [f64; N_CHANNELS],
}

/// 2SLS on the sample's full instrument set, with diagnostics.
pub fn fit_2sls(sample: &LinkSample) -> Result<(StructuralEstimate, DiagnosticsRecord)> {
    let w = sample.controls();
    let fit = two_stage_least_squares(&sample.comovement, &sample.channels, &w, &sample.instruments)?;
    let estimate = estimate_from_fit(Method::Iv2sls, &fit);

    let mut first_stage_f = [0.0; N_CHANNELS];
    for (c, f) in first_stage_f.iter_mut().enumerate() {
        *f = first_stage_partial_f(sample, c)?;
    }
    let sargan = match sargan_test(sample, &estimate) {
        Ok(s) => Some(s),
        Err(Error::NotOveridentified { .. }) => None,
        Err(e) => return Err(e),
    };
    let dwh = Some(dwh_test(sample)?);

    let dof = fit.n_obs.saturating_sub(fit.coef.len()).max(1);
    let mut rv = [0.0; N_CHANNELS];
    for c in 0..N_CHANNELS {
        let se = fit.cov[(c, c)].max(0.0).sqrt();
        let t = if se > 0.0 { fit.coef[c] / se } else { 0.0 };
        rv[c] = robustness_value(t, dof)?;
    }
    Ok((
        estimate,
        DiagnosticsRecord {
            first_stage_f,
            sargan,
            dwh,
            robustness_value: rv,
        },
    ))
}

/// Nested-model F statistic; `rss_u ≈ 0` saturates at [`F_CEILING`].
fn nested_f(rss_r: f64, rss_u: f64, q: usize, dof: usize) -> f64 {
    if q == 0 || dof == 0 {
        return 0.0;
    }
    let num = ((rss_r - rss_u).max(0.0)) / q as f64;
    let den = rss_u / dof as f64;
    if den <= f64::MIN_POSITIVE || rss_u <= 1e-28 * rss_r {
        return F_CEILING;
    }
    (num / den).min(F_CEILING)
}

/// Partial F of the excluded instruments in the first stage for one channel.
pub fn first_stage_partial_f(sample: &LinkSample, channel: usize) -> Result<f64> {
    if channel >= N_CHANNELS {
        return Err(Error::Domain(format!("channel index {channel} out of range")));
    }
    let w = sample.controls();
    let target = sample.channels.column(channel).into_owned();
    let restricted = linalg::ols(&w, &target)?;
    let full = hstack(&[&w, &sample.instruments]);
    let unrestricted = linalg::ols(&full, &target)?;
    let n = sample.n_obs();
    Ok(nested_f(
        restricted.rss,
        unrestricted.rss,
        sample.instruments.ncols(),
        n.saturating_sub(full.ncols()),
    ))
}

/// Sargan over-identification test: `n R²` of 2SLS residuals on all
/// instruments, chi-square with `k − m` degrees of freedom.
pub fn sargan_test(sample: &LinkSample, estimate: &StructuralEstimate) -> Result<TestStat> {
    sargan_with_instruments(sample, estimate, &sample.instruments)
}

pub(crate) fn sargan_with_instruments(
    sample: &LinkSample,
    estimate: &StructuralEstimate,
    z: &DMatrix<f64>,
) -> Result<TestStat> {
    let k = z.ncols();
    if k <= N_CHANNELS {
        return Err(Error::NotOveridentified {
            instruments: k,
            endogenous: N_CHANNELS,
        });
    }
    let (alpha, gf, gl) = match (estimate.alpha, estimate.gamma_factor, estimate.gamma_lag) {
        (Some(a), Some(f), Some(l)) => (a, f, l),
        _ => return Err(Error::Domain("estimate lacks nuisance coefficients".into())),
    };
    let theta = DVector::from_column_slice(&estimate.theta);
    let resid = &sample.comovement
        - &sample.channels * theta
        - DVector::from_element(sample.n_obs(), alpha)
        - &sample.global_factor * gf
        - &sample.comovement_lag * gl;
    let w = sample.controls();
    let full = hstack(&[&w, z]);
    let aux = linalg::ols(&full, &resid)?;
    let mean = resid.mean();
    let tss: f64 = resid.iter().map(|u| (u - mean) * (u - mean)).sum();
    let r2 = if tss > 0.0 { (1.0 - aux.rss / tss).clamp(0.0, 1.0) } else { 0.0 };
    let stat = sample.n_obs() as f64 * r2;
    let dof = (k - N_CHANNELS) as f64;
    Ok(TestStat {
        stat,
        p_value: stats::chi2_sf(stat, dof),
    })
}

/// Durbin-Wu-Hausman test in control-function form: OLS of `C` on channels,
/// controls and the five first-stage residuals; joint F on the residual terms.
pub fn dwh_test(sample: &LinkSample) -> Result<TestStat> {
    let w = sample.controls();
    let full_z = hstack(&[&w, &sample.instruments]);
    let first = QrDesign::new(&full_z)?;
    let v_hat = &sample.channels - first.project(&sample.channels);

    let base = hstack(&[&sample.channels, &w]);
    let restricted = linalg::ols(&base, &sample.comovement)?;
    let augmented = hstack(&[&base, &v_hat]);
    let unrestricted = match linalg::ols(&augmented, &sample.comovement) {
        Ok(fit) => fit,
        // channels lie in the instrument space: no endogeneity to test
        Err(Error::SingularDesign(_)) => {
            return Ok(TestStat {
                stat: 0.0,
                p_value: 1.0,
            })
        }
        Err(e) => return Err(e),
    };
    let dof = sample.n_obs().saturating_sub(augmented.ncols());
    let stat = nested_f(restricted.rss, unrestricted.rss, N_CHANNELS, dof);
    Ok(TestStat {
        stat,
        p_value: stats::f_sf(stat, N_CHANNELS as f64, dof.max(1) as f64),
    })
}

/// OLS of the structural equation, for comparison with 2SLS.
pub fn fit_ols(sample: &LinkSample) -> Result<StructuralEstimate> {
    let w = sample.controls();
    let x = hstack(&[&sample.channels, &w]);
    let qr = QrDesign::new(&x)?;
    let fit = linalg::ols_with(&qr, &x, &sample.comovement);
    let bread = qr.xtx_inverse();
    let cov = linalg::hc1_covariance(&x, &fit.residuals, &bread);
    let mut theta = [0.0; N_CHANNELS];
    theta.copy_from_slice(&fit.coef.as_slice()[..N_CHANNELS]);
    Ok(StructuralEstimate {
        method: Method::Ols,
        theta,
        alpha: Some(fit.coef[N_CHANNELS]),
        gamma_factor: Some(fit.coef[N_CHANNELS + 1]),
        gamma_lag: Some(fit.coef[N_CHANNELS + 2]),
        cov: Some(cov.view((0, 0), (N_CHANNELS, N_CHANNELS)).into_owned()),
        n_obs: sample.n_obs(),
        n_params: x.ncols(),
    })
}
