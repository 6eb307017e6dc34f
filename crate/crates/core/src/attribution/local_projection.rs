use nalgebra::{DMatrix, DVector};

use super::sample::LinkSample;
use super::{Method, StructuralEstimate, N_CHANNELS};
use crate::error::{Error, Result};
use crate::linalg::{self, QrDesign};

/// OLS of `C_{t+h}` on channels at `t` and `[1, f_t, C_{t-1}]`, with
/// Newey-West covariance at bandwidth `h`.
pub fn fit_local_projection(sample: &LinkSample, horizon: usize) -> Result<StructuralEstimate> {
    let n = sample.n_obs();
    if n <= horizon + 20 {
        return Err(Error::InsufficientData(format!(
            "{n} rows for horizon {horizon}; need more than {}",
            horizon + 20
        )));
    }
    let rows = n - horizon;
    let y = DVector::from_fn(rows, |r, _| sample.comovement[r + horizon]);
    let x = DMatrix::from_fn(rows, N_CHANNELS + 3, |r, c| match c {
        c if c < N_CHANNELS => sample.channels[(r, c)],
        5 => 1.0,
        6 => sample.global_factor[r],
        _ => sample.comovement_lag[r],
    });
    let qr = QrDesign::new(&x)?;
    let fit = linalg::ols_with(&qr, &x, &y);
    let bread = qr.xtx_inverse();
    let cov = linalg::newey_west_covariance(&x, &fit.residuals, &bread, horizon);
    let mut theta = [0.0; N_CHANNELS];
    theta.copy_from_slice(&fit.coef.as_slice()[..N_CHANNELS]);
    Ok(StructuralEstimate {
        method: Method::Lp(horizon),
        theta,
        alpha: Some(fit.coef[N_CHANNELS]),
        gamma_factor: Some(fit.coef[N_CHANNELS + 1]),
        gamma_lag: Some(fit.coef[N_CHANNELS + 2]),
        cov: Some(cov.view((0, 0), (N_CHANNELS, N_CHANNELS)).into_owned()),
        n_obs: rows,
        n_params: x.ncols(),
    })
}
