//! Structural channel attribution for detected contagion links.

mod bootstrap;
mod iv;
mod lasso;
mod local_projection;
mod rigobon;
mod sample;
mod sensitivity;
mod shares;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use bootstrap::{bootstrap_shares, BootstrapInterval};
pub use iv::{
    dwh_test, first_stage_partial_f, fit_2sls, fit_ols, sargan_test, two_stage_least_squares,
    DiagnosticsRecord, TwoStageFit, F_CEILING,
};
pub use lasso::{
    fit_lasso_iv, lasso_coordinate_descent, lasso_select, lasso_select_with, plug_in_lambda,
    post_double_selection, LassoSelection, Penalty, PostDoubleSelection, SelectionTarget,
};
pub use local_projection::fit_local_projection;
pub use rigobon::{
    fit_rigobon, regime_partition, regimes_from_variance, rigobon_coefficient, Regime,
    RegimePartition, RigobonFit, MIN_REGIME_ROWS,
};
pub use sample::{build_instruments, build_link_sample, InstrumentSpec, LinkSample, MIN_LINK_ROWS};
pub use sensitivity::robustness_value;
pub use shares::{aggregate_period_shares, dominant, shares, ShareTable};

pub const N_CHANNELS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    Ols,
    Iv2sls,
    LassoIv,
    /// Local projection at horizon h.
    Lp(usize),
    Rigobon,
}

impl Method {
    pub fn label(&self) -> String {
        match self {
            Method::Ols => "OLS".into(),
            Method::Iv2sls => "IV2SLS".into(),
            Method::LassoIv => "LASSOIV".into(),
            Method::Lp(h) => format!("LP{h}"),
            Method::Rigobon => "RIGOBON".into(),
        }
    }

    /// Short form used in output file names.
    pub fn file_key(&self) -> String {
        match self {
            Method::Ols => "ols".into(),
            Method::Iv2sls => "iv".into(),
            Method::LassoIv => "lasso".into(),
            Method::Lp(h) => format!("lp_h{h}"),
            Method::Rigobon => "rigobon".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructuralEstimate {
    pub method: Method,
    pub theta: [f64; N_CHANNELS],
    pub alpha: Option<f64>,
    pub gamma_factor: Option<f64>,
    pub gamma_lag: Option<f64>,
    pub cov: Option<DMatrix<f64>>,
    pub n_obs: usize,
    pub n_params: usize,
}

impl StructuralEstimate {
    pub fn std_errors(&self) -> Option<[f64; N_CHANNELS]> {
        let cov = self.cov.as_ref()?;
        let mut se = [0.0; N_CHANNELS];
        for (c, s) in se.iter_mut().enumerate() {
            *s = cov[(c, c)].max(0.0).sqrt();
        }
        Some(se)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestStat {
    pub stat: f64,
    pub p_value: f64,
}

impl TestStat {
    pub fn rejects(&self, level: f64) -> bool {
        self.p_value < level
    }
}
