//! Dense least-squares helpers shared by the regression estimators.
//!
//! Everything goes through a column-equilibrated Householder QR so that the
//! rank test is scale free and projections stay accurate when regressors
//! live on very different scales (co-movements ~1e-4 next to z-scores).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative pivot size below which a design is treated as rank deficient.
pub const RANK_TOL: f64 = 1e-10;

/// Thin QR factorisation of an equilibrated design.
#[derive(Debug, Clone)]
pub struct QrDesign {
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    scale: DVector<f64>,
}

impl QrDesign {
    pub fn new(x: &DMatrix<f64>) -> Result<Self> {
        let (n, k) = x.shape();
        if k == 0 {
            return Err(Error::SingularDesign("design has no columns".into()));
        }
        if n < k {
            return Err(Error::InsufficientData(format!(
                "{n} rows for {k} regressors"
            )));
        }
        let mut scaled = x.clone();
        let mut scale = DVector::zeros(k);
        for j in 0..k {
            let norm = x.column(j).norm();
            if !norm.is_finite() {
                return Err(Error::Domain(format!("column {j} is not finite")));
            }
            if norm == 0.0 {
                return Err(Error::SingularDesign(format!("column {j} is identically zero")));
            }
            scale[j] = norm;
            scaled.column_mut(j).unscale_mut(norm);
        }
        let qr = scaled.qr();
        let r = qr.r();
        let q = qr.q();
        let diag_max = (0..k).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
        for i in 0..k {
            if r[(i, i)].abs() <= RANK_TOL * diag_max {
                return Err(Error::SingularDesign(format!(
                    "design of {k} columns is rank deficient (pivot {i})"
                )));
            }
        }
        Ok(Self { q, r, scale })
    }

    pub fn nrows(&self) -> usize {
        self.q.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.r.ncols()
    }

    /// Least-squares coefficients for each column of `b`.
    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let qtb = self.q.transpose() * b;
        let mut coef = self
            .r
            .solve_upper_triangular(&qtb)
            .expect("R has nonzero pivots by construction");
        for (i, mut row) in coef.row_iter_mut().enumerate() {
            row.unscale_mut(self.scale[i]);
        }
        coef
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        let qtb = self.q.transpose() * b;
        let coef = self
            .r
            .solve_upper_triangular(&qtb)
            .expect("R has nonzero pivots by construction");
        coef.component_div(&self.scale)
    }

    /// Orthogonal projection of `b` onto the column space.
    pub fn project(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        &self.q * (self.q.transpose() * b)
    }

    pub fn project_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        &self.q * (self.q.transpose() * b)
    }

    /// `(X'X)^{-1}` of the original (unscaled) design.
    pub fn xtx_inverse(&self) -> DMatrix<f64> {
        let k = self.ncols();
        let r_inv = self
            .r
            .solve_upper_triangular(&DMatrix::identity(k, k))
            .expect("R has nonzero pivots by construction");
        let mut inv = &r_inv * r_inv.transpose();
        for i in 0..k {
            for j in 0..k {
                inv[(i, j)] /= self.scale[i] * self.scale[j];
            }
        }
        inv
    }
}

/// Ordinary least-squares fit of a single response.
#[derive(Debug, Clone)]
pub struct OlsFit {
    pub coef: DVector<f64>,
    pub residuals: DVector<f64>,
    pub rss: f64,
}

pub fn ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<OlsFit> {
    let qr = QrDesign::new(x)?;
    Ok(ols_with(&qr, x, y))
}

pub fn ols_with(qr: &QrDesign, x: &DMatrix<f64>, y: &DVector<f64>) -> OlsFit {
    let coef = qr.solve_vec(y);
    let residuals = y - x * &coef;
    let rss = residuals.norm_squared();
    OlsFit {
        coef,
        residuals,
        rss,
    }
}

/// Horizontally concatenates blocks with equal row counts.
pub fn hstack(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let n = blocks.first().map_or(0, |b| b.nrows());
    let k: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(n, k);
    let mut col = 0;
    for b in blocks {
        assert_eq!(b.nrows(), n, "hstack row mismatch");
        out.columns_mut(col, b.ncols()).copy_from(b);
        col += b.ncols();
    }
    out
}

/// Sandwich covariance `B M B` with `M = Σ_t u_t² x_t x_t'`, scaled by n/(n-k).
pub fn hc1_covariance(x: &DMatrix<f64>, resid: &DVector<f64>, bread: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, k) = x.shape();
    let mut meat = DMatrix::zeros(k, k);
    for t in 0..n {
        let row = x.row(t);
        let u2 = resid[t] * resid[t];
        meat += row.transpose() * row * u2;
    }
    let dof = (n as f64) / ((n - k).max(1) as f64);
    bread * meat * bread * dof
}

/// Newey-West HAC covariance with Bartlett weights and the given lag bandwidth.
pub fn newey_west_covariance(
    x: &DMatrix<f64>,
    resid: &DVector<f64>,
    bread: &DMatrix<f64>,
    bandwidth: usize,
) -> DMatrix<f64> {
    let (n, k) = x.shape();
    let scores: Vec<DVector<f64>> = (0..n)
        .map(|t| x.row(t).transpose() * resid[t])
        .collect();
    let mut meat = DMatrix::zeros(k, k);
    for s in &scores {
        meat += s * s.transpose();
    }
    for lag in 1..=bandwidth.min(n.saturating_sub(1)) {
        let w = 1.0 - lag as f64 / (bandwidth as f64 + 1.0);
        let mut gamma = DMatrix::zeros(k, k);
        for t in lag..n {
            gamma += &scores[t] * scores[t - lag].transpose();
        }
        meat += (&gamma + gamma.transpose()) * w;
    }
    bread * meat * bread
}
