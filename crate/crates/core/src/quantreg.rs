//! Linear conditional-quantile regression.
//!
//! The solver runs annealed, epsilon-smoothed IRLS to land near the optimum,
//! then takes the `p + 1` best-fitting observations as an interpolation basis
//! and performs exact vertex exchanges (a steepest-edge descent on the check
//! loss with an exact weighted-median line search) until no edge of the
//! current vertex descends. The result is a basic solution of the underlying
//! linear program.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

const IRLS_MAX_ITER: usize = 200;
const IRLS_EPS_START: f64 = 1e-3;
const IRLS_EPS_END: f64 = 1e-10;
const IRLS_PER_LEVEL: usize = 25;
const VERTEX_MAX_ITER: usize = 10_000;

/// Asymmetric absolute loss `ρ_τ(u) = u (τ − 1{u < 0})`.
pub fn check_loss(u: f64, tau: f64) -> f64 {
    if u < 0.0 {
        u * (tau - 1.0)
    } else {
        u * tau
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantileFit {
    pub tau: f64,
    /// Intercept first, then one coefficient per design column.
    pub coefficients: Vec<f64>,
    pub residuals: Vec<f64>,
    pub check_loss: f64,
    pub abs_residual_sum: f64,
}

/// Design matrix for a quantile fit, with the intercept column prepended.
#[derive(Debug, Clone)]
pub struct QuantileDesign {
    x: DMatrix<f64>,
}

impl QuantileDesign {
    /// Builds `[1, columns...]`; each column must have length `n`.
    pub fn from_columns(n: usize, columns: &[&[f64]]) -> Result<Self> {
        if columns.iter().any(|c| c.len() != n) {
            return Err(Error::Domain("design columns have unequal lengths".into()));
        }
        let k = columns.len() + 1;
        let x = DMatrix::from_fn(n, k, |r, c| if c == 0 { 1.0 } else { columns[c - 1][r] });
        Ok(Self { x })
    }

    /// Builds `[1, X]` from an `n × p` matrix.
    pub fn from_matrix(x: &DMatrix<f64>) -> Self {
        let (n, p) = x.shape();
        let aug = DMatrix::from_fn(n, p + 1, |r, c| if c == 0 { 1.0 } else { x[(r, c - 1)] });
        Self { x: aug }
    }

    pub fn nrows(&self) -> usize {
        self.x.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.x.ncols()
    }
}

/// Fits `Q_τ(y | X)` with an intercept.
pub fn qr_fit(x: &DMatrix<f64>, y: &[f64], tau: f64) -> Result<QuantileFit> {
    qr_fit_design(&QuantileDesign::from_matrix(x), y, tau)
}

pub fn qr_fit_design(design: &QuantileDesign, y: &[f64], tau: f64) -> Result<QuantileFit> {
    let x = &design.x;
    let (n, k) = x.shape();
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::Domain(format!("quantile level {tau} outside (0, 1)")));
    }
    if y.len() != n {
        return Err(Error::Domain(format!("{} responses for {n} design rows", y.len())));
    }
    if n <= k {
        return Err(Error::InsufficientData(format!(
            "{n} observations for {k} coefficients (intercept included)"
        )));
    }
    if y.iter().chain(x.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite value in quantile regression input".into()));
    }
    // full column rank check (also scales the rank test)
    linalg::QrDesign::new(x)?;

    let rows: Vec<Vec<f64>> = (0..n).map(|r| x.row(r).iter().copied().collect()).collect();
    let warm = irls(x, y, tau)?;
    let warm_resid: Vec<f64> = (0..n).map(|r| y[r] - dot(&rows[r], &warm)).collect();
    let basis = initial_basis(&rows, &warm_resid, k)?;
    let beta = vertex_descent(&rows, y, tau, basis)?;

    let residuals: Vec<f64> = (0..n).map(|r| y[r] - dot(&rows[r], &beta)).collect();
    let check = residuals.iter().map(|&u| check_loss(u, tau)).sum();
    let abs_sum = residuals.iter().map(|u| u.abs()).sum();
    Ok(QuantileFit {
        tau,
        coefficients: beta,
        residuals,
        check_loss: check,
        abs_residual_sum: abs_sum,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Epsilon-smoothed IRLS with the smoothing annealed geometrically.
fn irls(x: &DMatrix<f64>, y: &[f64], tau: f64) -> Result<Vec<f64>> {
    let (n, k) = x.shape();
    let yv = DVector::from_column_slice(y);
    let mut beta = linalg::ols(x, &yv)?.coef;
    let scale = {
        let mean_abs = y.iter().map(|v| v.abs()).sum::<f64>() / n as f64;
        if mean_abs > 0.0 { mean_abs } else { 1.0 }
    };
    let levels = ((IRLS_EPS_START / IRLS_EPS_END).log10().round() as usize).max(1);
    let mut iter = 0;
    'outer: for level in 0..=levels {
        let eps = scale * IRLS_EPS_START * 10f64.powi(-(level as i32));
        for _ in 0..IRLS_PER_LEVEL {
            if iter >= IRLS_MAX_ITER {
                break 'outer;
            }
            iter += 1;
            let resid = &yv - x * &beta;
            let mut xtwx = DMatrix::<f64>::zeros(k, k);
            let mut xtwy = DVector::<f64>::zeros(k);
            for r in 0..n {
                let u = resid[r];
                let side = if u < 0.0 { 1.0 - tau } else { tau };
                let w = side / u.abs().max(eps);
                let row = x.row(r);
                for a in 0..k {
                    xtwy[a] += w * row[a] * y[r];
                    for b in a..k {
                        xtwx[(a, b)] += w * row[a] * row[b];
                    }
                }
            }
            for a in 0..k {
                for b in 0..a {
                    xtwx[(a, b)] = xtwx[(b, a)];
                }
            }
            let next = match xtwx.clone().cholesky() {
                Some(ch) => ch.solve(&xtwy),
                None => match xtwx.lu().solve(&xtwy) {
                    Some(b) => b,
                    None => break 'outer,
                },
            };
            let change = (&next - &beta).norm() / (1.0 + beta.norm());
            beta = next;
            if change < 1e-12 {
                continue 'outer;
            }
        }
    }
    Ok(beta.iter().copied().collect())
}

/// Greedily picks the `k` smallest-|residual| rows that are linearly independent.
fn initial_basis(rows: &[Vec<f64>], resid: &[f64], k: usize) -> Result<Vec<usize>> {
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by(|&a, &b| resid[a].abs().total_cmp(&resid[b].abs()).then(a.cmp(&b)));
    let scale: Vec<f64> = (0..k)
        .map(|c| rows.iter().map(|r| r[c].abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE))
        .collect();
    let mut basis = Vec::with_capacity(k);
    let mut ortho: Vec<Vec<f64>> = Vec::with_capacity(k);
    for &i in &order {
        let mut v: Vec<f64> = rows[i].iter().zip(&scale).map(|(a, s)| a / s).collect();
        let norm0 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        for q in &ortho {
            let p = dot(&v, q);
            v.iter_mut().zip(q).for_each(|(a, b)| *a -= p * b);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-9 * norm0.max(1e-300) {
            v.iter_mut().for_each(|a| *a /= norm);
            ortho.push(v);
            basis.push(i);
            if basis.len() == k {
                return Ok(basis);
            }
        }
    }
    Err(Error::SingularDesign("could not find a nonsingular interpolation basis".into()))
}

fn basis_inverse(rows: &[Vec<f64>], basis: &[usize]) -> Result<DMatrix<f64>> {
    let k = basis.len();
    let xb = DMatrix::from_fn(k, k, |r, c| rows[basis[r]][c]);
    xb.try_inverse()
        .ok_or_else(|| Error::SingularDesign("interpolation basis became singular".into()))
}

/// Exact descent over vertices of the check-loss polyhedron.
fn vertex_descent(rows: &[Vec<f64>], y: &[f64], tau: f64, mut basis: Vec<usize>) -> Result<Vec<f64>> {
    let n = rows.len();
    let k = basis.len();
    let y_scale = y.iter().map(|v| v.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let zero_tol = 1e-12 * y_scale;
    let mut in_basis = vec![false; n];
    basis.iter().for_each(|&i| in_basis[i] = true);

    for _ in 0..VERTEX_MAX_ITER {
        let inv = basis_inverse(rows, &basis)?;
        let yb = DVector::from_iterator(k, basis.iter().map(|&i| y[i]));
        let beta = &inv * yb;
        let beta: Vec<f64> = beta.iter().copied().collect();
        let resid: Vec<f64> = (0..n)
            .map(|r| if in_basis[r] { 0.0 } else { y[r] - dot(&rows[r], &beta) })
            .collect();

        // Directional derivative along each edge d = ±inv[:, m]; a_i = x_i' d.
        let mut best: Option<(f64, usize, f64)> = None;
        for m in 0..k {
            let col: Vec<f64> = (0..k).map(|r| inv[(r, m)]).collect();
            let a: Vec<f64> = rows.iter().map(|row| dot(row, &col)).collect();
            for sign in [1.0, -1.0] {
                let mut deriv = 0.0;
                for i in 0..n {
                    let ai = sign * a[i];
                    let r = resid[i];
                    deriv += if in_basis[i] || r.abs() <= zero_tol {
                        // residual moves to -ai·t from zero
                        if ai > 0.0 { (1.0 - tau) * ai } else { -tau * ai }
                    } else if r > 0.0 {
                        -tau * ai
                    } else {
                        (1.0 - tau) * ai
                    };
                }
                let scale: f64 = a.iter().map(|v| v.abs()).sum::<f64>().max(f64::MIN_POSITIVE);
                let rel = deriv / scale;
                if rel < -1e-12 && best.is_none_or(|(b, _, _)| rel < b) {
                    best = Some((rel, m, sign));
                }
            }
        }
        let Some((_, leaving_pos, sign)) = best else {
            return Ok(beta);
        };

        // Exact line search: walk breakpoints until the slope turns nonnegative.
        let col: Vec<f64> = (0..k).map(|r| sign * inv[(r, leaving_pos)]).collect();
        let a: Vec<f64> = rows.iter().map(|row| dot(row, &col)).collect();
        let mut slope = 0.0;
        let mut breaks: Vec<(f64, usize)> = Vec::new();
        for i in 0..n {
            let ai = a[i];
            let r = resid[i];
            if in_basis[i] || r.abs() <= zero_tol {
                slope += if ai > 0.0 { (1.0 - tau) * ai } else { -tau * ai };
                continue;
            }
            slope += if r > 0.0 { -tau * ai } else { (1.0 - tau) * ai };
            if ai != 0.0 {
                let t = r / ai;
                if t > 0.0 {
                    breaks.push((t, i));
                }
            }
        }
        breaks.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.cmp(&q.1)));
        let mut entering = None;
        for &(_, i) in &breaks {
            slope += a[i].abs();
            if slope >= 0.0 {
                entering = Some(i);
                break;
            }
        }
        let Some(entering) = entering else {
            return Err(Error::Domain("check loss unbounded below along an edge".into()));
        };
        let leaving = basis[leaving_pos];
        in_basis[leaving] = false;
        in_basis[entering] = true;
        basis[leaving_pos] = entering;
    }
    Err(Error::Domain("vertex descent did not converge".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fit_cols(cols: &[&[f64]], y: &[f64], tau: f64) -> QuantileFit {
        qr_fit_design(&QuantileDesign::from_columns(y.len(), cols).unwrap(), y, tau).unwrap()
    }

    #[test]
    fn intercept_only_median() {
        let fit = fit_cols(&[], &[1.0, 2.0, 9.0], 0.5);
        assert!((fit.coefficients[0] - 2.0).abs() < 1e-12);
        assert!((fit.check_loss - 0.5 * fit.abs_residual_sum).abs() < 1e-12);
    }

    #[test]
    fn exact_line_any_tau() {
        let x: Vec<f64> = (0..12).map(|i| i as f64 * 0.7 - 2.0).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        for tau in [0.05, 0.5, 0.95] {
            let fit = fit_cols(&[&x], &y, tau);
            assert!((fit.coefficients[1] - 2.0).abs() < 1e-10);
            assert!(fit.coefficients[0].abs() < 1e-10);
            assert!(fit.residuals.iter().all(|r| r.abs() < 1e-10));
            assert!(fit.check_loss < 1e-10);
        }
    }

    #[test]
    fn residual_identity_holds() {
        let x = [0.3, -1.2, 2.2, 0.9, -0.4, 1.7, 0.1];
        let y = [1.0, -0.5, 3.1, 0.2, 0.0, 2.5, -0.3];
        let fit = fit_cols(&[&x], &y, 0.3);
        for i in 0..y.len() {
            let pred = fit.coefficients[0] + fit.coefficients[1] * x[i];
            assert_eq!(fit.residuals[i], y[i] - pred);
        }
    }

    #[test]
    fn errors() {
        assert!(matches!(
            qr_fit_design(&QuantileDesign::from_columns(2, &[&[1.0, 2.0]]).unwrap(), &[1.0, 2.0], 0.5),
            Err(Error::InsufficientData(_))
        ));
        let c = [1.0, 2.0, 3.0, 4.0, 5.0];
        let c2 = [2.0, 4.0, 6.0, 8.0, 10.0];
        assert!(matches!(
            qr_fit_design(&QuantileDesign::from_columns(5, &[&c, &c2]).unwrap(), &c, 0.5),
            Err(Error::SingularDesign(_))
        ));
        assert!(qr_fit_design(&QuantileDesign::from_columns(5, &[&c]).unwrap(), &c, 1.0).is_err());
    }
}
