//! Post-double-selection LASSO over the excluded instruments.

use nalgebra::{DMatrix, DVector};

use super::iv::{estimate_from_fit, two_stage_least_squares};
use super::sample::LinkSample;
use super::{Method, StructuralEstimate, N_CHANNELS};
use crate::error::{Error, Result};
use crate::linalg::{self, QrDesign};
use crate::stats;

const MAX_SWEEPS: usize = 10_000;
const MAX_SIGMA_ITERS: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Penalty {
    PlugIn,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionTarget {
    Outcome,
    Channel(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoSelection {
    pub target: SelectionTarget,
    /// Instrument column indices with nonzero coefficients, ascending.
    pub selected: Vec<usize>,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PostDoubleSelection {
    /// Outcome selection first, then one per channel.
    pub per_target: Vec<LassoSelection>,
    /// Instruments used downstream.
    pub instruments: Vec<usize>,
    /// Set when selection was unusable and the full set was substituted.
    pub fallback: bool,
}

fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Minimizes `Σ (y − Xb)² + λ Σ |b_j|` by cyclic coordinate descent.
/// No intercept: centre the data first.
pub fn lasso_coordinate_descent(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> DVector<f64> {
    let p = x.ncols();
    let norms: Vec<f64> = (0..p).map(|j| x.column(j).norm_squared()).collect();
    let mut b: DVector<f64> = DVector::zeros(p);
    let mut resid = y.clone();
    let scale = y.norm().max(1e-300);
    for _ in 0..MAX_SWEEPS {
        let mut max_step: f64 = 0.0;
        for j in 0..p {
            if norms[j] <= 0.0 {
                continue;
            }
            let col = x.column(j);
            let rho = col.dot(&resid) + norms[j] * b[j];
            let new = soft_threshold(rho, lambda / 2.0) / norms[j];
            let delta = new - b[j];
            if delta != 0.0 {
                resid.axpy(-delta, &col, 1.0);
                b[j] = new;
                max_step = max_step.max(delta.abs() * norms[j].sqrt());
            }
        }
        if max_step <= 1e-12 * scale {
            break;
        }
    }
    b
}

/// `2.2 σ √n Φ⁻¹(1 − 0.05 / (2p))`
pub fn plug_in_lambda(sigma: f64, n: usize, p: usize) -> f64 {
    2.2 * sigma * (n as f64).sqrt() * stats::normal_quantile(1.0 - 0.05 / (2.0 * p as f64))
}

struct Partialled {
    z: DMatrix<f64>,
    usable: Vec<bool>,
}

/// Removes the controls from every instrument and scales each to `‖z‖² = n`.
fn partial_instruments(sample: &LinkSample, w_qr: &QrDesign) -> Partialled {
    let n = sample.n_obs() as f64;
    let mut z = &sample.instruments - w_qr.project(&sample.instruments);
    let mut usable = Vec::with_capacity(z.ncols());
    for j in 0..z.ncols() {
        let orig = sample.instruments.column(j).norm();
        let norm = z.column(j).norm();
        let ok = norm > 1e-10 * (orig + 1.0);
        if ok {
            z.column_mut(j).scale_mut(n.sqrt() / norm);
        } else {
            z.column_mut(j).fill(0.0);
        }
        usable.push(ok);
    }
    Partialled { z, usable }
}

fn target_vector(sample: &LinkSample, target: SelectionTarget) -> Result<DVector<f64>> {
    match target {
        SelectionTarget::Outcome => Ok(sample.comovement.clone()),
        SelectionTarget::Channel(c) if c < N_CHANNELS => Ok(sample.channels.column(c).into_owned()),
        SelectionTarget::Channel(c) => Err(Error::Domain(format!("channel index {c} out of range"))),
    }
}

fn support(b: &DVector<f64>) -> Vec<usize> {
    b.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(j, _)| j).collect()
}

fn select(z: &Partialled, v: &DVector<f64>, target: SelectionTarget, penalty: Penalty) -> Result<LassoSelection> {
    let n = v.len();
    let p = z.z.ncols();
    let (lambda, b) = match penalty {
        Penalty::Fixed(lambda) => {
            if lambda.is_nan() || lambda < 0.0 {
                return Err(Error::Domain(format!("penalty {lambda} must be non-negative")));
            }
            (lambda, lasso_coordinate_descent(&z.z, v, lambda))
        }
        Penalty::PlugIn => {
            let mut sigma = stats::sd(v.as_slice());
            let mut lambda = plug_in_lambda(sigma, n, p);
            let mut b = lasso_coordinate_descent(&z.z, v, lambda);
            for _ in 0..MAX_SIGMA_ITERS {
                let sel = support(&b);
                let resid = if sel.is_empty() {
                    v.clone()
                } else {
                    let zs = z.z.select_columns(sel.iter());
                    match linalg::ols(&zs, v) {
                        Ok(fit) => fit.residuals,
                        Err(_) => break,
                    }
                };
                let next = stats::sd(resid.as_slice());
                if (next - sigma).abs() <= 1e-8 * sigma.max(1e-300) {
                    break;
                }
                sigma = next;
                lambda = plug_in_lambda(sigma, n, p);
                b = lasso_coordinate_descent(&z.z, v, lambda);
            }
            (lambda, b)
        }
    };
    let selected = support(&b).into_iter().filter(|j| z.usable[*j]).collect();
    Ok(LassoSelection {
        target,
        selected,
        lambda,
    })
}

/// Plug-in LASSO selection for one channel.
pub fn lasso_select(sample: &LinkSample, channel: usize) -> Result<LassoSelection> {
    lasso_select_with(sample, SelectionTarget::Channel(channel), Penalty::PlugIn)
}

pub fn lasso_select_with(sample: &LinkSample, target: SelectionTarget, penalty: Penalty) -> Result<LassoSelection> {
    let w_qr = QrDesign::new(&sample.controls())?;
    let z = partial_instruments(sample, &w_qr);
    let v = target_vector(sample, target)?;
    let v = &v - w_qr.project_vec(&v);
    select(&z, &v, target, penalty)
}

/// Union of the outcome and per-channel selections.
pub fn post_double_selection(sample: &LinkSample, penalty: Penalty) -> Result<PostDoubleSelection> {
    let w_qr = QrDesign::new(&sample.controls())?;
    let z = partial_instruments(sample, &w_qr);
    let targets = std::iter::once(SelectionTarget::Outcome).chain((0..N_CHANNELS).map(SelectionTarget::Channel));
    let mut per_target = Vec::with_capacity(N_CHANNELS + 1);
    for target in targets {
        let v = target_vector(sample, target)?;
        let v = &v - w_qr.project_vec(&v);
        per_target.push(select(&z, &v, target, penalty)?);
    }
    let mut union: Vec<usize> = per_target.iter().flat_map(|s| s.selected.iter().copied()).collect();
    union.sort_unstable();
    union.dedup();
    let empty_channel = per_target
        .iter()
        .any(|s| matches!(s.target, SelectionTarget::Channel(_)) && s.selected.is_empty());
    let fallback = empty_channel || union.len() < N_CHANNELS;
    let instruments = if fallback {
        (0..sample.instruments.ncols()).collect()
    } else {
        union
    };
    Ok(PostDoubleSelection {
        per_target,
        instruments,
        fallback,
    })
}

/// 2SLS re-run on the post-double-selection instrument set.
pub fn fit_lasso_iv(sample: &LinkSample) -> Result<(StructuralEstimate, PostDoubleSelection)> {
    let pds = post_double_selection(sample, Penalty::PlugIn)?;
    let z = sample.instruments.select_columns(pds.instruments.iter());
    let fit = two_stage_least_squares(&sample.comovement, &sample.channels, &sample.controls(), &z)?;
    Ok((estimate_from_fit(Method::LassoIv, &fit), pds))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_penalty_is_least_squares() {
        let x = DMatrix::from_fn(50, 3, |r, c| ((r * 7 + c * 13) % 17) as f64 - 8.0);
        let truth = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let y = &x * &truth + DVector::from_fn(50, |r, _| ((r * 5) % 3) as f64 * 0.1);
        let b = lasso_coordinate_descent(&x, &y, 0.0);
        let ols = linalg::ols(&x, &y).unwrap();
        assert!((b - ols.coef).amax() < 1e-8);
    }

    #[test]
    fn huge_penalty_selects_nothing() {
        let x = DMatrix::from_fn(30, 4, |r, c| (r + c) as f64);
        let y = DVector::from_fn(30, |r, _| r as f64);
        assert!(support(&lasso_coordinate_descent(&x, &y, 1e300)).is_empty());
    }
}
