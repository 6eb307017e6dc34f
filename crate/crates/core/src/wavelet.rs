//! Maximal-overlap discrete wavelet transform with circular boundaries.
//!
//! The pyramid algorithm uses the rescaled filters `h/√2`, `g/√2` and an
//! upsampling stride of `2^{j-1}` at level `j`. Multiresolution details are
//! obtained by inverting each level's wavelet coefficients in isolation, so
//! `Σ_j D_j + S_J` reproduces the input exactly up to rounding.

use std::io::Write;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::ReturnPanel;

pub const DEFAULT_LEVELS: usize = 6;

/// Orthonormal scaling filters available to the transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum WaveletFilter {
    Haar,
    D4,
    #[default]
    #[serde(rename = "LA8", alias = "La8")]
    La8,
}

/// Daubechies least-asymmetric, length 8.
const LA8_SCALING: [f64; 8] = [
    -0.0757657147893407,
    -0.0296355276459541,
    0.4976186676324578,
    0.8037387518052163,
    0.2978577956055422,
    -0.0992195435769354,
    -0.0126039672622612,
    0.0322231006040713,
];

impl WaveletFilter {
    pub fn id(&self) -> &'static str {
        match self {
            WaveletFilter::Haar => "Haar",
            WaveletFilter::D4 => "D4",
            WaveletFilter::La8 => "LA8",
        }
    }

    /// Scaling (low-pass) filter `g`, normalised so that `Σ g = √2`.
    pub fn scaling(&self) -> Vec<f64> {
        match self {
            WaveletFilter::Haar => vec![std::f64::consts::FRAC_1_SQRT_2; 2],
            WaveletFilter::D4 => {
                let s3 = 3f64.sqrt();
                let d = 4.0 * std::f64::consts::SQRT_2;
                vec![(1.0 + s3) / d, (3.0 + s3) / d, (3.0 - s3) / d, (1.0 - s3) / d]
            }
            WaveletFilter::La8 => LA8_SCALING.to_vec(),
        }
    }

    /// Wavelet (high-pass) filter via the quadrature-mirror relation
    /// `h_l = (-1)^l g_{L-1-l}`.
    pub fn wavelet(&self) -> Vec<f64> {
        let g = self.scaling();
        let len = g.len();
        (0..len)
            .map(|l| if l % 2 == 0 { g[len - 1 - l] } else { -g[len - 1 - l] })
            .collect()
    }
}

/// Raw MODWT coefficients: one wavelet vector per level plus the final scaling vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ModwtCoefficients {
    pub wavelet: Vec<Vec<f64>>,
    pub scaling: Vec<f64>,
    pub filter: WaveletFilter,
}

/// Additive multiresolution analysis of one series.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletDecomposition {
    /// `details[s-1]` is the scale-`s` detail series.
    pub details: Vec<Vec<f64>>,
    pub smooth: Vec<f64>,
    pub filter: WaveletFilter,
    pub levels: usize,
}

impl WaveletDecomposition {
    pub fn filter_id(&self) -> &'static str {
        self.filter.id()
    }

    pub fn len(&self) -> usize {
        self.smooth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.smooth.is_empty()
    }

    /// Detail series at `scale` (1-based).
    pub fn detail(&self, scale: usize) -> Option<&[f64]> {
        scale.checked_sub(1).and_then(|i| self.details.get(i)).map(Vec::as_slice)
    }

    /// Copy restricted to rows `range`.
    pub fn slice(&self, range: std::ops::Range<usize>) -> WaveletDecomposition {
        WaveletDecomposition {
            details: self.details.iter().map(|d| d[range.clone()].to_vec()).collect(),
            smooth: self.smooth[range].to_vec(),
            filter: self.filter,
            levels: self.levels,
        }
    }
}

fn check_input(x: &[f64], levels: usize) -> Result<()> {
    if levels == 0 {
        return Err(Error::Domain("at least one decomposition level required".into()));
    }
    let min_len = 1usize.checked_shl(levels as u32).unwrap_or(usize::MAX);
    if x.len() < min_len {
        return Err(Error::InsufficientData(format!(
            "series of length {} too short for {levels} levels (need {min_len})",
            x.len()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite value in series".into()));
    }
    Ok(())
}

/// One analysis step: returns (wavelet, scaling) coefficients at level `j`.
fn analysis_step(v: &[f64], h: &[f64], g: &[f64], j: usize) -> (Vec<f64>, Vec<f64>) {
    let n = v.len();
    let stride = (1usize << (j - 1)) % n;
    let mut w_out = vec![0.0; n];
    let mut v_out = vec![0.0; n];
    for t in 0..n {
        let mut idx = t;
        let (mut w, mut s) = (0.0, 0.0);
        for l in 0..h.len() {
            w += h[l] * v[idx];
            s += g[l] * v[idx];
            idx = (idx + n - stride) % n;
        }
        w_out[t] = w;
        v_out[t] = s;
    }
    (w_out, v_out)
}

/// One synthesis step: rebuilds level `j-1` scaling coefficients.
fn synthesis_step(w: Option<&[f64]>, v: Option<&[f64]>, h: &[f64], g: &[f64], j: usize, n: usize) -> Vec<f64> {
    let stride = (1usize << (j - 1)) % n;
    let mut out = vec![0.0; n];
    for (t, o) in out.iter_mut().enumerate() {
        let mut idx = t;
        let mut acc = 0.0;
        for l in 0..h.len() {
            if let Some(w) = w {
                acc += h[l] * w[idx];
            }
            if let Some(v) = v {
                acc += g[l] * v[idx];
            }
            idx = (idx + stride) % n;
        }
        *o = acc;
    }
    out
}

fn rescaled(filter: WaveletFilter) -> (Vec<f64>, Vec<f64>) {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let h = filter.wavelet().into_iter().map(|c| c * r).collect();
    let g = filter.scaling().into_iter().map(|c| c * r).collect();
    (h, g)
}

pub fn modwt_coefficients(x: &[f64], levels: usize, filter: WaveletFilter) -> Result<ModwtCoefficients> {
    check_input(x, levels)?;
    let (h, g) = rescaled(filter);
    let mut v = x.to_vec();
    let mut wavelet = Vec::with_capacity(levels);
    for j in 1..=levels {
        let (w, next) = analysis_step(&v, &h, &g, j);
        wavelet.push(w);
        v = next;
    }
    Ok(ModwtCoefficients {
        wavelet,
        scaling: v,
        filter,
    })
}

/// Multiresolution analysis from precomputed coefficients.
pub fn mra(coefs: &ModwtCoefficients) -> WaveletDecomposition {
    let (h, g) = rescaled(coefs.filter);
    let levels = coefs.wavelet.len();
    let n = coefs.scaling.len();
    let details = (1..=levels)
        .map(|j| {
            let mut v = synthesis_step(Some(&coefs.wavelet[j - 1]), None, &h, &g, j, n);
            for k in (1..j).rev() {
                v = synthesis_step(None, Some(&v), &h, &g, k, n);
            }
            v
        })
        .collect();
    let mut smooth = coefs.scaling.clone();
    for k in (1..=levels).rev() {
        smooth = synthesis_step(None, Some(&smooth), &h, &g, k, n);
    }
    WaveletDecomposition {
        details,
        smooth,
        filter: coefs.filter,
        levels,
    }
}

/// LA8 MODWT multiresolution analysis.
pub fn modwt(x: &[f64], levels: usize) -> Result<WaveletDecomposition> {
    modwt_with(x, levels, WaveletFilter::La8)
}

pub fn modwt_with(x: &[f64], levels: usize, filter: WaveletFilter) -> Result<WaveletDecomposition> {
    Ok(mra(&modwt_coefficients(x, levels, filter)?))
}

/// Decomposes every market column, preserving panel order.
pub fn modwt_panel(panel: &ReturnPanel, levels: usize, filter: WaveletFilter) -> Result<Vec<WaveletDecomposition>> {
    (0..panel.n_markets())
        .into_par_iter()
        .map(|i| {
            modwt_with(&panel.series(i), levels, filter)
                .map_err(|e| e.context(format!("market {}", panel.market_ids()[i])))
        })
        .collect()
}

/// Writes `date,d1..dJ,smooth` for audit.
pub fn write_decomposition_csv<W: Write>(
    dates: &[NaiveDate],
    decomposition: &WaveletDecomposition,
    sink: W,
) -> Result<()> {
    if dates.len() != decomposition.len() {
        return Err(Error::Domain("dates and decomposition lengths differ".into()));
    }
    let mut w = csv::Writer::from_writer(sink);
    let mut header = vec!["date".to_string()];
    header.extend((1..=decomposition.levels).map(|s| format!("d{s}")));
    header.push("smooth".into());
    w.write_record(&header)?;
    for (t, date) in dates.iter().enumerate() {
        let mut rec = vec![date.to_string()];
        rec.extend(decomposition.details.iter().map(|d| format!("{:?}", d[t])));
        rec.push(format!("{:?}", decomposition.smooth[t]));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
