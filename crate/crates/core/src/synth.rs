//! Synthetic panels with known ground truth.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use chrono::{Datelike, Days, NaiveDate, Weekday};
use indexmap::IndexMap;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::attribution::{InstrumentSpec, LinkSample, Regime, N_CHANNELS};
use crate::error::{Error, Result};
use crate::ingest::{
    channel_composites, global_factor, Channel, ChannelPanel, MarketClass, PricePanel, RawSeriesTable,
    write_price_csv, write_series_csv, ReturnPanel, SubPeriod,
};
use crate::report::PipelineConfig;
use crate::wavelet;

/// Lagged dependence of `target` on the scale-`scale` detail of `source`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    pub source: usize,
    pub target: usize,
    pub strength: f64,
    pub scale: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_markets: usize,
    /// Number of return rows.
    pub n_obs: usize,
    pub seed: u64,
    pub start_date: NaiveDate,
    /// Equal-length consecutive sub-periods `P1..Pn`.
    pub n_periods: usize,
    pub channel_ar: [f64; N_CHANNELS],
    /// One row of channel loadings per market.
    pub loadings: Vec<[f64; N_CHANNELS]>,
    /// Relative channel weights in the conditional co-movement.
    pub comovement_weights: [f64; N_CHANNELS],
    /// Sensitivity of common volatility to the weighted channel index.
    pub volatility_sensitivity: f64,
    /// Multiplier on the direct `loading · channel` term of returns.
    pub direct_exposure: f64,
    pub coupling: Vec<Coupling>,
    pub noise_sd: f64,
    pub return_scale: f64,
    /// Student-t degrees of freedom for shocks; Gaussian when absent.
    pub heavy_tail_dof: Option<f64>,
    /// Channel innovation variance doubles in the second half.
    pub two_regime: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let n = 6;
        Self {
            n_markets: n,
            n_obs: 3000,
            seed: 7,
            start_date: NaiveDate::from_ymd_opt(2010, 1, 4).expect("valid date"),
            n_periods: 4,
            channel_ar: [0.95; N_CHANNELS],
            loadings: (0..n).map(|i| [0.4 + 0.05 * i as f64; N_CHANNELS]).collect(),
            comovement_weights: [0.1, 0.8, 0.05, 0.025, 0.025],
            volatility_sensitivity: 0.8,
            direct_exposure: 0.3,
            coupling: vec![
                Coupling { source: 0, target: 1, strength: 1.0, scale: 5 },
                Coupling { source: 0, target: 3, strength: 1.0, scale: 5 },
                Coupling { source: 2, target: 4, strength: 1.0, scale: 5 },
                Coupling { source: 1, target: 5, strength: 1.0, scale: 5 },
            ],
            noise_sd: 1.0,
            return_scale: 0.01,
            heavy_tail_dof: None,
            two_regime: false,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(phi) = self.channel_ar.iter().find(|p| !(p.abs() < 1.0)) {
            return Err(Error::Domain(format!("AR coefficient {phi} outside (-1, 1)")));
        }
        if self.comovement_weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite())
            || self.comovement_weights.iter().sum::<f64>() <= 0.0
        {
            return Err(Error::Domain("comovement weights must be non-negative and not all zero".into()));
        }
        if self.n_markets < 2 {
            return Err(Error::InsufficientData("at least 2 markets required".into()));
        }
        if self.loadings.len() != self.n_markets {
            return Err(Error::Domain(format!(
                "{} loading rows for {} markets",
                self.loadings.len(),
                self.n_markets
            )));
        }
        if self.n_periods == 0 || self.n_obs < 128 * self.n_periods.max(1) {
            return Err(Error::InsufficientData(format!(
                "{} rows is too short for {} periods",
                self.n_obs, self.n_periods
            )));
        }
        for c in &self.coupling {
            if c.source >= self.n_markets || c.target >= self.n_markets || c.source == c.target {
                return Err(Error::Domain(format!("invalid coupling {} -> {}", c.source, c.target)));
            }
            if !(1..=6).contains(&c.scale) {
                return Err(Error::Domain(format!("coupling scale {} outside 1..6", c.scale)));
            }
        }
        if let Some(dof) = self.heavy_tail_dof {
            if !(dof > 2.0) {
                return Err(Error::Domain(format!("t degrees of freedom {dof} must exceed 2")));
            }
        }
        if !(self.noise_sd >= 0.0 && self.return_scale > 0.0 && self.volatility_sensitivity >= 0.0) {
            return Err(Error::Domain("noise, scale and sensitivity must be non-negative".into()));
        }
        Ok(())
    }

    pub fn market_ids(&self) -> Vec<String> {
        (0..self.n_markets).map(|i| format!("M{}", i + 1)).collect()
    }

    /// First half advanced, the rest emerging.
    pub fn market_classes(&self) -> Vec<MarketClass> {
        let half = self.n_markets.div_ceil(2);
        (0..self.n_markets)
            .map(|i| if i < half { MarketClass::Advanced } else { MarketClass::Emerging })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// Normalized comovement weights: the population share vector.
    pub shares: [f64; N_CHANNELS],
    pub dominant: Channel,
    pub coupling: Vec<Coupling>,
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub prices: PricePanel,
    /// Channel sources on the price calendar.
    pub raw: RawSeriesTable,
    pub returns: ReturnPanel,
    pub channels: ChannelPanel,
    pub schedule: Vec<SubPeriod>,
    pub truth: GroundTruth,
}

struct Shocks {
    rng: ChaCha8Rng,
    t_dist: Option<(StudentT<f64>, f64)>,
}

impl Shocks {
    fn new(seed: u64, dof: Option<f64>) -> Result<Self> {
        let t_dist = match dof {
            Some(v) => Some((
                StudentT::new(v).map_err(|e| Error::Domain(e.to_string()))?,
                ((v - 2.0) / v).sqrt(),
            )),
            None => None,
        };
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            t_dist,
        })
    }

    fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// Unit-variance shock, heavy-tailed when configured.
    fn shock(&mut self) -> f64 {
        match &self.t_dist {
            Some((t, scale)) => t.sample(&mut self.rng) * scale,
            None => self.normal(),
        }
    }
}

/// `n` weekdays starting on or after `start`.
pub fn business_days(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d + Days::new(1);
    }
    out
}

/// Consecutive equal-length periods over `dates`.
pub fn equal_schedule(dates: &[NaiveDate], n_periods: usize) -> Result<Vec<SubPeriod>> {
    let t = dates.len();
    (0..n_periods)
        .map(|k| {
            let lo = k * t / n_periods;
            let hi = (k + 1) * t / n_periods - 1;
            SubPeriod::new(format!("P{}", k + 1), dates[lo], dates[hi])
        })
        .collect()
}

fn latent_channels(cfg: &SynthConfig, rows: usize, shocks: &mut Shocks) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(rows, N_CHANNELS);
    for c in 0..N_CHANNELS {
        let phi = cfg.channel_ar[c];
        let innov = (1.0 - phi * phi).sqrt();
        let mut x = shocks.normal();
        for t in 0..rows {
            let boost = if cfg.two_regime && t >= rows / 2 { 2f64.sqrt() } else { 1.0 };
            if t > 0 {
                x = phi * x + innov * boost * shocks.normal();
            }
            m[(t, c)] = x;
        }
    }
    m
}

/// Observable source series whose composites track the latent channels.
fn raw_sources(latent: &DMatrix<f64>, dates: &[NaiveDate], shocks: &mut Shocks) -> RawSeriesTable {
    let rows = latent.nrows();
    let noise = 0.3;
    let noisy = |c: Channel, shocks: &mut Shocks| -> Vec<f64> {
        (0..rows).map(|t| latent[(t, c.index())] + noise * shocks.normal()).collect()
    };
    let affine = |v: Vec<f64>, a: f64, b: f64| -> Vec<f64> { v.into_iter().map(|x| a + b * x).collect() };

    let trade = noisy(Channel::Trade, shocks);
    let mut dollar = vec![100.0; rows];
    for t in 1..rows {
        dollar[t] = dollar[t - 1] * (0.004 * trade[t]).exp();
    }
    let mon = noisy(Channel::Monetary, shocks);
    let mut ffr = vec![2.0; rows];
    for t in 1..rows {
        ffr[t] = ffr[t - 1] + 0.05 * mon[t];
    }

    let mut cols: IndexMap<String, Vec<f64>> = IndexMap::new();
    cols.insert("VIX".into(), affine(noisy(Channel::Financial, shocks), 20.0, 5.0));
    cols.insert("HYOAS".into(), affine(noisy(Channel::Financial, shocks), 4.0, 1.0));
    cols.insert("STLFSI".into(), noisy(Channel::Financial, shocks));
    cols.insert("DTWEXBGS".into(), dollar);
    cols.insert("GPR".into(), affine(noisy(Channel::Geopolitical, shocks), 100.0, 20.0));
    cols.insert("GEOEVENT".into(), noisy(Channel::Geopolitical, shocks));
    cols.insert("UMCSENT".into(), affine(noisy(Channel::Behavioural, shocks), 80.0, 5.0));
    cols.insert("FFR".into(), ffr);
    cols.insert("T10Y3M".into(), affine(noisy(Channel::Monetary, shocks), 1.0, 0.5));
    cols.insert("QE".into(), noisy(Channel::Monetary, shocks));
    RawSeriesTable::from_dense(dates.to_vec(), cols)
}

/// Channel-driven returns whose co-movement loads on the channels in
/// proportion to `comovement_weights`.
///
/// `r_it = scale · (direct · L_i·Ch_t + ‖L_i‖ √v_t u_t + σ e_it)` with a common
/// shock `u_t` and `v_t = exp(λ w·Ch_t − λ²‖w‖²/2)`. For Gaussian channels
/// Stein's lemma gives `Cov(v_t, Ch_t) = λ w`, so the linear projection of
/// `r_i r_j` on the channels is `‖L_i‖‖L_j‖ λ w`; the quadratic direct term is
/// orthogonal to them.
pub fn gen_channel_dgp(cfg: &SynthConfig) -> Result<SynthData> {
    cfg.validate()?;
    let t = cfg.n_obs;
    let n = cfg.n_markets;
    let mut shocks = Shocks::new(cfg.seed, cfg.heavy_tail_dof)?;
    let price_dates = business_days(cfg.start_date, t + 1);
    let return_dates = price_dates[1..].to_vec();
    let schedule = equal_schedule(&return_dates, cfg.n_periods)?;

    let latent = latent_channels(cfg, t + 1, &mut shocks);
    let raw = raw_sources(&latent, &price_dates, &mut shocks);
    let (_, ch) = channel_composites(&raw, &schedule)?;

    let wsum: f64 = cfg.comovement_weights.iter().sum();
    let mut w = [0.0; N_CHANNELS];
    for c in 0..N_CHANNELS {
        w[c] = cfg.comovement_weights[c] / wsum;
    }
    let kappa: Vec<f64> = cfg.loadings.iter().map(|l| l.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();

    let lambda = cfg.volatility_sensitivity;
    let w_norm2: f64 = w.iter().map(|x| x * x).sum();
    let mut r = DMatrix::zeros(t, n);
    for row in 0..t {
        let index: f64 = (0..N_CHANNELS).map(|c| w[c] * ch[(row, c)]).sum();
        let v = (lambda * index - 0.5 * lambda * lambda * w_norm2).exp();
        let u = shocks.shock();
        for i in 0..n {
            let direct: f64 = (0..N_CHANNELS).map(|c| cfg.loadings[i][c] * ch[(row, c)]).sum();
            let e = shocks.shock();
            r[(row, i)] = cfg.return_scale * (cfg.direct_exposure * direct + kappa[i] * v.sqrt() * u + cfg.noise_sd * e);
        }
    }
    for c in &cfg.coupling {
        let src: Vec<f64> = r.column(c.source).iter().copied().collect();
        let decomp = wavelet::modwt(&src, 6)?;
        let detail = decomp.detail(c.scale).expect("scale validated").to_vec();
        for row in 1..t {
            r[(row, c.target)] += c.strength * detail[row - 1];
        }
    }

    let ids = cfg.market_ids();
    let classes = cfg.market_classes();
    let mut prices = DMatrix::zeros(t + 1, n);
    for i in 0..n {
        prices[(0, i)] = 100.0;
        for row in 0..t {
            prices[(row + 1, i)] = prices[(row, i)] * r[(row, i)].exp();
        }
    }
    let prices = PricePanel::new(price_dates, prices, ids.clone(), classes.clone())?;
    let returns = ReturnPanel::new(return_dates.clone(), r, ids, classes)?;
    let channels = ChannelPanel {
        dates: return_dates,
        channels: ch,
        global_factor: global_factor(&returns),
    };
    Ok(SynthData {
        prices,
        raw,
        returns,
        channels,
        schedule,
        truth: GroundTruth {
            shares: w,
            dominant: crate::attribution::dominant(&w),
            coupling: cfg.coupling.clone(),
        },
    })
}

/// `x` AR(1) with coefficient 0.5; `y[t+1] = b·x[t] + ε`. True direction x → y.
pub fn gen_directional_pair(strength: f64, n_obs: usize, seed: u64) -> Result<(Vec<f64>, Vec<f64>)> {
    if n_obs < 500 {
        return Err(Error::InsufficientData(format!("{n_obs} rows; at least 500 required")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
    let mut x = vec![0.0; n_obs];
    let mut y = vec![0.0; n_obs];
    x[0] = normal() / 0.75f64.sqrt();
    y[0] = normal();
    for t in 1..n_obs {
        x[t] = 0.5 * x[t - 1] + normal();
        y[t] = strength * x[t - 1] + normal();
    }
    Ok((x, y))
}

/// Link sample where every channel's variance doubles in the second half.
///
/// `C_t = θ·X_t + ε_t` with `X_ct = σ_t ξ_ct + γ ε_t`; the shared `γ ε_t` term
/// makes OLS inconsistent while leaving cross-regime differences intact.
/// Regime labels are returned aligned with the sample rows.
pub fn gen_two_regime_sample(
    theta: [f64; N_CHANNELS],
    n_obs: usize,
    endogeneity: f64,
    seed: u64,
) -> Result<(LinkSample, Vec<Regime>)> {
    let spec = InstrumentSpec::default();
    let lag = spec.max_lag();
    let rows = n_obs + lag;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = DMatrix::zeros(rows, N_CHANNELS);
    let mut c = vec![0.0; rows];
    let mut f = vec![0.0; rows];
    let regime_of = |t: usize| if t >= lag + n_obs / 2 { Regime::High } else { Regime::Low };
    for t in 0..rows {
        let eps: f64 = StandardNormal.sample(&mut rng);
        let sd = if regime_of(t) == Regime::High { 2f64.sqrt() } else { 1.0 };
        let mut y = eps;
        for k in 0..N_CHANNELS {
            let xi: f64 = StandardNormal.sample(&mut rng);
            x[(t, k)] = sd * xi + endogeneity * eps;
            y += theta[k] * x[(t, k)];
        }
        c[t] = y;
        f[t] = rng.random::<f64>() - 0.5;
    }
    let sample = LinkSample::from_outcome("synthetic", ("X".into(), "Y".into()), &c, &x, &f, &spec)?;
    let regimes = (lag..rows).map(regime_of).collect();
    Ok((sample, regimes))
}

/// Writes `prices.csv`, `channels.csv`, `classes.csv` and `config.json`
/// into `dir`, returning the generated data and the pipeline configuration.
pub fn write_fixture(dir: &Path, cfg: &SynthConfig) -> Result<(SynthData, PipelineConfig)> {
    let data = gen_channel_dgp(cfg)?;
    fs::create_dir_all(dir)?;
    write_price_csv(&data.prices, BufWriter::new(File::create(dir.join("prices.csv"))?))?;
    write_series_csv(&data.raw, BufWriter::new(File::create(dir.join("channels.csv"))?))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(dir.join("classes.csv"))?));
    w.write_record(["market_id", "class"])?;
    for (id, class) in data.prices.market_ids().iter().zip(data.prices.market_class()) {
        w.write_record([id.as_str(), class.as_str()])?;
    }
    w.flush()?;
    let pipeline = PipelineConfig {
        prices: "prices.csv".into(),
        channels: "channels.csv".into(),
        classes: Some("classes.csv".into()),
        schedule: data.schedule.clone(),
        baseline: data.schedule.first().map(|p| p.name.clone()),
        seed: cfg.seed,
        force_rigobon: true,
        ..PipelineConfig::default()
    };
    let mut f = File::create(dir.join("config.json"))?;
    f.write_all(pipeline.to_json()?.as_bytes())?;
    f.write_all(b"\n")?;
    let mut pipeline = pipeline;
    pipeline.base_dir = Some(dir.to_path_buf());
    Ok((data, pipeline))
}
