use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::shares::aggregate_period_shares;
use super::N_CHANNELS;
use crate::error::{Error, Result};
use crate::stats;

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapInterval {
    pub point: [f64; N_CHANNELS],
    pub lo: [f64; N_CHANNELS],
    pub hi: [f64; N_CHANNELS],
    /// Fewer than two links: the interval collapses to the point estimate.
    pub degenerate: bool,
    pub replications: usize,
}

/// Generator for replication `r`; independent of scheduling.
pub(crate) fn replication_rng(seed: u64, r: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(r as u64);
    rng
}

/// Paired-link bootstrap of aggregated shares; 2.5 / 97.5 percentiles.
pub fn bootstrap_shares(link_shares: &[[f64; N_CHANNELS]], replications: usize, seed: u64) -> Result<BootstrapInterval> {
    let point = aggregate_period_shares(link_shares)?;
    let n = link_shares.len();
    if n < 2 || replications == 0 {
        return Ok(BootstrapInterval {
            point,
            lo: point,
            hi: point,
            degenerate: true,
            replications: 0,
        });
    }
    let draws: Vec<[f64; N_CHANNELS]> = (0..replications)
        .into_par_iter()
        .map(|r| {
            let mut rng = replication_rng(seed, r);
            let resample: Vec<[f64; N_CHANNELS]> = (0..n).map(|_| link_shares[rng.random_range(0..n)]).collect();
            aggregate_period_shares(&resample)
        })
        .collect::<Result<_>>()?;
    let mut lo = [0.0; N_CHANNELS];
    let mut hi = [0.0; N_CHANNELS];
    for c in 0..N_CHANNELS {
        let mut col: Vec<f64> = draws.iter().map(|d| d[c]).collect();
        col.sort_by(|a, b| a.total_cmp(b));
        lo[c] = stats::quantile_type7_sorted(&col, 0.025);
        hi[c] = stats::quantile_type7_sorted(&col, 0.975);
    }
    if lo.iter().chain(&hi).any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite bootstrap percentile".into()));
    }
    Ok(BootstrapInterval {
        point,
        lo,
        hi,
        degenerate: false,
        replications,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_links_give_zero_width() {
        let s = [0.1, 0.2, 0.3, 0.4, 0.0];
        let ci = bootstrap_shares(&[s, s, s], 300, 7).unwrap();
        for c in 0..N_CHANNELS {
            assert!((ci.hi[c] - ci.lo[c]).abs() < 1e-15);
        }
    }

    #[test]
    fn single_link_is_degenerate() {
        let s = [0.2; 5];
        let ci = bootstrap_shares(&[s], 300, 7).unwrap();
        assert!(ci.degenerate);
        assert_eq!(ci.lo, ci.hi);
    }

    #[test]
    fn seeded_runs_repeat() {
        let links = [[1.0, 0.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0, 0.0], [0.2; 5]];
        assert_eq!(bootstrap_shares(&links, 300, 42).unwrap(), bootstrap_shares(&links, 300, 42).unwrap());
    }
}
