use indexmap::IndexMap;

use super::{Method, StructuralEstimate, N_CHANNELS};
use crate::error::{Error, Result};
use crate::ingest::Channel;

/// Normalized absolute coefficients.
pub fn shares(estimate: &StructuralEstimate) -> Result<[f64; N_CHANNELS]> {
    shares_of(&estimate.theta)
}

pub(crate) fn shares_of(theta: &[f64; N_CHANNELS]) -> Result<[f64; N_CHANNELS]> {
    let total: f64 = theta.iter().map(|t| t.abs()).sum();
    if !(total.is_finite() && total > 0.0) {
        return Err(Error::UndefinedShares);
    }
    let mut out = [0.0; N_CHANNELS];
    for (o, t) in out.iter_mut().zip(theta) {
        *o = t.abs() / total;
    }
    Ok(out)
}

/// Channel with the largest share; ties go to the earlier channel.
pub fn dominant(shares: &[f64; N_CHANNELS]) -> Channel {
    let mut best = 0;
    for c in 1..N_CHANNELS {
        if shares[c] > shares[best] {
            best = c;
        }
    }
    Channel::from_index(best).expect("index below channel count")
}

/// Mean share vector over links, renormalized to sum to one.
pub fn aggregate_period_shares(link_shares: &[[f64; N_CHANNELS]]) -> Result<[f64; N_CHANNELS]> {
    if link_shares.is_empty() {
        return Err(Error::InsufficientData("no links to aggregate".into()));
    }
    let mut mean = [0.0; N_CHANNELS];
    for s in link_shares {
        for c in 0..N_CHANNELS {
            mean[c] += s[c];
        }
    }
    let n = link_shares.len() as f64;
    for m in &mut mean {
        *m /= n;
    }
    let total: f64 = mean.iter().sum();
    if total <= 0.0 {
        return Err(Error::UndefinedShares);
    }
    if (total - 1.0).abs() > 1e-15 {
        for m in &mut mean {
            *m /= total;
        }
    }
    Ok(mean)
}

/// Share vectors keyed by method.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ShareTable {
    pub per_method: IndexMap<Method, [f64; N_CHANNELS]>,
}

impl ShareTable {
    pub fn insert(&mut self, method: Method, shares: [f64; N_CHANNELS]) {
        self.per_method.insert(method, shares);
    }

    pub fn dominant(&self, method: Method) -> Option<Channel> {
        self.per_method.get(&method).map(dominant)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn share_examples() {
        let s = shares_of(&[1.0; 5]).unwrap();
        assert!(s.iter().all(|v| (v - 0.2).abs() < 1e-15));
        let s = shares_of(&[1.0, -3.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(s, [0.25, 0.75, 0.0, 0.0, 0.0]);
        assert!(matches!(shares_of(&[0.0; 5]), Err(Error::UndefinedShares)));
        assert_eq!(dominant(&[0.088, 0.359, 0.094, 0.138, 0.321]), Channel::Financial);
    }

    #[test]
    fn aggregation() {
        let a = [1.0, 0.0, 0.0, 0.0, 0.0];
        let b = [0.0, 1.0, 0.0, 0.0, 0.0];
        assert_eq!(aggregate_period_shares(&[a]).unwrap(), a);
        assert_eq!(aggregate_period_shares(&[a, b]).unwrap(), [0.5, 0.5, 0.0, 0.0, 0.0]);
        assert_eq!(aggregate_period_shares(&[b, a]).unwrap(), [0.5, 0.5, 0.0, 0.0, 0.0]);
        assert!(aggregate_period_shares(&[]).is_err());
    }
}
