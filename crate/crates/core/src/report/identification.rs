use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::ingest::Channel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Status {
    Robust(Channel),
    /// Number of distinct dominant channels.
    Fragile(usize),
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Status::Robust(c) => write!(f, "Robust ({})", c.as_str()),
            Status::Fragile(k) => write!(f, "Fragile ({k} distinct)"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentificationStatus {
    pub period: String,
    /// (method label, dominant channel) for each method that produced shares.
    pub dominants: Vec<(String, Channel)>,
    pub status: Status,
}

/// Robust when some channel is dominant under at least two methods.
pub fn classify_identification(dominants: &[Channel]) -> Result<Status> {
    if dominants.len() < 2 {
        return Err(Error::Unclassifiable(dominants.len()));
    }
    let mut best: Option<(Channel, usize)> = None;
    for c in Channel::ALL {
        let k = dominants.iter().filter(|d| **d == c).count();
        if k >= 2 && best.is_none_or(|(_, bk)| k > bk) {
            best = Some((c, k));
        }
    }
    if let Some((c, _)) = best {
        return Ok(Status::Robust(c));
    }
    let mut distinct = dominants.to_vec();
    distinct.sort_by_key(|c| c.index());
    distinct.dedup();
    Ok(Status::Fragile(distinct.len()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use Channel::*;

    #[test]
    fn labels() {
        assert_eq!(classify_identification(&[Financial, Financial, Financial]).unwrap().to_string(), "Robust (Financial)");
        assert_eq!(classify_identification(&[Trade, Geopolitical, Behavioural]).unwrap(), Status::Fragile(3));
        assert_eq!(classify_identification(&[Monetary, Financial]).unwrap().to_string(), "Fragile (2 distinct)");
        assert!(matches!(classify_identification(&[Monetary]), Err(Error::Unclassifiable(1))));
    }
}
