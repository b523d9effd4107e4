use crate::error::{Error, Result};

/// Every value a player has observed, across all games, kept sorted.
#[derive(Debug, Clone, Default)]
pub struct PercentileMemory {
    sorted: Vec<f64>,
}

impl PercentileMemory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, x: f64) {
        let at = self.sorted.partition_point(|&v| v < x);
        self.sorted.insert(at, x);
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// `(N_<, N_=)` for `x`.
    pub fn counts(&self, x: f64) -> (usize, usize) {
        let below = self.sorted.partition_point(|&v| v < x);
        let upto = self.sorted.partition_point(|&v| v <= x);
        (below, upto - below)
    }

    /// Percentile rank `(N_< + N_= / 2) / N`. The queried value should
    /// already be in memory.
    pub fn percentile_rank(&self, x: f64) -> Result<f64> {
        if self.sorted.is_empty() {
            return Err(Error::InvalidArgument(
                "percentile of an empty memory".into(),
            ));
        }
        let (below, equal) = self.counts(x);
        Ok((below as f64 + 0.5 * equal as f64) / self.sorted.len() as f64)
    }
}

impl FromIterator<f64> for PercentileMemory {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut sorted: Vec<f64> = iter.into_iter().collect();
        sorted.sort_by(f64::total_cmp);
        PercentileMemory { sorted }
    }
}
