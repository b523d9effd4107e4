use std::collections::BTreeMap;
use std::ops::Range;

use crate::engine::DecisionRecord;
use crate::error::{Error, Result};

/// Likelihood-ready decisions: forced stops removed, identical
/// `(i, i*, q, y)` tuples merged into weights, and rows grouped by box index.
#[derive(Debug, Clone)]
pub struct Dataset {
    horizon: usize,
    pub(crate) box_index: Vec<u32>,
    pub(crate) nondominated: Vec<u32>,
    pub(crate) percentile: Vec<f64>,
    /// +1 for a stop, -1 for a continue.
    pub(crate) sign: Vec<f64>,
    pub(crate) weight: Vec<f64>,
    /// `box_rows[i - 1]` is the row range for box `i`.
    pub(crate) box_rows: Vec<Range<usize>>,
    /// `(stops, continues)` per box index.
    pub(crate) box_counts: Vec<(f64, f64)>,
    /// `(stops, continues)` per non-dominated count.
    pub(crate) nondominated_counts: Vec<(f64, f64)>,
    decisions: usize,
}

impl Dataset {
    pub fn from_records<'a, I>(records: I, horizon: usize) -> Result<Self>
    where
        I: IntoIterator<Item = &'a DecisionRecord>,
    {
        if horizon < 2 {
            return Err(Error::InvalidArgument(
                "datasets need a horizon of at least 2".into(),
            ));
        }
        let mut merged: BTreeMap<(u32, u32, u64, bool), f64> = BTreeMap::new();
        let mut decisions = 0;
        for r in records {
            if r.forced {
                continue;
            }
            let i = r.box_index as usize;
            if i < 1 || i >= horizon {
                return Err(Error::MalformedRecord(format!(
                    "unforced decision at box {i} outside 1..={} (player {}, game {})",
                    horizon - 1,
                    r.player_id,
                    r.game_number
                )));
            }
            if r.nondominated_count < 1 || r.nondominated_count > r.box_index {
                return Err(Error::MalformedRecord(format!(
                    "non-dominated count {} at box {i}",
                    r.nondominated_count
                )));
            }
            if !(0.0..=1.0).contains(&r.percentile) {
                return Err(Error::MalformedRecord(format!(
                    "percentile {}",
                    r.percentile
                )));
            }
            *merged
                .entry((
                    r.box_index,
                    r.nondominated_count,
                    r.percentile.to_bits(),
                    r.stopped,
                ))
                .or_insert(0.0) += 1.0;
            decisions += 1;
        }
        let n = merged.len();
        let mut data = Dataset {
            horizon,
            box_index: Vec::with_capacity(n),
            nondominated: Vec::with_capacity(n),
            percentile: Vec::with_capacity(n),
            sign: Vec::with_capacity(n),
            weight: Vec::with_capacity(n),
            box_rows: vec![0..0; horizon - 1],
            box_counts: vec![(0.0, 0.0); horizon - 1],
            nondominated_counts: vec![(0.0, 0.0); horizon - 1],
            decisions,
        };
        // BTreeMap order keeps rows sorted by box index
        for ((i, i_star, q_bits, stopped), w) in merged {
            let row = data.box_index.len();
            let b = i as usize - 1;
            if data.box_rows[b].is_empty() {
                data.box_rows[b] = row..row;
            }
            data.box_rows[b].end = row + 1;
            data.box_index.push(i);
            data.nondominated.push(i_star);
            data.percentile.push(f64::from_bits(q_bits));
            data.sign.push(if stopped { 1.0 } else { -1.0 });
            data.weight.push(w);
            let slot = |c: &mut (f64, f64)| if stopped { c.0 += w } else { c.1 += w };
            slot(&mut data.box_counts[b]);
            slot(&mut data.nondominated_counts[i_star as usize - 1]);
        }
        Ok(data)
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Number of (unmerged) decisions.
    pub fn len(&self) -> usize {
        self.decisions
    }

    pub fn is_empty(&self) -> bool {
        self.decisions == 0
    }

    /// Total weight of stop decisions.
    pub fn stops(&self) -> f64 {
        self.box_counts.iter().map(|c| c.0).sum()
    }

    pub fn continues(&self) -> f64 {
        self.box_counts.iter().map(|c| c.1).sum()
    }

    /// Number of distinct rows after merging.
    pub fn rows(&self) -> usize {
        self.weight.len()
    }

    pub(crate) fn rows_for_boxes(&self, boxes: Range<usize>) -> Range<usize> {
        let first = self.box_rows[boxes.start - 1..boxes.end - 1]
            .iter()
            .find(|r| !r.is_empty());
        let last = self.box_rows[boxes.start - 1..boxes.end - 1]
            .iter()
            .rev()
            .find(|r| !r.is_empty());
        match (first, last) {
            (Some(a), Some(b)) => a.start..b.end,
            _ => 0..0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(game: u32, i: u32, i_star: u32, q: f64, stopped: bool, forced: bool) -> DecisionRecord {
        DecisionRecord {
            player_id: 0,
            game_number: game,
            box_index: i,
            nondominated_count: i_star,
            box_value: 0.0,
            percentile: q,
            stopped,
            forced,
        }
    }

    #[test]
    fn merges_and_drops_forced() {
        let records = vec![
            rec(1, 1, 1, 0.5, false, false),
            rec(1, 3, 2, 0.9, true, false),
            rec(2, 1, 1, 0.5, false, false),
            rec(2, 7, 3, 0.2, true, true),
        ];
        let data = Dataset::from_records(&records, 7).unwrap();
        assert_eq!(data.len(), 3);
        assert_eq!(data.rows(), 2);
        assert_eq!(data.weight, vec![2.0, 1.0]);
        assert_eq!(data.box_rows[0], 0..1);
        assert_eq!(data.box_rows[2], 1..2);
        assert_eq!(data.box_counts[0], (0.0, 2.0));
        assert_eq!(data.nondominated_counts[1], (1.0, 0.0));
        assert_eq!(data.rows_for_boxes(1..4), 0..2);
        assert_eq!(data.rows_for_boxes(4..7), 0..0);
    }

    #[test]
    fn rejects_unforced_last_box() {
        let records = vec![rec(1, 7, 1, 0.5, true, false)];
        assert!(matches!(
            Dataset::from_records(&records, 7),
            Err(Error::MalformedRecord(_))
        ));
    }
}
