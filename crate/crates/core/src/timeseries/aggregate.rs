//! Fixed-width bucket means.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::par::Exec;
use crate::time::Timestamp;

/// Default bucket width, minutes.
pub const DEFAULT_BUCKET_MINUTES: u32 = 60;

const CHUNK: usize = 4096;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AggregateError {
    #[error("bucket width must be in 1..=1440 minutes, got {0}")]
    InvalidBucket(u32),
    #[error("no samples to aggregate")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregatedPoint {
    /// Aligned to the `bucket_width_minutes` grid measured from the epoch.
    pub bucket_start: Timestamp,
    pub bucket_width_minutes: u32,
    pub mean: f64,
    pub count: usize,
}

/// Arithmetic mean per aligned bucket; empty buckets are omitted and the
/// result is ordered by bucket start.
pub fn aggregate_points(
    points: &[(Timestamp, f64)],
    bucket_minutes: u32,
    exec: Exec,
) -> Result<Vec<AggregatedPoint>, AggregateError> {
    if !(1..=1440).contains(&bucket_minutes) {
        return Err(AggregateError::InvalidBucket(bucket_minutes));
    }
    if points.is_empty() {
        return Err(AggregateError::Empty);
    }
    let width = i64::from(bucket_minutes) * 60;
    let partials = exec.map_chunks(points, CHUNK, |_, chunk| {
        let mut acc: BTreeMap<i64, (f64, usize)> = BTreeMap::new();
        for (ts, v) in chunk {
            let slot = acc.entry(ts.floor_to(width).epoch_seconds()).or_insert((0.0, 0));
            slot.0 += v;
            slot.1 += 1;
        }
        acc
    });
    let mut merged: BTreeMap<i64, (f64, usize)> = BTreeMap::new();
    for partial in partials {
        for (start, (sum, n)) in partial {
            let slot = merged.entry(start).or_insert((0.0, 0));
            slot.0 += sum;
            slot.1 += n;
        }
    }
    Ok(merged
        .into_iter()
        .map(|(start, (sum, count))| AggregatedPoint {
            bucket_start: Timestamp(start),
            bucket_width_minutes: bucket_minutes,
            mean: sum / count as f64,
            count,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_hour() {
        let pts: Vec<_> = (0..120).map(|k| (Timestamp(3600 + k * 30), 10.0)).collect();
        let out = aggregate_points(&pts, 60, Exec::default()).unwrap();
        assert_eq!(
            out,
            vec![AggregatedPoint {
                bucket_start: Timestamp(3600),
                bucket_width_minutes: 60,
                mean: 10.0,
                count: 120
            }]
        );
    }

    #[test]
    fn simple_mean_and_gaps() {
        let pts = [
            (Timestamp(0), 1.0),
            (Timestamp(10), 2.0),
            (Timestamp(20), 3.0),
            (Timestamp(7200 + 5), 8.0),
        ];
        let out = aggregate_points(&pts, 60, Exec::Sequential).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].mean, 2.0);
        assert_eq!(out[1].bucket_start, Timestamp(7200));
        assert_eq!(out[1].count, 1);
    }

    #[test]
    fn errors() {
        assert_eq!(aggregate_points(&[], 60, Exec::Sequential), Err(AggregateError::Empty));
        assert_eq!(
            aggregate_points(&[(Timestamp(0), 1.0)], 0, Exec::Sequential),
            Err(AggregateError::InvalidBucket(0))
        );
        assert_eq!(
            aggregate_points(&[(Timestamp(0), 1.0)], 1441, Exec::Sequential),
            Err(AggregateError::InvalidBucket(1441))
        );
    }
}
