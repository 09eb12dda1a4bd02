//! Channel-based storage for concentration streams.
//!
//! A [`Channel`](channel::Channel) is a named stream with a write key, up to
//! eight fields, a minimum write interval and a retention policy. The
//! [`ChannelStore`](store::ChannelStore) keeps channels in memory, optionally
//! backed by an append-only log per channel plus periodic snapshots.

pub mod aggregate;
pub mod channel;
pub mod clock;
pub mod csv_io;
pub mod store;

pub use aggregate::{aggregate_points, AggregateError, AggregatedPoint};
pub use channel::{Channel, ChannelId, Retention};
pub use clock::{Clock, ManualClock, SystemClock};
pub use csv_io::{CsvError, DeviceRecord, StationPoint, StationSeries};
pub use store::{ChannelStore, Entry, StoreError, TimeRange};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{0} must be > 0")]
pub struct NonPositiveArgument(pub &'static str);

/// Hours of readings a device can buffer while offline: the number of whole
/// records that fit in storage times the sampling interval.
pub fn offline_buffer_capacity(
    storage_bytes: u64,
    record_size: u64,
    interval_secs: f64,
) -> Result<f64, NonPositiveArgument> {
    if storage_bytes == 0 {
        return Err(NonPositiveArgument("storage_bytes"));
    }
    if record_size == 0 {
        return Err(NonPositiveArgument("record_size"));
    }
    if !(interval_secs.is_finite() && interval_secs > 0.0) {
        return Err(NonPositiveArgument("interval"));
    }
    let records = storage_bytes / record_size;
    Ok(records as f64 * interval_secs / 3600.0)
}
