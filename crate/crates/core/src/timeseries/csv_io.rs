//! CSV formats.
//!
//! Device data: `timestamp_iso8601,sensor_id,field,value`.
//! Station data: `timestamp_iso8601,pm25`, where an empty `pm25` cell marks
//! a missing hour.
//!
//! Timestamps are written as RFC 3339 UTC with second resolution and values
//! with the shortest representation that parses back to the same `f64`, so
//! writing what was read is lossless.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::sensing::ConcentrationSample;
use crate::time::Timestamp;

pub const DEVICE_HEADER: [&str; 4] = ["timestamp_iso8601", "sensor_id", "field", "value"];
pub const STATION_HEADER: [&str; 2] = ["timestamp_iso8601", "pm25"];

#[derive(Debug, thiserror::Error)]
pub enum CsvError {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("missing or wrong header, expected `{expected}`")]
    Header { expected: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CsvError {
    pub fn line(&self) -> Option<u64> {
        match self {
            CsvError::Parse { line, .. } => Some(*line),
            CsvError::Header { .. } => Some(1),
            CsvError::Io(_) => None,
        }
    }
}

impl From<csv::Error> for CsvError {
    fn from(e: csv::Error) -> Self {
        let line = e.position().map(|p| p.line()).unwrap_or(0);
        match e.into_kind() {
            csv::ErrorKind::Io(io) => CsvError::Io(io),
            other => CsvError::Parse {
                line,
                message: format!("{other:?}"),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceRecord {
    pub timestamp: Timestamp,
    pub sensor_id: String,
    pub field: String,
    pub value: f64,
}

impl DeviceRecord {
    pub fn from_sample(sample: &ConcentrationSample, field: impl Into<String>) -> Self {
        DeviceRecord {
            timestamp: sample.timestamp,
            sensor_id: sample.sensor_id.clone(),
            field: field.into(),
            value: sample.pm25,
        }
    }

    pub fn to_sample(&self) -> ConcentrationSample {
        ConcentrationSample {
            timestamp: self.timestamp,
            pm25: self.value,
            pm1: None,
            sensor_id: self.sensor_id.clone(),
            location: String::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationPoint {
    pub timestamp: Timestamp,
    /// `None` marks a missing reading.
    pub pm25: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationSeries {
    pub station_name: String,
    pub points: Vec<StationPoint>,
}

impl StationSeries {
    pub fn missing_count(&self) -> usize {
        self.points.iter().filter(|p| p.pm25.is_none()).count()
    }

    pub fn present(&self) -> impl Iterator<Item = (Timestamp, f64)> + '_ {
        self.points.iter().filter_map(|p| p.pm25.map(|v| (p.timestamp, v)))
    }
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(input)
}

fn check_header(
    records: &mut csv::StringRecordsIter<'_, impl Read>,
    expected: &[&str],
) -> Result<(), CsvError> {
    let header_err = || CsvError::Header {
        expected: expected.join(","),
    };
    let header = records.next().ok_or_else(header_err)??;
    let matches = header.len() == expected.len()
        && header
            .iter()
            .zip(expected)
            .all(|(got, want)| got.trim_start_matches('\u{feff}').eq_ignore_ascii_case(want));
    if matches {
        Ok(())
    } else {
        Err(header_err())
    }
}

fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map(|p| p.line()).unwrap_or(0)
}

fn parse_err(line: u64, message: impl Into<String>) -> CsvError {
    CsvError::Parse {
        line,
        message: message.into(),
    }
}

fn parse_value(line: u64, cell: &str) -> Result<f64, CsvError> {
    let v: f64 = cell
        .parse()
        .map_err(|_| parse_err(line, format!("invalid number `{cell}`")))?;
    if !v.is_finite() {
        return Err(parse_err(line, format!("non-finite value `{cell}`")));
    }
    Ok(v)
}

pub fn read_device_csv<R: Read>(input: R) -> Result<Vec<DeviceRecord>, CsvError> {
    let mut rdr = reader(input);
    let mut records = rdr.records();
    check_header(&mut records, &DEVICE_HEADER)?;
    let mut out = Vec::new();
    for rec in records {
        let rec = rec?;
        let line = line_of(&rec);
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if rec.len() != 4 {
            return Err(parse_err(line, format!("expected 4 columns, found {}", rec.len())));
        }
        let timestamp = Timestamp::parse_iso8601(&rec[0]).map_err(|e| parse_err(line, e.to_string()))?;
        if rec[2].is_empty() {
            return Err(parse_err(line, "empty field name"));
        }
        out.push(DeviceRecord {
            timestamp,
            sensor_id: rec[1].to_string(),
            field: rec[2].to_string(),
            value: parse_value(line, &rec[3])?,
        });
    }
    Ok(out)
}

pub fn read_device_csv_file(path: impl AsRef<Path>) -> Result<Vec<DeviceRecord>, CsvError> {
    read_device_csv(std::fs::File::open(path)?)
}

pub fn write_device_csv<W: Write>(output: W, records: &[DeviceRecord]) -> Result<(), CsvError> {
    let mut w = csv::Writer::from_writer(output);
    w.write_record(DEVICE_HEADER)?;
    for r in records {
        w.write_record([
            r.timestamp.to_iso8601(),
            r.sensor_id.clone(),
            r.field.clone(),
            r.value.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a reference-station file. Timestamps must be strictly increasing
/// and spaced by whole hours.
pub fn read_station_csv<R: Read>(input: R, station_name: &str) -> Result<StationSeries, CsvError> {
    let mut rdr = reader(input);
    let mut records = rdr.records();
    check_header(&mut records, &STATION_HEADER)?;
    let mut points: Vec<StationPoint> = Vec::new();
    for rec in records {
        let rec = rec?;
        let line = line_of(&rec);
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if rec.len() != 2 {
            return Err(parse_err(line, format!("expected 2 columns, found {}", rec.len())));
        }
        let timestamp = Timestamp::parse_iso8601(&rec[0]).map_err(|e| parse_err(line, e.to_string()))?;
        if let Some(prev) = points.last() {
            let step = timestamp.epoch_seconds() - prev.timestamp.epoch_seconds();
            if step <= 0 {
                return Err(parse_err(line, "timestamps must be strictly increasing"));
            }
            if step % 3600 != 0 {
                return Err(parse_err(line, "station readings must be on an hourly cadence"));
            }
        }
        let pm25 = if rec[1].is_empty() {
            None
        } else {
            let v = parse_value(line, &rec[1])?;
            if v < 0.0 {
                return Err(parse_err(line, "negative concentration"));
            }
            Some(v)
        };
        points.push(StationPoint { timestamp, pm25 });
    }
    Ok(StationSeries {
        station_name: station_name.to_string(),
        points,
    })
}

pub fn read_station_csv_file(path: impl AsRef<Path>) -> Result<StationSeries, CsvError> {
    let path = path.as_ref();
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    read_station_csv(std::fs::File::open(path)?, &name)
}

pub fn write_station_csv<W: Write>(output: W, series: &StationSeries) -> Result<(), CsvError> {
    let mut w = csv::Writer::from_writer(output);
    w.write_record(STATION_HEADER)?;
    for p in &series.points {
        w.write_record([
            p.timestamp.to_iso8601(),
            p.pm25.map(|v| v.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const STATION: &str = "timestamp_iso8601,pm25
2019-08-28T14:00:00Z,16.2
2019-08-28T15:00:00Z,17.5
2019-08-28T16:00:00Z,
2019-08-28T17:00:00Z,18.25
";

    #[test]
    fn station_missing_hour() {
        let s = read_station_csv(STATION.as_bytes(), "enseada").unwrap();
        assert_eq!(s.points.len(), 4);
        assert_eq!(s.missing_count(), 1);
        assert_eq!(s.points[2].pm25, None);
        let mut out = Vec::new();
        write_station_csv(&mut out, &s).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), STATION);
    }

    #[test]
    fn station_errors_carry_line_numbers() {
        let bad = "timestamp_iso8601,pm25\n2019-08-28T14:00:00Z,1\n2019-08-28T15:00:00Z,abc\n";
        let err = read_station_csv(bad.as_bytes(), "x").unwrap_err();
        assert_eq!(err.line(), Some(3), "{err}");

        let off_cadence = "timestamp_iso8601,pm25\n2019-08-28T14:00:00Z,1\n2019-08-28T14:30:00Z,2\n";
        assert_eq!(read_station_csv(off_cadence.as_bytes(), "x").unwrap_err().line(), Some(3));

        assert!(matches!(
            read_station_csv("".as_bytes(), "x"),
            Err(CsvError::Header { .. })
        ));
        assert!(matches!(
            read_station_csv("time,value\n".as_bytes(), "x"),
            Err(CsvError::Header { .. })
        ));
    }

    #[test]
    fn device_round_trip() {
        let text = "timestamp_iso8601,sensor_id,field,value
2019-08-28T14:00:00Z,ens-1,pm25,16.2
2019-08-28T14:00:30Z,ens-1,pm25,0.1
2019-08-28T14:01:00Z,ens-1,pm25,1.0768372413
";
        let recs = read_device_csv(text.as_bytes()).unwrap();
        assert_eq!(recs.len(), 3);
        let mut out = Vec::new();
        write_device_csv(&mut out, &recs).unwrap();
        assert_eq!(read_device_csv(out.as_slice()).unwrap(), recs);
    }

    #[test]
    fn device_malformed_row() {
        let text = "timestamp_iso8601,sensor_id,field,value\n2019-08-28T14:00:00Z,a,pm25,1\n2019-08-28T14:00:30Z,a,pm25\n";
        let err = read_device_csv(text.as_bytes()).unwrap_err();
        assert_eq!(err.line(), Some(3));
        let text = "timestamp_iso8601,sensor_id,field,value\nnot-a-time,a,pm25,1\n";
        assert_eq!(read_device_csv(text.as_bytes()).unwrap_err().line(), Some(2));
    }
}
