//! The universal series carrier and its on-disk CSV form.

use std::path::Path;

use crate::error::Error;
use crate::scalar::Scalar;

/// A length-T, D-channel real-valued series with optional per-point
/// anomaly labels. Values are channel-major: channel `d` occupies the
/// contiguous slice `d*T .. (d+1)*T`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries<F> {
    values: Vec<F>,
    dims: usize,
    len: usize,
    labels: Option<Vec<bool>>,
}

impl<F: Scalar> TimeSeries<F> {
    pub fn from_channels(channels: Vec<Vec<F>>) -> Result<Self, Error> {
        if channels.is_empty() {
            return Err(Error::InvalidInput("series needs at least one channel".into()));
        }
        let len = channels[0].len();
        if channels.iter().any(|c| c.len() != len) {
            return Err(Error::InvalidInput("channels differ in length".into()));
        }
        let dims = channels.len();
        let mut values = Vec::with_capacity(dims * len);
        for c in channels {
            values.extend(c);
        }
        Ok(TimeSeries {
            values,
            dims,
            len,
            labels: None,
        })
    }

    pub fn univariate(values: Vec<F>) -> Self {
        let len = values.len();
        TimeSeries {
            values,
            dims: 1,
            len,
            labels: None,
        }
    }

    /// Number of timestamps T.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Number of channels D.
    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn channel(&self, d: usize) -> &[F] {
        &self.values[d * self.len..(d + 1) * self.len]
    }

    pub fn channel_mut(&mut self, d: usize) -> &mut [F] {
        &mut self.values[d * self.len..(d + 1) * self.len]
    }

    pub fn labels(&self) -> Option<&[bool]> {
        self.labels.as_deref()
    }

    pub fn set_labels(&mut self, labels: Vec<bool>) -> Result<(), Error> {
        if labels.len() != self.len {
            return Err(Error::InvalidInput(format!(
                "{} labels for {} timestamps",
                labels.len(),
                self.len
            )));
        }
        self.labels = Some(labels);
        Ok(())
    }

    pub fn clear_labels(&mut self) {
        self.labels = None;
    }

    /// Write as `dim_0,...,dim_{D-1}[,label]`, one row per timestamp.
    pub fn write_csv(&self, path: &Path) -> Result<(), Error> {
        let mut w = csv::Writer::from_path(path).map_err(from_csv_error)?;
        let mut header: Vec<String> = (0..self.dims).map(|d| format!("dim_{d}")).collect();
        if self.labels.is_some() {
            header.push("label".into());
        }
        w.write_record(&header).map_err(from_csv_error)?;
        let mut row: Vec<String> = Vec::with_capacity(header.len());
        for t in 0..self.len {
            row.clear();
            for d in 0..self.dims {
                row.push(format!("{}", self.values[d * self.len + t]));
            }
            if let Some(labels) = &self.labels {
                row.push(if labels[t] { "1".into() } else { "0".into() });
            }
            w.write_record(&row).map_err(from_csv_error)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Read the format written by [`write_csv`](Self::write_csv). A
    /// trailing `label` column is optional.
    pub fn read_csv(path: &Path) -> Result<Self, Error> {
        let mut r = csv::Reader::from_path(path).map_err(from_csv_error)?;
        let headers = r.headers().map_err(from_csv_error)?.clone();
        let mut cols: Vec<&str> = headers.iter().collect();
        let with_labels = cols.last() == Some(&"label");
        if with_labels {
            cols.pop();
        }
        if cols.is_empty() {
            return Err(Error::Parse {
                offset: 0,
                msg: "no dim_* columns in header".into(),
            });
        }
        for (d, col) in cols.iter().enumerate() {
            if *col != format!("dim_{d}") {
                return Err(Error::Parse {
                    offset: 0,
                    msg: format!("expected header column dim_{d}, found {col:?}"),
                });
            }
        }
        let dims = cols.len();

        let mut columns: Vec<Vec<F>> = vec![Vec::new(); dims];
        let mut labels: Vec<bool> = Vec::new();
        for record in r.records() {
            let record = record.map_err(from_csv_error)?;
            let offset = record.position().map(|p| p.byte() as usize).unwrap_or(0);
            let expected = dims + usize::from(with_labels);
            if record.len() != expected {
                return Err(Error::Parse {
                    offset,
                    msg: format!("expected {expected} fields, found {}", record.len()),
                });
            }
            for d in 0..dims {
                let field = &record[d];
                let v: F = field.parse().map_err(|_| Error::Parse {
                    offset,
                    msg: format!("invalid number {field:?} in dim_{d}"),
                })?;
                columns[d].push(v);
            }
            if with_labels {
                labels.push(parse_label(&record[dims], offset)?);
            }
        }

        let mut series = Self::from_channels(columns)?;
        if with_labels {
            series.set_labels(labels)?;
        }
        Ok(series)
    }
}

pub(crate) fn parse_label(field: &str, offset: usize) -> Result<bool, Error> {
    match field {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(Error::Parse {
            offset,
            msg: format!("label must be 0 or 1, found {other:?}"),
        }),
    }
}

pub(crate) fn from_csv_error(e: csv::Error) -> Error {
    let offset = e.position().map(|p| p.byte() as usize).unwrap_or(0);
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            _ => unreachable!("is_io_error guaranteed an I/O kind"),
        }
    } else {
        Error::Parse {
            offset,
            msg: e.to_string(),
        }
    }
}
