//! Per-epoch metric rows: `epoch,split,accuracy,loss,vii,wallclock_s`.

use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Split;
use crate::error::Result;

pub const METRICS_HEADER: &str = "epoch,split,accuracy,loss,vii,wallclock_s";

/// `vii` is empty when it was not measured for that row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub epoch: usize,
    pub split: Split,
    pub accuracy: f64,
    pub loss: f64,
    pub vii: Option<f64>,
    pub wallclock_s: f64,
}

pub struct MetricsWriter {
    inner: csv::Writer<File>,
}

impl MetricsWriter {
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        let mut inner = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
        inner.write_record(METRICS_HEADER.split(','))?;
        inner.flush()?;
        Ok(Self { inner })
    }

    pub fn append(&mut self, row: &MetricsRow) -> Result<()> {
        self.inner.serialize(row)?;
        self.inner.flush()?;
        Ok(())
    }
}

pub fn read_metrics(path: impl AsRef<Path>) -> Result<Vec<MetricsRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    if header.join(",") != METRICS_HEADER {
        return Err(crate::Error::Malformed(format!("metrics header {header:?}")));
    }
    Ok(reader.deserialize().collect::<Result<Vec<MetricsRow>, _>>()?)
}
