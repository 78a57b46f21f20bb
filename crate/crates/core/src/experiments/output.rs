use std::io::{Read, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::InvalidArgument(format!(
                "unknown output format `{other}`"
            ))),
        }
    }
}

/// Something that renders as a flat table with a fixed header.
pub trait Tabular {
    type Row: Serialize + DeserializeOwned;

    fn rows(&self) -> Vec<Self::Row>;
}

pub fn write_csv<W: Write, R: Serialize>(rows: &[R], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read, T: DeserializeOwned>(input: R) -> Result<Vec<T>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

pub fn render<T: Tabular + Serialize>(value: &T, format: OutputFormat) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    match format {
        OutputFormat::Csv => write_csv(&value.rows(), &mut buf)?,
        OutputFormat::Json => {
            serde_json::to_writer_pretty(&mut buf, value)?;
            buf.push(b'\n');
        }
    }
    Ok(buf)
}
