use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::ValueEnum;
use nuec::sim::metrics::{CSV_HEADER, SAMPLE_HEADER};
use nuec::sim::{MetricsReport, SampleRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    /// One JSON object per line.
    Json,
}

/// `<out>.samples.csv`
pub fn samples_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".samples.csv");
    PathBuf::from(s)
}

/// Opens for appending; true if the file was empty or missing.
fn open_append(path: &Path) -> Result<(File, bool)> {
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .with_context(|| format!("cannot write {}", path.display()))?;
    let fresh = file.metadata().map(|m| m.len() == 0).unwrap_or(true);
    Ok((file, fresh))
}

fn csv_writer(file: File) -> csv::Writer<File> {
    csv::WriterBuilder::new().has_headers(false).from_writer(file)
}

pub fn append_reports(path: &Path, format: Format, reports: &[MetricsReport]) -> Result<()> {
    let (file, fresh) = open_append(path)?;
    let ctx = || format!("cannot write {}", path.display());
    match format {
        Format::Csv => {
            let mut w = csv_writer(file);
            if fresh {
                w.write_record(CSV_HEADER).with_context(ctx)?;
            }
            for r in reports {
                w.write_record(r.csv_record()).with_context(ctx)?;
            }
            w.flush().with_context(ctx)?;
        }
        Format::Json => {
            let mut w = BufWriter::new(file);
            for r in reports {
                serde_json::to_writer(&mut w, r).with_context(ctx)?;
                w.write_all(b"\n").with_context(ctx)?;
            }
            w.flush().with_context(ctx)?;
        }
    }
    Ok(())
}

pub fn append_samples(path: &Path, rows: &[SampleRow]) -> Result<()> {
    let (file, fresh) = open_append(path)?;
    let ctx = || format!("cannot write {}", path.display());
    let mut w = csv_writer(file);
    if fresh {
        w.write_record(SAMPLE_HEADER).with_context(ctx)?;
    }
    for r in rows {
        w.write_record(r.csv_record()).with_context(ctx)?;
    }
    w.flush().with_context(ctx)?;
    Ok(())
}
