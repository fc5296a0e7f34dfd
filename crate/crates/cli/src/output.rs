//! Report envelopes, JSON/CSV rendering and all-or-nothing file writes.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use pdlayout::report::MetricReport;
use serde::Serialize;

use crate::{Format, REPORT_VERSION};

/// Id of the trailing CSV row holding corpus values.
pub const CORPUS_ROW_ID: &str = "__corpus__";

/// A per-sample row type that can also carry the corpus values.
pub trait Row: Serialize {
    fn corpus(report: &MetricReport) -> Self;
}

#[derive(Debug, Clone, Serialize)]
pub struct Report<C, R> {
    pub report_version: u32,
    pub command: &'static str,
    pub config: C,
    pub samples: Vec<R>,
    pub corpus: MetricReport,
}

impl<C: Serialize, R: Row> Report<C, R> {
    pub fn new(command: &'static str, config: C, samples: Vec<R>, corpus: MetricReport) -> Self {
        Report {
            report_version: REPORT_VERSION,
            command,
            config,
            samples,
            corpus,
        }
    }

    /// JSON: pretty-printed with a trailing newline. CSV: `#` header lines with the
    /// configuration echo, one row per sample, then the corpus row.
    pub fn render(&self, format: Format) -> Result<String> {
        match format {
            Format::Json => to_json(self),
            Format::Csv => {
                let mut text = format!(
                    "# report_version={}\n# command={}\n# config={}\n",
                    self.report_version,
                    self.command,
                    serde_json::to_string(&self.config)?
                );
                let mut w = csv::Writer::from_writer(Vec::new());
                for row in &self.samples {
                    w.serialize(row)?;
                }
                w.serialize(R::corpus(&self.corpus))?;
                text.push_str(std::str::from_utf8(&w.into_inner()?)?);
                Ok(text)
            }
        }
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// Writes `text` to a sibling temporary file and renames it over `path`, so a failed
/// run never leaves a partial report behind.
pub fn write_atomic(path: &Path, text: &str) -> Result<()> {
    let name = path
        .file_name()
        .with_context(|| format!("{} is not a file path", path.display()))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(".partial");
    let tmp = path.with_file_name(tmp_name);
    fs::write(&tmp, text).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming {} to {}", tmp.display(), path.display()))
}
