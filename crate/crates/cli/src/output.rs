use std::path::{Path, PathBuf};

use clap::Args;
use spatialprobe::trace_io::{render_report, ReportFormat, Tabular};

use crate::error::CliError;

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Where to write the report. Without it only the summary is printed.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// csv or json; defaults to the report file's extension, then csv.
    #[arg(long)]
    pub format: Option<String>,
}

impl ReportArgs {
    fn format(&self, path: &Path) -> Result<ReportFormat, CliError> {
        match &self.format {
            Some(f) => Ok(f.parse()?),
            None if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) => Ok(ReportFormat::Json),
            None => Ok(ReportFormat::Csv),
        }
    }

    pub fn emit<T: Tabular + ?Sized>(&self, report: &T) -> Result<(), CliError> {
        let Some(path) = &self.report else {
            return Ok(());
        };
        let table = report.table();
        let text = render_report(&table, self.format(path)?);
        write(path, text.as_bytes())?;
        println!("wrote {} ({} rows)", path.display(), table.rows.len());
        Ok(())
    }
}

pub fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}
