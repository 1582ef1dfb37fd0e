use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::ValueEnum;
use serde::Serialize;

use krein_core::{Error, ErrorKind, Result};

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

/// Writes through a temporary file in the target directory and renames it
/// into place, so a failed run leaves no partial file behind. `None` writes
/// to standard output.
pub fn write_atomic<F>(path: Option<&PathBuf>, body: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    let Some(path) = path else {
        let stdout = io::stdout();
        let mut lock = stdout.lock();
        body(&mut lock)?;
        lock.flush()?;
        return Ok(());
    };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        body(&mut w)?;
        w.flush()?;
    }
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    error: &'a str,
    message: String,
    exit_code: i32,
}

fn report(kind: &str, message: String, code: i32) -> ExitCode {
    let r = ErrorReport {
        error: kind,
        message,
        exit_code: code,
    };
    eprintln!("{}", serde_json::to_string(&r).unwrap_or_default());
    ExitCode::from(code as u8)
}

pub fn fail(e: &Error) -> ExitCode {
    let kind: ErrorKind = e.kind();
    report(kind.as_str(), e.to_string(), kind.exit_code())
}

pub fn clap_error(e: clap::Error) -> ExitCode {
    use clap::error::ErrorKind as K;
    match e.kind() {
        K::DisplayHelp | K::DisplayVersion => {
            let _ = e.print();
            ExitCode::SUCCESS
        }
        _ => {
            let code = ErrorKind::Config.exit_code();
            let msg = e.render().to_string();
            report(ErrorKind::Config.as_str(), msg.trim().to_string(), code)
        }
    }
}
