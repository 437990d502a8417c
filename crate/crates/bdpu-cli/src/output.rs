//! Output plumbing: file-or-stdout writers and the JSON envelope.

use std::io::Write;
use std::path::PathBuf;

use serde::Serialize;

use crate::commands::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

/// Runs `f` against the target file (buffered) or stdout.
pub fn with_writer(
    out: Option<&PathBuf>,
    f: impl FnOnce(&mut dyn Write) -> std::io::Result<()>,
) -> Result<(), CliError> {
    match out {
        Some(path) => {
            let file = std::fs::File::create(path)?;
            let mut buf = std::io::BufWriter::new(file);
            f(&mut buf)?;
            buf.flush()?;
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            f(&mut lock)?;
            lock.flush()?;
        }
    }
    Ok(())
}

/// Serializes a payload under a `{schema_version, kind, ...}` envelope.
pub fn write_json<T: Serialize>(
    out: Option<&PathBuf>,
    kind: &str,
    payload: &T,
) -> Result<(), CliError> {
    #[derive(Serialize)]
    struct Envelope<'a, T> {
        schema_version: u32,
        kind: &'a str,
        #[serde(flatten)]
        payload: &'a T,
    }
    let envelope = Envelope {
        schema_version: SCHEMA_VERSION,
        kind,
        payload,
    };
    with_writer(out, |w| {
        serde_json::to_writer_pretty(&mut *w, &envelope)?;
        writeln!(w)
    })
}
