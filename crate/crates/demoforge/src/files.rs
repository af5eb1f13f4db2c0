use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use demoforge_core::codec::{ByteSource, SourceError};
use demoforge_core::model::DemoDocument;
use demoforge_core::pipeline::{parse_source, ParseError, ParseOptions};
use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FileError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("{path}: {source}")]
    Parse { path: String, source: ParseError },
    #[error("{path}: {source}")]
    Json { path: String, source: serde_json::Error },
}

impl FileError {
    pub(crate) fn io(path: &Path, source: io::Error) -> Self {
        FileError::Io { path: path.display().to_string(), source }
    }

    /// True when the file could not be found or read, as opposed to a bad
    /// destination.
    pub fn is_missing(&self) -> bool {
        matches!(self, FileError::Io { source, .. } if source.kind() == io::ErrorKind::NotFound)
    }
}

/// Adapts any [`Read`] to the decoder's pull interface.
pub struct ReadSource<R> {
    inner: R,
}

impl<R: Read> ReadSource<R> {
    pub fn new(inner: R) -> Self {
        ReadSource { inner }
    }
}

impl<R: Read> ByteSource for ReadSource<R> {
    fn read_exact(&mut self, buf: &mut [u8]) -> Result<(), SourceError> {
        self.inner.read_exact(buf).map_err(|e| match e.kind() {
            io::ErrorKind::UnexpectedEof => SourceError::UnexpectedEof,
            _ => SourceError::Io(e.to_string()),
        })
    }
}

fn gzipped(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "gz")
}

/// Opens a file for reading, decompressing when the name ends in `.gz`.
pub fn open_read(path: &Path) -> Result<Box<dyn Read>, FileError> {
    let f = File::open(path).map_err(|e| FileError::io(path, e))?;
    let r = BufReader::new(f);
    Ok(if gzipped(path) { Box::new(GzDecoder::new(r)) } else { Box::new(r) })
}

/// Streams a demo file through the parser. The source file name recorded in
/// the document is the path's final component.
pub fn parse_demo_file(path: &Path, opts: &ParseOptions) -> Result<DemoDocument, FileError> {
    let reader = open_read(path)?;
    let mut opts = opts.clone();
    if opts.source_file.is_empty() {
        opts.source_file = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    }
    parse_source(ReadSource::new(reader), &opts)
        .map_err(|source| FileError::Parse { path: path.display().to_string(), source })
}

/// Writes through a temporary file in the destination directory and renames
/// it into place, so readers never see a partial file. Gzips when the name
/// ends in `.gz`.
pub fn write_atomic(path: &Path, write: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> Result<(), FileError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| FileError::io(path, e))?;
    {
        let mut out = BufWriter::new(tmp.as_file());
        if gzipped(path) {
            let mut gz = GzEncoder::new(&mut out, Compression::default());
            write(&mut gz).and_then(|_| gz.finish().map(drop)).map_err(|e| FileError::io(path, e))?;
        } else {
            write(&mut out).map_err(|e| FileError::io(path, e))?;
        }
        out.flush().map_err(|e| FileError::io(path, e))?;
    }
    tmp.persist(path).map_err(|e| FileError::io(path, e.error))?;
    Ok(())
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), FileError> {
    write_atomic(path, |w| w.write_all(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn read_source_reports_eof() {
        let mut s = ReadSource::new(&[1u8, 2][..]);
        let mut buf = [0u8; 3];
        assert_eq!(s.read_exact(&mut buf), Err(SourceError::UnexpectedEof));
    }

    #[test]
    fn atomic_write_round_trips_gzip() {
        let dir = tempfile::tempdir().unwrap();
        for name in ["a.txt", "a.txt.gz"] {
            let p = dir.path().join(name);
            write_bytes(&p, b"hello").unwrap();
            let mut s = String::new();
            open_read(&p).unwrap().read_to_string(&mut s).unwrap();
            assert_eq!(s, "hello");
        }
        let raw = std::fs::read(dir.path().join("a.txt.gz")).unwrap();
        assert_eq!(&raw[..2], &[0x1f, 0x8b]);
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 2);
    }

    #[test]
    fn missing_file_is_flagged() {
        let e = parse_demo_file(Path::new("/nonexistent/x.esdm"), &ParseOptions::default()).unwrap_err();
        assert!(e.is_missing());
    }
}
