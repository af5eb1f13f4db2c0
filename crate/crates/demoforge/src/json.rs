//! JSON documents. Field order follows the struct definitions, so output is
//! stable; floats use the shortest representation that reads back exactly.

use std::io::Write;
use std::path::Path;

use demoforge_core::model::DemoDocument;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::files::{open_read, write_atomic, FileError};

pub fn emit_json(doc: &DemoDocument) -> String {
    serde_json::to_string(doc).expect("documents always serialize")
}

pub fn parse_json(text: &str) -> Result<DemoDocument, serde_json::Error> {
    serde_json::from_str(text)
}

/// Writes any value as JSON, gzipped for `.gz` paths, with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), FileError> {
    write_atomic(path, |w: &mut dyn Write| {
        serde_json::to_writer(&mut *w, value)?;
        w.write_all(b"\n")
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, FileError> {
    let r = open_read(path)?;
    serde_json::from_reader(r).map_err(|source| FileError::Json { path: path.display().to_string(), source })
}
