//! JSON sidecars that record how a cropped/padded grid maps to its parent.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::Placement;

pub fn parse_placement(text: &str) -> Result<Placement> {
    let p: Placement = from_json_str(text).map_err(Error::Sidecar)?;
    p.validate().map_err(|e| Error::Sidecar(e.to_string()))?;
    Ok(p)
}

pub fn read_placement(path: impl AsRef<Path>) -> Result<Placement> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_placement(&text)
}

pub fn write_placement(p: &Placement, path: impl AsRef<Path>) -> Result<()> {
    write_json(p, path)
}

pub(crate) fn write_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Deserializes with the offending key path in the error message.
pub(crate) fn from_json_str<T: DeserializeOwned>(text: &str) -> std::result::Result<T, String> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        format!("{path}: {}", e.into_inner())
    })
}
