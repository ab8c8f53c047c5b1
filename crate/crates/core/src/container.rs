//! Single-file artifact container used for datasets, checkpoints, map
//! archives and perturbations.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes, identifies the artifact kind
//! version      u32
//! header_len   u64
//! header       header_len bytes of UTF-8 JSON
//! count        u64
//! payload      count x f64
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::{Error, Result};

pub const CONTAINER_VERSION: u32 = 1;

pub fn write_container<H: Serialize>(path: &Path, magic: &[u8; 8], header: &H, payload: &[f64]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let io = |e| Error::io(path, e);
    let header = serde_json::to_vec(header)?;
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    w.write_all(magic).map_err(io)?;
    w.write_u32::<LittleEndian>(CONTAINER_VERSION).map_err(io)?;
    w.write_u64::<LittleEndian>(header.len() as u64).map_err(io)?;
    w.write_all(&header).map_err(io)?;
    w.write_u64::<LittleEndian>(payload.len() as u64).map_err(io)?;
    for &v in payload {
        w.write_f64::<LittleEndian>(v).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_container<H: DeserializeOwned>(path: &Path, magic: &[u8; 8]) -> Result<(H, Vec<f64>)> {
    let io = |e| Error::io(path, e);
    let format = |reason: String| Error::Format {
        path: path.to_path_buf(),
        reason,
    };
    let mut r = BufReader::new(File::open(path).map_err(io)?);
    let mut got = [0u8; 8];
    r.read_exact(&mut got).map_err(io)?;
    if &got != magic {
        return Err(format(format!(
            "expected magic {:?}, found {:?}",
            String::from_utf8_lossy(magic),
            String::from_utf8_lossy(&got)
        )));
    }
    let version = r.read_u32::<LittleEndian>().map_err(io)?;
    if version != CONTAINER_VERSION {
        return Err(format(format!("container version {version} is not supported")));
    }
    let len = r.read_u64::<LittleEndian>().map_err(io)? as usize;
    let mut header = vec![0u8; len];
    r.read_exact(&mut header).map_err(io)?;
    let header: H = serde_json::from_slice(&header).map_err(|e| format(format!("bad header: {e}")))?;
    let count = r.read_u64::<LittleEndian>().map_err(io)? as usize;
    let mut payload = vec![0.0; count];
    r.read_f64_into::<LittleEndian>(&mut payload).map_err(io)?;
    Ok((header, payload))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    #[test]
    fn round_trip_and_magic_check() {
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("sub/x.bin");
        let header = BTreeMap::from([("k".to_string(), 3u32)]);
        let payload = vec![0.1, -2.5, f64::MIN_POSITIVE];
        write_container(&path, b"TESTTEST", &header, &payload).unwrap();
        let (h, p): (BTreeMap<String, u32>, Vec<f64>) = read_container(&path, b"TESTTEST").unwrap();
        assert_eq!(h, header);
        assert_eq!(p, payload);
        let err = read_container::<BTreeMap<String, u32>>(&path, b"OTHERXXX").unwrap_err();
        assert!(matches!(err, Error::Format { .. }));
    }
}
