//! `GDNN1` container: a text manifest, an opaque text blob and a sequence of
//! little-endian `f64` arrays.
//!
//! ```text
//! GDNN1
//! version 1
//! <key> <value>                      (zero or more, order preserved)
//! blob <byte length>
//! array <name> <rows> <cols> <offset>
//! ...
//! end
//! <blob bytes><array payload>
//! ```
//!
//! Array offsets are relative to the start of the payload and must be
//! contiguous, so a loaded container re-serializes to identical bytes.

use std::fs;
use std::path::Path;

use gdnn_core::Matrix64;

use crate::error::{CliError, Result};

pub const MAGIC: &str = "GDNN1";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Container {
    pub meta: Vec<(String, String)>,
    pub blob: String,
    pub arrays: Vec<(String, Matrix64)>,
}

fn is_token(s: &str) -> bool {
    !s.is_empty() && !s.chars().any(char::is_whitespace)
}

impl Container {
    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn array(&self, name: &str) -> Option<&Matrix64> {
        self.arrays.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut head = format!("{MAGIC}\nversion {VERSION}\n");
        for (k, v) in &self.meta {
            assert!(is_token(k) && !v.contains('\n'), "bad manifest entry `{k}`");
            head.push_str(&format!("{k} {v}\n"));
        }
        head.push_str(&format!("blob {}\n", self.blob.len()));
        let mut offset = 0usize;
        for (name, m) in &self.arrays {
            assert!(is_token(name), "bad array name `{name}`");
            head.push_str(&format!("array {name} {} {} {offset}\n", m.rows(), m.cols()));
            offset += m.data().len() * 8;
        }
        head.push_str("end\n");

        let mut out = head.into_bytes();
        out.reserve(self.blob.len() + offset);
        out.extend_from_slice(self.blob.as_bytes());
        for (_, m) in &self.arrays {
            for v in m.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        let bad = |msg: String| CliError::format(origin, msg);
        let mut pos = 0usize;
        let mut next_line = || -> Result<&str> {
            let rest = &bytes[pos..];
            let end = rest
                .iter()
                .position(|&b| b == b'\n')
                .ok_or_else(|| bad("truncated manifest".into()))?;
            pos += end + 1;
            std::str::from_utf8(&rest[..end]).map_err(|_| bad("manifest is not UTF-8".into()))
        };

        if next_line()? != MAGIC {
            return Err(bad(format!("not a {MAGIC} container")));
        }
        match next_line()?.split_once(' ') {
            Some(("version", v)) if v == VERSION.to_string() => {}
            Some(("version", v)) => return Err(bad(format!("unsupported version {v}"))),
            _ => return Err(bad("missing version line".into())),
        }

        let mut meta = Vec::new();
        let mut blob_len = None;
        let mut specs = Vec::new();
        loop {
            let line = next_line()?;
            if line == "end" {
                break;
            }
            let (key, rest) = line.split_once(' ').ok_or_else(|| bad(format!("bad manifest line `{line}`")))?;
            match key {
                "blob" => {
                    let n: usize = rest.parse().map_err(|_| bad(format!("bad blob length `{rest}`")))?;
                    blob_len = Some(n);
                }
                "array" => {
                    let f: Vec<&str> = rest.split(' ').collect();
                    let [name, rows, cols, offset] = f[..] else {
                        return Err(bad(format!("bad array line `{line}`")));
                    };
                    let num = |s: &str| s.parse::<usize>().map_err(|_| bad(format!("bad number `{s}` in `{line}`")));
                    specs.push((name.to_string(), num(rows)?, num(cols)?, num(offset)?));
                }
                _ if blob_len.is_some() => return Err(bad(format!("manifest key `{key}` after blob"))),
                _ => meta.push((key.to_string(), rest.to_string())),
            }
        }
        let blob_len = blob_len.ok_or_else(|| bad("missing blob line".into()))?;
        let blob_end = pos + blob_len;
        if blob_end > bytes.len() {
            return Err(bad("truncated blob".into()));
        }
        let blob = String::from_utf8(bytes[pos..blob_end].to_vec()).map_err(|_| bad("blob is not UTF-8".into()))?;
        let payload = &bytes[blob_end..];

        let mut arrays = Vec::with_capacity(specs.len());
        let mut expected = 0usize;
        for (name, rows, cols, offset) in specs {
            if offset != expected {
                return Err(bad(format!("array `{name}` at offset {offset}, expected {expected}")));
            }
            let len = rows
                .checked_mul(cols)
                .and_then(|n| n.checked_mul(8))
                .ok_or_else(|| bad(format!("array `{name}` too large")))?;
            let chunk = payload
                .get(offset..offset + len)
                .ok_or_else(|| bad(format!("array `{name}` runs past end of file")))?;
            let data = chunk
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                .collect();
            arrays.push((name, Matrix64::from_vec(rows, cols, data)?));
            expected += len;
        }
        if payload.len() != expected {
            return Err(bad(format!("{} trailing bytes", payload.len() - expected)));
        }
        Ok(Self { meta, blob, arrays })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(CliError::io(path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(CliError::io(path))?;
        Self::from_bytes(&bytes, path)
    }
}
