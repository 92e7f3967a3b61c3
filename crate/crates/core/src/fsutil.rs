use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::Result;

/// Write via a sibling temp file and rename, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// JSON with object keys in sorted order, so equal values always give equal bytes.
pub fn canonical_json(value: &impl Serialize) -> Result<Vec<u8>> {
    // serde_json's map is ordered by key unless `preserve_order` is enabled
    Ok(serde_json::to_vec(&serde_json::to_value(value)?)?)
}

/// Canonical JSON, pretty-printed with a trailing newline.
pub fn canonical_json_pretty(value: &impl Serialize) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(&serde_json::to_value(value)?)?;
    out.push(b'\n');
    Ok(out)
}
