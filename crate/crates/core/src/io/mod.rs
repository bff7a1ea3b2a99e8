//! File formats shared with external tooling: the `MDTN` tensor container,
//! Middlebury `.flo` flows, PNG frame and mask directories, and run configs.

use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

mod config;
mod container;
mod flo;
mod images;

pub use config::{parse_config, read_config, PathsConfig, RunConfig};
pub use container::{
    decode_tensor, encode_tensor, read_codes, read_tensor, read_video_tensor, write_codes, write_tensor, Tensor,
};
pub use flo::{decode_flo, encode_flo, read_flo, read_flow_dir, write_flo, FLO_MAGIC};
pub use images::{read_frames, read_masks, write_frames, write_image, write_masks};

/// Writes `bytes` to a temporary file next to `path` and renames it into
/// place, so readers never observe a partial file.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| Error::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// Regular files in `dir` with the given extension, in lexicographic order.
pub(crate) fn sorted_files(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let matches = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case(ext));
        if path.is_file() && matches {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}
