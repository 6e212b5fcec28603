//! On-disk cache of retrieval-kernel matrices, keyed by the bits of d.
//! Entries are stored as raw little-endian f64, so a cached matrix is
//! bit-identical to a freshly built one.

use std::path::{Path, PathBuf};

use lmem::KernelMatrix;

use crate::error::CliError;

/// Overrides the cache directory.
pub const CACHE_ENV: &str = "LMEM_CACHE_DIR";

#[derive(Debug, Clone)]
pub struct KernelCache {
    dir: PathBuf,
}

impl KernelCache {
    /// `$LMEM_CACHE_DIR` if set, else `<out>/.kernel-cache`.
    pub fn locate(out: &Path) -> KernelCache {
        let dir = std::env::var_os(CACHE_ENV).map_or_else(|| out.join(".kernel-cache"), PathBuf::from);
        KernelCache { dir }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, d: f64) -> PathBuf {
        self.dir.join(format!("kernel-{:016x}.bin", d.to_bits()))
    }

    pub fn kernel(&self, d: f64) -> Result<KernelMatrix, CliError> {
        let path = self.path(d);
        if let Ok(bytes) = std::fs::read(&path) {
            if bytes.len() % 8 == 0 {
                let entries = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
                if let Some(k) = KernelMatrix::from_parts(d, entries) {
                    return Ok(k);
                }
            }
        }
        let k = KernelMatrix::new(d);
        let io = |source| CliError::Io { path: path.display().to_string(), source };
        std::fs::create_dir_all(&self.dir).map_err(io)?;
        let bytes: Vec<u8> = k.entries.iter().flat_map(|v| v.to_le_bytes()).collect();
        let tmp = self.dir.join(format!("kernel-{:016x}.bin.{}.tmp", d.to_bits(), std::process::id()));
        std::fs::write(&tmp, bytes).map_err(io)?;
        std::fs::rename(&tmp, &path).map_err(io)?;
        Ok(k)
    }
}
