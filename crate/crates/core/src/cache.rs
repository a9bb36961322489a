//! On-disk cache of simulated null distributions.
//!
//! One text file per key, named by a hash of the key:
//!
//! ```text
//! rjdcov-null-cache
//! version 1
//! checksum <sha256 of everything below this line>
//! key <canonical JSON key>
//! count <B>
//! <draw as 16 hex digits of its IEEE-754 bits>   (B lines)
//! ```
//!
//! Draws round-trip bit for bit. Files are written to a temporary name in the
//! same directory and renamed into place.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::calibration::{NullDistribution, NullKey};
use crate::error::{Error, Result};

pub const CACHE_FORMAT_VERSION: u32 = 1;
pub const CACHE_DIR_ENV: &str = "RJDCOV_CACHE_DIR";
pub const DEFAULT_CACHE_DIR: &str = ".rjdcov-cache";

const MAGIC: &str = "rjdcov-null-cache";

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn sha256_hex(data: &[u8]) -> String {
    hex(&Sha256::digest(data))
}

#[derive(Debug, Clone)]
pub struct NullCache {
    dir: PathBuf,
}

impl NullCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        NullCache { dir: dir.into() }
    }

    /// Directory from the environment variable, else the default.
    pub fn from_env() -> Self {
        NullCache::new(std::env::var_os(CACHE_DIR_ENV).map_or_else(|| PathBuf::from(DEFAULT_CACHE_DIR), PathBuf::from))
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, key: &NullKey) -> PathBuf {
        let h = sha256_hex(key.canonical().as_bytes());
        self.dir.join(format!("null-{}.txt", &h[..32]))
    }

    pub fn store(&self, null: &NullDistribution) -> Result<PathBuf> {
        fs::create_dir_all(&self.dir)?;
        let path = self.path_for(null.key());
        let mut payload = format!("key {}\ncount {}\n", null.key().canonical(), null.len());
        for d in null.draws() {
            payload.push_str(&format!("{:016x}\n", d.to_bits()));
        }
        let body = format!(
            "{MAGIC}\nversion {CACHE_FORMAT_VERSION}\nchecksum {}\n{payload}",
            sha256_hex(payload.as_bytes())
        );
        let tmp = self.dir.join(format!(
            ".tmp-{}-{}",
            path.file_name().and_then(|s| s.to_str()).unwrap_or("null"),
            std::process::id()
        ));
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(body.as_bytes())?;
            f.sync_all()?;
        }
        fs::rename(&tmp, &path)?;
        Ok(path)
    }

    pub fn load(&self, key: &NullKey) -> Result<NullDistribution> {
        let path = self.path_for(key);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(Error::CacheMiss(path)),
            Err(e) if e.kind() == std::io::ErrorKind::InvalidData => return Err(Error::ChecksumMismatch(path)),
            Err(e) => return Err(e.into()),
        };
        let format_err = |reason: &str| Error::CacheFormat { path: path.clone(), reason: reason.to_string() };

        let mut header = text.splitn(4, '\n');
        if header.next() != Some(MAGIC) {
            return Err(format_err("bad magic line"));
        }
        let version = header.next().and_then(|l| l.strip_prefix("version ")).ok_or_else(|| format_err("missing version"))?;
        if version != CACHE_FORMAT_VERSION.to_string() {
            // an older or newer format is treated as absent
            return Err(Error::CacheMiss(path));
        }
        let checksum = header.next().and_then(|l| l.strip_prefix("checksum ")).ok_or_else(|| format_err("missing checksum"))?;
        let payload = header.next().unwrap_or("");
        if sha256_hex(payload.as_bytes()) != checksum {
            return Err(Error::ChecksumMismatch(path));
        }

        let mut lines = payload.lines();
        let stored_key = lines.next().and_then(|l| l.strip_prefix("key ")).ok_or_else(|| format_err("missing key"))?;
        if stored_key != key.canonical() {
            return Err(Error::CacheMiss(path));
        }
        let count: usize = lines
            .next()
            .and_then(|l| l.strip_prefix("count "))
            .and_then(|c| c.parse().ok())
            .ok_or_else(|| format_err("missing count"))?;
        let draws = lines
            .map(|l| u64::from_str_radix(l, 16).map(f64::from_bits).map_err(|_| format_err("bad draw")))
            .collect::<Result<Vec<f64>>>()?;
        if draws.len() != count {
            return Err(format_err("draw count does not match header"));
        }
        NullDistribution::from_parts(key.clone(), draws)
    }

    /// Loads the distribution, simulating and storing it on a miss.
    pub fn get_or_simulate(&self, key: &NullKey) -> Result<NullDistribution> {
        match self.load(key) {
            Ok(n) => Ok(n),
            Err(Error::CacheMiss(_)) => {
                let null = NullDistribution::simulate(key)?;
                self.store(&null)?;
                Ok(null)
            }
            Err(e) => Err(e),
        }
    }
}
