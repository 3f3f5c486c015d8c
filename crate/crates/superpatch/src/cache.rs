//! Binary feature-table cache keyed by content hashes.
//!
//! Layout (little endian): magic `SPFC`, version `u32`, three SHA-256
//! digests (image, decomposition, feature config), `dim: u64`, `n: u64`,
//! then `n * dim` `f64` values. A cache whose key differs from the current
//! inputs is reported as stale and never reused.

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use superpatch_core::features::compute_features;
use superpatch_core::{Decomposition, FeatureConfig, FeatureTable, ImageGrid};

use crate::error::{CliError, CliResult};
use crate::io::{read_file, write_file};

const MAGIC: &[u8; 4] = b"SPFC";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CacheKey {
    pub image: [u8; 32],
    pub decomposition: [u8; 32],
    pub config: [u8; 32],
}

pub fn hash_image(image: &ImageGrid) -> [u8; 32] {
    let mut h = Sha256::new();
    for d in [image.width(), image.height(), image.channels()] {
        h.update((d as u64).to_le_bytes());
    }
    for v in image.data() {
        h.update(v.to_bits().to_le_bytes());
    }
    h.finalize().into()
}

pub fn hash_decomposition(decomp: &Decomposition) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update((decomp.width() as u64).to_le_bytes());
    h.update((decomp.height() as u64).to_le_bytes());
    for l in decomp.labels() {
        h.update(l.to_le_bytes());
    }
    h.finalize().into()
}

pub fn hash_config(config: &FeatureConfig) -> [u8; 32] {
    Sha256::digest(config.to_string().as_bytes()).into()
}

impl CacheKey {
    pub fn new(image: &ImageGrid, decomp: &Decomposition, config: &FeatureConfig) -> Self {
        Self {
            image: hash_image(image),
            decomposition: hash_decomposition(decomp),
            config: hash_config(config),
        }
    }
}

/// Cache file used for an image path: `<image>.spfeat`.
pub fn cache_path(image_path: &Path) -> PathBuf {
    let mut name = image_path.as_os_str().to_owned();
    name.push(".spfeat");
    PathBuf::from(name)
}

pub fn encode(key: &CacheKey, table: &FeatureTable) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + 4 + 96 + 16 + table.values().len() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&key.image);
    out.extend_from_slice(&key.decomposition);
    out.extend_from_slice(&key.config);
    out.extend_from_slice(&(table.dim() as u64).to_le_bytes());
    out.extend_from_slice(&(table.len() as u64).to_le_bytes());
    for v in table.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Decodes a cache file, failing with [`CliError::StaleCache`] when its key
/// is not `expected`.
pub fn decode(path: &Path, bytes: &[u8], expected: &CacheKey) -> CliResult<FeatureTable> {
    let bad = |m: &str| CliError::format(path, format!("corrupt feature cache: {m}"));
    if bytes.len() < 124 || &bytes[..4] != MAGIC {
        return Err(bad("bad header"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(CliError::StaleCache {
            path: path.to_path_buf(),
            reason: format!("cache version {version}, expected {VERSION}"),
        });
    }
    let stale = |what: &str| CliError::StaleCache {
        path: path.to_path_buf(),
        reason: format!("{what} changed since the cache was written"),
    };
    if bytes[8..40] != expected.image {
        return Err(stale("image content"));
    }
    if bytes[40..72] != expected.decomposition {
        return Err(stale("decomposition"));
    }
    if bytes[72..104] != expected.config {
        return Err(stale("feature configuration"));
    }
    let dim = u64::from_le_bytes(bytes[104..112].try_into().expect("8 bytes")) as usize;
    let n = u64::from_le_bytes(bytes[112..120].try_into().expect("8 bytes")) as usize;
    let body = &bytes[120..];
    if body.len() != n * dim * 8 {
        return Err(bad("truncated values"));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok(FeatureTable::new(dim, values)?)
}

/// Features for `(image, decomp, config)`, read from `path` when a matching
/// cache exists and written there otherwise. `rebuild` overwrites stale caches.
pub fn cached_features(
    path: &Path,
    image: &ImageGrid,
    decomp: &Decomposition,
    config: &FeatureConfig,
    rebuild: bool,
) -> CliResult<FeatureTable> {
    let key = CacheKey::new(image, decomp, config);
    if path.exists() && !rebuild {
        let table = decode(path, &read_file(path)?, &key)?;
        if table.len() != decomp.len() {
            return Err(CliError::format(path, "cached table size differs from superpixel count"));
        }
        return Ok(table);
    }
    let table = compute_features(decomp, image, config)?;
    write_file(path, &encode(&key, &table))?;
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use superpatch_core::FeatureKind;

    #[test]
    fn stale_config_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.png.spfeat");
        let img = ImageGrid::filled(4, 4, 3, 0.5).unwrap();
        let d = Decomposition::grid(4, 4, 2, 2).unwrap();
        let cfg = FeatureConfig::default();
        let first = cached_features(&path, &img, &d, &cfg, false).unwrap();
        let again = cached_features(&path, &img, &d, &cfg, false).unwrap();
        assert_eq!(first, again);
        let other = FeatureConfig::single(FeatureKind::MeanColor);
        let err = cached_features(&path, &img, &d, &other, false).unwrap_err();
        assert!(matches!(err, CliError::StaleCache { .. }));
        assert!(err.to_string().contains("rebuild"));
        let rebuilt = cached_features(&path, &img, &d, &other, true).unwrap();
        assert_eq!(rebuilt.dim(), 3);
    }
}
