//! Exemplar library manifests.
//!
//! A manifest is a JSON array of entries
//! `{"image": "a.png" | ["t1.png", "t2.png"], "labels": "a_labels.png", "decomposition": "a.sp.png"}`
//! with paths relative to the manifest's directory. `labels` ending in
//! `.json` is an array of one label per superpixel; anything else is a
//! pixel label map reduced by majority vote.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Deserialize;
use sha2::{Digest, Sha256};
use superpatch_core::{
    slic_decompose, Decomposition, ExemplarLibrary, FeatureTable, FeaturedImage, ImageGrid, LabelMap, RandomSource,
};

use crate::cache::{cache_path, cached_features};
use crate::config::RunConfig;
use crate::error::{require_exists, CliError, CliResult};
use crate::formats::{export_decomposition, import_decomposition};
use crate::io::{load_labelmap, load_stack, read_file};

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum ImageRef {
    One(PathBuf),
    Stack(Vec<PathBuf>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEntry {
    image: ImageRef,
    labels: Option<PathBuf>,
    decomposition: Option<PathBuf>,
}

/// Manifest entry with absolute (or working-directory relative) paths.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub images: Vec<PathBuf>,
    pub labels: Option<PathBuf>,
    pub decomposition: Option<PathBuf>,
}

pub fn parse_manifest(text: &str, base: &Path, path: &Path) -> CliResult<Vec<ManifestEntry>> {
    let raw: Vec<RawEntry> = serde_json::from_str(text).map_err(|e| CliError::format(path, e.to_string()))?;
    if raw.is_empty() {
        return Err(CliError::Validation(format!("{}: manifest lists no exemplars", path.display())));
    }
    raw.into_iter()
        .map(|e| {
            let images = match e.image {
                ImageRef::One(p) => vec![base.join(p)],
                ImageRef::Stack(ps) => ps.into_iter().map(|p| base.join(p)).collect(),
            };
            if images.is_empty() {
                return Err(CliError::format(path, "entry with an empty image list"));
            }
            Ok(ManifestEntry {
                images,
                labels: e.labels.map(|p| base.join(p)),
                decomposition: e.decomposition.map(|p| base.join(p)),
            })
        })
        .collect()
}

pub fn load_manifest(path: &Path) -> CliResult<Vec<ManifestEntry>> {
    let bytes = read_file(path)?;
    let text = String::from_utf8(bytes).map_err(|_| CliError::format(path, "manifest is not UTF-8"))?;
    let base = path.parent().unwrap_or(Path::new(""));
    parse_manifest(&text, base, path)
}

/// Where a computed decomposition of `image` is cached: beside the image,
/// named after the superpixel parameters so different settings never collide.
pub fn decomposition_cache_path(image: &Path, config: &RunConfig) -> PathBuf {
    let p = config.slic();
    let mut h = Sha256::new();
    h.update(format!("{}|{}|{}|{}|{}", p.k, p.compactness, p.iterations, p.jitter, config.seed));
    let tag = hex::encode(&h.finalize()[..4]);
    let stem = image.file_stem().and_then(|s| s.to_str()).unwrap_or("image");
    image.with_file_name(format!("{stem}.sp-{tag}.png"))
}

/// An image with its decomposition and features.
#[derive(Debug, Clone)]
pub struct PreparedImage {
    pub image: ImageGrid,
    pub decomposition: Decomposition,
    pub features: FeatureTable,
}

/// Loads `images` (stacked into one multi-channel grid), imports or computes
/// its decomposition and reads or fills the feature cache.
pub fn prepare_image(
    images: &[PathBuf],
    decomposition: Option<&Path>,
    config: &RunConfig,
    rebuild_cache: bool,
) -> CliResult<PreparedImage> {
    let image = load_stack(images)?;
    let primary = &images[0];
    let decomp = match decomposition {
        Some(p) => {
            require_exists(p)?;
            import_decomposition(p)?
        }
        None => {
            let cached = decomposition_cache_path(primary, config);
            if cached.exists() && !rebuild_cache {
                import_decomposition(&cached)?
            } else {
                let d = slic_decompose(&image, &config.slic(), &RandomSource::new(config.seed))?;
                export_decomposition(&d, &cached)?;
                d
            }
        }
    };
    decomp.check_matches(&image)?;
    let features = cached_features(&cache_path(primary), &image, &decomp, &config.feature, rebuild_cache)?;
    Ok(PreparedImage {
        image,
        decomposition: decomp,
        features,
    })
}

/// Per-superpixel labels from a `.json` array or a pixel label map.
pub fn load_superpixel_labels(path: &Path, decomp: &Decomposition) -> CliResult<(Vec<u32>, Option<LabelMap>)> {
    let is_json = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        let bytes = read_file(path)?;
        let labels: Vec<u32> = serde_json::from_slice(&bytes).map_err(|e| CliError::format(path, e.to_string()))?;
        if labels.len() != decomp.len() {
            return Err(CliError::Validation(format!(
                "{}: {} labels for {} superpixels",
                path.display(),
                labels.len(),
                decomp.len()
            )));
        }
        Ok((labels, None))
    } else {
        let map = load_labelmap(path)?;
        let labels = superpatch_core::spm::majority_labels(decomp, &map)?;
        Ok((labels, Some(map)))
    }
}

/// Loads every manifest entry at superpatch radius `config.radius`.
/// Entries are prepared in parallel on the current rayon pool.
pub fn build_library(entries: &[ManifestEntry], config: &RunConfig, rebuild_cache: bool) -> CliResult<ExemplarLibrary> {
    let featured: Vec<FeaturedImage> = entries
        .par_iter()
        .map(|e| {
            let prepared = prepare_image(&e.images, e.decomposition.as_deref(), config, rebuild_cache)?;
            let mut fi = FeaturedImage::new(
                prepared.decomposition,
                prepared.features,
                config.feature.clone(),
                config.radius,
            )?;
            if let Some(lp) = &e.labels {
                let (labels, _) = load_superpixel_labels(lp, fi.decomposition())?;
                fi = fi.with_labels(labels)?;
            }
            Ok(fi)
        })
        .collect::<CliResult<_>>()?;
    Ok(ExemplarLibrary::new(featured)?)
}
