//! Per-superpixel descriptors.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;

use crate::decompose::Decomposition;
use crate::error::{domain, Result};
use crate::imaging::ImageGrid;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FeatureKind {
    /// Mean value per channel.
    MeanColor,
    /// Per-channel cumulative histogram, each channel's CDF ending at 1.
    CumulativeHistogram { bins: usize },
    /// Magnitude-weighted unsigned gradient orientations over `[0, pi)`,
    /// L2-normalized; all-zero on flat regions.
    OrientationHistogram { bins: usize },
}

impl FeatureKind {
    pub const DEFAULT_HIST: FeatureKind = FeatureKind::CumulativeHistogram { bins: 16 };
    pub const DEFAULT_HOG: FeatureKind = FeatureKind::OrientationHistogram { bins: 9 };

    fn dim(&self, channels: usize) -> usize {
        match *self {
            FeatureKind::MeanColor => channels,
            FeatureKind::CumulativeHistogram { bins } => bins * channels,
            FeatureKind::OrientationHistogram { bins } => bins,
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureKind::MeanColor => write!(f, "mean"),
            FeatureKind::CumulativeHistogram { bins } => write!(f, "hist:{bins}"),
            FeatureKind::OrientationHistogram { bins } => write!(f, "hog:{bins}"),
        }
    }
}

/// One or more weighted descriptor blocks, concatenated in order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureConfig {
    pub blocks: Vec<(FeatureKind, f64)>,
}

impl FeatureConfig {
    pub fn single(kind: FeatureKind) -> Self {
        Self {
            blocks: vec![(kind, 1.0)],
        }
    }

    pub fn concat(blocks: Vec<(FeatureKind, f64)>) -> Self {
        Self { blocks }
    }

    pub fn dim(&self, channels: usize) -> usize {
        self.blocks.iter().map(|(k, _)| k.dim(channels)).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.blocks.is_empty() {
            return Err(domain("feature config has no blocks"));
        }
        for (kind, weight) in &self.blocks {
            let bins = match *kind {
                FeatureKind::MeanColor => 1,
                FeatureKind::CumulativeHistogram { bins } | FeatureKind::OrientationHistogram { bins } => bins,
            };
            if bins == 0 || !weight.is_finite() || *weight < 0.0 {
                return Err(domain("feature blocks need bins >= 1 and finite non-negative weights"));
            }
        }
        Ok(())
    }
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self::single(FeatureKind::DEFAULT_HIST)
    }
}

/// Canonical text form, e.g. `hist:16*1+hog:9*0.5`.
impl fmt::Display for FeatureConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (kind, w)) in self.blocks.iter().enumerate() {
            if i > 0 {
                f.write_str("+")?;
            }
            write!(f, "{kind}*{w}")?;
        }
        Ok(())
    }
}

/// Row-major table of one descriptor per superpixel.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    dim: usize,
    values: Vec<f64>,
}

impl FeatureTable {
    pub fn new(dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 || !values.len().is_multiple_of(dim) {
            return Err(domain("feature table length must be a multiple of a positive dim"));
        }
        Ok(Self { dim, values })
    }

    /// One row per entry of `rows`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != dim) {
            return Err(domain("ragged feature rows"));
        }
        Self::new(dim, rows.iter().flatten().copied().collect())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Computes one descriptor per superpixel of `decomp` over `image`.
pub fn compute_features(
    decomp: &Decomposition,
    image: &ImageGrid,
    config: &FeatureConfig,
) -> Result<FeatureTable> {
    decomp.check_matches(image)?;
    config.validate()?;
    let channels = image.channels();
    let dim = config.dim(channels);
    let n = decomp.len();
    let mut values = vec![0.0; n * dim];
    let pixels = decomp.pixels_by_superpixel();
    let gradients = if config
        .blocks
        .iter()
        .any(|(k, _)| matches!(k, FeatureKind::OrientationHistogram { .. }))
    {
        Some(orientation_field(image))
    } else {
        None
    };

    let mut offset = 0;
    for (kind, weight) in &config.blocks {
        let bdim = kind.dim(channels);
        for (i, members) in pixels.iter().enumerate() {
            let block = &mut values[i * dim + offset..i * dim + offset + bdim];
            match *kind {
                FeatureKind::MeanColor => mean_color(image, members, block),
                FeatureKind::CumulativeHistogram { bins } => {
                    cumulative_histogram(image, members, bins, block)
                }
                FeatureKind::OrientationHistogram { bins } => orientation_histogram(
                    gradients.as_deref().expect("computed above"),
                    members,
                    bins,
                    block,
                ),
            }
            block.iter_mut().for_each(|v| *v *= weight);
        }
        offset += bdim;
    }
    FeatureTable::new(dim, values)
}

fn mean_color(image: &ImageGrid, members: &[usize], out: &mut [f64]) {
    for &p in members {
        for (o, v) in out.iter_mut().zip(image.pixel_at(p)) {
            *o += v;
        }
    }
    let n = members.len() as f64;
    out.iter_mut().for_each(|o| *o /= n);
}

fn cumulative_histogram(image: &ImageGrid, members: &[usize], bins: usize, out: &mut [f64]) {
    let channels = image.channels();
    for &p in members {
        for (ch, &v) in image.pixel_at(p).iter().enumerate() {
            let b = ((v * bins as f64) as usize).min(bins - 1);
            out[ch * bins + b] += 1.0;
        }
    }
    let n = members.len() as f64;
    for ch in 0..channels {
        let mut acc = 0.0;
        for slot in &mut out[ch * bins..(ch + 1) * bins] {
            acc += *slot;
            *slot = acc / n;
        }
        // exact 1.0 at the end regardless of rounding
        out[(ch + 1) * bins - 1] = 1.0;
    }
}

/// (magnitude, unsigned angle in [0, pi)) per pixel from central differences
/// of luminance, clamped at the border.
fn orientation_field(image: &ImageGrid) -> Vec<(f64, f64)> {
    let (w, h) = (image.width(), image.height());
    let lum: Vec<f64> = (0..w * h).map(|p| image.luminance(p % w, p / w)).collect();
    (0..w * h)
        .map(|p| {
            let (x, y) = (p % w, p / w);
            let gx = (lum[y * w + (x + 1).min(w - 1)] - lum[y * w + x.saturating_sub(1)]) * 0.5;
            let gy = (lum[(y + 1).min(h - 1) * w + x] - lum[y.saturating_sub(1) * w + x]) * 0.5;
            let mag = libm::sqrt(gx * gx + gy * gy);
            let mut angle = libm::atan2(gy, gx);
            if angle < 0.0 {
                angle += PI;
            }
            if angle >= PI {
                angle -= PI;
            }
            (mag, angle)
        })
        .collect()
}

fn orientation_histogram(field: &[(f64, f64)], members: &[usize], bins: usize, out: &mut [f64]) {
    for &p in members {
        let (mag, angle) = field[p];
        let b = ((angle / PI * bins as f64) as usize).min(bins - 1);
        out[b] += mag;
    }
    let norm = libm::sqrt(out.iter().map(|v| v * v).sum::<f64>());
    if norm > 1e-12 {
        out.iter_mut().for_each(|v| *v /= norm);
    } else {
        out.iter_mut().for_each(|v| *v = 0.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::LabelMap;

    fn halves() -> Decomposition {
        Decomposition::grid(8, 4, 4, 4).unwrap()
    }

    #[test]
    fn uniform_mean_color() {
        let img = ImageGrid::filled(8, 4, 3, 0.5).unwrap();
        let t = compute_features(&halves(), &img, &FeatureConfig::single(FeatureKind::MeanColor))
            .unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.row(0), &[0.5, 0.5, 0.5]);
        assert_eq!(t.row(1), &[0.5, 0.5, 0.5]);
    }

    #[test]
    fn uniform_cumulative_histogram_is_step() {
        let img = ImageGrid::filled(8, 4, 3, 0.5).unwrap();
        let t = compute_features(&halves(), &img, &FeatureConfig::default()).unwrap();
        assert_eq!(t.dim(), 48);
        for ch in 0..3 {
            let block = &t.row(0)[ch * 16..(ch + 1) * 16];
            for (b, v) in block.iter().enumerate() {
                assert_eq!(*v, if b < 8 { 0.0 } else { 1.0 });
            }
        }
    }

    #[test]
    fn flat_region_orientation_is_zero() {
        let img = ImageGrid::filled(8, 4, 1, 0.3).unwrap();
        let t = compute_features(&halves(), &img, &FeatureConfig::single(FeatureKind::DEFAULT_HOG))
            .unwrap();
        assert!(t.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn vertical_edge_orients_horizontally() {
        // intensity ramps in x only: all gradient mass in the angle-0 bin
        let img = ImageGrid::from_fn(8, 4, 1, |x, _, p| p[0] = x as f64 / 7.0).unwrap();
        let t = compute_features(&halves(), &img, &FeatureConfig::single(FeatureKind::DEFAULT_HOG))
            .unwrap();
        let row = t.row(0);
        assert!((row[0] - 1.0).abs() < 1e-12);
        assert!(row[1..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn concat_applies_block_weights() {
        let img = ImageGrid::filled(8, 4, 1, 0.25).unwrap();
        let cfg = FeatureConfig::concat(vec![
            (FeatureKind::MeanColor, 2.0),
            (FeatureKind::CumulativeHistogram { bins: 2 }, 1.0),
        ]);
        let t = compute_features(&halves(), &img, &cfg).unwrap();
        assert_eq!(t.row(1), &[0.5, 1.0, 1.0]);
        assert_eq!(alloc::format!("{cfg}"), "mean*2+hist:2*1");
    }

    #[test]
    fn mismatched_dimensions_rejected() {
        let img = ImageGrid::filled(4, 4, 1, 0.0).unwrap();
        assert!(compute_features(&halves(), &img, &FeatureConfig::default()).is_err());
        let _ = LabelMap::new(1, 1, vec![0]).unwrap();
    }
}
