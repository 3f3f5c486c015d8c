//! Pixel grids, label maps and deterministic random streams.

use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{domain, Error, Result};

/// A row-major image with `channels` interleaved values per pixel, in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ImageGrid {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || channels == 0 {
            return Err(domain("image dimensions and channel count must be positive"));
        }
        if data.len() != width * height * channels {
            return Err(domain("image data length does not match width*height*channels"));
        }
        if data.iter().any(|v| !v.is_finite() || *v < 0.0 || *v > 1.0) {
            return Err(domain("image values must be finite and in [0, 1]"));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    /// Constant image.
    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(width, height, channels, vec![value; width * height * channels])
    }

    /// Builds a grid from a per-pixel closure returning `channels` values.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, &mut [f64]),
    ) -> Result<Self> {
        let mut data = vec![0.0; width * height * channels];
        for y in 0..height {
            for x in 0..width {
                let base = (y * width + x) * channels;
                f(x, y, &mut data[base..base + channels]);
            }
        }
        for v in data.iter_mut() {
            *v = v.clamp(0.0, 1.0);
        }
        Self::new(width, height, channels, data)
    }

    /// Stacks aligned single-channel images into one multi-channel grid.
    pub fn stack(planes: &[ImageGrid]) -> Result<Self> {
        let first = planes.first().ok_or_else(|| domain("no planes to stack"))?;
        let (w, h) = (first.width, first.height);
        let channels: usize = planes.iter().map(|p| p.channels).sum();
        let mut data = Vec::with_capacity(w * h * channels);
        for p in planes {
            if p.width != w || p.height != h {
                return Err(Error::DimensionMismatch {
                    expected: (w, h),
                    got: (p.width, p.height),
                });
            }
        }
        for idx in 0..w * h {
            for p in planes {
                data.extend_from_slice(p.pixel_at(idx));
            }
        }
        Self::new(w, h, channels, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        self.pixel_at(y * self.width + x)
    }

    /// Pixel by linear raster index.
    pub fn pixel_at(&self, idx: usize) -> &[f64] {
        let base = idx * self.channels;
        &self.data[base..base + self.channels]
    }

    /// Gray level used for gradients: Rec. 601 luma for 3 channels, the
    /// channel mean otherwise.
    pub fn luminance(&self, x: usize, y: usize) -> f64 {
        let p = self.pixel(x, y);
        if p.len() == 3 {
            0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]
        } else {
            p.iter().sum::<f64>() / p.len() as f64
        }
    }
}

/// Per-pixel non-negative integer labels, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LabelMap {
    width: usize,
    height: usize,
    labels: Vec<u32>,
}

impl LabelMap {
    pub fn new(width: usize, height: usize, labels: Vec<u32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(domain("label map dimensions must be positive"));
        }
        if labels.len() != width * height {
            return Err(domain("label count does not match width*height"));
        }
        Ok(Self {
            width,
            height,
            labels,
        })
    }

    /// Parses signed values, rejecting negatives.
    pub fn from_signed(width: usize, height: usize, values: &[i64]) -> Result<Self> {
        let labels = values
            .iter()
            .map(|&v| {
                u32::try_from(v).map_err(|_| domain(alloc::format!("invalid label value {v}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(width, height, labels)
    }

    /// Builds a map from row slices; all rows must have equal length.
    pub fn from_rows(rows: &[&[u32]]) -> Result<Self> {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != width) {
            return Err(domain("ragged label rows"));
        }
        Self::new(width, height, rows.iter().flat_map(|r| r.iter().copied()).collect())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    /// Largest label + 1.
    pub fn label_bound(&self) -> u32 {
        self.labels.iter().copied().max().map_or(0, |m| m + 1)
    }

    /// Checks that every label is below `m`.
    pub fn check_bound(&self, m: u32) -> Result<()> {
        match self.labels.iter().find(|&&l| l >= m) {
            Some(l) => Err(domain(alloc::format!("label {l} outside [0, {m})"))),
            None => Ok(()),
        }
    }
}

/// Seeded source of independent ChaCha streams.
///
/// Every `(major, minor)` pair selects a distinct ChaCha stream under one key
/// derived from the seed, so substreams never overlap and do not depend on the
/// order in which they are consumed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RandomSource {
    seed: u64,
}

impl RandomSource {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Stream for `(major, minor)`, e.g. (search index, superpixel index).
    pub fn substream(&self, major: u32, minor: u32) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        let mut state = self.seed;
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream((u64::from(major) << 32) | u64::from(minor));
        rng
    }

    /// Derives a child source, for handing separate seeds to separate stages.
    pub fn child(&self, tag: u64) -> RandomSource {
        let mut state = self.seed ^ tag.wrapping_mul(0xA076_1D64_78BD_642F);
        RandomSource::new(splitmix64(&mut state))
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn image_rejects_bad_length_and_range() {
        assert!(ImageGrid::new(2, 2, 3, vec![0.0; 11]).is_err());
        assert!(ImageGrid::new(1, 1, 1, vec![1.5]).is_err());
        assert!(ImageGrid::new(1, 1, 1, vec![f64::NAN]).is_err());
        assert!(ImageGrid::new(0, 1, 1, vec![]).is_err());
    }

    #[test]
    fn stack_interleaves_planes() {
        let a = ImageGrid::new(2, 1, 1, vec![0.1, 0.2]).unwrap();
        let b = ImageGrid::new(2, 1, 1, vec![0.3, 0.4]).unwrap();
        let s = ImageGrid::stack(&[a, b]).unwrap();
        assert_eq!(s.channels(), 2);
        assert_eq!(s.data(), &[0.1, 0.3, 0.2, 0.4]);
    }

    #[test]
    fn negative_label_is_domain_error() {
        assert!(matches!(
            LabelMap::from_signed(2, 1, &[0, -1]),
            Err(Error::Domain(_))
        ));
        let m = LabelMap::from_signed(2, 2, &[0, 1, 2, 0]).unwrap();
        assert_eq!(m.label_bound(), 3);
        assert!(m.check_bound(3).is_ok());
        assert!(m.check_bound(2).is_err());
    }

    #[test]
    fn substreams_are_reproducible_and_distinct() {
        let src = RandomSource::new(42);
        let a: Vec<u64> = (0..8).map(|_| src.substream(0, 1).gen()).collect();
        let mut r1 = src.substream(0, 1);
        let mut r2 = src.substream(0, 1);
        let mut r3 = src.substream(1, 0);
        let s1: Vec<u64> = (0..8).map(|_| r1.gen()).collect();
        let s2: Vec<u64> = (0..8).map(|_| r2.gen()).collect();
        let s3: Vec<u64> = (0..8).map(|_| r3.gen()).collect();
        assert_eq!(s1, s2);
        assert_ne!(s1, s3);
        assert!(a.iter().all(|&v| v == a[0]));
        assert_ne!(RandomSource::new(1).substream(0, 0).gen::<u64>(), src.substream(0, 0).gen::<u64>());
    }
}
