//! Superpatches and the barycenter-weighted superpatch distance.

use alloc::vec::Vec;
use core::f64::consts::SQRT_2;

use crate::decompose::Decomposition;
use crate::error::{domain, Result};
use crate::features::FeatureTable;

/// Distance between two superpixel descriptors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FeatureMetric {
    #[default]
    Euclidean,
    SquaredEuclidean,
    Manhattan,
}

impl FeatureMetric {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let pairs = a.iter().zip(b);
        match self {
            FeatureMetric::Euclidean => libm::sqrt(pairs.map(|(x, y)| (x - y) * (x - y)).sum()),
            FeatureMetric::SquaredEuclidean => pairs.map(|(x, y)| (x - y) * (x - y)).sum(),
            FeatureMetric::Manhattan => pairs.map(|(x, y)| (x - y).abs()).sum(),
        }
    }
}

/// How member pairs are weighted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightMode {
    /// `exp(-|x|^2/sigma1^2) * ws(a) * ws(b)` with `ws(.) = exp(-|offset|^2/sigma2^2)`.
    Gaussian { sigma1: f64, sigma2: f64 },
    /// Limit of `sigma1 -> 0`, `sigma2 -> inf`: weight 1 when both members
    /// sit at the same offset from their centers (within `tolerance` pixels
    /// per axis), 0 otherwise.
    OffsetIndicator { tolerance: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceParams {
    pub mode: WeightMode,
    pub metric: FeatureMetric,
}

impl DistanceParams {
    pub fn gaussian(sigma1: f64, sigma2: f64) -> Result<Self> {
        if !(sigma1 > 0.0) || !(sigma2 > 0.0) {
            return Err(domain("sigma1 and sigma2 must be positive"));
        }
        Ok(Self {
            mode: WeightMode::Gaussian { sigma1, sigma2 },
            metric: FeatureMetric::Euclidean,
        })
    }

    /// `sigma1 = sqrt(hw/K)/2` from the decomposition and `sigma2 = sqrt(2) R`
    /// (unbounded when `R = 0`, where the center is the only member).
    pub fn for_decomposition(decomp: &Decomposition, radius: f64) -> Self {
        Self {
            mode: WeightMode::Gaussian {
                sigma1: default_sigma1(decomp.width(), decomp.height(), decomp.len()),
                sigma2: default_sigma2(radius),
            },
            metric: FeatureMetric::Euclidean,
        }
    }

    pub fn with_metric(mut self, metric: FeatureMetric) -> Self {
        self.metric = metric;
        self
    }

    pub fn validate(&self) -> Result<()> {
        match self.mode {
            WeightMode::Gaussian { sigma1, sigma2 } if !(sigma1 > 0.0) || !(sigma2 > 0.0) => {
                Err(domain("sigma1 and sigma2 must be positive"))
            }
            WeightMode::OffsetIndicator { tolerance } if !(tolerance >= 0.0) => {
                Err(domain("offset tolerance must be non-negative"))
            }
            _ => Ok(()),
        }
    }
}

pub fn default_sigma1(width: usize, height: usize, k: usize) -> f64 {
    0.5 * libm::sqrt((width * height) as f64 / k.max(1) as f64)
}

pub fn default_sigma2(radius: f64) -> f64 {
    if radius > 0.0 {
        SQRT_2 * radius
    } else {
        f64::INFINITY
    }
}

/// Replaces the Gaussian weighting by the exact-offset indicator.
pub fn patch_degeneration_mode(params: DistanceParams) -> DistanceParams {
    DistanceParams {
        mode: WeightMode::OffsetIndicator { tolerance: 1e-9 },
        ..params
    }
}

/// A center superpixel and every superpixel whose barycenter lies within
/// `radius` of the center's, with offsets `c_member - c_center`.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperPatch {
    pub center: usize,
    pub radius: f64,
    pub members: Vec<(usize, (f64, f64))>,
}

impl SuperPatch {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

pub fn build_superpatch(decomp: &Decomposition, i: usize, radius: f64) -> Result<SuperPatch> {
    if i >= decomp.len() {
        return Err(domain(alloc::format!(
            "superpixel index {i} out of range (|A| = {})",
            decomp.len()
        )));
    }
    if !(radius >= 0.0) {
        return Err(domain("superpatch radius must be >= 0"));
    }
    let (cx, cy) = decomp.barycenter(i);
    let r2 = radius * radius;
    let members = decomp
        .superpixels()
        .iter()
        .filter_map(|sp| {
            let off = (sp.barycenter.0 - cx, sp.barycenter.1 - cy);
            if sp.index == i {
                Some((i, (0.0, 0.0)))
            } else if off.0 * off.0 + off.1 * off.1 <= r2 {
                Some((sp.index, off))
            } else {
                None
            }
        })
        .collect();
    Ok(SuperPatch {
        center: i,
        radius,
        members,
    })
}

/// Superpatches for every superpixel of `decomp`.
pub fn build_all_superpatches(decomp: &Decomposition, radius: f64) -> Result<Vec<SuperPatch>> {
    (0..decomp.len())
        .map(|i| build_superpatch(decomp, i, radius))
        .collect()
}

fn spatial_weight(offset: (f64, f64), sigma2: f64) -> f64 {
    let d2 = offset.0 * offset.0 + offset.1 * offset.1;
    if d2 == 0.0 {
        1.0
    } else {
        libm::exp(-d2 / (sigma2 * sigma2))
    }
}

/// Weight of the member pair `(a, b)` given their offsets from their own
/// superpatch centers: `a_offset = c_i' - c_i`, `b_offset = c_j' - c_j`.
/// The registered displacement is `x = c_j' - c_i' + (c_i - c_j) = b_offset - a_offset`.
pub fn pair_weight(a_offset: (f64, f64), b_offset: (f64, f64), params: &DistanceParams) -> f64 {
    let x = (b_offset.0 - a_offset.0, b_offset.1 - a_offset.1);
    match params.mode {
        WeightMode::Gaussian { sigma1, sigma2 } => {
            libm::exp(-(x.0 * x.0 + x.1 * x.1) / (sigma1 * sigma1))
                * spatial_weight(a_offset, sigma2)
                * spatial_weight(b_offset, sigma2)
        }
        WeightMode::OffsetIndicator { tolerance } => {
            if x.0.abs() <= tolerance && x.1.abs() <= tolerance {
                1.0
            } else {
                0.0
            }
        }
    }
}

/// Same as [`pair_weight`] from absolute barycenters.
pub fn pair_weight_absolute(
    c_a_member: (f64, f64),
    c_b_member: (f64, f64),
    c_a_center: (f64, f64),
    c_b_center: (f64, f64),
    params: &DistanceParams,
) -> f64 {
    pair_weight(
        (c_a_member.0 - c_a_center.0, c_a_member.1 - c_a_center.1),
        (c_b_member.0 - c_b_center.0, c_b_member.1 - c_b_center.1),
        params,
    )
}

/// Weighted mean of member feature distances over all member pairs.
/// The center pair always has weight 1, so the denominator is at least 1.
pub fn superpatch_distance(
    a: &SuperPatch,
    b: &SuperPatch,
    features_a: &FeatureTable,
    features_b: &FeatureTable,
    params: &DistanceParams,
) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    match params.mode {
        WeightMode::Gaussian { sigma1, sigma2 } => {
            let inv_s1 = 1.0 / (sigma1 * sigma1);
            for &(ia, oa) in &a.members {
                let wa = spatial_weight(oa, sigma2);
                let fa = features_a.row(ia);
                for &(ib, ob) in &b.members {
                    let x = (ob.0 - oa.0, ob.1 - oa.1);
                    let w = libm::exp(-(x.0 * x.0 + x.1 * x.1) * inv_s1)
                        * wa
                        * spatial_weight(ob, sigma2);
                    if w > 0.0 {
                        num += w * params.metric.eval(fa, features_b.row(ib));
                        den += w;
                    }
                }
            }
        }
        WeightMode::OffsetIndicator { .. } => {
            for &(ia, oa) in &a.members {
                for &(ib, ob) in &b.members {
                    if pair_weight(oa, ob, params) > 0.0 {
                        num += params.metric.eval(features_a.row(ia), features_b.row(ib));
                        den += 1.0;
                    }
                }
            }
        }
    }
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use alloc::vec::Vec;
    use libm::exp;

    #[test]
    fn zero_radius_keeps_only_center() {
        let d = Decomposition::grid(5, 5, 1, 1).unwrap();
        let sp = build_superpatch(&d, 12, 0.0).unwrap();
        assert_eq!(sp.members, vec![(12, (0.0, 0.0))]);
    }

    #[test]
    fn unit_radius_on_pixel_grid_excludes_diagonals() {
        let d = Decomposition::grid(5, 5, 1, 1).unwrap();
        let sp = build_superpatch(&d, 12, 1.0).unwrap();
        let ids: Vec<usize> = sp.members.iter().map(|m| m.0).collect();
        assert_eq!(ids, vec![7, 11, 12, 13, 17]);
    }

    #[test]
    fn out_of_range_index() {
        let d = Decomposition::grid(2, 2, 1, 1).unwrap();
        assert!(build_superpatch(&d, 4, 1.0).is_err());
        assert!(build_superpatch(&d, 0, -1.0).is_err());
    }

    #[test]
    fn lfw_radius_spans_three_rings() {
        // 16x16 blocks on 256x256; R = 50 reaches 3 block spacings
        let d = Decomposition::grid(256, 256, 16, 16).unwrap();
        let center = 8 * 16 + 8;
        let sp = build_superpatch(&d, center, 50.0).unwrap();
        let max_ring = sp
            .members
            .iter()
            .map(|&(_, (dx, dy))| libm::fmax((dx / 16.0).abs(), (dy / 16.0).abs()) as usize)
            .max()
            .unwrap();
        assert_eq!(max_ring, 3);
    }

    #[test]
    fn weight_examples() {
        let p = DistanceParams::gaussian(8.0, 10.0).unwrap();
        assert_eq!(pair_weight((0.0, 0.0), (0.0, 0.0), &p), 1.0);
        // c_i' = c_i, c_j' - c_j = (sigma1, 0), sigma2 = sqrt(2) R
        let r = 5.0;
        let s1 = 3.0;
        let p = DistanceParams::gaussian(s1, SQRT_2 * r).unwrap();
        let w = pair_weight((0.0, 0.0), (s1, 0.0), &p);
        let expected = exp(-1.0) * exp(-s1 * s1 / (2.0 * r * r));
        assert!((w - expected).abs() < 1e-15);
    }

    #[test]
    fn lfw_sigma1_default() {
        let s1 = default_sigma1(250, 250, 250);
        assert!((s1 - 7.905694150420948).abs() < 1e-12);
        assert_eq!(libm::round(s1), 8.0);
    }

    #[test]
    fn single_member_distance_is_feature_distance() {
        let fa = FeatureTable::from_rows(&[vec![0.0, 0.0]]).unwrap();
        let fb = FeatureTable::from_rows(&[vec![3.0, 4.0]]).unwrap();
        let a = SuperPatch { center: 0, radius: 0.0, members: vec![(0, (0.0, 0.0))] };
        let p = DistanceParams::gaussian(1.0, 1.0).unwrap();
        assert_eq!(superpatch_distance(&a, &a, &fa, &fb, &p), 5.0);
    }

    #[test]
    fn degeneration_single_pixel_difference() {
        let d = Decomposition::grid(3, 3, 1, 1).unwrap();
        let sp = build_superpatch(&d, 4, 2.0).unwrap();
        assert_eq!(sp.len(), 9);
        let fa = FeatureTable::new(1, vec![0.5; 9]).unwrap();
        let mut vb = vec![0.5; 9];
        let p = patch_degeneration_mode(DistanceParams::gaussian(1.0, 1.0).unwrap());
        assert_eq!(superpatch_distance(&sp, &sp, &fa, &fa, &p), 0.0);
        vb[2] += 0.25;
        let fb = FeatureTable::new(1, vb).unwrap();
        let dist = superpatch_distance(&sp, &sp, &fa, &fb, &p);
        assert!((dist - 0.25 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn spatial_weight_is_monotone() {
        let p = DistanceParams::gaussian(4.0, 6.0).unwrap();
        let mut last = f64::INFINITY;
        for step in 0..20 {
            let off = (step as f64 * 0.5, 0.0);
            let w = pair_weight(off, off, &p);
            assert!(w <= last);
            last = w;
        }
    }
}
