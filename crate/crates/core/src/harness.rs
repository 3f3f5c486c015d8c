//! Oracles, metrics and diagnostics for evaluating matches and labelings.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::decompose::Decomposition;
use crate::error::{domain, Error, Result};
use crate::imaging::{ImageGrid, LabelMap};
use crate::labeling::{expand_to_pixels, LabelFusionMap, Labeling};
use crate::spm::{AnnField, ExemplarLibrary, FeaturedImage, Match};
use crate::superpatch::{superpatch_distance, DistanceParams};

pub mod synthetic;

/// Exact nearest superpatch of every test superpixel by exhaustive scan;
/// ties go to the lowest `(image, superpixel)`.
pub fn brute_force_match(
    test: &FeaturedImage,
    library: &ExemplarLibrary,
    params: &DistanceParams,
) -> Result<Vec<Match>> {
    if library.superpixel_count() == 0 {
        return Err(Error::EmptyLibrary);
    }
    Ok((0..test.len())
        .map(|i| {
            let sp = &test.superpatches()[i];
            let mut best = Match {
                image: 0,
                superpixel: 0,
                distance: f64::INFINITY,
            };
            for (e, entry) in library.entries().iter().enumerate() {
                for (j, cand) in entry.superpatches().iter().enumerate() {
                    let d = superpatch_distance(sp, cand, test.features(), entry.features(), params);
                    if d < best.distance {
                        best = Match {
                            image: e,
                            superpixel: j,
                            distance: d,
                        };
                    }
                }
            }
            best
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Accuracy {
    /// Fraction of superpixels whose label is correct.
    pub superpixel: f64,
    /// Fraction of pixels correct after expanding the labeling.
    pub pixel: f64,
}

pub fn accuracy_metrics(
    prediction: &Labeling,
    truth_superpixels: &[u32],
    truth_pixels: &LabelMap,
    decomp: &Decomposition,
) -> Result<Accuracy> {
    if prediction.labels.len() != truth_superpixels.len() {
        return Err(domain("predicted and true superpixel label counts differ"));
    }
    let expanded = expand_to_pixels(prediction, decomp)?;
    let pixel = pixel_accuracy(&expanded, truth_pixels)?;
    let correct = prediction
        .labels
        .iter()
        .zip(truth_superpixels)
        .filter(|(a, b)| a == b)
        .count();
    Ok(Accuracy {
        superpixel: correct as f64 / truth_superpixels.len().max(1) as f64,
        pixel,
    })
}

fn same_size(a: &LabelMap, b: &LabelMap) -> Result<()> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::DimensionMismatch {
            expected: (b.width(), b.height()),
            got: (a.width(), a.height()),
        });
    }
    Ok(())
}

pub fn pixel_accuracy(prediction: &LabelMap, truth: &LabelMap) -> Result<f64> {
    same_size(prediction, truth)?;
    let correct = prediction
        .labels()
        .iter()
        .zip(truth.labels())
        .filter(|(a, b)| a == b)
        .count();
    Ok(correct as f64 / truth.labels().len() as f64)
}

/// `2|X ∩ Y| / (|X| + |Y|)`, and 1 when both masks are empty.
pub fn dice(prediction: &[bool], truth: &[bool]) -> Result<f64> {
    if prediction.len() != truth.len() {
        return Err(domain("mask sizes differ"));
    }
    let (mut both, mut total) = (0usize, 0usize);
    for (&p, &t) in prediction.iter().zip(truth) {
        both += usize::from(p && t);
        total += usize::from(p) + usize::from(t);
    }
    Ok(if total == 0 {
        1.0
    } else {
        2.0 * both as f64 / total as f64
    })
}

/// Dice of each label `0..labels` between two label maps.
pub fn dice_per_label(prediction: &LabelMap, truth: &LabelMap, labels: usize) -> Result<Vec<f64>> {
    same_size(prediction, truth)?;
    (0..labels as u32)
        .map(|l| {
            let p: Vec<bool> = prediction.labels().iter().map(|&v| v == l).collect();
            let t: Vec<bool> = truth.labels().iter().map(|&v| v == l).collect();
            dice(&p, &t)
        })
        .collect()
}

/// ROC curve points ordered by increasing FPR, starting at (0, 0) and ending
/// at (1, 1), one point per distinct score threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub thresholds: Vec<f64>,
    pub tpr: Vec<f64>,
    pub fpr: Vec<f64>,
    pub auc: f64,
}

/// Threshold sweep over `scores` (descending) with `positives` as ground
/// truth; AUC by the trapezoid rule. Without positives or negatives the
/// missing rate is taken as 0 and the AUC reported as 0.5.
pub fn roc_curve(scores: &[f64], positives: &[bool]) -> Result<RocCurve> {
    if scores.len() != positives.len() {
        return Err(domain("score and truth lengths differ"));
    }
    let p = positives.iter().filter(|&&b| b).count() as f64;
    let n = positives.len() as f64 - p;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut thresholds = vec![f64::INFINITY];
    let mut tpr = vec![0.0];
    let mut fpr = vec![0.0];
    let (mut tp, mut fp) = (0.0, 0.0);
    let mut k = 0;
    while k < order.len() {
        let s = scores[order[k]];
        while k < order.len() && scores[order[k]] == s {
            if positives[order[k]] {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            k += 1;
        }
        thresholds.push(s);
        tpr.push(if p > 0.0 { tp / p } else { 0.0 });
        fpr.push(if n > 0.0 { fp / n } else { 0.0 });
    }
    let auc = if p == 0.0 || n == 0.0 {
        0.5
    } else {
        fpr.windows(2)
            .zip(tpr.windows(2))
            .map(|(f, t)| (f[1] - f[0]) * (t[1] + t[0]) * 0.5)
            .sum()
    };
    Ok(RocCurve {
        thresholds,
        tpr,
        fpr,
        auc,
    })
}

/// ROC of `L_label` against superpixel ground truth, label as the positive class.
pub fn roc_auc(map: &LabelFusionMap, truth: &[u32], label: usize) -> Result<RocCurve> {
    if map.label_count() < 2 {
        return Err(domain("ROC needs at least two labels"));
    }
    let positives: Vec<bool> = truth.iter().map(|&t| t as usize == label).collect();
    roc_curve(&map.column(label), &positives)
}

/// Per test superpixel `(dx, dy)` from its barycenter to its best match's,
/// with match barycenters rescaled to the test frame.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementField {
    pub vectors: Vec<(f64, f64)>,
}

impl DisplacementField {
    pub fn magnitudes(&self) -> Vec<f64> {
        self.vectors
            .iter()
            .map(|&(x, y)| libm::sqrt(x * x + y * y))
            .collect()
    }

    pub fn median_magnitude(&self) -> f64 {
        median(self.magnitudes())
    }
}

pub fn displacement_field(
    field: &AnnField,
    test: &Decomposition,
    library: &ExemplarLibrary,
) -> Result<DisplacementField> {
    if field.len() != test.len() {
        return Err(domain("ANN field size differs from test superpixel count"));
    }
    let vectors = (0..field.len())
        .map(|i| {
            let m = field.best(i);
            let d = library.entry(m.image).decomposition();
            let (mx, my) = d.barycenter(m.superpixel);
            let sx = test.width() as f64 / d.width() as f64;
            let sy = test.height() as f64 / d.height() as f64;
            let (cx, cy) = test.barycenter(i);
            (mx * sx - cx, my * sy - cy)
        })
        .collect();
    Ok(DisplacementField { vectors })
}

pub fn median(mut values: Vec<f64>) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Least-squares affine map `dst ≈ A src + b`; returns the RMS residual
/// length. Needs at least three non-collinear points.
pub fn affine_residual_rms(src: &[(f64, f64)], dst: &[(f64, f64)]) -> Result<f64> {
    if src.len() != dst.len() || src.len() < 3 {
        return Err(domain("need at least three point pairs"));
    }
    // normal equations M p = r for p = (a, b, c) in a*x + b*y + c
    let mut m = [[0.0f64; 3]; 3];
    let mut rx = [0.0f64; 3];
    let mut ry = [0.0f64; 3];
    for (&(x, y), &(u, v)) in src.iter().zip(dst) {
        let row = [x, y, 1.0];
        for a in 0..3 {
            for b in 0..3 {
                m[a][b] += row[a] * row[b];
            }
            rx[a] += row[a] * u;
            ry[a] += row[a] * v;
        }
    }
    let px = solve3(m, rx).ok_or_else(|| domain("degenerate point configuration"))?;
    let py = solve3(m, ry).ok_or_else(|| domain("degenerate point configuration"))?;
    let sum: f64 = src
        .iter()
        .zip(dst)
        .map(|(&(x, y), &(u, v))| {
            let ex = px[0] * x + px[1] * y + px[2] - u;
            let ey = py[0] * x + py[1] * y + py[2] - v;
            ex * ex + ey * ey
        })
        .sum();
    Ok(libm::sqrt(sum / src.len() as f64))
}

fn solve3(mut m: [[f64; 3]; 3], mut r: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))?;
        if m[pivot][col].abs() < 1e-12 {
            return None;
        }
        m.swap(col, pivot);
        r.swap(col, pivot);
        for row in 0..3 {
            if row != col {
                let f = m[row][col] / m[col][col];
                let pivot = m[col];
                for (v, p) in m[row].iter_mut().zip(pivot) {
                    *v -= f * p;
                }
                r[row] -= f * r[col];
            }
        }
    }
    Some([r[0] / m[0][0], r[1] / m[1][1], r[2] / m[2][2]])
}

/// Color of the standard flow wheel (RY, YG, GC, CB, BM, MR segments) at
/// `angle`, blended towards white as `saturation` goes to 0.
pub fn flow_color(angle: f64, saturation: f64) -> [f64; 3] {
    const SEGMENTS: [(usize, [f64; 3], [f64; 3]); 6] = [
        (15, [1.0, 0.0, 0.0], [1.0, 1.0, 0.0]),
        (6, [1.0, 1.0, 0.0], [0.0, 1.0, 0.0]),
        (4, [0.0, 1.0, 0.0], [0.0, 1.0, 1.0]),
        (11, [0.0, 1.0, 1.0], [0.0, 0.0, 1.0]),
        (13, [0.0, 0.0, 1.0], [1.0, 0.0, 1.0]),
        (6, [1.0, 0.0, 1.0], [1.0, 0.0, 0.0]),
    ];
    let total: usize = SEGMENTS.iter().map(|s| s.0).sum();
    let mut turn = libm::fmod(angle, 2.0 * PI);
    if turn < 0.0 {
        turn += 2.0 * PI;
    }
    let mut pos = turn / (2.0 * PI) * total as f64;
    let mut base = [1.0; 3];
    for &(len, from, to) in &SEGMENTS {
        if pos <= len as f64 {
            let t = pos / len as f64;
            for c in 0..3 {
                base[c] = from[c] + (to[c] - from[c]) * t;
            }
            break;
        }
        pos -= len as f64;
    }
    let s = saturation.clamp(0.0, 1.0);
    [1.0 - s * (1.0 - base[0]), 1.0 - s * (1.0 - base[1]), 1.0 - s * (1.0 - base[2])]
}

/// Fills each superpixel with the flow-wheel color of its displacement;
/// saturation is magnitude over the field's maximum, so zero is white.
pub fn render_flow(field: &DisplacementField, decomp: &Decomposition) -> Result<ImageGrid> {
    if field.vectors.len() != decomp.len() {
        return Err(domain("displacement field size differs from superpixel count"));
    }
    let mags = field.magnitudes();
    let max = mags.iter().copied().fold(0.0, f64::max);
    let colors: Vec<[f64; 3]> = field
        .vectors
        .iter()
        .zip(&mags)
        .map(|(&(dx, dy), &m)| {
            if max > 0.0 && m > 0.0 {
                flow_color(libm::atan2(dy, dx), m / max)
            } else {
                [1.0; 3]
            }
        })
        .collect();
    ImageGrid::from_fn(decomp.width(), decomp.height(), 3, |x, y, px| {
        px.copy_from_slice(&colors[decomp.superpixel_at(x, y)]);
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{FeatureConfig, FeatureKind, FeatureTable};

    #[test]
    fn dice_examples() {
        let a = vec![true; 4];
        assert_eq!(dice(&a, &a).unwrap(), 1.0);
        assert_eq!(dice(&[true, false], &[false, true]).unwrap(), 0.0);
        let x: Vec<bool> = (0..200).map(|i| i < 100).collect();
        let y: Vec<bool> = (0..200).map(|i| (50..150).contains(&i)).collect();
        assert_eq!(dice(&x, &y).unwrap(), 0.5);
        assert_eq!(dice(&[false], &[false]).unwrap(), 1.0);
        assert!(dice(&[true], &[true, false]).is_err());
    }

    #[test]
    fn accuracy_examples() {
        // superpixels of sizes 6 and 2
        let d = Decomposition::from_label_map(
            &LabelMap::new(4, 2, vec![0, 0, 0, 1, 0, 0, 0, 1]).unwrap(),
        )
        .unwrap();
        let truth_px = LabelMap::new(4, 2, vec![0, 0, 0, 1, 0, 0, 0, 1]).unwrap();
        let truth = [0, 1];
        let perfect = accuracy_metrics(&Labeling { labels: vec![0, 1] }, &truth, &truth_px, &d).unwrap();
        assert_eq!((perfect.superpixel, perfect.pixel), (1.0, 1.0));
        let wrong = accuracy_metrics(&Labeling { labels: vec![1, 0] }, &truth, &truth_px, &d).unwrap();
        assert_eq!((wrong.superpixel, wrong.pixel), (0.0, 0.0));
        let half = accuracy_metrics(&Labeling { labels: vec![0, 0] }, &truth, &truth_px, &d).unwrap();
        assert_eq!(half.superpixel, 0.5);
        assert_eq!(half.pixel, 0.75);
        let small = LabelMap::new(2, 2, vec![0; 4]).unwrap();
        assert!(accuracy_metrics(&Labeling { labels: vec![0, 0] }, &truth, &small, &d).is_err());
    }

    #[test]
    fn roc_examples() {
        let truth = [true, true, false, false];
        assert_eq!(roc_curve(&[0.9, 0.8, 0.2, 0.1], &truth).unwrap().auc, 1.0);
        assert_eq!(roc_curve(&[0.5; 4], &truth).unwrap().auc, 0.5);
        // scores 0.9(+) 0.6(-) 0.4(+) 0.1(-): points (0,0) (0,.5) (.5,.5) (.5,1) (1,1)
        // trapezoids: 0 + .5*.5 + 0 + .5*1 = 0.75
        let c = roc_curve(&[0.9, 0.6, 0.4, 0.1], &[true, false, true, false]).unwrap();
        assert!((c.auc - 0.75).abs() < 1e-15);
        assert_eq!(c.fpr, vec![0.0, 0.0, 0.5, 0.5, 1.0]);
        assert_eq!(c.tpr, vec![0.0, 0.5, 0.5, 1.0, 1.0]);
        let rev = roc_curve(&[-0.9, -0.6, -0.4, -0.1], &[true, false, true, false]).unwrap();
        assert!((rev.auc - 0.25).abs() < 1e-15);
    }

    #[test]
    fn brute_force_picks_hand_argmin() {
        let lib_decomp = Decomposition::grid(3, 1, 1, 1).unwrap();
        let lib_feats = FeatureTable::new(1, vec![0.9, 0.35, 0.1]).unwrap();
        let cfg = FeatureConfig::single(FeatureKind::MeanColor);
        let entry = FeaturedImage::new(lib_decomp, lib_feats, cfg.clone(), 0.0).unwrap();
        let lib = ExemplarLibrary::new(vec![entry]).unwrap();
        let test = FeaturedImage::new(
            Decomposition::grid(1, 1, 1, 1).unwrap(),
            FeatureTable::new(1, vec![0.3]).unwrap(),
            cfg,
            0.0,
        )
        .unwrap();
        let p = DistanceParams::gaussian(1.0, 1.0).unwrap();
        let m = brute_force_match(&test, &lib, &p).unwrap();
        assert_eq!((m[0].image, m[0].superpixel), (0, 1));
        assert!((m[0].distance - 0.05).abs() < 1e-12);
    }

    #[test]
    fn flow_rendering() {
        let d = Decomposition::grid(4, 2, 2, 2).unwrap();
        let zero = DisplacementField { vectors: vec![(0.0, 0.0); 2] };
        let img = render_flow(&zero, &d).unwrap();
        assert!(img.data().iter().all(|&v| v == 1.0));
        let one = DisplacementField { vectors: vec![(3.0, 0.0), (0.0, 0.0)] };
        let img = render_flow(&one, &d).unwrap();
        assert_eq!(img.pixel(0, 0), &[1.0, 0.0, 0.0]);
        assert_eq!(img.pixel(3, 1), &[1.0, 1.0, 1.0]);
        let doubled = DisplacementField { vectors: vec![(6.0, 0.0), (0.0, 0.0)] };
        assert_eq!(render_flow(&doubled, &d).unwrap(), img);
    }

    #[test]
    fn affine_residual_of_exact_shear_is_zero() {
        let src: Vec<(f64, f64)> = (0..20).map(|i| ((i % 5) as f64 * 7.0, (i / 5) as f64 * 5.0)).collect();
        let dst: Vec<(f64, f64)> = src.iter().map(|&(x, y)| (x + 0.3 * y + 2.0, y - 1.0)).collect();
        assert!(affine_residual_rms(&src, &dst).unwrap() < 1e-9);
    }

    #[test]
    fn median_values() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
