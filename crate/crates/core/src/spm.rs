//! SuperPatchMatch: randomized k-ANN search of test superpatches in an
//! exemplar library.
//!
//! One search run is initialization followed by `iterations` rounds of
//! propagation (forward scan order on even rounds, reverse on odd) and random
//! search. The k runs are fully independent: each draws from its own
//! per-superpixel substreams, so they can execute in any order or in parallel
//! and still produce the same field.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::decompose::Decomposition;
use crate::error::{domain, Error, Result};
use crate::features::{compute_features, FeatureConfig, FeatureTable};
use crate::imaging::{ImageGrid, LabelMap, RandomSource};
use crate::superpatch::{build_all_superpatches, superpatch_distance, DistanceParams, SuperPatch};

/// A decomposed image with its descriptors and superpatches at one radius.
#[derive(Debug, Clone)]
pub struct FeaturedImage {
    decomposition: Decomposition,
    features: FeatureTable,
    config: FeatureConfig,
    radius: f64,
    superpatches: Vec<SuperPatch>,
    labels: Option<Vec<u32>>,
}

impl FeaturedImage {
    /// Computes features from `image` and superpatches at `radius`.
    pub fn from_image(
        image: &ImageGrid,
        decomposition: Decomposition,
        config: &FeatureConfig,
        radius: f64,
    ) -> Result<Self> {
        let features = compute_features(&decomposition, image, config)?;
        Self::new(decomposition, features, config.clone(), radius)
    }

    /// Wraps precomputed features (e.g. loaded from a cache).
    pub fn new(
        decomposition: Decomposition,
        features: FeatureTable,
        config: FeatureConfig,
        radius: f64,
    ) -> Result<Self> {
        if features.len() != decomposition.len() {
            return Err(domain("feature table size differs from superpixel count"));
        }
        let superpatches = build_all_superpatches(&decomposition, radius)?;
        Ok(Self {
            decomposition,
            features,
            config,
            radius,
            superpatches,
            labels: None,
        })
    }

    /// Attaches one class label per superpixel.
    pub fn with_labels(mut self, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != self.decomposition.len() {
            return Err(domain("one label per superpixel required"));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    /// Attaches per-superpixel labels derived from a pixel-wise ground truth
    /// by majority vote (ties to the lowest label).
    pub fn with_pixel_labels(self, truth: &LabelMap) -> Result<Self> {
        let labels = majority_labels(&self.decomposition, truth)?;
        self.with_labels(labels)
    }

    pub fn decomposition(&self) -> &Decomposition {
        &self.decomposition
    }

    pub fn features(&self) -> &FeatureTable {
        &self.features
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.config
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn superpatches(&self) -> &[SuperPatch] {
        &self.superpatches
    }

    pub fn labels(&self) -> Option<&[u32]> {
        self.labels.as_deref()
    }

    pub fn len(&self) -> usize {
        self.decomposition.len()
    }

    pub fn is_empty(&self) -> bool {
        self.decomposition.is_empty()
    }
}

/// Per-superpixel majority of a pixel label map.
pub fn majority_labels(decomp: &Decomposition, truth: &LabelMap) -> Result<Vec<u32>> {
    if truth.width() != decomp.width() || truth.height() != decomp.height() {
        return Err(Error::DimensionMismatch {
            expected: (decomp.width(), decomp.height()),
            got: (truth.width(), truth.height()),
        });
    }
    let m = truth.label_bound() as usize;
    let mut votes = vec![0usize; decomp.len() * m];
    for (&sp, &l) in decomp.labels().iter().zip(truth.labels()) {
        votes[sp as usize * m + l as usize] += 1;
    }
    Ok(votes
        .chunks(m)
        .map(|row| {
            let mut best = 0;
            for (l, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = l;
                }
            }
            best as u32
        })
        .collect())
}

/// Exemplar images pooled into one searchable library.
#[derive(Debug, Clone, Default)]
pub struct ExemplarLibrary {
    entries: Vec<FeaturedImage>,
    index: Vec<(u32, u32)>,
}

impl ExemplarLibrary {
    pub fn new(entries: Vec<FeaturedImage>) -> Result<Self> {
        let mut lib = Self::default();
        for e in entries {
            lib.push(e)?;
        }
        Ok(lib)
    }

    pub fn push(&mut self, entry: FeaturedImage) -> Result<()> {
        if let Some(first) = self.entries.first() {
            if first.config != entry.config {
                return Err(Error::FeatureConfigMismatch {
                    entry: self.entries.len(),
                });
            }
            if first.radius != entry.radius {
                return Err(domain("library entries must share one superpatch radius"));
            }
        }
        let id = self.entries.len() as u32;
        self.index.extend((0..entry.len() as u32).map(|sp| (id, sp)));
        self.entries.push(entry);
        Ok(())
    }

    pub fn entries(&self) -> &[FeaturedImage] {
        &self.entries
    }

    pub fn entry(&self, image: usize) -> &FeaturedImage {
        &self.entries[image]
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Flat `(image, superpixel)` enumeration.
    pub fn index(&self) -> &[(u32, u32)] {
        &self.index
    }

    pub fn superpixel_count(&self) -> usize {
        self.index.len()
    }

    /// Largest image side over all entries.
    pub fn max_dimension(&self) -> usize {
        self.entries
            .iter()
            .map(|e| e.decomposition.width().max(e.decomposition.height()))
            .max()
            .unwrap_or(0)
    }

    pub fn label_of(&self, image: usize, superpixel: usize) -> Option<u32> {
        self.entries[image].labels.as_ref().map(|l| l[superpixel])
    }
}

/// A correspondence into the library.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Match {
    pub image: usize,
    pub superpixel: usize,
    pub distance: f64,
}

impl Match {
    /// Ordering key: distance first, then lowest ids.
    fn better_than(&self, other: &Match) -> bool {
        match self.distance.partial_cmp(&other.distance) {
            Some(core::cmp::Ordering::Less) => true,
            Some(core::cmp::Ordering::Equal) => {
                (self.image, self.superpixel) < (other.image, other.superpixel)
            }
            _ => false,
        }
    }
}

/// Decaying-box random search: radii `initial, initial*ratio, ...` while `>= floor`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomSearchParams {
    /// `None` uses the largest library image side.
    pub initial_radius: Option<f64>,
    pub ratio: f64,
    pub floor: f64,
}

impl Default for RandomSearchParams {
    fn default() -> Self {
        Self {
            initial_radius: None,
            ratio: 0.5,
            floor: 1.0,
        }
    }
}

impl RandomSearchParams {
    pub fn radii(&self, initial: f64) -> Vec<f64> {
        let mut out = Vec::new();
        let mut r = initial;
        while r >= self.floor && out.len() < 64 {
            out.push(r);
            r *= self.ratio;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpmParams {
    /// Superpatch radius in pixels.
    pub radius: f64,
    /// Number of independent searches.
    pub k: usize,
    pub iterations: usize,
    pub random_search: RandomSearchParams,
    /// `None` derives sigma1 from the test decomposition and sigma2 from the radius.
    pub distance: Option<DistanceParams>,
}

impl Default for SpmParams {
    fn default() -> Self {
        Self {
            radius: 50.0,
            k: 50,
            iterations: 5,
            random_search: RandomSearchParams::default(),
            distance: None,
        }
    }
}

impl SpmParams {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.iterations == 0 {
            return Err(domain("k and iterations must be >= 1"));
        }
        if !(self.radius >= 0.0) {
            return Err(domain("radius must be >= 0"));
        }
        let rs = &self.random_search;
        if !(rs.ratio > 0.0 && rs.ratio < 1.0) || !(rs.floor > 0.0) {
            return Err(domain("random search needs ratio in (0, 1) and floor > 0"));
        }
        if let Some(d) = &self.distance {
            d.validate()?;
        }
        Ok(())
    }
}

/// Scan direction of a propagation pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Reverse,
}

/// Output of one search run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub matches: Vec<Match>,
    /// Per test superpixel: distance after initialization, then after each iteration.
    pub trace: Vec<Vec<f64>>,
    /// Distance evaluations performed during each iteration.
    pub evaluations: Vec<u64>,
}

/// k matches per test superpixel plus the per-run traces.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnField {
    /// `matches[i][run]`.
    pub matches: Vec<Vec<Match>>,
    /// `traces[run][i][iteration]`.
    pub traces: Vec<Vec<Vec<f64>>>,
    /// `evaluations[run][iteration]`.
    pub evaluations: Vec<Vec<u64>>,
}

impl AnnField {
    pub fn from_runs(runs: Vec<RunResult>) -> Self {
        let n = runs.first().map_or(0, |r| r.matches.len());
        let matches = (0..n)
            .map(|i| runs.iter().map(|r| r.matches[i]).collect())
            .collect();
        let mut traces = Vec::with_capacity(runs.len());
        let mut evaluations = Vec::with_capacity(runs.len());
        for r in runs {
            traces.push(r.trace);
            evaluations.push(r.evaluations);
        }
        Self {
            matches,
            traces,
            evaluations,
        }
    }

    pub fn len(&self) -> usize {
        self.matches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matches.is_empty()
    }

    pub fn k(&self) -> usize {
        self.traces.len()
    }

    /// Minimum-distance match of superpixel `i`; ties to the lowest ids.
    pub fn best(&self, i: usize) -> Match {
        let mut best = self.matches[i][0];
        for m in &self.matches[i][1..] {
            if m.better_than(&best) {
                best = *m;
            }
        }
        best
    }

    /// Whether every trace is non-increasing.
    pub fn traces_non_increasing(&self) -> bool {
        self.traces
            .iter()
            .flatten()
            .all(|t| t.windows(2).all(|w| w[1] <= w[0]))
    }
}

/// Resolved search over one test image and library; runs are executed with
/// [`SearchPlan::run`].
#[derive(Debug, Clone, Copy)]
pub struct SearchPlan<'a> {
    test: &'a FeaturedImage,
    library: &'a ExemplarLibrary,
    params: SpmParams,
    distance: DistanceParams,
    radii: &'a [f64],
}

/// Checks compatibility and resolves parameters. `radii` storage is
/// returned separately so the plan stays `Copy` and shareable.
pub fn plan_radii(library: &ExemplarLibrary, params: &SpmParams) -> Vec<f64> {
    let initial = params
        .random_search
        .initial_radius
        .unwrap_or(library.max_dimension() as f64);
    params.random_search.radii(initial)
}

impl<'a> SearchPlan<'a> {
    pub fn new(
        test: &'a FeaturedImage,
        library: &'a ExemplarLibrary,
        params: &SpmParams,
        radii: &'a [f64],
    ) -> Result<Self> {
        params.validate()?;
        if library.is_empty() || library.superpixel_count() == 0 {
            return Err(Error::EmptyLibrary);
        }
        for (e, entry) in library.entries().iter().enumerate() {
            if entry.config != test.config {
                return Err(Error::FeatureConfigMismatch { entry: e });
            }
            if entry.radius != params.radius {
                return Err(domain("library superpatch radius differs from search radius"));
            }
        }
        if test.radius != params.radius {
            return Err(domain("test superpatch radius differs from search radius"));
        }
        let distance = params
            .distance
            .unwrap_or_else(|| DistanceParams::for_decomposition(&test.decomposition, params.radius));
        Ok(Self {
            test,
            library,
            params: *params,
            distance,
            radii,
        })
    }

    pub fn distance_params(&self) -> &DistanceParams {
        &self.distance
    }

    /// Random-search candidate evaluations per superpixel per iteration.
    pub fn random_search_budget(&self) -> u64 {
        let per_image = if self.library.len() > 1 { 2 } else { 1 };
        (self.radii.len() * per_image) as u64
    }

    /// Superpatch distance between test superpixel `i` and library `(image, sp)`.
    pub fn distance(&self, i: usize, image: usize, sp: usize) -> f64 {
        let entry = self.library.entry(image);
        superpatch_distance(
            &self.test.superpatches[i],
            &entry.superpatches[sp],
            &self.test.features,
            &entry.features,
            &self.distance,
        )
    }

    fn evaluate(&self, i: usize, image: usize, sp: usize, counter: &mut u64) -> Match {
        *counter += 1;
        Match {
            image,
            superpixel: sp,
            distance: self.distance(i, image, sp),
        }
    }

    fn streams(&self, rng: &RandomSource, run: usize) -> Vec<ChaCha8Rng> {
        (0..self.test.len())
            .map(|i| rng.substream(run as u32, i as u32))
            .collect()
    }

    /// Uniformly random library superpixel for every test superpixel.
    pub fn initialize(&self, streams: &mut [ChaCha8Rng], counter: &mut u64) -> Vec<Match> {
        let index = self.library.index();
        streams
            .iter_mut()
            .enumerate()
            .map(|(i, s)| {
                let (img, sp) = index[s.gen_range(0..index.len())];
                self.evaluate(i, img as usize, sp as usize, counter)
            })
            .collect()
    }

    /// One propagation sweep: each superpixel tries the angle-matched
    /// neighbor of every already-visited adjacent superpixel's match.
    pub fn propagate_pass(&self, ann: &mut [Match], direction: Direction, counter: &mut u64) {
        let decomp = &self.test.decomposition;
        let mut visited = vec![false; decomp.len()];
        let order = decomp.scan_order();
        let mut visit = |i: usize| {
            for &j in decomp.neighbors(i) {
                if !visited[j] {
                    continue;
                }
                let (img, sp) = propagation_candidate(decomp, i, j, &ann[j], self.library);
                let cand = self.evaluate(i, img, sp, counter);
                if cand.distance < ann[i].distance {
                    ann[i] = cand;
                }
            }
            visited[i] = true;
        };
        match direction {
            Direction::Forward => order.iter().for_each(|&i| visit(i)),
            Direction::Reverse => order.iter().rev().for_each(|&i| visit(i)),
        }
    }

    /// Decaying-box sampling around each current match, in its own image and
    /// in one other random library image per radius.
    pub fn random_search_pass(
        &self,
        ann: &mut [Match],
        streams: &mut [ChaCha8Rng],
        counter: &mut u64,
    ) {
        let n_images = self.library.len();
        for &i in self.test.decomposition.scan_order() {
            let rng = &mut streams[i];
            for &r in self.radii {
                let cur = ann[i];
                let cur_decomp = self.library.entry(cur.image).decomposition();
                let center = cur_decomp.barycenter(cur.superpixel);
                let sp = sample_in_box(cur_decomp, center, r, rng);
                let cand = self.evaluate(i, cur.image, sp, counter);
                if cand.distance < ann[i].distance {
                    ann[i] = cand;
                }
                if n_images > 1 {
                    let mut other = rng.gen_range(0..n_images - 1);
                    if other >= cur.image {
                        other += 1;
                    }
                    let od = self.library.entry(other).decomposition();
                    let scaled = (
                        center.0 * od.width() as f64 / cur_decomp.width() as f64,
                        center.1 * od.height() as f64 / cur_decomp.height() as f64,
                    );
                    let sp = sample_in_box(od, scaled, r, rng);
                    let cand = self.evaluate(i, other, sp, counter);
                    if cand.distance < ann[i].distance {
                        ann[i] = cand;
                    }
                }
            }
        }
    }

    /// Search run number `run` with substreams `(run, superpixel)` of `rng`.
    pub fn run(&self, run: usize, rng: &RandomSource) -> RunResult {
        let mut streams = self.streams(rng, run);
        let mut init_count = 0;
        let mut ann = self.initialize(&mut streams, &mut init_count);
        let mut trace: Vec<Vec<f64>> = ann
            .iter()
            .map(|m| {
                let mut t = Vec::with_capacity(self.params.iterations + 1);
                t.push(m.distance);
                t
            })
            .collect();
        let mut evaluations = Vec::with_capacity(self.params.iterations);
        for it in 0..self.params.iterations {
            let mut count = 0;
            let dir = if it % 2 == 0 {
                Direction::Forward
            } else {
                Direction::Reverse
            };
            self.propagate_pass(&mut ann, dir, &mut count);
            self.random_search_pass(&mut ann, &mut streams, &mut count);
            for (t, m) in trace.iter_mut().zip(&ann) {
                t.push(m.distance);
            }
            evaluations.push(count);
        }
        RunResult {
            matches: ann,
            trace,
            evaluations,
        }
    }
}

/// Uniform pixel in the box of half-width `r` around `center`, clamped to the
/// image; returns the superpixel containing it.
fn sample_in_box(decomp: &Decomposition, center: (f64, f64), r: f64, rng: &mut ChaCha8Rng) -> usize {
    let axis = |c: f64, len: usize, rng: &mut ChaCha8Rng| -> usize {
        let max = (len - 1) as f64;
        let c = c.clamp(0.0, max);
        let lo = libm::ceil(c - r).clamp(0.0, max) as usize;
        let hi = libm::floor(c + r).clamp(0.0, max) as usize;
        if hi <= lo {
            lo
        } else {
            rng.gen_range(lo..=hi)
        }
    };
    let x = axis(center.0, decomp.width(), rng);
    let y = axis(center.1, decomp.height(), rng);
    decomp.superpixel_at(x, y)
}

fn circular_difference(a: f64, b: f64) -> f64 {
    let d = libm::fmod((a - b).abs(), 2.0 * PI);
    d.min(2.0 * PI - d)
}

/// Candidate offered by processed neighbor `j` of test superpixel `i`: the
/// neighbor of `j`'s match whose direction from that match is circularly
/// closest to `atan2(c_j - c_i) + pi`, i.e. pointing back to where `i`
/// should be. Ties go to the lowest superpixel index; a match without
/// neighbors is returned unchanged.
pub fn propagation_candidate(
    test: &Decomposition,
    i: usize,
    j: usize,
    current: &Match,
    library: &ExemplarLibrary,
) -> (usize, usize) {
    let (ci, cj) = (test.barycenter(i), test.barycenter(j));
    let target = libm::atan2(cj.1 - ci.1, cj.0 - ci.0) + PI;
    let decomp = library.entry(current.image).decomposition();
    let cb = decomp.barycenter(current.superpixel);
    let angles = decomp.neighbors(current.superpixel).iter().map(|&k| {
        let ck = decomp.barycenter(k);
        (libm::atan2(ck.1 - cb.1, ck.0 - cb.0), k)
    });
    match closest_angle(target, angles) {
        Some(k) => (current.image, k),
        None => (current.image, current.superpixel),
    }
}

/// Item whose angle is circularly closest to `target`; first wins ties.
fn closest_angle(target: f64, angles: impl IntoIterator<Item = (f64, usize)>) -> Option<usize> {
    let mut best: Option<(f64, usize)> = None;
    for (angle, k) in angles {
        let diff = circular_difference(target, angle);
        if best.is_none_or(|(d, _)| diff < d) {
            best = Some((diff, k));
        }
    }
    best.map(|(_, k)| k)
}

/// k independent runs, executed sequentially.
pub fn spm_search(
    test: &FeaturedImage,
    library: &ExemplarLibrary,
    params: &SpmParams,
    rng: &RandomSource,
) -> Result<AnnField> {
    let radii = plan_radii(library, params);
    let plan = SearchPlan::new(test, library, params, &radii)?;
    Ok(AnnField::from_runs(
        (0..params.k).map(|run| plan.run(run, rng)).collect(),
    ))
}
