//! Weighted label fusion over k-ANN matches and α-expansion regularization.

use alloc::vec;
use alloc::vec::Vec;

use crate::decompose::Decomposition;
use crate::error::{domain, Error, Result};
use crate::features::FeatureTable;
use crate::imaging::LabelMap;
use crate::maxflow::FlowGraph;
use crate::spm::{AnnField, ExemplarLibrary};
use crate::superpatch::FeatureMetric;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionParams {
    pub alpha: f64,
    /// Spatial prior scale; `f64::INFINITY` disables the position term.
    pub beta: f64,
    pub epsilon: f64,
    /// Number of classes M.
    pub labels: usize,
}

impl FusionParams {
    pub fn new(labels: usize) -> Self {
        Self {
            alpha: 2.0,
            beta: 4.0,
            epsilon: 1e-12,
            labels,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !(self.beta > 0.0) || !(self.epsilon > 0.0) {
            return Err(domain("alpha, beta and epsilon must be positive"));
        }
        if self.labels == 0 {
            return Err(domain("label count must be >= 1"));
        }
        Ok(())
    }
}

/// `exp(1 - (D / h^2 + |c_i - c_j| / beta^2))` with `h^2 = alpha^2 (min_D + epsilon)`.
pub fn fusion_weight(
    distance: f64,
    min_distance: f64,
    c_test: (f64, f64),
    c_match: (f64, f64),
    params: &FusionParams,
) -> f64 {
    let h2 = params.alpha * params.alpha * (min_distance + params.epsilon);
    let spatial = if params.beta.is_infinite() {
        0.0
    } else {
        let (dx, dy) = (c_test.0 - c_match.0, c_test.1 - c_match.1);
        libm::sqrt(dx * dx + dy * dy) / (params.beta * params.beta)
    };
    libm::exp(1.0 - (distance / h2 + spatial))
}

/// Per-superpixel probability over M labels, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelFusionMap {
    labels: usize,
    probabilities: Vec<f64>,
}

impl LabelFusionMap {
    pub fn new(labels: usize, probabilities: Vec<f64>) -> Result<Self> {
        if labels == 0 || !probabilities.len().is_multiple_of(labels) {
            return Err(domain("probability table must have M columns"));
        }
        if probabilities.iter().any(|p| !(*p >= 0.0)) {
            return Err(domain("probabilities must be non-negative"));
        }
        Ok(Self {
            labels,
            probabilities,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != m) {
            return Err(domain("ragged probability rows"));
        }
        Self::new(m, rows.iter().flatten().copied().collect())
    }

    pub fn label_count(&self) -> usize {
        self.labels
    }

    pub fn len(&self) -> usize {
        self.probabilities.len() / self.labels
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.probabilities[i * self.labels..(i + 1) * self.labels]
    }

    pub fn get(&self, i: usize, label: usize) -> f64 {
        self.probabilities[i * self.labels + label]
    }

    /// Column `label` over all superpixels.
    pub fn column(&self, label: usize) -> Vec<f64> {
        (0..self.len()).map(|i| self.get(i, label)).collect()
    }
}

/// Groups each superpixel's k matches by exemplar label and normalizes the
/// summed fusion weights into a distribution.
pub fn label_fusion(
    field: &AnnField,
    test: &Decomposition,
    library: &ExemplarLibrary,
    params: &FusionParams,
) -> Result<LabelFusionMap> {
    params.validate()?;
    if field.len() != test.len() {
        return Err(domain("ANN field size differs from test superpixel count"));
    }
    for (e, entry) in library.entries().iter().enumerate() {
        match entry.labels() {
            None => return Err(Error::UnlabeledEntry(e)),
            Some(ls) => {
                if let Some(l) = ls.iter().find(|&&l| l as usize >= params.labels) {
                    return Err(domain(alloc::format!("exemplar label {l} >= M = {}", params.labels)));
                }
            }
        }
    }
    let m = params.labels;
    let mut probabilities = vec![0.0; test.len() * m];
    for (i, matches) in field.matches.iter().enumerate() {
        if matches.is_empty() {
            continue;
        }
        let min_d = matches.iter().map(|m| m.distance).fold(f64::INFINITY, f64::min);
        let ci = test.barycenter(i);
        let row = &mut probabilities[i * m..(i + 1) * m];
        for mt in matches {
            let cj = library.entry(mt.image).decomposition().barycenter(mt.superpixel);
            let label = library
                .label_of(mt.image, mt.superpixel)
                .expect("labels checked above") as usize;
            row[label] += fusion_weight(mt.distance, min_d, ci, cj, params);
        }
        let total: f64 = row.iter().sum();
        row.iter_mut().for_each(|p| *p /= total);
    }
    LabelFusionMap::new(m, probabilities)
}

/// One label per superpixel.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Labeling {
    pub labels: Vec<u32>,
}

/// Most probable label per superpixel; ties go to the lowest label.
pub fn argmax_label(map: &LabelFusionMap) -> Labeling {
    let labels = (0..map.len())
        .map(|i| {
            let row = map.row(i);
            let mut best = 0;
            for (l, &p) in row.iter().enumerate() {
                if p > row[best] {
                    best = l;
                }
            }
            best as u32
        })
        .collect();
    Labeling { labels }
}

/// Every pixel takes its superpixel's label.
pub fn expand_to_pixels(labeling: &Labeling, decomp: &Decomposition) -> Result<LabelMap> {
    if labeling.labels.len() != decomp.len() {
        return Err(domain("labeling size differs from superpixel count"));
    }
    LabelMap::new(
        decomp.width(),
        decomp.height(),
        decomp
            .labels()
            .iter()
            .map(|&sp| labeling.labels[sp as usize])
            .collect(),
    )
}

/// Which superpixel pairs carry a smoothness term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Neighborhood {
    /// 4-adjacent superpixels.
    Adjacency,
    /// Superpixels whose barycenters lie within `radius` of each other.
    Superpatch { radius: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularizeParams {
    pub gamma: f64,
    pub metric: FeatureMetric,
    pub neighborhood: Neighborhood,
    pub max_sweeps: usize,
}

impl Default for RegularizeParams {
    fn default() -> Self {
        Self {
            gamma: 0.5,
            metric: FeatureMetric::Euclidean,
            neighborhood: Neighborhood::Adjacency,
            max_sweeps: 10,
        }
    }
}

/// Data term `1 - L_l(i)` plus a Potts penalty `exp(-d(F_i, F_j)/gamma)` on
/// every undirected edge whose ends disagree (each edge counted once).
#[derive(Debug, Clone, PartialEq)]
pub struct LabelingEnergy {
    data: LabelFusionMap,
    edges: Vec<(usize, usize, f64)>,
}

impl LabelingEnergy {
    pub fn new(data: LabelFusionMap, edges: Vec<(usize, usize, f64)>) -> Result<Self> {
        let n = data.len();
        if edges.iter().any(|&(i, j, w)| i >= n || j >= n || i == j || !(w >= 0.0)) {
            return Err(domain("edges need distinct in-range ends and non-negative weights"));
        }
        Ok(Self { data, edges })
    }

    /// Builds the smoothness edges from a decomposition and its features.
    pub fn from_decomposition(
        data: LabelFusionMap,
        decomp: &Decomposition,
        features: &FeatureTable,
        params: &RegularizeParams,
    ) -> Result<Self> {
        if !(params.gamma > 0.0) {
            return Err(domain("gamma must be positive"));
        }
        if data.len() != decomp.len() || features.len() != decomp.len() {
            return Err(domain("fusion map, features and decomposition sizes differ"));
        }
        let weight = |i: usize, j: usize| {
            libm::exp(-params.metric.eval(features.row(i), features.row(j)) / params.gamma)
        };
        let edges = match params.neighborhood {
            Neighborhood::Adjacency => decomp.edges().map(|(i, j)| (i, j, weight(i, j))).collect(),
            Neighborhood::Superpatch { radius } => {
                let mut edges = Vec::new();
                for i in 0..decomp.len() {
                    let ci = decomp.barycenter(i);
                    for j in i + 1..decomp.len() {
                        let cj = decomp.barycenter(j);
                        let (dx, dy) = (ci.0 - cj.0, ci.1 - cj.1);
                        if dx * dx + dy * dy <= radius * radius {
                            edges.push((i, j, weight(i, j)));
                        }
                    }
                }
                edges
            }
        };
        Self::new(data, edges)
    }

    pub fn data(&self) -> &LabelFusionMap {
        &self.data
    }

    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    pub fn evaluate(&self, labels: &[u32]) -> f64 {
        let data: f64 = labels
            .iter()
            .enumerate()
            .map(|(i, &l)| 1.0 - self.data.get(i, l as usize))
            .sum();
        let smooth: f64 = self
            .edges
            .iter()
            .filter(|&&(i, j, _)| labels[i] != labels[j])
            .map(|&(_, _, w)| w)
            .sum();
        data + smooth
    }
}

/// Binary pairwise energy minimized exactly by one s-t min cut when every
/// pairwise term is submodular. `x_i = 0` is the source side.
#[derive(Debug, Clone)]
pub struct BinaryEnergy {
    unary: Vec<(f64, f64)>,
    pairs: Vec<(usize, usize, f64)>,
    constant: f64,
}

impl BinaryEnergy {
    pub fn new(n: usize) -> Self {
        Self {
            unary: vec![(0.0, 0.0); n],
            pairs: Vec::new(),
            constant: 0.0,
        }
    }

    pub fn add_unary(&mut self, i: usize, e0: f64, e1: f64) {
        self.unary[i].0 += e0;
        self.unary[i].1 += e1;
    }

    /// Adds `E(x_i, x_j)` given as `(E00, E01, E10, E11)`.
    pub fn add_pairwise(&mut self, i: usize, j: usize, e: (f64, f64, f64, f64)) -> Result<()> {
        let (a, b, c, d) = e;
        let coupling = b + c - a - d;
        if coupling < -1e-12 {
            return Err(Error::NotSubmodular(i, j));
        }
        // E = A + (C - A) x_i + (D - C) x_j + (B + C - A - D)(1 - x_i) x_j
        self.constant += a;
        self.unary[i].1 += c - a;
        self.unary[j].1 += d - c;
        if coupling > 0.0 {
            self.pairs.push((i, j, coupling));
        }
        Ok(())
    }

    /// Minimizing assignment.
    pub fn minimize(&self) -> Vec<bool> {
        let n = self.unary.len();
        let (s, t) = (n, n + 1);
        let mut g = FlowGraph::new(n + 2);
        for (i, &(e0, e1)) in self.unary.iter().enumerate() {
            // s->i is cut when x_i = 1, i->t when x_i = 0
            if e1 > e0 {
                g.add_edge(s, i, e1 - e0, 0.0);
            } else if e0 > e1 {
                g.add_edge(i, t, e0 - e1, 0.0);
            }
        }
        for &(i, j, w) in &self.pairs {
            g.add_edge(i, j, w, 0.0);
        }
        g.max_flow(s, t);
        let side = g.source_side(s);
        (0..n).map(|i| !side[i]).collect()
    }

    pub fn evaluate(&self, x: &[bool]) -> f64 {
        let mut e = self.constant;
        for (i, &(e0, e1)) in self.unary.iter().enumerate() {
            e += if x[i] { e1 } else { e0 };
        }
        for &(i, j, w) in &self.pairs {
            if !x[i] && x[j] {
                e += w;
            }
        }
        e
    }
}

/// Regularized labeling and the energy before and after each sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct Regularized {
    pub labeling: Labeling,
    pub energies: Vec<f64>,
}

/// α-expansion from `initial`: labels are visited in ascending order, a move
/// is kept only if it strictly lowers the energy, and sweeps stop once a
/// full sweep changes nothing or `max_sweeps` is reached.
pub fn alpha_expansion(energy: &LabelingEnergy, initial: &Labeling, max_sweeps: usize) -> Result<Regularized> {
    let m = energy.data.label_count();
    let n = energy.data.len();
    if initial.labels.len() != n || initial.labels.iter().any(|&l| l as usize >= m) {
        return Err(domain("initial labeling does not fit the energy"));
    }
    let mut labels = initial.labels.clone();
    let mut current = energy.evaluate(&labels);
    let mut energies = vec![current];
    for _ in 0..max_sweeps {
        let mut improved = false;
        for alpha in 0..m as u32 {
            let mut move_energy = BinaryEnergy::new(n);
            for (i, &l) in labels.iter().enumerate() {
                move_energy.add_unary(
                    i,
                    1.0 - energy.data.get(i, l as usize),
                    1.0 - energy.data.get(i, alpha as usize),
                );
            }
            for &(i, j, w) in &energy.edges {
                let (li, lj) = (labels[i], labels[j]);
                let pen = |a: u32, b: u32| if a != b { w } else { 0.0 };
                move_energy.add_pairwise(i, j, (pen(li, lj), pen(li, alpha), pen(alpha, lj), 0.0))?;
            }
            let x = move_energy.minimize();
            let proposal: Vec<u32> = labels
                .iter()
                .zip(&x)
                .map(|(&l, &switch)| if switch { alpha } else { l })
                .collect();
            let e = energy.evaluate(&proposal);
            if e < current - 1e-12 {
                labels = proposal;
                current = e;
                improved = true;
            }
        }
        energies.push(current);
        if !improved {
            break;
        }
    }
    Ok(Regularized {
        labeling: Labeling { labels },
        energies,
    })
}

/// Regularizes the fusion map on the superpixel graph, starting from its
/// argmax labeling.
pub fn regularize(
    map: &LabelFusionMap,
    decomp: &Decomposition,
    features: &FeatureTable,
    params: &RegularizeParams,
) -> Result<Regularized> {
    let energy = LabelingEnergy::from_decomposition(map.clone(), decomp, features, params)?;
    alpha_expansion(&energy, &argmax_label(map), params.max_sweeps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{FeatureConfig, FeatureKind};
    use crate::spm::{FeaturedImage, Match};

    #[test]
    fn weight_at_minimum_distance() {
        let p = FusionParams { beta: f64::INFINITY, ..FusionParams::new(2) };
        let w = fusion_weight(0.3, 0.3, (0.0, 0.0), (50.0, 50.0), &p);
        assert!((w - libm::exp(0.75)).abs() < 1e-9);
        let p = FusionParams::new(2);
        let w = fusion_weight(0.3, 0.3, (4.0, 4.0), (4.0, 4.0), &p);
        assert!((w - libm::exp(0.75)).abs() < 1e-9);
        assert_eq!((p.alpha, p.beta), (2.0, 4.0));
    }

    fn library(labels: &[u32]) -> ExemplarLibrary {
        let d = Decomposition::grid(labels.len(), 1, 1, 1).unwrap();
        let f = FeatureTable::new(1, vec![0.0; labels.len()]).unwrap();
        let e = FeaturedImage::new(d, f, FeatureConfig::single(FeatureKind::MeanColor), 0.0)
            .unwrap()
            .with_labels(labels.to_vec())
            .unwrap();
        ExemplarLibrary::new(vec![e]).unwrap()
    }

    fn field(rows: Vec<Vec<(usize, f64)>>) -> AnnField {
        AnnField {
            matches: rows
                .into_iter()
                .map(|r| {
                    r.into_iter()
                        .map(|(sp, d)| Match { image: 0, superpixel: sp, distance: d })
                        .collect()
                })
                .collect(),
            traces: Vec::new(),
            evaluations: Vec::new(),
        }
    }

    #[test]
    fn single_match_is_certain() {
        let lib = library(&[0, 2]);
        let test = Decomposition::grid(1, 1, 1, 1).unwrap();
        let map = label_fusion(&field(vec![vec![(1, 0.4)]]), &test, &lib, &FusionParams::new(3)).unwrap();
        assert_eq!(map.row(0), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn equal_weights_split_evenly() {
        let lib = library(&[0, 1]);
        let test = Decomposition::grid(1, 1, 1, 1).unwrap();
        let p = FusionParams { beta: f64::INFINITY, ..FusionParams::new(2) };
        let map = label_fusion(&field(vec![vec![(0, 0.2), (1, 0.2)]]), &test, &lib, &p).unwrap();
        assert_eq!(map.row(0), &[0.5, 0.5]);
    }

    #[test]
    fn unlabeled_library_is_error() {
        let d = Decomposition::grid(1, 1, 1, 1).unwrap();
        let f = FeatureTable::new(1, vec![0.0]).unwrap();
        let e = FeaturedImage::new(d.clone(), f, FeatureConfig::single(FeatureKind::MeanColor), 0.0).unwrap();
        let lib = ExemplarLibrary::new(vec![e]).unwrap();
        assert_eq!(
            label_fusion(&field(vec![vec![(0, 0.0)]]), &d, &lib, &FusionParams::new(2)).unwrap_err(),
            Error::UnlabeledEntry(0)
        );
    }

    #[test]
    fn argmax_ties_to_lowest() {
        let map = LabelFusionMap::from_rows(&[
            vec![0.2, 0.5, 0.3],
            vec![0.5, 0.5, 0.0],
            vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
        ])
        .unwrap();
        assert_eq!(argmax_label(&map).labels, vec![1, 0, 0]);
    }

    #[test]
    fn expansion_to_pixels() {
        let d = Decomposition::grid(4, 2, 2, 2).unwrap();
        let px = expand_to_pixels(&Labeling { labels: vec![0, 1] }, &d).unwrap();
        assert_eq!(px.labels(), &[0, 0, 1, 1, 0, 0, 1, 1]);
        let one = Decomposition::grid(3, 3, 3, 3).unwrap();
        let px = expand_to_pixels(&Labeling { labels: vec![2] }, &one).unwrap();
        assert!(px.labels().iter().all(|&l| l == 2));
    }

    #[test]
    fn consistent_one_hot_is_fixed_point() {
        let d = Decomposition::grid(4, 1, 1, 1).unwrap();
        let f = FeatureTable::new(1, vec![0.0; 4]).unwrap();
        let map = LabelFusionMap::from_rows(&[
            vec![1.0, 0.0],
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![0.0, 1.0],
        ])
        .unwrap();
        let r = regularize(&map, &d, &f, &RegularizeParams::default()).unwrap();
        assert_eq!(r.labeling.labels, vec![0, 0, 1, 1]);
        assert_eq!(r.energies.first(), r.energies.last());
    }

    #[test]
    fn binary_energy_rejects_supermodular_terms() {
        let mut e = BinaryEnergy::new(2);
        assert_eq!(e.add_pairwise(0, 1, (1.0, 0.0, 0.0, 1.0)), Err(Error::NotSubmodular(0, 1)));
    }

    #[test]
    fn binary_energy_matches_enumeration() {
        let mut e = BinaryEnergy::new(3);
        e.add_unary(0, 0.2, 0.9);
        e.add_unary(1, 0.8, 0.1);
        e.add_unary(2, 0.5, 0.4);
        e.add_pairwise(0, 1, (0.0, 0.7, 0.7, 0.0)).unwrap();
        e.add_pairwise(1, 2, (0.1, 0.6, 0.3, 0.2)).unwrap();
        let x = e.minimize();
        let best = (0..8u32)
            .map(|bits| {
                let x: Vec<bool> = (0..3).map(|k| bits >> k & 1 == 1).collect();
                e.evaluate(&x)
            })
            .fold(f64::INFINITY, f64::min);
        assert!((e.evaluate(&x) - best).abs() < 1e-12);
    }
}
