//! Superpixel decompositions: import, SLIC, barycenters, adjacency, scan order.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{domain, Error, Result};
use crate::imaging::{ImageGrid, LabelMap, RandomSource};

/// Per-superpixel geometry. Coordinates use pixel centers: pixel `(row, col)`
/// sits at `(x, y) = (col, row)`, x to the right and y down.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuperpixelRecord {
    pub index: usize,
    pub barycenter: (f64, f64),
    pub pixel_count: usize,
    pub first_raster_pixel: usize,
}

/// A partition of an image into superpixels indexed `0..len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    width: usize,
    height: usize,
    labels: Vec<u32>,
    superpixels: Vec<SuperpixelRecord>,
    adjacency: Vec<Vec<usize>>,
    scan_order: Vec<usize>,
    disconnected: Vec<usize>,
}

impl Decomposition {
    /// Imports an arbitrary label map. Labels are remapped to `0..n` in
    /// ascending order of their original value; superpixels split into
    /// several 4-connected islands are accepted and reported by
    /// [`Decomposition::disconnected`].
    pub fn from_label_map(map: &LabelMap) -> Result<Self> {
        let mut remap = BTreeMap::new();
        for &l in map.labels() {
            remap.entry(l).or_insert(0u32);
        }
        if remap.is_empty() {
            return Err(domain("empty label set"));
        }
        for (next, v) in remap.values_mut().enumerate() {
            *v = next as u32;
        }
        let labels = map.labels().iter().map(|l| remap[l]).collect();
        Ok(Self::build(map.width(), map.height(), labels, remap.len()))
    }

    /// Regular grid of `cell_w x cell_h` blocks (the last row/column may be
    /// smaller). `cell_w = cell_h = 1` gives the per-pixel decomposition.
    pub fn grid(width: usize, height: usize, cell_w: usize, cell_h: usize) -> Result<Self> {
        if width == 0 || height == 0 || cell_w == 0 || cell_h == 0 {
            return Err(domain("grid dimensions must be positive"));
        }
        let nx = width.div_ceil(cell_w);
        let ny = height.div_ceil(cell_h);
        let labels = (0..width * height)
            .map(|p| ((p / width / cell_h) * nx + (p % width) / cell_w) as u32)
            .collect();
        Ok(Self::build(width, height, labels, nx * ny))
    }

    fn build(width: usize, height: usize, labels: Vec<u32>, n: usize) -> Self {
        let mut sums = vec![(0.0f64, 0.0f64); n];
        let mut counts = vec![0usize; n];
        let mut first = vec![usize::MAX; n];
        for (p, &l) in labels.iter().enumerate() {
            let l = l as usize;
            sums[l].0 += (p % width) as f64;
            sums[l].1 += (p / width) as f64;
            counts[l] += 1;
            if first[l] == usize::MAX {
                first[l] = p;
            }
        }
        let superpixels = (0..n)
            .map(|i| SuperpixelRecord {
                index: i,
                barycenter: (sums[i].0 / counts[i] as f64, sums[i].1 / counts[i] as f64),
                pixel_count: counts[i],
                first_raster_pixel: first[i],
            })
            .collect();
        let mut decomp = Self {
            width,
            height,
            labels,
            superpixels,
            adjacency: Vec::new(),
            scan_order: Vec::new(),
            disconnected: Vec::new(),
        };
        decomp.adjacency = build_adjacency(&decomp);
        decomp.scan_order = compute_scan_order(&decomp);
        decomp.disconnected = find_disconnected(width, height, &decomp.labels, n);
        decomp
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Number of superpixels.
    pub fn len(&self) -> usize {
        self.superpixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.superpixels.is_empty()
    }

    /// Superpixel index per pixel, row-major.
    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn label_map(&self) -> LabelMap {
        LabelMap::new(self.width, self.height, self.labels.clone())
            .expect("decomposition dimensions are valid")
    }

    pub fn superpixels(&self) -> &[SuperpixelRecord] {
        &self.superpixels
    }

    pub fn barycenter(&self, i: usize) -> (f64, f64) {
        self.superpixels[i].barycenter
    }

    /// Sorted neighbor list of superpixel `i`.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    pub fn adjacency(&self) -> &[Vec<usize>] {
        &self.adjacency
    }

    /// Undirected edges `(i, j)` with `i < j`, in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(i, ns)| ns.iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
    }

    pub fn scan_order(&self) -> &[usize] {
        &self.scan_order
    }

    /// Superpixels whose pixels form more than one 4-connected component.
    pub fn disconnected(&self) -> &[usize] {
        &self.disconnected
    }

    pub fn superpixel_at(&self, x: usize, y: usize) -> usize {
        self.labels[y * self.width + x] as usize
    }

    /// Average superpixel spacing `sqrt(h*w/|A|)`.
    pub fn mean_spacing(&self) -> f64 {
        libm::sqrt((self.width * self.height) as f64 / self.len() as f64)
    }

    /// Pixel indices grouped by superpixel.
    pub fn pixels_by_superpixel(&self) -> Vec<Vec<usize>> {
        let mut out: Vec<Vec<usize>> = self
            .superpixels
            .iter()
            .map(|s| Vec::with_capacity(s.pixel_count))
            .collect();
        for (p, &l) in self.labels.iter().enumerate() {
            out[l as usize].push(p);
        }
        out
    }

    pub fn check_matches(&self, image: &ImageGrid) -> Result<()> {
        if image.width() != self.width || image.height() != self.height {
            return Err(Error::DimensionMismatch {
                expected: (self.width, self.height),
                got: (image.width(), image.height()),
            });
        }
        Ok(())
    }
}

/// Edge `(i, i')` iff some pixel of `i` is 4-adjacent to some pixel of `i'`.
pub fn build_adjacency(decomp: &Decomposition) -> Vec<Vec<usize>> {
    let (w, h) = (decomp.width, decomp.height);
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); decomp.len()];
    let labels = &decomp.labels;
    let mut link = |a: u32, b: u32| {
        if a != b {
            adj[a as usize].push(b as usize);
            adj[b as usize].push(a as usize);
        }
    };
    for y in 0..h {
        for x in 0..w {
            let l = labels[y * w + x];
            if x + 1 < w {
                link(l, labels[y * w + x + 1]);
            }
            if y + 1 < h {
                link(l, labels[(y + 1) * w + x]);
            }
        }
    }
    for ns in adj.iter_mut() {
        ns.sort_unstable();
        ns.dedup();
    }
    adj
}

/// Superpixels sorted by first occurrence in raster order.
pub fn compute_scan_order(decomp: &Decomposition) -> Vec<usize> {
    let mut order: Vec<usize> = (0..decomp.len()).collect();
    order.sort_by_key(|&i| decomp.superpixels[i].first_raster_pixel);
    order
}

/// 4-connected components of equal-label pixels: (component id per pixel,
/// label per component, size per component).
fn components(width: usize, height: usize, labels: &[u32]) -> (Vec<usize>, Vec<u32>, Vec<usize>) {
    let mut comp = vec![usize::MAX; labels.len()];
    let mut comp_label = Vec::new();
    let mut comp_size = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..labels.len() {
        if comp[start] != usize::MAX {
            continue;
        }
        let id = comp_label.len();
        let l = labels[start];
        comp[start] = id;
        queue.push_back(start);
        let mut size = 0;
        while let Some(p) = queue.pop_front() {
            size += 1;
            let (x, y) = (p % width, p / width);
            let mut visit = |q: usize| {
                if comp[q] == usize::MAX && labels[q] == l {
                    comp[q] = id;
                    queue.push_back(q);
                }
            };
            if x > 0 {
                visit(p - 1);
            }
            if x + 1 < width {
                visit(p + 1);
            }
            if y > 0 {
                visit(p - width);
            }
            if y + 1 < height {
                visit(p + width);
            }
        }
        comp_label.push(l);
        comp_size.push(size);
    }
    (comp, comp_label, comp_size)
}

fn find_disconnected(width: usize, height: usize, labels: &[u32], n: usize) -> Vec<usize> {
    let (_, comp_label, _) = components(width, height, labels);
    let mut count = vec![0usize; n];
    for l in comp_label {
        count[l as usize] += 1;
    }
    (0..n).filter(|&i| count[i] > 1).collect()
}

/// Relabels every non-largest component of a label into the adjacent label
/// with the largest total pixel count, until each label is one component.
/// Only largest components absorb, so two touching fragments never swap.
fn enforce_connectivity(width: usize, height: usize, labels: &mut [u32]) {
    loop {
        let (comp, comp_label, comp_size) = components(width, height, labels);
        let n_labels = comp_label.iter().copied().max().map_or(0, |m| m as usize + 1);
        let mut main = vec![usize::MAX; n_labels];
        for (c, &l) in comp_label.iter().enumerate() {
            let m = &mut main[l as usize];
            if *m == usize::MAX || comp_size[c] > comp_size[*m] {
                *m = c;
            }
        }
        let orphan: Vec<bool> = comp_label
            .iter()
            .enumerate()
            .map(|(c, &l)| main[l as usize] != c)
            .collect();
        if !orphan.iter().any(|&o| o) {
            return;
        }
        let mut label_size = vec![0usize; n_labels];
        for &l in labels.iter() {
            label_size[l as usize] += 1;
        }
        // best (size, label) adjacent to each orphan component
        let mut target: Vec<Option<(usize, u32)>> = vec![None; comp_label.len()];
        for y in 0..height {
            for x in 0..width {
                let p = y * width + x;
                let c = comp[p];
                let mut consider = |q: usize| {
                    let lq = labels[q];
                    if orphan[c] && lq != labels[p] && !orphan[comp[q]] {
                        let cand = (label_size[lq as usize], lq);
                        let better = match target[c] {
                            None => true,
                            Some((s, l)) => cand.0 > s || (cand.0 == s && cand.1 < l),
                        };
                        if better {
                            target[c] = Some(cand);
                        }
                    }
                };
                if x > 0 {
                    consider(p - 1);
                }
                if x + 1 < width {
                    consider(p + 1);
                }
                if y > 0 {
                    consider(p - width);
                }
                if y + 1 < height {
                    consider(p + width);
                }
            }
        }
        for (p, l) in labels.iter_mut().enumerate() {
            if let Some((_, t)) = target[comp[p]] {
                *l = t;
            }
        }
    }
}

/// SLIC parameters. `compactness` weighs spatial against color distance with
/// colors in `[0, 1]`; `jitter` shifts the seed grid by up to that fraction of
/// the grid step, drawn from the random source.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlicParams {
    pub k: usize,
    pub compactness: f64,
    pub iterations: usize,
    pub jitter: f64,
}

impl Default for SlicParams {
    fn default() -> Self {
        Self {
            k: 250,
            compactness: 0.1,
            iterations: 10,
            jitter: 0.0,
        }
    }
}

impl SlicParams {
    pub fn with_k(k: usize) -> Self {
        Self {
            k,
            ..Self::default()
        }
    }
}

/// Simple linear iterative clustering in (color, xy) space, followed by
/// connectivity enforcement.
///
/// Distance is `|color|^2 + (compactness/S)^2 |xy|^2` with `S = sqrt(hw/K)`.
/// Seeds start on a regular grid and move to the lowest-gradient pixel of
/// their 3x3 window when the grid step is at least 3 pixels.
pub fn slic_decompose(
    image: &ImageGrid,
    params: &SlicParams,
    rng: &RandomSource,
) -> Result<Decomposition> {
    let (w, h, c) = (image.width(), image.height(), image.channels());
    let n_pix = w * h;
    if params.k == 0 || params.k > n_pix {
        return Err(domain(alloc::format!(
            "superpixel count {} must be in [1, {}]",
            params.k,
            n_pix
        )));
    }
    if !(params.compactness >= 0.0) || !(0.0..=0.5).contains(&params.jitter) {
        return Err(domain("compactness must be >= 0 and jitter in [0, 0.5]"));
    }
    let step = libm::sqrt(n_pix as f64 / params.k as f64);
    let nx = ((libm::round(w as f64 / step)) as usize).clamp(1, w);
    let ny = ((libm::round(h as f64 / step)) as usize).clamp(1, h);
    let (sx, sy) = (w as f64 / nx as f64, h as f64 / ny as f64);

    let mut stream = rng.substream(0, 0);
    let (jx, jy) = if params.jitter > 0.0 {
        (
            stream.gen_range(-params.jitter..=params.jitter) * sx,
            stream.gen_range(-params.jitter..=params.jitter) * sy,
        )
    } else {
        (0.0, 0.0)
    };

    let gradient = |x: usize, y: usize| -> f64 {
        let xl = x.saturating_sub(1);
        let xr = (x + 1).min(w - 1);
        let yu = y.saturating_sub(1);
        let yd = (y + 1).min(h - 1);
        let (a, b, cc, d) = (
            image.pixel(xr, y),
            image.pixel(xl, y),
            image.pixel(x, yd),
            image.pixel(x, yu),
        );
        (0..c)
            .map(|k| (a[k] - b[k]) * (a[k] - b[k]) + (cc[k] - d[k]) * (cc[k] - d[k]))
            .sum()
    };

    // center layout: [x, y, color...]
    let dim = 2 + c;
    let mut centers = Vec::with_capacity(nx * ny * dim);
    for j in 0..ny {
        for i in 0..nx {
            let fx = ((i as f64 + 0.5) * sx - 0.5 + jx).clamp(0.0, (w - 1) as f64);
            let fy = ((j as f64 + 0.5) * sy - 0.5 + jy).clamp(0.0, (h - 1) as f64);
            let (mut px, mut py) = (libm::round(fx) as usize, libm::round(fy) as usize);
            let (mut cx, mut cy) = (fx, fy);
            if sx >= 3.0 && sy >= 3.0 {
                let mut best = (gradient(px, py), px, py);
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let (qx, qy) = (px as i64 + dx, py as i64 + dy);
                        if qx < 0 || qy < 0 || qx >= w as i64 || qy >= h as i64 {
                            continue;
                        }
                        let g = gradient(qx as usize, qy as usize);
                        if g < best.0 {
                            best = (g, qx as usize, qy as usize);
                        }
                    }
                }
                if (best.1, best.2) != (px, py) {
                    (px, py) = (best.1, best.2);
                    (cx, cy) = (px as f64, py as f64);
                }
            }
            centers.push(cx);
            centers.push(cy);
            centers.extend_from_slice(image.pixel(px, py));
        }
    }
    let n_centers = nx * ny;

    let mut labels: Vec<u32> = (0..n_pix)
        .map(|p| {
            let (x, y) = (p % w, p / w);
            let ci = ((x as f64 / sx) as usize).min(nx - 1);
            let cj = ((y as f64 / sy) as usize).min(ny - 1);
            (cj * nx + ci) as u32
        })
        .collect();
    let spatial = (params.compactness / step) * (params.compactness / step);
    let reach = libm::ceil(sx.max(sy)) as i64;
    let mut dist = vec![f64::INFINITY; n_pix];
    let mut acc = vec![0.0f64; n_centers * dim];
    let mut cnt = vec![0usize; n_centers];

    for _ in 0..params.iterations {
        dist.iter_mut().for_each(|d| *d = f64::INFINITY);
        for k in 0..n_centers {
            let ctr = &centers[k * dim..(k + 1) * dim];
            let (cx, cy) = (ctr[0], ctr[1]);
            let x0 = (libm::round(cx) as i64 - reach).max(0) as usize;
            let x1 = ((libm::round(cx) as i64 + reach) as usize).min(w - 1);
            let y0 = (libm::round(cy) as i64 - reach).max(0) as usize;
            let y1 = ((libm::round(cy) as i64 + reach) as usize).min(h - 1);
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let px = image.pixel(x, y);
                    let dc: f64 = px
                        .iter()
                        .zip(&ctr[2..])
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                    let (ddx, ddy) = (x as f64 - cx, y as f64 - cy);
                    let d = dc + spatial * (ddx * ddx + ddy * ddy);
                    let p = y * w + x;
                    if d < dist[p] {
                        dist[p] = d;
                        labels[p] = k as u32;
                    }
                }
            }
        }
        acc.iter_mut().for_each(|v| *v = 0.0);
        cnt.iter_mut().for_each(|v| *v = 0);
        for (p, &l) in labels.iter().enumerate() {
            let l = l as usize;
            let a = &mut acc[l * dim..(l + 1) * dim];
            a[0] += (p % w) as f64;
            a[1] += (p / w) as f64;
            for (slot, v) in a[2..].iter_mut().zip(image.pixel_at(p)) {
                *slot += v;
            }
            cnt[l] += 1;
        }
        for k in 0..n_centers {
            if cnt[k] > 0 {
                for d in 0..dim {
                    centers[k * dim + d] = acc[k * dim + d] / cnt[k] as f64;
                }
            }
        }
    }

    enforce_connectivity(w, h, &mut labels);
    Decomposition::from_label_map(&LabelMap::new(w, h, labels)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decomp(rows: &[&[u32]]) -> Decomposition {
        Decomposition::from_label_map(&LabelMap::from_rows(rows).unwrap()).unwrap()
    }

    #[test]
    fn barycenters_of_two_rows() {
        let d = decomp(&[&[0, 0], &[1, 1]]);
        assert_eq!(d.len(), 2);
        assert_eq!(d.barycenter(0), (0.5, 0.0));
        assert_eq!(d.barycenter(1), (0.5, 1.0));
    }

    #[test]
    fn import_remaps_sparse_labels() {
        let d = decomp(&[&[7, 3], &[3, 7]]);
        assert_eq!(d.len(), 2);
        // 3 -> 0, 7 -> 1
        assert_eq!(d.labels(), &[1, 0, 0, 1]);
    }

    #[test]
    fn import_flags_islands() {
        let d = decomp(&[&[0, 1, 0]]);
        assert_eq!(d.disconnected(), &[0]);
        let d = decomp(&[&[0, 0, 1]]);
        assert!(d.disconnected().is_empty());
    }

    #[test]
    fn block_grid_adjacency_excludes_diagonals() {
        let d = Decomposition::grid(4, 4, 2, 2).unwrap();
        for i in 0..4 {
            assert_eq!(d.neighbors(i).len(), 2);
        }
        assert_eq!(d.neighbors(0), &[1, 2]);
    }

    #[test]
    fn stripes_adjacency() {
        let d = decomp(&[&[0, 1, 2]]);
        assert_eq!(d.neighbors(0), &[1]);
        assert_eq!(d.neighbors(1), &[0, 2]);
        assert_eq!(d.neighbors(2), &[1]);
        let single = decomp(&[&[5, 5], &[5, 5]]);
        assert!(single.neighbors(0).is_empty());
        assert_eq!(single.edges().count(), 0);
    }

    #[test]
    fn scan_order_by_first_raster_pixel() {
        assert_eq!(decomp(&[&[0, 0, 1], &[2, 2, 1]]).scan_order(), &[0, 1, 2]);
        assert_eq!(decomp(&[&[2, 2], &[0, 1]]).scan_order(), &[2, 0, 1]);
        assert_eq!(decomp(&[&[4]]).scan_order(), &[0]);
    }

    #[test]
    fn slic_uniform_image_gives_square_blocks() {
        let img = ImageGrid::filled(64, 64, 3, 0.5).unwrap();
        let d = slic_decompose(&img, &SlicParams::with_k(4), &RandomSource::new(0)).unwrap();
        assert_eq!(d.len(), 4);
        for sp in d.superpixels() {
            assert_eq!(sp.pixel_count, 1024);
        }
    }

    #[test]
    fn slic_saturated_k_is_per_pixel() {
        let img = ImageGrid::from_fn(6, 6, 1, |x, y, px| px[0] = ((x * 7 + y * 3) % 5) as f64 / 4.0)
            .unwrap();
        let d = slic_decompose(&img, &SlicParams::with_k(36), &RandomSource::new(3)).unwrap();
        assert_eq!(d.len(), 36);
        assert!(d.superpixels().iter().all(|s| s.pixel_count == 1));
    }

    #[test]
    fn slic_lfw_scale_mean_area() {
        let img = ImageGrid::from_fn(250, 250, 3, |x, y, px| {
            px[0] = x as f64 / 249.0;
            px[1] = y as f64 / 249.0;
            px[2] = if (x / 40 + y / 40) % 2 == 0 { 0.2 } else { 0.8 };
        })
        .unwrap();
        let d = slic_decompose(&img, &SlicParams::with_k(250), &RandomSource::new(1)).unwrap();
        let n = d.len() as f64;
        assert!((200.0..=300.0).contains(&n), "{n}");
        let area = 62500.0 / n;
        assert!((area - 256.0).abs() < 256.0 * 0.2, "{area}");
        assert!(d.disconnected().is_empty());
    }

    #[test]
    fn slic_rejects_bad_k() {
        let img = ImageGrid::filled(4, 4, 1, 0.0).unwrap();
        assert!(slic_decompose(&img, &SlicParams::with_k(17), &RandomSource::new(0)).is_err());
        assert!(slic_decompose(&img, &SlicParams::with_k(0), &RandomSource::new(0)).is_err());
    }

    #[test]
    fn connectivity_enforcement_absorbs_orphans() {
        let mut labels = vec![0, 1, 0, 2, 2, 2, 2, 2, 2];
        enforce_connectivity(3, 3, &mut labels);
        // the second island of label 0 joins its largest neighbor, label 2
        assert_eq!(labels, vec![0, 1, 2, 2, 2, 2, 2, 2, 2]);
    }

    proptest::proptest! {
        #[test]
        fn connectivity_terminates_on_noise(
            w in 1usize..9,
            h in 1usize..9,
            seed in proptest::collection::vec(0u32..4, 81),
        ) {
            let mut labels: Vec<u32> = seed[..w * h].to_vec();
            enforce_connectivity(w, h, &mut labels);
            proptest::prop_assert!(find_disconnected(w, h, &labels, 4).is_empty());
        }
    }
}
