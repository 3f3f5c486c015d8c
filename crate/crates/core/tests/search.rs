use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use superpatch_core::harness::brute_force_match;
use superpatch_core::spm::{plan_radii, propagation_candidate, SearchPlan};
use superpatch_core::superpatch::superpatch_distance;
use superpatch_core::{
    spm_search, Decomposition, DistanceParams, ExemplarLibrary, FeatureConfig, FeatureKind, FeatureTable,
    FeaturedImage, LabelMap, Match, RandomSource, SpmParams,
};

fn config() -> FeatureConfig {
    FeatureConfig::single(FeatureKind::MeanColor)
}

fn random_featured(rng: &mut ChaCha8Rng, decomp: Decomposition, radius: f64) -> FeaturedImage {
    let rows: Vec<Vec<f64>> = (0..decomp.len())
        .map(|_| (0..3).map(|_| rng.gen_range(0.0..1.0)).collect())
        .collect();
    FeaturedImage::new(decomp, FeatureTable::from_rows(&rows).unwrap(), config(), radius).unwrap()
}

fn params(radius: f64, k: usize, iterations: usize) -> SpmParams {
    SpmParams {
        radius,
        k,
        iterations,
        ..SpmParams::default()
    }
}

#[test]
fn initialization_is_uniform_over_library() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let test = random_featured(&mut rng, Decomposition::grid(2, 2, 2, 2).unwrap(), 0.0);
    let lib = ExemplarLibrary::new(vec![random_featured(&mut rng, Decomposition::grid(4, 4, 2, 2).unwrap(), 0.0)])
        .unwrap();
    let p = params(0.0, 1, 1);
    let radii = plan_radii(&lib, &p);
    let plan = SearchPlan::new(&test, &lib, &p, &radii).unwrap();
    let mut counts = [0usize; 4];
    let trials = 10_000;
    for seed in 0..trials {
        let mut streams = vec![RandomSource::new(seed).substream(0, 0)];
        let mut evals = 0;
        let m = plan.initialize(&mut streams, &mut evals);
        assert_eq!(evals, 1);
        counts[m[0].superpixel] += 1;
    }
    for c in counts {
        let f = c as f64 / trials as f64;
        assert!((f - 0.25).abs() <= 0.02, "{counts:?}");
    }
}

#[test]
fn oracle_bounds_every_search_match() {
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (w, h) = (rng.gen_range(4..12), rng.gen_range(4..12));
        let cell = rng.gen_range(1..3);
        let radius = rng.gen_range(0.0..4.0);
        let test = random_featured(&mut rng, Decomposition::grid(w, h, cell, cell).unwrap(), radius);
        let entries = (0..rng.gen_range(1..4))
            .map(|_| {
                let (lw, lh) = (rng.gen_range(3..10), rng.gen_range(3..10));
                random_featured(&mut rng, Decomposition::grid(lw, lh, 1, 2).unwrap(), radius)
            })
            .collect();
        let lib = ExemplarLibrary::new(entries).unwrap();
        let p = params(radius, 3, 2);
        let field = spm_search(&test, &lib, &p, &RandomSource::new(seed)).unwrap();
        let dp = DistanceParams::for_decomposition(test.decomposition(), radius);
        let oracle = brute_force_match(&test, &lib, &dp).unwrap();
        for (i, ms) in field.matches.iter().enumerate() {
            assert_eq!(ms.len(), 3);
            for m in ms {
                assert!(m.distance >= oracle[i].distance, "seed {seed} sp {i}");
                let e = lib.entry(m.image);
                let fresh = superpatch_distance(
                    &test.superpatches()[i],
                    &e.superpatches()[m.superpixel],
                    test.features(),
                    e.features(),
                    &dp,
                );
                assert_eq!(m.distance, fresh);
            }
        }
        assert!(field.traces_non_increasing());
    }
}

#[test]
fn oracle_returns_hand_argmin() {
    let row = |v: f64| vec![v, v, v];
    let test = FeaturedImage::new(
        Decomposition::grid(1, 1, 1, 1).unwrap(),
        FeatureTable::from_rows(&[row(0.4)]).unwrap(),
        config(),
        0.0,
    )
    .unwrap();
    let lib = ExemplarLibrary::new(vec![FeaturedImage::new(
        Decomposition::grid(3, 1, 1, 1).unwrap(),
        FeatureTable::from_rows(&[row(0.9), row(0.35), row(0.1)]).unwrap(),
        config(),
        0.0,
    )
    .unwrap()])
    .unwrap();
    let m = brute_force_match(&test, &lib, &DistanceParams::gaussian(1.0, 1.0).unwrap()).unwrap();
    assert_eq!((m[0].image, m[0].superpixel), (0, 1));
    assert!((m[0].distance - 0.05 * 3f64.sqrt()).abs() < 1e-12);
}

#[test]
fn self_match_at_zero_radius_reaches_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let d = Decomposition::grid(64, 64, 8, 8).unwrap();
    let img = random_featured(&mut rng, d, 0.0);
    let lib = ExemplarLibrary::new(vec![img.clone()]).unwrap();
    let field = spm_search(&img, &lib, &params(0.0, 1, 5), &RandomSource::new(1)).unwrap();
    let zero = (0..field.len()).filter(|&i| field.best(i).distance == 0.0).count();
    assert!(zero as f64 / field.len() as f64 >= 0.95, "{zero}/{}", field.len());
    let exact = brute_force_match(&img, &lib, &DistanceParams::for_decomposition(img.decomposition(), 0.0)).unwrap();
    assert!(exact.iter().all(|m| m.distance == 0.0));
}

#[test]
fn evaluation_count_ignores_library_size_beyond_budget() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let radius = 6.0;
    let test = random_featured(&mut rng, Decomposition::grid(32, 32, 4, 4).unwrap(), radius);
    let make = |rng: &mut ChaCha8Rng, n: usize| {
        ExemplarLibrary::new(
            (0..n)
                .map(|_| random_featured(rng, Decomposition::grid(32, 32, 4, 4).unwrap(), radius))
                .collect(),
        )
        .unwrap()
    };
    let p = params(radius, 2, 5);
    let per_sp_iter = |lib: &ExemplarLibrary| {
        let radii = plan_radii(lib, &p);
        let budget = SearchPlan::new(&test, lib, &p, &radii).unwrap().random_search_budget();
        let field = spm_search(&test, lib, &p, &RandomSource::new(3)).unwrap();
        let per: Vec<f64> = field
            .evaluations
            .iter()
            .flatten()
            .map(|&e| e as f64 / test.len() as f64)
            .collect();
        (per, budget as f64)
    };
    let mut sizes = vec![];
    for n in [1usize, 2, 4, 8] {
        sizes.push(per_sp_iter(&make(&mut rng, n)));
    }
    for w in sizes.windows(2) {
        let ((a, _), (b, budget)) = (&w[0], &w[1]);
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= *budget, "{x} vs {y}, budget {budget}");
        }
    }
    // beyond two images the count does not move at all
    assert_eq!(sizes[1].0, sizes[3].0);
}

#[test]
fn upper_left_neighbor_proposes_lower_right_candidate() {
    // test: 3x3 grid of 2x2 cells; i is the center cell, j its upper-left cell
    let test = Decomposition::grid(6, 6, 2, 2).unwrap();
    // library: B(j) is label 0; label 4 wraps around its lower-right corner
    let rows = [
        [1, 1, 1, 1, 1, 1],
        [1, 0, 0, 2, 2, 2],
        [1, 0, 0, 4, 2, 2],
        [1, 3, 4, 4, 4, 4],
        [1, 3, 4, 4, 4, 4],
        [1, 3, 4, 4, 4, 4],
    ];
    let map = LabelMap::new(6, 6, rows.iter().flatten().copied().collect()).unwrap();
    let ld = Decomposition::from_label_map(&map).unwrap();
    assert!(ld.neighbors(0).contains(&4));
    let rows: Vec<Vec<f64>> = (0..ld.len()).map(|_| vec![0.0; 3]).collect();
    let lib = ExemplarLibrary::new(vec![FeaturedImage::new(
        ld,
        FeatureTable::from_rows(&rows).unwrap(),
        config(),
        0.0,
    )
    .unwrap()])
    .unwrap();
    let current = Match {
        image: 0,
        superpixel: 0,
        distance: 1.0,
    };
    assert_eq!(propagation_candidate(&test, 4, 0, &current, &lib), (0, 4));
}
