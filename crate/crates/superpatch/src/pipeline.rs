//! Search, fusion and regularization stages with timings, and the
//! evaluation and oracle comparisons built on them.

use std::time::Instant;

use rayon::prelude::*;
use superpatch_core::harness::{accuracy_metrics, brute_force_match, dice_per_label, roc_auc};
use superpatch_core::labeling::{argmax_label, expand_to_pixels, label_fusion, regularize, Regularized};
use superpatch_core::spm::{plan_radii, SearchPlan};
use superpatch_core::{AnnField, ExemplarLibrary, FeaturedImage, LabelFusionMap, LabelMap, Labeling, Match, RandomSource};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::report::{MetricsReport, OracleReport, RocSummary, Scores, WallTime};

pub fn thread_pool(threads: Option<usize>) -> CliResult<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        b = b.num_threads(t);
    }
    b.build().map_err(|e| CliError::Internal(e.to_string()))
}

/// The k search runs distributed over the current rayon pool. Each run
/// draws from its own substreams, so the result does not depend on the
/// number of threads.
pub fn parallel_search(test: &FeaturedImage, library: &ExemplarLibrary, config: &RunConfig) -> CliResult<AnnField> {
    let params = config.spm(test.decomposition());
    let radii = plan_radii(library, &params);
    let plan = SearchPlan::new(test, library, &params, &radii)?;
    let rng = RandomSource::new(config.seed);
    let runs = (0..params.k).into_par_iter().map(|run| plan.run(run, &rng)).collect();
    Ok(AnnField::from_runs(runs))
}

/// Number of labels: configured, else one past the largest exemplar label.
pub fn label_count(config: &RunConfig, library: &ExemplarLibrary) -> CliResult<usize> {
    if let Some(m) = config.labels {
        return Ok(m);
    }
    let mut max = None;
    for (e, entry) in library.entries().iter().enumerate() {
        let labels = entry.labels().ok_or(superpatch_core::Error::UnlabeledEntry(e))?;
        max = max.max(labels.iter().copied().max());
    }
    max.map(|m| m as usize + 1)
        .ok_or_else(|| CliError::Validation("exemplar library has no labels".into()))
}

#[derive(Debug, Clone)]
pub struct LabelOutcome {
    pub field: AnnField,
    pub fusion: LabelFusionMap,
    pub argmax: Labeling,
    pub regularized: Regularized,
    pub timings: WallTime,
}

pub fn run_labeling(test: &FeaturedImage, library: &ExemplarLibrary, config: &RunConfig) -> CliResult<LabelOutcome> {
    let labels = label_count(config, library)?;
    let t = Instant::now();
    let field = parallel_search(test, library, config)?;
    let search = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let fusion = label_fusion(&field, test.decomposition(), library, &config.fusion(labels))?;
    let argmax = argmax_label(&fusion);
    let fusion_time = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let regularized = regularize(&fusion, test.decomposition(), test.features(), &config.regularize())?;
    let regularization = t.elapsed().as_secs_f64();
    Ok(LabelOutcome {
        field,
        fusion,
        argmax,
        regularized,
        timings: WallTime {
            search,
            fusion: fusion_time,
            regularization,
        },
    })
}

/// Timings and counters of `outcome`, plus scores when `truth` is given.
pub fn report(outcome: &LabelOutcome, test: &FeaturedImage, truth: Option<&LabelMap>) -> CliResult<MetricsReport> {
    let field = &outcome.field;
    let iterations = field.evaluations.first().map_or(0, Vec::len);
    let evaluations_per_iteration = (0..iterations)
        .map(|it| field.evaluations.iter().map(|r| r[it] as f64).sum::<f64>() / field.k().max(1) as f64)
        .collect();
    Ok(MetricsReport {
        metrics: truth.map(|t| score(outcome, test, t)).transpose()?,
        energies: outcome.regularized.energies.clone(),
        wall_time_sec: outcome.timings.clone(),
        distance_evaluations: field.evaluations.iter().flatten().sum(),
        evaluations_per_iteration,
    })
}

pub fn score(outcome: &LabelOutcome, test: &FeaturedImage, truth: &LabelMap) -> CliResult<Scores> {
    let decomp = test.decomposition();
    let truth_sp = superpatch_core::spm::majority_labels(decomp, truth)?;
    let final_acc = accuracy_metrics(&outcome.regularized.labeling, &truth_sp, truth, decomp)?;
    let fusion_acc = accuracy_metrics(&outcome.argmax, &truth_sp, truth, decomp)?;
    let labels = outcome.fusion.label_count();
    let pixels = expand_to_pixels(&outcome.regularized.labeling, decomp)?;
    let dice = dice_per_label(&pixels, truth, labels)?;
    let roc = (0..labels)
        .map(|l| {
            roc_auc(&outcome.fusion, &truth_sp, l).map(|c| RocSummary {
                label: l,
                auc: c.auc,
                fpr: c.fpr,
                tpr: c.tpr,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Scores {
        superpixel_accuracy: final_acc.superpixel,
        pixel_accuracy: final_acc.pixel,
        superpixel_accuracy_fusion: fusion_acc.superpixel,
        pixel_accuracy_fusion: fusion_acc.pixel,
        dice,
        roc,
    })
}

/// Compares each superpixel's best SPM distance with the exhaustive optimum.
pub fn oracle_comparison(
    test: &FeaturedImage,
    library: &ExemplarLibrary,
    field: &AnnField,
    config: &RunConfig,
) -> CliResult<(Vec<Match>, OracleReport)> {
    let distance = config.distance(test.decomposition());
    let exact = brute_force_match(test, library, &distance)?;
    let oracle: Vec<f64> = exact.iter().map(|m| m.distance).collect();
    let spm: Vec<f64> = (0..field.len()).map(|i| field.best(i).distance).collect();
    Ok((exact, OracleReport::new(&oracle, &spm)))
}
