//! Evaluation and oracle reports (JSON plus a plain-text table).

use std::fmt::Write as _;

use serde::Serialize;

#[derive(Debug, Clone, Default, Serialize, PartialEq)]
pub struct WallTime {
    pub search: f64,
    pub fusion: f64,
    pub regularization: f64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct RocSummary {
    pub label: usize,
    pub auc: f64,
    pub fpr: Vec<f64>,
    pub tpr: Vec<f64>,
}

/// Scores against a ground truth.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Scores {
    pub superpixel_accuracy: f64,
    pub pixel_accuracy: f64,
    /// Accuracy of the argmax labeling before regularization.
    pub superpixel_accuracy_fusion: f64,
    pub pixel_accuracy_fusion: f64,
    /// Dice overlap per label of the regularized pixel labeling.
    pub dice: Vec<f64>,
    pub roc: Vec<RocSummary>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct MetricsReport {
    /// Absent when no ground truth was given.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<Scores>,
    pub energies: Vec<f64>,
    pub wall_time_sec: WallTime,
    pub distance_evaluations: u64,
    /// Mean over runs of the evaluations spent in each iteration.
    pub evaluations_per_iteration: Vec<f64>,
}

impl MetricsReport {
    pub fn table(&self) -> String {
        let mut s = String::new();
        let row = |s: &mut String, k: &str, v: String| {
            let _ = writeln!(s, "{k:<28} {v}");
        };
        if let Some(m) = &self.metrics {
            row(&mut s, "superpixel accuracy", format!("{:.4}", m.superpixel_accuracy));
            row(&mut s, "pixel accuracy", format!("{:.4}", m.pixel_accuracy));
            row(&mut s, "superpixel accuracy (fusion)", format!("{:.4}", m.superpixel_accuracy_fusion));
            row(&mut s, "pixel accuracy (fusion)", format!("{:.4}", m.pixel_accuracy_fusion));
            for (l, d) in m.dice.iter().enumerate() {
                row(&mut s, &format!("dice[{l}]"), format!("{d:.4}"));
            }
            for r in &m.roc {
                row(&mut s, &format!("auc[{}]", r.label), format!("{:.4}", r.auc));
            }
        }
        if let Some(e) = self.energies.last() {
            row(&mut s, "energy", format!("{e:.6}"));
        }
        row(&mut s, "distance evaluations", self.distance_evaluations.to_string());
        row(&mut s, "search (s)", format!("{:.3}", self.wall_time_sec.search));
        row(&mut s, "fusion (s)", format!("{:.3}", self.wall_time_sec.fusion));
        row(&mut s, "regularization (s)", format!("{:.3}", self.wall_time_sec.regularization));
        s
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct OracleRow {
    pub superpixel: usize,
    pub oracle: f64,
    pub spm: f64,
    /// `spm / oracle`; absent when the oracle distance is zero and SPM's is not.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct OracleReport {
    pub rows: Vec<OracleRow>,
    pub ratio_quantiles: Quantiles,
    pub fraction_within_1_05: f64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Quantiles {
    pub p50: f64,
    pub p90: f64,
    pub p99: f64,
    pub max: f64,
}

/// Nearest-rank quantile of sorted values.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

/// Whether `spm` is within a factor 1.05 of `oracle`.
pub fn within_tolerance(spm: f64, oracle: f64) -> bool {
    spm <= 1.05 * oracle + 1e-12
}

impl OracleReport {
    pub fn new(oracle: &[f64], spm: &[f64]) -> Self {
        let rows: Vec<OracleRow> = oracle
            .iter()
            .zip(spm)
            .enumerate()
            .map(|(i, (&o, &s))| OracleRow {
                superpixel: i,
                oracle: o,
                spm: s,
                ratio: if o > 0.0 {
                    Some(s / o)
                } else if s <= 0.0 {
                    Some(1.0)
                } else {
                    None
                },
            })
            .collect();
        let mut ratios: Vec<f64> = rows.iter().map(|r| r.ratio.unwrap_or(f64::INFINITY)).collect();
        ratios.sort_by(f64::total_cmp);
        let within = rows.iter().filter(|r| within_tolerance(r.spm, r.oracle)).count();
        Self {
            ratio_quantiles: Quantiles {
                p50: quantile(&ratios, 0.5),
                p90: quantile(&ratios, 0.9),
                p99: quantile(&ratios, 0.99),
                max: ratios.last().copied().unwrap_or(f64::NAN),
            },
            fraction_within_1_05: within as f64 / rows.len().max(1) as f64,
            rows,
        }
    }

    pub fn table(&self) -> String {
        let q = &self.ratio_quantiles;
        format!(
            "superpixels                  {}\nwithin 1.05x of oracle       {:.4}\nratio p50/p90/p99/max        {:.4} / {:.4} / {:.4} / {:.4}\n",
            self.rows.len(),
            self.fraction_within_1_05,
            q.p50,
            q.p90,
            q.p99,
            q.max
        )
    }
}
