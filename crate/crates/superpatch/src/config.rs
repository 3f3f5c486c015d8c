//! Run configuration: a flat `key = value` file whose entries can be
//! overridden by command-line flags.

use std::path::{Path, PathBuf};

use superpatch_core::labeling::{Neighborhood, RegularizeParams};
use superpatch_core::spm::RandomSearchParams;
use superpatch_core::superpatch::{default_sigma1, default_sigma2, DistanceParams, WeightMode};
use superpatch_core::{Decomposition, FeatureConfig, FeatureKind, FeatureMetric, FusionParams, SlicParams, SpmParams};

use crate::error::{CliError, CliResult};
use crate::io::read_file;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub feature: FeatureConfig,
    pub metric: FeatureMetric,
    pub radius: f64,
    pub k: usize,
    pub iterations: usize,
    pub seed: u64,
    pub sigma1: Option<f64>,
    pub sigma2: Option<f64>,
    pub search_radius: Option<f64>,
    pub alpha: f64,
    pub beta: f64,
    pub epsilon: f64,
    pub gamma: f64,
    pub labels: Option<usize>,
    pub neighborhood: String,
    pub superpixels: usize,
    pub compactness: f64,
    pub slic_iterations: usize,
    pub jitter: f64,
    pub threads: Option<usize>,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            feature: FeatureConfig::default(),
            metric: FeatureMetric::Euclidean,
            radius: 50.0,
            k: 50,
            iterations: 5,
            seed: 0,
            sigma1: None,
            sigma2: None,
            search_radius: None,
            alpha: 2.0,
            beta: 4.0,
            epsilon: 1e-12,
            gamma: 0.5,
            labels: None,
            neighborhood: "adjacency".into(),
            superpixels: 250,
            compactness: 0.1,
            slic_iterations: 10,
            jitter: 0.0,
            threads: None,
            out: PathBuf::from("out"),
        }
    }
}

/// Parses `kind[:bins][*weight]` blocks joined by `+`, e.g. `hist:16+hog:9*0.5`.
pub fn parse_feature(text: &str) -> CliResult<FeatureConfig> {
    let bad = |m: String| CliError::Validation(format!("feature {text:?}: {m}"));
    let mut blocks = Vec::new();
    for block in text.split('+') {
        let (spec, weight) = match block.split_once('*') {
            Some((s, w)) => (s, w.trim().parse::<f64>().map_err(|_| bad(format!("bad weight {w:?}")))?),
            None => (block, 1.0),
        };
        let (name, bins) = match spec.split_once(':') {
            Some((n, b)) => (n.trim(), Some(b.trim().parse::<usize>().map_err(|_| bad(format!("bad bin count {b:?}")))?)),
            None => (spec.trim(), None),
        };
        let kind = match name {
            "mean" => FeatureKind::MeanColor,
            "hist" => FeatureKind::CumulativeHistogram { bins: bins.unwrap_or(16) },
            "hog" => FeatureKind::OrientationHistogram { bins: bins.unwrap_or(9) },
            other => return Err(bad(format!("unknown kind {other:?} (mean, hist, hog)"))),
        };
        blocks.push((kind, weight));
    }
    let config = FeatureConfig::concat(blocks);
    config.validate()?;
    Ok(config)
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> CliResult<T> {
    value
        .parse()
        .map_err(|_| CliError::Validation(format!("{key}: cannot parse {value:?}")))
}

/// `inf` / `infinity` / `none` disable the spatial prior.
pub fn parse_beta(value: &str) -> CliResult<f64> {
    match value.to_ascii_lowercase().as_str() {
        "inf" | "infinity" | "none" => Ok(f64::INFINITY),
        v => parse_num("beta", v),
    }
}

impl RunConfig {
    /// Applies one `key = value` entry.
    pub fn set(&mut self, key: &str, value: &str) -> CliResult<()> {
        let v = value.trim();
        let auto = v == "auto";
        match key.trim() {
            "sigma1" if auto => self.sigma1 = None,
            "sigma2" if auto => self.sigma2 = None,
            "search_radius" if auto => self.search_radius = None,
            "labels" if auto => self.labels = None,
            "threads" if auto => self.threads = None,
            "feature" => self.feature = parse_feature(v)?,
            "metric" => {
                self.metric = match v {
                    "euclidean" => FeatureMetric::Euclidean,
                    "sqeuclidean" => FeatureMetric::SquaredEuclidean,
                    "manhattan" => FeatureMetric::Manhattan,
                    other => return Err(CliError::Validation(format!("unknown metric {other:?}"))),
                }
            }
            "radius" => self.radius = parse_num(key, v)?,
            "k" => self.k = parse_num(key, v)?,
            "iters" | "iterations" => self.iterations = parse_num(key, v)?,
            "seed" => self.seed = parse_num(key, v)?,
            "sigma1" => self.sigma1 = Some(parse_num(key, v)?),
            "sigma2" => self.sigma2 = Some(parse_num(key, v)?),
            "search_radius" => self.search_radius = Some(parse_num(key, v)?),
            "alpha" => self.alpha = parse_num(key, v)?,
            "beta" => self.beta = parse_beta(v)?,
            "epsilon" => self.epsilon = parse_num(key, v)?,
            "gamma" => self.gamma = parse_num(key, v)?,
            "labels" => self.labels = Some(parse_num(key, v)?),
            "neighborhood" => {
                if v != "adjacency" && v != "superpatch" {
                    return Err(CliError::Validation(format!("neighborhood must be adjacency or superpatch, got {v:?}")));
                }
                self.neighborhood = v.to_string();
            }
            "superpixels" => self.superpixels = parse_num(key, v)?,
            "compactness" => self.compactness = parse_num(key, v)?,
            "slic_iterations" => self.slic_iterations = parse_num(key, v)?,
            "jitter" => self.jitter = parse_num(key, v)?,
            "threads" => self.threads = Some(parse_num(key, v)?),
            "out" => self.out = PathBuf::from(v),
            other => return Err(CliError::Validation(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Validation(format!("config line {}: expected key = value", n + 1)))?;
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let bytes = read_file(path)?;
        let text = String::from_utf8(bytes).map_err(|_| CliError::format(path, "config is not UTF-8"))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> CliResult<()> {
        let fail = |m: &str| Err(CliError::Validation(m.to_string()));
        if self.k == 0 {
            return fail("--k must be >= 1");
        }
        if self.iterations == 0 {
            return fail("--iters must be >= 1");
        }
        if !(self.radius >= 0.0) {
            return fail("--radius must be >= 0");
        }
        if self.superpixels == 0 {
            return fail("superpixel count must be >= 1");
        }
        if !(self.alpha > 0.0) || !(self.beta > 0.0) || !(self.epsilon > 0.0) || !(self.gamma > 0.0) {
            return fail("alpha, beta, epsilon and gamma must be positive");
        }
        if self.sigma1.is_some_and(|s| !(s > 0.0)) || self.sigma2.is_some_and(|s| !(s > 0.0)) {
            return fail("sigma1 and sigma2 must be positive");
        }
        if self.threads == Some(0) {
            return fail("--threads must be >= 1");
        }
        Ok(())
    }

    /// Canonical `key = value` text of every resolved setting.
    pub fn to_text(&self) -> String {
        let opt = |v: Option<f64>| v.map_or("auto".to_string(), |x| x.to_string());
        let metric = match self.metric {
            FeatureMetric::Euclidean => "euclidean",
            FeatureMetric::SquaredEuclidean => "sqeuclidean",
            FeatureMetric::Manhattan => "manhattan",
        };
        [
            format!("feature = {}", self.feature),
            format!("metric = {metric}"),
            format!("radius = {}", self.radius),
            format!("k = {}", self.k),
            format!("iterations = {}", self.iterations),
            format!("seed = {}", self.seed),
            format!("sigma1 = {}", opt(self.sigma1)),
            format!("sigma2 = {}", opt(self.sigma2)),
            format!("search_radius = {}", opt(self.search_radius)),
            format!("alpha = {}", self.alpha),
            format!("beta = {}", if self.beta.is_infinite() { "inf".into() } else { self.beta.to_string() }),
            format!("epsilon = {:e}", self.epsilon),
            format!("gamma = {}", self.gamma),
            format!("labels = {}", self.labels.map_or("auto".into(), |m| m.to_string())),
            format!("neighborhood = {}", self.neighborhood),
            format!("superpixels = {}", self.superpixels),
            format!("compactness = {}", self.compactness),
            format!("slic_iterations = {}", self.slic_iterations),
            format!("jitter = {}", self.jitter),
            format!("threads = {}", self.threads.map_or("auto".into(), |t| t.to_string())),
            format!("out = {}", self.out.display()),
        ]
        .join("\n")
            + "\n"
    }

    pub fn slic(&self) -> SlicParams {
        SlicParams {
            k: self.superpixels,
            compactness: self.compactness,
            iterations: self.slic_iterations,
            jitter: self.jitter,
        }
    }

    /// Distance parameters for a test decomposition: defaults from the
    /// decomposition and radius, overridden by explicit sigmas.
    pub fn distance(&self, test: &Decomposition) -> DistanceParams {
        let sigma1 = self
            .sigma1
            .unwrap_or_else(|| default_sigma1(test.width(), test.height(), test.len()));
        let sigma2 = self.sigma2.unwrap_or_else(|| default_sigma2(self.radius));
        DistanceParams {
            mode: WeightMode::Gaussian { sigma1, sigma2 },
            metric: self.metric,
        }
    }

    pub fn spm(&self, test: &Decomposition) -> SpmParams {
        SpmParams {
            radius: self.radius,
            k: self.k,
            iterations: self.iterations,
            random_search: RandomSearchParams {
                initial_radius: self.search_radius,
                ..RandomSearchParams::default()
            },
            distance: Some(self.distance(test)),
        }
    }

    pub fn fusion(&self, labels: usize) -> FusionParams {
        FusionParams {
            alpha: self.alpha,
            beta: self.beta,
            epsilon: self.epsilon,
            labels,
        }
    }

    pub fn regularize(&self) -> RegularizeParams {
        RegularizeParams {
            gamma: self.gamma,
            metric: self.metric,
            neighborhood: if self.neighborhood == "superpatch" {
                Neighborhood::Superpatch { radius: self.radius }
            } else {
                Neighborhood::Adjacency
            },
            max_sweeps: 10,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_operating_point() {
        let c = RunConfig::default();
        assert_eq!((c.iterations, c.alpha, c.beta, c.gamma), (5, 2.0, 4.0, 0.5));
        assert_eq!((c.k, c.radius), (50, 50.0));
    }

    #[test]
    fn parse_file_and_round_trip() {
        let c = RunConfig::parse("# run\nk = 8\nradius=12.5\nbeta = inf\nfeature = hist:16+hog:9*0.5\n").unwrap();
        assert_eq!(c.k, 8);
        assert_eq!(c.radius, 12.5);
        assert!(c.beta.is_infinite());
        assert_eq!(c.feature.to_string(), "hist:16*1+hog:9*0.5");
        assert_eq!(RunConfig::parse(&c.to_text()).unwrap(), c);
        let d = RunConfig::default();
        assert_eq!(RunConfig::parse(&d.to_text()).unwrap(), d);
    }

    #[test]
    fn rejects_bad_entries() {
        assert!(RunConfig::parse("k\n").is_err());
        assert!(RunConfig::parse("colour = 3\n").is_err());
        assert!(parse_feature("sift").is_err());
        let c = RunConfig {
            k: 0,
            ..RunConfig::default()
        };
        assert!(c.validate().is_err());
    }
}
