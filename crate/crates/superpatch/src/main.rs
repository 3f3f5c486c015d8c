use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use superpatch::config::{parse_beta, RunConfig};
use superpatch::error::require_exists;
use superpatch::formats::{ann_field_jsonl, export_decomposition, export_probability_maps, matches_jsonl};
use superpatch::io::{label_csv, load_labelmap, save_image, save_labelmap, write_file};
use superpatch::manifest::{build_library, load_manifest, prepare_image};
use superpatch::pipeline::{oracle_comparison, parallel_search, report, run_labeling, thread_pool};
use superpatch::{CliError, CliResult};
use superpatch_core::harness::{displacement_field, render_flow};
use superpatch_core::labeling::expand_to_pixels;
use superpatch_core::{slic_decompose, ExemplarLibrary, FeaturedImage, LabelMap, RandomSource};

#[derive(Parser)]
#[command(name = "superpatch", version, about = "Superpatch matching and exemplar label fusion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute a superpixel decomposition and write it as label PNG + JSON sidecar.
    Decompose(DecomposeArgs),
    /// Search approximate nearest superpatches in an exemplar library.
    Match(InputArgs),
    /// Search, fuse exemplar labels and regularize; scores when --truth is given.
    Label(EvalArgs),
    /// Compare the search against exhaustive matching.
    Oracle(InputArgs),
    /// Label and score against a ground-truth label map (required).
    Eval(EvalArgs),
}

#[derive(Args)]
struct DecomposeArgs {
    /// Input image(s); several single-channel images are stacked as channels.
    #[arg(required = true)]
    images: Vec<PathBuf>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args)]
struct InputArgs {
    /// Test image(s); several single-channel images are stacked as channels.
    #[arg(required = true)]
    images: Vec<PathBuf>,
    /// JSON manifest of exemplar images.
    #[arg(long)]
    library: PathBuf,
    /// Precomputed decomposition of the test image (label PNG).
    #[arg(long)]
    decomposition: Option<PathBuf>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Ground-truth label map (PNG or CSV) of the test image.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Args, Default)]
struct RunArgs {
    /// Configuration file of `key = value` lines; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of independent search runs (matches per superpixel); for
    /// `decompose`, the number of superpixels.
    #[arg(long)]
    k: Option<usize>,
    /// Superpatch radius in pixels; 0 compares single superpixels.
    #[arg(long)]
    radius: Option<f64>,
    /// Propagation / random-search iterations.
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    sigma1: Option<f64>,
    #[arg(long)]
    sigma2: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Spatial prior width; `inf` disables it.
    #[arg(long)]
    beta: Option<String>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Feature spec, e.g. `hist:16`, `hog:9`, `mean` or `hist:16+hog:9*0.5`.
    #[arg(long)]
    feature: Option<String>,
    /// Number of labels; defaults to one past the largest exemplar label.
    #[arg(long)]
    labels: Option<usize>,
    /// Number of superpixels requested from SLIC.
    #[arg(long)]
    superpixels: Option<usize>,
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Recompute cached decompositions and features.
    #[arg(long)]
    rebuild_cache: bool,
}

impl RunArgs {
    fn resolve(&self) -> CliResult<RunConfig> {
        let mut c = match &self.config {
            Some(p) => {
                require_exists(p)?;
                RunConfig::load(p)?
            }
            None => RunConfig::default(),
        };
        let num = |c: &mut RunConfig, key: &str, v: Option<String>| match v {
            Some(v) => c.set(key, &v),
            None => Ok(()),
        };
        num(&mut c, "k", self.k.map(|v| v.to_string()))?;
        num(&mut c, "radius", self.radius.map(|v| v.to_string()))?;
        num(&mut c, "iters", self.iters.map(|v| v.to_string()))?;
        num(&mut c, "seed", self.seed.map(|v| v.to_string()))?;
        num(&mut c, "sigma1", self.sigma1.map(|v| v.to_string()))?;
        num(&mut c, "sigma2", self.sigma2.map(|v| v.to_string()))?;
        num(&mut c, "alpha", self.alpha.map(|v| v.to_string()))?;
        if let Some(b) = &self.beta {
            c.beta = parse_beta(b)?;
        }
        num(&mut c, "gamma", self.gamma.map(|v| v.to_string()))?;
        num(&mut c, "epsilon", self.epsilon.map(|v| v.to_string()))?;
        num(&mut c, "feature", self.feature.clone())?;
        num(&mut c, "labels", self.labels.map(|v| v.to_string()))?;
        num(&mut c, "superpixels", self.superpixels.map(|v| v.to_string()))?;
        num(&mut c, "threads", self.threads.map(|v| v.to_string()))?;
        if let Some(o) = &self.out {
            c.out = o.clone();
        }
        c.validate()?;
        Ok(c)
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
    write_file(path, text.as_bytes())
}

struct Loaded {
    config: RunConfig,
    test: FeaturedImage,
    library: ExemplarLibrary,
}

fn load_inputs(args: &InputArgs) -> CliResult<Loaded> {
    let config = args.run.resolve()?;
    for p in &args.images {
        require_exists(p)?;
    }
    require_exists(&args.library)?;
    let entries = load_manifest(&args.library)?;
    let prepared = prepare_image(&args.images, args.decomposition.as_deref(), &config, args.run.rebuild_cache)?;
    let test = FeaturedImage::new(
        prepared.decomposition,
        prepared.features,
        config.feature.clone(),
        config.radius,
    )?;
    let library = build_library(&entries, &config, args.run.rebuild_cache)?;
    write_file(&config.out.join("config.resolved.txt"), config.to_text().as_bytes())?;
    Ok(Loaded { config, test, library })
}

fn write_labels(out: &Path, loaded: &Loaded, outcome: &superpatch::pipeline::LabelOutcome) -> CliResult<LabelMap> {
    let decomp = loaded.test.decomposition();
    write_file(&out.join("ann.jsonl"), ann_field_jsonl(&outcome.field).as_bytes())?;
    export_probability_maps(&outcome.fusion, decomp, out)?;
    let pixels = expand_to_pixels(&outcome.regularized.labeling, decomp)?;
    save_labelmap(&pixels, &out.join("labels.png"))?;
    save_labelmap(&expand_to_pixels(&outcome.argmax, decomp)?, &out.join("labels_fusion.png"))?;
    let per_sp: Vec<String> = outcome.regularized.labeling.labels.iter().map(u32::to_string).collect();
    write_file(&out.join("superpixel_labels.csv"), (per_sp.join("\n") + "\n").as_bytes())?;
    Ok(pixels)
}

fn label(args: &EvalArgs, require_truth: bool) -> CliResult<()> {
    let truth_path = match (&args.truth, require_truth) {
        (Some(p), _) => {
            require_exists(p)?;
            Some(p)
        }
        (None, true) => return Err(CliError::Validation("eval requires --truth".into())),
        (None, false) => None,
    };
    let pool = thread_pool(args.input.run.threads)?;
    pool.install(|| -> CliResult<()> {
        let truth = truth_path.map(|p| load_labelmap(p)).transpose()?;
        let loaded = load_inputs(&args.input)?;
        let outcome = run_labeling(&loaded.test, &loaded.library, &loaded.config)?;
        write_labels(&loaded.config.out, &loaded, &outcome)?;
        let report = report(&outcome, &loaded.test, truth.as_ref())?;
        write_json(&loaded.config.out.join("metrics.json"), &report)?;
        print!("{}", report.table());
        Ok(())
    })
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Decompose(args) => {
            let mut config = args.run.resolve()?;
            if let Some(k) = args.run.k {
                config.superpixels = k;
            }
            if config.superpixels == 0 || args.run.k == Some(0) {
                return Err(CliError::Validation("--k (superpixel count) must be >= 1".into()));
            }
            for p in &args.images {
                require_exists(p)?;
            }
            let image = superpatch::io::load_stack(&args.images)?;
            let d = slic_decompose(&image, &config.slic(), &RandomSource::new(config.seed))?;
            export_decomposition(&d, &config.out.join("decomposition.png"))?;
            write_file(&config.out.join("decomposition.csv"), label_csv(&d.label_map()).as_bytes())?;
            println!("{} superpixels -> {}", d.len(), config.out.display());
        }
        Command::Match(args) => {
            let pool = thread_pool(args.run.threads)?;
            pool.install(|| -> CliResult<()> {
                let loaded = load_inputs(&args)?;
                let out = &loaded.config.out;
                let t = Instant::now();
                let field = parallel_search(&loaded.test, &loaded.library, &loaded.config)?;
                let search = t.elapsed().as_secs_f64();
                write_file(&out.join("ann.jsonl"), ann_field_jsonl(&field).as_bytes())?;
                let flow = displacement_field(&field, loaded.test.decomposition(), &loaded.library)?;
                save_image(&render_flow(&flow, loaded.test.decomposition())?, &out.join("flow.png"), false)?;
                println!(
                    "matched {} superpixels (k = {}) in {:.3} s; median displacement {:.3} px",
                    field.len(),
                    field.k(),
                    search,
                    flow.median_magnitude()
                );
                Ok(())
            })?;
        }
        Command::Label(args) => label(&args, false)?,
        Command::Oracle(args) => {
            let pool = thread_pool(args.run.threads)?;
            pool.install(|| -> CliResult<()> {
                let loaded = load_inputs(&args)?;
                let field = parallel_search(&loaded.test, &loaded.library, &loaded.config)?;
                let (exact, report) = oracle_comparison(&loaded.test, &loaded.library, &field, &loaded.config)?;
                let exact: Vec<Vec<_>> = exact.into_iter().map(|m| vec![m]).collect();
                write_file(&loaded.config.out.join("oracle.jsonl"), matches_jsonl(&exact).as_bytes())?;
                write_json(&loaded.config.out.join("oracle.json"), &report)?;
                print!("{}", report.table());
                Ok(())
            })?;
        }
        Command::Eval(args) => label(&args, true)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
