use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};

use gradrec::catalog::{bundle_base, with_ext, PROMPT_EXT};
use gradrec::config::{layered, Overrides, CONFIG_ENV};
use gradrec::direction::{build_direction, invert_direction, DirectionVector};
use gradrec::eval::{run_eval, write_artifacts, DirectionFrom, EvalSetup};
use gradrec::fsutil::write_atomic;
use gradrec::service::{serve, ServeOptions};
use gradrec::synth::{
    generate_synthetic, load_oracle, write_synthetic, SyntheticSpec, DEFAULT_STYLE_SCALE,
};
use gradrec::traversal::traverse;
use gradrec::{load_catalog, load_prompt_bank, KnnIndex, PromptBank};

#[derive(Parser)]
#[command(
    name = "gradrec",
    version,
    about = "Comparative recommendation by latent-space traversal"
)]
struct Cli {
    /// TOML file with default knob values
    #[arg(long, global = true, env = CONFIG_ENV)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic catalog bundle with planted attribute intensities
    Synth(SynthArgs),
    /// Print the ids of the products nearest to a prompt, one per line
    Retrieve(RetrieveArgs),
    /// Estimate an attribute direction from two prompts
    Direction(DirectionArgs),
    /// Walk from a seed product along a direction
    Traverse(TraverseArgs),
    /// Run the discovery evaluation and write its artifacts
    Eval(EvalArgs),
    /// Serve the HTTP API
    Serve(ServeArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Output bundle base; writes <out>.grvec, .grmeta.jsonl, .grprompt.jsonl, .oracle.json
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 64)]
    dim: usize,
    #[arg(long, default_value_t = 600)]
    n_products: usize,
    #[arg(long, default_value_t = 1)]
    n_attributes: usize,
    #[arg(long, default_value_t = 3)]
    levels: usize,
    #[arg(long, default_value_t = 0.05)]
    noise_sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_STYLE_SCALE)]
    style_scale: f64,
}

#[derive(Args)]
struct CatalogArgs {
    /// Catalog bundle (`name` or `name.grvec`)
    #[arg(long)]
    catalog: PathBuf,
    /// Prompt bank; defaults to the bundle's .grprompt.jsonl
    #[arg(long)]
    prompts: Option<PathBuf>,
}

impl CatalogArgs {
    fn prompts_path(&self) -> PathBuf {
        self.prompts
            .clone()
            .unwrap_or_else(|| with_ext(&bundle_base(&self.catalog), PROMPT_EXT))
    }

    fn load(&self) -> gradrec::Result<(KnnIndex, PromptBank)> {
        let catalog = load_catalog(&self.catalog)?;
        let bank = load_prompt_bank(self.prompts_path())?;
        bank.check_dim(catalog.dim())?;
        Ok((KnnIndex::new(catalog), bank))
    }
}

#[derive(Args, Default)]
struct KnobArgs {
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    k_reg: Option<usize>,
    #[arg(long)]
    k_rec: Option<usize>,
    /// Maximum traversal steps
    #[arg(long)]
    steps: Option<usize>,
    /// Products per class set when estimating a direction
    #[arg(long)]
    class_size: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
}

impl KnobArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            lambda: self.lambda,
            rho: self.rho,
            k_reg: self.k_reg,
            k_rec: self.k_rec,
            steps: self.steps,
            epsilon: self.epsilon,
            class_size: self.class_size,
            ..Default::default()
        }
    }
}

#[derive(Args)]
struct RetrieveArgs {
    #[command(flatten)]
    catalog: CatalogArgs,
    #[arg(long)]
    prompt: String,
    #[arg(long, default_value_t = 10)]
    n: usize,
}

#[derive(Args)]
struct DirectionArgs {
    #[command(flatten)]
    catalog: CatalogArgs,
    /// Prompt retrieving products without the attribute
    #[arg(long)]
    neutral: String,
    /// Prompt retrieving products with the attribute
    #[arg(long)]
    exemplar: String,
    /// Neutral class size; defaults to --class-size
    #[arg(long)]
    m: Option<usize>,
    /// Exemplar class size; defaults to --class-size
    #[arg(long)]
    n: Option<usize>,
    #[command(flatten)]
    knobs: KnobArgs,
    /// Point the direction the other way
    #[arg(long)]
    invert: bool,
    /// Write the direction JSON here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TraverseArgs {
    /// Catalog bundle (`name` or `name.grvec`)
    #[arg(long)]
    catalog: PathBuf,
    /// Direction JSON written by `gradrec direction`
    #[arg(long)]
    direction: PathBuf,
    #[arg(long = "seed-id", alias = "seed")]
    seed_id: String,
    #[command(flatten)]
    knobs: KnobArgs,
    /// Include the position vector of every step
    #[arg(long)]
    positions: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum DirectionFromArg {
    NeuPos,
    NegNeu,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    catalog: CatalogArgs,
    #[arg(long)]
    negative: String,
    #[arg(long)]
    neutral: String,
    #[arg(long)]
    positive: String,
    /// Seed product; defaults to the top match for the negative prompt
    #[arg(long = "seed-id", alias = "seed")]
    seed_id: Option<String>,
    /// Products per intensity dataset
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    min_peak: Option<usize>,
    #[arg(long, value_enum, default_value = "neu-pos")]
    direction_from: DirectionFromArg,
    #[command(flatten)]
    knobs: KnobArgs,
    /// Ground-truth intensities (.oracle.json) for the monotonicity score
    #[arg(long)]
    oracle: Option<PathBuf>,
    /// Oracle attribute to score against; defaults to the first
    #[arg(long)]
    attribute: Option<String>,
    #[arg(long = "out-dir", alias = "out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long)]
    catalog: PathBuf,
    #[arg(long)]
    prompts: Option<PathBuf>,
}

fn emit(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(p) => write_atomic(p, text.as_bytes())?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
        }
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let config = cli.config.as_deref();
    match cli.command {
        Command::Synth(a) => {
            let spec = SyntheticSpec {
                dim: a.dim,
                n_products: a.n_products,
                n_attributes: a.n_attributes,
                intensity_levels: a.levels,
                noise_sigma: a.noise_sigma,
                seed: a.seed,
                style_scale: a.style_scale,
            };
            let synth = generate_synthetic(&spec)?;
            write_synthetic(&synth, &a.out)?;
        }
        Command::Retrieve(a) => {
            let (index, bank) = a.catalog.load()?;
            let hits = index.retrieve_by_prompt(&bank, &a.prompt, a.n)?;
            let text: String = hits.iter().map(|h| format!("{}\n", h.product_id)).collect();
            emit(None, &text)?;
        }
        Command::Direction(a) => {
            let settings = layered(config, a.knobs.overrides())?;
            let (index, bank) = a.catalog.load()?;
            let mut d = build_direction(
                &index,
                &bank,
                &a.neutral,
                &a.exemplar,
                a.m.unwrap_or(settings.class_size),
                a.n.unwrap_or(settings.class_size),
                &settings.snr,
            )?;
            if d.provenance.class_sets.overlap_warning {
                tracing::warn!(
                    overlap = d.provenance.class_sets.overlap_fraction,
                    "class sets overlap heavily"
                );
            }
            if a.invert {
                d = invert_direction(&d);
            }
            emit(a.out.as_deref(), &(d.to_json() + "\n"))?;
        }
        Command::Traverse(a) => {
            let settings = layered(config, a.knobs.overrides())?;
            settings.traversal.validate()?;
            let index = KnnIndex::new(load_catalog(&a.catalog)?);
            let d = DirectionVector::load(&a.direction)?;
            let path = traverse(&a.seed_id, &d, &index, &settings.traversal)?;
            emit(a.out.as_deref(), &(path.to_json(a.positions) + "\n"))?;
        }
        Command::Eval(a) => {
            let flags = Overrides {
                n: a.n,
                window: a.window,
                min_peak: a.min_peak,
                ..a.knobs.overrides()
            };
            let settings = layered(config, flags)?;
            settings.traversal.validate()?;
            let (index, bank) = a.catalog.load()?;
            let alpha: Option<BTreeMap<String, f64>> = match &a.oracle {
                Some(p) => {
                    let oracle = load_oracle(p)?;
                    let attr = match &a.attribute {
                        Some(x) => x.clone(),
                        None => oracle
                            .attributes
                            .first()
                            .cloned()
                            .context("oracle has no attributes")?,
                    };
                    anyhow::ensure!(
                        oracle.attributes.contains(&attr),
                        "oracle has no attribute {attr:?}"
                    );
                    Some(oracle.alpha_map(&attr))
                }
                None => None,
            };
            let mut setup = EvalSetup::new(&a.negative, &a.neutral, &a.positive);
            setup.seed_id = a.seed_id;
            setup.dataset_size = settings.dataset_size;
            setup.window = settings.window;
            setup.min_peak = settings.min_peak;
            setup.class_size = settings.class_size;
            setup.snr = settings.snr;
            setup.traversal = settings.traversal;
            setup.direction_from = match a.direction_from {
                DirectionFromArg::NeuPos => DirectionFrom::NeuPos,
                DirectionFromArg::NegNeu => DirectionFrom::NegNeu,
            };
            let report = run_eval(&index, &bank, &setup, alpha.as_ref())?;
            write_artifacts(&report, &a.out_dir)?;
            eprintln!(
                "gradrec peaks {}; visual_similarity peaks {}",
                if report.gradrec_peaks.pass {
                    "in order"
                } else {
                    "out of order"
                },
                if report.visual_peaks.pass {
                    "in order"
                } else {
                    "out of order"
                },
            );
        }
        Command::Serve(a) => {
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(serve(ServeOptions {
                port: a.port,
                catalog: a.catalog,
                prompts: a.prompts,
            }))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = e
                .downcast_ref::<gradrec::Error>()
                .map(|g| g.code())
                .unwrap_or("Error");
            eprintln!("{code}: {e}");
            ExitCode::FAILURE
        }
    }
}
