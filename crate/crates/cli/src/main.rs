use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use graphdistill::active::AlMode;
use graphdistill::gnn::{load_checkpoint, GraphInput};
use graphdistill::graph::{
    load_dataset, make_split, make_split_from_pools, write_dataset, PlantedPartition, SplitFile,
};
use graphdistill::pipeline::{
    baseline_config, build_teacher, evaluate, prelim_analysis, preview_stage, run, run_gradcheck,
    AlignMode, BucketMetric, GradcheckOptions, RunConfig, TeacherKind,
};

#[derive(Parser)]
#[command(
    name = "graphdistill",
    version,
    about = "Few-shot node classification with LLM-teacher distillation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Full pipeline over every seed; writes report.json, table.txt and per-seed files.
    Run(RunArgs),
    /// Plain GCN with every teacher component off.
    Baseline(RunArgs),
    /// Scores and picks of one selection stage, printed as JSON.
    Select {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Teacher accuracy on head, middle and tail buckets by degree or homophily.
    Prelim {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum, default_value_t = MetricArg::Homophily)]
        metric: MetricArg,
        #[arg(long, default_value_t = 300)]
        bucket_size: usize,
    },
    /// Finite-difference check of the training gradients.
    Gradcheck {
        #[arg(long, default_value_t = 20)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
        #[arg(long, hide = true)]
        corrupt: bool,
    },
    /// Writes a planted-partition dataset directory.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = PresetArg::Default)]
        preset: PresetArg,
        /// Generator parameters as JSON, overriding the preset field by field.
        #[arg(long)]
        params: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Test accuracy of a saved checkpoint on one seed's split.
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 3)]
        shots: usize,
    },
}

#[derive(Args, Clone, Default)]
struct RunArgs {
    /// JSON run configuration; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    cache: Option<PathBuf>,
    #[arg(long)]
    shots: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    /// Selections per class (B).
    #[arg(long)]
    budget: Option<usize>,
    /// Selections per class per stage (b).
    #[arg(long)]
    stage_size: Option<usize>,
    #[arg(long)]
    candidate_factor: Option<usize>,
    #[arg(long, value_enum)]
    teacher: Option<TeacherArg>,
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model_name: Option<String>,
    /// Environment variable holding the teacher bearer token.
    #[arg(long)]
    token_env: Option<String>,
    #[arg(long)]
    noise_seed: Option<u64>,
    #[arg(long)]
    max_queries: Option<usize>,
    #[arg(long)]
    in_flight: Option<usize>,
    #[arg(long)]
    no_soft_labels: bool,
    #[arg(long)]
    no_rationales: bool,
    #[arg(long)]
    no_al: bool,
    #[arg(long, value_enum)]
    al_mode: Option<AlModeArg>,
    #[arg(long, value_enum)]
    align: Option<AlignArg>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
}

#[derive(ValueEnum, Clone, Copy)]
enum TeacherArg {
    Http,
    Oracle,
    Noisy,
}

#[derive(ValueEnum, Clone, Copy)]
enum AlModeArg {
    GraphLlm,
    Random,
    AllAtOnce,
}

#[derive(ValueEnum, Clone, Copy)]
enum AlignArg {
    Mlp,
    MaxPool,
}

#[derive(ValueEnum, Clone, Copy)]
enum MetricArg {
    Degree,
    Homophily,
}

#[derive(ValueEnum, Clone, Copy)]
enum PresetArg {
    /// 3 classes × 60 nodes, dense blocks.
    Default,
    /// 3 classes × 200 nodes, sparse blocks and weaker features.
    NoisyBenchmark,
}

impl RunArgs {
    fn config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_json_file(p)
                .with_context(|| format!("reading config {}", p.display()))?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($field:expr, $value:expr) => {
                if let Some(v) = $value {
                    $field = v;
                }
            };
        }
        set!(cfg.dataset_dir, self.dataset.clone().map(Some));
        set!(cfg.output_dir, self.output.clone().map(Some));
        set!(cfg.cache_path, self.cache.clone().map(Some));
        set!(cfg.shots, self.shots);
        set!(cfg.seeds, self.seeds.clone());
        set!(cfg.alpha, self.alpha);
        set!(cfg.beta, self.beta);
        set!(cfg.tau, self.tau);
        set!(cfg.budget_per_class, self.budget);
        set!(cfg.stage_size, self.stage_size);
        set!(cfg.candidate_factor, self.candidate_factor);
        set!(cfg.teacher.endpoint, self.endpoint.clone().map(Some));
        set!(cfg.teacher.model_name, self.model_name.clone().map(Some));
        set!(cfg.teacher.token_env, self.token_env.clone().map(Some));
        set!(cfg.teacher.noise_seed, self.noise_seed);
        set!(cfg.teacher.max_queries, self.max_queries.map(Some));
        set!(cfg.teacher.in_flight, self.in_flight);
        set!(cfg.training.hidden, self.hidden);
        set!(cfg.training.dropout, self.dropout);
        set!(cfg.training.lr, self.lr);
        set!(cfg.training.epochs, self.epochs);
        set!(cfg.training.patience, self.patience);
        if let Some(t) = self.teacher {
            cfg.teacher.kind = match t {
                TeacherArg::Http => TeacherKind::Http,
                TeacherArg::Oracle => TeacherKind::Oracle,
                TeacherArg::Noisy => TeacherKind::Noisy,
            };
        }
        if let Some(m) = self.al_mode {
            cfg.ablations.al_mode = match m {
                AlModeArg::GraphLlm => AlMode::GraphLlm,
                AlModeArg::Random => AlMode::Random,
                AlModeArg::AllAtOnce => AlMode::AllAtOnce,
            };
        }
        if let Some(a) = self.align {
            cfg.ablations.align = Some(match a {
                AlignArg::Mlp => AlignMode::Mlp,
                AlignArg::MaxPool => AlignMode::MaxPool,
            });
        }
        cfg.ablations.use_soft_labels &= !self.no_soft_labels;
        cfg.ablations.use_rationales &= !self.no_rationales;
        cfg.ablations.use_al &= !self.no_al;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn dataset_dir(cfg: &RunConfig) -> Result<&Path> {
    cfg.dataset_dir
        .as_deref()
        .context("a dataset directory is required (--dataset or dataset_dir in --config)")
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn execute(cmd: Command) -> Result<ExitCode> {
    match cmd {
        Command::Run(args) => {
            let report = run(&args.config()?)?;
            print!("{}", report.table());
        }
        Command::Baseline(args) => {
            let report = run(&baseline_config(&args.config()?))?;
            print!("{}", report.table());
        }
        Command::Select { run, seed } => {
            let cfg = run.config()?;
            let dir = dataset_dir(&cfg)?;
            let g = load_dataset(dir)?;
            let pools = SplitFile::load(dir)?;
            print_json(&preview_stage(&cfg, &g, pools.as_ref(), seed)?)?;
        }
        Command::Prelim {
            run,
            metric,
            bucket_size,
        } => {
            let cfg = run.config()?;
            let g = load_dataset(dataset_dir(&cfg)?)?;
            let Some(teacher) = build_teacher(&cfg, &g)? else {
                bail!("bucket analysis needs a teacher; enable at least one teacher component");
            };
            let metric = match metric {
                MetricArg::Degree => BucketMetric::Degree,
                MetricArg::Homophily => BucketMetric::Homophily,
            };
            print_json(&prelim_analysis(&g, &teacher, metric, bucket_size)?)?;
        }
        Command::Gradcheck {
            instances,
            seed,
            tolerance,
            corrupt,
        } => {
            let report = run_gradcheck(&GradcheckOptions {
                instances,
                seed,
                tolerance,
                corrupt,
                ..GradcheckOptions::default()
            })?;
            print_json(&report)?;
            if !report.passed {
                log::error!(
                    "max relative error {:.3e} exceeds {:.1e}",
                    report.max_rel_err,
                    report.tolerance
                );
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Synth {
            out,
            preset,
            params,
            seed,
        } => {
            let base = match preset {
                PresetArg::Default => PlantedPartition::default(),
                PresetArg::NoisyBenchmark => PlantedPartition::noisy_benchmark(),
            };
            let mut gen = match params {
                Some(json) => {
                    let mut value = serde_json::to_value(&base)?;
                    let overrides: serde_json::Value =
                        serde_json::from_str(&json).context("parsing --params")?;
                    let serde_json::Value::Object(fields) = overrides else {
                        bail!("--params must be a JSON object");
                    };
                    for (k, v) in fields {
                        value[k] = v;
                    }
                    serde_json::from_value(value).context("invalid --params")?
                }
                None => base,
            };
            if let Some(s) = seed {
                gen.seed = s;
            }
            let g = gen.generate()?;
            write_dataset(&g, &out)?;
            log::info!(
                "wrote {} nodes, {} edges to {}",
                g.num_nodes(),
                g.num_edges(),
                out.display()
            );
        }
        Command::Eval {
            dataset,
            checkpoint,
            seed,
            shots,
        } => {
            let g = load_dataset(&dataset)?;
            let split = match SplitFile::load(&dataset)? {
                Some(p) => make_split_from_pools(&g, &p, shots, seed)?,
                None => make_split(&g, shots, Default::default(), seed)?,
            };
            let file = File::open(&checkpoint)
                .with_context(|| format!("opening {}", checkpoint.display()))?;
            let model = load_checkpoint(BufReader::new(file), 0.0)?;
            let input = GraphInput::from_graph(&g);
            let accuracy = evaluate(&model, &input, &g, &split.test)?;
            print_json(&serde_json::json!({
                "seed": seed,
                "test_nodes": split.test.len(),
                "test_accuracy": accuracy,
            }))?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
