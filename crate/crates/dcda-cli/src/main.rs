//! Command-line front end: benchmark generation, training, evaluation,
//! embedding export and the four-mode ablation sweep.
//!
//! Results go to files (plus the ablation table on stdout); errors go to
//! stderr with a non-zero exit status. Every command writes a manifest
//! listing its artifacts with content digests.

mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dcda_core::config::TrainConfig;
use dcda_core::data::{self, Dataset, Domain, ShiftSpec, Split};
use dcda_core::metrics::{evaluate_dataset, export_embeddings, pca_companion_path};
use dcda_core::model_io;
use dcda_core::trainer::ablation::run_cell;
use dcda_core::trainer::mode::MODES;
use dcda_core::trainer::train;

use manifest::Manifest;

#[derive(Parser)]
#[command(name = "dcda", version, about = "Deep-clustering-guided domain adaptation engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the moons benchmark CSVs (source train, target train, target test).
    Gen(GenArgs),
    /// Train a model on source (and target) CSVs.
    Train(TrainArgs),
    /// Evaluate a saved model on a labeled CSV.
    Eval(EvalArgs),
    /// Export embeddings (plus a 2-D PCA projection) for one or more CSVs.
    ExportEmbeddings(ExportArgs),
    /// Run all four training modes over several seeds and print the table.
    Ablate(AblateArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 400)]
    seed: u64,
    #[arg(long, default_value_t = data::MOONS35_N_TRAIN)]
    n_per_class: usize,
    #[arg(long, default_value_t = data::MOONS35_N_TEST)]
    n_test_per_class: usize,
    #[arg(long, default_value_t = data::MOONS35_NOISE)]
    noise: f64,
    #[arg(long, default_value_t = data::MOONS35_ROTATION_DEG)]
    rotation_deg: f64,
    /// Target translation as `x,y`.
    #[arg(long, default_value = "0.3,-0.1")]
    translate: String,
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    #[arg(long, default_value_t = data::MOONS35_SHIFT_NOISE)]
    shift_noise: f64,
}

#[derive(Args, Clone)]
struct ConfigOverrides {
    /// TOML config file; flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    iters_per_epoch: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    max_lambda: Option<f64>,
    #[arg(long)]
    mix_weight: Option<f64>,
    #[arg(long)]
    embed_dim: Option<usize>,
    /// Hidden widths of the feature extractor, comma separated.
    #[arg(long)]
    feature_hidden: Option<String>,
    /// Hidden widths of the discriminator, comma separated.
    #[arg(long)]
    disc_hidden: Option<String>,
    #[arg(long)]
    soft_target_cls: Option<bool>,
    #[arg(long)]
    reinit_kmeans_each_epoch: Option<bool>,
    #[arg(long)]
    w_source_cls: Option<f64>,
    #[arg(long)]
    w_target_cls: Option<f64>,
    #[arg(long)]
    w_domain: Option<f64>,
    #[arg(long)]
    w_cluster: Option<f64>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    source: PathBuf,
    #[arg(long)]
    target: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    overrides: ConfigOverrides,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// Also export embeddings of the evaluated data.
    #[arg(long)]
    export_embeddings: bool,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    model: PathBuf,
    /// One or more CSVs to embed.
    #[arg(long, required = true, num_args = 1..)]
    data: Vec<PathBuf>,
    /// Output CSV path; the PCA companion lands next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long)]
    out: PathBuf,
    /// Number of training seeds (0, 1, ..., n-1).
    #[arg(long, default_value_t = 5)]
    seeds: u64,
    /// Benchmark generator seed; ignored when explicit CSVs are given.
    #[arg(long, default_value_t = 400)]
    bench_seed: u64,
    #[arg(long)]
    source: Option<PathBuf>,
    #[arg(long)]
    target: Option<PathBuf>,
    #[arg(long)]
    target_test: Option<PathBuf>,
    #[command(flatten)]
    overrides: ConfigOverrides,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::ExportEmbeddings(args) => cmd_export(args),
        Command::Ablate(args) => cmd_ablate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

type CliResult = Result<(), Box<dyn std::error::Error>>;

fn ensure_dir(path: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(path)
}

fn parse_pair(text: &str) -> Result<Vec<f64>, String> {
    let parts: Result<Vec<f64>, _> = text.split(',').map(|p| p.trim().parse::<f64>()).collect();
    match parts {
        Ok(v) if v.len() == 2 => Ok(v),
        _ => Err(format!("expected `x,y`, got `{text}`")),
    }
}

fn parse_dims(text: &str) -> Result<Vec<usize>, String> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    text.split(',')
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .map_err(|_| format!("bad layer width `{p}`"))
        })
        .collect()
}

fn resolve_config(overrides: &ConfigOverrides) -> Result<TrainConfig, Box<dyn std::error::Error>> {
    let mut config = match &overrides.config {
        Some(path) => TrainConfig::from_path(path)?,
        None => TrainConfig::default(),
    };
    if let Some(v) = &overrides.mode {
        config.mode = v.clone();
    }
    if let Some(v) = overrides.seed {
        config.seed = v;
    }
    if let Some(v) = overrides.epochs {
        config.epochs = v;
    }
    if let Some(v) = overrides.iters_per_epoch {
        config.iters_per_epoch = v;
    }
    if let Some(v) = overrides.batch_size {
        config.batch_size = v;
    }
    if let Some(v) = overrides.lr {
        config.lr = v;
    }
    if let Some(v) = overrides.momentum {
        config.momentum = v;
    }
    if let Some(v) = overrides.alpha {
        config.alpha = v;
    }
    if let Some(v) = overrides.gamma {
        config.gamma = v;
    }
    if let Some(v) = overrides.max_lambda {
        config.max_lambda = v;
    }
    if let Some(v) = overrides.mix_weight {
        config.mix_weight = v;
    }
    if let Some(v) = overrides.embed_dim {
        config.embed_dim = v;
    }
    if let Some(v) = &overrides.feature_hidden {
        config.feature_hidden = parse_dims(v)?;
    }
    if let Some(v) = &overrides.disc_hidden {
        config.disc_hidden = parse_dims(v)?;
    }
    if let Some(v) = overrides.soft_target_cls {
        config.soft_target_cls = v;
    }
    if let Some(v) = overrides.reinit_kmeans_each_epoch {
        config.reinit_kmeans_each_epoch = v;
    }
    if let Some(v) = overrides.w_source_cls {
        config.w_source_cls = v;
    }
    if let Some(v) = overrides.w_target_cls {
        config.w_target_cls = v;
    }
    if let Some(v) = overrides.w_domain {
        config.w_domain = v;
    }
    if let Some(v) = overrides.w_cluster {
        config.w_cluster = v;
    }
    config.validate()?;
    Ok(config)
}

fn cmd_gen(args: GenArgs) -> CliResult {
    ensure_dir(&args.out)?;
    let translation = parse_pair(&args.translate)?;
    let spec = ShiftSpec {
        rotation: args.rotation_deg.to_radians(),
        translation,
        scale: args.scale,
        noise_std: args.shift_noise,
    };

    let mut source_train = data::gen_moons(args.n_per_class, args.noise, args.seed);
    source_train.name = "source_train".into();
    let raw_train = data::gen_moons(args.n_per_class, args.noise, args.seed.wrapping_add(1));
    let mut target_train = data::apply_shift(&raw_train, &spec, args.seed.wrapping_add(2))?;
    target_train.name = "target_train".into();
    let raw_test = data::gen_moons(args.n_test_per_class, args.noise, args.seed.wrapping_add(3));
    let mut target_test = data::apply_shift(&raw_test, &spec, args.seed.wrapping_add(4))?;
    target_test.split = Split::Test;
    target_test.name = "target_test".into();

    let mut manifest = Manifest::new("gen");
    manifest.add("seed", args.seed);
    manifest.add("n_per_class", args.n_per_class);
    manifest.add("noise", args.noise);
    manifest.add("rotation_deg", args.rotation_deg);
    manifest.add("translate", &args.translate);
    manifest.add("scale", args.scale);
    manifest.add("shift_noise", args.shift_noise);
    for dataset in [&source_train, &target_train, &target_test] {
        let path = args.out.join(format!("{}.csv", dataset.name));
        data::save_csv(dataset, &path)?;
        manifest.add_file(&dataset.name, &path)?;
    }
    manifest.write(&args.out)?;
    Ok(())
}

fn load_tagged(path: &Path, domain: Domain, split: Split) -> Result<Dataset, dcda_core::Error> {
    let mut dataset = data::load_csv(path)?;
    dataset.domain = domain;
    dataset.split = split;
    Ok(dataset)
}

fn cmd_train(args: TrainArgs) -> CliResult {
    ensure_dir(&args.out)?;
    let config = resolve_config(&args.overrides)?;
    let source = load_tagged(&args.source, Domain::Source, Split::Train)?;
    let target = match &args.target {
        Some(path) => Some(load_tagged(path, Domain::Target, Split::Train)?),
        None => None,
    };
    let (model, report) = train(&config, &source, target.as_ref())?;

    let model_path = args.out.join("model.txt");
    model_io::save(&model, &model_path)?;
    let report_path = args.out.join("report.txt");
    std::fs::write(&report_path, report.to_display_string())?;
    let config_path = args.out.join("config.toml");
    std::fs::write(&config_path, config.to_toml_string())?;

    let mut manifest = Manifest::new("train");
    manifest.add("mode", &config.mode);
    manifest.add("seed", config.seed);
    manifest.add("source", args.source.display());
    manifest.add_file("source_data", &args.source)?;
    if let Some(path) = &args.target {
        manifest.add("target", path.display());
        manifest.add_file("target_data", path)?;
    }
    manifest.add_file("model", &model_path)?;
    manifest.add_file("report", &report_path)?;
    manifest.add_file("config", &config_path)?;
    manifest.write(&args.out)?;
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> CliResult {
    ensure_dir(&args.out)?;
    let model = model_io::load(&args.model)?;
    let dataset = load_tagged(&args.data, Domain::Target, Split::Test)?;
    let metrics = evaluate_dataset(&model, &dataset, args.threshold)?;

    let display_path = args.out.join("metrics.txt");
    std::fs::write(&display_path, metrics.to_display_string())?;
    let kv_path = args.out.join("metrics.kv");
    std::fs::write(&kv_path, metrics.to_kv_string())?;

    let mut manifest = Manifest::new("eval");
    manifest.add("model", args.model.display());
    manifest.add("data", args.data.display());
    manifest.add("threshold", args.threshold);
    manifest.add_file("metrics_display", &display_path)?;
    manifest.add_file("metrics_kv", &kv_path)?;
    if args.export_embeddings {
        let emb_path = args.out.join("embeddings.csv");
        export_embeddings(&model, &[&dataset], &[None], &emb_path)?;
        manifest.add_file("embeddings", &emb_path)?;
        manifest.add_file("embeddings_pca", &pca_companion_path(&emb_path))?;
    }
    manifest.write(&args.out)?;
    Ok(())
}

fn cmd_export(args: ExportArgs) -> CliResult {
    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            ensure_dir(parent)?;
        }
    }
    let model = model_io::load(&args.model)?;
    let mut datasets = Vec::new();
    for path in &args.data {
        datasets.push(load_tagged(path, Domain::Target, Split::Train)?);
    }
    let refs: Vec<&Dataset> = datasets.iter().collect();
    let overrides: Vec<Option<&[usize]>> = vec![None; refs.len()];
    export_embeddings(&model, &refs, &overrides, &args.out)?;

    let dir = args.out.parent().unwrap_or(Path::new(".")).to_path_buf();
    let mut manifest = Manifest::new("export-embeddings");
    manifest.add("model", args.model.display());
    for (i, path) in args.data.iter().enumerate() {
        manifest.add(&format!("data.{i}"), path.display());
    }
    manifest.add_file("embeddings", &args.out)?;
    manifest.add_file("embeddings_pca", &pca_companion_path(&args.out))?;
    manifest.write(&dir)?;
    Ok(())
}

fn cmd_ablate(args: AblateArgs) -> CliResult {
    ensure_dir(&args.out)?;
    let base = resolve_config(&args.overrides)?;
    let (source, target_train, target_test) = match (&args.source, &args.target, &args.target_test)
    {
        (Some(s), Some(t), Some(tt)) => (
            load_tagged(s, Domain::Source, Split::Train)?,
            load_tagged(t, Domain::Target, Split::Train)?,
            load_tagged(tt, Domain::Target, Split::Test)?,
        ),
        (None, None, None) => {
            let bench = data::gen_moons35(args.bench_seed)?;
            (bench.source_train, bench.target_train, bench.target_test)
        }
        _ => {
            return Err("provide all of --source/--target/--target-test or none".into());
        }
    };

    let seeds: Vec<u64> = (0..args.seeds).collect();
    let mut manifest = Manifest::new("ablate");
    manifest.add("seeds", args.seeds);
    manifest.add("bench_seed", args.bench_seed);

    let mut runs = Vec::new();
    for policy in MODES {
        for &seed in &seeds {
            let (model, report, run) = run_cell(
                &base,
                policy.name(),
                seed,
                &source,
                &target_train,
                &target_test,
            )?;
            let cell_dir = args.out.join(policy.name()).join(format!("seed{seed}"));
            ensure_dir(&cell_dir)?;
            let model_path = cell_dir.join("model.txt");
            model_io::save(&model, &model_path)?;
            let report_path = cell_dir.join("report.txt");
            std::fs::write(&report_path, report.to_display_string())?;
            let label = format!("{}_seed{seed}", policy.name());
            manifest.add_file(&format!("{label}_model"), &model_path)?;
            manifest.add_file(&format!("{label}_report"), &report_path)?;
            runs.push(run);
        }
    }
    let table = dcda_core::trainer::ablation::AblationTable { runs, seeds };
    let rendered = table.to_display_string();
    print!("{rendered}");
    let table_path = args.out.join("ablation.txt");
    std::fs::write(&table_path, &rendered)?;
    manifest.add_file("ablation_table", &table_path)?;
    manifest.write(&args.out)?;
    Ok(())
}
