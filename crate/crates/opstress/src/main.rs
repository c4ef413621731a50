use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use opstress::container::{read_designs, write_json};
use opstress::error::{HarnessError, Result};
use opstress::evaluate::predict;
use opstress::pipeline::PipelinePaths;
use opstress::render::{write_field_png, Palette};
use opstress::{
    evaluate, generate_designs, read_container, run_pipeline, simulate_designs, train, write_container, write_designs,
    write_report, Checkpoint, Scale, TrainConfig,
};
use opstress_core::dataset::split;
use opstress_core::metrics::Summary;
use opstress_core::surrogates::ModelKind;
use opstress_core::topopt::ToSettings;

#[derive(Parser)]
#[command(name = "opstress", version, about = "Elastoplastic stress surrogates: data generation, training and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize sampled cases and store continuous and binary designs.
    Topopt(TopoptArgs),
    /// Simulate stored designs under sampled displacement loads.
    Simulate(SimulateArgs),
    /// Build, inspect or split a dataset container.
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Train a surrogate from a TOML or JSON config.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Score a checkpoint on a dataset split and export ranked cases.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        report: PathBuf,
        #[arg(long, default_value = "test", value_parser = ["train", "test", "all"])]
        split: String,
    },
    /// Predict the stress field of one geometry and load.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        /// A dataset or design container, a raw `.bin` of 0/1 bytes (row 0 at
        /// the bottom), or a text grid of 0/1 with the top row first.
        #[arg(long)]
        geometry: PathBuf,
        /// Sample to take when `--geometry` is a container.
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[arg(long)]
        theta: f64,
        #[arg(long)]
        umag: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run topopt, simulate, dataset, train and evaluate end to end.
    Pipeline {
        #[arg(long, default_value = "toy")]
        scale: Scale,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory; defaults to `runs/<scale>-<seed>`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated subset of resunet, vanilla_deeponet, rdon.
        #[arg(long, value_delimiter = ',')]
        kinds: Vec<String>,
    },
}

#[derive(Args)]
struct TopoptArgs {
    #[arg(long)]
    cases: usize,
    /// Grid as `<nx>x<ny>`.
    #[arg(long, value_parser = parse_grid)]
    grid: (usize, usize),
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = ToSettings::default().iterations)]
    iterations: usize,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    designs: PathBuf,
    #[arg(long, default_value_t = 5)]
    loads_per_design: usize,
    #[arg(long, default_value_t = 20)]
    increments: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum DatasetCommand {
    /// Generate designs and simulate them into a container in one go.
    Build {
        #[command(flatten)]
        topopt: TopoptArgs,
        #[arg(long, default_value_t = 5)]
        loads_per_design: usize,
        #[arg(long, default_value_t = 20)]
        increments: usize,
    },
    /// Print a summary of a container.
    Inspect {
        #[arg(long)]
        data: PathBuf,
    },
    /// Write the geometry-level train/test split of a container.
    Split {
        #[arg(long)]
        data: PathBuf,
        /// Defaults to the manifest's split seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected <nx>x<ny>, got {s:?}"))?;
    let parse = |v: &str| v.trim().parse::<usize>().ok().filter(|&n| n > 0).ok_or_else(|| format!("bad grid size {v:?}"));
    Ok((parse(a)?, parse(b)?))
}

fn parse_kinds(kinds: &[String]) -> Result<Vec<ModelKind>> {
    if kinds.is_empty() {
        return Ok(ModelKind::ALL.to_vec());
    }
    kinds
        .iter()
        .map(|k| ModelKind::parse(k.trim()).ok_or_else(|| HarnessError::Invalid(format!("unknown model kind {k:?}"))))
        .collect()
}

fn topopt(args: &TopoptArgs) -> Result<opstress::DesignSet> {
    let settings = ToSettings { iterations: args.iterations, ..ToSettings::default() };
    let set = generate_designs(args.cases, args.grid.0, args.grid.1, args.seed, &settings)?;
    write_designs(&set, &args.out)?;
    println!("wrote {} designs ({}x{}) to {}", set.designs.len(), set.nx, set.ny, args.out.display());
    Ok(set)
}

fn simulate(set: &opstress::DesignSet, loads: usize, increments: usize, seed: u64, out: &Path) -> Result<()> {
    let batch = simulate_designs(set, loads, increments, seed)?;
    for f in &batch.failures {
        eprintln!("warning: skipped design {} load {}: {}", f.provenance.design, f.provenance.load_index, f.error);
    }
    write_container(&batch.dataset, out)?;
    println!(
        "wrote {} samples to {} ({} skipped, {:.3} s per simulation)",
        batch.dataset.len(),
        out.display(),
        batch.failures.len(),
        batch.seconds_per_case
    );
    Ok(())
}

fn read_geometry(path: &Path, index: usize, nx: usize, ny: usize) -> Result<Vec<u8>> {
    if path.is_dir() {
        let geometry = match read_container(path) {
            Ok(data) => (index < data.len()).then(|| data.geometry(index).to_vec()),
            Err(_) => {
                let set = read_designs(path)?;
                (index < set.designs.len()).then(|| set.geometry(index).to_vec())
            }
        };
        return geometry.ok_or_else(|| HarnessError::Invalid(format!("{}: no sample {index}", path.display())));
    }
    let bytes = fs::read(path).map_err(HarnessError::io(path))?;
    if path.extension().is_some_and(|e| e == "bin") {
        return Ok(bytes);
    }
    let text = String::from_utf8(bytes).map_err(|e| HarnessError::Invalid(format!("{}: {e}", path.display())))?;
    let rows: Vec<Vec<u8>> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.split(|c: char| c == ',' || c.is_whitespace())
                .filter(|t| !t.is_empty())
                .map(|t| t.parse::<u8>().map_err(|_| HarnessError::Invalid(format!("{}: bad value {t:?}", path.display()))))
                .collect()
        })
        .collect::<Result<_>>()?;
    if rows.len() != ny || rows.iter().any(|r| r.len() != nx) {
        return Err(HarnessError::Invalid(format!("{}: expected {ny} rows of {nx} values", path.display())));
    }
    Ok(rows.into_iter().rev().flatten().collect())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Topopt(args) => {
            topopt(&args)?;
        }
        Command::Simulate(args) => {
            let set = read_designs(&args.designs)?;
            simulate(&set, args.loads_per_design, args.increments, args.seed, &args.out)?;
        }
        Command::Dataset(DatasetCommand::Build { topopt: args, loads_per_design, increments }) => {
            let out = args.out.clone();
            let designs_dir = out.join("designs");
            let set = topopt(&TopoptArgs { out: designs_dir, ..args })?;
            simulate(&set, loads_per_design, increments, args.seed, &out)?;
        }
        Command::Dataset(DatasetCommand::Inspect { data }) => {
            let d = read_container(&data)?;
            let m = &d.manifest;
            let (train_idx, test_idx) = split(m, m.split_seed);
            let max: Vec<f64> = (0..d.len()).map(|i| d.stress(i).iter().copied().fold(0.0f32, f32::max) as f64).collect();
            let solid: Vec<f64> =
                (0..d.len()).map(|i| d.geometry(i).iter().map(|&g| g as f64).sum::<f64>() / d.pixels() as f64).collect();
            println!("grid            {}x{}", m.nx, m.ny);
            println!("samples         {}", m.sample_count);
            println!("designs         {}", m.designs.len());
            println!("stress scale    {} MPa", m.stress_scale);
            println!("split           {} train / {} test (seed {})", train_idx.len(), test_idx.len(), m.split_seed);
            if let (Some(s), Some(v)) = (Summary::of(&max), Summary::of(&solid)) {
                println!("peak stress     mean {:.1}, min {:.1}, max {:.1} MPa", s.mean, s.min, s.max);
                println!("solid fraction  mean {:.3}, min {:.3}, max {:.3}", v.mean, v.min, v.max);
            }
        }
        Command::Dataset(DatasetCommand::Split { data, seed, out }) => {
            let d = read_container(&data)?;
            let seed = seed.unwrap_or(d.manifest.split_seed);
            let (train_idx, test_idx) = split(&d.manifest, seed);
            let out = out.unwrap_or_else(|| data.join("split.json"));
            write_json(&out, &serde_json::json!({ "seed": seed, "train": train_idx, "test": test_idx }))?;
            println!("{} train / {} test samples written to {}", train_idx.len(), test_idx.len(), out.display());
        }
        Command::Train { config } => {
            let config = TrainConfig::from_file(&config)?;
            let outcome = train(&config)?;
            let last = outcome.history.train.last().copied().unwrap_or(f64::NAN);
            println!("trained {} steps, final loss {last:.6}; outputs in {}", config.steps, config.out.display());
        }
        Command::Evaluate { checkpoint, data, report, split: which } => {
            let ckpt = Checkpoint::load(&checkpoint)?;
            let d = read_container(&data)?;
            let (train_idx, test_idx) = split(&d.manifest, d.manifest.split_seed);
            let indices = match which.as_str() {
                "train" => train_idx,
                "test" => test_idx,
                _ => (0..d.len()).collect(),
            };
            let (r, predictions) = evaluate(&ckpt, &d, &indices)?;
            write_report(&r, &d, &indices, &predictions, &report)?;
            let s = r.summary;
            println!(
                "MRL2E over {} cases: mean {:.4}, std {:.4}, min {:.4}, max {:.4}, median {:.4}; {:.2} ms per prediction",
                s.count,
                s.mean,
                s.std,
                s.min,
                s.max,
                s.median,
                r.seconds_per_case * 1e3
            );
        }
        Command::Predict { checkpoint, geometry, index, theta, umag, out } => {
            let ckpt = Checkpoint::load(&checkpoint)?;
            let (nx, ny) = (ckpt.model.spec().nx, ckpt.model.spec().ny);
            let geometry = read_geometry(&geometry, index, nx, ny)?;
            let p = predict(&ckpt, &geometry, theta, umag)?;
            fs::create_dir_all(&out).map_err(HarnessError::io(&out))?;
            let path = out.join("prediction.csv");
            let mut w = csv::Writer::from_path(&path)?;
            w.write_record(["row", "col", "solid", "stress_mpa"])?;
            for (e, v) in p.field.vm.iter().enumerate() {
                w.serialize((e / nx, e % nx, geometry[e], v))?;
            }
            w.flush().map_err(HarnessError::io(&path))?;
            let top = p.field.max();
            write_field_png(&out.join("prediction.png"), nx, ny, &p.field.vm, &geometry, Palette::Magnitude, top)?;
            write_json(&out.join("prediction.json"), &serde_json::json!({ "theta": theta, "umag": umag, "max_mpa": top, "seconds": p.seconds }))?;
            println!("max {:.1} MPa, predicted in {:.3} ms; written to {}", top, p.seconds * 1e3, out.display());
        }
        Command::Pipeline { scale, seed, out, kinds } => {
            let kinds = parse_kinds(&kinds)?;
            let out = out.unwrap_or_else(|| PathBuf::from(format!("runs/{scale}-{seed}")));
            let report = run_pipeline(&scale.config(), scale, seed, &kinds, &out)?;
            for m in &report.models {
                println!("{:<17} params {:>9}  test MRL2E {:.4}", m.kind.name(), m.params, m.test_mrl2e);
            }
            println!("report: {}", PipelinePaths { root: out }.report().display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
