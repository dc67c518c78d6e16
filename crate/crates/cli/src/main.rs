//! Command-line front end for the MILP graph laboratory: dataset
//! generation, exact labeling, foldability analysis, canonical ordering,
//! single training runs, and full experiment sweeps with reports.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use milpgnn::canon::sort_graph;
use milpgnn::experiment::{
    prepare_dataset, report, results_from_csv, results_to_csv, run_experiment, write_dataset,
    ExperimentSpec, Targets,
};
use milpgnn::gen::{gen_counterexample, gen_dataset, GenConfig, Variant};
use milpgnn::gnn::{GnnModel, Readout};
use milpgnn::graph::encode_graph;
use milpgnn::io;
use milpgnn::train::{train_graph, train_nodes, EpochLog, Standardizer, Task, TrainConfig};
use milpgnn::wl::{is_foldable, refine_colors};
use milpgnn::MilpGraph;

#[derive(Parser)]
#[command(name = "milpgnn", about = "MILP bipartite-graph laboratory", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset and write instances plus a manifest.
    Gen {
        /// Dataset family: d1, d2, d2gen, or counterexample.
        #[arg(long)]
        variant: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of instances (must be even for the paired families).
        #[arg(long, default_value_t = 100)]
        count: usize,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve every instance in a manifest and write one label file each.
    Label {
        /// Dataset manifest path.
        #[arg(long)]
        manifest: PathBuf,
        /// Output directory for label files.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run color refinement on one instance and report foldability.
    Analyze {
        /// Instance file.
        #[arg(long)]
        input: PathBuf,
        /// Write the per-round coloring as CSV (round, side, index, color).
        #[arg(long)]
        dump_colors: Option<PathBuf>,
    },
    /// Print the canonical variable order of one unfoldable instance.
    Canon {
        /// Instance file.
        #[arg(long)]
        input: PathBuf,
    },
    /// Train one model on a labeled dataset and write a checkpoint.
    Train {
        /// Dataset manifest path.
        #[arg(long)]
        manifest: PathBuf,
        /// Task: feas, obj, or solu.
        #[arg(long)]
        task: String,
        /// Embedding size.
        #[arg(long, default_value_t = 16)]
        d: usize,
        /// Model initialization seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        epochs: usize,
        #[arg(long, default_value_t = 32)]
        batch_size: usize,
        #[arg(long, default_value_t = 1e-4)]
        learning_rate: f64,
        /// Append one shared random feature vector to every instance.
        #[arg(long)]
        random_features: bool,
        /// Seed for the shared random feature vector.
        #[arg(long, default_value_t = 0)]
        rf_seed: u64,
        /// Number of leading usable instances to train on (default: all).
        #[arg(long)]
        train_size: Option<usize>,
        /// Checkpoint output path.
        #[arg(long)]
        out: PathBuf,
        /// Training-log CSV output path (epoch, loss, task_error, wall_ms).
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Run a full experiment sweep from a spec file and write results CSV.
    Experiment {
        /// Experiment spec file (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Results CSV output path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Aggregate a results CSV over seeds and emit plot-ready data.
    Report {
        /// Results CSV from `experiment`.
        #[arg(long)]
        input: PathBuf,
        /// Plot-data CSV output path (median over seeds per sweep cell).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Gen {
            variant,
            seed,
            count,
            out,
        } => cmd_gen(&variant, seed, count, &out),
        Command::Label { manifest, out } => cmd_label(&manifest, &out),
        Command::Analyze { input, dump_colors } => cmd_analyze(&input, dump_colors.as_deref()),
        Command::Canon { input } => cmd_canon(&input),
        Command::Train {
            manifest,
            task,
            d,
            seed,
            epochs,
            batch_size,
            learning_rate,
            random_features,
            rf_seed,
            train_size,
            out,
            log,
        } => cmd_train(
            &manifest,
            &task,
            d,
            seed,
            epochs,
            batch_size,
            learning_rate,
            random_features,
            rf_seed,
            train_size,
            &out,
            log.as_deref(),
        ),
        Command::Experiment { config, out } => cmd_experiment(&config, &out),
        Command::Report { input, out } => cmd_report(&input, out.as_deref()),
    }
}

fn cmd_gen(variant: &str, seed: u64, count: usize, out: &Path) -> Result<()> {
    let variant = Variant::parse(variant)
        .with_context(|| format!("unknown variant `{variant}` (d1, d2, d2gen, counterexample)"))?;
    let instances = if variant == Variant::Counterexample {
        let (g, h) = gen_counterexample();
        vec![g, h]
    } else {
        gen_dataset(&GenConfig::new(variant, seed, count))?
    };
    let manifest = write_dataset(out, variant.as_str(), seed, &instances)?;
    println!(
        "wrote {} {} instances; manifest {}",
        instances.len(),
        variant.as_str(),
        manifest.display()
    );
    Ok(())
}

fn cmd_label(manifest: &Path, out: &Path) -> Result<()> {
    let m = io::read_manifest(manifest)?;
    let instances = io::read_manifest_instances(manifest)?;
    fs::create_dir_all(out)?;
    let mut feasible = 0usize;
    for (file, inst) in m.files.iter().zip(&instances) {
        let label = milpgnn::solve_milp(inst)
            .with_context(|| format!("labeling {file}"))?;
        feasible += usize::from(label.feasible);
        let name = format!("label_{}", file);
        io::write_label(&out.join(name), &label)?;
    }
    println!(
        "labeled {} instances: {} feasible, {} infeasible",
        instances.len(),
        feasible,
        instances.len() - feasible
    );
    Ok(())
}

fn cmd_analyze(input: &Path, dump_colors: Option<&Path>) -> Result<()> {
    let inst = io::read_instance(input)?;
    let g = encode_graph(&inst);
    let budget = g.num_constraints() + g.num_variables();
    let res = refine_colors(&g, budget);
    println!("rounds: {}", res.rounds);
    println!(
        "constraint blocks: {} of {}",
        res.v_partition.len(),
        g.num_constraints()
    );
    println!(
        "variable blocks: {} of {}",
        res.w_partition.len(),
        g.num_variables()
    );
    println!("discrete: {}", res.is_discrete);
    println!("foldable: {}", is_foldable(&g));
    if let Some(path) = dump_colors {
        let mut csv = String::from("round,side,index,color\n");
        for (round, (v, w)) in res.history.iter().enumerate() {
            for (i, c) in v.iter().enumerate() {
                let _ = writeln!(csv, "{round},V,{i},{c}");
            }
            for (j, c) in w.iter().enumerate() {
                let _ = writeln!(csv, "{round},W,{j},{c}");
            }
        }
        fs::write(path, csv)?;
        println!("colors written to {}", path.display());
    }
    Ok(())
}

fn cmd_canon(input: &Path) -> Result<()> {
    let inst = io::read_instance(input)?;
    let g = encode_graph(&inst);
    let order = sort_graph(&g).context("canonical order needs an unfoldable instance")?;
    println!("{:?}", order.sigma_w);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_train(
    manifest: &Path,
    task: &str,
    d: usize,
    seed: u64,
    epochs: usize,
    batch_size: usize,
    learning_rate: f64,
    random_features: bool,
    rf_seed: u64,
    train_size: Option<usize>,
    out: &Path,
    log_path: Option<&Path>,
) -> Result<()> {
    let task = Task::parse(task)
        .with_context(|| format!("unknown task `{task}` (feas, obj, solu)"))?;
    let instances = io::read_manifest_instances(manifest)?;
    let (graphs, targets) = prepare_dataset(task, &instances, random_features, rf_seed)?;
    let size = train_size.unwrap_or(graphs.len());
    if size > graphs.len() {
        bail!(
            "train size {size} exceeds the {} usable instances",
            graphs.len()
        );
    }
    let readout = match task {
        Task::Solu => Readout::Node,
        _ => Readout::Graph,
    };
    let mut model = GnnModel::new(d, readout, random_features, seed);
    let cfg = TrainConfig {
        task,
        learning_rate,
        epochs,
        batch_size,
        target_error: None,
    };
    let log = match targets {
        Targets::Graph(ys) => {
            let ys = if task == Task::Obj {
                let std = Standardizer::fit(&ys[..size]);
                ys.iter().map(|&y| std.apply(y)).collect()
            } else {
                ys
            };
            let data: Vec<(&MilpGraph, f64)> = graphs[..size]
                .iter()
                .zip(&ys[..size])
                .map(|(g, &y)| (g, y))
                .collect();
            train_graph(&mut model, &data, &cfg)?
        }
        Targets::Nodes(ys) => {
            let data: Vec<(&MilpGraph, Vec<f64>)> = graphs[..size]
                .iter()
                .zip(&ys[..size])
                .map(|(g, y)| (g, y.clone()))
                .collect();
            train_nodes(&mut model, &data, &cfg)?
        }
    };
    io::write_checkpoint(out, &model, seed)?;
    if let Some(path) = log_path {
        fs::write(path, training_log_csv(&log))?;
    }
    let last = log.last().context("training produced no epochs")?;
    println!(
        "trained {} epochs on {} instances: loss={} task_error={} checkpoint {}",
        log.len(),
        size,
        last.loss,
        last.task_error,
        out.display()
    );
    Ok(())
}

fn training_log_csv(log: &[EpochLog]) -> String {
    let mut csv = String::from("epoch,loss,task_error,wall_ms\n");
    for e in log {
        let _ = writeln!(csv, "{},{},{},{}", e.epoch, e.loss, e.task_error, e.wall_ms);
    }
    csv
}

fn cmd_experiment(config: &Path, out: &Path) -> Result<()> {
    let text = fs::read_to_string(config)
        .with_context(|| format!("reading spec {}", config.display()))?;
    let spec: ExperimentSpec = serde_json::from_str(&text).context("parsing experiment spec")?;
    let rows = run_experiment(&spec)?;
    fs::write(out, results_to_csv(&rows))?;
    println!("{} result rows written to {}", rows.len(), out.display());
    Ok(())
}

fn cmd_report(input: &Path, out: Option<&Path>) -> Result<()> {
    let text = fs::read_to_string(input)?;
    let rows = results_from_csv(&text)?;
    let (summary, csv) = report(&rows)?;
    print!("{summary}");
    if let Some(path) = out {
        fs::write(path, csv)?;
        println!("plot data written to {}", path.display());
    }
    Ok(())
}
