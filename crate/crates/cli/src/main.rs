use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{CommandFactory, Parser, Subcommand};
use mclip_cli::{run_benchmark, solve_with, write_records, write_summary, Error, Method, NeuralModel, Result, Suite};
use mclip_core::instance::{parse_instance, serialize_instance};
use mclip_core::lp::{export_single_level_lp, RowCounts};
use mclip_core::{ExactCaps, GenSpec, Instance};
use mclip_neural::trainer::{read_curve, train_with, TrainConfig, TrainOptions, CURVE_HEADER};

#[derive(Parser)]
#[command(name = "mclip", version, about = "Maximal covering location under interdiction: solvers, training and benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic instance files.
    Gen {
        /// Scale preset: mclip20, mclip50 or mclip100.
        #[arg(long, default_value = "mclip20")]
        scale: String,
        /// Override the node count of the preset.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        p: Option<usize>,
        #[arg(long)]
        r: Option<usize>,
        #[arg(long)]
        radius: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        count: usize,
        /// Output directory; files are named instance_0000.json, ...
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve one instance file and print its evaluation.
    Solve {
        instance: PathBuf,
        #[arg(long, default_value = "exact")]
        method: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        time_limit: Option<f64>,
        /// Training run directory, for learned methods.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        epoch: Option<usize>,
        #[arg(long, default_value_t = 128)]
        k: usize,
        #[arg(long, default_value_t = 10)]
        e: usize,
        /// Also print the open sites.
        #[arg(long)]
        show_plan: bool,
    },
    /// Train the location and interdiction policies.
    Train {
        #[arg(long, default_value = "toy")]
        preset: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        instances_per_epoch: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Continue from the last complete epoch in `out`.
        #[arg(long)]
        resume: bool,
        /// Run a preset flagged as too large for a single machine.
        #[arg(long)]
        force: bool,
    },
    /// Ensemble inference with a trained pair.
    Infer {
        instance: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        epoch: Option<usize>,
        #[arg(long, default_value_t = 128)]
        k: usize,
        #[arg(long, default_value_t = 10)]
        e: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run a benchmark suite and write per-record and summary CSV files.
    Bench {
        #[arg(long)]
        suite: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Summary CSV; defaults to `<out>` with a `.summary.csv` suffix.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Export the single-level model of an instance in LP format.
    ExportLp {
        instance: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        no_symmetry_breaking: bool,
    },
    /// Re-emit the training curve of a run as CSV.
    Curves {
        run: PathBuf,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_instance(path: &Path) -> Result<Instance> {
    let bytes = fs::read(path).map_err(|e| Error::Usage(format!("{}: {e}", path.display())))?;
    Ok(parse_instance(&bytes)?)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen { scale, n, p, r, radius, seed, count, out } => {
            let mut spec =
                GenSpec::preset(&scale, seed, count).ok_or_else(|| Error::Usage(format!("unknown scale `{scale}`")))?;
            spec.n = n.unwrap_or(spec.n);
            spec.p = p.unwrap_or(spec.p);
            spec.r = r.unwrap_or(spec.r);
            spec.radius = radius.unwrap_or(spec.radius);
            spec.validate()?;
            fs::create_dir_all(&out)?;
            for (i, inst) in spec.generate_all()?.iter().enumerate() {
                fs::write(out.join(format!("instance_{i:04}.json")), serialize_instance(inst))?;
            }
            fs::write(out.join("genspec.json"), serde_json::to_string_pretty(&spec)?)?;
            println!("wrote {count} instances to {}", out.display());
        }
        Command::Solve { instance, method, seed, time_limit, checkpoint, epoch, k, e, show_plan } => {
            let method: Method = method.parse()?;
            let inst = load_instance(&instance)?;
            let model = match (&checkpoint, method.needs_model()) {
                (Some(dir), true) => Some(NeuralModel::load(dir, epoch, k, e)?),
                (None, true) => return Err(Error::Usage(format!("method `{method}` needs --checkpoint"))),
                _ => None,
            };
            let out = solve_with(&inst, method, seed, time_limit, &ExactCaps::default(), model.as_ref())?;
            let ev = out.evaluation;
            println!("pre={} post={} obj={}", ev.pre, ev.post, ev.obj);
            if show_plan {
                println!("open={:?}", out.plan.open_sites());
            }
        }
        Command::Train { preset, out, epochs, instances_per_epoch, lr, seed, resume, force } => {
            let mut cfg = TrainConfig::preset(&preset)?;
            cfg.epochs = epochs.unwrap_or(cfg.epochs);
            cfg.instances_per_epoch = instances_per_epoch.unwrap_or(cfg.instances_per_epoch);
            cfg.lr = lr.unwrap_or(cfg.lr);
            cfg.seed = seed.unwrap_or(cfg.seed);
            if !cfg.desk_runnable() && !force {
                return Err(Error::Usage(format!(
                    "preset `{preset}` is far beyond a single machine; pass --force to run it anyway"
                )));
            }
            let opts = TrainOptions { out_dir: Some(out.clone()), resume, ..TrainOptions::default() };
            let res = train_with(&cfg, &opts)?;
            println!(
                "trained {} epochs; promotions location={} interdiction={}; checkpoints in {}",
                cfg.epochs,
                res.promotions_location,
                res.promotions_interdiction,
                out.display()
            );
        }
        Command::Infer { instance, checkpoint, epoch, k, e, seed } => {
            let inst = load_instance(&instance)?;
            let model = NeuralModel::load(&checkpoint, epoch, k, e)?;
            let out = solve_with(&inst, Method::NeuralEnsemble, seed, None, &ExactCaps::default(), Some(&model))?;
            let ev = out.evaluation;
            println!("pre={} post={} obj={}", ev.pre, ev.post, ev.obj);
            println!("open={:?}", out.plan.open_sites());
        }
        Command::Bench { suite, out, summary } => {
            let suite = Suite::load(&suite)?;
            let res = run_benchmark(&suite)?;
            write_records(fs::File::create(&out)?, &res.records)?;
            let summary = summary.unwrap_or_else(|| out.with_extension("summary.csv"));
            write_summary(fs::File::create(&summary)?, &res.summary)?;
            println!("reference: {}", res.reference.describe());
            for s in &res.summary {
                println!(
                    "{:<16} pre={:.4} post={:.4} obj={:.4} gap={:.2}% time={:.4}s",
                    s.method,
                    s.pre,
                    s.post,
                    s.obj,
                    100.0 * s.gap,
                    s.wall_seconds
                );
            }
        }
        Command::ExportLp { instance, out, no_symmetry_breaking } => {
            let inst = load_instance(&instance)?;
            let model = export_single_level_lp(&inst, !no_symmetry_breaking, &ExactCaps::default())?;
            fs::write(&out, model.to_lp_string())?;
            let c: RowCounts = model.row_counts();
            println!("{c:?}");
        }
        Command::Curves { run, out } => {
            let rows = read_curve(&run.join("curve.csv"))?;
            let mut text = format!("{CURVE_HEADER}\n");
            for r in &rows {
                text.push_str(&r.to_csv_row());
                text.push('\n');
            }
            match out {
                Some(p) => fs::write(p, text)?,
                None => print!("{text}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, Error::Usage(_)) {
                eprintln!("\n{}", Cli::command().render_help());
            }
            ExitCode::from(2)
        }
    }
}
