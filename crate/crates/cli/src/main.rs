use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use sumer::dataset::{read_csv, write_csv, CsvOptions};
use sumer::synth::{gen_two_gaussians, gen_two_moons, GaussianClass, GaussianSpec, MoonsSpec};
use sumer::{run_sweep, Dataset, ExperimentConfig, MetricsTrace};

mod compare;

#[derive(Parser)]
#[command(name = "sumer", version, about = "Self-updating classifiers with label-noise remediation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset as CSV.
    Gen {
        #[command(subcommand)]
        generator: Generator,
    },
    /// Run an experiment config and write its trace.
    Run {
        config: PathBuf,
        /// Output directory (default: the config's `output_dir`, else `runs/<config name>`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Summarize final accuracies of one or more traces.
    Compare {
        #[arg(required = true)]
        traces: Vec<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Validate a dataset CSV and report its shape.
    Ingest {
        csv: PathBuf,
        #[arg(long, default_value = "label")]
        label_column: String,
        /// Also write a normalized copy in the generator format.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Subcommand)]
enum Generator {
    /// Two interleaving half circles.
    TwoMoons {
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 0.1)]
        noise_std: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Two multivariate Gaussian classes.
    TwoGaussians {
        /// Comma-separated mean of class 0, e.g. `-1,0`.
        #[arg(long, allow_hyphen_values = true, value_parser = parse_vector)]
        mean0: Vector,
        #[arg(long, allow_hyphen_values = true, value_parser = parse_vector)]
        mean1: Vector,
        /// Covariance rows separated by `;`, e.g. `1,0;0,1` (default: identity).
        #[arg(long, allow_hyphen_values = true, value_parser = parse_matrix)]
        cov0: Option<Matrix>,
        #[arg(long, allow_hyphen_values = true, value_parser = parse_matrix)]
        cov1: Option<Matrix>,
        #[arg(long, default_value_t = 500)]
        count0: usize,
        #[arg(long, default_value_t = 500)]
        count1: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone)]
struct Vector(Vec<f64>);

#[derive(Debug, Clone)]
struct Matrix(Vec<Vec<f64>>);

fn parse_vector(s: &str) -> Result<Vector, String> {
    s.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| format!("`{v}`: {e}")))
        .collect::<Result<_, _>>()
        .map(Vector)
}

fn parse_matrix(s: &str) -> Result<Matrix, String> {
    s.split(';').map(|row| parse_vector(row).map(|v| v.0)).collect::<Result<_, _>>().map(Matrix)
}

fn identity(d: usize) -> Vec<Vec<f64>> {
    (0..d).map(|i| (0..d).map(|j| f64::from(u8::from(i == j))).collect()).collect()
}

/// Writes `value` as pretty JSON next to a data file.
fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn sidecar(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".json");
    PathBuf::from(name)
}

fn print_summary(data: &Dataset) {
    let s = data.class_summary();
    let counts: Vec<String> = s.provided.iter().enumerate().map(|(c, n)| format!("class{c}: {n}")).collect();
    println!(
        "{} rows, d={}, {}{}",
        s.total,
        data.dim().unwrap_or(0),
        counts.join(", "),
        if s.unlabeled > 0 { format!(", unlabeled: {}", s.unlabeled) } else { String::new() }
    );
}

fn gen(generator: Generator) -> Result<()> {
    let (data, out, provenance) = match generator {
        Generator::TwoMoons { n, noise_std, seed, out } => {
            let spec = MoonsSpec { n, noise_std, seed };
            let data = gen_two_moons(&spec)?;
            let provenance = serde_json::json!({ "generator": "two_moons", "n": n, "noise_std": noise_std, "seed": seed });
            (data, out, provenance)
        }
        Generator::TwoGaussians { mean0: Vector(mean0), mean1: Vector(mean1), cov0, cov1, count0, count1, seed, out } => {
            let spec = GaussianSpec {
                classes: vec![
                    GaussianClass { covariance: cov0.map_or_else(|| identity(mean0.len()), |m| m.0), mean: mean0, count: count0 },
                    GaussianClass { covariance: cov1.map_or_else(|| identity(mean1.len()), |m| m.0), mean: mean1, count: count1 },
                ],
            };
            let data = gen_two_gaussians(&spec, seed)?;
            let provenance = serde_json::json!({ "generator": "two_gaussians", "spec": spec, "seed": seed });
            (data, out, provenance)
        }
    };
    write_csv(&data, &out)?;
    write_json(&sidecar(&out), &provenance)?;
    print_summary(&data);
    Ok(())
}

fn write_trace(dir: &Path, cfg: &ExperimentConfig, trace: &MetricsTrace) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    trace.write_csv(&dir.join("trace.csv"))?;
    std::fs::write(dir.join("trace.json"), trace.to_json()? + "\n")?;
    std::fs::write(dir.join("config.toml"), cfg.to_toml()?)?;
    Ok(())
}

fn run(config: &Path, out: Option<PathBuf>, seed: Option<u64>) -> Result<()> {
    let mut cfg = ExperimentConfig::from_file(config)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let dir = out.or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| {
        let stem = config.file_stem().map_or("run".into(), |s| s.to_string_lossy().into_owned());
        Path::new("runs").join(stem)
    });
    let points = run_sweep(&cfg).context("running experiment")?;
    let swept = cfg.sweep.is_some();
    for (fraction, trace) in &points {
        let (target, point_cfg) = if swept {
            (dir.join(format!("fraction-{fraction}")), cfg.at_labeled_fraction(*fraction))
        } else {
            (dir.clone(), cfg.clone())
        };
        write_trace(&target, &point_cfg, trace)?;
        if swept {
            println!("labeled fraction {fraction}:");
        }
        print!("{}", compare::table(&[compare::summarize(&target.join("trace.csv"), trace)]));
    }
    println!("wrote {}", dir.display());
    Ok(())
}

fn ingest(csv: &Path, label_column: String, out: Option<PathBuf>, json: bool) -> Result<()> {
    let data = read_csv(csv, &CsvOptions { label_column, num_classes: None })?;
    if json {
        let summary = serde_json::json!({
            "rows": data.len(),
            "dim": data.dim(),
            "classes": data.class_summary().provided,
            "unlabeled": data.class_summary().unlabeled,
        });
        println!("{}", serde_json::to_string_pretty(&summary)?);
    } else {
        print_summary(&data);
    }
    if let Some(out) = out {
        write_csv(&data, &out)?;
    }
    Ok(())
}

/// The error chain, skipping causes already spelled out by their parent.
fn describe(err: &anyhow::Error) -> String {
    let mut out = err.to_string();
    for cause in err.chain().skip(1) {
        let text = cause.to_string();
        if !out.contains(&text) {
            out = format!("{out}: {text}");
        }
    }
    out
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<sumer::Error>() {
        Some(e) if e.is_validation() => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen { generator } => gen(generator),
        Command::Run { config, out, seed } => run(&config, out, seed),
        Command::Compare { traces, json } => compare::run(&traces, json),
        Command::Ingest { csv, label_column, out, json } => ingest(&csv, label_column, out, json),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", describe(&err));
            ExitCode::from(exit_code(&err))
        }
    }
}
