use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use finopt_core::runner::{
    env_overrides, run_baseline, run_calibrate, run_evaluate, run_optimize, run_plot, run_resume, EvaluateInput,
    RunConfig, RunError, RunOptions,
};

#[derive(Parser)]
#[command(name = "finopt", version, about = "Heat-sink fin shape optimisation")]
struct Cli {
    /// Run configuration (TOML). Built-in defaults are used when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Random seed, overriding the configuration.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Worker threads for parallel evaluations (0 = all cores).
    #[arg(long, global = true, value_name = "N", default_value_t = 0)]
    workers: usize,
    /// Output directory, overriding the configuration.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Checkpoint file to write (optimize) or read (resume).
    #[arg(long, global = true, value_name = "PATH")]
    checkpoint: Option<PathBuf>,
    /// Write SVG plots.
    #[arg(long, global = true, value_name = "on|off")]
    svg: Option<Toggle>,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Toggle {
    On,
    Off,
}

#[derive(Subcommand)]
enum Command {
    /// Run a CMA-ES shape optimisation campaign.
    Optimize {
        /// Stop after this many generations as if interrupted.
        #[arg(long, hide = true)]
        stop_after: Option<usize>,
    },
    /// Simulate a single design and export its fields.
    Evaluate {
        /// Geometry file with cubic Bézier fin contours.
        #[arg(long, group = "design", value_name = "PATH")]
        geometry: Option<PathBuf>,
        /// Decision vector: comma-separated values, or a file holding them.
        #[arg(long, group = "design", value_name = "VALUES|PATH")]
        vector: Option<String>,
        /// Two rectangular reference fins.
        #[arg(long, group = "design")]
        twin_rectangles: bool,
    },
    /// Find the thinnest straight fins meeting each temperature limit.
    Baseline,
    /// Average heat-transfer coefficients from calibration samples.
    Calibrate {
        /// CSV with columns region, q_dot_W, area_m2, T_surf_K, T_bulk_K.
        samples: PathBuf,
        /// Also write the coefficients as a TOML fragment here.
        #[arg(long, value_name = "PATH")]
        write: Option<PathBuf>,
    },
    /// Continue an optimisation campaign from its checkpoint.
    Resume {
        #[arg(long, hide = true)]
        stop_after: Option<usize>,
    },
    /// Regenerate plots from the CSV artifacts of an output directory.
    Plot {
        /// Output directory; defaults to --out or the configured one.
        dir: Option<PathBuf>,
    },
}

fn load_config(cli: &Cli) -> Result<RunConfig, RunError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::from_toml("", &env_overrides())?,
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    Ok(cfg)
}

fn options(cli: &Cli, stop_after: Option<usize>) -> RunOptions {
    RunOptions {
        workers: cli.workers,
        checkpoint: cli.checkpoint.clone(),
        svg: cli.svg.map(|t| matches!(t, Toggle::On)),
        out_dir: cli.out.clone(),
        stop_after,
    }
}

fn parse_vector(arg: &str) -> Result<Vec<f64>, RunError> {
    let path = Path::new(arg);
    let text = if path.is_file() {
        std::fs::read_to_string(path).map_err(|e| RunError::io(path, e))?
    } else {
        arg.to_string()
    };
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| RunError::config(format!("`{t}` is not a number")))
        })
        .collect()
}

fn run(cli: &Cli) -> Result<(), RunError> {
    match &cli.command {
        Command::Optimize { stop_after } => {
            let cfg = load_config(cli)?;
            let s = run_optimize(&cfg, &options(cli, *stop_after))?;
            println!("generations: {}", s.generations);
            println!("evaluations: {}", s.evaluations);
            match s.termination {
                Some(t) => println!("termination: {t:?}"),
                None => println!("stopped early; resume from the checkpoint"),
            }
            if let Some(b) = &s.best {
                println!("best J: {} Pa (generation {})", b.cost.j, b.generation);
                if let Some(r) = &b.result {
                    println!("dp_loss: {} Pa", r.dp_loss);
                    println!("T_avg_bp: {} K", r.t_avg_bp);
                }
            }
            match s.best_feasible.as_ref().and_then(|b| b.result.as_ref()) {
                Some(r) => println!("best feasible dp_loss: {} Pa (T_avg_bp {} K)", r.dp_loss, r.t_avg_bp),
                None => println!("no feasible design found"),
            }
            println!("output: {}", s.out_dir.display());
        }
        Command::Evaluate {
            geometry,
            vector,
            twin_rectangles,
        } => {
            let cfg = load_config(cli)?;
            let input = if let Some(p) = geometry {
                EvaluateInput::Geometry(std::fs::read_to_string(p).map_err(|e| RunError::io(p, e))?)
            } else if let Some(v) = vector {
                EvaluateInput::Vector(parse_vector(v)?)
            } else if *twin_rectangles {
                EvaluateInput::TwinRectangles
            } else {
                return Err(RunError::config(
                    "evaluate needs --geometry, --vector or --twin-rectangles",
                ));
            };
            let r = run_evaluate(&cfg, &input, &options(cli, None)).map_err(|e| match (e, geometry) {
                (RunError::Config { line, message }, Some(p)) => RunError::Config {
                    line,
                    message: format!("{}: {message}", p.display()),
                },
                (e, _) => e,
            })?;
            println!("dp_loss: {} Pa", r.result.dp_loss);
            println!("T_avg_bp: {} K", r.result.t_avg_bp);
            println!("J: {} Pa", r.cost.j);
            println!("energy_closure: {:e}", r.result.energy_closure);
            println!("wall_time: {:.3} s", r.result.wall_time);
        }
        Command::Baseline => {
            let cfg = load_config(cli)?;
            let rows = run_baseline(&cfg, &options(cli, None))?;
            println!(
                "{:>8}  {:>12}  {:>10}  {:>10}  {:>9}",
                "T_cons", "status", "w [mm]", "dp_SF [Pa]", "T [K]"
            );
            let opt = |v: Option<f64>, scale: f64| v.map_or("-".to_string(), |v| format!("{:.4}", v * scale));
            for r in &rows {
                println!(
                    "{:>8}  {:>12}  {:>10}  {:>10}  {:>9}",
                    r.t_cons,
                    format!("{:?}", r.status),
                    opt(r.width, 1e3),
                    opt(r.dp_sf, 1.0),
                    opt(r.t_avg_bp, 1.0)
                );
            }
        }
        Command::Calibrate { samples, write } => {
            let c = run_calibrate(samples, write.as_deref())?;
            println!("h_f: {} W/(m^2 K)", c.h_f);
            println!("h_s: {} W/(m^2 K)", c.h_s);
        }
        Command::Resume { stop_after } => {
            let checkpoint = cli
                .checkpoint
                .clone()
                .ok_or_else(|| RunError::config("resume needs --checkpoint PATH"))?;
            let mut opts = options(cli, *stop_after);
            opts.checkpoint = Some(checkpoint.clone());
            let s = run_resume(&checkpoint, &opts)?;
            println!("generations: {}", s.generations);
            if let Some(b) = &s.best {
                println!("best J: {} Pa (generation {})", b.cost.j, b.generation);
            }
        }
        Command::Plot { dir } => {
            let dir = match (dir, &cli.out) {
                (Some(d), _) | (None, Some(d)) => d.clone(),
                (None, None) => load_config(cli)?.output.dir,
            };
            for p in run_plot(&dir)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
