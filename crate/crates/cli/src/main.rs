use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use deskcsi::commands::{self, PlotKind, TraceInputs};
use deskcsi::config::PipelineConfig;
use deskcsi::Result;

/// Desk-scale WiFi CSI sensing: simulation, segmentation, gesture and
/// behavior recognition.
#[derive(Parser, Debug)]
#[command(name = "deskcsi", version)]
struct Cli {
    /// TOML configuration file; defaults apply to anything it omits.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Derive every stage seed from this value.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a scripted desk session into trace.csv and trace.ann.
    Simulate {
        /// Gesture script file.
        #[arg(long, conflicts_with = "burst", required_unless_present = "burst")]
        script: Option<PathBuf>,
        /// Evenly spaced keystrokes instead of a script.
        #[arg(long)]
        burst: Option<usize>,
        /// Quiet time between burst keystrokes, seconds.
        #[arg(long, default_value_t = 0.6, requires = "burst")]
        gap: f64,
    },
    /// Select, filter and segment a trace.
    Segment { trace: PathBuf },
    /// Extract segment features; a simulated labeled corpus when no trace is given.
    Featurize {
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Cross-validate and fit the configured gesture classifier.
    TrainGesture { dataset: PathBuf },
    /// Fit one HMM per behavior.
    TrainBehavior {
        /// cv.json whose confusion counts give the emission matrix.
        #[arg(long)]
        cv: Option<PathBuf>,
        /// Directory of <behavior>*.txt training sequences.
        #[arg(long)]
        sequences: Option<PathBuf>,
    },
    /// Classify behavior sequences with trained models.
    Evaluate {
        models: PathBuf,
        /// Directory of <behavior>*.txt test sequences.
        #[arg(long)]
        sequences: Option<PathBuf>,
    },
    /// Peak-to-peak amplitude against plate side length.
    SweepPlate,
    /// Plot-ready tables: segmentation, filter or subcarriers.
    Plotdata { kind: String, input: Option<PathBuf> },
    /// Run every stage and write report.json.
    Pipeline {
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        behavior_models: Option<PathBuf>,
    },
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.reseed(seed);
    }
    Ok(cfg)
}

fn say(path: &Path) {
    println!("wrote {}", path.display());
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    let out = cli.out.as_path();
    match cli.command {
        Command::Simulate { script, burst, gap } => {
            let path = match (script, burst) {
                (Some(s), _) => commands::cmd_simulate(&cfg, &s, out)?,
                (None, Some(n)) => commands::simulate_script(&cfg, &commands::burst_script(&cfg, n, gap), out)?,
                (None, None) => unreachable!("clap requires one of --script and --burst"),
            };
            say(&path);
        }
        Command::Segment { trace } => {
            let (p, score) = commands::cmd_segment(&cfg, &trace, out)?;
            println!(
                "subcarrier {}: {} segments",
                p.selected.source_subcarrier,
                p.segmentation.segments.len()
            );
            if let Some(s) = score {
                println!("recall {:.3} precision {:.3}", s.recall(), s.precision());
            }
        }
        Command::Featurize { trace } => {
            let rows = commands::cmd_featurize(&cfg, trace.as_deref(), out)?;
            println!("{} feature rows", rows.len());
        }
        Command::TrainGesture { dataset } => {
            let (cv, _) = commands::cmd_train_gesture(&cfg, &dataset, out)?;
            println!("{} cross-validated accuracy {:.4}", cv.kind, cv.mean_accuracy);
        }
        Command::TrainBehavior { cv, sequences } => {
            let models = commands::cmd_train_behavior(&cfg, cv.as_deref(), sequences.as_deref(), out)?;
            println!("{} behavior models", models.len());
        }
        Command::Evaluate { models, sequences } => {
            let c = commands::cmd_evaluate(&cfg, &models, sequences.as_deref(), out)?;
            print!("{}", c.table());
        }
        Command::SweepPlate => {
            for (side, p2p) in commands::cmd_sweep_plate(&cfg, out)? {
                println!("{side:.3}\t{p2p:.6}");
            }
        }
        Command::Plotdata { kind, input } => {
            let kind: PlotKind = kind.parse()?;
            for p in commands::cmd_plotdata(&cfg, kind, input.as_deref(), out)? {
                say(&p);
            }
        }
        Command::Pipeline { trace, model, behavior_models } => {
            let inputs =
                TraceInputs { trace: trace.as_deref(), model: model.as_deref(), behavior_models: behavior_models.as_deref() };
            let (report, timings) = commands::cmd_pipeline(&cfg, &inputs, out)?;
            if let Some(s) = &report.segmentation {
                println!("segmentation: recall {:.3} precision {:.3} max error {:.3} s", s.recall, s.precision, s.max_boundary_error_s);
            }
            if let Some(b) = &report.burst {
                println!("burst: {} keystrokes, {} segments", b.keystrokes, b.segments);
            }
            if let Some(g) = &report.gesture {
                for cv in &g.cross_validation {
                    println!("gesture {}: {:.4}", cv.kind, cv.mean_accuracy);
                }
            }
            if let Some(b) = &report.behavior {
                print!("{}", b.confusion.table());
            }
            if let Some(t) = &report.trace {
                println!("{} segments, predictions {:?}", t.segments.len(), t.predictions);
                if let Some(d) = &t.behavior {
                    println!("behavior: {:?}", d.behavior);
                }
            }
            for (stage, secs) in &timings.stages {
                println!("{stage}: {secs:.2} s");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
