use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use wfdem_core::pipeline::{self, ClusterCount, PlotKind, RunConfig, Stage};
use wfdem_core::powerflow::{describe, solve_powerflow};
use wfdem_core::synth::{case_farm, Case};
use wfdem_core::validation::{DEFAULT_DT, DEFAULT_HORIZON, DEFAULT_SAG};
use wfdem_core::wt::StateKind;

#[derive(Parser)]
#[command(name = "wfdem", version, about = "Wind-farm dynamic equivalents by mode clustering")]
struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the power flow and write buses.csv.
    Flow(RunArgs),
    /// Linearize the farm, compute modes and participation factors.
    Modes(RunArgs),
    /// Cluster the concern modes and group the turbines.
    Cluster(RunArgs),
    /// Build the dynamic equivalent model.
    Aggregate(RunArgs),
    /// Build the DEM and validate it against the detailed model.
    Validate(RunArgs),
    /// Every stage, same as `validate`.
    All(RunArgs),
    /// Print a summary of a finished run directory.
    Report {
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Re-render one figure from the artifacts of a run directory.
    Plot {
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// scatter, features or responses
        #[arg(long)]
        kind: String,
    },
    /// Write the synthesized test farms as JSON.
    Synth {
        /// Directory for the farm files.
        #[arg(long, default_value = "farms")]
        out: PathBuf,
        /// Only this case (case_a, case_b, case_c, case_d, zero_impedance).
        #[arg(long)]
        case: Option<String>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    farm: PathBuf,
    /// Number of mode clusters C.
    #[arg(long, default_value_t = 1, conflicts_with = "auto_clusters")]
    clusters: usize,
    /// Pick the smallest C whose modal error meets --e-target.
    #[arg(long)]
    auto_clusters: bool,
    /// Target for --auto-clusters, as a fraction.
    #[arg(long, default_value_t = pipeline::DEFAULT_E_TARGET, requires = "auto_clusters")]
    e_target: f64,
    #[arg(long, default_value_t = pipeline::DEFAULT_SEED)]
    seed: u64,
    /// Grid-voltage sag depth as a fraction.
    #[arg(long, default_value_t = DEFAULT_SAG)]
    sag: f64,
    #[arg(long, default_value_t = DEFAULT_HORIZON)]
    horizon: f64,
    #[arg(long, default_value_t = DEFAULT_DT)]
    dt: f64,
    /// Concern-state filter, comma separated (u_dc, x_dvc, delta, x_pll).
    #[arg(long, value_delimiter = ',', default_value = "u_dc")]
    states: Vec<StateKind>,
    /// Merge threshold for turbine grouping.
    #[arg(long, default_value_t = wfdem_core::clustering::DEFAULT_MERGE_TAU)]
    tau: f64,
    /// Scale both axes to unit variance before k-means.
    #[arg(long)]
    normalize: bool,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl RunArgs {
    fn config(&self) -> Result<RunConfig> {
        if !self.auto_clusters && self.clusters == 0 {
            bail!("--clusters must be at least 1");
        }
        let mut cfg = RunConfig::new(&self.farm, &self.out);
        cfg.clusters = if self.auto_clusters {
            ClusterCount::Auto { e_target: self.e_target }
        } else {
            ClusterCount::Fixed(self.clusters)
        };
        cfg.seed = self.seed;
        cfg.sag = self.sag;
        cfg.horizon = self.horizon;
        cfg.dt = self.dt;
        cfg.filter = self.states.clone();
        cfg.tau = self.tau;
        cfg.normalize = self.normalize;
        Ok(cfg)
    }
}

fn run_stage(args: &RunArgs, until: Stage) -> Result<()> {
    let cfg = args.config()?;
    let run = pipeline::run_pipeline(&cfg, until)?;
    match until {
        Stage::Flow => {
            let sol = solve_powerflow(&run.farm)?;
            describe(&sol, &mut std::io::stdout())?;
        }
        Stage::Modes => {
            let concern = run.concern.as_ref().expect("modes stage ran");
            println!("{} concern modes", concern.len());
            for l in &concern.eigenvalues {
                println!("  {:>10.4} {:+10.4}j", l.re, l.im);
            }
        }
        Stage::Group | Stage::Cluster => {
            let g = run.groups.as_ref().expect("grouping ran");
            for k in 0..g.n_groups {
                println!("group {}: {}", k + 1, g.member_ids(k).join(" "));
            }
        }
        Stage::Aggregate => {
            let dem = run.dem.as_ref().expect("aggregation ran");
            println!("DEM with {} aggregate turbines", dem.farm.wts.len());
        }
        _ => print!("{}", pipeline::emit_report(&cfg.out)?),
    }
    eprintln!("artifacts in {}", cfg.out.display());
    Ok(())
}

fn synth(out: &PathBuf, case: Option<&str>) -> Result<()> {
    let cases = match case {
        Some(c) => vec![c.parse::<Case>().map_err(anyhow::Error::msg)?],
        None => Case::ALL.to_vec(),
    };
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    for c in cases {
        let path = out.join(format!("{}.json", c.name()));
        std::fs::write(&path, case_farm(c).to_json_pretty()).with_context(|| format!("writing {}", path.display()))?;
        println!("{}", path.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Flow(a) => run_stage(a, Stage::Flow),
        Command::Modes(a) => run_stage(a, Stage::Modes),
        Command::Cluster(a) => run_stage(a, Stage::Group),
        Command::Aggregate(a) => run_stage(a, Stage::Aggregate),
        Command::Validate(a) | Command::All(a) => run_stage(a, Stage::Validate),
        Command::Report { out } => {
            print!("{}", pipeline::emit_report(out)?);
            Ok(())
        }
        Command::Plot { out, kind } => {
            let kind: PlotKind = kind.parse()?;
            let path = pipeline::emit_plot(out, kind)?;
            println!("{}", path.display());
            Ok(())
        }
        Command::Synth { out, case } => synth(out, case.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
