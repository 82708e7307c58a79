use clap::{Args, Parser, Subcommand};
use critlink::ingest::RepairPolicy;
use critlink::report::{
    cmd_export_geojson, cmd_generate, cmd_ingest, cmd_ksweep, cmd_solve, cmd_sweep, CliError,
    ExitCode, RunConfig, SyntheticSpec,
};
use critlink::solver::Method;
use std::path::PathBuf;

/// Find the links whose disruption most increases network-wide travel
/// delay, snapshot by snapshot.
#[derive(Parser, Debug)]
#[command(name = "critlink", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse, validate and repair an observation table into reusable artifacts.
    Ingest(Common),
    /// Solve the critical-set problem at a single time step.
    Solve(Common),
    /// Solve every time step and write the temporal analysis.
    Sweep(Common),
    /// Solve for each k in a list and check nesting of the sets.
    Ksweep(Common),
    /// Convert a frequency or critical-set CSV into GeoJSON.
    ExportGeojson {
        /// frequency.csv, top_links.csv, critical_sets.csv or critical_set_t*.csv
        table: PathBuf,
        /// Destination file (defaults to <out-dir>/<table stem>.geojson).
        #[arg(long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Write a synthetic observation table.
    Generate(Common),
}

#[derive(Args, Debug, Default)]
struct Common {
    /// Observation CSV or a directory produced by `ingest`.
    #[arg(long)]
    input: Option<PathBuf>,
    /// JSON run configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Disrupted travel-time multiplier (> 1).
    #[arg(long)]
    gamma: Option<f64>,
    /// Critical-set size.
    #[arg(long)]
    k: Option<usize>,
    /// Comma-separated k values for `ksweep`.
    #[arg(long, value_delimiter = ',')]
    k_list: Option<Vec<usize>>,
    /// brute, topk, anneal-swap or anneal-penalty.
    #[arg(long)]
    method: Option<Method>,
    #[arg(long)]
    sweeps: Option<usize>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    initial_temperature: Option<f64>,
    #[arg(long)]
    final_temperature: Option<f64>,
    /// Penalty weight multiplier.
    #[arg(long)]
    safety_factor: Option<f64>,
    /// Comma-separated percentiles for high-risk windows.
    #[arg(long, value_delimiter = ',')]
    percentiles: Option<Vec<f64>>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 uses every core).
    #[arg(long)]
    workers: Option<usize>,
    /// Time step for `solve`; restricts `ksweep` to one step.
    #[arg(long)]
    time_step: Option<u32>,
    /// strict, forward-fill or link-median.
    #[arg(long)]
    repair_policy: Option<RepairPolicy>,
    /// Rows in top_links.csv.
    #[arg(long)]
    top_m: Option<usize>,
    /// Skip SVG plots.
    #[arg(long)]
    no_plots: bool,
    /// Synthetic network node count (with --links and --steps).
    #[arg(long, requires_all = ["links", "steps"])]
    nodes: Option<usize>,
    #[arg(long, requires_all = ["nodes", "steps"])]
    links: Option<usize>,
    #[arg(long, requires_all = ["nodes", "links"])]
    steps: Option<usize>,
}

impl Common {
    fn resolve(self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_json_file(path)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = self.$field {
                    cfg.$field = v;
                }
            )*};
        }
        macro_rules! set_opt {
            ($($field:ident),*) => {$(
                if self.$field.is_some() {
                    cfg.$field = self.$field;
                }
            )*};
        }
        set!(
            out_dir,
            gamma,
            k,
            k_list,
            method,
            safety_factor,
            percentiles,
            seed,
            workers
        );
        set!(repair_policy, top_m);
        set_opt!(
            sweeps,
            restarts,
            initial_temperature,
            final_temperature,
            time_step
        );
        if self.input.is_some() {
            cfg.input = self.input;
        }
        if let (Some(nodes), Some(links), Some(steps)) = (self.nodes, self.links, self.steps) {
            cfg.synthetic = Some(SyntheticSpec {
                nodes,
                links,
                steps,
            });
            cfg.input = None;
        }
        if self.no_plots {
            cfg.plots = false;
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.command {
        Command::Ingest(c) => {
            let cfg = c.resolve()?;
            cmd_ingest(&cfg)?;
            println!("artifacts written to {}", cfg.out_dir.display());
        }
        Command::Solve(c) => {
            let cfg = c.resolve()?;
            cmd_solve(&cfg)?;
            println!("solution written to {}", cfg.out_dir.display());
        }
        Command::Sweep(c) => {
            let cfg = c.resolve()?;
            let outcome = cmd_sweep(&cfg)?;
            println!(
                "{} of {} steps solved; bundle written to {}",
                outcome.horizon.steps.len(),
                outcome.horizon.steps.len() + outcome.failures.len(),
                cfg.out_dir.display()
            );
            if outcome.is_partial() {
                for f in &outcome.failures {
                    eprintln!("step {} failed: {}", f.time_step, f.error);
                }
                return Ok(ExitCode::PartialFailure);
            }
        }
        Command::Ksweep(c) => {
            let cfg = c.resolve()?;
            let (_, result) = cmd_ksweep(&cfg)?;
            println!(
                "k sweep over {:?}: nested={} monotone={}; written to {}",
                result.k_list,
                result.all_nested(),
                result.ndi_monotone(),
                cfg.out_dir.display()
            );
        }
        Command::ExportGeojson {
            table,
            output,
            common,
        } => {
            let cfg = common.resolve()?;
            let path = cmd_export_geojson(&cfg, &table, output.as_deref())?;
            println!("{}", path.display());
        }
        Command::Generate(c) => {
            let cfg = c.resolve()?;
            cmd_generate(&cfg)?;
            println!(
                "observations written to {}",
                cfg.out_dir.join("observations.csv").display()
            );
        }
    }
    Ok(ExitCode::Success)
}

fn main() -> std::process::ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(e) => {
            let mut msg = format!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                let text = s.to_string();
                if !msg.contains(&text) {
                    msg.push_str(&format!("\n  caused by: {text}"));
                }
                source = s.source();
            }
            eprintln!("{msg}");
            e.exit_code()
        }
    };
    std::process::ExitCode::from(code as u8)
}
