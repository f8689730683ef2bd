use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use spacetime_core::access::ModePolicy;
use spacetime_core::ingest::parse_gtfs_time;
use spacetime_core::pathmodel::{decompose_effects, Dataset, Regression, EXPOSURE_VAR, MEDIATOR_VAR, OUTCOME_VAR};
use spacetime_core::pipeline::{self as pl, PipelineError, RunConfig};
use spacetime_core::router::NetworkMode;
use spacetime_core::synth::{SynthSpec, World};

#[derive(Parser)]
#[command(name = "spacetime", version, about = "Space-time accessibility to leisure opportunities")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Run configuration (TOML); defaults apply to every missing key.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Input directory, when no config names one.
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed for every random stage
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Travel-time budget in minutes.
    #[arg(long, global = true)]
    tb_min: Option<f64>,
    /// Departure time, HH:MM or HH:MM:SS.
    #[arg(long, global = true, value_parser = parse_clock)]
    depart: Option<u32>,
    /// person_main_mode, force_car or force_transit
    #[arg(long, global = true, value_parser = parse_policy)]
    mode_policy: Option<ModePolicy>,
    /// Null draws per selectivity test.
    #[arg(long, global = true)]
    draws: Option<usize>,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic city, population and diaries with known truth.
    Synth(SynthArgs),
    /// Parse and validate every input table.
    IngestCheck,
    /// Travel-time matrix between two place lists.
    Matrix(MatrixArgs),
    /// Feasible sets and accessibility counts.
    Spa,
    /// Rank-based selectivity test per person.
    Selectivity,
    /// Leisure location diversity and total travel time per person.
    Diversity,
    /// Weighted summary statistics.
    Stats,
    /// Fit the path model on the pipeline data or on a CSV.
    Pathfit(PathfitArgs),
    /// Direct, indirect and total effect from three standardized paths.
    Decompose(DecomposeArgs),
    /// Every stage end to end.
    Run(RunArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Synthetic city spec (TOML); the desk-scale default otherwise.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    persons: Option<usize>,
    #[arg(long, value_enum)]
    world: Option<WorldKind>,
    /// Rank decay of the selective world.
    #[arg(long, default_value_t = 0.8)]
    q: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum WorldKind {
    Null,
    Selective,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Car,
    Transit,
}

#[derive(Args)]
struct MatrixArgs {
    /// Origins as `id,lat,lon`.
    #[arg(long)]
    origins: PathBuf,
    /// Destinations as `id,lat,lon`.
    #[arg(long)]
    dests: PathBuf,
    #[arg(long, value_enum)]
    mode: ModeArg,
}

#[derive(Args)]
struct PathfitArgs {
    /// Analysis table; otherwise it is built from the inputs.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Weight column of `--data`; unit weights when absent.
    #[arg(long)]
    weight: Option<String>,
}

#[derive(Args)]
struct DecomposeArgs {
    /// Accessibility → diversity.
    #[arg(long, allow_hyphen_values = true)]
    c: f64,
    /// Accessibility → travel time.
    #[arg(long, allow_hyphen_values = true)]
    a: f64,
    /// Travel time → diversity.
    #[arg(long, allow_hyphen_values = true)]
    b: f64,
    /// Standard errors of c, a and b, in that order.
    #[arg(long, num_args = 3, allow_hyphen_values = true)]
    se: Option<Vec<f64>>,
}

#[derive(Args)]
struct RunArgs {
    /// Generate inputs from this synthetic spec into `<out>/inputs` first.
    #[arg(long)]
    synth: Option<PathBuf>,
}

fn parse_clock(s: &str) -> Result<u32, String> {
    let full = if s.matches(':').count() == 1 { format!("{s}:00") } else { s.to_string() };
    parse_gtfs_time(&full).ok_or_else(|| format!("invalid time {s:?}"))
}

fn parse_policy(s: &str) -> Result<ModePolicy, String> {
    s.parse()
}

fn load_config(g: &Global) -> Result<RunConfig, PipelineError> {
    let mut cfg = match &g.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    if let Some(d) = &g.input {
        cfg.inputs.input_dir = d.clone();
    }
    if let Some(o) = &g.out {
        cfg.out_dir = o.clone();
    }
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(w) = g.workers {
        cfg.workers = w;
    }
    if let Some(t) = g.tb_min {
        cfg.tb_min = t;
    }
    if let Some(d) = g.depart {
        cfg.depart_s = d;
    }
    if let Some(p) = g.mode_policy {
        cfg.mode_policy = p;
    }
    if let Some(d) = g.draws {
        cfg.draws = d;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_spec(path: Option<&Path>) -> Result<SynthSpec, PipelineError> {
    path.map_or_else(|| Ok(SynthSpec::default()), pl::load_synth_spec)
}

fn execute(cli: Cli) -> Result<(), PipelineError> {
    let g = &cli.global;
    let mut cfg = load_config(g)?;
    match cli.command {
        Command::Synth(a) => {
            let mut spec = load_spec(a.spec.as_deref())?;
            if let Some(s) = g.seed {
                spec.seed = s;
            }
            if let Some(n) = a.persons {
                spec.persons = n;
            }
            match a.world {
                Some(WorldKind::Null) => spec.world = World::Null,
                Some(WorldKind::Selective) => spec.world = World::Selective { q: a.q },
                None => {}
            }
            let dir = g.out.clone().unwrap_or_else(|| PathBuf::from("synth"));
            pl::run_with_pool(cfg.workers, || pl::with_out_dir(&dir, |d| pl::synthesize(&spec, d)))?;
            println!("synthetic inputs written to {}", dir.display());
        }
        Command::IngestCheck => {
            let i = pl::load_inputs(&cfg)?;
            let nets = pl::build_networks(&i, &cfg)?;
            let off = nets.roads.off_main_component().len();
            println!("road nodes       {}", i.roads.nodes.len());
            println!("road edges       {}", i.roads.edges.len());
            println!("off main graph   {off}");
            println!("stops            {}", i.gtfs.stops.len());
            println!("trips            {}", i.gtfs.trips.len());
            println!("routes compiled  {}", nets.transit.as_ref().map_or(0, |t| t.routes().len()));
            println!("leisure POIs     {}", i.pois.len());
            println!("persons          {}", i.persons.len());
            println!("diary trips      {}", i.trips.len());
        }
        Command::Matrix(a) => {
            let nets = pl::load_networks(&cfg)?;
            let origins = pl::read_places(&a.origins)?;
            let dests = pl::read_places(&a.dests)?;
            let mode = match a.mode {
                ModeArg::Car => NetworkMode::Car,
                ModeArg::Transit => NetworkMode::Transit,
            };
            pl::run_with_pool(cfg.workers, || {
                pl::with_out_dir(&cfg.out_dir, |out| {
                    let m = nets.matrices(mode, &origins, &dests, cfg.depart_s)?;
                    pl::write_matrix(&out.join(format!("matrix_{}.csv", mode.as_str())), &m)
                })
            })?;
        }
        Command::Spa => staged(&cfg, |i, out, _| {
            let (_, spa) = spa_stage(i, &cfg)?;
            pl::write_spa(out, &spa.sets)?;
            println!(
                "{} persons, weighted share with A_i > 0: {:.4}",
                spa.summary.persons, spa.summary.weighted_share_nonzero
            );
            Ok(())
        })?,
        Command::Selectivity => staged(&cfg, |i, out, _| {
            let (_, spa) = spa_stage(i, &cfg)?;
            let b = pl::run_behavior(i, &spa.sets, &cfg)?;
            pl::write_selectivity(&out.join("selectivity.csv"), &b.selectivity)
        })?,
        Command::Diversity => staged(&cfg, |i, out, _| {
            let (_, spa) = spa_stage(i, &cfg)?;
            let b = pl::run_behavior(i, &spa.sets, &cfg)?;
            pl::write_diversity(&out.join("diversity.csv"), &b.persons)
        })?,
        Command::Stats => staged(&cfg, |i, out, _| {
            let (_, spa) = spa_stage(i, &cfg)?;
            let b = pl::run_behavior(i, &spa.sets, &cfg)?;
            let rows = pl::summary_stats(&i.persons, &spa.sets, &b, &cfg);
            pl::write_stats(&out.join("stats.csv"), &rows)?;
            for r in &rows {
                println!(
                    "{:<18} n={:<6} mean={:<10.4} sd={:<10.4} median={:<10.4} se={:.4}",
                    r.variable, r.persons, r.weighted_mean, r.weighted_sd, r.weighted_median, r.median_se
                );
            }
            Ok(())
        })?,
        Command::Pathfit(a) => match &a.data {
            Some(path) => {
                let data = Dataset::from_csv(path, a.weight.as_deref())?;
                pl::with_out_dir(&cfg.out_dir, |out| fit_and_report(&data, &cfg, out))?;
            }
            None => staged(&cfg, |i, out, _| {
                let (_, spa) = spa_stage(i, &cfg)?;
                let b = pl::run_behavior(i, &spa.sets, &cfg)?;
                let data = pl::analysis_dataset(&i.persons, &spa.sets, &b.persons)?;
                pl::write_dataset(&out.join("analysis.csv"), &data)?;
                fit_and_report(&data, &cfg, out)
            })?,
        },
        Command::Decompose(a) => {
            let se = a.se.clone().unwrap_or_else(|| vec![0.0; 3]);
            let eqs = [
                Regression::from_standardized(MEDIATOR_VAR, &[(EXPOSURE_VAR, a.a, se[1])]),
                Regression::from_standardized(OUTCOME_VAR, &[(EXPOSURE_VAR, a.c, se[0]), (MEDIATOR_VAR, a.b, se[2])]),
            ];
            let r = decompose_effects(&eqs, EXPOSURE_VAR, OUTCOME_VAR)?;
            println!("direct   {:.6}", r.direct);
            println!("indirect {:.6}", r.indirect);
            println!("total    {:.6}", r.total);
            if a.se.is_some() {
                println!("indirect_se {:.6}", r.indirect_se);
                println!("total_se    {:.6}", r.total_se);
            }
        }
        Command::Run(a) => {
            if let Some(spec_path) = &a.synth {
                let mut spec = load_spec(Some(spec_path))?;
                if let Some(s) = g.seed {
                    spec.seed = s;
                }
                let dir = cfg.out_dir.join("inputs");
                let synth_cfg = pl::run_with_pool(cfg.workers, || pl::synthesize(&spec, &dir))?;
                cfg.inputs = synth_cfg.inputs;
                cfg.date = synth_cfg.date;
                if g.seed.is_none() && g.config.is_none() {
                    cfg.seed = synth_cfg.seed;
                }
            }
            let out = pl::run_pipeline(&cfg)?;
            println!("outputs written to {}", out.display());
        }
    }
    Ok(())
}

fn spa_stage(
    i: &pl::Inputs,
    cfg: &RunConfig,
) -> Result<(Vec<spacetime_core::access::PoiSite>, spacetime_core::access::SpaPopulation), PipelineError> {
    let nets = pl::build_networks(i, cfg)?;
    pl::run_spa(i, &nets, cfg)
}

fn fit_and_report(data: &Dataset, cfg: &RunConfig, out: &Path) -> Result<(), PipelineError> {
    let r = pl::run_pathfit(data, cfg)?;
    pl::write_path_report(out, &r)?;
    print!("{}", pl::path_report_text(&r));
    Ok(())
}

/// Loads inputs, then runs `f` inside the output directory on the
/// configured thread pool.
fn staged(
    cfg: &RunConfig,
    f: impl FnOnce(&pl::Inputs, &Path, &RunConfig) -> Result<(), PipelineError> + Send,
) -> Result<(), PipelineError> {
    pl::run_with_pool(cfg.workers, || {
        let inputs = pl::load_inputs(cfg)?;
        pl::with_out_dir(&cfg.out_dir, |out| f(&inputs, out, cfg))
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.global.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
