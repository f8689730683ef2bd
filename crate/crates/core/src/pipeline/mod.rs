//! End-to-end orchestration: ingest → matrices → accessibility → behaviour →
//! path model → CSV, GeoJSON and report files.

mod config;
mod report;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::access::{poi_sites, spa_population, AccessError, FeasibleSet, PoiSite, SpaPopulation};
use crate::behavior::{
    daily_totals, hill_diversity, leisure_visits, selectivity_population, total_travel_time, BehaviorError,
    SelectivityResult, VisitSet,
};
use crate::ingest::{
    self, attach_commutes, GtfsBundle, IngestError, PersonRecord, Poi, RoadGraphSource, TripRecord,
};
use crate::pathmodel::{
    check_dag, fit_paths, vif_prune, Dataset, FitResult, ImpliedIndependence, PathDag, PathError, VifReport,
    EXPOSURE_VAR, MEDIATOR_VAR, MODE_VARS, OUTCOME_VAR,
};
use crate::router::{build_transit, Networks, RoadNetwork, RouterError};
use crate::spatial::{CellIndex, SpatialError};

pub use config::{InputPaths, RunConfig};
pub use report::{
    path_report_text, read_places, summary_stats, write_dataset, write_diversity, write_geojson_layers, write_matrix, write_path_report, write_selectivity, write_spa,
    write_stats, StatRow,
};

/// Name of the file that marks an output directory as incomplete.
pub const FAILURE_SENTINEL: &str = "_FAILED";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Router(#[from] RouterError),
    #[error(transparent)]
    Access(#[from] AccessError),
    #[error(transparent)]
    Spatial(#[from] SpatialError),
    #[error(transparent)]
    Behavior(#[from] BehaviorError),
    #[error("path model: {0}")]
    Path(#[from] PathError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl PipelineError {
    /// Process exit code for the CLI; one code per error family.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Ingest(IngestError::MissingTable(_)) => 3,
            PipelineError::Ingest(_) => 4,
            PipelineError::Router(_) => 5,
            PipelineError::Access(_) | PipelineError::Spatial(_) => 6,
            PipelineError::Behavior(_) => 7,
            PipelineError::Path(_) => 8,
            PipelineError::Io { .. } => 9,
        }
    }
}

pub(crate) fn io_err(path: &Path) -> impl Fn(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Every input table, parsed and validated.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub roads: RoadGraphSource,
    pub gtfs: GtfsBundle,
    pub pois: Vec<Poi>,
    pub index: CellIndex,
    pub persons: Vec<PersonRecord>,
    pub trips: Vec<TripRecord>,
}

pub fn load_inputs(cfg: &RunConfig) -> Result<Inputs, PipelineError> {
    let p = &cfg.inputs;
    let roads = ingest::parse_roads(&p.resolve(&p.roads_nodes), &p.resolve(&p.roads_edges))?;
    let gtfs = ingest::parse_gtfs(&p.resolve(&p.gtfs))?;
    let bbox = ingest::study_area(&roads, Some(&gtfs)).ok_or(RouterError::EmptyRoadGraph)?;
    let index = CellIndex::new(bbox, cfg.hex_mode);
    let pois = ingest::parse_pois(&p.resolve(&p.pois), cfg.poi_confidence)?;
    let mut persons = ingest::parse_persons(&p.resolve(&p.persons), &index, cfg.cell_source)?;
    let trips = ingest::parse_trips(&p.resolve(&p.trips), &index, &persons)?;
    attach_commutes(&mut persons, &trips);
    log::info!(
        "loaded {} road nodes, {} stops, {} POIs, {} persons, {} trips",
        roads.nodes.len(),
        gtfs.stops.len(),
        pois.len(),
        persons.len(),
        trips.len()
    );
    Ok(Inputs {
        roads,
        gtfs,
        pois,
        index,
        persons,
        trips,
    })
}

pub fn build_networks(inputs: &Inputs, cfg: &RunConfig) -> Result<Networks, PipelineError> {
    networks_from(&inputs.roads, &inputs.gtfs, cfg)
}

/// Parses only the road and GTFS tables and builds both networks.
pub fn load_networks(cfg: &RunConfig) -> Result<Networks, PipelineError> {
    let p = &cfg.inputs;
    let roads = ingest::parse_roads(&p.resolve(&p.roads_nodes), &p.resolve(&p.roads_edges))?;
    let gtfs = ingest::parse_gtfs(&p.resolve(&p.gtfs))?;
    networks_from(&roads, &gtfs, cfg)
}

fn networks_from(roads: &RoadGraphSource, gtfs: &GtfsBundle, cfg: &RunConfig) -> Result<Networks, PipelineError> {
    let roads = Arc::new(RoadNetwork::build(roads)?);
    let transit = build_transit(gtfs, roads.clone(), cfg.date, &cfg.router)?;
    Ok(Networks {
        roads,
        transit: Some(transit),
        config: cfg.router,
    })
}

pub fn run_spa(inputs: &Inputs, nets: &Networks, cfg: &RunConfig) -> Result<(Vec<PoiSite>, SpaPopulation), PipelineError> {
    let sites = poi_sites(&inputs.pois, &inputs.index)?;
    let spa = spa_population(&inputs.persons, &sites, &inputs.index, nets, &cfg.budget(), cfg.mode_policy)?;
    Ok((sites, spa))
}

/// Per-person behavioural measures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonBehavior {
    pub person_id: String,
    pub visits: usize,
    pub distinct_cells: usize,
    /// `None` without leisure visits.
    pub h1: Option<f64>,
    /// `None` without any trip.
    pub total_travel_min: Option<f64>,
}

pub struct BehaviorOutputs {
    pub selectivity: Vec<SelectivityResult>,
    pub persons: Vec<PersonBehavior>,
}

pub fn run_behavior(inputs: &Inputs, sets: &[FeasibleSet], cfg: &RunConfig) -> Result<BehaviorOutputs, PipelineError> {
    let coarse = leisure_visits(&inputs.trips, &inputs.index, crate::behavior::Granularity::Coarse)?;
    let selectivity = selectivity_population(sets, &coarse, cfg.draws, cfg.stage_seed("selectivity"));
    let div_visits: BTreeMap<String, VisitSet> = match cfg.diversity_granularity {
        crate::behavior::Granularity::Coarse => coarse,
        g => leisure_visits(&inputs.trips, &inputs.index, g)?,
    };
    let travel = total_travel_time(&daily_totals(&inputs.trips));
    let persons = inputs
        .persons
        .iter()
        .map(|p| {
            let v = div_visits.get(&p.person_id);
            Ok(PersonBehavior {
                person_id: p.person_id.clone(),
                visits: v.map_or(0, VisitSet::n),
                distinct_cells: v.map_or(0, VisitSet::k),
                h1: v.filter(|v| !v.is_empty()).map(hill_diversity).transpose()?,
                total_travel_min: travel.get(&p.person_id).copied(),
            })
        })
        .collect::<Result<Vec<_>, BehaviorError>>()?;
    Ok(BehaviorOutputs { selectivity, persons })
}

/// The path-model dataset: one row per person with leisure visits and
/// trips; attribute dummies plus the exposure, mediator and outcome.
pub fn analysis_dataset(persons: &[PersonRecord], sets: &[FeasibleSet], behavior: &[PersonBehavior]) -> Result<Dataset, PathError> {
    let mut names: Vec<String> = Vec::new();
    let mut cols: Vec<Vec<f64>> = Vec::new();
    let mut weights = Vec::new();
    for ((p, s), b) in persons.iter().zip(sets).zip(behavior) {
        let (Some(h1), Some(tt)) = (b.h1, b.total_travel_min) else { continue };
        let mut row = p.attributes.numeric_columns();
        row.push((EXPOSURE_VAR.into(), s.log1p_a()));
        row.push((MEDIATOR_VAR.into(), tt));
        row.push((OUTCOME_VAR.into(), h1));
        if names.is_empty() {
            names = row.iter().map(|r| r.0.clone()).collect();
            cols = vec![Vec::new(); names.len()];
        }
        for (c, (_, v)) in cols.iter_mut().zip(row) {
            c.push(v);
        }
        weights.push(p.weight);
    }
    Dataset::new(names, cols, weights)
}

/// Fitted standard model plus its diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathReport {
    pub vif: VifReport,
    pub independencies: Vec<ImpliedIndependence>,
    pub fit: FitResult,
}

/// Prunes background covariates by VIF, then fits the standard model on the
/// survivors.
pub fn run_pathfit(data: &Dataset, cfg: &RunConfig) -> Result<PathReport, PathError> {
    let outcomes = [EXPOSURE_VAR, MEDIATOR_VAR, OUTCOME_VAR];
    let candidates: Vec<&str> = data
        .names()
        .iter()
        .map(String::as_str)
        .filter(|n| !MODE_VARS.contains(n) && !outcomes.contains(n))
        .collect();
    let vif = vif_prune(&candidates, data, cfg.vif_threshold, cfg.near_constant_eps)?;
    let z: Vec<&str> = vif.retained.iter().map(String::as_str).collect();
    let dag = PathDag::standard(&z);
    fit_model(&dag, data, vif)
}

pub fn fit_model(dag: &PathDag, data: &Dataset, vif: VifReport) -> Result<PathReport, PathError> {
    let fit = fit_paths(dag, data)?;
    let independencies = check_dag(dag, data)?;
    Ok(PathReport {
        vif,
        independencies,
        fit,
    })
}

/// Runs `f` against the output directory: creates it, clears a stale
/// `_FAILED` marker, and on error writes the marker with the message.
pub fn with_out_dir<T>(out: &Path, f: impl FnOnce(&Path) -> Result<T, PipelineError>) -> Result<T, PipelineError> {
    std::fs::create_dir_all(out).map_err(io_err(out))?;
    let sentinel = out.join(FAILURE_SENTINEL);
    if sentinel.exists() {
        std::fs::remove_file(&sentinel).map_err(io_err(&sentinel))?;
    }
    f(out).inspect_err(|e| {
        let _ = std::fs::write(&sentinel, format!("{e}\n"));
    })
}

/// Runs `f` on a pool of `workers` threads, or on the global pool for 0.
pub fn run_with_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> T {
    if workers == 0 {
        return f();
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("thread pool")
        .install(f)
}

/// Runs every stage and writes all outputs into `cfg.out_dir`. Inputs are
/// loaded before anything is written, so a bad input leaves no outputs; a
/// later failure leaves a `_FAILED` sentinel next to the partial outputs.
pub fn run_pipeline(cfg: &RunConfig) -> Result<PathBuf, PipelineError> {
    cfg.validate()?;
    run_with_pool(cfg.workers, || {
        let inputs = load_inputs(cfg)?;
        with_out_dir(&cfg.out_dir, |out| run_stages(&inputs, cfg, out))?;
        Ok(cfg.out_dir.clone())
    })
}

fn run_stages(inputs: &Inputs, cfg: &RunConfig, out: &Path) -> Result<(), PipelineError> {
    let resolved = out.join("config.resolved.toml");
    std::fs::write(&resolved, cfg.to_toml()).map_err(io_err(&resolved))?;
    let nets = build_networks(inputs, cfg)?;
    let (_, spa) = run_spa(inputs, &nets, cfg)?;
    write_spa(out, &spa.sets)?;
    let behavior = run_behavior(inputs, &spa.sets, cfg)?;
    write_selectivity(&out.join("selectivity.csv"), &behavior.selectivity)?;
    write_diversity(&out.join("diversity.csv"), &behavior.persons)?;
    let stats = report::summary_stats(&inputs.persons, &spa.sets, &behavior, cfg);
    write_stats(&out.join("stats.csv"), &stats)?;
    write_geojson_layers(out, inputs, &spa.sets, &behavior.persons, cfg)?;
    let data = analysis_dataset(&inputs.persons, &spa.sets, &behavior.persons)?;
    report::write_dataset(&out.join("analysis.csv"), &data)?;
    let path = run_pathfit(&data, cfg)?;
    write_path_report(out, &path)?;
    log::info!("outputs written to {}", out.display());
    Ok(())
}

/// Known generating parameters of a synthetic data set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub world: crate::synth::World,
    pub path_truth: crate::synth::PathTruth,
    /// `(outcome, predictor, standardized coefficient)` in the population.
    pub standardized: Vec<(String, String, f64)>,
    pub path_sim_rows: usize,
}

/// Reads a synthetic city spec; missing keys take the desk-scale defaults.
pub fn load_synth_spec(path: &Path) -> Result<crate::synth::SynthSpec, PipelineError> {
    let bad = |e: &dyn std::fmt::Display| PipelineError::Config(format!("{}: {e}", path.display()));
    let text = std::fs::read_to_string(path).map_err(|e| bad(&e))?;
    toml::from_str(&text).map_err(|e| bad(&e))
}

/// Rows of the simulated path-model table written by [`synthesize`].
pub const PATH_SIM_ROWS: usize = 5000;

/// Generates a synthetic city and population from `spec`, writes every input
/// table into `dir` together with `ground_truth.json`, a path-model table
/// drawn from the known coefficients (`path_sim.csv`) and a ready-to-run
/// `run.toml`. Returns the run config as written.
pub fn synthesize(spec: &crate::synth::SynthSpec, dir: &Path) -> Result<RunConfig, PipelineError> {
    use crate::synth;
    let cfg = RunConfig {
        date: spec.date,
        seed: spec.seed,
        ..RunConfig::default()
    };
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let city = synth::gen_city(spec);
    let index = synth::city_index(&city, cfg.hex_mode);
    let nets = synth::city_networks(&city, spec.date, &cfg.router)?;
    let pop = synth::gen_population(spec, &city, &index, &nets, cfg.poi_confidence)?;
    synth::write_inputs(dir, spec, &city, &pop).map_err(io_err(dir))?;
    let truth = synth::PathTruth::default();
    let sim = synth::simulate_path_data(&truth, PATH_SIM_ROWS, spec.seed);
    report::write_dataset(&dir.join("path_sim.csv"), &sim)?;
    let gt = GroundTruth {
        seed: spec.seed,
        world: spec.world,
        standardized: truth.standardized(),
        path_truth: truth,
        path_sim_rows: PATH_SIM_ROWS,
    };
    let p = dir.join("ground_truth.json");
    std::fs::write(&p, serde_json::to_string_pretty(&gt).expect("truth serializes") + "\n").map_err(io_err(&p))?;
    let p = dir.join("run.toml");
    std::fs::write(&p, cfg.to_toml()).map_err(io_err(&p))?;
    Ok(RunConfig {
        inputs: InputPaths::in_dir(dir),
        out_dir: dir.join("out"),
        ..cfg
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::SynthSpec;

    fn spec() -> SynthSpec {
        SynthSpec {
            persons: 120,
            ..SynthSpec::small(11)
        }
    }

    fn small_run(dir: &Path) -> RunConfig {
        let mut cfg = synthesize(&spec(), &dir.join("in")).unwrap();
        cfg.out_dir = dir.join("out");
        cfg.draws = 99;
        cfg.bootstrap_replicates = 20;
        cfg
    }

    #[test]
    fn written_config_reloads() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_run(dir.path());
        let back = RunConfig::from_file(&dir.path().join("in/run.toml")).unwrap();
        assert_eq!(back.inputs.input_dir, dir.path().join("in/."));
        assert_eq!(back.date, cfg.date);
        assert!(dir.path().join("in/ground_truth.json").exists());
        let sim = Dataset::from_csv(&dir.path().join("in/path_sim.csv"), Some("weight")).unwrap();
        assert_eq!(sim.len(), PATH_SIM_ROWS);
    }

    #[test]
    fn pipeline_writes_every_output() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_run(dir.path());
        let out = run_pipeline(&cfg).unwrap();
        for f in [
            "config.resolved.toml",
            "spa.csv",
            "spa_sets.csv",
            "selectivity.csv",
            "diversity.csv",
            "stats.csv",
            "analysis.csv",
            "pathfit.txt",
            "pathfit.json",
            "geo_spa_share.geojson",
            "geo_travel_time.geojson",
            "geo_diversity.geojson",
        ] {
            assert!(out.join(f).exists(), "{f} missing");
        }
        assert!(!out.join(FAILURE_SENTINEL).exists());
        let spa = std::fs::read_to_string(out.join("spa.csv")).unwrap();
        assert!(spa.starts_with("person_id,mode,t_hw_min,t_hw_fallback,A_i,log1p_A\n"));
        assert_eq!(spa.lines().count(), 1 + spec().persons);
    }

    #[test]
    fn missing_gtfs_leaves_no_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_run(dir.path());
        cfg.inputs.gtfs = "nowhere".into();
        let e = run_pipeline(&cfg).unwrap_err();
        assert_eq!(e.exit_code(), 3, "{e}");
        assert!(!cfg.out_dir.exists());
    }

    #[test]
    fn late_failure_leaves_sentinel() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_run(dir.path());
        std::fs::create_dir_all(&cfg.out_dir).unwrap();
        std::fs::create_dir_all(cfg.out_dir.join("spa.csv")).unwrap();
        cfg.workers = 2;
        let e = run_pipeline(&cfg).unwrap_err();
        assert_eq!(e.exit_code(), 9);
        assert!(cfg.out_dir.join(FAILURE_SENTINEL).exists());
    }
}
