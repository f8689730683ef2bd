use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::access::{BudgetSpec, ModePolicy};
use crate::behavior::Granularity;
use crate::ingest::CellSource;
use crate::router::RouterConfig;
use crate::spatial::HexMode;

use super::PipelineError;

/// Input file locations. Relative paths resolve against `input_dir`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputPaths {
    pub input_dir: PathBuf,
    pub roads_nodes: PathBuf,
    pub roads_edges: PathBuf,
    pub gtfs: PathBuf,
    pub pois: PathBuf,
    pub persons: PathBuf,
    pub trips: PathBuf,
}

impl Default for InputPaths {
    fn default() -> Self {
        Self {
            input_dir: PathBuf::from("."),
            roads_nodes: "roads_nodes.csv".into(),
            roads_edges: "roads_edges.csv".into(),
            gtfs: "gtfs".into(),
            pois: "pois.csv".into(),
            persons: "persons.csv".into(),
            trips: "trips.csv".into(),
        }
    }
}

impl InputPaths {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.input_dir.join(p)
        }
    }

    /// Same layout rooted at `dir`.
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            input_dir: dir.to_path_buf(),
            ..Self::default()
        }
    }
}

/// Every tunable of a run. The resolved copy written next to the outputs is
/// enough to reproduce them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub date: NaiveDate,
    /// Departure clock time in seconds after midnight.
    pub depart_s: u32,
    pub tb_min: f64,
    /// Null draws per selectivity test.
    pub draws: usize,
    pub bootstrap_replicates: usize,
    pub seed: u64,
    pub mode_policy: ModePolicy,
    pub poi_confidence: f64,
    pub hex_mode: HexMode,
    pub cell_source: CellSource,
    pub diversity_granularity: Granularity,
    pub vif_threshold: f64,
    /// Weighted variance below which a covariate counts as near-constant.
    pub near_constant_eps: f64,
    /// Rayon worker threads; 0 uses every core.
    pub workers: usize,
    pub out_dir: PathBuf,
    pub inputs: InputPaths,
    pub router: RouterConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let budget = BudgetSpec::default();
        Self {
            date: NaiveDate::from_ymd_opt(2023, 3, 1).expect("valid date"),
            depart_s: budget.depart_s,
            tb_min: budget.tb_min,
            draws: 1000,
            bootstrap_replicates: 200,
            seed: 1,
            mode_policy: ModePolicy::PersonMainMode,
            poi_confidence: 0.7,
            hex_mode: HexMode::Lattice,
            cell_source: CellSource::Tokens,
            diversity_granularity: Granularity::Coarse,
            vif_threshold: 7.0,
            near_constant_eps: 0.005,
            workers: 0,
            out_dir: PathBuf::from("out"),
            inputs: InputPaths::default(),
            router: RouterConfig::default(),
        }
    }
}

impl RunConfig {
    /// Parses a TOML config. Relative input and output paths are taken
    /// relative to the file's directory.
    pub fn from_file(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: RunConfig = toml::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        if cfg.inputs.input_dir.is_relative() {
            cfg.inputs.input_dir = base.join(&cfg.inputs.input_dir);
        }
        if cfg.out_dir.is_relative() {
            cfg.out_dir = base.join(&cfg.out_dir);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn budget(&self) -> BudgetSpec {
        BudgetSpec::new(self.tb_min, self.depart_s)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::Config(m.to_string()));
        if !(self.tb_min > 0.0) {
            return bad("tb_min must be positive");
        }
        if self.draws == 0 {
            return bad("draws must be at least 1");
        }
        if self.bootstrap_replicates == 0 {
            return bad("bootstrap_replicates must be at least 1");
        }
        if !(0.0..1.0).contains(&self.poi_confidence) {
            return bad("poi_confidence must lie in [0, 1)");
        }
        if !(self.router.walk_speed_kmh > 0.0) {
            return bad("router.walk_speed_kmh must be positive");
        }
        Ok(())
    }

    /// Seed for one named stage, derived from the global seed.
    pub fn stage_seed(&self, stage: &str) -> u64 {
        use rand::Rng;
        crate::behavior::person_rng(self.seed, stage).next_u64()
    }
}
