//! Scenario files: every configured quantity of a run, loaded from TOML.
//!
//! Series may be inline arrays or `{ csv = "file.csv" }` tables pointing at a
//! `horizon,value` file. Relative paths resolve against the scenario file's
//! directory.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::demand::ElasticityModel;
use crate::error::{Error, Result};
use crate::forecast::{self, MarkovChain, SolarProfile, SyntheticCloud};
use crate::grid::{read_case, Network, StationMap};
use crate::par::Execution;

const WEIGHT_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StorageModel {
    /// `E`, MWh.
    pub capacity: f64,
    /// `η_s`, $/MWh held per horizon.
    pub unit_storage_cost: f64,
    pub charge_eff: f64,
    pub discharge_eff: f64,
    /// `σ_w`, MWh.
    #[serde(default = "default_noise")]
    pub process_noise_std: f64,
    /// `I_1`, MWh.
    #[serde(default)]
    pub initial_level: f64,
}

fn default_noise() -> f64 {
    0.5
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SatisfactionParams {
    pub alpha: f64,
    pub omega: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtilityWeights {
    /// Profit, satisfaction and impact weights.
    pub lambda: [f64; 3],
}

impl UtilityWeights {
    pub fn new(l1: f64, l2: f64, l3: f64) -> Self {
        Self { lambda: [l1, l2, l3] }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.lambda.iter().any(|l| !(*l >= 0.0)) {
            out.push("weights must be nonnegative".to_string());
        }
        if (self.lambda.iter().sum::<f64>() - 1.0).abs() > WEIGHT_TOL {
            out.push("weights must sum to 1".to_string());
        }
        out
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Enforcement {
    /// Violating decisions stay eligible and are only flagged.
    WarnOnly,
    /// Violating decisions are excluded whenever a compliant one exists.
    #[default]
    Penalize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SafeguardConfig {
    pub w_min: f64,
    pub zeta: f64,
    #[serde(default)]
    pub enforcement: Enforcement,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum RenewableConfig {
    Synthetic(#[serde(default)] SyntheticCloud),
    /// One level that always yields the clear-sky solar energy.
    Deterministic,
    /// No renewable generation.
    None,
    Explicit(MarkovChain),
}

impl Default for RenewableConfig {
    fn default() -> Self {
        RenewableConfig::Synthetic(SyntheticCloud::default())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Equispaced storage grid points on `[0, E]`.
    pub storage_points: usize,
    /// Aggregate-demand breakpoints of the per-horizon price frontier.
    pub demand_points: usize,
    /// Golden-section refinement of the aggregate demand between breakpoints.
    pub refine: bool,
    pub execution: Execution,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            storage_points: 101,
            demand_points: 201,
            refine: true,
            execution: Execution::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Series {
    Values(Vec<f64>),
    File { csv: PathBuf },
}

impl Series {
    fn resolve(&self, base: &Path) -> Result<Vec<f64>> {
        match self {
            Series::Values(v) => Ok(v.clone()),
            Series::File { csv } => forecast::read_series(&base.join(csv)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElasticitySection {
    pub intercepts: Vec<f64>,
    pub self_elasticity: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cross: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cross_uniform: Option<f64>,
    pub variances: Vec<f64>,
}

impl ElasticitySection {
    fn build(&self) -> Result<ElasticityModel> {
        let n = self.intercepts.len();
        let cross = match (&self.cross, self.cross_uniform) {
            (Some(c), None) => c.clone(),
            (None, Some(u)) => (0..n)
                .map(|i| (0..n).map(|j| if i == j { 0.0 } else { u }).collect())
                .collect(),
            (None, None) => vec![vec![0.0; n]; n],
            (Some(_), Some(_)) => {
                return Err(Error::Validation(vec![
                    "elasticity: give either cross or cross_uniform, not both".into(),
                ]))
            }
        };
        Ok(ElasticityModel {
            intercepts: self.intercepts.clone(),
            self_elasticity: self.self_elasticity.clone(),
            cross,
            variances: self.variances.clone(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolarSection {
    pub radiation: Series,
    pub area: f64,
    #[serde(default = "default_efficiency")]
    pub efficiency: f64,
}

fn default_efficiency() -> f64 {
    0.2
}

fn default_o_max() -> f64 {
    300.0
}

/// On-disk layout of a scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub horizons: usize,
    pub stations: usize,
    #[serde(default = "default_o_max")]
    pub o_max: f64,
    #[serde(default)]
    pub rng_seed: u64,
    #[serde(default)]
    pub terminal_salvage_price: f64,
    pub network: PathBuf,
    pub wholesale_prices: Series,
    pub storage: StorageModel,
    pub satisfaction: SatisfactionParams,
    pub weights: UtilityWeights,
    pub safeguard: SafeguardConfig,
    pub elasticity: ElasticitySection,
    pub station_map: StationMap,
    pub solar: SolarSection,
    #[serde(default)]
    pub renewable: RenewableConfig,
    #[serde(default)]
    pub solver: SolverConfig,
}

/// Fully resolved and validated configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub horizons: usize,
    pub stations: usize,
    pub o_max: f64,
    pub rng_seed: u64,
    pub terminal_salvage_price: f64,
    pub network_path: PathBuf,
    pub network: Network,
    pub wholesale_prices: Vec<f64>,
    pub storage: StorageModel,
    pub satisfaction: SatisfactionParams,
    pub weights: UtilityWeights,
    pub safeguard: SafeguardConfig,
    pub elasticity: ElasticityModel,
    pub station_map: StationMap,
    pub solar: SolarProfile,
    pub renewable: RenewableConfig,
    pub renewable_chain: MarkovChain,
    pub solver: SolverConfig,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Parses scenario text without resolving paths.
pub fn parse_scenario_file(text: &str) -> Result<ScenarioFile> {
    toml::from_str(text).map_err(|e| Error::Parse {
        what: "scenario".into(),
        line: e.span().map_or(0, |s| line_of(text, s.start)),
        message: e.message().to_string(),
    })
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file = parse_scenario_file(&text)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    Scenario::from_file(&file, base)
}

/// Builds the renewable chain a configuration describes.
pub fn build_chain(cfg: &RenewableConfig, solar: &SolarProfile, horizons: usize, seed: u64) -> Result<MarkovChain> {
    let clear = forecast::solar_to_energy(solar)?;
    match cfg {
        RenewableConfig::Synthetic(c) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(0x736f6c6172);
            forecast::synthetic_chain(&clear, c, &mut rng)
        }
        RenewableConfig::Deterministic => Ok(MarkovChain::deterministic(&clear)),
        RenewableConfig::None => Ok(MarkovChain::deterministic(&vec![0.0; horizons])),
        RenewableConfig::Explicit(chain) => Ok(chain.clone()),
    }
}

impl Scenario {
    /// Resolves series and the network against `base`, builds the renewable
    /// chain, and validates the result.
    pub fn from_file(file: &ScenarioFile, base: &Path) -> Result<Scenario> {
        let network_path = base.join(&file.network);
        let network = read_case(&network_path)?;
        let solar = SolarProfile {
            radiation: file.solar.radiation.resolve(base)?,
            area: file.solar.area,
            efficiency: file.solar.efficiency,
        };
        let renewable_chain = build_chain(&file.renewable, &solar, file.horizons, file.rng_seed)?;
        let s = Scenario {
            horizons: file.horizons,
            stations: file.stations,
            o_max: file.o_max,
            rng_seed: file.rng_seed,
            terminal_salvage_price: file.terminal_salvage_price,
            network_path,
            network,
            wholesale_prices: file.wholesale_prices.resolve(base)?,
            storage: file.storage.clone(),
            satisfaction: file.satisfaction,
            weights: file.weights,
            safeguard: file.safeguard,
            elasticity: file.elasticity.build()?,
            station_map: file.station_map.clone(),
            solar,
            renewable: file.renewable.clone(),
            renewable_chain,
            solver: file.solver,
        };
        let bad = validate(&s);
        if bad.is_empty() {
            Ok(s)
        } else {
            Err(Error::Validation(bad))
        }
    }

    /// Self-contained file form: series inline, network path as resolved.
    pub fn to_file(&self) -> ScenarioFile {
        ScenarioFile {
            horizons: self.horizons,
            stations: self.stations,
            o_max: self.o_max,
            rng_seed: self.rng_seed,
            terminal_salvage_price: self.terminal_salvage_price,
            network: self.network_path.clone(),
            wholesale_prices: Series::Values(self.wholesale_prices.clone()),
            storage: self.storage.clone(),
            satisfaction: self.satisfaction,
            weights: self.weights,
            safeguard: self.safeguard,
            elasticity: ElasticitySection {
                intercepts: self.elasticity.intercepts.clone(),
                self_elasticity: self.elasticity.self_elasticity.clone(),
                cross: Some(self.elasticity.cross.clone()),
                cross_uniform: None,
                variances: self.elasticity.variances.clone(),
            },
            station_map: self.station_map.clone(),
            solar: SolarSection {
                radiation: Series::Values(self.solar.radiation.clone()),
                area: self.solar.area,
                efficiency: self.solar.efficiency,
            },
            renewable: self.renewable.clone(),
            solver: self.solver,
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(&self.to_file()).map_err(|e| Error::InvalidInput(format!("cannot serialize scenario: {e}")))
    }

    /// Rebuilds the renewable chain after editing `solar`, `renewable`,
    /// `horizons` or `rng_seed`.
    pub fn rebuild_chain(&mut self) -> Result<()> {
        self.renewable_chain = build_chain(&self.renewable, &self.solar, self.horizons, self.rng_seed)?;
        Ok(())
    }
}

fn in_unit(x: f64) -> bool {
    x > 0.0 && x <= 1.0
}

/// Every violated invariant, as a readable message. Empty means valid.
pub fn validate(s: &Scenario) -> Vec<String> {
    let mut out = Vec::new();
    if s.horizons < 1 {
        out.push("horizons must be at least 1".into());
    }
    if s.stations < 1 {
        out.push("stations must be at least 1".into());
    }
    if !(s.o_max > 0.0 && s.o_max.is_finite()) {
        out.push("o_max must be positive".into());
    }
    if !(s.terminal_salvage_price >= 0.0 && s.terminal_salvage_price.is_finite()) {
        out.push("terminal_salvage_price must be nonnegative".into());
    }
    if s.wholesale_prices.len() != s.horizons {
        out.push(format!(
            "wholesale_prices has {} entries, expected {}",
            s.wholesale_prices.len(),
            s.horizons
        ));
    }
    if s.wholesale_prices.iter().any(|c| !c.is_finite()) {
        out.push("wholesale_prices must be finite".into());
    }

    let st = &s.storage;
    if !(st.capacity > 0.0 && st.capacity.is_finite()) {
        out.push("capacity must be positive".into());
    }
    if !(st.unit_storage_cost >= 0.0) {
        out.push("unit_storage_cost must be nonnegative".into());
    }
    if !in_unit(st.charge_eff) {
        out.push("charge_eff must be in (0,1]".into());
    }
    if !in_unit(st.discharge_eff) {
        out.push("discharge_eff must be in (0,1]".into());
    }
    if !(st.process_noise_std >= 0.0) {
        out.push("process_noise_std must be nonnegative".into());
    }
    if !(st.initial_level >= 0.0 && st.initial_level <= st.capacity) {
        out.push("initial_level must be in [0,capacity]".into());
    }

    if !(s.satisfaction.alpha > 0.0) {
        out.push("alpha must be positive".into());
    }
    if !(s.satisfaction.omega > 0.0) {
        out.push("omega must be positive".into());
    }
    out.extend(s.weights.violations());
    if !(s.safeguard.zeta > 0.0 && s.safeguard.zeta < 1.0) {
        out.push("zeta must be in (0,1)".into());
    }
    if !s.safeguard.w_min.is_finite() && s.safeguard.w_min != f64::NEG_INFINITY {
        out.push("w_min must be a number".into());
    }

    if s.elasticity.n_stations() != s.stations {
        out.push(format!(
            "elasticity describes {} stations, expected {}",
            s.elasticity.n_stations(),
            s.stations
        ));
    }
    out.extend(s.elasticity.violations());
    if s.station_map.len() != s.stations {
        out.push(format!(
            "station_map has {} buses, expected {}",
            s.station_map.len(),
            s.stations
        ));
    }
    out.extend(s.station_map.violations(&s.network));

    if s.solar.radiation.len() != s.horizons {
        out.push(format!(
            "solar radiation has {} entries, expected {}",
            s.solar.radiation.len(),
            s.horizons
        ));
    }
    if s.solar.radiation.iter().any(|r| !(*r >= 0.0 && r.is_finite())) {
        out.push("solar radiation must be nonnegative".into());
    }
    if !(s.solar.area >= 0.0) {
        out.push("solar area must be nonnegative".into());
    }
    if !in_unit(s.solar.efficiency) {
        out.push("solar efficiency must be in (0,1]".into());
    }
    if s.renewable_chain.horizons() != s.horizons {
        out.push(format!(
            "renewable chain covers {} horizons, expected {}",
            s.renewable_chain.horizons(),
            s.horizons
        ));
    }
    out.extend(s.renewable_chain.violations());

    if s.solver.storage_points < 2 {
        out.push("solver.storage_points must be at least 2".into());
    }
    if s.solver.demand_points < 2 {
        out.push("solver.demand_points must be at least 2".into());
    }
    out
}
