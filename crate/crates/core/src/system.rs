//! A scenario together with everything derived from it once: the linearized
//! grid, the impact model and the per-horizon normalizers.

use crate::error::{Error, Result};
use crate::grid::{linearize, ImpactModel, Linearization, PowerFlowOptions};
use crate::objective::{satisfaction_value, Normalizers, StageContext};
use crate::optimizer::stage::{
    solve_state, Continuation, FrontierParams, HorizonProblem, PriceFrontier, StageLimits,
};
use crate::par::map_indexed;
use crate::scenario::{Enforcement, SafeguardConfig, Scenario, UtilityWeights};

#[derive(Clone, Debug)]
pub struct System {
    pub scenario: Scenario,
    /// Absent when the impact model was supplied directly.
    pub linearization: Option<Linearization>,
    pub impact: ImpactModel,
    pub normalizers: Vec<Normalizers>,
}

impl System {
    pub fn new(scenario: Scenario) -> Result<Self> {
        let lin = linearize(&scenario.network, PowerFlowOptions::default())?;
        let impact = ImpactModel::new(&lin.inverse, &scenario.network, &scenario.station_map)?;
        let mut sys = Self::with_impact(scenario, impact)?;
        sys.linearization = Some(lin);
        Ok(sys)
    }

    pub fn with_impact(scenario: Scenario, impact: ImpactModel) -> Result<Self> {
        let bad = crate::scenario::validate(&scenario);
        if !bad.is_empty() {
            return Err(Error::Validation(bad));
        }
        if impact.n_stations() != scenario.stations {
            return Err(Error::Dimension(format!(
                "impact model has {} stations, scenario {}",
                impact.n_stations(),
                scenario.stations
            )));
        }
        let mut sys = Self {
            scenario,
            linearization: None,
            impact,
            normalizers: Vec::new(),
        };
        sys.normalizers = sys.compute_normalizers()?;
        Ok(sys)
    }

    pub fn horizons(&self) -> usize {
        self.scenario.horizons
    }

    pub fn renewable(&self, k: usize, level: usize) -> f64 {
        self.scenario.renewable_chain.values[k][level]
    }

    pub fn context(&self, k: usize, storage: f64, renewable: f64) -> StageContext<'_> {
        StageContext {
            horizon: k,
            storage,
            renewable,
            wholesale_price: self.scenario.wholesale_prices[k],
            storage_model: &self.scenario.storage,
            elasticity: &self.scenario.elasticity,
            impact: &self.impact,
        }
    }

    pub fn frontier_params(&self) -> FrontierParams<'_> {
        let st = &self.scenario.storage;
        FrontierParams {
            variances: &self.scenario.elasticity.variances,
            unit_storage_cost: st.unit_storage_cost,
            discharge_eff: st.discharge_eff,
            process_noise_std: st.process_noise_std,
        }
    }

    pub fn limits(&self, safeguard: SafeguardConfig) -> StageLimits {
        let st = &self.scenario.storage;
        StageLimits {
            capacity: st.capacity,
            charge_eff: st.charge_eff,
            discharge_eff: st.discharge_eff,
            unit_storage_cost: st.unit_storage_cost,
            o_max: self.scenario.o_max,
            safeguard,
            refine: self.scenario.solver.refine,
        }
    }

    pub fn horizon_problem(&self, k: usize, weights: &UtilityWeights, norm: &Normalizers) -> Result<HorizonProblem> {
        let ctx = self.context(k, 0.0, 0.0);
        HorizonProblem::new(&ctx, &self.scenario.satisfaction, weights, norm)
    }

    /// Largest aggregate demand the frontier covers: the zero-price demand,
    /// capped at the storage capacity where satisfaction is defined.
    pub fn demand_ceiling(&self) -> f64 {
        self.scenario.elasticity.aggregate_intercept().min(self.scenario.storage.capacity)
    }

    pub fn frontier(&self, hp: &HorizonProblem) -> Result<PriceFrontier> {
        PriceFrontier::build(
            hp,
            self.frontier_params(),
            self.demand_ceiling(),
            self.scenario.solver.demand_points,
            self.scenario.safeguard.enforcement == Enforcement::Penalize,
        )
    }

    /// Reference state for the normalizers: half-full storage and the mean
    /// renewable level.
    pub fn reference_state(&self, k: usize) -> (f64, f64) {
        let vals = &self.scenario.renewable_chain.values[k];
        let u = vals.iter().sum::<f64>() / vals.len() as f64;
        (0.5 * self.scenario.storage.capacity, u)
    }

    fn compute_normalizers(&self) -> Result<Vec<Normalizers>> {
        let sc = &self.scenario;
        let unit = Normalizers {
            w_max: 1.0,
            g_max: 1.0,
            f_max: 1.0,
        };
        let profit_only = UtilityWeights::new(1.0, 0.0, 0.0);
        let warn = SafeguardConfig {
            enforcement: Enforcement::WarnOnly,
            ..sc.safeguard
        };
        let limits = self.limits(warn);
        let grid = vec![0.0, sc.storage.capacity];
        let out = map_indexed(sc.solver.execution, sc.horizons, |k| -> Result<Normalizers> {
            let (storage, u) = self.reference_state(k);
            let hp = self.horizon_problem(k, &profit_only, &unit)?;
            let frontier = self.frontier(&hp)?;
            let cont = Continuation::zero(grid.clone(), hp.b_o / sc.storage.charge_eff);
            let best = solve_state(&hp, &frontier, self.frontier_params(), &limits, &cont, storage, u)?;
            let st = &sc.storage;
            let reach = st.discharge_eff * (storage + st.charge_eff * (u + sc.o_max));
            let s_top = self.demand_ceiling().min(reach);
            let sat = &sc.satisfaction;
            let g_max = satisfaction_value(s_top.min(sat.omega / sat.alpha), sat);
            let agg0 = sc.elasticity.aggregate_intercept();
            let frac = if agg0 > 0.0 { (s_top / agg0).min(1.0) } else { 0.0 };
            let d: Vec<f64> = sc.elasticity.intercepts.iter().map(|g| g * frac).collect();
            let f_max = self.impact.impact(&d)?;
            Ok(Normalizers::floored(best.expected_utility, g_max, f_max))
        });
        out.into_iter().collect()
    }
}
