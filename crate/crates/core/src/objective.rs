//! Profit, customer satisfaction and grid impact of a stage decision; their
//! normalized weighted sum; and the profit safeguard.

use serde::{Deserialize, Serialize};

use crate::demand::ElasticityModel;
use crate::error::{Error, Result};
use crate::grid::ImpactModel;
use crate::normal;
use crate::scenario::{Enforcement, SafeguardConfig, SatisfactionParams, StorageModel, UtilityWeights};

pub const NORMALIZER_FLOOR: f64 = 1e-9;
/// Half-width of the band in which the safeguard counts as binding.
pub const ACTIVE_BAND: f64 = 1e-3;

#[derive(Clone, Copy, Debug)]
pub struct StageContext<'a> {
    /// Zero-based horizon.
    pub horizon: usize,
    /// `I_k`, MWh.
    pub storage: f64,
    /// `u_k`, MWh.
    pub renewable: f64,
    /// `c_k`, $/MWh.
    pub wholesale_price: f64,
    pub storage_model: &'a StorageModel,
    pub elasticity: &'a ElasticityModel,
    pub impact: &'a ImpactModel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    /// $/MWh per station.
    pub prices: Vec<f64>,
    /// `o_k`, MWh bought at the wholesale price.
    pub procurement: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizers {
    pub w_max: f64,
    pub g_max: f64,
    pub f_max: f64,
}

impl Normalizers {
    pub fn floored(w_max: f64, g_max: f64, f_max: f64) -> Self {
        let f = |v: f64| if v.is_finite() { v.max(NORMALIZER_FLOOR) } else { NORMALIZER_FLOOR };
        Self {
            w_max: f(w_max),
            g_max: f(g_max),
            f_max: f(f_max),
        }
    }
}

/// `W_k = Σ p d − c o − η_s(I + η_c u + η_c o − Σd/η_d + w)`.
pub fn profit(ctx: &StageContext, dec: &Decision, demands: &[f64], noise: f64) -> f64 {
    let st = ctx.storage_model;
    let revenue: f64 = dec.prices.iter().zip(demands).map(|(p, d)| p * d).sum();
    let phi: f64 = demands.iter().sum();
    let held = ctx.storage + st.charge_eff * ctx.renewable + st.charge_eff * dec.procurement - phi / st.discharge_eff + noise;
    revenue - ctx.wholesale_price * dec.procurement - st.unit_storage_cost * held
}

/// `G = −(α/2)φ² + ωφ` without the range check.
pub fn satisfaction_value(phi: f64, params: &SatisfactionParams) -> f64 {
    -0.5 * params.alpha * phi * phi + params.omega * phi
}

/// Satisfaction for an aggregate demand in `[0, E]`.
pub fn satisfaction(phi: f64, params: &SatisfactionParams, capacity: f64) -> Result<f64> {
    if !(0.0..=capacity).contains(&phi) {
        return Err(Error::InvalidInput(format!(
            "aggregate demand {phi} outside [0, {capacity}]"
        )));
    }
    Ok(satisfaction_value(phi, params))
}

/// `λ1 W/W_max + λ2 G/G_max − λ3 F/F_max`.
pub fn stage_utility(w: f64, g: f64, f: f64, weights: &UtilityWeights, norm: &Normalizers) -> Result<f64> {
    for (v, name) in [(norm.w_max, "W_max"), (norm.g_max, "G_max"), (norm.f_max, "F_max")] {
        if !(v > 0.0) {
            return Err(Error::ZeroNormalizer(name));
        }
    }
    let [l1, l2, l3] = weights.lambda;
    Ok(l1 * w / norm.w_max + l2 * g / norm.g_max - l3 * f / norm.f_max)
}

/// Expectations of the three objectives under the demand and storage noise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpectedObjectives {
    pub profit: f64,
    pub satisfaction: f64,
    pub impact: f64,
    /// Standard deviation of the profit.
    pub profit_std: f64,
    /// Mean aggregate demand.
    pub demand: f64,
}

pub fn expected_objectives(ctx: &StageContext, dec: &Decision, sat: &SatisfactionParams) -> Result<ExpectedObjectives> {
    let model = ctx.elasticity;
    if dec.prices.len() != model.n_stations() {
        return Err(Error::Dimension("price vector length".into()));
    }
    // Unclamped mean: the expectation of the affine demand model itself.
    let mean = model.affine_mean(&dec.prices);
    let phi: f64 = mean.iter().sum();
    let var_total: f64 = model.variances.iter().sum();
    let w = profit(ctx, dec, &mean, 0.0);
    let g = satisfaction_value(phi, sat) - 0.5 * sat.alpha * var_total;
    let f_mean = ctx.impact.response(&mean).norm_squared();
    let f_var: f64 = (0..model.n_stations())
        .map(|i| ctx.impact.columns.column(i).norm_squared() * model.variances[i])
        .sum();
    Ok(ExpectedObjectives {
        profit: w,
        satisfaction: g,
        impact: f_mean + f_var,
        profit_std: profit_variance(ctx, dec).sqrt(),
        demand: phi,
    })
}

/// `E{Π_k}` evaluated directly from the objective definitions.
pub fn expected_stage_utility(
    ctx: &StageContext,
    dec: &Decision,
    sat: &SatisfactionParams,
    weights: &UtilityWeights,
    norm: &Normalizers,
) -> Result<f64> {
    let e = expected_objectives(ctx, dec, sat)?;
    stage_utility(e.profit, e.satisfaction, e.impact, weights, norm)
}

/// `Σ_j (p_j + η_s/η_d)² σ_j² + η_s² σ_w²`.
pub fn profit_variance(ctx: &StageContext, dec: &Decision) -> f64 {
    let st = ctx.storage_model;
    let tilt = st.unit_storage_cost / st.discharge_eff;
    let demand: f64 = dec
        .prices
        .iter()
        .zip(&ctx.elasticity.variances)
        .map(|(p, v)| (p + tilt).powi(2) * v)
        .sum();
    demand + (st.unit_storage_cost * st.process_noise_std).powi(2)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SafeguardProbability {
    pub probability: f64,
    /// Profit has no randomness; the probability is a 0/1 step.
    pub degenerate: bool,
}

/// `Prob(W_k < W_min) = Φ((W_min − E W_k)/σ)`.
pub fn safeguard_probability(ctx: &StageContext, dec: &Decision, w_min: f64) -> SafeguardProbability {
    let mean = ctx.elasticity.affine_mean(&dec.prices);
    let ew = profit(ctx, dec, &mean, 0.0);
    probability_from_moments(ew, profit_variance(ctx, dec).sqrt(), w_min)
}

pub fn probability_from_moments(mean: f64, std: f64, w_min: f64) -> SafeguardProbability {
    if std > 0.0 {
        SafeguardProbability {
            probability: normal::cdf((w_min - mean) / std),
            degenerate: false,
        }
    } else {
        let probability = if w_min > mean {
            1.0
        } else if w_min < mean {
            0.0
        } else {
            0.5
        };
        SafeguardProbability {
            probability,
            degenerate: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SafeguardStatus {
    pub probability: f64,
    pub satisfied: bool,
    pub active: bool,
    pub degenerate: bool,
}

impl SafeguardStatus {
    pub fn from_probability(p: SafeguardProbability, zeta: f64) -> Self {
        Self {
            probability: p.probability,
            satisfied: p.probability < zeta,
            active: (p.probability - zeta).abs() <= ACTIVE_BAND,
            degenerate: p.degenerate,
        }
    }

    /// A warning is due when the constraint binds or fails.
    pub fn warns(&self) -> bool {
        self.active || !self.satisfied
    }
}

pub fn safeguard_check(ctx: &StageContext, dec: &Decision, cfg: &SafeguardConfig) -> SafeguardStatus {
    SafeguardStatus::from_probability(safeguard_probability(ctx, dec, cfg.w_min), cfg.zeta)
}

/// Whether a decision with this status may be chosen under `cfg`.
pub fn admissible(status: &SafeguardStatus, cfg: &SafeguardConfig) -> bool {
    cfg.enforcement == Enforcement::WarnOnly || status.satisfied
}
