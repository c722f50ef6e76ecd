//! Single-horizon problem: the quadratic stage form, the price frontier over
//! aggregate demand, and the constrained maximization at one state.
//!
//! For a fixed aggregate demand `s` every term of the stage objective except
//! the procurement cost depends on prices only, and procurement is fixed by
//! the chosen next storage level. The stage is therefore solved as
//! `max_s [h(s) + max_{I'} (continuation(I') + κ I')]`, where `h(s)` is the
//! best price block for that demand (one small QP per breakpoint) and the
//! inner maximization runs over the storage window admitted by the procurement
//! bounds, the capacity and the safeguard.

use std::borrow::Cow;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal;
use crate::objective::{
    probability_from_moments, Decision, Normalizers, SafeguardProbability, SafeguardStatus, StageContext,
};
use crate::optimizer::qp::ConcaveQp;
use crate::scenario::{Enforcement, SafeguardConfig, SatisfactionParams, UtilityWeights};

/// `E{Π_k} = ½XᵀQX + BᵀX + r` with `X = [p_1..p_L, o]`. `r` here excludes the
/// continuation value, which depends on `X` through the next storage level.
#[derive(Clone, Debug, PartialEq)]
pub struct StageQp {
    pub q: DMatrix<f64>,
    pub b: DVector<f64>,
    pub r: f64,
}

impl StageQp {
    pub fn value(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.q * x)) + self.b.dot(x) + self.r
    }

    pub fn value_of(&self, dec: &Decision) -> f64 {
        let x = DVector::from_iterator(
            dec.prices.len() + 1,
            dec.prices.iter().copied().chain(std::iter::once(dec.procurement)),
        );
        self.value(&x)
    }
}

/// State-independent part of one horizon's stage problem.
#[derive(Clone, Debug)]
pub struct HorizonProblem {
    pub horizon: usize,
    /// Price block of `Q`.
    pub q_pp: DMatrix<f64>,
    /// Price part of `B`.
    pub b_p: DVector<f64>,
    /// Procurement coefficient `−λ̃1 (c + η_s η_c)`.
    pub b_o: f64,
    /// Part of `r` that does not depend on the state.
    pub r_const: f64,
    /// Coefficient of `I + η_c u` in `r`, `−λ̃1 η_s`.
    pub r_storage: f64,
    pub wholesale_price: f64,
    /// `γ0 + A p ≥ 0` rows.
    pub a: DMatrix<f64>,
    pub gamma0: DVector<f64>,
    /// Aggregate coefficients `Γ`.
    pub agg: DVector<f64>,
    pub agg0: f64,
    pub weights: UtilityWeights,
    pub normalizers: Normalizers,
}

impl HorizonProblem {
    pub fn new(ctx: &StageContext, sat: &SatisfactionParams, weights: &UtilityWeights, norm: &Normalizers) -> Result<Self> {
        let model = ctx.elasticity;
        let l = model.n_stations();
        if ctx.impact.n_stations() != l {
            return Err(Error::Dimension(format!(
                "impact model has {} stations, elasticity {l}",
                ctx.impact.n_stations()
            )));
        }
        for (v, name) in [(norm.w_max, "W_max"), (norm.g_max, "G_max"), (norm.f_max, "F_max")] {
            if !(v > 0.0) {
                return Err(Error::ZeroNormalizer(name));
            }
        }
        let st = ctx.storage_model;
        let l1 = weights.lambda[0] / norm.w_max;
        let l2 = weights.lambda[1] / norm.g_max;
        let l3 = weights.lambda[2] / norm.f_max;

        let a = model.demand_matrix();
        let gamma0 = DVector::from_column_slice(&model.intercepts);
        let agg = DVector::from_vec(model.aggregate_coefficients());
        let agg0 = model.aggregate_intercept();
        let c = &ctx.impact.columns;
        let theta = c * &a;
        let theta0 = c * &gamma0;
        let var_sum: f64 = model.variances.iter().sum();
        let impact_var: f64 = (0..l).map(|i| c.column(i).norm_squared() * model.variances[i]).sum();
        let tilt = st.unit_storage_cost / st.discharge_eff;

        let mut q_pp = (&a + a.transpose()) * l1 - &agg * agg.transpose() * (sat.alpha * l2) - theta.transpose() * &theta * (2.0 * l3);
        q_pp = (&q_pp + q_pp.transpose()) * 0.5;
        let b_p = (&gamma0 + &agg * tilt) * l1 + &agg * (l2 * (sat.omega - sat.alpha * agg0))
            - theta.transpose() * &theta0 * (2.0 * l3);
        let b_o = -l1 * (ctx.wholesale_price + st.unit_storage_cost * st.charge_eff);
        let r_const = l1 * tilt * agg0 + l2 * (sat.omega * agg0 - 0.5 * sat.alpha * (agg0 * agg0 + var_sum))
            - l3 * (theta0.norm_squared() + impact_var);
        let r_storage = -l1 * st.unit_storage_cost;
        Ok(Self {
            horizon: ctx.horizon,
            q_pp,
            b_p,
            b_o,
            r_const,
            r_storage,
            wholesale_price: ctx.wholesale_price,
            a,
            gamma0,
            agg,
            agg0,
            weights: *weights,
            normalizers: *norm,
        })
    }

    pub fn n_stations(&self) -> usize {
        self.b_p.len()
    }

    /// `½pᵀQ_pp p + b_pᵀp`.
    pub fn price_value(&self, p: &DVector<f64>) -> f64 {
        0.5 * p.dot(&(&self.q_pp * p)) + self.b_p.dot(p)
    }

    pub fn to_qp(&self, storage: f64, renewable: f64, charge_eff: f64) -> StageQp {
        let l = self.n_stations();
        let mut q = DMatrix::zeros(l + 1, l + 1);
        q.view_mut((0, 0), (l, l)).copy_from(&self.q_pp);
        let mut b = DVector::zeros(l + 1);
        b.rows_mut(0, l).copy_from(&self.b_p);
        b[l] = self.b_o;
        StageQp {
            q,
            b,
            r: self.r_const + self.r_storage * (storage + charge_eff * renewable),
        }
    }
}

/// Quadratic form of the expected stage utility at `ctx`.
pub fn assemble_stage_qp(
    ctx: &StageContext,
    sat: &SatisfactionParams,
    weights: &UtilityWeights,
    norm: &Normalizers,
) -> Result<StageQp> {
    let hp = HorizonProblem::new(ctx, sat, weights, norm)?;
    Ok(hp.to_qp(ctx.storage, ctx.renewable, ctx.storage_model.charge_eff))
}

/// Best price vector for one aggregate demand level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    pub demand: f64,
    pub prices: Vec<f64>,
    /// `½pᵀQ_pp p + b_pᵀp`.
    pub value: f64,
    /// `Σ p_j d_j + η_s s / η_d`: expected profit before procurement and storage terms.
    pub revenue: f64,
    /// Profit variance.
    pub profit_var: f64,
}

#[derive(Clone, Debug)]
pub struct PriceFrontier {
    pub points: Vec<FrontierPoint>,
    /// Frontiers with the profit term progressively tilted up, ending at pure
    /// revenue maximization; built on first use, never unless requested.
    safe: OnceLock<std::result::Result<Vec<Vec<FrontierPoint>>, String>>,
    with_safe: bool,
    s_max: f64,
}

/// Market and storage constants the frontier needs besides the QP.
#[derive(Clone, Copy, Debug)]
pub struct FrontierParams<'a> {
    pub variances: &'a [f64],
    pub unit_storage_cost: f64,
    pub discharge_eff: f64,
    pub process_noise_std: f64,
}

/// Extra profit weight of the tilted frontiers, in units of `1/W_max`.
const PROFIT_TILTS: [f64; 5] = [0.1, 0.3, 1.0, 3.0, 10.0];

impl PriceFrontier {
    /// Solves the price QP at `n` equispaced aggregate demands on `[0, s_max]`.
    /// With `safe`, also traces profit-tilted frontiers at the same demands as
    /// candidates for states where the safeguard excludes the untilted prices.
    pub fn build(hp: &HorizonProblem, params: FrontierParams, s_max: f64, n: usize, safe: bool) -> Result<Self> {
        let zero = hp
            .a
            .clone()
            .lu()
            .solve(&(-&hp.gamma0))
            .ok_or_else(|| Error::InvalidInput("singular elasticity matrix".into()))?;
        let s_max = s_max.clamp(0.0, hp.agg0);
        // Without the profit term the price block is only semidefinite; a
        // small multiple of the profit block breaks the ties in favour of
        // profit.
        let (q, c) = tie_broken(hp, &params);
        let points = trace(hp, &params, &q, &c, &zero, s_max, n)?;
        Ok(Self {
            points,
            safe: OnceLock::new(),
            with_safe: safe,
            s_max,
        })
    }

    /// The tilted frontiers, tracing them on first call.
    pub fn safe(&self, hp: &HorizonProblem, params: FrontierParams) -> Result<&[Vec<FrontierPoint>]> {
        if !self.with_safe {
            return Ok(&[]);
        }
        let built = self.safe.get_or_init(|| {
            let n = self.points.len();
            let zero = hp.a.clone().lu().solve(&(-&hp.gamma0)).ok_or("singular elasticity matrix")?;
            let (q, c) = tie_broken(hp, &params);
            let (q_w, b_w) = profit_block(hp, &params);
            let unit = 1.0 / hp.normalizers.w_max;
            let mut branches = Vec::with_capacity(PROFIT_TILTS.len() + 1);
            for tilt in PROFIT_TILTS {
                let qt = &q + &q_w * (tilt * unit);
                let ct = &c + &b_w * (tilt * unit);
                branches.push(trace(hp, &params, &qt, &ct, &zero, self.s_max, n).map_err(|e| e.to_string())?);
            }
            branches.push(trace(hp, &params, &q_w, &b_w, &zero, self.s_max, n).map_err(|e| e.to_string())?);
            Ok(branches)
        });
        built.as_deref().map_err(|e| Error::InvalidInput(e.clone()))
    }

    /// Prices linearly interpolated between the breakpoints around `s`.
    pub fn at(&self, hp: &HorizonProblem, params: FrontierParams, s: f64) -> FrontierPoint {
        interp(&self.points, hp, &params, s)
    }


}

fn trace(
    hp: &HorizonProblem,
    params: &FrontierParams,
    q: &DMatrix<f64>,
    c: &DVector<f64>,
    zero: &DVector<f64>,
    s_max: f64,
    n: usize,
) -> Result<Vec<FrontierPoint>> {
    let l = hp.n_stations();
    let mut points = Vec::with_capacity(n);
    for i in 0..n {
        let s = if n == 1 { s_max } else { s_max * i as f64 / (n - 1) as f64 };
        let frac = if hp.agg0 > 0.0 { s / hp.agg0 } else { 0.0 };
        // (1 − s/Γ0)·p_zero gives demands (s/Γ0)·γ0: feasible for every s.
        let x0 = zero * (1.0 - frac);
        let p = if frac <= 0.0 || frac >= 1.0 || l == 1 {
            x0
        } else {
            let qp = ConcaveQp {
                q: q.clone(),
                c: c.clone(),
                equality: Some((hp.agg.clone(), s - hp.agg0)),
                g: DMatrix::from_fn(2 * l, l, |r, c| if r < l { f64::from(u8::from(r == c)) } else { hp.a[(r - l, c)] }),
                h: DVector::from_fn(2 * l, |r, _| if r < l { 0.0 } else { -hp.gamma0[r - l] }),
            };
            qp.solve(&x0)?.x
        };
        points.push(point(hp, params, s, p));
    }
    Ok(points)
}

fn interp(pts: &[FrontierPoint], hp: &HorizonProblem, params: &FrontierParams, s: f64) -> FrontierPoint {
    let n = pts.len();
    if n == 1 || s <= pts[0].demand {
        return pts[0].clone();
    }
    if s >= pts[n - 1].demand {
        return pts[n - 1].clone();
    }
    let j = pts.partition_point(|p| p.demand <= s).clamp(1, n - 1);
    let (a, b) = (&pts[j - 1], &pts[j]);
    let t = (s - a.demand) / (b.demand - a.demand);
    let p = DVector::from_iterator(
        a.prices.len(),
        a.prices.iter().zip(&b.prices).map(|(x, y)| x + t * (y - x)),
    );
    point(hp, params, s, p)
}

/// Quadratic and linear parts of the expected revenue in the prices.
fn profit_block(hp: &HorizonProblem, params: &FrontierParams) -> (DMatrix<f64>, DVector<f64>) {
    let tilt = params.unit_storage_cost / params.discharge_eff;
    (&hp.a + hp.a.transpose(), &hp.gamma0 + &hp.agg * tilt)
}

fn tie_broken(hp: &HorizonProblem, params: &FrontierParams) -> (DMatrix<f64>, DVector<f64>) {
    let l = hp.n_stations();
    let q = hp.q_pp.clone();
    let floor = 1e-9 * q.amax().max(1e-12);
    if (-&q).symmetric_eigenvalues().min() >= floor {
        return (q, hp.b_p.clone());
    }
    let (q_w, b_w) = profit_block(hp, params);
    let scale = 1e-6 * q.amax().max(hp.b_p.amax() / 100.0).max(1e-12) / q_w.amax().max(f64::MIN_POSITIVE);
    let mut q = q + q_w * scale;
    let ridge = (-&q).symmetric_eigenvalues().min();
    if ridge < floor {
        for i in 0..l {
            q[(i, i)] -= floor - ridge.min(0.0);
        }
    }
    (q, &hp.b_p + b_w * scale)
}

fn point(hp: &HorizonProblem, params: &FrontierParams, s: f64, p: DVector<f64>) -> FrontierPoint {
    let p = p.map(|v| v.max(0.0));
    let d = &hp.gamma0 + &hp.a * &p;
    let tilt = params.unit_storage_cost / params.discharge_eff;
    let profit_var = p
        .iter()
        .zip(params.variances)
        .map(|(pi, v)| (pi + tilt).powi(2) * v)
        .sum::<f64>()
        + (params.unit_storage_cost * params.process_noise_std).powi(2);
    FrontierPoint {
        demand: s,
        value: hp.price_value(&p),
        revenue: p.dot(&d) + tilt * s,
        profit_var,
        prices: p.iter().copied().collect(),
    }
}

/// Sparse table answering "index of the largest value in `[l, r]`", lowest
/// index on ties.
#[derive(Clone, Debug)]
struct RangeMax {
    table: Vec<Vec<u32>>,
}

impl RangeMax {
    fn new(vals: &[f64]) -> Self {
        let n = vals.len();
        let mut table = vec![(0..n as u32).collect::<Vec<u32>>()];
        let mut width = 1;
        while 2 * width <= n {
            let prev = table.last().unwrap();
            let next = (0..=n - 2 * width)
                .map(|i| {
                    let (a, b) = (prev[i], prev[i + width]);
                    if vals[b as usize] > vals[a as usize] {
                        b
                    } else {
                        a
                    }
                })
                .collect();
            table.push(next);
            width *= 2;
        }
        Self { table }
    }

    fn query(&self, vals: &[f64], l: usize, r: usize) -> usize {
        let k = (usize::BITS - (r - l + 1).leading_zeros() - 1) as usize;
        let a = self.table[k][l] as usize;
        let b = self.table[k][r + 1 - (1 << k)] as usize;
        if vals[b] > vals[a] {
            b
        } else {
            a
        }
    }
}

/// `E_{u'} J_{k+1}(·, u')` on the storage grid for one (horizon, level), with
/// the procurement slope `κ` folded in for window maximization.
#[derive(Clone, Debug)]
pub struct Continuation {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    slope: f64,
    tilted: Vec<f64>,
    index: RangeMax,
}

impl Continuation {
    pub fn new(grid: Vec<f64>, values: Vec<f64>, slope: f64) -> Self {
        let tilted: Vec<f64> = grid.iter().zip(&values).map(|(x, v)| v + slope * x).collect();
        let index = RangeMax::new(&tilted);
        Self {
            grid,
            values,
            slope,
            tilted,
            index,
        }
    }

    pub fn zero(grid: Vec<f64>, slope: f64) -> Self {
        let n = grid.len();
        Self::new(grid, vec![0.0; n], slope)
    }

    /// Linear interpolation of the continuation value.
    pub fn value(&self, x: f64) -> f64 {
        interpolate(&self.grid, &self.values, x)
    }

    fn tilted_at(&self, x: f64) -> f64 {
        self.value(x) + self.slope * x
    }

    /// Best `I'` in `[lo, hi]`, lowest on ties.
    fn best_in(&self, lo: f64, hi: f64) -> (f64, f64) {
        let mut best = (lo, self.tilted_at(lo));
        let first = self.grid.partition_point(|&g| g <= lo);
        let last = self.grid.partition_point(|&g| g < hi);
        if first < last {
            let i = self.index.query(&self.tilted, first, last - 1);
            if better(self.tilted[i], best.1) {
                best = (self.grid[i], self.tilted[i]);
            }
        }
        if hi > best.0 {
            let v = self.tilted_at(hi);
            if better(v, best.1) {
                best = (hi, v);
            }
        }
        best
    }
}

fn better(candidate: f64, incumbent: f64) -> bool {
    candidate > incumbent + 1e-12 * (1.0 + incumbent.abs())
}

/// Piecewise-linear interpolation on a sorted grid, clamped to the ends.
/// Infinite values stay infinite without producing NaN.
pub fn interpolate(grid: &[f64], values: &[f64], x: f64) -> f64 {
    let n = grid.len();
    if n == 1 || x <= grid[0] {
        return values[0];
    }
    if x >= grid[n - 1] {
        return values[n - 1];
    }
    let j = grid.partition_point(|&g| g <= x).clamp(1, n - 1);
    let t = (x - grid[j - 1]) / (grid[j] - grid[j - 1]);
    if t == 0.0 {
        return values[j - 1];
    }
    if t == 1.0 {
        return values[j];
    }
    let (a, b) = (values[j - 1], values[j]);
    if !(a.is_finite() && b.is_finite()) {
        return a.min(b);
    }
    a + t * (b - a)
}

/// Everything the per-state search needs about the storage system.
#[derive(Clone, Copy, Debug)]
pub struct StageLimits {
    pub capacity: f64,
    pub charge_eff: f64,
    pub discharge_eff: f64,
    pub unit_storage_cost: f64,
    pub o_max: f64,
    pub safeguard: SafeguardConfig,
    pub refine: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageSolution {
    pub decision: Decision,
    /// `E{Π_k}` of the decision.
    pub expected_utility: f64,
    /// `E_{u'} J_{k+1}(I', u')`.
    pub continuation: f64,
    /// Sum of the two.
    pub value: f64,
    /// Expected next storage `I'`.
    pub next_storage: f64,
    /// Expected aggregate demand.
    pub demand: f64,
    pub safeguard: SafeguardStatus,
    /// No admissible candidate existed; the least-risk one was taken.
    pub fallback: bool,
}

struct Candidate<'a> {
    value: f64,
    next: f64,
    point: Cow<'a, FrontierPoint>,
}

/// Maximizes `E{Π_k} + continuation` at state `(storage, renewable)`.
pub fn solve_state(
    hp: &HorizonProblem,
    frontier: &PriceFrontier,
    params: FrontierParams,
    limits: &StageLimits,
    cont: &Continuation,
    storage: f64,
    renewable: f64,
) -> Result<StageSolution> {
    let eta_c = limits.charge_eff;
    let eta_d = limits.discharge_eff;
    let inflow = storage + eta_c * renewable;
    let kappa_w = hp.wholesale_price + limits.unit_storage_cost * eta_c;
    let penalize = limits.safeguard.enforcement == Enforcement::Penalize;
    let zq = normal::inv_cdf(limits.safeguard.zeta);
    let base = hp.r_const + hp.r_storage * inflow;

    // Storage window for aggregate demand s, before the safeguard.
    let window = |s: f64| -> Option<(f64, f64)> {
        let lo = (inflow - s / eta_d).max(0.0);
        let hi = (inflow + eta_c * limits.o_max - s / eta_d).min(limits.capacity);
        if lo > hi + 1e-9 * (1.0 + hi.abs()) {
            None
        } else {
            Some((lo, hi.max(lo)))
        }
    };
    let procurement = |s: f64, next: f64| ((next - inflow + s / eta_d) / eta_c).clamp(0.0, limits.o_max);
    let mean_profit = |pt: &FrontierPoint, o: f64| pt.revenue - limits.unit_storage_cost * inflow - kappa_w * o;

    // Value and next storage of the best admissible choice for one frontier point.
    let score = |pt: &FrontierPoint, guard: bool| -> Option<(f64, f64)> {
        let s = pt.demand;
        let (mut lo, mut hi) = window(s)?;
        if guard {
            let sigma = pt.profit_var.sqrt();
            // E W > W_min − z_ζ σ, solved for o then mapped to I'.
            let need = limits.safeguard.w_min - zq * sigma;
            let room = pt.revenue - limits.unit_storage_cost * inflow - need;
            let to_next = |o: f64| inflow - s / eta_d + eta_c * o;
            if kappa_w > 0.0 {
                let bound = to_next(room / kappa_w);
                hi = hi.min(bound - 1e-9 * (1.0 + bound.abs()));
            } else if kappa_w < 0.0 {
                let bound = to_next(room / kappa_w);
                lo = lo.max(bound + 1e-9 * (1.0 + bound.abs()));
            } else if room <= 0.0 {
                return None;
            }
            if lo > hi {
                return None;
            }
        }
        let (next, tilted) = cont.best_in(lo, hi);
        Some((pt.value + base + (hp.b_o / eta_c) * (s / eta_d - inflow) + tilted, next))
    };
    let scan = |best: &mut Option<(Option<usize>, usize, f64, f64)>, b: Option<usize>, pts: &[FrontierPoint]| {
        for (i, pt) in pts.iter().enumerate() {
            if let Some((value, next)) = score(pt, penalize) {
                if best.is_none_or(|(_, _, v, _)| better(value, v)) {
                    *best = Some((b, i, value, next));
                }
            }
        }
    };

    let mut best = None;
    scan(&mut best, None, &frontier.points);
    // The tilted frontiers never beat the untilted one where the safeguard
    // leaves its optimum in place.
    let binding = penalize && {
        let free = frontier
            .points
            .iter()
            .filter_map(|pt| score(pt, false))
            .fold(f64::NEG_INFINITY, |m, (v, _)| m.max(v));
        best.is_none_or(|(_, _, v, _)| v < free)
    };
    let safe = if binding { frontier.safe(hp, params)? } else { &[] };
    for (j, pts) in safe.iter().enumerate() {
        scan(&mut best, Some(j), pts);
    }

    let mut fallback = false;
    let chosen = match best {
        Some((b, i, value, next)) => {
            let pts = b.map_or(&frontier.points, |j| &safe[j]);
            let found = Candidate {
                value,
                next,
                point: Cow::Borrowed(&pts[i]),
            };
            if limits.refine && pts.len() > 2 {
                let lo = pts[i.saturating_sub(1)].demand;
                let hi = pts[(i + 1).min(pts.len() - 1)].demand;
                let f = |s: f64| {
                    let pt = interp(pts, hp, &params, s);
                    score(&pt, penalize).map(|(v, n)| (v, n, pt))
                };
                let refined = golden_max(lo, hi, 40, |s| f(s).map_or(f64::NEG_INFINITY, |c| c.0));
                match f(refined) {
                    Some((v, n, pt)) if better(v, value) => Candidate {
                        value: v,
                        next: n,
                        point: Cow::Owned(pt),
                    },
                    _ => found,
                }
            } else {
                found
            }
        }
        None => {
            fallback = true;
            least_risk(frontier, safe, &window, limits, inflow, kappa_w, &mean_profit, hp, cont, base)
                .ok_or_else(|| Error::Infeasible {
                    horizon: hp.horizon + 1,
                    reason: format!("storage cannot absorb the flows at I={storage:.3}, u={renewable:.3}"),
                })?
        }
    };

    let demand = chosen.point.demand;
    let o = procurement(demand, chosen.next);
    let probability = probability_from_moments(mean_profit(&chosen.point, o), chosen.point.profit_var.sqrt(), limits.safeguard.w_min).probability;
    let decision = Decision {
        prices: chosen.point.prices.clone(),
        procurement: o,
    };
    let expected_utility = chosen.point.value + hp.b_o * o + base;
    let continuation = cont.value(chosen.next);
    let status = SafeguardStatus::from_probability(
        SafeguardProbability {
            probability,
            degenerate: chosen.point.profit_var <= 0.0,
        },
        limits.safeguard.zeta,
    );
    Ok(StageSolution {
        decision,
        expected_utility,
        continuation,
        value: expected_utility + continuation,
        next_storage: chosen.next,
        demand,
        safeguard: status,
        fallback,
    })
}

/// The candidate with the lowest safeguard probability, used when nothing is
/// admissible.
#[allow(clippy::too_many_arguments)]
fn least_risk<'a>(
    frontier: &'a PriceFrontier,
    safe: &'a [Vec<FrontierPoint>],
    window: &dyn Fn(f64) -> Option<(f64, f64)>,
    limits: &StageLimits,
    inflow: f64,
    kappa_w: f64,
    mean_profit: &dyn Fn(&FrontierPoint, f64) -> f64,
    hp: &HorizonProblem,
    cont: &Continuation,
    base: f64,
) -> Option<Candidate<'a>> {
    let eta_c = limits.charge_eff;
    let eta_d = limits.discharge_eff;
    let mut best: Option<(f64, Candidate)> = None;
    for pt in frontier.points.iter().chain(safe.iter().flatten()) {
        let s = pt.demand;
        let Some((lo, hi)) = window(s) else { continue };
        let next = if kappa_w >= 0.0 { lo } else { hi };
        let o = ((next - inflow + s / eta_d) / eta_c).clamp(0.0, limits.o_max);
        let probability = probability_from_moments(mean_profit(pt, o), pt.profit_var.sqrt(), limits.safeguard.w_min).probability;
        let value = pt.value + base + hp.b_o * o + cont.value(next);
        let replace = match &best {
            None => true,
            Some((p, b)) => probability < *p || (probability == *p && better(value, b.value)),
        };
        if replace {
            best = Some((
                probability,
                Candidate {
                    value,
                    next,
                    point: Cow::Borrowed(pt),
                },
            ));
        }
    }
    best.map(|(_, c)| c)
}

/// Golden-section search for a maximizer of `f` on `[a, b]`.
pub fn golden_max(mut a: f64, mut b: f64, iters: usize, f: impl Fn(f64) -> f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..iters {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    if fc >= fd {
        c
    } else {
        d
    }
}
