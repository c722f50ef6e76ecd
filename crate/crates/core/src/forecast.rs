//! Renewable generation as a per-horizon Markov chain, plus the hourly solar
//! and wholesale price series.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal;

const ROW_TOL: f64 = 1e-12;

/// Level `i` at horizon `k` produces `values[k][i]` MWh; `transitions[k][i][j]`
/// is the probability of moving to level `j` at horizon `k + 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkovChain {
    pub values: Vec<Vec<f64>>,
    pub transitions: Vec<Vec<Vec<f64>>>,
    pub initial_level: usize,
}

impl MarkovChain {
    pub fn levels(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    pub fn horizons(&self) -> usize {
        self.values.len()
    }

    /// Single-level chain that always produces `energy[k]`.
    pub fn deterministic(energy: &[f64]) -> Self {
        Self {
            values: energy.iter().map(|&e| vec![e]).collect(),
            transitions: vec![vec![vec![1.0]]; energy.len()],
            initial_level: 0,
        }
    }

    /// Level values `i/(D−1)` of the per-horizon maximum, so level 0 is always
    /// exactly zero output.
    pub fn quantized_values(max_energy: &[f64], levels: usize) -> Vec<Vec<f64>> {
        max_energy
            .iter()
            .map(|&m| {
                (0..levels)
                    .map(|i| if levels == 1 { m } else { m * i as f64 / (levels - 1) as f64 })
                    .collect()
            })
            .collect()
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let d = self.levels();
        if d == 0 || self.values.iter().any(|v| v.len() != d) {
            out.push("renewable chain needs the same positive number of levels at every horizon".into());
            return out;
        }
        if self.transitions.len() != self.values.len() {
            out.push("renewable chain needs one transition matrix per horizon".into());
            return out;
        }
        if self.initial_level >= d {
            out.push("renewable initial level is out of range".into());
        }
        if self.values.iter().flatten().any(|v| !v.is_finite() || *v < 0.0) {
            out.push("renewable level values must be finite and nonnegative".into());
        }
        for (k, t) in self.transitions.iter().enumerate() {
            if t.len() != d || t.iter().any(|r| r.len() != d) {
                out.push(format!("transition matrix {} must be {d}x{d}", k + 1));
                continue;
            }
            for (i, row) in t.iter().enumerate() {
                let sum: f64 = row.iter().sum();
                if row.iter().any(|p| !(0.0..=1.0).contains(p)) || (sum - 1.0).abs() > ROW_TOL * d as f64 {
                    out.push(format!("transition matrix {} row {} is not stochastic", k + 1, i + 1));
                }
            }
        }
        out
    }
}

/// Counts level-to-level moves per horizon across days. Each trajectory holds
/// `K + 1` zero-based levels; rows never visited become uniform.
pub fn estimate_transitions(history: &[Vec<usize>], levels: usize, horizons: usize) -> Result<Vec<Vec<Vec<f64>>>> {
    if history.is_empty() {
        return Err(Error::InvalidInput("empty renewable history".into()));
    }
    if levels == 0 {
        return Err(Error::InvalidInput("at least one renewable level is required".into()));
    }
    let mut counts = vec![vec![vec![0u64; levels]; levels]; horizons];
    for (day, traj) in history.iter().enumerate() {
        if traj.len() != horizons + 1 {
            return Err(Error::InvalidInput(format!(
                "trajectory {} has {} levels, expected {}",
                day + 1,
                traj.len(),
                horizons + 1
            )));
        }
        if let Some(bad) = traj.iter().find(|&&l| l >= levels) {
            return Err(Error::InvalidInput(format!("level {bad} out of range in trajectory {}", day + 1)));
        }
        for k in 0..horizons {
            counts[k][traj[k]][traj[k + 1]] += 1;
        }
    }
    Ok(counts
        .into_iter()
        .map(|m| {
            m.into_iter()
                .map(|row| {
                    let total: u64 = row.iter().sum();
                    if total == 0 {
                        vec![1.0 / levels as f64; levels]
                    } else {
                        row.iter().map(|&c| c as f64 / total as f64).collect()
                    }
                })
                .collect()
        })
        .collect())
}

/// `Σ_j T_k[i][j] f(j)`.
pub fn expected_next(chain: &MarkovChain, k: usize, level: usize, f: impl Fn(usize) -> f64) -> f64 {
    chain.transitions[k][level].iter().enumerate().map(|(j, &p)| if p == 0.0 { 0.0 } else { p * f(j) }).sum()
}

fn draw<R: Rng + ?Sized>(row: &[f64], rng: &mut R) -> usize {
    let x: f64 = rng.gen();
    let mut acc = 0.0;
    for (j, &p) in row.iter().enumerate() {
        acc += p;
        if x < acc {
            return j;
        }
    }
    row.iter().rposition(|&p| p > 0.0).unwrap_or(row.len() - 1)
}

/// Levels at horizons `0..K`, starting from `start`.
pub fn sample_path<R: Rng + ?Sized>(chain: &MarkovChain, start: usize, rng: &mut R) -> Vec<usize> {
    let mut path = Vec::with_capacity(chain.horizons());
    let mut level = start;
    for k in 0..chain.horizons() {
        path.push(level);
        if k + 1 < chain.horizons() {
            level = draw(&chain.transitions[k][level], rng);
        }
    }
    path
}

/// Next level after horizon `k`.
pub fn sample_next<R: Rng + ?Sized>(chain: &MarkovChain, k: usize, level: usize, rng: &mut R) -> usize {
    draw(&chain.transitions[k][level], rng)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolarProfile {
    /// kW/m² averaged over each hour.
    pub radiation: Vec<f64>,
    /// m².
    pub area: f64,
    #[serde(default = "default_efficiency")]
    pub efficiency: f64,
}

fn default_efficiency() -> f64 {
    0.2
}

/// MWh produced in each one-hour horizon.
pub fn solar_to_energy(profile: &SolarProfile) -> Result<Vec<f64>> {
    if profile.radiation.iter().any(|r| *r < 0.0 || !r.is_finite()) {
        return Err(Error::InvalidInput("solar radiation must be finite and nonnegative".into()));
    }
    Ok(profile
        .radiation
        .iter()
        .map(|r| r * profile.area * profile.efficiency / 1000.0)
        .collect())
}

/// Parameters of the synthetic cloud-cover history used to fit a chain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticCloud {
    pub levels: usize,
    pub days: usize,
    /// Hour-to-hour correlation of the latent cloud process.
    pub persistence: f64,
    /// Output fraction under the heaviest cloud cover.
    pub clear_sky_min: f64,
}

impl Default for SyntheticCloud {
    fn default() -> Self {
        Self {
            levels: 10,
            days: 365,
            persistence: 0.8,
            clear_sky_min: 0.2,
        }
    }
}

/// Simulates `days` of hourly cloud cover, quantizes the clear-sky fraction
/// into levels and estimates per-horizon transitions from the counts.
pub fn synthetic_chain<R: Rng + ?Sized>(clear_sky: &[f64], cfg: &SyntheticCloud, rng: &mut R) -> Result<MarkovChain> {
    if cfg.levels == 0 || cfg.days == 0 {
        return Err(Error::InvalidInput("synthetic renewable model needs levels and days".into()));
    }
    if !(0.0..1.0).contains(&cfg.persistence) || !(0.0..=1.0).contains(&cfg.clear_sky_min) {
        return Err(Error::InvalidInput("persistence must be in [0,1) and clear_sky_min in [0,1]".into()));
    }
    let k = clear_sky.len();
    let d = cfg.levels;
    let quantize = |x: f64| {
        let frac = cfg.clear_sky_min + (1.0 - cfg.clear_sky_min) * normal::cdf(x);
        ((frac * (d - 1) as f64).round() as usize).min(d - 1)
    };
    let shock = (1.0 - cfg.persistence * cfg.persistence).sqrt();
    let history: Vec<Vec<usize>> = (0..cfg.days)
        .map(|_| {
            let mut x: f64 = rng.sample(rand_distr::StandardNormal);
            let mut traj = Vec::with_capacity(k + 1);
            for _ in 0..=k {
                traj.push(quantize(x));
                let z: f64 = rng.sample(rand_distr::StandardNormal);
                x = cfg.persistence * x + shock * z;
            }
            traj
        })
        .collect();
    let transitions = estimate_transitions(&history, d, k)?;
    let mut first = vec![0usize; d];
    for t in &history {
        first[t[0]] += 1;
    }
    let initial_level = (0..d).max_by_key(|&i| (first[i], std::cmp::Reverse(i))).unwrap_or(0);
    Ok(MarkovChain {
        values: MarkovChain::quantized_values(clear_sky, d),
        transitions,
        initial_level,
    })
}

/// Reads a `horizon,value` CSV; horizons must run 1..=n in order.
pub fn read_series(path: &Path) -> Result<Vec<f64>> {
    let csv_err = |message: String| Error::Csv {
        path: path.into(),
        message,
    };
    let mut rdr = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => Error::Csv {
            path: path.into(),
            message: format!("cannot open: {e}"),
        },
        _ => csv_err(e.to_string()),
    })?;
    let headers = rdr.headers().map_err(|e| csv_err(e.to_string()))?;
    if headers.iter().map(str::trim).collect::<Vec<_>>() != ["horizon", "value"] {
        return Err(csv_err("expected header horizon,value".into()));
    }
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(e.to_string()))?;
        let line = row + 2;
        let h: usize = rec
            .get(0)
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| csv_err(format!("line {line}: bad horizon")))?;
        let v: f64 = rec
            .get(1)
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| csv_err(format!("line {line}: bad value")))?;
        if h != out.len() + 1 {
            return Err(csv_err(format!("line {line}: expected horizon {}", out.len() + 1)));
        }
        if !v.is_finite() {
            return Err(csv_err(format!("line {line}: value is not finite")));
        }
        out.push(v);
    }
    Ok(out)
}
