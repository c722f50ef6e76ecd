#![allow(dead_code)]

use std::path::PathBuf;

use chargeprice::demand::ElasticityModel;
use chargeprice::scenario::{load_scenario, RenewableConfig, Scenario};

pub fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn twenty_station() -> Scenario {
    load_scenario(&root().join("scenarios/twenty_station.toml")).unwrap()
}

pub fn two_station() -> Scenario {
    load_scenario(&root().join("scenarios/two_station.toml")).unwrap()
}

/// Three-bus toy with the given wholesale prices and no renewables.
pub fn toy(prices: &[f64], stations: usize) -> Scenario {
    let mut s = two_station();
    let k = prices.len();
    s.horizons = k;
    s.wholesale_prices = prices.to_vec();
    s.solar.radiation = vec![0.0; k];
    s.renewable = RenewableConfig::None;
    if stations == 1 {
        s.stations = 1;
        s.elasticity = ElasticityModel::uniform(vec![12.0], vec![0.12], 0.0, vec![0.25]);
        s.station_map.buses = vec![2];
    }
    s.rebuild_chain().unwrap();
    s
}

/// `toy` with every noise source removed.
pub fn deterministic_toy(prices: &[f64], stations: usize) -> Scenario {
    let mut s = toy(prices, stations);
    s.elasticity.variances = vec![0.0; stations];
    s.storage.process_noise_std = 0.0;
    s.safeguard.w_min = -1e9;
    s
}
