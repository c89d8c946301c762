use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Category;
use crate::error::{Error, Result};

pub const DEFAULT_PRICE_LEVELS: [f64; 7] = [0.0, 10.0, 100.0, 500.0, 1000.0, 2000.0, 5000.0];
pub const DEFAULT_TIMESTEP_MINUTES: u32 = 15;

/// Scenario parameters as read from a JSON config file. Optional fields are
/// filled by [`validate_scenario`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n_users: i64,
    pub v_desired: i64,
    #[serde(default)]
    pub k_new_stations: i64,
    #[serde(default)]
    pub price_levels: Option<Vec<f64>>,
    #[serde(default)]
    pub timestep_minutes: Option<u32>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub category_shares: BTreeMap<Category, f64>,
    #[serde(default)]
    pub energy_tariff_chf_per_kwh: Option<f64>,
    #[serde(default)]
    pub peak_cost_chf_per_mw: Option<f64>,
    /// Refund the energy tariff on extra energy drawn for flexibility.
    #[serde(default)]
    pub reimburse_grid_tariff: bool,
}

impl ScenarioConfig {
    pub fn new(n_users: i64, v_desired: i64, k_new_stations: i64) -> Self {
        ScenarioConfig {
            n_users,
            v_desired,
            k_new_stations,
            price_levels: None,
            timestep_minutes: None,
            seed: 0,
            category_shares: BTreeMap::new(),
            energy_tariff_chf_per_kwh: None,
            peak_cost_chf_per_mw: None,
            reimburse_grid_tariff: false,
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn price_levels(&self) -> &[f64] {
        self.price_levels.as_deref().unwrap_or(&DEFAULT_PRICE_LEVELS)
    }

    pub fn timestep_minutes(&self) -> u32 {
        self.timestep_minutes.unwrap_or(DEFAULT_TIMESTEP_MINUTES)
    }
}

pub fn default_category_shares() -> BTreeMap<Category, f64> {
    BTreeMap::from([
        (Category::Budget, 0.35),
        (Category::Combi, 0.35),
        (Category::Premium, 0.1),
        (Category::Transporter, 0.1),
        (Category::Other, 0.1),
    ])
}

pub fn validate_scenario(config: ScenarioConfig) -> Result<ScenarioConfig> {
    let mut c = config;
    if c.n_users <= 0 {
        return Err(Error::Config(format!("n_users must be positive, got {}", c.n_users)));
    }
    if c.v_desired <= 0 {
        return Err(Error::Config(format!("v_desired must be positive, got {}", c.v_desired)));
    }
    if c.k_new_stations < 0 {
        return Err(Error::Config(format!(
            "k_new_stations must be non-negative, got {}",
            c.k_new_stations
        )));
    }
    let prices = c
        .price_levels
        .take()
        .unwrap_or_else(|| DEFAULT_PRICE_LEVELS.to_vec());
    if prices.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::Config("price_levels must be finite and >= 0".into()));
    }
    c.price_levels = Some(prices);
    let step = c.timestep_minutes.unwrap_or(DEFAULT_TIMESTEP_MINUTES);
    if step == 0 || 1440 % step != 0 {
        return Err(Error::Config(format!("timestep_minutes {step} must divide 1440")));
    }
    c.timestep_minutes = Some(step);
    if c.category_shares.is_empty() {
        c.category_shares = default_category_shares();
    }
    if c.category_shares.values().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::Config("category_shares must be non-negative".into()));
    }
    let total: f64 = c.category_shares.values().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("category_shares sum to {total}, expected 1")));
    }
    if let Some(t) = c.energy_tariff_chf_per_kwh {
        if !(t >= 0.0) {
            return Err(Error::Config("energy_tariff_chf_per_kwh must be >= 0".into()));
        }
    }
    if let Some(p) = c.peak_cost_chf_per_mw {
        if !(p >= 0.0) {
            return Err(Error::Config("peak_cost_chf_per_mw must be >= 0".into()));
        }
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expand_shape_is_valid() {
        let c = validate_scenario(ScenarioConfig::new(250_000, 7500, 1250)).unwrap();
        assert_eq!(c.timestep_minutes, Some(15));
        assert_eq!(c.price_levels.as_deref(), Some(&DEFAULT_PRICE_LEVELS[..]));
    }

    #[test]
    fn zero_users_rejected() {
        assert!(validate_scenario(ScenarioConfig::new(0, 10, 0)).is_err());
        assert!(validate_scenario(ScenarioConfig::new(10, 0, 0)).is_err());
    }

    #[test]
    fn shares_must_sum_to_one() {
        let mut c = ScenarioConfig::new(10, 10, 0);
        c.category_shares = BTreeMap::from([(Category::Budget, 0.5), (Category::Combi, 0.4)]);
        assert!(validate_scenario(c.clone()).is_err());
        c.category_shares.insert(Category::Combi, 0.5);
        assert!(validate_scenario(c).is_ok());
    }

    #[test]
    fn json_defaults() {
        let c = ScenarioConfig::from_json_str(r#"{"n_users": 100, "v_desired": 5, "seed": 3}"#).unwrap();
        let c = validate_scenario(c).unwrap();
        assert_eq!(c.k_new_stations, 0);
        assert_eq!(c.price_levels().len(), 7);
        assert!(ScenarioConfig::from_json_str(r#"{"n_users": 1, "v_desired": 1, "bogus": 2}"#).is_err());
    }
}
