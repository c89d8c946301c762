//! Fleet-level objectives on the aggregate power profile, with their
//! proximal operators.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

pub trait FleetObjective: Send + Sync {
    fn name(&self) -> &str;

    /// Value at aggregate fleet power `z` (kW per step).
    fn value(&self, z: &[f64]) -> f64;

    /// `argmin_z value(z) + weight/2 ||z - v||^2`.
    fn prox(&self, v: &[f64], weight: f64) -> Vec<f64>;

    /// Per-step cost per kW when the objective is linear in `z`, in which case
    /// the fleet problem separates by vehicle.
    fn linear_price(&self) -> Option<Vec<f64>> {
        None
    }

    /// Hard constraints on the aggregate that the returned schedule must meet.
    fn feasible(&self, _z: &[f64]) -> bool {
        true
    }
}

pub struct ZeroObjective {
    pub steps: usize,
}

impl FleetObjective for ZeroObjective {
    fn name(&self) -> &str {
        "zero"
    }

    fn value(&self, _z: &[f64]) -> f64 {
        0.0
    }

    fn prox(&self, v: &[f64], _weight: f64) -> Vec<f64> {
        v.to_vec()
    }

    fn linear_price(&self) -> Option<Vec<f64>> {
        Some(vec![0.0; self.steps])
    }
}

/// `alpha/2 ||z - reference||^2`.
pub struct ReferenceTracking {
    pub reference: Vec<f64>,
    pub alpha: f64,
}

impl FleetObjective for ReferenceTracking {
    fn name(&self) -> &str {
        "reference_tracking"
    }

    fn value(&self, z: &[f64]) -> f64 {
        0.5 * self.alpha * z.iter().zip(&self.reference).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
    }

    fn prox(&self, v: &[f64], weight: f64) -> Vec<f64> {
        v.iter()
            .zip(&self.reference)
            .map(|(x, r)| (self.alpha * r + weight * x) / (self.alpha + weight))
            .collect()
    }
}

/// Pays `price` per kW of the peak of `base + z` removed, subject to the
/// peak never exceeding `cap`.
pub struct PeakShaving {
    /// Non-fleet load per step, kW.
    pub base: Vec<f64>,
    /// Reward per kW of peak reduction.
    pub price: f64,
    pub cap: f64,
}

impl PeakShaving {
    pub fn peak(&self, z: &[f64]) -> f64 {
        self.base.iter().zip(z).map(|(b, x)| b + x).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Level `m` with `sum_t (a_t - m)^+ = area`.
fn water_level(a: &[f64], area: f64) -> f64 {
    let mut sorted = a.to_vec();
    sorted.sort_by(|x, y| y.total_cmp(x));
    let mut sum = 0.0;
    for k in 0..sorted.len() {
        sum += sorted[k];
        let m = (sum - area) / (k + 1) as f64;
        if k + 1 == sorted.len() || m >= sorted[k + 1] {
            return m;
        }
    }
    unreachable!()
}

impl FleetObjective for PeakShaving {
    fn name(&self) -> &str {
        "peak_shaving"
    }

    fn value(&self, z: &[f64]) -> f64 {
        self.price * self.peak(z)
    }

    fn prox(&self, v: &[f64], weight: f64) -> Vec<f64> {
        let a: Vec<f64> = self.base.iter().zip(v).map(|(b, x)| b + x).collect();
        let level = if self.price > 0.0 {
            water_level(&a, self.price / weight)
        } else {
            f64::INFINITY
        };
        let m = level.min(self.cap);
        a.iter().zip(&self.base).map(|(y, b)| y.min(m) - b).collect()
    }

    fn feasible(&self, z: &[f64]) -> bool {
        self.peak(z) <= self.cap + 1e-9
    }
}

/// Pays `price` per kW of mean deviation from `baseline` in the direction
/// `direction` over the steps of one hour.
pub struct PriceResponse {
    pub baseline: Vec<f64>,
    pub steps: std::ops::Range<usize>,
    pub price: f64,
    pub direction: f64,
}

impl PriceResponse {
    fn coefficient(&self, t: usize) -> f64 {
        if self.steps.contains(&t) {
            -self.direction * self.price / self.steps.len() as f64
        } else {
            0.0
        }
    }
}

impl FleetObjective for PriceResponse {
    fn name(&self) -> &str {
        "price_response"
    }

    fn value(&self, z: &[f64]) -> f64 {
        z.iter()
            .zip(&self.baseline)
            .enumerate()
            .map(|(t, (x, b))| self.coefficient(t) * (x - b))
            .sum()
    }

    fn prox(&self, v: &[f64], weight: f64) -> Vec<f64> {
        v.iter().enumerate().map(|(t, x)| x - self.coefficient(t) / weight).collect()
    }

    fn linear_price(&self) -> Option<Vec<f64>> {
        Some((0..self.baseline.len()).map(|t| self.coefficient(t)).collect())
    }
}

/// Inputs from which registered objectives are built.
#[derive(Debug, Clone, Default)]
pub struct ObjectiveInputs {
    pub steps: usize,
    pub reference: Option<Vec<f64>>,
    pub alpha: Option<f64>,
    pub base_load: Option<Vec<f64>>,
    pub baseline: Option<Vec<f64>>,
    pub price: Option<f64>,
    pub cap: Option<f64>,
    pub hour_steps: Option<std::ops::Range<usize>>,
    pub direction: Option<f64>,
}

type Builder = Box<dyn Fn(&ObjectiveInputs) -> Result<Box<dyn FleetObjective>> + Send + Sync>;

pub struct ObjectiveRegistry {
    builders: BTreeMap<String, Builder>,
}

fn need<T: Clone>(v: &Option<T>, what: &str, name: &str) -> Result<T> {
    v.clone()
        .ok_or_else(|| Error::Config(format!("objective {name} needs {what}")))
}

impl ObjectiveRegistry {
    pub fn empty() -> Self {
        ObjectiveRegistry {
            builders: BTreeMap::new(),
        }
    }

    pub fn register(
        &mut self,
        name: &str,
        builder: impl Fn(&ObjectiveInputs) -> Result<Box<dyn FleetObjective>> + Send + Sync + 'static,
    ) {
        self.builders.insert(name.to_string(), Box::new(builder));
    }

    pub fn build(&self, name: &str, inputs: &ObjectiveInputs) -> Result<Box<dyn FleetObjective>> {
        let b = self.builders.get(name).ok_or_else(|| {
            Error::Config(format!(
                "unknown objective `{name}` (known: {})",
                self.names().join(", ")
            ))
        })?;
        b(inputs)
    }

    pub fn names(&self) -> Vec<String> {
        self.builders.keys().cloned().collect()
    }

    pub fn standard() -> Self {
        let mut r = Self::empty();
        r.register("zero", |i| Ok(Box::new(ZeroObjective { steps: i.steps })));
        r.register("reference_tracking", |i| {
            Ok(Box::new(ReferenceTracking {
                reference: need(&i.reference, "a reference profile", "reference_tracking")?,
                alpha: i.alpha.unwrap_or(1.0),
            }))
        });
        r.register("peak_shaving", |i| {
            let base = need(&i.base_load, "a base load", "peak_shaving")?;
            let cap = match i.cap {
                Some(c) => c,
                None => {
                    let fleet = i.baseline.clone().unwrap_or_else(|| vec![0.0; base.len()]);
                    base.iter().zip(&fleet).map(|(b, f)| b + f).fold(f64::NEG_INFINITY, f64::max)
                }
            };
            Ok(Box::new(PeakShaving {
                base,
                price: need(&i.price, "a price", "peak_shaving")?,
                cap,
            }))
        });
        r.register("price_response", |i| {
            Ok(Box::new(PriceResponse {
                baseline: need(&i.baseline, "a baseline", "price_response")?,
                steps: need(&i.hour_steps, "an hour", "price_response")?,
                price: need(&i.price, "a price", "price_response")?,
                direction: i.direction.unwrap_or(1.0),
            }))
        });
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prox_by_search(f: &dyn FleetObjective, v: &[f64], w: f64) -> f64 {
        let z = f.prox(v, w);
        let obj = |z: &[f64]| f.value(z) + 0.5 * w * z.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        let base = obj(&z);
        for i in 0..z.len() {
            for eps in [1e-4, -1e-4, 1e-2, -1e-2] {
                let mut y = z.clone();
                y[i] += eps;
                if f.feasible(&y) {
                    assert!(obj(&y) >= base - 1e-12, "coordinate {i} eps {eps}");
                }
            }
        }
        base
    }

    #[test]
    fn water_level_fixture() {
        assert!((water_level(&[5.0, 3.0, 1.0], 2.0) - 3.0).abs() < 1e-12);
        assert!((water_level(&[5.0, 3.0, 1.0], 4.0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn prox_operators_are_minimizers() {
        let v = [1.0, 4.0, -2.0, 3.5];
        let r = ReferenceTracking {
            reference: vec![0.0, 1.0, 2.0, 3.0],
            alpha: 2.0,
        };
        prox_by_search(&r, &v, 0.5);
        let p = PeakShaving {
            base: vec![10.0, 12.0, 9.0, 11.0],
            price: 3.0,
            cap: 15.0,
        };
        let z = p.prox(&v, 1.0);
        assert!(p.feasible(&z));
        prox_by_search(&p, &v, 1.0);
        let capped = PeakShaving { cap: 12.5, ..p };
        let z = capped.prox(&v, 1.0);
        assert!(capped.peak(&z) <= 12.5 + 1e-12);
        let pr = PriceResponse {
            baseline: vec![0.0; 4],
            steps: 1..3,
            price: 2.0,
            direction: 1.0,
        };
        prox_by_search(&pr, &v, 0.5);
        assert_eq!(pr.linear_price().unwrap(), vec![0.0, -1.0, -1.0, 0.0]);
    }

    #[test]
    fn registry_builds_and_rejects() {
        let reg = ObjectiveRegistry::standard();
        assert_eq!(reg.names(), vec!["peak_shaving", "price_response", "reference_tracking", "zero"]);
        let zero = reg
            .build(
                "zero",
                &ObjectiveInputs {
                    steps: 4,
                    ..Default::default()
                },
            )
            .unwrap();
        assert_eq!(zero.name(), "zero");
        assert!(reg.build("reference_tracking", &ObjectiveInputs::default()).is_err());
        assert!(reg.build("nope", &ObjectiveInputs::default()).is_err());
    }
}
