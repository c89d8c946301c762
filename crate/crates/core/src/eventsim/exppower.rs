use rand::Rng;
use rand_distr::{Distribution, Gamma};
use statrs::function::gamma::{digamma, ln_gamma};

use crate::error::{Error, Result};

pub const MIN_FIT_SAMPLES: usize = 20;

/// Density proportional to `x^k exp(-lambda x)` on `x > 0`: a Gamma law with
/// shape `k + 1` and rate `lambda`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpPowerParams {
    pub lambda: f64,
    pub k: f64,
}

impl ExpPowerParams {
    pub fn ln_pdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let a = self.k + 1.0;
        a * self.lambda.ln() - ln_gamma(a) + self.k * x.ln() - self.lambda * x
    }

    pub fn mean(&self) -> f64 {
        (self.k + 1.0) / self.lambda
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let g = Gamma::new(self.k + 1.0, 1.0 / self.lambda).expect("valid exp-power parameters");
        // Gamma draws can underflow to 0 for tiny shapes; keep the support open
        g.sample(rng).max(f64::MIN_POSITIVE)
    }
}

/// Trigamma via upward recurrence and the asymptotic series.
pub fn trigamma(x: f64) -> f64 {
    let mut x = x;
    let mut acc = 0.0;
    while x < 10.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let r = 1.0 / x;
    let r2 = r * r;
    acc + r + r2 / 2.0 + r * r2 * (1.0 / 6.0 - r2 * (1.0 / 30.0 - r2 * (1.0 / 42.0 - r2 * (1.0 / 30.0 - r2 * 5.0 / 66.0))))
}

fn check_samples(samples: &[f64]) -> Result<(f64, f64)> {
    if samples.len() < MIN_FIT_SAMPLES {
        return Err(Error::InvalidInput(format!(
            "exp-power fit needs at least {MIN_FIT_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    if let Some(bad) = samples.iter().find(|&&x| !(x > 0.0) || !x.is_finite()) {
        return Err(Error::InvalidInput(format!("exp-power fit needs positive samples, got {bad}")));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let mean_ln = samples.iter().map(|x| x.ln()).sum::<f64>() / n;
    Ok((mean, mean_ln))
}

/// Maximum-likelihood fit. The shape solves `ln a - digamma(a) = ln(mean) - mean(ln x)`
/// by Newton's method from the moment estimate; shapes below 1 fall back to `k = 0`.
pub fn fit_exp_power(samples: &[f64]) -> Result<ExpPowerParams> {
    let (mean, mean_ln) = check_samples(samples)?;
    let n = samples.len() as f64;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let s = mean.ln() - mean_ln;
    if !(var > 0.0) || !(s > 1e-14) {
        return Err(Error::InvalidInput("exp-power fit: samples have degenerate variance".into()));
    }
    let mut a = mean * mean / var;
    for _ in 0..100 {
        let f = a.ln() - digamma(a) - s;
        let df = 1.0 / a - trigamma(a);
        let mut next = a - f / df;
        while next <= 0.0 {
            next = (next + a) / 2.0;
            if next == a {
                break;
            }
        }
        if next <= 0.0 {
            next = a / 2.0;
        }
        let done = (next - a).abs() <= 1e-13 * a;
        a = next;
        if done {
            break;
        }
    }
    if !a.is_finite() {
        return Err(Error::NonConvergence("exp-power shape iteration diverged".into()));
    }
    if a < 1.0 {
        return Ok(ExpPowerParams { lambda: 1.0 / mean, k: 0.0 });
    }
    Ok(ExpPowerParams { lambda: a / mean, k: a - 1.0 })
}

/// Rate estimate for a known exponent: `lambda = (k + 1) / mean`.
pub fn fit_exp_power_fixed_k(samples: &[f64], k: f64) -> Result<ExpPowerParams> {
    let (mean, _) = check_samples(samples)?;
    if !(k >= 0.0) {
        return Err(Error::InvalidInput("exp-power exponent must be >= 0".into()));
    }
    Ok(ExpPowerParams { lambda: (k + 1.0) / mean, k })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trigamma_matches_derivative_of_digamma() {
        for &x in &[0.3, 1.0, 2.5, 7.9, 40.0] {
            let h = 1e-5 * x;
            let fd = (digamma(x + h) - digamma(x - h)) / (2.0 * h);
            assert!((trigamma(x) - fd).abs() < 1e-6 * trigamma(x), "x = {x}");
        }
        let pi2_6 = std::f64::consts::PI.powi(2) / 6.0;
        assert!((trigamma(1.0) - pi2_6).abs() < 1e-12);
    }

    #[test]
    fn density_normalizes() {
        let p = ExpPowerParams { lambda: 2.0, k: 2.0 };
        let h = 1e-4;
        let total: f64 = (1..200_000).map(|i| p.ln_pdf(i as f64 * h).exp() * h).sum();
        assert!((total - 1.0).abs() < 1e-6);
    }

    #[test]
    fn exponential_special_case() {
        let xs: Vec<f64> = (1..=50).map(|i| i as f64 * 0.37).collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let p = fit_exp_power_fixed_k(&xs, 0.0).unwrap();
        assert!((p.lambda - 1.0 / mean).abs() <= 1e-9);
    }

    #[test]
    fn rejects_bad_samples() {
        assert!(fit_exp_power(&[2.0; 30]).is_err());
        let mut xs: Vec<f64> = (1..=30).map(f64::from).collect();
        assert!(fit_exp_power(&xs[..10]).is_err());
        xs[3] = 0.0;
        assert!(fit_exp_power(&xs).is_err());
    }
}
