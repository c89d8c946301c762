//! A known multinomial-logit ground truth used to label synthetic trips.

use rand::Rng;

use super::features::*;
use super::gbt::softmax;
use super::Mode;
use crate::corpus::{Purpose, PtSubscription};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogitRule {
    /// Multiplies every utility; larger values make labels less noisy.
    pub scale: f64,
    pub carsharing_constant: f64,
    /// Utility lost per km to the nearest station with an idle vehicle.
    pub station_km: f64,
}

impl Default for LogitRule {
    fn default() -> Self {
        LogitRule {
            scale: 1.6,
            carsharing_constant: -1.6,
            station_km: 3.75,
        }
    }
}

impl LogitRule {
    /// Utilities in `Mode::ALL` order.
    pub fn utilities(&self, x: &[f64]) -> [f64; 8] {
        let d = x[IDX_DISTANCE] / 1000.0;
        let ln = (1.0 + d).ln();
        let car = x[IDX_CAR_ACCESS];
        let pt_o = x[IDX_PT_ORIGIN];
        let pt_d = x[IDX_PT_DEST];
        let half = x[IDX_PT_SUB + PtSubscription::HalfFare as usize];
        let full = x[IDX_PT_SUB + PtSubscription::FullFare as usize];
        let station = (x[IDX_STATION_ORIGIN] / 1000.0).min(20.0);
        let errand = x[IDX_PURPOSE_DEST + Purpose::Leisure.index()] + x[IDX_PURPOSE_DEST + Purpose::Shopping.index()];
        let work = x[IDX_PURPOSE_DEST + Purpose::Work.index()] + x[IDX_PURPOSE_DEST + Purpose::Education.index()];
        let young = if x[IDX_AGE] <= 3.0 { 1.0 } else { 0.0 };
        let hour = x[IDX_ORIGIN_HOUR];
        let night = if !(6.0..22.0).contains(&hour) { 1.0 } else { 0.0 };

        let u = [
            -0.6 + 3.2 * car + 0.7 * ln - 0.25 * pt_o + 0.4 * night,
            self.carsharing_constant + 1.2 * ln - self.station_km * station - 3.0 * car + 0.7 * errand
                - 0.8 * full + 0.3 * night,
            -2.6 + 1.2 * ln + 0.3 * (pt_o + pt_d) + 1.6 * full + 0.8 * half - 0.8 * car + 0.3 * work,
            -0.4 + 0.45 * pt_o - 0.09 * d + 0.3 * half + 0.2 * full,
            -1.2 + 0.25 * pt_o * pt_d - 0.12 * d + 0.2 * full,
            0.4 - 0.35 * d + 0.4 * young - 0.5 * night,
            3.0 - 2.3 * d,
            -3.2 + 0.3 * ln,
        ];
        u.map(|v| v * self.scale)
    }

    pub fn probabilities(&self, x: &[f64]) -> Vec<f64> {
        softmax(&self.utilities(x))
    }

    pub fn sample<R: Rng>(&self, x: &[f64], rng: &mut R) -> Mode {
        let p = self.probabilities(x);
        Mode::ALL[sample_index(&p, rng)]
    }
}

pub(crate) fn sample_index<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &v) in p.iter().enumerate() {
        acc += v;
        if u < acc {
            return i;
        }
    }
    p.iter().rposition(|&v| v > 0.0).unwrap_or(0)
}

/// Accuracy of always predicting the most likely class under the rule: the
/// mean of the maximum class probability.
pub fn bayes_accuracy<R: AsRef<[f64]>>(rule: &LogitRule, x: &[R]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter()
        .map(|r| rule.probabilities(r.as_ref()).into_iter().fold(0.0, f64::max))
        .sum::<f64>()
        / x.len() as f64
}
