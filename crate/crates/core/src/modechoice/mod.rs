//! Trip features, the boosted-tree mode classifier and interchangeable mode choosers.

pub mod eval;
pub mod features;
pub mod gbt;
pub mod rule;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use eval::{accuracy, balanced_accuracy, evaluate_model, evaluate_predictions, EvalReport};
pub use features::{extract_features, PtGrid, TripFeatures, FEATURE_NAMES, NO_STATION_DISTANCE_M, N_FEATURES};
pub use gbt::{fit, train_gbt, GbtModel, GbtParams, GridReport};
pub use rule::{bayes_accuracy, LogitRule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Mode {
    Car,
    CarSharing,
    Train,
    Bus,
    Tram,
    Bicycle,
    Walk,
    Other,
}

pub const N_MODES: usize = 8;

impl Mode {
    pub const ALL: [Mode; N_MODES] = [
        Mode::Car,
        Mode::CarSharing,
        Mode::Train,
        Mode::Bus,
        Mode::Tram,
        Mode::Bicycle,
        Mode::Walk,
        Mode::Other,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Mode> {
        Mode::ALL.get(i).copied()
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.to_string() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown mode `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampling {
    Argmax,
    Categorical,
}

/// Picks a mode from class probabilities in `Mode::ALL` order.
pub fn pick<R: Rng + ?Sized>(p: &[f64; N_MODES], sampling: Sampling, rng: &mut R) -> Mode {
    match sampling {
        Sampling::Argmax => Mode::ALL[gbt::argmax(p)],
        Sampling::Categorical => Mode::ALL[rule::sample_index(p, rng)],
    }
}

/// Class probabilities of a fitted model, spread over all modes.
pub fn mode_probabilities(model: &GbtModel, x: &[f64]) -> Result<[f64; N_MODES]> {
    let p = model.predict_proba(x)?;
    let mut out = [0.0; N_MODES];
    for (&c, v) in model.classes.iter().zip(p) {
        let m = Mode::from_index(c as usize)
            .ok_or_else(|| Error::Model(format!("model class {c} is not a mode")))?;
        out[m.index()] = v;
    }
    Ok(out)
}

pub fn predict_mode<R: Rng>(
    model: &GbtModel,
    x: &[f64],
    sampling: Sampling,
    rng: &mut R,
) -> Result<(Mode, [f64; N_MODES])> {
    let p = mode_probabilities(model, x)?;
    Ok((pick(&p, sampling, rng), p))
}

/// A mode choice policy usable by the reservation simulator.
pub trait ModeChooser: Send + Sync {
    fn name(&self) -> &str;
    fn probabilities(&self, x: &[f64]) -> Result<[f64; N_MODES]>;
    fn sampling(&self) -> Sampling {
        Sampling::Argmax
    }
    fn choose(&self, x: &[f64], rng: &mut dyn rand::RngCore) -> Result<(Mode, [f64; N_MODES])> {
        let p = self.probabilities(x)?;
        Ok((pick(&p, self.sampling(), rng), p))
    }
}

pub struct GbtChooser {
    pub model: GbtModel,
    pub sampling: Sampling,
    name: String,
}

impl GbtChooser {
    pub fn new(model: GbtModel, sampling: Sampling) -> Self {
        let name = match sampling {
            Sampling::Argmax => "gbt",
            Sampling::Categorical => "gbt-categorical",
        };
        GbtChooser {
            model,
            sampling,
            name: name.to_string(),
        }
    }
}

impl ModeChooser for GbtChooser {
    fn name(&self) -> &str {
        &self.name
    }
    fn probabilities(&self, x: &[f64]) -> Result<[f64; N_MODES]> {
        mode_probabilities(&self.model, x)
    }
    fn sampling(&self) -> Sampling {
        self.sampling
    }
}

/// Always returns the same mode.
pub struct FixedChooser {
    pub mode: Mode,
    name: String,
}

impl FixedChooser {
    pub fn new(mode: Mode) -> Self {
        FixedChooser {
            mode,
            name: format!("always-{}", mode.to_string().to_lowercase()),
        }
    }
}

impl ModeChooser for FixedChooser {
    fn name(&self) -> &str {
        &self.name
    }
    fn probabilities(&self, _x: &[f64]) -> Result<[f64; N_MODES]> {
        let mut p = [0.0; N_MODES];
        p[self.mode.index()] = 1.0;
        Ok(p)
    }
}

/// The ground-truth logit rule itself.
pub struct RuleChooser {
    pub rule: LogitRule,
    pub sampling: Sampling,
}

impl ModeChooser for RuleChooser {
    fn name(&self) -> &str {
        match self.sampling {
            Sampling::Argmax => "rule",
            Sampling::Categorical => "rule-categorical",
        }
    }
    fn probabilities(&self, x: &[f64]) -> Result<[f64; N_MODES]> {
        if x.len() != N_FEATURES {
            return Err(Error::Model(format!("rule expects {N_FEATURES} features, got {}", x.len())));
        }
        let p = self.rule.probabilities(x);
        let mut out = [0.0; N_MODES];
        out.copy_from_slice(&p);
        Ok(out)
    }
    fn sampling(&self) -> Sampling {
        self.sampling
    }
}

/// Name-keyed collection of mode choosers.
#[derive(Default)]
pub struct ChooserRegistry {
    choosers: BTreeMap<String, Box<dyn ModeChooser>>,
}

impl ChooserRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Fixed and rule-based choosers, plus the boosted model when one is given.
    pub fn standard(model: Option<GbtModel>) -> Self {
        let mut r = Self::new();
        r.register(Box::new(FixedChooser::new(Mode::CarSharing)));
        r.register(Box::new(FixedChooser::new(Mode::Walk)));
        r.register(Box::new(RuleChooser {
            rule: LogitRule::default(),
            sampling: Sampling::Argmax,
        }));
        r.register(Box::new(RuleChooser {
            rule: LogitRule::default(),
            sampling: Sampling::Categorical,
        }));
        if let Some(m) = model {
            r.register(Box::new(GbtChooser::new(m.clone(), Sampling::Categorical)));
            r.register(Box::new(GbtChooser::new(m, Sampling::Argmax)));
        }
        r
    }

    pub fn register(&mut self, chooser: Box<dyn ModeChooser>) {
        self.choosers.insert(chooser.name().to_string(), chooser);
    }

    pub fn get(&self, name: &str) -> Result<&dyn ModeChooser> {
        self.choosers.get(name).map(|c| c.as_ref()).ok_or_else(|| {
            Error::InvalidInput(format!(
                "unknown mode chooser `{name}` (known: {})",
                self.names().join(", ")
            ))
        })
    }

    pub fn names(&self) -> Vec<String> {
        self.choosers.keys().cloned().collect()
    }
}

/// Writes feature rows with their mode labels.
pub fn write_labeled(path: &Path, x: &[[f64; N_FEATURES]], y: &[Mode]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
    let mut header: Vec<&str> = FEATURE_NAMES.to_vec();
    header.push("mode");
    let csv_err = |e: csv::Error| Error::InvalidInput(e.to_string());
    w.write_record(&header).map_err(csv_err)?;
    for (row, m) in x.iter().zip(y) {
        let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        rec.push(m.to_string());
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_labeled(path: &Path) -> Result<(Vec<[f64; N_FEATURES]>, Vec<Mode>)> {
    let file = path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
    let headers = r.headers().map_err(|e| Error::InvalidInput(e.to_string()))?.clone();
    if headers.len() != N_FEATURES + 1 {
        return Err(Error::Parse {
            file,
            line: 1,
            column: "*".into(),
            message: format!("expected {} columns", N_FEATURES + 1),
        });
    }
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let line = i as u64 + 2;
        let rec = rec.map_err(|e| Error::Parse {
            file: file.clone(),
            line,
            column: "*".into(),
            message: e.to_string(),
        })?;
        let mut row = [0.0; N_FEATURES];
        for (j, v) in row.iter_mut().enumerate() {
            *v = rec[j].trim().parse().map_err(|_| Error::Parse {
                file: file.clone(),
                line,
                column: FEATURE_NAMES[j].into(),
                message: format!("not a number: `{}`", &rec[j]),
            })?;
        }
        let m = rec[N_FEATURES].trim().parse::<Mode>().map_err(|e| Error::Parse {
            file: file.clone(),
            line,
            column: "mode".into(),
            message: e.to_string(),
        })?;
        x.push(row);
        y.push(m);
    }
    Ok((x, y))
}
