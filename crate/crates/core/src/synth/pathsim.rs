//! Data generated from a known recursive system, for checking path-model
//! recovery against analytic population values.

use std::collections::HashMap;

use nalgebra::DMatrix;
use rand::RngExt;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::behavior::person_rng;
use crate::pathmodel::{Dataset, PathDag, EXPOSURE_VAR, MEDIATOR_VAR, MODE_VARS, OUTCOME_VAR};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExoKind {
    Uniform { lo: f64, hi: f64 },
    Bernoulli { p: f64 },
}

impl ExoKind {
    fn mean(self) -> f64 {
        match self {
            ExoKind::Uniform { lo, hi } => (lo + hi) / 2.0,
            ExoKind::Bernoulli { p } => p,
        }
    }

    fn variance(self) -> f64 {
        match self {
            ExoKind::Uniform { lo, hi } => (hi - lo).powi(2) / 12.0,
            ExoKind::Bernoulli { p } => p * (1.0 - p),
        }
    }

    fn range(self) -> (f64, f64) {
        match self {
            ExoKind::Uniform { lo, hi } => (lo, hi),
            ExoKind::Bernoulli { .. } => (0.0, 1.0),
        }
    }
}

/// Mutually independent exogenous variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExogenousSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: ExoKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Noise {
    Gaussian { sd: f64 },
    /// Linear probability model: the outcome is 1 with probability equal to
    /// the linear predictor. Parents must be exogenous.
    Bernoulli,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthEquation {
    pub outcome: String,
    pub intercept: f64,
    pub coefficients: Vec<(String, f64)>,
    pub noise: Noise,
}

/// A recursive system with equations listed in causal order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathTruth {
    pub exogenous: Vec<ExogenousSpec>,
    pub equations: Vec<TruthEquation>,
}

impl Default for PathTruth {
    /// The standard model: three background covariates, two binary mode
    /// variables, then accessibility, travel time and diversity.
    fn default() -> Self {
        let exo = |name: &str, kind| ExogenousSpec {
            name: name.into(),
            kind,
        };
        let eq = |outcome: &str, intercept, coefs: &[(&str, f64)], noise| TruthEquation {
            outcome: outcome.into(),
            intercept,
            coefficients: coefs.iter().map(|(n, b)| (n.to_string(), *b)).collect(),
            noise,
        };
        let z = [("age", ExoKind::Uniform { lo: 18.0, hi: 80.0 }), ("woman", ExoKind::Bernoulli { p: 0.5 }), (
            "poverty_rate",
            ExoKind::Uniform { lo: 0.0, hi: 30.0 },
        )];
        Self {
            exogenous: z.iter().map(|(n, k)| exo(n, *k)).collect(),
            equations: vec![
                eq(MODE_VARS[0], 0.394, &[("age", 0.004), ("woman", -0.1), ("poverty_rate", -0.006)], Noise::Bernoulli),
                eq(MODE_VARS[1], 0.562, &[("age", -0.003), ("woman", 0.05), ("poverty_rate", 0.004)], Noise::Bernoulli),
                eq(
                    EXPOSURE_VAR,
                    2.5,
                    &[("age", -0.01), ("woman", 0.0), ("poverty_rate", -0.03), (MODE_VARS[0], 0.6), (MODE_VARS[1], 0.3)],
                    Noise::Gaussian { sd: 1.0 },
                ),
                eq(
                    MEDIATOR_VAR,
                    70.0,
                    &[
                        ("age", -0.2),
                        ("woman", 3.0),
                        ("poverty_rate", 0.3),
                        (MODE_VARS[0], 10.0),
                        (MODE_VARS[1], -5.0),
                        (EXPOSURE_VAR, -8.0),
                    ],
                    Noise::Gaussian { sd: 18.0 },
                ),
                eq(
                    OUTCOME_VAR,
                    1.5,
                    &[
                        ("age", -0.01),
                        ("woman", 0.1),
                        ("poverty_rate", -0.01),
                        (MODE_VARS[0], 0.2),
                        (MODE_VARS[1], 0.1),
                        (EXPOSURE_VAR, 0.15),
                        (MEDIATOR_VAR, 0.012),
                    ],
                    Noise::Gaussian { sd: 0.8 },
                ),
            ],
        }
    }
}

impl PathTruth {
    pub fn names(&self) -> Vec<String> {
        self.exogenous
            .iter()
            .map(|e| e.name.clone())
            .chain(self.equations.iter().map(|e| e.outcome.clone()))
            .collect()
    }

    /// The standard model graph over this system's exogenous variables.
    pub fn standard_dag(&self) -> PathDag {
        let z: Vec<&str> = self.exogenous.iter().map(|e| e.name.as_str()).collect();
        PathDag::standard(&z)
    }

    /// Checks that every linear-probability equation stays inside [0, 1]
    /// over the box spanned by the exogenous ranges.
    pub fn validate(&self) -> Result<(), String> {
        let ranges: HashMap<&str, (f64, f64)> = self.exogenous.iter().map(|e| (e.name.as_str(), e.kind.range())).collect();
        for eq in self.equations.iter().filter(|e| e.noise == Noise::Bernoulli) {
            let (mut lo, mut hi) = (eq.intercept, eq.intercept);
            for (p, b) in &eq.coefficients {
                let &(a, c) = ranges
                    .get(p.as_str())
                    .ok_or_else(|| format!("{}: parent {p} is not exogenous", eq.outcome))?;
                lo += (b * a).min(b * c);
                hi += (b * a).max(b * c);
            }
            if lo < 0.0 || hi > 1.0 {
                return Err(format!("{}: probability range [{lo}, {hi}] leaves [0, 1]", eq.outcome));
            }
        }
        Ok(())
    }

    /// Population means and covariance matrix in the order of [`Self::names`].
    pub fn population_moments(&self) -> (Vec<f64>, DMatrix<f64>) {
        let names = self.names();
        let p = names.len();
        let pos: HashMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
        let mut mean = vec![0.0; p];
        let mut cov = DMatrix::zeros(p, p);
        for (i, e) in self.exogenous.iter().enumerate() {
            mean[i] = e.kind.mean();
            cov[(i, i)] = e.kind.variance();
        }
        for (k, eq) in self.equations.iter().enumerate() {
            let t = self.exogenous.len() + k;
            let parents: Vec<(usize, f64)> = eq.coefficients.iter().map(|(n, b)| (pos[n.as_str()], *b)).collect();
            mean[t] = eq.intercept + parents.iter().map(|&(j, b)| b * mean[j]).sum::<f64>();
            for j in 0..t {
                let c: f64 = parents.iter().map(|&(q, b)| b * cov[(q, j)]).sum();
                cov[(t, j)] = c;
                cov[(j, t)] = c;
            }
            let explained: f64 = parents
                .iter()
                .flat_map(|&(a, ba)| parents.iter().map(move |&(b, bb)| (a, ba, b, bb)))
                .map(|(a, ba, b, bb)| ba * bb * cov[(a, b)])
                .sum();
            let residual = match eq.noise {
                Noise::Gaussian { sd } => sd * sd,
                // E[p(1 - p)] = E[p] - E[p]^2 - Var(p).
                Noise::Bernoulli => mean[t] * (1.0 - mean[t]) - explained,
            };
            cov[(t, t)] = explained + residual;
        }
        (mean, cov)
    }

    /// Standardized structural coefficients (outcome, predictor, value);
    /// predictors absent from an equation are 0.
    pub fn standardized(&self) -> Vec<(String, String, f64)> {
        let names = self.names();
        let pos: HashMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
        let (_, cov) = self.population_moments();
        let sd = |i: usize| cov[(i, i)].sqrt();
        self.equations
            .iter()
            .flat_map(|eq| {
                let y = pos[eq.outcome.as_str()];
                eq.coefficients
                    .iter()
                    .map(|(p, b)| (eq.outcome.clone(), p.clone(), b * sd(pos[p.as_str()]) / sd(y)))
                    .collect::<Vec<_>>()
            })
            .collect()
    }
}

/// `n` rows drawn from `truth` with survey-style weights uniform on [0.5, 2].
pub fn simulate_path_data(truth: &PathTruth, n: usize, seed: u64) -> Dataset {
    let mut rng = person_rng(seed, "path-sim");
    let names = truth.names();
    let pos: HashMap<String, usize> = names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
    let mut cols = vec![Vec::with_capacity(n); names.len()];
    let mut weights = Vec::with_capacity(n);
    let mut row = vec![0.0; names.len()];
    for _ in 0..n {
        for (i, e) in truth.exogenous.iter().enumerate() {
            row[i] = match e.kind {
                ExoKind::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
                ExoKind::Bernoulli { p } => rng.random_bool(p) as u8 as f64,
            };
        }
        for (k, eq) in truth.equations.iter().enumerate() {
            let lin = eq.intercept + eq.coefficients.iter().map(|(p, b)| b * row[pos[p]]).sum::<f64>();
            row[truth.exogenous.len() + k] = match eq.noise {
                Noise::Gaussian { sd } => lin + sd * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng),
                Noise::Bernoulli => rng.random_bool(lin.clamp(0.0, 1.0)) as u8 as f64,
            };
        }
        for (c, v) in cols.iter_mut().zip(&row) {
            c.push(*v);
        }
        weights.push(0.5 + 1.5 * rng.random::<f64>());
    }
    Dataset::new(names, cols, weights).expect("finite simulated data")
}

/// Three covariates where `age = x1 + x2 + c·e` with `c² = 2/7` and
/// independent standard normal `x1`, `x2`, `e`, so that the population VIF
/// of `age` is 8 and that of `x1` and `x2` is 4.5.
pub fn vif_eight_data(n: usize, seed: u64) -> Dataset {
    let mut rng = person_rng(seed, "vif-eight");
    let c = (2.0f64 / 7.0).sqrt();
    let mut g = || -> f64 { StandardNormal.sample(&mut rng) };
    let (mut x1, mut x2, mut age) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..n {
        let (a, b, e) = (g(), g(), g());
        x1.push(a);
        x2.push(b);
        age.push(a + b + c * e);
    }
    Dataset::new(vec!["x1".into(), "x2".into(), "age".into()], vec![x1, x2, age], vec![1.0; n]).expect("finite")
}
