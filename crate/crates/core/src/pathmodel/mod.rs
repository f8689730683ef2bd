//! Weighted recursive path model over observed variables: graph checks,
//! collinearity pruning, equation-wise estimation, global fit and effect
//! decomposition.

mod dag;
mod effects;
mod fit;
mod regress;
mod vif;

use std::path::Path;

use thiserror::Error;

pub use dag::{check_dag, ImpliedIndependence, PathDag, Role, EXPOSURE_VAR, MEDIATOR_VAR, MODE_VARS, OUTCOME_VAR};
pub use effects::{decompose_effects, EffectRow, PathTerm};
pub use fit::{fit_paths, implied_cov, noncentral_chi2_cdf, FitIndices, FitResult};
pub use regress::{wcorr, wcov, wls, wmean, wsd, Coefficient, Regression};
pub use vif::{variance_inflation, vif_prune, DropReason, DroppedVariable, VifReport};

#[derive(Debug, Error)]
pub enum PathError {
    #[error("the model graph has a cycle")]
    CyclicGraph,
    #[error("unknown variable {0:?}")]
    UnknownVariable(String),
    #[error("model file line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("singular design in the equation for {0}")]
    SingularDesign(String),
    #[error("no directed path from {from} to {to}")]
    MissingPath { from: String, to: String },
    #[error("data has no column {0:?}")]
    MissingColumn(String),
    #[error("data: {0}")]
    Data(String),
}

/// Numeric columns plus one weight per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl Dataset {
    pub fn new(names: Vec<String>, columns: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self, PathError> {
        if names.len() != columns.len() {
            return Err(PathError::Data("names and columns differ in length".into()));
        }
        if columns.iter().any(|c| c.len() != weights.len()) {
            return Err(PathError::Data("columns differ in length".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(PathError::Data("weights must be positive".into()));
        }
        if columns.iter().flatten().any(|v| !v.is_finite()) {
            return Err(PathError::Data("non-finite value".into()));
        }
        Ok(Self { names, columns, weights })
    }

    /// Reads a CSV of numeric columns; `weight_column` supplies row weights
    /// (all 1 when absent). Non-numeric columns such as ids are skipped.
    pub fn from_csv(path: &Path, weight_column: Option<&str>) -> Result<Self, PathError> {
        let mut r = csv::Reader::from_path(path).map_err(|e| PathError::Data(format!("{}: {e}", path.display())))?;
        let headers: Vec<String> = r
            .headers()
            .map_err(|e| PathError::Data(e.to_string()))?
            .iter()
            .map(String::from)
            .collect();
        let rows: Vec<csv::StringRecord> = r
            .records()
            .collect::<Result<_, _>>()
            .map_err(|e| PathError::Data(e.to_string()))?;
        let mut names = Vec::new();
        let mut columns = Vec::new();
        let mut weights = vec![1.0; rows.len()];
        for (j, h) in headers.iter().enumerate() {
            let parsed: Option<Vec<f64>> = rows.iter().map(|r| r[j].trim().parse::<f64>().ok()).collect();
            if Some(h.as_str()) == weight_column {
                weights = parsed.ok_or_else(|| PathError::Data(format!("weight column {h:?} is not numeric")))?;
            } else if let Some(col) = parsed {
                names.push(h.clone());
                columns.push(col);
            }
        }
        if let Some(wc) = weight_column {
            if !headers.iter().any(|h| h == wc) {
                return Err(PathError::MissingColumn(wc.to_string()));
            }
        }
        Self::new(names, columns, weights)
    }

    pub fn column(&self, name: &str) -> Result<&[f64], PathError> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.columns[i].as_slice())
            .ok_or_else(|| PathError::MissingColumn(name.to_string()))
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Copy with the named column multiplied by `factor`.
    pub fn scaled(&self, name: &str, factor: f64) -> Result<Self, PathError> {
        let i = self
            .names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| PathError::MissingColumn(name.to_string()))?;
        let mut out = self.clone();
        out.columns[i].iter_mut().for_each(|v| *v *= factor);
        Ok(out)
    }

    pub fn with_weights(&self, weights: Vec<f64>) -> Result<Self, PathError> {
        Self::new(self.names.clone(), self.columns.clone(), weights)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    /// x -> m -> y chain plus a direct x -> y edge, Gaussian noise.
    fn simulate(n: usize, seed: u64, direct: f64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = || -> f64 { StandardNormal.sample(&mut rng) };
        let (mut x, mut m, mut y, mut w) = (vec![], vec![], vec![], vec![]);
        for i in 0..n {
            let xi = g();
            let mi = 0.5 * xi + g();
            let yi = direct * xi + 0.4 * mi + g();
            x.push(xi);
            m.push(mi);
            y.push(yi);
            w.push(0.5 + (i % 4) as f64);
        }
        Dataset::new(vec!["x".into(), "m".into(), "y".into()], vec![x, m, y], w).unwrap()
    }

    fn chain() -> PathDag {
        "role x exogenous\nrole m mediator\nrole y outcome\nedge x m\nedge m y\n".parse().unwrap()
    }

    #[test]
    fn saturated_model_fits_perfectly() {
        let mut d = chain();
        d.add_edge("x", "y").unwrap();
        let f = fit_paths(&d, &simulate(500, 1, 0.3)).unwrap();
        assert_eq!(f.fit.df, 0);
        assert!(f.fit.srmr < 1e-9, "srmr {}", f.fit.srmr);
        assert!(f.fit.chi2 < 1e-8);
        assert!(check_dag(&d, &simulate(50, 2, 0.3)).unwrap().is_empty());
        let e = f.effect("x", "y").unwrap();
        assert!((e.total - (e.direct + e.indirect)).abs() < 1e-12);
    }

    #[test]
    fn chain_implication_detected() {
        let d = chain();
        let ok = check_dag(&d, &simulate(2000, 3, 0.0)).unwrap();
        assert_eq!(ok.len(), 1);
        assert_eq!((ok[0].x.as_str(), ok[0].y.as_str(), ok[0].given.clone()), ("x", "y", vec!["m".to_string()]));
        // Violated implication: a real x -> y edge the model omits. Rejection
        // rate over repeated draws estimates power.
        let rejections = (0..50)
            .filter(|s| check_dag(&d, &simulate(2000, 100 + s, 0.1)).unwrap()[0].p_value < 0.05)
            .count();
        assert!(rejections >= 45, "power {rejections}/50");
        let f = fit_paths(&d, &simulate(2000, 4, 0.3)).unwrap();
        assert_eq!(f.fit.df, 1);
        assert!(f.fit.chi2 > 20.0 && f.fit.rmsea > 0.05);
        assert!(f.fit.rmsea_ci_lower <= f.fit.rmsea && f.fit.rmsea <= f.fit.rmsea_ci_upper);
    }

    #[test]
    fn scale_and_weight_invariance() {
        let mut d = chain();
        d.add_edge("x", "y").unwrap();
        let data = simulate(400, 5, 0.2);
        let base = fit_paths(&d, &data).unwrap();
        let scaled = fit_paths(&d, &data.scaled("m", 37.0).unwrap()).unwrap();
        let heavy = fit_paths(&d, &data.with_weights(data.weights.iter().map(|w| w * 9.0).collect()).unwrap()).unwrap();
        for other in [&scaled, &heavy] {
            for (a, b) in base.equations.iter().zip(&other.equations) {
                assert!((a.r2 - b.r2).abs() < 1e-9);
                for (ca, cb) in a.coefficients.iter().zip(&b.coefficients) {
                    assert!((ca.std_estimate - cb.std_estimate).abs() < 1e-9);
                    assert!((ca.std_se - cb.std_se).abs() < 1e-9);
                }
            }
            assert!((base.fit.srmr - other.fit.srmr).abs() < 1e-9);
            let (ea, eb) = (base.effect("x", "y").unwrap(), other.effect("x", "y").unwrap());
            assert!((ea.total - eb.total).abs() < 1e-9 && (ea.indirect_se - eb.indirect_se).abs() < 1e-9);
        }
    }

    #[test]
    fn missing_column_reported() {
        let d: PathDag = "role x exogenous\nrole q outcome\nedge x q\n".parse().unwrap();
        assert!(matches!(fit_paths(&d, &simulate(20, 1, 0.0)), Err(PathError::MissingColumn(c)) if c == "q"));
    }
}
