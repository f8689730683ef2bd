use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::regress::wmean;
use super::{Dataset, PathError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum DropReason {
    NearConstant { variance: f64 },
    Vif { vif: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedVariable {
    pub name: String,
    #[serde(flatten)]
    pub reason: DropReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VifReport {
    pub retained: Vec<String>,
    pub dropped: Vec<DroppedVariable>,
    /// VIF of each retained variable after pruning.
    pub final_vif: Vec<(String, f64)>,
}

/// Variance inflation factors of `cols`, each from a weighted regression on
/// all the others. Exact collinearity gives infinity.
pub fn variance_inflation(cols: &[&[f64]], w: &[f64]) -> Vec<f64> {
    let n = w.len();
    let centered: Vec<Vec<f64>> = cols
        .iter()
        .map(|c| {
            let m = wmean(c, w);
            c.iter().zip(w).map(|(x, wi)| (x - m) * wi.sqrt()).collect()
        })
        .collect();
    (0..cols.len())
        .map(|j| {
            let y = DVector::from_column_slice(&centered[j]);
            let sst = y.norm_squared();
            if cols.len() == 1 || sst == 0.0 {
                return 1.0;
            }
            let others: Vec<usize> = (0..cols.len()).filter(|&k| k != j).collect();
            let x = DMatrix::from_fn(n, others.len(), |i, k| centered[others[k]][i]);
            let svd = x.clone().svd(true, true);
            let tol = svd.singular_values.max() * 1e-10;
            let beta = svd.solve(&y, tol).expect("u and v were computed");
            let ssr = (y - x * beta).norm_squared();
            let tol_r = ssr / sst;
            if tol_r < 1e-10 {
                f64::INFINITY
            } else {
                1.0 / tol_r
            }
        })
        .collect()
}

/// Drops near-constant variables (weighted variance below `eps`), then
/// repeatedly drops the variable with the largest VIF while it exceeds
/// `threshold`. Ties go to the later candidate.
pub fn vif_prune(candidates: &[&str], data: &Dataset, threshold: f64, eps: f64) -> Result<VifReport, PathError> {
    let w = &data.weights;
    let mut dropped = Vec::new();
    let mut kept: Vec<(&str, &[f64])> = Vec::new();
    for &c in candidates {
        let col = data.column(c)?;
        let v = super::regress::wcov(col, col, w);
        if v < eps {
            dropped.push(DroppedVariable {
                name: c.to_string(),
                reason: DropReason::NearConstant { variance: v },
            });
        } else {
            kept.push((c, col));
        }
    }
    loop {
        let cols: Vec<&[f64]> = kept.iter().map(|k| k.1).collect();
        let vifs = variance_inflation(&cols, w);
        let worst = vifs
            .iter()
            .enumerate()
            .fold(None, |best: Option<(usize, f64)>, (i, &v)| match best {
                Some((_, bv)) if v < bv => best,
                _ => Some((i, v)),
            });
        match worst {
            Some((i, v)) if v > threshold && kept.len() > 1 => {
                let (name, _) = kept.remove(i);
                log::info!("dropping {name} with VIF {v:.2}");
                dropped.push(DroppedVariable {
                    name: name.to_string(),
                    reason: DropReason::Vif { vif: v },
                });
            }
            _ => {
                return Ok(VifReport {
                    retained: kept.iter().map(|k| k.0.to_string()).collect(),
                    final_vif: kept.iter().zip(vifs).map(|(k, v)| (k.0.to_string(), v)).collect(),
                    dropped,
                })
            }
        }
    }
}
