//! Weighted descriptive statistics shared by several modules.

/// Weights rescaled to mean 1.
pub fn normalize_weights(w: &[f64]) -> Vec<f64> {
    let mean = w.iter().sum::<f64>() / w.len() as f64;
    w.iter().map(|x| x / mean).collect()
}

/// Weighted median of `(value, weight)` pairs. When the cumulative weight hits
/// exactly half the total, the result is the midpoint between that value and
/// the next larger one. `None` for empty input.
pub fn weighted_median(pairs: &[(f64, f64)]) -> Option<f64> {
    if pairs.is_empty() {
        return None;
    }
    let mut v: Vec<(f64, f64)> = pairs.to_vec();
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = v.iter().map(|p| p.1).sum();
    let half = total / 2.0;
    let tol = total * 1e-12;
    let mut cum = 0.0;
    for (i, &(x, w)) in v.iter().enumerate() {
        cum += w;
        if (cum - half).abs() <= tol {
            return Some(match v.get(i + 1) {
                Some(&(next, _)) => (x + next) / 2.0,
                None => x,
            });
        }
        if cum > half {
            return Some(x);
        }
    }
    v.last().map(|p| p.0)
}

/// Weighted mean and standard deviation, with weights normalized to mean 1
/// and the SD using an n − 1 denominator. The SD is 0 for a single value.
pub fn weighted_mean_sd(values: &[f64], weights: &[f64]) -> (f64, f64) {
    assert_eq!(values.len(), weights.len());
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let w = normalize_weights(weights);
    let mean = values.iter().zip(&w).map(|(x, w)| x * w).sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().zip(&w).map(|(x, w)| w * (x - mean).powi(2)).sum();
    (mean, (ss / (n as f64 - 1.0)).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_cases() {
        assert_eq!(weighted_median(&[(30.0, 1.0)]), Some(30.0));
        assert_eq!(weighted_median(&[(40.0, 1.0), (20.0, 1.0)]), Some(30.0));
        assert_eq!(weighted_median(&[(10.0, 1.0), (20.0, 1.0), (100.0, 2.0)]), Some(60.0));
        assert_eq!(weighted_median(&[(10.0, 1.0), (20.0, 1.0), (100.0, 3.0)]), Some(100.0));
        assert_eq!(weighted_median(&[(1.0, 1.0), (2.0, 1.0), (3.0, 1.0)]), Some(2.0));
        assert_eq!(weighted_median(&[]), None);
    }

    #[test]
    fn equal_weights_match_unweighted() {
        let x = [1.0, 2.0, 4.0, 7.0];
        let (m, sd) = weighted_mean_sd(&x, &[3.0; 4]);
        assert!((m - 3.5).abs() < 1e-12);
        // Sample SD of {1,2,4,7}: sqrt(21/3).
        assert!((sd - 7f64.sqrt()).abs() < 1e-12);
        assert_eq!(weighted_mean_sd(&[5.0], &[2.0]), (5.0, 0.0));
    }
}
