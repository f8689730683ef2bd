use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{person_rng, BehaviorError, VisitSet};
use crate::access::FeasibleSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectivityStatus {
    Tested,
    /// None of the visited cells lies inside the feasible set.
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectivityResult {
    pub person_id: String,
    pub status: SelectivityStatus,
    /// Number of ranked cells in the feasible set.
    pub n_i: usize,
    /// Distinct visited cells inside the feasible set.
    pub k_i: usize,
    pub share_outside: f64,
    pub t_act: Option<f64>,
    pub null_mean: Option<f64>,
    pub null_sd: Option<f64>,
    pub p_value: Option<f64>,
    /// Standardized effect size; `None` when the null has no spread.
    pub d: Option<f64>,
    pub b: usize,
}

/// Mean-rank test of visited cells against `b` uniform draws of the same
/// number of distinct cells from the feasible set.
pub fn selectivity_test(
    spa: &FeasibleSet,
    visits: &VisitSet,
    b: usize,
    seed: u64,
) -> Result<SelectivityResult, BehaviorError> {
    let mut rng = person_rng(seed, &spa.person_id);
    selectivity_test_with(spa, visits, b, &mut rng)
}

pub fn selectivity_test_with(
    spa: &FeasibleSet,
    visits: &VisitSet,
    b: usize,
    rng: &mut ChaCha8Rng,
) -> Result<SelectivityResult, BehaviorError> {
    if spa.entries.is_empty() {
        return Err(BehaviorError::EmptyFeasibleSet(spa.person_id.clone()));
    }
    if visits.is_empty() {
        return Err(BehaviorError::EmptyVisits(visits.person_id.clone()));
    }
    assert!(b >= 1, "at least one null draw is required");
    let n_i = spa.entries.len();
    let ranks: Vec<usize> = visits.cells().filter_map(|c| spa.rank_of(c)).collect();
    let k_i = ranks.len();
    let share_outside = (visits.k() - k_i) as f64 / visits.k() as f64;
    let mut out = SelectivityResult {
        person_id: spa.person_id.clone(),
        status: SelectivityStatus::NotApplicable,
        n_i,
        k_i,
        share_outside,
        t_act: None,
        null_mean: None,
        null_sd: None,
        p_value: None,
        d: None,
        b,
    };
    if k_i == 0 {
        return Ok(out);
    }
    // Rank sums are integers, so comparing them avoids rounding in the means.
    let act_sum: usize = ranks.iter().sum();
    let kf = k_i as f64;
    let mut at_most = 0usize;
    let mut draws = Vec::with_capacity(b);
    for _ in 0..b {
        let s: usize = sample(rng, n_i, k_i).iter().map(|i| i + 1).sum();
        if s <= act_sum {
            at_most += 1;
        }
        draws.push(s as f64 / kf);
    }
    let t_act = act_sum as f64 / kf;
    let mu = draws.iter().sum::<f64>() / b as f64;
    let sigma = (draws.iter().map(|t| (t - mu).powi(2)).sum::<f64>() / b as f64).sqrt();
    out.status = SelectivityStatus::Tested;
    out.t_act = Some(t_act);
    out.null_mean = Some(mu);
    out.null_sd = Some(sigma);
    out.p_value = Some((1 + at_most) as f64 / (b + 1) as f64);
    out.d = (sigma > 0.0).then(|| (t_act - mu) / sigma);
    Ok(out)
}
