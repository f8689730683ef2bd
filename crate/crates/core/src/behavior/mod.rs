//! Observed leisure behaviour: selectivity of visited locations relative to
//! the feasible set, location diversity, daily travel time, and weighted
//! descriptive statistics.

mod selectivity;

use std::collections::{BTreeMap, HashMap};

use chrono::NaiveDate;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ingest::{TripPurpose, TripRecord};
use crate::spatial::{CellId, CellIndex, SpatialError};
use crate::stats::weighted_median;

pub use selectivity::{selectivity_test, selectivity_test_with, SelectivityResult, SelectivityStatus};

#[derive(Debug, Error)]
pub enum BehaviorError {
    #[error("person {0:?} has an empty feasible set")]
    EmptyFeasibleSet(String),
    #[error("person {0:?} has no leisure visits")]
    EmptyVisits(String),
    #[error(transparent)]
    Spatial(#[from] SpatialError),
}

/// Generator for one person's draws, derived from the run seed and the
/// person id so that results do not depend on processing order.
pub fn person_rng(seed: u64, person_id: &str) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(person_id.as_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}

/// Distinct visited cells of one person with their visit counts.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct VisitSet {
    pub person_id: String,
    counts: BTreeMap<CellId, usize>,
}

impl VisitSet {
    pub fn from_cells<I: IntoIterator<Item = CellId>>(person_id: &str, cells: I) -> Self {
        let mut counts = BTreeMap::new();
        for c in cells {
            *counts.entry(c).or_insert(0) += 1;
        }
        Self {
            person_id: person_id.to_string(),
            counts,
        }
    }

    pub fn cells(&self) -> impl Iterator<Item = &CellId> {
        self.counts.keys()
    }

    pub fn counts(&self) -> impl Iterator<Item = (&CellId, usize)> {
        self.counts.iter().map(|(c, &n)| (c, n))
    }

    /// Total visits.
    pub fn n(&self) -> usize {
        self.counts.values().sum()
    }

    /// Distinct cells.
    pub fn k(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    #[default]
    Coarse,
    Fine,
}

/// Leisure visits per person, keyed by person id. Each LEISURE trip counts one
/// visit to its destination cell.
pub fn leisure_visits(
    trips: &[TripRecord],
    index: &CellIndex,
    granularity: Granularity,
) -> Result<BTreeMap<String, VisitSet>, BehaviorError> {
    let mut cells: BTreeMap<String, Vec<CellId>> = BTreeMap::new();
    for t in trips.iter().filter(|t| t.purpose == TripPurpose::Leisure) {
        let c = match granularity {
            Granularity::Fine => t.dest_cell.clone(),
            Granularity::Coarse => index.parent(&t.dest_cell)?,
        };
        cells.entry(t.person_id.clone()).or_default().push(c);
    }
    Ok(cells
        .into_iter()
        .map(|(p, cs)| {
            let v = VisitSet::from_cells(&p, cs);
            (p, v)
        })
        .collect())
}

/// Hill number of order 1: the exponential of the Shannon entropy of the
/// visit shares.
pub fn hill_diversity(visits: &VisitSet) -> Result<f64, BehaviorError> {
    let n = visits.n();
    if n == 0 {
        return Err(BehaviorError::EmptyVisits(visits.person_id.clone()));
    }
    let h: f64 = visits
        .counts()
        .map(|(_, c)| {
            let p = c as f64 / n as f64;
            -p * p.ln()
        })
        .sum();
    Ok(h.exp())
}

/// Travel minutes of one person on one survey day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayTotal {
    pub person_id: String,
    pub date: NaiveDate,
    pub minutes: f64,
    pub day_weight: f64,
}

/// Sums trip durations per (person, date). The day weight is taken from the
/// day's first trip.
pub fn daily_totals(trips: &[TripRecord]) -> Vec<DayTotal> {
    let mut days: BTreeMap<(&str, NaiveDate), (f64, f64)> = BTreeMap::new();
    for t in trips {
        let e = days.entry((t.person_id.as_str(), t.date)).or_insert((0.0, t.day_weight));
        e.0 += t.duration_min;
    }
    days.into_iter()
        .map(|((p, date), (minutes, day_weight))| DayTotal {
            person_id: p.to_string(),
            date,
            minutes,
            day_weight,
        })
        .collect()
}

/// Day-weighted mean of daily travel minutes per person. Survey days without
/// trips should be passed as zero-minute days.
pub fn total_travel_time(days: &[DayTotal]) -> BTreeMap<String, f64> {
    let mut acc: BTreeMap<&str, (f64, f64)> = BTreeMap::new();
    for d in days {
        let e = acc.entry(d.person_id.as_str()).or_insert((0.0, 0.0));
        e.0 += d.minutes * d.day_weight;
        e.1 += d.day_weight;
    }
    acc.into_iter().map(|(p, (s, w))| (p.to_string(), s / w)).collect()
}

/// Weighted mean and SD; see [`crate::stats::weighted_mean_sd`].
pub fn weighted_stats(values: &[f64], weights: &[f64]) -> (f64, f64) {
    crate::stats::weighted_mean_sd(values, weights)
}

/// Weighted median with a bootstrap standard error. Each replicate draws
/// `values.len()` persons with probability proportional to weight and takes
/// the plain median of the draw.
pub fn weighted_median_bootstrap(values: &[f64], weights: &[f64], replicates: usize, seed: u64) -> (f64, f64) {
    assert_eq!(values.len(), weights.len());
    assert!(replicates >= 1);
    let pairs: Vec<(f64, f64)> = values.iter().copied().zip(weights.iter().copied()).collect();
    let median = weighted_median(&pairs).unwrap_or(f64::NAN);
    if values.len() <= 1 {
        return (median, 0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = WeightedIndex::new(weights).expect("weights must be positive");
    let n = values.len();
    let mut buf = vec![0.0; n];
    let meds: Vec<f64> = (0..replicates)
        .map(|_| {
            for b in buf.iter_mut() {
                *b = values[dist.sample(&mut rng)];
            }
            plain_median(&mut buf)
        })
        .collect();
    if replicates == 1 {
        return (median, 0.0);
    }
    let m = meds.iter().sum::<f64>() / replicates as f64;
    let var = meds.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (replicates as f64 - 1.0);
    (median, var.sqrt())
}

fn plain_median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Per-person selectivity results for everyone with a non-empty feasible set
/// and at least one visit, in input order.
pub fn selectivity_population(
    sets: &[crate::access::FeasibleSet],
    visits: &BTreeMap<String, VisitSet>,
    b: usize,
    seed: u64,
) -> Vec<SelectivityResult> {
    use rayon::prelude::*;
    sets.par_iter()
        .filter_map(|s| {
            let v = visits.get(&s.person_id)?;
            selectivity_test(s, v, b, seed).ok()
        })
        .collect()
}

/// Weighted medians of a per-person value by group label, e.g. by coarse home cell.
pub fn grouped_weighted_median(rows: &[(String, f64, f64)]) -> BTreeMap<String, f64> {
    let mut g: HashMap<&str, Vec<(f64, f64)>> = HashMap::new();
    for (k, v, w) in rows {
        g.entry(k.as_str()).or_default().push((*v, *w));
    }
    g.into_iter()
        .filter_map(|(k, pairs)| weighted_median(&pairs).map(|m| (k.to_string(), m)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spatial::Resolution;
    use proptest::prelude::*;

    fn vs(counts: &[usize]) -> VisitSet {
        VisitSet::from_cells(
            "p",
            counts.iter().enumerate().flat_map(|(i, &c)| {
                std::iter::repeat_n(
                    CellId {
                        resolution: Resolution::Coarse,
                        token: format!("C{i}_0"),
                    },
                    c,
                )
            }),
        )
    }

    #[test]
    fn hill_examples() {
        assert_eq!(hill_diversity(&vs(&[5])).unwrap(), 1.0);
        assert!((hill_diversity(&vs(&[3, 3, 3, 3])).unwrap() - 4.0).abs() < 1e-12);
        assert!((hill_diversity(&vs(&[2, 1, 1])).unwrap() - 2.0 * 2f64.sqrt()).abs() < 1e-12);
        assert!(matches!(hill_diversity(&vs(&[])), Err(BehaviorError::EmptyVisits(_))));
    }

    proptest! {
        #[test]
        fn hill_bounds(counts in prop::collection::vec(1usize..20, 1..15)) {
            let v = vs(&counts);
            let h = hill_diversity(&v).unwrap();
            prop_assert!(h >= 1.0 - 1e-12 && h <= v.k() as f64 + 1e-9);
        }
    }

    fn trip(p: &str, day: u32, dur: f64, w: f64) -> TripRecord {
        let cell = CellId {
            resolution: Resolution::Fine,
            token: "F0_0".into(),
        };
        TripRecord {
            person_id: p.into(),
            date: NaiveDate::from_ymd_opt(2023, 3, day).unwrap(),
            origin_cell: cell.clone(),
            dest_cell: cell,
            mode: crate::ingest::TravelMode::Car,
            purpose: TripPurpose::Work,
            duration_min: dur,
            depart_time: 0,
            day_weight: w,
        }
    }

    #[test]
    fn travel_time_totals() {
        let trips = [trip("a", 1, 30.0, 1.0), trip("a", 1, 40.0, 1.0), trip("b", 1, 10.0, 1.0)];
        let mut days = daily_totals(&trips);
        assert_eq!(days[0].minutes, 70.0);
        days.push(DayTotal {
            person_id: "b".into(),
            date: NaiveDate::from_ymd_opt(2023, 3, 2).unwrap(),
            minutes: 0.0,
            day_weight: 3.0,
        });
        let t = total_travel_time(&days);
        assert_eq!(t["a"], 70.0);
        assert_eq!(t["b"], 2.5);
    }

    #[test]
    fn bootstrap_basics() {
        assert_eq!(weighted_median_bootstrap(&[4.0], &[2.0], 100, 1), (4.0, 0.0));
        let x: Vec<f64> = (0..100).map(f64::from).collect();
        let w = vec![1.0; 100];
        let (m, se) = weighted_median_bootstrap(&x, &w, 500, 9);
        assert_eq!(m, 49.5);
        // Asymptotic SE of a uniform sample median: sqrt(n)·range/(2n) ≈ 4.95.
        assert!(se > 2.5 && se < 8.0, "se = {se}");
        assert_eq!(weighted_median_bootstrap(&x, &w, 50, 3), weighted_median_bootstrap(&x, &w, 50, 3));
    }

    #[test]
    fn rng_depends_on_person() {
        use rand::RngExt;
        let a: u64 = person_rng(1, "a").random();
        let b: u64 = person_rng(1, "b").random();
        let a2: u64 = person_rng(1, "a").random();
        assert_ne!(a, b);
        assert_eq!(a, a2);
    }
}
