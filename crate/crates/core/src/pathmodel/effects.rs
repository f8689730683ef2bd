use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::regress::{two_sided_p, Regression};
use super::PathError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathTerm {
    pub nodes: Vec<String>,
    pub product: f64,
}

/// Direct, indirect and total standardized effect of `source` on `target`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectRow {
    pub source: String,
    pub target: String,
    pub direct: f64,
    pub direct_se: f64,
    pub direct_p: f64,
    pub indirect: f64,
    pub indirect_se: f64,
    pub indirect_p: f64,
    pub total: f64,
    pub total_se: f64,
    pub total_p: f64,
    pub paths: Vec<PathTerm>,
}

/// (equation, coefficient) position of each edge, keyed by (parent, child).
type EdgeIndex<'a> = HashMap<(&'a str, &'a str), (usize, usize)>;

fn edge_index(eqs: &[Regression]) -> EdgeIndex<'_> {
    let mut m = HashMap::new();
    for (e, r) in eqs.iter().enumerate() {
        for (c, coef) in r.coefficients.iter().enumerate() {
            m.insert((coef.predictor.as_str(), r.outcome.as_str()), (e, c));
        }
    }
    m
}

fn enumerate_paths<'a>(eqs: &'a [Regression], from: &'a str, to: &str) -> Vec<Vec<&'a str>> {
    let mut children: HashMap<&str, Vec<&str>> = HashMap::new();
    for r in eqs {
        for c in &r.coefficients {
            children.entry(c.predictor.as_str()).or_default().push(r.outcome.as_str());
        }
    }
    let mut out = Vec::new();
    let mut stack = vec![vec![from]];
    while let Some(path) = stack.pop() {
        let last = *path.last().expect("non-empty");
        if last == to {
            out.push(path);
            continue;
        }
        for &c in children.get(last).into_iter().flatten() {
            if !path.contains(&c) {
                let mut p = path.clone();
                p.push(c);
                stack.push(p);
            }
        }
    }
    out.sort();
    out
}

/// Decomposes the standardized effect of `source` on `target` over every
/// directed path. Standard errors use the delta method with coefficients from
/// different equations treated as uncorrelated.
pub fn decompose_effects(eqs: &[Regression], source: &str, target: &str) -> Result<EffectRow, PathError> {
    let idx = edge_index(eqs);
    let paths = enumerate_paths(eqs, source, target);
    if paths.is_empty() {
        return Err(PathError::MissingPath {
            from: source.to_string(),
            to: target.to_string(),
        });
    }
    let coef = |&(e, c): &(usize, usize)| eqs[e].coefficients[c].std_estimate;
    let cov = |a: (usize, usize), b: (usize, usize)| {
        if a.0 == b.0 {
            eqs[a.0].std_vcov[a.1][b.1]
        } else {
            0.0
        }
    };
    // Gradient of a sum of path products, keyed by edge position; ordered so
    // that the SE sums run in a fixed order.
    let gradient = |ps: &[&Vec<&str>]| {
        let mut g: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for p in ps {
            let edges: Vec<(usize, usize)> = p.windows(2).map(|w| idx[&(w[0], w[1])]).collect();
            for (i, e) in edges.iter().enumerate() {
                let others: f64 = edges.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, e)| coef(e)).product();
                *g.entry(*e).or_insert(0.0) += others;
            }
        }
        g
    };
    let se = |g: &BTreeMap<(usize, usize), f64>| {
        let mut v = 0.0;
        for (a, ga) in g {
            for (b, gb) in g {
                v += ga * gb * cov(*a, *b);
            }
        }
        v.max(0.0).sqrt()
    };
    let terms: Vec<PathTerm> = paths
        .iter()
        .map(|p| PathTerm {
            nodes: p.iter().map(|s| s.to_string()).collect(),
            product: p.windows(2).map(|w| coef(&idx[&(w[0], w[1])])).product(),
        })
        .collect();
    let direct_paths: Vec<&Vec<&str>> = paths.iter().filter(|p| p.len() == 2).collect();
    let indirect_paths: Vec<&Vec<&str>> = paths.iter().filter(|p| p.len() > 2).collect();
    let all: Vec<&Vec<&str>> = paths.iter().collect();
    let direct: f64 = terms.iter().filter(|t| t.nodes.len() == 2).map(|t| t.product).sum();
    let indirect: f64 = terms.iter().filter(|t| t.nodes.len() > 2).map(|t| t.product).sum();
    let (direct_se, indirect_se, total_se) = (
        se(&gradient(&direct_paths)),
        se(&gradient(&indirect_paths)),
        se(&gradient(&all)),
    );
    let p = |est: f64, se: f64| if se > 0.0 { two_sided_p(est / se) } else { f64::NAN };
    Ok(EffectRow {
        source: source.to_string(),
        target: target.to_string(),
        direct,
        direct_se,
        direct_p: p(direct, direct_se),
        indirect,
        indirect_se,
        indirect_p: p(indirect, indirect_se),
        total: direct + indirect,
        total_se,
        total_p: p(direct + indirect, total_se),
        paths: terms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eq(outcome: &str, coefs: &[(&str, f64, f64)]) -> Regression {
        Regression::from_standardized(outcome, coefs)
    }

    #[test]
    fn reported_accessibility_effects() {
        let eqs = [eq("B", &[("A", -0.37, 0.02)]), eq("H1", &[("A", 0.13, 0.03), ("B", 0.23, 0.03)])];
        let r = decompose_effects(&eqs, "A", "H1").unwrap();
        assert!((r.direct - 0.13).abs() < 1e-12);
        assert!((r.indirect - -0.0851).abs() < 1e-12);
        assert!((r.total - 0.0449).abs() < 1e-12);
        // Delta method for a product of independent estimates.
        let se = (0.23f64.powi(2) * 0.02f64.powi(2) + 0.37f64.powi(2) * 0.03f64.powi(2)).sqrt();
        assert!((r.indirect_se - se).abs() < 1e-12);
    }

    #[test]
    fn zero_first_leg() {
        let eqs = [eq("B", &[("A", 0.0, 0.02)]), eq("H1", &[("A", 0.2, 0.03), ("B", 0.5, 0.03)])];
        let r = decompose_effects(&eqs, "A", "H1").unwrap();
        assert_eq!(r.indirect, 0.0);
        assert_eq!(r.total, r.direct);
    }

    #[test]
    fn three_paths_match_enumeration() {
        // A -> M1 -> Y, A -> M2 -> Y, A -> M1 -> M2 -> Y, plus A -> Y.
        let eqs = [
            eq("M1", &[("A", 0.5, 0.1)]),
            eq("M2", &[("A", 0.4, 0.1), ("M1", 0.3, 0.1)]),
            eq("Y", &[("A", 0.1, 0.1), ("M1", 0.2, 0.1), ("M2", -0.6, 0.1)]),
        ];
        let r = decompose_effects(&eqs, "A", "Y").unwrap();
        let brute = 0.5 * 0.2 + 0.4 * -0.6 + 0.5 * 0.3 * -0.6;
        assert_eq!(r.paths.len(), 4);
        assert!((r.indirect - brute).abs() < 1e-12);
        assert!((r.total - (r.direct + r.indirect)).abs() < 1e-12);
        assert!(matches!(decompose_effects(&eqs, "Y", "A"), Err(PathError::MissingPath { .. })));
    }
}
