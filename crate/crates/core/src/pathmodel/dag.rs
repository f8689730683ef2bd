use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::regress::{two_sided_p, wcorr, wls};
use super::{Dataset, PathError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Exogenous,
    Mode,
    Exposure,
    Mediator,
    Outcome,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Exogenous => "exogenous",
            Role::Mode => "mode",
            Role::Exposure => "exposure",
            Role::Mediator => "mediator",
            Role::Outcome => "outcome",
        }
    }
}

impl FromStr for Role {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "exogenous" => Role::Exogenous,
            "mode" => Role::Mode,
            "exposure" => Role::Exposure,
            "mediator" => Role::Mediator,
            "outcome" => Role::Outcome,
            _ => return Err(format!("unknown role {s:?}")),
        })
    }
}

/// Observed-variable DAG with variable roles. Variables keep declaration order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathDag {
    vars: Vec<String>,
    roles: Vec<Role>,
    parents: Vec<BTreeSet<usize>>,
}

/// Names used by [`PathDag::standard`].
pub const MODE_VARS: [&str; 2] = ["car_main_mode", "pt_subscription"];
pub const EXPOSURE_VAR: &str = "spa_log1p";
pub const MEDIATOR_VAR: &str = "travel_time";
pub const OUTCOME_VAR: &str = "h1";

impl PathDag {
    pub fn new() -> Self {
        Self {
            vars: Vec::new(),
            roles: Vec::new(),
            parents: Vec::new(),
        }
    }

    /// The accessibility pathway structure over the given individual
    /// attributes: attributes drive both mode variables, accessibility, travel
    /// time and diversity; mode variables drive accessibility, travel time and
    /// diversity; accessibility drives travel time and diversity; travel time
    /// drives diversity. The two mode variables are not linked.
    pub fn standard(exogenous: &[&str]) -> Self {
        let mut d = Self::new();
        for z in exogenous {
            d.add_var(z, Role::Exogenous).expect("distinct names");
        }
        for m in MODE_VARS {
            d.add_var(m, Role::Mode).expect("distinct names");
        }
        d.add_var(EXPOSURE_VAR, Role::Exposure).expect("distinct names");
        d.add_var(MEDIATOR_VAR, Role::Mediator).expect("distinct names");
        d.add_var(OUTCOME_VAR, Role::Outcome).expect("distinct names");
        let mut upstream: Vec<&str> = exogenous.to_vec();
        for m in MODE_VARS {
            for z in exogenous {
                d.add_edge(z, m).expect("known");
            }
        }
        upstream.extend(MODE_VARS);
        for target in [EXPOSURE_VAR, MEDIATOR_VAR, OUTCOME_VAR] {
            for u in &upstream {
                d.add_edge(u, target).expect("known");
            }
            upstream.push(target);
        }
        d
    }

    pub fn add_var(&mut self, name: &str, role: Role) -> Result<usize, PathError> {
        if self.index(name).is_some() {
            return Err(PathError::Parse {
                line: 0,
                message: format!("variable {name:?} declared twice"),
            });
        }
        self.vars.push(name.to_string());
        self.roles.push(role);
        self.parents.push(BTreeSet::new());
        Ok(self.vars.len() - 1)
    }

    pub fn add_edge(&mut self, from: &str, to: &str) -> Result<(), PathError> {
        let f = self.index(from).ok_or_else(|| PathError::UnknownVariable(from.to_string()))?;
        let t = self.index(to).ok_or_else(|| PathError::UnknownVariable(to.to_string()))?;
        self.parents[t].insert(f);
        Ok(())
    }

    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    pub fn role(&self, v: usize) -> Role {
        self.roles[v]
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.vars.iter().position(|v| v == name)
    }

    pub fn parents(&self, v: usize) -> &BTreeSet<usize> {
        &self.parents[v]
    }

    pub fn children(&self, v: usize) -> Vec<usize> {
        (0..self.vars.len()).filter(|&c| self.parents[c].contains(&v)).collect()
    }

    pub fn edge_count(&self) -> usize {
        self.parents.iter().map(BTreeSet::len).sum()
    }

    pub fn is_exogenous(&self, v: usize) -> bool {
        self.parents[v].is_empty()
    }

    pub fn adjacent(&self, a: usize, b: usize) -> bool {
        self.parents[a].contains(&b) || self.parents[b].contains(&a)
    }

    pub fn find_role(&self, role: Role) -> Option<usize> {
        self.roles.iter().position(|&r| r == role)
    }

    /// Variables in an order where every parent precedes its children.
    pub fn topological_order(&self) -> Result<Vec<usize>, PathError> {
        let n = self.vars.len();
        let mut indeg: Vec<usize> = self.parents.iter().map(BTreeSet::len).collect();
        let mut ready: Vec<usize> = (0..n).rev().filter(|&v| indeg[v] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(v) = ready.pop() {
            order.push(v);
            for c in self.children(v).into_iter().rev() {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    ready.push(c);
                }
            }
        }
        if order.len() == n {
            Ok(order)
        } else {
            Err(PathError::CyclicGraph)
        }
    }

    fn ancestors_of(&self, set: &BTreeSet<usize>) -> BTreeSet<usize> {
        let mut out = set.clone();
        let mut stack: Vec<usize> = set.iter().copied().collect();
        while let Some(v) = stack.pop() {
            for &p in &self.parents[v] {
                if out.insert(p) {
                    stack.push(p);
                }
            }
        }
        out
    }

    /// Whether `x` and `y` are d-separated by `z`, via reachability in the
    /// moralized ancestral graph.
    pub fn d_separated(&self, x: usize, y: usize, z: &BTreeSet<usize>) -> bool {
        let mut keep: BTreeSet<usize> = z.clone();
        keep.insert(x);
        keep.insert(y);
        let anc = self.ancestors_of(&keep);
        let n = self.vars.len();
        let mut adj = vec![BTreeSet::new(); n];
        for &v in &anc {
            let ps: Vec<usize> = self.parents[v].iter().copied().collect();
            for &p in &ps {
                adj[v].insert(p);
                adj[p].insert(v);
            }
            for (i, &a) in ps.iter().enumerate() {
                for &b in &ps[i + 1..] {
                    adj[a].insert(b);
                    adj[b].insert(a);
                }
            }
        }
        let mut seen = vec![false; n];
        let mut stack = vec![x];
        seen[x] = true;
        while let Some(v) = stack.pop() {
            if v == y {
                return false;
            }
            for &u in &adj[v] {
                if !seen[u] && !z.contains(&u) && anc.contains(&u) {
                    seen[u] = true;
                    stack.push(u);
                }
            }
        }
        true
    }

    pub fn to_text(&self) -> String {
        self.to_string()
    }
}

impl Default for PathDag {
    fn default() -> Self {
        Self::new()
    }
}

impl fmt::Display for PathDag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (v, r) in self.vars.iter().zip(&self.roles) {
            writeln!(f, "role {v} {}", r.as_str())?;
        }
        for (t, ps) in self.parents.iter().enumerate() {
            for &p in ps {
                writeln!(f, "edge {} {}", self.vars[p], self.vars[t])?;
            }
        }
        Ok(())
    }
}

impl FromStr for PathDag {
    type Err = PathError;

    /// Reads `role <var> <role>` and `edge <from> <to>` lines; `#` starts a comment.
    fn from_str(text: &str) -> Result<Self, PathError> {
        let mut d = PathDag::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| PathError::Parse { line: i + 1, message };
            let parts: Vec<&str> = line.split_whitespace().collect();
            match parts.as_slice() {
                ["role", var, role] => {
                    let role: Role = role.parse().map_err(err)?;
                    d.add_var(var, role).map_err(|_| err(format!("variable {var:?} declared twice")))?;
                }
                ["edge", from, to] => d.add_edge(from, to)?,
                _ => return Err(err(format!("cannot read {line:?}"))),
            }
        }
        d.topological_order()?;
        Ok(d)
    }
}

/// One testable independence implied by the graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpliedIndependence {
    pub x: String,
    pub y: String,
    pub given: Vec<String>,
    pub partial_r: f64,
    pub z: f64,
    pub p_value: f64,
}

/// Tests the basis set of implied independencies: every non-adjacent pair,
/// other than two exogenous variables, given the union of their parents.
/// Exogenous variables are allowed to correlate freely.
pub fn check_dag(dag: &PathDag, data: &Dataset) -> Result<Vec<ImpliedIndependence>, PathError> {
    dag.topological_order()?;
    let n = dag.vars().len();
    let mut out = Vec::new();
    for x in 0..n {
        for y in x + 1..n {
            if dag.adjacent(x, y) || (dag.is_exogenous(x) && dag.is_exogenous(y)) {
                continue;
            }
            let mut given: BTreeSet<usize> = dag.parents(x).union(dag.parents(y)).copied().collect();
            given.remove(&x);
            given.remove(&y);
            if !dag.d_separated(x, y, &given) {
                continue;
            }
            let names: Vec<String> = given.iter().map(|&g| dag.vars()[g].clone()).collect();
            let cols: Vec<(&str, &[f64])> = names
                .iter()
                .map(|g| Ok((g.as_str(), data.column(g)?)))
                .collect::<Result<_, PathError>>()?;
            let xv = data.column(&dag.vars()[x])?;
            let yv = data.column(&dag.vars()[y])?;
            let r = if cols.is_empty() {
                wcorr(xv, yv, &data.weights)
            } else {
                let rx = residuals(&dag.vars()[x], xv, &cols, &data.weights)?;
                let ry = residuals(&dag.vars()[y], yv, &cols, &data.weights)?;
                wcorr(&rx, &ry, &data.weights)
            };
            let dof = data.len() as f64 - names.len() as f64 - 3.0;
            let z = r.clamp(-0.999_999_999, 0.999_999_999).atanh() * dof.max(1.0).sqrt();
            out.push(ImpliedIndependence {
                x: dag.vars()[x].clone(),
                y: dag.vars()[y].clone(),
                given: names,
                partial_r: r,
                z,
                p_value: two_sided_p(z),
            });
        }
    }
    Ok(out)
}

fn residuals(name: &str, y: &[f64], xs: &[(&str, &[f64])], w: &[f64]) -> Result<Vec<f64>, PathError> {
    let r = wls(name, y, xs, w)?;
    Ok((0..y.len())
        .map(|i| {
            y[i] - r.intercept
                - r.coefficients
                    .iter()
                    .zip(xs)
                    .map(|(c, (_, col))| c.estimate * col[i])
                    .sum::<f64>()
        })
        .collect())
}
