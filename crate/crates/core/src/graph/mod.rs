//! Small-graph structure learning: skeleton discovery, MDL scoring and
//! CCA-augmented greedy orientation.
//!
//! Data is passed column-major, one `Vec<f64>` per variable.

mod bounds;
mod linalg;
mod mdl;
mod pc;
mod search;

pub use bounds::{compute_pac_bound, lambda2_threshold, PacBoundInputs};
pub use mdl::{mdl_score, node_mdl, RIDGE};
pub use pc::{fisher_z_partial_corr, pc_stable_skeleton, PcResult};
pub use search::{
    ccl_plus_loop, ccl_sweep, exhaustive_best, score_graph, xges_orient, xges_orient_from, xges_path, CclParams, LoopTrace, ScoreBreakdown,
};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Serialized form shared by [`Skeleton`] and [`Dag`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EdgeList {
    pub nodes: usize,
    pub edges: Vec<(usize, usize)>,
}

/// Undirected graph without self-loops.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "EdgeList", try_from = "EdgeList")]
pub struct Skeleton {
    adj: Vec<Vec<bool>>,
}

impl Skeleton {
    pub fn empty(n: usize) -> Self {
        Skeleton { adj: vec![vec![false; n]; n] }
    }

    pub fn complete(n: usize) -> Self {
        let mut s = Self::empty(n);
        for i in 0..n {
            for j in i + 1..n {
                s.adj[i][j] = true;
                s.adj[j][i] = true;
            }
        }
        s
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut s = Self::empty(n);
        for &(a, b) in edges {
            s.add(a, b)?;
        }
        Ok(s)
    }

    pub fn n_nodes(&self) -> usize {
        self.adj.len()
    }

    fn check(&self, a: usize, b: usize) -> Result<()> {
        if a == b {
            return Err(Error::config(format!("self-loop on node {a}")));
        }
        if a >= self.n_nodes() || b >= self.n_nodes() {
            return Err(Error::MissingColumn(a.max(b)));
        }
        Ok(())
    }

    pub fn add(&mut self, a: usize, b: usize) -> Result<()> {
        self.check(a, b)?;
        self.adj[a][b] = true;
        self.adj[b][a] = true;
        Ok(())
    }

    pub fn remove(&mut self, a: usize, b: usize) {
        if a < self.n_nodes() && b < self.n_nodes() {
            self.adj[a][b] = false;
            self.adj[b][a] = false;
        }
    }

    pub fn contains(&self, a: usize, b: usize) -> bool {
        a < self.n_nodes() && b < self.n_nodes() && self.adj[a][b]
    }

    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        (0..self.n_nodes()).filter(|&j| self.adj[i][j]).collect()
    }

    /// Edges as `(a, b)` with `a < b`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.n_nodes();
        (0..n).flat_map(move |i| (i + 1..n).filter(move |&j| self.adj[i][j]).map(move |j| (i, j)))
    }

    pub fn n_edges(&self) -> usize {
        self.edges().count()
    }
}

impl From<Skeleton> for EdgeList {
    fn from(s: Skeleton) -> Self {
        EdgeList { nodes: s.n_nodes(), edges: s.edges().collect() }
    }
}

impl TryFrom<EdgeList> for Skeleton {
    type Error = Error;
    fn try_from(e: EdgeList) -> Result<Self> {
        Skeleton::from_edges(e.nodes, &e.edges)
    }
}

/// Directed acyclic graph. Every mutation re-checks acyclicity.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "EdgeList", try_from = "EdgeList")]
pub struct Dag {
    adj: Vec<Vec<bool>>,
}

impl Dag {
    pub fn empty(n: usize) -> Self {
        Dag { adj: vec![vec![false; n]; n] }
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut d = Self::empty(n);
        for &(a, b) in edges {
            d.add_edge(a, b)?;
        }
        Ok(d)
    }

    pub fn n_nodes(&self) -> usize {
        self.adj.len()
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        from < self.n_nodes() && to < self.n_nodes() && self.adj[from][to]
    }

    /// Directed edges in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.n_nodes();
        (0..n).flat_map(move |i| (0..n).filter(move |&j| self.adj[i][j]).map(move |j| (i, j)))
    }

    pub fn n_edges(&self) -> usize {
        self.edges().count()
    }

    pub fn parents(&self, j: usize) -> Vec<usize> {
        (0..self.n_nodes()).filter(|&i| self.adj[i][j]).collect()
    }

    /// Whether a directed path leads from `from` to `to`.
    pub fn reaches(&self, from: usize, to: usize) -> bool {
        let mut seen = vec![false; self.n_nodes()];
        let mut stack = vec![from];
        while let Some(v) = stack.pop() {
            if v == to {
                return true;
            }
            if std::mem::replace(&mut seen[v], true) {
                continue;
            }
            stack.extend((0..self.n_nodes()).filter(|&w| self.adj[v][w] && !seen[w]));
        }
        false
    }

    pub fn add_edge(&mut self, from: usize, to: usize) -> Result<()> {
        if from == to {
            return Err(Error::Cycle(from, to));
        }
        if from >= self.n_nodes() || to >= self.n_nodes() {
            return Err(Error::MissingColumn(from.max(to)));
        }
        if self.adj[to][from] || self.reaches(to, from) {
            return Err(Error::Cycle(from, to));
        }
        self.adj[from][to] = true;
        Ok(())
    }

    pub fn remove_edge(&mut self, from: usize, to: usize) -> bool {
        self.has_edge(from, to) && std::mem::replace(&mut self.adj[from][to], false)
    }

    /// Replaces `from -> to` with `to -> from`; leaves the graph unchanged on error.
    pub fn reverse_edge(&mut self, from: usize, to: usize) -> Result<()> {
        if !self.has_edge(from, to) {
            return Err(Error::config(format!("no edge {from} -> {to} to reverse")));
        }
        self.adj[from][to] = false;
        if let Err(e) = self.add_edge(to, from) {
            self.adj[from][to] = true;
            return Err(e);
        }
        Ok(())
    }

    pub fn is_acyclic(&self) -> bool {
        (0..self.n_nodes()).all(|v| !self.parents(v).iter().any(|&p| p == v || self.reaches(v, p)))
    }

    pub fn skeleton(&self) -> Skeleton {
        let mut s = Skeleton::empty(self.n_nodes());
        for (a, b) in self.edges() {
            s.add(a, b).expect("dag edges are valid");
        }
        s
    }

    /// Edges of `self` that are not edges of `truth`, orientation included.
    pub fn spurious_edges(&self, truth: &Dag) -> usize {
        self.edges().filter(|&(a, b)| !truth.has_edge(a, b)).count()
    }
}

impl From<Dag> for EdgeList {
    fn from(d: Dag) -> Self {
        EdgeList { nodes: d.n_nodes(), edges: d.edges().collect() }
    }
}

impl TryFrom<EdgeList> for Dag {
    type Error = Error;
    fn try_from(e: EdgeList) -> Result<Self> {
        Dag::from_edges(e.nodes, &e.edges)
    }
}

// Text form: an optional `# nodes: N` line, then one edge per line.

impl fmt::Display for Dag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "# nodes: {}", self.n_nodes())?;
        self.edges().try_for_each(|(a, b)| writeln!(f, "{a} -> {b}"))
    }
}

impl fmt::Display for Skeleton {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "# nodes: {}", self.n_nodes())?;
        self.edges().try_for_each(|(a, b)| writeln!(f, "{a} -- {b}"))
    }
}

fn parse_edge_list(text: &str, arrow: &str) -> Result<EdgeList> {
    let mut nodes = None;
    let mut edges = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let perr = |msg: String| Error::Parse { line: k + 1, msg };
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if let Some(v) = rest.trim().strip_prefix("nodes:") {
                nodes = Some(v.trim().parse::<usize>().map_err(|e| perr(e.to_string()))?);
            }
            continue;
        }
        let (a, b) = line.split_once(arrow).ok_or_else(|| perr(format!("expected `i {arrow} j`")))?;
        let a = a.trim().parse::<usize>().map_err(|e| perr(e.to_string()))?;
        let b = b.trim().parse::<usize>().map_err(|e| perr(e.to_string()))?;
        edges.push((a, b));
    }
    let implied = edges.iter().map(|&(a, b)| a.max(b) + 1).max().unwrap_or(0);
    Ok(EdgeList { nodes: nodes.unwrap_or(implied), edges })
}

impl FromStr for Dag {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        parse_edge_list(s, "->")?.try_into()
    }
}

impl FromStr for Skeleton {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        parse_edge_list(s, "--")?.try_into()
    }
}

/// Number of rows shared by all columns.
pub(crate) fn n_rows(data: &[Vec<f64>]) -> Result<usize> {
    let n = data.first().map_or(0, Vec::len);
    if let Some(bad) = data.iter().find(|c| c.len() != n) {
        return Err(Error::ShapeMismatch { expected: n, actual: bad.len() });
    }
    Ok(n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dag_rejects_cycles() {
        let mut d = Dag::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        assert!(matches!(d.add_edge(2, 0), Err(Error::Cycle(2, 0))));
        assert!(d.add_edge(1, 0).is_err());
        assert!(d.add_edge(1, 1).is_err());
        d.add_edge(0, 2).unwrap();
        assert!(d.reverse_edge(0, 2).is_err());
        assert!(d.has_edge(0, 2));
        assert!(d.is_acyclic());
        assert_eq!(d.edges().collect::<Vec<_>>(), vec![(0, 1), (0, 2), (1, 2)]);
        assert_eq!(d.parents(2), vec![0, 1]);
    }

    #[test]
    fn reverse_and_remove() {
        let mut d = Dag::from_edges(2, &[(0, 1)]).unwrap();
        d.reverse_edge(0, 1).unwrap();
        assert!(d.has_edge(1, 0) && !d.has_edge(0, 1));
        assert!(d.remove_edge(1, 0));
        assert!(!d.remove_edge(1, 0));
        assert_eq!(d.n_edges(), 0);
    }

    #[test]
    fn spurious_counts_orientation() {
        let truth = Dag::from_edges(3, &[(0, 1), (1, 2), (0, 2)]).unwrap();
        let learned = Dag::from_edges(3, &[(1, 0), (1, 2)]).unwrap();
        assert_eq!(learned.spurious_edges(&truth), 1);
        assert_eq!(truth.spurious_edges(&truth), 0);
    }

    #[test]
    fn text_round_trip() {
        let d = Dag::from_edges(4, &[(2, 0), (0, 1)]).unwrap();
        let text = d.to_string();
        assert_eq!(text, "# nodes: 4\n0 -> 1\n2 -> 0\n");
        assert_eq!(text.parse::<Dag>().unwrap(), d);
        let s = Skeleton::from_edges(3, &[(2, 1)]).unwrap();
        assert_eq!(s.to_string().parse::<Skeleton>().unwrap(), s);
        assert_eq!("0 -> 2\n\n".parse::<Dag>().unwrap().n_nodes(), 3);
        assert!(matches!("0 -> x".parse::<Dag>(), Err(Error::Parse { line: 1, .. })));
        assert!("0 -> 1\n1 -> 0".parse::<Dag>().is_err());
    }

    #[test]
    fn json_round_trip() {
        let d = Dag::from_edges(3, &[(0, 2)]).unwrap();
        let json = serde_json::to_string(&d).unwrap();
        assert_eq!(json, r#"{"nodes":3,"edges":[[0,2]]}"#);
        assert_eq!(serde_json::from_str::<Dag>(&json).unwrap(), d);
        assert!(serde_json::from_str::<Dag>(r#"{"nodes":2,"edges":[[0,1],[1,0]]}"#).is_err());
        let s = Skeleton::complete(3);
        assert_eq!(serde_json::from_str::<Skeleton>(&serde_json::to_string(&s).unwrap()).unwrap(), s);
    }

    #[test]
    fn skeleton_basics() {
        let s = Skeleton::complete(4);
        assert_eq!(s.n_edges(), 6);
        assert_eq!(s.neighbors(2), vec![0, 1, 3]);
        assert!(Skeleton::from_edges(2, &[(1, 1)]).is_err());
        assert_eq!(Dag::from_edges(3, &[(2, 0)]).unwrap().skeleton(), Skeleton::from_edges(3, &[(0, 2)]).unwrap());
    }
}
