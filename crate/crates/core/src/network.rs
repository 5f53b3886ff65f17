//! Node/bond graph, signed incidence matrix and bond vectors.
//!
//! Bond `i` running from node `s` to node `e` gets an incidence row with
//! `+1` in column `s` and `-1` in column `e`, so the bond vector `A·X`
//! of that row is `X[s] - X[e]`.

use std::collections::HashMap;
use std::fmt;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;

/// Dense node index in `[0, n)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // 1-based for anything user-facing
        write!(f, "{}", self.0 + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Bond {
    pub start: NodeId,
    pub end: NodeId,
}

impl Bond {
    pub fn new(start: usize, end: usize) -> Self {
        Bond {
            start: NodeId(start),
            end: NodeId(end),
        }
    }

    pub fn reversed(self) -> Self {
        Bond {
            start: self.end,
            end: self.start,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("a network needs at least 2 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("bond list is empty")]
    NoBonds,
    #[error("bond {bond} references node index {node}, but there are only {n} nodes")]
    InvalidNode { bond: usize, node: usize, n: usize },
    #[error("bond {bond} starts and ends at the same node")]
    SelfLoop { bond: usize },
    #[error("bond {bond} duplicates bond {first} (same node pair)")]
    DuplicateBond { bond: usize, first: usize },
    #[error("bond {bond} has zero reference length")]
    ZeroLengthBond { bond: usize },
    #[error("node position {node} is not finite")]
    NonFinitePosition { node: usize },
    #[error("graph is disconnected: node {unreached} cannot be reached from node 0")]
    DisconnectedGraph { unreached: usize },
}

/// Signed incidence matrix stored as two `(column, value)` entries per row.
#[derive(Debug, Clone, PartialEq)]
pub struct IncidenceMatrix {
    n_cols: usize,
    rows: Vec<[(usize, f64); 2]>,
}

impl IncidenceMatrix {
    pub fn from_bonds(n: usize, bonds: &[Bond]) -> Self {
        let rows = bonds
            .iter()
            .map(|b| [(b.start.0, 1.0), (b.end.0, -1.0)])
            .collect();
        IncidenceMatrix { n_cols: n, rows }
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &[(usize, f64); 2] {
        &self.rows[i]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[(usize, f64); 2]> {
        self.rows.iter()
    }

    /// `A·X` for an n×3 block of row vectors.
    pub fn apply(&self, x: &[Vec3]) -> Vec<Vec3> {
        assert_eq!(x.len(), self.n_cols, "incidence apply: row count mismatch");
        self.rows
            .iter()
            .map(|r| x[r[0].0] * r[0].1 + x[r[1].0] * r[1].1)
            .collect()
    }

    /// `Aᵀ·F` for an m×3 block of row vectors.
    pub fn apply_transpose(&self, f: &[Vec3]) -> Vec<Vec3> {
        assert_eq!(
            f.len(),
            self.rows.len(),
            "incidence transpose: row count mismatch"
        );
        let mut out = vec![Vec3::zeros(); self.n_cols];
        for (r, fi) in self.rows.iter().zip(f) {
            for &(col, val) in r {
                out[col] += fi * val;
            }
        }
        out
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut a = nalgebra::DMatrix::zeros(self.rows.len(), self.n_cols);
        for (i, r) in self.rows.iter().enumerate() {
            for &(col, val) in r {
                a[(i, col)] += val;
            }
        }
        a
    }
}

/// Problems found by [`validate_network`].
#[derive(Debug, Clone, PartialEq)]
pub enum Diagnostic {
    /// Row does not hold exactly one `+1` and one `-1` in distinct columns.
    MalformedIncidenceRow {
        bond: usize,
    },
    /// Incidence row disagrees with the bond list.
    IncidenceBondMismatch {
        bond: usize,
    },
    SelfLoop {
        bond: usize,
    },
    DuplicateBond {
        bond: usize,
        first: usize,
    },
    /// Stored reference bond vector is not `A·D`.
    StaleBondVector {
        bond: usize,
    },
    /// Stored rest length is not the norm of the reference bond vector.
    StaleRestLength {
        bond: usize,
    },
    NonPositiveRestLength {
        bond: usize,
    },
    Disconnected {
        unreached: usize,
    },
}

#[derive(Debug, Clone)]
pub struct Network {
    bonds: Vec<Bond>,
    incidence: IncidenceMatrix,
    positions: Vec<Vec3>,
    bond_vectors: Vec<Vec3>,
    rest_lengths: Vec<f64>,
}

impl Network {
    pub fn node_count(&self) -> usize {
        self.positions.len()
    }

    pub fn bond_count(&self) -> usize {
        self.bonds.len()
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    pub fn incidence(&self) -> &IncidenceMatrix {
        &self.incidence
    }

    /// Reference positions `D`.
    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }

    /// Reference bond vectors `b = A·D`.
    pub fn bond_vectors(&self) -> &[Vec3] {
        &self.bond_vectors
    }

    pub fn rest_lengths(&self) -> &[f64] {
        &self.rest_lengths
    }

    pub fn mean_rest_length(&self) -> f64 {
        self.rest_lengths.iter().sum::<f64>() / self.rest_lengths.len() as f64
    }

    /// Length below which a deformed bond counts as collapsed.
    pub fn degenerate_length(&self) -> f64 {
        1e-12 * self.mean_rest_length()
    }

    /// Bonds incident to each node.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.node_count()];
        for (i, b) in self.bonds.iter().enumerate() {
            adj[b.start.0].push(i);
            adj[b.end.0].push(i);
        }
        adj
    }
}

/// Build a network from reference positions and an oriented bond list.
pub fn build_network(positions: Vec<Vec3>, bonds: Vec<Bond>) -> Result<Network, NetworkError> {
    let n = positions.len();
    if n < 2 {
        return Err(NetworkError::TooFewNodes(n));
    }
    if bonds.is_empty() {
        return Err(NetworkError::NoBonds);
    }
    if let Some(node) = positions
        .iter()
        .position(|p| !p.iter().all(|c| c.is_finite()))
    {
        return Err(NetworkError::NonFinitePosition { node });
    }
    let mut seen: HashMap<(usize, usize), usize> = HashMap::with_capacity(bonds.len());
    for (i, b) in bonds.iter().enumerate() {
        for node in [b.start.0, b.end.0] {
            if node >= n {
                return Err(NetworkError::InvalidNode { bond: i, node, n });
            }
        }
        if b.start == b.end {
            return Err(NetworkError::SelfLoop { bond: i });
        }
        let key = (b.start.0.min(b.end.0), b.start.0.max(b.end.0));
        if let Some(&first) = seen.get(&key) {
            return Err(NetworkError::DuplicateBond { bond: i, first });
        }
        seen.insert(key, i);
    }

    let incidence = IncidenceMatrix::from_bonds(n, &bonds);
    let bond_vectors = incidence.apply(&positions);
    let rest_lengths: Vec<f64> = bond_vectors.iter().map(|b| b.norm()).collect();
    if let Some(bond) = rest_lengths.iter().position(|&l| l <= 0.0) {
        return Err(NetworkError::ZeroLengthBond { bond });
    }
    if let Some(unreached) = first_unreached(n, &bonds) {
        return Err(NetworkError::DisconnectedGraph { unreached });
    }

    Ok(Network {
        bonds,
        incidence,
        positions,
        bond_vectors,
        rest_lengths,
    })
}

fn first_unreached(n: usize, bonds: &[Bond]) -> Option<usize> {
    let mut adj = vec![Vec::new(); n];
    for b in bonds {
        adj[b.start.0].push(b.end.0);
        adj[b.end.0].push(b.start.0);
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(v) = stack.pop() {
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    seen.iter().position(|s| !s)
}

/// `y = A·X`.
pub fn deformed_bond_vectors(net: &Network, x: &[Vec3]) -> Vec<Vec3> {
    net.incidence.apply(x)
}

/// Re-check every network invariant. An empty list means the network is valid.
pub fn validate_network(net: &Network) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let n = net.node_count();

    let mut seen: HashMap<(usize, usize), usize> = HashMap::new();
    for (i, b) in net.bonds.iter().enumerate() {
        if b.start == b.end {
            out.push(Diagnostic::SelfLoop { bond: i });
            continue;
        }
        let key = (b.start.0.min(b.end.0), b.start.0.max(b.end.0));
        match seen.get(&key) {
            Some(&first) => out.push(Diagnostic::DuplicateBond { bond: i, first }),
            None => {
                seen.insert(key, i);
            }
        }
    }

    let mut malformed = vec![false; net.incidence.n_rows()];
    for (i, row) in net.incidence.rows().enumerate() {
        let [(c0, v0), (c1, v1)] = *row;
        let well_formed = c0 < n && c1 < n && c0 != c1 && v0 + v1 == 0.0 && v0.abs() == 1.0;
        if !well_formed {
            out.push(Diagnostic::MalformedIncidenceRow { bond: i });
            malformed[i] = true;
            continue;
        }
        if let Some(b) = net.bonds.get(i) {
            let (s, e) = if v0 > 0.0 { (c0, c1) } else { (c1, c0) };
            if b.start.0 != s || b.end.0 != e {
                out.push(Diagnostic::IncidenceBondMismatch { bond: i });
            }
        }
    }

    let b = net.incidence.apply(&net.positions);
    for (i, (computed, stored)) in b.iter().zip(&net.bond_vectors).enumerate() {
        if !malformed[i] && computed != stored {
            out.push(Diagnostic::StaleBondVector { bond: i });
        }
    }
    for (i, (bv, &len)) in net.bond_vectors.iter().zip(&net.rest_lengths).enumerate() {
        if len <= 0.0 {
            out.push(Diagnostic::NonPositiveRestLength { bond: i });
        } else if bv.norm() != len {
            out.push(Diagnostic::StaleRestLength { bond: i });
        }
    }

    if let Some(unreached) = first_unreached(n, &net.bonds) {
        out.push(Diagnostic::Disconnected { unreached });
    }
    out
}
