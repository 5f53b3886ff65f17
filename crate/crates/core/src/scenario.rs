//! Scenario files and built-in example generators.
//!
//! A scenario is a single JSON document:
//!
//! ```json
//! {
//!   "description": "optional text",
//!   "units": { "length": "m", "force": "N" },
//!   "nodes": [ { "id": 1, "x": 1.0, "y": 1.0, "z": 0.0 } ],
//!   "bonds": [ { "id": 1, "start": 1, "end": 2, "law": "default" } ],
//!   "laws": {
//!     "default": { "stiffness": 1.0, "yield_extension": 0.1, "hardening_ratio": 0.2,
//!                  "fracture_extension": 0.3, "compression": "symmetric", "smoothing_radius": 0.0 }
//!   },
//!   "prescribed": [ { "node": 3, "position": [1.0, 2.0, 1.0] } ],
//!   "loads": [ { "node": 1, "force": [0.01, 0.0, 0.0] } ],
//!   "solver": { "tol_residual": 1e-10, "load_steps": 1 }
//! }
//! ```
//!
//! Node ids are arbitrary unique positive integers; they are remapped to
//! dense indices in listing order. A bond without `law` uses `"default"`.
//! Omitting `yield_extension` or `fracture_extension` switches that regime
//! off. Nodes not listed under `prescribed` are free; free nodes without a
//! `loads` entry carry no load. `units` is metadata only.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::equilibrium::{EquilibriumProblem, LawTable, Partition, ProblemError};
use crate::material::{CompressionMode, LawError, MaterialLaw};
use crate::network::{build_network, Bond, NetworkError, NodeId, Vec3};
use crate::solver::SolverOptions;

pub const DEFAULT_LAW: &str = "default";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("parse error at {context}: {message}")]
    Parse { context: String, message: String },
    #[error("{field}: unknown node id {id}")]
    UnknownNodeId { field: String, id: u64 },
    #[error("{field}: unknown law id {id:?}")]
    UnknownLawId { field: String, id: String },
    #[error("node {node} is both prescribed and loaded")]
    ConflictingConstraint { node: u64 },
    #[error("{field}: duplicate id {id}")]
    DuplicateId { field: String, id: u64 },
    #[error("invalid grid dimensions {nx}x{ny}x{nz} (need nx >= 2, ny >= 1, nz >= 1)")]
    InvalidGridDimensions { nx: usize, ny: usize, nz: usize },
    #[error("law {law:?}: {source}")]
    Law { law: String, source: LawError },
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

fn field_error(field: impl Into<String>, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Parse {
        context: format!("field `{}`", field.into()),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Units {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub force: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub id: u64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BondSpec {
    pub id: u64,
    pub start: u64,
    pub end: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub law: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LawSpec {
    pub stiffness: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub yield_extension: Option<f64>,
    #[serde(default)]
    pub hardening_ratio: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fracture_extension: Option<f64>,
    #[serde(default)]
    pub compression: CompressionMode,
    #[serde(default)]
    pub smoothing_radius: f64,
}

impl LawSpec {
    pub fn to_law(&self) -> Result<MaterialLaw, LawError> {
        MaterialLaw::new(
            self.stiffness,
            self.yield_extension.unwrap_or(f64::INFINITY),
            self.hardening_ratio,
            self.fracture_extension.unwrap_or(f64::INFINITY),
            self.compression,
            self.smoothing_radius,
        )
    }

    pub fn linear(stiffness: f64) -> Self {
        LawSpec {
            stiffness,
            yield_extension: None,
            hardening_ratio: 0.0,
            fracture_extension: None,
            compression: CompressionMode::Symmetric,
            smoothing_radius: 0.0,
        }
    }

    pub fn trilinear(
        stiffness: f64,
        yield_extension: f64,
        hardening_ratio: f64,
        fracture_extension: f64,
    ) -> Self {
        LawSpec {
            stiffness,
            yield_extension: Some(yield_extension),
            hardening_ratio,
            fracture_extension: Some(fracture_extension),
            compression: CompressionMode::Symmetric,
            smoothing_radius: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrescribedSpec {
    pub node: u64,
    pub position: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadSpec {
    pub node: u64,
    pub force: [f64; 3],
}

/// Per-scenario overrides of [`SolverOptions`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol_residual: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub damping: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backtrack_factor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_backtracks: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub load_steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allow_fracture: Option<bool>,
}

impl SolverOverrides {
    pub fn is_empty(&self) -> bool {
        *self == SolverOverrides::default()
    }

    pub fn apply(&self, base: &SolverOptions) -> SolverOptions {
        SolverOptions {
            tol_residual: self.tol_residual.unwrap_or(base.tol_residual),
            max_iterations: self.max_iterations.unwrap_or(base.max_iterations),
            damping: self.damping.unwrap_or(base.damping),
            backtrack_factor: self.backtrack_factor.unwrap_or(base.backtrack_factor),
            max_backtracks: self.max_backtracks.unwrap_or(base.max_backtracks),
            load_steps: self.load_steps.unwrap_or(base.load_steps),
            allow_fracture: self.allow_fracture.unwrap_or(base.allow_fracture),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub units: Option<Units>,
    pub nodes: Vec<NodeSpec>,
    pub bonds: Vec<BondSpec>,
    pub laws: BTreeMap<String, LawSpec>,
    #[serde(default)]
    pub prescribed: Vec<PrescribedSpec>,
    #[serde(default)]
    pub loads: Vec<LoadSpec>,
    #[serde(default, skip_serializing_if = "SolverOverrides::is_empty")]
    pub solver: SolverOverrides,
}

/// Parse and validate scenario text.
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let scenario: Scenario = serde_json::from_str(text).map_err(|e| ScenarioError::Parse {
        context: format!("line {}, column {}", e.line(), e.column()),
        message: e.to_string(),
    })?;
    scenario.validate()?;
    Ok(scenario)
}

impl Scenario {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    fn node_index(&self) -> Result<HashMap<u64, usize>, ScenarioError> {
        let mut index = HashMap::with_capacity(self.nodes.len());
        for (k, n) in self.nodes.iter().enumerate() {
            if index.insert(n.id, k).is_some() {
                return Err(ScenarioError::DuplicateId {
                    field: "nodes".into(),
                    id: n.id,
                });
            }
        }
        Ok(index)
    }

    /// Check references and constraints without building the network.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.nodes.is_empty() {
            return Err(field_error("nodes", "must not be empty"));
        }
        if self.bonds.is_empty() {
            return Err(field_error("bonds", "must not be empty"));
        }
        let nodes = self.node_index()?;
        let resolve = |field: String, id: u64| {
            nodes
                .get(&id)
                .copied()
                .ok_or(ScenarioError::UnknownNodeId { field, id })
        };

        let mut bond_ids = HashMap::new();
        for (k, b) in self.bonds.iter().enumerate() {
            if bond_ids.insert(b.id, k).is_some() {
                return Err(ScenarioError::DuplicateId {
                    field: "bonds".into(),
                    id: b.id,
                });
            }
            resolve(format!("bonds[{k}].start"), b.start)?;
            resolve(format!("bonds[{k}].end"), b.end)?;
            let law = b.law.as_deref().unwrap_or(DEFAULT_LAW);
            if !self.laws.contains_key(law) {
                return Err(ScenarioError::UnknownLawId {
                    field: format!("bonds[{k}].law"),
                    id: law.to_string(),
                });
            }
        }
        for (name, spec) in &self.laws {
            spec.to_law().map_err(|source| ScenarioError::Law {
                law: name.clone(),
                source,
            })?;
        }

        let mut prescribed = HashMap::new();
        for (k, p) in self.prescribed.iter().enumerate() {
            resolve(format!("prescribed[{k}].node"), p.node)?;
            if prescribed.insert(p.node, k).is_some() {
                return Err(ScenarioError::DuplicateId {
                    field: "prescribed".into(),
                    id: p.node,
                });
            }
        }
        if prescribed.is_empty() {
            return Err(field_error(
                "prescribed",
                "at least one node must be prescribed",
            ));
        }
        let mut loaded = HashMap::new();
        for (k, l) in self.loads.iter().enumerate() {
            resolve(format!("loads[{k}].node"), l.node)?;
            if prescribed.contains_key(&l.node) {
                return Err(ScenarioError::ConflictingConstraint { node: l.node });
            }
            if loaded.insert(l.node, k).is_some() {
                return Err(ScenarioError::DuplicateId {
                    field: "loads".into(),
                    id: l.node,
                });
            }
        }
        Ok(())
    }

    /// Build the equilibrium problem and the effective solver options.
    pub fn to_problem(
        &self,
        base: &SolverOptions,
    ) -> Result<(EquilibriumProblem, SolverOptions), ScenarioError> {
        self.validate()?;
        let nodes = self.node_index()?;
        let positions = self
            .nodes
            .iter()
            .map(|n| Vec3::new(n.x, n.y, n.z))
            .collect();
        let bonds = self
            .bonds
            .iter()
            .map(|b| Bond::new(nodes[&b.start], nodes[&b.end]))
            .collect();
        let net = build_network(positions, bonds)?;

        let names: Vec<&String> = self.laws.keys().collect();
        let laws = self
            .laws
            .values()
            .map(|s| s.to_law().expect("validated"))
            .collect();
        let bond_law = self
            .bonds
            .iter()
            .map(|b| {
                let name = b.law.as_deref().unwrap_or(DEFAULT_LAW);
                names
                    .iter()
                    .position(|n| n.as_str() == name)
                    .expect("validated")
            })
            .collect();
        let table = LawTable::new(laws, bond_law);

        let prescribed_ids: Vec<NodeId> = self
            .prescribed
            .iter()
            .map(|p| NodeId(nodes[&p.node]))
            .collect();
        let xq = self
            .prescribed
            .iter()
            .map(|p| Vec3::from(p.position))
            .collect();
        let partition = Partition::from_prescribed(net.node_count(), prescribed_ids)?;
        let mut loads = vec![Vec3::zeros(); partition.free().len()];
        for l in &self.loads {
            let slot = partition
                .free_slot(NodeId(nodes[&l.node]))
                .expect("loaded nodes are free");
            loads[slot] = Vec3::from(l.force);
        }
        let prob = EquilibriumProblem::new(net, table, partition, xq, loads)?;
        Ok((prob, self.solver.apply(base)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Example {
    Triangle,
    Octahedron,
    Grid { nx: usize, ny: usize, nz: usize },
}

fn node(id: u64, p: [f64; 3]) -> NodeSpec {
    NodeSpec {
        id,
        x: p[0],
        y: p[1],
        z: p[2],
    }
}

fn bonds_from_pairs(pairs: &[(u64, u64)]) -> Vec<BondSpec> {
    pairs
        .iter()
        .enumerate()
        .map(|(k, &(start, end))| BondSpec {
            id: k as u64 + 1,
            start,
            end,
            law: None,
        })
        .collect()
}

fn default_laws() -> BTreeMap<String, LawSpec> {
    BTreeMap::from([(
        DEFAULT_LAW.to_string(),
        LawSpec::trilinear(1.0, 0.1, 0.2, 0.3),
    )])
}

pub fn generate_example(example: Example) -> Result<Scenario, ScenarioError> {
    match example {
        Example::Triangle => Ok(triangle()),
        Example::Octahedron => Ok(octahedron()),
        Example::Grid { nx, ny, nz } => grid(nx, ny, nz),
    }
}

/// Three nodes at (1,1,0), (2,1,1), (1,2,1) joined in a ring, node 3 held
/// in place, nodes 1 and 2 pulled apart along their common bond.
fn triangle() -> Scenario {
    let d = [[1.0, 1.0, 0.0], [2.0, 1.0, 1.0], [1.0, 2.0, 1.0]];
    let s = 0.01 / 2f64.sqrt();
    Scenario {
        description: Some("triangle: node 3 fixed, nodes 1 and 2 pulled apart along bond 1".into()),
        units: None,
        nodes: d
            .iter()
            .enumerate()
            .map(|(k, p)| node(k as u64 + 1, *p))
            .collect(),
        bonds: bonds_from_pairs(&[(1, 2), (2, 3), (3, 1)]),
        laws: default_laws(),
        prescribed: vec![PrescribedSpec {
            node: 3,
            position: d[2],
        }],
        loads: vec![
            LoadSpec {
                node: 1,
                force: [-s, 0.0, -s],
            },
            LoadSpec {
                node: 2,
                force: [s, 0.0, s],
            },
        ],
        solver: SolverOverrides::default(),
    }
}

/// Regular octahedron: vertices at ±x, ±y, ±z, every non-antipodal pair bonded.
fn octahedron() -> Scenario {
    let verts = [
        [1.0, 0.0, 0.0],
        [-1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, -1.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.0, 0.0, -1.0],
    ];
    let mut pairs = Vec::new();
    for a in 0..6u64 {
        for b in a + 1..6 {
            // antipodal pairs are (1,2), (3,4), (5,6)
            if !(a % 2 == 0 && b == a + 1) {
                pairs.push((a + 1, b + 1));
            }
        }
    }
    Scenario {
        description: Some(
            "regular octahedron (6 nodes, 12 bonds): face {+x,+y,+z} fixed, small load on the -z apex. \
             Other frames, e.g. a 15-node/14-bond tree, can be written by hand or built from grid."
                .into(),
        ),
        units: None,
        nodes: verts.iter().enumerate().map(|(k, p)| node(k as u64 + 1, *p)).collect(),
        bonds: bonds_from_pairs(&pairs),
        laws: default_laws(),
        prescribed: [1u64, 3, 5]
            .iter()
            .map(|&n| PrescribedSpec {
                node: n,
                position: verts[n as usize - 1],
            })
            .collect(),
        loads: vec![LoadSpec {
            node: 6,
            force: [0.0, 0.0, -0.01],
        }],
        solver: SolverOverrides::default(),
    }
}

/// Unit-spaced lattice with nearest-neighbour bonds; the `x = 0` face is
/// fixed and the far `x` face is pulled in `+x`.
fn grid(nx: usize, ny: usize, nz: usize) -> Result<Scenario, ScenarioError> {
    if nx < 2 || ny == 0 || nz == 0 {
        return Err(ScenarioError::InvalidGridDimensions { nx, ny, nz });
    }
    let id = |i: usize, j: usize, k: usize| (1 + i + nx * (j + ny * k)) as u64;
    let mut nodes = Vec::with_capacity(nx * ny * nz);
    let mut pairs = Vec::new();
    let mut prescribed = Vec::new();
    let mut loads = Vec::new();
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let p = [i as f64, j as f64, k as f64];
                nodes.push(node(id(i, j, k), p));
                if i + 1 < nx {
                    pairs.push((id(i, j, k), id(i + 1, j, k)));
                }
                if j + 1 < ny {
                    pairs.push((id(i, j, k), id(i, j + 1, k)));
                }
                if k + 1 < nz {
                    pairs.push((id(i, j, k), id(i, j, k + 1)));
                }
                if i == 0 {
                    prescribed.push(PrescribedSpec {
                        node: id(i, j, k),
                        position: p,
                    });
                } else if i == nx - 1 {
                    loads.push(LoadSpec {
                        node: id(i, j, k),
                        force: [0.01, 0.0, 0.0],
                    });
                }
            }
        }
    }
    nodes.sort_by_key(|n| n.id);
    Ok(Scenario {
        description: Some(format!(
            "{nx}x{ny}x{nz} grid, x = 0 face fixed, far face pulled in +x"
        )),
        units: None,
        nodes,
        bonds: bonds_from_pairs(&pairs),
        laws: default_laws(),
        prescribed,
        loads,
        solver: SolverOverrides::default(),
    })
}
