//! Assembly of the nodal equilibrium system `Aᵀ K(AX) A X = B`.
//!
//! Nodes are split into *free* nodes (unknown position, known applied load)
//! and *prescribed* nodes (known position, unknown reaction). The residual
//! is `internal - applied` on free nodes; its Jacobian is the symmetric
//! tangent stiffness restricted to free nodes.

use nalgebra::Matrix3;
use thiserror::Error;

use crate::linalg::BlockSparseMatrix;
use crate::material::{BondState, LawError, MaterialLaw};
use crate::network::{Network, NodeId, Vec3};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("node {0} appears twice in the partition")]
    DuplicateNode(usize),
    #[error("node index {0} is out of range")]
    NodeOutOfRange(usize),
    #[error("partition covers {covered} of {n} nodes")]
    IncompletePartition { covered: usize, n: usize },
    #[error("at least one prescribed node is required")]
    NoPrescribedNodes,
    #[error("at least one free node is required")]
    NoFreeNodes,
    #[error("{what}: expected {expected} rows, got {got}")]
    RowMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("{what} row {row} is not finite")]
    NonFinite { what: &'static str, row: usize },
    #[error("bond {bond} refers to law {law}, but only {count} laws exist")]
    UnknownLaw {
        bond: usize,
        law: usize,
        count: usize,
    },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EquilibriumError {
    #[error("bond {bond} collapsed to zero length while carrying force")]
    DegenerateBond { bond: usize },
    #[error("bond {bond}: {source}")]
    Law { bond: usize, source: LawError },
    #[error("free position row {row} is not finite")]
    NonFinitePosition { row: usize },
    #[error("expected {expected} free positions, got {got}")]
    WrongLength { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    Free(usize),
    Prescribed(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    free: Vec<NodeId>,
    prescribed: Vec<NodeId>,
    slots: Vec<Slot>,
}

impl Partition {
    pub fn new(n: usize, free: Vec<NodeId>, prescribed: Vec<NodeId>) -> Result<Self, ProblemError> {
        let mut slots: Vec<Option<Slot>> = vec![None; n];
        for (list, make) in [
            (&free, Slot::Free as fn(usize) -> Slot),
            (&prescribed, Slot::Prescribed as fn(usize) -> Slot),
        ] {
            for (k, id) in list.iter().enumerate() {
                let cell = slots
                    .get_mut(id.0)
                    .ok_or(ProblemError::NodeOutOfRange(id.0))?;
                if cell.is_some() {
                    return Err(ProblemError::DuplicateNode(id.0));
                }
                *cell = Some(make(k));
            }
        }
        let covered = free.len() + prescribed.len();
        if covered != n {
            return Err(ProblemError::IncompletePartition { covered, n });
        }
        if prescribed.is_empty() {
            return Err(ProblemError::NoPrescribedNodes);
        }
        if free.is_empty() {
            return Err(ProblemError::NoFreeNodes);
        }
        Ok(Partition {
            free,
            prescribed,
            slots: slots
                .into_iter()
                .map(|s| s.expect("coverage checked"))
                .collect(),
        })
    }

    /// Every node not listed is free, in ascending index order.
    pub fn from_prescribed(n: usize, prescribed: Vec<NodeId>) -> Result<Self, ProblemError> {
        let mut is_prescribed = vec![false; n];
        for id in &prescribed {
            if let Some(flag) = is_prescribed.get_mut(id.0) {
                *flag = true;
            }
        }
        let free = (0..n).filter(|&i| !is_prescribed[i]).map(NodeId).collect();
        Self::new(n, free, prescribed)
    }

    pub fn free(&self) -> &[NodeId] {
        &self.free
    }

    pub fn prescribed(&self) -> &[NodeId] {
        &self.prescribed
    }

    /// Position of `node` within the free list, if free.
    pub fn free_slot(&self, node: NodeId) -> Option<usize> {
        match self.slots[node.0] {
            Slot::Free(k) => Some(k),
            Slot::Prescribed(_) => None,
        }
    }

    pub fn prescribed_slot(&self, node: NodeId) -> Option<usize> {
        match self.slots[node.0] {
            Slot::Prescribed(k) => Some(k),
            Slot::Free(_) => None,
        }
    }
}

/// Material laws with a per-bond index into them.
#[derive(Debug, Clone, PartialEq)]
pub struct LawTable {
    laws: Vec<MaterialLaw>,
    bond_law: Vec<usize>,
}

impl LawTable {
    pub fn uniform(law: MaterialLaw, bond_count: usize) -> Self {
        LawTable {
            laws: vec![law],
            bond_law: vec![0; bond_count],
        }
    }

    pub fn new(laws: Vec<MaterialLaw>, bond_law: Vec<usize>) -> Self {
        LawTable { laws, bond_law }
    }

    pub fn for_bond(&self, bond: usize) -> &MaterialLaw {
        &self.laws[self.bond_law[bond]]
    }

    pub fn laws(&self) -> &[MaterialLaw] {
        &self.laws
    }

    pub fn bond_law(&self) -> &[usize] {
        &self.bond_law
    }

    pub fn map(&self, f: impl Fn(&MaterialLaw) -> MaterialLaw) -> Self {
        LawTable {
            laws: self.laws.iter().map(f).collect(),
            bond_law: self.bond_law.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EquilibriumProblem {
    net: Network,
    laws: LawTable,
    partition: Partition,
    prescribed_positions: Vec<Vec3>,
    loads: Vec<Vec3>,
}

fn check_rows(what: &'static str, rows: &[Vec3], expected: usize) -> Result<(), ProblemError> {
    if rows.len() != expected {
        return Err(ProblemError::RowMismatch {
            what,
            expected,
            got: rows.len(),
        });
    }
    if let Some(row) = rows.iter().position(|r| !r.iter().all(|c| c.is_finite())) {
        return Err(ProblemError::NonFinite { what, row });
    }
    Ok(())
}

impl EquilibriumProblem {
    /// `prescribed_positions` follows `partition.prescribed()` order and
    /// `loads` follows `partition.free()` order.
    pub fn new(
        net: Network,
        laws: LawTable,
        partition: Partition,
        prescribed_positions: Vec<Vec3>,
        loads: Vec<Vec3>,
    ) -> Result<Self, ProblemError> {
        if partition.slots.len() != net.node_count() {
            return Err(ProblemError::IncompletePartition {
                covered: partition.slots.len(),
                n: net.node_count(),
            });
        }
        if laws.bond_law.len() != net.bond_count() {
            return Err(ProblemError::RowMismatch {
                what: "bond law indices",
                expected: net.bond_count(),
                got: laws.bond_law.len(),
            });
        }
        if let Some((bond, &law)) = laws
            .bond_law
            .iter()
            .enumerate()
            .find(|(_, &l)| l >= laws.laws.len())
        {
            return Err(ProblemError::UnknownLaw {
                bond,
                law,
                count: laws.laws.len(),
            });
        }
        check_rows(
            "prescribed positions",
            &prescribed_positions,
            partition.prescribed.len(),
        )?;
        check_rows("loads", &loads, partition.free.len())?;
        Ok(EquilibriumProblem {
            net,
            laws,
            partition,
            prescribed_positions,
            loads,
        })
    }

    /// Prescribed nodes held at their reference positions.
    pub fn clamped(
        net: Network,
        laws: LawTable,
        partition: Partition,
        loads: Vec<Vec3>,
    ) -> Result<Self, ProblemError> {
        let xq = partition
            .prescribed
            .iter()
            .map(|id| net.positions()[id.0])
            .collect();
        Self::new(net, laws, partition, xq, loads)
    }

    pub fn network(&self) -> &Network {
        &self.net
    }
    pub fn laws(&self) -> &LawTable {
        &self.laws
    }
    pub fn partition(&self) -> &Partition {
        &self.partition
    }
    pub fn prescribed_positions(&self) -> &[Vec3] {
        &self.prescribed_positions
    }
    pub fn loads(&self) -> &[Vec3] {
        &self.loads
    }
    pub fn free_count(&self) -> usize {
        self.partition.free.len()
    }

    pub fn with_loads(&self, loads: Vec<Vec3>) -> Result<Self, ProblemError> {
        check_rows("loads", &loads, self.free_count())?;
        Ok(EquilibriumProblem {
            loads,
            ..self.clone()
        })
    }

    pub fn with_prescribed_positions(&self, xq: Vec<Vec3>) -> Result<Self, ProblemError> {
        check_rows("prescribed positions", &xq, self.partition.prescribed.len())?;
        Ok(EquilibriumProblem {
            prescribed_positions: xq,
            ..self.clone()
        })
    }

    pub fn with_laws(&self, laws: LawTable) -> Result<Self, ProblemError> {
        Self::new(
            self.net.clone(),
            laws,
            self.partition.clone(),
            self.prescribed_positions.clone(),
            self.loads.clone(),
        )
    }

    /// Reference positions of the free nodes.
    pub fn reference_free_positions(&self) -> Vec<Vec3> {
        self.partition
            .free
            .iter()
            .map(|id| self.net.positions()[id.0])
            .collect()
    }

    /// Full `X` from the free block and the prescribed block.
    pub fn scatter(&self, x_free: &[Vec3]) -> Vec<Vec3> {
        self.partition
            .slots
            .iter()
            .map(|s| match *s {
                Slot::Free(k) => x_free[k],
                Slot::Prescribed(k) => self.prescribed_positions[k],
            })
            .collect()
    }

    /// Applied loads scattered to all nodes (zero on prescribed ones).
    pub fn applied_nodal_loads(&self) -> Vec<Vec3> {
        self.partition
            .slots
            .iter()
            .map(|s| match *s {
                Slot::Free(k) => self.loads[k],
                Slot::Prescribed(_) => Vec3::zeros(),
            })
            .collect()
    }

    fn check_free(&self, x_free: &[Vec3]) -> Result<(), EquilibriumError> {
        if x_free.len() != self.free_count() {
            return Err(EquilibriumError::WrongLength {
                expected: self.free_count(),
                got: x_free.len(),
            });
        }
        if let Some(row) = x_free.iter().position(|r| !r.iter().all(|c| c.is_finite())) {
            return Err(EquilibriumError::NonFinitePosition { row });
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SystemState {
    /// All node positions.
    pub positions: Vec<Vec3>,
    /// Deformed bond vectors `y = A·X`.
    pub bond_vectors: Vec<Vec3>,
    /// `|y_i| - |b_i|`.
    pub extensions: Vec<f64>,
    /// Signed `f(e_i)`.
    pub force_magnitudes: Vec<f64>,
    /// Bond force vectors `F_i = (f(e_i)/|y_i|)·y_i`.
    pub forces: Vec<Vec3>,
    /// `Aᵀ·F`.
    pub nodal: Vec<Vec3>,
    pub bond_states: Vec<BondState>,
}

pub fn assemble_state(
    prob: &EquilibriumProblem,
    x_free: &[Vec3],
    states: &[BondState],
) -> Result<SystemState, EquilibriumError> {
    prob.check_free(x_free)?;
    assert_eq!(
        states.len(),
        prob.net.bond_count(),
        "one bond state per bond"
    );
    let x = prob.scatter(x_free);
    let y = prob.net.incidence().apply(&x);
    let eps = prob.net.degenerate_length();
    let m = y.len();
    let mut extensions = Vec::with_capacity(m);
    let mut magnitudes = Vec::with_capacity(m);
    let mut forces = Vec::with_capacity(m);
    for (i, yi) in y.iter().enumerate() {
        let law = prob.laws.for_bond(i);
        let len = yi.norm();
        let rest = prob.net.rest_lengths()[i];
        let e = len - rest;
        let c =
            law.secant_coefficient(len, rest, eps, states[i])
                .map_err(|source| match source {
                    LawError::DegenerateBond => EquilibriumError::DegenerateBond { bond: i },
                    source => EquilibriumError::Law { bond: i, source },
                })?;
        extensions.push(e);
        magnitudes.push(
            law.force_magnitude(e, states[i])
                .map_err(|source| EquilibriumError::Law { bond: i, source })?,
        );
        forces.push(yi * c);
    }
    let nodal = prob.net.incidence().apply_transpose(&forces);
    Ok(SystemState {
        positions: x,
        bond_vectors: y,
        extensions,
        force_magnitudes: magnitudes,
        forces,
        nodal,
        bond_states: states.to_vec(),
    })
}

/// Free-node rows of `AᵀF` minus the applied loads.
pub fn residual_of(prob: &EquilibriumProblem, state: &SystemState) -> Vec<Vec3> {
    prob.partition
        .free
        .iter()
        .zip(&prob.loads)
        .map(|(id, b)| state.nodal[id.0] - b)
        .collect()
}

pub fn residual(
    prob: &EquilibriumProblem,
    x_free: &[Vec3],
    states: &[BondState],
) -> Result<Vec<Vec3>, EquilibriumError> {
    let state = assemble_state(prob, x_free, states)?;
    Ok(residual_of(prob, &state))
}

/// Euclidean norm over all components.
pub fn block_norm(v: &[Vec3]) -> f64 {
    v.iter().map(|r| r.norm_squared()).sum::<f64>().sqrt()
}

/// Free-node block pattern: two free nodes are coupled when a bond joins them.
pub fn jacobian_pattern(prob: &EquilibriumProblem) -> BlockSparseMatrix {
    let part = &prob.partition;
    let mut pattern = vec![Vec::new(); part.free.len()];
    for b in prob.net.bonds() {
        if let (Some(s), Some(e)) = (part.free_slot(b.start), part.free_slot(b.end)) {
            pattern[s].push(e);
            pattern[e].push(s);
        }
    }
    BlockSparseMatrix::with_pattern(&pattern)
}

/// Tangent `∂F_i/∂y_i = f'·uuᵀ + (f/|y|)·(I - uuᵀ)` of one bond.
pub fn bond_tangent(
    law: &MaterialLaw,
    y: &Vec3,
    rest_length: f64,
    degenerate_length: f64,
    state: BondState,
) -> Result<Matrix3<f64>, LawError> {
    if state.is_broken() {
        return Ok(Matrix3::zeros());
    }
    let len = y.norm();
    let e = len - rest_length;
    let slope = law.tangent_left(e, state)?;
    if len < degenerate_length {
        let f = law.force_magnitude(e, state)?;
        return if f == 0.0 && slope == 0.0 {
            Ok(Matrix3::zeros())
        } else {
            Err(LawError::DegenerateBond)
        };
    }
    let c = law.force_magnitude(e, state)? / len;
    let u = y / len;
    let uu = u * u.transpose();
    Ok(uu * slope + (Matrix3::identity() - uu) * c)
}

/// Analytic Jacobian of [`residual`] with respect to the free positions.
pub fn jacobian(
    prob: &EquilibriumProblem,
    x_free: &[Vec3],
    states: &[BondState],
) -> Result<BlockSparseMatrix, EquilibriumError> {
    prob.check_free(x_free)?;
    let x = prob.scatter(x_free);
    let y = prob.net.incidence().apply(&x);
    let eps = prob.net.degenerate_length();
    let part = &prob.partition;
    let mut jac = jacobian_pattern(prob);
    for (i, (b, yi)) in prob.net.bonds().iter().zip(&y).enumerate() {
        if states[i].is_broken() {
            continue;
        }
        let k = bond_tangent(
            prob.laws.for_bond(i),
            yi,
            prob.net.rest_lengths()[i],
            eps,
            states[i],
        )
        .map_err(|source| match source {
            LawError::DegenerateBond => EquilibriumError::DegenerateBond { bond: i },
            source => EquilibriumError::Law { bond: i, source },
        })?;
        let s = part.free_slot(b.start);
        let e = part.free_slot(b.end);
        if let Some(s) = s {
            jac.add_block(s, s, &k);
        }
        if let Some(e) = e {
            jac.add_block(e, e, &k);
        }
        if let (Some(s), Some(e)) = (s, e) {
            jac.add_block(s, e, &-k);
            jac.add_block(e, s, &-k);
        }
    }
    Ok(jac)
}

/// Reaction block `B_Q`: rows of `AᵀF` at prescribed nodes.
pub fn reactions(prob: &EquilibriumProblem, state: &SystemState) -> Vec<Vec3> {
    prob.partition
        .prescribed
        .iter()
        .map(|id| state.nodal[id.0])
        .collect()
}

/// Column sums of the stacked load block `[B_P; B_Q]`.
pub fn stacked_load_sum(prob: &EquilibriumProblem, reactions: &[Vec3]) -> Vec3 {
    prob.loads.iter().chain(reactions).sum()
}
