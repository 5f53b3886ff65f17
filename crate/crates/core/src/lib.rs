//! Lattice mechanics on node/bond networks.
//!
//! A material is a set of nodes joined by bonds. Each bond carries a force
//! along its deformed direction whose magnitude follows a piecewise
//! force-extension law (elastic, hardening, fracture). Equilibrium couples
//! the node positions and the applied loads through the signed incidence
//! matrix `A`:
//!
//! ```text
//! Aᵀ K(AX) A X = B
//! ```
//!
//! where `K(y)` is the diagonal of secant coefficients `f(|y_i| - |b_i|) / |y_i|`.
//! Free nodes have unknown positions and known loads; prescribed nodes have
//! known positions and unknown reactions. [`solver::solve`] finds the free
//! positions with a damped Newton method.

pub mod equilibrium;
pub mod linalg;
pub mod material;
pub mod network;
pub mod output;
pub mod scenario;
pub mod solver;

pub use equilibrium::{
    assemble_state, jacobian, reactions, residual, EquilibriumError, EquilibriumProblem, LawTable,
    Partition, ProblemError, SystemState,
};
pub use material::{BondState, CompressionMode, LawError, MaterialLaw};
pub use network::{
    build_network, deformed_bond_vectors, validate_network, Bond, Diagnostic, IncidenceMatrix,
    Network, NetworkError, NodeId, Vec3,
};
pub use output::{emit_results, read_results, EmitOptions, OutputError, ResultBundle};
pub use scenario::{generate_example, parse_scenario, Example, Scenario, ScenarioError};
pub use solver::{
    check_jacobian, load_sweep, solve, JacobianCheck, SolveError, SolveReport, SolveStatus,
    SolverOptions,
};
