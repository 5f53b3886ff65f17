//! Fixtures shared by the benchmarks.

use bondnet::{generate_example, BondState, EquilibriumProblem, Example, SolverOptions, Vec3};

/// Grid scenario as an equilibrium problem with default solver options.
pub fn grid_problem(nx: usize, ny: usize, nz: usize) -> (EquilibriumProblem, SolverOptions) {
    generate_example(Example::Grid { nx, ny, nz })
        .expect("valid grid dimensions")
        .to_problem(&SolverOptions::default())
        .expect("grid scenario builds")
}

/// Free positions stretched 1% along x, so every x bond carries force.
pub fn stretched(prob: &EquilibriumProblem) -> Vec<Vec3> {
    prob.reference_free_positions()
        .iter()
        .map(|p| Vec3::new(p.x * 1.01, p.y, p.z))
        .collect()
}

pub fn intact(prob: &EquilibriumProblem) -> Vec<BondState> {
    vec![BondState::Intact; prob.network().bond_count()]
}
