//! Damped Newton solver with load stepping and fracture re-equilibration.
//!
//! Each Newton step solves `(J + λI)·d = R` with a skyline LDLᵀ and takes
//! `X_P ← X_P - α·d`, halving `α` until `‖R‖` strictly decreases. `λ` starts
//! at the configured damping, escalates tenfold whenever the factorization
//! reports rank deficiency or the line search fails, and relaxes tenfold
//! after every accepted step. A run has converged once `‖R‖₂` is below the
//! tolerance and the summed residual, which equals the global load
//! imbalance, is below `tol_residual · ‖F‖₁`.
//!
//! Newton iterations always run on the intact law (no fracture drop). Once
//! a load level has converged, every intact bond whose extension lies on
//! the fracture branch is marked broken and the same level is solved again.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::equilibrium::{
    assemble_state, block_norm, jacobian, reactions, residual, residual_of, EquilibriumError,
    EquilibriumProblem, ProblemError,
};
use crate::linalg::SkylineLdlt;
use crate::material::BondState;
use crate::network::Vec3;

/// Smallest non-zero damping, relative to the largest Jacobian diagonal.
const LAMBDA_FLOOR: f64 = 1e-8;
/// Damping beyond this (relative) is treated as a singular system.
const LAMBDA_CEILING: f64 = 1e8;
const LAMBDA_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Residual tolerance, scaled by `max(1, ‖B_P‖∞)`.
    pub tol_residual: f64,
    pub max_iterations: usize,
    /// Baseline Levenberg-Marquardt shift.
    pub damping: f64,
    /// Step shrink factor for the backtracking line search.
    pub backtrack_factor: f64,
    pub max_backtracks: usize,
    pub load_steps: usize,
    pub allow_fracture: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol_residual: 1e-10,
            max_iterations: 100,
            damping: 0.0,
            backtrack_factor: 0.5,
            max_backtracks: 30,
            load_steps: 1,
            allow_fracture: true,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<(), SolveError> {
        let bad = |m: &str| Err(SolveError::InvalidOptions(m.to_string()));
        if !(self.tol_residual.is_finite() && self.tol_residual > 0.0) {
            return bad("tol_residual must be positive");
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return bad("backtrack_factor must lie in (0, 1)");
        }
        if !(self.damping.is_finite() && self.damping >= 0.0) {
            return bad("damping must be finite and >= 0");
        }
        if self.load_steps == 0 {
            return bad("load_steps must be at least 1");
        }
        Ok(())
    }

    /// Absolute residual tolerance for a problem.
    pub fn tolerance_for(&self, prob: &EquilibriumProblem) -> f64 {
        let load_inf = prob.loads().iter().map(|b| b.amax()).fold(0.0, f64::max);
        self.tol_residual * load_inf.max(1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Converged,
    MaxIterations,
    SingularSystem,
    DegenerateGeometry,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("invalid solver options: {0}")]
    InvalidOptions(String),
    #[error("initial guess has {got} rows, expected {expected}")]
    InitialGuess { expected: usize, got: usize },
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Equilibrium(#[from] EquilibriumError),
    #[error("load step {failed_step} ended with {status:?} (last converged step: {last_converged_step})")]
    StepFailure {
        failed_step: usize,
        last_converged_step: usize,
        status: SolveStatus,
    },
}

/// One Newton iteration. Iteration 0 of each run records the starting residual.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// Index of the Newton run (a new run starts at every load level and
    /// after every fracture event).
    pub run: usize,
    pub load_step: usize,
    pub iteration: usize,
    pub residual_norm: f64,
    pub step_norm: f64,
    pub lambda: f64,
    pub backtracks: usize,
    pub broken_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BondSample {
    pub extension: f64,
    pub force: f64,
}

/// Converged state of one load level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// 1-based load step.
    pub step: usize,
    pub load_factor: f64,
    pub bonds: Vec<BondSample>,
    /// Bonds that broke while equilibrating this level.
    pub newly_broken: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub positions: Vec<Vec3>,
    pub forces: Vec<Vec3>,
    /// Final `|y_i| - |b_i|` per bond.
    pub extensions: Vec<f64>,
    /// Final signed `f(e_i)` per bond.
    pub force_magnitudes: Vec<f64>,
    pub reactions: Vec<Vec3>,
    pub broken_bonds: BTreeSet<usize>,
    pub residual_norm: f64,
    pub tolerance: f64,
    /// Accepted Newton steps over all runs.
    pub iterations: usize,
    pub load_steps: usize,
    pub completed_steps: usize,
    pub trace: Vec<IterationRecord>,
    pub history: Vec<StepRecord>,
}

impl SolveReport {
    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }

    pub fn into_result(self) -> Result<SolveReport, SolveError> {
        if self.converged() {
            Ok(self)
        } else {
            Err(SolveError::StepFailure {
                failed_step: self.completed_steps + 1,
                last_converged_step: self.completed_steps,
                status: self.status,
            })
        }
    }

    /// Residual strictly decreases inside every Newton run.
    pub fn trace_is_monotone(&self) -> bool {
        self.trace
            .windows(2)
            .filter(|w| w[0].run == w[1].run)
            .all(|w| w[1].residual_norm < w[0].residual_norm)
    }
}

struct RunOutcome {
    status: SolveStatus,
}

/// Residual blocks and `‖F‖₁` at a trial point.
fn evaluate(
    level: &EquilibriumProblem,
    x: &[Vec3],
    states: &[BondState],
) -> Result<(Vec<Vec3>, f64), EquilibriumError> {
    let state = assemble_state(level, x, states)?;
    let f1 = state.forces.iter().map(|f| f.norm()).sum();
    Ok((residual_of(level, &state), f1))
}

struct Newton<'a> {
    opts: &'a SolverOptions,
    tol: f64,
    trace: Vec<IterationRecord>,
    run: usize,
    iterations: usize,
}

impl Newton<'_> {
    fn run(
        &mut self,
        level: &EquilibriumProblem,
        x: &mut Vec<Vec3>,
        states: &[BondState],
        load_step: usize,
    ) -> RunOutcome {
        let run = self.run;
        self.run += 1;
        let broken_count = states.iter().filter(|s| s.is_broken()).count();
        let mut record = IterationRecord {
            run,
            load_step,
            iteration: 0,
            residual_norm: 0.0,
            step_norm: 0.0,
            lambda: 0.0,
            backtracks: 0,
            broken_count,
        };
        let (mut r, mut f1) = match evaluate(level, x, states) {
            Ok(v) => v,
            Err(_) => {
                return RunOutcome {
                    status: SolveStatus::DegenerateGeometry,
                }
            }
        };
        let mut rn = block_norm(&r);
        record.residual_norm = rn;
        self.trace.push(record);

        // The net residual is exactly the global load imbalance, so it is
        // also held to the tolerance relative to the internal force scale.
        let balanced =
            |r: &[Vec3], f1: f64| r.iter().sum::<Vec3>().amax() <= self.opts.tol_residual * f1;
        let mut lambda = self.opts.damping;
        let mut accepted = 0;
        while !(rn < self.tol && balanced(&r, f1)) {
            if accepted == self.opts.max_iterations {
                return RunOutcome {
                    status: SolveStatus::MaxIterations,
                };
            }
            let jac = match jacobian(level, x, states) {
                Ok(j) => j,
                Err(_) => {
                    return RunOutcome {
                        status: SolveStatus::DegenerateGeometry,
                    }
                }
            };
            let scale = jac.diagonal().iter().fold(0.0f64, |a, d| a.max(d.abs()));
            let scale = if scale > 0.0 { scale } else { 1.0 };
            let floor = LAMBDA_FLOOR * scale;
            let ceiling = LAMBDA_CEILING * scale;
            let escalate = |l: f64| (l * LAMBDA_FACTOR).max(floor);

            let step = loop {
                if lambda > ceiling {
                    return RunOutcome {
                        status: SolveStatus::SingularSystem,
                    };
                }
                let mut shifted = jac.clone();
                shifted.add_diagonal(lambda);
                let factor = match SkylineLdlt::factor(&shifted) {
                    Ok(f) => f,
                    Err(_) => {
                        lambda = escalate(lambda);
                        continue;
                    }
                };
                let d = factor.solve_blocks(&r);
                if let Some(found) = self.line_search(level, x, states, &d, rn) {
                    break found;
                }
                lambda = escalate(lambda);
            };

            let (trial, r_new, f1_new, backtracks) = step;
            let taken: Vec<Vec3> = trial.iter().zip(x.iter()).map(|(a, b)| a - b).collect();
            let dn = block_norm(&taken);
            *x = trial;
            r = r_new;
            f1 = f1_new;
            rn = block_norm(&r);
            accepted += 1;
            self.iterations += 1;
            self.trace.push(IterationRecord {
                run,
                load_step,
                iteration: accepted,
                residual_norm: rn,
                step_norm: dn,
                lambda,
                backtracks,
                broken_count,
            });
            lambda = if lambda / LAMBDA_FACTOR < floor {
                self.opts.damping
            } else {
                (lambda / LAMBDA_FACTOR).max(self.opts.damping)
            };
        }
        RunOutcome {
            status: SolveStatus::Converged,
        }
    }

    /// Backtrack along `-d` until the residual norm strictly decreases.
    fn line_search(
        &self,
        level: &EquilibriumProblem,
        x: &[Vec3],
        states: &[BondState],
        d: &[Vec3],
        rn: f64,
    ) -> Option<(Vec<Vec3>, Vec<Vec3>, f64, usize)> {
        let mut alpha = 1.0;
        for backtracks in 0..=self.opts.max_backtracks {
            let trial: Vec<Vec3> = x.iter().zip(d).map(|(xi, di)| xi - di * alpha).collect();
            if let Ok((rt, f1)) = evaluate(level, &trial, states) {
                if block_norm(&rt) < rn {
                    return Some((trial, rt, f1, backtracks));
                }
            }
            alpha *= self.opts.backtrack_factor;
        }
        None
    }
}

/// Solve the full load in one level.
pub fn solve(
    prob: &EquilibriumProblem,
    opts: &SolverOptions,
    initial_guess: Option<&[Vec3]>,
) -> Result<SolveReport, SolveError> {
    run_levels(prob, opts, 1, initial_guess)
}

/// Apply loads and prescribed displacements in `opts.load_steps` equal
/// increments, warm-starting each level from the previous one.
pub fn load_sweep(
    prob: &EquilibriumProblem,
    opts: &SolverOptions,
) -> Result<SolveReport, SolveError> {
    run_levels(prob, opts, opts.load_steps, None)
}

fn run_levels(
    prob: &EquilibriumProblem,
    opts: &SolverOptions,
    steps: usize,
    initial_guess: Option<&[Vec3]>,
) -> Result<SolveReport, SolveError> {
    opts.validate()?;
    let mut x = match initial_guess {
        Some(g) if g.len() != prob.free_count() => {
            return Err(SolveError::InitialGuess {
                expected: prob.free_count(),
                got: g.len(),
            })
        }
        Some(g) => g.to_vec(),
        None => prob.reference_free_positions(),
    };

    let working = prob.with_laws(prob.laws().map(|l| l.intact()))?;
    let net = prob.network();
    let reference_q: Vec<Vec3> = prob
        .partition()
        .prescribed()
        .iter()
        .map(|id| net.positions()[id.0])
        .collect();
    let mut states = vec![BondState::Intact; net.bond_count()];
    let mut newton = Newton {
        opts,
        tol: opts.tolerance_for(prob),
        trace: Vec::new(),
        run: 0,
        iterations: 0,
    };
    let mut history = Vec::with_capacity(steps);
    let mut level = working.clone();
    let mut status = SolveStatus::Converged;
    let mut completed = 0;

    'levels: for step in 1..=steps {
        let t = step as f64 / steps as f64;
        let loads = prob.loads().iter().map(|b| b * t).collect();
        let xq = reference_q
            .iter()
            .zip(prob.prescribed_positions())
            .map(|(d, target)| d + (target - d) * t)
            .collect();
        level = working.with_loads(loads)?.with_prescribed_positions(xq)?;

        let mut newly_broken = Vec::new();
        loop {
            let outcome = newton.run(&level, &mut x, &states, step);
            if outcome.status != SolveStatus::Converged {
                status = outcome.status;
                break 'levels;
            }
            if !opts.allow_fracture {
                break;
            }
            let state = assemble_state(&level, &x, &states)?;
            let breaking: Vec<usize> = (0..states.len())
                .filter(|&i| {
                    !states[i].is_broken()
                        && prob.laws().for_bond(i).fractures_at(state.extensions[i])
                })
                .collect();
            if breaking.is_empty() {
                break;
            }
            for &i in &breaking {
                states[i] = BondState::Broken;
            }
            newly_broken.extend(breaking);
        }

        let state = assemble_state(&level, &x, &states)?;
        history.push(StepRecord {
            step,
            load_factor: t,
            bonds: state
                .extensions
                .iter()
                .zip(&state.force_magnitudes)
                .map(|(&extension, &force)| BondSample { extension, force })
                .collect(),
            newly_broken,
        });
        completed = step;
    }

    let broken_bonds = states
        .iter()
        .enumerate()
        .filter(|(_, s)| s.is_broken())
        .map(|(i, _)| i)
        .collect();
    let last_norm = newton.trace.last().map_or(0.0, |r| r.residual_norm);
    let final_state = assemble_state(&level, &x, &states).ok();
    let residual_norm = final_state
        .as_ref()
        .map_or(last_norm, |s| block_norm(&residual_of(&level, s)));
    let reaction_rows = final_state.as_ref().map_or_else(
        || vec![Vec3::zeros(); prob.partition().prescribed().len()],
        |s| reactions(&level, s),
    );
    let m = net.bond_count();
    let (positions, forces, extensions, force_magnitudes) = match final_state {
        Some(s) => (s.positions, s.forces, s.extensions, s.force_magnitudes),
        None => (
            level.scatter(&x),
            vec![Vec3::zeros(); m],
            vec![0.0; m],
            vec![0.0; m],
        ),
    };

    Ok(SolveReport {
        status,
        positions,
        forces,
        extensions,
        force_magnitudes,
        reactions: reaction_rows,
        broken_bonds,
        residual_norm,
        tolerance: newton.tol,
        iterations: newton.iterations,
        load_steps: steps,
        completed_steps: completed,
        trace: newton.trace,
        history,
    })
}

/// Central-difference Jacobian of the residual. `step` is relative to the
/// mean rest length.
pub fn finite_difference_jacobian(
    prob: &EquilibriumProblem,
    x_free: &[Vec3],
    states: &[BondState],
    step: f64,
) -> Result<DMatrix<f64>, EquilibriumError> {
    let h = step * prob.network().mean_rest_length();
    let n = 3 * x_free.len();
    let mut out = DMatrix::zeros(n, n);
    let mut probe = x_free.to_vec();
    for j in 0..n {
        let (node, axis) = (j / 3, j % 3);
        let orig = probe[node][axis];
        probe[node][axis] = orig + h;
        let plus = residual(prob, &probe, states)?;
        probe[node][axis] = orig - h;
        let minus = residual(prob, &probe, states)?;
        probe[node][axis] = orig;
        for (i, (p, m)) in plus.iter().zip(&minus).enumerate() {
            for c in 0..3 {
                out[(3 * i + c, j)] = (p[c] - m[c]) / (2.0 * h);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JacobianCheck {
    /// `max |J - J_fd|` over entries, divided by the largest `|J_fd|` entry.
    pub max_relative: f64,
    /// `‖J - J_fd‖_F / ‖J_fd‖_F`.
    pub frobenius_relative: f64,
}

/// Compare the analytic Jacobian with central finite differences.
pub fn check_jacobian(
    prob: &EquilibriumProblem,
    x_free: &[Vec3],
    states: &[BondState],
    fd_step: f64,
) -> Result<JacobianCheck, EquilibriumError> {
    assert!(fd_step > 0.0, "finite-difference step must be positive");
    let analytic = jacobian(prob, x_free, states)?.to_dense();
    let fd = finite_difference_jacobian(prob, x_free, states, fd_step)?;
    let diff = &analytic - &fd;
    let ratio = |num: f64, den: f64| {
        if den > 0.0 {
            num / den
        } else if num == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    };
    let den_max = fd.amax().max(analytic.amax());
    let den_fro = fd.norm().max(analytic.norm());
    Ok(JacobianCheck {
        max_relative: ratio(diff.amax(), den_max),
        frobenius_relative: ratio(diff.norm(), den_fro),
    })
}
