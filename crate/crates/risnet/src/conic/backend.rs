//! Interior-point backend binding (Clarabel).
//!
//! The builder's constraints `v = constant + Ex ∈ K` are mapped to Clarabel's
//! `Ax + s = b, s ∈ K` with `A = -E`, `b = constant`. Solving always happens
//! in `f64`; inputs are widened and the solution narrowed back to `T`.
//! Infeasible statuses are passed through only when backed by a certificate;
//! everything else (iteration caps, numerical breakdown) maps to
//! `NumericalFailure`.

use super::{Cone, ConicProblem, ConicSolution, ConicStatus, SolverTolerances};
use crate::scalar::Scalar;
use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettings, DefaultSolver, IPSolver, NonnegativeConeT, PSDTriangleConeT,
    SecondOrderConeT, SolverStatus, SupportedConeT, ZeroConeT,
};
pub(super) fn solve<T: Scalar>(
    problem: &ConicProblem<T>,
    tol: SolverTolerances,
) -> ConicSolution<T> {
    let n = problem.num_vars();
    let (objective, obj_constant, constraints) = problem.parts();

    let mut q = vec![0.0f64; n];
    for &(i, c) in objective {
        q[i] += c.to_f64().unwrap_or(f64::NAN);
    }

    let mut cones: Vec<SupportedConeT<f64>> = Vec::with_capacity(constraints.len());
    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
    let mut b: Vec<f64> = Vec::new();
    let mut row = 0usize;
    for (cone, exprs) in constraints {
        cones.push(match *cone {
            Cone::Zero(d) => ZeroConeT(d),
            Cone::NonNegative(d) => NonnegativeConeT(d),
            Cone::SecondOrder(d) => SecondOrderConeT(d),
            Cone::PositiveSemidefinite(side) => PSDTriangleConeT(side),
        });
        for expr in exprs {
            b.push(expr.constant.to_f64().unwrap_or(f64::NAN));
            for &(col, coeff) in &expr.terms {
                triplets.push((row, col, -coeff.to_f64().unwrap_or(f64::NAN)));
            }
            row += 1;
        }
    }
    let a = csc_from_triplets(row, n, &mut triplets);
    let p = CscMatrix::<f64>::zeros((n, n));

    let settings = DefaultSettings {
        verbose: false,
        max_iter: tol.max_iterations,
        tol_feas: tol.feasibility,
        tol_gap_rel: tol.relative_gap,
        tol_gap_abs: tol.relative_gap,
        // the SDR subproblems optimize over large degenerate faces; a mildly
        // stronger KKT regularization avoids insufficient-progress stalls
        static_regularization_constant: 1e-7,
        ..DefaultSettings::default()
    };

    let mut solver = match DefaultSolver::new(&p, &q, &a, &b, &cones, settings) {
        Ok(s) => s,
        Err(_) => return failure(n),
    };
    solver.solve();

    let status = match solver.solution.status {
        SolverStatus::Solved => ConicStatus::Optimal,
        // Clarabel downgrades to AlmostSolved on insufficient progress even
        // when the final iterate meets the requested accuracy; accept it only
        // if the reported residuals and duality gap actually do.
        SolverStatus::AlmostSolved => {
            let gap = (solver.solution.obj_val - solver.solution.obj_val_dual).abs();
            let scale = 1.0 + solver.solution.obj_val.abs();
            if solver.solution.r_prim <= tol.feasibility
                && solver.solution.r_dual <= tol.feasibility
                && gap <= 10.0 * tol.relative_gap * scale
            {
                ConicStatus::Optimal
            } else {
                ConicStatus::NumericalFailure
            }
        }
        SolverStatus::PrimalInfeasible => ConicStatus::PrimalInfeasible,
        SolverStatus::DualInfeasible => ConicStatus::DualInfeasible,
        _ => ConicStatus::NumericalFailure,
    };

    ConicSolution {
        status,
        x: solver.solution.x.iter().map(|&v| T::c(v)).collect(),
        objective: T::c(solver.solution.obj_val) + obj_constant,
        primal_residual: T::c(solver.solution.r_prim),
        dual_residual: T::c(solver.solution.r_dual),
        iterations: solver.solution.iterations,
        backend_status: format!("{:?}", solver.solution.status),
    }
}

fn failure<T: Scalar>(n: usize) -> ConicSolution<T> {
    ConicSolution {
        status: ConicStatus::NumericalFailure,
        x: vec![T::zero(); n],
        objective: T::zero(),
        primal_residual: T::c(f64::INFINITY),
        dual_residual: T::c(f64::INFINITY),
        iterations: 0,
        backend_status: "SetupRejected".to_string(),
    }
}

fn csc_from_triplets(m: usize, n: usize, triplets: &mut Vec<(usize, usize, f64)>) -> CscMatrix<f64> {
    triplets.sort_by(|a, b| (a.1, a.0).cmp(&(b.1, b.0)));
    let mut colptr = vec![0usize; n + 1];
    let mut rowval: Vec<usize> = Vec::with_capacity(triplets.len());
    let mut nzval: Vec<f64> = Vec::with_capacity(triplets.len());
    let mut last: Option<(usize, usize)> = None;
    for &(r, c, v) in triplets.iter() {
        if last == Some((r, c)) {
            *nzval.last_mut().unwrap() += v;
        } else {
            colptr[c + 1] += 1;
            rowval.push(r);
            nzval.push(v);
            last = Some((r, c));
        }
    }
    for c in 0..n {
        colptr[c + 1] += colptr[c];
    }
    CscMatrix::new(m, n, colptr, rowval, nzval)
}
