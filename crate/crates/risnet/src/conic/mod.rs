//! Conic-program builder and solver contract.
//!
//! Every SOCP/SDP subproblem in this crate is assembled as a [`ConicProblem`]:
//! a linear objective over a flat real variable vector plus a list of
//! `(affine map, cone)` constraints. The constraint convention is
//!
//! ```text
//! v_i = constant_i + sum_j coeff_ij * x_j,   v ∈ cone
//! ```
//!
//! Positive-semidefinite blocks use scaled triangular packing (svec): the
//! upper triangle in column-major order with off-diagonal entries multiplied
//! by sqrt(2), so a side-`n` block occupies `n(n+1)/2` rows. This convention
//! is fixed repo-wide.
//!
//! Complex Hermitian PSD variables are handled by [`HermitianBlock`]: the
//! matrix is parameterized by its `n^2` real degrees of freedom and a single
//! real PSD constraint is imposed on the 2n x 2n embedding
//! `[[Re H, -Im H], [Im H, Re H]]`, which is PSD exactly when `H` is.
//!
//! Problems are solved by an interior-point method (Clarabel) behind
//! [`solve`]; solving always runs in double precision regardless of the
//! scalar type `T`. Infeasibility is reported only on a solver certificate,
//! never on iteration timeout.

mod backend;

use crate::scalar::Scalar;
use crate::{CMatrix, CVector};
use nalgebra::{Complex, DMatrix};
use std::fmt::Write as _;
use std::ops::Range;

/// Supported cones for constraint blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cone {
    /// All entries equal zero (equality constraints).
    Zero(usize),
    /// All entries nonnegative.
    NonNegative(usize),
    /// `v_0 >= || v_1.. ||_2`; the parameter is the full dimension.
    SecondOrder(usize),
    /// Symmetric PSD block of the given side, svec-packed.
    PositiveSemidefinite(usize),
}

impl Cone {
    pub fn dim(&self) -> usize {
        match *self {
            Cone::Zero(d) | Cone::NonNegative(d) | Cone::SecondOrder(d) => d,
            Cone::PositiveSemidefinite(n) => svec_len(n),
        }
    }
}

/// Sparse affine expression `constant + sum coeff * x`.
#[derive(Debug, Clone, Default)]
pub struct LinExpr<T> {
    pub terms: Vec<(usize, T)>,
    pub constant: T,
}

impl<T: Scalar> LinExpr<T> {
    pub fn zero() -> Self {
        Self { terms: Vec::new(), constant: T::zero() }
    }

    pub fn constant(c: T) -> Self {
        Self { terms: Vec::new(), constant: c }
    }

    pub fn var(index: usize) -> Self {
        Self::term(index, T::one())
    }

    pub fn term(index: usize, coeff: T) -> Self {
        Self { terms: vec![(index, coeff)], constant: T::zero() }
    }

    pub fn push(&mut self, index: usize, coeff: T) -> &mut Self {
        if coeff != T::zero() {
            self.terms.push((index, coeff));
        }
        self
    }

    pub fn add_constant(&mut self, c: T) -> &mut Self {
        self.constant += c;
        self
    }

    pub fn scaled(mut self, s: T) -> Self {
        for (_, c) in &mut self.terms {
            *c *= s;
        }
        self.constant *= s;
        self
    }

    pub fn add_expr(&mut self, other: &LinExpr<T>) -> &mut Self {
        self.terms.extend(other.terms.iter().copied());
        self.constant += other.constant;
        self
    }

    /// Evaluate at a candidate point (used by tests and re-checks).
    pub fn eval(&self, x: &[T]) -> T {
        let mut v = self.constant;
        for &(i, c) in &self.terms {
            v += c * x[i];
        }
        v
    }
}

/// Number of svec coordinates for a side-`n` symmetric block.
pub fn svec_len(n: usize) -> usize {
    n * (n + 1) / 2
}

/// svec coordinate of entry `(i, j)`, `i <= j` (upper triangle, column-major).
pub fn svec_index(i: usize, j: usize) -> usize {
    debug_assert!(i <= j);
    j * (j + 1) / 2 + i
}

/// Solver status of a conic solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConicStatus {
    Optimal,
    PrimalInfeasible,
    DualInfeasible,
    /// Solver breakdown or iteration cap: the result is *unknown*, callers
    /// must never read it as infeasible.
    NumericalFailure,
}

/// Result of a solve.
#[derive(Debug, Clone)]
pub struct ConicSolution<T> {
    pub status: ConicStatus,
    /// Primal point (meaningful for `Optimal`).
    pub x: Vec<T>,
    pub objective: T,
    pub primal_residual: T,
    pub dual_residual: T,
    pub iterations: u32,
    /// Raw backend status, for diagnosing `NumericalFailure`.
    pub backend_status: String,
}

impl<T: Scalar> ConicSolution<T> {
    pub fn block<'a>(&'a self, range: &Range<usize>) -> &'a [T] {
        &self.x[range.clone()]
    }
}

/// Interior-point tolerances.
#[derive(Debug, Clone, Copy)]
pub struct SolverTolerances {
    pub feasibility: f64,
    pub relative_gap: f64,
    pub max_iterations: u32,
}

impl Default for SolverTolerances {
    fn default() -> Self {
        Self { feasibility: 1e-8, relative_gap: 1e-8, max_iterations: 200 }
    }
}

/// Conic program over a flat real variable vector.
#[derive(Debug, Clone, Default)]
pub struct ConicProblem<T> {
    num_vars: usize,
    objective: Vec<(usize, T)>,
    objective_constant: T,
    constraints: Vec<(Cone, Vec<LinExpr<T>>)>,
    blocks: Vec<(String, Range<usize>)>,
}

impl<T: Scalar> ConicProblem<T> {
    pub fn new() -> Self {
        Self {
            num_vars: 0,
            objective: Vec::new(),
            objective_constant: T::zero(),
            constraints: Vec::new(),
            blocks: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    /// Allocate `len` scalar variables under `name`.
    pub fn add_block(&mut self, name: &str, len: usize) -> Range<usize> {
        let range = self.num_vars..self.num_vars + len;
        self.num_vars += len;
        self.blocks.push((name.to_string(), range.clone()));
        range
    }

    pub fn block_range(&self, name: &str) -> Option<Range<usize>> {
        self.blocks.iter().find(|(n, _)| n == name).map(|(_, r)| r.clone())
    }

    pub fn add_objective_term(&mut self, index: usize, coeff: T) {
        if coeff != T::zero() {
            self.objective.push((index, coeff));
        }
    }

    pub fn add_objective_expr(&mut self, expr: &LinExpr<T>) {
        for &(i, c) in &expr.terms {
            self.add_objective_term(i, c);
        }
        self.objective_constant += expr.constant;
    }

    /// Add `exprs ∈ cone`; the expression count must match the cone dimension.
    pub fn add_constraint(&mut self, cone: Cone, exprs: Vec<LinExpr<T>>) {
        assert_eq!(
            exprs.len(),
            cone.dim(),
            "constraint dimension mismatch for {cone:?}"
        );
        self.constraints.push((cone, exprs));
    }

    /// `expr == 0`.
    pub fn add_eq(&mut self, expr: LinExpr<T>) {
        self.add_constraint(Cone::Zero(1), vec![expr]);
    }

    /// `expr >= 0`.
    pub fn add_nonneg(&mut self, expr: LinExpr<T>) {
        self.add_constraint(Cone::NonNegative(1), vec![expr]);
    }

    /// `exprs[0] >= || exprs[1..] ||_2`.
    pub fn add_soc(&mut self, exprs: Vec<LinExpr<T>>) {
        let dim = exprs.len();
        self.add_constraint(Cone::SecondOrder(dim), exprs);
    }

    /// Allocate a complex Hermitian PSD matrix variable of the given side.
    ///
    /// Adds the `side^2` real parameters and the PSD constraint on the real
    /// embedding in one step.
    pub fn add_hermitian_psd_block(&mut self, name: &str, side: usize) -> HermitianBlock {
        let range = self.add_block(name, side * side);
        let block = HermitianBlock { side, range };
        let embed_side = 2 * side;
        let mut rows = Vec::with_capacity(svec_len(embed_side));
        let sqrt2 = T::c(2.0).sqrt();
        for j in 0..embed_side {
            for i in 0..=j {
                let mut expr = LinExpr::zero();
                if let Some((param, sign)) = block.embedding_entry(i, j) {
                    let s = if sign > 0 { T::one() } else { -T::one() };
                    expr.push(param, if i == j { s } else { s * sqrt2 });
                }
                rows.push(expr);
            }
        }
        self.add_constraint(Cone::PositiveSemidefinite(embed_side), rows);
        block
    }

    /// Solve with the given tolerances.
    pub fn solve(&self, tol: SolverTolerances) -> ConicSolution<T> {
        backend::solve(self, tol)
    }

    pub(crate) fn parts(&self) -> (&[(usize, T)], T, &[(Cone, Vec<LinExpr<T>>)]) {
        (&self.objective, self.objective_constant, &self.constraints)
    }

    /// Text dump: sparse triplet listing of the affine maps plus cone tags.
    ///
    /// Layout, one record per line:
    /// ```text
    /// conic-problem v1
    /// vars <n>
    /// block <name> <start> <len>
    /// obj <var> <coeff>           # objective terms, then constant
    /// objconst <c>
    /// cone <k> <tag> <dim>        # tag in {zero, nonneg, soc, psd}
    /// row <k> <i> <constant>
    /// coef <k> <i> <var> <coeff>
    /// ```
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "conic-problem v1");
        let _ = writeln!(out, "vars {}", self.num_vars);
        for (name, r) in &self.blocks {
            let _ = writeln!(out, "block {} {} {}", name, r.start, r.len());
        }
        for &(i, c) in &self.objective {
            let _ = writeln!(out, "obj {} {:e}", i, c);
        }
        let _ = writeln!(out, "objconst {:e}", self.objective_constant);
        for (k, (cone, rows)) in self.constraints.iter().enumerate() {
            let (tag, dim) = match cone {
                Cone::Zero(d) => ("zero", *d),
                Cone::NonNegative(d) => ("nonneg", *d),
                Cone::SecondOrder(d) => ("soc", *d),
                Cone::PositiveSemidefinite(n) => ("psd", *n),
            };
            let _ = writeln!(out, "cone {k} {tag} {dim}");
            for (i, row) in rows.iter().enumerate() {
                let _ = writeln!(out, "row {} {} {:e}", k, i, row.constant);
                for &(v, c) in &row.terms {
                    let _ = writeln!(out, "coef {} {} {} {:e}", k, i, v, c);
                }
            }
        }
        out
    }
}

/// Handle to a complex Hermitian PSD matrix variable.
///
/// Parameter layout within the block: the `n` real diagonal entries first,
/// then `(Re, Im)` pairs of the strict upper triangle in column-major order.
#[derive(Debug, Clone)]
pub struct HermitianBlock {
    side: usize,
    range: Range<usize>,
}

impl HermitianBlock {
    pub fn side(&self) -> usize {
        self.side
    }

    pub fn range(&self) -> Range<usize> {
        self.range.clone()
    }

    /// Variable index of the (real) diagonal entry `H[i][i]`.
    pub fn diag_index(&self, i: usize) -> usize {
        debug_assert!(i < self.side);
        self.range.start + i
    }

    fn pair_offset(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < j && j < self.side);
        self.range.start + self.side + 2 * (j * (j - 1) / 2 + i)
    }

    /// Variable index of `Re H[i][j]` for `i < j`.
    pub fn re_index(&self, i: usize, j: usize) -> usize {
        self.pair_offset(i, j)
    }

    /// Variable index of `Im H[i][j]` for `i < j`.
    pub fn im_index(&self, i: usize, j: usize) -> usize {
        self.pair_offset(i, j) + 1
    }

    /// Entry `(i, j)`, `i <= j`, of the real embedding as `(param, sign)`.
    /// `None` marks a structural zero.
    fn embedding_entry(&self, i: usize, j: usize) -> Option<(usize, i8)> {
        let n = self.side;
        let (r, c, top_right) = if j < n {
            (i, j, false)
        } else if i < n {
            (i, j - n, true)
        } else {
            (i - n, j - n, false)
        };
        if !top_right {
            return if r == c {
                Some((self.diag_index(r), 1))
            } else {
                Some((self.re_index(r.min(c), r.max(c)), 1))
            };
        }
        // E[r][n + c] = -Im H[r][c]
        match r.cmp(&c) {
            std::cmp::Ordering::Equal => None,
            std::cmp::Ordering::Less => Some((self.im_index(r, c), -1)),
            std::cmp::Ordering::Greater => Some((self.im_index(c, r), 1)),
        }
    }

    /// `Tr(H)` as a linear expression.
    pub fn trace_expr<T: Scalar>(&self) -> LinExpr<T> {
        let mut e = LinExpr::zero();
        for i in 0..self.side {
            e.push(self.diag_index(i), T::one());
        }
        e
    }

    /// `Tr(R H)` for Hermitian `R` as a real linear expression.
    pub fn inner_product_expr<T: Scalar>(&self, r: &CMatrix<T>) -> LinExpr<T> {
        let n = self.side;
        assert_eq!(r.nrows(), n);
        assert_eq!(r.ncols(), n);
        let mut e = LinExpr::zero();
        let two = T::c(2.0);
        for i in 0..n {
            e.push(self.diag_index(i), r[(i, i)].re);
            for j in i + 1..n {
                e.push(self.re_index(i, j), two * r[(i, j)].re);
                e.push(self.im_index(i, j), two * r[(i, j)].im);
            }
        }
        e
    }

    /// Decode the matrix from a primal point.
    pub fn decode<T: Scalar>(&self, x: &[T]) -> CMatrix<T> {
        let n = self.side;
        let mut m = DMatrix::from_element(n, n, Complex::new(T::zero(), T::zero()));
        for i in 0..n {
            m[(i, i)] = Complex::new(x[self.diag_index(i)], T::zero());
            for j in i + 1..n {
                let v = Complex::new(x[self.re_index(i, j)], x[self.im_index(i, j)]);
                m[(i, j)] = v;
                m[(j, i)] = v.conj();
            }
        }
        m
    }
}

/// Real embedding of a complex Hermitian matrix:
/// `[[Re H, -Im H], [Im H, Re H]]`.
///
/// `H` is PSD iff the embedding is PSD, and the embedding's trace is twice
/// `Tr(H)`. Panics if `H` deviates from Hermitian symmetry by more than
/// `1e-10` relative to its largest entry.
pub fn embed_hermitian<T: Scalar>(h: &CMatrix<T>) -> DMatrix<T> {
    let n = h.nrows();
    assert_eq!(n, h.ncols(), "embed_hermitian: square matrix required");
    let scale = h
        .iter()
        .map(|z| z.norm_sqr())
        .fold(T::zero(), |a, b| if b > a { b } else { a })
        .sqrt()
        .max(T::one());
    let tol = T::c(1e-10) * scale;
    for i in 0..n {
        for j in 0..n {
            let d = h[(i, j)] - h[(j, i)].conj();
            assert!(
                d.norm_sqr().sqrt() <= tol,
                "embed_hermitian: input not Hermitian at ({i},{j})"
            );
        }
    }
    let mut e = DMatrix::from_element(2 * n, 2 * n, T::zero());
    for i in 0..n {
        for j in 0..n {
            let z = h[(i, j)];
            e[(i, j)] = z.re;
            e[(n + i, n + j)] = z.re;
            e[(i, n + j)] = -z.im;
            e[(n + i, j)] = z.im;
        }
    }
    e
}

/// Hermitian leading eigenpair `(lambda_1, u_1)` with a deterministic phase:
/// the first component of `u_1` with modulus above `1e-12` is rotated to be
/// real positive.
pub fn leading_eigenpair<T: Scalar>(h: &CMatrix<T>) -> (T, CVector<T>) {
    let eig = nalgebra::SymmetricEigen::new(h.clone());
    let mut best = 0;
    for i in 1..eig.eigenvalues.len() {
        if eig.eigenvalues[i] > eig.eigenvalues[best] {
            best = i;
        }
    }
    let mut u: CVector<T> = eig.eigenvectors.column(best).into_owned();
    let norm = u.norm();
    if norm > T::zero() {
        u /= Complex::new(norm, T::zero());
    }
    let thresh = T::c(1e-12);
    if let Some(pivot) = u.iter().position(|z| z.norm_sqr().sqrt() > thresh) {
        let z = u[pivot];
        let phase = z / Complex::new(z.norm_sqr().sqrt(), T::zero());
        u /= phase;
    }
    (eig.eigenvalues[best], u)
}
