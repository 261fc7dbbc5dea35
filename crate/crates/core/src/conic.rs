//! Convex subproblem representation and the solve contract.
//!
//! A [`ConicProgram`] minimizes `xᵀQx + cᵀx + c₀` over a real vector subject to
//! linear equalities, boxes, second-order cones and convex quadratic
//! inequalities. Solving is delegated to the Clarabel interior-point solver;
//! quadratic inequalities are rewritten as rotated cones from a factor of
//! their kernel. Feasibility of the returned point is re-checked against the
//! raw constraint list.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{RMat, RVec};

/// Feasibility tolerance of an `Optimal` solution, after row normalization.
pub const FEAS_TOL: f64 = 1e-6;
/// Tolerance on the minimum eigenvalue of the objective kernel.
pub const PSD_TOL: f64 = -1e-9;

/// Kernel of a quadratic constraint, either dense or as a factor `F` with `Q = FᵀF`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum QuadraticKernel {
    /// Dense PSD matrix.
    Dense(RMat),
    /// Rows of `F`, `Q = FᵀF`.
    Factor(RMat),
}

impl QuadraticKernel {
    fn value(&self, x: &RVec) -> f64 {
        match self {
            Self::Dense(q) => x.dot(&(q * x)),
            Self::Factor(f) => (f * x).norm_squared(),
        }
    }

    fn dim(&self) -> usize {
        match self {
            Self::Dense(q) => q.ncols(),
            Self::Factor(f) => f.ncols(),
        }
    }

    fn scale(&self) -> f64 {
        match self {
            Self::Dense(q) => q.norm(),
            Self::Factor(f) => f.norm_squared(),
        }
    }

    /// A factor `F` with `FᵀF = Q`, dropping numerically null directions.
    fn factor(&self) -> Result<RMat> {
        match self {
            Self::Factor(f) => Ok(f.clone()),
            Self::Dense(q) => {
                let eig = q.clone().symmetric_eigen();
                let top = eig.eigenvalues.amax();
                if eig.eigenvalues.min() < PSD_TOL * top.max(1.0) {
                    return Err(Error::InvalidParameter("quadratic constraint kernel is not PSD".into()));
                }
                let keep: Vec<usize> = (0..q.nrows()).filter(|&i| eig.eigenvalues[i] > 1e-14 * top).collect();
                Ok(RMat::from_fn(keep.len(), q.ncols(), |r, c| {
                    eig.eigenvalues[keep[r]].sqrt() * eig.eigenvectors[(c, keep[r])]
                }))
            }
        }
    }
}

/// One constraint of a [`ConicProgram`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Constraint {
    /// `aᵀx = b`.
    LinearEq {
        /// Coefficients.
        a: RVec,
        /// Right-hand side.
        b: f64,
    },
    /// `lower ≤ x ≤ upper` entrywise; infinite bounds are ignored.
    Box {
        /// Lower bounds.
        lower: RVec,
        /// Upper bounds.
        upper: RVec,
    },
    /// `∥A x + b∥ ≤ cᵀx + d`.
    SecondOrderCone {
        /// Cone matrix.
        a: RMat,
        /// Cone offset.
        b: RVec,
        /// Scalar-side coefficients.
        c: RVec,
        /// Scalar-side offset.
        d: f64,
    },
    /// `xᵀQx + aᵀx + b ≤ 0`.
    Quadratic {
        /// PSD kernel.
        q: QuadraticKernel,
        /// Linear coefficients.
        a: RVec,
        /// Constant.
        b: f64,
    },
}

impl Constraint {
    /// Violation normalized by the norm of the constraint's coefficient rows.
    pub fn violation(&self, x: &RVec) -> f64 {
        let unit = |s: f64| if s > 0.0 { s } else { 1.0 };
        match self {
            Self::LinearEq { a, b } => (a.dot(x) - b).abs() / unit(a.norm()),
            Self::Box { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper.iter()))
                .map(|(&v, (&l, &u))| (l - v).max(v - u).max(0.0))
                .fold(0.0, f64::max),
            Self::SecondOrderCone { a, b, c, d } => {
                let lhs = (a * x + b).norm();
                let scale = unit(a.norm().max(c.norm()));
                ((lhs - c.dot(x) - d) / scale).max(0.0)
            }
            Self::Quadratic { q, a, b } => {
                let scale = unit(q.scale().max(a.norm()));
                ((q.value(x) + a.dot(x) + b) / scale).max(0.0)
            }
        }
    }

    fn dim(&self) -> usize {
        match self {
            Self::LinearEq { a, .. } => a.len(),
            Self::Box { lower, .. } => lower.len(),
            Self::SecondOrderCone { a, .. } => a.ncols(),
            Self::Quadratic { q, .. } => q.dim(),
        }
    }
}

/// Convex program `min xᵀQx + cᵀx + c₀` s.t. constraints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConicProgram {
    /// PSD objective kernel `Q`.
    pub quad: RMat,
    /// Linear objective term `c`.
    pub linear: RVec,
    /// Constant objective term.
    pub constant: f64,
    /// Constraint list.
    pub constraints: Vec<Constraint>,
}

impl ConicProgram {
    /// Unconstrained zero objective over `dim` variables.
    pub fn new(dim: usize) -> Self {
        Self { quad: RMat::zeros(dim, dim), linear: RVec::zeros(dim), constant: 0.0, constraints: Vec::new() }
    }

    /// Number of variables.
    pub fn dim(&self) -> usize {
        self.linear.len()
    }

    /// Appends a constraint.
    pub fn push(&mut self, c: Constraint) {
        self.constraints.push(c);
    }

    /// Objective value at `x`.
    pub fn objective(&self, x: &RVec) -> f64 {
        x.dot(&(&self.quad * x)) + self.linear.dot(x) + self.constant
    }

    /// Largest normalized constraint violation at `x`.
    pub fn max_violation(&self, x: &RVec) -> f64 {
        self.constraints.iter().map(|c| c.violation(x)).fold(0.0, f64::max)
    }

    /// Checks dimensions and PSD-ness of the objective kernel.
    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        if self.quad.shape() != (n, n) {
            return Err(Error::Dimension("objective kernel shape".into()));
        }
        for (i, c) in self.constraints.iter().enumerate() {
            if c.dim() != n {
                return Err(Error::Dimension(format!("constraint {i} has dimension {} ≠ {n}", c.dim())));
            }
            match c {
                Constraint::Box { lower, upper } if upper.len() != n || lower.iter().zip(upper.iter()).any(|(l, u)| l > u) => {
                    return Err(Error::Dimension(format!("box constraint {i} malformed")));
                }
                Constraint::SecondOrderCone { a, b, c, .. } if b.len() != a.nrows() || c.len() != n => {
                    return Err(Error::Dimension(format!("cone constraint {i} malformed")));
                }
                Constraint::Quadratic { a, .. } if a.len() != n => {
                    return Err(Error::Dimension(format!("quadratic constraint {i} malformed")));
                }
                _ => {}
            }
        }
        if n > 0 {
            let sym = (&self.quad + self.quad.transpose()) * 0.5;
            let eig = sym.symmetric_eigenvalues();
            if eig.min() < PSD_TOL * eig.amax().max(1.0) {
                return Err(Error::InvalidParameter(format!("objective kernel not PSD (min eig {})", eig.min())));
            }
        }
        Ok(())
    }

    /// Structured-text dump for offline debugging.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// Outcome classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    /// Converged and independently verified feasible.
    Optimal,
    /// The solver certified infeasibility.
    Infeasible,
    /// Iteration cap or stalled progress before a verified solution.
    MaxIter,
}

/// Solver output with independently recomputed objective and violation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConicSolution {
    /// Primal point.
    pub x: RVec,
    /// Outcome.
    pub status: SolveStatus,
    /// Objective at `x`.
    pub objective_value: f64,
    /// Largest normalized violation at `x`.
    pub max_constraint_violation: f64,
}

/// Row-by-row builder for Clarabel's `Ax + s = b, s ∈ K` form.
struct ConeRows {
    triplets: (Vec<usize>, Vec<usize>, Vec<f64>),
    b: Vec<f64>,
    cones: Vec<SupportedConeT<f64>>,
}

impl ConeRows {
    fn new() -> Self {
        Self { triplets: (Vec::new(), Vec::new(), Vec::new()), b: Vec::new(), cones: Vec::new() }
    }

    /// Adds the row `s = b − aᵀx` with `a` given densely.
    fn row(&mut self, a: impl Iterator<Item = f64>, b: f64) {
        let r = self.b.len();
        for (j, v) in a.enumerate() {
            if v != 0.0 {
                self.triplets.0.push(r);
                self.triplets.1.push(j);
                self.triplets.2.push(v);
            }
        }
        self.b.push(b);
    }
}

/// Solves `program` with relative objective tolerance `tol` and at most `max_iter` interior-point iterations.
pub fn solve(program: &ConicProgram, tol: f64, max_iter: u32) -> Result<ConicSolution> {
    program.validate()?;
    let n = program.dim();
    let mut rows = ConeRows::new();

    for c in &program.constraints {
        match c {
            Constraint::LinearEq { a, b } => {
                rows.row(a.iter().copied(), *b);
                rows.cones.push(SupportedConeT::ZeroConeT(1));
            }
            Constraint::Box { lower, upper } => {
                let mut count = 0;
                for i in 0..n {
                    if upper[i].is_finite() {
                        rows.row((0..n).map(|j| if j == i { 1.0 } else { 0.0 }), upper[i]);
                        count += 1;
                    }
                    if lower[i].is_finite() {
                        rows.row((0..n).map(|j| if j == i { -1.0 } else { 0.0 }), -lower[i]);
                        count += 1;
                    }
                }
                if count > 0 {
                    rows.cones.push(SupportedConeT::NonnegativeConeT(count));
                }
            }
            Constraint::SecondOrderCone { a, b, c, d } => {
                rows.row(c.iter().map(|v| -v), *d);
                for r in 0..a.nrows() {
                    rows.row(a.row(r).iter().map(|v| -v), b[r]);
                }
                rows.cones.push(SupportedConeT::SecondOrderConeT(a.nrows() + 1));
            }
            Constraint::Quadratic { q, a, b } => {
                // ∥Fx∥² ≤ t with t = −aᵀx − b  ⇔  ∥(2Fx, t − 1)∥ ≤ t + 1
                let f = q.factor()?;
                rows.row(a.iter().copied(), 1.0 - b);
                rows.row(a.iter().copied(), -1.0 - b);
                for r in 0..f.nrows() {
                    rows.row(f.row(r).iter().map(|v| -2.0 * v), 0.0);
                }
                rows.cones.push(SupportedConeT::SecondOrderConeT(f.nrows() + 2));
            }
        }
    }

    let sym = (&program.quad + program.quad.transpose()) * 0.5;
    let mut pt = (Vec::new(), Vec::new(), Vec::new());
    for j in 0..n {
        for i in 0..=j {
            let v = 2.0 * sym[(i, j)];
            if v != 0.0 {
                pt.0.push(i);
                pt.1.push(j);
                pt.2.push(v);
            }
        }
    }
    let p = CscMatrix::new_from_triplets(n, n, pt.0, pt.1, pt.2);
    let m = rows.b.len();
    let a = CscMatrix::new_from_triplets(m, n, rows.triplets.0, rows.triplets.1, rows.triplets.2);
    let settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .max_iter(max_iter)
        .tol_gap_abs(tol)
        .tol_gap_rel(tol)
        .tol_feas(1e-9)
        .build()
        .map_err(|e| Error::Solver(format!("{e:?}")))?;
    let mut solver = DefaultSolver::new(&p, program.linear.as_slice(), &a, &rows.b, &rows.cones, settings)
        .map_err(|e| Error::Solver(format!("{e:?}")))?;
    solver.solve();
    let sol = &solver.solution;
    let x = RVec::from_column_slice(&sol.x);
    let violation = program.max_violation(&x);
    let status = match sol.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved if violation <= FEAS_TOL => SolveStatus::Optimal,
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => SolveStatus::Infeasible,
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => {
            return Err(Error::Solver("objective unbounded below".into()));
        }
        _ => SolveStatus::MaxIter,
    };
    let x = if x.iter().all(|v| v.is_finite()) { x } else { RVec::zeros(n) };
    Ok(ConicSolution {
        objective_value: program.objective(&x),
        max_constraint_violation: program.max_violation(&x),
        x,
        status,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn scalar_quadratic_with_lower_bound() {
        let mut p = ConicProgram::new(1);
        p.quad[(0, 0)] = 1.0;
        p.push(Constraint::Box { lower: RVec::from_element(1, 1.0), upper: RVec::from_element(1, f64::INFINITY) });
        let s = solve(&p, 1e-9, 100).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.x[0] - 1.0).abs() < 1e-6);
        assert!((s.objective_value - 1.0).abs() < 1e-6);
    }

    #[test]
    fn soc_boundary() {
        let mut p = ConicProgram::new(2);
        p.linear[0] = -1.0;
        p.push(Constraint::SecondOrderCone { a: RMat::identity(2, 2), b: RVec::zeros(2), c: RVec::zeros(2), d: 1.0 });
        p.push(Constraint::LinearEq { a: RVec::from_vec(vec![0.0, 1.0]), b: 0.0 });
        let s = solve(&p, 1e-9, 100).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.x[0] - 1.0).abs() < 1e-6);
        assert!(s.x[1].abs() < 1e-6);
    }

    #[test]
    fn quadratic_inequality_as_rotated_cone() {
        // max x0 + x1 s.t. x0² + x1² ≤ 2  →  (1, 1)
        for kernel in [QuadraticKernel::Dense(RMat::identity(2, 2)), QuadraticKernel::Factor(RMat::identity(2, 2))] {
            let mut p = ConicProgram::new(2);
            p.linear.fill(-1.0);
            p.push(Constraint::Quadratic { q: kernel, a: RVec::zeros(2), b: -2.0 });
            let s = solve(&p, 1e-9, 100).unwrap();
            assert_eq!(s.status, SolveStatus::Optimal);
            assert!((s.x[0] - 1.0).abs() < 1e-6 && (s.x[1] - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn infeasible_is_reported() {
        let mut p = ConicProgram::new(1);
        p.push(Constraint::LinearEq { a: RVec::from_element(1, 1.0), b: 3.0 });
        p.push(Constraint::Box { lower: RVec::from_element(1, 0.0), upper: RVec::from_element(1, 1.0) });
        assert_eq!(solve(&p, 1e-9, 100).unwrap().status, SolveStatus::Infeasible);
    }

    #[test]
    fn rejects_indefinite_objective_and_bad_dims() {
        let mut p = ConicProgram::new(2);
        p.quad[(0, 0)] = -1.0;
        assert!(solve(&p, 1e-9, 100).is_err());
        let mut q = ConicProgram::new(2);
        q.push(Constraint::LinearEq { a: RVec::zeros(3), b: 0.0 });
        assert!(solve(&q, 1e-9, 100).is_err());
    }

    /// Accelerated projected gradient for `min xᵀQx + cᵀx` over a box.
    fn projected_gradient(q: &RMat, c: &RVec, lo: &RVec, hi: &RVec) -> RVec {
        let lip = 2.0 * q.clone().symmetric_eigenvalues().max();
        let step = 1.0 / lip;
        let proj = |v: RVec| RVec::from_fn(v.len(), |i, _| v[i].clamp(lo[i], hi[i]));
        let mut x = proj(RVec::zeros(c.len()));
        let mut y = x.clone();
        let mut t: f64 = 1.0;
        for _ in 0..200_000 {
            let grad = q * &y * 2.0 + c;
            let next = proj(&y - grad * step);
            let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
            y = &next + (&next - &x) * ((t - 1.0) / t_next);
            x = next;
            t = t_next;
        }
        x
    }

    #[test]
    fn matches_projected_gradient_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..3 {
            let g = RMat::from_fn(20, 20, |_, _| rng.gen_range(-1.0..1.0));
            let q = g.transpose() * &g * 0.1 + RMat::identity(20, 20) * 0.01;
            let c = RVec::from_fn(20, |_, _| rng.gen_range(-3.0..3.0));
            let lo = RVec::from_element(20, -1.0);
            let hi = RVec::from_element(20, 0.5);
            let mut p = ConicProgram::new(20);
            p.quad = q.clone();
            p.linear = c.clone();
            p.push(Constraint::Box { lower: lo.clone(), upper: hi.clone() });
            let s = solve(&p, 1e-10, 200).unwrap();
            assert_eq!(s.status, SolveStatus::Optimal);
            let xr = projected_gradient(&q, &c, &lo, &hi);
            let fr = p.objective(&xr);
            assert!((s.objective_value - fr).abs() <= 1e-5 * fr.abs(), "{} vs {}", s.objective_value, fr);
        }
    }

    #[test]
    fn deterministic_bytes() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = RMat::from_fn(6, 6, |_, _| rng.gen_range(-1.0..1.0));
        let mut p = ConicProgram::new(6);
        p.quad = g.transpose() * g;
        p.linear = RVec::from_fn(6, |_, _| rng.gen_range(-1.0..1.0));
        p.push(Constraint::SecondOrderCone { a: RMat::identity(6, 6), b: RVec::zeros(6), c: RVec::zeros(6), d: 1.0 });
        let a = solve(&p, 1e-8, 100).unwrap();
        let b = solve(&p, 1e-8, 100).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }
}
