//! Small dense constrained least squares.
//!
//! Solves
//!
//! ```text
//! minimize    ‖A z − b‖² + ρ ‖z‖²
//! subject to  G z ≥ h,   E z = f
//! ```
//!
//! with a primal active-set method on the normal equations. A feasible start
//! comes from a phase-1 problem in `(z, t)` that minimises `t²` subject to
//! `G z + t ≥ h`, `t ≥ 0`, `E z = f`; the original problem is infeasible iff
//! its optimum has `t > 0`. Equality-constrained subproblems are solved
//! through an SVD of the KKT matrix, so a semidefinite objective (duplicate
//! columns, more unknowns than rows) is handled without extra regularisation.
//!
//! Ties (equally blocking constraints, equally negative multipliers) are
//! broken towards the lowest constraint index, which makes the solver fully
//! deterministic.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("inconsistent problem dimensions: {0}")]
    Dimension(String),
    #[error("problem has {dim} unknowns, above the solver cap of {cap}")]
    TooLarge { dim: usize, cap: usize },
    #[error("constraints are infeasible (minimum uniform violation {violation:.3e})")]
    Infeasible { violation: f64 },
    #[error("active-set iteration limit ({iterations}) reached")]
    IterationLimit { iterations: usize, best: Array1<f64> },
}

/// Constrained least-squares problem description.
#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub a: Array2<f64>,
    pub b: Array1<f64>,
    /// Inequalities `g z ≥ h` (zero rows allowed).
    pub g: Array2<f64>,
    pub h: Array1<f64>,
    /// Equalities `e z = f` (zero rows allowed).
    pub e: Array2<f64>,
    pub f: Array1<f64>,
    pub ridge: f64,
}

impl QpProblem {
    /// Unconstrained least squares; add constraints with the builder methods.
    pub fn least_squares(a: Array2<f64>, b: Array1<f64>) -> Self {
        let d = a.ncols();
        Self {
            a,
            b,
            g: Array2::zeros((0, d)),
            h: Array1::zeros(0),
            e: Array2::zeros((0, d)),
            f: Array1::zeros(0),
            ridge: 0.0,
        }
    }

    pub fn with_inequalities(mut self, g: Array2<f64>, h: Array1<f64>) -> Self {
        self.g = g;
        self.h = h;
        self
    }

    pub fn with_equalities(mut self, e: Array2<f64>, f: Array1<f64>) -> Self {
        self.e = e;
        self.f = f;
        self
    }

    pub fn with_ridge(mut self, ridge: f64) -> Self {
        self.ridge = ridge;
        self
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    /// Least squares over the probability simplex `{w ≥ 0, Σ w = 1}`.
    pub fn simplex(p: ArrayView2<f64>, y: ArrayView1<f64>) -> Self {
        let k = p.ncols();
        QpProblem::least_squares(p.to_owned(), y.to_owned())
            .with_inequalities(Array2::eye(k), Array1::zeros(k))
            .with_equalities(Array2::ones((1, k)), Array1::ones(1))
    }

    pub fn objective(&self, z: ArrayView1<f64>) -> f64 {
        let r = self.a.dot(&z) - &self.b;
        r.dot(&r) + self.ridge * z.dot(&z)
    }

    fn validate(&self, cap: usize) -> Result<(), QpError> {
        let d = self.dim();
        if d == 0 {
            return Err(QpError::Dimension("no unknowns".into()));
        }
        if d > cap {
            return Err(QpError::TooLarge { dim: d, cap });
        }
        if self.b.len() != self.a.nrows() {
            return Err(QpError::Dimension(format!("A has {} rows, b has {}", self.a.nrows(), self.b.len())));
        }
        if self.g.ncols() != d || self.g.nrows() != self.h.len() {
            return Err(QpError::Dimension("inequality block G/h does not match".into()));
        }
        if self.e.ncols() != d || self.e.nrows() != self.f.len() {
            return Err(QpError::Dimension("equality block E/f does not match".into()));
        }
        if self.ridge < 0.0 || !self.ridge.is_finite() {
            return Err(QpError::Dimension("ridge must be a non-negative finite number".into()));
        }
        let matrices = self.a.iter().chain(self.g.iter()).chain(self.e.iter());
        let vectors = self.b.iter().chain(self.h.iter()).chain(self.f.iter());
        if matrices.chain(vectors).any(|v| !v.is_finite()) {
            return Err(QpError::Dimension("non-finite entries".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub max_dim: usize,
    /// `None` means `100 * (d + constraints) + 100`.
    pub max_iter: Option<usize>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { max_dim: 64, max_iter: None }
    }
}

/// KKT certificate of a returned solution (all residuals in ∞-norm).
#[derive(Debug, Clone, PartialEq)]
pub struct KktReport {
    /// `‖∇f(z) − Gᵀλ − Eᵀν‖`.
    pub stationarity: f64,
    /// Largest violation of `G z ≥ h` or `E z = f`.
    pub primal_violation: f64,
    /// `max |λ_i (g_iᵀz − h_i)|`.
    pub complementarity: f64,
    /// `max(0, −min λ_i)`.
    pub dual_violation: f64,
    pub iterations: usize,
}

impl KktReport {
    pub fn max_residual(&self) -> f64 {
        self.stationarity.max(self.primal_violation).max(self.complementarity).max(self.dual_violation)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub z: Array1<f64>,
    pub objective: f64,
    /// Multipliers of the inequality rows (zero for inactive rows).
    pub lambda: Array1<f64>,
    /// Multipliers of the equality rows.
    pub nu: Array1<f64>,
    pub kkt: KktReport,
}

pub fn solve(problem: &QpProblem) -> Result<QpSolution, QpError> {
    solve_with(problem, SolverOptions::default())
}

pub fn solve_with(problem: &QpProblem, opts: SolverOptions) -> Result<QpSolution, QpError> {
    problem.validate(opts.max_dim)?;
    let d = problem.dim();
    let a = to_na(problem.a.view());
    let b = DVector::from_iterator(problem.b.len(), problem.b.iter().copied());
    let mut q = a.transpose() * &a;
    for i in 0..d {
        q[(i, i)] += problem.ridge;
    }
    q *= 2.0;
    let c = -2.0 * (a.transpose() * b);

    let mut rows = Vec::with_capacity(problem.g.nrows() + problem.e.nrows());
    for (r, &hv) in problem.g.rows().into_iter().zip(problem.h.iter()) {
        rows.push(Constraint { a: DVector::from_iterator(d, r.iter().copied()), b: hv, equality: false });
    }
    for (r, &fv) in problem.e.rows().into_iter().zip(problem.f.iter()) {
        rows.push(Constraint { a: DVector::from_iterator(d, r.iter().copied()), b: fv, equality: true });
    }
    let max_iter = opts.max_iter.unwrap_or(100 * (d + rows.len()) + 100);

    let start = feasible_start(&rows, d, max_iter)?;
    let state = active_set(&q, &c, &rows, start, max_iter)?;

    let z = Array1::from_iter(state.x.iter().copied());
    let ni = problem.g.nrows();
    let mut lambda = Array1::zeros(ni);
    let mut nu = Array1::zeros(problem.e.nrows());
    for (&i, &m) in state.working.iter().zip(state.multipliers.iter()) {
        if i < ni {
            lambda[i] = m;
        } else {
            nu[i - ni] = m;
        }
    }
    let kkt = kkt_report(&q, &c, &rows, &state.x, &state.working, &state.multipliers, state.iterations);
    Ok(QpSolution { objective: problem.objective(z.view()), z, lambda, nu, kkt })
}

/// `argmin_{w ∈ simplex} ‖y − P w‖²`.
pub fn solve_simplex_ls(p: ArrayView2<f64>, y: ArrayView1<f64>) -> Result<Array1<f64>, QpError> {
    if p.ncols() == 0 {
        return Err(QpError::Dimension("simplex over zero columns".into()));
    }
    if p.nrows() != y.len() {
        return Err(QpError::Dimension(format!("P has {} rows, y has {}", p.nrows(), y.len())));
    }
    if p.ncols() == 1 {
        return Ok(Array1::ones(1));
    }
    Ok(solve(&QpProblem::simplex(p, y))?.z)
}

struct Constraint {
    a: DVector<f64>,
    b: f64,
    equality: bool,
}

impl Constraint {
    fn residual(&self, x: &DVector<f64>) -> f64 {
        self.a.dot(x) - self.b
    }
}

struct ActiveSetState {
    x: DVector<f64>,
    working: Vec<usize>,
    multipliers: Vec<f64>,
    iterations: usize,
}

const ACTIVE_TOL: f64 = 1e-10;
const DUAL_TOL: f64 = 1e-10;

fn to_na(m: ArrayView2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[[i, j]])
}

fn scale_of(x: &DVector<f64>) -> f64 {
    1.0 + x.amax()
}

/// Minimum-norm least-squares solve of `m v = rhs` via SVD.
fn svd_solve(m: DMatrix<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    let n = m.nrows().max(m.ncols()) as f64;
    let svd = m.svd(true, true);
    let smax = svd.singular_values.max();
    let eps = (smax * n * 1e-13).max(1e-300);
    svd.solve(rhs, eps).expect("U and V were computed")
}

fn rank(rows: &[&DVector<f64>]) -> usize {
    if rows.is_empty() {
        return 0;
    }
    let d = rows[0].len();
    let m = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]);
    let sv = m.singular_values();
    let smax = sv.max();
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > smax * 1e-10).count()
}

/// Adds rows in index order while they stay linearly independent of the set.
fn independent_subset(rows: &[Constraint], candidates: impl Iterator<Item = usize>) -> Vec<usize> {
    let mut chosen: Vec<usize> = Vec::new();
    for i in candidates {
        let mut probe: Vec<&DVector<f64>> = chosen.iter().map(|&j| &rows[j].a).collect();
        probe.push(&rows[i].a);
        if rank(&probe) == chosen.len() + 1 {
            chosen.push(i);
        }
    }
    chosen
}

const PHASE1_PROX: f64 = 1e-10;

fn feasible_start(rows: &[Constraint], d: usize, max_iter: usize) -> Result<DVector<f64>, QpError> {
    let eq: Vec<&Constraint> = rows.iter().filter(|r| r.equality).collect();
    let mut z0 = DVector::zeros(d);
    if !eq.is_empty() {
        let e = DMatrix::from_fn(eq.len(), d, |i, j| eq[i].a[j]);
        let f = DVector::from_iterator(eq.len(), eq.iter().map(|r| r.b));
        z0 = svd_solve(e.clone(), &f);
        let resid = (e * &z0 - &f).amax();
        if resid > 1e-9 * (1.0 + f.amax()) {
            return Err(QpError::Infeasible { violation: resid });
        }
    }
    let worst = rows.iter().filter(|r| !r.equality).map(|r| -r.residual(&z0)).fold(0.0_f64, f64::max);
    if worst <= ACTIVE_TOL * scale_of(&z0) {
        return Ok(z0);
    }

    // phase 1 in (z, t)
    let mut ext: Vec<Constraint> = rows
        .iter()
        .map(|r| {
            let mut a = DVector::zeros(d + 1);
            a.rows_mut(0, d).copy_from(&r.a);
            if !r.equality {
                a[d] = 1.0;
            }
            Constraint { a, b: r.b, equality: r.equality }
        })
        .collect();
    let mut t_row = DVector::zeros(d + 1);
    t_row[d] = 1.0;
    ext.push(Constraint { a: t_row, b: 0.0, equality: false });
    // a tiny curvature in z keeps the KKT systems nonsingular; the min-norm
    // solve of the singular version can stall with t visibly above zero
    let mut q = DMatrix::from_diagonal_element(d + 1, d + 1, PHASE1_PROX);
    q[(d, d)] = 2.0;
    let c = DVector::zeros(d + 1);
    let mut x0 = DVector::zeros(d + 1);
    x0.rows_mut(0, d).copy_from(&z0);
    x0[d] = worst;
    let state = active_set(&q, &c, &ext, x0, max_iter)?;
    let t = state.x[d];
    let scale = 1.0 + rows.iter().map(|r| r.b.abs()).fold(0.0, f64::max);
    if t > 1e-9 * scale {
        return Err(QpError::Infeasible { violation: t });
    }
    Ok(state.x.rows(0, d).into_owned())
}

fn active_set(
    q: &DMatrix<f64>,
    c: &DVector<f64>,
    rows: &[Constraint],
    x0: DVector<f64>,
    max_iter: usize,
) -> Result<ActiveSetState, QpError> {
    let d = x0.len();
    let mut x = x0;
    let initial = {
        let eqs = rows.iter().enumerate().filter(|(_, r)| r.equality).map(|(i, _)| i);
        let tol = ACTIVE_TOL * scale_of(&x);
        let act = rows.iter().enumerate().filter(|(_, r)| !r.equality && r.residual(&x) <= tol).map(|(i, _)| i);
        independent_subset(rows, eqs.chain(act).collect::<Vec<_>>().into_iter())
    };
    let mut working = initial;
    // set after a full unblocked step: x is then the minimiser on the working set
    let mut at_subspace_min = false;

    for iter in 0..max_iter {
        let w = working.len();
        let mut kkt = DMatrix::zeros(d + w, d + w);
        kkt.view_mut((0, 0), (d, d)).copy_from(q);
        for (k, &i) in working.iter().enumerate() {
            for j in 0..d {
                kkt[(j, d + k)] = -rows[i].a[j];
                kkt[(d + k, j)] = rows[i].a[j];
            }
        }
        let grad = q * &x + c;
        let mut rhs = DVector::zeros(d + w);
        rhs.rows_mut(0, d).copy_from(&(-&grad));
        let sol = svd_solve(kkt, &rhs);
        let p = sol.rows(0, d).into_owned();
        let lambda: Vec<f64> = sol.rows(d, w).iter().copied().collect();

        if at_subspace_min || p.amax() <= 1e-12 * scale_of(&x) {
            at_subspace_min = false;
            // most negative inequality multiplier, lowest index on ties
            let mut drop: Option<(usize, f64)> = None;
            for (k, &i) in working.iter().enumerate() {
                if rows[i].equality {
                    continue;
                }
                let lam = lambda[k];
                if lam < -DUAL_TOL * (1.0 + grad.amax()) {
                    let better = match drop {
                        None => true,
                        Some((kb, lb)) => lam < lb || (lam == lb && i < working[kb]),
                    };
                    if better {
                        drop = Some((k, lam));
                    }
                }
            }
            match drop {
                None => return Ok(ActiveSetState { x, working, multipliers: lambda, iterations: iter + 1 }),
                Some((k, _)) => {
                    working.remove(k);
                    continue;
                }
            }
        }

        let mut step = 1.0;
        let mut blocking: Option<usize> = None;
        for (i, r) in rows.iter().enumerate() {
            if r.equality || working.contains(&i) {
                continue;
            }
            let ap = r.a.dot(&p);
            if ap < -1e-14 * r.a.amax() * p.amax() {
                let ratio = (-r.residual(&x)).min(0.0) / ap;
                if ratio < step {
                    step = ratio;
                    blocking = Some(i);
                }
            }
        }
        x += step * &p;
        match blocking {
            Some(i) => working.push(i),
            None => at_subspace_min = true,
        }
    }
    Err(QpError::IterationLimit { iterations: max_iter, best: Array1::from_iter(x.iter().copied()) })
}

fn kkt_report(
    q: &DMatrix<f64>,
    c: &DVector<f64>,
    rows: &[Constraint],
    x: &DVector<f64>,
    working: &[usize],
    multipliers: &[f64],
    iterations: usize,
) -> KktReport {
    let mut resid = q * x + c;
    let mut complementarity = 0.0_f64;
    let mut dual_violation = 0.0_f64;
    for (&i, &m) in working.iter().zip(multipliers) {
        resid -= m * &rows[i].a;
        if !rows[i].equality {
            complementarity = complementarity.max((m * rows[i].residual(x)).abs());
            dual_violation = dual_violation.max(-m);
        }
    }
    let primal_violation = rows
        .iter()
        .map(|r| {
            let s = r.residual(x);
            if r.equality {
                s.abs()
            } else {
                (-s).max(0.0)
            }
        })
        .fold(0.0, f64::max);
    KktReport { stationarity: resid.amax(), primal_violation, complementarity, dual_violation, iterations }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::{prop_assert, proptest};

    fn assert_kkt(sol: &QpSolution) {
        assert!(sol.kkt.max_residual() < 1e-6, "{:?}", sol.kkt);
    }

    #[test]
    fn feasible_unconstrained_optimum_is_returned() {
        let p = QpProblem::simplex(Array2::eye(2).view(), array![0.3, 0.7].view());
        let sol = solve(&p).unwrap();
        assert!((sol.z[0] - 0.3).abs() < 1e-12 && (sol.z[1] - 0.7).abs() < 1e-12);
        assert_kkt(&sol);
    }

    #[test]
    fn projection_onto_simplex_vertex() {
        let p = QpProblem::simplex(Array2::eye(2).view(), array![-1.0, 2.0].view());
        let sol = solve(&p).unwrap();
        // grid over the 1-simplex at step 1e-4
        let (mut best, mut arg) = (f64::INFINITY, 0.0);
        for k in 0..=10_000 {
            let w = k as f64 * 1e-4;
            let v = p.objective(array![w, 1.0 - w].view());
            if v < best {
                best = v;
                arg = w;
            }
        }
        assert!((sol.z[0] - arg).abs() < 1e-4);
        assert!((sol.z[0] - 0.0).abs() < 1e-12 && (sol.z[1] - 1.0).abs() < 1e-12);
        assert_kkt(&sol);
    }

    #[test]
    fn box_constrained_3d_matches_grid() {
        let a = array![[1.0, 0.2, -0.3], [0.1, 1.5, 0.4], [-0.2, 0.3, 0.9], [0.5, -0.4, 0.2]];
        let b = array![1.4, -0.6, 0.9, 0.7];
        // 0 ≤ z ≤ 1
        let mut g = Array2::zeros((6, 3));
        let mut h = Array1::zeros(6);
        for i in 0..3 {
            g[[i, i]] = 1.0;
            g[[3 + i, i]] = -1.0;
            h[3 + i] = -1.0;
        }
        let p = QpProblem::least_squares(a, b).with_inequalities(g, h);
        let sol = solve(&p).unwrap();
        assert_kkt(&sol);
        let grid = refine_grid(&p, [0.0; 3], [1.0; 3]);
        for i in 0..3 {
            assert!((sol.z[i] - grid[i]).abs() < 1e-3, "{} vs {:?}", sol.z, grid);
        }
        assert!(sol.objective <= p.objective(Array1::from(grid.to_vec()).view()) + 1e-12);
    }

    // coarse grid at 0.01, then two local refinements down to 1e-4
    fn refine_grid(p: &QpProblem, lo: [f64; 3], hi: [f64; 3]) -> [f64; 3] {
        let mut best = ([0.0; 3], f64::INFINITY);
        let mut lo = lo;
        let mut hi = hi;
        for step in [1e-2, 1e-3, 1e-4] {
            let n: Vec<usize> = (0..3).map(|i| ((hi[i] - lo[i]) / step).round() as usize).collect();
            for i in 0..=n[0] {
                for j in 0..=n[1] {
                    for k in 0..=n[2] {
                        let z = [lo[0] + i as f64 * step, lo[1] + j as f64 * step, lo[2] + k as f64 * step];
                        let v = p.objective(Array1::from(z.to_vec()).view());
                        if v < best.1 {
                            best = (z, v);
                        }
                    }
                }
            }
            for i in 0..3 {
                lo[i] = (best.0[i] - 10.0 * step).max(0.0);
                hi[i] = (best.0[i] + 10.0 * step).min(1.0);
            }
        }
        best.0
    }

    #[test]
    fn single_column_simplex_is_one() {
        let w = solve_simplex_ls(array![[1.0], [2.0]].view(), array![5.0, 6.0].view()).unwrap();
        assert_eq!(w, array![1.0]);
    }

    #[test]
    fn exact_matching_column_gets_all_weight() {
        let y = array![1.0, -2.0, 0.5, 3.0, -1.0, 0.0];
        let p = array![
            [0.3, 1.0, -0.2],
            [-0.1, -2.0, 0.4],
            [0.2, 0.5, 0.1],
            [0.0, 3.0, -0.3],
            [0.4, -1.0, 0.2],
            [-0.2, 0.0, 0.0]
        ];
        let w = solve_simplex_ls(p.view(), y.view()).unwrap();
        // grid over the 2-simplex at step 1e-3
        let prob = QpProblem::simplex(p.view(), y.view());
        let mut best = (f64::INFINITY, [0.0; 3]);
        for i in 0..=1000 {
            for j in 0..=(1000 - i) {
                let z = [i as f64 * 1e-3, j as f64 * 1e-3, (1000 - i - j) as f64 * 1e-3];
                let v = prob.objective(Array1::from(z.to_vec()).view());
                if v < best.0 {
                    best = (v, z);
                }
            }
        }
        assert_eq!(best.1, [0.0, 1.0, 0.0]);
        assert!((w[1] - 1.0).abs() < 1e-9, "{w}");
    }

    #[test]
    fn duplicated_columns_reach_single_column_objective() {
        let y = array![1.0, 2.0, 3.0, 4.0];
        let col = array![1.1, 1.9, 3.2, 3.8];
        let other = array![0.0, 5.0, -1.0, 2.0];
        let mut p = Array2::zeros((4, 3));
        p.column_mut(0).assign(&col);
        p.column_mut(1).assign(&col);
        p.column_mut(2).assign(&other);
        let w = solve_simplex_ls(p.view(), y.view()).unwrap();
        assert!(w.iter().all(|&v| v >= -1e-12) && (w.sum() - 1.0).abs() < 1e-10);
        let pooled = w[0] + w[1];
        let single = QpProblem::simplex(ndarray::stack![ndarray::Axis(1), col.view(), other.view()].view(), y.view());
        let s = solve(&single).unwrap();
        let obj = QpProblem::simplex(p.view(), y.view()).objective(w.view());
        assert!((obj - s.objective).abs() < 1e-10);
        assert!((pooled - s.z[0]).abs() < 1e-8);
    }

    #[test]
    fn feasible_band_with_spline_scaled_rows() {
        // importance-weight constraints from a strongly shifted source; the
        // constant function (first coordinate 1) is feasible
        let agg = [
            [
                1.0,
                -5.0094426682953275,
                0.014432039007228135,
                0.000653154131114678,
                4.7642100328252446e-7,
                0.0,
                0.0,
                0.0,
                0.0,
                0.0,
                0.0,
                0.0,
            ],
            [
                1.0,
                -4.065554042969524,
                0.20805401378057922,
                0.0558777502321445,
                0.015303463669815394,
                0.002758064908840539,
                0.00034821495164978806,
                5.077205991309916e-6,
                0.0,
                0.0,
                0.0,
                0.0,
            ],
            [
                1.0,
                -3.4507121179118108,
                0.7120522690510407,
                0.31081563508158366,
                0.15262963530376641,
                0.06828839338140814,
                0.03158592451104372,
                0.012428455000373926,
                0.0031110052114707008,
                0.0009053703520861776,
                2.2124006024602638e-5,
                0.0,
            ],
            [
                1.0,
                -2.5152303276404617,
                2.518859577737827,
                1.4963611795480907,
                0.9971788703681618,
                0.6592579047664331,
                0.4625926988663673,
                0.3163818572550808,
                0.1945677950860712,
                0.1351741764881154,
                0.06511365307588775,
                0.02740949003367391,
            ],
            [
                1.0,
                -3.760234789204281,
                0.8633494748941688,
                0.46592692974823335,
                0.2912781114406867,
                0.18257609076417045,
                0.1236317095822652,
                0.0822038473653615,
                0.049419700074385474,
                0.03401988671005039,
                0.016283944270478086,
                0.006852372508418477,
            ],
        ];
        let mut g = Array2::zeros((6, 12));
        for (i, r) in agg.iter().enumerate() {
            for j in 0..12 {
                g[[i, j]] = r[j];
            }
        }
        let band = g.row(4).to_owned();
        g.row_mut(5).assign(&(-&band));
        let h = array![0.0, 0.0, 0.0, 0.0, 0.95, -1.05];
        let design = Array2::from_shape_fn((4, 12), |(i, j)| agg[i][j]);
        let p = QpProblem::least_squares(design, array![2.0, 1.0, 0.5, 0.1])
            .with_inequalities(g.clone(), h.clone())
            .with_ridge(1e-8);
        let sol = solve(&p).unwrap();
        let slack = g.dot(&sol.z) - &h;
        assert!(slack.iter().all(|&v| v > -1e-8), "{slack}");
    }

    #[test]
    fn infeasible_constraints_are_reported() {
        // z ≥ 1 and -z ≥ 0 (z ≤ 0)
        let p = QpProblem::least_squares(array![[1.0]], array![0.0])
            .with_inequalities(array![[1.0], [-1.0]], array![1.0, 0.0]);
        assert!(matches!(solve(&p), Err(QpError::Infeasible { .. })));
        // inconsistent equalities
        let p = QpProblem::least_squares(Array2::eye(2), array![0.0, 0.0])
            .with_equalities(array![[1.0, 1.0], [1.0, 1.0]], array![1.0, 2.0]);
        assert!(matches!(solve(&p), Err(QpError::Infeasible { .. })));
    }

    #[test]
    fn dimension_checks() {
        let p = QpProblem::least_squares(Array2::zeros((2, 70)), Array1::zeros(2));
        assert!(matches!(solve(&p), Err(QpError::TooLarge { dim: 70, cap: 64 })));
        let p = QpProblem::least_squares(Array2::eye(2), Array1::zeros(3));
        assert!(matches!(solve(&p), Err(QpError::Dimension(_))));
    }

    #[test]
    fn underdetermined_with_ridge_is_min_norm() {
        // one row, three unknowns, tiny ridge → min-norm interpolant
        let a = array![[1.0, 1.0, 1.0]];
        let b = array![3.0];
        let sol = solve(&QpProblem::least_squares(a, b).with_ridge(1e-8)).unwrap();
        for v in sol.z.iter() {
            assert!((v - 1.0).abs() < 1e-6);
        }
        assert_kkt(&sol);
    }

    #[test]
    fn deterministic() {
        let p = QpProblem::simplex(
            array![[1.0, 2.0, 0.5], [0.0, 1.0, 1.0], [2.0, 0.0, 1.0]].view(),
            array![1.0, 0.5, 1.5].view(),
        );
        let a = solve(&p).unwrap();
        let b = solve(&p).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn iteration_cap_returns_best_iterate() {
        let p = QpProblem::simplex(Array2::eye(3).view(), array![-1.0, -2.0, 5.0].view());
        let err = solve_with(&p, SolverOptions { max_iter: Some(1), ..Default::default() }).unwrap_err();
        match err {
            QpError::IterationLimit { best, .. } => assert_eq!(best.len(), 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn simplex_fit_is_feasible_and_beats_every_vertex(
            vals in proptest::collection::vec(-3.0f64..3.0, 24),
            k in 1usize..5,
        ) {
            let n = 24 / (k + 1);
            let p = Array2::from_shape_fn((n, k), |(i, j)| vals[i * k + j]);
            let y = Array1::from_shape_fn(n, |i| vals[(n * k + i) % 24]);
            let w = solve_simplex_ls(p.view(), y.view()).unwrap();
            prop_assert!(w.iter().all(|&v| v >= -1e-10));
            prop_assert!((w.sum() - 1.0).abs() < 1e-10);
            let obj = |z: &Array1<f64>| (p.dot(z) - &y).mapv(|r| r * r).sum();
            for j in 0..k {
                let mut e = Array1::zeros(k);
                e[j] = 1.0;
                prop_assert!(obj(&w) <= obj(&e) + 1e-9);
            }
            prop_assert!(obj(&w) <= obj(&Array1::from_elem(k, 1.0 / k as f64)) + 1e-9);
        }
    }
}
