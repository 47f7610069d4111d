//! Dense bounded-variable simplex with a two-phase start.
//!
//! The solver targets desk-scale problems (tens of variables and rows), so
//! the basis inverse is kept as an explicit dense matrix, updated on each
//! pivot and refactorized periodically. Variables may carry any mix of
//! finite and infinite bounds; rows are `<=`, `=` or `>=` against a scalar.
//!
//! Termination is safeguarded: Dantzig pricing switches to Bland's rule
//! after a run of degenerate pivots, which guarantees finiteness.

use thiserror::Error;

const TOL_REDUCED: f64 = 1e-9;
const TOL_FEAS: f64 = 1e-9;
const TOL_PIVOT: f64 = 1e-10;
const REFACTOR_EVERY: usize = 100;
const DEGENERATE_LIMIT: usize = 60;

#[derive(Debug, Error)]
pub enum LpError {
    #[error("row {row} has {got} coefficients, expected {expected}")]
    RowDimension {
        row: usize,
        got: usize,
        expected: usize,
    },
    #[error("variable {var} has empty bound interval [{lower}, {upper}]")]
    EmptyBounds { var: usize, lower: f64, upper: f64 },
    #[error("iteration limit reached after {0} pivots")]
    IterationLimit(usize),
    #[error("singular basis during refactorization")]
    SingularBasis,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// A dense linear program over bounded variables.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub maximize: bool,
    pub objective: Vec<f64>,
    pub rows: Vec<(Vec<f64>, Relation, f64)>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LinearProgram {
    /// A program with all variables free and no rows; callers fill in.
    pub fn new(maximize: bool, n: usize) -> Self {
        Self {
            maximize,
            objective: vec![0.0; n],
            rows: Vec::new(),
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        }
    }
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Structural variable values (original ordering).
    pub x: Vec<f64>,
    /// Objective in the requested sense.
    pub objective: f64,
    /// Row duals in the internal minimization convention.
    pub row_duals: Vec<f64>,
    /// |primal objective − dual objective| certificate residual.
    pub gap: f64,
    /// Largest row residual / bound violation of the returned point.
    pub primal_infeasibility: f64,
    /// Largest reduced-cost sign violation at the returned basis.
    pub dual_infeasibility: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum VarState {
    Basic(usize),
    AtLower,
    AtUpper,
    /// Nonbasic free variable pinned at zero until it enters.
    FreeZero,
}

struct Worker {
    n_struct: usize,
    n_total: usize,
    m: usize,
    /// Column-major constraint matrix over all variables.
    cols: Vec<Vec<f64>>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    rhs: Vec<f64>,
    cost: Vec<f64>,
    basis: Vec<usize>,
    state: Vec<VarState>,
    x: Vec<f64>,
    binv: Vec<f64>,
    iterations: usize,
    pivots_since_refactor: usize,
    degenerate_run: usize,
    bland: bool,
}

/// Solves the program; minimization is the internal convention.
pub fn solve(prob: &LinearProgram) -> Result<LpSolution, LpError> {
    let n = prob.objective.len();
    let m = prob.rows.len();
    for (i, (coeffs, _, _)) in prob.rows.iter().enumerate() {
        if coeffs.len() != n {
            return Err(LpError::RowDimension {
                row: i,
                got: coeffs.len(),
                expected: n,
            });
        }
    }
    for j in 0..n {
        if prob.lower[j] > prob.upper[j] {
            return Err(LpError::EmptyBounds {
                var: j,
                lower: prob.lower[j],
                upper: prob.upper[j],
            });
        }
    }

    // Layout: structural vars, then one slack per row, then artificials as
    // needed for rows whose slack-basis start violates the slack bounds.
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(n + m);
    for j in 0..n {
        cols.push(prob.rows.iter().map(|(c, _, _)| c[j]).collect());
    }
    let mut lower = prob.lower.clone();
    let mut upper = prob.upper.clone();
    for (i, (_, rel, _)) in prob.rows.iter().enumerate() {
        let mut col = vec![0.0; m];
        col[i] = 1.0;
        cols.push(col);
        match rel {
            Relation::Le => {
                lower.push(0.0);
                upper.push(f64::INFINITY);
            }
            Relation::Eq => {
                lower.push(0.0);
                upper.push(0.0);
            }
            Relation::Ge => {
                lower.push(f64::NEG_INFINITY);
                upper.push(0.0);
            }
        }
    }
    let rhs: Vec<f64> = prob.rows.iter().map(|(_, _, b)| *b).collect();

    let mut w = Worker {
        n_struct: n,
        n_total: n + m,
        m,
        cols,
        lower,
        upper,
        rhs,
        cost: vec![0.0; n + m],
        basis: vec![0; m],
        state: Vec::new(),
        x: vec![0.0; n + m],
        binv: identity(m),
        iterations: 0,
        pivots_since_refactor: 0,
        degenerate_run: 0,
        bland: false,
    };

    // Nonbasic start for structural vars: the finite bound nearest zero.
    w.state = (0..w.n_total).map(|_| VarState::AtLower).collect();
    for j in 0..n {
        let (l, u) = (w.lower[j], w.upper[j]);
        w.state[j] = if l.is_finite() {
            w.x[j] = l;
            VarState::AtLower
        } else if u.is_finite() {
            w.x[j] = u;
            VarState::AtUpper
        } else {
            w.x[j] = 0.0;
            VarState::FreeZero
        };
    }

    // Slack basis with artificials where the slack start is out of bounds.
    let mut artificial_of_row: Vec<Option<usize>> = vec![None; m];
    let mut needs_phase1 = false;
    for i in 0..m {
        let s = n + i;
        let act: f64 = (0..n).map(|j| w.cols[j][i] * w.x[j]).sum();
        let slack_value = w.rhs[i] - act;
        if slack_value >= w.lower[s] - TOL_FEAS && slack_value <= w.upper[s] + TOL_FEAS {
            w.basis[i] = s;
            w.state[s] = VarState::Basic(i);
            w.x[s] = slack_value;
        } else {
            let pinned = slack_value.clamp(w.lower[s], w.upper[s]);
            w.state[s] = if pinned == w.lower[s] {
                VarState::AtLower
            } else {
                VarState::AtUpper
            };
            w.x[s] = pinned;
            let residual = slack_value - pinned;
            let t = w.n_total;
            let mut col = vec![0.0; m];
            col[i] = residual.signum();
            w.cols.push(col);
            w.lower.push(0.0);
            w.upper.push(f64::INFINITY);
            w.cost.push(0.0);
            w.x.push(residual.abs());
            w.state.push(VarState::Basic(i));
            w.basis[i] = t;
            w.n_total += 1;
            artificial_of_row[i] = Some(t);
            needs_phase1 = true;
        }
    }

    if needs_phase1 {
        for t in artificial_of_row.iter().flatten() {
            w.cost[*t] = 1.0;
        }
        let status = w.run()?;
        let infeas: f64 = artificial_of_row
            .iter()
            .flatten()
            .map(|&t| w.x[t].max(0.0))
            .sum();
        if status != LpStatus::Optimal || infeas > 1e-7 {
            return Ok(w.finish(prob, LpStatus::Infeasible));
        }
        // Pin artificials to zero so phase 2 cannot revive them; basic
        // zero-level artificials are pivoted out where a usable pivot
        // element exists, otherwise their row is redundant and the fixed
        // artificial simply rides along.
        for &t in artificial_of_row.iter().flatten() {
            w.lower[t] = 0.0;
            w.upper[t] = 0.0;
        }
        for i in 0..m {
            if artificial_of_row[i] == Some(w.basis[i]) {
                w.try_pivot_out_of_row(i, &artificial_of_row);
            }
        }
        for c in w.cost.iter_mut() {
            *c = 0.0;
        }
    }

    // Phase 2.
    let sign = if prob.maximize { -1.0 } else { 1.0 };
    for j in 0..n {
        w.cost[j] = sign * prob.objective[j];
    }
    w.bland = false;
    w.degenerate_run = 0;
    let status = w.run()?;
    Ok(w.finish(prob, status))
}

fn identity(m: usize) -> Vec<f64> {
    let mut e = vec![0.0; m * m];
    for i in 0..m {
        e[i * m + i] = 1.0;
    }
    e
}

impl Worker {
    fn run(&mut self) -> Result<LpStatus, LpError> {
        let limit = 200 * (self.n_total + self.m) + 2000;
        loop {
            if self.iterations > limit {
                return Err(LpError::IterationLimit(self.iterations));
            }
            self.iterations += 1;

            // Duals and pricing.
            let y = self.duals();
            let entering = self.price(&y);
            let Some((q, dir)) = entering else {
                return Ok(LpStatus::Optimal);
            };

            // Direction through the basis.
            let wcol = self.ftran(q);

            // Ratio test: basic bounds plus the entering variable's own span.
            let mut limit_step = self.upper[q] - self.lower[q]; // may be inf
            let mut leaving: Option<(usize, bool)> = None; // (row, hits_lower)
            let mut best_pivot = 0.0f64;
            for i in 0..self.m {
                let coef = dir * wcol[i];
                if coef > TOL_PIVOT {
                    let room = self.x[self.basis[i]] - self.lower[self.basis[i]];
                    let step = room.max(0.0) / coef;
                    if step < limit_step - 1e-12
                        || (step < limit_step + 1e-12
                            && leaving.is_some()
                            && coef.abs() > best_pivot)
                    {
                        limit_step = step;
                        leaving = Some((i, true));
                        best_pivot = coef.abs();
                    }
                } else if coef < -TOL_PIVOT {
                    let room = self.upper[self.basis[i]] - self.x[self.basis[i]];
                    let step = room.max(0.0) / (-coef);
                    if step < limit_step - 1e-12
                        || (step < limit_step + 1e-12
                            && leaving.is_some()
                            && coef.abs() > best_pivot)
                    {
                        limit_step = step;
                        leaving = Some((i, false));
                        best_pivot = coef.abs();
                    }
                }
            }

            if limit_step.is_infinite() {
                return Ok(LpStatus::Unbounded);
            }
            if limit_step <= TOL_FEAS {
                self.degenerate_run += 1;
                if self.degenerate_run > DEGENERATE_LIMIT {
                    self.bland = true;
                }
            } else {
                self.degenerate_run = 0;
            }

            // Apply the step to the basic values.
            for i in 0..self.m {
                let v = self.basis[i];
                self.x[v] -= dir * limit_step * wcol[i];
            }
            self.x[q] += dir * limit_step;

            match leaving {
                None => {
                    // Bound flip: the entering variable crossed to its other
                    // bound; the basis is unchanged.
                    self.state[q] = match self.state[q] {
                        VarState::AtLower => VarState::AtUpper,
                        VarState::AtUpper => VarState::AtLower,
                        other => other,
                    };
                }
                Some((row, hits_lower)) => {
                    let out = self.basis[row];
                    self.x[out] = if hits_lower {
                        self.lower[out]
                    } else {
                        self.upper[out]
                    };
                    self.state[out] = if hits_lower {
                        VarState::AtLower
                    } else {
                        VarState::AtUpper
                    };
                    self.basis[row] = q;
                    self.state[q] = VarState::Basic(row);
                    self.update_binv(row, &wcol);
                    self.pivots_since_refactor += 1;
                    if self.pivots_since_refactor >= REFACTOR_EVERY {
                        self.refactorize()?;
                    }
                }
            }
        }
    }

    fn duals(&self) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for i in 0..m {
            let cb = self.cost[self.basis[i]];
            if cb != 0.0 {
                for j in 0..m {
                    y[j] += cb * self.binv[i * m + j];
                }
            }
        }
        y
    }

    fn reduced_cost(&self, j: usize, y: &[f64]) -> f64 {
        self.cost[j] - dot(y, &self.cols[j])
    }

    /// Chooses the entering variable and its movement direction (+1/-1).
    fn price(&self, y: &[f64]) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64, f64)> = None; // (var, dir, score)
        for j in 0..self.n_total {
            match self.state[j] {
                VarState::Basic(_) => continue,
                _ => {
                    if self.lower[j] == self.upper[j] {
                        continue; // fixed
                    }
                }
            }
            let d = self.reduced_cost(j, y);
            let (dir, score) = match self.state[j] {
                VarState::AtLower if d < -TOL_REDUCED => (1.0, -d),
                VarState::AtUpper if d > TOL_REDUCED => (-1.0, d),
                VarState::FreeZero if d.abs() > TOL_REDUCED => (-d.signum(), d.abs()),
                _ => continue,
            };
            if self.bland {
                return Some((j, dir));
            }
            if best.map_or(true, |(_, _, s)| score > s) {
                best = Some((j, dir, score));
            }
        }
        best.map(|(j, dir, _)| (j, dir))
    }

    fn ftran(&self, q: usize) -> Vec<f64> {
        let m = self.m;
        let mut w = vec![0.0; m];
        let col = &self.cols[q];
        for i in 0..m {
            let mut acc = 0.0;
            for j in 0..m {
                acc += self.binv[i * m + j] * col[j];
            }
            w[i] = acc;
        }
        w
    }

    fn update_binv(&mut self, row: usize, wcol: &[f64]) {
        let m = self.m;
        let pivot = wcol[row];
        for j in 0..m {
            self.binv[row * m + j] /= pivot;
        }
        for i in 0..m {
            if i != row {
                let f = wcol[i];
                if f != 0.0 {
                    for j in 0..m {
                        self.binv[i * m + j] -= f * self.binv[row * m + j];
                    }
                }
            }
        }
    }

    /// Rebuilds the basis inverse by Gauss-Jordan and recomputes the basic
    /// values from the nonbasic ones.
    fn refactorize(&mut self) -> Result<(), LpError> {
        let m = self.m;
        let mut a = vec![0.0; m * m];
        for (i, &v) in self.basis.iter().enumerate() {
            for r in 0..m {
                a[r * m + i] = self.cols[v][r];
            }
        }
        let mut inv = identity(m);
        for col in 0..m {
            let (mut piv_row, mut piv_val) = (col, 0.0f64);
            for r in col..m {
                if a[r * m + col].abs() > piv_val {
                    piv_val = a[r * m + col].abs();
                    piv_row = r;
                }
            }
            if piv_val < 1e-12 {
                return Err(LpError::SingularBasis);
            }
            if piv_row != col {
                for j in 0..m {
                    a.swap(col * m + j, piv_row * m + j);
                    inv.swap(col * m + j, piv_row * m + j);
                }
            }
            let p = a[col * m + col];
            for j in 0..m {
                a[col * m + j] /= p;
                inv[col * m + j] /= p;
            }
            for r in 0..m {
                if r != col {
                    let f = a[r * m + col];
                    if f != 0.0 {
                        for j in 0..m {
                            a[r * m + j] -= f * a[col * m + j];
                            inv[r * m + j] -= f * inv[col * m + j];
                        }
                    }
                }
            }
        }
        // inv now holds (P*A)^-1 pieces composed; since we eliminated in
        // place starting from the identity, inv = A^-1 with the row swaps
        // already folded in.
        self.binv = inv;
        self.pivots_since_refactor = 0;
        // Recompute basic values from scratch.
        let mut resid = self.rhs.clone();
        for j in 0..self.n_total {
            if !matches!(self.state[j], VarState::Basic(_)) && self.x[j] != 0.0 {
                for r in 0..m {
                    resid[r] -= self.cols[j][r] * self.x[j];
                }
            }
        }
        for i in 0..m {
            let mut acc = 0.0;
            for j in 0..m {
                acc += self.binv[i * m + j] * resid[j];
            }
            self.x[self.basis[i]] = acc;
        }
        Ok(())
    }

    /// Pivots the (zero-valued) basic variable of `row` out in favor of any
    /// non-artificial nonbasic column with a usable pivot element.
    fn try_pivot_out_of_row(&mut self, row: usize, artificials: &[Option<usize>]) {
        let m = self.m;
        for j in 0..self.n_struct + self.m {
            if matches!(self.state[j], VarState::Basic(_)) {
                continue;
            }
            if artificials.iter().any(|a| *a == Some(j)) {
                continue;
            }
            let mut piv = 0.0;
            for r in 0..m {
                piv += self.binv[row * m + r] * self.cols[j][r];
            }
            if piv.abs() > 1e-7 {
                let wcol = self.ftran(j);
                let out = self.basis[row];
                self.x[out] = 0.0;
                self.state[out] = VarState::AtLower;
                self.basis[row] = j;
                self.state[j] = VarState::Basic(row);
                self.update_binv(row, &wcol);
                return;
            }
        }
    }

    fn finish(&mut self, prob: &LinearProgram, status: LpStatus) -> LpSolution {
        let n = self.n_struct;
        let m = self.m;
        let x: Vec<f64> = self.x[..n].to_vec();
        let objective: f64 = prob
            .objective
            .iter()
            .zip(x.iter())
            .map(|(c, v)| c * v)
            .sum();

        let y = self.duals();
        // Certificate residual: at a basic optimum, cost·x equals
        // y·b + Σ_nonbasic d_j x_j exactly in real arithmetic.
        let mut dual_obj = dot(&y, &self.rhs);
        let mut dual_infeas = 0.0f64;
        for j in 0..self.n_total {
            if matches!(self.state[j], VarState::Basic(_)) {
                continue;
            }
            let d = self.reduced_cost(j, &y);
            dual_obj += d * self.x[j];
            if self.lower[j] != self.upper[j] {
                let viol = match self.state[j] {
                    VarState::AtLower => (-d).max(0.0),
                    VarState::AtUpper => d.max(0.0),
                    VarState::FreeZero => d.abs(),
                    VarState::Basic(_) => 0.0,
                };
                dual_infeas = dual_infeas.max(viol);
            }
        }
        let internal_obj: f64 = (0..self.n_total).map(|j| self.cost[j] * self.x[j]).sum();
        let gap = (internal_obj - dual_obj).abs();

        let mut primal_infeas = 0.0f64;
        for i in 0..m {
            let act: f64 = (0..self.n_total).map(|j| self.cols[j][i] * self.x[j]).sum();
            primal_infeas = primal_infeas.max((act - self.rhs[i]).abs());
        }
        for j in 0..self.n_total {
            if self.lower[j].is_finite() {
                primal_infeas = primal_infeas.max(self.lower[j] - self.x[j]);
            }
            if self.upper[j].is_finite() {
                primal_infeas = primal_infeas.max(self.x[j] - self.upper[j]);
            }
        }

        LpSolution {
            status,
            x,
            objective,
            row_duals: y,
            gap,
            primal_infeasibility: primal_infeas,
            dual_infeasibility: if status == LpStatus::Optimal {
                dual_infeas
            } else {
                f64::NAN
            },
            iterations: self.iterations,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}
