//! Embedded primal-dual interior-point solver for block-diagonal SDPs.
//!
//! Solves `min ⟨C,X⟩ s.t. ⟨A_i,X⟩ = b_i, X ⪰ 0` together with its dual
//! `max b·y s.t. Z = C − Σ y_i A_i ⪰ 0`, using Nesterov-Todd scaling and a
//! Mehrotra-style adaptive centering parameter (affine probe, centering
//! recompute, shared Schur factorization). The blocks here are small dense
//! moment matrices, so every per-block operation (eigendecomposition via
//! cyclic Jacobi, Cholesky, products) is done densely.

use super::{DenseSym, SdpError, SdpProblem, SparseFunctional};

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    /// Target for relative gap and scaled residuals.
    pub tol: f64,
    pub max_iter: usize,
    /// Fraction of the step to the cone boundary actually taken.
    pub step_frac: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 200,
            step_frac: 0.98,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdpStatus {
    /// Converged to the requested tolerance.
    Optimal,
    /// Progress stalled; the reported residuals are the best achieved.
    SlowProgress,
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub status: SdpStatus,
    /// Primal blocks (the PSD matrix variables).
    pub blocks: Vec<DenseSym>,
    /// Dual multipliers of the equality constraints (internal minimization
    /// sign convention).
    pub y: Vec<f64>,
    /// Objective in the problem's stated sense.
    pub objective: f64,
    pub dual_objective: f64,
    /// Relative duality gap ⟨X,Z⟩ / (1 + |pobj| + |dobj|).
    pub rel_gap: f64,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub iterations: usize,
}

/// Sparse symmetric constraint matrix, stored per block with matrix-entry
/// values (off-diagonal functional coefficients are halved so that
/// `⟨A, X⟩ = functional(X)`).
struct ConstraintMat {
    blocks: Vec<BlockTerms>,
}

struct BlockTerms {
    block: usize,
    /// (row, col, value) with row ≤ col.
    entries: Vec<(usize, usize, f64)>,
    /// Distinct row/col indices touched.
    touched: Vec<usize>,
}

fn build_matrix(f: &SparseFunctional) -> ConstraintMat {
    let mut by_block: std::collections::BTreeMap<usize, Vec<(usize, usize, f64)>> =
        std::collections::BTreeMap::new();
    for t in &f.0 {
        let val = if t.row == t.col {
            t.coeff
        } else {
            t.coeff / 2.0
        };
        by_block.entry(t.block).or_default().push((t.row, t.col, val));
    }
    ConstraintMat {
        blocks: by_block
            .into_iter()
            .map(|(block, entries)| {
                let mut touched: Vec<usize> = entries
                    .iter()
                    .flat_map(|&(i, j, _)| [i, j])
                    .collect();
                touched.sort_unstable();
                touched.dedup();
                BlockTerms {
                    block,
                    entries,
                    touched,
                }
            })
            .collect(),
    }
}

fn inner_block(terms: &BlockTerms, s: &DenseSym) -> f64 {
    terms
        .entries
        .iter()
        .map(|&(i, j, v)| {
            if i == j {
                v * s.get(i, i)
            } else {
                2.0 * v * s.get(i, j)
            }
        })
        .sum()
}

fn inner(a: &ConstraintMat, blocks: &[DenseSym]) -> f64 {
    a.blocks
        .iter()
        .map(|bt| inner_block(bt, &blocks[bt.block]))
        .sum()
}

/// Adds `factor * A` into dense symmetric block storage.
fn axpy_into(a: &ConstraintMat, factor: f64, out: &mut [DenseSym]) {
    for bt in &a.blocks {
        let m = &mut out[bt.block];
        for &(i, j, v) in &bt.entries {
            if i == j {
                m.data[i * m.dim + i] += factor * v;
            } else {
                m.data[i * m.dim + j] += factor * v;
                m.data[j * m.dim + i] += factor * v;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Dense symmetric linear algebra
// ---------------------------------------------------------------------------

/// Cyclic Jacobi eigendecomposition of a symmetric matrix:
/// `a = q^T · diag(vals) · q` with the eigenvectors in the ROWS of `q`.
fn sym_eig(a: &DenseSym) -> (Vec<f64>, DenseSym) {
    let n = a.dim;
    let mut m = a.clone();
    let mut q = DenseSym::identity(n, 1.0);
    if n == 1 {
        return (vec![m.data[0]], q);
    }
    for _sweep in 0..64 {
        let mut off = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                off += m.get(i, j) * m.get(i, j);
            }
        }
        let scale: f64 = m.data.iter().map(|v| v * v).sum::<f64>().max(1e-300);
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for r in (p + 1)..n {
                let apq = m.get(p, r);
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = m.get(p, p);
                let aqq = m.get(r, r);
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // Rotate rows/cols p and r of m.
                for k in 0..n {
                    let mkp = m.get(k, p);
                    let mkr = m.get(k, r);
                    m.data[k * n + p] = c * mkp - s * mkr;
                    m.data[k * n + r] = s * mkp + c * mkr;
                }
                for k in 0..n {
                    let mpk = m.get(p, k);
                    let mrk = m.get(r, k);
                    m.data[p * n + k] = c * mpk - s * mrk;
                    m.data[r * n + k] = s * mpk + c * mrk;
                }
                for k in 0..n {
                    let qpk = q.get(p, k);
                    let qrk = q.get(r, k);
                    q.data[p * n + k] = c * qpk - s * qrk;
                    q.data[r * n + k] = s * qpk + c * qrk;
                }
            }
        }
    }
    let vals = (0..n).map(|i| m.get(i, i)).collect();
    (vals, q)
}

/// Builds `q^T · diag(f(vals)) · q` from a Jacobi factorization.
fn from_eig(vals: &[f64], q: &DenseSym, f: impl Fn(f64) -> f64) -> DenseSym {
    let n = q.dim;
    let mut out = DenseSym::zeros(n);
    for (idx, &v) in vals.iter().enumerate() {
        let fv = f(v);
        if fv == 0.0 {
            continue;
        }
        for i in 0..n {
            let qi = q.get(idx, i);
            if qi == 0.0 {
                continue;
            }
            for j in i..n {
                out.data[i * n + j] += fv * qi * q.get(idx, j);
            }
        }
    }
    for i in 0..n {
        for j in 0..i {
            out.data[i * n + j] = out.data[j * n + i];
        }
    }
    out
}

fn mat_mul(a: &DenseSym, b: &DenseSym) -> DenseSym {
    let n = a.dim;
    let mut c = DenseSym::zeros(n);
    for i in 0..n {
        for k in 0..n {
            let aik = a.get(i, k);
            if aik == 0.0 {
                continue;
            }
            let brow = &b.data[k * n..(k + 1) * n];
            let crow = &mut c.data[i * n..(i + 1) * n];
            for j in 0..n {
                crow[j] += aik * brow[j];
            }
        }
    }
    c
}

fn symmetrize(m: &mut DenseSym) {
    let n = m.dim;
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m.get(i, j) + m.get(j, i));
            m.data[i * n + j] = v;
            m.data[j * n + i] = v;
        }
    }
}

/// Lower-triangular Cholesky factor; `None` if not numerically PD.
fn cholesky(m: &DenseSym) -> Option<DenseSym> {
    let n = m.dim;
    let mut l = DenseSym::zeros(n);
    for i in 0..n {
        for j in 0..=i {
            let mut sum = m.get(i, j);
            for k in 0..j {
                sum -= l.get(i, k) * l.get(j, k);
            }
            if i == j {
                if sum <= 0.0 {
                    return None;
                }
                l.data[i * n + i] = sum.sqrt();
            } else {
                l.data[i * n + j] = sum / l.get(j, j);
            }
        }
    }
    Some(l)
}

/// `W · A · W` where `A` is sparse over one block: exploits that `A·W` has
/// nonzero rows only at A's touched indices.
fn w_a_w(w: &DenseSym, bt: &BlockTerms) -> DenseSym {
    let n = w.dim;
    // u[r] = (A·W) row r, for touched rows only.
    let mut u: Vec<(usize, Vec<f64>)> = bt.touched.iter().map(|&r| (r, vec![0.0; n])).collect();
    let pos = |r: usize| bt.touched.binary_search(&r).unwrap();
    for &(i, j, v) in &bt.entries {
        {
            let row = &mut u[pos(i)].1;
            let wrow = &w.data[j * n..(j + 1) * n];
            for q in 0..n {
                row[q] += v * wrow[q];
            }
        }
        if i != j {
            let row = &mut u[pos(j)].1;
            let wrow = &w.data[i * n..(i + 1) * n];
            for q in 0..n {
                row[q] += v * wrow[q];
            }
        }
    }
    // g = W · U.
    let mut g = DenseSym::zeros(n);
    for (r, urow) in &u {
        for p in 0..n {
            let wpr = w.get(p, *r);
            if wpr == 0.0 {
                continue;
            }
            let grow = &mut g.data[p * n..(p + 1) * n];
            for q in 0..n {
                grow[q] += wpr * urow[q];
            }
        }
    }
    symmetrize(&mut g);
    g
}

/// Largest step `alpha` with `S + alpha·dS ⪰ 0`, via the extreme eigenvalue
/// of `L⁻¹ dS L⁻ᵀ`; falls back to a Cholesky bisection if `S` itself has
/// lost definiteness to rounding.
fn step_to_boundary(s: &[DenseSym], ds: &[DenseSym]) -> f64 {
    let mut alpha = f64::INFINITY;
    for (sb, db) in s.iter().zip(ds.iter()) {
        let n = sb.dim;
        match cholesky(sb) {
            Some(l) => {
                // n_mat = L^{-1} dS L^{-T}
                let mut rhs = db.clone();
                // Forward solve on columns: L * tmp = dS  (column-wise)
                for col in 0..n {
                    for i in 0..n {
                        let mut v = rhs.get(i, col);
                        for k in 0..i {
                            v -= l.get(i, k) * rhs.get(k, col);
                        }
                        rhs.data[i * n + col] = v / l.get(i, i);
                    }
                }
                // Now rhs = L^{-1} dS; solve (L^{-1} dS) L^{-T} row-wise:
                // equivalent to forward solve on the transpose.
                for row in 0..n {
                    for j in 0..n {
                        let mut v = rhs.get(row, j);
                        for k in 0..j {
                            v -= rhs.get(row, k) * l.get(j, k);
                        }
                        rhs.data[row * n + j] = v / l.get(j, j);
                    }
                }
                symmetrize(&mut rhs);
                let (vals, _) = sym_eig(&rhs);
                let lam_min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
                if lam_min < -1e-14 {
                    alpha = alpha.min(-1.0 / lam_min);
                }
            }
            None => {
                // Bisection on feasibility of S + a·dS.
                let feasible = |a: f64| -> bool {
                    let mut t = sb.clone();
                    for (tv, dv) in t.data.iter_mut().zip(db.data.iter()) {
                        *tv += a * dv;
                    }
                    cholesky(&t).is_some()
                };
                let mut lo = 0.0;
                let mut hi = 1.0;
                if feasible(1.0) {
                    alpha = alpha.min(1.0);
                    continue;
                }
                for _ in 0..40 {
                    let mid = 0.5 * (lo + hi);
                    if feasible(mid) {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                alpha = alpha.min(lo);
            }
        }
    }
    alpha
}

// ---------------------------------------------------------------------------
// Schur system
// ---------------------------------------------------------------------------

/// Raw dense Cholesky of an `n×n` SPD matrix stored row-major.
fn chol_in_place(m: &mut [f64], n: usize) -> Result<(), SdpError> {
    for i in 0..n {
        for j in 0..=i {
            let mut sum = m[i * n + j];
            for k in 0..j {
                sum -= m[i * n + k] * m[j * n + k];
            }
            if i == j {
                if sum <= 1e-300 {
                    return Err(SdpError::SchurBreakdown(sum));
                }
                m[i * n + i] = sum.sqrt();
            } else {
                m[i * n + j] = sum / m[j * n + j];
            }
        }
    }
    Ok(())
}

fn chol_solve_in_place(l: &[f64], n: usize, x: &mut [f64]) {
    for i in 0..n {
        for k in 0..i {
            x[i] -= l[i * n + k] * x[k];
        }
        x[i] /= l[i * n + i];
    }
    for i in (0..n).rev() {
        for k in (i + 1)..n {
            x[i] -= l[k * n + i] * x[k];
        }
        x[i] /= l[i * n + i];
    }
}

/// Schur-complement factorization. When the constraint graph is a union of
/// per-block groups plus a thin set of coupling rows (the Eve-decomposition
/// problems: one group per moment block, two coupling rows), the matrix has
/// an arrow shape and is factored group-by-group with a small border; the
/// general case falls back to one dense Cholesky.
enum SchurFactor {
    Dense {
        n: usize,
        l: Vec<f64>,
    },
    Bordered {
        /// Constraint indices in permuted order: groups then border.
        perm: Vec<usize>,
        groups: Vec<(usize, usize)>, // (offset, len) into perm
        chols: Vec<Vec<f64>>,        // Cholesky factor per group
        /// `D_g^{-1} C_g` strips, one per group (len × nb).
        dinv_c: Vec<Vec<f64>>,
        /// Border strips `C_g` in permuted row order (len × nb).
        c_strips: Vec<Vec<f64>>,
        border_chol: Vec<f64>, // Cholesky of E − Σ C_gᵀ D_g⁻¹ C_g
        nb: usize,
    },
}

/// Max border width for the arrow factorization to pay off.
const MAX_BORDER: usize = 16;

impl SchurFactor {
    fn factor(
        m: Vec<f64>,
        n: usize,
        partition: Option<&(Vec<Vec<usize>>, Vec<usize>)>,
    ) -> Result<Self, SdpError> {
        if let Some((groups, border)) = partition {
            if border.len() <= MAX_BORDER && groups.len() > 1 {
                // The corner complement is formed by subtraction and can
                // lose definiteness near boundary optima; the dense path
                // below then handles the same matrix.
                if let Ok(f) = Self::factor_bordered(&m, n, groups, border) {
                    return Ok(f);
                }
            }
        }
        let mut l = m;
        chol_in_place(&mut l, n)?;
        Ok(SchurFactor::Dense { n, l })
    }

    fn factor_bordered(
        m: &[f64],
        n: usize,
        group_ids: &[Vec<usize>],
        border_ids: &[usize],
    ) -> Result<Self, SdpError> {
        let nb = border_ids.len();
        let mut perm = Vec::with_capacity(n);
        let mut groups = Vec::with_capacity(group_ids.len());
        for g in group_ids {
            groups.push((perm.len(), g.len()));
            perm.extend_from_slice(g);
        }
        perm.extend_from_slice(border_ids);

        let mut chols = Vec::with_capacity(groups.len());
        let mut dinv_c = Vec::with_capacity(groups.len());
        let mut c_strips = Vec::with_capacity(groups.len());
        let mut corner = vec![0.0f64; nb * nb];
        for (bi, &gi) in border_ids.iter().enumerate() {
            for (bj, &gj) in border_ids.iter().enumerate() {
                corner[bi * nb + bj] = m[gi * n + gj];
            }
        }
        for &(off, len) in &groups {
            let ids = &perm[off..off + len];
            let mut d = vec![0.0f64; len * len];
            for (i, &gi) in ids.iter().enumerate() {
                for (j, &gj) in ids.iter().enumerate() {
                    d[i * len + j] = m[gi * n + gj];
                }
            }
            chol_in_place(&mut d, len)?;
            let mut c = vec![0.0f64; len * nb];
            for (i, &gi) in ids.iter().enumerate() {
                for (bj, &gj) in border_ids.iter().enumerate() {
                    c[i * nb + bj] = m[gi * n + gj];
                }
            }
            // Solve D · (D⁻¹C) = C column-block at once.
            let mut dc = c.clone();
            for col in 0..nb {
                // forward
                for i in 0..len {
                    let mut v = dc[i * nb + col];
                    for k in 0..i {
                        v -= d[i * len + k] * dc[k * nb + col];
                    }
                    dc[i * nb + col] = v / d[i * len + i];
                }
                // backward
                for i in (0..len).rev() {
                    let mut v = dc[i * nb + col];
                    for k in (i + 1)..len {
                        v -= d[k * len + i] * dc[k * nb + col];
                    }
                    dc[i * nb + col] = v / d[i * len + i];
                }
            }
            for bi in 0..nb {
                for bj in 0..nb {
                    let mut acc = 0.0;
                    for i in 0..len {
                        acc += c[i * nb + bi] * dc[i * nb + bj];
                    }
                    corner[bi * nb + bj] -= acc;
                }
            }
            chols.push(d);
            dinv_c.push(dc);
            c_strips.push(c);
        }
        chol_in_place(&mut corner, nb)?;
        Ok(SchurFactor::Bordered {
            perm,
            groups,
            chols,
            dinv_c,
            c_strips,
            border_chol: corner,
            nb,
        })
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        match self {
            SchurFactor::Dense { n, l } => {
                let mut x = b.to_vec();
                chol_solve_in_place(l, *n, &mut x);
                x
            }
            SchurFactor::Bordered {
                perm,
                groups,
                chols,
                dinv_c,
                c_strips,
                border_chol,
                nb,
            } => {
                let nb = *nb;
                let n = b.len();
                let pb: Vec<f64> = perm.iter().map(|&i| b[i]).collect();
                let border_off = n - nb;
                // u_g = D_g⁻¹ b_g ; s_rhs = b_B − Σ C_gᵀ u_g
                let mut u_all: Vec<Vec<f64>> = Vec::with_capacity(groups.len());
                let mut s_rhs: Vec<f64> = pb[border_off..].to_vec();
                for (g, &(off, len)) in groups.iter().enumerate() {
                    let mut u = pb[off..off + len].to_vec();
                    chol_solve_in_place(&chols[g], len, &mut u);
                    for bj in 0..nb {
                        let mut acc = 0.0;
                        for i in 0..len {
                            acc += c_strips[g][i * nb + bj] * u[i];
                        }
                        s_rhs[bj] -= acc;
                    }
                    u_all.push(u);
                }
                chol_solve_in_place(border_chol, nb, &mut s_rhs);
                // x_g = u_g − (D_g⁻¹ C_g) x_B
                let mut out = vec![0.0f64; n];
                for (g, &(off, len)) in groups.iter().enumerate() {
                    for i in 0..len {
                        let mut v = u_all[g][i];
                        for bj in 0..nb {
                            v -= dinv_c[g][i * nb + bj] * s_rhs[bj];
                        }
                        out[perm[off + i]] = v;
                    }
                }
                for bj in 0..nb {
                    out[perm[border_off + bj]] = s_rhs[bj];
                }
                out
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Main loop
// ---------------------------------------------------------------------------

pub fn solve(problem: &SdpProblem, options: &SolverOptions) -> Result<SdpSolution, SdpError> {
    problem.validate()?;
    let nblocks = problem.block_dims.len();
    let ncon = problem.constraints.len();
    if ncon > 4000 {
        return Err(SdpError::TooManyConstraints(ncon));
    }
    let n_tot: usize = problem.block_dims.iter().sum();

    let sign = if problem.maximize { -1.0 } else { 1.0 };
    let mut c_int: Vec<DenseSym> = problem.block_dims.iter().map(|&d| DenseSym::zeros(d)).collect();
    let c_mat = build_matrix(&problem.objective);
    axpy_into(&c_mat, sign, &mut c_int);

    let a_mats: Vec<ConstraintMat> = problem
        .constraints
        .iter()
        .map(|(f, _)| build_matrix(f))
        .collect();
    let b: Vec<f64> = problem.constraints.iter().map(|(_, rhs)| *rhs).collect();

    // Constraints touching each block, for sparse Schur assembly.
    let mut touching: Vec<Vec<usize>> = vec![Vec::new(); nblocks];
    for (idx, a) in a_mats.iter().enumerate() {
        for bt in &a.blocks {
            touching[bt.block].push(idx);
        }
    }
    // Arrow partition of the Schur matrix: single-block constraint groups
    // plus the multi-block coupling border.
    let schur_partition: Option<(Vec<Vec<usize>>, Vec<usize>)> = {
        let mut groups: Vec<Vec<usize>> = vec![Vec::new(); nblocks];
        let mut border: Vec<usize> = Vec::new();
        for (idx, a) in a_mats.iter().enumerate() {
            if a.blocks.len() == 1 {
                groups[a.blocks[0].block].push(idx);
            } else {
                border.push(idx);
            }
        }
        groups.retain(|g| !g.is_empty());
        if groups.len() > 1 && border.len() <= MAX_BORDER {
            Some((groups, border))
        } else {
            None
        }
    };

    let b_inf = b.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let c_inf = c_int
        .iter()
        .flat_map(|m| m.data.iter())
        .fold(0.0f64, |acc, v| acc.max(v.abs()));
    let init_scale = (1.0 + b_inf.max(c_inf)) * (n_tot as f64).sqrt().max(1.0);

    let mut x: Vec<DenseSym> = problem
        .block_dims
        .iter()
        .map(|&d| DenseSym::identity(d, init_scale))
        .collect();
    let mut z: Vec<DenseSym> = problem
        .block_dims
        .iter()
        .map(|&d| DenseSym::identity(d, init_scale))
        .collect();
    let mut y = vec![0.0; ncon];

    let mut best_relgap = f64::INFINITY;
    let mut mu_history: Vec<f64> = Vec::new();
    let mut iterations = 0;

    let finish = |status: SdpStatus,
                  x: &[DenseSym],
                  z: &[DenseSym],
                  y: &[f64],
                  iterations: usize| -> SdpSolution {
        let pobj_int: f64 = x
            .iter()
            .zip(c_int.iter())
            .map(|(xb, cb)| xb.data.iter().zip(cb.data.iter()).map(|(a, b)| a * b).sum::<f64>())
            .sum();
        let dobj_int: f64 = y.iter().zip(b.iter()).map(|(a, b)| a * b).sum();
        let gap: f64 = x
            .iter()
            .zip(z.iter())
            .map(|(xb, zb)| xb.data.iter().zip(zb.data.iter()).map(|(a, b)| a * b).sum::<f64>())
            .sum();
        let rel_gap = gap / (1.0 + pobj_int.abs() + dobj_int.abs());
        let mut prim_inf = 0.0f64;
        for (i, a) in a_mats.iter().enumerate() {
            prim_inf = prim_inf.max((b[i] - inner(a, x)).abs());
        }
        let mut rd: Vec<DenseSym> = c_int.clone();
        for (zb, rb) in z.iter().zip(rd.iter_mut()) {
            for (r, zval) in rb.data.iter_mut().zip(zb.data.iter()) {
                *r -= zval;
            }
        }
        for (i, a) in a_mats.iter().enumerate() {
            axpy_into(a, -y[i], &mut rd);
        }
        let dual_inf = rd
            .iter()
            .flat_map(|m| m.data.iter())
            .fold(0.0f64, |acc, v| acc.max(v.abs()));
        SdpSolution {
            status,
            blocks: x.to_vec(),
            y: y.to_vec(),
            objective: sign * pobj_int,
            dual_objective: sign * dobj_int,
            rel_gap,
            primal_infeasibility: prim_inf / (1.0 + b_inf),
            dual_infeasibility: dual_inf / (1.0 + c_inf),
            iterations,
        }
    };

    for iter in 0..options.max_iter {
        iterations = iter;
        let mu: f64 = x
            .iter()
            .zip(z.iter())
            .map(|(xb, zb)| xb.data.iter().zip(zb.data.iter()).map(|(a, b)| a * b).sum::<f64>())
            .sum::<f64>()
            / n_tot as f64;

        // Residuals.
        let rp: Vec<f64> = a_mats
            .iter()
            .zip(b.iter())
            .map(|(a, bi)| bi - inner(a, &x))
            .collect();
        let mut rd: Vec<DenseSym> = c_int.clone();
        for (zb, rb) in z.iter().zip(rd.iter_mut()) {
            for (r, zval) in rb.data.iter_mut().zip(zb.data.iter()) {
                *r -= zval;
            }
        }
        for (i, a) in a_mats.iter().enumerate() {
            axpy_into(a, -y[i], &mut rd);
        }

        let pobj_int: f64 = x
            .iter()
            .zip(c_int.iter())
            .map(|(xb, cb)| xb.data.iter().zip(cb.data.iter()).map(|(a, b)| a * b).sum::<f64>())
            .sum();
        let dobj_int: f64 = y.iter().zip(b.iter()).map(|(a, b)| a * b).sum();
        let rel_gap = (mu * n_tot as f64) / (1.0 + pobj_int.abs() + dobj_int.abs());
        let prim_inf = rp.iter().fold(0.0f64, |a, v| a.max(v.abs())) / (1.0 + b_inf);
        let dual_inf = rd
            .iter()
            .flat_map(|m| m.data.iter())
            .fold(0.0f64, |a, v| a.max(v.abs()))
            / (1.0 + c_inf);

        best_relgap = best_relgap.min(rel_gap);
        if rel_gap <= options.tol && prim_inf <= options.tol && dual_inf <= options.tol {
            return Ok(finish(SdpStatus::Optimal, &x, &z, &y, iter));
        }
        mu_history.push(mu);
        if mu_history.len() > 12 {
            let old = mu_history[mu_history.len() - 12];
            if mu > old * 0.5 && (prim_inf > options.tol || rel_gap > options.tol) {
                return Ok(finish(SdpStatus::SlowProgress, &x, &z, &y, iter));
            }
        }

        // NT scaling per block: W = Z^{-1/2} (Z^{1/2} X Z^{1/2})^{1/2} Z^{-1/2}.
        let mut w: Vec<DenseSym> = Vec::with_capacity(nblocks);
        let mut zinv: Vec<DenseSym> = Vec::with_capacity(nblocks);
        for (xb, zb) in x.iter().zip(z.iter()) {
            let (zvals, zq) = sym_eig(zb);
            let z_half = from_eig(&zvals, &zq, |v| v.max(1e-300).sqrt());
            let z_ihalf = from_eig(&zvals, &zq, |v| 1.0 / v.max(1e-300).sqrt());
            zinv.push(from_eig(&zvals, &zq, |v| 1.0 / v.max(1e-300)));
            let mut t = mat_mul(&mat_mul(&z_half, xb), &z_half);
            symmetrize(&mut t);
            let (tvals, tq) = sym_eig(&t);
            let t_half = from_eig(&tvals, &tq, |v| v.max(1e-300).sqrt());
            let mut wb = mat_mul(&mat_mul(&z_ihalf, &t_half), &z_ihalf);
            symmetrize(&mut wb);
            w.push(wb);
        }

        // Schur matrix M_ij = <A_i, W A_j W>.
        let mut m_mat = vec![0.0f64; ncon * ncon];
        for j in 0..ncon {
            for bt in &a_mats[j].blocks {
                let g = w_a_w(&w[bt.block], bt);
                for &i in &touching[bt.block] {
                    if i <= j {
                        m_mat[i * ncon + j] += inner_block(
                            a_mats[i]
                                .blocks
                                .iter()
                                .find(|x| x.block == bt.block)
                                .unwrap(),
                            &g,
                        );
                    }
                }
            }
        }
        for i in 0..ncon {
            for j in 0..i {
                m_mat[i * ncon + j] = m_mat[j * ncon + i];
            }
        }
        // Tiny diagonal safeguard keeps the factorization alive when the
        // scaling becomes extreme near convergence.
        let diag_max = (0..ncon)
            .map(|i| m_mat[i * ncon + i])
            .fold(0.0f64, f64::max);
        for i in 0..ncon {
            m_mat[i * ncon + i] += 1e-15 * diag_max.max(1.0);
        }
        let factor = match SchurFactor::factor(m_mat, ncon, schur_partition.as_ref()) {
            Ok(f) => f,
            // Extreme scaling at boundary optima: report the best iterate.
            Err(_) => return Ok(finish(SdpStatus::SlowProgress, &x, &z, &y, iter)),
        };

        // W Rd W per block and the fixed parts of the right-hand side.
        let wrdw: Vec<DenseSym> = w
            .iter()
            .zip(rd.iter())
            .map(|(wb, rb)| {
                let mut g = mat_mul(&mat_mul(wb, rb), wb);
                symmetrize(&mut g);
                g
            })
            .collect();
        let a_dot_x: Vec<f64> = a_mats.iter().map(|a| inner(a, &x)).collect();
        let a_dot_zinv: Vec<f64> = a_mats.iter().map(|a| inner(a, &zinv)).collect();
        let a_dot_wrdw: Vec<f64> = a_mats.iter().map(|a| inner(a, &wrdw)).collect();

        // rhs_i(σ) = rp_i − ⟨A_i, Rc⟩ + ⟨A_i, W Rd W⟩ where the centering
        // target Rc = σμ Z⁻¹ − X (+ corrector term when supplied).
        let rhs_for = |sigma_mu: f64, extra: Option<&Vec<f64>>| -> Vec<f64> {
            (0..ncon)
                .map(|i| {
                    rp[i] - sigma_mu * a_dot_zinv[i] + a_dot_x[i] + a_dot_wrdw[i]
                        - extra.map_or(0.0, |e| e[i])
                })
                .collect()
        };

        let compute_direction = |dy: &[f64],
                                 sigma_mu: f64,
                                 extra: Option<&Vec<DenseSym>>|
         -> (Vec<DenseSym>, Vec<DenseSym>) {
            // dZ = Rd − Σ dy_j A_j
            let mut dz: Vec<DenseSym> = rd.clone();
            for (j, a) in a_mats.iter().enumerate() {
                axpy_into(a, -dy[j], &mut dz);
            }
            // dX = Rc − W dZ W
            let mut dx: Vec<DenseSym> = Vec::with_capacity(nblocks);
            for blk in 0..nblocks {
                let mut g = mat_mul(&mat_mul(&w[blk], &dz[blk]), &w[blk]);
                symmetrize(&mut g);
                let mut d = DenseSym::zeros(x[blk].dim);
                for idx in 0..d.data.len() {
                    d.data[idx] = sigma_mu * zinv[blk].data[idx] - x[blk].data[idx] - g.data[idx]
                        + extra.map_or(0.0, |e| e[blk].data[idx]);
                }
                symmetrize(&mut d);
                dx.push(d);
            }
            (dx, dz)
        };

        // Affine probe (σ = 0).
        let dy_aff = factor.solve(&rhs_for(0.0, None));
        let (dx_aff, dz_aff) = compute_direction(&dy_aff, 0.0, None);
        let ap = step_to_boundary(&x, &dx_aff).min(1.0);
        let ad = step_to_boundary(&z, &dz_aff).min(1.0);
        let mut mu_aff = 0.0;
        for blk in 0..nblocks {
            for idx in 0..x[blk].data.len() {
                mu_aff += (x[blk].data[idx] + ap * dx_aff[blk].data[idx])
                    * (z[blk].data[idx] + ad * dz_aff[blk].data[idx]);
            }
        }
        mu_aff /= n_tot as f64;
        let sigma = (mu_aff / mu).powi(3).clamp(1e-8, 0.99);

        // Mehrotra corrector: the linearization error of the product form,
        // −sym(ΔXa ΔZa Z⁻¹), folded into the centering target.
        let corr: Vec<DenseSym> = (0..nblocks)
            .map(|blk| {
                let prod = mat_mul(&dx_aff[blk], &dz_aff[blk]);
                let mut g = mat_mul(&prod, &zinv[blk]);
                symmetrize(&mut g);
                for v in g.data.iter_mut() {
                    *v = -*v;
                }
                g
            })
            .collect();
        let a_dot_corr: Vec<f64> = a_mats.iter().map(|a| inner(a, &corr)).collect();

        // Combined step with the same factorization; the boundary fraction
        // tightens once the iterate is nearly converged.
        let frac = if mu < 1e-9 { 0.995 } else { options.step_frac };
        let dy = factor.solve(&rhs_for(sigma * mu, Some(&a_dot_corr)));
        let (dx, dz) = compute_direction(&dy, sigma * mu, Some(&corr));
        let ap = (frac * step_to_boundary(&x, &dx)).min(1.0);
        let ad = (frac * step_to_boundary(&z, &dz)).min(1.0);

        for blk in 0..nblocks {
            for idx in 0..x[blk].data.len() {
                x[blk].data[idx] += ap * dx[blk].data[idx];
                z[blk].data[idx] += ad * dz[blk].data[idx];
            }
            symmetrize(&mut x[blk]);
            symmetrize(&mut z[blk]);
        }
        for (yi, di) in y.iter_mut().zip(dy.iter()) {
            *yi += ad * di;
        }
    }

    Ok(finish(SdpStatus::SlowProgress, &x, &z, &y, iterations))
}
