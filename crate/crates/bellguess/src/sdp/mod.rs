//! Solver-agnostic semidefinite programs over block-diagonal PSD variables.
//!
//! A problem is `max/min Σ obj·X` subject to sparse linear equalities over
//! the block entries, with every block constrained positive semidefinite.
//! The embedded interior-point backend lives in [`solver`]; [`sdpa`] writes
//! problems in the SDPA sparse file format for cross-checking against
//! external solvers.

pub mod sdpa;
pub mod solver;

use thiserror::Error;

pub use solver::{solve, SdpSolution, SdpStatus, SolverOptions};

#[derive(Debug, Error)]
pub enum SdpError {
    #[error("term references block {block}, but only {nblocks} blocks exist")]
    BlockOutOfRange { block: usize, nblocks: usize },
    #[error("term references entry ({row},{col}) of block {block} with dimension {dim}")]
    EntryOutOfRange {
        block: usize,
        row: usize,
        col: usize,
        dim: usize,
    },
    #[error("non-finite coefficient in problem data")]
    NonFinite,
    #[error("constraint count {0} exceeds what the dense Schur solver handles")]
    TooManyConstraints(usize),
    #[error("Schur system lost positive definiteness (pivot {0:.3e})")]
    SchurBreakdown(f64),
    #[error("iteration limit reached; best relative gap {0:.3e}")]
    IterationLimit(f64),
}

/// One coefficient of a linear functional: `coeff · X[block][row][col]`
/// with `row ≤ col` (symmetric entries are counted once).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Term {
    pub block: usize,
    pub row: usize,
    pub col: usize,
    pub coeff: f64,
}

impl Term {
    pub fn new(block: usize, row: usize, col: usize, coeff: f64) -> Self {
        let (row, col) = if row <= col { (row, col) } else { (col, row) };
        Term {
            block,
            row,
            col,
            coeff,
        }
    }
}

/// Sparse linear functional over block entries.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseFunctional(pub Vec<Term>);

impl SparseFunctional {
    pub fn new() -> Self {
        Self(Vec::new())
    }

    pub fn push(&mut self, block: usize, row: usize, col: usize, coeff: f64) {
        self.0.push(Term::new(block, row, col, coeff));
    }

    /// Merges duplicate entries and drops zeros; canonical ordering.
    pub fn normalized(mut self) -> Self {
        self.0
            .sort_by_key(|t| (t.block, t.row, t.col));
        let mut out: Vec<Term> = Vec::with_capacity(self.0.len());
        for t in self.0 {
            match out.last_mut() {
                Some(last) if (last.block, last.row, last.col) == (t.block, t.row, t.col) => {
                    last.coeff += t.coeff;
                }
                _ => out.push(t),
            }
        }
        out.retain(|t| t.coeff != 0.0);
        Self(out)
    }

    /// Functional value on a list of dense symmetric blocks.
    pub fn value(&self, blocks: &[DenseSym]) -> f64 {
        self.0
            .iter()
            .map(|t| t.coeff * blocks[t.block].get(t.row, t.col))
            .sum()
    }
}

/// Dense symmetric matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSym {
    pub dim: usize,
    pub data: Vec<f64>,
}

impl DenseSym {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize, scale: f64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = scale;
        }
        m
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    #[inline]
    pub fn set_sym(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.dim + j] = v;
        self.data[j * self.dim + i] = v;
    }
}

/// A block-diagonal PSD-constrained program.
#[derive(Debug, Clone)]
pub struct SdpProblem {
    pub block_dims: Vec<usize>,
    /// Equality constraints `functional(X) = rhs`.
    pub constraints: Vec<(SparseFunctional, f64)>,
    pub objective: SparseFunctional,
    pub maximize: bool,
}

impl SdpProblem {
    pub fn new(block_dims: Vec<usize>, maximize: bool) -> Self {
        Self {
            block_dims,
            constraints: Vec::new(),
            objective: SparseFunctional::new(),
            maximize,
        }
    }

    pub fn add_constraint(&mut self, functional: SparseFunctional, rhs: f64) {
        self.constraints.push((functional.normalized(), rhs));
    }

    pub fn set_objective(&mut self, functional: SparseFunctional) {
        self.objective = functional.normalized();
    }

    /// Index/finiteness validation of every functional.
    pub fn validate(&self) -> Result<(), SdpError> {
        let check = |f: &SparseFunctional| -> Result<(), SdpError> {
            for t in &f.0 {
                if t.block >= self.block_dims.len() {
                    return Err(SdpError::BlockOutOfRange {
                        block: t.block,
                        nblocks: self.block_dims.len(),
                    });
                }
                let dim = self.block_dims[t.block];
                if t.row >= dim || t.col >= dim {
                    return Err(SdpError::EntryOutOfRange {
                        block: t.block,
                        row: t.row,
                        col: t.col,
                        dim,
                    });
                }
                if !t.coeff.is_finite() {
                    return Err(SdpError::NonFinite);
                }
            }
            Ok(())
        };
        check(&self.objective)?;
        for (f, rhs) in &self.constraints {
            check(f)?;
            if !rhs.is_finite() {
                return Err(SdpError::NonFinite);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn functional_normalization_merges_and_sorts() {
        let mut f = SparseFunctional::new();
        f.push(0, 1, 0, 2.0); // becomes (0,1) via Term::new
        f.push(0, 0, 1, 3.0);
        f.push(0, 0, 0, 1.0);
        f.push(0, 0, 0, -1.0);
        let n = f.normalized();
        assert_eq!(n.0.len(), 1);
        assert_eq!((n.0[0].row, n.0[0].col), (0, 1));
        assert_eq!(n.0[0].coeff, 5.0);
    }

    #[test]
    fn validation_catches_bad_indices() {
        let mut p = SdpProblem::new(vec![2], true);
        let mut f = SparseFunctional::new();
        f.push(0, 0, 2, 1.0);
        p.add_constraint(f, 0.0);
        assert!(matches!(
            p.validate(),
            Err(SdpError::EntryOutOfRange { .. })
        ));
    }
}
